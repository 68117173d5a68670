//! Derivative tensors of a field and the kinematic vectors of its flow.
//!
//! Along a trajectory `Ẋ = f(X)` the velocity is `V = f`, the acceleration
//! `γ = J·V`, the jerk `γ̇ = J·γ + J̇·V` and the snap
//! `γ̈ = J·γ̇ + 2·J̇·γ + J̈·V`, where `J̇ = H·V` and `J̈ = H·γ + T₃·V·V` are the
//! time derivatives of the Jacobian expressed through the second and third
//! spatial derivative tensors. All tensors come from jet arithmetic and are
//! exact up to rounding.

use nalgebra::{DMatrix, DVector};

use crate::jet::{dot, factorial, Jet};
use crate::models::{EvalError, VectorField};

/// `J`, `H` and `T₃` of a field at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeTensors {
    dimension: usize,
    pub value: DVector<f64>,
    /// `J[(i, j)] = ∂f_i/∂x_j`.
    pub jacobian: DMatrix<f64>,
    hessian: Vec<f64>,
    third: Vec<f64>,
}

impl DerivativeTensors {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `∂²f_i/∂x_j∂x_k`.
    pub fn hessian(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.dimension;
        self.hessian[(i * n + j) * n + k]
    }

    /// `∂³f_i/∂x_j∂x_k∂x_l`.
    pub fn third(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.dimension;
        self.third[((i * n + j) * n + k) * n + l]
    }

    /// `Σ_k H_ijk w_k`.
    pub fn hessian_along(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dimension;
        DMatrix::from_fn(n, n, |i, j| (0..n).map(|k| self.hessian(i, j, k) * w[k]).sum())
    }

    /// `Σ_{k,l} T_ijkl u_k w_l`.
    pub fn third_along(&self, u: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dimension;
        DMatrix::from_fn(n, n, |i, j| {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    s += self.third(i, j, k, l) * u[k] * w[l];
                }
            }
            s
        })
    }
}

/// Spatial derivatives of `field` up to order three at `x`.
pub fn derivatives(field: &VectorField, x: &[f64]) -> Result<DerivativeTensors, EvalError> {
    let n = field.dimension();
    let jets = field.eval_jet(x, 3)?;
    let value = DVector::from_fn(n, |i, _| jets[i].value());
    let jacobian = DMatrix::from_fn(n, n, |i, j| jets[i].partial_at(&[j]));
    let mut hessian = vec![0.0; n * n * n];
    let mut third = vec![0.0; n * n * n * n];
    for (i, jet) in jets.iter().enumerate() {
        for j in 0..n {
            for k in 0..n {
                hessian[(i * n + j) * n + k] = jet.partial_at(&[j, k]);
                for l in 0..n {
                    third[((i * n + j) * n + k) * n + l] = jet.partial_at(&[j, k, l]);
                }
            }
        }
    }
    Ok(DerivativeTensors {
        dimension: n,
        value,
        jacobian,
        hessian,
        third,
    })
}

/// Kinematic vectors and Jacobian time derivatives at a point of the flow.
#[derive(Clone, Debug, PartialEq)]
pub struct KinematicsBundle {
    pub velocity: DVector<f64>,
    pub acceleration: DVector<f64>,
    pub jerk: DVector<f64>,
    pub snap: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub jacobian_dot: DMatrix<f64>,
    pub jacobian_ddot: DMatrix<f64>,
    pub trace: f64,
}

impl KinematicsBundle {
    pub fn from_tensors(t: &DerivativeTensors) -> KinematicsBundle {
        let velocity = t.value.clone();
        let jacobian = t.jacobian.clone();
        let acceleration = &jacobian * &velocity;
        let jacobian_dot = t.hessian_along(&velocity);
        let jacobian_ddot = t.hessian_along(&acceleration) + t.third_along(&velocity, &velocity);
        let jerk = &jacobian * &acceleration + &jacobian_dot * &velocity;
        let snap =
            &jacobian * &jerk + (&jacobian_dot * &acceleration) * 2.0 + &jacobian_ddot * &velocity;
        let trace = jacobian.trace();
        KinematicsBundle {
            velocity,
            acceleration,
            jerk,
            snap,
            jacobian,
            jacobian_dot,
            jacobian_ddot,
            trace,
        }
    }

    /// The time derivative of order `k` (0 = velocity, …, 3 = snap).
    pub fn time_derivative(&self, k: usize) -> &DVector<f64> {
        match k {
            0 => &self.velocity,
            1 => &self.acceleration,
            2 => &self.jerk,
            3 => &self.snap,
            _ => panic!("bundle stores time derivatives up to order 3"),
        }
    }
}

pub fn kinematics_at(field: &VectorField, x: &[f64]) -> Result<KinematicsBundle, EvalError> {
    Ok(KinematicsBundle::from_tensors(&derivatives(field, x)?))
}

/// Taylor coefficients `a₀ … a_order` of the trajectory through `x`,
/// so that `X(t) = Σ a_k t^k`.
///
/// Uses the recurrence `a_{k+1} = [f(Σ_{j≤k} a_j t^j)]_k / (k+1)`, which
/// never forms a Jacobian; `k!·a_k` is the `(k−1)`-th time derivative of
/// the velocity.
pub fn flow_jet(
    field: &VectorField,
    x: &[f64],
    order: usize,
) -> Result<Vec<DVector<f64>>, EvalError> {
    assert!(
        (1..=crate::jet::MAX_DEGREE).contains(&order),
        "flow jet order must be between 1 and {}",
        crate::jet::MAX_DEGREE
    );
    field.eval(x)?;
    let n = field.dimension();
    let mut coeffs: Vec<Vec<f64>> = vec![x.to_vec()];
    for k in 0..order {
        let series: Vec<Jet> = (0..n)
            .map(|i| Jet::series(&coeffs.iter().map(|a| a[i]).collect::<Vec<_>>()))
            .collect();
        let image = field.eval_jets(&series)?;
        coeffs.push(
            image
                .iter()
                .map(|s| s.coeffs()[k] / (k as f64 + 1.0))
                .collect(),
        );
    }
    Ok(coeffs.into_iter().map(DVector::from_vec).collect())
}

/// `k!·a_k` for each coefficient, i.e. the time derivatives of the state.
pub fn flow_derivatives(coeffs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, a)| a * factorial(k))
        .collect()
}

/// Jets, as functions of the state around a base point, of the velocity,
/// acceleration and (optionally) jerk. `degree` is the degree of the
/// highest-order quantity requested.
pub(crate) struct KinematicJets {
    pub velocity: Vec<Jet>,
    pub acceleration: Vec<Jet>,
    pub jerk: Option<Vec<Jet>>,
}

pub(crate) fn kinematic_jets(
    field: &VectorField,
    x: &[f64],
    degree: usize,
    with_jerk: bool,
) -> Result<KinematicJets, EvalError> {
    let n = field.dimension();
    let extra = if with_jerk { 2 } else { 1 };
    let velocity = field.eval_jet(x, degree + extra)?;
    let jacobian: Vec<Vec<Jet>> = velocity
        .iter()
        .map(|f| (0..n).map(|j| f.partial(j)).collect())
        .collect();
    let acceleration: Vec<Jet> = jacobian.iter().map(|row| dot(row, &velocity)).collect();
    let jerk = if with_jerk {
        let jacobian_dot: Vec<Vec<Jet>> = jacobian
            .iter()
            .map(|row| {
                row.iter()
                    .map(|jij| {
                        let grad: Vec<Jet> = (0..n).map(|k| jij.partial(k)).collect();
                        dot(&grad, &velocity)
                    })
                    .collect()
            })
            .collect();
        Some(
            (0..n)
                .map(|i| dot(&jacobian[i], &acceleration) + dot(&jacobian_dot[i], &velocity))
                .collect(),
        )
    } else {
        None
    };
    Ok(KinematicJets {
        velocity,
        acceleration,
        jerk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, parse_model};
    use approx::assert_relative_eq;

    #[test]
    fn lorenz_jacobian_and_acceleration() {
        let lorenz = builtin("lorenz", &[]).unwrap();
        let t = derivatives(&lorenz, &[1.0, 1.0, 1.0]).unwrap();
        let expected = [
            [-10.0, 10.0, 0.0],
            [27.0, -1.0, -1.0],
            [1.0, 1.0, -8.0 / 3.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(t.jacobian[(i, j)], expected[i][j], max_relative = 1e-15);
            }
        }
        assert!(t.third.iter().all(|&v| v == 0.0));
        let b = KinematicsBundle::from_tensors(&t);
        assert_relative_eq!(b.acceleration[0], 260.0, max_relative = 1e-14);
        assert_relative_eq!(b.acceleration[1], -73.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(b.acceleration[2], 274.0 / 9.0, max_relative = 1e-14);
    }

    #[test]
    fn vdp_third_derivatives() {
        let eps = 0.05;
        let vdp = builtin("vdp", &[("eps".into(), eps)]).unwrap();
        let t = derivatives(&vdp, &[0.7, -1.3]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let v = t.third(i, j, k, l);
                        if (i, j, k, l) == (0, 0, 0, 0) {
                            assert_relative_eq!(v, -2.0 / eps, max_relative = 1e-14);
                        } else {
                            assert_eq!(v, 0.0);
                        }
                    }
                }
            }
        }
        // H_000 = -2x/eps
        assert_relative_eq!(t.hessian(0, 0, 0), -2.0 * 0.7 / eps, max_relative = 1e-14);
    }

    #[test]
    fn harmonic_rotates_each_order() {
        let h = builtin("harmonic", &[]).unwrap();
        let b = kinematics_at(&h, &[1.0, 0.0]).unwrap();
        assert_eq!(b.velocity.as_slice(), &[0.0, -1.0]);
        assert_eq!(b.acceleration.as_slice(), &[-1.0, 0.0]);
        assert_eq!(b.jerk.as_slice(), &[0.0, 1.0]);
        assert_eq!(b.snap.as_slice(), &[1.0, 0.0]);
        assert_eq!(b.trace, 0.0);
    }

    #[test]
    fn equilibrium_has_vanishing_bundle() {
        let lorenz = builtin("lorenz", &[]).unwrap();
        let c = (72.0f64).sqrt();
        for p in [[0.0, 0.0, 0.0], [c, c, 27.0]] {
            let b = kinematics_at(&lorenz, &p).unwrap();
            for k in 0..4 {
                assert!(b.time_derivative(k).amax() < 1e-13 * 40f64.powi(k as i32 + 2));
            }
        }
    }

    #[test]
    fn flow_jet_harmonic_and_equilibrium() {
        let h = builtin("harmonic", &[]).unwrap();
        let a = flow_jet(&h, &[1.0, 0.0], 4).unwrap();
        assert_eq!(a[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(a[1].as_slice(), &[0.0, -1.0]);
        assert_eq!(a[2].as_slice(), &[-0.5, 0.0]);
        assert_relative_eq!(a[3][1], 1.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(a[4][0], 1.0 / 24.0, max_relative = 1e-15);
        let lorenz = builtin("lorenz", &[]).unwrap();
        let a = flow_jet(&lorenz, &[0.0, 0.0, 0.0], 4).unwrap();
        assert!(a[1..].iter().all(|v| v.amax() == 0.0));
        let a = flow_jet(&lorenz, &[1.0, 1.0, 1.0], 2).unwrap();
        assert_relative_eq!(2.0 * a[2][0], 260.0, max_relative = 1e-14);
        assert_relative_eq!(2.0 * a[2][2], 274.0 / 9.0, max_relative = 1e-14);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let g = parse_model("dim=3; dx/dt=sin(x*y)+z^2; dy/dt=exp(-x)*tanh(z); dz/dt=sqrt(1+y^2)/(2+x)")
            .unwrap();
        let p = [0.4, -1.1, 2.3];
        let t = derivatives(&g, &p).unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut plus = p;
            let mut minus = p;
            plus[j] += h;
            minus[j] -= h;
            let fp = g.eval(&plus).unwrap();
            let fm = g.eval(&minus).unwrap();
            for i in 0..3 {
                assert!((t.jacobian[(i, j)] - (fp[i] - fm[i]) / (2.0 * h)).abs() < 1e-7);
            }
        }
        // symmetry of the higher tensors is exact
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(t.hessian(i, j, k), t.hessian(i, k, j));
                    for l in 0..3 {
                        assert_eq!(t.third(i, j, k, l), t.third(i, l, j, k));
                        assert_eq!(t.third(i, j, k, l), t.third(i, k, l, j));
                    }
                }
            }
        }
    }
}
