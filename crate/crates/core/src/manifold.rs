//! Curvature, torsion and the flow-curvature manifold scalars.
//!
//! The manifold scalar is signed: `m₂ = det[V, γ]` in the plane and
//! `m₃ = γ̇·(γ∧V)` in space. Its zero set is where curvature (resp.
//! torsion) of the trajectories vanishes, and it satisfies exact Darboux-type
//! identities
//!
//! ```text
//! L_X m₂ = Tr(J)·m₂ + det[V, J̇V]
//! L_X m₃ = Tr(J)·m₃ + (−Tr(J)·J̇V + J·J̇V + 2·J̇γ + J̈V)·(γ∧V)
//! ```
//!
//! The left-hand sides are computed by differentiating the scalar through
//! its full composition with jets; the right-hand sides from the
//! [`KinematicsBundle`]. The two routes share only the field evaluation.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::jet::{dot, Jet};
use crate::kinematics::{kinematic_jets, kinematics_at, KinematicsBundle};
use crate::levelset::{project_to_manifold, LevelSetError};
use crate::models::{EvalError, StateFunction, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifoldError {
    #[error("curvature is undefined at an equilibrium (V = 0)")]
    Equilibrium,
    #[error("torsion is undefined where γ∧V = 0")]
    DegenerateTorsion,
    #[error("operation needs a {expected}-dimensional field, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("eps must be nonzero")]
    ZeroEpsilon,
    #[error("sample set is empty")]
    EmptySample,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn cross(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

fn det2(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// `‖γ∧V‖`, with planar vectors embedded in the `z = 0` plane.
fn wedge_norm(b: &KinematicsBundle) -> f64 {
    if b.velocity.len() == 2 {
        det2(&b.velocity, &b.acceleration).abs()
    } else {
        cross(&b.acceleration, &b.velocity).norm()
    }
}

/// Manifold scalar from an already computed bundle.
pub fn scalar_from_bundle(b: &KinematicsBundle) -> f64 {
    if b.velocity.len() == 2 {
        det2(&b.velocity, &b.acceleration)
    } else {
        b.jerk.dot(&cross(&b.acceleration, &b.velocity))
    }
}

/// Magnitude below which the manifold scalar is indistinguishable from
/// rounding noise: machine epsilon times the product of the norms of the
/// vectors it is built from.
pub fn scalar_rounding_scale(b: &KinematicsBundle) -> f64 {
    let product = if b.velocity.len() == 2 {
        b.velocity.norm() * b.acceleration.norm()
    } else {
        b.jerk.norm() * b.acceleration.norm() * b.velocity.norm()
    };
    64.0 * f64::EPSILON * product
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Curvature {
    pub kappa: f64,
    /// `1/kappa`; infinite on straight stretches.
    pub radius: f64,
}

/// Curvature `‖γ∧V‖/‖V‖³` of the trajectory through `x`.
pub fn curvature(field: &VectorField, x: &[f64]) -> Result<Curvature, ManifoldError> {
    let b = kinematics_at(field, x)?;
    let speed = b.velocity.norm();
    if speed == 0.0 {
        return Err(ManifoldError::Equilibrium);
    }
    let kappa = wedge_norm(&b) / speed.powi(3);
    Ok(Curvature {
        kappa,
        radius: if kappa > 0.0 { 1.0 / kappa } else { f64::INFINITY },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Torsion {
    pub tau: f64,
    /// `1/tau`; infinite for planar motion.
    pub radius: f64,
}

/// Torsion `−γ̇·(γ∧V)/‖γ∧V‖²` of the trajectory through `x`.
pub fn torsion(field: &VectorField, x: &[f64]) -> Result<Torsion, ManifoldError> {
    if field.dimension() != 3 {
        return Err(ManifoldError::Dimension {
            expected: 3,
            got: field.dimension(),
        });
    }
    let b = kinematics_at(field, x)?;
    let w = cross(&b.acceleration, &b.velocity);
    let w2 = w.norm_squared();
    if w2 == 0.0 {
        return Err(ManifoldError::DegenerateTorsion);
    }
    let tau = -b.jerk.dot(&w) / w2;
    Ok(Torsion {
        tau,
        radius: if tau != 0.0 { 1.0 / tau } else { f64::INFINITY },
    })
}

/// `m₂` or `m₃` at `x`, computed from the kinematics bundle.
pub fn manifold_scalar(field: &VectorField, x: &[f64]) -> Result<f64, EvalError> {
    Ok(scalar_from_bundle(&kinematics_at(field, x)?))
}

/// The manifold scalar of a field as a differentiable function of state.
#[derive(Clone, Copy, Debug)]
pub struct ManifoldScalar<'a> {
    field: &'a VectorField,
}

impl<'a> ManifoldScalar<'a> {
    pub fn new(field: &'a VectorField) -> Self {
        ManifoldScalar { field }
    }

    pub fn field(&self) -> &'a VectorField {
        self.field
    }
}

impl StateFunction for ManifoldScalar<'_> {
    fn dimension(&self) -> usize {
        self.field.dimension()
    }

    fn jet(&self, x: &[f64], degree: usize) -> Result<Jet, EvalError> {
        let planar = self.field.dimension() == 2;
        let k = kinematic_jets(self.field, x, degree, !planar)?;
        let (v, g) = (&k.velocity, &k.acceleration);
        if planar {
            return Ok(&v[0] * &g[1] - &v[1] * &g[0]);
        }
        let w = [
            &g[1] * &v[2] - &g[2] * &v[1],
            &g[2] * &v[0] - &g[0] * &v[2],
            &g[0] * &v[1] - &g[1] * &v[0],
        ];
        Ok(dot(k.jerk.as_ref().expect("jerk requested"), &w))
    }
}

/// `L_X φ = ∇φ·V` as a differentiable function of state.
#[derive(Clone, Copy, Debug)]
pub struct LieDerivative<'a, S> {
    field: &'a VectorField,
    inner: S,
}

impl<'a, S: StateFunction> LieDerivative<'a, S> {
    pub fn new(field: &'a VectorField, inner: S) -> Self {
        LieDerivative { field, inner }
    }
}

impl<S: StateFunction> StateFunction for LieDerivative<'_, S> {
    fn dimension(&self) -> usize {
        self.field.dimension()
    }

    fn jet(&self, x: &[f64], degree: usize) -> Result<Jet, EvalError> {
        let phi = self.inner.jet(x, degree + 1)?;
        let v = self.field.eval_jet(x, degree)?;
        let grad: Vec<Jet> = (0..self.field.dimension()).map(|i| phi.partial(i)).collect();
        Ok(dot(&grad, &v))
    }
}

/// Lie derivative of `phi` along `field` at `x`.
pub fn lie_derivative<S: StateFunction + ?Sized>(
    field: &VectorField,
    phi: &S,
    x: &[f64],
) -> Result<f64, EvalError> {
    let (_, grad) = phi.value_and_gradient(x)?;
    let v = field.eval(x)?;
    Ok(grad.iter().zip(&v).map(|(g, w)| g * w).sum())
}

/// Both sides of the Darboux identity for the manifold scalar at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DarbouxResidual {
    /// `m(X)`.
    pub value: f64,
    /// `L_X m`, differentiated through the composition.
    pub lie: f64,
    pub trace: f64,
    /// `L_X m − Tr(J)·m`.
    pub residual: f64,
    /// The closed-form extra term from the bundle.
    pub expected: f64,
}

impl DarbouxResidual {
    /// `|residual − expected|` relative to the size of the terms involved.
    pub fn relative_error(&self) -> f64 {
        let scale = (self.lie.abs() + (self.trace * self.value).abs()).max(1.0);
        (self.residual - self.expected).abs() / scale
    }
}

/// Closed-form extra term of the Darboux identity from a bundle.
pub fn expected_extra_term(b: &KinematicsBundle) -> f64 {
    let jdot_v = &b.jacobian_dot * &b.velocity;
    if b.velocity.len() == 2 {
        return det2(&b.velocity, &jdot_v);
    }
    let bracket = &jdot_v * (-b.trace)
        + &b.jacobian * &jdot_v
        + (&b.jacobian_dot * &b.acceleration) * 2.0
        + &b.jacobian_ddot * &b.velocity;
    bracket.dot(&cross(&b.acceleration, &b.velocity))
}

pub fn darboux_residual(field: &VectorField, x: &[f64]) -> Result<DarbouxResidual, EvalError> {
    let b = kinematics_at(field, x)?;
    let value = scalar_from_bundle(&b);
    let lie = lie_derivative(field, &ManifoldScalar::new(field), x)?;
    Ok(DarbouxResidual {
        value,
        lie,
        trace: b.trace,
        residual: lie - b.trace * value,
        expected: expected_extra_term(&b),
    })
}

/// Closed-form Van der Pol curvature manifold and its Darboux remainder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VdpClosedForm {
    /// `9y² + (9x + 3x³)y + 6x⁴ − 2x⁶ + 9x²ε`, equal to `−9ε²·m₂`.
    pub phi8: f64,
    /// `(2x²/ε)(x³ − 3x − 3y)²`, equal to `L_X φ − Tr(J)·φ`.
    pub remainder: f64,
}

pub fn vdp_closed_form(x: f64, y: f64, eps: f64) -> Result<VdpClosedForm, ManifoldError> {
    if eps == 0.0 {
        return Err(ManifoldError::ZeroEpsilon);
    }
    let x2 = x * x;
    let x3 = x2 * x;
    let phi8 = 9.0 * y * y + (9.0 * x + 3.0 * x3) * y + 6.0 * x2 * x2 - 2.0 * x3 * x3
        + 9.0 * x2 * eps;
    let s = x3 - 3.0 * x - 3.0 * y;
    Ok(VdpClosedForm {
        phi8,
        remainder: 2.0 * x2 / eps * s * s,
    })
}

/// The remainder as it is commonly printed, without the square:
/// `(2x²/ε)(−3x − 3y + x³)`. It does not satisfy the identity and is kept
/// only to quantify the discrepancy.
pub fn vdp_unsquared_term(x: f64, y: f64, eps: f64) -> f64 {
    2.0 * x * x / eps * (-3.0 * x - 3.0 * y + x * x * x)
}

/// Threshold rule for "on the manifold": `|m| ≤ tau·(‖∇m‖·L + m_scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NearZero {
    pub tau: f64,
    pub length_scale: f64,
}

impl NearZero {
    /// `L = 1e-6 × diagonal` of the sampling box.
    pub fn for_domain(bounds: &[(f64, f64)]) -> NearZero {
        let diagonal = bounds
            .iter()
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt();
        NearZero {
            tau: 1.0,
            length_scale: 1e-6 * diagonal,
        }
    }

    pub fn holds(&self, m: f64, gradient_norm: f64, m_scale: f64) -> bool {
        m.abs() <= self.tau * (gradient_norm * self.length_scale + m_scale)
    }
}

/// Per-point entries of an invariance report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointRecord {
    pub point: Vec<f64>,
    pub value: f64,
    pub lie: f64,
    pub trace_term: f64,
    pub residual: f64,
    pub expected: f64,
    pub normalized_residual: f64,
    pub near_zero: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Summary {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Summary::default();
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Summary {
            count: n,
            min: v[0],
            median,
            max: v[n - 1],
        }
    }
}

/// Aggregated Darboux statistics over a sample set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DarbouxReport {
    pub samples: usize,
    /// `|L_X m − Tr(J)·m|`.
    pub residual_abs: Summary,
    /// Residual over `‖∇m‖·‖V‖ + |Tr(J)·m|`.
    pub residual_normalized: Summary,
    /// Relative error of the closed-form identity, see
    /// [`DarbouxResidual::relative_error`].
    pub identity_error: Summary,
    /// `k̂ = L_X m / m` at samples off the zero set.
    pub cofactor: Summary,
    /// `|k̂ − Tr(J)| / (1 + |Tr(J)|)`.
    pub cofactor_deviation: Summary,
    /// `|L_X m|` at samples projected onto `{m = 0}`.
    pub on_manifold_lie: Summary,
    /// `|L_X m| / (‖∇m‖·‖V‖)` at the projected samples.
    pub on_manifold_lie_normalized: Summary,
    pub projection_failures: usize,
    #[serde(skip)]
    pub records: Vec<PointRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportOptions {
    pub near_zero: NearZero,
    /// Project every sample onto `{m = 0}` and measure `L_X m` there.
    pub project: bool,
    pub max_newton_iters: usize,
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn point_record(
    field: &VectorField,
    x: &[f64],
    near_zero: &NearZero,
) -> Result<(PointRecord, f64), EvalError> {
    let scalar = ManifoldScalar::new(field);
    let b = kinematics_at(field, x)?;
    let (value, grad) = scalar.value_and_gradient(x)?;
    let lie: f64 = grad.iter().zip(b.velocity.iter()).map(|(g, v)| g * v).sum();
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let trace_term = b.trace * value;
    let residual = lie - trace_term;
    let normalized =
        safe_ratio(residual.abs(), grad_norm * b.velocity.norm() + trace_term.abs());
    let near = near_zero.holds(value, grad_norm, scalar_rounding_scale(&b));
    Ok((
        PointRecord {
            point: x.to_vec(),
            value,
            lie,
            trace_term,
            residual,
            expected: expected_extra_term(&b),
            normalized_residual: normalized,
            near_zero: near,
        },
        b.trace,
    ))
}

/// Evaluates the Darboux identity at every sample and, optionally, the
/// behaviour of `L_X m` on the zero set itself.
pub fn invariance_report(
    field: &VectorField,
    points: &[Vec<f64>],
    options: &ReportOptions,
) -> Result<DarbouxReport, ManifoldError> {
    if points.is_empty() {
        return Err(ManifoldError::EmptySample);
    }
    let rows = points
        .par_iter()
        .map(|p| point_record(field, p, &options.near_zero))
        .collect::<Result<Vec<_>, _>>()?;

    let identity_error: Vec<f64> = rows
        .iter()
        .map(|(r, trace)| {
            DarbouxResidual {
                value: r.value,
                lie: r.lie,
                trace: *trace,
                residual: r.residual,
                expected: r.expected,
            }
            .relative_error()
        })
        .collect();
    let off_zero: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(r, _)| !r.near_zero && r.value != 0.0)
        .map(|(r, trace)| (r.lie / r.value, *trace))
        .collect();

    let mut on_manifold = Vec::new();
    let mut failures = 0;
    if options.project {
        let scalar = ManifoldScalar::new(field);
        let projected: Vec<Result<(f64, f64), LevelSetError>> = points
            .par_iter()
            .map(|p| {
                let q = project_to_manifold(&scalar, p, options.max_newton_iters)?;
                let (_, grad) = scalar.value_and_gradient(&q)?;
                let v = field.eval(&q)?;
                let lie: f64 = grad.iter().zip(&v).map(|(g, w)| g * w).sum();
                let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                let speed = v.iter().map(|w| w * w).sum::<f64>().sqrt();
                Ok((lie.abs(), safe_ratio(lie.abs(), grad_norm * speed)))
            })
            .collect();
        for r in projected {
            match r {
                Ok(pair) => on_manifold.push(pair),
                Err(_) => failures += 1,
            }
        }
    }

    let records: Vec<PointRecord> = rows.into_iter().map(|(r, _)| r).collect();
    Ok(DarbouxReport {
        samples: records.len(),
        residual_abs: Summary::of(records.iter().map(|r| r.residual.abs())),
        residual_normalized: Summary::of(records.iter().map(|r| r.normalized_residual)),
        identity_error: Summary::of(identity_error),
        cofactor: Summary::of(off_zero.iter().map(|(k, _)| *k)),
        cofactor_deviation: Summary::of(
            off_zero
                .iter()
                .map(|(k, trace)| (k - trace).abs() / (1.0 + trace.abs())),
        ),
        on_manifold_lie: Summary::of(on_manifold.iter().map(|p| p.0)),
        on_manifold_lie_normalized: Summary::of(on_manifold.iter().map(|p| p.1)),
        projection_failures: failures,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, parse_model, ScalarExpr};
    use approx::assert_relative_eq;

    fn vdp() -> VectorField {
        builtin("vdp", &[("eps".into(), 0.05)]).unwrap()
    }

    #[test]
    fn harmonic_curvature_is_inverse_radius() {
        let h = builtin("harmonic", &[]).unwrap();
        for r in [0.5, 1.0, 3.0] {
            let c = curvature(&h, &[r, 0.0]).unwrap();
            assert_relative_eq!(c.kappa, 1.0 / r, max_relative = 1e-15);
            assert_relative_eq!(c.radius, r, max_relative = 1e-15);
        }
        assert_eq!(curvature(&h, &[0.0, 0.0]), Err(ManifoldError::Equilibrium));
    }

    #[test]
    fn straight_flow_has_zero_curvature() {
        // linear2 along an eigen-direction: γ parallel to V
        let f = builtin("linear2", &[]).unwrap();
        let c = curvature(&f, &[1.5, 0.0]).unwrap();
        assert_eq!(c.kappa, 0.0);
        assert_eq!(c.radius, f64::INFINITY);
    }

    #[test]
    fn vdp_curvature_and_scalar_at_one_one() {
        let f = vdp();
        let m = manifold_scalar(&f, &[1.0, 1.0]).unwrap();
        let expected = -25.45 / (9.0 * 0.05 * 0.05);
        assert_relative_eq!(m, expected, max_relative = 1e-13);
        assert_relative_eq!(m, -1131.111111111111, max_relative = 1e-12);
        let v = f.eval(&[1.0, 1.0]).unwrap();
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let c = curvature(&f, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(c.kappa, m.abs() / speed.powi(3), max_relative = 1e-13);
    }

    #[test]
    fn torsion_cases() {
        let planar = parse_model("dim=3; dx/dt=y; dy/dt=-x; dz/dt=-z").unwrap();
        let t = torsion(&planar, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(t.tau, 0.0);
        let lorenz = builtin("lorenz", &[]).unwrap();
        assert_eq!(
            torsion(&lorenz, &[0.0, 0.0, 5.0]),
            Err(ManifoldError::DegenerateTorsion)
        );
        assert_eq!(
            torsion(&vdp(), &[1.0, 1.0]),
            Err(ManifoldError::Dimension { expected: 3, got: 2 })
        );
        // triple-product oracle from the bundle of the Lorenz field at (1,1,1)
        let b = kinematics_at(&lorenz, &[1.0, 1.0, 1.0]).unwrap();
        let (v, g, j) = (&b.velocity, &b.acceleration, &b.jerk);
        let w = [
            g[1] * v[2] - g[2] * v[1],
            g[2] * v[0] - g[0] * v[2],
            g[0] * v[1] - g[1] * v[0],
        ];
        let triple = j[0] * w[0] + j[1] * w[1] + j[2] * w[2];
        let w2 = w.iter().map(|c| c * c).sum::<f64>();
        let t = torsion(&lorenz, &[1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(t.tau, -triple / w2, max_relative = 1e-14);
    }

    #[test]
    fn scalar_vanishes_on_lorenz_z_axis_and_equilibria() {
        let lorenz = builtin("lorenz", &[]).unwrap();
        assert_eq!(manifold_scalar(&lorenz, &[0.0, 0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(manifold_scalar(&lorenz, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(manifold_scalar(&builtin("harmonic", &[]).unwrap(), &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn jet_route_matches_bundle_route() {
        let lorenz = builtin("lorenz", &[]).unwrap();
        let f = vdp();
        for (field, p) in [(&lorenz, vec![3.0, -2.0, 17.0]), (&f, vec![0.4, -1.7])] {
            let a = ManifoldScalar::new(field).value(&p).unwrap();
            let b = manifold_scalar(field, &p).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn lie_derivative_examples() {
        let f = vdp();
        let x_coord = ScalarExpr::parse("x", 2, &[]).unwrap();
        let p = [0.8, -0.3];
        let l = lie_derivative(&f, &x_coord, &p).unwrap();
        assert_relative_eq!(l, (0.8 - 0.3 - 0.512 / 3.0) / 0.05, max_relative = 1e-14);

        let h = builtin("harmonic", &[]).unwrap();
        let m = ManifoldScalar::new(&h);
        assert_eq!(lie_derivative(&h, &m, &[1.3, -0.4]).unwrap(), 0.0);

        let r = darboux_residual(&f, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(r.residual, -44444.44444444444, max_relative = 1e-10);
        assert_relative_eq!(r.lie, r.trace * r.value + r.residual, max_relative = 1e-14);
    }

    #[test]
    fn residual_matches_finite_difference_along_flow() {
        // central difference of m along a short, accurately integrated arc
        let f = vdp();
        let m = ManifoldScalar::new(&f);
        let p = [1.0, 1.0];
        let h = 1e-5;
        let step = |sign: f64| {
            let mut x = p.to_vec();
            let n = 200;
            let dt = sign * h / n as f64;
            for _ in 0..n {
                let k1 = f.eval(&x).unwrap();
                let a: Vec<f64> = x.iter().zip(&k1).map(|(x, k)| x + 0.5 * dt * k).collect();
                let k2 = f.eval(&a).unwrap();
                let b: Vec<f64> = x.iter().zip(&k2).map(|(x, k)| x + 0.5 * dt * k).collect();
                let k3 = f.eval(&b).unwrap();
                let c: Vec<f64> = x.iter().zip(&k3).map(|(x, k)| x + dt * k).collect();
                let k4 = f.eval(&c).unwrap();
                for i in 0..2 {
                    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            x
        };
        let fd = (m.value(&step(1.0)).unwrap() - m.value(&step(-1.0)).unwrap()) / (2.0 * h);
        let r = darboux_residual(&f, &p).unwrap();
        assert_relative_eq!(fd, r.lie, max_relative = 1e-5);
        assert_relative_eq!(fd - r.trace * r.value, -44444.44444444444, max_relative = 1e-4);
    }

    #[test]
    fn residual_vanishes_on_cubic_nullcline() {
        let f = vdp();
        let r = darboux_residual(&f, &[2.0, 2.0 / 3.0]).unwrap();
        let scale = r.lie.abs() + (r.trace * r.value).abs();
        assert!(r.residual.abs() <= 1e-12 * scale, "{r:?}");
        assert!(r.expected.abs() <= 1e-12 * scale);
    }

    #[test]
    fn linear_fields_have_exact_zero_residual() {
        for name in ["harmonic", "linear2"] {
            let f = builtin(name, &[]).unwrap();
            for p in [[0.3, -1.2], [2.0, 2.5], [-1.0, 0.1]] {
                let r = darboux_residual(&f, &p).unwrap();
                assert!(r.residual.abs() <= 1e-12, "{name} {r:?}");
                assert_eq!(r.expected, 0.0);
            }
        }
    }

    #[test]
    fn vdp_closed_form_values() {
        let c = vdp_closed_form(1.0, 1.0, 0.05).unwrap();
        assert_relative_eq!(c.phi8, 25.45, max_relative = 1e-14);
        assert_relative_eq!(c.remainder, 1000.0, max_relative = 1e-14);
        for eps in [0.05, 0.3, 2.0] {
            assert!(vdp_closed_form(2.0, 2.0 / 3.0, eps).unwrap().remainder.abs() < 1e-12);
        }
        assert_eq!(vdp_closed_form(1.0, 1.0, 0.0), Err(ManifoldError::ZeroEpsilon));
    }

    #[test]
    fn harmonic_report_has_zero_cofactor() {
        let h = builtin("harmonic", &[]).unwrap();
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                let a = i as f64 * 0.37;
                vec![2.0 * a.cos() + 0.1, 1.5 * (1.3 * a).sin() - 0.2]
            })
            .collect();
        let opts = ReportOptions {
            near_zero: NearZero::for_domain(&[(-3.0, 3.0), (-3.0, 3.0)]),
            project: false,
            max_newton_iters: 50,
        };
        let r = invariance_report(&h, &pts, &opts).unwrap();
        assert_eq!(r.samples, 100);
        assert_eq!(r.residual_abs.max, 0.0);
        assert_eq!(r.cofactor.count, 100);
        assert_eq!(r.cofactor.max, 0.0);
        assert_eq!(r.cofactor.min, 0.0);
        assert!(invariance_report(&h, &[], &opts).is_err());
    }
}
