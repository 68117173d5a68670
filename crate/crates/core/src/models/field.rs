use std::fmt;

use nalgebra::DMatrix;

use super::expr::{BinOp, Expr};
use super::parser::{parse_expression, parse_model_source, Symbols};
use super::{EvalError, ModelError};
use crate::jet::Jet;

/// An autonomous vector field `dX/dt = f(X)` in two or three dimensions.
///
/// Parameters are bound at construction; [`VectorField::with_parameters`]
/// returns a new field rather than mutating this one.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    name: Option<String>,
    dimension: usize,
    params: Vec<(String, f64)>,
    components: Vec<Expr>,
}

pub const BUILTIN_NAMES: [&str; 4] = ["vdp", "lorenz", "harmonic", "linear2"];

const VDP: &str = "dim = 2
param eps = 0.05
dx/dt = (x + y - x^3/3) / eps
dy/dt = -x
";

const LORENZ: &str = "dim = 3
param sigma = 10
param r = 28
param beta = 8/3
dx/dt = sigma*(y - x)
dy/dt = -x*z + r*x - y
dz/dt = x*y - beta*z
";

const HARMONIC: &str = "dim = 2
dx/dt = y
dy/dt = -x
";

const LINEAR2: &str = "dim = 2
dx/dt = -x
dy/dt = -2*y
";

/// Parses a model file into a vector field.
pub fn parse_model(text: &str) -> Result<VectorField, ModelError> {
    let src = parse_model_source(text)?;
    Ok(VectorField {
        name: None,
        dimension: src.dimension,
        params: src.params,
        components: src.components,
    })
}

/// One of the built-in models with optional parameter overrides.
///
/// `vdp` is the slow-fast Van der Pol system (`eps = 0.05`), `lorenz` the
/// classical Lorenz system (`sigma = 10`, `r = 28`, `beta = 8/3`);
/// `harmonic` and `linear2` are linear test fields.
pub fn builtin(name: &str, overrides: &[(String, f64)]) -> Result<VectorField, ModelError> {
    let text = match name {
        "vdp" => VDP,
        "lorenz" => LORENZ,
        "harmonic" => HARMONIC,
        "linear2" => LINEAR2,
        other => return Err(ModelError::UnknownModel(other.to_string())),
    };
    let mut field = parse_model(text).expect("built-in model text is valid");
    field.name = Some(name.to_string());
    field.with_parameters(overrides)
}

impl VectorField {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Built-in model name, if the field came from [`builtin`].
    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn parameters(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(p, _)| p == name).map(|p| p.1)
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn with_parameters(&self, overrides: &[(String, f64)]) -> Result<VectorField, ModelError> {
        let mut out = self.clone();
        for (name, value) in overrides {
            let slot = out
                .params
                .iter_mut()
                .find(|(p, _)| p == name)
                .ok_or_else(|| ModelError::UnknownParameter(name.clone()))?;
            if !value.is_finite() {
                return Err(ModelError::NonFiniteParameter(name.clone()));
            }
            slot.1 = *value;
        }
        Ok(out)
    }

    fn param_values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.1).collect()
    }

    fn check_state(&self, x: &[f64]) -> Result<(), EvalError> {
        if x.len() != self.dimension {
            return Err(EvalError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFiniteInput);
        }
        Ok(())
    }

    /// Velocity `f(X)`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.check_state(x)?;
        let params = self.param_values();
        let v = self
            .components
            .iter()
            .map(|c| c.eval(x, &params))
            .collect::<Result<Vec<f64>, _>>()?;
        if v.iter().any(|c| !c.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        Ok(v)
    }

    /// Taylor jets of every component around `x`, truncated at `degree`.
    pub fn eval_jet(&self, x: &[f64], degree: usize) -> Result<Vec<Jet>, EvalError> {
        self.check_state(x)?;
        self.eval_jets(&Jet::seed(x, degree))
    }

    /// Composes the field with arbitrary jets for the state coordinates.
    pub fn eval_jets(&self, vars: &[Jet]) -> Result<Vec<Jet>, EvalError> {
        if vars.len() != self.dimension {
            return Err(EvalError::DimensionMismatch {
                expected: self.dimension,
                got: vars.len(),
            });
        }
        let params = self.param_values();
        let out = self
            .components
            .iter()
            .map(|c| c.eval(vars, &params))
            .collect::<Result<Vec<Jet>, _>>()?;
        if out.iter().any(|j| !j.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        Ok(out)
    }

    /// The field `λ·f`, i.e. the same orbits traversed `λ` times faster.
    pub fn scaled(&self, lambda: f64) -> VectorField {
        let mut out = self.clone();
        out.name = None;
        out.components = self
            .components
            .iter()
            .map(|c| Expr::binary(BinOp::Mul, Expr::Num(lambda), c.clone()))
            .collect();
        out
    }

    /// The conjugated field `g(u) = R·f(Rᵀu)` for a square matrix `R`.
    pub fn conjugated(&self, r: &DMatrix<f64>) -> VectorField {
        let n = self.dimension;
        assert_eq!(r.shape(), (n, n));
        // x_j = (Rᵀu)_j = Σ_i R_ij u_i
        let pulled: Vec<Expr> = (0..n)
            .map(|j| linear_combination((0..n).map(|i| (r[(i, j)], Expr::Var(i)))))
            .collect();
        let substituted: Vec<Expr> = self
            .components
            .iter()
            .map(|c| substitute(c, &pulled))
            .collect();
        let mut out = self.clone();
        out.name = None;
        out.components = (0..n)
            .map(|i| linear_combination((0..n).map(|k| (r[(i, k)], substituted[k].clone()))))
            .collect();
        out
    }
}

fn linear_combination(terms: impl Iterator<Item = (f64, Expr)>) -> Expr {
    terms
        .map(|(w, e)| Expr::binary(BinOp::Mul, Expr::Num(w), e))
        .reduce(|a, b| Expr::binary(BinOp::Add, a, b))
        .expect("non-empty combination")
}

fn substitute(e: &Expr, vars: &[Expr]) -> Expr {
    match e {
        Expr::Var(i) => vars[*i].clone(),
        Expr::Num(_) | Expr::Param(_) => e.clone(),
        Expr::Neg(a) => Expr::Neg(Box::new(substitute(a, vars))),
        Expr::Call(f, a) => Expr::Call(*f, Box::new(substitute(a, vars))),
        Expr::Binary(op, a, b) => Expr::binary(*op, substitute(a, vars), substitute(b, vars)),
    }
}

/// Renders the field as model-file text that parses back to the same field.
impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dim = {}", self.dimension)?;
        for (name, value) in &self.params {
            writeln!(f, "param {name} = {value:?}")?;
        }
        for (i, c) in self.components.iter().enumerate() {
            writeln!(
                f,
                "d{}/dt = {}",
                super::VARIABLE_NAMES[i],
                c.display(&self.params)
            )?;
        }
        Ok(())
    }
}

/// A smooth scalar function of the state whose Taylor jets can be computed.
pub trait StateFunction: Sync {
    fn dimension(&self) -> usize;

    /// Taylor jet around `x`, truncated at `degree`.
    fn jet(&self, x: &[f64], degree: usize) -> Result<Jet, EvalError>;

    fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(self.jet(x, 0)?.value())
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), EvalError> {
        let j = self.jet(x, 1)?;
        Ok((j.value(), j.gradient()))
    }
}

/// A scalar expression in the state variables, e.g. `x^2 + y^2 - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarExpr {
    dimension: usize,
    params: Vec<(String, f64)>,
    expr: Expr,
}

impl ScalarExpr {
    pub fn parse(
        text: &str,
        dimension: usize,
        params: &[(String, f64)],
    ) -> Result<ScalarExpr, ModelError> {
        if !(1..=3).contains(&dimension) {
            return Err(ModelError::Dimension(dimension as f64));
        }
        let symbols = Symbols {
            dimension,
            params,
            allow_variables: true,
        };
        let expr = parse_expression(text, &symbols)?;
        Ok(ScalarExpr {
            dimension,
            params: params.to_vec(),
            expr,
        })
    }

    fn param_values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.1).collect()
    }
}

impl StateFunction for ScalarExpr {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn jet(&self, x: &[f64], degree: usize) -> Result<Jet, EvalError> {
        if x.len() != self.dimension {
            return Err(EvalError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        let j = self.expr.eval(&Jet::seed(x, degree), &self.param_values())?;
        if !j.is_finite() {
            return Err(EvalError::NonFinite);
        }
        Ok(j)
    }

    fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        if x.len() != self.dimension {
            return Err(EvalError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        let v = self.expr.eval(x, &self.param_values())?;
        if !v.is_finite() {
            return Err(EvalError::NonFinite);
        }
        Ok(v)
    }
}
