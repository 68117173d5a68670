//! Expression trees for vector-field components and their evaluation over
//! plain floats or Taylor jets.

use std::fmt;

use crate::jet::Jet;

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

/// Expression over state variables (by coordinate index) and parameters
/// (by slot in the owning field's parameter table).
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Param(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

pub const VARIABLE_NAMES: [&str; 3] = ["x", "y", "z"];

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// True when the expression mentions a state variable.
    pub fn has_variables(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Param(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(e) | Expr::Call(_, e) => e.has_variables(),
            Expr::Binary(_, a, b) => a.has_variables() || b.has_variables(),
        }
    }

    /// Highest variable index referenced, if any.
    pub fn max_variable(&self) -> Option<usize> {
        match self {
            Expr::Num(_) | Expr::Param(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_variable(),
            Expr::Binary(_, a, b) => a.max_variable().max(b.max_variable()),
        }
    }

    pub fn eval<T: Arith>(&self, vars: &[T], params: &[f64]) -> Result<T, EvalError> {
        Ok(match self {
            Expr::Num(c) => vars[0].constant_like(*c),
            Expr::Var(i) => vars[*i].clone(),
            Expr::Param(i) => vars[0].constant_like(params[*i]),
            Expr::Neg(e) => e.eval(vars, params)?.neg(),
            Expr::Binary(BinOp::Pow, base, exponent) => {
                let b = base.eval(vars, params)?;
                if exponent.has_variables() {
                    let p = exponent.eval(vars, params)?;
                    check_log_domain("^", b.value())?;
                    p.mul(&b.apply(Func::Ln)).apply(Func::Exp)
                } else {
                    let p = exponent.eval(&[0.0], params)?;
                    if p.fract() == 0.0 && p.abs() <= 1e9 {
                        b.powi(p as i64)
                    } else {
                        check_log_domain("^", b.value())?;
                        b.powf(p)
                    }
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(vars, params)?;
                let b = rhs.eval(vars, params)?;
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b),
                    BinOp::Pow => unreachable!(),
                }
            }
            Expr::Call(f, arg) => {
                let a = arg.eval(vars, params)?;
                let v = a.value();
                match f {
                    Func::Ln => check_log_domain("ln", v)?,
                    Func::Sqrt if v < 0.0 => {
                        return Err(EvalError::Domain {
                            function: "sqrt",
                            argument: v,
                        })
                    }
                    _ => {}
                }
                a.apply(*f)
            }
        })
    }

    /// Fully parenthesised rendering that re-parses to an identical tree.
    pub fn display<'a>(&'a self, params: &'a [(String, f64)]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, params }
    }
}

fn check_log_domain(function: &'static str, v: f64) -> Result<(), EvalError> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(EvalError::Domain {
            function,
            argument: v,
        })
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    params: &'a [(String, f64)],
}

impl<'a> fmt::Display for ExprDisplay<'a> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e: &'a Expr| ExprDisplay {
            expr: e,
            params: self.params,
        };
        match self.expr {
            Expr::Num(c) => write!(f, "{c:?}"),
            Expr::Var(i) => f.write_str(VARIABLE_NAMES[*i]),
            Expr::Param(i) => f.write_str(&self.params[*i].0),
            Expr::Neg(e) => write!(f, "(-{})", sub(e)),
            Expr::Binary(op, a, b) => write!(f, "({} {} {})", sub(a), op.symbol(), sub(b)),
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), sub(a)),
        }
    }
}

/// Arithmetic needed to evaluate an expression tree.
pub trait Arith: Clone {
    fn constant_like(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    fn powi(&self, n: i64) -> Self;
    fn powf(&self, p: f64) -> Self;
    fn apply(&self, f: Func) -> Self;
}

impl Arith for f64 {
    fn constant_like(&self, c: f64) -> f64 {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, rhs: &f64) -> f64 {
        self + rhs
    }
    fn sub(&self, rhs: &f64) -> f64 {
        self - rhs
    }
    fn mul(&self, rhs: &f64) -> f64 {
        self * rhs
    }
    fn div(&self, rhs: &f64) -> f64 {
        self / rhs
    }
    fn neg(&self) -> f64 {
        -self
    }
    fn powi(&self, n: i64) -> f64 {
        let mut base = if n < 0 { 1.0 / self } else { *self };
        let mut e = n.unsigned_abs();
        let mut acc = 1.0;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            e >>= 1;
            if e > 0 {
                base *= base;
            }
        }
        acc
    }
    fn powf(&self, p: f64) -> f64 {
        (p * self.ln()).exp()
    }
    fn apply(&self, f: Func) -> f64 {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Exp => self.exp(),
            Func::Ln => self.ln(),
            Func::Sqrt => self.sqrt(),
            Func::Tanh => self.tanh(),
        }
    }
}

impl Arith for Jet {
    fn constant_like(&self, c: f64) -> Jet {
        Jet::constant_like(self, c)
    }
    fn value(&self) -> f64 {
        Jet::value(self)
    }
    fn add(&self, rhs: &Jet) -> Jet {
        self + rhs
    }
    fn sub(&self, rhs: &Jet) -> Jet {
        self - rhs
    }
    fn mul(&self, rhs: &Jet) -> Jet {
        self * rhs
    }
    fn div(&self, rhs: &Jet) -> Jet {
        self * &rhs.recip()
    }
    fn neg(&self) -> Jet {
        -self
    }
    fn powi(&self, n: i64) -> Jet {
        Jet::powi(self, n)
    }
    fn powf(&self, p: f64) -> Jet {
        (&self.ln().scale(p)).exp()
    }
    fn apply(&self, f: Func) -> Jet {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Exp => self.exp(),
            Func::Ln => self.ln(),
            Func::Sqrt => self.sqrt(),
            Func::Tanh => self.tanh(),
        }
    }
}
