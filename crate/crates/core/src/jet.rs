//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] in `n` variables of degree `d` stores the Taylor coefficients
//! `c_α` of a function around a base point for every multi-index `α` with
//! `|α| ≤ d`, so that `f(x₀ + δ) = Σ c_α δ^α + O(|δ|^{d+1})`. Coefficients are
//! laid out in graded order (all monomials of degree 0, then degree 1, ...),
//! which makes truncation to a lower degree a prefix slice.
//!
//! Binary operations on jets of different degree produce a jet of the
//! smaller degree. With one variable the same type doubles as a univariate
//! power series in time, which is what the flow-jet recurrence uses.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

/// Highest total degree any jet may carry.
pub const MAX_DEGREE: usize = 8;
/// Highest number of independent variables.
pub const MAX_VARS: usize = 3;

const SIDE: usize = MAX_DEGREE + 1;
const NO_INDEX: u16 = u16::MAX;

struct Basis {
    exponents: Vec<[u8; 3]>,
    degree_of: Vec<usize>,
    /// `prefix[d]` = number of monomials of total degree `< d`.
    prefix: Vec<usize>,
    lookup: Vec<u16>,
    product: Vec<u16>,
}

impl Basis {
    fn build(nvars: usize) -> Basis {
        let mut exponents = Vec::new();
        let mut degree_of = Vec::new();
        let mut prefix = vec![0];
        for d in 0..=MAX_DEGREE {
            for a in (0..=d).rev() {
                match nvars {
                    1 => {
                        if a == d {
                            exponents.push([a as u8, 0, 0]);
                            degree_of.push(d);
                        }
                    }
                    2 => {
                        exponents.push([a as u8, (d - a) as u8, 0]);
                        degree_of.push(d);
                    }
                    _ => {
                        for b in (0..=d - a).rev() {
                            exponents.push([a as u8, b as u8, (d - a - b) as u8]);
                            degree_of.push(d);
                        }
                    }
                }
            }
            prefix.push(exponents.len());
        }
        let mut lookup = vec![NO_INDEX; SIDE * SIDE * SIDE];
        for (i, e) in exponents.iter().enumerate() {
            lookup[Self::key(e)] = i as u16;
        }
        let m = exponents.len();
        let mut product = vec![NO_INDEX; m * m];
        for i in 0..m {
            for j in 0..m {
                if degree_of[i] + degree_of[j] <= MAX_DEGREE {
                    let e = [
                        exponents[i][0] + exponents[j][0],
                        exponents[i][1] + exponents[j][1],
                        exponents[i][2] + exponents[j][2],
                    ];
                    product[i * m + j] = lookup[Self::key(&e)];
                }
            }
        }
        Basis {
            exponents,
            degree_of,
            prefix,
            lookup,
            product,
        }
    }

    fn key(e: &[u8; 3]) -> usize {
        (e[0] as usize * SIDE + e[1] as usize) * SIDE + e[2] as usize
    }

    fn len(&self, degree: usize) -> usize {
        self.prefix[degree + 1]
    }

    fn index(&self, e: &[u8; 3]) -> Option<usize> {
        if e.iter().any(|&k| k as usize > MAX_DEGREE) {
            return None;
        }
        match self.lookup[Self::key(e)] {
            NO_INDEX => None,
            i => Some(i as usize),
        }
    }
}

fn basis(nvars: usize) -> &'static Basis {
    static BASES: OnceLock<[Basis; MAX_VARS]> = OnceLock::new();
    assert!(
        (1..=MAX_VARS).contains(&nvars),
        "jets support 1 to {MAX_VARS} variables, got {nvars}"
    );
    &BASES.get_or_init(|| [Basis::build(1), Basis::build(2), Basis::build(3)])[nvars - 1]
}

/// Truncated Taylor expansion of a scalar function of up to three variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    nvars: usize,
    degree: usize,
    coeffs: Vec<f64>,
}

impl Jet {
    /// The constant `value`, carrying no derivative information.
    pub fn constant(nvars: usize, degree: usize, value: f64) -> Jet {
        assert!(degree <= MAX_DEGREE, "jet degree {degree} exceeds {MAX_DEGREE}");
        let mut coeffs = vec![0.0; basis(nvars).len(degree)];
        coeffs[0] = value;
        Jet {
            nvars,
            degree,
            coeffs,
        }
    }

    /// The coordinate function `x_var` expanded around `value`.
    pub fn variable(nvars: usize, degree: usize, var: usize, value: f64) -> Jet {
        assert!(var < nvars);
        let mut jet = Jet::constant(nvars, degree, value);
        if degree >= 1 {
            // degree-1 monomials follow the constant in lexicographically
            // descending order: x, y, z
            jet.coeffs[1 + var] = 1.0;
        }
        jet
    }

    /// Seeds one jet per coordinate of `point`.
    pub fn seed(point: &[f64], degree: usize) -> Vec<Jet> {
        let n = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(n, degree, i, v))
            .collect()
    }

    /// Univariate power series with the given coefficients `c₀, c₁, …`.
    pub fn series(coeffs: &[f64]) -> Jet {
        assert!(!coeffs.is_empty() && coeffs.len() <= MAX_DEGREE + 1);
        Jet {
            nvars: 1,
            degree: coeffs.len() - 1,
            coeffs: coeffs.to_vec(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Taylor coefficient of the monomial with the given exponents; zero
    /// beyond the stored degree.
    pub fn coeff(&self, exponents: &[usize]) -> f64 {
        let mut e = [0u8; 3];
        for (slot, &k) in e.iter_mut().zip(exponents) {
            if k > MAX_DEGREE {
                return 0.0;
            }
            *slot = k as u8;
        }
        if exponents.iter().sum::<usize>() > self.degree {
            return 0.0;
        }
        basis(self.nvars)
            .index(&e)
            .map_or(0.0, |i| self.coeffs[i])
    }

    /// Partial derivative `∂^α f` at the base point, where `α` counts how
    /// often each variable appears in `vars`.
    pub fn partial_at(&self, vars: &[usize]) -> f64 {
        let mut e = [0usize; 3];
        for &v in vars {
            e[v] += 1;
        }
        let factorial: f64 = e.iter().map(|&k| factorial(k)).product();
        self.coeff(&e[..self.nvars]) * factorial
    }

    /// Gradient at the base point.
    pub fn gradient(&self) -> Vec<f64> {
        (0..self.nvars)
            .map(|i| if self.degree >= 1 { self.coeffs[1 + i] } else { 0.0 })
            .collect()
    }

    /// The jet of `∂f/∂x_var`, one degree lower.
    pub fn partial(&self, var: usize) -> Jet {
        assert!(self.degree >= 1, "cannot differentiate a degree-0 jet");
        assert!(var < self.nvars);
        let b = basis(self.nvars);
        let degree = self.degree - 1;
        let mut coeffs = vec![0.0; b.len(degree)];
        for (i, out) in coeffs.iter_mut().enumerate() {
            let mut e = b.exponents[i];
            e[var] += 1;
            if let Some(j) = b.index(&e) {
                *out = self.coeffs[j] * e[var] as f64;
            }
        }
        Jet {
            nvars: self.nvars,
            degree,
            coeffs,
        }
    }

    pub fn truncate(&self, degree: usize) -> Jet {
        let degree = degree.min(self.degree);
        Jet {
            nvars: self.nvars,
            degree,
            coeffs: self.coeffs[..basis(self.nvars).len(degree)].to_vec(),
        }
    }

    pub fn constant_like(&self, value: f64) -> Jet {
        Jet::constant(self.nvars, self.degree, value)
    }

    pub fn scale(&self, k: f64) -> Jet {
        Jet {
            nvars: self.nvars,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }

    fn zip(&self, rhs: &Jet, op: impl Fn(f64, f64) -> f64) -> Jet {
        assert_eq!(self.nvars, rhs.nvars, "mixing jets of different arity");
        let degree = self.degree.min(rhs.degree);
        let len = basis(self.nvars).len(degree);
        Jet {
            nvars: self.nvars,
            degree,
            coeffs: (0..len).map(|i| op(self.coeffs[i], rhs.coeffs[i])).collect(),
        }
    }

    fn product(&self, rhs: &Jet) -> Jet {
        assert_eq!(self.nvars, rhs.nvars, "mixing jets of different arity");
        let b = basis(self.nvars);
        let degree = self.degree.min(rhs.degree);
        let len = b.len(degree);
        let m = b.exponents.len();
        let mut coeffs = vec![0.0; len];
        for i in 0..len {
            let a = self.coeffs[i];
            if a == 0.0 {
                continue;
            }
            let room = b.len(degree - b.degree_of[i]);
            let row = &b.product[i * m..i * m + room];
            for (j, &k) in row.iter().enumerate() {
                coeffs[k as usize] += a * rhs.coeffs[j];
            }
        }
        Jet {
            nvars: self.nvars,
            degree,
            coeffs,
        }
    }

    /// `Σ_k series[k]·(self − self(0))^k`, i.e. a univariate function with
    /// Taylor coefficients `series` applied to this jet.
    pub fn compose(&self, series: &[f64]) -> Jet {
        debug_assert!(series.len() > self.degree);
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let mut acc = self.constant_like(series[self.degree]);
        for k in (0..self.degree).rev() {
            acc = &acc * &h;
            acc.coeffs[0] += series[k];
        }
        acc
    }

    pub fn recip(&self) -> Jet {
        let a = self.value();
        let mut c = Vec::with_capacity(self.degree + 1);
        let mut p = 1.0 / a;
        for _ in 0..=self.degree {
            c.push(p);
            p *= -1.0 / a;
        }
        self.compose(&c)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let c: Vec<f64> = (0..=self.degree).map(|k| e / factorial(k)).collect();
        self.compose(&c)
    }

    /// Natural logarithm; the caller guarantees a positive base value.
    pub fn ln(&self) -> Jet {
        let a = self.value();
        let mut c = vec![a.ln()];
        for k in 1..=self.degree {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            c.push(sign / (k as f64 * a.powi(k as i32)));
        }
        self.compose(&c)
    }

    pub fn sin(&self) -> Jet {
        let (s, co) = self.value().sin_cos();
        let cycle = [s, co, -s, -co];
        let c: Vec<f64> = (0..=self.degree)
            .map(|k| cycle[k % 4] / factorial(k))
            .collect();
        self.compose(&c)
    }

    pub fn cos(&self) -> Jet {
        let (s, co) = self.value().sin_cos();
        let cycle = [co, -s, -co, s];
        let c: Vec<f64> = (0..=self.degree)
            .map(|k| cycle[k % 4] / factorial(k))
            .collect();
        self.compose(&c)
    }

    /// `self^p` for real `p` through the binomial series; needs a positive
    /// base value whenever derivatives are carried.
    pub fn powf(&self, p: f64) -> Jet {
        let a = self.value();
        let mut c = Vec::with_capacity(self.degree + 1);
        let mut binom = 1.0;
        for k in 0..=self.degree {
            c.push(binom * a.powf(p - k as f64));
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&c)
    }

    pub fn sqrt(&self) -> Jet {
        if self.degree == 0 {
            return self.constant_like(self.value().sqrt());
        }
        self.powf(0.5)
    }

    pub fn tanh(&self) -> Jet {
        // d^k/dx^k tanh = P_k(t) with P_0 = t, P_{k+1} = P_k'(t)·(1 − t²)
        let t = self.value().tanh();
        let mut poly = vec![0.0, 1.0];
        let mut c = Vec::with_capacity(self.degree + 1);
        for k in 0..=self.degree {
            let value = poly.iter().rev().fold(0.0, |acc, &p| acc * t + p);
            c.push(value / factorial(k));
            let deriv: Vec<f64> = poly
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &p)| p * i as f64)
                .collect();
            let mut next = vec![0.0; deriv.len() + 2];
            for (i, &d) in deriv.iter().enumerate() {
                next[i] += d;
                next[i + 2] -= d;
            }
            poly = next;
        }
        self.compose(&c)
    }

    /// Integer power by repeated squaring; negative exponents go through
    /// the reciprocal.
    pub fn powi(&self, n: i64) -> Jet {
        let mut base = if n < 0 { self.recip() } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc = self.constant_like(1.0);
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.product(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($trait:ident, $method:ident) => {
        impl $trait for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Dot product of two jet vectors.
pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    a.iter()
        .zip(b)
        .map(|(x, y)| x * y)
        .reduce(|acc, t| acc + t)
        .expect("dot product of empty vectors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basis_sizes_match_binomials() {
        assert_eq!(basis(1).len(4), 5);
        assert_eq!(basis(2).len(3), 10);
        assert_eq!(basis(3).len(3), 20);
        assert_eq!(basis(3).len(MAX_DEGREE), 165);
    }

    #[test]
    fn polynomial_coefficients() {
        // (x + 2y)^2 around (1, -1): value 1, grad (2, 4), hessian entries
        let v = Jet::seed(&[1.0, -1.0], 3);
        let s = &v[0] + &v[1].scale(2.0);
        let sq = &s * &s;
        assert_eq!(sq.value(), 1.0);
        assert_eq!(sq.gradient(), vec![-2.0, -4.0]);
        assert_eq!(sq.partial_at(&[0, 0]), 2.0);
        assert_eq!(sq.partial_at(&[0, 1]), 4.0);
        assert_eq!(sq.partial_at(&[1, 1]), 8.0);
        assert_eq!(sq.partial_at(&[0, 0, 1]), 0.0);
    }

    #[test]
    fn partial_lowers_degree() {
        let v = Jet::seed(&[2.0, 3.0, 5.0], 3);
        // f = x^2 y z
        let f = &(&v[0] * &v[0]) * &(&v[1] * &v[2]);
        let fx = f.partial(0);
        assert_eq!(fx.degree(), 2);
        assert_eq!(fx.value(), 2.0 * 2.0 * 15.0);
        assert_eq!(fx.gradient(), vec![30.0, 20.0, 12.0]);
    }

    #[test]
    fn transcendental_series() {
        let x = Jet::variable(1, 6, 0, 0.3);
        let e = x.exp();
        for k in 0..=6 {
            assert_relative_eq!(e.coeffs()[k], 0.3f64.exp() / factorial(k), max_relative = 1e-14);
        }
        let l = x.ln();
        assert_relative_eq!(l.coeffs()[2], -0.5 / 0.09, max_relative = 1e-14);
        // sin^2 + cos^2 = 1 to all orders
        let one = &(&x.sin() * &x.sin()) + &(&x.cos() * &x.cos());
        assert_relative_eq!(one.value(), 1.0, max_relative = 1e-15);
        for c in &one.coeffs()[1..] {
            assert!(c.abs() < 1e-14);
        }
        // tanh' = 1 - tanh^2, tanh'' = -2 tanh (1 - tanh^2)
        let t = x.tanh();
        let th = 0.3f64.tanh();
        assert_relative_eq!(t.coeffs()[1], 1.0 - th * th, max_relative = 1e-14);
        assert_relative_eq!(t.coeffs()[2], -th * (1.0 - th * th), max_relative = 1e-14);
        // sqrt squared
        let s = x.sqrt();
        let back = &s * &s;
        for (a, b) in back.coeffs().iter().zip(x.coeffs()) {
            assert!((a - b).abs() < 1e-14);
        }
        let r = x.recip();
        let unit = &r * &x;
        assert_relative_eq!(unit.value(), 1.0);
        assert!(unit.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn powi_matches_repeated_products() {
        let v = Jet::seed(&[1.5, -0.5], 4);
        let s = &v[0] + &v[1];
        let cube = &(&s * &s) * &s;
        assert_eq!(s.powi(3), cube);
        let inv = s.powi(-2);
        let check = &inv * &(&s * &s);
        assert_relative_eq!(check.value(), 1.0);
    }

    #[test]
    fn mixed_degrees_truncate_to_smaller() {
        let a = Jet::variable(2, 3, 0, 1.0);
        let b = Jet::variable(2, 1, 1, 2.0);
        assert_eq!((&a * &b).degree(), 1);
        assert_eq!((&a + &b).degree(), 1);
    }
}
