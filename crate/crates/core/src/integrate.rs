//! Trajectory integration, zero-crossing events and limit cycles.
//!
//! Two explicit methods are available: classical RK4 with a fixed step and
//! the Dormand–Prince 5(4) pair with PI step control. Both keep the field
//! value at each step endpoint, so trajectories carry a cubic Hermite dense
//! output for free.

use serde::Serialize;
use thiserror::Error;

use crate::models::{EvalError, StateFunction, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("initial state is not finite")]
    NonFiniteInitial,
    #[error("initial state has {got} coordinates, field needs {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("step size underflow at t = {time} (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },
    #[error("state became non-finite; last valid time t = {last_time}")]
    NonFinite { last_time: f64 },
    #[error("step budget of {steps} exhausted at t = {time}")]
    StepBudget { time: f64, steps: usize },
    #[error("field evaluation failed at t = {time}: {source}")]
    Eval {
        time: f64,
        #[source]
        source: EvalError,
    },
    #[error("no limit cycle after {crossings} section crossings (t = {time}); last periods {periods:?}")]
    NoCycle {
        crossings: usize,
        time: f64,
        periods: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Rk4 {
        step: f64,
    },
    DormandPrince {
        rtol: f64,
        atol: f64,
        max_step: Option<f64>,
    },
}

impl Method {
    pub fn adaptive() -> Method {
        Method::DormandPrince {
            rtol: 1e-9,
            atol: 1e-12,
            max_step: None,
        }
    }

    pub fn adaptive_with(rtol: f64, atol: f64) -> Method {
        Method::DormandPrince {
            rtol,
            atol,
            max_step: None,
        }
    }

    fn validate(&self) -> Result<(), IntegrateError> {
        let ok = match *self {
            Method::Rk4 { step } => step > 0.0 && step.is_finite(),
            Method::DormandPrince {
                rtol,
                atol,
                max_step,
            } => {
                rtol > 0.0
                    && atol > 0.0
                    && rtol.is_finite()
                    && atol.is_finite()
                    && max_step.is_none_or(|h| h > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(IntegrateError::InvalidOptions(format!(
                "step and tolerances must be positive: {self:?}"
            )))
        }
    }
}

/// Which samples end up in the trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Recording {
    /// Every accepted step endpoint.
    Steps,
    /// Times `transient + k·dt`; the integrator stops exactly at each.
    Uniform(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOptions {
    pub method: Method,
    /// Initial stretch integrated but not recorded.
    pub transient: f64,
    pub recording: Recording,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            method: Method::adaptive(),
            transient: 0.0,
            recording: Recording::Steps,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Field value at each state.
    pub velocities: Vec<Vec<f64>>,
    pub method: Method,
    pub stats: StepStats,
}

/// Cubic Hermite interpolation on `[t0, t1]` from endpoint states and
/// derivatives.
pub fn hermite(t0: f64, t1: f64, x0: &[f64], x1: &[f64], v0: &[f64], v1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..x0.len())
        .map(|i| h00 * x0[i] + h * (h10 * v0[i] + h11 * v1[i]) + h01 * x1[i])
        .collect()
}

/// Extreme values of one Hermite component over `[a, b] ⊆ [t0, t1]`.
fn hermite_range(
    t0: f64,
    t1: f64,
    p0: f64,
    p1: f64,
    m0: f64,
    m1: f64,
    a: f64,
    b: f64,
) -> (f64, f64) {
    let h = t1 - t0;
    let eval = |t: f64| {
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + h * ((s3 - 2.0 * s2 + s) * m0 + (s3 - s2) * m1)
            + (-2.0 * s3 + 3.0 * s2) * p1
    };
    // derivative in s: 3A s² + 2B s + C
    let a3 = 2.0 * p0 + h * m0 - 2.0 * p1 + h * m1;
    let b2 = -3.0 * p0 - 2.0 * h * m0 + 3.0 * p1 - h * m1;
    let c1 = h * m0;
    let mut candidates = vec![a, b];
    let (qa, qb, qc) = (3.0 * a3, 2.0 * b2, c1);
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let r = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * r);
            if q != 0.0 {
                candidates.push(q / qa);
                candidates.push(qc / q);
            } else {
                candidates.push(0.0);
            }
        }
    } else if qb != 0.0 {
        candidates.push(-qc / qb);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (k, c) in candidates.into_iter().enumerate() {
        let t = if k < 2 { c } else { t0 + c * h };
        if t.is_finite() && t >= a && t <= b {
            let v = eval(t);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }

    /// Dense output at `t`, clamped to the recorded span.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        hermite(
            self.times[k],
            self.times[k + 1],
            &self.states[k],
            &self.states[k + 1],
            &self.velocities[k],
            &self.velocities[k + 1],
            t,
        )
    }
}

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

struct Engine<'a> {
    field: &'a VectorField,
    method: Method,
    t: f64,
    x: Vec<f64>,
    v: Vec<f64>,
    h: f64,
    err_prev: f64,
    rejected_last: bool,
    stats: StepStats,
}

fn axpy(x: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = x.to_vec();
    for &(c, k) in terms {
        if c != 0.0 {
            for (o, ki) in out.iter_mut().zip(k) {
                *o += h * c * ki;
            }
        }
    }
    out
}

impl<'a> Engine<'a> {
    fn new(field: &'a VectorField, x0: &[f64], method: Method) -> Result<Engine<'a>, IntegrateError> {
        method.validate()?;
        if x0.len() != field.dimension() {
            return Err(IntegrateError::Dimension {
                expected: field.dimension(),
                got: x0.len(),
            });
        }
        if x0.iter().any(|c| !c.is_finite()) {
            return Err(IntegrateError::NonFiniteInitial);
        }
        let mut e = Engine {
            field,
            method,
            t: 0.0,
            x: x0.to_vec(),
            v: Vec::new(),
            h: 0.0,
            err_prev: 1e-4,
            rejected_last: false,
            stats: StepStats::default(),
        };
        e.v = e.eval(x0)?;
        e.h = match method {
            Method::Rk4 { step } => step,
            Method::DormandPrince { rtol, atol, max_step } => {
                let h = e.initial_step(rtol, atol)?;
                max_step.map_or(h, |m| h.min(m))
            }
        };
        Ok(e)
    }

    fn eval(&mut self, x: &[f64]) -> Result<Vec<f64>, IntegrateError> {
        self.stats.evaluations += 1;
        if x.iter().any(|c| !c.is_finite()) {
            return Err(IntegrateError::NonFinite { last_time: self.t });
        }
        self.field.eval(x).map_err(|source| match source {
            EvalError::NonFinite | EvalError::NonFiniteInput => {
                IntegrateError::NonFinite { last_time: self.t }
            }
            source => IntegrateError::Eval {
                time: self.t,
                source,
            },
        })
    }

    fn error_norm(&self, x: &[f64], xn: &[f64], err: &[f64], rtol: f64, atol: f64) -> f64 {
        let n = x.len() as f64;
        (err.iter()
            .zip(x.iter().zip(xn))
            .map(|(e, (a, b))| {
                let sc = atol + rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / n)
            .sqrt()
    }

    fn initial_step(&mut self, rtol: f64, atol: f64) -> Result<f64, IntegrateError> {
        let norm = |v: &[f64], x: &[f64]| {
            (v.iter()
                .zip(x)
                .map(|(vi, xi)| (vi / (atol + rtol * xi.abs())).powi(2))
                .sum::<f64>()
                / v.len() as f64)
                .sqrt()
        };
        let d0 = norm(&self.x, &self.x);
        let d1 = norm(&self.v, &self.x);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let x1 = axpy(&self.x, h0, &[(1.0, &self.v)]);
        let v1 = self.eval(&x1)?;
        let diff: Vec<f64> = v1.iter().zip(&self.v).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff, &self.x) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1))
    }

    /// One accepted step, never passing `t_end`.
    fn advance(&mut self, t_end: f64) -> Result<(), IntegrateError> {
        match self.method {
            Method::Rk4 { .. } => self.advance_rk4(t_end),
            Method::DormandPrince { rtol, atol, max_step } => {
                self.advance_dp(t_end, rtol, atol, max_step)
            }
        }
    }

    fn advance_rk4(&mut self, t_end: f64) -> Result<(), IntegrateError> {
        let remaining = t_end - self.t;
        let last = remaining <= self.h * (1.0 + 1e-10);
        let h = if last { remaining } else { self.h };
        let x = self.x.clone();
        let k1 = self.v.clone();
        let k2 = self.eval(&axpy(&x, h, &[(0.5, &k1)]))?;
        let k3 = self.eval(&axpy(&x, h, &[(0.5, &k2)]))?;
        let k4 = self.eval(&axpy(&x, h, &[(1.0, &k3)]))?;
        let xn = axpy(
            &x,
            h,
            &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
        );
        let vn = self.eval(&xn)?;
        self.t = if last { t_end } else { self.t + h };
        self.x = xn;
        self.v = vn;
        self.stats.accepted += 1;
        Ok(())
    }

    fn advance_dp(
        &mut self,
        t_end: f64,
        rtol: f64,
        atol: f64,
        max_step: Option<f64>,
    ) -> Result<(), IntegrateError> {
        let mut nonfinite_rejections = 0;
        loop {
            let remaining = t_end - self.t;
            let nominal = max_step.map_or(self.h, |m| self.h.min(m));
            let last = nominal >= remaining;
            let h = if last { remaining } else { nominal };
            if h <= 16.0 * f64::EPSILON * self.t.abs().max(1.0) && !last {
                return Err(if nonfinite_rejections > 0 {
                    IntegrateError::NonFinite { last_time: self.t }
                } else {
                    IntegrateError::StepUnderflow {
                        time: self.t,
                        step: h,
                    }
                });
            }
            match self.dp_trial(h, rtol, atol) {
                Ok((xn, vn, err)) if err <= 1.0 => {
                    let mut factor =
                        SAFETY * err.max(1e-10).powf(-ALPHA) * self.err_prev.powf(BETA);
                    factor = factor.clamp(0.2, 10.0);
                    if self.rejected_last {
                        factor = factor.min(1.0);
                    }
                    self.err_prev = err.max(1e-4);
                    self.rejected_last = false;
                    if !last || factor < 1.0 {
                        self.h = h * factor;
                    }
                    self.t = if last { t_end } else { self.t + h };
                    self.x = xn;
                    self.v = vn;
                    self.stats.accepted += 1;
                    return Ok(());
                }
                Ok((_, _, err)) => {
                    self.stats.rejected += 1;
                    self.rejected_last = true;
                    self.h = h * (SAFETY * err.powf(-ALPHA)).max(0.2);
                }
                Err(IntegrateError::NonFinite { .. }) => {
                    self.stats.rejected += 1;
                    self.rejected_last = true;
                    nonfinite_rejections += 1;
                    self.h = h * 0.2;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn dp_trial(
        &mut self,
        h: f64,
        rtol: f64,
        atol: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, f64), IntegrateError> {
        let x = self.x.clone();
        let k1 = self.v.clone();
        let k2 = self.eval(&axpy(&x, h, &[(1.0 / 5.0, &k1)]))?;
        let k3 = self.eval(&axpy(&x, h, &[(3.0 / 40.0, &k1), (9.0 / 40.0, &k2)]))?;
        let k4 = self.eval(&axpy(
            &x,
            h,
            &[(44.0 / 45.0, &k1), (-56.0 / 15.0, &k2), (32.0 / 9.0, &k3)],
        ))?;
        let k5 = self.eval(&axpy(
            &x,
            h,
            &[
                (19372.0 / 6561.0, &k1),
                (-25360.0 / 2187.0, &k2),
                (64448.0 / 6561.0, &k3),
                (-212.0 / 729.0, &k4),
            ],
        ))?;
        let k6 = self.eval(&axpy(
            &x,
            h,
            &[
                (9017.0 / 3168.0, &k1),
                (-355.0 / 33.0, &k2),
                (46732.0 / 5247.0, &k3),
                (49.0 / 176.0, &k4),
                (-5103.0 / 18656.0, &k5),
            ],
        ))?;
        let xn = axpy(
            &x,
            h,
            &[
                (35.0 / 384.0, &k1),
                (500.0 / 1113.0, &k3),
                (125.0 / 192.0, &k4),
                (-2187.0 / 6784.0, &k5),
                (11.0 / 84.0, &k6),
            ],
        );
        let k7 = self.eval(&xn)?;
        let err = axpy(
            &vec![0.0; x.len()],
            h,
            &[
                (71.0 / 57600.0, &k1),
                (-71.0 / 16695.0, &k3),
                (71.0 / 1920.0, &k4),
                (-17253.0 / 339200.0, &k5),
                (22.0 / 525.0, &k6),
                (-1.0 / 40.0, &k7),
            ],
        );
        let norm = self.error_norm(&x, &xn, &err, rtol, atol);
        Ok((xn, k7, if norm.is_finite() { norm } else { f64::INFINITY }))
    }
}

/// Integrates `field` from `x0` over `[0, duration]`, recording from
/// `t = transient` on.
pub fn integrate(
    field: &VectorField,
    x0: &[f64],
    duration: f64,
    options: &IntegrateOptions,
) -> Result<Trajectory, IntegrateError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(IntegrateError::InvalidDuration(duration));
    }
    if !(options.transient >= 0.0 && options.transient < duration) {
        return Err(IntegrateError::InvalidOptions(format!(
            "transient {} must lie in [0, {duration})",
            options.transient
        )));
    }
    if let Recording::Uniform(dt) = options.recording {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(IntegrateError::InvalidOptions(format!(
                "sampling interval {dt} must be positive"
            )));
        }
    }
    let mut engine = Engine::new(field, x0, options.method)?;
    let budget = |engine: &Engine| {
        if engine.stats.accepted >= options.max_steps {
            Err(IntegrateError::StepBudget {
                time: engine.t,
                steps: options.max_steps,
            })
        } else {
            Ok(())
        }
    };
    while engine.t < options.transient {
        budget(&engine)?;
        engine.advance(options.transient)?;
    }

    let mut traj = Trajectory {
        times: vec![engine.t],
        states: vec![engine.x.clone()],
        velocities: vec![engine.v.clone()],
        method: options.method,
        stats: StepStats::default(),
    };
    let mut next_sample = 1usize;
    while engine.t < duration {
        budget(&engine)?;
        let target = match options.recording {
            Recording::Steps => duration,
            Recording::Uniform(dt) => {
                let ts = options.transient + next_sample as f64 * dt;
                if ts >= duration - 1e-9 * dt {
                    duration
                } else {
                    ts
                }
            }
        };
        engine.advance(target)?;
        if matches!(options.recording, Recording::Steps) || engine.t == target {
            traj.times.push(engine.t);
            traj.states.push(engine.x.clone());
            traj.velocities.push(engine.v.clone());
            next_sample += 1;
        }
    }
    traj.stats = engine.stats;
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Negative to positive.
    Rising,
    /// Positive to negative.
    Falling,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub state: Vec<f64>,
    pub value: f64,
    pub direction: Direction,
}

/// Bisection for a sign change of `g` on `[a, b]`, stopping once
/// `|g| ≤ tol` or the bracket collapses. Returns the time and value.
fn bisect(
    mut a: f64,
    mut b: f64,
    mut ga: f64,
    tol: f64,
    mut g: impl FnMut(f64) -> Result<f64, EvalError>,
) -> Result<(f64, f64), EvalError> {
    let mut best = (a, ga);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m)?;
        if gm.abs() < best.1.abs() || best.0 == a && best.1 == ga {
            best = (m, gm);
        }
        if gm.abs() <= tol {
            return Ok((m, gm));
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Ok(best)
}

/// Sign changes of `scalar` along `traj`, refined on the dense output to
/// `|scalar| ≤ 1e-10·scale` where `scale` is the larger sample magnitude
/// at the bracketing pair.
pub fn find_zero_crossings<S: StateFunction + ?Sized>(
    scalar: &S,
    traj: &Trajectory,
) -> Result<Vec<Event>, EvalError> {
    let values = traj
        .states
        .iter()
        .map(|x| scalar.value(x))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut events = Vec::new();
    for k in 0..values.len().saturating_sub(1) {
        let (s0, s1) = (values[k], values[k + 1]);
        if s0 == 0.0 {
            continue;
        }
        let direction = if s0 < 0.0 && s1 >= 0.0 {
            Direction::Rising
        } else if s0 > 0.0 && s1 <= 0.0 {
            Direction::Falling
        } else {
            continue;
        };
        if s1 == 0.0 {
            events.push(Event {
                time: traj.times[k + 1],
                state: traj.states[k + 1].clone(),
                value: 0.0,
                direction,
            });
            continue;
        }
        let (t0, t1) = (traj.times[k], traj.times[k + 1]);
        let at = |t: f64| {
            hermite(
                t0,
                t1,
                &traj.states[k],
                &traj.states[k + 1],
                &traj.velocities[k],
                &traj.velocities[k + 1],
                t,
            )
        };
        let tol = 1e-10 * s0.abs().max(s1.abs());
        let (time, value) = bisect(t0, t1, s0, tol, |t| scalar.value(&at(t)))?;
        events.push(Event {
            time,
            state: at(time),
            value,
            direction,
        });
    }
    Ok(events)
}

/// Poincaré section `x[coordinate] = level`, crossed in `direction`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Section {
    pub coordinate: usize,
    pub level: f64,
    pub direction: Direction,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleOptions {
    pub method: Method,
    /// Relative agreement of successive periods.
    pub period_tolerance: f64,
    pub max_time: f64,
    pub max_crossings: usize,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            method: Method::adaptive(),
            period_tolerance: 1e-6,
            max_time: 1000.0,
            max_crossings: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitCycle {
    pub period: f64,
    /// `max |x_i|` over the last period.
    pub amplitude: Vec<f64>,
    /// Section crossing times, oldest first.
    pub crossings: Vec<f64>,
    pub state_at_section: Vec<f64>,
}

struct Sample {
    t: f64,
    x: Vec<f64>,
    v: Vec<f64>,
}

/// Integrates from `seed` until the return time to `section` settles.
pub fn limit_cycle(
    field: &VectorField,
    seed: &[f64],
    section: &Section,
    options: &CycleOptions,
) -> Result<LimitCycle, IntegrateError> {
    if field.dimension() != 2 {
        return Err(IntegrateError::Dimension {
            expected: 2,
            got: field.dimension(),
        });
    }
    if section.coordinate >= 2 {
        return Err(IntegrateError::InvalidOptions(format!(
            "section coordinate {} out of range",
            section.coordinate
        )));
    }
    if !(options.period_tolerance > 0.0 && options.max_time > 0.0) {
        return Err(IntegrateError::InvalidOptions(
            "period tolerance and time budget must be positive".into(),
        ));
    }
    let mut engine = Engine::new(field, seed, options.method)?;
    let c = section.coordinate;
    let g = |x: &[f64]| x[c] - section.level;
    let mut crossings: Vec<(f64, Vec<f64>)> = Vec::new();
    // steps since the step holding the previous crossing
    let mut buffer: Vec<Sample> = vec![Sample {
        t: engine.t,
        x: engine.x.clone(),
        v: engine.v.clone(),
    }];
    let mut periods = Vec::new();
    while engine.t < options.max_time && crossings.len() < options.max_crossings {
        let prev = buffer.last().expect("buffer holds the current step");
        let (t0, x0, v0) = (prev.t, prev.x.clone(), prev.v.clone());
        engine.advance(options.max_time)?;
        let (g0, g1) = (g(&x0), g(&engine.x));
        buffer.push(Sample {
            t: engine.t,
            x: engine.x.clone(),
            v: engine.v.clone(),
        });
        let hit = match section.direction {
            Direction::Rising => g0 < 0.0 && g1 >= 0.0,
            Direction::Falling => g0 > 0.0 && g1 <= 0.0,
        };
        if !hit {
            continue;
        }
        let (t1, x1, v1) = (engine.t, engine.x.clone(), engine.v.clone());
        let at = |t: f64| hermite(t0, t1, &x0, &x1, &v0, &v1, t);
        let tol = 1e-13 * (1.0 + section.level.abs());
        let (tc, _) = bisect(t0, t1, g0, tol, |t| Ok(g(&at(t))))
            .expect("section function cannot fail");
        crossings.push((tc, at(tc)));
        let n = crossings.len();
        if n >= 2 {
            periods.push(crossings[n - 1].0 - crossings[n - 2].0);
        }
        let m = periods.len();
        if m >= 2 && (periods[m - 1] - periods[m - 2]).abs() <= options.period_tolerance * periods[m - 1]
        {
            let (start, end) = (crossings[n - 2].0, tc);
            let mut amplitude = vec![0.0f64; 2];
            for w in buffer.windows(2) {
                let (a, b) = (w[0].t.max(start), w[1].t.min(end));
                if a > b {
                    continue;
                }
                for (i, amp) in amplitude.iter_mut().enumerate() {
                    let (lo, hi) =
                        hermite_range(w[0].t, w[1].t, w[0].x[i], w[1].x[i], w[0].v[i], w[1].v[i], a, b);
                    *amp = amp.max(lo.abs()).max(hi.abs());
                }
            }
            return Ok(LimitCycle {
                period: periods[m - 1],
                amplitude,
                crossings: crossings.iter().map(|c| c.0).collect(),
                state_at_section: crossings[n - 1].1.clone(),
            });
        }
        // keep only the step that contains this crossing
        let last = buffer.len() - 2;
        buffer.drain(..last);
    }
    Err(IntegrateError::NoCycle {
        crossings: crossings.len(),
        time: engine.t,
        periods: periods.iter().rev().take(5).rev().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, parse_model, ScalarExpr};
    use std::f64::consts::PI;

    fn rk4(step: f64) -> IntegrateOptions {
        IntegrateOptions {
            method: Method::Rk4 { step },
            ..Default::default()
        }
    }

    #[test]
    fn linear2_matches_exponentials() {
        let f = builtin("linear2", &[]).unwrap();
        for opts in [rk4(0.01), IntegrateOptions::default()] {
            let t = integrate(&f, &[1.0, 1.0], 1.0, &opts).unwrap();
            let end = t.last_state().unwrap();
            assert!((end[0] - (-1f64).exp()).abs() < 1e-6);
            assert!((end[1] - (-2f64).exp()).abs() < 1e-6);
            assert_eq!(*t.times.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = builtin("linear2", &[]).unwrap();
        let err = |h: f64| {
            let t = integrate(&f, &[1.0, 1.0], 1.0, &rk4(h)).unwrap();
            let end = t.last_state().unwrap();
            ((end[0] - (-1f64).exp()).powi(2) + (end[1] - (-2f64).exp()).powi(2)).sqrt()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((14.0..=18.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn harmonic_returns_after_full_turn() {
        let f = builtin("harmonic", &[]).unwrap();
        let t = integrate(&f, &[1.0, 0.0], 2.0 * PI, &IntegrateOptions::default()).unwrap();
        let end = t.last_state().unwrap();
        assert!((end[0] - 1.0).abs() < 1e-6 && end[1].abs() < 1e-6);
        for w in t.times.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!(t.stats.accepted > 0);
    }

    #[test]
    fn harmonic_radius_is_conserved() {
        let f = builtin("harmonic", &[]).unwrap();
        let opts = IntegrateOptions {
            method: Method::adaptive_with(1e-10, 1e-12),
            ..Default::default()
        };
        let t = integrate(&f, &[1.0, 0.0], 100.0, &opts).unwrap();
        let drift = t
            .states
            .iter()
            .map(|s| (s[0] * s[0] + s[1] * s[1] - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-8, "{drift}");
    }

    #[test]
    fn lorenz_stays_in_box() {
        let f = builtin("lorenz", &[]).unwrap();
        let opts = IntegrateOptions {
            transient: 10.0,
            recording: Recording::Uniform(0.01),
            ..Default::default()
        };
        let t = integrate(&f, &[1.0, 1.0, 1.0], 50.0, &opts).unwrap();
        assert_eq!(t.times[0], 10.0);
        assert_eq!(t.len(), 4001);
        for s in &t.states {
            assert!(s[0].abs() <= 25.0 && s[1].abs() <= 35.0 && (0.0..=55.0).contains(&s[2]));
        }
    }

    #[test]
    fn invalid_inputs() {
        let f = builtin("harmonic", &[]).unwrap();
        let o = IntegrateOptions::default();
        assert!(matches!(
            integrate(&f, &[1.0, 0.0], 0.0, &o),
            Err(IntegrateError::InvalidDuration(_))
        ));
        assert!(matches!(
            integrate(&f, &[f64::NAN, 0.0], 1.0, &o),
            Err(IntegrateError::NonFiniteInitial)
        ));
        assert!(integrate(&f, &[1.0], 1.0, &o).is_err());
        assert!(integrate(&f, &[1.0, 0.0], 1.0, &rk4(-0.1)).is_err());
    }

    #[test]
    fn divergence_reports_last_valid_time() {
        let f = parse_model("dim=2; dx/dt = x^2; dy/dt = 0").unwrap();
        match integrate(&f, &[1.0, 0.0], 2.0, &rk4(0.01)) {
            Err(IntegrateError::NonFinite { last_time }) => assert!(last_time > 0.9 && last_time < 1.1),
            other => panic!("{other:?}"),
        }
        match integrate(&f, &[1.0, 0.0], 2.0, &IntegrateOptions::default()) {
            Err(IntegrateError::StepUnderflow { time, .. })
            | Err(IntegrateError::NonFinite { last_time: time }) => assert!((time - 1.0).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crossing_events() {
        let f = builtin("harmonic", &[]).unwrap();
        let t = integrate(&f, &[1.0, 0.0], PI, &IntegrateOptions::default()).unwrap();
        let x = ScalarExpr::parse("x", 2, &[]).unwrap();
        let ev = find_zero_crossings(&x, &t).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0].time - PI / 2.0).abs() < 1e-8);
        assert_eq!(ev[0].direction, Direction::Falling);
        assert!(ev[0].value.abs() <= 1e-10);

        let positive = ScalarExpr::parse("x^2 + y^2 + 1", 2, &[]).unwrap();
        assert!(find_zero_crossings(&positive, &t).unwrap().is_empty());
    }

    #[test]
    fn uniform_recording_spacing() {
        let f = builtin("harmonic", &[]).unwrap();
        let opts = IntegrateOptions {
            recording: Recording::Uniform(0.1),
            ..Default::default()
        };
        let t = integrate(&f, &[1.0, 0.0], 1.0, &opts).unwrap();
        assert_eq!(t.len(), 11);
        for (k, (ti, s)) in t.times.iter().zip(&t.states).enumerate() {
            assert!((ti - 0.1 * k as f64).abs() < 1e-12);
            assert!((s[0] - ti.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_cycle() {
        let f = builtin("harmonic", &[]).unwrap();
        let section = Section {
            coordinate: 0,
            level: 0.0,
            direction: Direction::Rising,
        };
        let c = limit_cycle(&f, &[1.0, 0.0], &section, &CycleOptions::default()).unwrap();
        assert!((c.period - 2.0 * PI).abs() < 1e-6);
        assert!((c.amplitude[0] - 1.0).abs() < 1e-6);
        assert!((c.amplitude[1] - 1.0).abs() < 1e-6);
        assert!((c.crossings[0] - 1.5 * PI).abs() < 1e-6);
    }

    #[test]
    fn no_cycle_for_decaying_flow() {
        let f = builtin("linear2", &[]).unwrap();
        let section = Section {
            coordinate: 0,
            level: 0.0,
            direction: Direction::Rising,
        };
        let opts = CycleOptions {
            max_time: 20.0,
            ..Default::default()
        };
        assert!(matches!(
            limit_cycle(&f, &[1.0, 1.0], &section, &opts),
            Err(IntegrateError::NoCycle { crossings: 0, .. })
        ));
    }

    #[test]
    fn hermite_range_finds_interior_extremum() {
        // cos on [0, 0.4] around its maximum at 0.2 shifted
        let (t0, t1) = (-0.2f64, 0.2f64);
        let (lo, hi) = hermite_range(t0, t1, t0.cos(), t1.cos(), -t0.sin(), -t1.sin(), t0, t1);
        assert!((hi - 1.0).abs() < 1e-4);
        assert!((lo - 0.2f64.cos()).abs() < 1e-12);
    }
}
