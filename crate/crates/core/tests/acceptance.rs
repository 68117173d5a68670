//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowcurv::cli::figure::{
    attractor, cycle_trajectory, planar_cycle, singular_branch_distance, FIG2_BOUNDS,
    FIG2_RESOLUTION,
};
use flowcurv::cli::verify::{run_verify, VerifyConfig};
use flowcurv::integrate::{integrate, IntegrateOptions, Method};
use flowcurv::levelset::{extract_levelset, sample_grid};
use flowcurv::manifold::{darboux_residual, lie_derivative, manifold_scalar, ManifoldScalar};
use flowcurv::models::{builtin, ScalarExpr, StateFunction, VectorField};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn vdp(eps: f64) -> VectorField {
    builtin("vdp", &[("eps".into(), eps)]).unwrap()
}

fn points(seed: u64, bounds: &[(f64, f64)], n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect())
        .collect()
}

fn phi8(x: f64, y: f64, eps: f64) -> f64 {
    9.0 * y.powi(2) + (9.0 * x + 3.0 * x.powi(3)) * y + 6.0 * x.powi(4) - 2.0 * x.powi(6)
        + 9.0 * x.powi(2) * eps
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let eps = 0.05;
    let f = vdp(eps);
    let mut worst = 0.0f64;
    for p in points(1, &[(-3.0, 3.0); 2], 1000) {
        let m = manifold_scalar(&f, &p).unwrap();
        let phi = phi8(p[0], p[1], eps);
        worst = worst.max((phi + 9.0 * eps * eps * m).abs() / (1.0 + phi.abs()));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(1),
        format!("max error {worst:e} (tol 1e-9), {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let eps = 0.05;
    let f = vdp(eps);
    let phi = ScalarExpr::parse(
        "9*y^2 + (9*x + 3*x^3)*y + 6*x^4 - 2*x^6 + 9*x^2*eps",
        2,
        &[("eps".into(), eps)],
    )
    .unwrap();
    let mut worst = 0.0f64;
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points(1, &[(-3.0, 3.0); 2], 1000) {
        let (x, y) = (p[0], p[1]);
        let lie = lie_derivative(&f, &phi, &p).unwrap();
        let trace = (1.0 - x * x) / eps;
        let lhs = lie - trace * phi8(x, y, eps);
        let rhs = 2.0 * x * x / eps * (x.powi(3) - 3.0 * x - 3.0 * y).powi(2);
        let scale = 1.0 + lie.abs() + (trace * phi8(x, y, eps)).abs();
        worst = worst.max((lhs - rhs).abs() / scale);
        if lhs.abs() > 1e-6 * scale {
            let unsquared = 2.0 * x * x / eps * (-3.0 * x - 3.0 * y + x.powi(3));
            rmin = rmin.min(unsquared / lhs);
            rmax = rmax.max(unsquared / lhs);
        }
    }
    let report = run_verify(
        &f,
        "vdp",
        &VerifyConfig {
            samples: 1000,
            seed: 42,
            tolerance: 1e-8,
            bounds: vec![(-3.0, 3.0); 2],
        },
    )
    .unwrap();
    let rejected = report
        .checks
        .iter()
        .any(|c| c.name == "unsquared_remainder_rejected" && c.passed);
    outcome(
        worst <= 1e-8 && rmax - rmin > 1e-3 && rejected,
        format!("max relative error {worst:e}; unsquared/actual ratio spans [{rmin:.3e}, {rmax:.3e}]"),
    )
}

fn criterion_3() -> Outcome {
    let eps = 0.05;
    let f = vdp(eps);
    let mut worst = 0.0f64;
    for p in points(3, &[(-3.0, 3.0); 2], 1000) {
        let r = darboux_residual(&f, &p).unwrap();
        let (x, y) = (p[0], p[1]);
        let big_f = x + y - x.powi(3) / 3.0;
        let oracle = -2.0 * x * x * big_f * big_f / eps.powi(3);
        let bound = 1.0 + (r.trace * r.value).abs();
        worst = worst
            .max((r.residual - r.expected).abs() / bound)
            .max((r.residual - oracle).abs() / bound);
    }
    let mut linear = 0.0f64;
    for name in ["harmonic", "linear2"] {
        let g = builtin(name, &[]).unwrap();
        for p in points(4, &[(-3.0, 3.0); 2], 200) {
            linear = linear.max(darboux_residual(&g, &p).unwrap().residual.abs());
        }
    }
    outcome(
        worst <= 1e-8 && linear <= 1e-12,
        format!("vdp max {worst:e} (tol 1e-8), linear fields max |residual| {linear:e}"),
    )
}

fn rk4_flow(f: &VectorField, x: &[f64], t: f64, n: usize) -> Vec<f64> {
    let h = t / n as f64;
    let mut x = x.to_vec();
    let add = |x: &[f64], k: &[f64], c: f64| x.iter().zip(k).map(|(a, b)| a + c * b).collect::<Vec<_>>();
    for _ in 0..n {
        let k1 = f.eval(&x).unwrap();
        let k2 = f.eval(&add(&x, &k1, h / 2.0)).unwrap();
        let k3 = f.eval(&add(&x, &k2, h / 2.0)).unwrap();
        let k4 = f.eval(&add(&x, &k3, h)).unwrap();
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

fn criterion_4() -> Outcome {
    let f = builtin("lorenz", &[]).unwrap();
    let bounds = [(-20.0, 20.0), (-20.0, 20.0), (0.0, 50.0)];
    let pts = points(5, &bounds, 1000);
    let mut worst = 0.0f64;
    for p in &pts {
        let r = darboux_residual(&f, p).unwrap();
        let scale = (r.lie.abs() + (r.trace * r.value).abs()).max(1.0);
        worst = worst.max((r.residual - r.expected).abs() / scale);
    }
    let m = ManifoldScalar::new(&f);
    let (mut e1, mut e2) = (0.0, 0.0);
    let h = 1e-3;
    for p in &pts[..10] {
        let lie = lie_derivative(&f, &m, p).unwrap();
        let d = |h: f64| {
            (m.value(&rk4_flow(&f, p, h, 50)).unwrap() - m.value(&rk4_flow(&f, p, -h, 50)).unwrap())
                / (2.0 * h)
        };
        e1 += (d(h) - lie).abs();
        e2 += (d(h / 2.0) - lie).abs();
    }
    let order = (e1 / e2).log2();
    outcome(
        worst <= 1e-8 && order >= 1.9,
        format!("max relative error {worst:e} (tol 1e-8), finite-difference order {order:.3}"),
    )
}

fn criterion_5() -> Outcome {
    let f = vdp(0.05);
    let m = ManifoldScalar::new(&f);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let x = -3.0 + 6.0 * (k as f64 + 0.5) / 100.0;
        let p = [x, x.powi(3) / 3.0 - x];
        let (value, grad) = m.value_and_gradient(&p).unwrap();
        let v = f.eval(&p).unwrap();
        let lie = grad[0] * v[0] + grad[1] * v[1];
        let trace = (1.0 - x * x) / 0.05;
        let scale = (grad[0].hypot(grad[1])) * v[0].hypot(v[1]) + (trace * value).abs();
        let r = (lie - trace * value).abs();
        if r > 0.0 {
            worst = worst.max(r / scale);
        }
    }
    outcome(worst <= 1e-8, format!("max scaled residual {worst:e} (tol 1e-8)"))
}

/// Dense samples of both real roots in `y` of the quadratic `φ₈ = 0`.
fn zero_set_samples(eps: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for k in 0..=200_000 {
        let x = 1.0 + 1.5 * k as f64 / 200_000.0;
        let b = 9.0 * x + 3.0 * x.powi(3);
        let c = 6.0 * x.powi(4) - 2.0 * x.powi(6) + 9.0 * x * x * eps;
        let disc = b * b - 36.0 * c;
        if disc >= 0.0 {
            out.push([x, (-b + disc.sqrt()) / 18.0]);
            out.push([x, (-b - disc.sqrt()) / 18.0]);
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut d = Vec::new();
    let mut oracle_gap = 0.0f64;
    for eps in [0.1, 0.05, 0.01] {
        let dist = singular_branch_distance(&vdp(eps), (1.2, 2.0), 81).unwrap();
        let cloud = zero_set_samples(eps);
        let oracle = (0..81)
            .map(|k| {
                let x = 1.2 + 0.8 * k as f64 / 80.0;
                let y = x.powi(3) / 3.0 - x;
                cloud
                    .iter()
                    .map(|q| (q[0] - x).hypot(q[1] - y))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        oracle_gap = oracle_gap.max((dist - oracle).abs());
        d.push((eps, dist));
    }
    let decreasing = d.windows(2).all(|w| w[1].1 < w[0].1);
    let ratios: Vec<f64> = d.iter().map(|(e, v)| v / e).collect();
    let spread = ratios.iter().cloned().fold(0.0, f64::max)
        / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        decreasing && spread <= 5.0 && oracle_gap < 1e-3,
        format!(
            "d = {:?}, d/eps spread {spread:.3}, gap to sampled roots {oracle_gap:.1e}",
            d.iter().map(|(_, v)| format!("{v:.5}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let f = vdp(0.05);
    let cycle = planar_cycle(&f).unwrap();
    let traj = cycle_trajectory(&f, &cycle).unwrap();
    let sampled = traj.states.iter().map(|s| s[0].abs()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let amplitude = cycle.amplitude[0];
    let target = 3.0 - 2.0 * 2f64.ln();
    let amp_ok = (1.95..=2.15).contains(&amplitude) && (sampled - amplitude).abs() < 1e-3;
    let period_ok = (cycle.period - target).abs() <= 0.15 * target;
    outcome(
        amp_ok && period_ok && elapsed < Duration::from_secs(10),
        format!(
            "max|x| {amplitude:.4} ({}), period {:.4} vs {target:.4} ±15% ({}), {elapsed:.2?}",
            if amp_ok { "ok" } else { "out of range" },
            cycle.period,
            if period_ok { "ok" } else { "out of range" },
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let f = builtin("lorenz", &[]).unwrap();
    let m = ManifoldScalar::new(&f);
    let res = vec![FIG2_RESOLUTION; 3];
    let grid = sample_grid(&m, &FIG2_BOUNDS, &res).unwrap();
    let set = extract_levelset(&grid, None).unwrap();
    let mesh = set.mesh().unwrap();
    let diag = grid.cell_diagonal();
    let c = (8.0f64 / 3.0 * 27.0).sqrt();
    let targets = [[0.0, 0.0, 0.0], [c, c, 27.0], [-c, -c, 27.0]];
    let nearest: Vec<f64> = targets
        .iter()
        .map(|t| {
            mesh.vertices
                .iter()
                .map(|v| ((v[0] - t[0]).powi(2) + (v[1] - t[1]).powi(2) + (v[2] - t[2]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let traj = attractor(&f).unwrap();
    let in_box = traj.states.iter().all(|s| {
        s.iter()
            .zip(FIG2_BOUNDS.iter())
            .all(|(x, &(lo, hi))| *x >= lo && *x <= hi)
    });
    let elapsed = start.elapsed();
    outcome(
        nearest.iter().all(|&d| d <= diag) && in_box && elapsed < Duration::from_secs(60),
        format!(
            "nearest vertex distances {:?} (cell diagonal {diag:.3}), attractor in box: {in_box}, {} triangles, {elapsed:.2?}",
            nearest.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>(),
            mesh.triangles.len()
        ),
    )
}

fn criterion_9() -> Outcome {
    let linear2 = builtin("linear2", &[]).unwrap();
    let rk4_err = |h: f64| {
        let opts = IntegrateOptions {
            method: Method::Rk4 { step: h },
            ..Default::default()
        };
        let t = integrate(&linear2, &[1.0, 1.0], 1.0, &opts).unwrap();
        let e = t.last_state().unwrap();
        (e[0] - (-1f64).exp()).hypot(e[1] - (-2f64).exp())
    };
    let rk4_ratio = rk4_err(0.1) / rk4_err(0.05);

    let harmonic = builtin("harmonic", &[]).unwrap();
    let opts = IntegrateOptions {
        method: Method::adaptive_with(1e-10, 1e-12),
        ..Default::default()
    };
    let t = integrate(&harmonic, &[1.0, 0.0], 100.0, &opts).unwrap();
    let m = ManifoldScalar::new(&harmonic);
    let m0 = m.value(&t.states[0]).unwrap();
    let drift = t
        .states
        .iter()
        .map(|s| (m.value(s).unwrap() - m0).abs() / m0.abs())
        .fold(0.0, f64::max);

    let contour = |dim: usize, res: usize| {
        let (text, bounds) = if dim == 2 {
            ("x^2 + y^2 - 1", vec![(-2.0, 2.0); 2])
        } else {
            ("x^2 + y^2 + z^2 - 1", vec![(-1.5, 1.5); 3])
        };
        let s = ScalarExpr::parse(text, dim, &[]).unwrap();
        let grid = sample_grid(&s, &bounds, &vec![res; dim]).unwrap();
        let set = extract_levelset(&grid, Some(&s)).unwrap();
        let err = set
            .vertices()
            .iter()
            .map(|v| (v.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max);
        (err, grid.cell_diagonal())
    };
    let (c1, cd1) = contour(2, 128);
    let (c2, cd2) = contour(2, 256);
    let (s1, sd1) = contour(3, 32);
    let (s2, sd2) = contour(3, 64);
    let ok = (14.0..=18.0).contains(&rk4_ratio)
        && drift <= 1e-6
        && c1 <= cd1
        && c2 <= cd2
        && s1 <= sd1
        && s2 <= sd2
        && (3.0..=5.0).contains(&(c1 / c2))
        && (3.0..=5.0).contains(&(s1 / s2));
    outcome(
        ok,
        format!(
            "rk4 ratio {rk4_ratio:.3}, m drift {drift:e}, circle ratio {:.3}, sphere ratio {:.3}",
            c1 / c2,
            s1 / s2
        ),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_flowcurv"))
            .args(["verify", "--model", "vdp", "--samples", "1000", "--seed", "42", "--tol", "1e-8", "--out"])
            .arg(&path)
            .output()
            .unwrap()
            .status;
        (status.code(), std::fs::read(&path).unwrap_or_default())
    };
    let (s1, a) = run("a.json");
    let (s2, b) = run("b.json");
    outcome(
        s1 == Some(0) && s2 == Some(0) && !a.is_empty() && a == b,
        format!("exit codes {s1:?}/{s2:?}, {} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 closed-form manifold proportionality", criterion_1),
        ("2 corrected Darboux remainder", criterion_2),
        ("3 planar identity", criterion_3),
        ("4 spatial identity", criterion_4),
        ("5 vanishing on the cubic nullcline", criterion_5),
        ("6 slow-manifold O(eps) trend", criterion_6),
        ("7 Van der Pol cycle", criterion_7),
        ("8 Lorenz torsion manifold", criterion_8),
        ("9 numerics", criterion_9),
        ("10 reproducibility", criterion_10),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
