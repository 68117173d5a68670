//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or
//! configuration error, 3 runtime failure (integration, extraction, I/O).

pub mod figure;
pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::integrate::{integrate, IntegrateOptions, Method, Recording};
use crate::kinematics::kinematics_at;
use crate::levelset::{extract_levelset, sample_grid, Geometry};
use crate::manifold::{
    curvature, darboux_residual, torsion, Curvature, DarbouxResidual, LieDerivative,
    ManifoldError, ManifoldScalar, Torsion,
};
use crate::models::{builtin, parse_model, VectorField, BUILTIN_NAMES};
use figure::{FigureConfig, FIG1_BOUNDS, FIG1_RESOLUTION, FIG2_BOUNDS, FIG2_RESOLUTION};
use verify::{default_bounds, run_verify, VerifyConfig};

#[derive(Debug, Parser)]
#[command(name = "flowcurv", version, about = "Flow-curvature manifolds of 2-D and 3-D vector fields")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Builtin model (vdp, lorenz, harmonic, linear2) or model file path.
    #[arg(long)]
    model: Option<String>,
    /// Parameter override, repeatable.
    #[arg(long = "set", value_name = "K=V", value_parser = parse_set)]
    set: Vec<(String, f64)>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output file (directory for `figure`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Structured output.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Kinematics, curvature, torsion and the manifold scalar at a point.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        point: Vec<f64>,
    },
    /// Integrate a trajectory and write `t, coordinates, m, lie` as CSV.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        from: Vec<f64>,
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = 0.0)]
        transient: f64,
        /// Sampling interval; every accepted step when omitted.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_enum, default_value_t = MethodArg::Dp)]
        method: MethodArg,
        /// RK4 step.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 1e-9)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-12)]
        atol: f64,
    },
    /// Extract `{m = 0}` (or `{L_X m = 0}`) as CSV polylines or an OBJ mesh.
    Manifold {
        #[command(flatten)]
        common: Common,
        /// `lo:hi` per axis, comma separated.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_bounds)]
        bounds: Option<Bounds>,
        #[arg(long)]
        res: Option<usize>,
        /// Contour the Lie derivative of the manifold scalar instead.
        #[arg(long)]
        lie: bool,
    },
    /// Check the manifold identities on seeded random samples.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_bounds)]
        bounds: Option<Bounds>,
    },
    /// Write figure datasets into the `--out` directory.
    Figure {
        #[arg(value_enum)]
        which: FigureArg,
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_bounds)]
        bounds: Option<Bounds>,
        #[arg(long)]
        res: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Dp,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FigureArg {
    Fig1,
    Fig2,
}

#[derive(Clone, Debug, PartialEq)]
struct Bounds(Vec<(f64, f64)>);

fn parse_set(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected K=V, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_bounds(s: &str) -> Result<Bounds, String> {
    s.split(',')
        .map(|axis| {
            let (lo, hi) = axis
                .split_once(':')
                .ok_or_else(|| format!("expected lo:hi, got `{axis}`"))?;
            let lo: f64 = lo.trim().parse().map_err(|_| format!("bad bound `{lo}`"))?;
            let hi: f64 = hi.trim().parse().map_err(|_| format!("bad bound `{hi}`"))?;
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(format!("bounds `{axis}` are not increasing"));
            }
            Ok((lo, hi))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Bounds)
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
    Checks,
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Checks => 1,
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_model(common: &Common, default: Option<&str>) -> Result<(VectorField, String), Failure> {
    let source = common
        .model
        .as_deref()
        .or(default)
        .ok_or_else(|| Failure::Usage("--model is required".into()))?;
    let field = if BUILTIN_NAMES.contains(&source) {
        builtin(source, &common.set)
    } else {
        let text = fs::read_to_string(source)
            .map_err(|e| Failure::Usage(format!("cannot read model `{source}`: {e}")))?;
        parse_model(&text).and_then(|f| f.with_parameters(&common.set))
    }
    .map_err(|e| Failure::Usage(format!("model `{source}`: {e}")))?;
    Ok((field, source.to_string()))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| runtime(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn finish(mut w: Box<dyn Write>) -> Result<(), Failure> {
    w.flush().map_err(runtime)
}

fn check_point(field: &VectorField, p: &[f64], flag: &str) -> Result<(), Failure> {
    if p.len() != field.dimension() {
        return Err(Failure::Usage(format!(
            "{flag} needs {} coordinates, got {}",
            field.dimension(),
            p.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeReport {
    model: String,
    point: Vec<f64>,
    velocity: Vec<f64>,
    acceleration: Vec<f64>,
    jerk: Vec<f64>,
    snap: Vec<f64>,
    trace: f64,
    curvature: Option<Curvature>,
    torsion: Option<Torsion>,
    manifold: DarbouxResidual,
}

fn analyze(common: &Common, point: &[f64]) -> Result<(), Failure> {
    let (field, name) = load_model(common, None)?;
    check_point(&field, point, "--point")?;
    let b = kinematics_at(&field, point).map_err(runtime)?;
    let curv = match curvature(&field, point) {
        Ok(c) => Some(c),
        Err(ManifoldError::Equilibrium) => None,
        Err(e) => return Err(runtime(e)),
    };
    let tors = if field.dimension() == 3 {
        match torsion(&field, point) {
            Ok(t) => Some(t),
            Err(ManifoldError::DegenerateTorsion) => None,
            Err(e) => return Err(runtime(e)),
        }
    } else {
        None
    };
    let report = AnalyzeReport {
        model: name,
        point: point.to_vec(),
        velocity: b.velocity.iter().copied().collect(),
        acceleration: b.acceleration.iter().copied().collect(),
        jerk: b.jerk.iter().copied().collect(),
        snap: b.snap.iter().copied().collect(),
        trace: b.trace,
        curvature: curv,
        torsion: tors,
        manifold: darboux_residual(&field, point).map_err(runtime)?,
    };
    let mut w = open_out(common.out.as_deref())?;
    let io = |e: io::Error| runtime(e);
    if common.json {
        serde_json::to_writer_pretty(&mut w, &report).map_err(runtime)?;
        writeln!(w).map_err(io)?;
    } else {
        let vec = |v: &[f64]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
        let r = &report;
        let mut lines = vec![
            format!("model {}", r.model),
            format!("point {}", vec(&r.point)),
            format!("velocity {}", vec(&r.velocity)),
            format!("acceleration {}", vec(&r.acceleration)),
            format!("jerk {}", vec(&r.jerk)),
            format!("snap {}", vec(&r.snap)),
            format!("trace_j {}", r.trace),
        ];
        match r.curvature {
            Some(c) => lines.push(format!("curvature {} radius {}", c.kappa, c.radius)),
            None => lines.push("curvature undefined (equilibrium)".into()),
        }
        if field.dimension() == 3 {
            match r.torsion {
                Some(t) => lines.push(format!("torsion {} radius {}", t.tau, t.radius)),
                None => lines.push("torsion undefined".into()),
            }
        }
        let m = &r.manifold;
        lines.push(format!("m {}", m.value));
        lines.push(format!("lie_m {}", m.lie));
        lines.push(format!("residual {}", m.residual));
        lines.push(format!("expected_residual {}", m.expected));
        for l in lines {
            writeln!(w, "{l}").map_err(io)?;
        }
    }
    finish(w)
}

#[allow(clippy::too_many_arguments)]
fn trace(
    common: &Common,
    from: &[f64],
    duration: f64,
    transient: f64,
    dt: Option<f64>,
    method: MethodArg,
    step: f64,
    rtol: f64,
    atol: f64,
) -> Result<(), Failure> {
    let (field, _) = load_model(common, None)?;
    check_point(&field, from, "--from")?;
    for (flag, v) in [("--step", step), ("--rtol", rtol), ("--atol", atol)] {
        if !(v > 0.0) {
            return Err(Failure::Usage(format!("{flag} must be positive")));
        }
    }
    let opts = IntegrateOptions {
        method: match method {
            MethodArg::Dp => Method::adaptive_with(rtol, atol),
            MethodArg::Rk4 => Method::Rk4 { step },
        },
        transient,
        recording: dt.map_or(Recording::Steps, Recording::Uniform),
        ..Default::default()
    };
    let traj = integrate(&field, from, duration, &opts).map_err(|e| match e {
        crate::integrate::IntegrateError::InvalidDuration(_)
        | crate::integrate::IntegrateError::InvalidOptions(_) => Failure::Usage(e.to_string()),
        e => runtime(e),
    })?;
    let mut w = open_out(common.out.as_deref())?;
    output::write_trajectory_csv(&mut w, &field, &traj).map_err(runtime)?;
    finish(w)
}

fn manifold(
    common: &Common,
    bounds: Option<&Bounds>,
    res: Option<usize>,
    lie: bool,
) -> Result<(), Failure> {
    let (field, _) = load_model(common, None)?;
    let n = field.dimension();
    let (default_bounds, default_res) = if n == 2 {
        (FIG1_BOUNDS.to_vec(), FIG1_RESOLUTION)
    } else {
        (FIG2_BOUNDS.to_vec(), FIG2_RESOLUTION)
    };
    let bounds = bounds_or(bounds, default_bounds, n)?;
    let res = res.unwrap_or(default_res);
    if res < 2 {
        return Err(Failure::Usage("--res must be at least 2".into()));
    }
    let scalar = ManifoldScalar::new(&field);
    let set = if lie {
        let l = LieDerivative::new(&field, scalar);
        let grid = sample_grid(&l, &bounds, &vec![res; n]).map_err(runtime)?;
        extract_levelset(&grid, Some(&l)).map_err(runtime)?
    } else {
        let grid = sample_grid(&scalar, &bounds, &vec![res; n]).map_err(runtime)?;
        extract_levelset(&grid, Some(&scalar)).map_err(runtime)?
    };
    if set.is_empty() {
        eprintln!("warning: zero set is empty in the window");
    }
    let mut w = open_out(common.out.as_deref())?;
    match &set.geometry {
        Geometry::Polylines(p) => output::write_polylines_csv(&mut w, p),
        Geometry::Mesh(m) => output::write_obj(&mut w, m),
    }
    .map_err(runtime)?;
    finish(w)
}

fn bounds_or(
    given: Option<&Bounds>,
    default: Vec<(f64, f64)>,
    n: usize,
) -> Result<Vec<(f64, f64)>, Failure> {
    let b = given.map_or(default, |b| b.0.clone());
    if b.len() != n {
        return Err(Failure::Usage(format!("--bounds needs {n} axes, got {}", b.len())));
    }
    Ok(b)
}

fn verify(common: &Common, samples: usize, tol: f64, bounds: Option<&Bounds>) -> Result<(), Failure> {
    let (field, name) = load_model(common, None)?;
    let n = field.dimension();
    if samples == 0 || !(tol > 0.0) {
        return Err(Failure::Usage("--samples must be >= 1 and --tol > 0".into()));
    }
    let cfg = VerifyConfig {
        samples,
        seed: common.seed,
        tolerance: tol,
        bounds: bounds_or(bounds, default_bounds(n), n)?,
    };
    let report = run_verify(&field, &name, &cfg).map_err(runtime)?;
    let text = serde_json::to_string_pretty(&report).map_err(runtime)? + "\n";
    if let Some(path) = &common.out {
        fs::write(path, &text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    if common.json || common.out.is_none() {
        print!("{text}");
    } else {
        for c in &report.checks {
            println!(
                "{} {} max_error {} tolerance {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.max_error,
                c.tolerance
            );
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn figure(
    which: FigureArg,
    common: &Common,
    bounds: Option<&Bounds>,
    res: Option<usize>,
) -> Result<(), Failure> {
    let (default_model, default_bounds, default_res) = match which {
        FigureArg::Fig1 => ("vdp", FIG1_BOUNDS.to_vec(), FIG1_RESOLUTION),
        FigureArg::Fig2 => ("lorenz", FIG2_BOUNDS.to_vec(), FIG2_RESOLUTION),
    };
    let (field, _) = load_model(common, Some(default_model))?;
    let n = default_bounds.len();
    if field.dimension() != n {
        return Err(Failure::Usage(format!("{which:?} needs a {n}-dimensional model")));
    }
    let cfg = FigureConfig {
        bounds: bounds_or(bounds, default_bounds, n)?,
        resolution: res.unwrap_or(default_res),
    };
    if cfg.resolution < 2 {
        return Err(Failure::Usage("--res must be at least 2".into()));
    }
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let out = match which {
        FigureArg::Fig1 => figure::fig1(&field, &cfg, &dir),
        FigureArg::Fig2 => figure::fig2(&field, &cfg, &dir),
    }
    .map_err(runtime)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    for f in &out.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Analyze { common, point } => analyze(common, point),
        Command::Trace {
            common,
            from,
            duration,
            transient,
            dt,
            method,
            step,
            rtol,
            atol,
        } => trace(common, from, *duration, *transient, *dt, *method, *step, *rtol, *atol),
        Command::Manifold {
            common,
            bounds,
            res,
            lie,
        } => manifold(common, bounds.as_ref(), *res, *lie),
        Command::Verify {
            common,
            samples,
            tol,
            bounds,
        } => verify(common, *samples, *tol, bounds.as_ref()),
        Command::Figure {
            which,
            common,
            bounds,
            res,
        } => figure(*which, common, bounds.as_ref(), *res),
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::Checks => eprintln!("verification failed"),
            }
            f.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_bounds() {
        assert_eq!(parse_set("eps=0.1"), Ok(("eps".into(), 0.1)));
        assert!(parse_set("eps").is_err());
        assert!(parse_set("eps=abc").is_err());
        assert_eq!(
            parse_bounds("-3:3,-2.5:1").unwrap().0,
            vec![(-3.0, 3.0), (-2.5, 1.0)]
        );
        assert!(parse_bounds("3:-3").is_err());
        assert!(parse_bounds("1,2").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["flowcurv", "analyze", "--point", "1,1"]), 2);
        assert_eq!(run(["flowcurv", "analyze", "--model", "nope", "--point", "1,1"]), 2);
        assert_eq!(run(["flowcurv", "analyze", "--model", "vdp", "--point", "1,1,1"]), 2);
        assert_eq!(
            run(["flowcurv", "analyze", "--model", "vdp", "--set", "sigma=1", "--point", "1,1"]),
            2
        );
        assert_eq!(run(["flowcurv", "bogus"]), 2);
    }
}
