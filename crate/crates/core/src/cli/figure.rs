//! Datasets for the Van der Pol (fig1) and Lorenz (fig2) pictures.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::output::{write_obj, write_points_csv, write_polylines_csv, write_trajectory_csv};
use crate::integrate::{
    integrate, limit_cycle, CycleOptions, Direction, IntegrateError, IntegrateOptions, LimitCycle,
    Recording, Section, Trajectory,
};
use crate::levelset::{
    closest_point, extract_levelset, sample_grid, LevelSet, LevelSetError,
};
use crate::manifold::{LieDerivative, ManifoldScalar};
use crate::models::{StateFunction, VectorField};

#[derive(Debug, Error)]
pub enum FigureError {
    #[error("{0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
}

pub const FIG1_BOUNDS: [(f64, f64); 2] = [(-3.0, 3.0), (-3.0, 3.0)];
pub const FIG1_RESOLUTION: usize = 512;
pub const FIG2_BOUNDS: [(f64, f64); 3] = [(-25.0, 25.0), (-35.0, 35.0), (0.0, 55.0)];
pub const FIG2_RESOLUTION: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct FigureConfig {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: usize,
}

/// Files written and anything worth a warning.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FigureOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn write_file(
    dir: &Path,
    name: &str,
    out: &mut FigureOutput,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), FigureError> {
    let path = dir.join(name);
    let io_err = |source| FigureError::Io {
        path: path.clone(),
        source,
    };
    let file = File::create(&path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    out.files.push(path);
    Ok(())
}

fn zero_set<S: StateFunction>(
    scalar: &S,
    cfg: &FigureConfig,
    label: &str,
    out: &mut FigureOutput,
) -> Result<LevelSet, FigureError> {
    let res = vec![cfg.resolution; cfg.bounds.len()];
    let grid = sample_grid(scalar, &cfg.bounds, &res)?;
    let set = extract_levelset(&grid, Some(scalar))?;
    if set.is_empty() {
        out.warnings.push(format!("{label}: zero set is empty in the window"));
    }
    Ok(set)
}

/// The attracting cycle of a planar field: a section `x = 0` crossed
/// upward, seeded at `(2, 0)`.
pub fn planar_cycle(field: &VectorField) -> Result<LimitCycle, IntegrateError> {
    let section = Section {
        coordinate: 0,
        level: 0.0,
        direction: Direction::Rising,
    };
    limit_cycle(field, &[2.0, 0.0], &section, &CycleOptions::default())
}

/// One period of `cycle`, sampled 2000 times.
pub fn cycle_trajectory(field: &VectorField, cycle: &LimitCycle) -> Result<Trajectory, IntegrateError> {
    let opts = IntegrateOptions {
        recording: Recording::Uniform(cycle.period / 2000.0),
        ..Default::default()
    };
    integrate(field, &cycle.state_at_section, cycle.period, &opts)
}

pub fn singular_curve(x_range: (f64, f64), samples: usize) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|k| {
            let x = x_range.0 + (x_range.1 - x_range.0) * k as f64 / (samples - 1) as f64;
            vec![x, x * x * x / 3.0 - x]
        })
        .collect()
}

/// Largest Euclidean distance from samples of `y = x³/3 − x` with
/// `x ∈ [lo, hi]` to the zero set `{m₂ = 0}`.
pub fn singular_branch_distance(
    field: &VectorField,
    x_range: (f64, f64),
    samples: usize,
) -> Result<f64, LevelSetError> {
    let scalar = ManifoldScalar::new(field);
    let mut worst = 0.0f64;
    for p in singular_curve(x_range, samples) {
        let q = closest_point(&scalar, &p, 100)?;
        worst = worst.max((q[0] - p[0]).hypot(q[1] - p[1]));
    }
    Ok(worst)
}

/// Lorenz attractor from `(1, 1, 1)`: `t ∈ [10, 50]`, sampled every 0.01.
pub fn attractor(field: &VectorField) -> Result<Trajectory, IntegrateError> {
    let opts = IntegrateOptions {
        transient: 10.0,
        recording: Recording::Uniform(0.01),
        ..Default::default()
    };
    integrate(field, &[1.0, 1.0, 1.0], 50.0, &opts)
}

const FIG1_SCRIPT: &str = "set datafile separator ','
set key autotitle columnhead
set size ratio -1
set xrange [XLO:XHI]
set yrange [YLO:YHI]
plot 'manifold_curve.csv' using 2:3 with points pt 7 ps 0.2 lc rgb 'blue' title 'm = 0', \\
     'lie_zero.csv' using 2:3 with points pt 7 ps 0.2 lc rgb 'orange' title 'L_X m = 0', \\
     'singular_approx.csv' using 1:2 with lines lc rgb 'green' title 'singular approximation', \\
     'limit_cycle.csv' using 2:3 with lines lw 2 lc rgb 'red' title 'limit cycle'
";

const FIG2_SCRIPT: &str = "set datafile separator ','
set key autotitle columnhead
set xrange [XLO:XHI]
set yrange [YLO:YHI]
set zrange [ZLO:ZHI]
set view 70, 30
splot 'attractor.csv' using 2:3:4 with lines lc rgb 'red' title 'attractor'
# meshes: torsion_manifold.obj, lie_manifold.obj
";

fn script(template: &str, bounds: &[(f64, f64)]) -> String {
    let mut s = template.to_string();
    for (axis, &(lo, hi)) in ["X", "Y", "Z"].iter().zip(bounds) {
        s = s
            .replace(&format!("{axis}LO"), &lo.to_string())
            .replace(&format!("{axis}HI"), &hi.to_string());
    }
    s
}

fn check_dimension(field: &VectorField, cfg: &FigureConfig, n: usize) -> Result<(), FigureError> {
    if field.dimension() != n || cfg.bounds.len() != n {
        return Err(FigureError::Config(format!(
            "figure needs a {n}-dimensional model and {n} bounds"
        )));
    }
    if cfg.resolution < 2 {
        return Err(FigureError::Config("resolution must be at least 2".into()));
    }
    Ok(())
}

pub fn fig1(field: &VectorField, cfg: &FigureConfig, dir: &Path) -> Result<FigureOutput, FigureError> {
    check_dimension(field, cfg, 2)?;
    let mut out = FigureOutput::default();
    let cycle = planar_cycle(field)?;
    let traj = cycle_trajectory(field, &cycle)?;
    write_file(dir, "limit_cycle.csv", &mut out, |w| write_trajectory_csv(w, field, &traj))?;

    let scalar = ManifoldScalar::new(field);
    let curve = zero_set(&scalar, cfg, "manifold_curve", &mut out)?;
    write_file(dir, "manifold_curve.csv", &mut out, |w| {
        write_polylines_csv(w, curve.polylines())
    })?;

    let singular = singular_curve(cfg.bounds[0], 1001);
    write_file(dir, "singular_approx.csv", &mut out, |w| {
        write_points_csv(w, &["x", "y"], &singular)
    })?;

    let lie = LieDerivative::new(field, scalar);
    let lie_set = zero_set(&lie, cfg, "lie_zero", &mut out)?;
    write_file(dir, "lie_zero.csv", &mut out, |w| {
        write_polylines_csv(w, lie_set.polylines())
    })?;

    let text = script(FIG1_SCRIPT, &cfg.bounds);
    write_file(dir, "fig1.gp", &mut out, |w| w.write_all(text.as_bytes()))?;
    Ok(out)
}

pub fn fig2(field: &VectorField, cfg: &FigureConfig, dir: &Path) -> Result<FigureOutput, FigureError> {
    check_dimension(field, cfg, 3)?;
    let mut out = FigureOutput::default();
    let traj = attractor(field)?;
    write_file(dir, "attractor.csv", &mut out, |w| write_trajectory_csv(w, field, &traj))?;

    let scalar = ManifoldScalar::new(field);
    let surface = zero_set(&scalar, cfg, "torsion_manifold", &mut out)?;
    let empty = Default::default();
    write_file(dir, "torsion_manifold.obj", &mut out, |w| {
        write_obj(w, surface.mesh().unwrap_or(&empty))
    })?;

    let lie = LieDerivative::new(field, scalar);
    let lie_surface = zero_set(&lie, cfg, "lie_manifold", &mut out)?;
    write_file(dir, "lie_manifold.obj", &mut out, |w| {
        write_obj(w, lie_surface.mesh().unwrap_or(&empty))
    })?;

    let text = script(FIG2_SCRIPT, &cfg.bounds);
    write_file(dir, "fig2.gp", &mut out, |w| w.write_all(text.as_bytes()))?;
    Ok(out)
}
