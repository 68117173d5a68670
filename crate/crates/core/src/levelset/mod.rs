//! Zero sets of scalar functions on regular grids.
//!
//! Planar grids are contoured with marching squares into polylines, spatial
//! grids with marching cubes into triangle meshes. Both use linear
//! interpolation along cell edges and treat `value < 0` as inside.

mod tables;

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::models::{EvalError, StateFunction};
use tables::{CORNERS, EDGES, EDGE_TABLE, TRIANGLE_TABLE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevelSetError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("evaluation failed at lattice index {index:?}: {source}")]
    Sample {
        index: Vec<usize>,
        #[source]
        source: EvalError,
    },
    #[error("gradient vanishes at {0:?}")]
    VanishingGradient(Vec<f64>),
    #[error("Newton projection did not converge in {iterations} iterations (|m| = {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Samples of a scalar on the lattice `lo + (hi − lo)·i/n` per axis.
///
/// Values are stored with the x index varying fastest:
/// `values[i + (nx+1)·(j + (ny+1)·k)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    bounds: Vec<(f64, f64)>,
    resolution: Vec<usize>,
    values: Vec<f64>,
}

fn check_layout(bounds: &[(f64, f64)], resolution: &[usize]) -> Result<(), LevelSetError> {
    if !(2..=3).contains(&bounds.len()) || bounds.len() != resolution.len() {
        return Err(LevelSetError::InvalidGrid(format!(
            "need 2 or 3 axes with matching resolution, got {} bounds and {} resolutions",
            bounds.len(),
            resolution.len()
        )));
    }
    for (axis, (&(lo, hi), &n)) in bounds.iter().zip(resolution).enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(LevelSetError::InvalidGrid(format!(
                "axis {axis}: bounds [{lo}, {hi}] are not increasing"
            )));
        }
        if n < 2 {
            return Err(LevelSetError::InvalidGrid(format!(
                "axis {axis}: resolution {n} is below 2"
            )));
        }
    }
    Ok(())
}

impl ScalarGrid {
    pub fn new(
        bounds: Vec<(f64, f64)>,
        resolution: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<ScalarGrid, LevelSetError> {
        check_layout(&bounds, &resolution)?;
        let count: usize = resolution.iter().map(|n| n + 1).product();
        if values.len() != count {
            return Err(LevelSetError::InvalidGrid(format!(
                "expected {count} values, got {}",
                values.len()
            )));
        }
        Ok(ScalarGrid {
            bounds,
            resolution,
            values,
        })
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_size(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(&self.resolution)
            .map(|(&(lo, hi), &n)| (hi - lo) / n as f64)
            .collect()
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.cell_size().iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    pub fn linear_index(&self, index: &[usize]) -> usize {
        let mut flat = 0;
        for axis in (0..self.dimension()).rev() {
            flat = flat * (self.resolution[axis] + 1) + index[axis];
        }
        flat
    }

    pub fn lattice_index(&self, mut flat: usize) -> Vec<usize> {
        self.resolution
            .iter()
            .map(|&n| {
                let i = flat % (n + 1);
                flat /= n + 1;
                i
            })
            .collect()
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        let n = self.resolution[axis];
        if i == n {
            hi
        } else {
            lo + (hi - lo) * i as f64 / n as f64
        }
    }

    pub fn point(&self, index: &[usize]) -> Vec<f64> {
        index
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.coordinate(axis, i))
            .collect()
    }

    pub fn value(&self, index: &[usize]) -> f64 {
        self.values[self.linear_index(index)]
    }
}

/// Evaluates `scalar` at every lattice point.
pub fn sample_grid<S: StateFunction + ?Sized>(
    scalar: &S,
    bounds: &[(f64, f64)],
    resolution: &[usize],
) -> Result<ScalarGrid, LevelSetError> {
    check_layout(bounds, resolution)?;
    if scalar.dimension() != bounds.len() {
        return Err(LevelSetError::InvalidGrid(format!(
            "scalar is {}-dimensional but grid has {} axes",
            scalar.dimension(),
            bounds.len()
        )));
    }
    let mut grid = ScalarGrid {
        bounds: bounds.to_vec(),
        resolution: resolution.to_vec(),
        values: Vec::new(),
    };
    let count: usize = resolution.iter().map(|n| n + 1).product();
    let results: Vec<Result<f64, EvalError>> = (0..count)
        .into_par_iter()
        .map(|flat| scalar.value(&grid.point(&grid.lattice_index(flat))))
        .collect();
    let mut values = Vec::with_capacity(count);
    for (flat, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(source) => {
                return Err(LevelSetError::Sample {
                    index: grid.lattice_index(flat),
                    source,
                })
            }
        }
    }
    grid.values = values;
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    /// The last point connects back to the first.
    pub closed: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Edges used by exactly one triangle.
    pub fn boundary_edges(&self) -> usize {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        count.values().filter(|&&c| c == 1).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Polylines(Vec<Polyline>),
    Mesh(Mesh),
}

/// Extracted zero set together with the grid it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
    pub geometry: Geometry,
}

impl LevelSet {
    pub fn polylines(&self) -> &[Polyline] {
        match &self.geometry {
            Geometry::Polylines(p) => p,
            Geometry::Mesh(_) => &[],
        }
    }

    pub fn mesh(&self) -> Option<&Mesh> {
        match &self.geometry {
            Geometry::Mesh(m) => Some(m),
            Geometry::Polylines(_) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.geometry {
            Geometry::Polylines(p) => p.is_empty(),
            Geometry::Mesh(m) => m.triangles.is_empty(),
        }
    }

    /// Every emitted vertex, flattened to coordinate vectors.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        match &self.geometry {
            Geometry::Polylines(p) => p
                .iter()
                .flat_map(|l| l.points.iter().map(|q| q.to_vec()))
                .collect(),
            Geometry::Mesh(m) => m.vertices.iter().map(|v| v.to_vec()).collect(),
        }
    }
}

/// Extracts `{value = 0}`. Planar saddle cells are resolved with `center`
/// evaluated at the cell centre when given, otherwise with the mean of the
/// four corners.
pub fn extract_levelset(
    grid: &ScalarGrid,
    center: Option<&dyn StateFunction>,
) -> Result<LevelSet, LevelSetError> {
    let geometry = if grid.dimension() == 2 {
        Geometry::Polylines(marching_squares(grid, center)?)
    } else {
        Geometry::Mesh(marching_cubes(grid))
    };
    Ok(LevelSet {
        bounds: grid.bounds.clone(),
        resolution: grid.resolution.clone(),
        geometry,
    })
}

fn crossing(p0: &[f64], p1: &[f64], v0: f64, v1: f64) -> Vec<f64> {
    let t = v0 / (v0 - v1);
    p0.iter().zip(p1).map(|(a, b)| a + t * (b - a)).collect()
}

/// Edge ids of the planar lattice: `2·flat` runs along x from lattice point
/// `flat`, `2·flat + 1` along y.
fn marching_squares(
    grid: &ScalarGrid,
    center: Option<&dyn StateFunction>,
) -> Result<Vec<Polyline>, LevelSetError> {
    let (nx, ny) = (grid.resolution[0], grid.resolution[1]);
    let id = |i: usize, j: usize, axis: usize| 2 * (i + (nx + 1) * j) + axis;

    let rows: Vec<Result<Vec<[usize; 2]>, LevelSetError>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let mut segments = Vec::new();
            for i in 0..nx {
                let v = [
                    grid.value(&[i, j]),
                    grid.value(&[i + 1, j]),
                    grid.value(&[i + 1, j + 1]),
                    grid.value(&[i, j + 1]),
                ];
                let case = v
                    .iter()
                    .enumerate()
                    .fold(0, |c, (k, &x)| if x < 0.0 { c | 1 << k } else { c });
                // bottom, right, top, left
                let e = [id(i, j, 0), id(i + 1, j, 1), id(i, j + 1, 0), id(i, j, 1)];
                let pairs: &[(usize, usize)] = match case {
                    0 | 15 => &[],
                    1 | 14 => &[(0, 3)],
                    2 | 13 => &[(0, 1)],
                    3 | 12 => &[(1, 3)],
                    4 | 11 => &[(1, 2)],
                    6 | 9 => &[(0, 2)],
                    7 | 8 => &[(2, 3)],
                    5 | 10 => {
                        let mid = match center {
                            Some(s) => {
                                let p = [
                                    0.5 * (grid.coordinate(0, i) + grid.coordinate(0, i + 1)),
                                    0.5 * (grid.coordinate(1, j) + grid.coordinate(1, j + 1)),
                                ];
                                s.value(&p).map_err(|source| LevelSetError::Sample {
                                    index: vec![i, j],
                                    source,
                                })?
                            }
                            None => 0.25 * v.iter().sum::<f64>(),
                        };
                        // joined corners are those sharing the centre's sign
                        if (mid < 0.0) == (case == 5) {
                            &[(0, 1), (2, 3)]
                        } else {
                            &[(0, 3), (1, 2)]
                        }
                    }
                    _ => unreachable!(),
                };
                segments.extend(pairs.iter().map(|&(a, b)| [e[a], e[b]]));
            }
            Ok(segments)
        })
        .collect();
    let mut segments = Vec::new();
    for r in rows {
        segments.extend(r?);
    }

    let position = |edge: usize| -> [f64; 2] {
        let flat = edge / 2;
        let (i, j) = (flat % (nx + 1), flat / (nx + 1));
        let (i1, j1) = if edge % 2 == 0 { (i + 1, j) } else { (i, j + 1) };
        let p = crossing(
            &grid.point(&[i, j]),
            &grid.point(&[i1, j1]),
            grid.value(&[i, j]),
            grid.value(&[i1, j1]),
        );
        [p[0], p[1]]
    };
    Ok(chain(&segments)
        .into_iter()
        .filter_map(|(edges, closed)| {
            let mut points: Vec<[f64; 2]> = edges.into_iter().map(position).collect();
            points.dedup();
            let mut closed = closed;
            if closed && points.len() > 1 && points.first() == points.last() {
                points.pop();
            }
            if points.len() < 2 {
                return None;
            }
            if points.len() < 3 {
                closed = false;
            }
            Some(Polyline { points, closed })
        })
        .collect())
}

/// Joins segments sharing an edge id into maximal chains. Open chains come
/// first, each started at its lowest-numbered free end.
fn chain(segments: &[[usize; 2]]) -> Vec<(Vec<usize>, bool)> {
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        for &e in seg {
            incident.entry(e).or_default().push(s);
        }
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();

    let walk = |start_seg: usize, start_edge: usize, used: &mut Vec<bool>| {
        let mut edges = vec![start_edge];
        let mut seg = start_seg;
        let mut at = start_edge;
        loop {
            used[seg] = true;
            let [a, b] = segments[seg];
            let next = if a == at { b } else { a };
            edges.push(next);
            at = next;
            match incident[&at].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        edges
    };

    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        for &e in &segments[s] {
            if incident[&e].len() == 1 {
                let edges = walk(s, e, &mut used);
                out.push((edges, false));
                break;
            }
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let edges = walk(s, segments[s][0], &mut used);
            let closed = edges.first() == edges.last();
            out.push((edges, closed));
        }
    }
    out
}

fn marching_cubes(grid: &ScalarGrid) -> Mesh {
    let (nx, ny, nz) = (grid.resolution[0], grid.resolution[1], grid.resolution[2]);
    let area_floor = {
        let h = grid.cell_size();
        1e-12 * h[0].max(h[1]).max(h[2]).powi(2)
    };

    let slabs: Vec<Vec<[[f64; 3]; 3]>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut tris = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    let idx: Vec<[usize; 3]> = CORNERS
                        .iter()
                        .map(|c| [i + c[0], j + c[1], k + c[2]])
                        .collect();
                    let vals: Vec<f64> = idx.iter().map(|p| grid.value(p)).collect();
                    let case = vals
                        .iter()
                        .enumerate()
                        .fold(0usize, |c, (b, &x)| if x < 0.0 { c | 1 << b } else { c });
                    if EDGE_TABLE[case] == 0 {
                        continue;
                    }
                    let mut at = [[0.0; 3]; 12];
                    for (e, &[a, b]) in EDGES.iter().enumerate() {
                        if EDGE_TABLE[case] & (1 << e) == 0 {
                            continue;
                        }
                        // interpolate from the lower lattice corner so that
                        // neighbouring cells produce bit-identical points
                        let (a, b) = if idx[a] <= idx[b] { (a, b) } else { (b, a) };
                        let p = crossing(&grid.point(&idx[a]), &grid.point(&idx[b]), vals[a], vals[b]);
                        at[e] = [p[0], p[1], p[2]];
                    }
                    for t in TRIANGLE_TABLE[case].chunks(3).take_while(|t| t[0] >= 0) {
                        tris.push([at[t[0] as usize], at[t[1] as usize], at[t[2] as usize]]);
                    }
                }
            }
            tris
        })
        .collect();

    let mut mesh = Mesh::default();
    let mut lookup: HashMap<[u64; 3], usize> = HashMap::new();
    for tri in slabs.into_iter().flatten() {
        let ids = tri.map(|p| {
            let key = p.map(|c| (c + 0.0).to_bits());
            *lookup.entry(key).or_insert_with(|| {
                mesh.vertices.push(p);
                mesh.vertices.len() - 1
            })
        });
        if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] {
            continue;
        }
        let u: Vec<f64> = (0..3).map(|c| tri[1][c] - tri[0][c]).collect();
        let w: Vec<f64> = (0..3).map(|c| tri[2][c] - tri[0][c]).collect();
        let n = [
            u[1] * w[2] - u[2] * w[1],
            u[2] * w[0] - u[0] * w[2],
            u[0] * w[1] - u[1] * w[0],
        ];
        let area = 0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if area <= area_floor {
            continue;
        }
        mesh.triangles.push(ids);
    }
    // vertices only referenced by dropped triangles are removed
    let mut remap = vec![usize::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    for t in &mut mesh.triangles {
        for v in t.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = vertices.len();
                vertices.push(mesh.vertices[*v]);
            }
            *v = remap[*v];
        }
    }
    mesh.vertices = vertices;
    mesh
}

/// Damped Newton along `∇m` until `|m| ≤ 1e-10·(1 + |m(x)|)`.
pub fn project_to_manifold<S: StateFunction + ?Sized>(
    scalar: &S,
    x: &[f64],
    max_iters: usize,
) -> Result<Vec<f64>, LevelSetError> {
    let mut p = x.to_vec();
    let (mut m, mut grad) = scalar.value_and_gradient(&p)?;
    let tol = 1e-10 * (1.0 + m.abs());
    for iteration in 0..=max_iters {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if !(g2 > 0.0 && g2.is_finite()) && (iteration == 0 || m.abs() > tol) {
            return Err(LevelSetError::VanishingGradient(p));
        }
        if m.abs() <= tol {
            return Ok(p);
        }
        if iteration == max_iters {
            break;
        }
        let mut lambda = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = p
                .iter()
                .zip(&grad)
                .map(|(x, g)| x - lambda * m * g / g2)
                .collect();
            if let Ok((mt, gt)) = scalar.value_and_gradient(&trial) {
                if mt.abs() < m.abs() {
                    break Some((trial, mt, gt));
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                break None;
            }
        };
        match accepted {
            Some((trial, mt, gt)) => {
                p = trial;
                m = mt;
                grad = gt;
            }
            None => {
                return Err(LevelSetError::NotConverged {
                    iterations: iteration,
                    residual: m.abs(),
                })
            }
        }
    }
    Err(LevelSetError::NotConverged {
        iterations: max_iters,
        residual: m.abs(),
    })
}

/// Point of `{m = 0}` nearest to `p`: a Newton projection refined by
/// re-projecting the foot of `p` on the tangent plane until the step
/// falls below `1e-12` relative.
pub fn closest_point<S: StateFunction + ?Sized>(
    scalar: &S,
    p: &[f64],
    max_iters: usize,
) -> Result<Vec<f64>, LevelSetError> {
    let mut q = project_to_manifold(scalar, p, max_iters)?;
    for _ in 0..max_iters {
        let (_, g) = scalar.value_and_gradient(&q)?;
        let gn = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(gn > 0.0 && gn.is_finite()) {
            return Err(LevelSetError::VanishingGradient(q));
        }
        let along: f64 = p.iter().zip(&q).zip(&g).map(|((a, b), c)| (a - b) * c / gn).sum();
        let foot: Vec<f64> = p.iter().zip(&g).map(|(a, c)| a - along * c / gn).collect();
        let next = project_to_manifold(scalar, &foot, max_iters)?;
        let step = next.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let size = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        q = next;
        if step <= 1e-12 * (1.0 + size) {
            return Ok(q);
        }
    }
    Err(LevelSetError::NotConverged {
        iterations: max_iters,
        residual: scalar.value(&q)?.abs(),
    })
}
