//! Plain-text writers. Numbers use `f64`'s `Display`, the shortest decimal
//! that parses back to the same value; lines end with `\n`.

use std::io::{self, Write};

use crate::integrate::Trajectory;
use crate::levelset::{Mesh, Polyline};
use crate::manifold::{lie_derivative, ManifoldScalar};
use crate::models::{StateFunction, VectorField, VARIABLE_NAMES};

fn row(w: &mut dyn Write, values: &[f64]) -> io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")
}

/// Columns `t, x, y[, z], m, lie`.
pub fn write_trajectory_csv(
    w: &mut dyn Write,
    field: &VectorField,
    traj: &Trajectory,
) -> io::Result<()> {
    let n = field.dimension();
    let mut header = vec!["t"];
    header.extend(&VARIABLE_NAMES[..n]);
    header.extend(["m", "lie"]);
    writeln!(w, "{}", header.join(","))?;
    let scalar = ManifoldScalar::new(field);
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let m = scalar.value(x).unwrap_or(f64::NAN);
        let lie = lie_derivative(field, &scalar, x).unwrap_or(f64::NAN);
        let mut values = vec![*t];
        values.extend(x);
        values.extend([m, lie]);
        row(w, &values)?;
    }
    Ok(())
}

/// Columns `polyline, x, y`; closed polylines repeat their first point.
pub fn write_polylines_csv(w: &mut dyn Write, lines: &[Polyline]) -> io::Result<()> {
    writeln!(w, "polyline,x,y")?;
    for (k, line) in lines.iter().enumerate() {
        let closing = line.closed.then(|| line.points[0]);
        for p in line.points.iter().chain(closing.iter()) {
            row(w, &[k as f64, p[0], p[1]])?;
        }
    }
    Ok(())
}

pub fn write_points_csv(w: &mut dyn Write, header: &[&str], points: &[Vec<f64>]) -> io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for p in points {
        row(w, p)?;
    }
    Ok(())
}

/// `v` and `f` records only, with 1-based face indices.
pub fn write_obj(w: &mut dyn Write, mesh: &Mesh) -> io::Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polylines_and_obj_format() {
        let lines = vec![Polyline {
            points: vec![[0.0, 1.0], [0.5, -0.25], [1e-7, 2.0]],
            closed: true,
        }];
        let mut buf = Vec::new();
        write_polylines_csv(&mut buf, &lines).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "polyline,x,y\n0,0,1\n0,0.5,-0.25\n0,0.0000001,2\n0,0,1\n"
        );
        let mesh = Mesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.1]],
            triangles: vec![[0, 1, 2]],
        };
        let mut buf = Vec::new();
        write_obj(&mut buf, &mesh).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "v 0 0 0\nv 1 0 0\nv 0 1 0.1\nf 1 2 3\n"
        );
    }

    #[test]
    fn shortest_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, f64::MIN_POSITIVE] {
            let s = format!("{v}");
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
