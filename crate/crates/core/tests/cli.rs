use std::path::Path;
use std::process::{Command, Output};

fn flowcurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowcurv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn obj_vertices(path: &Path) -> Vec<[f64; 3]> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("v "))
        .map(|l| {
            let v: Vec<f64> = l.split(' ').map(|s| s.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn exit_codes() {
    assert_eq!(code(&flowcurv(&["verify", "--model", "harmonic", "--samples", "50"])), 0);
    let strict = flowcurv(&["verify", "--model", "vdp", "--samples", "50", "--tol", "1e-30"]);
    assert_eq!(code(&strict), 1);
    assert_eq!(code(&flowcurv(&["frobnicate"])), 2);
    assert_eq!(code(&flowcurv(&["trace", "--model", "vdp", "--from", "1", "--duration", "1"])), 2);
    assert_eq!(code(&flowcurv(&["analyze", "--model", "no/such/file", "--point", "0,0"])), 2);
    assert_eq!(code(&flowcurv(&["analyze", "--model", "vdp", "--set", "bogus=1", "--point", "0,0"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("blowup.txt");
    std::fs::write(&model, "dim = 2\ndx/dt = x^2\ndy/dt = -y\n").unwrap();
    let out = flowcurv(&[
        "trace", "--model", model.to_str().unwrap(), "--from", "1,1", "--duration", "2",
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn verify_report_lists_tolerance_and_error() {
    let out = flowcurv(&["verify", "--model", "vdp", "--samples", "100", "--json"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = report["checks"].as_array().unwrap();
    let names: Vec<&str> = checks.iter().map(|c| c["name"].as_str().unwrap()).collect();
    for expected in ["jet_bundle_agreement", "planar_identity", "closed_form_proportionality", "corrected_remainder", "nullcline_residual"] {
        assert!(names.contains(&expected), "{names:?}");
    }
    for c in checks {
        assert!(c["tolerance"].as_f64().unwrap() > 0.0);
        let within = c["max_error"].as_f64().unwrap() <= c["tolerance"].as_f64().unwrap();
        assert_eq!(within, c["name"] != "unsquared_remainder_rejected", "{c}");
        assert_eq!(c["passed"], true);
    }
}

#[test]
fn trace_harmonic_returns_after_one_period() {
    let out = flowcurv(&[
        "trace", "--model", "harmonic", "--from", "1,0", "--duration", "6.283185307179586",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().next().unwrap(), "t,x,y,m,lie");
    let last = csv_rows(&text).pop().unwrap();
    assert!((last[0] - std::f64::consts::TAU).abs() < 1e-12);
    assert!((last[1] - 1.0).abs() < 1e-6 && last[2].abs() < 1e-6);
}

#[test]
fn trace_lorenz_stays_in_attractor_box() {
    let out = flowcurv(&[
        "trace", "--model", "lorenz", "--from", "1,1,1", "--duration", "50", "--transient", "10",
        "--dt", "0.01",
    ]);
    assert_eq!(code(&out), 0);
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 4001);
    assert!((rows[0][0] - 10.0).abs() < 1e-12);
    for r in rows {
        assert!(r[1].abs() < 25.0 && r[2].abs() < 35.0 && r[3] > 0.0 && r[3] < 55.0);
    }
}

#[test]
fn manifold_writes_polylines_and_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("circle.txt");
    std::fs::write(&model, "dim = 2\ndx/dt = -y + x*(1 - x^2 - y^2)\ndy/dt = x + y*(1 - x^2 - y^2)\n").unwrap();
    let out = flowcurv(&[
        "manifold", "--model", model.to_str().unwrap(), "--bounds", "-2:2,-2:2", "--res", "64",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().next().unwrap(), "polyline,x,y");
    assert!(csv_rows(&text).len() > 10);

    let obj = dir.path().join("lorenz.obj");
    let out = flowcurv(&[
        "manifold", "--model", "lorenz", "--res", "16", "--out", obj.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&obj).unwrap();
    assert!(text.lines().all(|l| l.starts_with("v ") || l.starts_with("f ")));
    let count = obj_vertices(&obj).len();
    for l in text.lines().filter_map(|l| l.strip_prefix("f ")) {
        for i in l.split(' ') {
            let i: usize = i.parse().unwrap();
            assert!(i >= 1 && i <= count);
        }
    }
}

fn fig1_distance(dir: &Path) -> f64 {
    let text = std::fs::read_to_string(dir.join("manifold_curve.csv")).unwrap();
    let curve: Vec<[f64; 2]> = csv_rows(&text).iter().map(|r| [r[1], r[2]]).collect();
    (0..81)
        .map(|k| {
            let x = 1.2 + 0.8 * k as f64 / 80.0;
            let y = x * x * x / 3.0 - x;
            curve
                .iter()
                .map(|p| (p[0] - x).hypot(p[1] - y))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[test]
fn fig1_file_set_and_epsilon_trend() {
    let mut distances = Vec::new();
    for eps in ["0.05", "0.1"] {
        let dir = tempfile::tempdir().unwrap();
        let set = format!("eps={eps}");
        let out = flowcurv(&[
            "figure", "fig1", "--model", "vdp", "--set", &set, "--res", "200", "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(
            files_in(dir.path()),
            ["fig1.gp", "lie_zero.csv", "limit_cycle.csv", "manifold_curve.csv", "singular_approx.csv"]
        );
        let cycle = std::fs::read_to_string(dir.path().join("limit_cycle.csv")).unwrap();
        assert_eq!(cycle.lines().next().unwrap(), "t,x,y,m,lie");
        distances.push(fig1_distance(dir.path()));
    }
    assert!(distances[1] > distances[0], "{distances:?}");
}

#[test]
fn fig2_mesh_passes_near_equilibria() {
    let dir = tempfile::tempdir().unwrap();
    let out = flowcurv(&[
        "figure", "fig2", "--model", "lorenz", "--res", "32", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        files_in(dir.path()),
        ["attractor.csv", "fig2.gp", "lie_manifold.obj", "torsion_manifold.obj"]
    );
    let diagonal = (50.0f64 / 32.0).hypot(70.0 / 32.0).hypot(55.0 / 32.0);
    let vertices = obj_vertices(&dir.path().join("torsion_manifold.obj"));
    let c = 72f64.sqrt();
    for target in [[0.0, 0.0, 0.0], [c, c, 27.0], [-c, -c, 27.0]] {
        let nearest = vertices
            .iter()
            .map(|v| (0..3).map(|i| (v[i] - target[i]).powi(2)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest <= diagonal, "{target:?}: {nearest}");
    }
}

#[test]
fn outputs_are_reproducible() {
    let a = flowcurv(&["verify", "--model", "lorenz", "--samples", "40", "--seed", "7", "--json"]);
    let b = flowcurv(&["verify", "--model", "lorenz", "--samples", "40", "--seed", "7", "--json"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = flowcurv(&["verify", "--model", "lorenz", "--samples", "40", "--seed", "8", "--json"]);
    assert_ne!(a.stdout, c.stdout);
}
