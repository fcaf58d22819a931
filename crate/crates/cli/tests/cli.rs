use std::process::Command;

use biotvem_cli::export::{csv_string, export_fields, vtk_string, FIELD_CSV_HEADER};
use biotvem_cli::{rate_window, run, Mode, RunConfig, CSV_HEADER};
use biotvem_core::assembly::Discretization;
use biotvem_core::mesh::{build_structured_quad, example1_boundary};
use biotvem_core::model::MaterialParams;
use biotvem_core::solver::FieldState;
use biotvem_core::verification::{cell_samples, custom_case, interpolate_state};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_biotvem"))
}

fn run_to_string(cfg: &RunConfig) -> (bool, String) {
    let mut out = Vec::new();
    let ok = run(cfg, &mut out).unwrap();
    (ok, String::from_utf8(out).unwrap())
}

#[test]
fn mesh_info_single_cell() {
    let out = bin().args(["mode=mesh-info", "levels=1"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("level=1 nv=4 nc=1 ne=4 nb=4 "), "{text}");
    let h: f64 = text.split("h=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((h - 2f64.sqrt()).abs() < 1e-15);
    assert!(text.contains("valid=true"));
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "mode = convergence  # overridden below\nlevels = 1, 2\nmesh.family = tri\n").unwrap();
    let out = bin().arg(&path).arg("mode=mesh-info").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    // two triangles per square
    assert!(lines[0].starts_with("level=1 nv=4 nc=2 "), "{text}");
    assert!(lines[1].starts_with("level=2 nv=9 nc=8 "), "{text}");
}

#[test]
fn bad_input_exits_with_two() {
    let out = bin().args(["params.mu=-1", "mode=mesh-info"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["colour=red"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("argument 1"));
    let out = bin().arg("/no/such/config").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn saddle_check_passes() {
    let out = bin().args(["mode=saddle-check", "trials=20", "saddle.max_dim=12", "saddle.directions=50"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("instances: 20/20 passed"), "{text}");
    assert!(text.contains("hypothesis rejected true"));
}

#[test]
fn convergence_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rates.csv");
    let mut cfg = RunConfig::default();
    cfg.levels = vec!["2".into(), "4".into()];
    cfg.csv_path = Some(csv.clone());
    let (_, text) = run_to_string(&cfg);
    let file = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(&file));
    let rows: Vec<_> = file.lines().collect();
    assert_eq!(rows[0], CSV_HEADER);
    assert_eq!(rows.len(), 3);
    let first: Vec<_> = rows[1].split(',').collect();
    let second: Vec<_> = rows[2].split(',').collect();
    assert_eq!(first.len(), 17);
    assert_eq!(first[0], "2");
    assert_eq!(second[0], "4");
    for i in (3..16).step_by(2) {
        assert_eq!(first[i], "*");
        assert!(second[i].parse::<f64>().is_ok());
    }
    let h: f64 = first[1].parse().unwrap();
    assert!((h - 2f64.sqrt() / 2.0).abs() < 1e-6);
    assert!(first[16].parse::<usize>().unwrap() >= 1);
}

#[test]
fn single_thread_runs_are_reproducible() {
    let mut cfg = RunConfig::default();
    cfg.levels = vec!["3".into(), "6".into()];
    cfg.threads = Some(1);
    let (_, a) = run_to_string(&cfg);
    let (_, b) = run_to_string(&cfg);
    assert_eq!(a, b);
    let mut cfg = RunConfig::default();
    cfg.mode = Mode::SaddleCheck;
    cfg.trials = 5;
    cfg.max_dim = 10;
    cfg.directions = 20;
    cfg.threads = Some(1);
    assert_eq!(run_to_string(&cfg), run_to_string(&cfg));
}

#[test]
fn rate_window_brackets_order() {
    assert_eq!(rate_window(1), (1.85, 2.15));
    assert_eq!(rate_window(2), (2.85, 3.15));
}

#[test]
fn zero_state_exports_zero_columns() {
    let d = Discretization::new(build_structured_quad(3).tag_boundary(example1_boundary), 1, MaterialParams::default()).unwrap();
    let samples = cell_samples(&d, &FieldState::zeros(&d.map));
    assert_eq!(samples.len(), 9);
    let csv = csv_string(&samples);
    let rows: Vec<_> = csv.lines().collect();
    assert_eq!(rows[0], FIELD_CSV_HEADER);
    assert_eq!(rows.len(), 10);
    for (i, row) in rows[1..].iter().enumerate() {
        let cols: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(cols[0], i as f64);
        assert!(cols[3..].iter().all(|v| *v == 0.0));
    }
}

#[test]
fn single_cell_vtk_structure() {
    let d = Discretization::new(build_structured_quad(1).tag_boundary(example1_boundary), 1, MaterialParams::default()).unwrap();
    let samples = cell_samples(&d, &FieldState::zeros(&d.map));
    let vtk = vtk_string(&d.mesh, &samples);
    let lines: Vec<_> = vtk.lines().collect();
    assert_eq!(lines[0], "# vtk DataFile Version 3.0");
    assert_eq!(lines[3], "DATASET POLYDATA");
    assert_eq!(lines[4], "POINTS 4 double");
    assert_eq!(lines[9], "POLYGONS 1 5");
    assert!(lines[10].starts_with("4 "));
    assert_eq!(lines[11], "CELL_DATA 1");
    assert_eq!(vtk.matches("SCALARS").count(), 6);
    // header, 4 points, polygon block, cell data, 6 x (2 + 1) scalar lines
    assert_eq!(lines.len(), 4 + 1 + 4 + 2 + 1 + 18);
}

#[test]
fn exported_stress_matches_linear_field() {
    // with alpha = 0 the exact stress of the custom case is linear, so the
    // projection of its interpolant is exact
    let params = MaterialParams { alpha: 0.0, beta: 0.0, ..Default::default() };
    let case = custom_case(params);
    let d = Discretization::new(build_structured_quad(4).tag_boundary(example1_boundary), 1, params).unwrap();
    let state = interpolate_state(&d, &case).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (vtk, csv) = export_fields(&d, &state, &dir.path().join("fields")).unwrap();
    assert_eq!(vtk.extension().unwrap(), "vtk");
    let text = std::fs::read_to_string(csv).unwrap();
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 16);
    for row in rows {
        let cols: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        let x = biotvem_core::Vec2::new(cols[1], cols[2]);
        let s = case.sigma(x);
        let exact = (s.t11 * s.t11 + 2.0 * s.t12 * s.t12 + s.t22 * s.t22).sqrt();
        assert!((cols[3] - exact).abs() <= 1e-12 * exact.max(1.0), "{} vs {exact}", cols[3]);
        assert!((cols[6] - case.z(x).norm()).abs() <= 1e-12 * case.z(x).norm().max(1.0));
    }
}
