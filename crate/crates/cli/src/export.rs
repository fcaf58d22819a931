//! Per-cell field export as legacy VTK polygons plus a CSV twin.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use biotvem_core::assembly::Discretization;
use biotvem_core::mesh::PolyMesh;
use biotvem_core::solver::FieldState;
use biotvem_core::verification::{cell_samples, CellSample};

pub const FIELD_CSV_HEADER: &str = "cell,x,y,sigma,p,u,z,zeta,phi";

const NAMES: [&str; 6] = ["sigma_norm", "p", "u_norm", "z_norm", "zeta_norm", "phi"];

fn values(s: &CellSample) -> [f64; 6] {
    [s.sigma, s.p, s.u, s.z, s.zeta, s.phi]
}

pub fn vtk_string(mesh: &PolyMesh, samples: &[CellSample]) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nbiotvem cell fields\nASCII\nDATASET POLYDATA\n");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:.17e} {:.17e} 0", v.x, v.y);
    }
    let size: usize = mesh.cells.iter().map(|c| c.len() + 1).sum();
    let _ = writeln!(s, "POLYGONS {} {size}", mesh.num_cells());
    for c in &mesh.cells {
        let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{} {}", c.len(), ids.join(" "));
    }
    let _ = writeln!(s, "CELL_DATA {}", samples.len());
    for (i, name) in NAMES.iter().enumerate() {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for smp in samples {
            let _ = writeln!(s, "{:.17e}", values(smp)[i]);
        }
    }
    s
}

pub fn csv_string(samples: &[CellSample]) -> String {
    let mut s = String::from(FIELD_CSV_HEADER);
    s.push('\n');
    for (c, smp) in samples.iter().enumerate() {
        let _ = write!(s, "{c},{:.17e},{:.17e}", smp.centroid.x, smp.centroid.y);
        for v in values(smp) {
            let _ = write!(s, ",{v:.17e}");
        }
        s.push('\n');
    }
    s
}

/// Writes `path` (VTK) and the same path with extension `csv`.
pub fn export_fields(d: &Discretization, state: &FieldState, path: &Path) -> io::Result<(PathBuf, PathBuf)> {
    let samples = cell_samples(d, state);
    let vtk = if path.extension().is_some_and(|e| e == "vtk") { path.to_path_buf() } else { path.with_extension("vtk") };
    let csv = vtk.with_extension("csv");
    std::fs::write(&vtk, vtk_string(&d.mesh, &samples))?;
    std::fs::write(&csv, csv_string(&samples))?;
    Ok((vtk, csv))
}
