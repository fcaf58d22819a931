//! Batch driver for the Biot / stress-assisted diffusion solver: configuration,
//! study orchestration and CSV / VTK output.

pub mod config;
pub mod export;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use biotvem_core::assembly::Discretization;
use biotvem_core::mesh::{load_mesh, PolyMesh};
use biotvem_core::saddle::{degenerate_c_probe, run_trials};
use biotvem_core::solver::picard;
use biotvem_core::verification::{compute_errors, custom_case, example1_case, run_study, ManufacturedCase, MeshFamily, RateTable};
use thiserror::Error;

pub use config::{CaseKind, ConfigError, Family, Level, Mode, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("mesh `{path}`: {source}")]
    MeshFile { path: PathBuf, source: biotvem_core::mesh::MeshError },
    #[error(transparent)]
    Core(#[from] biotvem_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Saddle(#[from] biotvem_core::saddle::SaddleError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl From<biotvem_core::mesh::MeshError> for CliError {
    fn from(e: biotvem_core::mesh::MeshError) -> Self {
        CliError::Core(e.into())
    }
}

/// CSV header of a convergence study.
pub const CSV_HEADER: &str = "level,h,e_total,r_total,e_sigma,r_sigma,e_u,r_u,e_z,r_z,e_p,r_p,e_zeta,r_zeta,e_phi,r_phi,iters";

fn case_for(cfg: &RunConfig) -> ManufacturedCase {
    match cfg.case {
        CaseKind::Example1 => example1_case(cfg.params),
        CaseKind::Custom => custom_case(cfg.params),
    }
}

/// Builds the mesh of every level with its table label.
pub fn build_meshes(cfg: &RunConfig) -> Result<Vec<(usize, PolyMesh)>, CliError> {
    let family = match cfg.family {
        Family::Quad => MeshFamily::Quad,
        Family::Tri => MeshFamily::Tri,
        Family::Distorted => MeshFamily::Distorted { fraction: cfg.distortion, seed: cfg.seed },
        Family::File => MeshFamily::Quad,
    };
    cfg.resolve_levels()?
        .into_iter()
        .enumerate()
        .map(|(i, level)| match level {
            Level::N(n) => Ok((n, family.build(n)?)),
            Level::File(path) => {
                let f = File::open(&path)?;
                let mesh = load_mesh(BufReader::new(f)).map_err(|source| CliError::MeshFile { path, source })?;
                Ok((i + 1, mesh))
            }
        })
        .collect()
}

/// Rate table as CSV; level-1 rates are `*`.
pub fn rate_csv(table: &RateTable) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for l in &table.levels {
        let e = l.errors.with_total();
        s.push_str(&format!("{},{:.6e}", l.label, l.errors.h));
        for i in 0..7 {
            let r = l.rates.map_or("*".to_string(), |r| format!("{:.4}", r[i]));
            s.push_str(&format!(",{:.6e},{r}", e[i]));
        }
        s.push_str(&format!(",{}\n", l.report.iterations));
    }
    s
}

/// Expected final total rate window `[k + 0.85, k + 1.15]` for the smooth case.
pub fn rate_window(k: usize) -> (f64, f64) {
    (k as f64 + 0.85, k as f64 + 1.15)
}

/// Executes a configuration, writing human-readable output to `out`.
/// Returns `false` when a check inside the run failed.
pub fn run(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<bool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Pool(e.to_string()))?;
    pool.install(|| match cfg.mode {
        Mode::Convergence => convergence(cfg, out),
        Mode::Single => single(cfg, out),
        Mode::SaddleCheck => saddle_check(cfg, out),
        Mode::MeshInfo => mesh_info(cfg, out),
    })
}

fn convergence(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<bool, CliError> {
    let case = case_for(cfg);
    let table = run_study(build_meshes(cfg)?, cfg.k, &case, &cfg.picard)?;
    let csv = rate_csv(&table);
    out.write_all(csv.as_bytes())?;
    if let Some(path) = &cfg.csv_path {
        std::fs::write(path, &csv)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    let mut ok = table.all_converged();
    writeln!(out, "fixed point converged on every level: {}", if ok { "yes" } else { "no" })?;
    if let (CaseKind::Example1, Some(r)) = (cfg.case, table.final_rates()) {
        let (lo, hi) = rate_window(cfg.k);
        let in_window = (lo..=hi).contains(&r[0]);
        writeln!(out, "final total rate {:.4} in [{lo}, {hi}]: {}", r[0], if in_window { "yes" } else { "no" })?;
        ok &= in_window;
    }
    Ok(ok)
}

fn single(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<bool, CliError> {
    let case = case_for(cfg);
    let (label, mesh) = build_meshes(cfg)?.into_iter().next().expect("at least one level");
    let d = Discretization::new(mesh.tag_boundary(case.boundary), cfg.k, cfg.params)?;
    let (state, report) = picard(&d, &case, &cfg.picard).map_err(biotvem_core::Error::from)?;
    let e = compute_errors(&d, &state, &case);
    writeln!(out, "level {label}: cells {}, dofs {}, h {:.6e}", d.mesh.num_cells(), d.map.total(), e.h)?;
    writeln!(
        out,
        "errors: total {:.6e} sigma {:.6e} u {:.6e} z {:.6e} p {:.6e} zeta {:.6e} phi {:.6e}",
        e.total, e.e_sigma, e.e_u, e.e_z, e.e_p, e.e_zeta, e.e_phi
    )?;
    writeln!(
        out,
        "picard: {} iterations, converged {}, increments {:?}",
        report.iterations, report.converged, report.increments
    )?;
    writeln!(out, "linear solver: {}, max relative residual {:.3e}", report.linear_solver, report.max_residual())?;
    if let Some(path) = &cfg.fields_path {
        let (vtk, csv) = export::export_fields(&d, &state, path)?;
        writeln!(out, "wrote {} and {}", vtk.display(), csv.display())?;
    }
    Ok(report.converged)
}

fn saddle_check(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<bool, CliError> {
    let s = run_trials(cfg.trials, cfg.max_dim, cfg.directions, cfg.seed);
    writeln!(out, "instances: {}/{} passed (dimensions <= {}, {} directions each)", s.passed, s.trials, cfg.max_dim, cfg.directions)?;
    writeln!(out, "max relative residual {:.3e}, max homogeneous solution norm {:.3e}", s.max_residual, s.max_homogeneous)?;
    for (seed, why) in &s.failures {
        writeln!(out, "  seed {seed}: {why}")?;
    }
    let probe = degenerate_c_probe(4, 7, cfg.seed)?;
    writeln!(
        out,
        "degenerate c probe: gamma {:.3e}, relative smallest singular value {:.3e}, hypothesis rejected {}, singular {}",
        probe.gamma, probe.relative_min_singular, probe.hypothesis_rejected, probe.singular
    )?;
    Ok(s.all_passed() && probe.hypothesis_rejected)
}

fn mesh_info(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<bool, CliError> {
    let mut ok = true;
    for (label, mesh) in build_meshes(cfg)? {
        let valid = mesh.validate();
        let eta = (0..mesh.num_cells())
            .filter_map(|c| mesh.cell_geometry(c).ok())
            .map(|g| g.eta)
            .fold(f64::INFINITY, f64::min);
        writeln!(
            out,
            "level={label} nv={} nc={} ne={} nb={} h={} area={} min_eta={eta:.4} valid={}",
            mesh.num_vertices(),
            mesh.num_cells(),
            mesh.num_edges(),
            mesh.boundary_edges().count(),
            mesh.h(),
            mesh.domain_area(),
            valid.is_ok()
        )?;
        if let Err(e) = valid {
            writeln!(out, "  {e}")?;
            ok = false;
        }
    }
    Ok(ok)
}
