//! Flat `key = value` run configuration.

use std::path::PathBuf;

use biotvem_core::model::{MaterialParams, StressStabilization};
use biotvem_core::solver::{FixedPointConfig, IncrementNorm};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: key `{key}`: {msg}")]
    Entry { origin: String, key: String, msg: String },
    #[error("{origin}: expected `key = value`")]
    Syntax { origin: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Convergence,
    Single,
    SaddleCheck,
    MeshInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Quad,
    Tri,
    Distorted,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Example1,
    Custom,
}

/// One refinement level: a subdivision count or a mesh file.
#[derive(Debug, Clone, PartialEq)]
pub enum Level {
    N(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub family: Family,
    pub levels: Vec<String>,
    /// Vertex perturbation as a fraction of the grid spacing.
    pub distortion: f64,
    pub seed: u64,
    pub k: usize,
    pub case: CaseKind,
    pub params: MaterialParams,
    pub picard: FixedPointConfig,
    pub csv_path: Option<PathBuf>,
    pub fields_path: Option<PathBuf>,
    pub trials: usize,
    pub max_dim: usize,
    pub directions: usize,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Convergence,
            family: Family::Quad,
            levels: vec!["8".into(), "16".into(), "32".into(), "64".into()],
            distortion: 0.2,
            seed: 1,
            k: 1,
            case: CaseKind::Example1,
            params: MaterialParams::default(),
            picard: FixedPointConfig::default(),
            csv_path: None,
            fields_path: None,
            trials: 100,
            max_dim: 40,
            directions: 1000,
            threads: None,
        }
    }
}

fn canonical(key: &str) -> &str {
    match key {
        "levels" => "mesh.levels",
        "family" => "mesh.family",
        "trials" => "saddle.trials",
        other => other,
    }
}

impl RunConfig {
    /// Parses a whole file; unknown keys and malformed values are errors
    /// reporting the line number.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.assign(line, &format!("line {}", i + 1))?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.
    pub fn assign(&mut self, assignment: &str, origin: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, _)| !k.is_empty())
            .ok_or_else(|| ConfigError::Syntax { origin: origin.into() })?;
        self.set(key, value).map_err(|msg| ConfigError::Entry { origin: origin.into(), key: key.into(), msg })
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        let p = &mut self.params;
        match canonical(key) {
            "mode" => {
                self.mode = match value {
                    "convergence" => Mode::Convergence,
                    "single" => Mode::Single,
                    "saddle-check" => Mode::SaddleCheck,
                    "mesh-info" => Mode::MeshInfo,
                    _ => return Err("expected convergence, single, saddle-check or mesh-info".into()),
                }
            }
            "mesh.family" => {
                self.family = match value {
                    "quad" => Family::Quad,
                    "tri" => Family::Tri,
                    "distorted" => Family::Distorted,
                    "file" => Family::File,
                    _ => return Err("expected quad, tri, distorted or file".into()),
                }
            }
            "mesh.levels" => {
                self.levels = value.split([',', ' ']).map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
                if self.levels.is_empty() {
                    return Err("empty level list".into());
                }
            }
            "mesh.distortion" => self.distortion = num(value)?,
            "mesh.seed" => self.seed = num(value)?,
            "k" => self.k = num(value)?,
            "case" => {
                self.case = match value {
                    "example1" => CaseKind::Example1,
                    "custom" => CaseKind::Custom,
                    _ => return Err("expected example1 or custom".into()),
                }
            }
            "params.mu" => p.mu = num(value)?,
            "params.lambda" => p.lambda = num(value)?,
            "params.alpha" => p.alpha = num(value)?,
            "params.beta" => p.beta = num(value)?,
            "params.s0" => p.s0 = num(value)?,
            "params.kappa11" => p.kappa[(0, 0)] = num(value)?,
            "params.kappa12" => {
                let v = num(value)?;
                p.kappa[(0, 1)] = v;
                p.kappa[(1, 0)] = v;
            }
            "params.kappa22" => p.kappa[(1, 1)] = num(value)?,
            "params.rho0" => p.rho0 = num(value)?,
            "params.eta0" => p.eta0 = num(value)?,
            "params.eta1" => p.eta1 = num(value)?,
            "params.stabilization" => {
                p.stress_stabilization = match value {
                    "compliance" => StressStabilization::ComplianceTrace,
                    "stiffness" => StressStabilization::StiffnessTrace,
                    _ => return Err("expected compliance or stiffness".into()),
                }
            }
            "picard.tol" => self.picard.tolerance = num(value)?,
            "picard.max_iter" => self.picard.max_iterations = num(value)?,
            "picard.norm" => {
                self.picard.norm = match value {
                    "all" => IncrementNorm::All,
                    "phi" => IncrementNorm::Phi,
                    _ => return Err("expected all or phi".into()),
                }
            }
            "picard.relative" => self.picard.relative = num(value)?,
            "output.csv_path" => self.csv_path = Some(PathBuf::from(value)),
            "output.fields_path" => self.fields_path = Some(PathBuf::from(value)),
            "saddle.trials" => self.trials = num(value)?,
            "saddle.max_dim" => self.max_dim = num(value)?,
            "saddle.directions" => self.directions = num(value)?,
            "threads" => self.threads = Some(num(value)?).filter(|t: &usize| *t > 0),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Checks cross-key invariants and resolves the level list.
    pub fn resolve_levels(&self) -> Result<Vec<Level>, ConfigError> {
        if !matches!(self.k, 1 | 2) {
            return Err(ConfigError::Invalid(format!("k must be 1 or 2, got {}", self.k)));
        }
        if !(self.picard.tolerance > 0.0) || self.picard.max_iterations == 0 {
            return Err(ConfigError::Invalid("picard.tol must be positive and picard.max_iter at least 1".into()));
        }
        self.params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.levels
            .iter()
            .map(|l| match self.family {
                Family::File => {
                    let path = PathBuf::from(l);
                    if path.is_file() {
                        Ok(Level::File(path))
                    } else {
                        Err(ConfigError::Invalid(format!("mesh file `{l}` does not exist")))
                    }
                }
                _ => match l.parse::<usize>() {
                    Ok(n) if n > 0 => Ok(Level::N(n)),
                    _ => Err(ConfigError::Invalid(format!("level `{l}` is not a positive subdivision count"))),
                },
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_unit_parameters() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.params, MaterialParams::default());
        assert_eq!(c.picard.tolerance, 5e-6);
        assert_eq!(c.resolve_levels().unwrap(), vec![Level::N(8), Level::N(16), Level::N(32), Level::N(64)]);
    }

    #[test]
    fn parses_keys_and_comments() {
        let text = "# study\nmode = single\nmesh.family = tri  # triangles\nlevels = 4, 8\nk=2\nparams.lambda = 1e6\nparams.kappa12 = 0.25\npicard.norm = phi\noutput.csv_path = out.csv\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.mode, Mode::Single);
        assert_eq!(c.family, Family::Tri);
        assert_eq!(c.levels, vec!["4", "8"]);
        assert_eq!(c.k, 2);
        assert_eq!(c.params.lambda, 1e6);
        assert_eq!(c.params.kappa[(1, 0)], 0.25);
        assert_eq!(c.picard.norm, IncrementNorm::Phi);
        assert_eq!(c.csv_path, Some(PathBuf::from("out.csv")));
    }

    #[test]
    fn errors_report_line_and_key() {
        let e = RunConfig::parse("mode = single\nparams.mu = abc\n").unwrap_err();
        assert_eq!(
            e,
            ConfigError::Entry { origin: "line 2".into(), key: "params.mu".into(), msg: "cannot parse `abc`".into() }
        );
        assert!(matches!(RunConfig::parse("\n\nnonsense\n"), Err(ConfigError::Syntax { origin }) if origin == "line 3"));
        assert!(matches!(RunConfig::parse("colour = red"), Err(ConfigError::Entry { .. })));
    }

    #[test]
    fn invariants_checked() {
        let mut c = RunConfig::default();
        c.k = 3;
        assert!(c.resolve_levels().is_err());
        let mut c = RunConfig::default();
        c.picard.tolerance = 0.0;
        assert!(c.resolve_levels().is_err());
        let mut c = RunConfig::default();
        c.family = Family::File;
        c.levels = vec!["/definitely/not/here.mesh".into()];
        assert!(c.resolve_levels().is_err());
        let mut c = RunConfig::default();
        c.levels = vec!["0".into()];
        assert!(c.resolve_levels().is_err());
    }
}
