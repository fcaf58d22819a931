use std::path::PathBuf;
use std::process::ExitCode;

use biotvem_cli::{run, RunConfig};
use clap::Parser;

/// Virtual element solver for Biot poroelasticity with stress-assisted diffusion.
///
/// Reads an optional `key = value` configuration file; trailing `key=value`
/// arguments override it.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Configuration file followed by overrides, or overrides only.
    #[arg(value_name = "CONFIG | KEY=VALUE")]
    args: Vec<String>,
}

fn load(args: &[String]) -> Result<RunConfig, Box<dyn std::error::Error>> {
    let (file, overrides) = match args.first() {
        Some(first) if !first.contains('=') => (Some(PathBuf::from(first)), &args[1..]),
        _ => (None, args),
    };
    let mut cfg = match &file {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?)?,
        None => RunConfig::default(),
    };
    for (i, a) in overrides.iter().enumerate() {
        cfg.assign(a, &format!("argument {}", i + 1))?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cfg = match load(&args.args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut stdout = std::io::stdout();
    match run(&cfg, &mut stdout) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("run finished with failed checks");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
