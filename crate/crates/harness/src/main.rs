use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use etalab::config::dense_limit_from_env;
use etalab::{gce_json, gce_predict, ExperimentConfig, HarnessError, RunOptions};
use etalab_core::gce::{GceMode, GceOptions, GceTargets, Saturation};

#[derive(Parser)]
#[command(name = "etalab", version, about = "Eta-pairing dynamics of the dephased Hubbard chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its tables.
    Run {
        config: PathBuf,
        /// Output directory; defaults to `runs/<config stem>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for trajectory ensembles.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Solve the grand-canonical multipliers for one target.
    Gce {
        /// Number of sites.
        #[arg(long = "M", short = 'M')]
        sites: usize,
        /// Sector as `N_UP,N_DOWN`; omit for the full Fock space.
        #[arg(long, value_parser = parse_sector)]
        sector: Option<(usize, usize)>,
        #[arg(long)]
        target_eta_pair: f64,
        /// Targets for `<N↑>` and `<N↓>` in full-space mode, as `UP,DOWN`.
        #[arg(long, value_parser = parse_pair)]
        target_numbers: Option<(f64, f64)>,
        #[arg(long, value_enum, default_value_t = SaturationArg::Reject)]
        saturation: SaturationArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SaturationArg {
    Reject,
    Limit,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated values")?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn parse_sector(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected N_UP,N_DOWN")?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out, threads } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let out = out.unwrap_or_else(|| {
                let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned());
                PathBuf::from("runs").join(stem.unwrap_or_else(|| "run".into()))
            });
            let opts = RunOptions {
                threads,
                ..RunOptions::from_env(&out)?
            };
            let summary = etalab::run(&cfg, &opts)?;
            println!("{}", serde_json::to_string_pretty(summary.derived())?);
            eprintln!("wrote {}", summary.dir.display());
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            cfg.validate(dense_limit_from_env()?)?;
            println!("ok: {} on {} sites", cfg.kind.name(), cfg.model.sites);
        }
        Command::Gce {
            sites,
            sector,
            target_eta_pair,
            target_numbers,
            saturation,
        } => {
            let (mode, n_up, n_down) = match sector {
                Some((u, d)) => (GceMode::FixedSector { n_up: u, n_down: d }, u as f64, d as f64),
                None => {
                    let (u, d) = target_numbers.unwrap_or((sites as f64 / 2.0, sites as f64 / 2.0));
                    (GceMode::FullSpace, u, d)
                }
            };
            let targets = GceTargets {
                sites,
                eta_pair: target_eta_pair,
                n_up,
                n_down,
                mode,
            };
            let opts = GceOptions {
                saturation: match saturation {
                    SaturationArg::Reject => Saturation::Reject,
                    SaturationArg::Limit => Saturation::Limit,
                },
                dense_limit: dense_limit_from_env()?,
                ..GceOptions::default()
            };
            let (sol, pred) = gce_predict(&targets, &opts)?;
            println!("{}", serde_json::to_string_pretty(&gce_json(&sol, &pred))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
