//! Command-line front end: schema inference, training, synthesis,
//! evaluation, and full sweeps.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use clap::{Parser, Subcommand};
use gactgan::data::{infer_schema, write_schema_json, ColumnKind};
use gactgan::error::{Error, Result};
use gactgan::exp::{evaluate_dir, load_experiment_data, run_sweep, train_all, ExperimentConfig};
use gactgan::swag::{load_posterior, synthesize, SynthesisOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "gactgan",
    about = "Conditional tabular GAN with a trajectory-based weight posterior: train, synthesize, evaluate, sweep",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer a column schema from a CSV file and write it as JSON.
    Schema {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Kind overrides, e.g. --override age=categorical (repeatable).
        #[arg(long = "override", value_name = "COL=KIND")]
        overrides: Vec<String>,
    },
    /// Train one model per (loss, seed) from an experiment config, writing
    /// checkpoints, posterior files, and per-epoch loss logs.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic CSV from a posterior file.
    Synthesize {
        #[arg(long)]
        posterior: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        batch: usize,
        /// Posterior draws averaged per batch.
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Covariance scale; defaults to the value stored in the file.
        #[arg(long)]
        alpha: Option<f64>,
        /// Use only the newest RANK deviation columns.
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Group label recorded in the sidecar (used by evaluate).
        #[arg(long)]
        label: Option<String>,
    },
    /// Evaluate a directory of synthetic CSVs against the original table.
    Evaluate {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        phi: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full train/synthesize/evaluate cross-product and write the
    /// risk-utility map, gain table, and summary.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_overrides(raw: &[String]) -> Result<BTreeMap<String, ColumnKind>> {
    let mut map = BTreeMap::new();
    for item in raw {
        let (col, kind) = item.split_once('=').ok_or_else(|| {
            Error::Usage(format!("override '{item}' must look like column=kind"))
        })?;
        let kind = match kind {
            "continuous" => ColumnKind::Continuous,
            "categorical" => ColumnKind::Categorical,
            other => {
                return Err(Error::Usage(format!(
                    "unknown kind '{other}' (continuous|categorical)"
                )))
            }
        };
        map.insert(col.to_string(), kind);
    }
    Ok(map)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Schema { csv, out, overrides } => {
            let overrides = parse_overrides(&overrides)?;
            let schema = infer_schema(&csv, &overrides)?;
            write_schema_json(&out, &schema)?;
            println!("wrote schema for {} columns to {}", schema.len(), out.display());
        }
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
            let data = load_experiment_data(&cfg)?;
            let trained = train_all(&cfg, &data)?;
            for (loss, seed, paths) in &trained {
                println!(
                    "loss={loss} seed={seed}: checkpoint {} posterior {}",
                    paths.checkpoint.display(),
                    paths.posterior.display()
                );
            }
        }
        Command::Synthesize {
            posterior,
            n,
            batch,
            samples,
            alpha,
            rank,
            seed,
            out,
            label,
        } => {
            let artifact = load_posterior(&posterior)?;
            let mut opts = SynthesisOptions::new(n, batch, samples);
            opts.alpha = alpha;
            opts.rank = rank;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (table, report) = synthesize(&artifact, &opts, &mut rng)?;
            table.write_csv(&out)?;
            let sidecar = gactgan::exp::SynthSidecar {
                label: label.unwrap_or_else(|| "default".to_string()),
                loss: None,
                k: Some(report.rank),
                alpha: Some(report.alpha),
                s_samples: report.s_samples,
                seed,
                posterior_hash: artifact.arch_hash.clone(),
                batches_run: report.batches_run,
            };
            let meta_path = out.with_extension("meta.json");
            std::fs::write(
                &meta_path,
                serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
            )
            .map_err(|e| Error::io(&meta_path, e))?;
            println!(
                "wrote {} rows ({} batches, alpha {}, rank {}) to {}",
                report.rows,
                report.batches_run,
                report.alpha,
                report.rank,
                out.display()
            );
        }
        Command::Evaluate {
            original,
            synthetic,
            spec,
            phi,
            out,
        } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::io(&spec, e))?;
            let spec: gactgan::eval::UtilitySpec =
                serde_json::from_str(&text).map_err(|e| Error::format(&spec, e.to_string()))?;
            evaluate_dir(&original, &synthetic, &spec, phi, &out)?;
            println!("wrote report to {}", out.display());
        }
        Command::Sweep { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
            // record the resolved config next to the outputs
            let cfg_copy = cfg.output_dir.join("config.json");
            std::fs::write(
                &cfg_copy,
                serde_json::to_string_pretty(&cfg).expect("config serializes"),
            )
            .map_err(|e| Error::io(&cfg_copy, e))?;
            let outcome = run_sweep(&cfg)?;
            println!(
                "sweep complete: {} cells ({} failed), {} configurations on the map",
                outcome.cells_total,
                outcome.cells_failed,
                outcome.rows.len()
            );
            println!("outputs in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
