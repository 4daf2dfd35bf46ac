//! Command-line driver for the noise-characterization pipelines.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use specttm::cli::{
    apply_config_text, preset, run_pipeline, validate, validate_config, Pipeline, RunConfig,
};
use specttm::protocol::{gate_set_tomography_estimate, resource_estimate};

#[derive(Parser)]
#[command(name = "specttm", version, about = "SPAM-free spectral characterization of non-Markovian qubit noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline from a config file and/or a named preset.
    Run {
        /// Flat key = value config file; overlays the preset when both
        /// are given.
        config: Option<PathBuf>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Named parameter preset: fig2 | fig3 | fig4 | fig5.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Validate a config file and report all problems.
    Validate { config: PathBuf },
    /// Print the campaign circuit count d(d²−1)(K+1)M.
    Resources {
        #[arg(long)]
        qubits: u32,
        #[arg(long = "K")]
        k: u64,
        #[arg(long = "M")]
        m: u64,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, seed, preset: preset_name } => {
            let base = match preset_name.as_deref() {
                None => RunConfig::default(),
                Some(name) => match Pipeline::parse(name) {
                    Some(p) => preset(p),
                    None => {
                        eprintln!("unknown preset `{name}` (expected fig2|fig3|fig4|fig5)");
                        return ExitCode::from(1);
                    }
                },
            };
            if config.is_none() && preset_name.is_none() {
                eprintln!("nothing to run: give a config file, a --preset, or both");
                return ExitCode::from(1);
            }
            let mut cfg = match config {
                None => base,
                Some(path) => {
                    let text = match std::fs::read_to_string(&path) {
                        Ok(t) => t,
                        Err(e) => {
                            eprintln!("cannot read {}: {e}", path.display());
                            return ExitCode::from(1);
                        }
                    };
                    match apply_config_text(base, &text) {
                        Ok(c) => c,
                        Err(errors) => {
                            for e in errors {
                                eprintln!("{e}");
                            }
                            return ExitCode::from(1);
                        }
                    }
                }
            };
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let problems = validate(&cfg);
            if !problems.is_empty() {
                for p in problems {
                    eprintln!("{p}");
                }
                return ExitCode::from(1);
            }
            match run_pipeline(&cfg) {
                Ok(output) => {
                    println!("run {} complete", output.record.run_id);
                    println!("rhp_total = {}", output.rhp_total);
                    if let Some(err) = output.prediction_max_error {
                        println!("prediction_max_error = {err}");
                    }
                    for f in &output.record.files {
                        println!("wrote {}", cfg.output_dir.join(f).display());
                    }
                    ExitCode::SUCCESS
                }
                Err(specttm::Error::Config(errors)) => {
                    for e in errors {
                        eprintln!("{e}");
                    }
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("pipeline failed: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            match validate_config(&text) {
                Ok(_) => {
                    println!("ok");
                    ExitCode::SUCCESS
                }
                Err(errors) => {
                    for e in errors {
                        eprintln!("{e}");
                    }
                    ExitCode::from(1)
                }
            }
        }
        Command::Resources { qubits, k, m } => {
            println!("{}", resource_estimate(qubits, k, m));
            println!("gate_set_tomography: {}", gate_set_tomography_estimate(qubits, m));
            ExitCode::SUCCESS
        }
    }
}
