use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dynemu::config::ExperimentConfig;
use dynemu::driver::{run, Problem};
use dynemu::metrics::score;
use dynemu::simulators::{read_matrix, write_design, write_response, Simulator, TimeGrid};
use dynemu::svdmodel::PredictiveSummary;
use dynemu::Result;

#[derive(Parser)]
#[command(name = "dynemu", version, about = "SVD-based GP emulators for time-series simulators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate train/test CSVs from a built-in simulator.
    Gen {
        #[arg(long, value_enum)]
        sim: Simulator,
        /// Training set size.
        #[arg(long)]
        n: usize,
        /// Test set size.
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Time grid length (default 200).
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted series (L x M CSV) against the truth.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Predictive variances, same layout; enables the proper score.
        #[arg(long)]
        var: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let report = run(&cfg)?;
            let json = serde_json::to_string_pretty(&report)?;
            match &cfg.output {
                Some(p) => std::fs::write(p, json)?,
                None => writeln!(std::io::stdout(), "{json}")?,
            }
        }
        Cmd::Gen {
            sim,
            n,
            m,
            seed,
            len,
            out,
        } => {
            let mut grid = sim.default_grid();
            if let Some(l) = len {
                grid = TimeGrid::new(grid.start, grid.end, l)?;
            }
            let p = Problem::builtin(sim, n, m, &grid, seed)?;
            std::fs::create_dir_all(&out)?;
            write_design(&out.join("train_design.csv"), &p.train_x)?;
            write_response(&out.join("train_response.csv"), &p.train_y)?;
            write_design(&out.join("test_design.csv"), &p.test_x)?;
            if let Some(ty) = &p.test_y {
                write_response(&out.join("test_response.csv"), ty)?;
            }
            eprintln!("wrote N = {n}, M = {m}, L = {} to {}", grid.len, out.display());
        }
        Cmd::Score { pred, truth, var } => {
            let p = read_matrix(&pred)?;
            let t = read_matrix(&truth)?;
            let v = var.as_deref().map(read_matrix).transpose()?;
            if p.shape() != t.shape() || v.as_ref().is_some_and(|v| v.shape() != t.shape()) {
                return Err(dynemu::Error::Dimension(format!(
                    "prediction {:?} and truth {:?} shapes differ",
                    p.shape(),
                    t.shape()
                )));
            }
            let truth: Vec<Vec<f64>> = t.column_iter().map(|c| c.iter().copied().collect()).collect();
            let preds: Vec<Option<PredictiveSummary>> = (0..p.ncols())
                .map(|j| {
                    Some(PredictiveSummary {
                        mean: p.column(j).iter().copied().collect(),
                        var: v.as_ref().map_or(Vec::new(), |v| v.column(j).iter().copied().collect()),
                    })
                })
                .collect();
            writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&score(&truth, &preds)?)?)?;
        }
    }
    Ok(())
}
