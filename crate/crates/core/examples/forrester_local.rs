//! lasvdGP against knnsvdGP on the Forrester test function.
//!
//! cargo run --release --example forrester_local -- [N] [M] [seed]

use dynemu::config::{ExperimentConfig, Method};
use dynemu::driver::{run_knnsvdgp, run_lasvdgp, Problem};
use dynemu::simulators::{Simulator, TimeGrid};

fn main() -> dynemu::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n_train = args.first().copied().unwrap_or(2000) as usize;
    let n_test = args.get(1).copied().unwrap_or(100) as usize;
    let seed = args.get(2).copied().unwrap_or(1);

    let grid = TimeGrid::new(1.0, 2.0, 50)?;
    let problem = Problem::builtin(Simulator::Forrester, n_train, n_test, &grid, seed)?;

    for (method, n0) in [(Method::Knnsvdgp, None), (Method::Lasvdgp, Some(20))] {
        let cfg = ExperimentConfig {
            method,
            n: Some(40),
            n0,
            ..ExperimentConfig::default()
        };
        let report = match method {
            Method::Lasvdgp => run_lasvdgp(&problem, &cfg, seed)?,
            _ => run_knnsvdgp(&problem, &cfg, seed)?,
        };
        let s = report.score.expect("builtin problems carry the truth");
        println!(
            "{:<9} log mean NMSPE {:>8.3}  mean score {:>8.3}  p {:?}  {:.2} s",
            format!("{method:?}"),
            s.log_mean_nmspe.unwrap_or(f64::NAN),
            s.mean_score.unwrap_or(f64::NAN),
            report.p_histogram,
            report.execution.wall_seconds
        );
    }
    Ok(())
}
