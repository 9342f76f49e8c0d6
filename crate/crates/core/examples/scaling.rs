//! Wall time of lasvdGP as the test set and the neighborhood grow, with
//! the per-phase breakdown.
//!
//! cargo run --release --example scaling

use dynemu::config::{ExperimentConfig, Method};
use dynemu::driver::{run_lasvdgp, Problem};
use dynemu::simulators::{Simulator, TimeGrid};

fn main() -> dynemu::Result<()> {
    let grid = TimeGrid::new(1.0, 2.0, 50)?;
    let full = Problem::builtin(Simulator::Forrester, 2000, 64, &grid, 5)?;
    let first = |m: usize| {
        let idx: Vec<usize> = (0..m).collect();
        Problem::new(
            full.train_x.clone(),
            full.train_y.clone(),
            full.test_x.select_rows(&idx),
            full.test_y.as_ref().map(|y| y.select_columns(&idx)),
        )
    };
    let cfg = |n: usize| ExperimentConfig {
        method: Method::Lasvdgp,
        n: Some(n),
        n0: Some(n / 2),
        workers: Some(1),
        ..ExperimentConfig::default()
    };

    println!("test set size (n = 40)");
    for m in [8, 16, 32, 64] {
        let r = run_lasvdgp(&first(m)?, &cfg(40), 1)?;
        println!("  M = {m:>3}: {:>7.2} s", r.execution.wall_seconds);
    }
    println!("neighborhood size (M = 8)");
    let p = first(8)?;
    for n in [20, 40, 80] {
        let r = run_lasvdgp(&p, &cfg(n), 1)?;
        let t = r.execution.timings;
        println!(
            "  n = {n:>3}: {:>7.2} s  (search {:.2}, svd {:.2}, theta {:.2}, predict {:.3})",
            r.execution.wall_seconds, t.neighborhood, t.svd, t.theta, t.prediction
        );
    }
    Ok(())
}
