//! All three emulators on the two-spill pollutant model, repeated over
//! fresh designs. N is kept small so the global fit stays affordable; at
//! this size it usually wins, and the local methods pay off once N is in
//! the thousands.
//!
//! cargo run --release --example environ_methods

use dynemu::config::{DataSource, ExperimentConfig, Method};
use dynemu::driver::run;
use dynemu::simulators::Simulator;

fn main() -> dynemu::Result<()> {
    env_logger::init();
    let data = DataSource::Builtin {
        sim: Simulator::Environ,
        n_train: 500,
        n_test: 50,
        time_points: Some(100),
    };
    let runs = [
        (Method::Svdgp, None, None),
        (Method::Knnsvdgp, Some(30), None),
        (Method::Knnsvdgp, Some(50), None),
        (Method::Lasvdgp, Some(30), Some(15)),
        (Method::Lasvdgp, Some(50), Some(25)),
    ];
    println!("{:<10} {:>4} {:>14} {:>12}", "method", "n", "log mean NMSPE", "mean score");
    for (method, n, n0) in runs {
        let cfg = ExperimentConfig {
            method,
            n,
            n0,
            data: data.clone(),
            repetitions: 2,
            seed: 7,
            ..ExperimentConfig::default()
        };
        let rep = run(&cfg)?;
        println!(
            "{:<10} {:>4} {:>14.3} {:>12.3}",
            format!("{method:?}"),
            n.map_or("-".into(), |n| n.to_string()),
            rep.summary.mean_log_mean_nmspe.unwrap_or(f64::NAN),
            rep.summary.mean_score.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
