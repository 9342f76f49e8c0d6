//! Monte Carlo cross-validation on a dataset stored as CSV: a design file
//! (N rows x q columns, with header) and a response file (L rows x N
//! columns). A simulated dataset is written first so the example is
//! self-contained; point `design`/`response` at your own files instead.
//!
//! cargo run --release --example csv_dataset

use dynemu::config::{DataSource, ExperimentConfig, Method};
use dynemu::driver::run;
use dynemu::simulators::{lhd, write_design, write_response, Simulator, TimeGrid};

fn main() -> dynemu::Result<()> {
    let dir = std::env::temp_dir().join("dynemu_csv_example");
    std::fs::create_dir_all(&dir)?;
    let (design, response) = (dir.join("design.csv"), dir.join("response.csv"));

    let sim = Simulator::Environ;
    let x = lhd(800, &sim.domain(), 11);
    write_design(&design, &x)?;
    write_response(&response, &sim.eval_design(&x, &TimeGrid::new(0.3, 60.0, 80)?)?)?;

    let cfg = ExperimentConfig {
        method: Method::Lasvdgp,
        n: Some(30),
        repetitions: 5,
        data: DataSource::Dataset {
            design,
            response,
            ratio: (4, 1),
        },
        dump_dir: Some(dir.join("predictions")),
        ..ExperimentConfig::default()
    };
    let report = run(&cfg)?;
    for (r, run) in report.runs.iter().enumerate() {
        let s = run.score.as_ref().unwrap();
        println!(
            "split {r}: M = {}, log mean NMSPE {:.3}, mean score {:.3}",
            run.config.n_test,
            s.log_mean_nmspe.unwrap_or(f64::NAN),
            s.mean_score.unwrap_or(f64::NAN)
        );
    }
    println!("predictions written under {}", dir.join("predictions").display());
    Ok(())
}
