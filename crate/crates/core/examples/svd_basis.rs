//! A single global SVD-GP: singular values, the retained basis, fitted
//! correlation parameters and pointwise predictive bands.
//!
//! cargo run --release --example svd_basis

use dynemu::coefgp::{PriorSpec, DEFAULT_NUGGET};
use dynemu::simulators::{lhd, Simulator, TimeGrid};
use dynemu::svdmodel::fit_svdgp;

fn main() -> dynemu::Result<()> {
    let sim = Simulator::Forrester;
    let grid = TimeGrid::new(1.0, 2.0, 40)?;
    let x = lhd(150, &sim.domain(), 2);
    let y = sim.eval_design(&x, &grid)?;
    let model = fit_svdgp(&x, &y, 0.95, PriorSpec::default(), DEFAULT_NUGGET)?;

    let d = &model.basis.singular_values;
    let total: f64 = d.sum();
    let mut acc = 0.0;
    for (i, di) in d.iter().take(8).enumerate() {
        acc += di;
        println!("d{:<2} {:>10.3}  cumulative share {:.3}", i + 1, di, acc / total);
    }
    println!("retained p = {}, noise variance {:.3e}", model.p(), model.sigma2_hat);
    for (i, th) in model.thetas().iter().enumerate() {
        println!("basis {} correlation parameters {:?}", i + 1, th.theta());
    }

    let x0 = [6.5, 9.0, 3.0];
    let truth = sim.eval(&x0, &grid)?;
    let pred = model.predict(&x0)?;
    println!("{:>6} {:>10} {:>10} {:>20}", "t", "truth", "mean", "95% band");
    for (j, t) in grid.points().iter().enumerate().step_by(5) {
        let half = 1.96 * pred.var[j].sqrt();
        println!(
            "{t:>6.3} {:>10.3} {:>10.3} [{:>8.3}, {:>8.3}]",
            truth[j],
            pred.mean[j],
            pred.mean[j] - half,
            pred.mean[j] + half
        );
    }
    Ok(())
}
