//! Greedy neighborhood growth step by step: the J value of the best
//! candidate, its distance rank, and the local basis size.
//!
//! cargo run --release --example j_criterion

use dynemu::data::sq_distance;
use dynemu::neighborhood::{distance_order, knn, LocalState, SearchScheme};
use dynemu::simulators::{lhd, Simulator, TimeGrid};
use dynemu::svdmodel::FitSettings;
use dynemu::timing::PhaseTimings;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dynemu::Result<()> {
    let sim = Simulator::Forrester;
    let grid = TimeGrid::new(1.0, 2.0, 50)?;
    let x = lhd(1000, &sim.domain(), 3);
    let y = sim.eval_design(&x, &grid)?;
    let x0 = [7.0, 12.0, 4.0];
    let truth = sim.eval(&x0, &grid)?;

    let settings = FitSettings::default();
    let mut timings = PhaseTimings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let order = distance_order(&x, &x0);
    let mut st = LocalState::new(&x, &y, &x0, &knn(&x, &x0, 10)?, &settings, &mut timings)?;

    println!("{:>3} {:>12} {:>6} {:>9} {:>3} {:>10}", "k", "J", "index", "dist rank", "p", "sq error");
    while st.k() < 30 {
        let best = st.select_next(SearchScheme::default(), 30, &mut rng)?;
        let rank = order.iter().position(|&i| i == best.candidate_index).unwrap();
        let pred = st.predict()?;
        println!(
            "{:>3} {:>12.5e} {:>6} {:>9} {:>3} {:>10.3e}",
            st.k(),
            best.j_value,
            best.candidate_index,
            rank,
            st.model().p(),
            sq_distance(&pred.mean, &truth)
        );
        st.append(best.candidate_index, &settings, &mut timings)?;
    }
    Ok(())
}
