use std::ops::AddAssign;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Wall-clock time spent per phase, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub neighborhood: f64,
    pub svd: f64,
    pub theta: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum Phase {
    Neighborhood,
    Svd,
    Theta,
    Prediction,
}

impl PhaseTimings {
    pub fn add(&mut self, phase: Phase, d: Duration) {
        let s = d.as_secs_f64();
        match phase {
            Phase::Neighborhood => self.neighborhood += s,
            Phase::Svd => self.svd += s,
            Phase::Theta => self.theta += s,
            Phase::Prediction => self.prediction += s,
        }
    }

    /// Runs `f` and charges its duration to `phase`.
    pub fn time<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.add(phase, t.elapsed());
        out
    }

    pub fn total(&self) -> f64 {
        self.neighborhood + self.svd + self.theta + self.prediction
    }
}

impl AddAssign for PhaseTimings {
    fn add_assign(&mut self, o: Self) {
        self.neighborhood += o.neighborhood;
        self.svd += o.svd;
        self.theta += o.theta;
        self.prediction += o.prediction;
    }
}
