//! Prediction scores and Monte Carlo cross-validation splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svdmodel::PredictiveSummary;

/// `sum (y - yhat)^2 / sum (y - mean(y))^2`.
pub fn nmspe(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension(format!("{} truths vs {} predictions", y.len(), yhat.len())));
    }
    if y.len() < 2 {
        return Err(Error::Argument("nmspe needs at least two time points".into()));
    }
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let den: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    if !(den > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    let num: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(num / den)
}

/// `-mean((y - yhat)^2 / var) - mean(ln var)`; higher is better.
pub fn proper_score(y: &[f64], yhat: &[f64], var: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() || y.len() != var.len() {
        return Err(Error::Dimension(format!(
            "lengths {}, {}, {} differ",
            y.len(),
            yhat.len(),
            var.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Argument("empty series".into()));
    }
    if let Some(v) = var.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Argument(format!("predictive variance must be positive, got {v}")));
    }
    let l = y.len() as f64;
    let fit: f64 = y
        .iter()
        .zip(yhat)
        .zip(var)
        .map(|((a, b), v)| (a - b).powi(2) / v)
        .sum();
    let logs: f64 = var.iter().map(|v| v.ln()).sum();
    Ok(-fit / l - logs / l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// `None` where the point failed or could not be scored.
    pub per_point_nmspe: Vec<Option<f64>>,
    pub per_point_score: Vec<Option<f64>>,
    /// Mean over scored points; `None` when nothing was scored.
    pub mean_nmspe: Option<f64>,
    /// Natural log of `mean_nmspe`.
    pub log_mean_nmspe: Option<f64>,
    pub mean_score: Option<f64>,
    /// Points with a constant true series, left out of the NMSPE mean.
    pub excluded_nmspe: usize,
    /// Points whose prediction failed.
    pub failed: usize,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Scores predictions against true series; `preds[j] = None` marks a
/// failed point. A prediction with an empty variance vector gets no proper
/// score.
pub fn score(truth: &[Vec<f64>], preds: &[Option<PredictiveSummary>]) -> Result<ScoreReport> {
    if truth.len() != preds.len() {
        return Err(Error::Dimension(format!(
            "{} true series vs {} predictions",
            truth.len(),
            preds.len()
        )));
    }
    let mut per_point_nmspe = Vec::with_capacity(truth.len());
    let mut per_point_score = Vec::with_capacity(truth.len());
    let (mut excluded_nmspe, mut failed) = (0, 0);
    for (j, (y, p)) in truth.iter().zip(preds).enumerate() {
        let Some(p) = p else {
            failed += 1;
            per_point_nmspe.push(None);
            per_point_score.push(None);
            continue;
        };
        per_point_nmspe.push(match nmspe(y, &p.mean) {
            Ok(v) => Some(v),
            Err(Error::DegenerateDenominator) => {
                log::warn!("test point {j}: constant true series, excluded from NMSPE");
                excluded_nmspe += 1;
                None
            }
            Err(e) => return Err(e),
        });
        per_point_score.push(match proper_score(y, &p.mean, &p.var) {
            _ if p.var.is_empty() => None,
            Ok(v) => Some(v),
            Err(e @ Error::Argument(_)) => {
                log::warn!("test point {j}: {e}");
                None
            }
            Err(e) => return Err(e),
        });
    }
    let mean_nmspe = mean(per_point_nmspe.iter().flatten().copied());
    let mean_score = mean(per_point_score.iter().flatten().copied());
    Ok(ScoreReport {
        log_mean_nmspe: mean_nmspe.map(f64::ln),
        mean_nmspe,
        mean_score,
        per_point_nmspe,
        per_point_score,
        excluded_nmspe,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// `reps` random train/test partitions of `0..n`, the test part holding
/// `round(n * test / (train + test))` indices. Both parts are sorted.
pub fn mc_cv_splits(n: usize, ratio: (u32, u32), reps: usize, seed: u64) -> Result<Vec<Split>> {
    let (a, b) = ratio;
    if a == 0 || b == 0 {
        return Err(Error::Argument(format!("split ratio must be positive, got {a}:{b}")));
    }
    let n_test = ((n as f64) * b as f64 / (a + b) as f64).round() as usize;
    Ok((0..reps)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut test = idx.split_off(n - n_test);
            idx.sort_unstable();
            test.sort_unstable();
            Split { train: idx, test }
        })
        .collect())
}
