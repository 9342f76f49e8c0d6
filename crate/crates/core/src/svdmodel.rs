//! SVD-based GP model: truncated singular basis of the centered responses,
//! one independent GP per retained coefficient, and the Gaussian
//! approximation to the predictive distribution (marginal variances only).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefgp::{map_theta, predict_coef, CoefGpFit, CoefPrediction, CorrParams, PriorSpec, DEFAULT_NUGGET};
use crate::data::{DesignMatrix, ResponseMatrix};
use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::timing::{Phase, PhaseTimings};

pub const DEFAULT_GAMMA: f64 = 0.95;

#[derive(Debug, Clone)]
pub struct SvdBasis {
    /// Leading left singular vectors, `L x p`.
    pub u: DMatrix<f64>,
    /// Leading singular values, length `p`.
    pub d: DVector<f64>,
    /// All `k` singular values.
    pub singular_values: DVector<f64>,
    /// Leading right singular vectors, `N x p`.
    pub v: DMatrix<f64>,
    /// `B = U* D*`, `L x p`.
    pub b: DMatrix<f64>,
    pub p: usize,
    pub k: usize,
    pub gamma: f64,
}

/// Smallest `m` whose cumulative share of the singular-value sum exceeds
/// `gamma`. Singular values are summed as-is, not squared.
pub fn truncation_rank(d: &[f64], gamma: f64) -> usize {
    let total: f64 = d.iter().sum();
    let mut acc = 0.0;
    for (m, di) in d.iter().enumerate() {
        acc += di;
        if acc / total > gamma {
            return m + 1;
        }
    }
    d.len()
}

pub fn build_basis(y: &DMatrix<f64>, gamma: f64) -> Result<SvdBasis> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Argument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if y.ncols() < 2 {
        return Err(Error::Argument("at least two response series are required".into()));
    }
    let s = svd(y)?;
    let k = s.d.len();
    if !(s.d.sum() > 0.0) {
        return Err(Error::DegenerateResponse);
    }
    let p = truncation_rank(s.d.as_slice(), gamma);
    let u = s.u.columns(0, p).into_owned();
    let d = s.d.rows(0, p).into_owned();
    let v = s.v.columns(0, p).into_owned();
    let b = &u * DMatrix::from_diagonal(&d);
    Ok(SvdBasis {
        u,
        d,
        singular_values: s.d,
        v,
        b,
        p,
        k,
        gamma,
    })
}

/// Settings shared by every SVD-GP fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub gamma: f64,
    pub eta: f64,
    pub prior: PriorSpec,
    /// Fit the coefficient processes on the rayon pool.
    pub parallel_coefs: bool,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            eta: DEFAULT_NUGGET,
            prior: PriorSpec::default(),
            parallel_coefs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SvdGpModel {
    pub basis: SvdBasis,
    pub coef_fits: Vec<CoefGpFit>,
    pub sigma2_hat: f64,
    pub design: DesignMatrix,
    pub response_mean: DVector<f64>,
    pub settings: FitSettings,
}

/// Fits an SVD-GP with default optimizer starts.
pub fn fit_svdgp(
    x: &DesignMatrix,
    y: &ResponseMatrix,
    gamma: f64,
    prior: PriorSpec,
    eta: f64,
) -> Result<SvdGpModel> {
    let settings = FitSettings {
        gamma,
        eta,
        prior,
        parallel_coefs: true,
    };
    SvdGpModel::fit(x, y, &settings, None, &mut PhaseTimings::default())
}

impl SvdGpModel {
    /// Fits the model. `warm` optionally supplies one optimizer start per
    /// coefficient (by position); coefficients without one use the default
    /// three starts.
    pub fn fit(
        x: &DesignMatrix,
        y: &ResponseMatrix,
        settings: &FitSettings,
        warm: Option<&[CorrParams]>,
        timings: &mut PhaseTimings,
    ) -> Result<Self> {
        if x.nrows() != y.count() {
            return Err(Error::Dimension(format!(
                "{} design rows but {} response columns",
                x.nrows(),
                y.count()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::Argument("at least two training points are required".into()));
        }
        settings.prior.validate()?;
        let (l, n) = (y.len_series(), y.count());

        let response_mean = y.matrix().column_mean();
        let mut centered = y.matrix().clone();
        for mut col in centered.column_iter_mut() {
            col -= &response_mean;
        }

        let basis = timings.time(Phase::Svd, || build_basis(&centered, settings.gamma))?;
        let resid = &centered - &basis.b * basis.v.transpose();
        let pr = settings.prior;
        let sigma2_hat =
            (resid.norm_squared() + pr.beta_noise) / ((n * l) as f64 + pr.alpha_noise + 2.0);

        let prior = pr.resolved(x)?;
        let defaults = prior.default_starts(x.dim());
        let fit_one = |i: usize| -> Result<CoefGpFit> {
            let v = basis.v.column(i).into_owned();
            let starts = match warm.and_then(|w| w.get(i)) {
                Some(s) if s.dim() == x.dim() => std::slice::from_ref(s),
                _ => defaults.as_slice(),
            };
            map_theta(&v, x, &prior, settings.eta, starts).map_err(|e| Error::Coefficient {
                index: i,
                source: Box::new(e),
            })
        };
        let coef_fits = timings.time(Phase::Theta, || -> Result<Vec<CoefGpFit>> {
            if settings.parallel_coefs {
                (0..basis.p).into_par_iter().map(fit_one).collect()
            } else {
                (0..basis.p).map(fit_one).collect()
            }
        })?;

        Ok(Self {
            basis,
            coef_fits,
            sigma2_hat,
            design: x.clone(),
            response_mean,
            settings: *settings,
        })
    }

    pub fn p(&self) -> usize {
        self.basis.p
    }

    pub fn n_points(&self) -> usize {
        self.design.nrows()
    }

    pub fn thetas(&self) -> Vec<CorrParams> {
        self.coef_fits.iter().map(|f| f.theta_hat.clone()).collect()
    }

    pub fn predict_coefs(&self, x0: &[f64]) -> Result<Vec<CoefPrediction>> {
        self.coef_fits
            .iter()
            .map(|f| predict_coef(x0, f, &self.design))
            .collect()
    }

    /// Predictive mean and marginal variances at `x0`, using the normal
    /// approximation to each coefficient's t predictive.
    pub fn predict(&self, x0: &[f64]) -> Result<PredictiveSummary> {
        let coefs = self.predict_coefs(x0)?;
        let chat = DVector::from_iterator(coefs.len(), coefs.iter().map(|c| c.mean));
        let mean = &self.basis.b * chat + &self.response_mean;
        let l = self.basis.b.nrows();
        let var = (0..l)
            .map(|t| {
                coefs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| self.basis.b[(t, i)].powi(2) * c.scale2)
                    .sum::<f64>()
                    + self.sigma2_hat
            })
            .collect();
        Ok(PredictiveSummary {
            mean: mean.as_slice().to_vec(),
            var,
        })
    }
}
