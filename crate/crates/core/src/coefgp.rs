//! Gaussian-process inference for a single basis coefficient `c_i(x)`.
//!
//! The process variance is integrated out against an inverse-gamma prior,
//! which leaves a marginal posterior over the correlation parameters only.
//! That posterior is maximized in `log theta` with a multistart projected
//! BFGS using the analytic gradient, and the fitted factorization is kept for
//! prediction and for the neighborhood criterion.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{spd_factorize, SpdFactor};
use crate::optim::{self, Objective, Settings};

/// Default nugget added to every correlation diagonal.
pub const DEFAULT_NUGGET: f64 = 1e-6;

/// Inverse squared lengthscales of the anisotropic Gaussian correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CorrParams(Vec<f64>);

impl CorrParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Argument("correlation parameters are empty".into()));
        }
        if let Some(bad) = theta.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::Argument(format!(
                "correlation parameters must be positive and finite, got {bad}"
            )));
        }
        Ok(Self(theta))
    }

    pub fn isotropic(dim: usize, theta: f64) -> Result<Self> {
        Self::new(vec![theta; dim])
    }

    pub fn theta(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Lengthscale-style view `1 / theta_j`, in squared input units.
    pub fn ranges(&self) -> Vec<f64> {
        self.0.iter().map(|t| 1.0 / t).collect()
    }
}

impl TryFrom<Vec<f64>> for CorrParams {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CorrParams> for Vec<f64> {
    fn from(c: CorrParams) -> Self {
        c.0
    }
}

#[inline]
pub(crate) fn corr(x1: &[f64], x2: &[f64], theta: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((a, b), t) in x1.iter().zip(x2).zip(theta) {
        let d = a - b;
        s += t * d * d;
    }
    (-s).exp()
}

/// `exp(-sum_j theta_j (x1_j - x2_j)^2)`.
pub fn gauss_corr(x1: &[f64], x2: &[f64], params: &CorrParams) -> Result<f64> {
    if x1.len() != x2.len() || x1.len() != params.dim() {
        return Err(Error::Dimension(format!(
            "correlation between {}- and {}-vectors with {} parameters",
            x1.len(),
            x2.len(),
            params.dim()
        )));
    }
    Ok(corr(x1, x2, params.theta()))
}

/// Correlation matrix of the design rows, without nugget.
pub fn corr_matrix(x: &DesignMatrix, theta: &[f64]) -> DMatrix<f64> {
    let n = x.nrows();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        let xi = x.row(i);
        for j in 0..i {
            let c = corr(xi, x.row(j), theta);
            k[(i, j)] = c;
            k[(j, i)] = c;
        }
    }
    k
}

/// Correlations between `x0` and every design row.
pub fn cross_corr(x: &DesignMatrix, x0: &[f64], theta: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.nrows(), x.rows().map(|r| corr(r, x0, theta)))
}

/// Hyperparameters of the priors.
///
/// `alpha_coef`/`beta_coef` parameterize `IG(alpha/2, beta/2)` on each
/// coefficient process variance, `alpha_noise`/`beta_noise` the one on the
/// white-noise variance. Each `1 / theta_j` has a Gamma prior with shape
/// `theta_shape`; its scale is `theta_scale` when set, otherwise it is chosen
/// per fit so that the largest squared distance of the design sits at the
/// 95% quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub alpha_coef: f64,
    pub beta_coef: f64,
    pub alpha_noise: f64,
    pub beta_noise: f64,
    pub theta_shape: f64,
    pub theta_scale: Option<f64>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            alpha_coef: 0.0,
            beta_coef: 0.0,
            alpha_noise: 0.0,
            beta_noise: 0.0,
            theta_shape: 1.5,
            theta_scale: None,
        }
    }
}

/// 95% quantile of a unit-scale Gamma(shape).
fn gamma_q95(shape: f64) -> f64 {
    static Q_DEFAULT: OnceLock<f64> = OnceLock::new();
    let compute = |a: f64| {
        Gamma::new(a, 1.0)
            .expect("shape validated")
            .inverse_cdf(0.95)
    };
    if shape == 1.5 {
        *Q_DEFAULT.get_or_init(|| compute(1.5))
    } else {
        compute(shape)
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("alpha_coef", self.alpha_coef),
            ("beta_coef", self.beta_coef),
            ("alpha_noise", self.alpha_noise),
            ("beta_noise", self.beta_noise),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.theta_shape > 0.0 && self.theta_shape.is_finite()) {
            return Err(Error::Argument("theta_shape must be positive".into()));
        }
        if let Some(s) = self.theta_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Argument("theta_scale must be positive".into()));
            }
        }
        Ok(())
    }

    /// Gamma scale for `1/theta` on this design.
    pub fn theta_scale_for(&self, x: &DesignMatrix) -> Result<f64> {
        if let Some(s) = self.theta_scale {
            return Ok(s);
        }
        let dmax = x.max_sq_distance();
        if !(dmax > 0.0) {
            return Err(Error::Argument("design rows are all identical".into()));
        }
        Ok(dmax / gamma_q95(self.theta_shape))
    }

    /// Copy with the theta scale fixed for this design.
    pub fn resolved(&self, x: &DesignMatrix) -> Result<Self> {
        Ok(Self {
            theta_scale: Some(self.theta_scale_for(x)?),
            ..*self
        })
    }

    fn scale(&self) -> f64 {
        self.theta_scale.expect("prior resolved before use")
    }

    /// Log Gamma density of `1/theta_j` (up to a constant), summed over `j`.
    pub fn log_theta_prior(&self, theta: &[f64]) -> f64 {
        let (a, s) = (self.theta_shape, self.scale());
        theta
            .iter()
            .map(|t| -(a - 1.0) * t.ln() - 1.0 / (t * s))
            .sum()
    }

    fn log_theta_prior_dtheta(&self, t: f64) -> f64 {
        let (a, s) = (self.theta_shape, self.scale());
        -(a - 1.0) / t + 1.0 / (t * t * s)
    }

    /// `theta` at the prior mode of `1/theta`.
    pub fn theta_mode(&self) -> f64 {
        let a = self.theta_shape;
        let d = if a > 1.0 { (a - 1.0) * self.scale() } else { self.scale() };
        1.0 / d
    }

    /// Box on `theta` used by the optimizer: `1/theta` lies within
    /// `[1e-8, 10] * max squared distance`.
    fn theta_bounds(&self, x: &DesignMatrix) -> (f64, f64) {
        let dmax = x.max_sq_distance().max(f64::MIN_POSITIVE);
        (1.0 / (10.0 * dmax), 1.0 / (1e-8 * dmax))
    }

    /// The three default optimizer starts: the prior mode and one decade
    /// on either side.
    pub fn default_starts(&self, dim: usize) -> Vec<CorrParams> {
        let m = self.theta_mode();
        [1.0, 10.0, 0.1]
            .iter()
            .map(|f| CorrParams(vec![m * f; dim]))
            .collect()
    }
}

struct Evaluated {
    value: f64,
    k0: DMatrix<f64>,
    factor: SpdFactor,
    kinv_v: DVector<f64>,
    psi: f64,
    theta: Vec<f64>,
}

fn evaluate(
    theta: &[f64],
    v: &DVector<f64>,
    x: &DesignMatrix,
    prior: &PriorSpec,
    eta: f64,
) -> Result<Evaluated> {
    let n = x.nrows() as f64;
    let k0 = corr_matrix(x, theta);
    let factor = spd_factorize(&k0, eta)?;
    let kinv_v = factor.solve(v);
    let psi = v.dot(&kinv_v);
    let denom = prior.beta_coef + psi;
    if !(denom > 0.0) {
        return Err(Error::Argument("beta + psi must be positive".into()));
    }
    let value = -0.5 * factor.log_det() - 0.5 * (prior.alpha_coef + n) * (0.5 * denom).ln()
        + prior.log_theta_prior(theta);
    Ok(Evaluated {
        value,
        k0,
        factor,
        kinv_v,
        psi,
        theta: theta.to_vec(),
    })
}

/// Gradient of the log posterior with respect to `log theta`.
fn gradient_log_theta(e: &Evaluated, x: &DesignMatrix, prior: &PriorSpec) -> Vec<f64> {
    let n = x.nrows();
    let q = x.dim();
    let kinv = e.factor.inverse();
    let a = &e.kinv_v;
    let c = (prior.alpha_coef + n as f64) / (2.0 * (prior.beta_coef + e.psi));
    let mut g = vec![0.0; q];
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..i {
            let m = (0.5 * kinv[(i, j)] - c * a[i] * a[j]) * e.k0[(i, j)];
            let xj = x.row(j);
            for (gl, (u, w)) in g.iter_mut().zip(xi.iter().zip(xj)) {
                let d = u - w;
                *gl += 2.0 * m * d * d;
            }
        }
    }
    g.iter()
        .zip(&e.theta)
        .map(|(gl, t)| t * (gl + prior.log_theta_prior_dtheta(*t)))
        .collect()
}

/// Log marginal posterior of `theta` up to an additive constant:
/// `-1/2 log|K| - (alpha + n)/2 log((beta + psi)/2) + log prior(theta)`.
pub fn log_posterior_theta(
    theta: &CorrParams,
    v: &DVector<f64>,
    x: &DesignMatrix,
    prior: &PriorSpec,
    eta: f64,
) -> Result<f64> {
    check_inputs(v, x, theta.dim())?;
    let prior = prior.resolved(x)?;
    Ok(evaluate(theta.theta(), v, x, &prior, eta)?.value)
}

fn check_inputs(v: &DVector<f64>, x: &DesignMatrix, dim: usize) -> Result<()> {
    if v.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "{} coefficient values for {} design rows",
            v.len(),
            x.nrows()
        )));
    }
    if dim != x.dim() {
        return Err(Error::Dimension(format!(
            "{dim} correlation parameters for a {}-dimensional design",
            x.dim()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::Argument("at least two design points are required".into()));
    }
    Ok(())
}

/// Fitted coefficient process.
#[derive(Debug, Clone)]
pub struct CoefGpFit {
    pub theta_hat: CorrParams,
    pub factor: SpdFactor,
    pub psi: f64,
    pub kinv_v: DVector<f64>,
    pub v: DVector<f64>,
    pub prior: PriorSpec,
    pub eta: f64,
    pub n_points: usize,
    pub log_posterior: f64,
}

struct ThetaObjective<'a> {
    v: &'a DVector<f64>,
    x: &'a DesignMatrix,
    prior: &'a PriorSpec,
    eta: f64,
    trial: Option<Evaluated>,
    current: Option<Evaluated>,
}

impl Objective for ThetaObjective<'_> {
    fn value(&mut self, log_theta: &[f64]) -> Option<f64> {
        let theta: Vec<f64> = log_theta.iter().map(|l| l.exp()).collect();
        match evaluate(&theta, self.v, self.x, self.prior, self.eta) {
            Ok(e) if e.value.is_finite() => {
                let out = -e.value;
                self.trial = Some(e);
                Some(out)
            }
            _ => None,
        }
    }

    fn accept(&mut self) {
        if let Some(t) = self.trial.take() {
            self.current = Some(t);
        }
    }

    fn gradient(&mut self) -> Vec<f64> {
        let e = self.current.as_ref().expect("gradient after an accepted point");
        gradient_log_theta(e, self.x, self.prior)
            .into_iter()
            .map(|g| -g)
            .collect()
    }
}

/// MAP estimate of the correlation parameters from several starts.
///
/// The best local optimum (first one on ties) is returned with its cached
/// factorization. Starts that cannot be factorized are skipped.
pub fn map_theta(
    v: &DVector<f64>,
    x: &DesignMatrix,
    prior: &PriorSpec,
    eta: f64,
    starts: &[CorrParams],
) -> Result<CoefGpFit> {
    if starts.is_empty() {
        return Err(Error::Argument("at least one optimizer start is required".into()));
    }
    check_inputs(v, x, starts[0].dim())?;
    prior.validate()?;
    let prior = prior.resolved(x)?;
    let (tlo, thi) = prior.theta_bounds(x);
    let q = x.dim();
    let lo = vec![tlo.ln(); q];
    let hi = vec![thi.ln(); q];

    let mut best: Option<Evaluated> = None;
    for start in starts {
        if start.dim() != q {
            return Err(Error::Dimension("optimizer starts differ in dimension".into()));
        }
        let mut obj = ThetaObjective {
            v,
            x,
            prior: &prior,
            eta,
            trial: None,
            current: None,
        };
        let s: Vec<f64> = start.theta().iter().map(|t| t.ln()).collect();
        let Some(m) = optim::minimize(&mut obj, &s, &lo, &hi, Settings::default()) else {
            continue;
        };
        log::trace!(
            "theta start {:?} -> log theta {:?}: {} iterations, objective {}",
            start.theta(),
            m.x,
            m.iterations,
            m.value
        );
        let e = obj.current.take().expect("accepted point");
        if best.as_ref().map_or(true, |b| e.value > b.value) {
            best = Some(e);
        }
    }
    let e = best.ok_or(Error::FitFailed)?;
    Ok(CoefGpFit {
        theta_hat: CorrParams(e.theta),
        factor: e.factor,
        psi: e.psi,
        kinv_v: e.kinv_v,
        v: v.clone(),
        prior,
        eta,
        n_points: x.nrows(),
        log_posterior: e.value,
    })
}

/// Student-t predictive of one coefficient at a new input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefPrediction {
    pub mean: f64,
    pub scale2: f64,
    pub dof: f64,
}

impl CoefGpFit {
    /// `(beta + psi) / (alpha + n)`: the factor multiplying the reduced
    /// prior correlation in the predictive scale.
    pub fn variance_factor(&self) -> f64 {
        (self.prior.beta_coef + self.psi) / (self.prior.alpha_coef + self.n_points as f64)
    }
}

pub fn predict_coef(x0: &[f64], fit: &CoefGpFit, x: &DesignMatrix) -> Result<CoefPrediction> {
    if x0.len() != x.dim() || x.nrows() != fit.n_points {
        return Err(Error::Dimension(format!(
            "prediction at a {}-vector against a {}x{} design (fit on {} points)",
            x0.len(),
            x.nrows(),
            x.dim(),
            fit.n_points
        )));
    }
    let k = cross_corr(x, x0, fit.theta_hat.theta());
    let mean = k.dot(&fit.kinv_v);
    let mut w = k;
    fit.factor
        .lower()
        .solve_lower_triangular_unchecked_mut(&mut w);
    let reduction = w.norm_squared();
    let scale2 = (fit.variance_factor() * (1.0 + fit.eta - reduction)).max(0.0);
    Ok(CoefPrediction {
        mean,
        scale2,
        dof: fit.n_points as f64 + fit.prior.alpha_coef,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(rng: &mut ChaCha8Rng, n: usize, q: usize) -> DesignMatrix {
        let data = (0..n * q).map(|_| rng.gen_range(0.0..1.0)).collect();
        DesignMatrix::from_row_major(n, q, data).unwrap()
    }

    fn unit(v: Vec<f64>) -> DVector<f64> {
        let v = DVector::from_vec(v);
        let n = v.norm();
        v / n
    }

    #[test]
    fn corr_examples() {
        let p = CorrParams::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(gauss_corr(&[0.3, 0.2], &[0.3, 0.2], &p).unwrap(), 1.0);
        let v = gauss_corr(&[0.0, 0.0], &[1.0, 1.0], &p).unwrap();
        assert!((v - 0.1353352832366127).abs() < 1e-12);
        let tiny = CorrParams::new(vec![1e-14, 1e-14]).unwrap();
        assert!((gauss_corr(&[0.0, 0.0], &[5.0, -3.0], &tiny).unwrap() - 1.0).abs() < 1e-12);
        assert!(gauss_corr(&[0.0], &[1.0, 1.0], &p).is_err());
        assert!(CorrParams::new(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn two_point_posterior_by_hand() {
        let x = DesignMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let v = unit(vec![1.0, -1.0]);
        let prior = PriorSpec::default();
        for theta in [0.3, 1.0, 2.5] {
            let got =
                log_posterior_theta(&CorrParams::new(vec![theta]).unwrap(), &v, &x, &prior, 0.0)
                    .unwrap();
            // K = [[1, r], [r, 1]]: |K| = 1 - r^2 and psi = 1 / (1 - r).
            let r = (-theta).exp();
            let psi = 1.0 / (1.0 - r);
            let scale = 1.0 / 3.9073639516255896;
            let log_prior = -0.5 * theta.ln() - 1.0 / (theta * scale);
            let want = -0.5 * (1.0 - r * r).ln() - (psi / 2.0).ln() + log_prior;
            assert!((got - want).abs() < 1e-10, "theta {theta}: {got} vs {want}");
        }
    }

    #[test]
    fn prior_enters_additively() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_design(&mut rng, 8, 2);
        let v = unit((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let t = CorrParams::new(vec![3.0, 0.5]).unwrap();
        let base = PriorSpec::default();
        let f1 = log_posterior_theta(&t, &v, &x, &base, 1e-6).unwrap();
        let wider = PriorSpec {
            theta_scale: Some(base.theta_scale_for(&x).unwrap() * 2.0),
            ..base
        };
        let f2 = log_posterior_theta(&t, &v, &x, &wider, 1e-6).unwrap();
        let shift = wider.log_theta_prior(t.theta()) - base.resolved(&x).unwrap().log_theta_prior(t.theta());
        assert!((f2 - f1 - shift).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_design(&mut rng, 12, 3);
        let v = unit((0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let prior = PriorSpec {
            alpha_coef: 1.0,
            beta_coef: 0.3,
            ..PriorSpec::default()
        }
        .resolved(&x)
        .unwrap();
        let theta = vec![2.0, 7.0, 0.7];
        let e = evaluate(&theta, &v, &x, &prior, 1e-6).unwrap();
        let g = gradient_log_theta(&e, &x, &prior);
        for j in 0..3 {
            let h: f64 = 1e-6;
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] *= h.exp();
            dn[j] *= (-h).exp();
            let fd = (evaluate(&up, &v, &x, &prior, 1e-6).unwrap().value
                - evaluate(&dn, &v, &x, &prior, 1e-6).unwrap().value)
                / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-5 * (1.0 + fd.abs()), "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn map_beats_every_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_design(&mut rng, 20, 2);
        let v = unit(x.rows().map(|r| (4.0 * r[0]).sin() + r[1]).collect());
        let prior = PriorSpec::default();
        let starts = prior.resolved(&x).unwrap().default_starts(2);
        let fit = map_theta(&v, &x, &prior, DEFAULT_NUGGET, &starts).unwrap();
        for s in &starts {
            let f = log_posterior_theta(s, &v, &x, &prior, DEFAULT_NUGGET).unwrap();
            assert!(fit.log_posterior >= f);
        }
        assert!(fit.psi >= 0.0);
        assert!((fit.log_posterior - log_posterior_theta(&fit.theta_hat, &v, &x, &prior, DEFAULT_NUGGET).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rows_survive_with_nugget() {
        let x = DesignMatrix::from_rows(&[
            vec![0.1, 0.2],
            vec![0.1, 0.2],
            vec![0.5, 0.9],
            vec![0.8, 0.4],
        ])
        .unwrap();
        let v = unit(vec![0.3, 0.3, -0.5, 0.1]);
        let prior = PriorSpec::default();
        let starts = prior.resolved(&x).unwrap().default_starts(2);
        assert!(map_theta(&v, &x, &prior, DEFAULT_NUGGET, &starts).is_ok());
    }

    /// Draws from a zero-mean GP with `theta* = 4` on 100 points in [0, 1];
    /// the MAP should land within a factor of four in at least 18/20 seeds.
    #[test]
    fn recovers_lengthscale_of_sampled_process() {
        let mut hits = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = random_design(&mut rng, 100, 1);
            let k = corr_matrix(&x, &[4.0]);
            let f = spd_factorize(&k, DEFAULT_NUGGET).unwrap();
            let z = DVector::from_fn(100, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = f.lower() * z;
            let v = &y / y.norm();
            let prior = PriorSpec::default();
            let starts = prior.resolved(&x).unwrap().default_starts(1);
            let fit = map_theta(&v, &x, &prior, DEFAULT_NUGGET, &starts).unwrap();
            let t = fit.theta_hat.theta()[0];
            if (1.0..=16.0).contains(&t) {
                hits += 1;
            }
        }
        assert!(hits >= 18, "recovered in {hits}/20 seeds");
    }

    fn fixed_fit(x: &DesignMatrix, v: &DVector<f64>, theta: Vec<f64>, eta: f64) -> CoefGpFit {
        let prior = PriorSpec::default().resolved(x).unwrap();
        let e = evaluate(&theta, v, x, &prior, eta).unwrap();
        CoefGpFit {
            theta_hat: CorrParams(theta),
            factor: e.factor,
            psi: e.psi,
            kinv_v: e.kinv_v,
            v: v.clone(),
            prior,
            eta,
            n_points: x.nrows(),
            log_posterior: e.value,
        }
    }

    #[test]
    fn interpolates_design_points_without_nugget() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_design(&mut rng, 6, 2);
        let v = unit((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let fit = fixed_fit(&x, &v, vec![5.0, 5.0], 0.0);
        for i in 0..6 {
            let p = predict_coef(x.row(i), &fit, &x).unwrap();
            assert!((p.mean - v[i]).abs() < 1e-9);
            assert!(p.scale2 < 1e-9);
            assert_eq!(p.dof, 6.0);
        }
    }

    #[test]
    fn far_point_reverts_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_design(&mut rng, 6, 2);
        let v = unit((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let eta = 1e-6;
        let fit = fixed_fit(&x, &v, vec![5.0, 5.0], eta);
        let p = predict_coef(&[50.0, 50.0], &fit, &x).unwrap();
        assert!(p.mean.abs() < 1e-12);
        assert!((p.scale2 - fit.psi * (1.0 + eta) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn prediction_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_design(&mut rng, 5, 2);
        let v = unit((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let eta = 1e-6;
        let fit = fixed_fit(&x, &v, vec![2.0, 3.0], eta);
        let x0 = [0.4, 0.6];

        let mut k = DMatrix::zeros(5, 5);
        let mut kv = DVector::zeros(5);
        for i in 0..5 {
            let (a, b) = (x.row(i), &x0);
            kv[i] = (-(2.0 * (a[0] - b[0]).powi(2) + 3.0 * (a[1] - b[1]).powi(2))).exp();
            for j in 0..5 {
                let c = x.row(j);
                k[(i, j)] = (-(2.0 * (a[0] - c[0]).powi(2) + 3.0 * (a[1] - c[1]).powi(2))).exp();
            }
            k[(i, i)] += eta;
        }
        let kinv = k.try_inverse().unwrap();
        let psi = v.dot(&(&kinv * &v));
        let mean = kv.dot(&(&kinv * &v));
        let scale2 = psi * (1.0 + eta - kv.dot(&(&kinv * &kv))) / 5.0;

        let p = predict_coef(&x0, &fit, &x).unwrap();
        assert!((p.mean - mean).abs() < 1e-9);
        assert!((p.scale2 - scale2).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        /// At fixed theta and fixed (beta + psi)/(alpha + n) scaling, adding a
        /// design point cannot increase the reduced correlation term.
        #[test]
        fn adding_a_point_never_increases_reduced_variance(seed in any::<u64>(), n in 3usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_design(&mut rng, n + 1, 2);
            let theta = [rng.gen_range(0.5..20.0), rng.gen_range(0.5..20.0)];
            let x0 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let small = x.select_rows(&(0..n).collect::<Vec<_>>());
            let reduced = |d: &DesignMatrix| {
                let f = spd_factorize(&corr_matrix(d, &theta), DEFAULT_NUGGET).unwrap();
                let k = cross_corr(d, &x0, &theta);
                1.0 + DEFAULT_NUGGET - k.dot(&f.solve(&k))
            };
            prop_assert!(reduced(&x) <= reduced(&small) + 1e-10);
        }

        #[test]
        fn correlation_matrices_are_positive_definite(seed in any::<u64>(), n in 2usize..=50, q in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_design(&mut rng, n, q);
            let theta: Vec<f64> = (0..q).map(|_| rng.gen_range(0.01..50.0)).collect();
            let mut k = corr_matrix(&x, &theta);
            for i in 0..n {
                k[(i, i)] += DEFAULT_NUGGET;
            }
            let eig = nalgebra::SymmetricEigen::new(k.clone());
            prop_assert!(eig.eigenvalues.min() > 0.0);
            prop_assert!((k.transpose() - &k).amax() == 0.0);
        }

        #[test]
        fn posterior_is_permutation_invariant(seed in any::<u64>(), n in 3usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_design(&mut rng, n, 2);
            let v = unit((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let xp = x.select_rows(&perm);
            let vp = DVector::from_iterator(n, perm.iter().map(|&i| v[i]));
            let t = CorrParams::new(vec![rng.gen_range(0.5..10.0), rng.gen_range(0.5..10.0)]).unwrap();
            let a = log_posterior_theta(&t, &v, &x, &PriorSpec::default(), DEFAULT_NUGGET).unwrap();
            let b = log_posterior_theta(&t, &vp, &xp, &PriorSpec::default(), DEFAULT_NUGGET).unwrap();
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()));
        }
    }
}
