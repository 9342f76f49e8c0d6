//! Neighborhood construction for local SVD-GP models: Euclidean nearest
//! neighbors, and greedy selection by the expected squared prediction
//! error at the target after adding one candidate (the J-criterion).

use std::cmp::Ordering;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefgp::{corr, cross_corr};
use crate::data::{sq_distance, DesignMatrix, ResponseMatrix};
use crate::error::{Error, Result};
use crate::linalg::partitioned_inverse_update;
use crate::svdmodel::{FitSettings, PredictiveSummary, SvdGpModel};
use crate::timing::{Phase, PhaseTimings};

/// All design indices ordered by distance to `x0`, ties by lower index.
pub fn distance_order(x: &DesignMatrix, x0: &[f64]) -> Vec<usize> {
    let d: Vec<f64> = x.rows().map(|r| sq_distance(r, x0)).collect();
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    idx
}

/// Indices of the `m` design rows closest to `x0`, nearest first.
pub fn knn(x: &DesignMatrix, x0: &[f64], m: usize) -> Result<Vec<usize>> {
    if x0.len() != x.dim() {
        return Err(Error::Dimension(format!(
            "query has {} coordinates, design has {}",
            x0.len(),
            x.dim()
        )));
    }
    if m == 0 || m > x.nrows() {
        return Err(Error::Argument(format!(
            "asked for {m} neighbors from {} design points",
            x.nrows()
        )));
    }
    let mut idx = distance_order(x, x0);
    idx.truncate(m);
    Ok(idx)
}

/// Candidate set used at each greedy step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SearchScheme {
    /// Every unselected design point.
    Exhaustive,
    /// The `nearest` closest unselected points plus `random` others drawn
    /// uniformly. `None` means `min(N - k, 10 n)` and `min(N - k - nearest, n)`.
    Limit {
        nearest: Option<usize>,
        random: Option<usize>,
    },
}

impl Default for SearchScheme {
    fn default() -> Self {
        SearchScheme::Limit {
            nearest: None,
            random: None,
        }
    }
}

/// Cached pieces of one coefficient process at the target.
#[derive(Debug, Clone)]
struct BasisCache {
    k0: DVector<f64>,
    head_quad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JEvaluation {
    pub candidate_index: usize,
    pub j_value: f64,
    /// `d_i^2` times the coefficient variance at the target after adding
    /// the candidate, one entry per retained basis.
    pub per_basis_terms: Vec<f64>,
}

/// Neighborhood of one prediction point under construction.
#[derive(Debug, Clone)]
pub struct LocalState<'a> {
    x: &'a DesignMatrix,
    y: &'a ResponseMatrix,
    x0: Vec<f64>,
    /// Selected global indices in insertion order.
    selected: Vec<usize>,
    in_set: Vec<bool>,
    order: Vec<usize>,
    /// Global indices of the rows of the local design (ascending).
    fit_rows: Vec<usize>,
    model: SvdGpModel,
    caches: Vec<BasisCache>,
}

impl<'a> LocalState<'a> {
    /// Starts from the given neighbors and fits the local model.
    pub fn new(
        x: &'a DesignMatrix,
        y: &'a ResponseMatrix,
        x0: &[f64],
        initial: &[usize],
        settings: &FitSettings,
        timings: &mut PhaseTimings,
    ) -> Result<Self> {
        check_shapes(x, y, x0)?;
        let mut in_set = vec![false; x.nrows()];
        for &i in initial {
            if i >= x.nrows() || in_set[i] {
                return Err(Error::Argument(format!("invalid or repeated neighbor index {i}")));
            }
            in_set[i] = true;
        }
        let order = timings.time(Phase::Neighborhood, || distance_order(x, x0));
        let (fit_rows, model) = fit_local(x, y, initial, settings, None, timings)?;
        let mut s = Self {
            x,
            y,
            x0: x0.to_vec(),
            selected: initial.to_vec(),
            in_set,
            order,
            fit_rows,
            model,
            caches: Vec::new(),
        };
        s.refresh_caches();
        Ok(s)
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn k(&self) -> usize {
        self.selected.len()
    }

    pub fn is_selected(&self, i: usize) -> bool {
        self.in_set.get(i).copied().unwrap_or(false)
    }

    pub fn model(&self) -> &SvdGpModel {
        &self.model
    }

    pub fn predict(&self) -> Result<PredictiveSummary> {
        self.model.predict(&self.x0)
    }

    /// Adds `index` to the neighborhood and refits the local model, warm
    /// starting each coefficient from its current estimate.
    pub fn append(&mut self, index: usize, settings: &FitSettings, timings: &mut PhaseTimings) -> Result<()> {
        if self.is_selected(index) || index >= self.x.nrows() {
            return Err(Error::Argument(format!("index {index} is selected or out of range")));
        }
        let mut next = self.selected.clone();
        next.push(index);
        let warm = self.model.thetas();
        let old_p = self.model.p();
        let (fit_rows, model) = fit_local(self.x, self.y, &next, settings, Some(&warm), timings)?;
        if model.p() != old_p {
            log::debug!("local basis size {} -> {} at k = {}", old_p, model.p(), next.len());
        }
        self.in_set[index] = true;
        self.selected = next;
        self.fit_rows = fit_rows;
        self.model = model;
        self.refresh_caches();
        Ok(())
    }

    fn refresh_caches(&mut self) {
        let design = &self.model.design;
        self.caches = self
            .model
            .coef_fits
            .iter()
            .map(|f| {
                let k0 = cross_corr(design, &self.x0, f.theta_hat.theta());
                let head_quad = f.factor.half_solve(&k0).norm_squared();
                BasisCache { k0, head_quad }
            })
            .collect();
    }

    /// Coefficient variance terms at the target with no augmentation.
    pub fn baseline_terms(&self) -> Vec<f64> {
        let k = self.k() as f64;
        self.model
            .coef_fits
            .iter()
            .zip(&self.caches)
            .zip(self.model.basis.d.iter())
            .map(|((f, c), d)| {
                let rho = (1.0 + f.eta - c.head_quad).max(0.0);
                d * d * coef_scale(rho, f.prior.alpha_coef, f.prior.beta_coef, f.psi, k)
            })
            .collect()
    }

    /// Expected squared error at the target after adding `candidate`, with
    /// the basis, hyperparameters and noise held at their current values.
    ///
    /// Reuses the Cholesky factor of each local correlation matrix, so one
    /// call costs `O(p k^2)`. A candidate that duplicates a selected point returns
    /// the degeneracy error.
    pub fn j_criterion(&self, candidate: usize) -> Result<JEvaluation> {
        if candidate >= self.x.nrows() {
            return Err(Error::Argument(format!("candidate {candidate} out of range")));
        }
        if self.in_set[candidate] {
            return Err(Error::Argument(format!("candidate {candidate} is already selected")));
        }
        let xc = self.x.row(candidate);
        let design = &self.model.design;
        let k = self.k() as f64;
        let mut terms = Vec::with_capacity(self.model.p());
        for ((f, c), d) in self
            .model
            .coef_fits
            .iter()
            .zip(&self.caches)
            .zip(self.model.basis.d.iter())
        {
            let theta = f.theta_hat.theta();
            let kx = cross_corr(design, xc, theta);
            let upd = partitioned_inverse_update(&f.factor, &kx, 1.0 + f.eta)?;
            let tail = corr(&self.x0, xc, theta);
            let rho = (1.0 + f.eta - upd.quad_form_with(c.head_quad, &c.k0, tail)).max(0.0);
            terms.push(d * d * coef_scale(rho, f.prior.alpha_coef, f.prior.beta_coef, f.psi, k));
        }
        let l = self.model.basis.b.nrows() as f64;
        Ok(JEvaluation {
            candidate_index: candidate,
            j_value: self.model.sigma2_hat * l + terms.iter().sum::<f64>(),
            per_basis_terms: terms,
        })
    }

    /// Candidate indices for the next step, ascending.
    pub fn candidates<R: Rng + ?Sized>(&self, scheme: SearchScheme, n: usize, rng: &mut R) -> Vec<usize> {
        let unselected = self.x.nrows() - self.k();
        let mut out = match scheme {
            SearchScheme::Exhaustive => (0..self.x.nrows()).filter(|&i| !self.in_set[i]).collect(),
            SearchScheme::Limit { nearest, random } => {
                let m_lim = nearest.unwrap_or(10 * n).min(unselected);
                let r_lim = random.unwrap_or(n).min(unselected - m_lim);
                let mut near = Vec::with_capacity(m_lim);
                let mut rest = Vec::new();
                for &i in &self.order {
                    if self.in_set[i] {
                        continue;
                    }
                    if near.len() < m_lim {
                        near.push(i);
                    } else {
                        rest.push(i);
                    }
                }
                if r_lim > 0 {
                    // Draw from a canonical ordering so the subset depends only on the RNG.
                    rest.sort_unstable();
                    near.extend(sample(rng, rest.len(), r_lim).into_iter().map(|j| rest[j]));
                }
                near
            }
        };
        out.sort_unstable();
        out
    }

    /// Minimizer of the J-criterion over the scheme's candidate set; ties go
    /// to the lower global index. Degenerate candidates are skipped.
    pub fn select_next<R: Rng + ?Sized>(&self, scheme: SearchScheme, n: usize, rng: &mut R) -> Result<JEvaluation> {
        let cands = self.candidates(scheme, n, rng);
        let evals: Vec<Option<JEvaluation>> = cands
            .par_iter()
            .map(|&c| match self.j_criterion(c) {
                Ok(e) if !e.j_value.is_nan() => Some(e),
                Ok(_) => None,
                Err(Error::Degenerate { .. }) => None,
                Err(e) => {
                    log::warn!("candidate {c}: {e}");
                    None
                }
            })
            .collect();
        evals
            .into_iter()
            .flatten()
            .min_by(|a, b| match a.j_value.partial_cmp(&b.j_value) {
                Some(Ordering::Equal) | None => a.candidate_index.cmp(&b.candidate_index),
                Some(o) => o,
            })
            .ok_or(Error::NoCandidate)
    }
}

/// `rho (beta + (alpha + k)/(alpha + k - 1) psi) / (alpha + k)`.
fn coef_scale(rho: f64, alpha: f64, beta: f64, psi: f64, k: f64) -> f64 {
    let a = alpha + k;
    rho * (beta + a / (a - 1.0) * psi) / a
}

fn check_shapes(x: &DesignMatrix, y: &ResponseMatrix, x0: &[f64]) -> Result<()> {
    if x.nrows() != y.count() {
        return Err(Error::Dimension(format!(
            "{} design rows but {} response columns",
            x.nrows(),
            y.count()
        )));
    }
    if x0.len() != x.dim() {
        return Err(Error::Dimension(format!(
            "query has {} coordinates, design has {}",
            x0.len(),
            x.dim()
        )));
    }
    Ok(())
}

/// Fits an SVD-GP on the given rows taken in ascending index order, so the
/// fit depends only on the set of rows.
pub fn fit_local(
    x: &DesignMatrix,
    y: &ResponseMatrix,
    rows: &[usize],
    settings: &FitSettings,
    warm: Option<&[crate::coefgp::CorrParams]>,
    timings: &mut PhaseTimings,
) -> Result<(Vec<usize>, SvdGpModel)> {
    let mut sorted = rows.to_vec();
    sorted.sort_unstable();
    let model = SvdGpModel::fit(
        &x.select_rows(&sorted),
        &y.select_columns(&sorted),
        settings,
        warm,
        timings,
    )?;
    Ok((sorted, model))
}

/// Grows a neighborhood of `x0` from its `n0` nearest neighbors to `n`
/// points, adding the J-criterion minimizer at each step.
#[allow(clippy::too_many_arguments)]
pub fn build_neighborhood<'a, R: Rng + ?Sized>(
    x: &'a DesignMatrix,
    y: &'a ResponseMatrix,
    x0: &[f64],
    n: usize,
    n0: usize,
    settings: &FitSettings,
    scheme: SearchScheme,
    rng: &mut R,
    timings: &mut PhaseTimings,
) -> Result<LocalState<'a>> {
    if !(2 <= n0 && n0 <= n && n <= x.nrows()) {
        return Err(Error::Argument(format!(
            "need 2 <= n0 <= n <= N, got n0 = {n0}, n = {n}, N = {}",
            x.nrows()
        )));
    }
    check_shapes(x, y, x0)?;
    let init = timings.time(Phase::Neighborhood, || knn(x, x0, n0))?;
    let wrap = |k: usize| move |e: Error| Error::Neighborhood { k, source: Box::new(e) };
    let mut state = LocalState::new(x, y, x0, &init, settings, timings).map_err(wrap(n0))?;
    for k in n0..n {
        let pick = timings
            .time(Phase::Neighborhood, || state.select_next(scheme, n, rng))
            .map_err(wrap(k))?;
        state
            .append(pick.candidate_index, settings, timings)
            .map_err(wrap(k + 1))?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefgp::{corr_matrix, PriorSpec};
    use crate::linalg::spd_factorize;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_design(rng: &mut ChaCha8Rng, n: usize, q: usize) -> DesignMatrix {
        let data = (0..n * q).map(|_| rng.gen_range(0.0..1.0)).collect();
        DesignMatrix::from_row_major(n, q, data).unwrap()
    }

    fn responses(x: &DesignMatrix, l: usize) -> ResponseMatrix {
        let cols: Vec<Vec<f64>> = x
            .rows()
            .map(|r| {
                (0..l)
                    .map(|t| {
                        let s = t as f64 / (l - 1) as f64;
                        (4.0 * r[0] * s).sin() * (1.0 + r[1]) + (r[1] - 0.3).powi(2) * s
                    })
                    .collect()
            })
            .collect();
        ResponseMatrix::from_columns(&cols).unwrap()
    }

    fn settings() -> FitSettings {
        FitSettings {
            gamma: 0.99,
            ..FitSettings::default()
        }
    }

    /// J assembled from a fresh factorization of the augmented matrix.
    fn direct_j(state: &LocalState, candidate: usize) -> f64 {
        let m = state.model();
        let k = state.k() as f64;
        let aug_rows: Vec<usize> = state.fit_rows.iter().copied().chain([candidate]).collect();
        let xa = state.x.select_rows(&aug_rows);
        let mut j = m.sigma2_hat * m.basis.b.nrows() as f64;
        for (f, d) in m.coef_fits.iter().zip(m.basis.d.iter()) {
            let theta = f.theta_hat.theta();
            let fac = spd_factorize(&corr_matrix(&xa, theta), f.eta).unwrap();
            let kt = cross_corr(&xa, state.x0(), theta);
            let rho = 1.0 + f.eta - kt.dot(&fac.solve(&kt));
            let a = f.prior.alpha_coef + k;
            j += d * d * rho.max(0.0) * (f.prior.beta_coef + a / (a - 1.0) * f.psi) / a;
        }
        j
    }

    #[test]
    fn knn_basic_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_design(&mut rng, 20, 2);
        let all = knn(&x, &[0.5, 0.5], 20).unwrap();
        let mut s = all.clone();
        s.sort_unstable();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
        assert_eq!(knn(&x, x.row(7), 1).unwrap(), vec![7]);
        assert!(knn(&x, &[0.5, 0.5], 21).is_err());
        assert!(knn(&x, &[0.5, 0.5], 0).is_err());
    }

    #[test]
    fn knn_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_design(&mut rng, 20, 2);
        let x0 = [0.3, 0.7];
        let mut pairs: Vec<(f64, usize)> = (0..20)
            .map(|i| {
                let r = x.row(i);
                (((r[0] - x0[0]).powi(2) + (r[1] - x0[1]).powi(2)).sqrt(), i)
            })
            .collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<usize> = pairs.iter().take(5).map(|p| p.1).collect();
        assert_eq!(knn(&x, &x0, 5).unwrap(), want);
    }

    #[test]
    fn knn_ties_go_to_lower_index() {
        let x = DesignMatrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(knn(&x, &[0.0], 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn fast_j_matches_direct_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x = random_design(&mut rng, 40, 2);
            let y = responses(&x, 15);
            let x0 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let init = knn(&x, &x0, 10).unwrap();
            let st = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
            for c in (0..40).filter(|&c| !st.is_selected(c)) {
                let fast = st.j_criterion(c).unwrap();
                let direct = direct_j(&st, c);
                assert!((fast.j_value - direct).abs() <= 1e-8 * direct.abs().max(1.0), "{} vs {}", fast.j_value, direct);
                let total: f64 = fast.per_basis_terms.iter().sum::<f64>() + st.model().sigma2_hat * 15.0;
                assert!((total - fast.j_value).abs() < 1e-14 * total.max(1.0));
                assert!(fast.per_basis_terms.iter().all(|t| *t >= 0.0));
            }
        }
    }

    #[test]
    fn coincident_candidate_leaves_only_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = random_design(&mut rng, 25, 2);
        let x0 = [0.41, 0.52];
        let mut rows: Vec<Vec<f64>> = x.rows().map(|r| r.to_vec()).collect();
        rows[24] = x0.to_vec();
        x = DesignMatrix::from_rows(&rows).unwrap();
        let y = responses(&x, 12);
        let s = FitSettings {
            eta: 1e-10,
            ..settings()
        };
        let order = distance_order(&x, &x0);
        let init: Vec<usize> = order.iter().copied().filter(|&i| i != 24).take(8).collect();
        let st = LocalState::new(&x, &y, &x0, &init, &s, &mut PhaseTimings::default()).unwrap();
        let j = st.j_criterion(24).unwrap();
        let noise = st.model().sigma2_hat * 12.0;
        let base: f64 = st.baseline_terms().iter().sum();
        assert!(j.j_value - noise <= 1e-6 * base, "{} {} {}", j.j_value, noise, base);
    }

    #[test]
    fn duplicate_candidate_is_degenerate_and_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = random_design(&mut rng, 12, 2);
        let mut rows: Vec<Vec<f64>> = x0.rows().map(|r| r.to_vec()).collect();
        rows.push(rows[0].clone());
        let x = DesignMatrix::from_rows(&rows).unwrap();
        let y = responses(&x, 10);
        let s = FitSettings { eta: 0.0, ..settings() };
        let q = x.row(0).to_vec();
        let st = LocalState::new(&x, &y, &q, &[0, 1, 2, 3, 4, 5], &s, &mut PhaseTimings::default()).unwrap();
        assert!(matches!(st.j_criterion(12), Err(Error::Degenerate { .. })));
        let pick = st.select_next(SearchScheme::Exhaustive, 7, &mut rng).unwrap();
        assert_ne!(pick.candidate_index, 12);
    }

    #[test]
    fn exhaustive_selection_is_brute_force_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_design(&mut rng, 16, 2);
        let y = responses(&x, 10);
        let x0 = [0.6, 0.4];
        let init = knn(&x, &x0, 6).unwrap();
        let st = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
        let mut best = (f64::INFINITY, usize::MAX);
        for c in 0..16 {
            if st.is_selected(c) {
                continue;
            }
            let j = st.j_criterion(c).unwrap().j_value;
            if j < best.0 {
                best = (j, c);
            }
        }
        let pick = st.select_next(SearchScheme::Exhaustive, 8, &mut rng).unwrap();
        assert_eq!(pick.candidate_index, best.1);
    }

    #[test]
    fn limit_covering_everything_equals_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_design(&mut rng, 30, 2);
        let y = responses(&x, 10);
        let x0 = [0.2, 0.9];
        let init = knn(&x, &x0, 5).unwrap();
        let st = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
        let lim = SearchScheme::Limit {
            nearest: Some(15),
            random: Some(20),
        };
        assert_eq!(
            st.candidates(lim, 10, &mut rng),
            st.candidates(SearchScheme::Exhaustive, 10, &mut rng)
        );
        let a = st.select_next(lim, 10, &mut rng).unwrap();
        let b = st.select_next(SearchScheme::Exhaustive, 10, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn limit_defaults_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_design(&mut rng, 200, 2);
        let y = responses(&x, 8);
        let x0 = [0.5, 0.5];
        let init = knn(&x, &x0, 4).unwrap();
        let st = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
        let c1 = st.candidates(SearchScheme::default(), 8, &mut ChaCha8Rng::seed_from_u64(1));
        let c2 = st.candidates(SearchScheme::default(), 8, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(c1, c2);
        assert_eq!(c1.len(), 80 + 8);
        let near: Vec<usize> = distance_order(&x, &x0)[4..84].to_vec();
        assert!(near.iter().all(|i| c1.binary_search(i).is_ok()));
        assert!(c1.iter().all(|&i| !st.is_selected(i)));
    }

    #[test]
    fn single_candidate_is_chosen() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_design(&mut rng, 7, 2);
        let y = responses(&x, 10);
        let x0 = [0.5, 0.5];
        let init = knn(&x, &x0, 6).unwrap();
        let left = (0..7).find(|i| !init.contains(i)).unwrap();
        let st = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
        assert_eq!(st.select_next(SearchScheme::Exhaustive, 7, &mut rng).unwrap().candidate_index, left);
    }

    #[test]
    fn build_contains_initial_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_design(&mut rng, 120, 2);
        let y = responses(&x, 12);
        let x0 = [0.33, 0.66];
        let st = build_neighborhood(
            &x,
            &y,
            &x0,
            16,
            8,
            &settings(),
            SearchScheme::default(),
            &mut rng,
            &mut PhaseTimings::default(),
        )
        .unwrap();
        assert_eq!(st.k(), 16);
        let init = knn(&x, &x0, 8).unwrap();
        assert_eq!(&st.selected()[..8], init.as_slice());
        let mut s = st.selected().to_vec();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 16);
        assert!(st.model().p() <= 12);
        let p = st.predict().unwrap();
        assert_eq!(p.mean.len(), 12);
    }

    #[test]
    fn one_step_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_design(&mut rng, 30, 2);
        let y = responses(&x, 10);
        let x0 = [0.1, 0.2];
        let st = build_neighborhood(
            &x,
            &y,
            &x0,
            7,
            6,
            &settings(),
            SearchScheme::Exhaustive,
            &mut rng,
            &mut PhaseTimings::default(),
        )
        .unwrap();
        let init = knn(&x, &x0, 6).unwrap();
        let first = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
        let pick = first.select_next(SearchScheme::Exhaustive, 7, &mut rng).unwrap();
        assert_eq!(st.selected()[6], pick.candidate_index);
    }

    #[test]
    fn build_rejects_bad_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_design(&mut rng, 10, 2);
        let y = responses(&x, 5);
        let mut t = PhaseTimings::default();
        for (n, n0) in [(5, 1), (4, 5), (11, 3)] {
            assert!(build_neighborhood(&x, &y, &[0.5, 0.5], n, n0, &settings(), SearchScheme::Exhaustive, &mut rng, &mut t).is_err());
        }
    }

    #[test]
    fn knn_permutation_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_design(&mut rng, 25, 3);
        let mut perm: Vec<usize> = (0..25).collect();
        perm.reverse();
        perm.swap(3, 17);
        let xp = x.select_rows(&perm);
        let x0 = [0.4, 0.5, 0.6];
        let a = knn(&x, &x0, 9).unwrap();
        let b: Vec<usize> = knn(&xp, &x0, 9).unwrap().into_iter().map(|i| perm[i]).collect();
        assert_eq!(a, b);
    }

    fn small_state(seed: u64, n: usize, k: usize) -> (DesignMatrix, ResponseMatrix, Vec<usize>, [f64; 2]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_design(&mut rng, n, 2);
        let y = responses(&x, 8);
        let x0 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let init = knn(&x, &x0, k).unwrap();
        (x, y, init, x0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn adding_a_point_never_increases_coefficient_variance(seed in 0u64..10_000, k in 4usize..12) {
            let (x, y, init, x0) = small_state(seed, 30, k);
            let st = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
            let base: f64 = st.baseline_terms().iter().sum();
            for c in (0..30).filter(|&c| !st.is_selected(c)) {
                if let Ok(e) = st.j_criterion(c) {
                    let s: f64 = e.per_basis_terms.iter().sum();
                    prop_assert!(s <= base * (1.0 + 1e-10) + 1e-15);
                }
            }
        }

        #[test]
        fn fast_path_matches_direct(seed in 0u64..10_000, k in 3usize..20) {
            let (x, y, init, x0) = small_state(seed, 35, k);
            let st = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
            for c in (0..35).filter(|&c| !st.is_selected(c)).take(5) {
                let fast = st.j_criterion(c).unwrap().j_value;
                prop_assert!((fast - direct_j(&st, c)).abs() <= 1e-7);
            }
        }

        #[test]
        fn selection_deterministic_given_seed(seed in 0u64..10_000) {
            let (x, y, init, x0) = small_state(seed, 60, 5);
            let st = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
            let s = SearchScheme::Limit { nearest: Some(10), random: Some(5) };
            let a = st.select_next(s, 10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = st.select_next(s, 10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn prior_scale_is_per_fit() {
        let (x, y, init, x0) = small_state(99, 30, 6);
        let st = LocalState::new(&x, &y, &x0, &init, &settings(), &mut PhaseTimings::default()).unwrap();
        let sub = x.select_rows(&st.fit_rows);
        let want = PriorSpec::default().theta_scale_for(&sub).unwrap();
        assert_eq!(st.model().coef_fits[0].prior.theta_scale, Some(want));
    }
}
