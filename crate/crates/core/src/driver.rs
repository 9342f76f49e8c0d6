//! Runs the three emulators over a test set and assembles reports.
//!
//! Test points are independent: each is one task on a rayon pool sized by
//! [`ExperimentConfig::resolved_workers`]. Random candidate subsets use a
//! ChaCha stream keyed by the point index, so results do not depend on the
//! worker count or scheduling.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefgp::PriorSpec;
use crate::config::{DataSource, ExperimentConfig, Method, FULL_FIT_LIMIT};
use crate::data::{DesignMatrix, ResponseMatrix};
use crate::error::{Error, Result};
use crate::metrics::{mc_cv_splits, score, ScoreReport};
use crate::neighborhood::{build_neighborhood, fit_local, knn, LocalState, SearchScheme};
use crate::simulators::{self, Simulator, TimeGrid};
use crate::svdmodel::{FitSettings, PredictiveSummary, SvdGpModel};
use crate::timing::{Phase, PhaseTimings};

/// Training data and the points to predict.
#[derive(Debug, Clone)]
pub struct Problem {
    pub train_x: DesignMatrix,
    pub train_y: ResponseMatrix,
    pub test_x: DesignMatrix,
    /// True test responses (`L x M`), when known.
    pub test_y: Option<ResponseMatrix>,
}

impl Problem {
    pub fn new(
        train_x: DesignMatrix,
        train_y: ResponseMatrix,
        test_x: DesignMatrix,
        test_y: Option<ResponseMatrix>,
    ) -> Result<Self> {
        if train_x.nrows() != train_y.count() {
            return Err(Error::Dimension(format!(
                "{} training inputs but {} training series",
                train_x.nrows(),
                train_y.count()
            )));
        }
        if test_x.nrows() > 0 && test_x.dim() != train_x.dim() {
            return Err(Error::Dimension(format!(
                "test inputs have {} columns, training inputs {}",
                test_x.dim(),
                train_x.dim()
            )));
        }
        if let Some(ty) = &test_y {
            if ty.count() != test_x.nrows() || ty.len_series() != train_y.len_series() {
                return Err(Error::Dimension(format!(
                    "test responses are {}x{}, expected {}x{}",
                    ty.len_series(),
                    ty.count(),
                    train_y.len_series(),
                    test_x.nrows()
                )));
            }
        }
        Ok(Self {
            train_x,
            train_y,
            test_x,
            test_y,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_x.nrows()
    }

    pub fn n_test(&self) -> usize {
        self.test_x.nrows()
    }

    /// Train and test sets of a built-in simulator on fresh Latin
    /// hypercubes, seeded by `seed`.
    pub fn builtin(sim: Simulator, n_train: usize, n_test: usize, grid: &TimeGrid, seed: u64) -> Result<Self> {
        let dom = sim.domain();
        let train_x = simulators::lhd(n_train, &dom, derive_seed(seed, 0));
        let test_x = simulators::lhd(n_test, &dom, derive_seed(seed, 1));
        let train_y = sim.eval_design(&train_x, grid)?;
        let test_y = sim.eval_design(&test_x, grid)?;
        Self::new(train_x, train_y, test_x, Some(test_y))
    }

    /// Subsets of one dataset.
    pub fn from_split(x: &DesignMatrix, y: &ResponseMatrix, train: &[usize], test: &[usize]) -> Result<Self> {
        Self::new(
            x.select_rows(train),
            y.select_columns(train),
            x.select_rows(test),
            Some(y.select_columns(test)),
        )
    }
}

/// Independent 64-bit seed for sub-task `k` of `seed`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r.next_u64()
}

/// Settings that identify a run, echoed in its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub method: Method,
    pub n: Option<usize>,
    pub n0: Option<usize>,
    pub gamma: f64,
    pub eta: f64,
    pub prior: PriorSpec,
    pub scheme: Option<SearchScheme>,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub series_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPoint {
    pub index: usize,
    pub error: String,
}

/// Machine-dependent facts about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub workers: usize,
    pub wall_seconds: f64,
    /// Per-phase time summed over test points.
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    /// Present when true test responses are known.
    pub score: Option<ScoreReport>,
    /// Number of retained bases -> number of test points; failed points
    /// are listed in `failed` instead.
    pub p_histogram: BTreeMap<usize, usize>,
    pub failed: Vec<FailedPoint>,
    pub predictions: Option<Vec<Option<PredictiveSummary>>>,
    /// Per point, one correlation parameter vector per retained basis.
    pub thetas: Option<Vec<Option<Vec<Vec<f64>>>>>,
    pub execution: Execution,
}

struct PointOutcome {
    pred: Result<PredictiveSummary>,
    thetas: Vec<Vec<f64>>,
    p: usize,
    timings: PhaseTimings,
}

fn outcome_from_model(model: &SvdGpModel, x0: &[f64], mut timings: PhaseTimings) -> PointOutcome {
    let pred = timings.time(Phase::Prediction, || model.predict(x0));
    PointOutcome {
        pred,
        thetas: model.thetas().into_iter().map(Vec::from).collect(),
        p: model.p(),
        timings,
    }
}

fn failed_outcome(e: Error, timings: PhaseTimings) -> PointOutcome {
    PointOutcome {
        pred: Err(e),
        thetas: Vec::new(),
        p: 0,
        timings,
    }
}

/// knnsvdGP at one point: fit on the `n` nearest neighbors.
pub fn fit_knnsvdgp(
    x: &DesignMatrix,
    y: &ResponseMatrix,
    x0: &[f64],
    n: usize,
    settings: &FitSettings,
    timings: &mut PhaseTimings,
) -> Result<SvdGpModel> {
    let rows = timings.time(Phase::Neighborhood, || knn(x, x0, n))?;
    Ok(fit_local(x, y, &rows, settings, None, timings)?.1)
}

/// lasvdGP at one point: grow the neighborhood, then refit on it.
#[allow(clippy::too_many_arguments)]
pub fn fit_lasvdgp<'a>(
    x: &'a DesignMatrix,
    y: &'a ResponseMatrix,
    x0: &[f64],
    n: usize,
    n0: usize,
    settings: &FitSettings,
    scheme: SearchScheme,
    rng: &mut ChaCha8Rng,
    timings: &mut PhaseTimings,
) -> Result<LocalState<'a>> {
    build_neighborhood(x, y, x0, n, n0, settings, scheme, rng, timings)
}

fn echo(cfg: &ExperimentConfig, problem: &Problem, seed: u64) -> ConfigEcho {
    ConfigEcho {
        method: cfg.method,
        n: cfg.method.is_local().then_some(cfg.n).flatten(),
        n0: cfg.initial_size(),
        gamma: cfg.gamma,
        eta: cfg.eta,
        prior: cfg.prior,
        scheme: (cfg.method == Method::Lasvdgp).then_some(cfg.scheme),
        seed,
        n_train: problem.n_train(),
        n_test: problem.n_test(),
        series_len: problem.train_y.len_series(),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn assemble(
    cfg: &ExperimentConfig,
    problem: &Problem,
    seed: u64,
    outcomes: Vec<PointOutcome>,
    mut timings: PhaseTimings,
    workers: usize,
    started: Instant,
) -> Result<RunReport> {
    let mut p_histogram = BTreeMap::new();
    let mut failed = Vec::new();
    let mut preds = Vec::with_capacity(outcomes.len());
    let mut thetas = Vec::with_capacity(outcomes.len());
    for (j, o) in outcomes.into_iter().enumerate() {
        timings += o.timings;
        match o.pred {
            Ok(p) => {
                *p_histogram.entry(o.p).or_insert(0) += 1;
                preds.push(Some(p));
                thetas.push(Some(o.thetas));
            }
            Err(e) => {
                log::warn!("test point {j} failed: {e}");
                failed.push(FailedPoint {
                    index: j,
                    error: e.to_string(),
                });
                preds.push(None);
                thetas.push(None);
            }
        }
    }
    let score = match &problem.test_y {
        Some(ty) => {
            let truth: Vec<Vec<f64>> = (0..ty.count()).map(|j| ty.column(j).as_slice().to_vec()).collect();
            Some(score(&truth, &preds)?)
        }
        None => None,
    };
    Ok(RunReport {
        config: echo(cfg, problem, seed),
        score,
        p_histogram,
        failed,
        predictions: (cfg.keep_predictions || cfg.dump_dir.is_some()).then_some(preds),
        thetas: cfg.keep_thetas.then_some(thetas),
        execution: Execution {
            workers,
            wall_seconds: started.elapsed().as_secs_f64(),
            timings,
        },
    })
}

/// One global SVD-GP fit on all training data, then prediction at every
/// test point.
pub fn run_svdgp(problem: &Problem, cfg: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    let started = Instant::now();
    let n = problem.n_train();
    if n > FULL_FIT_LIMIT {
        if !cfg.force {
            return Err(Error::SizeGuard { n, limit: FULL_FIT_LIMIT });
        }
        log::warn!("fitting a full model on N = {n} points");
    }
    let workers = cfg.resolved_workers();
    let settings = FitSettings {
        parallel_coefs: true,
        ..cfg.fit_settings()
    };
    let mut timings = PhaseTimings::default();
    let outcomes = pool(workers)?.install(|| -> Result<Vec<PointOutcome>> {
        let model = SvdGpModel::fit(&problem.train_x, &problem.train_y, &settings, None, &mut timings)?;
        Ok((0..problem.n_test())
            .into_par_iter()
            .map(|j| outcome_from_model(&model, problem.test_x.row(j), PhaseTimings::default()))
            .collect())
    })?;
    assemble(cfg, problem, seed, outcomes, timings, workers, started)
}

fn local_size(cfg: &ExperimentConfig, problem: &Problem) -> Result<usize> {
    let n = cfg
        .n
        .ok_or_else(|| Error::Config(format!("{:?} needs n", cfg.method)))?;
    if n < 2 || n > problem.n_train() {
        return Err(Error::Config(format!(
            "neighborhood size {n} must lie in [2, N = {}]",
            problem.n_train()
        )));
    }
    Ok(n)
}

/// Fits a separate SVD-GP on the `n` nearest training points of every
/// test point.
pub fn run_knnsvdgp(problem: &Problem, cfg: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    let started = Instant::now();
    let n = local_size(cfg, problem)?;
    let workers = cfg.resolved_workers();
    let settings = cfg.fit_settings();
    let outcomes = pool(workers)?.install(|| {
        (0..problem.n_test())
            .into_par_iter()
            .map(|j| {
                let x0 = problem.test_x.row(j);
                let mut t = PhaseTimings::default();
                match fit_knnsvdgp(&problem.train_x, &problem.train_y, x0, n, &settings, &mut t) {
                    Ok(m) => outcome_from_model(&m, x0, t),
                    Err(e) => failed_outcome(e, t),
                }
            })
            .collect::<Vec<_>>()
    });
    assemble(cfg, problem, seed, outcomes, PhaseTimings::default(), workers, started)
}

/// lasvdGP: per test point, grow a neighborhood by the J-criterion and
/// predict from the final local fit.
pub fn run_lasvdgp(problem: &Problem, cfg: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    let started = Instant::now();
    let n = local_size(cfg, problem)?;
    let n0 = cfg.initial_size().unwrap_or(n);
    if !(2..=n).contains(&n0) {
        return Err(Error::Config(format!("need 2 <= n0 <= n, got n0 = {n0}, n = {n}")));
    }
    let workers = cfg.resolved_workers();
    let settings = cfg.fit_settings();
    let outcomes = pool(workers)?.install(|| {
        (0..problem.n_test())
            .into_par_iter()
            .map(|j| {
                let x0 = problem.test_x.row(j);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                let mut t = PhaseTimings::default();
                match fit_lasvdgp(
                    &problem.train_x,
                    &problem.train_y,
                    x0,
                    n,
                    n0,
                    &settings,
                    cfg.scheme,
                    &mut rng,
                    &mut t,
                ) {
                    Ok(st) => outcome_from_model(st.model(), x0, t),
                    Err(e) => failed_outcome(e, t),
                }
            })
            .collect::<Vec<_>>()
    });
    assemble(cfg, problem, seed, outcomes, PhaseTimings::default(), workers, started)
}

pub fn run_method(problem: &Problem, cfg: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    match cfg.method {
        Method::Svdgp => run_svdgp(problem, cfg, seed),
        Method::Knnsvdgp => run_knnsvdgp(problem, cfg, seed),
        Method::Lasvdgp => run_lasvdgp(problem, cfg, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean over repetitions of each run's mean NMSPE.
    pub mean_nmspe: Option<f64>,
    pub mean_log_mean_nmspe: Option<f64>,
    pub mean_score: Option<f64>,
    pub failed_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub runs: Vec<RunReport>,
    pub summary: Summary,
}

fn avg(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Problems for each repetition of the configured experiment.
pub fn problems(cfg: &ExperimentConfig) -> Result<Vec<(u64, Problem)>> {
    let reps = cfg.repetitions as u64;
    match &cfg.data {
        DataSource::Builtin {
            sim,
            n_train,
            n_test,
            time_points,
        } => {
            let mut grid = sim.default_grid();
            if let Some(l) = time_points {
                grid = TimeGrid::new(grid.start, grid.end, *l)?;
            }
            (0..reps)
                .map(|r| {
                    let s = derive_seed(cfg.seed, r);
                    Ok((s, Problem::builtin(*sim, *n_train, *n_test, &grid, s)?))
                })
                .collect()
        }
        DataSource::Files {
            train_design,
            train_response,
            test_design,
            test_response,
        } => {
            let (x, y) = simulators::load_dataset(train_design, train_response)?;
            let tx = simulators::read_design(test_design)?;
            let ty = match test_response {
                Some(p) => Some(simulators::read_response(p)?),
                None => None,
            };
            let p = Problem::new(x, y, tx, ty)?;
            Ok((0..reps).map(|r| (derive_seed(cfg.seed, r), p.clone())).collect())
        }
        DataSource::Dataset {
            design,
            response,
            ratio,
        } => {
            let (x, y) = simulators::load_dataset(design, response)?;
            mc_cv_splits(x.nrows(), *ratio, cfg.repetitions, cfg.seed)?
                .into_iter()
                .enumerate()
                .map(|(r, s)| Ok((derive_seed(cfg.seed, r as u64), Problem::from_split(&x, &y, &s.train, &s.test)?)))
                .collect()
        }
    }
}

/// Runs every repetition of the experiment and writes the optional CSV
/// dumps. The JSON report is returned, not written.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.repetitions);
    for (r, (seed, problem)) in problems(cfg)?.into_iter().enumerate() {
        log::info!(
            "repetition {}/{}: {:?} with N = {}, M = {}",
            r + 1,
            cfg.repetitions,
            cfg.method,
            problem.n_train(),
            problem.n_test()
        );
        let mut report = run_method(&problem, cfg, seed)?;
        if let Some(dir) = &cfg.dump_dir {
            dump_predictions(dir, r, problem.train_y.len_series(), &report)?;
            if !cfg.keep_predictions {
                report.predictions = None;
            }
        }
        runs.push(report);
    }
    let summary = Summary {
        mean_nmspe: avg(runs.iter().map(|r| r.score.as_ref().and_then(|s| s.mean_nmspe))),
        mean_log_mean_nmspe: avg(runs.iter().map(|r| r.score.as_ref().and_then(|s| s.log_mean_nmspe))),
        mean_score: avg(runs.iter().map(|r| r.score.as_ref().and_then(|s| s.mean_score))),
        failed_points: runs.iter().map(|r| r.failed.len()).sum(),
    };
    Ok(ExperimentReport { runs, summary })
}

/// Writes `predictions_{r}.csv` and `variances_{r}.csv` (`L x M`; failed
/// points are NaN columns).
pub fn dump_predictions(dir: &Path, rep: usize, len: usize, report: &RunReport) -> Result<()> {
    let Some(preds) = &report.predictions else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    let mut mean = DMatrix::from_element(len, preds.len(), f64::NAN);
    let mut var = mean.clone();
    for (j, p) in preds.iter().enumerate() {
        if let Some(p) = p {
            mean.column_mut(j).copy_from_slice(&p.mean);
            var.column_mut(j).copy_from_slice(&p.var);
        }
    }
    simulators::write_matrix(&dir.join(format!("predictions_{rep}.csv")), &mean, "m")?;
    simulators::write_matrix(&dir.join(format!("variances_{rep}.csv")), &var, "m")?;
    Ok(())
}

/// Report JSON with the machine-dependent `execution` blocks removed.
pub fn comparable_json(report: &ExperimentReport) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(report)?;
    if let Some(runs) = v.get_mut("runs").and_then(|r| r.as_array_mut()) {
        for r in runs {
            if let Some(o) = r.as_object_mut() {
                o.remove("execution");
            }
        }
    }
    Ok(v)
}
