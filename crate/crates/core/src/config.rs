//! Experiment configuration, read from TOML.
//!
//! ```toml
//! method = "lasvdgp"
//! n = 40
//! n0 = 20
//! repetitions = 10
//! seed = 1
//!
//! [scheme]
//! kind = "limit"
//!
//! [data]
//! source = "builtin"
//! sim = "forrester"
//! n_train = 2000
//! n_test = 200
//! time_points = 50
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefgp::{PriorSpec, DEFAULT_NUGGET};
use crate::error::{Error, Result};
use crate::neighborhood::SearchScheme;
use crate::simulators::Simulator;
use crate::svdmodel::{FitSettings, DEFAULT_GAMMA};

/// Environment variable consulted for the worker count when the config
/// leaves it unset.
pub const WORKERS_ENV: &str = "DYNEMU_WORKERS";

/// Largest training set a full svdGP fit accepts without `force`.
pub const FULL_FIT_LIMIT: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Svdgp,
    Knnsvdgp,
    Lasvdgp,
}

impl Method {
    pub fn is_local(&self) -> bool {
        !matches!(self, Method::Svdgp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    /// Random Latin hypercube train and test designs run through a built-in
    /// simulator; each repetition draws fresh designs.
    Builtin {
        sim: Simulator,
        n_train: usize,
        n_test: usize,
        /// Grid length; defaults to the simulator's 200 points.
        time_points: Option<usize>,
    },
    /// Fixed train and test sets. Without a test response the run predicts
    /// but does not score.
    Files {
        train_design: PathBuf,
        train_response: PathBuf,
        test_design: PathBuf,
        test_response: Option<PathBuf>,
    },
    /// One dataset split at random into train and test for every
    /// repetition.
    Dataset {
        design: PathBuf,
        response: PathBuf,
        #[serde(default = "default_ratio")]
        ratio: (u32, u32),
    },
}

fn default_ratio() -> (u32, u32) {
    (4, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub data: DataSource,
    /// Neighborhood size (local methods).
    pub n: Option<usize>,
    /// Initial nearest-neighbor set size for lasvdgp; defaults to `ceil(n/2)`.
    pub n0: Option<usize>,
    pub gamma: f64,
    pub eta: f64,
    pub prior: PriorSpec,
    pub scheme: SearchScheme,
    /// Worker threads; falls back to `DYNEMU_WORKERS`, then all cores.
    pub workers: Option<usize>,
    pub repetitions: usize,
    pub seed: u64,
    /// Allow a full svdGP fit above `FULL_FIT_LIMIT` points.
    pub force: bool,
    /// Include per-point predictions in the JSON report.
    pub keep_predictions: bool,
    /// Include per-point correlation parameter estimates in the report.
    pub keep_thetas: bool,
    /// JSON report path; stdout when unset.
    pub output: Option<PathBuf>,
    /// Directory for per-repetition prediction and variance CSVs.
    pub dump_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Lasvdgp,
            data: DataSource::Builtin {
                sim: Simulator::Forrester,
                n_train: 500,
                n_test: 50,
                time_points: None,
            },
            n: Some(40),
            n0: None,
            gamma: DEFAULT_GAMMA,
            eta: DEFAULT_NUGGET,
            prior: PriorSpec::default(),
            scheme: SearchScheme::default(),
            workers: None,
            repetitions: 1,
            seed: 1,
            force: false,
            keep_predictions: false,
            keep_thetas: false,
            output: None,
            dump_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data and output paths are taken
    /// relative to the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSource::Builtin { .. } => {}
            DataSource::Files {
                train_design,
                train_response,
                test_design,
                test_response,
            } => {
                fix(train_design);
                fix(train_response);
                fix(test_design);
                if let Some(p) = test_response {
                    fix(p);
                }
            }
            DataSource::Dataset { design, response, .. } => {
                fix(design);
                fix(response);
            }
        }
        if let Some(p) = &mut self.output {
            fix(p);
        }
        if let Some(p) = &mut self.dump_dir {
            fix(p);
        }
    }

    /// Checks what can be checked without the data.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::Config(format!("eta must be nonnegative, got {}", self.eta)));
        }
        self.prior.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.method.is_local() {
            let n = self.n.ok_or_else(|| Error::Config(format!("{:?} needs n", self.method)))?;
            let n0 = self.initial_size().unwrap_or(n);
            if n < 2 || n0 < 2 || n0 > n {
                return Err(Error::Config(format!("need 2 <= n0 <= n, got n0 = {n0}, n = {n}")));
            }
        }
        if let DataSource::Dataset { ratio: (a, b), .. } = self.data {
            if a == 0 || b == 0 {
                return Err(Error::Config(format!("split ratio must be positive, got {a}:{b}")));
            }
        }
        Ok(())
    }

    /// `n0` for lasvdgp (`ceil(n/2)` unless set).
    pub fn initial_size(&self) -> Option<usize> {
        match self.method {
            Method::Lasvdgp => self.n0.or(self.n.map(|n| n.div_ceil(2).max(2))),
            _ => None,
        }
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings {
            gamma: self.gamma,
            eta: self.eta,
            prior: self.prior,
            parallel_coefs: false,
        }
    }

    /// Config value, then the environment variable, then all cores.
    pub fn resolved_workers(&self) -> usize {
        if let Some(w) = self.workers {
            return w;
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(w) if w > 0 => w,
                _ => {
                    log::warn!("ignoring {WORKERS_ENV}={v:?}");
                    default_workers()
                }
            },
            Err(_) => default_workers(),
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            method = "lasvdgp"
            n = 40
            n0 = 20
            gamma = 0.9
            workers = 3
            repetitions = 2
            [scheme]
            kind = "limit"
            nearest = 100
            [prior]
            alpha_coef = 1.0
            [data]
            source = "builtin"
            sim = "environ"
            n_train = 300
            n_test = 20
            "#,
        )
        .unwrap();
        assert_eq!(cfg.initial_size(), Some(20));
        assert_eq!(cfg.resolved_workers(), 3);
        assert_eq!(
            cfg.scheme,
            SearchScheme::Limit {
                nearest: Some(100),
                random: None
            }
        );
        assert_eq!(cfg.prior.alpha_coef, 1.0);
        assert!(matches!(cfg.data, DataSource::Builtin { sim: Simulator::Environ, .. }));
    }

    #[test]
    fn dataset_source_defaults_ratio() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            method = "knnsvdgp"
            n = 20
            [data]
            source = "dataset"
            design = "x.csv"
            response = "y.csv"
            "#,
        )
        .unwrap();
        assert!(matches!(cfg.data, DataSource::Dataset { ratio: (4, 1), .. }));
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "method = \"lasvdgp\"\nn = 10\nn0 = 11",
            "method = \"knnsvdgp\"\nn = 1",
            "method = \"svdgp\"\ngamma = 1.0",
            "method = \"svdgp\"\nbogus = 1",
            "method = \"svdgp\"\nrepetitions = 0",
        ] {
            assert!(ExperimentConfig::from_toml_str(bad).is_err(), "{bad}");
        }
        let mut c = ExperimentConfig::default();
        c.n = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn n0_defaults_to_half() {
        let c = ExperimentConfig {
            n: Some(41),
            ..ExperimentConfig::default()
        };
        assert_eq!(c.initial_size(), Some(21));
    }
}
