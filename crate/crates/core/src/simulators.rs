//! Built-in test simulators with time-series output, Latin hypercube
//! designs, and CSV dataset input/output.
//!
//! CSV layout: a design file has a header row and one row per input
//! (`N x q`); a response file has `L` rows and `N` columns, column `j`
//! being the series at design row `j`. A response header row is optional.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, ResponseMatrix};
use crate::error::{Error, Result};

/// Equidistant time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, len: usize) -> Result<Self> {
        if !(start < end) || !start.is_finite() || !end.is_finite() {
            return Err(Error::Argument(format!("time grid needs start < end, got [{start}, {end}]")));
        }
        if len < 2 {
            return Err(Error::Argument("time grid needs at least two points".into()));
        }
        Ok(Self { start, end, len })
    }

    pub fn point(&self, j: usize) -> f64 {
        if j + 1 == self.len {
            return self.end;
        }
        self.start + j as f64 * (self.end - self.start) / (self.len - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.point(j)).collect()
    }
}

/// Axis-aligned box of inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDomain {
    pub bounds: Vec<(f64, f64)>,
}

impl InputDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Argument("domain needs at least one dimension".into()));
        }
        for (j, (lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Argument(format!("dimension {j}: need lo < hi, got [{lo}, {hi}]")));
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

fn check_len(x: &[f64], q: usize, name: &str) -> Result<()> {
    if x.len() != q {
        return Err(Error::Dimension(format!("{name} takes {q} inputs, got {}", x.len())));
    }
    Ok(())
}

/// `(x1 t - 2)^2 sin(x2 t - x3)` over the grid.
pub fn forrester(x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    check_len(x, 3, "forrester")?;
    if !Simulator::Forrester.domain().contains(x) {
        log::warn!("forrester input {x:?} lies outside [4,10]x[4,20]x[1,7]");
    }
    Ok(grid
        .points()
        .into_iter()
        .map(|t| (x[0] * t - 2.0).powi(2) * (x[1] * t - x[2]).sin())
        .collect())
}

/// Two-spill pollutant concentration; `x = (M, D, L, tau, s)`.
pub fn environ(x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    check_len(x, 5, "environ")?;
    if grid.start <= 0.0 {
        return Err(Error::Argument(format!("environ needs t > 0, grid starts at {}", grid.start)));
    }
    if !Simulator::Environ.domain().contains(x) {
        log::warn!("environ input {x:?} lies outside its nominal domain");
    }
    let (m, d, l, tau, s) = (x[0], x[1], x[2], x[3], x[4]);
    Ok(grid
        .points()
        .into_iter()
        .map(|t| {
            let mut f = m / (d * t).sqrt() * (-s * s / (4.0 * d * t)).exp();
            if t > tau + 1e-12 {
                let dt = t - tau;
                f += m / (d * dt).sqrt() * (-(s - l).powi(2) / (4.0 * d * dt)).exp();
            }
            f
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Simulator {
    Forrester,
    Environ,
}

impl Simulator {
    pub fn domain(&self) -> InputDomain {
        let bounds = match self {
            Simulator::Forrester => vec![(4.0, 10.0), (4.0, 20.0), (1.0, 7.0)],
            Simulator::Environ => vec![(7.0, 13.0), (0.02, 0.12), (0.01, 3.0), (30.01, 30.295), (0.0, 3.0)],
        };
        InputDomain { bounds }
    }

    /// 200 points over `[1, 2]` or `[0.3, 60]`.
    pub fn default_grid(&self) -> TimeGrid {
        match self {
            Simulator::Forrester => TimeGrid { start: 1.0, end: 2.0, len: 200 },
            Simulator::Environ => TimeGrid { start: 0.3, end: 60.0, len: 200 },
        }
    }

    pub fn eval(&self, x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
        match self {
            Simulator::Forrester => forrester(x, grid),
            Simulator::Environ => environ(x, grid),
        }
    }

    /// Responses at every design row, as an `L x N` matrix.
    pub fn eval_design(&self, x: &DesignMatrix, grid: &TimeGrid) -> Result<ResponseMatrix> {
        let cols: Vec<Vec<f64>> = (0..x.nrows())
            .into_par_iter()
            .map(|i| self.eval(x.row(i), grid))
            .collect::<Result<_>>()?;
        if cols.is_empty() {
            return ResponseMatrix::new(DMatrix::zeros(grid.len, 0));
        }
        ResponseMatrix::from_columns(&cols)
    }
}

/// Random Latin hypercube of `n` points: each column hits every one of the
/// `n` equal-width strata exactly once, jittered uniformly within it.
pub fn lhd(n: usize, domain: &InputDomain, seed: u64) -> DesignMatrix {
    let q = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; n * q];
    let mut perm: Vec<usize> = (0..n).collect();
    for (j, &(lo, hi)) in domain.bounds.iter().enumerate() {
        perm.shuffle(&mut rng);
        let width = (hi - lo) / n as f64;
        for (i, &s) in perm.iter().enumerate() {
            let u: f64 = rng.gen();
            data[i * q + j] = (lo + (s as f64 + u) * width).min(hi);
        }
    }
    let x = DesignMatrix::from_row_major(n, q, data).expect("finite by construction");
    x.with_bounds(domain.bounds.clone()).expect("bounds match dimension")
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Rows of a numeric CSV. Returns the header when the first row has no
/// numeric cell; a header is required when `header_required` is set.
fn read_numeric_csv(path: &Path, header_required: bool) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (ri, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(ri + 1, |p| p.line() as usize);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if ri == 0 && (header_required || rec.iter().all(|c| c.parse::<f64>().is_err())) {
            header = Some(rec.iter().map(str::to_owned).collect::<Vec<_>>());
            width = Some(rec.len());
            continue;
        }
        if let Some(w) = width {
            if rec.len() != w {
                return Err(parse_error(path, line, format!("expected {w} fields, found {}", rec.len())));
            }
        }
        width = Some(rec.len());
        let mut row = Vec::with_capacity(rec.len());
        for (ci, cell) in rec.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(parse_error(
                        path,
                        line,
                        format!("column {}: {cell:?} is not a finite number", ci + 1),
                    ))
                }
            }
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn read_design(path: &Path) -> Result<DesignMatrix> {
    let (header, rows) = read_numeric_csv(path, true)?;
    if rows.is_empty() {
        return Err(parse_error(path, 1, "design file has no data rows"));
    }
    let q = header.map_or(rows[0].len(), |h| h.len());
    let data: Vec<f64> = rows.concat();
    DesignMatrix::from_row_major(rows.len(), q, data)
}

/// Numeric matrix from a CSV with an optional header row.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let (header, rows) = read_numeric_csv(path, false)?;
    let ncols = rows.first().map(Vec::len).or(header.map(|h| h.len())).unwrap_or(0);
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

pub fn read_response(path: &Path) -> Result<ResponseMatrix> {
    let m = read_matrix(path)?;
    if m.nrows() == 0 {
        return Err(parse_error(path, 1, "response file has no data rows"));
    }
    ResponseMatrix::new(m)
}

/// Reads a design (`N x q`) and its responses (`L x N`).
pub fn load_dataset(design_path: &Path, response_path: &Path) -> Result<(DesignMatrix, ResponseMatrix)> {
    let x = read_design(design_path)?;
    let y = read_response(response_path)?;
    if x.nrows() != y.count() {
        return Err(Error::Dimension(format!(
            "{} has {} design rows but {} has {} response columns",
            design_path.display(),
            x.nrows(),
            response_path.display(),
            y.count()
        )));
    }
    log::info!("loaded N = {}, q = {}, L = {}", x.nrows(), x.dim(), y.len_series());
    Ok((x, y))
}

pub fn write_design(path: &Path, x: &DesignMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=x.dim()).map(|j| format!("x{j}")))?;
    for r in x.rows() {
        w.write_record(r.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a matrix row by row with a `{prefix}{j}` header.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    let head: Vec<String> = (1..=m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    writeln!(f, "{}", head.join(","))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_response(path: &Path, y: &ResponseMatrix) -> Result<()> {
    write_matrix(path, y.matrix(), "y")
}
