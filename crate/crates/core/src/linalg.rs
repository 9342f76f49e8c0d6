//! Dense kernels shared by the models: a sign-normalized SVD, Cholesky
//! factorization of correlation matrices with the nugget folded in, and the
//! partitioned inverse used when a single point is appended to a factored
//! matrix.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Thin SVD `Y = U diag(d) V^T` with `k = min(rows, cols)` components.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub d: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Singular value decomposition with descending singular values.
///
/// Each left singular vector is oriented so that its largest-magnitude
/// entry (first one on ties) is positive; the paired right singular vector
/// is flipped with it.
pub fn svd(y: &DMatrix<f64>) -> Result<Svd> {
    for (col, c) in y.column_iter().enumerate() {
        if let Some(row) = c.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
    }
    let k = y.nrows().min(y.ncols());
    if k == 0 {
        return Err(Error::Dimension("svd of an empty matrix".into()));
    }
    let raw = SVD::try_new(y.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Argument("svd did not converge".into()))?;
    let u_raw = raw.u.expect("u requested");
    let vt_raw = raw.v_t.expect("v_t requested");
    let s = raw.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut u = DMatrix::zeros(y.nrows(), k);
    let mut v = DMatrix::zeros(y.ncols(), k);
    let mut d = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        d[dst] = s[src];
        let ucol = u_raw.column(src);
        let mut pivot = 0;
        for (i, val) in ucol.iter().enumerate() {
            if val.abs() > ucol[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if ucol[pivot] < 0.0 { -1.0 } else { 1.0 };
        u.set_column(dst, &(ucol * sign));
        v.set_column(dst, &(vt_raw.row(src).transpose() * sign));
    }
    Ok(Svd { u, d, v })
}

/// Cholesky factor `L` of `K + eta I`, together with `log |K + eta I|`.
#[derive(Debug)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
    log_det: f64,
    inverse: OnceLock<DMatrix<f64>>,
}

impl Clone for SpdFactor {
    fn clone(&self) -> Self {
        let inverse = OnceLock::new();
        if let Some(inv) = self.inverse.get() {
            let _ = inverse.set(inv.clone());
        }
        Self {
            lower: self.lower.clone(),
            log_det: self.log_det,
            inverse,
        }
    }
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut z = b.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut z);
        self.lower.tr_solve_lower_triangular_unchecked_mut(&mut z);
        z
    }

    /// `L^-1 b`; its squared norm is `b^T (K + eta I)^-1 b`.
    pub fn half_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut z = b.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut z);
        z
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = b.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut z);
        self.lower.tr_solve_lower_triangular_unchecked_mut(&mut z);
        z
    }

    /// Explicit inverse, computed once and cached.
    pub fn inverse(&self) -> &DMatrix<f64> {
        self.inverse.get_or_init(|| {
            let n = self.dim();
            let mut linv = DMatrix::identity(n, n);
            self.lower.solve_lower_triangular_unchecked_mut(&mut linv);
            linv.tr_mul(&linv)
        })
    }

    /// `L L^T`, i.e. the factored matrix including the nugget.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }
}

/// Factors `K + eta I`. Only the lower triangle of `k` is read.
pub fn spd_factorize(k: &DMatrix<f64>, eta: f64) -> Result<SpdFactor> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::Dimension(format!(
            "factorization needs a square matrix, got {}x{}",
            n,
            k.ncols()
        )));
    }
    if !(eta >= 0.0) {
        return Err(Error::Argument(format!("nugget must be nonnegative, got {eta}")));
    }
    // Row-major scratch so the inner products run over contiguous memory.
    let mut l = vec![0.0; n * n];
    let mut log_det = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let mut s = k[(i, j)];
            if i == j {
                s += eta;
            }
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Singular { pivot: i });
                }
                let root = s.sqrt();
                l[i * n + i] = root;
                log_det += root.ln();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(SpdFactor {
        lower: DMatrix::from_row_slice(n, n, &l),
        log_det: 2.0 * log_det,
        inverse: OnceLock::new(),
    })
}

/// Inverse of the bordered matrix `[[K, k], [k^T, c]]` expressed through the
/// stored inverse of `K`:
///
/// ```text
/// [[K^-1 + g g^T phi, g], [g^T, 1/phi]],  g = -K^-1 k / phi,  phi = c - k^T K^-1 k
/// ```
#[derive(Debug, Clone)]
pub struct PartitionedInverse<'a> {
    base: &'a SpdFactor,
    kinv_k: DVector<f64>,
    g: DVector<f64>,
    phi: f64,
}

/// Relative floor on `phi` below which the bordered matrix is treated as
/// singular.
pub const PHI_FLOOR: f64 = 1e-12;

pub fn partitioned_inverse_update<'a>(
    base: &'a SpdFactor,
    k_vec: &DVector<f64>,
    diag_new: f64,
) -> Result<PartitionedInverse<'a>> {
    if k_vec.len() != base.dim() {
        return Err(Error::Dimension(format!(
            "border vector has length {}, base is {}x{}",
            k_vec.len(),
            base.dim(),
            base.dim()
        )));
    }
    let mut kinv_k = base.half_solve(k_vec);
    let phi = diag_new - kinv_k.norm_squared();
    if !(phi > PHI_FLOOR * diag_new.abs().max(1.0)) {
        return Err(Error::Degenerate { phi });
    }
    base.lower.tr_solve_lower_triangular_unchecked_mut(&mut kinv_k);
    let g = &kinv_k * (-1.0 / phi);
    Ok(PartitionedInverse {
        base,
        kinv_k,
        g,
        phi,
    })
}

impl PartitionedInverse<'_> {
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    /// `K^-1 k` for the border vector `k`.
    pub fn base_solution(&self) -> &DVector<f64> {
        &self.kinv_k
    }

    /// `z^T Kt^-1 z` for `z = [head; tail]`, given `head_quad = head^T K^-1 head`.
    ///
    /// Expanding the block form gives
    /// `head_quad + phi (g.head)^2 + 2 tail (g.head) + tail^2 / phi`,
    /// which collapses to `head_quad + (tail - (K^-1 k).head)^2 / phi`.
    pub fn quad_form_with(&self, head_quad: f64, head: &DVector<f64>, tail: f64) -> f64 {
        let r = tail - self.kinv_k.dot(head);
        head_quad + r * r / self.phi
    }

    pub fn quad_form(&self, head: &DVector<f64>, tail: f64) -> f64 {
        let head_quad = self.base.half_solve(head).norm_squared();
        self.quad_form_with(head_quad, head, tail)
    }

    /// Dense `(k+1) x (k+1)` inverse assembled from the block formula.
    pub fn assemble(&self) -> DMatrix<f64> {
        let k = self.g.len();
        let mut out = DMatrix::zeros(k + 1, k + 1);
        let top = self.base.inverse() + &self.g * self.g.transpose() * self.phi;
        out.view_mut((0, 0), (k, k)).copy_from(&top);
        for i in 0..k {
            out[(i, k)] = self.g[i];
            out[(k, i)] = self.g[i];
        }
        out[(k, k)] = 1.0 / self.phi;
        out
    }
}
