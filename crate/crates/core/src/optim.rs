//! Box-constrained quasi-Newton minimizer used for MAP estimation of the
//! correlation parameters. Small dimension (q <= ~20), so a dense inverse
//! Hessian approximation is fine.

/// Objective evaluated in two stages: the value at a trial point (cheap
/// enough to call inside a line search), then the gradient at the last
/// accepted point.
pub(crate) trait Objective {
    /// `None` when the objective is undefined at `x` (e.g. factorization
    /// failure); the line search treats it as an infinitely bad point.
    fn value(&mut self, x: &[f64]) -> Option<f64>;

    /// Gradient at the point most recently passed to `value` that returned
    /// `Some`.
    fn gradient(&mut self) -> Vec<f64>;

    /// Marks the last evaluated point as accepted.
    fn accept(&mut self);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub max_iter: usize,
    pub gtol: f64,
    pub ftol: f64,
    pub max_step: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            gtol: 1e-6,
            ftol: 1e-11,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Projected BFGS with Armijo backtracking. Returns `None` if the start
/// point itself cannot be evaluated.
pub(crate) fn minimize<O: Objective>(
    obj: &mut O,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    settings: Settings,
) -> Option<Minimum> {
    let n = start.len();
    let mut x = start.to_vec();
    clamp_into(&mut x, lo, hi);
    let mut f = obj.value(&x)?;
    obj.accept();
    let mut g = obj.gradient();
    let mut h = identity(n);
    let mut scaled = false;
    let mut iterations = 0;

    while iterations < settings.max_iter {
        iterations += 1;
        let tiny = 1e-12;
        let free: Vec<bool> = (0..n)
            .map(|j| !((x[j] <= lo[j] + tiny && g[j] > 0.0) || (x[j] >= hi[j] - tiny && g[j] < 0.0)))
            .collect();
        let pg = (0..n)
            .filter(|&j| free[j])
            .map(|j| g[j].abs())
            .fold(0.0, f64::max);
        if pg < settings.gtol {
            break;
        }

        let mut d = vec![0.0; n];
        for i in 0..n {
            if free[i] {
                d[i] = -(0..n).filter(|&j| free[j]).map(|j| h[i][j] * g[j]).sum::<f64>();
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            h = identity(n);
            scaled = false;
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }
        let dmax = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut t = if dmax > settings.max_step {
            settings.max_step / dmax
        } else {
            1.0
        };

        let mut accepted = None;
        while t > 1e-10 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            clamp_into(&mut xn, lo, hi);
            let step_dot: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), c)| (a - b) * c).sum();
            if let Some(fnew) = obj.value(&xn) {
                if fnew <= f + 1e-4 * step_dot {
                    accepted = Some((xn, fnew));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            break;
        };
        obj.accept();
        let gn = obj.gradient();

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            if !scaled {
                let yy: f64 = y.iter().map(|v| v * v).sum();
                let gamma = sy / yy;
                h = identity(n);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = gamma;
                }
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }

        let converged = (f - fnew).abs() <= settings.ftol * (1.0 + f.abs());
        x = xn;
        f = fnew;
        g = gn;
        if converged {
            break;
        }
    }
    Some(Minimum {
        x,
        value: f,
        iterations,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Inverse-Hessian BFGS update.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
