//! Box-constrained Levenberg–Marquardt on a residual vector with a
//! finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use super::simplex::Bounds;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step drops below this.
    pub cost_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tol: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// JᵀJ at the returned point.
    pub jtj: DMatrix<f64>,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian of `residuals` at `x`, rows = residuals. Steps
/// are kept inside the bounds by switching to one-sided differences.
pub fn jacobian<F>(residuals: &mut F, x: &[f64], n_res: usize, bounds: &Bounds) -> DMatrix<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let p = x.len();
    let mut jac = DMatrix::zeros(n_res, p);
    let mut plus = vec![0.0; n_res];
    let mut minus = vec![0.0; n_res];
    let mut xp = x.to_vec();
    for j in 0..p {
        let range = bounds.upper[j] - bounds.lower[j];
        let h = 1e-6 * x[j].abs().max(1e-3 * range).max(1e-9);
        let hi = (x[j] + h).min(bounds.upper[j]);
        let lo = (x[j] - h).max(bounds.lower[j]);
        if hi <= lo {
            continue;
        }
        xp[j] = hi;
        residuals(&xp, &mut plus);
        xp[j] = lo;
        residuals(&xp, &mut minus);
        xp[j] = x[j];
        for i in 0..n_res {
            jac[(i, j)] = (plus[i] - minus[i]) / (hi - lo);
        }
    }
    jac
}

pub fn levenberg_marquardt<F>(
    mut residuals: F,
    x0: &[f64],
    n_res: usize,
    bounds: &Bounds,
    opts: &LmOptions,
) -> LmResult
where
    F: FnMut(&[f64], &mut [f64]),
{
    let p = x0.len();
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let mut r = vec![0.0; n_res];
    residuals(&x, &mut r);
    let mut cost = cost_of(&r);
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n_res];

    let mut jac = jacobian(&mut residuals, &x, n_res, bounds);
    while iterations < opts.max_iterations && cost.is_finite() {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_column_slice(&r);
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..p {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&jtr));
            let mut xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            bounds.clamp(&mut xn);
            residuals(&xn, &mut trial);
            let cn = cost_of(&trial);
            if cn.is_finite() && cn < cost {
                let rel = (cost - cn) / cost.max(1e-300);
                x = xn;
                std::mem::swap(&mut r, &mut trial);
                cost = cn;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel < opts.cost_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left: at a (constrained) minimum to working precision
            converged = true;
            break;
        }
        jac = jacobian(&mut residuals, &x, n_res, bounds);
        if converged || cost == 0.0 {
            converged = true;
            break;
        }
    }
    let jtj = jac.transpose() * &jac;
    LmResult {
        x,
        cost,
        iterations,
        converged,
        jtj,
    }
}

/// Standard errors from (JᵀJ)⁻¹ scaled by `scale` (1 for properly weighted
/// residuals, the reduced χ² otherwise). Parameters the data do not constrain
/// get `None`.
pub fn standard_errors(jtj: &DMatrix<f64>, scale: f64) -> Vec<Option<f64>> {
    let p = jtj.nrows();
    match jtj.clone().try_inverse() {
        Some(cov) => (0..p)
            .map(|k| {
                let v = cov[(k, k)] * scale;
                (v.is_finite() && v >= 0.0).then(|| v.sqrt())
            })
            .collect(),
        None => vec![None; p],
    }
}
