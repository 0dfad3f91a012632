//! Bias-corrected temperature scaling: `softmax(z / T + b)`.
//!
//! The optimizer works on the inverse temperature `u = 1/T`, where the NLL is
//! convex in `(u, b)`. Gradient descent with step halving on non-decrease
//! and step doubling after each accepted step.

use std::collections::BTreeMap;

use super::{check_validation, logit_rows, Calibrator, FitReport};
use crate::data::{softmax_unchecked, Dataset};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BctsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// When false the bias stays at zero and only the temperature is fit.
    pub fit_bias: bool,
}

impl Default for BctsOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            grad_tol: 1e-6,
            fit_bias: true,
        }
    }
}

/// NLL and gradient in `(u, b)`.
fn nll_grad_inverse(z: &[Vec<f64>], labels: &[usize], u: f64, bias: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = z.len() as f64;
    let k = bias.len();
    let mut nll = 0.0;
    let mut du = 0.0;
    let mut db = vec![0.0; k];
    for (row, &y) in z.iter().zip(labels) {
        let a: Vec<f64> = row.iter().zip(bias).map(|(v, b)| u * v + b).collect();
        let p = softmax_unchecked(&a);
        let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        nll += max + a.iter().map(|v| (v - max).exp()).sum::<f64>().ln() - a[y];
        for j in 0..k {
            let r = p[j] - if j == y { 1.0 } else { 0.0 };
            du += r * row[j];
            db[j] += r;
        }
    }
    db.iter_mut().for_each(|g| *g /= n);
    (nll / n, du / n, db)
}

/// Mean NLL of `softmax(z / T + b)` with its gradient `(dT, db)`.
pub fn bcts_nll_grad(logits: &[Vec<f64>], labels: &[usize], temperature: f64, bias: &[f64]) -> (f64, f64, Vec<f64>) {
    let (nll, du, db) = nll_grad_inverse(logits, labels, 1.0 / temperature, bias);
    (nll, -du / (temperature * temperature), db)
}

pub fn fit_bcts(val: &Dataset) -> Result<(Calibrator, FitReport)> {
    fit_bcts_with(val, BctsOptions::default())
}

pub fn fit_bcts_with(val: &Dataset, opts: BctsOptions) -> Result<(Calibrator, FitReport)> {
    check_validation(val)?;
    let (z, labels) = logit_rows(val);
    let k = val.k();
    let mut u = 1.0;
    let mut bias = vec![0.0; k];
    let grad = |u: f64, b: &[f64]| {
        let (f, du, mut db) = nll_grad_inverse(&z, &labels, u, b);
        if !opts.fit_bias {
            db.iter_mut().for_each(|g| *g = 0.0);
        }
        (f, du, db)
    };
    let (mut f, mut du, mut db) = grad(u, &bias);
    let initial_nll = f;
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let norm = (du * du + db.iter().map(|g| g * g).sum::<f64>()).sqrt();
        if norm < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while step > 1e-20 {
            let u_new = u - step * du;
            if u_new > 0.0 {
                let b_new: Vec<f64> = bias.iter().zip(&db).map(|(b, g)| b - step * g).collect();
                let (f_new, du_new, db_new) = grad(u_new, &b_new);
                if f_new < f {
                    (u, bias, f, du, db) = (u_new, b_new, f_new, du_new, db_new);
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable step lowers the objective.
            break;
        }
        step *= 2.0;
    }
    // Softmax is invariant to shifting all logits; pin the bias to mean zero.
    let shift = bias.iter().sum::<f64>() / k as f64;
    bias.iter_mut().for_each(|b| *b -= shift);
    let temperature = 1.0 / u;
    let report = FitReport {
        method: "bcts".into(),
        parameters: BTreeMap::from([
            ("temperature".to_string(), vec![temperature]),
            ("bias".to_string(), bias.clone()),
        ]),
        initial_nll,
        final_nll: f,
        iterations,
        converged,
    };
    Ok((Calibrator::Bcts { temperature, bias }, report))
}
