use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{design_from_columns, spd_inverse};
use crate::stats::expit;

pub const MAX_ITERATIONS: usize = 50;
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    /// Inverse observed information at the estimate.
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after each accepted step, starting from the initial value.
    pub loglik_trace: Vec<f64>,
}

impl LogisticFit {
    pub fn std_error(&self, j: usize) -> f64 {
        self.covariance[j][j].sqrt()
    }

    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }

    /// Predicted probabilities for rows of `columns` (same layout as the fit).
    pub fn predict(&self, columns: &[&[f64]], intercept: bool) -> Vec<f64> {
        let n = columns.first().map_or(0, |c| c.len());
        (0..n)
            .map(|i| {
                let mut eta = 0.0;
                let mut k = 0;
                if intercept {
                    eta += self.coefficients[0];
                    k = 1;
                }
                for (j, c) in columns.iter().enumerate() {
                    eta += self.coefficients[k + j] * c[i];
                }
                expit(eta)
            })
            .collect()
    }
}

/// Bernoulli log-likelihood at linear predictor `eta`.
pub fn log_likelihood(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &t)| t * e - (e.max(0.0) + (-e.abs()).exp().ln_1p()))
        .sum()
}

/// Maximum-likelihood logistic regression by Newton-Raphson (IRLS) with
/// step halving so the log-likelihood never decreases.
///
/// With `intercept` a leading column of ones is added and reported as the
/// first coefficient.
pub fn logistic_irls(columns: &[&[f64]], target: &[f64], intercept: bool) -> Result<LogisticFit> {
    let n = target.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument("feature length mismatch".into()));
    }
    if target.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidArgument("logistic target must be 0/1".into()));
    }
    let ones = vec![1.0; n];
    let mut cols: Vec<&[f64]> = Vec::with_capacity(columns.len() + 1);
    if intercept {
        cols.push(&ones);
    }
    cols.extend_from_slice(columns);
    let k = cols.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no features".into()));
    }
    if n <= k {
        return Err(Error::RankDeficient(format!("{n} rows for {k} coefficients")));
    }
    let x = design_from_columns(&cols);
    spd_inverse(&(x.transpose() * &x), "logistic design")?;
    let y = DVector::from_column_slice(target);

    let mut beta = DVector::<f64>::zeros(k);
    let mut eta = vec![0.0; n];
    let mut ll = log_likelihood(&eta, target);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let score_tol = SCORE_TOLERANCE.max(1e-13 * n as f64);

    while iterations < MAX_ITERATIONS {
        let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let score = x.transpose() * (&y - DVector::from_vec(p.clone()));
        let w = DMatrix::from_fn(n, k, |i, j| x[(i, j)] * p[i] * (1.0 - p[i]));
        let info = x.transpose() * w;
        let inv = match spd_inverse(&info, "logistic information") {
            Ok(inv) => inv,
            Err(_) if beta.amax() > SEPARATION_BOUND => {
                return Err(Error::Separation { label: None });
            }
            Err(e) => return Err(e),
        };
        let step = &inv * &score;
        iterations += 1;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_eta: Vec<f64> = (&x * &cand).iter().copied().collect();
            let cand_ll = log_likelihood(&cand_eta, target);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((cand, cand_eta, cand_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_eta, cand_ll)) = accepted else {
            break;
        };
        let moved = (&cand - &beta).amax();
        beta = cand;
        eta = cand_eta;
        ll = cand_ll.max(ll);
        trace.push(ll);
        if score.amax() < score_tol && moved <= 1e-6 * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
    }
    if !converged {
        let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let score = x.transpose() * (&y - DVector::from_vec(p));
        converged = score.amax() < score_tol && beta.amax() <= SEPARATION_BOUND;
    }
    if !converged && beta.amax() > SEPARATION_BOUND {
        return Err(Error::Separation { label: None });
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "logistic regression did not converge in {MAX_ITERATIONS} iterations"
        )));
    }
    let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
    let w = DMatrix::from_fn(n, k, |i, j| x[(i, j)] * p[i] * (1.0 - p[i]));
    let cov = spd_inverse(&(x.transpose() * w), "logistic information")?;
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        covariance: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect(),
        converged,
        iterations,
        loglik_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_matches_logit_of_mean() {
        let y: Vec<f64> = (0..10).map(|i| f64::from(u8::from(i < 5))).collect();
        let fit = logistic_irls(&[], &y, true).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        let y2: Vec<f64> = (0..10).map(|i| f64::from(u8::from(i < 2))).collect();
        let fit2 = logistic_irls(&[], &y2, true).unwrap();
        assert!((fit2.coefficients[0] - 0.25f64.ln()).abs() < 1e-10);
        // Var of logit(p-hat) = 1 / (n p (1 - p)).
        assert!((fit2.covariance[0][0] - 1.0 / (10.0 * 0.2 * 0.8)).abs() < 1e-10);
    }

    #[test]
    fn separation_detected() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|&v| f64::from(u8::from(v >= 10.0))).collect();
        assert!(matches!(logistic_irls(&[&x], &y, true), Err(Error::Separation { .. })));
    }

    #[test]
    fn collinear_rejected() {
        let x: Vec<f64> = (0..20).map(|i| (i % 3) as f64).collect();
        let y: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        assert!(matches!(
            logistic_irls(&[&x, &x], &y, true),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn trace_non_decreasing() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64 / 5.0).collect();
        let y: Vec<f64> = (0..30).map(|i| f64::from(u8::from((i * 5) % 7 < 3))).collect();
        let fit = logistic_irls(&[&x], &y, true).unwrap();
        assert!(fit.loglik_trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
