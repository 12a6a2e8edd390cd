//! Bayesian causal forest: `y = mu(x, pihat) + tau(x) z + e` with separate
//! tree ensembles for the prognostic part `mu` and the effect `tau`.
//!
//! The outcome is treated as numeric with Gaussian noise, so for a 0/1
//! outcome `tau` is directly a risk difference.

use serde::{Deserialize, Serialize};

use crate::analysis::ite::{config_digest, IteVector, Method};
use crate::bart::{draw_sigma, Ensemble, PosteriorDraws, TreePrior};
use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::linalg::ols_hc3;
use crate::rng;
use crate::stats::{chi2_quantile, quantile_sorted, sd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentConfig {
    pub num_trees: usize,
    pub alpha: f64,
    pub beta: f64,
    /// `None` applies the default leaf-scale rule for the component.
    pub leaf_scale: Option<f64>,
    pub max_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcfConfig {
    pub mu: ComponentConfig,
    pub tau: ComponentConfig,
    pub k: f64,
    pub nu: f64,
    pub q: f64,
    pub burn_in: usize,
    pub draws: usize,
    /// Add the propensity estimate as a prognostic feature.
    pub include_pihat: bool,
    /// Covariate indices for each component; `None` uses all.
    pub mu_covariates: Option<Vec<usize>>,
    pub tau_covariates: Option<Vec<usize>>,
}

impl Default for BcfConfig {
    fn default() -> Self {
        let comp = |m| ComponentConfig {
            num_trees: m,
            alpha: 0.95,
            beta: 2.0,
            leaf_scale: None,
            max_depth: None,
        };
        Self {
            mu: comp(200),
            tau: comp(50),
            k: 2.0,
            nu: 3.0,
            q: 0.9,
            burn_in: 500,
            draws: 500,
            include_pihat: true,
            mu_covariates: None,
            tau_covariates: None,
        }
    }
}

impl BcfConfig {
    /// `0.5 / (k sqrt(m_mu))` for `mu` and half the same rule for `tau`.
    pub fn leaf_scales(&self) -> (f64, f64) {
        let mu = self
            .mu
            .leaf_scale
            .unwrap_or(0.5 / (self.k * (self.mu.num_trees as f64).sqrt()));
        let tau = self
            .tau
            .leaf_scale
            .unwrap_or(0.5 * 0.5 / (self.k * (self.tau.num_trees as f64).sqrt()));
        (mu, tau)
    }

    fn validate(&self, p: usize) -> Result<()> {
        for (name, c) in [("mu", &self.mu), ("tau", &self.tau)] {
            if c.num_trees == 0 {
                return Err(Error::InvalidArgument(format!("{name} needs at least one tree")));
            }
            if !(c.alpha > 0.0 && c.alpha < 1.0) || !(c.beta >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} tree prior out of range")));
            }
            if c.leaf_scale.is_some_and(|s| !(s > 0.0)) {
                return Err(Error::InvalidArgument(format!("{name} leaf scale must be positive")));
            }
        }
        if self.draws == 0 || !(self.k > 0.0) || !(self.nu > 0.0) || !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidArgument("invalid sampler settings".into()));
        }
        for set in [&self.mu_covariates, &self.tau_covariates].into_iter().flatten() {
            if set.is_empty() && !self.include_pihat {
                return Err(Error::InvalidArgument("empty covariate set".into()));
            }
            if set.iter().any(|&j| j >= p) {
                return Err(Error::InvalidArgument("covariate index out of range".into()));
            }
        }
        if self.tau_covariates.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::InvalidArgument("tau needs at least one covariate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcfModel {
    pub config: BcfConfig,
    pub seed: u64,
    pub pihat: Vec<f64>,
    /// `mu(x_i, pihat_i)` per kept draw, outcome scale.
    pub mu_draws: PosteriorDraws,
    /// `tau(x_i)` per kept draw, outcome scale.
    pub tau_draws: PosteriorDraws,
    pub sigma_draws: Vec<f64>,
}

fn select(columns: &[Vec<f64>], set: &Option<Vec<usize>>) -> Vec<Vec<f64>> {
    match set {
        Some(idx) => idx.iter().map(|&j| columns[j].clone()).collect(),
        None => columns.to_vec(),
    }
}

pub fn fit_bcf(data: &ObservationalDataset, pihat: &[f64], config: &BcfConfig, seed: u64) -> Result<BcfModel> {
    config.validate(data.p())?;
    let n = data.n();
    if pihat.len() != n {
        return Err(Error::InvalidArgument("propensity length mismatch".into()));
    }
    if pihat.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidArgument("propensity estimates must lie strictly inside (0, 1)".into()));
    }
    let y = data.outcome();
    let z = data.exposure();
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    let mid = 0.5 * (hi + lo);
    let scaled: Vec<f64> = y.iter().map(|v| (v - mid) / range).collect();
    let center = scaled.iter().sum::<f64>() / n as f64;
    let ys: Vec<f64> = scaled.iter().map(|v| v - center).collect();

    let mut mu_cols = select(data.columns(), &config.mu_covariates);
    if config.include_pihat {
        mu_cols.push(pihat.to_vec());
    }
    let tau_cols = select(data.columns(), &config.tau_covariates);
    let (mu_scale, tau_scale) = config.leaf_scales();
    let prior = |c: &ComponentConfig| TreePrior {
        alpha: c.alpha,
        beta: c.beta,
        max_depth: c.max_depth,
    };
    let mut mu = Ensemble::new(mu_cols, config.mu.num_trees, prior(&config.mu), mu_scale, None)?;
    let mut tau = Ensemble::new(tau_cols, config.tau.num_trees, prior(&config.tau), tau_scale, Some(z.to_vec()))?;

    let mut reg: Vec<&[f64]> = vec![z];
    let ones = vec![1.0; n];
    reg.push(&ones);
    reg.extend(
        data.columns()
            .iter()
            .filter(|c| c.iter().any(|&v| v != c[0]))
            .map(Vec::as_slice),
    );
    let s_hat = match ols_hc3(&reg, &ys) {
        Ok(f) if f.df_resid > 0 => (f.residuals.iter().map(|r| r * r).sum::<f64>() / f.df_resid as f64).sqrt(),
        _ => sd(&ys),
    }
    .max(1e-3);
    let lambda = s_hat * s_hat * chi2_quantile(1.0 - config.q, config.nu) / config.nu;

    let mut rng = rng::stream(seed);
    let mut sigma = s_hat;
    let mut target = vec![0.0; n];
    let mut mu_draws = PosteriorDraws::new(n);
    let mut tau_draws = PosteriorDraws::new(n);
    let mut sigma_draws = Vec::with_capacity(config.draws);
    for it in 0..config.burn_in + config.draws {
        for i in 0..n {
            target[i] = ys[i] - tau.fit()[i];
        }
        mu.sweep(&target, sigma, &mut rng);
        for i in 0..n {
            target[i] = ys[i] - mu.fit()[i];
        }
        tau.sweep(&target, sigma, &mut rng);
        let sse: f64 = (0..n)
            .map(|i| {
                let r = ys[i] - mu.fit()[i] - tau.fit()[i];
                r * r
            })
            .sum();
        sigma = draw_sigma(config.nu, lambda, sse, n, &mut rng);
        if it >= config.burn_in {
            mu_draws.push_row(mu.fit().iter().map(|f| (f + center) * range + mid));
            tau_draws.push_row(tau.raw_fit().iter().map(|t| t * range));
            sigma_draws.push(sigma * range);
        }
    }
    if tau_draws.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite effect draw".into()));
    }
    Ok(BcfModel {
        config: config.clone(),
        seed,
        pihat: pihat.to_vec(),
        mu_draws,
        tau_draws,
        sigma_draws,
    })
}

/// Posterior mean effect per unit with 2.5% and 97.5% draw quantiles.
pub fn predict_ite_bcf(model: &BcfModel) -> Result<IteVector> {
    let d = &model.tau_draws;
    let mut est = Vec::with_capacity(d.cols);
    let mut intervals = Vec::with_capacity(d.cols);
    let mut col = Vec::with_capacity(d.rows);
    for j in 0..d.cols {
        col.clear();
        col.extend((0..d.rows).map(|k| d.values[k * d.cols + j]));
        est.push(col.iter().sum::<f64>() / d.rows as f64);
        col.sort_by(f64::total_cmp);
        intervals.push((quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.975)));
    }
    let mut ite = IteVector::new(est, Method::Bcf, model.seed, config_digest(&model.config))?;
    ite.intervals = Some(intervals);
    Ok(ite)
}
