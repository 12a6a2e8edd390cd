//! Bayesian additive regression trees fit by backfitting MCMC.
//!
//! Continuous outcomes are mapped to `[-0.5, 0.5]` and centered before
//! fitting; binary outcomes use a probit link with latent normal
//! augmentation. Predictions are reported on the outcome scale (identity
//! link) or the latent scale (probit).

mod ensemble;
mod tree;

pub use ensemble::{
    draw_sigma, leaf_log_evidence, leaf_marginal_loglik, BartSampler, Ensemble, MoveCounts,
    SigmaSetting,
};
pub use tree::{
    draw_move_kind, move_probabilities, propose_move, tree_log_prior, BartNode, BartTree, MoveKind,
    Proposal, Rule, SplitSpace, TreePrior, MOVE_PROBABILITIES,
};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::ite::{config_digest, IteVector, Method};
use crate::dataset::{ObservationalDataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::linalg::ols_hc3;
use crate::rng;
use crate::stats::{chi2_quantile, mean, normal_cdf, normal_quantile, sd};

pub use crate::stats::expit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Probit,
}

impl Link {
    pub fn inverse(self, v: f64) -> f64 {
        match self {
            Link::Identity => v,
            Link::Probit => normal_cdf(v),
        }
    }

    pub fn for_outcome(kind: OutcomeKind) -> Self {
        match kind {
            OutcomeKind::Binary => Link::Probit,
            OutcomeKind::Continuous => Link::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BartConfig {
    /// `None` uses 200 trees (identity) or 50 (probit).
    pub num_trees: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    /// Leaf-scale constant `k`.
    pub k: f64,
    pub nu: f64,
    pub q: f64,
    pub burn_in: usize,
    pub draws: usize,
    /// `None` picks the link from the outcome type.
    pub link: Option<Link>,
    /// Split levels allowed per tree; `Some(0)` freezes every tree as a stump.
    pub max_depth: Option<usize>,
    /// Overrides the leaf-scale rule.
    pub leaf_scale: Option<f64>,
    /// Holds the noise scale fixed (on the internal scale) instead of sampling it.
    pub fixed_sigma: Option<f64>,
}

impl Default for BartConfig {
    fn default() -> Self {
        Self {
            num_trees: None,
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            nu: 3.0,
            q: 0.9,
            burn_in: 200,
            draws: 500,
            link: None,
            max_depth: None,
            leaf_scale: None,
            fixed_sigma: None,
        }
    }
}

impl BartConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.num_trees == Some(0) {
            return bad("num_trees must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        if !(self.k > 0.0) || !(self.nu > 0.0) || !(self.q > 0.0 && self.q < 1.0) {
            return bad("k and nu must be positive and q in (0, 1)");
        }
        if self.draws == 0 {
            return bad("draws must be at least 1");
        }
        if self.leaf_scale.is_some_and(|s| !(s > 0.0)) || self.fixed_sigma.is_some_and(|s| !(s > 0.0)) {
            return bad("leaf_scale and fixed_sigma must be positive");
        }
        Ok(())
    }

    pub fn trees_for(&self, link: Link) -> usize {
        self.num_trees.unwrap_or(match link {
            Link::Identity => 200,
            Link::Probit => 50,
        })
    }

    /// `0.5 / (k sqrt(m))` on the scaled outcome, `3 / (k sqrt(m))` for probit.
    pub fn leaf_scale_for(&self, link: Link) -> f64 {
        let m = self.trees_for(link) as f64;
        self.leaf_scale.unwrap_or(match link {
            Link::Identity => 0.5 / (self.k * m.sqrt()),
            Link::Probit => 3.0 / (self.k * m.sqrt()),
        })
    }

    pub fn tree_prior(&self) -> TreePrior {
        TreePrior {
            alpha: self.alpha,
            beta: self.beta,
            max_depth: self.max_depth,
        }
    }
}

/// Kept posterior draws: one row per kept iteration, one column per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl PosteriorDraws {
    pub fn new(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            values: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: impl IntoIterator<Item = f64>) {
        let before = self.values.len();
        self.values.extend(row);
        assert_eq!(self.values.len() - before, self.cols, "draw row has wrong width");
        self.rows += 1;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.cols..(k + 1) * self.cols]
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        (0..self.rows).map(|k| self.values[k * self.cols + j]).sum::<f64>() / self.rows as f64
    }

    /// Columns `start..end` as a new table.
    pub fn select_columns(&self, start: usize, end: usize) -> Self {
        let mut out = Self::new(end - start);
        for k in 0..self.rows {
            out.push_row(self.row(k)[start..end].iter().copied());
        }
        out
    }

    /// `iteration,unit,value` rows.
    pub fn write_columnar<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,unit,value")?;
        for k in 0..self.rows {
            for (j, v) in self.row(k).iter().enumerate() {
                writeln!(w, "{},{},{}", k + 1, j, crate::dataset::format_number(*v))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BartFit {
    pub link: Link,
    pub num_trees: usize,
    pub leaf_scale: f64,
    pub burn_in: usize,
    /// Set when no burn-in was run.
    pub no_burn_in: bool,
    pub train: PosteriorDraws,
    pub test: Option<PosteriorDraws>,
    /// Noise scale per kept draw on the outcome scale (identity link only).
    pub sigma_draws: Vec<f64>,
    pub moves: MoveCounts,
    /// Mean training prediction over the first and second half of kept draws.
    pub split_half_means: (f64, f64),
}

struct Scaling {
    mid: f64,
    range: f64,
    center: f64,
}

impl Scaling {
    fn new(y: &[f64]) -> Self {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = if hi > lo { hi - lo } else { 1.0 };
        let mid = 0.5 * (hi + lo);
        let center = y.iter().map(|v| (v - mid) / range).sum::<f64>() / y.len() as f64;
        Self { mid, range, center }
    }

    fn forward(&self, v: f64) -> f64 {
        (v - self.mid) / self.range - self.center
    }

    fn back(&self, f: f64) -> f64 {
        (f + self.center) * self.range + self.mid
    }
}

/// Residual sd from least squares of `target` on an intercept and the
/// features, falling back to the marginal sd.
fn rough_sigma(columns: &[Vec<f64>], target: &[f64]) -> f64 {
    let n = target.len();
    let ones = vec![1.0; n];
    let mut cols: Vec<&[f64]> = vec![&ones];
    cols.extend(columns.iter().filter(|c| c.iter().any(|&v| v != c[0])).map(Vec::as_slice));
    let s = match ols_hc3(&cols, target) {
        Ok(fit) if fit.df_resid > 0 => {
            (fit.residuals.iter().map(|r| r * r).sum::<f64>() / fit.df_resid as f64).sqrt()
        }
        _ if n > 1 => sd(target),
        _ => 0.0,
    };
    s.max(1e-3)
}

/// Run the sampler for `burn_in + draws` iterations and keep the last
/// `draws`. `test` columns must match the feature layout.
pub fn fit_bart(
    columns: &[Vec<f64>],
    y: &[f64],
    test: Option<&[Vec<f64>]>,
    link: Link,
    config: &BartConfig,
    seed: u64,
) -> Result<BartFit> {
    config.validate()?;
    let n = y.len();
    if n < 2 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument("need at least two units with aligned features".into()));
    }
    if y.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input".into()));
    }
    let m = config.trees_for(link);
    let leaf_scale = config.leaf_scale_for(link);
    let mut ensemble = Ensemble::new(columns.to_vec(), m, config.tree_prior(), leaf_scale, None)?;
    if let Some(t) = test {
        ensemble = ensemble.with_test_points(t.to_vec())?;
    }
    let (target, sigma, offset, scaling) = match link {
        Link::Identity => {
            let sc = Scaling::new(y);
            let target: Vec<f64> = y.iter().map(|&v| sc.forward(v)).collect();
            let sigma = match config.fixed_sigma {
                Some(s) => SigmaSetting::Fixed(s),
                None => {
                    let s_hat = rough_sigma(columns, &target);
                    let lambda = s_hat * s_hat * chi2_quantile(1.0 - config.q, config.nu) / config.nu;
                    SigmaSetting::InverseChiSquared {
                        nu: config.nu,
                        lambda,
                        initial: s_hat,
                    }
                }
            };
            (target, sigma, None, Some(sc))
        }
        Link::Probit => {
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidArgument("probit link needs a 0/1 outcome".into()));
            }
            let p = mean(y).clamp(1.0 / (2.0 * n as f64), 1.0 - 1.0 / (2.0 * n as f64));
            (y.to_vec(), SigmaSetting::Fixed(1.0), Some(normal_quantile(p)), None)
        }
    };
    let out = |f: f64| match (&scaling, offset) {
        (Some(sc), _) => sc.back(f),
        (None, Some(o)) => f + o,
        (None, None) => f,
    };
    let mut sampler = BartSampler::new(ensemble, target, sigma, offset, rng::stream(seed))?;
    let mut train = PosteriorDraws::new(n);
    let mut test_draws = test.map(|t| PosteriorDraws::new(t.first().map_or(0, Vec::len)));
    let mut sigma_draws = Vec::new();
    for it in 0..config.burn_in + config.draws {
        sampler.step();
        if it < config.burn_in {
            continue;
        }
        let ens = sampler.ensemble();
        train.push_row(ens.fit().iter().map(|&f| out(f)));
        if let (Some(td), Some(tf)) = (&mut test_draws, ens.test_fit()) {
            td.push_row(tf.iter().map(|&f| out(f)));
        }
        if let Some(sc) = &scaling {
            sigma_draws.push(sampler.sigma() * sc.range);
        }
    }
    if train.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite posterior draw".into()));
    }
    let row_means: Vec<f64> = (0..train.rows).map(|k| mean(train.row(k))).collect();
    let half = row_means.len() / 2;
    let split_half_means = if half == 0 {
        (row_means[0], row_means[0])
    } else {
        (mean(&row_means[..half]), mean(&row_means[half..]))
    };
    Ok(BartFit {
        link,
        num_trees: m,
        leaf_scale,
        burn_in: config.burn_in,
        no_burn_in: config.burn_in == 0,
        train,
        test: test_draws,
        sigma_draws,
        moves: sampler.ensemble().move_counts(),
        split_half_means,
    })
}

/// `mean_k link^-1(treated_k) - mean_k link^-1(control_k)` per column.
pub fn ite_from_draws(treated: &PosteriorDraws, control: &PosteriorDraws, link: Link) -> Result<Vec<f64>> {
    if treated.rows != control.rows || treated.cols != control.cols || treated.rows == 0 {
        return Err(Error::InvalidArgument("counterfactual draw tables differ in shape".into()));
    }
    let k = treated.rows as f64;
    Ok((0..treated.cols)
        .map(|j| {
            let (mut a, mut b) = (0.0, 0.0);
            for r in 0..treated.rows {
                a += link.inverse(treated.values[r * treated.cols + j]);
                b += link.inverse(control.values[r * control.cols + j]);
            }
            a / k - b / k
        })
        .collect())
}

/// Feature table with the exposure appended as the last column, optionally
/// overriding every exposure value.
pub fn features_with_exposure(data: &ObservationalDataset, exposure: Option<f64>) -> Vec<Vec<f64>> {
    let mut cols = data.columns().to_vec();
    cols.push(match exposure {
        Some(z) => vec![z; data.n()],
        None => data.exposure().to_vec(),
    });
    cols
}

/// Counterfactual effects from a fit whose test points were the `n` units
/// with exposure set to 1 followed by the same units with exposure 0.
pub fn estimate_ite_counterfactual(fit: &BartFit, n: usize) -> Result<Vec<f64>> {
    let test = fit
        .test
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fit has no counterfactual predictions".into()))?;
    if test.cols != 2 * n {
        return Err(Error::InvalidArgument(format!(
            "expected {} counterfactual points, fit has {}",
            2 * n,
            test.cols
        )));
    }
    ite_from_draws(&test.select_columns(0, n), &test.select_columns(n, 2 * n), fit.link)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BartIte {
    pub ite: IteVector,
    pub fit: BartFit,
}

/// Fit with the exposure as a feature and difference the predictions with
/// exposure set to 1 and to 0 for every unit.
pub fn bart_ite(data: &ObservationalDataset, config: &BartConfig, seed: u64) -> Result<BartIte> {
    let link = config.link.unwrap_or(Link::for_outcome(data.outcome_kind()));
    let n = data.n();
    let features = features_with_exposure(data, None);
    let treated = features_with_exposure(data, Some(1.0));
    let control = features_with_exposure(data, Some(0.0));
    let test: Vec<Vec<f64>> = treated
        .into_iter()
        .zip(control)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect();
    let fit = fit_bart(&features, data.outcome(), Some(&test), link, config, seed)?;
    let est = estimate_ite_counterfactual(&fit, n)?;
    let ite = IteVector::new(est, Method::Bart, seed, config_digest(config))?;
    Ok(BartIte { ite, fit })
}
