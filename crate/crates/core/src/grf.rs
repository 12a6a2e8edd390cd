//! Generalized random forest for conditional treatment effects.
//!
//! Outcome and exposure are first centered by out-of-bag regression-forest
//! predictions. Honest gradient trees are then grown on the centered
//! residuals, and effects are read off the forest kernel by solving the
//! weighted estimating equation
//!
//! ```text
//! theta(x) = sum_i a_i(x) Zr_i Yr_i / sum_i a_i(x) Zr_i^2
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::ite::{config_digest, IteVector, Method};
use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::forest::{
    forest_weights, grow_gradient_tree, honest_partition, subsample, DecisionTree, ForestConfig,
    GrowConfig, RegressionForest, UnitSet,
};
use crate::linalg::ols_hc3;
use crate::rng;
use crate::stats::{normal_cdf, sd, t_quantile, t_upper_tail};

pub const MODEL_VERSION: u32 = 1;
pub const PROPENSITY_CLIP: (f64, f64) = (0.01, 0.99);
const MIN_UNITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalForestConfig {
    pub num_trees: usize,
    pub sample_fraction: f64,
    pub honest_fraction: f64,
    pub min_leaf: usize,
    /// Split candidates per node; `None` uses `ceil(sqrt(p) + 0.2 p)`.
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
    /// Trees per nuisance forest; `None` uses `max(50, num_trees / 4)`.
    pub nuisance_trees: Option<usize>,
}

impl Default for CausalForestConfig {
    fn default() -> Self {
        Self {
            num_trees: 500,
            sample_fraction: 0.5,
            honest_fraction: 0.5,
            min_leaf: 5,
            mtry: None,
            max_depth: None,
            nuisance_trees: None,
        }
    }
}

impl CausalForestConfig {
    fn grow_config(&self, p: usize) -> GrowConfig {
        GrowConfig {
            min_leaf: self.min_leaf,
            mtry: self.mtry.unwrap_or_else(|| GrowConfig::default_mtry(p)).min(p),
            max_depth: self.max_depth,
        }
    }

    fn nuisance_config(&self, p: usize) -> ForestConfig {
        ForestConfig {
            num_trees: self.nuisance_trees.unwrap_or((self.num_trees / 4).max(50)),
            sample_fraction: self.sample_fraction,
            // Adaptive nuisance leaves let a unit's own outcome reach its
            // neighbours' residuals and inflate the calibration test.
            honest_fraction: Some(self.honest_fraction),
            grow: self.grow_config(p),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::InvalidArgument("num_trees must be positive".into()));
        }
        for (name, f) in [
            ("sample_fraction", self.sample_fraction),
            ("honest_fraction", self.honest_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.min_leaf == 0 || self.mtry == Some(0) {
            return Err(Error::InvalidArgument("min_leaf and mtry must be positive".into()));
        }
        Ok(())
    }
}

/// A fitted causal forest with its nuisance estimates and out-of-bag effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalForestModel {
    pub version: u32,
    pub config: CausalForestConfig,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
    /// Units drawn into each tree's subsample (grow and estimate halves).
    pub subsamples: Vec<UnitSet>,
    pub m_hat: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub y_resid: Vec<f64>,
    pub z_resid: Vec<f64>,
    pub exposure: Vec<f64>,
    pub oob_ite: Vec<f64>,
    /// Units whose out-of-bag effect had to use the full forest.
    pub oob_fallback_units: Vec<usize>,
    pub covariate_names: Vec<String>,
}

fn clip_propensity(e: f64) -> f64 {
    e.clamp(PROPENSITY_CLIP.0, PROPENSITY_CLIP.1)
}

/// Fit nuisance forests, then the causal forest.
pub fn fit_causal_forest(
    data: &ObservationalDataset,
    config: &CausalForestConfig,
    seed: u64,
) -> Result<CausalForestModel> {
    config.validate()?;
    check_sample(data)?;
    let nuisance = config.nuisance_config(data.p());
    let m_hat = RegressionForest::fit(
        data.columns(),
        data.outcome(),
        nuisance,
        rng::named_seed(seed, "outcome-forest"),
    )?
    .oob_predictions(data.columns())
    .predictions;
    let e_hat = RegressionForest::fit(
        data.columns(),
        data.exposure(),
        nuisance,
        rng::named_seed(seed, "propensity-forest"),
    )?
    .oob_predictions(data.columns())
    .predictions;
    fit_causal_forest_with_nuisance(data, m_hat, e_hat, config, seed)
}

fn check_sample(data: &ObservationalDataset) -> Result<()> {
    if data.n() < MIN_UNITS {
        return Err(Error::InvalidArgument(format!(
            "causal forest needs at least {MIN_UNITS} units, got {}",
            data.n()
        )));
    }
    let treated = data.treated_count();
    if treated == 0 || treated == data.n() {
        return Err(Error::Data("exposure has no variation".into()));
    }
    Ok(())
}

/// Fit the causal forest given supplied nuisance estimates
/// (`m_hat` of the outcome mean, `e_hat` of the propensity).
pub fn fit_causal_forest_with_nuisance(
    data: &ObservationalDataset,
    m_hat: Vec<f64>,
    e_hat: Vec<f64>,
    config: &CausalForestConfig,
    seed: u64,
) -> Result<CausalForestModel> {
    config.validate()?;
    check_sample(data)?;
    let n = data.n();
    if m_hat.len() != n || e_hat.len() != n {
        return Err(Error::InvalidArgument("nuisance length mismatch".into()));
    }
    let e_hat: Vec<f64> = e_hat.into_iter().map(clip_propensity).collect();
    let y_resid: Vec<f64> = data.outcome().iter().zip(&m_hat).map(|(y, m)| y - m).collect();
    let z_resid: Vec<f64> = data.exposure().iter().zip(&e_hat).map(|(z, e)| z - e).collect();

    let grow_cfg = config.grow_config(data.p());
    let tree_seed = rng::named_seed(seed, "causal-trees");
    let columns = data.columns();
    let grown: Vec<(DecisionTree, UnitSet)> = (0..config.num_trees)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::substream(tree_seed, b as u64);
            let sample = subsample(n, config.sample_fraction, &mut r);
            let set = UnitSet::from_indices(n, &sample);
            let part = honest_partition(&sample, config.honest_fraction, &mut r)?;
            let tree = grow_gradient_tree(columns, &y_resid, &z_resid, &part, grow_cfg, &mut r)?;
            Ok((tree, set))
        })
        .collect::<Result<_>>()?;
    let (trees, subsamples): (Vec<_>, Vec<_>) = grown.into_iter().unzip();

    let mut model = CausalForestModel {
        version: MODEL_VERSION,
        config: *config,
        seed,
        trees,
        subsamples,
        m_hat,
        e_hat,
        y_resid,
        z_resid,
        exposure: data.exposure().to_vec(),
        oob_ite: Vec::new(),
        oob_fallback_units: Vec::new(),
        covariate_names: data.covariate_names().to_vec(),
    };
    let (oob, fallback) = model.out_of_bag_effects(columns)?;
    model.oob_ite = oob;
    model.oob_fallback_units = fallback;
    Ok(model)
}

/// Per-leaf sums of `Zr*Yr` and `Zr^2` divided by the leaf size.
struct LeafStats {
    zy: Vec<f64>,
    zz: Vec<f64>,
}

impl CausalForestModel {
    pub fn n(&self) -> usize {
        self.exposure.len()
    }

    fn leaf_stats(&self) -> Vec<LeafStats> {
        self.trees
            .iter()
            .map(|t| {
                let k = t.nodes().len();
                let mut zy = vec![0.0; k];
                let mut zz = vec![0.0; k];
                for (id, members) in t.leaves() {
                    if members.is_empty() {
                        continue;
                    }
                    let w = 1.0 / members.len() as f64;
                    for &i in members {
                        zy[id] += w * self.z_resid[i] * self.y_resid[i];
                        zz[id] += w * self.z_resid[i] * self.z_resid[i];
                    }
                }
                LeafStats { zy, zz }
            })
            .collect()
    }

    fn out_of_bag_effects(&self, columns: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<usize>)> {
        let stats = self.leaf_stats();
        let solve = |i: usize, use_tree: &dyn Fn(usize) -> bool| -> Option<f64> {
            let (mut num, mut den) = (0.0, 0.0);
            for (b, tree) in self.trees.iter().enumerate() {
                if !use_tree(b) {
                    continue;
                }
                let leaf = tree.leaf_index_of_row(columns, i);
                if tree.members(leaf).is_empty() {
                    continue;
                }
                num += stats[b].zy[leaf];
                den += stats[b].zz[leaf];
            }
            (den > 0.0).then(|| num / den)
        };
        let results: Vec<Result<(f64, bool)>> = (0..self.n())
            .into_par_iter()
            .map(|i| {
                if let Some(t) = solve(i, &|b| !self.subsamples[b].contains(i)) {
                    return Ok((t, false));
                }
                solve(i, &|_| true).map(|t| (t, true)).ok_or_else(|| {
                    Error::Positivity(format!(
                        "no exposure variation in the forest neighborhood of unit {i}"
                    ))
                })
            })
            .collect();
        let mut ite = Vec::with_capacity(self.n());
        let mut fallback = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            let (t, fb) = r?;
            ite.push(t);
            if fb {
                fallback.push(i);
            }
        }
        Ok((ite, fallback))
    }

    pub fn oob_ite(&self) -> Result<IteVector> {
        IteVector::new(
            self.oob_ite.clone(),
            Method::Grf,
            self.seed,
            config_digest(&self.config),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }
}

/// Effect estimate and plug-in variance at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IteEstimate {
    pub estimate: f64,
    pub variance: f64,
}

/// Closed-form minimizer of `sum_i w_i (y_i - theta z_i)^2` and its
/// delta-method variance.
pub fn solve_weighted_effect(weights: &[f64], y_resid: &[f64], z_resid: &[f64]) -> Result<IteEstimate> {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((w, y), z) in weights.iter().zip(y_resid).zip(z_resid) {
        num += w * z * y;
        den += w * z * z;
    }
    if !(den > 0.0) {
        return Err(Error::Positivity(
            "no exposure variation among units with positive forest weight".into(),
        ));
    }
    let theta = num / den;
    let mut v = 0.0;
    for ((w, y), z) in weights.iter().zip(y_resid).zip(z_resid) {
        let r = (y - theta * z) * z;
        v += w * w * r * r;
    }
    Ok(IteEstimate {
        estimate: theta,
        variance: v / (den * den),
    })
}

/// Effect at a new covariate point using every tree.
pub fn predict_ite(model: &CausalForestModel, x: &[f64]) -> Result<IteEstimate> {
    let w = forest_weights(&model.trees, x, model.n())?;
    solve_weighted_effect(&w.weights, &model.y_resid, &model.z_resid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Doubly robust scores
/// `tau_i + (Z_i - e_i)(Yr_i - tau_i (Z_i - e_i)) / (e_i (1 - e_i))`.
pub fn aipw_scores(tau: &[f64], exposure: &[f64], e_hat: &[f64], y_resid: &[f64]) -> Vec<f64> {
    tau.iter()
        .zip(exposure)
        .zip(e_hat)
        .zip(y_resid)
        .map(|(((t, z), e), y)| {
            let zr = z - e;
            t + zr * (y - t * zr) / (e * (1.0 - e))
        })
        .collect()
}

pub fn ate_from_scores(scores: &[f64]) -> AteEstimate {
    AteEstimate {
        estimate: crate::stats::mean(scores),
        std_error: sd(scores) / (scores.len() as f64).sqrt(),
    }
}

impl CausalForestModel {
    pub fn aipw_scores(&self) -> Vec<f64> {
        aipw_scores(&self.oob_ite, &self.exposure, &self.e_hat, &self.y_resid)
    }
}

pub fn average_treatment_effect(model: &CausalForestModel) -> AteEstimate {
    ate_from_scores(&model.aipw_scores())
}

/// Calibration regression coefficients with one-sided tests of `coef <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlpReport {
    pub mean_coef: f64,
    pub mean_se: f64,
    pub mean_p: f64,
    pub diff_coef: f64,
    pub diff_se: f64,
    pub diff_p: f64,
}

fn one_sided_p(coef: f64, se: f64, df: f64) -> f64 {
    if se > 0.0 && se.is_finite() {
        t_upper_tail(coef / se, df)
    } else if coef > 0.0 {
        0.0
    } else {
        1.0
    }
}

/// No-intercept regression of `response` on `(c, d)` with HC3 errors.
/// A `d` without variance is dropped and reported as coefficient 0, p = 1.
pub fn calibration_regression(response: &[f64], c: &[f64], d: &[f64]) -> Result<BlpReport> {
    let n = response.len() as f64;
    let d_degenerate = sd(d) == 0.0;
    if !d_degenerate {
        if let Ok(fit) = ols_hc3(&[c, d], response) {
            let df = fit.df_resid as f64;
            return Ok(BlpReport {
                mean_coef: fit.coefficients[0],
                mean_se: fit.std_errors[0],
                mean_p: one_sided_p(fit.coefficients[0], fit.std_errors[0], df),
                diff_coef: fit.coefficients[1],
                diff_se: fit.std_errors[1],
                diff_p: one_sided_p(fit.coefficients[1], fit.std_errors[1], df),
            });
        }
    }
    let fit = ols_hc3(&[c], response)?;
    Ok(BlpReport {
        mean_coef: fit.coefficients[0],
        mean_se: fit.std_errors[0],
        mean_p: one_sided_p(fit.coefficients[0], fit.std_errors[0], n - 1.0),
        diff_coef: 0.0,
        diff_se: 0.0,
        diff_p: 1.0,
    })
}

/// Regress `Y - m(X)` on `C = mean_tau (Z - e)` and `D = (tau - mean_tau)(Z - e)`.
pub fn test_calibration(model: &CausalForestModel) -> Result<BlpReport> {
    let tau_bar = crate::stats::mean(&model.oob_ite);
    let c: Vec<f64> = model.z_resid.iter().map(|z| tau_bar * z).collect();
    let d: Vec<f64> = model
        .oob_ite
        .iter()
        .zip(&model.z_resid)
        .map(|(t, z)| (t - tau_bar) * z)
        .collect();
    calibration_regression(&model.y_resid, &c, &d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub term: String,
    pub coef: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Least squares of doubly robust scores on an intercept plus the modifiers.
/// Returns the intercept row followed by one row per modifier.
pub fn project_scores(scores: &[f64], modifiers: &[(String, Vec<f64>)]) -> Result<Vec<ProjectionRow>> {
    if modifiers.is_empty() {
        return Err(Error::InvalidArgument("at least one modifier is required".into()));
    }
    let n = scores.len();
    if modifiers.iter().any(|(_, m)| m.len() != n) {
        return Err(Error::InvalidArgument("modifier length mismatch".into()));
    }
    let one = vec![1.0; n];
    let mut cols: Vec<&[f64]> = vec![&one];
    cols.extend(modifiers.iter().map(|(_, m)| m.as_slice()));
    let fit = ols_hc3(&cols, scores)?;
    let df = fit.df_resid as f64;
    let q = t_quantile(0.975, df);
    let names = std::iter::once("(intercept)".to_string()).chain(modifiers.iter().map(|(n, _)| n.clone()));
    Ok(names
        .zip(fit.coefficients.iter().zip(&fit.std_errors))
        .map(|(term, (&coef, &se))| ProjectionRow {
            term,
            coef,
            std_error: se,
            ci_low: coef - q * se,
            ci_high: coef + q * se,
            p_value: if se > 0.0 {
                2.0 * t_upper_tail((coef / se).abs(), df)
            } else if coef == 0.0 {
                1.0
            } else {
                0.0
            },
        })
        .collect())
}

/// Best linear projection of the doubly robust scores onto named covariates.
pub fn best_linear_projection(
    model: &CausalForestModel,
    data: &ObservationalDataset,
    modifiers: &[String],
) -> Result<Vec<ProjectionRow>> {
    let cols = modifiers
        .iter()
        .map(|name| {
            data.covariate_index(name)
                .map(|j| (name.clone(), data.covariate(j).to_vec()))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown modifier '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    project_scores(&model.aipw_scores(), &cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableImportance {
    pub names: Vec<String>,
    pub scores: Vec<f64>,
}

impl VariableImportance {
    /// Covariate indices ordered by decreasing importance (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }
}

/// Splits on each covariate weighted by `depth^-2` for depths 1 to 4,
/// normalized to sum to one.
pub fn split_frequency_importance(trees: &[DecisionTree], p: usize) -> Vec<f64> {
    let mut raw = vec![0.0; p];
    for tree in trees {
        for (covariate, depth) in tree.splits() {
            if depth <= 4 {
                raw[covariate] += 1.0 / (depth * depth) as f64;
            }
        }
    }
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter_mut().for_each(|v| *v /= total);
    }
    raw
}

pub fn variable_importance(model: &CausalForestModel) -> VariableImportance {
    VariableImportance {
        names: model.covariate_names.clone(),
        scores: split_frequency_importance(&model.trees, model.covariate_names.len()),
    }
}

/// Normal-approximation two-sided p-value for an estimate and its standard error.
pub fn wald_p(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        2.0 * (1.0 - normal_cdf((estimate / se).abs()))
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    }
}
