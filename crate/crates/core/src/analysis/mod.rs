//! Effect-measure-modification summaries shared by every estimator, plus the
//! classical stratified comparison.

pub mod fit_the_fit;
pub mod ite;
pub mod logistic;
pub mod subgroup;
pub mod traditional;

pub use fit_the_fit::{fit_the_fit, FitNode, FitTheFitTree, SplitRule};
pub use ite::{config_digest, IteVector, Method};
pub use logistic::{log_likelihood, logistic_irls, LogisticFit};
pub use subgroup::{subgroup_summary, HistogramRow, SubgroupLevel, SubgroupSummary};
pub use traditional::{
    adjusted_odds_ratio, cochran_q, stratified_cate, stratified_report, two_by_two_measures,
    AdjustedOddsRatio, Arm, CochranQ, GroupRow, Interval, StratifiedReport, TwoByTwo,
};

use crate::dataset::ObservationalDataset;
use crate::error::Result;

/// Propensity scores from a logistic regression of exposure on all
/// non-constant covariates.
pub fn logistic_propensity(data: &ObservationalDataset) -> Result<Vec<f64>> {
    let cols: Vec<&[f64]> = data
        .columns()
        .iter()
        .filter(|c| c.iter().any(|&v| v != c[0]))
        .map(Vec::as_slice)
        .collect();
    let fit = logistic_irls(&cols, data.exposure(), true)?;
    Ok(fit.predict(&cols, true))
}
