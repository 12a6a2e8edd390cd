use serde::{Deserialize, Serialize};

use crate::dataset::format_number;
use crate::error::{Error, Result};
use crate::stats::{mean, quantile_sorted, sd};

pub const DEFAULT_BINS: usize = 30;
const MAX_LEVELS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupLevel {
    pub level: f64,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    /// 5%, 25%, 50%, 75% and 95% quantiles.
    pub quantiles: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub level: f64,
    /// Bin center.
    pub bin: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub covariate: String,
    pub levels: Vec<SubgroupLevel>,
    /// Shared bins across levels so panels are comparable.
    pub histogram: Vec<HistogramRow>,
    pub single_level: bool,
}

impl SubgroupSummary {
    /// Columnar plot data with a `level,bin,count` header.
    pub fn plot_data_csv(&self) -> String {
        let mut out = String::from("level,bin,count\n");
        for r in &self.histogram {
            out.push_str(&format!(
                "{},{},{}\n",
                format_number(r.level),
                format_number(r.bin),
                r.count
            ));
        }
        out
    }
}

/// Distribution of effect estimates within each level of a grouping covariate.
pub fn subgroup_summary(
    ites: &[f64],
    grouping: &[f64],
    covariate: &str,
    bins: usize,
) -> Result<SubgroupSummary> {
    if ites.len() != grouping.len() || ites.is_empty() {
        return Err(Error::InvalidArgument("effects and grouping must have equal nonzero length".into()));
    }
    let mut levels: Vec<f64> = grouping.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() > MAX_LEVELS {
        return Err(Error::InvalidArgument(format!(
            "grouping covariate '{covariate}' has {} levels; at most {MAX_LEVELS} supported",
            levels.len()
        )));
    }
    let bins = bins.max(1);
    let lo = ites.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ites.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };

    let mut summary_levels = Vec::new();
    let mut histogram = Vec::new();
    for &level in &levels {
        let mut values: Vec<f64> = ites
            .iter()
            .zip(grouping)
            .filter(|(_, g)| **g == level)
            .map(|(v, _)| *v)
            .collect();
        let mut counts = vec![0usize; bins];
        for &v in &values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for (b, &count) in counts.iter().enumerate() {
            histogram.push(HistogramRow {
                level,
                bin: if hi > lo { lo + (b as f64 + 0.5) * width } else { lo },
                count,
            });
            if hi <= lo {
                break;
            }
        }
        let m = mean(&values);
        let s = if values.len() > 1 { sd(&values) } else { 0.0 };
        values.sort_by(f64::total_cmp);
        let q = [0.05, 0.25, 0.5, 0.75, 0.95].map(|p| quantile_sorted(&values, p));
        summary_levels.push(SubgroupLevel {
            level,
            count: values.len(),
            mean: m,
            sd: s,
            quantiles: q,
        });
    }
    Ok(SubgroupSummary {
        covariate: covariate.to_string(),
        single_level: levels.len() == 1,
        levels: summary_levels,
        histogram,
    })
}
