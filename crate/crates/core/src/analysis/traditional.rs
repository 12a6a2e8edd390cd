use serde::{Deserialize, Serialize};

use super::logistic::logistic_irls;
use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::stats::{chi2_upper_tail, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "extended_f64")]
    pub estimate: f64,
    #[serde(with = "extended_f64")]
    pub low: f64,
    #[serde(with = "extended_f64")]
    pub high: f64,
}

/// JSON has no infinities or NaN; such values are written as strings.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) if t == "nan" => Ok(f64::NAN),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad bound '{t}'"))),
        }
    }
}

impl Interval {
    fn wald(estimate: f64, se: f64) -> Self {
        let z = normal_quantile(0.975);
        Self {
            estimate,
            low: estimate - z * se,
            high: estimate + z * se,
        }
    }

    fn exp(self) -> Self {
        Self {
            estimate: self.estimate.exp(),
            low: self.low.exp(),
            high: self.high.exp(),
        }
    }

    fn unbounded(estimate: f64) -> Self {
        Self {
            estimate,
            low: f64::NEG_INFINITY,
            high: f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let g = |v: f64| {
            if v.is_finite() {
                format!("{}", sig3(v))
            } else if v.is_nan() {
                "nan".into()
            } else if v > 0.0 {
                "inf".into()
            } else {
                "-inf".into()
            }
        };
        write!(f, "{} ({}, {})", g(self.estimate), g(self.low), g(self.high))
    }
}

/// Round to three significant digits for display.
fn sig3(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let mag = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(2 - mag);
    let r = (v * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub n: usize,
    pub events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoByTwo {
    pub risk_difference: Interval,
    pub risk_ratio: Interval,
    pub odds_ratio: Interval,
    /// Some cell is zero, so ratio intervals are unbounded.
    pub zero_cell: bool,
}

/// Risk difference, risk ratio and odds ratio with Wald 95% intervals
/// (ratios on the log scale). No continuity correction is applied.
pub fn two_by_two_measures(exposed: Arm, unexposed: Arm) -> Result<TwoByTwo> {
    if exposed.n == 0 || unexposed.n == 0 {
        return Err(Error::InvalidArgument("each arm needs at least one unit".into()));
    }
    if exposed.events > exposed.n || unexposed.events > unexposed.n {
        return Err(Error::InvalidArgument("events exceed arm size".into()));
    }
    let (n1, a) = (exposed.n as f64, exposed.events as f64);
    let (n0, c) = (unexposed.n as f64, unexposed.events as f64);
    let (p1, p0) = (a / n1, c / n0);
    let rd = Interval::wald(p1 - p0, (p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0).sqrt());
    let zero_cell = a == 0.0 || c == 0.0 || a == n1 || c == n0;
    let rr_est = p1 / p0;
    let or_est = (a * (n0 - c)) / (c * (n1 - a));
    let (risk_ratio, odds_ratio) = if zero_cell {
        (Interval::unbounded(rr_est), Interval::unbounded(or_est))
    } else {
        let se_rr = (1.0 / a - 1.0 / n1 + 1.0 / c - 1.0 / n0).sqrt();
        let se_or = (1.0 / a + 1.0 / (n1 - a) + 1.0 / c + 1.0 / (n0 - c)).sqrt();
        (
            Interval::wald(rr_est.ln(), se_rr).exp(),
            Interval::wald(or_est.ln(), se_or).exp(),
        )
    };
    Ok(TwoByTwo {
        risk_difference: rd,
        risk_ratio,
        odds_ratio,
        zero_cell,
    })
}

pub fn arms(exposure: &[f64], outcome: &[f64], rows: &[usize]) -> (Arm, Arm) {
    let mut e = Arm { n: 0, events: 0 };
    let mut u = Arm { n: 0, events: 0 };
    for &i in rows {
        let arm = if exposure[i] == 1.0 { &mut e } else { &mut u };
        arm.n += 1;
        arm.events += usize::from(outcome[i] == 1.0);
    }
    (e, u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedOddsRatio {
    pub label: String,
    pub n: usize,
    pub log_or: f64,
    pub log_or_se: f64,
    pub odds_ratio: Interval,
    /// Adjusters dropped because they were constant in the subset.
    pub dropped: Vec<String>,
}

/// Exposure odds ratio from a logistic model of the outcome on exposure and
/// `adjusters`, fit on `rows`.
pub fn adjusted_odds_ratio(
    data: &ObservationalDataset,
    rows: &[usize],
    adjusters: &[usize],
    label: &str,
) -> Result<AdjustedOddsRatio> {
    let z: Vec<f64> = rows.iter().map(|&i| data.exposure()[i]).collect();
    let y: Vec<f64> = rows.iter().map(|&i| data.outcome()[i]).collect();
    let treated = z.iter().filter(|&&v| v == 1.0).count();
    let events = y.iter().filter(|&&v| v == 1.0).count();
    if treated == 0 || treated == z.len() || events == 0 || events == y.len() {
        return Err(Error::Data(format!(
            "stratum {label} lacks exposure or outcome variation"
        )));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for &j in adjusters {
        let col: Vec<f64> = rows.iter().map(|&i| data.covariate(j)[i]).collect();
        if col.iter().all(|&v| v == col[0]) {
            dropped.push(data.covariate_names()[j].clone());
        } else {
            kept.push(col);
        }
    }
    let mut cols: Vec<&[f64]> = vec![&z];
    cols.extend(kept.iter().map(Vec::as_slice));
    let fit = logistic_irls(&cols, &y, true).map_err(|e| match e {
        Error::Separation { .. } => Error::Separation {
            label: Some(label.to_string()),
        },
        other => other,
    })?;
    let (b, se) = (fit.coefficients[1], fit.std_error(1));
    Ok(AdjustedOddsRatio {
        label: label.to_string(),
        n: rows.len(),
        log_or: b,
        log_or_se: se,
        odds_ratio: Interval::wald(b, se).exp(),
        dropped,
    })
}

/// Adjusted exposure odds ratios within each level of `stratum`, adjusting for
/// every other covariate, preceded by a full-sample row adjusting for all.
pub fn stratified_cate(data: &ObservationalDataset, stratum: usize) -> Result<Vec<AdjustedOddsRatio>> {
    let name = &data.covariate_names()[stratum];
    let all: Vec<usize> = (0..data.n()).collect();
    let mut rows = vec![adjusted_odds_ratio(data, &all, &(0..data.p()).collect::<Vec<_>>(), "all")?];
    let others: Vec<usize> = (0..data.p()).filter(|&j| j != stratum).collect();
    for (level, idx) in strata(data.covariate(stratum)) {
        let label = format!("{name}={}", crate::dataset::format_number(level));
        rows.push(adjusted_odds_ratio(data, &idx, &others, &label)?);
    }
    Ok(rows)
}

/// Distinct levels in increasing order with their row indices.
pub fn strata(values: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut levels: Vec<f64> = values.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
        .into_iter()
        .map(|l| (l, (0..values.len()).filter(|&i| values[i] == l).collect()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CochranQ {
    pub q: f64,
    pub df: usize,
    pub p_value: f64,
    pub pooled: f64,
}

/// Inverse-variance heterogeneity statistic with a chi-squared(K-1) reference.
pub fn cochran_q(estimates: &[f64], std_errors: &[f64]) -> Result<CochranQ> {
    if estimates.len() < 2 || estimates.len() != std_errors.len() {
        return Err(Error::InvalidArgument(
            "need at least two estimates with matching standard errors".into(),
        ));
    }
    if std_errors.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument("standard errors must be positive".into()));
    }
    let w: Vec<f64> = std_errors.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let pooled = w.iter().zip(estimates).map(|(w, t)| w * t).sum::<f64>() / sw;
    let q: f64 = w
        .iter()
        .zip(estimates)
        .map(|(w, t)| w * (t - pooled) * (t - pooled))
        .sum();
    let df = estimates.len() - 1;
    Ok(CochranQ {
        q,
        df,
        p_value: chi2_upper_tail(q, df as f64).clamp(0.0, 1.0),
        pooled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub label: String,
    pub n: usize,
    pub measures: TwoByTwo,
    pub adjusted: AdjustedOddsRatio,
}

/// Full-sample and per-stratum traditional effect measures with a
/// homogeneity test across strata of the adjusted log odds ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub stratum: String,
    pub rows: Vec<GroupRow>,
    pub heterogeneity: CochranQ,
}

pub fn stratified_report(data: &ObservationalDataset, stratum: usize) -> Result<StratifiedReport> {
    let adjusted = stratified_cate(data, stratum)?;
    let mut groups = vec![(0..data.n()).collect::<Vec<_>>()];
    groups.extend(strata(data.covariate(stratum)).into_iter().map(|(_, idx)| idx));
    let rows = adjusted
        .into_iter()
        .zip(groups)
        .map(|(adj, idx)| {
            let (e, u) = arms(data.exposure(), data.outcome(), &idx);
            Ok(GroupRow {
                label: adj.label.clone(),
                n: idx.len(),
                measures: two_by_two_measures(e, u)?,
                adjusted: adj,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let est: Vec<f64> = rows[1..].iter().map(|r| r.adjusted.log_or).collect();
    let se: Vec<f64> = rows[1..].iter().map(|r| r.adjusted.log_or_se).collect();
    Ok(StratifiedReport {
        stratum: data.covariate_names()[stratum].clone(),
        heterogeneity: cochran_q(&est, &se)?,
        rows,
    })
}
