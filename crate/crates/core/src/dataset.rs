//! Observational data: loading, validation, synthesis and descriptive tables.
//!
//! A dataset holds an n×p covariate table (stored by column), a binary
//! exposure and an outcome that is either binary or continuous. Every
//! constructor funnels through [`ObservationalDataset::new`], so any value of
//! this type satisfies the data invariants.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{expit, logit, standard_normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Binary => "binary",
            OutcomeKind::Continuous => "continuous",
        }
    }
}

impl std::str::FromStr for OutcomeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "binary" => Ok(OutcomeKind::Binary),
            "continuous" => Ok(OutcomeKind::Continuous),
            other => Err(Error::Config(format!("unknown outcome kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationalDataset {
    columns: Vec<Vec<f64>>,
    exposure: Vec<f64>,
    outcome: Vec<f64>,
    covariate_names: Vec<String>,
    outcome_kind: OutcomeKind,
}

impl ObservationalDataset {
    /// Validate and assemble a dataset from covariate columns.
    pub fn new(
        columns: Vec<Vec<f64>>,
        exposure: Vec<f64>,
        outcome: Vec<f64>,
        covariate_names: Vec<String>,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        let n = exposure.len();
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 rows, got {n}")));
        }
        if columns.is_empty() {
            return Err(Error::Data("at least one covariate is required".into()));
        }
        if columns.len() != covariate_names.len() {
            return Err(Error::Data("covariate names do not match columns".into()));
        }
        if outcome.len() != n || columns.iter().any(|c| c.len() != n) {
            return Err(Error::Data("all columns must have the same length".into()));
        }
        let mut seen = HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Data(format!("duplicate covariate name '{name}'")));
            }
        }
        for (j, col) in columns.iter().enumerate() {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "missing value at row {}, column {}",
                    i + 1,
                    covariate_names[j]
                )));
            }
        }
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("missing value at row {}, outcome", i + 1)));
        }
        if let Some(i) = exposure.iter().position(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::Data(format!(
                "exposure must be binary (row {} has {})",
                i + 1,
                exposure[i]
            )));
        }
        if outcome_kind == OutcomeKind::Binary {
            if let Some(i) = outcome.iter().position(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::Data(format!(
                    "binary outcome must be 0/1 (row {} has {})",
                    i + 1,
                    outcome[i]
                )));
            }
        }
        let treated = exposure.iter().filter(|v| **v == 1.0).count();
        if treated == 0 || treated == n {
            return Err(Error::Data(
                "need at least one exposed and one unexposed unit".into(),
            ));
        }
        Ok(Self {
            columns,
            exposure,
            outcome,
            covariate_names,
            outcome_kind,
        })
    }

    /// Same as [`new`](Self::new) but infers the outcome kind.
    pub fn with_inferred_kind(
        columns: Vec<Vec<f64>>,
        exposure: Vec<f64>,
        outcome: Vec<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let kind = infer_outcome_kind(&outcome);
        Self::new(columns, exposure, outcome, covariate_names, kind)
    }

    pub fn n(&self) -> usize {
        self.exposure.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn covariate(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn treated_count(&self) -> usize {
        self.exposure.iter().filter(|v| **v == 1.0).count()
    }

    /// Write the dataset as CSV with columns `outcome, exposure, covariates...`.
    pub fn write_csv(&self, path: &Path, outcome_name: &str, exposure_name: &str) -> Result<()> {
        let mut out = String::new();
        out.push_str(outcome_name);
        out.push(',');
        out.push_str(exposure_name);
        for name in &self.covariate_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.n() {
            out.push_str(&format_number(self.outcome[i]));
            out.push(',');
            out.push_str(&format_number(self.exposure[i]));
            for col in &self.columns {
                out.push(',');
                out.push_str(&format_number(col[i]));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Shortest round-trip decimal representation (`1` rather than `1.0`).
pub fn format_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn infer_outcome_kind(outcome: &[f64]) -> OutcomeKind {
    if outcome.iter().all(|v| *v == 0.0 || *v == 1.0) {
        OutcomeKind::Binary
    } else {
        OutcomeKind::Continuous
    }
}

/// Assignment of CSV columns to roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub outcome: String,
    pub exposure: String,
    /// Covariate columns; `None` takes every remaining column in file order.
    pub covariates: Option<Vec<String>>,
    /// Overrides outcome-kind inference.
    pub outcome_kind: Option<OutcomeKind>,
}

impl ColumnSchema {
    pub fn new(outcome: impl Into<String>, exposure: impl Into<String>) -> Self {
        Self {
            outcome: outcome.into(),
            exposure: exposure.into(),
            covariates: None,
            outcome_kind: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<ObservationalDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&bytes, schema)
}

/// Parse CSV bytes (comma delimiter, header row, dot decimals).
pub fn parse_csv(bytes: &[u8], schema: &ColumnSchema) -> Result<ObservationalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Csv("missing header row".into()));
    }
    let mut seen = HashSet::new();
    for h in &header {
        if h.is_empty() {
            return Err(Error::Csv("empty column name in header".into()));
        }
        if !seen.insert(h.as_str()) {
            return Err(Error::Csv(format!("duplicate header '{h}'")));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("column '{name}' not found in header")))
    };
    let outcome_col = find(&schema.outcome)?;
    let exposure_col = find(&schema.exposure)?;
    if outcome_col == exposure_col {
        return Err(Error::Csv("outcome and exposure must be different columns".into()));
    }
    let covariate_cols: Vec<usize> = match &schema.covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&c| c != outcome_col && c != exposure_col)
            .collect(),
    };
    if covariate_cols.is_empty() {
        return Err(Error::Data("at least one covariate is required".into()));
    }
    if covariate_cols
        .iter()
        .any(|&c| c == outcome_col || c == exposure_col)
    {
        return Err(Error::Csv("a covariate cannot also be the outcome or exposure".into()));
    }

    let mut columns = vec![Vec::new(); covariate_cols.len()];
    let mut exposure = Vec::new();
    let mut outcome = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).map(str::trim).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                return Err(Error::Data(format!(
                    "missing value at row {row}, column {}",
                    header[c]
                )));
            }
            let v: f64 = raw.parse().map_err(|_| {
                Error::Data(format!(
                    "non-numeric value '{raw}' at row {row}, column {}",
                    header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value at row {row}, column {}",
                    header[c]
                )));
            }
            Ok(v)
        };
        outcome.push(cell(outcome_col)?);
        let z = cell(exposure_col)?;
        if z != 0.0 && z != 1.0 {
            return Err(Error::Data(format!(
                "exposure must be binary (row {row} has {z})"
            )));
        }
        exposure.push(z);
        for (k, &c) in covariate_cols.iter().enumerate() {
            columns[k].push(cell(c)?);
        }
    }
    let names = covariate_cols.iter().map(|&c| header[c].clone()).collect();
    let kind = schema
        .outcome_kind
        .unwrap_or_else(|| infer_outcome_kind(&outcome));
    ObservationalDataset::new(columns, exposure, outcome, names, kind)
}

/// True treatment effect as a function of the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum TauRule {
    Constant { value: f64 },
    /// `tau0 + tau1 * x_j`.
    Modifier { covariate: usize, tau0: f64, tau1: f64 },
}

impl TauRule {
    pub fn effect(&self, row: &[f64]) -> f64 {
        match *self {
            TauRule::Constant { value } => value,
            TauRule::Modifier {
                covariate,
                tau0,
                tau1,
            } => tau0 + tau1 * row[covariate],
        }
    }
}

/// Data-generating process with binary covariates, logistic exposure model and
/// an outcome that is additive on the risk (or mean) scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub prevalences: Vec<f64>,
    pub baseline_risk: f64,
    /// Additive shift of the outcome risk per covariate (length p).
    pub outcome_effects: Vec<f64>,
    pub tau_rule: TauRule,
    /// Marginal exposure rate when the confounder is zero.
    pub exposure_rate: f64,
    /// Log-odds shift of exposure per unit of the confounding covariate.
    pub confounding_strength: f64,
    /// Covariate driving exposure; defaults to the modifier (or the first covariate).
    pub confounder: Option<usize>,
    pub outcome_kind: OutcomeKind,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Binary-outcome spec with all covariates at prevalence 0.5 and no
    /// prognostic effects.
    pub fn binary(n: usize, p: usize, tau_rule: TauRule, seed: u64) -> Self {
        Self {
            n,
            p,
            prevalences: vec![0.5; p],
            baseline_risk: 0.2,
            outcome_effects: vec![0.0; p],
            tau_rule,
            exposure_rate: 0.4,
            confounding_strength: 0.0,
            confounder: None,
            outcome_kind: OutcomeKind::Binary,
            noise_sd: 0.0,
            seed,
        }
    }

    pub fn confounder_index(&self) -> usize {
        self.confounder.unwrap_or(match self.tau_rule {
            TauRule::Modifier { covariate, .. } => covariate,
            TauRule::Constant { .. } => 0,
        })
    }

    /// Range of the outcome mean over every binary covariate pattern, for z = 0 and z = 1.
    fn risk_range(&self) -> (f64, f64) {
        let (mut lo0, mut hi0) = (self.baseline_risk, self.baseline_risk);
        for &e in &self.outcome_effects {
            lo0 += e.min(0.0);
            hi0 += e.max(0.0);
        }
        let (tau0, modifier) = match self.tau_rule {
            TauRule::Constant { value } => (value, None),
            TauRule::Modifier {
                covariate,
                tau0,
                tau1,
            } => (tau0, Some((covariate, tau1))),
        };
        let (mut lo1, mut hi1) = (self.baseline_risk + tau0, self.baseline_risk + tau0);
        for (j, &e) in self.outcome_effects.iter().enumerate() {
            let coef = match modifier {
                Some((m, t1)) if m == j => e + t1,
                _ => e,
            };
            lo1 += coef.min(0.0);
            hi1 += coef.max(0.0);
        }
        (lo0.min(lo1), hi0.max(hi1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n < 2 {
            return bad("synthetic n must be at least 2".into());
        }
        if self.p == 0 {
            return bad("synthetic p must be at least 1".into());
        }
        if self.prevalences.len() != self.p || self.outcome_effects.len() != self.p {
            return bad("prevalences and outcome_effects must have length p".into());
        }
        if self.prevalences.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return bad("prevalences must lie in (0, 1)".into());
        }
        if !(self.exposure_rate > 0.0 && self.exposure_rate < 1.0) {
            return bad("exposure_rate must lie in (0, 1)".into());
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise_sd must be nonnegative".into());
        }
        if self.confounder_index() >= self.p {
            return bad("confounder index out of range".into());
        }
        if let TauRule::Modifier { covariate, .. } = self.tau_rule {
            if covariate >= self.p {
                return bad("modifier index out of range".into());
            }
        }
        if self.outcome_kind == OutcomeKind::Binary {
            if !(0.0..=1.0).contains(&self.baseline_risk) {
                return bad("baseline_risk must lie in [0, 1]".into());
            }
            let (lo, hi) = self.risk_range();
            if lo < -1e-12 || hi > 1.0 + 1e-12 {
                return bad(format!(
                    "implied risk range [{lo}, {hi}] leaves [0, 1] for some covariate pattern"
                ));
            }
        }
        Ok(())
    }
}

/// Draw a dataset and the true per-unit effects. Identical specs give identical output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(ObservationalDataset, Vec<f64>)> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed);
    let mut columns = vec![Vec::with_capacity(spec.n); spec.p];
    let mut exposure = Vec::with_capacity(spec.n);
    let mut outcome = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    let base_logit = logit(spec.exposure_rate);
    let confounder = spec.confounder_index();
    let mut row = vec![0.0; spec.p];
    for _ in 0..spec.n {
        for (j, &q) in spec.prevalences.iter().enumerate() {
            row[j] = if rng.random::<f64>() < q { 1.0 } else { 0.0 };
            columns[j].push(row[j]);
        }
        let e = expit(base_logit + spec.confounding_strength * row[confounder]);
        let z = if rng.random::<f64>() < e { 1.0 } else { 0.0 };
        let tau = spec.tau_rule.effect(&row);
        let mean = spec.baseline_risk
            + spec
                .outcome_effects
                .iter()
                .zip(&row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
            + tau * z;
        let y = match spec.outcome_kind {
            OutcomeKind::Binary => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            OutcomeKind::Continuous => {
                if spec.noise_sd > 0.0 {
                    mean + spec.noise_sd * standard_normal(&mut rng)
                } else {
                    mean
                }
            }
        };
        exposure.push(z);
        outcome.push(y);
        truth.push(tau);
    }
    let names = (1..=spec.p).map(|j| format!("x{j}")).collect();
    let data = ObservationalDataset::new(columns, exposure, outcome, names, spec.outcome_kind)?;
    Ok((data, truth))
}

/// Count and percentage of units with a value of 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountCell {
    pub count: usize,
    pub total: usize,
}

impl CountCell {
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.count as f64 / self.total as f64
        }
    }
}

impl fmt::Display for CountCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({})",
            thousands(self.count),
            format_percent(self.percent())
        )
    }
}

/// Percentages: integers from 10% upward, one decimal below 10%, bare `0%` for zero.
pub fn format_percent(pct: f64) -> String {
    if pct == 0.0 {
        "0%".to_string()
    } else if pct >= 9.95 {
        format!("{:.0}%", pct)
    } else {
        format!("{:.1}%", pct)
    }
}

pub fn thousands(v: usize) -> String {
    let s = v.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variable: String,
    pub overall: CountCell,
    /// (not-event, event) cells; present for binary outcomes only.
    pub by_outcome: Option<(CountCell, CountCell)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub n: usize,
    pub events: Option<usize>,
    pub exposure: SummaryRow,
    pub covariates: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec![
            "Variable".to_string(),
            format!("Overall, N = {}", thousands(self.n)),
        ];
        if let Some(events) = self.events {
            let non = CountCell {
                count: self.n - events,
                total: self.n,
            };
            let ev = CountCell {
                count: events,
                total: self.n,
            };
            h.push(format!("Not-event, N = {non}"));
            h.push(format!("Event, N = {ev}"));
        }
        h
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.header().join("\t"))?;
        let write_row = |f: &mut fmt::Formatter<'_>, row: &SummaryRow| -> fmt::Result {
            write!(f, "{}\t{}", row.variable, row.overall)?;
            if let Some((a, b)) = &row.by_outcome {
                write!(f, "\t{a}\t{b}")?;
            }
            writeln!(f)
        };
        writeln!(f, "Exposure")?;
        write_row(f, &self.exposure)?;
        writeln!(f, "Covariates")?;
        for row in &self.covariates {
            write_row(f, row)?;
        }
        writeln!(f, "n (%)")
    }
}

/// Table of counts of ones overall and by outcome level.
pub fn descriptive_summary(data: &ObservationalDataset, exposure_name: &str) -> SummaryTable {
    let n = data.n();
    let binary = data.outcome_kind() == OutcomeKind::Binary;
    let events = binary.then(|| data.outcome().iter().filter(|v| **v == 1.0).count());
    let summarize = |name: &str, values: &[f64]| {
        let count = values.iter().filter(|v| **v == 1.0).count();
        let by_outcome = events.map(|ev| {
            let in_event = values
                .iter()
                .zip(data.outcome())
                .filter(|(v, y)| **v == 1.0 && **y == 1.0)
                .count();
            (
                CountCell {
                    count: count - in_event,
                    total: n - ev,
                },
                CountCell {
                    count: in_event,
                    total: ev,
                },
            )
        });
        SummaryRow {
            variable: name.to_string(),
            overall: CountCell { count, total: n },
            by_outcome,
        }
    };
    SummaryTable {
        n,
        events,
        exposure: summarize(exposure_name, data.exposure()),
        covariates: data
            .covariate_names()
            .iter()
            .zip(data.columns())
            .map(|(name, col)| summarize(name, col))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> ColumnSchema {
        ColumnSchema::new("y", "z")
    }

    #[test]
    fn three_row_file_parses() {
        let d = parse_csv(b"y,z,x1\n1,0,0.5\n0,1,1.5\n1,1,2\n", &schema()).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 1);
        assert_eq!(d.outcome_kind(), OutcomeKind::Binary);
        assert_eq!(d.covariate(0), &[0.5, 1.5, 2.0]);
    }

    #[test]
    fn empty_cell_reports_row() {
        let err = parse_csv(b"y,z,x1\n1,0,1\n0,1,\n", &schema()).unwrap_err();
        assert!(err.to_string().contains("missing value at row 2"), "{err}");
    }

    #[test]
    fn exposure_must_be_binary() {
        let err = parse_csv(b"y,z,x1\n1,0,1\n0,2,1\n", &schema()).unwrap_err();
        assert!(err.to_string().contains("exposure must be binary"), "{err}");
    }

    #[test]
    fn header_problems() {
        assert!(parse_csv(b"y,z,z\n1,0,1\n0,1,1\n", &schema()).is_err());
        assert!(parse_csv(b"", &schema()).is_err());
        assert!(parse_csv(b"y,z\n1,0\n0,1\n", &schema()).is_err());
        assert!(parse_csv(b"y,z,x\n1,0,a\n0,1,1\n", &schema()).is_err());
    }

    #[test]
    fn continuous_outcome_inferred_and_overridable() {
        let d = parse_csv(b"y,z,x\n0.5,0,1\n2,1,0\n", &schema()).unwrap();
        assert_eq!(d.outcome_kind(), OutcomeKind::Continuous);
        let mut s = schema();
        s.outcome_kind = Some(OutcomeKind::Continuous);
        let d = parse_csv(b"y,z,x\n0,0,1\n1,1,0\n", &s).unwrap();
        assert_eq!(d.outcome_kind(), OutcomeKind::Continuous);
    }

    #[test]
    fn all_treated_rejected() {
        assert!(parse_csv(b"y,z,x\n0,1,1\n1,1,0\n", &schema()).is_err());
    }

    #[test]
    fn zero_effect_truth_is_exactly_zero() {
        let mut spec = SyntheticSpec::binary(200, 3, TauRule::Constant { value: 0.0 }, 4);
        spec.outcome_kind = OutcomeKind::Continuous;
        spec.noise_sd = 0.0;
        let (_, truth) = generate_synthetic(&spec).unwrap();
        assert!(truth.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec::binary(
            500,
            4,
            TauRule::Modifier {
                covariate: 0,
                tau0: 0.1,
                tau1: 0.3,
            },
            99,
        );
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prevalence_within_binomial_interval() {
        let spec = SyntheticSpec::binary(10_000, 1, TauRule::Constant { value: 0.1 }, 17);
        let (d, _) = generate_synthetic(&spec).unwrap();
        let m = d.covariate(0).iter().sum::<f64>() / 10_000.0;
        assert!((0.48..=0.52).contains(&m), "{m}");
    }

    #[test]
    fn exposure_rate_converges_to_marginal() {
        let mut spec = SyntheticSpec::binary(10_000, 2, TauRule::Constant { value: 0.1 }, 5);
        spec.confounding_strength = 1.0;
        spec.confounder = Some(1);
        let (d, _) = generate_synthetic(&spec).unwrap();
        let q = spec.prevalences[1];
        let marginal = (1.0 - q) * spec.exposure_rate
            + q * expit(logit(spec.exposure_rate) + spec.confounding_strength);
        let rate = d.treated_count() as f64 / 10_000.0;
        let bound = 2.576 * (marginal * (1.0 - marginal) / 10_000.0).sqrt();
        assert!((rate - marginal).abs() < bound, "{rate} vs {marginal}");
    }

    #[test]
    fn impossible_risks_rejected() {
        let mut spec = SyntheticSpec::binary(10, 2, TauRule::Constant { value: 0.9 }, 1);
        spec.outcome_effects = vec![0.1, 0.0];
        assert!(generate_synthetic(&spec).is_err());
        spec.tau_rule = TauRule::Modifier {
            covariate: 1,
            tau0: 0.0,
            tau1: -0.5,
        };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn summary_counts_and_format() {
        let d = ObservationalDataset::new(
            vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0; 4]],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec!["x1".into(), "x2".into()],
            OutcomeKind::Binary,
        )
        .unwrap();
        let t = descriptive_summary(&d, "z");
        assert_eq!(t.covariates[0].overall.to_string(), "2 (50%)");
        assert_eq!(t.covariates[1].overall.to_string(), "0 (0%)");
        let h = t.header();
        assert_eq!(h[0], "Variable");
        assert!(h[1].starts_with("Overall, N = 4"));
        assert!(h[2].starts_with("Not-event, N = 2"));
        assert!(h[3].starts_with("Event, N = 2"));
    }

    #[test]
    fn percent_and_thousands_style() {
        assert_eq!(thousands(345_499), "345,499");
        assert_eq!(thousands(999), "999");
        assert_eq!(format_percent(2.16), "2.2%");
        assert_eq!(format_percent(14.6), "15%");
        assert_eq!(format_percent(100.0), "100%");
    }

    #[test]
    fn continuous_summary_has_no_strata() {
        let d = ObservationalDataset::new(
            vec![vec![1.0, 0.0, 1.0]],
            vec![1.0, 0.0, 0.0],
            vec![0.3, 1.2, 2.0],
            vec!["x1".into()],
            OutcomeKind::Continuous,
        )
        .unwrap();
        let t = descriptive_summary(&d, "z");
        assert!(t.events.is_none());
        assert!(t.covariates[0].by_outcome.is_none());
        assert_eq!(t.header().len(), 2);
    }
}
