use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{FitTheFitTree, StratifiedReport, SubgroupSummary};
use crate::bart::MoveCounts;
use crate::grf::{AteEstimate, BlpReport, ProjectionRow, VariableImportance};
use crate::stats::{mean, quantile_sorted, sd};

use super::config::MethodName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub n: usize,
    pub p: usize,
    pub exposed: usize,
    pub outcome_kind: String,
    pub covariates: Vec<String>,
    /// SHA-256 prefix of the input bytes (CSV) or the synthetic spec.
    pub input_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IteSummary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// 5%, 25%, 50%, 75% and 95% quantiles.
    pub quantiles: [f64; 5],
}

impl IteSummary {
    pub fn of(values: &[f64]) -> Self {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            mean: mean(values),
            sd: if values.len() > 1 { sd(values) } else { 0.0 },
            min: s[0],
            max: s[s.len() - 1],
            quantiles: [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile_sorted(&s, q)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub moves: Vec<MoveCounts>,
    /// Mean fitted value over the first and second half of kept draws.
    pub split_half_means: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodBlock {
    pub method: MethodName,
    pub seed: u64,
    pub config_digest: String,
    pub ite: IteSummary,
    /// AIPW (grf) or posterior mean of the average effect (bart, bcf).
    pub ate: AteEstimate,
    pub calibration: Option<BlpReport>,
    pub projection: Option<Vec<ProjectionRow>>,
    pub importance: Option<VariableImportance>,
    pub fit_the_fit: FitTheFitTree,
    pub subgroups: Vec<SubgroupSummary>,
    pub diagnostics: Option<SamplerDiagnostics>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub method: MethodName,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmmReport {
    pub version: String,
    pub seed: u64,
    pub config_digest: String,
    pub data: DataSummary,
    pub flags: Vec<String>,
    pub methods: Vec<MethodBlock>,
    pub traditional: Option<StratifiedReport>,
    pub failures: Vec<FailureRecord>,
}

impl EmmReport {
    pub fn block(&self, method: MethodName) -> Option<&MethodBlock> {
        self.methods.iter().find(|b| b.method == method)
    }

    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::Config(format!("report: {e}")))
    }

    /// Human-readable rendering with the same content as the JSON sidecar.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = self.write_text(&mut o);
        o
    }

    fn write_text(&self, o: &mut String) -> std::fmt::Result {
        writeln!(o, "EMM report")?;
        writeln!(o, "version: {}", self.version)?;
        writeln!(o, "seed: {}", self.seed)?;
        writeln!(o, "config digest: {}", self.config_digest)?;
        let d = &self.data;
        writeln!(
            o,
            "data: {} (digest {}), n = {}, p = {}, exposed = {}, outcome = {}",
            d.source, d.input_digest, d.n, d.p, d.exposed, d.outcome_kind
        )?;
        writeln!(o, "covariates: {}", d.covariates.join(", "))?;
        if !self.flags.is_empty() {
            writeln!(o, "flags:")?;
            for f in &self.flags {
                writeln!(o, "  - {f}")?;
            }
        }
        for b in &self.methods {
            writeln!(o)?;
            write_block(o, b)?;
        }
        if let Some(t) = &self.traditional {
            writeln!(o)?;
            write_traditional(o, t)?;
        }
        if !self.failures.is_empty() {
            writeln!(o)?;
            writeln!(o, "[failures]")?;
            for f in &self.failures {
                writeln!(o, "{}: {}", f.method.as_str(), f.error)?;
            }
        }
        Ok(())
    }
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn p_value(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".into()
    } else {
        format!("{p:.3}")
    }
}

fn write_block(o: &mut String, b: &MethodBlock) -> std::fmt::Result {
    writeln!(o, "[{}]", b.method.as_str())?;
    writeln!(o, "seed: {}", b.seed)?;
    writeln!(o, "config digest: {}", b.config_digest)?;
    let s = &b.ite;
    writeln!(
        o,
        "ITE: mean {}, sd {}, min {}, max {}",
        f4(s.mean),
        f4(s.sd),
        f4(s.min),
        f4(s.max)
    )?;
    writeln!(
        o,
        "ITE quantiles (5/25/50/75/95%): {}",
        s.quantiles.iter().map(|v| f4(*v)).collect::<Vec<_>>().join(" ")
    )?;
    writeln!(o, "ATE: {} (SE {})", f4(b.ate.estimate), f4(b.ate.std_error))?;
    if let Some(c) = &b.calibration {
        writeln!(o, "calibration test:")?;
        writeln!(
            o,
            "  mean forest prediction          {}  SE {}  p {}",
            f4(c.mean_coef),
            f4(c.mean_se),
            p_value(c.mean_p)
        )?;
        writeln!(
            o,
            "  differential forest prediction  {}  SE {}  p {}",
            f4(c.diff_coef),
            f4(c.diff_se),
            p_value(c.diff_p)
        )?;
    }
    if let Some(rows) = &b.projection {
        writeln!(o, "best linear projection:")?;
        for r in rows {
            writeln!(
                o,
                "  {:<14} {}  ({}, {})  p {}",
                r.term,
                f4(r.coef),
                f4(r.ci_low),
                f4(r.ci_high),
                p_value(r.p_value)
            )?;
        }
    }
    if let Some(vi) = &b.importance {
        writeln!(o, "variable importance:")?;
        for j in vi.ranking() {
            writeln!(o, "  {:<14} {}", vi.names[j], f4(vi.scores[j]))?;
        }
    }
    writeln!(o, "fit-the-fit tree:")?;
    write_tree(o, &b.fit_the_fit, 0, 1, "all")?;
    for sg in &b.subgroups {
        writeln!(o, "subgroup {}:", sg.covariate)?;
        if sg.single_level {
            writeln!(o, "  (single level)")?;
        }
        for l in &sg.levels {
            writeln!(
                o,
                "  {} = {}: n {}, mean {}, sd {}, median {}",
                sg.covariate,
                crate::dataset::format_number(l.level),
                l.count,
                f4(l.mean),
                f4(l.sd),
                f4(l.quantiles[2])
            )?;
        }
    }
    if let Some(d) = &b.diagnostics {
        if let Some((a, c)) = d.split_half_means {
            writeln!(o, "split-half mean fit: {} / {}", f4(a), f4(c))?;
        }
        for (k, m) in d.moves.iter().enumerate() {
            let rates: Vec<String> = crate::bart::MoveKind::ALL
                .iter()
                .map(|kind| {
                    let i = kind.index();
                    let rate = if m.proposed[i] == 0 {
                        0.0
                    } else {
                        m.accepted[i] as f64 / m.proposed[i] as f64
                    };
                    format!("{} {:.3}", kind.name(), rate)
                })
                .collect();
            writeln!(o, "acceptance (ensemble {}): {}", k + 1, rates.join(", "))?;
        }
    }
    for n in &b.notes {
        writeln!(o, "note: {n}")?;
    }
    Ok(())
}

fn write_tree(o: &mut String, t: &FitTheFitTree, id: usize, indent: usize, rule: &str) -> std::fmt::Result {
    let n = &t.nodes[id];
    writeln!(
        o,
        "{}{}: mean ITE {:.1}%, share {:.1}%, n {}",
        "  ".repeat(indent),
        rule,
        100.0 * n.mean_ite,
        100.0 * n.share,
        n.count
    )?;
    if let (Some(split), Some((l, r))) = (&n.split, n.children) {
        let t_str = crate::dataset::format_number(split.threshold);
        write_tree(o, t, l, indent + 1, &format!("{} <= {}", split.name, t_str))?;
        write_tree(o, t, r, indent + 1, &format!("{} > {}", split.name, t_str))?;
    }
    Ok(())
}

fn write_traditional(o: &mut String, t: &StratifiedReport) -> std::fmt::Result {
    writeln!(o, "[traditional]")?;
    writeln!(o, "stratified by {}", t.stratum)?;
    for r in &t.rows {
        writeln!(o, "{} (n {}):", r.label, r.n)?;
        writeln!(o, "  risk difference       {}", r.measures.risk_difference)?;
        writeln!(o, "  risk ratio            {}", r.measures.risk_ratio)?;
        writeln!(o, "  crude odds ratio      {}", r.measures.odds_ratio)?;
        writeln!(o, "  adjusted odds ratio   {}", r.adjusted.odds_ratio)?;
        if r.measures.zero_cell {
            writeln!(o, "  zero cell: ratio intervals unbounded")?;
        }
        if !r.adjusted.dropped.is_empty() {
            writeln!(o, "  constant adjusters dropped: {}", r.adjusted.dropped.join(", "))?;
        }
    }
    let q = &t.heterogeneity;
    writeln!(
        o,
        "Cochran's Q (adjusted log odds ratios): {:.3} on {} df, p {}",
        q.q,
        q.df,
        p_value(q.p_value)
    )
}
