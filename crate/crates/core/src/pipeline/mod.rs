//! Config-driven end-to-end runs: load or synthesize data, estimate
//! per-unit effects with each requested method, summarize them, and write
//! the report and its artifacts.

mod config;
mod export;
mod report;

pub use config::{parse_tau_rule, AnalysisSettings, DataSource, MethodName, PipelineConfig};
pub use export::{export_artifacts, tree_to_document, tree_to_dot, ExportFormat};
pub use report::{
    DataSummary, EmmReport, FailureRecord, IteSummary, MethodBlock, SamplerDiagnostics,
};

use std::path::PathBuf;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analysis::{
    self, config_digest, fit_the_fit, stratified_report, subgroup_summary, IteVector,
};
use crate::bart::{self, Link};
use crate::bcf;
use crate::dataset::{self, format_number, ObservationalDataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::grf::{self, AteEstimate};
use crate::rng::named_seed;
use crate::stats::{mean, sd};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Loaded data plus the true effects when the data are synthetic.
pub struct LoadedData {
    pub data: ObservationalDataset,
    pub truth: Option<Vec<f64>>,
    pub summary: DataSummary,
}

fn digest_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_data(config: &PipelineConfig) -> Result<LoadedData> {
    let (data, truth, source, digest) = match &config.data {
        DataSource::Csv { path, schema } => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            let data = dataset::parse_csv(&bytes, schema)?;
            let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
            (data, None, format!("csv {name}"), digest_bytes(&bytes))
        }
        DataSource::Synthetic { spec, seed } => {
            let mut spec = spec.clone();
            spec.seed = seed.unwrap_or_else(|| named_seed(config.seed, "synthetic"));
            let (data, truth) = dataset::generate_synthetic(&spec)?;
            let digest = config_digest(&spec);
            (data, Some(truth), "synthetic".to_string(), digest)
        }
    };
    let summary = DataSummary {
        source,
        n: data.n(),
        p: data.p(),
        exposed: data.treated_count(),
        outcome_kind: data.outcome_kind().as_str().to_string(),
        covariates: data.covariate_names().to_vec(),
        input_digest: digest,
    };
    Ok(LoadedData {
        data,
        truth,
        summary,
    })
}

/// Analysis settings resolved against the data's covariates.
struct Resolved {
    modifiers: Vec<String>,
    stratify: usize,
    subgroups: Vec<usize>,
}

fn few_levels(col: &[f64]) -> bool {
    let mut v = col.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len() <= 10
}

fn resolve(config: &PipelineConfig, data: &ObservationalDataset) -> Result<Resolved> {
    let index = |name: &str| {
        data.covariate_index(name)
            .ok_or_else(|| Error::Config(format!("unknown covariate '{name}'")))
    };
    let modifiers = match &config.analysis.modifiers {
        Some(m) => {
            for name in m {
                index(name)?;
            }
            m.clone()
        }
        None => data.covariate_names().to_vec(),
    };
    let stratify = match &config.analysis.stratify {
        Some(name) => index(name)?,
        None => (0..data.p()).find(|&j| few_levels(data.covariate(j))).unwrap_or(0),
    };
    let subgroups = match &config.analysis.subgroups {
        Some(names) => names.iter().map(|n| index(n)).collect::<Result<Vec<_>>>()?,
        None if few_levels(data.covariate(stratify)) => vec![stratify],
        None => Vec::new(),
    };
    Ok(Resolved {
        modifiers,
        stratify,
        subgroups,
    })
}

/// Everything needed to assemble one method's report block.
struct Estimate {
    ite: IteVector,
    ate: AteEstimate,
    block_extras: Extras,
}

#[derive(Default)]
struct Extras {
    calibration: Option<grf::BlpReport>,
    projection: Option<Vec<grf::ProjectionRow>>,
    importance: Option<grf::VariableImportance>,
    diagnostics: Option<SamplerDiagnostics>,
    notes: Vec<String>,
}

fn draw_ate(per_draw: &[f64]) -> AteEstimate {
    AteEstimate {
        estimate: mean(per_draw),
        std_error: if per_draw.len() > 1 { sd(per_draw) } else { 0.0 },
    }
}

fn run_grf(config: &PipelineConfig, data: &ObservationalDataset, r: &Resolved, seed: u64) -> Result<Estimate> {
    let model = grf::fit_causal_forest(data, &config.grf, seed)?;
    let ite = model.oob_ite()?;
    let mut notes = Vec::new();
    if !model.oob_fallback_units.is_empty() {
        notes.push(format!(
            "{} units had no out-of-bag tree and used the full forest",
            model.oob_fallback_units.len()
        ));
    }
    Ok(Estimate {
        ate: grf::average_treatment_effect(&model),
        block_extras: Extras {
            calibration: Some(grf::test_calibration(&model)?),
            projection: Some(grf::best_linear_projection(&model, data, &r.modifiers)?),
            importance: Some(grf::variable_importance(&model)),
            diagnostics: None,
            notes,
        },
        ite,
    })
}

fn run_bart(config: &PipelineConfig, data: &ObservationalDataset, seed: u64) -> Result<Estimate> {
    let out = bart::bart_ite(data, &config.bart, seed)?;
    let test = out.fit.test.as_ref().expect("counterfactual draws present");
    let n = data.n();
    let per_draw: Vec<f64> = (0..test.rows)
        .map(|k| {
            let row = test.row(k);
            (0..n)
                .map(|i| out.fit.link.inverse(row[i]) - out.fit.link.inverse(row[n + i]))
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let mut ate = draw_ate(&per_draw);
    ate.estimate = out.ite.mean();
    let mut notes = Vec::new();
    if out.fit.no_burn_in {
        notes.push("no burn-in iterations were run".into());
    }
    Ok(Estimate {
        ite: out.ite,
        ate,
        block_extras: Extras {
            diagnostics: Some(SamplerDiagnostics {
                moves: vec![out.fit.moves],
                split_half_means: Some(out.fit.split_half_means),
            }),
            notes,
            ..Extras::default()
        },
    })
}

fn run_bcf(config: &PipelineConfig, data: &ObservationalDataset, seed: u64) -> Result<Estimate> {
    let pihat: Vec<f64> = analysis::logistic_propensity(data)?
        .into_iter()
        .map(|e| e.clamp(1e-6, 1.0 - 1e-6))
        .collect();
    let model = bcf::fit_bcf(data, &pihat, &config.bcf, seed)?;
    let ite = bcf::predict_ite_bcf(&model)?;
    let d = &model.tau_draws;
    let per_draw: Vec<f64> = (0..d.rows).map(|k| mean(d.row(k))).collect();
    let mut ate = draw_ate(&per_draw);
    ate.estimate = ite.mean();
    Ok(Estimate {
        ite,
        ate,
        block_extras: Extras::default(),
    })
}

fn build_block(
    method: MethodName,
    est: Estimate,
    seed: u64,
    config: &PipelineConfig,
    data: &ObservationalDataset,
    r: &Resolved,
) -> Result<MethodBlock> {
    let names = data.covariate_names();
    let tree = fit_the_fit(
        &est.ite.estimates,
        data.columns(),
        names,
        config.analysis.fit_depth,
        config.analysis.min_leaf_fraction,
    );
    let subgroups = r
        .subgroups
        .iter()
        .map(|&j| subgroup_summary(&est.ite.estimates, data.covariate(j), &names[j], config.analysis.bins))
        .collect::<Result<Vec<_>>>()?;
    let x = est.block_extras;
    Ok(MethodBlock {
        method,
        seed,
        config_digest: est.ite.config_digest.clone(),
        ite: IteSummary::of(&est.ite.estimates),
        ate: est.ate,
        calibration: x.calibration,
        projection: x.projection,
        importance: x.importance,
        fit_the_fit: tree,
        subgroups,
        diagnostics: x.diagnostics,
        notes: x.notes,
    })
}

fn run_method(
    method: MethodName,
    config: &PipelineConfig,
    data: &ObservationalDataset,
    r: &Resolved,
) -> Result<(MethodBlock, Vec<f64>)> {
    let seed = named_seed(config.seed, method.as_str());
    let est = match method {
        MethodName::Grf => run_grf(config, data, r, seed)?,
        MethodName::Bart => run_bart(config, data, seed)?,
        MethodName::Bcf => run_bcf(config, data, seed)?,
        MethodName::Traditional => unreachable!("handled separately"),
    };
    let ites = est.ite.estimates.clone();
    Ok((build_block(method, est, seed, config, data, r)?, ites))
}

/// Result of an in-memory run: the report plus per-unit effects by method.
pub struct PipelineRun {
    pub report: EmmReport,
    pub ites: Vec<(MethodName, Vec<f64>)>,
    pub truth: Option<Vec<f64>>,
}

/// Digest of the settings that influence results (output location and
/// scheduling excluded).
pub fn results_digest(config: &PipelineConfig) -> String {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    c.parallel_methods = false;
    config_digest(&c)
}

/// Run every requested stage without touching the filesystem (except to
/// read CSV input). Stage failures become failure records.
pub fn build_report(config: &PipelineConfig) -> Result<PipelineRun> {
    config.validate()?;
    let loaded = load_data(config)?;
    let data = &loaded.data;
    let resolved = resolve(config, data)?;

    let estimators: Vec<MethodName> = config
        .methods
        .iter()
        .copied()
        .filter(|m| *m != MethodName::Traditional)
        .collect();
    let results: Vec<(MethodName, Result<(MethodBlock, Vec<f64>)>)> = if config.parallel_methods {
        estimators
            .par_iter()
            .map(|&m| (m, run_method(m, config, data, &resolved)))
            .collect()
    } else {
        estimators
            .iter()
            .map(|&m| (m, run_method(m, config, data, &resolved)))
            .collect()
    };

    let mut methods = Vec::new();
    let mut ites = Vec::new();
    let mut failures = Vec::new();
    for (m, res) in results {
        match res {
            Ok((block, est)) => {
                methods.push(block);
                ites.push((m, est));
            }
            Err(e) => failures.push(FailureRecord {
                method: m,
                error: e.to_string(),
            }),
        }
    }

    let mut traditional = None;
    if config.methods.contains(&MethodName::Traditional) {
        let res = if data.outcome_kind() != OutcomeKind::Binary {
            Err(Error::Data("traditional measures need a binary outcome".into()))
        } else {
            stratified_report(data, resolved.stratify)
        };
        match res {
            Ok(t) => traditional = Some(t),
            Err(e) => failures.push(FailureRecord {
                method: MethodName::Traditional,
                error: e.to_string(),
            }),
        }
    }

    let mut flags = vec!["effects are reported on the risk-difference (additive) scale".to_string()];
    if config.methods.contains(&MethodName::Bart) {
        let link = config.bart.link.unwrap_or(Link::for_outcome(data.outcome_kind()));
        if link == Link::Probit {
            flags.push("bart uses a probit link with latent normal augmentation".into());
        }
    }
    if config.methods.contains(&MethodName::Bcf) {
        if data.outcome_kind() == OutcomeKind::Binary {
            flags.push("bcf fits a Gaussian model to the 0/1 outcome".into());
        }
        flags.push("bcf propensity from logistic regression on all covariates, response scale".into());
        if !config.bcf.include_pihat {
            flags.push("bcf prognostic ensemble excludes the propensity estimate".into());
        }
    }
    let report = EmmReport {
        version: VERSION.to_string(),
        seed: config.seed,
        config_digest: results_digest(config),
        data: loaded.summary,
        flags,
        methods,
        traditional,
        failures,
    };
    Ok(PipelineRun {
        report,
        ites,
        truth: loaded.truth,
    })
}

fn ite_table(run: &PipelineRun) -> String {
    let mut header = vec!["unit".to_string()];
    header.extend(run.ites.iter().map(|(m, _)| m.as_str().to_string()));
    if run.truth.is_some() {
        header.push("truth".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    let n = run.report.data.n;
    for i in 0..n {
        let mut row = vec![i.to_string()];
        row.extend(run.ites.iter().map(|(_, v)| format_number(v[i])));
        if let Some(t) = &run.truth {
            row.push(format_number(t[i]));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub struct PipelineOutcome {
    pub report: EmmReport,
    pub files: Vec<PathBuf>,
}

/// Run the pipeline and write `report.txt`, `report.json`, `ite.csv`, the
/// fit-the-fit trees and the subgroup plot data under the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    let run = build_report(config)?;
    let dir = &config.output_dir;
    let mut files = Vec::new();
    let text = dir.join("report.txt");
    export::write_file(&text, &run.report.to_text())?;
    files.push(text);
    let json = dir.join("report.json");
    export::write_file(&json, &run.report.to_json())?;
    files.push(json);
    if !run.ites.is_empty() {
        let p = dir.join("ite.csv");
        export::write_file(&p, &ite_table(&run))?;
        files.push(p);
    }
    files.extend(export_artifacts(&run.report, &ExportFormat::ALL, dir)?);
    Ok(PipelineOutcome {
        report: run.report,
        files,
    })
}
