use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bart::{BartConfig, Link};
use crate::bcf::BcfConfig;
use crate::dataset::{ColumnSchema, OutcomeKind, SyntheticSpec, TauRule};
use crate::error::{Error, Result};
use crate::grf::CausalForestConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Grf,
    Bart,
    Bcf,
    Traditional,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Grf => "grf",
            MethodName::Bart => "bart",
            MethodName::Bcf => "bcf",
            MethodName::Traditional => "traditional",
        }
    }
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grf" => Ok(MethodName::Grf),
            "bart" => Ok(MethodName::Bart),
            "bcf" => Ok(MethodName::Bcf),
            "traditional" => Ok(MethodName::Traditional),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected grf, bart, bcf or traditional)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Csv { path: PathBuf, schema: ColumnSchema },
    /// The spec's seed is ignored when `seed` is `None`; a seed derived from
    /// the run seed is used instead.
    Synthetic { spec: SyntheticSpec, seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub fit_depth: usize,
    pub min_leaf_fraction: f64,
    /// Covariates for the best linear projection; `None` uses all.
    pub modifiers: Option<Vec<String>>,
    /// Stratification covariate for the traditional block.
    pub stratify: Option<String>,
    /// Grouping covariates for effect distributions.
    pub subgroups: Option<Vec<String>>,
    pub bins: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            fit_depth: 3,
            min_leaf_fraction: 0.05,
            modifiers: None,
            stratify: None,
            subgroups: None,
            bins: crate::analysis::subgroup::DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataSource,
    pub methods: Vec<MethodName>,
    pub grf: CausalForestConfig,
    pub bart: BartConfig,
    pub bcf: BcfConfig,
    pub analysis: AnalysisSettings,
    pub output_dir: PathBuf,
    pub parallel_methods: bool,
}

impl PipelineConfig {
    /// A synthetic run with every method and default settings.
    pub fn synthetic(spec: SyntheticSpec, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed,
            data: DataSource::Synthetic { spec, seed: None },
            methods: vec![MethodName::Grf, MethodName::Bart, MethodName::Bcf, MethodName::Traditional],
            grf: CausalForestConfig::default(),
            bart: BartConfig::default(),
            bcf: BcfConfig::default(),
            analysis: AnalysisSettings::default(),
            output_dir: output_dir.into(),
            parallel_methods: false,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parse flat `key = value` lines. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let seed = kv.take_parsed("seed")?.unwrap_or(0);
        let source = kv.take("data.source").unwrap_or_else(|| "synthetic".into());
        let data = match source.as_str() {
            "csv" => {
                let path = kv
                    .take("data.csv.path")
                    .ok_or_else(|| Error::Config("data.csv.path is required".into()))?;
                let mut schema = ColumnSchema::new(
                    kv.take("data.csv.outcome").unwrap_or_else(|| "outcome".into()),
                    kv.take("data.csv.exposure").unwrap_or_else(|| "exposure".into()),
                );
                schema.covariates = kv.take("data.csv.covariates").map(|v| list(&v));
                schema.outcome_kind = kv.take_parsed::<OutcomeKind>("data.csv.outcome_kind")?;
                DataSource::Csv {
                    path: base.join(path),
                    schema,
                }
            }
            "synthetic" => parse_synthetic(&mut kv)?,
            other => return Err(Error::Config(format!("unknown data.source '{other}'"))),
        };
        let methods = match kv.take("methods") {
            Some(v) => list(&v).iter().map(|m| m.parse()).collect::<Result<Vec<_>>>()?,
            None => vec![MethodName::Grf, MethodName::Bart, MethodName::Bcf, MethodName::Traditional],
        };
        let mut grf = CausalForestConfig::default();
        set(&mut kv, "grf.num_trees", &mut grf.num_trees)?;
        set(&mut kv, "grf.sample_fraction", &mut grf.sample_fraction)?;
        set(&mut kv, "grf.honest_fraction", &mut grf.honest_fraction)?;
        set(&mut kv, "grf.min_leaf", &mut grf.min_leaf)?;
        set_opt(&mut kv, "grf.mtry", &mut grf.mtry)?;
        set_opt(&mut kv, "grf.max_depth", &mut grf.max_depth)?;
        set_opt(&mut kv, "grf.nuisance_trees", &mut grf.nuisance_trees)?;

        let mut bart = BartConfig::default();
        set_opt(&mut kv, "bart.num_trees", &mut bart.num_trees)?;
        set(&mut kv, "bart.alpha", &mut bart.alpha)?;
        set(&mut kv, "bart.beta", &mut bart.beta)?;
        set(&mut kv, "bart.k", &mut bart.k)?;
        set(&mut kv, "bart.nu", &mut bart.nu)?;
        set(&mut kv, "bart.q", &mut bart.q)?;
        set(&mut kv, "bart.burn_in", &mut bart.burn_in)?;
        set(&mut kv, "bart.draws", &mut bart.draws)?;
        set_opt(&mut kv, "bart.max_depth", &mut bart.max_depth)?;
        if let Some(link) = kv.take("bart.link") {
            bart.link = Some(match link.as_str() {
                "identity" => Link::Identity,
                "probit" => Link::Probit,
                other => return Err(Error::Config(format!("unknown bart.link '{other}'"))),
            });
        }

        let mut bcf = BcfConfig::default();
        set(&mut kv, "bcf.mu_trees", &mut bcf.mu.num_trees)?;
        set(&mut kv, "bcf.tau_trees", &mut bcf.tau.num_trees)?;
        set(&mut kv, "bcf.burn_in", &mut bcf.burn_in)?;
        set(&mut kv, "bcf.draws", &mut bcf.draws)?;
        set(&mut kv, "bcf.k", &mut bcf.k)?;
        set(&mut kv, "bcf.include_pihat", &mut bcf.include_pihat)?;

        let mut analysis = AnalysisSettings::default();
        set(&mut kv, "analysis.fit_depth", &mut analysis.fit_depth)?;
        set(&mut kv, "analysis.min_leaf_fraction", &mut analysis.min_leaf_fraction)?;
        set(&mut kv, "analysis.bins", &mut analysis.bins)?;
        analysis.modifiers = kv.take("analysis.modifiers").map(|v| list(&v));
        analysis.stratify = kv.take("analysis.stratify");
        analysis.subgroups = kv.take("analysis.subgroups").map(|v| list(&v));

        let output_dir = base.join(kv.take("output.dir").unwrap_or_else(|| "emm-output".into()));
        let parallel_methods = kv.take_parsed("parallel_methods")?.unwrap_or(false);
        kv.finish()?;
        let config = Self {
            seed,
            data,
            methods,
            grf,
            bart,
            bcf,
            analysis,
            output_dir,
            parallel_methods,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("methods are listed more than once".into()));
        }
        if !(self.analysis.min_leaf_fraction > 0.0 && self.analysis.min_leaf_fraction < 0.5) {
            return Err(Error::Config("analysis.min_leaf_fraction must lie in (0, 0.5)".into()));
        }
        if let DataSource::Synthetic { spec, .. } = &self.data {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.bart.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Comma-separated list with surrounding whitespace trimmed.
fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (lineno + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: invalid value '{v}' for {key}"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(Error::Config(format!("line {line}: unknown key '{k}'"))),
        }
    }
}

fn set<T: FromStr>(kv: &mut KeyValues, key: &str, slot: &mut T) -> Result<()> {
    if let Some(v) = kv.take_parsed(key)? {
        *slot = v;
    }
    Ok(())
}

fn set_opt<T: FromStr>(kv: &mut KeyValues, key: &str, slot: &mut Option<T>) -> Result<()> {
    if let Some(v) = kv.take_parsed(key)? {
        *slot = Some(v);
    }
    Ok(())
}

/// Synthetic covariates are named `x1..xp`.
fn covariate_index(name: &str, p: usize) -> Result<usize> {
    name.strip_prefix('x')
        .and_then(|k| k.parse::<usize>().ok())
        .filter(|&k| k >= 1 && k <= p)
        .map(|k| k - 1)
        .ok_or_else(|| Error::Config(format!("unknown synthetic covariate '{name}' (use x1..x{p})")))
}

/// `constant(v)` or `modifier(xk, tau0, tau1)`.
pub fn parse_tau_rule(v: &str, p: usize) -> Result<TauRule> {
    let bad = || Error::Config(format!("cannot parse tau rule '{v}'"));
    let (head, rest) = v.trim().split_once('(').ok_or_else(bad)?;
    let args = list(rest.strip_suffix(')').ok_or_else(bad)?);
    let num = |s: &String| s.parse::<f64>().map_err(|_| bad());
    match (head.trim(), args.len()) {
        ("constant", 1) => Ok(TauRule::Constant { value: num(&args[0])? }),
        ("modifier", 3) => Ok(TauRule::Modifier {
            covariate: covariate_index(&args[0], p)?,
            tau0: num(&args[1])?,
            tau1: num(&args[2])?,
        }),
        _ => Err(bad()),
    }
}

fn parse_synthetic(kv: &mut KeyValues) -> Result<DataSource> {
    let n = kv.take_parsed("synthetic.n")?.unwrap_or(4000);
    let p = kv.take_parsed("synthetic.p")?.unwrap_or(10);
    let tau = match kv.take("synthetic.tau") {
        Some(v) => parse_tau_rule(&v, p)?,
        None => TauRule::Modifier {
            covariate: 0,
            tau0: 0.1,
            tau1: 0.3,
        },
    };
    let mut spec = SyntheticSpec::binary(n, p, tau, 0);
    if let Some(v) = kv.take("synthetic.prevalence") {
        let vals = list(&v)
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Config(format!("bad prevalence '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        spec.prevalences = match vals.len() {
            1 => vec![vals[0]; p],
            k if k == p => vals,
            _ => return Err(Error::Config("synthetic.prevalence needs 1 or p values".into())),
        };
    }
    if let Some(v) = kv.take("synthetic.outcome_effects") {
        for item in list(&v) {
            let (name, value) = item
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("outcome effect '{item}' must be name:value")))?;
            let j = covariate_index(name.trim(), p)?;
            spec.outcome_effects[j] = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad outcome effect '{item}'")))?;
        }
    }
    set(kv, "synthetic.baseline_risk", &mut spec.baseline_risk)?;
    set(kv, "synthetic.exposure_rate", &mut spec.exposure_rate)?;
    set(kv, "synthetic.confounding_strength", &mut spec.confounding_strength)?;
    set(kv, "synthetic.noise_sd", &mut spec.noise_sd)?;
    set(kv, "synthetic.outcome_kind", &mut spec.outcome_kind)?;
    if let Some(c) = kv.take("synthetic.confounder") {
        spec.confounder = Some(covariate_index(&c, p)?);
    }
    let seed = kv.take_parsed("synthetic.seed")?;
    Ok(DataSource::Synthetic { spec, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "
            # heterogeneous demo
            seed = 7
            data.source = synthetic
            synthetic.n = 500
            synthetic.p = 4
            synthetic.tau = modifier(x2, 0.1, 0.3)
            synthetic.outcome_effects = x3:0.1, x4:-0.05
            methods = grf, traditional
            grf.num_trees = 100
            analysis.stratify = x2
            output.dir = out
        ";
        let c = PipelineConfig::parse(text, Path::new("/tmp/base")).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.methods, vec![MethodName::Grf, MethodName::Traditional]);
        assert_eq!(c.grf.num_trees, 100);
        assert_eq!(c.output_dir, PathBuf::from("/tmp/base/out"));
        let DataSource::Synthetic { spec, seed } = &c.data else {
            panic!("expected synthetic source")
        };
        assert_eq!(*seed, None);
        assert_eq!(spec.outcome_effects, vec![0.0, 0.0, 0.1, -0.05]);
        assert!(matches!(spec.tau_rule, TauRule::Modifier { covariate: 1, .. }));
    }

    #[test]
    fn rejects_unknown_method_and_key() {
        let e = PipelineConfig::parse("methods = gbm", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("unknown method 'gbm'"));
        let e = PipelineConfig::parse("grf.trees = 3", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("unknown key"));
        assert!(PipelineConfig::parse("seed = x", Path::new(".")).is_err());
    }
}
