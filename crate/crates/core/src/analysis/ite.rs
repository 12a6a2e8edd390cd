use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grf,
    Bart,
    Bcf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Grf => "grf",
            Method::Bart => "bart",
            Method::Bcf => "bcf",
        }
    }
}

/// Per-unit treatment effects on the additive scale, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IteVector {
    pub estimates: Vec<f64>,
    pub method: Method,
    pub seed: u64,
    pub config_digest: String,
    /// Optional per-unit 95% interval (posterior quantiles for the Bayesian methods).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<(f64, f64)>>,
}

impl IteVector {
    pub fn new(estimates: Vec<f64>, method: Method, seed: u64, config_digest: String) -> Result<Self> {
        if let Some(i) = estimates.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "{} effect estimate for unit {i} is not finite",
                method.as_str()
            )));
        }
        Ok(Self {
            estimates,
            method,
            seed,
            config_digest,
            intervals: None,
        })
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.estimates)
    }
}

/// Short stable digest of a serializable configuration.
pub fn config_digest<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
