//! Self-describing result documents: the full run configuration plus the
//! ENER values, serialized as TOML.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{EnerValue, EvaluationReport};
use crate::model::{Averaging, ClassId};
use crate::ranking::{GainRule, Method, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub dataset: String,
    pub n_docs: usize,
    pub n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_rule: Option<GainRule>,
    /// Averaging used for gains and calibration.
    pub averaging: Averaging,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub xi: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingResult {
    pub averaging: Averaging,
    pub excluded_classes: Vec<ClassId>,
    pub ener: Vec<EnerValue>,
}

impl From<&EvaluationReport> for AveragingResult {
    fn from(r: &EvaluationReport) -> Self {
        Self {
            averaging: r.averaging,
            excluded_classes: r.excluded_classes.clone(),
            ener: r.ener.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub results: Vec<AveragingResult>,
}

impl RunReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn result(&self, averaging: Averaging) -> Option<&AveragingResult> {
        self.results.iter().find(|r| r.averaging == averaging)
    }
}
