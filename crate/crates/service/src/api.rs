//! Request and response bodies.

use serde::{Deserialize, Serialize};

use satc_core::ranking::{GainRule, Method, Strategy};
use satc_core::{Averaging, ClassId, DocId};

fn default_method() -> Method {
    Method::UTheoretic
}

fn default_strategy() -> Strategy {
    Strategy::Dynamic
}

fn default_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Bundle directory name under the service's bundle root.
    pub bundle: String,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Overrides the bundle's calibration.
    #[serde(default)]
    pub sigma: Option<f64>,
}

/// The configuration a session was created with, after defaults and
/// calibration were resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub bundle: String,
    pub method: Method,
    pub strategy: Strategy,
    pub averaging: Averaging,
    pub beta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Exhausted,
    Closed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    /// Must accompany every mutating request as the `x-session-token` header.
    pub token: String,
    pub status: Status,
    pub n_docs: usize,
    pub classes: Vec<ClassId>,
    pub config: SessionConfig,
    pub gain_rule: GainRule,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelView {
    pub class: ClassId,
    pub predicted: bool,
    pub misclassification_probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentView {
    pub doc: DocId,
    pub utility: f64,
    pub labels: Vec<LabelView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Next {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<DocumentView>,
    pub remaining: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Validate {
    pub doc: DocId,
    /// Classes whose predicted label was wrong.
    #[serde(default)]
    pub flipped: Vec<ClassId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(rename = "macro")]
    pub macro_: f64,
    pub micro: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Validated {
    pub status: Status,
    pub estimated_f: Estimate,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub validated: usize,
    pub doc: DocId,
    pub flipped: Vec<ClassId>,
    pub estimated_f: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub session_id: String,
    pub status: Status,
    pub validated: usize,
    pub remaining: usize,
    pub initial_estimate: Estimate,
    pub trajectory: Vec<TrajectoryPoint>,
    pub config: SessionConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub kind: String,
}
