//! Validation gains, expected utilities and the static and dynamic
//! ranking strategies.

mod gains;
mod session;
mod utility;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationModel;
use crate::error::{Error, Result};
use crate::estimation::TrainingEstimates;
use crate::model::{Averaging, EffectivenessSpec, LabelSet};

pub use gains::{average_gains, gains_for_rule, micro_gains, pointwise_gains, GainFlavor, GainModel};
pub use session::{dynamic_apply_correction, dynamic_next, TableState, ValidationSession};
pub use utility::{confidence_ranking, document_utility, rank_static, round_robin_split, ErrorModel, RankedDoc};

/// How validation gains are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainRule {
    /// Both gains fixed at 1: ranking by summed misclassification probability.
    Unit,
    /// Per-class average gains.
    Average,
    /// Per-class gain of the next single correction.
    Pointwise,
    /// Average gains on the merged table, shared by all classes.
    MicroAverage,
    /// Pointwise gains on the merged table, shared by all classes.
    MicroPointwise,
}

impl GainRule {
    pub fn is_micro(self) -> bool {
        matches!(self, GainRule::MicroAverage | GainRule::MicroPointwise)
    }

    /// Default rule for a strategy and averaging mode: average gains for
    /// static ranking, pointwise gains for dynamic ranking.
    pub fn for_strategy(strategy: Strategy, averaging: Averaging) -> Self {
        match (strategy, averaging) {
            (Strategy::Static, Averaging::Macro) => GainRule::Average,
            (Strategy::Static, Averaging::Micro) => GainRule::MicroAverage,
            (Strategy::Dynamic, Averaging::Macro) => GainRule::Pointwise,
            (Strategy::Dynamic, Averaging::Micro) => GainRule::MicroPointwise,
        }
    }
}

/// Where the per-(document, class) error probabilities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbabilitySource {
    Calibrated(CalibrationModel),
    /// Probabilities replaced by 0/1 error indicators from the gold labels.
    OracleTruth(LabelSet),
}

/// Where the contingency tables feeding the gains come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TableSource {
    Estimated(TrainingEstimates),
    /// True test-set counts computed from the gold labels.
    OracleCounts(LabelSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Rank once, then sweep.
    Static,
    /// Re-select the best remaining document after every correction.
    Dynamic,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Static => "static",
            Strategy::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Strategy::Static),
            "dynamic" => Ok(Strategy::Dynamic),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// The named ranking methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Ascending confidence, i.e. unit gains.
    Baseline,
    /// Estimated tables and calibrated probabilities.
    UTheoretic,
    /// True tables, calibrated probabilities.
    Oracle1,
    /// True tables and true error indicators.
    Oracle2,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::UTheoretic, Method::Oracle1, Method::Oracle2];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::UTheoretic => "utheoretic",
            Method::Oracle1 => "oracle1",
            Method::Oracle2 => "oracle2",
        }
    }

    pub fn needs_gold(self) -> bool {
        matches!(self, Method::Oracle1 | Method::Oracle2)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "utheoretic" => Ok(Method::UTheoretic),
            "oracle1" => Ok(Method::Oracle1),
            "oracle2" => Ok(Method::Oracle2),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingConfig {
    pub gain_rule: GainRule,
    pub prob_source: ProbabilitySource,
    pub table_source: TableSource,
    pub strategy: Strategy,
    pub spec: EffectivenessSpec,
}

impl RankingConfig {
    /// Assembles the configuration of a named method.
    ///
    /// The baseline ignores `strategy` (it has no gains to update) and is
    /// always static. Oracle methods require `gold`.
    pub fn for_method(
        method: Method,
        strategy: Strategy,
        averaging: Averaging,
        spec: EffectivenessSpec,
        calibration: CalibrationModel,
        estimates: TrainingEstimates,
        gold: Option<&LabelSet>,
    ) -> Result<Self> {
        let gold_labels = || {
            gold.cloned()
                .ok_or_else(|| Error::Config(format!("method {method} needs gold test labels")))
        };
        let (gain_rule, prob_source, table_source, strategy) = match method {
            Method::Baseline => (
                GainRule::Unit,
                ProbabilitySource::Calibrated(calibration),
                TableSource::Estimated(estimates),
                Strategy::Static,
            ),
            Method::UTheoretic => (
                GainRule::for_strategy(strategy, averaging),
                ProbabilitySource::Calibrated(calibration),
                TableSource::Estimated(estimates),
                strategy,
            ),
            Method::Oracle1 => (
                GainRule::for_strategy(strategy, averaging),
                ProbabilitySource::Calibrated(calibration),
                TableSource::OracleCounts(gold_labels()?),
                strategy,
            ),
            Method::Oracle2 => {
                let gold = gold_labels()?;
                (
                    GainRule::for_strategy(strategy, averaging),
                    ProbabilitySource::OracleTruth(gold.clone()),
                    TableSource::OracleCounts(gold),
                    strategy,
                )
            }
        };
        Ok(Self {
            gain_rule,
            prob_source,
            table_source,
            strategy,
            spec,
        })
    }

    /// Strategy actually followed: unit gains never change, so a dynamic
    /// request degenerates to the static order.
    pub fn effective_strategy(&self) -> Strategy {
        if self.gain_rule == GainRule::Unit {
            Strategy::Static
        } else {
            self.strategy
        }
    }
}
