use serde::{Deserialize, Serialize};

use super::GainRule;
use crate::error::{Error, Result};
use crate::estimation::EstimatedTable;
use crate::model::{f_beta, ContingencyTable, EffectivenessSpec};

/// Gain obtained by correcting one false positive / one false negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainModel {
    pub g_fp: f64,
    pub g_fn: f64,
}

impl GainModel {
    pub const UNIT: GainModel = GainModel { g_fp: 1.0, g_fn: 1.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainFlavor {
    Average,
    Pointwise,
}

fn require_ready(table: &EstimatedTable) -> Result<&ContingencyTable> {
    if !table.is_gain_ready() {
        let t = &table.table;
        return Err(Error::Precondition(format!(
            "gains need tp, fp, fn >= 1, got ({}, {}, {}); smooth the table first",
            t.tp, t.fp, t.fn_
        )));
    }
    Ok(&table.table)
}

fn cells(tp: f64, fp: f64, fn_: f64) -> ContingencyTable {
    ContingencyTable { tp, fp, fn_, tn: None }
}

/// Average gains: the total improvement from correcting every false
/// positive (false negative), divided by their number.
pub fn average_gains(table: &EstimatedTable, spec: EffectivenessSpec) -> Result<GainModel> {
    let t = require_ready(table)?;
    let current = f_beta(t, spec);
    let all_fp_fixed = f_beta(&cells(t.tp, 0.0, t.fn_), spec);
    let all_fn_fixed = f_beta(&cells(t.tp + t.fn_, t.fp, 0.0), spec);
    Ok(GainModel {
        g_fp: (all_fp_fixed - current) / t.fp,
        g_fn: (all_fn_fixed - current) / t.fn_,
    })
}

/// Pointwise gains: the improvement from correcting the next single
/// false positive (false negative).
pub fn pointwise_gains(table: &EstimatedTable, spec: EffectivenessSpec) -> Result<GainModel> {
    let t = require_ready(table)?;
    let current = f_beta(t, spec);
    Ok(GainModel {
        g_fp: f_beta(&cells(t.tp, t.fp - 1.0, t.fn_), spec) - current,
        g_fn: f_beta(&cells(t.tp + 1.0, t.fp, t.fn_ - 1.0), spec) - current,
    })
}

/// Gains on the merged table; one pair shared by every class.
pub fn micro_gains(global: &EstimatedTable, spec: EffectivenessSpec, flavor: GainFlavor) -> Result<GainModel> {
    match flavor {
        GainFlavor::Average => average_gains(global, spec),
        GainFlavor::Pointwise => pointwise_gains(global, spec),
    }
}

/// Per-class gains under `rule`. Micro rules read only `global`.
pub fn gains_for_rule(
    rule: GainRule,
    per_class: &[EstimatedTable],
    global: &EstimatedTable,
    spec: EffectivenessSpec,
) -> Result<Vec<GainModel>> {
    let n = per_class.len();
    match rule {
        GainRule::Unit => Ok(vec![GainModel::UNIT; n]),
        GainRule::Average => per_class.iter().map(|t| average_gains(t, spec)).collect(),
        GainRule::Pointwise => per_class.iter().map(|t| pointwise_gains(t, spec)).collect(),
        GainRule::MicroAverage => Ok(vec![micro_gains(global, spec, GainFlavor::Average)?; n]),
        GainRule::MicroPointwise => Ok(vec![micro_gains(global, spec, GainFlavor::Pointwise)?; n]),
    }
}
