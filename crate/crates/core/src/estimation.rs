//! Test-set contingency estimates from cross-validated training counts,
//! with on-demand add-one smoothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassId, ContingencyTable, ErrorEvent, LabelSet, ScoreMatrix};

/// Per-class contingency counts observed in cross-validation on the
/// training set, plus the set sizes needed to rescale them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingEstimates {
    counts: BTreeMap<ClassId, ContingencyTable>,
    train_size: usize,
    test_size: usize,
}

impl TrainingEstimates {
    pub fn new(counts: BTreeMap<ClassId, ContingencyTable>, train_size: usize, test_size: usize) -> Result<Self> {
        if train_size == 0 || test_size == 0 {
            return Err(Error::Config(format!(
                "set sizes must be positive (train {train_size}, test {test_size})"
            )));
        }
        for (class, table) in &counts {
            table
                .validate()
                .map_err(|e| Error::InvalidTable(format!("class {class}: {e}")))?;
        }
        Ok(Self {
            counts,
            train_size,
            test_size,
        })
    }

    pub fn train_size(&self) -> usize {
        self.train_size
    }

    pub fn test_size(&self) -> usize {
        self.test_size
    }

    pub fn counts(&self) -> &BTreeMap<ClassId, ContingencyTable> {
        &self.counts
    }

    pub fn training_counts(&self, class: &ClassId) -> Result<&ContingencyTable> {
        self.counts
            .get(class)
            .ok_or_else(|| Error::UnknownClass(class.to_string()))
    }

    /// Same training counts, rescaled to a test set of a different size.
    pub fn with_test_size(&self, test_size: usize) -> Result<Self> {
        Self::new(self.counts.clone(), self.train_size, test_size)
    }
}

/// A test-set table together with whether smoothing was applied to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedTable {
    pub table: ContingencyTable,
    pub smoothed: bool,
}

impl EstimatedTable {
    /// Wraps a table that is used as-is.
    pub fn raw(table: ContingencyTable) -> Self {
        Self { table, smoothed: false }
    }

    /// True when every cell is at least one, the domain of the gain formulas.
    pub fn is_gain_ready(&self) -> bool {
        self.table.min_cell() >= 1.0
    }
}

/// Maximum-likelihood estimate of the test-set table: training counts
/// scaled by `|Te| / |Tr|`.
pub fn ml_estimate(est: &TrainingEstimates, class: &ClassId) -> Result<ContingencyTable> {
    let train = est.training_counts(class)?;
    let ratio = est.test_size as f64 / est.train_size as f64;
    ContingencyTable::new(train.tp * ratio, train.fp * ratio, train.fn_ * ratio)
}

/// Adds one to each of tp, fp and fn, but only if one of them is below one.
pub fn smooth_on_demand(table: &ContingencyTable) -> EstimatedTable {
    if table.min_cell() < 1.0 {
        EstimatedTable {
            table: ContingencyTable {
                tp: table.tp + 1.0,
                fp: table.fp + 1.0,
                fn_: table.fn_ + 1.0,
                tn: table.tn,
            },
            smoothed: true,
        }
    } else {
        EstimatedTable {
            table: *table,
            smoothed: false,
        }
    }
}

/// Per-class counts obtained by comparing the decisions in `matrix`
/// against `labels`, in matrix class order. `tn` is filled in.
pub fn observed_tables(matrix: &ScoreMatrix, labels: &LabelSet) -> Result<Vec<ContingencyTable>> {
    let gold = labels.dense_for(matrix)?;
    let n = matrix.n_classes();
    let mut tables = vec![
        ContingencyTable {
            tn: Some(0.0),
            ..ContingencyTable::default()
        };
        n
    ];
    for d in 0..matrix.n_docs() {
        for (c, table) in tables.iter_mut().enumerate() {
            table.record(ErrorEvent::of(matrix.decision(d, c), gold[d * n + c]));
        }
    }
    Ok(tables)
}

/// Training estimates from pooled cross-validation decisions and training labels.
pub fn derive_training_estimates(
    cv_scores: &ScoreMatrix,
    train_labels: &LabelSet,
    test_size: usize,
) -> Result<TrainingEstimates> {
    let tables = observed_tables(cv_scores, train_labels)?;
    let counts = cv_scores
        .classes()
        .iter()
        .cloned()
        .zip(tables.into_iter().map(|t| ContingencyTable { tn: None, ..t }))
        .collect();
    TrainingEstimates::new(counts, cv_scores.n_docs(), test_size)
}
