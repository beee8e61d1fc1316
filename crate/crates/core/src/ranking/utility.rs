use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{GainModel, ProbabilitySource, RankingConfig, Strategy, TableState};
use crate::calibration::{misclassification_probability, CalibrationModel};
use crate::error::{Error, Result};
use crate::model::{DocId, ScoreMatrix};

/// Per-(document, class) error type and error probability.
///
/// The error a label can have is fixed by its decision: a positive
/// decision can only be a false positive, a negative one a false negative.
#[derive(Debug, Clone)]
pub struct ErrorModel {
    n_classes: usize,
    positive: Vec<bool>,
    prob: Vec<f64>,
}

impl ErrorModel {
    pub fn new(matrix: &ScoreMatrix, source: &ProbabilitySource) -> Result<Self> {
        let positive: Vec<bool> = matrix.raw_scores().iter().map(|&s| s > 0.0).collect();
        let prob = match source {
            ProbabilitySource::Calibrated(model) => matrix
                .raw_scores()
                .iter()
                .map(|&s| misclassification_probability(s, *model))
                .collect(),
            ProbabilitySource::OracleTruth(labels) => {
                let gold = labels.dense_for(matrix)?;
                positive
                    .iter()
                    .zip(&gold)
                    .map(|(&p, &g)| if p != g { 1.0 } else { 0.0 })
                    .collect()
            }
        };
        Ok(Self {
            n_classes: matrix.n_classes(),
            positive,
            prob,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_docs(&self) -> usize {
        self.prob.len().checked_div(self.n_classes).unwrap_or(0)
    }

    pub fn is_positive(&self, doc: usize, class: usize) -> bool {
        self.positive[doc * self.n_classes + class]
    }

    pub fn error_probability(&self, doc: usize, class: usize) -> f64 {
        self.prob[doc * self.n_classes + class]
    }

    /// Total expected utility of validating `doc`: the sum over classes of
    /// P(error) times the gain of correcting that error. Summed in class
    /// order; every ranking path uses this exact arithmetic.
    pub fn utility(&self, doc: usize, gains: &[GainModel]) -> f64 {
        let base = doc * self.n_classes;
        let mut total = 0.0;
        for (c, g) in gains.iter().enumerate() {
            let gain = if self.positive[base + c] { g.g_fp } else { g.g_fn };
            total += self.prob[base + c] * gain;
        }
        total
    }

    /// Summed error probability of the false-positive-prone and
    /// false-negative-prone labels of `doc`.
    pub(crate) fn error_mass(&self, doc: usize) -> (f64, f64) {
        let base = doc * self.n_classes;
        let (mut fp, mut fn_) = (0.0, 0.0);
        for c in 0..self.n_classes {
            if self.positive[base + c] {
                fp += self.prob[base + c];
            } else {
                fn_ += self.prob[base + c];
            }
        }
        (fp, fn_)
    }
}

/// One entry of a ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc: DocId,
    /// Position of the document in the score matrix.
    #[serde(skip)]
    pub index: usize,
    pub utility: f64,
}

/// Expected utility of validating a single document.
pub fn document_utility(
    doc: &DocId,
    scores: &ScoreMatrix,
    gains: &[GainModel],
    probs: &ProbabilitySource,
) -> Result<f64> {
    let d = scores.doc_position(doc)?;
    if gains.len() != scores.n_classes() {
        return Err(Error::DataConsistency(format!(
            "{} gain pairs for {} classes",
            gains.len(),
            scores.n_classes()
        )));
    }
    let row = scores.select_docs(&[d])?;
    let probs = match probs {
        ProbabilitySource::OracleTruth(labels) => ProbabilitySource::OracleTruth(labels.restricted_to(&row)?),
        other => other.clone(),
    };
    Ok(ErrorModel::new(&row, &probs)?.utility(0, gains))
}

/// Descending utility, ascending `DocId` on ties.
pub(crate) fn sort_ranking(utilities: Vec<(usize, f64)>, matrix: &ScoreMatrix) -> Vec<RankedDoc> {
    let docs = matrix.docs();
    let mut items = utilities;
    items.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => docs[a.0].cmp(&docs[b.0]),
        other => other,
    });
    items
        .into_iter()
        .map(|(index, utility)| RankedDoc {
            doc: docs[index].clone(),
            index,
            utility,
        })
        .collect()
}

/// Ranks every document once by total expected utility.
pub fn rank_static(matrix: &ScoreMatrix, config: &RankingConfig) -> Result<Vec<RankedDoc>> {
    if config.effective_strategy() != Strategy::Static {
        return Err(Error::Precondition(
            "rank_static needs a static configuration; use ValidationSession for dynamic ranking".into(),
        ));
    }
    let errors = ErrorModel::new(matrix, &config.prob_source)?;
    let tables = TableState::initial(matrix, &config.table_source)?;
    let gains = tables.gains(config.gain_rule, config.spec)?;
    Ok(rank_with(&errors, &gains, matrix))
}

pub(crate) fn rank_with(errors: &ErrorModel, gains: &[GainModel], matrix: &ScoreMatrix) -> Vec<RankedDoc> {
    let utilities = (0..matrix.n_docs()).map(|d| (d, errors.utility(d, gains))).collect();
    sort_ranking(utilities, matrix)
}

/// The confidence baseline: documents sorted by the summed probability
/// that their labels are wrong. Computed without any gain machinery.
pub fn confidence_ranking(matrix: &ScoreMatrix, model: CalibrationModel) -> Vec<RankedDoc> {
    let utilities = (0..matrix.n_docs())
        .map(|d| {
            let total = matrix
                .row(d)
                .iter()
                .fold(0.0, |acc, &s| acc + misclassification_probability(s, model));
            (d, total)
        })
        .collect();
    sort_ranking(utilities, matrix)
}

/// Deals a ranking to `k` annotators: annotator `i` receives the
/// entries at positions `r` with `r mod k == i`, in ranking order.
pub fn round_robin_split<T: Clone>(ranking: &[T], k: usize) -> Result<Vec<Vec<T>>> {
    if k < 1 {
        return Err(Error::Config("round-robin split needs at least one annotator".into()));
    }
    let mut parts = vec![Vec::with_capacity(ranking.len() / k + 1); k];
    for (r, item) in ranking.iter().enumerate() {
        parts[r % k].push(item.clone());
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CalibrationModel;
    use crate::model::{ClassId, LabelSet};

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn matrix(n_docs: usize, n_classes: usize, scores: Vec<f64>) -> ScoreMatrix {
        ScoreMatrix::new(
            ids("d", n_docs).into_iter().map(|s| DocId::new(s).unwrap()).collect(),
            ids("c", n_classes)
                .into_iter()
                .map(|s| ClassId::new(s).unwrap())
                .collect(),
            scores,
        )
        .unwrap()
    }

    #[test]
    fn midpoint_utility() {
        let m = matrix(1, 1, vec![0.0]);
        let probs = ProbabilitySource::Calibrated(CalibrationModel::new(1.0).unwrap());
        let u = document_utility(&m.docs()[0], &m, &[GainModel { g_fp: 9.0, g_fn: 0.4 }], &probs).unwrap();
        assert!((u - 0.2).abs() < 1e-15);
    }

    #[test]
    fn unit_gains_sum_error_probabilities() {
        let m = matrix(1, 3, vec![0.3, -1.2, 2.0]);
        let model = CalibrationModel::new(0.7).unwrap();
        let expected: f64 = [0.3, -1.2, 2.0]
            .iter()
            .map(|&s| misclassification_probability(s, model))
            .sum();
        let u = document_utility(
            &m.docs()[0],
            &m,
            &[GainModel::UNIT; 3],
            &ProbabilitySource::Calibrated(model),
        )
        .unwrap();
        assert!((u - expected).abs() < 1e-15);
    }

    #[test]
    fn oracle_truth_zero_for_correct_documents() {
        let m = matrix(2, 2, vec![1.0, -1.0, 1.0, 1.0]);
        let mut gold = LabelSet::new();
        gold.insert(m.docs()[0].clone(), m.classes()[0].clone());
        gold.insert(m.docs()[1].clone(), m.classes()[0].clone());
        let probs = ProbabilitySource::OracleTruth(gold);
        let gains = [GainModel { g_fp: 0.3, g_fn: 0.5 }; 2];
        assert_eq!(document_utility(&m.docs()[0], &m, &gains, &probs).unwrap(), 0.0);
        assert_eq!(document_utility(&m.docs()[1], &m, &gains, &probs).unwrap(), 0.3);
    }

    #[test]
    fn gain_count_mismatch_is_an_error() {
        let m = matrix(1, 2, vec![1.0, 1.0]);
        let probs = ProbabilitySource::Calibrated(CalibrationModel::new(1.0).unwrap());
        assert!(document_utility(&m.docs()[0], &m, &[GainModel::UNIT], &probs).is_err());
    }

    #[test]
    fn ties_break_on_doc_id() {
        let docs = ["b", "c", "a"].map(|s| DocId::new(s).unwrap()).to_vec();
        let m = ScoreMatrix::new(docs, vec![ClassId::new("x").unwrap()], vec![2.0, 2.0, 2.0]).unwrap();
        let r = confidence_ranking(&m, CalibrationModel::new(1.0).unwrap());
        let order: Vec<&str> = r.iter().map(|e| e.doc.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
    }

    #[test]
    fn distinct_utilities_sort_descending() {
        let m = matrix(4, 1, vec![3.0, 0.1, -2.0, 0.5]);
        let r = confidence_ranking(&m, CalibrationModel::new(1.0).unwrap());
        let order: Vec<usize> = r.iter().map(|e| e.index).collect();
        assert_eq!(order, [1, 3, 2, 0]);
    }

    #[test]
    fn round_robin_examples() {
        let six: Vec<usize> = (0..6).collect();
        assert_eq!(round_robin_split(&six, 1).unwrap(), vec![six.clone()]);
        assert_eq!(round_robin_split(&six, 2).unwrap(), vec![vec![0, 2, 4], vec![1, 3, 5]]);
        let seven: Vec<usize> = (0..7).collect();
        let sizes: Vec<usize> = round_robin_split(&seven, 3).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, [3, 2, 2]);
        assert!(round_robin_split(&six, 0).is_err());
    }
}
