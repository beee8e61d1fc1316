//! Mapping confidence scores to probabilities with a generalized logistic
//! function, and fitting its growth rate on cross-validated scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Averaging, LabelSet, ScoreMatrix};

/// Generalized logistic with growth rate `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub sigma: f64,
}

impl CalibrationModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be positive and finite, got {sigma}")));
        }
        Ok(Self { sigma })
    }
}

/// Probability that the decision encoded by `score` is wrong:
/// `1 - e^{s|x|} / (e^{s|x|} + 1)`, evaluated as `e^{-s|x|} / (1 + e^{-s|x|})`
/// so that large confidences underflow to 0.
pub fn misclassification_probability(score: f64, model: CalibrationModel) -> f64 {
    let e = (-(model.sigma * score.abs())).exp();
    e / (1.0 + e)
}

/// Probability of class membership from the signed score.
pub fn membership_probability(score: f64, model: CalibrationModel) -> f64 {
    let x = model.sigma * score;
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Candidate growth rates searched by the calibrators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    candidates: Vec<f64>,
}

impl CalibrationGrid {
    pub fn new(candidates: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Config("calibration grid is empty".into()));
        }
        if let Some(bad) = candidates.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Config(format!(
                "calibration grid candidate {bad} is not positive"
            )));
        }
        Ok(Self { candidates })
    }

    /// `count` points evenly spaced in log scale over `[low, high]`.
    pub fn log_spaced(low: f64, high: f64, count: usize) -> Result<Self> {
        if !(low > 0.0 && high >= low && low.is_finite() && high.is_finite()) || count == 0 {
            return Err(Error::Config(format!("bad log-spaced grid {low}:{high}:{count}")));
        }
        if count == 1 {
            return Self::new(vec![low]);
        }
        let (a, b) = (low.ln(), high.ln());
        let step = (b - a) / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|i| (a + step * i as f64).exp()).collect();
        values[0] = low;
        values[count - 1] = high;
        Self::new(values)
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        Self::log_spaced(1e-3, 1e3, 100).expect("static grid is valid")
    }
}

/// Scores produced by k-fold cross-validation on the training set, pooled,
/// together with the training labels.
#[derive(Debug, Clone)]
pub struct CvScores {
    pub matrix: ScoreMatrix,
    pub labels: LabelSet,
    /// Number of folds the scores came from (informational).
    pub folds: usize,
}

impl CvScores {
    pub fn new(matrix: ScoreMatrix, labels: LabelSet, folds: usize) -> Result<Self> {
        labels.dense_for(&matrix)?;
        if folds < 2 {
            return Err(Error::Config(format!(
                "cross-validation needs at least 2 folds, got {folds}"
            )));
        }
        Ok(Self { matrix, labels, folds })
    }

    /// Positive training examples per class.
    pub fn positives_per_class(&self) -> Result<Vec<f64>> {
        let dense = self.labels.dense_for(&self.matrix)?;
        let n = self.matrix.n_classes();
        let mut counts = vec![0.0; n];
        for (i, &positive) in dense.iter().enumerate() {
            if positive {
                counts[i % n] += 1.0;
            }
        }
        Ok(counts)
    }

    /// Expected positives per class under `model`: the sum of membership
    /// probabilities over the pooled training documents.
    pub fn expected_positives(&self, model: CalibrationModel) -> Vec<f64> {
        let n = self.matrix.n_classes();
        let mut expected = vec![0.0; n];
        for d in 0..self.matrix.n_docs() {
            for (c, &score) in self.matrix.row(d).iter().enumerate() {
                expected[c] += membership_probability(score, model);
            }
        }
        expected
    }
}

/// Distance between true and expected positive counts.
///
/// Macro: mean absolute per-class residual. Micro: absolute residual of the totals.
pub fn calibration_objective(positives: &[f64], expected: &[f64], averaging: Averaging) -> f64 {
    debug_assert_eq!(positives.len(), expected.len());
    match averaging {
        Averaging::Macro => {
            if positives.is_empty() {
                return 0.0;
            }
            let total: f64 = positives.iter().zip(expected).map(|(p, e)| (p - e).abs()).sum();
            total / positives.len() as f64
        }
        Averaging::Micro => {
            let p: f64 = positives.iter().sum();
            let e: f64 = expected.iter().sum();
            (p - e).abs()
        }
    }
}

/// Outcome of a grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: CalibrationModel,
    pub objective: f64,
}

/// Picks the candidate with the lowest objective; equal objectives go to
/// the smallest sigma.
pub fn select_sigma<I>(candidates: I, positives: &[f64], averaging: Averaging) -> Result<Calibration>
where
    I: IntoIterator<Item = (f64, Vec<f64>)>,
{
    let scored = candidates
        .into_iter()
        .map(|(sigma, expected)| (sigma, calibration_objective(positives, &expected, averaging)));
    best_of(scored)
}

fn best_of<I: IntoIterator<Item = (f64, f64)>>(scored: I) -> Result<Calibration> {
    let mut best: Option<(f64, f64)> = None;
    for (sigma, objective) in scored {
        let better = match best {
            None => true,
            Some((best_sigma, best_obj)) => objective < best_obj || (objective == best_obj && sigma < best_sigma),
        };
        if better {
            best = Some((sigma, objective));
        }
    }
    let (sigma, objective) = best.ok_or_else(|| Error::Config("calibration grid is empty".into()))?;
    Ok(Calibration {
        model: CalibrationModel::new(sigma)?,
        objective,
    })
}

/// Grid search for the growth rate minimising the calibration objective.
pub fn calibrate_sigma(cv: &CvScores, grid: &CalibrationGrid, averaging: Averaging) -> Result<Calibration> {
    let positives = cv.positives_per_class()?;
    let scored: Vec<(f64, f64)> = grid
        .candidates()
        .par_iter()
        .map(|&sigma| {
            let expected = cv.expected_positives(CalibrationModel { sigma });
            (sigma, calibration_objective(&positives, &expected, averaging))
        })
        .collect();
    best_of(scored)
}

pub fn calibrate_sigma_macro(cv: &CvScores, grid: &CalibrationGrid) -> Result<CalibrationModel> {
    calibrate_sigma(cv, grid, Averaging::Macro).map(|c| c.model)
}

pub fn calibrate_sigma_micro(cv: &CvScores, grid: &CalibrationGrid) -> Result<CalibrationModel> {
    calibrate_sigma(cv, grid, Averaging::Micro).map(|c| c.model)
}
