//! Dataset bundles: a directory holding test scores, optional gold labels
//! and the training-side material from which contingency estimates and the
//! calibration are obtained, described by a `bundle.toml` manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_sigma, Calibration, CalibrationGrid, CalibrationModel, CvScores};
use crate::error::{Error, Result};
use crate::estimation::{derive_training_estimates, TrainingEstimates};
use crate::formats;
use crate::model::{Averaging, LabelSet, ScoreMatrix};

pub const MANIFEST_FILE: &str = "bundle.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub test_scores: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    /// Fixed calibration, used when no cross-validation scores are given
    /// or calibration should not be refitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<EstimatesEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesEntry {
    pub file: PathBuf,
    pub train_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvEntry {
    pub scores: PathBuf,
    pub labels: PathBuf,
    pub folds: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub name: String,
    pub test: ScoreMatrix,
    pub gold: Option<LabelSet>,
    pub estimates: TrainingEstimates,
    pub cv: Option<CvScores>,
    pub sigma: Option<f64>,
}

impl DatasetBundle {
    /// Assembles a bundle from in-memory parts; `cv` and `train_labels`
    /// are used to derive the estimates when `estimates` is `None`.
    pub fn new(
        name: impl Into<String>,
        test: ScoreMatrix,
        gold: Option<LabelSet>,
        estimates: Option<TrainingEstimates>,
        cv: Option<CvScores>,
        sigma: Option<f64>,
    ) -> Result<Self> {
        let test_size = test.n_docs().max(1);
        let estimates = match (estimates, &cv) {
            (Some(est), None) => est.with_test_size(test_size)?,
            (None, Some(cv)) => derive_training_estimates(&cv.matrix, &cv.labels, test_size)?,
            _ => {
                return Err(Error::Config(
                    "a bundle needs exactly one of training estimates or cross-validation scores".into(),
                ))
            }
        };
        if let Some(s) = sigma {
            CalibrationModel::new(s)?;
        }
        for class in test.classes() {
            if !estimates.counts().contains_key(class) {
                return Err(Error::DataConsistency(format!(
                    "no training counts for test class {class}"
                )));
            }
        }
        if let Some(cv) = &cv {
            if cv.matrix.n_docs() > 0 && cv.matrix.classes() != test.classes() {
                let same = cv.matrix.classes().len() == test.classes().len()
                    && test.classes().iter().all(|c| cv.matrix.class_position(c).is_ok());
                if !same {
                    return Err(Error::DataConsistency(
                        "cross-validation and test scores cover different classes".into(),
                    ));
                }
            }
        }
        if let Some(gold) = &gold {
            gold.dense_for(&test)?;
        }
        Ok(Self {
            name: name.into(),
            test,
            gold,
            estimates,
            cv,
            sigma,
        })
    }

    /// Loads a bundle from a directory containing `bundle.toml`, or from
    /// the manifest path itself.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest_path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
            path: manifest_path.clone(),
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(1),
            message: e.message().to_string(),
        })?;
        let resolve = |p: &Path| dir.join(p);

        let test = formats::load_scores(&resolve(&manifest.test_scores))?;
        let gold = manifest
            .test_labels
            .as_deref()
            .map(|p| formats::load_labels(&resolve(p)))
            .transpose()?;
        let estimates = manifest
            .estimates
            .as_ref()
            .map(|e| {
                let counts = formats::load_estimates(&resolve(&e.file))?;
                TrainingEstimates::new(counts, e.train_size, test.n_docs().max(1))
            })
            .transpose()?;
        let cv = manifest
            .cv
            .as_ref()
            .map(|c| {
                let matrix = formats::load_scores(&resolve(&c.scores))?;
                let labels = formats::load_labels(&resolve(&c.labels))?;
                CvScores::new(matrix, labels, c.folds)
            })
            .transpose()?;
        Self::new(manifest.name, test, gold, estimates, cv, manifest.sigma)
    }

    /// Writes the bundle as a directory with CV material when present,
    /// training counts otherwise.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut manifest = Manifest {
            name: self.name.clone(),
            test_scores: "test_scores.tsv".into(),
            test_labels: None,
            sigma: self.sigma,
            estimates: None,
            cv: None,
        };
        formats::write_text(&dir.join("test_scores.tsv"), &formats::format_scores(&self.test))?;
        if let Some(gold) = &self.gold {
            manifest.test_labels = Some("test_labels.tsv".into());
            formats::write_text(&dir.join("test_labels.tsv"), &formats::format_labels(gold))?;
        }
        match &self.cv {
            Some(cv) => {
                manifest.cv = Some(CvEntry {
                    scores: "cv_scores.tsv".into(),
                    labels: "train_labels.tsv".into(),
                    folds: cv.folds,
                });
                formats::write_text(&dir.join("cv_scores.tsv"), &formats::format_scores(&cv.matrix))?;
                formats::write_text(&dir.join("train_labels.tsv"), &formats::format_labels(&cv.labels))?;
            }
            None => {
                manifest.estimates = Some(EstimatesEntry {
                    file: "estimates.tsv".into(),
                    train_size: self.estimates.train_size(),
                });
                formats::write_text(
                    &dir.join("estimates.tsv"),
                    &formats::format_estimates(self.estimates.counts()),
                )?;
            }
        }
        let text = toml::to_string_pretty(&manifest).map_err(|e| Error::Serialize(e.to_string()))?;
        formats::write_text(&dir.join(MANIFEST_FILE), &text)
    }

    pub fn require_gold(&self) -> Result<&LabelSet> {
        self.gold
            .as_ref()
            .ok_or_else(|| Error::Config(format!("dataset {} has no gold test labels", self.name)))
    }

    /// Resolves the calibration: an explicit `sigma` wins, then the
    /// manifest's fixed value, then a grid search on the CV scores.
    pub fn calibration(
        &self,
        averaging: Averaging,
        grid: &CalibrationGrid,
        sigma: Option<f64>,
    ) -> Result<CalibrationModel> {
        if let Some(s) = sigma.or(self.sigma) {
            return CalibrationModel::new(s);
        }
        Ok(self.fit_calibration(averaging, grid)?.model)
    }

    /// Grid search on the CV scores.
    pub fn fit_calibration(&self, averaging: Averaging, grid: &CalibrationGrid) -> Result<Calibration> {
        let cv = self.cv.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "dataset {} has no cross-validation scores to calibrate on; give sigma explicitly",
                self.name
            ))
        })?;
        calibrate_sigma(cv, grid, averaging)
    }
}
