//! Seeded synthetic datasets for tests, benchmarks and demos.
//!
//! Each (document, class) pair gets a gold label with probability
//! `prevalence`; its score is the gold sign times `mu + L`, with `L`
//! standard logistic noise and `mu` chosen so that a fraction
//! `error_rate` of the decisions is wrong. Low-magnitude scores are
//! therefore the likely mistakes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::CvScores;
use crate::dataset::DatasetBundle;
use crate::error::{Error, Result};
use crate::model::{ClassId, DocId, LabelSet, ScoreMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_test: usize,
    pub n_train: usize,
    pub n_classes: usize,
    pub prevalence: f64,
    pub error_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_test: 100,
            n_train: 300,
            n_classes: 4,
            prevalence: 0.2,
            error_rate: 0.1,
            seed: 0,
        }
    }
}

fn width(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

fn ids<T>(prefix: &str, n: usize, make: fn(String) -> Result<T>) -> Vec<T> {
    let w = width(n);
    (0..n)
        .map(|i| make(format!("{prefix}{i:0w$}")).expect("generated ids are valid"))
        .collect()
}

fn logistic_noise(rng: &mut ChaCha8Rng) -> f64 {
    // Inverse CDF; the open interval keeps the logarithm finite.
    let u: f64 = rng.random_range(f64::EPSILON..1.0 - f64::EPSILON);
    (u / (1.0 - u)).ln()
}

fn sample(
    rng: &mut ChaCha8Rng,
    docs: Vec<DocId>,
    classes: &[ClassId],
    spec: &SyntheticSpec,
    mu: f64,
) -> Result<(ScoreMatrix, LabelSet)> {
    let mut scores = Vec::with_capacity(docs.len() * classes.len());
    let mut gold = LabelSet::new();
    for doc in &docs {
        for class in classes {
            let positive = rng.random_bool(spec.prevalence);
            if positive {
                gold.insert(doc.clone(), class.clone());
            }
            let margin = mu + logistic_noise(rng);
            scores.push(if positive { margin } else { -margin });
        }
    }
    Ok((ScoreMatrix::new(docs, classes.to_vec(), scores)?, gold))
}

/// Generates a bundle with gold test labels and pooled CV scores.
pub fn generate(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    if spec.n_classes == 0 || spec.n_train == 0 {
        return Err(Error::Config(
            "synthetic data needs at least one class and one training document".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.prevalence) {
        return Err(Error::Config(format!(
            "prevalence must lie in [0, 1], got {}",
            spec.prevalence
        )));
    }
    if !(spec.error_rate > 0.0 && spec.error_rate < 0.5) {
        return Err(Error::Config(format!(
            "error rate must lie in (0, 0.5), got {}",
            spec.error_rate
        )));
    }
    let mu = ((1.0 - spec.error_rate) / spec.error_rate).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = ids("c", spec.n_classes, ClassId::new);
    let (test, gold) = sample(&mut rng, ids("te", spec.n_test, DocId::new), &classes, spec, mu)?;
    let (cv_matrix, train_labels) = sample(&mut rng, ids("tr", spec.n_train, DocId::new), &classes, spec, mu)?;
    let cv = CvScores::new(cv_matrix, train_labels, 10)?;
    DatasetBundle::new(
        format!("synthetic-{}x{}-s{}", spec.n_test, spec.n_classes, spec.seed),
        test,
        Some(gold),
        None,
        Some(cv),
        None,
    )
}
