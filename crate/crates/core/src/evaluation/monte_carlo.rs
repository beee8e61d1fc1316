use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ener_for_xis, error_reduction, normalized_error_reduction, residual_error_curve_by_index, EnerValue};
use crate::error::{Error, Result};
use crate::model::{Averaging, ClassId, EffectivenessSpec, LabelSet, ScoreMatrix};

/// Trials evaluated in parallel before being folded into the running sum.
const CHUNK: usize = 256;

/// Mean ER/NER of uniformly random rankings and the ENER of that mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub averaging: Averaging,
    pub trials: usize,
    pub seed: u64,
    pub mean_er: Vec<f64>,
    pub mean_ner: Vec<f64>,
    pub ener: Vec<EnerValue>,
    pub excluded_classes: Vec<ClassId>,
}

/// The random permutation used for trial `trial`. Each trial draws from its
/// own ChaCha stream, so results do not depend on thread scheduling.
pub(crate) fn random_order(n_docs: usize, seed: u64, trial: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut order: Vec<usize> = (0..n_docs).collect();
    order.shuffle(&mut rng);
    order
}

/// Estimates the expected ER, NER and ENER of a random ranking.
pub fn monte_carlo_random_ener(
    matrix: &ScoreMatrix,
    truth: &LabelSet,
    averaging: Averaging,
    spec: EffectivenessSpec,
    trials: usize,
    seed: u64,
    xis: &[f64],
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let n_docs = matrix.n_docs();
    let gold = truth.dense_for(matrix)?;

    // Validates the instance and yields the excluded classes, which do not
    // depend on the ranking.
    let identity: Vec<usize> = (0..n_docs).collect();
    let base = residual_error_curve_by_index(&identity, matrix, &gold, averaging, spec)?;
    let excluded = error_reduction(&base)?.excluded;

    let mut sum = vec![0.0; n_docs + 1];
    let mut start = 0;
    while start < trials {
        let end = (start + CHUNK).min(trials);
        let chunk: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|trial| {
                let order = random_order(n_docs, seed, trial as u64);
                let curve = residual_error_curve_by_index(&order, matrix, &gold, averaging, spec)?;
                Ok(error_reduction(&curve)?.values)
            })
            .collect::<Result<_>>()?;
        for er in &chunk {
            for (s, v) in sum.iter_mut().zip(er) {
                *s += v;
            }
        }
        start = end;
    }
    let mean_er: Vec<f64> = sum.iter().map(|s| s / trials as f64).collect();
    let mean_ner = normalized_error_reduction(&mean_er, n_docs);
    let ener = ener_for_xis(&mean_ner, n_docs, xis)?;
    Ok(MonteCarloReport {
        averaging,
        trials,
        seed,
        mean_er,
        mean_ner,
        ener,
        excluded_classes: excluded,
    })
}
