//! Replays gold labels as an infallible annotator over a ranking strategy
//! and evaluates the resulting correction order.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationModel;
use crate::error::{Error, Result};
use crate::estimation::TrainingEstimates;
use crate::evaluation::{
    report_from_curve, residual_error_curve_by_index, CorrectionTracker, EnerValue, ErrorCurve, EvaluationReport,
};
use crate::model::{Averaging, DocId, EffectivenessSpec, LabelSet, ScoreMatrix};
use crate::ranking::{rank_static, GainRule, Method, RankingConfig, Strategy, ValidationSession};

/// Everything needed to build the ranking configuration of a named method
/// on any subset of the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSetup {
    pub method: Method,
    pub strategy: Strategy,
    /// Selects macro or micro gains.
    pub averaging: Averaging,
    pub spec: EffectivenessSpec,
    pub calibration: CalibrationModel,
    /// Training estimates; their test size is replaced by the size of the
    /// simulated test set.
    pub estimates: TrainingEstimates,
}

impl MethodSetup {
    pub fn config_for(&self, test: &ScoreMatrix, gold: &LabelSet) -> Result<RankingConfig> {
        RankingConfig::for_method(
            self.method,
            self.strategy,
            self.averaging,
            self.spec,
            self.calibration,
            self.estimates.with_test_size(test.n_docs().max(1))?,
            Some(gold),
        )
    }
}

/// Wall-clock seconds per phase. Not part of any persisted report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    /// Static: computing the ranking. Dynamic: building the session.
    pub rank_seconds: f64,
    /// Static: sweeping the ranking. Dynamic: the select/correct loop.
    pub sweep_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub strategy: Strategy,
    pub gain_rule: GainRule,
    pub visit_order: Vec<DocId>,
    /// Macro then micro.
    pub curves: Vec<ErrorCurve>,
    /// Macro then micro.
    pub reports: Vec<EvaluationReport>,
    pub timing: PhaseTiming,
}

impl SimulationRun {
    pub fn report(&self, averaging: Averaging) -> &EvaluationReport {
        &self.reports[averaging_slot(averaging)]
    }
}

fn averaging_slot(averaging: Averaging) -> usize {
    match averaging {
        Averaging::Macro => 0,
        Averaging::Micro => 1,
    }
}

/// Correction order of a simulated annotator, as matrix positions.
pub fn visit_order(matrix: &ScoreMatrix, gold: &[bool], config: &RankingConfig) -> Result<(Vec<usize>, PhaseTiming)> {
    let start = Instant::now();
    match config.effective_strategy() {
        Strategy::Static => {
            let ranking = rank_static(matrix, config)?;
            let rank_seconds = start.elapsed().as_secs_f64();
            let order: Vec<usize> = ranking.into_iter().map(|r| r.index).collect();
            Ok((
                order,
                PhaseTiming {
                    rank_seconds,
                    sweep_seconds: 0.0,
                },
            ))
        }
        Strategy::Dynamic => {
            let mut session = ValidationSession::new(matrix, config)?;
            let rank_seconds = start.elapsed().as_secs_f64();
            let sweep = Instant::now();
            let mut tracker = CorrectionTracker::new(matrix, gold.to_vec());
            let mut order = Vec::with_capacity(matrix.n_docs());
            while let Some(d) = session.next() {
                let flips = tracker.wrong_classes(d);
                tracker.correct(d);
                session.apply_correction(d, &flips)?;
                order.push(d);
            }
            debug_assert!(tracker.is_perfect());
            Ok((
                order,
                PhaseTiming {
                    rank_seconds,
                    sweep_seconds: sweep.elapsed().as_secs_f64(),
                },
            ))
        }
    }
}

/// Runs the full protocol under an explicit ranking configuration.
pub fn simulate_config(
    matrix: &ScoreMatrix,
    gold: &LabelSet,
    config: &RankingConfig,
    xis: &[f64],
) -> Result<SimulationRun> {
    let dense = gold.dense_for(matrix)?;
    let (order, mut timing) = visit_order(matrix, &dense, config)?;
    let sweep = Instant::now();
    let mut curves = Vec::with_capacity(2);
    let mut reports = Vec::with_capacity(2);
    for averaging in [Averaging::Macro, Averaging::Micro] {
        let curve = residual_error_curve_by_index(&order, matrix, &dense, averaging, config.spec)?;
        reports.push(report_from_curve(&curve, xis)?);
        curves.push(curve);
    }
    if config.effective_strategy() == Strategy::Static {
        timing.sweep_seconds = sweep.elapsed().as_secs_f64();
    }
    Ok(SimulationRun {
        strategy: config.effective_strategy(),
        gain_rule: config.gain_rule,
        visit_order: order.iter().map(|&d| matrix.docs()[d].clone()).collect(),
        curves,
        reports,
        timing,
    })
}

/// Runs the full protocol for a named method.
pub fn simulate(matrix: &ScoreMatrix, gold: &LabelSet, setup: &MethodSetup, xis: &[f64]) -> Result<SimulationRun> {
    let config = setup.config_for(matrix, gold)?;
    simulate_config(matrix, gold, &config, xis)
}

/// Curves averaged across parts on a common fraction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedCurves {
    pub averaging: Averaging,
    /// Grid fractions `i / m`, `m` the smallest part size.
    pub fractions: Vec<f64>,
    pub er: Vec<f64>,
    pub ner: Vec<f64>,
    /// Mean over parts of each part's ENER.
    pub ener: Vec<EnerValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRun {
    pub seed: u64,
    pub parts: Vec<Vec<DocId>>,
    pub runs: Vec<SimulationRun>,
    /// Macro then micro.
    pub averaged: Vec<AveragedCurves>,
}

/// Seeded partition of `n` positions into `k` near-equal parts; each part
/// keeps the original relative order.
pub fn random_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Config("the number of parts must be positive".into()));
    }
    if k > n {
        return Err(Error::Config(format!("cannot split {n} documents into {k} parts")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut rng);
    let (base, extra) = (n / k, n % k);
    let mut parts = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        let mut part = shuffled[start..start + len].to_vec();
        part.sort_unstable();
        parts.push(part);
        start += len;
    }
    Ok(parts)
}

/// Value of `curve` (indexed by `0..=len`) at fraction `f`, linearly interpolated.
pub fn interpolate_at_fraction(curve: &[f64], f: f64) -> f64 {
    interpolate_at(curve, f * (curve.len() - 1) as f64)
}

/// Value of `curve` at grid point `i` of `m`; exact when `m` divides the
/// curve length.
fn interpolate_on_grid(curve: &[f64], i: usize, m: usize) -> f64 {
    let len = curve.len() - 1;
    if (i * len).is_multiple_of(m) {
        return curve[i * len / m];
    }
    interpolate_at(curve, (i * len) as f64 / m as f64)
}

fn interpolate_at(curve: &[f64], x: f64) -> f64 {
    let len = curve.len() - 1;
    let lo = (x.floor() as usize).min(len);
    let hi = (x.ceil() as usize).min(len);
    if lo == hi {
        return curve[lo];
    }
    let w = x - lo as f64;
    curve[lo] * (1.0 - w) + curve[hi] * w
}

/// Simulates each of `k` random parts of the test set independently and
/// averages the results.
pub fn split_simulate(
    matrix: &ScoreMatrix,
    gold: &LabelSet,
    setup: &MethodSetup,
    k: usize,
    seed: u64,
    xis: &[f64],
) -> Result<SplitRun> {
    let partition = random_partition(matrix.n_docs(), k, seed)?;
    let runs: Vec<SimulationRun> = partition
        .par_iter()
        .map(|positions| {
            let part = matrix.select_docs(positions)?;
            let part_gold = gold.restricted_to(&part)?;
            simulate(&part, &part_gold, setup, xis)
        })
        .collect::<Result<_>>()?;

    let grid_points = partition.iter().map(Vec::len).min().unwrap_or(0);
    let fractions: Vec<f64> = (0..=grid_points).map(|i| i as f64 / grid_points as f64).collect();
    let averaged = [Averaging::Macro, Averaging::Micro]
        .into_iter()
        .map(|averaging| {
            let slot = averaging_slot(averaging);
            let mean_at = |pick: fn(&EvaluationReport) -> &Vec<f64>| -> Vec<f64> {
                (0..=grid_points)
                    .map(|i| {
                        let total: f64 = runs
                            .iter()
                            .map(|r| interpolate_on_grid(pick(&r.reports[slot]), i, grid_points))
                            .sum();
                        total / runs.len() as f64
                    })
                    .collect()
            };
            let ener = xis
                .iter()
                .enumerate()
                .map(|(i, &xi)| {
                    let (p_sum, e_sum) = runs.iter().fold((0.0, 0.0), |(p, e), r| {
                        let v = &r.reports[slot].ener[i];
                        (p + v.p, e + v.ener)
                    });
                    EnerValue {
                        xi,
                        p: p_sum / runs.len() as f64,
                        ener: e_sum / runs.len() as f64,
                    }
                })
                .collect();
            AveragedCurves {
                averaging,
                fractions: fractions.clone(),
                er: mean_at(|r| &r.er),
                ner: mean_at(|r| &r.ner),
                ener,
            }
        })
        .collect();

    Ok(SplitRun {
        seed,
        parts: partition
            .iter()
            .map(|p| p.iter().map(|&d| matrix.docs()[d].clone()).collect())
            .collect(),
        runs,
        averaged,
    })
}
