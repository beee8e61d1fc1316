//! Residual error, error reduction (ER), normalized error reduction (NER)
//! and its expectation under a persistence-based stopping model (ENER).

mod monte_carlo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    e_measure, merge_tables, Averaging, ClassId, ContingencyTable, DocId, EffectivenessSpec, ErrorEvent, LabelSet,
    ScoreMatrix,
};

pub use monte_carlo::{monte_carlo_random_ener, MonteCarloReport};

/// Residual error `E(n)` after the first `n` ranked documents have been
/// fully corrected, for `n = 0..=|Te|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub averaging: Averaging,
    pub values: Vec<f64>,
    /// Per-class curves (macro only), in matrix class order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_class: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<ClassId>,
}

impl ErrorCurve {
    pub fn n_docs(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

/// `ER(n)` values plus the classes left out of a macro average because
/// they had no initial error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReduction {
    pub averaging: Averaging,
    pub values: Vec<f64>,
    pub excluded: Vec<ClassId>,
}

/// Continuation probability of the simulated annotator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceModel {
    pub p: f64,
    /// Expected validated fraction this persistence was derived from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

impl PersistenceModel {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("persistence must lie in [0, 1], got {p}")));
        }
        Ok(Self { p, xi: None })
    }

    pub fn from_xi(xi: f64, n_docs: usize) -> Result<Self> {
        Ok(Self {
            p: persistence_from_xi(xi, n_docs)?,
            xi: Some(xi),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnerValue {
    pub xi: f64,
    pub p: f64,
    pub ener: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub averaging: Averaging,
    pub er: Vec<f64>,
    pub ner: Vec<f64>,
    pub ener: Vec<EnerValue>,
    pub excluded_classes: Vec<ClassId>,
}

/// Incrementally corrected per-class tables.
pub(crate) struct CorrectionTracker {
    n_classes: usize,
    decisions: Vec<bool>,
    gold: Vec<bool>,
    tables: Vec<ContingencyTable>,
}

impl CorrectionTracker {
    pub(crate) fn new(matrix: &ScoreMatrix, gold: Vec<bool>) -> Self {
        let n_classes = matrix.n_classes();
        let decisions: Vec<bool> = matrix.raw_scores().iter().map(|&s| s > 0.0).collect();
        let mut tables = vec![ContingencyTable::default(); n_classes];
        for (i, (&dec, &g)) in decisions.iter().zip(&gold).enumerate() {
            let event = ErrorEvent::of(
                if dec {
                    crate::model::Decision::Positive
                } else {
                    crate::model::Decision::Negative
                },
                g,
            );
            if event != ErrorEvent::Tn {
                tables[i % n_classes].record(event);
            }
        }
        Self {
            n_classes,
            decisions,
            gold,
            tables,
        }
    }

    /// Classes whose predicted label for `doc` is wrong.
    pub(crate) fn wrong_classes(&self, doc: usize) -> Vec<usize> {
        let base = doc * self.n_classes;
        (0..self.n_classes)
            .filter(|&c| self.decisions[base + c] != self.gold[base + c])
            .collect()
    }

    /// Corrects every wrong label of `doc`.
    pub(crate) fn correct(&mut self, doc: usize) {
        let base = doc * self.n_classes;
        for c in 0..self.n_classes {
            let i = base + c;
            if self.decisions[i] != self.gold[i] {
                let t = &mut self.tables[c];
                if self.decisions[i] {
                    t.fp -= 1.0;
                } else {
                    t.fn_ -= 1.0;
                    t.tp += 1.0;
                }
                self.decisions[i] = self.gold[i];
            }
        }
    }

    pub(crate) fn tables(&self) -> &[ContingencyTable] {
        &self.tables
    }

    pub(crate) fn is_perfect(&self) -> bool {
        self.decisions == self.gold
    }
}

fn check_permutation(order: &[usize], n_docs: usize) -> Result<()> {
    if order.len() != n_docs {
        return Err(Error::DataConsistency(format!(
            "ranking has {} entries for {} documents",
            order.len(),
            n_docs
        )));
    }
    let mut seen = vec![false; n_docs];
    for &d in order {
        if d >= n_docs || std::mem::replace(&mut seen[d], true) {
            return Err(Error::DataConsistency(
                "ranking must list every document exactly once".into(),
            ));
        }
    }
    Ok(())
}

/// Residual error curve for a ranking given as matrix positions.
pub fn residual_error_curve_by_index(
    order: &[usize],
    matrix: &ScoreMatrix,
    gold: &[bool],
    averaging: Averaging,
    spec: EffectivenessSpec,
) -> Result<ErrorCurve> {
    check_permutation(order, matrix.n_docs())?;
    if gold.len() != matrix.n_docs() * matrix.n_classes() {
        return Err(Error::DataConsistency(
            "gold labels do not match the score matrix".into(),
        ));
    }
    let mut tracker = CorrectionTracker::new(matrix, gold.to_vec());
    let n_classes = matrix.n_classes();
    let mut values = Vec::with_capacity(order.len() + 1);
    let mut per_class: Vec<Vec<f64>> = match averaging {
        Averaging::Macro => vec![Vec::with_capacity(order.len() + 1); n_classes],
        Averaging::Micro => Vec::new(),
    };
    let mut record = |tracker: &CorrectionTracker, values: &mut Vec<f64>| match averaging {
        Averaging::Macro => {
            let mut sum = 0.0;
            for (c, t) in tracker.tables().iter().enumerate() {
                let e = e_measure(t, spec);
                per_class[c].push(e);
                sum += e;
            }
            values.push(if n_classes == 0 { 0.0 } else { sum / n_classes as f64 });
        }
        Averaging::Micro => values.push(e_measure(&merge_tables(tracker.tables()), spec)),
    };
    record(&tracker, &mut values);
    for &d in order {
        tracker.correct(d);
        record(&tracker, &mut values);
    }
    Ok(ErrorCurve {
        averaging,
        values,
        classes: if averaging == Averaging::Macro {
            matrix.classes().to_vec()
        } else {
            Vec::new()
        },
        per_class,
    })
}

/// Residual error `E(n)` after correcting the documents of `ranking` in order.
pub fn residual_error_curve(
    ranking: &[DocId],
    predictions: &ScoreMatrix,
    truth: &LabelSet,
    averaging: Averaging,
    spec: EffectivenessSpec,
) -> Result<ErrorCurve> {
    let order = ranking
        .iter()
        .map(|d| predictions.doc_position(d))
        .collect::<Result<Vec<_>>>()?;
    let gold = truth.dense_for(predictions)?;
    residual_error_curve_by_index(&order, predictions, &gold, averaging, spec)
}

/// `ER(n) = (E(0) - E(n)) / E(0)`. Macro curves average the per-class
/// reductions over the classes with nonzero initial error.
pub fn error_reduction(curve: &ErrorCurve) -> Result<ErrorReduction> {
    match curve.averaging {
        Averaging::Micro => {
            let e0 = curve.values.first().copied().unwrap_or(0.0);
            if e0 <= 0.0 {
                return Err(Error::Degenerate(
                    "initial error is zero; error reduction is undefined".into(),
                ));
            }
            Ok(ErrorReduction {
                averaging: Averaging::Micro,
                values: curve.values.iter().map(|e| (e0 - e) / e0).collect(),
                excluded: Vec::new(),
            })
        }
        Averaging::Macro => {
            let mut included = Vec::new();
            let mut excluded = Vec::new();
            for (c, class_curve) in curve.per_class.iter().enumerate() {
                if class_curve.first().copied().unwrap_or(0.0) > 0.0 {
                    included.push(class_curve);
                } else if let Some(id) = curve.classes.get(c) {
                    excluded.push(id.clone());
                }
            }
            if included.is_empty() {
                return Err(Error::Degenerate("no class has a nonzero initial error".into()));
            }
            let k = included.len() as f64;
            let values = (0..curve.values.len())
                .map(|n| {
                    let sum: f64 = included.iter().map(|e| (e[0] - e[n]) / e[0]).sum();
                    sum / k
                })
                .collect();
            Ok(ErrorReduction {
                averaging: Averaging::Macro,
                values,
                excluded,
            })
        }
    }
}

/// `NER(n) = ER(n) - n / |Te|`.
pub fn normalized_error_reduction(er: &[f64], n_docs: usize) -> Vec<f64> {
    let total = n_docs as f64;
    er.iter()
        .enumerate()
        .map(|(n, v)| if n_docs == 0 { *v } else { v - n as f64 / total })
        .collect()
}

/// Persistence giving an expected validated fraction `xi`:
/// `p = 1 - 1 / (xi * |Te|)`.
pub fn persistence_from_xi(xi: f64, n_docs: usize) -> Result<f64> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::Config(format!("xi must lie in (0, 1], got {xi}")));
    }
    let expected_docs = xi * n_docs as f64;
    if expected_docs < 1.0 {
        return Err(Error::Config(format!(
            "xi = {xi} on {n_docs} documents expects fewer than one validation"
        )));
    }
    Ok(1.0 - 1.0 / expected_docs)
}

/// Probability `P_s(n)` that the annotator stops after exactly `n`
/// documents, `n = 1..=|Te|`.
pub fn stoppage_distribution(p: f64, n_docs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_docs);
    let mut reach = 1.0;
    for n in 1..=n_docs {
        out.push(if n == n_docs { reach } else { reach * (1.0 - p) });
        reach *= p;
    }
    out
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Expected NER under the stopping distribution. `ner[i]` is `NER(i + 1)`.
pub fn ener(ner: &[f64], p: f64) -> f64 {
    let n_docs = ner.len();
    let mut acc = CompensatedSum::default();
    let mut reach = 1.0;
    for (i, &v) in ner.iter().enumerate() {
        let stop = if i + 1 == n_docs { reach } else { reach * (1.0 - p) };
        acc.add(stop * v);
        reach *= p;
    }
    acc.total()
}

/// ENER for each requested expected fraction.
pub fn ener_for_xis(ner: &[f64], n_docs: usize, xis: &[f64]) -> Result<Vec<EnerValue>> {
    xis.iter()
        .map(|&xi| {
            let p = persistence_from_xi(xi, n_docs)?;
            Ok(EnerValue {
                xi,
                p,
                ener: ener(&ner[1..], p),
            })
        })
        .collect()
}

/// ER, NER and ENER for a ranking given as matrix positions.
pub fn evaluate_by_index(
    order: &[usize],
    matrix: &ScoreMatrix,
    gold: &[bool],
    averaging: Averaging,
    spec: EffectivenessSpec,
    xis: &[f64],
) -> Result<EvaluationReport> {
    let curve = residual_error_curve_by_index(order, matrix, gold, averaging, spec)?;
    report_from_curve(&curve, xis)
}

pub fn report_from_curve(curve: &ErrorCurve, xis: &[f64]) -> Result<EvaluationReport> {
    let er = error_reduction(curve)?;
    let n_docs = curve.n_docs();
    let ner = normalized_error_reduction(&er.values, n_docs);
    let ener = ener_for_xis(&ner, n_docs, xis)?;
    Ok(EvaluationReport {
        averaging: curve.averaging,
        er: er.values,
        ner,
        ener,
        excluded_classes: er.excluded,
    })
}

/// ER, NER and ENER of `ranking` against `truth`.
pub fn evaluate(
    ranking: &[DocId],
    predictions: &ScoreMatrix,
    truth: &LabelSet,
    averaging: Averaging,
    spec: EffectivenessSpec,
    xis: &[f64],
) -> Result<EvaluationReport> {
    let curve = residual_error_curve(ranking, predictions, truth, averaging, spec)?;
    report_from_curve(&curve, xis)
}
