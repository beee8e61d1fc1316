use serde::{Deserialize, Serialize};

use super::utility::{rank_with, ErrorModel};
use super::{gains_for_rule, GainModel, GainRule, RankingConfig, Strategy, TableSource};
use crate::error::{Error, Result};
use crate::estimation::{ml_estimate, observed_tables, smooth_on_demand, EstimatedTable};
use crate::model::{f_beta, merge_tables, Averaging, ClassId, ContingencyTable, DocId, EffectivenessSpec, ScoreMatrix};

/// Current contingency estimates: one table per class plus the merged
/// table, each kept smoothed on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableState {
    pub per_class: Vec<EstimatedTable>,
    pub global: EstimatedTable,
}

impl TableState {
    pub fn initial(matrix: &ScoreMatrix, source: &TableSource) -> Result<Self> {
        let raw: Vec<ContingencyTable> = match source {
            TableSource::Estimated(est) => matrix
                .classes()
                .iter()
                .map(|c| ml_estimate(est, c))
                .collect::<Result<_>>()?,
            TableSource::OracleCounts(labels) => observed_tables(matrix, labels)?,
        };
        let global = smooth_on_demand(&merge_tables(&raw));
        Ok(Self {
            per_class: raw.iter().map(smooth_on_demand).collect(),
            global,
        })
    }

    pub fn gains(&self, rule: GainRule, spec: EffectivenessSpec) -> Result<Vec<GainModel>> {
        gains_for_rule(rule, &self.per_class, &self.global, spec)
    }

    /// Records the correction of one label of `class`: a false positive
    /// leaves fp, a false negative moves from fn to tp. Tables are
    /// re-smoothed only if a cell dropped below one.
    pub fn apply_correction(&mut self, class: usize, was_positive: bool) {
        fn update(t: &mut EstimatedTable, was_positive: bool) {
            let mut table = t.table;
            if was_positive {
                table.fp = (table.fp - 1.0).max(0.0);
                if let Some(tn) = table.tn.as_mut() {
                    *tn += 1.0;
                }
            } else {
                table.fn_ = (table.fn_ - 1.0).max(0.0);
                table.tp += 1.0;
            }
            *t = smooth_on_demand(&table);
        }
        update(&mut self.per_class[class], was_positive);
        update(&mut self.global, was_positive);
    }

    /// Effectiveness implied by the current estimates.
    pub fn estimated_effectiveness(&self, averaging: Averaging, spec: EffectivenessSpec) -> f64 {
        match averaging {
            Averaging::Macro => {
                if self.per_class.is_empty() {
                    return 1.0;
                }
                let total: f64 = self.per_class.iter().map(|t| f_beta(&t.table, spec)).sum();
                total / self.per_class.len() as f64
            }
            Averaging::Micro => f_beta(&self.global.table, spec),
        }
    }
}

/// Resynchronise approximate utilities from scratch after this many
/// incremental gain updates.
const RESYNC_EVERY: u32 = 1024;
/// Relative band within which approximate utilities are treated as tied
/// and re-evaluated exactly.
const EXACT_BAND: f64 = 1e-9;

/// Argmax structure for the dynamic strategy.
///
/// `approx` tracks utilities through cheap incremental updates; the
/// winner is always confirmed with the exact class-ordered sum, so the
/// choice is identical to recomputing every utility from scratch.
#[derive(Debug, Clone)]
struct UtilityIndex {
    live: Vec<usize>,
    approx: Vec<f64>,
    exact: Vec<f64>,
    exact_epoch: Vec<u64>,
    epoch: u64,
    scale: f64,
    updates_since_resync: u32,
    live_pos: Vec<usize>,
    mass: Option<Vec<(f64, f64)>>,
    /// Class-major error probabilities split by error type, so a change
    /// in one class's gains is a contiguous sweep.
    fp_coef: Vec<f64>,
    fn_coef: Vec<f64>,
}

impl UtilityIndex {
    fn new(errors: &ErrorModel, gains: &[GainModel], micro: bool) -> Self {
        let n = errors.n_docs();
        let exact: Vec<f64> = (0..n).map(|d| errors.utility(d, gains)).collect();
        let scale = exact.iter().copied().fold(0.0, f64::max);
        let (mut fp_coef, mut fn_coef) = (Vec::new(), Vec::new());
        if !micro {
            let n_classes = errors.n_classes();
            fp_coef = vec![0.0; n * n_classes];
            fn_coef = vec![0.0; n * n_classes];
            for d in 0..n {
                for c in 0..n_classes {
                    let target = if errors.is_positive(d, c) {
                        &mut fp_coef
                    } else {
                        &mut fn_coef
                    };
                    target[c * n + d] = errors.error_probability(d, c);
                }
            }
        }
        Self {
            live: (0..n).collect(),
            approx: exact.clone(),
            exact,
            exact_epoch: vec![0; n],
            epoch: 0,
            scale,
            updates_since_resync: 0,
            live_pos: (0..n).collect(),
            mass: micro.then(|| (0..n).map(|d| errors.error_mass(d)).collect()),
            fp_coef,
            fn_coef,
        }
    }

    fn remove(&mut self, doc: usize) {
        let pos = self.live_pos[doc];
        if pos < self.live.len() && self.live[pos] == doc {
            self.live.swap_remove(pos);
            if let Some(&moved) = self.live.get(pos) {
                self.live_pos[moved] = pos;
            }
            self.live_pos[doc] = usize::MAX;
        }
    }

    fn on_gains_changed(&mut self, errors: &ErrorModel, old: &[GainModel], new: &[GainModel]) {
        self.epoch += 1;
        if let Some(mass) = &self.mass {
            let g = new.first().copied().unwrap_or(GainModel::UNIT);
            for &d in &self.live {
                let (fp, fn_) = mass[d];
                self.approx[d] = g.g_fp * fp + g.g_fn * fn_;
            }
        } else if self.updates_since_resync >= RESYNC_EVERY {
            for &d in &self.live {
                let u = errors.utility(d, new);
                self.approx[d] = u;
                self.exact[d] = u;
                self.exact_epoch[d] = self.epoch;
            }
            self.updates_since_resync = 0;
        } else {
            for (c, (o, n)) in old.iter().zip(new).enumerate() {
                if o == n {
                    continue;
                }
                let (d_fp, d_fn) = (n.g_fp - o.g_fp, n.g_fn - o.g_fn);
                let len = self.approx.len();
                let fp = &self.fp_coef[c * len..(c + 1) * len];
                let fn_ = &self.fn_coef[c * len..(c + 1) * len];
                // Validated documents are updated too; they are never read again.
                for ((a, p), q) in self.approx.iter_mut().zip(fp).zip(fn_) {
                    *a += p * d_fp + q * d_fn;
                }
                self.updates_since_resync += 1;
            }
        }
        for &d in &self.live {
            self.scale = self.scale.max(self.approx[d]);
        }
    }

    fn argmax(&mut self, errors: &ErrorModel, gains: &[GainModel], tie: &[u32]) -> Option<usize> {
        let top = self
            .live
            .iter()
            .map(|&d| self.approx[d])
            .fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return None;
        }
        let band = EXACT_BAND * self.scale.max(top.abs());
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.live.len() {
            let d = self.live[i];
            if self.approx[d] < top - band {
                continue;
            }
            if self.exact_epoch[d] != self.epoch {
                self.exact[d] = errors.utility(d, gains);
                self.exact_epoch[d] = self.epoch;
            }
            let u = self.exact[d];
            let better = match best {
                None => true,
                Some((b, bu)) => u > bu || (u == bu && tie[d] < tie[b]),
            };
            if better {
                best = Some((d, u));
            }
        }
        best.map(|(d, _)| d)
    }
}

#[derive(Debug, Clone)]
enum Selector {
    Fixed { order: Vec<usize>, cursor: usize },
    Dynamic(UtilityIndex),
}

/// Mutable state of an annotator working down a ranking.
///
/// `next` serves a document (idempotently until a correction is applied);
/// `apply_correction` records which of its labels were wrong. Under the
/// dynamic strategy gains are recomputed after every correction and the
/// next document is the best remaining one; probabilities never change.
#[derive(Debug, Clone)]
pub struct ValidationSession {
    docs: Vec<DocId>,
    classes: Vec<ClassId>,
    errors: ErrorModel,
    tie: Vec<u32>,
    rule: GainRule,
    strategy: Strategy,
    spec: EffectivenessSpec,
    tables: TableState,
    gains: Vec<GainModel>,
    validated: Vec<bool>,
    remaining: usize,
    served: Option<usize>,
    selector: Selector,
    history: Vec<usize>,
}

impl ValidationSession {
    pub fn new(matrix: &ScoreMatrix, config: &RankingConfig) -> Result<Self> {
        let errors = ErrorModel::new(matrix, &config.prob_source)?;
        let tables = TableState::initial(matrix, &config.table_source)?;
        let gains = tables.gains(config.gain_rule, config.spec)?;
        let strategy = config.effective_strategy();
        let selector = match strategy {
            Strategy::Static => Selector::Fixed {
                order: rank_with(&errors, &gains, matrix)
                    .into_iter()
                    .map(|r| r.index)
                    .collect(),
                cursor: 0,
            },
            Strategy::Dynamic => Selector::Dynamic(UtilityIndex::new(&errors, &gains, config.gain_rule.is_micro())),
        };
        Ok(Self {
            docs: matrix.docs().to_vec(),
            classes: matrix.classes().to_vec(),
            tie: matrix.doc_tie_ranks(),
            errors,
            rule: config.gain_rule,
            strategy,
            spec: config.spec,
            tables,
            gains,
            validated: vec![false; matrix.n_docs()],
            remaining: matrix.n_docs(),
            served: None,
            selector,
            history: Vec::with_capacity(matrix.n_docs()),
        })
    }

    /// The document to validate next, or `None` once every document has
    /// been validated. Repeated calls return the same document until a
    /// correction for it is applied.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<usize> {
        if let Some(d) = self.served {
            return Some(d);
        }
        let pick = match &mut self.selector {
            Selector::Fixed { order, cursor } => order.get(*cursor).copied(),
            Selector::Dynamic(index) => index.argmax(&self.errors, &self.gains, &self.tie),
        };
        self.served = pick;
        pick
    }

    pub fn next_doc(&mut self) -> Option<&DocId> {
        self.next().map(|d| &self.docs[d])
    }

    /// Records the validation of the served document; `flipped` lists the
    /// classes whose predicted label was wrong.
    pub fn apply_correction(&mut self, doc: usize, flipped: &[usize]) -> Result<()> {
        match self.served {
            Some(d) if d == doc => {}
            Some(d) => {
                return Err(Error::Protocol(format!(
                    "document {} is not the served document {}",
                    self.docs.get(doc).map(DocId::as_str).unwrap_or("?"),
                    self.docs[d]
                )))
            }
            None => return Err(Error::Protocol("no document has been served".into())),
        }
        let mut classes: Vec<usize> = flipped.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if let Some(&bad) = classes.iter().find(|&&c| c >= self.classes.len()) {
            return Err(Error::UnknownClass(format!("#{bad}")));
        }

        for &c in &classes {
            self.tables.apply_correction(c, self.errors.is_positive(doc, c));
        }
        self.validated[doc] = true;
        self.remaining -= 1;
        self.served = None;
        self.history.push(doc);

        match &mut self.selector {
            Selector::Fixed { cursor, .. } => *cursor += 1,
            Selector::Dynamic(index) => {
                index.remove(doc);
                if !classes.is_empty() {
                    let new_gains = self.tables.gains(self.rule, self.spec)?;
                    if new_gains != self.gains {
                        index.on_gains_changed(&self.errors, &self.gains, &new_gains);
                        self.gains = new_gains;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply_correction_ids(&mut self, doc: &DocId, flipped: &[ClassId]) -> Result<()> {
        let d = self
            .docs
            .iter()
            .position(|x| x == doc)
            .ok_or_else(|| Error::UnknownDocument(doc.to_string()))?;
        let classes = flipped
            .iter()
            .map(|c| {
                self.classes
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| Error::UnknownClass(c.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        self.apply_correction(d, &classes)
    }

    pub fn docs(&self) -> &[DocId] {
        &self.docs
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn gain_rule(&self) -> GainRule {
        self.rule
    }

    pub fn tables(&self) -> &TableState {
        &self.tables
    }

    pub fn gains(&self) -> &[GainModel] {
        &self.gains
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining == 0
    }

    pub fn is_validated(&self, doc: usize) -> bool {
        self.validated[doc]
    }

    /// Documents validated so far, in order.
    pub fn history(&self) -> &[usize] {
        &self.history
    }

    pub fn errors(&self) -> &ErrorModel {
        &self.errors
    }

    /// Utility of `doc` under the current gains.
    pub fn utility(&self, doc: usize) -> f64 {
        self.errors.utility(doc, &self.gains)
    }

    pub fn estimated_effectiveness(&self, averaging: Averaging) -> f64 {
        self.tables.estimated_effectiveness(averaging, self.spec)
    }
}

/// Best remaining document of a dynamic session.
pub fn dynamic_next(session: &mut ValidationSession) -> Option<DocId> {
    session.next_doc().cloned()
}

/// Applies the annotator's verdict on the served document.
pub fn dynamic_apply_correction(session: &mut ValidationSession, doc: &DocId, flipped: &[ClassId]) -> Result<()> {
    session.apply_correction_ids(doc, flipped)
}
