//! Shared domain types: identifiers, score matrices, gold labels,
//! contingency tables and the F-beta effectiveness function.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn validate_id(raw: &str) -> Result<()> {
    if raw.is_empty() || raw.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidId(raw.to_string()));
    }
    Ok(())
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl Into<String>) -> Result<Self> {
                let raw = raw.into();
                validate_id(&raw)?;
                Ok(Self(raw))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;
            fn try_from(raw: String) -> Result<Self> {
                Self::new(raw)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(
    /// Document identifier. Ordering is lexicographic and is the
    /// tie-breaker for every ranking in the crate.
    DocId
);
string_id!(
    /// Class identifier.
    ClassId
);

/// Binary decision taken by a classifier for one (document, class) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Positive,
    Negative,
}

impl Decision {
    /// Sign of the score; a score of exactly zero is a negative decision.
    pub fn from_score(score: f64) -> Self {
        if score > 0.0 {
            Decision::Positive
        } else {
            Decision::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Decision::Positive
    }

    pub fn sign(self) -> i8 {
        match self {
            Decision::Positive => 1,
            Decision::Negative => -1,
        }
    }
}

/// The four outcomes of a binary decision against the gold label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorEvent {
    Tp,
    Fp,
    Fn,
    Tn,
}

impl ErrorEvent {
    pub fn of(decision: Decision, gold_positive: bool) -> Self {
        match (decision, gold_positive) {
            (Decision::Positive, true) => ErrorEvent::Tp,
            (Decision::Positive, false) => ErrorEvent::Fp,
            (Decision::Negative, true) => ErrorEvent::Fn,
            (Decision::Negative, false) => ErrorEvent::Tn,
        }
    }

    pub fn is_error(self) -> bool {
        matches!(self, ErrorEvent::Fp | ErrorEvent::Fn)
    }
}

/// Dense (document x class) matrix of signed classifier scores.
///
/// The sign of a score is the decision, its magnitude the confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    docs: Vec<DocId>,
    classes: Vec<ClassId>,
    scores: Vec<f64>,
    doc_index: HashMap<DocId, usize>,
    class_index: HashMap<ClassId, usize>,
}

impl ScoreMatrix {
    /// `scores` is row-major: `scores[d * classes.len() + c]`.
    pub fn new(docs: Vec<DocId>, classes: Vec<ClassId>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != docs.len() * classes.len() {
            return Err(Error::DataConsistency(format!(
                "expected {} scores for {} documents x {} classes, got {}",
                docs.len() * classes.len(),
                docs.len(),
                classes.len(),
                scores.len()
            )));
        }
        let doc_index = index_unique(&docs, |d| Error::DataConsistency(format!("duplicate document {d}")))?;
        let class_index = index_unique(&classes, |c| Error::DataConsistency(format!("duplicate class {c}")))?;
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            let n = classes.len();
            return Err(Error::DataConsistency(format!(
                "non-finite score for ({}, {})",
                docs[pos / n],
                classes[pos % n]
            )));
        }
        Ok(Self {
            docs,
            classes,
            scores,
            doc_index,
            class_index,
        })
    }

    /// Builds a matrix from sparse entries. Documents and classes keep
    /// their order of first appearance; every pair must occur exactly once.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (DocId, ClassId, f64)>,
    {
        let mut docs = Vec::new();
        let mut classes = Vec::new();
        let mut doc_index = HashMap::new();
        let mut class_index = HashMap::new();
        let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
        for (doc, class, score) in entries {
            let d = *doc_index.entry(doc.clone()).or_insert_with(|| {
                docs.push(doc.clone());
                docs.len() - 1
            });
            let c = *class_index.entry(class.clone()).or_insert_with(|| {
                classes.push(class.clone());
                classes.len() - 1
            });
            if cells.insert((d, c), score).is_some() {
                return Err(Error::DataConsistency(format!("duplicate score for ({doc}, {class})")));
            }
        }
        let mut scores = vec![0.0; docs.len() * classes.len()];
        for d in 0..docs.len() {
            for c in 0..classes.len() {
                match cells.get(&(d, c)) {
                    Some(s) => scores[d * classes.len() + c] = *s,
                    None => {
                        return Err(Error::DataConsistency(format!(
                            "missing score for ({}, {})",
                            docs[d], classes[c]
                        )))
                    }
                }
            }
        }
        Self::new(docs, classes, scores)
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn docs(&self) -> &[DocId] {
        &self.docs
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn doc_position(&self, doc: &DocId) -> Result<usize> {
        self.doc_index
            .get(doc)
            .copied()
            .ok_or_else(|| Error::UnknownDocument(doc.to_string()))
    }

    pub fn class_position(&self, class: &ClassId) -> Result<usize> {
        self.class_index
            .get(class)
            .copied()
            .ok_or_else(|| Error::UnknownClass(class.to_string()))
    }

    pub fn score(&self, doc: usize, class: usize) -> f64 {
        self.scores[doc * self.classes.len() + class]
    }

    pub fn score_of(&self, doc: &DocId, class: &ClassId) -> Result<f64> {
        Ok(self.score(self.doc_position(doc)?, self.class_position(class)?))
    }

    pub fn decision(&self, doc: usize, class: usize) -> Decision {
        Decision::from_score(self.score(doc, class))
    }

    pub fn confidence(&self, doc: usize, class: usize) -> f64 {
        self.score(doc, class).abs()
    }

    pub fn row(&self, doc: usize) -> &[f64] {
        let n = self.classes.len();
        &self.scores[doc * n..(doc + 1) * n]
    }

    /// Row-major scores.
    pub fn raw_scores(&self) -> &[f64] {
        &self.scores
    }

    /// Restriction of the matrix to the given document positions, in that order.
    pub fn select_docs(&self, positions: &[usize]) -> Result<Self> {
        let mut docs = Vec::with_capacity(positions.len());
        let mut scores = Vec::with_capacity(positions.len() * self.classes.len());
        for &d in positions {
            docs.push(self.docs[d].clone());
            scores.extend_from_slice(self.row(d));
        }
        Self::new(docs, self.classes.clone(), scores)
    }

    /// Position of every document in ascending `DocId` order.
    pub fn doc_tie_ranks(&self) -> Vec<u32> {
        let mut order: Vec<usize> = (0..self.docs.len()).collect();
        order.sort_by(|&a, &b| self.docs[a].cmp(&self.docs[b]));
        let mut ranks = vec![0u32; self.docs.len()];
        for (rank, d) in order.into_iter().enumerate() {
            ranks[d] = rank as u32;
        }
        ranks
    }
}

fn index_unique<T, F>(items: &[T], dup: F) -> Result<HashMap<T, usize>>
where
    T: Clone + Eq + std::hash::Hash,
    F: Fn(&T) -> Error,
{
    let mut index = HashMap::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if index.insert(item.clone(), i).is_some() {
            return Err(dup(item));
        }
    }
    Ok(index)
}

/// Positive (document, class) pairs. Every absent pair is negative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    positives: BTreeSet<(DocId, ClassId)>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, doc: DocId, class: ClassId) -> bool {
        self.positives.insert((doc, class))
    }

    pub fn is_positive(&self, doc: &DocId, class: &ClassId) -> bool {
        // BTreeSet lookups need an owned tuple; clones are cheap relative to IO paths.
        self.positives.contains(&(doc.clone(), class.clone()))
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(DocId, ClassId)> {
        self.positives.iter()
    }

    /// Gold labels aligned with `matrix`, row-major. Fails if a positive
    /// pair names a document or class the matrix does not contain.
    pub fn dense_for(&self, matrix: &ScoreMatrix) -> Result<Vec<bool>> {
        let n = matrix.n_classes();
        let mut dense = vec![false; matrix.n_docs() * n];
        for (doc, class) in &self.positives {
            let d = matrix.doc_position(doc)?;
            let c = matrix.class_position(class)?;
            dense[d * n + c] = true;
        }
        Ok(dense)
    }

    /// Pairs whose document belongs to `matrix`; unknown classes are still rejected.
    pub fn restricted_to(&self, matrix: &ScoreMatrix) -> Result<Self> {
        let mut out = LabelSet::new();
        for (doc, class) in &self.positives {
            if matrix.doc_position(doc).is_ok() {
                matrix.class_position(class)?;
                out.insert(doc.clone(), class.clone());
            }
        }
        Ok(out)
    }
}

impl FromIterator<(DocId, ClassId)> for LabelSet {
    fn from_iter<I: IntoIterator<Item = (DocId, ClassId)>>(iter: I) -> Self {
        Self {
            positives: iter.into_iter().collect(),
        }
    }
}

/// Contingency cell counts. Counts are nonnegative reals: estimated
/// tables are rarely integral.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tn: Option<f64>,
}

impl ContingencyTable {
    pub fn new(tp: f64, fp: f64, fn_: f64) -> Result<Self> {
        let table = Self { tp, fp, fn_, tn: None };
        table.validate()?;
        Ok(table)
    }

    pub fn with_tn(mut self, tn: f64) -> Result<Self> {
        self.tn = Some(tn);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let cells = [
            ("tp", Some(self.tp)),
            ("fp", Some(self.fp)),
            ("fn", Some(self.fn_)),
            ("tn", self.tn),
        ];
        for (name, value) in cells {
            if let Some(v) = value {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidTable(format!("{name} = {v}")));
                }
            }
        }
        Ok(())
    }

    /// Cell-wise sum. `tn` survives only if both operands carry it.
    pub fn merged(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: match (self.tn, other.tn) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
        }
    }

    pub fn min_cell(&self) -> f64 {
        self.tp.min(self.fp).min(self.fn_)
    }

    /// Counts one outcome into the table.
    pub fn record(&mut self, event: ErrorEvent) {
        match event {
            ErrorEvent::Tp => self.tp += 1.0,
            ErrorEvent::Fp => self.fp += 1.0,
            ErrorEvent::Fn => self.fn_ += 1.0,
            ErrorEvent::Tn => *self.tn.get_or_insert(0.0) += 1.0,
        }
    }
}

/// Merges tables cell-wise (the micro-averaging table).
pub fn merge_tables<'a, I>(tables: I) -> ContingencyTable
where
    I: IntoIterator<Item = &'a ContingencyTable>,
{
    let mut iter = tables.into_iter();
    let first = iter.next().copied().unwrap_or_default();
    iter.fold(first, |acc, t| acc.merged(t))
}

/// How per-class outcomes are combined across classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-class measures.
    #[default]
    Macro,
    /// One measure on the cell-wise merged table.
    Micro,
}

impl Averaging {
    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::Macro => "macro",
            Averaging::Micro => "micro",
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Averaging {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            other => Err(Error::Config(format!("unknown averaging {other:?}"))),
        }
    }
}

/// Parameterisation of the effectiveness measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessSpec {
    pub beta: f64,
}

impl EffectivenessSpec {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive and finite, got {beta}")));
        }
        Ok(Self { beta })
    }
}

impl Default for EffectivenessSpec {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

/// F-beta on a contingency table. A table with no positives anywhere
/// (`tp = fp = fn = 0`) scores 1: every document was correctly rejected.
pub fn f_beta(table: &ContingencyTable, spec: EffectivenessSpec) -> f64 {
    let b2 = spec.beta * spec.beta;
    let weighted_tp = (1.0 + b2) * table.tp;
    let denom = weighted_tp + table.fp + b2 * table.fn_;
    if denom == 0.0 {
        1.0
    } else {
        weighted_tp / denom
    }
}

/// Classification error `1 - F_beta`.
pub fn e_measure(table: &ContingencyTable, spec: EffectivenessSpec) -> f64 {
    1.0 - f_beta(table, spec)
}
