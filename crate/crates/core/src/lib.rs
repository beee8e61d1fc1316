//! Ranking of automatically classified documents for human validation,
//! and evaluation of such rankings by expected normalized error reduction.

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod formats;
pub mod model;
pub mod ranking;
pub mod report;
pub mod simulation;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{
    e_measure, f_beta, merge_tables, Averaging, ClassId, ContingencyTable, Decision, DocId, EffectivenessSpec,
    ErrorEvent, LabelSet, ScoreMatrix,
};
