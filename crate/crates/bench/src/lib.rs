//! Shared fixtures for the benchmarks.

use satc_core::calibration::CalibrationModel;
use satc_core::dataset::DatasetBundle;
use satc_core::ranking::{Method, RankingConfig, Strategy};
use satc_core::synthetic::{generate, SyntheticSpec};
use satc_core::{Averaging, EffectivenessSpec};

/// A sparse multi-label instance: low prevalence, few errors.
pub fn instance(n_test: usize, n_classes: usize) -> DatasetBundle {
    generate(&SyntheticSpec {
        n_test,
        n_train: n_test / 5 + 100,
        n_classes,
        prevalence: 0.05,
        error_rate: 0.05,
        seed: 42,
    })
    .expect("valid synthetic spec")
}

pub fn config(bundle: &DatasetBundle, method: Method, strategy: Strategy, averaging: Averaging) -> RankingConfig {
    RankingConfig::for_method(
        method,
        strategy,
        averaging,
        EffectivenessSpec::new(1.0).expect("beta 1"),
        CalibrationModel::new(1.0).expect("positive sigma"),
        bundle.estimates.clone(),
        bundle.gold.as_ref(),
    )
    .expect("valid method config")
}
