//! Naive reference implementations used as test oracles. Everything here
//! is recomputed from scratch at every step, straight from the
//! definitions, and shares no code with the library beyond plain data.
#![allow(dead_code)]

use satc_core::dataset::DatasetBundle;
use satc_core::synthetic::{generate, SyntheticSpec};

/// Plain copy of an instance: scores and gold as nested vectors, with the
/// document ids used for tie-breaking.
#[derive(Debug, Clone)]
pub struct Plain {
    pub docs: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    pub gold: Vec<Vec<bool>>,
    /// Raw training counts (tp, fp, fn) per class and the set sizes.
    pub train: Vec<(f64, f64, f64)>,
    pub train_size: usize,
}

impl Plain {
    pub fn from_bundle(b: &DatasetBundle) -> Self {
        let gold_set = b.gold.as_ref().expect("gold labels");
        let docs: Vec<String> = b.test.docs().iter().map(|d| d.as_str().to_string()).collect();
        let scores = (0..b.test.n_docs()).map(|d| b.test.row(d).to_vec()).collect();
        let gold = b
            .test
            .docs()
            .iter()
            .map(|d| b.test.classes().iter().map(|c| gold_set.is_positive(d, c)).collect())
            .collect();
        let train = b
            .test
            .classes()
            .iter()
            .map(|c| {
                let t = b.estimates.training_counts(c).unwrap();
                (t.tp, t.fp, t.fn_)
            })
            .collect();
        Self {
            docs,
            scores,
            gold,
            train,
            train_size: b.estimates.train_size(),
        }
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_classes(&self) -> usize {
        self.train.len()
    }
}

pub fn f_measure(tp: f64, fp: f64, fn_: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = (1.0 + b2) * tp + fp + b2 * fn_;
    if denom == 0.0 {
        1.0
    } else {
        (1.0 + b2) * tp / denom
    }
}

pub fn misclass_prob(score: f64, sigma: f64) -> f64 {
    let e = (-(sigma * score.abs())).exp();
    e / (1.0 + e)
}

fn smooth(t: (f64, f64, f64)) -> (f64, f64, f64) {
    if t.0 < 1.0 || t.1 < 1.0 || t.2 < 1.0 {
        (t.0 + 1.0, t.1 + 1.0, t.2 + 1.0)
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveMethod {
    Baseline,
    UTheoretic,
    Oracle1,
    Oracle2,
}

#[derive(Debug, Clone, Copy)]
pub struct NaiveConfig {
    pub method: NaiveMethod,
    pub dynamic: bool,
    pub micro: bool,
    pub sigma: f64,
    pub beta: f64,
}

/// Counts of the current predictions against gold, per class.
fn true_counts(pred: &[Vec<bool>], gold: &[Vec<bool>], class: usize) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gold) {
        match (p[class], g[class]) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

/// `(g_fp, g_fn)` for a table: average gains for static rankings,
/// pointwise for dynamic ones.
fn gains_of(t: (f64, f64, f64), dynamic: bool, beta: f64) -> (f64, f64) {
    let (tp, fp, fn_) = t;
    let f = f_measure(tp, fp, fn_, beta);
    if dynamic {
        (
            f_measure(tp, fp - 1.0, fn_, beta) - f,
            f_measure(tp + 1.0, fp, fn_ - 1.0, beta) - f,
        )
    } else {
        (
            (f_measure(tp, 0.0, fn_, beta) - f) / fp,
            (f_measure(tp + fn_, fp, 0.0, beta) - f) / fn_,
        )
    }
}

/// Correction order of the naive annotator.
pub fn naive_order(inst: &Plain, cfg: NaiveConfig) -> Vec<usize> {
    let n = inst.n_docs();
    let k = inst.n_classes();
    let pred: Vec<Vec<bool>> = inst
        .scores
        .iter()
        .map(|r| r.iter().map(|&s| s > 0.0).collect())
        .collect();

    let prob = |d: usize, c: usize| -> f64 {
        match cfg.method {
            NaiveMethod::Oracle2 => {
                if pred[d][c] != inst.gold[d][c] {
                    1.0
                } else {
                    0.0
                }
            }
            _ => misclass_prob(inst.scores[d][c], cfg.sigma),
        }
    };

    // Raw starting tables.
    let mut tables: Vec<(f64, f64, f64)> = match cfg.method {
        NaiveMethod::Baseline | NaiveMethod::UTheoretic => {
            let ratio = n.max(1) as f64 / inst.train_size as f64;
            inst.train
                .iter()
                .map(|&(a, b, c)| (a * ratio, b * ratio, c * ratio))
                .collect()
        }
        NaiveMethod::Oracle1 | NaiveMethod::Oracle2 => (0..k).map(|c| true_counts(&pred, &inst.gold, c)).collect(),
    };
    let sum = |ts: &[(f64, f64, f64)]| {
        ts.iter()
            .fold((0.0, 0.0, 0.0), |acc, t| (acc.0 + t.0, acc.1 + t.1, acc.2 + t.2))
    };
    let mut global = smooth(sum(&tables));
    for t in tables.iter_mut() {
        *t = smooth(*t);
    }

    let gains = |tables: &[(f64, f64, f64)], global: (f64, f64, f64)| -> Vec<(f64, f64)> {
        if cfg.method == NaiveMethod::Baseline {
            return vec![(1.0, 1.0); k];
        }
        if cfg.micro {
            vec![gains_of(global, cfg.dynamic, cfg.beta); k]
        } else {
            tables.iter().map(|&t| gains_of(t, cfg.dynamic, cfg.beta)).collect()
        }
    };
    let utility = |d: usize, g: &[(f64, f64)]| -> f64 {
        let mut u = 0.0;
        for (c, &(gfp, gfn)) in g.iter().enumerate() {
            u += prob(d, c) * if pred[d][c] { gfp } else { gfn };
        }
        u
    };
    let better = |a: (usize, f64), b: (usize, f64)| a.1 > b.1 || (a.1 == b.1 && inst.docs[a.0] < inst.docs[b.0]);

    let dynamic = cfg.dynamic && cfg.method != NaiveMethod::Baseline;
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut g = gains(&tables, global);
    if !dynamic {
        let mut scored: Vec<(usize, f64)> = remaining.iter().map(|&d| (d, utility(d, &g))).collect();
        // Insertion sort by the comparison above.
        for i in 1..scored.len() {
            let mut j = i;
            while j > 0 && better(scored[j], scored[j - 1]) {
                scored.swap(j, j - 1);
                j -= 1;
            }
        }
        return scored.into_iter().map(|(d, _)| d).collect();
    }
    while !remaining.is_empty() {
        let mut best = (remaining[0], utility(remaining[0], &g));
        for &d in &remaining[1..] {
            let cand = (d, utility(d, &g));
            if better(cand, best) {
                best = cand;
            }
        }
        let d = best.0;
        remaining.retain(|&x| x != d);
        order.push(d);
        let mut changed = false;
        for c in 0..k {
            if pred[d][c] != inst.gold[d][c] {
                changed = true;
                let upd = |t: &mut (f64, f64, f64)| {
                    if pred[d][c] {
                        t.1 -= 1.0;
                    } else {
                        t.2 -= 1.0;
                        t.0 += 1.0;
                    }
                    *t = smooth(*t);
                };
                upd(&mut tables[c]);
                upd(&mut global);
            }
        }
        if changed {
            g = gains(&tables, global);
        }
    }
    order
}

/// Residual error after each prefix of `order`, recounting every table.
pub fn naive_error_curve(inst: &Plain, order: &[usize], micro: bool, beta: f64) -> Vec<f64> {
    let k = inst.n_classes();
    let mut pred: Vec<Vec<bool>> = inst
        .scores
        .iter()
        .map(|r| r.iter().map(|&s| s > 0.0).collect())
        .collect();
    let error = |pred: &[Vec<bool>]| -> f64 {
        let counts: Vec<(f64, f64, f64)> = (0..k).map(|c| true_counts(pred, &inst.gold, c)).collect();
        if micro {
            let t = counts
                .iter()
                .fold((0.0, 0.0, 0.0), |a, t| (a.0 + t.0, a.1 + t.1, a.2 + t.2));
            1.0 - f_measure(t.0, t.1, t.2, beta)
        } else {
            counts.iter().map(|t| 1.0 - f_measure(t.0, t.1, t.2, beta)).sum::<f64>() / k as f64
        }
    };
    let mut out = vec![error(&pred)];
    for &d in order {
        pred[d] = inst.gold[d].clone();
        out.push(error(&pred));
    }
    out
}

/// Per-class error curves, for macro ER with class exclusion.
pub fn naive_class_curves(inst: &Plain, order: &[usize], beta: f64) -> Vec<Vec<f64>> {
    let k = inst.n_classes();
    let mut pred: Vec<Vec<bool>> = inst
        .scores
        .iter()
        .map(|r| r.iter().map(|&s| s > 0.0).collect())
        .collect();
    let mut curves = vec![Vec::new(); k];
    let push = |pred: &[Vec<bool>], curves: &mut Vec<Vec<f64>>| {
        for (c, curve) in curves.iter_mut().enumerate() {
            let t = true_counts(pred, &inst.gold, c);
            curve.push(1.0 - f_measure(t.0, t.1, t.2, beta));
        }
    };
    push(&pred, &mut curves);
    for &d in order {
        pred[d] = inst.gold[d].clone();
        push(&pred, &mut curves);
    }
    curves
}

/// ER from scratch: micro on the aggregate curve, macro as the mean of
/// per-class reductions over classes with initial error.
pub fn naive_er(inst: &Plain, order: &[usize], micro: bool, beta: f64) -> Vec<f64> {
    if micro {
        let e = naive_error_curve(inst, order, true, beta);
        return e.iter().map(|v| (e[0] - v) / e[0]).collect();
    }
    let curves: Vec<Vec<f64>> = naive_class_curves(inst, order, beta)
        .into_iter()
        .filter(|c| c[0] > 0.0)
        .collect();
    (0..=order.len())
        .map(|n| curves.iter().map(|c| (c[0] - c[n]) / c[0]).sum::<f64>() / curves.len() as f64)
        .collect()
}

/// ENER by direct summation with `p^(n-1)` computed by `powi`.
pub fn naive_ener(er: &[f64], xi: f64) -> f64 {
    let n = er.len() - 1;
    let p = 1.0 - 1.0 / (xi * n as f64);
    (1..=n)
        .map(|k| {
            let ps = if k < n {
                p.powi(k as i32 - 1) * (1.0 - p)
            } else {
                p.powi(n as i32 - 1)
            };
            ps * (er[k] - k as f64 / n as f64)
        })
        .sum()
}

/// Small random instance with at least one misclassified label.
pub fn small_instance(seed: u64, max_docs: usize, max_classes: usize) -> DatasetBundle {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0.. {
        let spec = SyntheticSpec {
            n_test: rng.random_range(2..=max_docs),
            n_train: rng.random_range(5..=60),
            n_classes: rng.random_range(1..=max_classes),
            prevalence: rng.random_range(0.1..0.6),
            error_rate: rng.random_range(0.05..0.35),
            seed: seed.wrapping_mul(1000).wrapping_add(attempt),
        };
        let bundle = generate(&spec).unwrap();
        let gold = bundle.gold.as_ref().unwrap().dense_for(&bundle.test).unwrap();
        let errors = bundle
            .test
            .raw_scores()
            .iter()
            .zip(&gold)
            .filter(|(s, g)| (**s > 0.0) != **g)
            .count();
        if errors > 0 {
            return bundle;
        }
    }
    unreachable!()
}
