use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use satc_core::calibration::CalibrationModel;
use satc_core::dataset::DatasetBundle;
use satc_core::estimation::TrainingEstimates;
use satc_core::ranking::{Method, RankingConfig, Strategy};
use satc_core::simulation::visit_order;
use satc_core::synthetic::{generate, SyntheticSpec};
use satc_core::{Averaging, ClassId, ContingencyTable, DocId, EffectivenessSpec, LabelSet, ScoreMatrix};
use satc_service::api::{Created, Metrics, Next, Status, Validated};
use satc_service::{router, SessionStore, StoreConfig, TOKEN_HEADER};

struct Harness {
    _dir: tempfile::TempDir,
    config: StoreConfig,
    app: Router,
}

impl Harness {
    fn new(bundles: &[(&str, DatasetBundle)]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("bundles");
        for (name, bundle) in bundles {
            bundle.save(&root.join(name)).unwrap();
        }
        let config = StoreConfig {
            bundle_root: root,
            data_dir: dir.path().join("data"),
            ttl: Duration::from_secs(3600),
        };
        let app = router(Arc::new(SessionStore::new(config.clone()).unwrap()));
        Self { _dir: dir, config, app }
    }

    /// Same data directory, empty caches: what a restarted process sees.
    fn restart(&mut self) {
        self.app = router(Arc::new(SessionStore::new(self.config.clone()).unwrap()));
    }

    async fn call(&self, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header(TOKEN_HEADER, t);
        }
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(serde_json::to_vec(&v).unwrap())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }

    async fn create(&self, body: Value) -> Created {
        let (status, v) = self.call("POST", "/sessions", None, Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        serde_json::from_value(v).unwrap()
    }

    async fn next(&self, s: &Created) -> Next {
        let (status, v) = self
            .call("GET", &format!("/sessions/{}/next", s.session_id), Some(&s.token), None)
            .await;
        assert_eq!(status, StatusCode::OK, "{v}");
        serde_json::from_value(v).unwrap()
    }

    async fn validate(&self, s: &Created, doc: &DocId, flipped: &[ClassId]) -> (StatusCode, Value) {
        self.call(
            "POST",
            &format!("/sessions/{}/validate", s.session_id),
            Some(&s.token),
            Some(json!({ "doc": doc, "flipped": flipped })),
        )
        .await
    }

    async fn metrics(&self, s: &Created) -> Metrics {
        let (status, v) = self
            .call("GET", &format!("/sessions/{}/metrics", s.session_id), None, None)
            .await;
        assert_eq!(status, StatusCode::OK, "{v}");
        serde_json::from_value(v).unwrap()
    }
}

fn synthetic(n_test: usize, seed: u64) -> DatasetBundle {
    generate(&SyntheticSpec {
        n_test,
        n_train: 60,
        n_classes: 3,
        prevalence: 0.3,
        error_rate: 0.2,
        seed,
    })
    .unwrap()
}

/// One class, every document scored negative and actually positive, with
/// training counts tp=10, fp=30, fn=20 on a same-size training set.
fn all_false_negatives(n: usize) -> DatasetBundle {
    let class = ClassId::new("c").unwrap();
    let docs: Vec<DocId> = (0..n).map(|i| DocId::new(format!("d{i:02}")).unwrap()).collect();
    let mut gold = LabelSet::new();
    for d in &docs {
        gold.insert(d.clone(), class.clone());
    }
    let matrix = ScoreMatrix::new(docs, vec![class.clone()], vec![-1.0; n]).unwrap();
    let table = ContingencyTable::new(10.0, 30.0, 20.0).unwrap();
    let est = TrainingEstimates::new(BTreeMap::from([(class, table)]), n, n).unwrap();
    DatasetBundle::new("fn", matrix, Some(gold), Some(est), None, Some(1.0)).unwrap()
}

/// Classes of `doc` whose predicted label disagrees with the gold label.
fn wrong_classes(bundle: &DatasetBundle, doc: &DocId) -> Vec<ClassId> {
    let gold = bundle.gold.as_ref().unwrap();
    let d = bundle.test.doc_position(doc).unwrap();
    bundle
        .test
        .classes()
        .iter()
        .enumerate()
        .filter(|(c, class)| bundle.test.decision(d, *c).is_positive() != gold.is_positive(doc, class))
        .map(|(_, class)| class.clone())
        .collect()
}

fn log_lines(dir: &Path, id: &str) -> usize {
    std::fs::read_to_string(dir.join("sessions").join(format!("{id}.jsonl")))
        .unwrap()
        .lines()
        .count()
}

#[tokio::test]
async fn static_session_starts_active() {
    let h = Harness::new(&[("syn", synthetic(12, 1))]);
    let s = h.create(json!({ "bundle": "syn", "strategy": "static" })).await;
    assert_eq!(s.status, Status::Active);
    assert_eq!(s.n_docs, 12);
    assert_eq!(s.classes.len(), 3);
    let n = h.next(&s).await;
    assert_eq!(n.remaining, 12);
    let doc = n.document.unwrap();
    assert_eq!(doc.labels.len(), 3);
    for l in &doc.labels {
        assert!((0.0..=0.5).contains(&l.misclassification_probability));
    }
}

#[tokio::test]
async fn empty_bundle_is_exhausted_at_creation() {
    let class = ClassId::new("c").unwrap();
    let matrix = ScoreMatrix::new(vec![], vec![class.clone()], vec![]).unwrap();
    let table = ContingencyTable::new(3.0, 2.0, 1.0).unwrap();
    let est = TrainingEstimates::new(BTreeMap::from([(class, table)]), 10, 1).unwrap();
    let bundle = DatasetBundle::new("empty", matrix, None, Some(est), None, Some(1.0)).unwrap();
    let h = Harness::new(&[("empty", bundle)]);
    let s = h.create(json!({ "bundle": "empty" })).await;
    assert_eq!(s.status, Status::Exhausted);
    let n = h.next(&s).await;
    assert_eq!(n.status, Status::Exhausted);
    assert!(n.document.is_none());
    assert_eq!(n.remaining, 0);
}

#[tokio::test]
async fn sessions_are_independent() {
    let h = Harness::new(&[("syn", synthetic(10, 2))]);
    let a = h.create(json!({ "bundle": "syn" })).await;
    let b = h.create(json!({ "bundle": "syn" })).await;
    assert_ne!(a.session_id, b.session_id);
    let doc = h.next(&a).await.document.unwrap().doc;
    let (status, _) = h.validate(&a, &doc, &[]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h.metrics(&a).await.validated, 1);
    assert_eq!(h.metrics(&b).await.validated, 0);
    assert_eq!(h.next(&b).await.remaining, 10);
    // Tokens do not cross sessions.
    let (status, _) = h
        .call("GET", &format!("/sessions/{}/next", b.session_id), Some(&a.token), None)
        .await;
    assert_eq!(status, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn next_is_idempotent() {
    let h = Harness::new(&[("syn", synthetic(10, 3))]);
    let s = h.create(json!({ "bundle": "syn" })).await;
    let first = h.next(&s).await.document.unwrap();
    let second = h.next(&s).await.document.unwrap();
    assert_eq!(first.doc, second.doc);
    assert_eq!(first.utility, second.utility);
    assert_eq!(h.metrics(&s).await.validated, 0);
}

#[tokio::test]
async fn driving_with_gold_follows_the_simulated_order() {
    for (seed, method) in [(4, "utheoretic"), (5, "oracle1"), (6, "oracle2"), (7, "baseline")] {
        let bundle = synthetic(4, seed);
        let h = Harness::new(&[("syn", bundle.clone())]);
        let s = h.create(json!({ "bundle": "syn", "method": method })).await;

        let gold = bundle.gold.as_ref().unwrap();
        let config = RankingConfig::for_method(
            method.parse::<Method>().unwrap(),
            Strategy::Dynamic,
            Averaging::Macro,
            EffectivenessSpec::new(1.0).unwrap(),
            CalibrationModel::new(s.config.sigma).unwrap(),
            bundle.estimates.clone(),
            Some(gold),
        )
        .unwrap();
        let dense = gold.dense_for(&bundle.test).unwrap();
        let (expected, _) = visit_order(&bundle.test, &dense, &config).unwrap();
        let expected: Vec<DocId> = expected.into_iter().map(|d| bundle.test.docs()[d].clone()).collect();

        let mut seen = Vec::new();
        while let Some(view) = h.next(&s).await.document {
            let flipped = wrong_classes(&bundle, &view.doc);
            let (status, v) = h.validate(&s, &view.doc, &flipped).await;
            assert_eq!(status, StatusCode::OK, "{v}");
            seen.push(view.doc);
        }
        assert_eq!(seen, expected, "method {method}");
        assert_eq!(h.next(&s).await.status, Status::Exhausted);
    }
}

#[tokio::test]
async fn confirming_without_flips_keeps_the_estimate() {
    let h = Harness::new(&[("syn", synthetic(10, 8))]);
    let s = h.create(json!({ "bundle": "syn" })).await;
    let before = h.metrics(&s).await.initial_estimate;
    let doc = h.next(&s).await.document.unwrap().doc;
    let (status, v) = h.validate(&s, &doc, &[]).await;
    assert_eq!(status, StatusCode::OK);
    let v: Validated = serde_json::from_value(v).unwrap();
    assert_eq!(v.estimated_f, before);
    assert_eq!(v.remaining, 9);
}

#[tokio::test]
async fn false_negative_correction_raises_estimated_f1() {
    let h = Harness::new(&[("fn", all_false_negatives(60))]);
    let s = h.create(json!({ "bundle": "fn" })).await;
    let m = h.metrics(&s).await;
    assert!((m.initial_estimate.macro_ - 20.0 / 70.0).abs() < 1e-12);
    let doc = h.next(&s).await.document.unwrap().doc;
    let (_, v) = h.validate(&s, &doc, &[ClassId::new("c").unwrap()]).await;
    let v: Validated = serde_json::from_value(v).unwrap();
    let rise = v.estimated_f.macro_ - m.initial_estimate.macro_;
    assert!((rise - 0.0241).abs() < 5e-4, "rise {rise}");
    assert!((v.estimated_f.macro_ - 22.0 / 71.0).abs() < 1e-12);
}

#[tokio::test]
async fn stale_or_malformed_submissions_change_nothing() {
    let h = Harness::new(&[("syn", synthetic(10, 9))]);
    let s = h.create(json!({ "bundle": "syn" })).await;
    let served = h.next(&s).await.document.unwrap().doc;
    let other = h.create(json!({ "bundle": "syn" })).await;
    let stale = synthetic(10, 9)
        .test
        .docs()
        .iter()
        .find(|d| **d != served)
        .unwrap()
        .clone();
    let (status, v) = h.validate(&s, &stale, &[]).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["kind"], "conflict");

    let (status, _) = h.validate(&s, &served, &[ClassId::new("nope").unwrap()]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = h
        .call(
            "POST",
            &format!("/sessions/{}/validate", s.session_id),
            Some(&s.token),
            Some(json!({ "doc": served, "extra": 1 })),
        )
        .await;
    assert!(status.is_client_error());

    assert_eq!(h.metrics(&s).await.validated, 0);
    assert_eq!(h.next(&s).await.document.unwrap().doc, served);
    assert_eq!(log_lines(&h.config.data_dir, &s.session_id), 1);
    assert_eq!(h.metrics(&other).await.validated, 0);
}

#[tokio::test]
async fn metrics_record_the_trajectory() {
    let bundle = synthetic(8, 10);
    let h = Harness::new(&[("syn", bundle.clone())]);
    let s = h.create(json!({ "bundle": "syn", "averaging": "micro" })).await;
    let mut docs = Vec::new();
    for _ in 0..5 {
        let doc = h.next(&s).await.document.unwrap().doc;
        let flipped = wrong_classes(&bundle, &doc);
        h.validate(&s, &doc, &flipped).await;
        docs.push(doc);
    }
    let m = h.metrics(&s).await;
    assert_eq!(m.validated, 5);
    assert_eq!(m.remaining, 3);
    assert_eq!(m.trajectory.len(), 5);
    for (i, p) in m.trajectory.iter().enumerate() {
        assert_eq!(p.validated, i + 1);
        assert_eq!(p.doc, docs[i]);
    }
    assert_eq!(m.config.averaging, Averaging::Micro);
}

#[tokio::test]
async fn restart_replays_the_log() {
    let bundle = synthetic(10, 11);
    let mut h = Harness::new(&[("syn", bundle.clone())]);
    let s = h.create(json!({ "bundle": "syn" })).await;
    for _ in 0..4 {
        let doc = h.next(&s).await.document.unwrap().doc;
        let flipped = wrong_classes(&bundle, &doc);
        h.validate(&s, &doc, &flipped).await;
    }
    let before = h.metrics(&s).await;
    let next_before = h.next(&s).await.document.unwrap();

    h.restart();
    let after = h.metrics(&s).await;
    assert_eq!(after, before);
    let next_after = h.next(&s).await.document.unwrap();
    assert_eq!(next_after.doc, next_before.doc);
    assert_eq!(next_after.utility, next_before.utility);

    // The replayed session keeps accepting work and its token.
    let flipped = wrong_classes(&bundle, &next_after.doc);
    let (status, _) = h.validate(&s, &next_after.doc, &flipped).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(log_lines(&h.config.data_dir, &s.session_id), 6);
}

#[tokio::test]
async fn idle_sessions_are_evicted_and_rebuilt() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(6, 12).save(&dir.path().join("b").join("syn")).unwrap();
    let store = SessionStore::new(StoreConfig {
        bundle_root: dir.path().join("b"),
        data_dir: dir.path().join("d"),
        ttl: Duration::ZERO,
    })
    .unwrap();
    let created = store
        .create(serde_json::from_value(json!({ "bundle": "syn" })).unwrap())
        .unwrap();
    let doc = store
        .next(&created.session_id, Some(&created.token))
        .unwrap()
        .document
        .unwrap()
        .doc;
    store
        .validate(&created.session_id, Some(&created.token), doc, vec![])
        .unwrap();
    assert_eq!(store.evict_idle(), 1);
    assert_eq!(store.cached_sessions(), 0);
    assert_eq!(store.metrics(&created.session_id).unwrap().validated, 1);
}

#[tokio::test]
async fn token_is_required_for_mutation() {
    let h = Harness::new(&[("syn", synthetic(6, 13))]);
    let s = h.create(json!({ "bundle": "syn" })).await;
    let uri = format!("/sessions/{}/next", s.session_id);
    assert_eq!(h.call("GET", &uri, None, None).await.0, StatusCode::FORBIDDEN);
    assert_eq!(h.call("GET", &uri, Some("wrong"), None).await.0, StatusCode::FORBIDDEN);
    let doc = h.next(&s).await.document.unwrap().doc;
    let (status, _) = h
        .call(
            "POST",
            &format!("/sessions/{}/validate", s.session_id),
            Some("wrong"),
            Some(json!({ "doc": doc })),
        )
        .await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = h
        .call("DELETE", &format!("/sessions/{}", s.session_id), None, None)
        .await;
    assert_eq!(status, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn unknown_sessions_and_bundles() {
    let h = Harness::new(&[("syn", synthetic(6, 14))]);
    let (status, v) = h.call("GET", "/sessions/0123abcd/metrics", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["kind"], "not_found");
    assert_eq!(
        h.call("GET", "/sessions/..%2Fx/next", Some("t"), None).await.0,
        StatusCode::NOT_FOUND
    );
    for bundle in ["missing", "../bundles/syn", ""] {
        let (status, _) = h
            .call("POST", "/sessions", None, Some(json!({ "bundle": bundle })))
            .await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bundle}");
    }
    let (status, _) = h
        .call(
            "POST",
            "/sessions",
            None,
            Some(json!({ "bundle": "syn", "beta": -1.0 })),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn oracle_methods_need_gold_labels() {
    let mut bundle = synthetic(6, 15);
    bundle.gold = None;
    let h = Harness::new(&[("nogold", bundle)]);
    let (status, v) = h
        .call(
            "POST",
            "/sessions",
            None,
            Some(json!({ "bundle": "nogold", "method": "oracle2" })),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    let s = h.create(json!({ "bundle": "nogold" })).await;
    assert_eq!(s.status, Status::Active);
}

#[tokio::test]
async fn closed_sessions_reject_work() {
    let mut h = Harness::new(&[("syn", synthetic(6, 16))]);
    let s = h.create(json!({ "bundle": "syn" })).await;
    let doc = h.next(&s).await.document.unwrap().doc;
    let (status, v) = h
        .call("DELETE", &format!("/sessions/{}", s.session_id), Some(&s.token), None)
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "closed");
    let (status, _) = h.validate(&s, &doc, &[]).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let uri = format!("/sessions/{}/next", s.session_id);
    assert_eq!(h.call("GET", &uri, Some(&s.token), None).await.0, StatusCode::CONFLICT);

    h.restart();
    assert_eq!(h.metrics(&s).await.status, Status::Closed);
    assert_eq!(h.call("GET", &uri, Some(&s.token), None).await.0, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn racing_submissions_apply_once() {
    let h = Arc::new(Harness::new(&[("syn", synthetic(10, 17))]));
    let s = Arc::new(h.create(json!({ "bundle": "syn" })).await);
    let doc = h.next(&s).await.document.unwrap().doc;
    let mut tasks = Vec::new();
    for _ in 0..16 {
        let (h, s, doc) = (h.clone(), s.clone(), doc.clone());
        tasks.push(tokio::spawn(async move { h.validate(&s, &doc, &[]).await.0 }));
    }
    let mut ok = 0;
    for t in tasks {
        match t.await.unwrap() {
            StatusCode::OK => ok += 1,
            other => assert_eq!(other, StatusCode::CONFLICT),
        }
    }
    assert_eq!(ok, 1);
    assert_eq!(h.metrics(&s).await.validated, 1);
    assert_eq!(log_lines(&h.config.data_dir, &s.session_id), 2);
}

#[tokio::test]
async fn trajectory_matches_an_offline_fold_of_the_log() {
    use satc_core::ranking::{TableSource, TableState};

    let bundle = synthetic(9, 18);
    let h = Harness::new(&[("syn", bundle.clone())]);
    let s = h
        .create(json!({ "bundle": "syn", "strategy": "static", "beta": 2.0 }))
        .await;
    while let Some(view) = h.next(&s).await.document {
        let flipped = wrong_classes(&bundle, &view.doc);
        h.validate(&s, &view.doc, &flipped).await;
    }
    let metrics = h.metrics(&s).await;
    assert_eq!(metrics.status, Status::Exhausted);

    let spec = EffectivenessSpec::new(2.0).unwrap();
    let mut state = TableState::initial(&bundle.test, &TableSource::Estimated(bundle.estimates.clone())).unwrap();
    let log = std::fs::read_to_string(
        h.config
            .data_dir
            .join("sessions")
            .join(format!("{}.jsonl", s.session_id)),
    )
    .unwrap();
    let mut points = Vec::new();
    for line in log.lines().skip(1) {
        let entry: Value = serde_json::from_str(line).unwrap();
        assert_eq!(entry["type"], "validated");
        let doc = DocId::new(entry["doc"].as_str().unwrap()).unwrap();
        let d = bundle.test.doc_position(&doc).unwrap();
        for class in entry["flipped"].as_array().unwrap() {
            let c = bundle
                .test
                .class_position(&ClassId::new(class.as_str().unwrap()).unwrap())
                .unwrap();
            state.apply_correction(c, bundle.test.decision(d, c).is_positive());
        }
        points.push((
            doc,
            state.estimated_effectiveness(Averaging::Macro, spec),
            state.estimated_effectiveness(Averaging::Micro, spec),
        ));
    }
    assert_eq!(points.len(), metrics.trajectory.len());
    for (p, (doc, ma, mi)) in metrics.trajectory.iter().zip(points) {
        assert_eq!(p.doc, doc);
        assert_eq!(p.estimated_f.macro_, ma);
        assert_eq!(p.estimated_f.micro, mi);
    }
}
