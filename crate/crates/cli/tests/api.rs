use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use debacer_cli::server::{router, AppState, FINGERPRINT_HEADER};
use debacer_core::annotate::{bootstrap_spec, sample_seed_set, AnnotationState, LabelSource};
use debacer_core::corpus::{generate_synthetic, SynthConfig, SynthTruth};
use debacer_core::{SpeechKey, DEFAULT_AGENDA_LABEL};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    app: Router,
    state: Arc<AppState>,
    truth: SynthTruth,
}

fn fixture(seed_labels: usize, token: Option<&str>) -> Fixture {
    let (corpus, truth) = generate_synthetic(&SynthConfig {
        n_minutes: 6,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let seed_keys = sample_seed_set(&corpus, DEFAULT_AGENDA_LABEL, 40, 1).unwrap();
    let mut ann = AnnotationState::new(DEFAULT_AGENDA_LABEL);
    // positives first so small seed sets still hold both classes
    let mut keyed: Vec<&SpeechKey> = truth.labels.keys().collect();
    keyed.sort_by_key(|k| std::cmp::Reverse(truth.labels[*k]));
    for k in keyed.into_iter().take(seed_labels) {
        ann.apply_label(&corpus, k, truth.labels[k], LabelSource::Human).unwrap();
    }
    let state = Arc::new(
        AppState::new(corpus, ann, bootstrap_spec(5), seed_keys).with_token(token.map(String::from)),
    );
    if let Ok(model) = state.train_now() {
        state.set_model(model);
    }
    Fixture {
        app: router(state.clone()),
        state,
        truth,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String, Value) {
    call_with(app, method, uri, body, None).await
}

async fn call_with(app: &Router, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, String, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let fp = resp
        .headers()
        .get(FINGERPRINT_HEADER)
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, fp, value)
}

async fn wait_for_retrain(app: &Router) -> Value {
    for _ in 0..600 {
        let (_, _, body) = call(app, "GET", "/api/retrain", None).await;
        if body["retrain"]["running"] == false {
            return body;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("retrain did not finish");
}

#[tokio::test]
async fn suggestions_are_uncertainty_ordered_with_context() {
    let f = fixture(60, None);
    let fp = f.state.fingerprint().expect("initial model");
    let (status, header, body) = call(&f.app, "GET", "/api/speeches?status=unlabeled&limit=15", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(header, fp);
    assert_eq!(body["model_fingerprint"], fp.as_str());
    let list = body["speeches"].as_array().unwrap();
    assert_eq!(list.len(), 15);
    let u: Vec<f64> = list.iter().map(|s| s["uncertainty"].as_f64().unwrap()).collect();
    assert!(u.windows(2).all(|w| w[0] <= w[1]));
    for s in list {
        let p = s["probability"].as_f64().unwrap();
        assert!((s["uncertainty"].as_f64().unwrap() - (p - 0.5).abs()).abs() < 1e-12);
        assert!(s["previous"].is_object() || s["next"].is_object());
    }
}

#[tokio::test]
async fn labelling_shrinks_queue_and_respects_precedence() {
    let f = fixture(60, None);
    let (_, _, before) = call(&f.app, "GET", "/api/speeches?limit=100000", None).await;
    let first = before["speeches"][0]["key"].clone();
    let n = before["speeches"].as_array().unwrap().len();

    let (status, _, body) = call(
        &f.app,
        "POST",
        "/api/labels",
        Some(json!({ "key": first, "label": 1, "source": "reviewed" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["audit"]["source"], "reviewed");
    let (_, _, after) = call(&f.app, "GET", "/api/speeches?limit=100000", None).await;
    assert_eq!(after["speeches"].as_array().unwrap().len(), n - 1);

    let (status, _, _) = call(&f.app, "POST", "/api/labels", Some(json!({ "key": first, "label": 0, "source": "model" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let debater_key = {
        let corpus = &f.state.corpus;
        corpus.speeches().find(|s| !s.is_moderator).unwrap().key()
    };
    let (status, _, _) = call(&f.app, "POST", "/api/labels", Some(json!({ "key": debater_key, "label": 1 }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = call(&f.app, "POST", "/api/labels", Some(json!({ "key": first, "label": 2, "source": "reviewed" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, _, audit) = call(&f.app, "GET", "/api/audit", None).await;
    assert_eq!(audit["audit"].as_array().unwrap().len(), 61);
}

#[tokio::test]
async fn retrain_swaps_in_a_new_model() {
    let f = fixture(60, None);
    let old = f.state.fingerprint().unwrap();
    let keys: Vec<SpeechKey> = f.truth.labels.keys().cloned().collect();
    let mut added = 0;
    for k in keys.iter().rev().take(12) {
        let (status, _, _) = call(
            &f.app,
            "POST",
            "/api/labels",
            Some(json!({ "key": k, "label": f.truth.labels[k], "source": "human" })),
        )
        .await;
        if status == StatusCode::OK {
            added += 1;
        }
    }
    assert!(added >= 10);
    let (status, header, _) = call(&f.app, "POST", "/api/retrain", None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(header, old, "old model serves while training");
    let done = wait_for_retrain(&f.app).await;
    assert_eq!(done["retrain"]["completed"], 1);
    assert!(done["retrain"]["last_error"].is_null());
    let new = f.state.fingerprint().unwrap();
    assert_ne!(new, old);
    let (_, header, body) = call(&f.app, "GET", "/api/speeches", None).await;
    assert_eq!(header, new);
    assert_eq!(body["model_fingerprint"], new.as_str());
}

#[tokio::test]
async fn without_a_model_the_seed_sample_is_offered() {
    let f = fixture(0, None);
    assert!(f.state.fingerprint().is_none());
    let (status, header, body) = call(&f.app, "GET", "/api/speeches?limit=5", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(header, "none");
    assert!(body["model_fingerprint"].is_null());
    let list = body["speeches"].as_array().unwrap();
    assert_eq!(list.len(), 5);
    assert!(list.iter().all(|s| s["probability"].is_null()));
    assert_eq!(list[0]["key"], json!(f.state.seed_keys[0]));

    let (status, _, _) = call(&f.app, "GET", &format!("/api/partitions/{}", f.state.corpus.minutes[0].minute_id), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    // training with one class only fails and is reported, not fatal
    let (status, _, _) = call(&f.app, "POST", "/api/retrain", None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let done = wait_for_retrain(&f.app).await;
    assert!(done["retrain"]["last_error"].as_str().unwrap().contains("class"));
    assert!(f.state.fingerprint().is_none());
}

#[tokio::test]
async fn partitions_and_label_export() {
    let f = fixture(60, None);
    let minute = f.state.corpus.minutes[0].minute_id.clone();
    let (status, header, body) = call(&f.app, "GET", &format!("/api/partitions/{minute}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(header, f.state.fingerprint().unwrap());
    let items = body["items"].as_array().unwrap();
    assert!(!items.is_empty());
    for item in items {
        let n = item["speeches"].as_array().unwrap().len() as u64;
        let blocks = item["blocks"].as_array().unwrap();
        assert_eq!(blocks[0][0], 0);
        assert_eq!(blocks.last().unwrap()[1].as_u64().unwrap(), n - 1);
    }
    let (status, _, _) = call(&f.app, "GET", "/api/partitions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, header, body) = call(&f.app, "GET", "/api/export/labels", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(!header.is_empty());
    let csv = body.as_str().unwrap();
    assert!(csv.starts_with("minute_id,order,label,source"));
    let parsed = AnnotationState::read_labels_csv(csv.as_bytes()).unwrap();
    assert_eq!(parsed, f.state.annotation.lock().unwrap().labels);
}

#[tokio::test]
async fn static_token_is_enforced() {
    let f = fixture(60, Some("s3cret"));
    let (status, header, _) = call(&f.app, "GET", "/api/speeches", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert!(!header.is_empty());
    let (status, _, _) = call_with(&f.app, "GET", "/api/speeches", None, Some("wrong")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _, _) = call_with(&f.app, "GET", "/api/speeches", None, Some("s3cret")).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn bad_status_is_rejected() {
    let f = fixture(60, None);
    let (status, _, body) = call(&f.app, "GET", "/api/speeches?status=everything", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("status"));
    let (status, _, body) = call(&f.app, "GET", "/api/speeches?status=labeled&limit=3", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["speeches"].as_array().unwrap().len(), 3);
}
