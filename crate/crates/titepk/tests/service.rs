use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use titepk::service::{router, ErrorBody, WhatIfResponse};
use titepk::store::{SessionView, Store};
use titepk::wire::{DecisionDto, ExposureDto};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn app() -> Router {
    router(Arc::new(Store::in_memory()))
}

async fn create(app: &Router) -> SessionView {
    let (status, v) = call(app, Method::POST, "/sessions", Some(json!({}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    serde_json::from_value(v).unwrap()
}

fn p_od(d: &DecisionDto, label: &str) -> f64 {
    d.rows.iter().find(|r| r.combination == label).unwrap().p_overdose
}

#[tokio::test]
async fn create_returns_prior_decision() {
    let app = app();
    let s = create(&app).await;
    assert_eq!(s.revision, 0);
    assert!(s.records.is_empty());
    assert_eq!(s.decision.rows.len(), 12);
    assert_eq!(s.decision.time_unit, "hours");
    assert!((p_od(&s.decision, "B-24") - 0.418_684_844_995_610_65).abs() < 1e-9);
    let (status, _) = call(&app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn sessions_get_distinct_ids() {
    let app = app();
    let a = create(&app).await;
    let b = create(&app).await;
    assert_ne!(a.session_id, b.session_id);
}

#[tokio::test]
async fn invalid_settings_are_422_naming_the_field() {
    let app = app();
    let (status, v) = call(&app, Method::POST, "/sessions", Some(json!({"prior": {"sigma": -1.0}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = serde_json::from_value(v).unwrap();
    assert!(err.fields.iter().any(|f| f.field == "prior.sigma"), "{err:?}");

    let (status, v) = call(&app, Method::POST, "/sessions", Some(json!({"prior": {"sigmaa": 1.0}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = serde_json::from_value(v).unwrap();
    assert!(err.fields[0].field.contains("sigmaa"), "{err:?}");
}

#[tokio::test]
async fn unknown_sessions_are_404() {
    let app = app();
    let id = uuid::Uuid::new_v4();
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/decision"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/sessions/not-a-uuid/decision", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn stale_revision_is_409_with_current_revision() {
    let app = app();
    let s = create(&app).await;
    let uri = format!("/sessions/{}/records", s.session_id);
    let rec = json!({"combination": "A-8", "dlt": false, "time_hours": 672.0});
    let (status, _) = call(&app, Method::POST, &uri, Some(json!({"revision": 0, "record": rec}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, v) = call(&app, Method::POST, &uri, Some(json!({"revision": 0, "record": rec}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let err: ErrorBody = serde_json::from_value(v).unwrap();
    assert_eq!(err.current_revision, Some(1));
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{}/decision", s.session_id), None).await;
    assert_eq!(v["revision"], 1);
}

#[tokio::test]
async fn invalid_record_is_422_and_not_stored() {
    let app = app();
    let s = create(&app).await;
    let uri = format!("/sessions/{}/records", s.session_id);
    let rec = json!({"combination": "Z-9", "dlt": false, "time_hours": 10.0});
    let (status, v) = call(&app, Method::POST, &uri, Some(json!({"record": rec}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = serde_json::from_value(v).unwrap();
    assert_eq!(err.fields[0].field, "records[0].combination");
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{}/decision", s.session_id), None).await;
    assert_eq!(v["revision"], 0);
}

#[tokio::test]
async fn full_follow_up_without_dlt_lowers_overdose_risk() {
    let app = app();
    let s = create(&app).await;
    let uri = format!("/sessions/{}/records", s.session_id);
    let rec = json!({"combination": "A-8", "dlt": false, "time_hours": 672.0});
    let (status, v) = call(&app, Method::POST, &uri, Some(json!({"revision": 0, "record": rec}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let after: SessionView = serde_json::from_value(v).unwrap();
    assert_eq!(after.revision, 1);
    for (p, a) in s.decision.rows.iter().zip(&after.decision.rows) {
        assert!(a.p_overdose < p.p_overdose, "{}", p.combination);
    }
}

#[tokio::test]
async fn add_then_delete_restores_the_decision() {
    let app = app();
    let s = create(&app).await;
    let id = s.session_id;
    let rec = json!({"dose": 16.0, "interval_hours": 48.0, "dlt": true, "time_hours": 200.0});
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/records"), Some(json!({"record": rec}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, v) = call(&app, Method::DELETE, &format!("/sessions/{id}/records/0?revision=1"), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let back: SessionView = serde_json::from_value(v).unwrap();
    assert_eq!(back.revision, 2);
    assert!(back.records.is_empty());
    for (p, a) in s.decision.rows.iter().zip(&back.decision.rows) {
        assert!((a.p_overdose - p.p_overdose).abs() < 1e-9);
        assert!((a.p_target - p.p_target).abs() < 1e-9);
    }
    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}/records/0"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn what_if_is_pure_and_reflects_hypothetical_dlt() {
    let app = app();
    let s = create(&app).await;
    let id = s.session_id;
    let body = json!({"records": [{"combination": "B-24", "dlt": true, "time_hours": 90.0}]});
    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/what-if"), Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let w: WhatIfResponse = serde_json::from_value(v).unwrap();
    assert_eq!(w.revision, 0);
    assert!(p_od(&w.decision, "A-8") > p_od(&s.decision, "A-8"));
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/decision"), None).await;
    let now: SessionView = serde_json::from_value(v).unwrap();
    assert_eq!(now, s);
    let (_, v2) = call(&app, Method::POST, &format!("/sessions/{id}/what-if"), Some(body)).await;
    assert_eq!(serde_json::from_value::<WhatIfResponse>(v2).unwrap(), w);
}

#[tokio::test]
async fn exposure_accepts_frequency_or_interval() {
    let app = app();
    let id = create(&app).await.session_id;
    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}/exposure?dose=24&interval_hours=96&step_hours=96"), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let e: ExposureDto = serde_json::from_value(v).unwrap();
    assert_eq!(e.samples.len(), 8);
    assert!((e.samples.last().unwrap().auc - 1.0).abs() < 1e-9);
    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}/exposure?dose=24&freq={}&step_hours=96", 1.0 / 96.0), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<ExposureDto>(v).unwrap(), e);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/exposure?dose=24"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/exposure?dose=-1&interval_hours=24"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(Store::open(dir.path()).unwrap()));
    let id = create(&app).await.session_id;
    let rec = json!({"combination": "B-8", "dlt": false, "time_hours": 400.0});
    call(&app, Method::POST, &format!("/sessions/{id}/records"), Some(json!({"record": rec}))).await;
    let (_, before) = call(&app, Method::GET, &format!("/sessions/{id}/decision"), None).await;
    drop(app);
    let app = router(Arc::new(Store::open(dir.path()).unwrap()));
    let (status, after) = call(&app, Method::GET, &format!("/sessions/{id}/decision"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
}
