#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tarml::pipeline::train_models;
use tarml::store::ModelSet;
use tarml_core::regressors::{LsBoostParams, RegressorConfig};
use tarml_core::synth::synthetic_dataset;
use tower::ServiceExt;

/// Small, quick LSBoost model set on synthetic data.
pub fn small_models(seed: u64) -> ModelSet {
    let data = synthetic_dataset(120, 0.02, seed);
    let config = RegressorConfig::LsBoost(LsBoostParams {
        cycles: 30,
        ..LsBoostParams::default()
    });
    train_models(&data, &config, &[], 3, seed).unwrap().0
}

pub async fn call(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

pub fn features_body(models: &ModelSet, x: &[f64]) -> String {
    let map: serde_json::Map<String, Value> = models
        .schema
        .features
        .iter()
        .zip(x)
        .map(|(c, v)| (c.key.clone(), Value::from(*v)))
        .collect();
    serde_json::json!({ "features": map }).to_string()
}
