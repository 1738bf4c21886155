mod common;

use axum::http::StatusCode;
use common::{call, features_body, small_models};
use serde_json::{json, Value};
use std::sync::Arc;
use tarml::service::{router, AppState, PredictResponse};
use tarml_core::rng::SeededRng;

fn flags(v: &Value) -> Vec<bool> {
    let resp: PredictResponse = serde_json::from_value(v.clone()).unwrap();
    resp.features.iter().map(|f| f.extrapolated).collect()
}

#[tokio::test]
async fn predict_matches_library_bit_for_bit() {
    let models = small_models(1);
    let bounds = models.feature_bounds();
    let app = router(Arc::new(AppState::new(models.clone(), None)));
    let mut rng = SeededRng::new(9);
    for _ in 0..25 {
        let x: Vec<f64> = bounds.iter().map(|b| rng.uniform_in(b.min - 0.1 * b.span(), b.max)).collect();
        let (status, body) = call(&app, "POST", "/api/predict", &features_body(&models, &x)).await;
        assert_eq!(status, StatusCode::OK);
        let resp: PredictResponse = serde_json::from_value(body).unwrap();
        let lib = models.predict(&x).unwrap();
        for (p, l) in resp.predictions.iter().zip(&lib) {
            assert_eq!(p.value.to_bits(), l.value.to_bits());
        }
        let echoed: Vec<f64> = resp.features.iter().map(|f| f.value).collect();
        assert_eq!(echoed, x);
    }
}

#[tokio::test]
async fn extrapolation_flags_follow_training_bounds() {
    let models = small_models(2);
    let bounds = models.feature_bounds();
    let app = router(Arc::new(AppState::new(models.clone(), None)));
    let mid: Vec<f64> = bounds.iter().map(|b| b.midpoint()).collect();

    let (_, body) = call(&app, "POST", "/api/predict", &features_body(&models, &mid)).await;
    assert!(flags(&body).iter().all(|f| !f));

    let t = models.schema.feature_index("reaction_temperature").unwrap();
    let mut hot = mid.clone();
    hot[t] = 2000.0;
    let (_, body) = call(&app, "POST", "/api/predict", &features_body(&models, &hot)).await;
    let f = flags(&body);
    assert!(f[t]);
    assert_eq!(f.iter().filter(|v| **v).count(), 1);

    for j in 0..bounds.len() {
        let cases = [
            (bounds[j].min, false),
            (bounds[j].max, false),
            (bounds[j].min.next_down(), true),
            (bounds[j].max.next_up(), true),
            (bounds[j].min.next_up(), false),
            (bounds[j].max.next_down(), false),
        ];
        for (v, expected) in cases {
            let mut x = mid.clone();
            x[j] = v;
            let (status, body) = call(&app, "POST", "/api/predict", &features_body(&models, &x)).await;
            assert_eq!(status, StatusCode::OK);
            let f = flags(&body);
            assert_eq!(f[j], expected, "feature {j} value {v}");
            assert_eq!(f.iter().filter(|v| **v).count(), usize::from(expected));
        }
    }
}

#[tokio::test]
async fn malformed_requests_name_the_field() {
    let models = small_models(3);
    let app = router(Arc::new(AppState::new(models.clone(), None)));
    let mid: Vec<f64> = models.feature_bounds().iter().map(|b| b.midpoint()).collect();
    let mut good: Value = serde_json::from_str(&features_body(&models, &mid)).unwrap();

    let (status, body) = call(&app, "POST", "/api/predict", "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "body");

    let (status, body) = call(&app, "POST", "/api/predict", "{}").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "features");

    good["features"]["reaction_time"] = json!("fast");
    let (status, body) = call(&app, "POST", "/api/predict", &good.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "features.reaction_time");
    assert!(body["error"].as_str().unwrap().contains("finite number"));

    good["features"].as_object_mut().unwrap().remove("reaction_time");
    let (status, body) = call(&app, "POST", "/api/predict", &good.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "features.reaction_time");
    assert!(body["error"].as_str().unwrap().contains("missing"));

    good["features"]["reaction_time"] = json!(100.0);
    good["features"]["colour"] = json!(1.0);
    let (status, body) = call(&app, "POST", "/api/predict", &good.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "features.colour");

    // Key and display name of the same feature.
    good["features"].as_object_mut().unwrap().remove("colour");
    good["features"]["Reaction time (min)"] = json!(100.0);
    let (status, body) = call(&app, "POST", "/api/predict", &good.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    assert!(body["error"].as_str().unwrap().contains("more than once"));
}

#[tokio::test]
async fn schema_health_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let models = small_models(4);
    models.save(dir.path()).unwrap();
    let state = Arc::new(AppState::new(models.clone(), Some(dir.path().to_path_buf())));
    let app = router(state.clone());

    let (status, body) = call(&app, "GET", "/api/schema", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["fingerprint"], models.fingerprint.as_str());
    assert_eq!(body["features"].as_array().unwrap().len(), 11);
    assert_eq!(body["targets"].as_array().unwrap().len(), 5);
    let b = &body["features"][8]["bounds"];
    assert_eq!(b["min"].as_f64().unwrap(), models.feature_bounds()[8].min);

    let (_, body) = call(&app, "GET", "/api/health", "").await;
    assert_eq!(body["generation"], 0);

    // Replace the files with a different model and reload.
    let other = small_models(5);
    other.save(dir.path()).unwrap();
    let (status, body) = call(&app, "POST", "/api/reload", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["generation"], 1);
    let x: Vec<f64> = other.feature_bounds().iter().map(|b| b.midpoint()).collect();
    let (_, body) = call(&app, "POST", "/api/predict", &features_body(&other, &x)).await;
    let resp: PredictResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.generation, 1);
    assert_eq!(resp.predictions[0].value, other.predict(&x).unwrap()[0].value);

    let no_dir = router(Arc::new(AppState::new(models, None)));
    let (status, _) = call(&no_dir, "POST", "/api/reload", "").await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn explain_sums_to_prediction() {
    let models = small_models(6);
    let app = router(Arc::new(AppState::new(models.clone(), None)));
    let x: Vec<f64> = models.feature_bounds().iter().map(|b| b.min + 0.3 * b.span()).collect();
    let (status, body) = call(&app, "POST", "/api/explain", &features_body(&models, &x)).await;
    assert_eq!(status, StatusCode::OK);
    let preds = models.predict(&x).unwrap();
    let expl = body["explanations"].as_array().unwrap();
    assert_eq!(expl.len(), 5);
    for (e, p) in expl.iter().zip(&preds) {
        assert_eq!(e["method"], "tree");
        assert_eq!(e["prediction"].as_f64().unwrap(), p.value);
        let sum: f64 = e["contributions"].as_array().unwrap().iter().map(|c| c["shap"].as_f64().unwrap()).sum();
        let total = e["base"].as_f64().unwrap() + sum;
        assert!((total - p.value).abs() < 1e-9 * p.value.abs().max(1.0));
        let pct = e["operating_pct"].as_f64().unwrap() + e["catalyst_pct"].as_f64().unwrap();
        assert!((pct - 100.0).abs() < 1e-9);
    }
}

#[tokio::test]
async fn optimize_respects_budget_and_bounds() {
    let models = small_models(7);
    let app = router(Arc::new(AppState::new(models.clone(), None)));

    let (status, body) = call(&app, "POST", "/api/optimize", r#"{"swarm_size": 100, "iterations": 500}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("budget"));

    let (status, body) = call(&app, "POST", "/api/optimize", r#"{"swarms": 3}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "body");

    let (status, body) = call(&app, "POST", "/api/optimize", r#"{"bounds": {"reaction_temperature": [900, 600]}}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "bounds.reaction_temperature");

    let req = r#"{"swarm_size": 12, "iterations": 15, "seed": 3, "bounds": {"reaction_temperature": [650, 700]}}"#;
    let (status, body) = call(&app, "POST", "/api/optimize", req).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["evaluations"], 12 * 16);
    let t = models.schema.feature_index("reaction_temperature").unwrap();
    let sols = body["solutions"].as_array().unwrap();
    assert!(!sols.is_empty());
    for s in sols {
        let v = s["decision"][t].as_f64().unwrap();
        assert!((650.0..=700.0).contains(&v));
        assert_eq!(s["objectives"].as_array().unwrap().len(), 5);
    }
    let (_, again) = call(&app, "POST", "/api/optimize", req).await;
    assert_eq!(body, again);
}
