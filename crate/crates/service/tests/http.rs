use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use elicit_core::api::{Compute, DoseRequest, FitRequest};
use elicit_core::doseresponse::{DoseElicitation, ModelKind};
use elicit_core::judgement::{Judgement, QuartileJudgement};
use elicit_core::session::SessionView;
use elicit_core::Distribution;
use elicit_service::{app, start, AppState, ServiceConfig, SessionEnvelope};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn config_body(id: &str) -> Value {
    json!({
        "id": id,
        "title": "Placebo response",
        "experts": [
            {"id": "a", "name": "Expert A"},
            {"id": "b", "name": "Expert B"}
        ],
        "quantities": [{
            "name": "delta",
            "scale": "effect",
            "definition": "Mean change in an infinitely large trial",
            "method": "quartile",
            "families": ["normal"]
        }]
    })
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    token: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty);
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn test_app() -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::open(dir.path()).unwrap());
    (dir, app(state, None))
}

async fn create(app: &Router, id: &str) -> SessionEnvelope {
    let (status, body) = call(app, "POST", "/sessions", None, Some(config_body(id))).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

/// Move a fresh session into individual elicitation.
async fn open_elicitation(app: &Router, env: &SessionEnvelope) {
    let id = &env.session.id;
    let f = Some(env.tokens.facilitator.as_str());
    assert_eq!(
        call(app, "POST", &format!("/sessions/{id}/advance"), f, Some(json!({"to": "training"}))).await.0,
        StatusCode::OK
    );
    for e in ["a", "b"] {
        assert_eq!(call(app, "POST", &format!("/sessions/{id}/experts/{e}/trained"), f, None).await.0, StatusCode::OK);
    }
    let (status, _) =
        call(app, "POST", &format!("/sessions/{id}/advance"), f, Some(json!({"to": "individual_elicitation"}))).await;
    assert_eq!(status, StatusCode::OK);
}

fn quartiles(m: f64) -> Value {
    json!({"quantity": "delta", "judgement": {"method": "quartile", "q25": m - 1.0, "q50": m, "q75": m + 1.0}})
}

#[tokio::test]
async fn create_then_get_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let running =
        start(ServiceConfig { bind: "127.0.0.1:0".parse().unwrap(), store: dir.path().into(), static_dir: None })
            .await
            .unwrap();
    let base = format!("http://{}", running.addr);
    let client = reqwest::Client::new();
    let created = client.post(format!("{base}/sessions")).body(config_body("s1").to_string()).send().await.unwrap();
    assert_eq!(created.status(), 201);
    let created = created.text().await.unwrap();
    let env: SessionEnvelope = serde_json::from_str(&created).unwrap();
    let got = client
        .get(format!("{base}/sessions/s1"))
        .header("authorization", format!("Bearer {}", env.tokens.facilitator))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert_eq!(got, created);
    let missing = client.get(format!("{base}/sessions/nope")).send().await.unwrap();
    assert_eq!(missing.status(), 404);
    running.shutdown().await.unwrap();

    // The store survives a restart.
    let running =
        start(ServiceConfig { bind: "127.0.0.1:0".parse().unwrap(), store: dir.path().into(), static_dir: None })
            .await
            .unwrap();
    let again = client
        .get(format!("http://{}/sessions/s1", running.addr))
        .header("authorization", format!("Bearer {}", env.tokens.facilitator))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert_eq!(again, created);
    running.shutdown().await.unwrap();
}

#[tokio::test]
async fn bind_failure_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let first =
        start(ServiceConfig { bind: "127.0.0.1:0".parse().unwrap(), store: dir.path().into(), static_dir: None })
            .await
            .unwrap();
    let err =
        start(ServiceConfig { bind: first.addr, store: dir.path().into(), static_dir: None }).await.err().unwrap();
    assert_eq!(err.to_api_error().code, "StartupError");
    first.shutdown().await.unwrap();
}

#[tokio::test]
async fn error_statuses() {
    let (_dir, app) = test_app();
    let env = create(&app, "s1").await;
    let a = env.tokens.experts["a"].clone();

    let (status, body) = call(&app, "POST", "/sessions/s1/judgements", Some(&a), Some(quartiles(1.0))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(json_of(&body)["code"], "StageError");

    let (status, _) = call(&app, "GET", "/sessions/s1", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call(&app, "GET", "/sessions/s1", Some(&a), None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    let (status, body) = call(&app, "POST", "/sessions", None, Some(json!({"experts": [], "quantities": []}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json_of(&body)["code"], "ConfigError");

    let (status, body) =
        call(&app, "POST", "/compute/fit", None, Some(json!({"judgement": {"method": "quartile"}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json_of(&body)["code"], "SchemaError");

    let (status, _) = call(&app, "GET", "/jobs/unknown", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn masking_over_the_wire() {
    let (_dir, app) = test_app();
    let env = create(&app, "s1").await;
    open_elicitation(&app, &env).await;
    let (a, b) = (env.tokens.experts["a"].clone(), env.tokens.experts["b"].clone());
    assert_eq!(call(&app, "POST", "/sessions/s1/judgements", Some(&a), Some(quartiles(1.0))).await.0, StatusCode::OK);
    assert_eq!(call(&app, "POST", "/sessions/s1/judgements", Some(&b), Some(quartiles(7.0))).await.0, StatusCode::OK);

    let (_, body) = call(&app, "GET", "/sessions/s1/view", Some(&a), None).await;
    let view: SessionView = serde_json::from_slice(&body).unwrap();
    assert!(view.judgements.iter().all(|j| j.expert == "a"));
    assert!(!String::from_utf8_lossy(&body).contains("\"b\",\"quantity\""));

    // An expert cannot submit for somebody else.
    let mut other = quartiles(3.0);
    other["expert"] = json!("b");
    assert_eq!(call(&app, "POST", "/sessions/s1/judgements", Some(&a), Some(other)).await.0, StatusCode::UNAUTHORIZED);

    let f = env.tokens.facilitator.clone();
    call(&app, "POST", "/sessions/s1/advance", Some(&f), Some(json!({"to": "discussion"}))).await;
    let (_, body) = call(&app, "GET", "/sessions/s1/view", Some(&a), None).await;
    let view: SessionView = serde_json::from_slice(&body).unwrap();
    assert_eq!(view.judgements.len(), 2);
}

/// Read server-sent events until `n` data events or the timeout.
async fn read_events(resp: axum::response::Response, n: usize) -> Vec<(String, Value)> {
    let mut body = resp.into_body();
    let mut text = String::new();
    let mut out = Vec::new();
    while out.len() < n {
        let frame = match tokio::time::timeout(Duration::from_millis(500), body.frame()).await {
            Ok(Some(Ok(f))) => f,
            _ => break,
        };
        if let Ok(data) = frame.into_data() {
            text.push_str(&String::from_utf8_lossy(&data));
        }
        while let Some(end) = text.find("\n\n") {
            let block: String = text.drain(..end + 2).collect();
            let mut kind = String::new();
            let mut data = String::new();
            for line in block.lines() {
                if let Some(k) = line.strip_prefix("event:") {
                    kind = k.trim().to_string();
                } else if let Some(d) = line.strip_prefix("data:") {
                    data.push_str(d.trim_start());
                }
            }
            if !kind.is_empty() {
                out.push((kind, serde_json::from_str(&data).unwrap()));
            }
        }
    }
    out
}

async fn subscribe(app: &Router, token: &str) -> axum::response::Response {
    let req = Request::builder().uri(format!("/sessions/s1/events?token={token}")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    resp
}

#[tokio::test]
async fn push_channel_is_role_filtered() {
    let (_dir, app) = test_app();
    let env = create(&app, "s1").await;
    open_elicitation(&app, &env).await;
    let (a, b, f) = (env.tokens.experts["a"].clone(), env.tokens.experts["b"].clone(), env.tokens.facilitator.clone());
    let stream_a = subscribe(&app, &a).await;
    let stream_f = subscribe(&app, &f).await;

    call(&app, "POST", "/sessions/s1/judgements", Some(&b), Some(quartiles(7.0))).await;
    call(&app, "POST", "/sessions/s1/judgements", Some(&a), Some(quartiles(1.0))).await;

    let fac = read_events(stream_f, 2).await;
    assert_eq!(fac.len(), 2);
    assert_eq!(fac[0].1["expert"], "b");
    assert_eq!(fac[1].1["expert"], "a");
    assert!(fac.iter().all(|(k, _)| k == "fit_updated"));

    let mine = read_events(stream_a, 2).await;
    assert_eq!(mine.len(), 1);
    assert_eq!(mine[0].1["expert"], "a");
    assert!(mine[0].1["fits"]["fits"][0]["distribution"]["family"] == "normal");
}

#[tokio::test]
async fn compute_matches_library() {
    let (_dir, app) = test_app();
    let req = FitRequest {
        judgement: Judgement::Quartile(QuartileJudgement::new(10.0, 20.0, 30.0)),
        families: None,
        support: None,
    };
    let (status, body) = call(&app, "POST", "/compute/fit", None, Some(serde_json::to_value(&req).unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::to_vec(&req.run().unwrap()).unwrap());
}

#[tokio::test]
async fn jobs_can_be_polled() {
    let (_dir, app) = test_app();
    let req = DoseRequest {
        elicitation: DoseElicitation {
            doses: vec![0.0, 25.0, 50.0],
            per_dose_priors: vec![
                Distribution::normal(0.0, 0.5).unwrap(),
                Distribution::normal(5.0, 0.5).unwrap(),
                Distribution::normal(6.0, 0.5).unwrap(),
            ],
        },
        models: vec![ModelKind::Linear, ModelKind::Emax3],
        draws: 200,
        seed: 9,
        grid: None,
        levels: (0.05, 0.95),
    };
    let (status, body) =
        call(&app, "POST", "/compute/dose?mode=job", None, Some(serde_json::to_value(&req).unwrap())).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let url = json_of(&body)["status_url"].as_str().unwrap().to_string();
    let mut job = Value::Null;
    for _ in 0..200 {
        job = json_of(&call(&app, "GET", &url, None, None).await.1);
        if job["status"] != "running" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(job["status"], "done");
    assert_eq!(job["result"], serde_json::to_value(req.run().unwrap()).unwrap());

    // Cancelling a finished job leaves it finished.
    let (_, body) = call(&app, "DELETE", &url, None, None).await;
    assert_eq!(json_of(&body)["status"], "done");
}
