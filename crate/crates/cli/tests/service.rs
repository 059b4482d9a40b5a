use std::fs;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use clap::Parser;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use sexit_cli::service::{router, AppState};
use sexit_cli::{Cli, Workspace};
use sexit_core::exit;
use sexit_core::profile::fixtures;
use sexit_core::ChannelSpec;

struct Harness {
    app: Router,
    dir: tempfile::TempDir,
}

fn harness(max_jobs: usize) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    Harness {
        app: router(AppState::new(Arc::new(ws), max_jobs)),
        dir,
    }
}

impl Harness {
    async fn send(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp
            .into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec();
        (status, bytes)
    }

    async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.send(method, uri, body).await;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }

    async fn submit(&self, params: Value) -> String {
        let (status, job) = self.json(Method::POST, "/jobs", Some(params)).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{job}");
        assert_eq!(job["status"], "queued");
        job["id"].as_str().unwrap().to_string()
    }

    /// Polls until the job leaves the given states.
    async fn wait_while(&self, id: &str, states: &[&str]) -> Value {
        let start = Instant::now();
        loop {
            let (status, job) = self.json(Method::GET, &format!("/jobs/{id}"), None).await;
            assert_eq!(status, StatusCode::OK);
            if !states.contains(&job["status"].as_str().unwrap()) {
                return job;
            }
            assert!(
                start.elapsed() < Duration::from_secs(300),
                "job {id} stuck: {job}"
            );
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}

fn cli(args: &[&str]) -> String {
    let cli = Cli::try_parse_from(std::iter::once("sexit").chain(args.iter().copied())).unwrap();
    let mut buf = Vec::new();
    sexit_cli::run(cli, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn bad_profile() -> Value {
    json!({
        "perspective": "edge",
        "lambda": [{"degree": 2, "weight": 0.5}, {"degree": 3, "weight": 0.4}],
        "rho": [{"degree": 6, "weight": 1.0}]
    })
}

#[tokio::test(flavor = "multi_thread")]
async fn profile_crud() {
    let h = harness(2);
    let profile: Value = serde_json::from_str(fixtures::CODE_B_ORIG).unwrap();

    let (status, created) = h
        .json(Method::POST, "/profiles/codeB", Some(profile.clone()))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["name"], "codeB");

    let (status, body) = h
        .json(Method::POST, "/profiles/codeB", Some(profile.clone()))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body["error"].as_str().unwrap().contains("already exists"));

    let (status, got) = h.json(Method::GET, "/profiles/codeB", None).await;
    assert_eq!(status, StatusCode::OK);
    let rate = fixtures::get("code_b_orig").unwrap().design_rate();
    assert_eq!(got["rate"].as_f64().unwrap(), rate);
    assert_eq!(got["profile"], profile);

    let (_, list) = h.json(Method::GET, "/profiles", None).await;
    assert_eq!(list, json!([{"name": "codeB", "rate": rate}]));

    // stored file is the core JSON format and reloads unchanged
    let stored = fs::read_to_string(h.dir.path().join("profiles/codeB.json")).unwrap();
    assert_eq!(stored, fixtures::get("code_b_orig").unwrap().to_json());

    let (status, _) = h.send(Method::DELETE, "/profiles/codeB", None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = h.send(Method::GET, "/profiles/codeB", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = h.send(Method::DELETE, "/profiles/codeB", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_profiles_and_params_list_violations() {
    let h = harness(1);
    let (status, body) = h
        .json(Method::POST, "/profiles/bad", Some(bad_profile()))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v = body["violations"].as_array().unwrap();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0]["rule"], "weight_sum");
    assert_eq!(v[0]["field"], "lambda");

    let (status, _) = h
        .json(Method::POST, "/profiles/.hidden", Some(bad_profile()))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = h
        .json(
            Method::POST,
            "/jobs",
            Some(
                json!({"kind": "sexit", "profile": bad_profile(), "n": 100, "channel": "bec:0.3"}),
            ),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["violations"][0]["rule"], "weight_sum");

    let (status, body) = h
        .json(
            Method::POST,
            "/jobs",
            Some(json!({"kind": "ber", "profile": "reg36", "n": 13, "channel": "bec", "points": [0.3]})),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["violations"][0]["rule"], "infeasible");

    let (status, body) = h
        .json(Method::POST, "/jobs", Some(json!({"kind": "nope"})))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["violations"][0]["rule"], "malformed_json");

    let (status, _) = h.send(Method::GET, "/jobs/unknown", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = h.send(Method::DELETE, "/jobs/unknown", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = h.send(Method::GET, "/results/unknown", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn analytic_exit_passes_core_curves_through() {
    let h = harness(1);
    let (status, set) = h
        .json(
            Method::POST,
            "/analytic/exit",
            Some(json!({"profile": "code_a_orig", "channel": "bec:0.25", "points": 51})),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let profile = fixtures::get("code_a_orig").unwrap();
    let ch = ChannelSpec::parse("bec:0.25", profile.design_rate()).unwrap();
    let ia = set["ia"].as_array().unwrap();
    assert_eq!(ia.len(), 51);
    for (k, x) in ia.iter().enumerate() {
        let x = x.as_f64().unwrap();
        assert!(
            (set["vnd"][k].as_f64().unwrap() - exit::vnd_curve(&profile, x, &ch)).abs() <= 1e-12
        );
        assert!(
            (set["cnd"][k].as_f64().unwrap() - exit::cnd_curve(&profile, x, &ch)).abs() <= 1e-12
        );
    }
    assert_eq!(set["tunnel"]["open"], true);

    let (status, body) = h
        .json(
            Method::POST,
            "/analytic/exit",
            Some(json!({"profile": "missing", "channel": "bec:0.25"})),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("unknown profile"));
}

#[tokio::test(flavor = "multi_thread")]
async fn ber_job_lifecycle_matches_cli_bytes() {
    let h = harness(2);
    let id = h
        .submit(json!({
            "kind": "ber",
            "profile": "reg36",
            "n": 60,
            "channel": "bec",
            "points": [0.3, 0.35, 0.4],
            "stop": {"min_bit_errors": 20, "max_frames": 400},
            "seed": 5
        }))
        .await;
    let job = h.wait_while(&id, &["queued", "running"]).await;
    assert_eq!(job["status"], "done", "{job}");
    assert_eq!(job["progress"], 1.0);
    assert_eq!(job["result"]["primary"], "ber.csv");

    let (status, csv) = h.send(Method::GET, &format!("/results/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ber.csv");
    cli(&[
        "ber",
        "--profile",
        "reg36",
        "--n",
        "60",
        "--channel",
        "bec",
        "--points",
        "0.3,0.35,0.4",
        "--min-errors",
        "20",
        "--max-frames",
        "400",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(csv, fs::read(&out).unwrap());

    // the stored artifact is the served one
    let stored = fs::read(h.dir.path().join("results").join(&id).join("ber.csv")).unwrap();
    assert_eq!(stored, csv);
}

#[tokio::test(flavor = "multi_thread")]
async fn sexit_job_matches_cli_bytes() {
    let h = harness(2);
    let stored: Value = serde_json::from_str(fixtures::REG35).unwrap();
    let (status, _) = h.json(Method::POST, "/profiles/mine", Some(stored)).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = h
        .submit(json!({
            "kind": "sexit",
            "profile": "mine",
            "n": 155,
            "channel": "bec:0.25",
            "trajectories": 30,
            "grid": 40,
            "seed": 9
        }))
        .await;
    let job = h.wait_while(&id, &["queued", "running"]).await;
    assert_eq!(job["status"], "done", "{job}");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig");
    cli(&[
        "sexit",
        "--profile",
        "reg35",
        "--n",
        "155",
        "--channel",
        "bec:0.25",
        "--m",
        "30",
        "--grid",
        "40",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    for file in [
        "bundle.json",
        "bins.csv",
        "vnd.pgm",
        "cnd.pgm",
        "summary.json",
    ] {
        let (status, served) = h
            .send(Method::GET, &format!("/results/{id}/{file}"), None)
            .await;
        assert_eq!(status, StatusCode::OK, "{file}");
        assert_eq!(served, fs::read(out.join(file)).unwrap(), "{file} differs");
    }
    let (_, primary) = h.send(Method::GET, &format!("/results/{id}"), None).await;
    assert_eq!(primary, fs::read(out.join("bundle.json")).unwrap());
    let (status, _) = h
        .send(Method::GET, &format!("/results/{id}/other.txt"), None)
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn analytic_and_threshold_jobs() {
    let h = harness(2);
    let analytic = h
        .submit(
            json!({"kind": "analytic", "profile": "reg36", "channel": "awgn:1.0", "points": 11}),
        )
        .await;
    let threshold = h
        .submit(json!({"kind": "threshold", "profile": "reg36", "channel": "bec"}))
        .await;
    for id in [&analytic, &threshold] {
        let job = h.wait_while(id, &["queued", "running"]).await;
        assert_eq!(job["status"], "done", "{job}");
    }
    let (_, t) = h
        .json(Method::GET, &format!("/results/{threshold}"), None)
        .await;
    assert!((t["threshold"].as_f64().unwrap() - 0.4294).abs() < 1e-3);

    let (_, synchronous) = h
        .send(
            Method::POST,
            "/analytic/exit",
            Some(json!({"profile": "reg36", "channel": "awgn:1.0", "points": 11})),
        )
        .await;
    let (_, from_job) = h
        .send(Method::GET, &format!("/results/{analytic}"), None)
        .await;
    assert_eq!(synchronous, from_job);
}

#[tokio::test(flavor = "multi_thread")]
async fn cancelling_a_running_sexit_job_leaves_no_artifacts() {
    let h = harness(1);
    let id = h
        .submit(json!({
            "kind": "sexit",
            "profile": "reg35",
            "n": 155,
            "channel": "bec:0.45",
            "trajectories": 10_000_000,
            "seed": 1
        }))
        .await;
    let running = h.wait_while(&id, &["queued"]).await;
    assert_eq!(running["status"], "running");

    // progress moves while running
    let start = Instant::now();
    loop {
        let (_, job) = h.json(Method::GET, &format!("/jobs/{id}"), None).await;
        if job["progress"].as_f64().unwrap() > 0.0 {
            break;
        }
        assert!(
            start.elapsed() < Duration::from_secs(60),
            "no progress reported"
        );
        tokio::time::sleep(Duration::from_millis(20)).await;
    }

    let (status, _) = h.json(Method::DELETE, &format!("/jobs/{id}"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = h.wait_while(&id, &["running"]).await;
    assert_eq!(job["status"], "cancelled");
    assert!(job["result"].is_null());

    let (status, _) = h.send(Method::GET, &format!("/results/{id}"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let results = h.dir.path().join("results");
    assert!(!results.join(&id).exists());
    assert_eq!(fs::read_dir(&results).unwrap().count(), 0);

    // cancelling again is a no-op
    let (status, again) = h.json(Method::DELETE, &format!("/jobs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["status"], "cancelled");
}

#[tokio::test(flavor = "multi_thread")]
async fn worker_pool_is_bounded_and_queued_jobs_cancel() {
    let h = harness(1);
    let long = json!({
        "kind": "sexit",
        "profile": "reg35",
        "n": 155,
        "channel": "bec:0.45",
        "trajectories": 10_000_000,
        "seed": 2
    });
    let first = h.submit(long.clone()).await;
    let second = h.submit(long).await;
    h.wait_while(&first, &["queued"]).await;
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, job) = h.json(Method::GET, &format!("/jobs/{second}"), None).await;
    assert_eq!(job["status"], "queued", "only one slot");

    let (_, job) = h
        .json(Method::DELETE, &format!("/jobs/{second}"), None)
        .await;
    assert_eq!(job["status"], "cancelled");
    h.json(Method::DELETE, &format!("/jobs/{first}"), None)
        .await;
    let job = h.wait_while(&first, &["running"]).await;
    assert_eq!(job["status"], "cancelled");

    let (_, list) = h.json(Method::GET, "/jobs", None).await;
    assert_eq!(list.as_array().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn failed_jobs_report_the_error() {
    let h = harness(1);
    // strict girth on a profile with forced 4-cycles cannot produce a graph
    let id = h
        .submit(json!({
            "kind": "sexit",
            "profile": "code_b_orig",
            "n": 128,
            "channel": "bec:0.3",
            "trajectories": 2,
            "girth": {"budget_per_edge": 5, "strict": true}
        }))
        .await;
    let job = h.wait_while(&id, &["queued", "running"]).await;
    assert_eq!(job["status"], "failed");
    assert!(job["error"].as_str().unwrap().contains("4-cycles"), "{job}");
    assert!(job["result"].is_null());
}

#[tokio::test(flavor = "multi_thread")]
async fn index_is_persisted_for_restarts() {
    let h = harness(1);
    let id = h
        .submit(json!({"kind": "threshold", "profile": "reg36", "channel": "bec"}))
        .await;
    h.wait_while(&id, &["queued", "running"]).await;
    let reopened = Workspace::open(h.dir.path()).unwrap();
    let job = reopened.job(&id).unwrap();
    assert_eq!(job.status, sexit_cli::JobStatus::Done);
    let (_, bytes) = reopened.read_result(&id, None).unwrap();
    let (_, served) = h.send(Method::GET, &format!("/results/{id}"), None).await;
    assert_eq!(bytes, served);
}
