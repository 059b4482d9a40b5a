//! Local HTTP+JSON job service.
//!
//! Requests are handled concurrently; jobs run on blocking threads, at most
//! `max_jobs` at a time, each one parallel internally. Cancellation is
//! cooperative: the engines check the job's [`RunControl`] between
//! trajectories or frames.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use sexit_core::{DegreeProfile, Error, RunControl};

use crate::jobs::{self, AnalyticParams, JobParams};
use crate::workspace::{JobRecord, JobStatus, Workspace, WorkspaceError};

pub struct AppState {
    pub workspace: Arc<Workspace>,
    controls: Mutex<HashMap<String, Arc<RunControl>>>,
    slots: Arc<Semaphore>,
}

impl AppState {
    pub fn new(workspace: Arc<Workspace>, max_jobs: usize) -> Arc<Self> {
        Arc::new(AppState {
            workspace,
            controls: Mutex::new(HashMap::new()),
            slots: Arc::new(Semaphore::new(max_jobs.max(1))),
        })
    }

    /// Workspace profiles first, then the built-in fixtures.
    fn lookup(&self, name: &str) -> Option<DegreeProfile> {
        self.workspace
            .get_profile(name)
            .ok()
            .or_else(|| jobs::fixture_lookup(name))
    }

    fn control(&self, id: &str) -> Option<Arc<RunControl>> {
        self.controls
            .lock()
            .expect("controls lock")
            .get(id)
            .cloned()
    }

    /// Record with live progress for running jobs.
    fn live(&self, mut job: JobRecord) -> JobRecord {
        if job.status == JobStatus::Running {
            if let Some(c) = self.control(&job.id) {
                job.progress = c.fraction();
            }
        }
        job
    }
}

/// Default number of concurrently running jobs.
pub fn default_max_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/profiles", get(list_profiles))
        .route(
            "/profiles/{name}",
            get(get_profile).post(post_profile).delete(delete_profile),
        )
        .route("/analytic/exit", axum::routing::post(analytic_exit))
        .route("/jobs", get(list_jobs).post(post_job))
        .route("/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/results/{id}", get(get_result))
        .route("/results/{id}/{file}", get(get_result_file))
        .with_state(state)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, workspace: Workspace, max_jobs: usize) -> anyhow::Result<()> {
    let state = AppState::new(Arc::new(workspace), max_jobs);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(
        address = %listener.local_addr()?,
        workspace = %state.workspace.root().display(),
        max_jobs,
        "serving"
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

// errors

pub struct ApiError {
    status: StatusCode,
    message: String,
    violations: Vec<Value>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    fn invalid(err: &Error) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: err.to_string(),
            violations: jobs::violations(err),
        }
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(err: WorkspaceError) -> Self {
        match &err {
            WorkspaceError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, err.to_string()),
            WorkspaceError::Conflict(_) | WorkspaceError::NotReady(_) => {
                ApiError::new(StatusCode::CONFLICT, err.to_string())
            }
            WorkspaceError::InvalidName(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, err.to_string())
            }
            WorkspaceError::Core(core) => ApiError::invalid(core),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.message, "violations": self.violations});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body by hand so malformed input gets the same error shape.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        let err = Error::Json(e);
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: err.to_string(),
            violations: vec![json!({"rule": "malformed_json", "message": err.to_string()})],
        }
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

// profiles

fn profile_view(name: &str, profile: &DegreeProfile) -> Value {
    json!({"name": name, "rate": profile.design_rate(), "profile": profile})
}

async fn list_profiles(State(state): State<Arc<AppState>>) -> Json<Value> {
    let list: Vec<Value> = state
        .workspace
        .list_profiles()
        .into_iter()
        .map(|(name, entry)| json!({"name": name, "rate": entry.rate}))
        .collect();
    Json(Value::Array(list))
}

async fn get_profile(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
) -> ApiResult<Json<Value>> {
    let profile = state.workspace.get_profile(&name)?;
    Ok(Json(profile_view(&name, &profile)))
}

async fn post_profile(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let profile: DegreeProfile = parse_body(&body)?;
    state.workspace.put_profile(&name, &profile)?;
    Ok((StatusCode::CREATED, Json(profile_view(&name, &profile))))
}

async fn delete_profile(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
) -> ApiResult<StatusCode> {
    state.workspace.delete_profile(&name)?;
    Ok(StatusCode::NO_CONTENT)
}

// analytic

async fn analytic_exit(
    State(state): State<Arc<AppState>>,
    body: axum::body::Bytes,
) -> ApiResult<Response> {
    let params: AnalyticParams = parse_body(&body)?;
    let bytes = blocking(move || -> Result<Vec<u8>, Error> {
        match JobParams::Analytic(params).prepare(&|n| state.lookup(n))? {
            JobParams::Analytic(p) => Ok(jobs::curve_set_json(&p.curve_set()?)),
            _ => unreachable!("prepare keeps the kind"),
        }
    })
    .await?
    .map_err(|e| ApiError::invalid(&e))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

// jobs

async fn list_jobs(State(state): State<Arc<AppState>>) -> Json<Vec<JobRecord>> {
    Json(
        state
            .workspace
            .jobs()
            .into_iter()
            .map(|j| state.live(j))
            .collect(),
    )
}

async fn get_job(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<JobRecord>> {
    let job = state.workspace.job(&id)?;
    Ok(Json(state.live(job)))
}

async fn post_job(
    State(state): State<Arc<AppState>>,
    body: axum::body::Bytes,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let params: JobParams = parse_body(&body)?;
    let lookup_state = state.clone();
    let params = blocking(move || params.prepare(&|n| lookup_state.lookup(n)))
        .await?
        .map_err(|e| ApiError::invalid(&e))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let record = JobRecord::queued(id.clone(), params);
    let control = Arc::new(RunControl::new());
    state
        .controls
        .lock()
        .expect("controls lock")
        .insert(id.clone(), control.clone());
    state.workspace.insert_job(record.clone())?;
    tracing::info!(%id, kind = ?record.kind, "job queued");
    tokio::spawn(run_job(state.clone(), id, control));
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn run_job(state: Arc<AppState>, id: String, control: Arc<RunControl>) {
    let permit = state.slots.clone().acquire_owned().await;
    let ws = state.workspace.clone();
    let started = ws.update_job(&id, |job| {
        if job.status != JobStatus::Queued {
            return Ok(None);
        }
        job.advance(JobStatus::Running)?;
        Ok(Some(job.params.clone()))
    });
    if let Ok(Some(params)) = started {
        let job_id = id.clone();
        let job_control = control.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            let outcome = jobs::execute(&params, &job_control)
                .map_err(|e| (matches!(e, Error::Cancelled), e.to_string()))
                .and_then(|art| {
                    ws.store_results(&job_id, &art)
                        .map_err(|e| (false, e.to_string()))
                });
            finish(&ws, &job_id, outcome);
        })
        .await;
        if let Err(e) = outcome {
            finish(
                &state.workspace,
                &id,
                Err((false, format!("job panicked: {e}"))),
            );
        }
    }
    drop(permit);
    state.controls.lock().expect("controls lock").remove(&id);
}

fn finish(ws: &Workspace, id: &str, outcome: Result<crate::workspace::ResultRef, (bool, String)>) {
    let res = ws.update_job(id, |job| {
        if job.status.is_terminal() {
            return Ok(());
        }
        match outcome {
            Ok(result) => {
                job.advance(JobStatus::Done)?;
                job.progress = 1.0;
                job.result = Some(result);
            }
            Err((true, _)) => job.advance(JobStatus::Cancelled)?,
            Err((false, message)) => {
                job.advance(JobStatus::Failed)?;
                job.error = Some(message);
            }
        }
        tracing::info!(id, status = ?job.status, "job finished");
        Ok(())
    });
    if let Err(e) = res {
        tracing::error!(id, error = %e, "could not record job outcome");
    }
}

/// Best-effort cancel. A queued job is retired at once (passing through
/// `running` without doing work); a running job stops at its next check.
async fn cancel_job(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let job = state.workspace.job(&id)?;
    if job.status.is_terminal() {
        return Ok((StatusCode::OK, Json(job)));
    }
    if let Some(c) = state.control(&id) {
        c.cancel();
    }
    let job = state.workspace.update_job(&id, |job| {
        if job.status == JobStatus::Queued {
            job.advance(JobStatus::Running)?;
            job.advance(JobStatus::Cancelled)?;
        }
        Ok(job.clone())
    })?;
    Ok((StatusCode::ACCEPTED, Json(state.live(job))))
}

// results

fn content_type(name: &str) -> &'static str {
    match name.rsplit('.').next() {
        Some("json") => "application/json",
        Some("csv") => "text/csv",
        Some("pgm") => "image/x-portable-graymap",
        _ => "application/octet-stream",
    }
}

fn file_response(name: String, bytes: Vec<u8>) -> Response {
    (
        [(header::CONTENT_TYPE, content_type(&name))],
        Body::from(bytes),
    )
        .into_response()
}

async fn get_result(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let (name, bytes) = state.workspace.read_result(&id, None)?;
    Ok(file_response(name, bytes))
}

async fn get_result_file(
    State(state): State<Arc<AppState>>,
    Path((id, file)): Path<(String, String)>,
) -> ApiResult<Response> {
    let (name, bytes) = state.workspace.read_result(&id, Some(&file))?;
    Ok(file_response(name, bytes))
}
