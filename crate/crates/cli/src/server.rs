//! Loopback HTTP service that feeds the session UI and persists its responses.
//!
//! Endpoints: `GET /api/session`, `GET /api/stimulus/{id}`, `POST /api/response`,
//! `GET /api/progress`. Every JSON payload carries `schema_version`.

use std::collections::HashSet;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sirds_core::experiment::{Label, SessionManifest, TrialRecord, SCHEMA_VERSION};
use sirds_core::io::{append_record, read_manifest, read_records};
use sirds_core::session::{manifest_path, responses_path, stimulus_stem, STIMULI_DIR};
use tower_http::services::ServeDir;

use crate::CliError;

/// Body of `POST /api/response`. Correctness is derived server-side from the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseSubmission {
    pub schema_version: u32,
    #[serde(default)]
    pub subject: Option<String>,
    pub trial_index: usize,
    pub stimulus_id: String,
    pub perceived_time_ms: f64,
    pub choice: Label,
    #[serde(default)]
    pub training: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Test,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextTrial {
    pub phase: Phase,
    pub trial_index: Option<usize>,
    pub stimulus_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub schema_version: u32,
    pub subject: String,
    pub experiment_id: u8,
    pub training_total: usize,
    pub training_answered: usize,
    pub total_trials: usize,
    pub answered: usize,
    pub next: NextTrial,
}

#[derive(Debug)]
pub enum SubmitError {
    Invalid(String),
    Duplicate(String),
    Storage(String),
}

/// `(subject, training, trial_index)`
type AnswerKey = (String, bool, usize);

pub struct Session {
    pub dir: PathBuf,
    pub manifest: SessionManifest,
    log: PathBuf,
    pool: HashSet<String>,
    /// Held across the append so the log has a single writer.
    answered: Mutex<HashSet<AnswerKey>>,
}

impl Session {
    /// Opens a built session directory, picking up any responses already on disk.
    pub fn open(dir: &Path) -> sirds_core::Result<Self> {
        let manifest = read_manifest(&manifest_path(dir))?;
        if !dir.join(STIMULI_DIR).is_dir() {
            return Err(sirds_core::Error::Data(format!(
                "{} has no {STIMULI_DIR} directory",
                dir.display()
            )));
        }
        let log = responses_path(dir);
        let mut answered = HashSet::new();
        if log.is_file() {
            for r in read_records(&log)? {
                answered.insert((r.subject, r.training, r.trial_index));
            }
        }
        let pool = manifest
            .trials
            .iter()
            .map(|t| t.stimulus_id.clone())
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            log,
            pool,
            answered: Mutex::new(answered),
        })
    }

    fn next_for(&self, answered: &HashSet<AnswerKey>, subject: &str) -> NextTrial {
        let open =
            |training: bool, i: usize| !answered.contains(&(subject.to_string(), training, i));
        if let Some(i) = (0..self.manifest.training_ids.len()).find(|&i| open(true, i)) {
            return NextTrial {
                phase: Phase::Training,
                trial_index: Some(i),
                stimulus_id: Some(self.manifest.training_ids[i].clone()),
            };
        }
        match self.manifest.trials.iter().find(|t| open(false, t.index)) {
            Some(t) => NextTrial {
                phase: Phase::Test,
                trial_index: Some(t.index),
                stimulus_id: Some(t.stimulus_id.clone()),
            },
            None => NextTrial {
                phase: Phase::Done,
                trial_index: None,
                stimulus_id: None,
            },
        }
    }

    pub fn progress(&self, subject: &str) -> Progress {
        let answered = self.answered.lock().unwrap_or_else(|e| e.into_inner());
        let count = |training: bool| {
            answered
                .iter()
                .filter(|k| k.0 == subject && k.1 == training)
                .count()
        };
        Progress {
            schema_version: SCHEMA_VERSION,
            subject: subject.to_string(),
            experiment_id: self.manifest.experiment_id.id(),
            training_total: self.manifest.training_ids.len(),
            training_answered: count(true),
            total_trials: self.manifest.trials.len(),
            answered: count(false),
            next: self.next_for(&answered, subject),
        }
    }

    /// Validates and durably appends one response, then reports what comes next.
    pub fn submit(&self, body: &[u8]) -> Result<(TrialRecord, NextTrial), SubmitError> {
        let sub: ResponseSubmission = serde_json::from_slice(body)
            .map_err(|e| SubmitError::Invalid(format!("malformed response: {e}")))?;
        if sub.schema_version != SCHEMA_VERSION {
            return Err(SubmitError::Invalid(format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                sub.schema_version
            )));
        }
        let subject = sub.subject.unwrap_or_else(|| "anonymous".to_string());
        if subject.is_empty() {
            return Err(SubmitError::Invalid("subject must not be empty".into()));
        }
        let record = TrialRecord::evaluate(
            &self.manifest,
            subject.clone(),
            sub.trial_index,
            &sub.stimulus_id,
            sub.choice,
            sub.perceived_time_ms,
            sub.training,
        )
        .map_err(|e| SubmitError::Invalid(e.to_string()))?;

        let mut answered = self.answered.lock().unwrap_or_else(|e| e.into_inner());
        let key = (subject.clone(), sub.training, sub.trial_index);
        if answered.contains(&key) {
            let kind = if sub.training {
                "training trial"
            } else {
                "trial"
            };
            return Err(SubmitError::Duplicate(format!(
                "{kind} {} already answered by {subject}",
                sub.trial_index
            )));
        }
        // acknowledge only after the line is on disk
        append_record(&self.log, &record).map_err(|e| SubmitError::Storage(e.to_string()))?;
        answered.insert(key);
        let next = self.next_for(&answered, &subject);
        Ok((record, next))
    }

    fn stimulus_path(&self, id: &str) -> Option<PathBuf> {
        // only ids from the manifest are served, which also rules out path tricks
        self.pool
            .contains(id)
            .then(|| stimulus_stem(&self.dir, id).with_extension("png"))
    }
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (
        status,
        Json(json!({ "schema_version": SCHEMA_VERSION, "error": msg.into() })),
    )
        .into_response()
}

async fn get_session(State(s): State<Arc<Session>>) -> Response {
    Json(&s.manifest).into_response()
}

async fn get_stimulus(State(s): State<Arc<Session>>, UrlPath(id): UrlPath<String>) -> Response {
    let id = id.strip_suffix(".png").unwrap_or(&id);
    let Some(path) = s.stimulus_path(id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown stimulus {id}"));
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => (
            [
                (header::CONTENT_TYPE, "image/png"),
                (header::CACHE_CONTROL, "no-store"),
            ],
            bytes,
        )
            .into_response(),
        Err(e) => error(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("{}: {e}", path.display()),
        ),
    }
}

#[derive(Debug, Deserialize)]
struct ProgressQuery {
    subject: Option<String>,
}

async fn get_progress(State(s): State<Arc<Session>>, Query(q): Query<ProgressQuery>) -> Response {
    let subject = q.subject.unwrap_or_else(|| "anonymous".to_string());
    Json(s.progress(&subject)).into_response()
}

async fn post_response(State(s): State<Arc<Session>>, body: Bytes) -> Response {
    let outcome = tokio::task::spawn_blocking(move || s.submit(&body)).await;
    match outcome {
        Ok(Ok((record, next))) => Json(json!({
            "schema_version": SCHEMA_VERSION,
            "accepted": true,
            "correct": record.correct,
            "next": next,
        }))
        .into_response(),
        Ok(Err(SubmitError::Invalid(msg))) => error(StatusCode::BAD_REQUEST, msg),
        Ok(Err(SubmitError::Duplicate(msg))) => error(StatusCode::CONFLICT, msg),
        Ok(Err(SubmitError::Storage(msg))) => error(StatusCode::INTERNAL_SERVER_ERROR, msg),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(session: Arc<Session>, ui: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/stimulus/{id}", get(get_stimulus))
        .route("/api/progress", get(get_progress))
        .route("/api/response", post(post_response))
        .with_state(session);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds the loopback interface; a busy port is reported before anything is served.
pub async fn bind(port: u16) -> Result<tokio::net::TcpListener, CliError> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Startup(format!("cannot bind {addr}: {e}")))
}

pub async fn serve(session_dir: &Path, port: u16, ui: Option<&Path>) -> Result<(), CliError> {
    let session = Arc::new(Session::open(session_dir)?);
    if let Some(dir) = ui {
        if !dir.is_dir() {
            return Err(CliError::Startup(format!(
                "UI directory {} does not exist",
                dir.display()
            )));
        }
    }
    let listener = bind(port).await?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::Startup(e.to_string()))?;
    eprintln!(
        "serving experiment {} ({} trials) on http://{addr}",
        session.manifest.experiment_id.id(),
        session.manifest.trials.len()
    );
    axum::serve(listener, router(session, ui))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Startup(e.to_string()))
}
