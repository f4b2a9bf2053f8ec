//! Review queue for predicted triples, backed by an append-only decision log,
//! and its HTTP interface.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::explain::ExplanationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Model,
    Rule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    fn status(self) -> Status {
        match self {
            Verdict::Accept => Status::Accepted,
            Verdict::Reject => Status::Rejected,
        }
    }
}

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub score: f64,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SurfaceTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationView {
    pub path: Vec<[String; 3]>,
    pub length: usize,
    pub alpha: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub triple: SurfaceTriple,
    pub score: f64,
    pub source: Source,
    pub status: Status,
    /// Sorted by α, highest first.
    pub explanations: Vec<ExplanationView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub prediction_id: String,
    pub verdict: Verdict,
    pub reviewer: String,
    /// UTC seconds.
    pub timestamp: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogRecord {
    Decision(Decision),
    /// Returns a decided prediction to pending.
    Reopen {
        prediction_id: String,
        reviewer: String,
        timestamp: u64,
    },
}

/// Stable identifier of a triple: a prefix of the SHA-256 of its TSV form.
pub fn prediction_id(t: &SurfaceTriple) -> String {
    let digest = Sha256::digest(format!("{}\t{}\t{}", t.head, t.relation, t.tail).as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Joins predictions with their explanations. Duplicate prediction rows
/// collapse; predictions without explanations get an empty list.
pub fn build_queue(predictions: Vec<PredictionRecord>, explanations: Vec<ExplanationRecord>) -> Vec<Prediction> {
    let mut by_target: HashMap<SurfaceTriple, Vec<ExplanationView>> = HashMap::new();
    for e in explanations {
        let [head, relation, tail] = e.target;
        by_target.entry(SurfaceTriple { head, relation, tail }).or_default().push(ExplanationView {
            path: e.path,
            length: e.length,
            alpha: e.alpha,
            support: e.support,
        });
    }
    let mut seen = HashMap::new();
    let mut out: Vec<Prediction> = Vec::new();
    for p in predictions {
        let triple = SurfaceTriple {
            head: p.head,
            relation: p.relation,
            tail: p.tail,
        };
        if seen.contains_key(&triple) {
            continue;
        }
        seen.insert(triple.clone(), ());
        let mut explanations = by_target.get(&triple).cloned().unwrap_or_default();
        explanations.sort_by(|a, b| b.alpha.total_cmp(&a.alpha));
        out.push(Prediction {
            id: prediction_id(&triple),
            triple,
            score: p.score,
            source: p.source,
            status: Status::Pending,
            explanations,
        });
    }
    out.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
    out
}

pub fn load_queue(predictions: &Path, explanations: Option<&Path>) -> Result<Vec<Prediction>> {
    let preds = read_jsonl(predictions)?;
    let expls = match explanations {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    Ok(build_queue(preds, expls))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Page {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub items: Vec<Prediction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Ack {
    Recorded,
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReviewerStats {
    pub decisions: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub mean_elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stats {
    pub total: usize,
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub decisions: usize,
    pub mean_elapsed_ms: Option<f64>,
    pub accept_rate: Option<f64>,
    pub reviewers: BTreeMap<String, ReviewerStats>,
}

impl Stats {
    /// Decision-level statistics computed from log records alone.
    pub fn from_log(records: &[LogRecord]) -> Stats {
        let mut s = Stats::default();
        let mut elapsed = 0u64;
        let mut per: BTreeMap<String, (ReviewerStats, u64)> = BTreeMap::new();
        for r in records {
            if let LogRecord::Decision(d) = r {
                s.decisions += 1;
                elapsed += d.elapsed_ms;
                let (rs, total) = per.entry(d.reviewer.clone()).or_default();
                rs.decisions += 1;
                *total += d.elapsed_ms;
                match d.verdict {
                    Verdict::Accept => rs.accepted += 1,
                    Verdict::Reject => rs.rejected += 1,
                }
            }
        }
        if s.decisions > 0 {
            s.mean_elapsed_ms = Some(elapsed as f64 / s.decisions as f64);
        }
        s.reviewers = per
            .into_iter()
            .map(|(name, (mut rs, total))| {
                rs.mean_elapsed_ms = Some(total as f64 / rs.decisions as f64);
                (name, rs)
            })
            .collect();
        s
    }

    /// Share of accepted predictions that are correct according to `truth`.
    pub fn precision(accepted: &[SurfaceTriple], truth: &dyn Fn(&SurfaceTriple) -> bool) -> Option<f64> {
        (!accepted.is_empty()).then(|| accepted.iter().filter(|t| truth(t)).count() as f64 / accepted.len() as f64)
    }
}

/// The queue plus its decision log. All mutation goes through the log.
#[derive(Debug)]
pub struct ReviewState {
    items: Vec<Prediction>,
    index: HashMap<String, usize>,
    decisions: HashMap<String, Decision>,
    records: Vec<LogRecord>,
    log_path: PathBuf,
    log: File,
    last_timestamp: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Reads a decision log. A final line without a newline is a torn write that
/// was never acknowledged and is ignored.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

impl ReviewState {
    /// Opens the queue, replaying any existing log at `log_path`.
    pub fn open(items: Vec<Prediction>, log_path: &Path) -> Result<ReviewState> {
        let records = read_log(log_path)?;
        // Drop a torn tail so later appends start on a fresh line.
        if let Ok(text) = fs::read_to_string(log_path) {
            if !text.is_empty() && !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                let f = OpenOptions::new().write(true).open(log_path).map_err(|e| Error::io(log_path, e))?;
                f.set_len(keep as u64).map_err(|e| Error::io(log_path, e))?;
                f.sync_all().map_err(|e| Error::io(log_path, e))?;
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(|e| Error::io(log_path, e))?;
        let index = items.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        let mut state = ReviewState {
            items,
            index,
            decisions: HashMap::new(),
            records: Vec::new(),
            log_path: log_path.to_owned(),
            log,
            last_timestamp: 0,
        };
        for r in records {
            state.apply(&r)?;
            state.records.push(r);
        }
        Ok(state)
    }

    fn apply(&mut self, r: &LogRecord) -> Result<()> {
        let (id, ts) = match r {
            LogRecord::Decision(d) => (&d.prediction_id, d.timestamp),
            LogRecord::Reopen {
                prediction_id,
                timestamp,
                ..
            } => (prediction_id, *timestamp),
        };
        let &i = self
            .index
            .get(id)
            .ok_or_else(|| Error::Malformed(format!("log refers to unknown prediction {id}")))?;
        match r {
            LogRecord::Decision(d) => {
                self.items[i].status = d.verdict.status();
                self.decisions.insert(id.clone(), d.clone());
            }
            LogRecord::Reopen { .. } => {
                self.items[i].status = Status::Pending;
                self.decisions.remove(id);
            }
        }
        self.last_timestamp = self.last_timestamp.max(ts);
        Ok(())
    }

    fn append(&mut self, r: LogRecord) -> Result<()> {
        let mut line = serde_json::to_string(&r).expect("serializable");
        line.push('\n');
        self.log
            .write_all(line.as_bytes())
            .and_then(|_| self.log.flush())
            .and_then(|_| self.log.sync_data())
            .map_err(|e| Error::io(&self.log_path, e))?;
        self.apply(&r)?;
        self.records.push(r);
        Ok(())
    }

    fn timestamp(&self, requested: Option<u64>) -> u64 {
        requested.unwrap_or_else(now).max(self.last_timestamp)
    }

    pub fn get(&self, id: &str) -> Option<&Prediction> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn list(&self, status: Option<Status>, page: usize, page_size: usize) -> Page {
        let matching: Vec<&Prediction> = self.items.iter().filter(|p| status.is_none_or(|s| p.status == s)).collect();
        let items = matching
            .iter()
            .skip(page.saturating_mul(page_size))
            .take(page_size)
            .map(|p| (*p).clone())
            .collect();
        Page {
            total: matching.len(),
            page,
            page_size,
            items,
        }
    }

    /// Appends a decision to the log and only then updates the in-memory status.
    pub fn record(&mut self, prediction_id: &str, verdict: Verdict, reviewer: &str, elapsed_ms: u64, timestamp: Option<u64>) -> Result<Ack> {
        let p = self
            .get(prediction_id)
            .ok_or_else(|| Error::NotFound(format!("prediction {prediction_id}")))?;
        if p.status != Status::Pending {
            let prior = &self.decisions[prediction_id];
            if prior.verdict == verdict && prior.reviewer == reviewer && prior.elapsed_ms == elapsed_ms {
                return Ok(Ack::Duplicate);
            }
            return Err(Error::Conflict(format!("prediction {prediction_id} is already decided")));
        }
        let d = Decision {
            prediction_id: prediction_id.to_owned(),
            verdict,
            reviewer: reviewer.to_owned(),
            timestamp: self.timestamp(timestamp),
            elapsed_ms,
        };
        self.append(LogRecord::Decision(d))?;
        Ok(Ack::Recorded)
    }

    /// Administrative correction: returns a decided prediction to pending.
    pub fn reopen(&mut self, prediction_id: &str, reviewer: &str) -> Result<()> {
        let p = self
            .get(prediction_id)
            .ok_or_else(|| Error::NotFound(format!("prediction {prediction_id}")))?;
        if p.status == Status::Pending {
            return Err(Error::Conflict(format!("prediction {prediction_id} is pending")));
        }
        let timestamp = self.timestamp(None);
        self.append(LogRecord::Reopen {
            prediction_id: prediction_id.to_owned(),
            reviewer: reviewer.to_owned(),
            timestamp,
        })
    }

    pub fn accepted(&self) -> Vec<&Prediction> {
        self.items.iter().filter(|p| p.status == Status::Accepted).collect()
    }

    /// Accepted triples in the triple-file format.
    pub fn export_tsv(&self) -> String {
        self.accepted()
            .iter()
            .map(|p| format!("{}\t{}\t{}\n", p.triple.head, p.triple.relation, p.triple.tail))
            .collect()
    }

    pub fn statuses(&self) -> BTreeMap<String, Status> {
        self.items.iter().map(|p| (p.id.clone(), p.status)).collect()
    }

    pub fn stats(&self) -> Stats {
        let mut s = Stats::from_log(&self.records);
        s.total = self.items.len();
        for p in &self.items {
            match p.status {
                Status::Pending => s.pending += 1,
                Status::Accepted => s.accepted += 1,
                Status::Rejected => s.rejected += 1,
            }
        }
        let decided = s.accepted + s.rejected;
        s.accept_rate = (decided > 0).then(|| s.accepted as f64 / decided as f64);
        s
    }
}

pub type Shared = Arc<Mutex<ReviewState>>;

#[derive(Debug, Deserialize)]
struct ListQuery {
    status: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    prediction_id: String,
    verdict: Verdict,
    reviewer: String,
    #[serde(default)]
    elapsed_ms: u64,
    timestamp: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReopenBody {
    prediction_id: String,
    reviewer: String,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

fn error_response(e: Error) -> Response {
    let code = match e {
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Conflict(_) => StatusCode::CONFLICT,
        Error::Malformed(_) | Error::Config(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (code, Json(serde_json::json!({ "error": e.to_string() }))).into_response()
}

fn bad_request(msg: impl Into<String>) -> Response {
    error_response(Error::Malformed(msg.into()))
}

fn parse_status(s: &str) -> Option<Option<Status>> {
    match s {
        "" | "all" => Some(None),
        "pending" => Some(Some(Status::Pending)),
        "accepted" => Some(Some(Status::Accepted)),
        "rejected" => Some(Some(Status::Rejected)),
        _ => None,
    }
}

async fn list_handler(State(state): State<Shared>, query: std::result::Result<Query<ListQuery>, QueryRejection>) -> Response {
    let Ok(Query(q)) = query else {
        return bad_request("bad query string");
    };
    let Some(status) = parse_status(q.status.as_deref().unwrap_or("")) else {
        return bad_request("status must be pending, accepted, rejected or all");
    };
    let page_size = q.page_size.unwrap_or(50);
    if page_size == 0 || page_size > 10_000 {
        return bad_request("page_size must lie in 1..=10000");
    }
    let state = state.lock().expect("review state lock");
    Json(state.list(status, q.page.unwrap_or(0), page_size)).into_response()
}

async fn decision_handler(State(state): State<Shared>, body: Bytes) -> Response {
    let d: DecisionBody = match serde_json::from_slice(&body) {
        Ok(d) => d,
        Err(e) => return bad_request(e.to_string()),
    };
    if d.reviewer.trim().is_empty() {
        return bad_request("reviewer must not be empty");
    }
    let mut state = state.lock().expect("review state lock");
    match state.record(&d.prediction_id, d.verdict, &d.reviewer, d.elapsed_ms, d.timestamp) {
        Ok(ack) => Json(serde_json::json!({
            "result": ack,
            "prediction": state.get(&d.prediction_id),
        }))
        .into_response(),
        Err(e) => error_response(e),
    }
}

async fn reopen_handler(State(state): State<Shared>, body: Bytes) -> Response {
    let r: ReopenBody = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(e.to_string()),
    };
    let mut state = state.lock().expect("review state lock");
    match state.reopen(&r.prediction_id, &r.reviewer) {
        Ok(()) => Json(serde_json::json!({ "prediction": state.get(&r.prediction_id) })).into_response(),
        Err(e) => error_response(e),
    }
}

async fn export_handler(State(state): State<Shared>, query: std::result::Result<Query<ExportQuery>, QueryRejection>) -> Response {
    let Ok(Query(q)) = query else {
        return bad_request("bad query string");
    };
    if q.format.as_deref().is_some_and(|f| f != "tsv") {
        return bad_request("only format=tsv is supported");
    }
    let body = state.lock().expect("review state lock").export_tsv();
    ([(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")], body).into_response()
}

async fn stats_handler(State(state): State<Shared>) -> Response {
    Json(state.lock().expect("review state lock").stats()).into_response()
}

/// The wire API, with static files from `static_dir` served at `/`.
pub fn router(state: Shared, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/predictions", get(list_handler))
        .route("/api/decisions", post(decision_handler))
        .route("/api/reopen", post(reopen_handler))
        .route("/api/export", get(export_handler))
        .route("/api/stats", get(stats_handler))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(state: Shared, addr: &str, static_dir: Option<&Path>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr, e))?;
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr, e))
}
