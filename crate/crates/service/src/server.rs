//! HTTP service. Mutations go through one command queue served by a worker
//! thread; block training runs on its own thread and re-enters the queue.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{mpsc, oneshot, watch};

use driftline_core::orchestrator::{CompletedUpdate, Decision, Mode, Verdict};
use driftline_core::streams::{ScenarioEvent, ScenarioRunner, ScenarioScript, ScriptStep};
use driftline_core::{Error, RawSample};

use crate::api::*;

const EVENT_BATCH: usize = 512;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub script: ScenarioScript,
    /// Play the scripted events after bootstrap.
    pub play: bool,
    /// Pause between scripted steps.
    pub interval: Duration,
}

enum Op {
    Ingest(Vec<RawSample>),
    Decide(Decision),
    Edit(EditRequest),
    AddTarget(TargetRequest),
    PlayStep,
    Finished(Box<CompletedUpdate>),
}

type Reply = oneshot::Sender<Result<Value, ApiError>>;

struct Command {
    op: Op,
    reply: Option<Reply>,
}

/// Shared handle used by request handlers.
#[derive(Clone)]
pub struct Service {
    runner: Arc<Mutex<ScenarioRunner>>,
    queue: mpsc::UnboundedSender<Command>,
    last_seq: watch::Receiver<u64>,
}

impl Service {
    /// Bootstraps the instance and starts the worker (and the script player
    /// when enabled). Must be called inside a tokio runtime.
    pub fn start(config: ServeConfig) -> Result<Self, Error> {
        let mut runner = ScenarioRunner::new(config.script)?;
        runner.set_inline_updates(false);
        let (seq_tx, last_seq) = watch::channel(runner.instance().log().last_seq());
        let runner = Arc::new(Mutex::new(runner));
        let (queue, rx) = mpsc::unbounded_channel();
        let worker = Worker {
            runner: runner.clone(),
            queue: queue.clone(),
            seq: seq_tx,
        };
        thread::spawn(move || worker.run(rx));
        let service = Self {
            runner,
            queue,
            last_seq,
        };
        if config.play {
            let player = service.clone();
            tokio::spawn(async move { player.play(config.interval).await });
        }
        Ok(service)
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/state", get(get_state))
            .route("/events", get(get_events))
            .route("/ingest", post(post_ingest))
            .route("/decisions", post(post_decision))
            .route("/hyperparameters", patch(patch_hyperparameters))
            .route("/targets", post(post_target))
            .route("/rollback", post(post_rollback))
            .route("/metrics", get(get_metrics))
            .with_state(self.clone())
    }

    async fn send(&self, op: Op) -> Result<Value, ApiError> {
        let (tx, rx) = oneshot::channel();
        self.queue
            .send(Command { op, reply: Some(tx) })
            .map_err(|_| ApiError::unavailable())?;
        rx.await.map_err(|_| ApiError::unavailable())?
    }

    async fn play(&self, interval: Duration) {
        loop {
            match self.send(Op::PlayStep).await {
                Ok(Value::Bool(true)) | Err(_) => break,
                _ => {}
            }
            if !interval.is_zero() {
                tokio::time::sleep(interval).await;
            } else {
                tokio::task::yield_now().await;
            }
        }
    }

    fn read<T>(&self, f: impl FnOnce(&ScenarioRunner) -> T) -> T {
        f(&self.runner.lock().expect("runner lock poisoned"))
    }
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(config: ServeConfig, addr: SocketAddr) -> Result<(), crate::ServiceError> {
    let service = Service::start(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, service.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

struct Worker {
    runner: Arc<Mutex<ScenarioRunner>>,
    queue: mpsc::UnboundedSender<Command>,
    seq: watch::Sender<u64>,
}

impl Worker {
    fn run(self, mut rx: mpsc::UnboundedReceiver<Command>) {
        while let Some(Command { op, reply }) = rx.blocking_recv() {
            let (result, last_seq) = {
                let mut runner = self.runner.lock().expect("runner lock poisoned");
                let result = apply(&mut runner, op);
                self.start_updates(&mut runner);
                (result, runner.instance().log().last_seq())
            };
            self.seq.send_replace(last_seq);
            if let Some(reply) = reply {
                let _ = reply.send(result);
            } else if let Err(e) = result {
                eprintln!("driftline: {}", e.body.message);
            }
        }
    }

    fn start_updates(&self, runner: &mut ScenarioRunner) {
        let instance = runner.instance_mut();
        if *instance.mode() != Mode::Running {
            return;
        }
        let Some(block) = instance.next_triggered().map(str::to_string) else {
            return;
        };
        match instance.begin_update(&block) {
            Ok(job) => {
                let queue = self.queue.clone();
                thread::spawn(move || {
                    let done = job.execute();
                    let _ = queue.send(Command {
                        op: Op::Finished(Box::new(done)),
                        reply: None,
                    });
                });
            }
            Err(e) => eprintln!("driftline: cannot start update of {block}: {e}"),
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Value, ApiError> {
    serde_json::to_value(v).map_err(|e| ApiError::from(Error::from(e)))
}

fn apply(runner: &mut ScenarioRunner, op: Op) -> Result<Value, ApiError> {
    match op {
        Op::Ingest(samples) => {
            let instance = runner.instance_mut();
            for raw in &samples {
                instance.ingest(raw)?;
            }
            to_json(&IngestResponse {
                ingested: samples.len(),
                position: instance.position(),
                last_event: instance.log().last_seq(),
            })
        }
        Op::Decide(mut decision) => {
            let instance = runner.instance_mut();
            if matches!(decision.verdict, Verdict::Accept | Verdict::Reject) && decision.update_id.is_none() {
                match instance.mode() {
                    Mode::AwaitingDecision { update_id, .. } => decision.update_id = Some(*update_id),
                    _ => return Err(Error::Conflict("no update awaits a decision".into()).into()),
                }
            }
            to_json(&instance.apply_decision(decision)?)
        }
        Op::Edit(req) => {
            runner.instance_mut().set_hyperparameters(&req.edits)?;
            to_json(&runner.instance().state())
        }
        Op::AddTarget(req) => {
            let version = runner
                .instance_mut()
                .add_target(&req.target, req.head, req.strategy, &req.warmup)?;
            to_json(&TargetResponse {
                target: req.target,
                version,
            })
        }
        Op::PlayStep => play_step(runner),
        Op::Finished(done) => {
            runner.instance_mut().finish_update(*done)?;
            Ok(Value::Null)
        }
    }
}

/// One scripted sample or event. Returns `true` once the script is done.
/// Scripted events wait while an update trains; failing ones are reported
/// and skipped.
fn play_step(runner: &mut ScenarioRunner) -> Result<Value, ApiError> {
    let updating = matches!(runner.instance().mode(), Mode::Updating { .. });
    if updating && !matches!(runner.peek_event(), None | Some(ScenarioEvent::StreamSegment { .. })) {
        return Ok(Value::Bool(false));
    }
    match runner.next_step() {
        Ok(ScriptStep::Sample(raw)) => {
            if let Err(e) = runner.instance_mut().ingest(&raw) {
                eprintln!("driftline: scripted sample skipped: {e}");
            }
            Ok(Value::Bool(false))
        }
        Ok(ScriptStep::Applied(_)) => Ok(Value::Bool(false)),
        Ok(ScriptStep::Finished) => Ok(Value::Bool(true)),
        Err(e) => {
            eprintln!("driftline: {e}");
            Ok(Value::Bool(false))
        }
    }
}

async fn get_state(State(s): State<Service>) -> impl IntoResponse {
    Json(s.read(|r| r.instance().state()))
}

async fn get_metrics(State(s): State<Service>) -> Result<Json<Value>, ApiError> {
    let report = s.read(|r| r.instance().eval_report())?;
    Ok(Json(to_json(&report)?))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
}

/// Server-sent events from `since` (exclusive), or from `Last-Event-ID` on
/// reconnect. Each subscriber keeps its own cursor into the log.
async fn get_events(
    State(s): State<Service>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok());
    let cursor = resume.map_or(q.since, |r| r.max(q.since));
    let events = stream::unfold((cursor, s), |(cursor, mut s)| async move {
        loop {
            let batch: Vec<ApiEvent> = s.read(|r| {
                r.instance()
                    .log()
                    .since(cursor)
                    .iter()
                    .take(EVENT_BATCH)
                    .map(ApiEvent::from)
                    .collect()
            });
            if let Some(last) = batch.last() {
                let next = last.sequence;
                return Some((batch, (next, s)));
            }
            if s.last_seq.changed().await.is_err() {
                return None;
            }
        }
    })
    .flat_map(|batch| {
        stream::iter(batch.into_iter().map(|e| {
            let event = SseEvent::default()
                .id(e.sequence.to_string())
                .event(e.event.kind())
                .json_data(&e)
                .expect("event serializes");
            Ok(event)
        }))
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

async fn post_ingest(State(s): State<Service>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: IngestRequest = parse_body(&body)?;
    Ok(Json(s.send(Op::Ingest(req.into_samples())).await?))
}

async fn post_decision(State(s): State<Service>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let decision: Decision = parse_body(&body)?;
    Ok(Json(s.send(Op::Decide(decision)).await?))
}

async fn post_rollback(State(s): State<Service>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: RollbackRequest = parse_body(&body)?;
    Ok(Json(s.send(Op::Decide(Decision::rollback(req.version))).await?))
}

async fn patch_hyperparameters(State(s): State<Service>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: EditRequest = parse_body(&body)?;
    Ok(Json(s.send(Op::Edit(req)).await?))
}

async fn post_target(
    State(s): State<Service>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req: TargetRequest = parse_body(&body)?;
    Ok((StatusCode::CREATED, Json(s.send(Op::AddTarget(req)).await?)))
}
