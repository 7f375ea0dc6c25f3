//! WebSocket front end. Each session runs one stepping loop that owns the
//! scene; connections talk to it over queues. The first connection to send
//! an input drives; the rest only watch.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::MissedTickBehavior;
use tower_http::services::ServeDir;

use super::session::{Ack, Session, SessionConfig, SessionSnapshot, TeleopInput};
use super::TeleopError;
use crate::sim::SceneFile;

pub const DEFAULT_SNAPSHOT_HZ: f64 = 20.0;
const SNAPSHOT_BACKLOG: usize = 16;
const INPUT_QUEUE: usize = 256;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub scene: SceneFile,
    pub session: SessionConfig,
    pub snapshot_hz: f64,
    pub static_dir: Option<PathBuf>,
}

/// Client to server: a teleop input record.
pub type ClientMessage = TeleopInput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(SessionSnapshot),
    Ack(Ack),
    Error { message: String },
}

type InputReply = oneshot::Sender<Result<Ack, String>>;

#[derive(Clone)]
struct SessionHandle {
    inputs: mpsc::Sender<(TeleopInput, InputReply)>,
    snapshots: broadcast::Sender<Arc<str>>,
    clients: Arc<AtomicUsize>,
    driver_taken: Arc<AtomicBool>,
}

struct AppState {
    options: ServeOptions,
    sessions: Mutex<HashMap<String, SessionHandle>>,
}

impl AppState {
    fn session(&self, id: &str) -> Result<SessionHandle, TeleopError> {
        let mut sessions = self.sessions.lock().expect("session table lock poisoned");
        if let Some(h) = sessions.get(id) {
            return Ok(h.clone());
        }
        let session = Session::new(id, self.options.scene.clone(), self.options.session.clone())?;
        let (inputs, rx) = mpsc::channel(INPUT_QUEUE);
        let (snapshots, _) = broadcast::channel(SNAPSHOT_BACKLOG);
        let handle = SessionHandle {
            inputs,
            snapshots,
            clients: Arc::new(AtomicUsize::new(0)),
            driver_taken: Arc::new(AtomicBool::new(false)),
        };
        tokio::spawn(run_session(session, rx, handle.clone(), self.options.snapshot_hz));
        sessions.insert(id.to_owned(), handle.clone());
        Ok(handle)
    }
}

fn encode(msg: &ServerMessage) -> String {
    serde_json::to_string(msg).expect("server messages serialize")
}

async fn run_session(
    mut session: Session,
    mut inputs: mpsc::Receiver<(TeleopInput, InputReply)>,
    handle: SessionHandle,
    snapshot_hz: f64,
) {
    let mut step = tokio::time::interval(Duration::from_secs_f64(1.0 / session.rate_hz()));
    let mut display = tokio::time::interval(Duration::from_secs_f64(1.0 / snapshot_hz));
    display.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            biased;
            msg = inputs.recv() => {
                let Some((input, reply)) = msg else { break };
                let _ = reply.send(session.apply_input(&input).map_err(|e| e.to_string()));
            }
            _ = step.tick() => {
                if let Err(e) = session.tick() {
                    log::warn!("session {}: {e}", session.id());
                }
            }
            _ = display.tick() => {
                session.set_clients(handle.clients.load(Ordering::SeqCst));
                let text: Arc<str> = encode(&ServerMessage::Snapshot(session.snapshot())).into();
                // no receivers is fine; lagging ones drop frames
                let _ = handle.snapshots.send(text);
            }
        }
    }
}

async fn ws_handler(ws: WebSocketUpgrade, Path(id): Path<String>, State(state): State<Arc<AppState>>) -> Response {
    match state.session(&id) {
        Ok(handle) => ws.on_upgrade(move |socket| connection(socket, handle)),
        Err(e) => {
            log::error!("session {id}: {e}");
            Response::builder()
                .status(500)
                .body(e.to_string().into())
                .expect("static response")
        }
    }
}

async fn connection(socket: WebSocket, handle: SessionHandle) {
    handle.clients.fetch_add(1, Ordering::SeqCst);
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Arc<str>>();
    let mut snapshots = handle.snapshots.subscribe();
    let fanout_tx = out_tx.clone();
    let fanout = tokio::spawn(async move {
        loop {
            match snapshots.recv().await {
                Ok(text) => {
                    if fanout_tx.send(text).is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("slow consumer dropped {n} snapshots"),
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(text) = out_rx.recv().await {
            if sink.send(Message::Text(text.to_string())).await.is_err() {
                break;
            }
        }
    });

    let mut driving = false;
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<TeleopInput>(&text) {
            Err(e) => ServerMessage::Error {
                message: format!("bad input: {e}"),
            },
            Ok(input) => {
                if !driving {
                    driving = handle
                        .driver_taken
                        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
                        .is_ok();
                }
                if !driving {
                    ServerMessage::Error {
                        message: TeleopError::NotDriver.to_string(),
                    }
                } else {
                    let (tx, rx) = oneshot::channel();
                    if handle.inputs.send((input, tx)).await.is_err() {
                        break;
                    }
                    match rx.await {
                        Ok(Ok(ack)) => ServerMessage::Ack(ack),
                        Ok(Err(message)) => ServerMessage::Error { message },
                        Err(_) => break,
                    }
                }
            }
        };
        if out_tx.send(encode(&reply).into()).is_err() {
            break;
        }
    }
    if driving {
        handle.driver_taken.store(false, Ordering::SeqCst);
    }
    handle.clients.fetch_sub(1, Ordering::SeqCst);
    fanout.abort();
    drop(out_tx);
    let _ = writer.await;
}

pub fn router(options: ServeOptions) -> Router {
    let static_dir = options.static_dir.clone();
    let state = Arc::new(AppState {
        options,
        sessions: Mutex::new(HashMap::new()),
    });
    let app = Router::new().route("/session/:id", get(ws_handler)).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, options: ServeOptions) -> std::io::Result<()> {
    axum::serve(listener, router(options)).await
}
