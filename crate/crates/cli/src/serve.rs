//! Live websocket service.
//!
//! One task owns the [`Engine`] and advances it on wall-clock ticks. Socket
//! handlers only talk to it through a command queue, and receive state
//! snapshots through a broadcast channel.
//!
//! Client → server: `{"type":"note_on"|"note_off","player":"A"|"B","note":n,"velocity":v}`
//! Server → client: `{"type":"state",...}` snapshots or `{"type":"error","message":...}`.

use std::sync::Arc;
use std::time::Duration;

use anyhow::Result;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use duet_core::midi::{normalize_note_off, MidiEvent};
use duet_core::qcore::{bell_weights, BitPair};
use duet_core::{Engine, EngineConfig, Port};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tokio::time::{Instant, MissedTickBehavior};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    NoteOn { player: Port, note: u8, velocity: u8 },
    NoteOff { player: Port, note: u8, velocity: u8 },
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let (_, event) = msg.to_event();
        event.validate().map_err(|e| e.to_string())?;
        Ok(msg)
    }

    pub fn to_event(&self) -> (Port, MidiEvent) {
        match *self {
            ClientMessage::NoteOn { player, note, velocity } => (
                player,
                MidiEvent::NoteOn {
                    channel: 0,
                    note,
                    velocity,
                },
            ),
            ClientMessage::NoteOff { player, note, velocity } => (
                player,
                MidiEvent::NoteOff {
                    channel: 0,
                    note,
                    velocity,
                },
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPlayer<T> {
    #[serde(rename = "A")]
    pub a: T,
    #[serde(rename = "B")]
    pub b: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    #[serde(rename = "type")]
    pub kind: String,
    pub t_ms: u64,
    pub s: f64,
    pub phi_plus_weight: f64,
    pub psi_plus_weight: f64,
    pub shots: Vec<BitPair>,
    pub cc: PerPlayer<u8>,
    pub target_cc: PerPlayer<u8>,
    pub avg: PerPlayer<Option<f64>>,
}

impl StateSnapshot {
    pub fn capture(engine: &Engine, t_ms: u64) -> Self {
        let st = engine.state();
        let (phi, psi) = bell_weights(st.last_s).unwrap_or((1.0, 0.0));
        StateSnapshot {
            kind: "state".into(),
            t_ms,
            s: st.last_s,
            phi_plus_weight: phi,
            psi_plus_weight: psi,
            shots: st.last_shots.clone(),
            cc: PerPlayer {
                a: st.current_cc[0],
                b: st.current_cc[1],
            },
            target_cc: PerPlayer {
                a: st.target_cc[0],
                b: st.target_cc[1],
            },
            avg: PerPlayer {
                a: st.window(Port::A).average(),
                b: st.window(Port::B).average(),
            },
        }
    }
}

pub fn error_message(message: &str) -> String {
    serde_json::json!({ "type": "error", "message": message }).to_string()
}

struct AppState {
    commands: mpsc::Sender<ClientMessage>,
    snapshots: broadcast::Sender<String>,
}

/// Serves `/ws` on `listener` until the process ends.
pub async fn run(listener: TcpListener, config: EngineConfig) -> Result<()> {
    let engine = Engine::new(config)?;
    let (commands, command_rx) = mpsc::channel(1024);
    let (snapshots, _) = broadcast::channel(256);
    tokio::spawn(engine_loop(engine, command_rx, snapshots.clone()));
    let app = Router::new()
        .route("/ws", get(ws_handler))
        .with_state(Arc::new(AppState { commands, snapshots }));
    axum::serve(listener, app).await?;
    Ok(())
}

async fn engine_loop(
    mut engine: Engine,
    mut commands: mpsc::Receiver<ClientMessage>,
    snapshots: broadcast::Sender<String>,
) {
    let start = Instant::now();
    let now_ms = || start.elapsed().as_millis() as u64;
    let mut ticker = tokio::time::interval(Duration::from_millis(engine.config().ramp_tick_ms));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            cmd = commands.recv() => {
                let Some(cmd) = cmd else { break };
                let (port, event) = cmd.to_event();
                // No MIDI transport is attached, so the relay frame is dropped.
                if let Err(e) = engine.on_midi_in(port, normalize_note_off(event), now_ms()) {
                    tracing::warn!("input rejected: {e}");
                }
            }
            _ = ticker.tick() => {
                let now = now_ms();
                match engine.step(now) {
                    Ok(frame) if !frame.is_empty() => {
                        if let Some(sim) = &frame.sim {
                            tracing::debug!(s = sim.s, a = sim.value_a, b = sim.value_b, "simulation");
                        }
                        let snapshot = StateSnapshot::capture(&engine, now);
                        let text = serde_json::to_string(&snapshot).expect("snapshot is plain data");
                        // No subscribers is fine.
                        let _ = snapshots.send(text);
                    }
                    Ok(_) => {}
                    Err(e) => tracing::warn!("engine step failed: {e}"),
                }
            }
        }
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| handle_socket(socket, state))
}

async fn handle_socket(mut socket: WebSocket, state: Arc<AppState>) {
    let mut rx = state.snapshots.subscribe();
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let reply = match incoming {
                    Some(Ok(Message::Text(text))) => match ClientMessage::parse(&text) {
                        Ok(cmd) => {
                            if state.commands.send(cmd).await.is_err() {
                                break;
                            }
                            None
                        }
                        Err(e) => Some(error_message(&e)),
                    },
                    Some(Ok(Message::Binary(_))) => Some(error_message("binary frames are not supported")),
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                    Some(Ok(_)) => None,
                };
                if let Some(reply) = reply {
                    if socket.send(Message::Text(reply.into())).await.is_err() {
                        break;
                    }
                }
            }
            snapshot = rx.recv() => match snapshot {
                Ok(text) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                // a newer snapshot follows within one tick
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
        }
    }
}
