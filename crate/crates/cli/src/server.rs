//! WebSocket sessions plus the episode replay feed.
//!
//! Routes: `GET /ws` upgrades to one live session, `GET /episodes` lists the
//! recorded files and `GET /episodes/{name}` returns one JSONL episode.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::time::{interval, MissedTickBehavior};

use cardarena::engine::Roster;
use cardarena::session::{Phase, ServerMessage, Session};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub record_dir: PathBuf,
    /// Wall-clock duration of one engine tick.
    pub tick: Duration,
    pub roster: Roster,
}

/// Shared by the accept loop only; holds no match state.
#[derive(Clone)]
struct App {
    cfg: Arc<ServerConfig>,
    sessions: Arc<AtomicU64>,
}

pub fn router(cfg: ServerConfig) -> Router {
    let app = App { cfg: Arc::new(cfg), sessions: Arc::new(AtomicU64::new(0)) };
    Router::new()
        .route("/ws", get(upgrade))
        .route("/episodes", get(list_episodes))
        .route("/episodes/{name}", get(get_episode))
        .with_state(app)
}

pub async fn serve(listener: TcpListener, cfg: ServerConfig) -> std::io::Result<()> {
    axum::serve(listener, router(cfg)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<App>) -> Response {
    let n = app.sessions.fetch_add(1, Ordering::Relaxed);
    let ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let name = format!("session-{ms}-{n}");
    ws.on_upgrade(move |socket| run_session(socket, app.cfg, name))
}

async fn send_all(socket: &mut WebSocket, out: Vec<ServerMessage>) -> bool {
    for m in out {
        if socket.send(Message::Text(m.to_json().into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn run_session(mut socket: WebSocket, cfg: Arc<ServerConfig>, name: String) {
    let mut session = Session::new(cfg.roster.clone(), cfg.record_dir.clone(), name.clone());
    let mut clock = interval(cfg.tick);
    clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            msg = socket.recv() => {
                let out = match msg {
                    Some(Ok(Message::Text(t))) => {
                        let before = session.phase();
                        let out = session.handle_text(t.as_str());
                        // the next tick is one full period after start or resume
                        if before != Phase::Running && session.phase() == Phase::Running {
                            clock.reset();
                        }
                        out
                    }
                    Some(Ok(Message::Binary(_))) => vec![ServerMessage::reject("malformed_message")],
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => vec![],
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                };
                if !send_all(&mut socket, out).await {
                    break;
                }
            }
            _ = clock.tick() => {
                match session.tick() {
                    Ok(out) => {
                        if !send_all(&mut socket, out).await {
                            break;
                        }
                    }
                    Err(e) => {
                        log::error!("{name}: {e}");
                        break;
                    }
                }
            }
        }
    }
    match session.disconnect() {
        Ok(Some(p)) => log::info!("{name}: episode at {}", p.display()),
        Ok(None) => {}
        Err(e) => log::error!("{name}: could not flush episode: {e}"),
    }
}

fn valid_name(name: &str) -> bool {
    name.ends_with(".jsonl") && !name.starts_with('.') && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

async fn list_episodes(State(app): State<App>) -> Response {
    let mut names = Vec::new();
    if let Ok(mut rd) = tokio::fs::read_dir(&app.cfg.record_dir).await {
        while let Ok(Some(e)) = rd.next_entry().await {
            if let Some(n) = e.file_name().to_str().filter(|n| valid_name(n)) {
                names.push(n.to_string());
            }
        }
    }
    names.sort();
    ([(header::ACCESS_CONTROL_ALLOW_ORIGIN, "*")], Json(names)).into_response()
}

async fn get_episode(State(app): State<App>, Path(name): Path<String>) -> Response {
    if !valid_name(&name) {
        return (StatusCode::BAD_REQUEST, "invalid episode name").into_response();
    }
    match tokio::fs::read(app.cfg.record_dir.join(&name)).await {
        Ok(body) => ([(header::CONTENT_TYPE, "application/x-ndjson"), (header::ACCESS_CONTROL_ALLOW_ORIGIN, "*")], body).into_response(),
        Err(_) => (StatusCode::NOT_FOUND, "no such episode").into_response(),
    }
}

#[cfg(test)]
mod tests {
    use super::valid_name;

    #[test]
    fn episode_names_cannot_escape_the_record_dir() {
        assert!(valid_name("session-1-0.jsonl"));
        assert!(!valid_name("../x.jsonl"));
        assert!(!valid_name(".hidden.jsonl"));
        assert!(!valid_name("a/b.jsonl"));
        assert!(!valid_name("notes.txt"));
    }
}
