use std::net::SocketAddr;
use std::path::Path;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use cardarena::engine::Roster;
use cardarena::session::ServerMessage;
use cardarena::trajectory::{load_episode, parse_episode, replay_episode, validate_episode, EpisodeOutcome};
use cardarena_cli::server::{serve, ServerConfig};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn spawn_server(dir: &Path, tick: Duration) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let cfg = ServerConfig { record_dir: dir.to_path_buf(), tick, roster: Roster::builtin() };
    tokio::spawn(serve(listener, cfg));
    addr
}

async fn connect(addr: SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn send(ws: &mut Ws, text: &str) {
    ws.send(Message::Text(text.into())).await.unwrap();
}

async fn next(ws: &mut Ws) -> ServerMessage {
    loop {
        let m = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("server went quiet").unwrap().unwrap();
        if let Message::Text(t) = m {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

async fn next_state_tick(ws: &mut Ws) -> u64 {
    loop {
        if let ServerMessage::State { tick, .. } = next(ws).await {
            return tick;
        }
    }
}

async fn http_get(addr: SocketAddr, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let text = String::from_utf8(buf).unwrap();
    let status = text[9..12].parse().unwrap();
    let body = text.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

/// Undoes chunked transfer encoding when the server used it.
fn dechunk(body: &str) -> String {
    if body.starts_with('{') || body.starts_with('[') {
        return body.to_string();
    }
    let mut out = String::new();
    let mut rest = body;
    while let Some((len, tail)) = rest.split_once("\r\n") {
        let n = usize::from_str_radix(len.trim(), 16).unwrap();
        if n == 0 {
            break;
        }
        out.push_str(&tail[..n]);
        rest = &tail[n + 2..];
    }
    out
}

#[tokio::test]
async fn start_play_and_reject_over_the_wire() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn_server(dir.path(), Duration::from_millis(20)).await;
    let mut ws = connect(addr).await;

    send(&mut ws, r#"{"type":"play","slot":1,"x":8,"y":4}"#).await;
    assert_eq!(next(&mut ws).await, ServerMessage::reject("not_started"));

    send(&mut ws, r#"{"type":"start","seed":3,"opponent":"easy"}"#).await;
    match next(&mut ws).await {
        ServerMessage::State { tick, view } => {
            assert_eq!(tick, 0);
            assert!(view.hand.iter().all(|&h| h > 0));
            assert_eq!(view.towers.len(), 6);
        }
        other => panic!("expected the first state, got {other:?}"),
    }

    send(&mut ws, "this is not json").await;
    assert_eq!(next(&mut ws).await, ServerMessage::reject("malformed_message"));
    send(&mut ws, r#"{"type":"play","slot":1,"x":8,"y":25}"#).await;
    // the session keeps ticking between rejects
    let reason = loop {
        match next(&mut ws).await {
            ServerMessage::Reject { reason } => break reason,
            ServerMessage::State { .. } => continue,
            other => panic!("{other:?}"),
        }
    };
    assert_eq!(reason, "illegal_cell");
    let t = next_state_tick(&mut ws).await;
    assert!(t >= 1);
}

#[tokio::test]
async fn pause_stops_the_clock() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn_server(dir.path(), Duration::from_millis(10)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, r#"{"type":"start","seed":4}"#).await;
    next_state_tick(&mut ws).await;
    let t = next_state_tick(&mut ws).await;
    send(&mut ws, r#"{"type":"pause"}"#).await;
    // drain ticks already in flight, then expect silence
    let mut last = t;
    while let Ok(Some(Ok(Message::Text(m)))) = tokio::time::timeout(Duration::from_millis(150), ws.next()).await {
        if let ServerMessage::State { tick, .. } = serde_json::from_str(m.as_str()).unwrap() {
            last = tick;
        }
    }
    assert!(tokio::time::timeout(Duration::from_millis(300), ws.next()).await.is_err(), "paused match kept ticking");
    send(&mut ws, r#"{"type":"resume"}"#).await;
    assert_eq!(next_state_tick(&mut ws).await, last + 1);
}

#[tokio::test]
async fn completed_match_is_served_by_the_replay_feed() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn_server(dir.path(), Duration::from_millis(1)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, r#"{"type":"start","seed":5,"opponent":"builtin"}"#).await;
    let mut expected = 0;
    let (outcome, path) = loop {
        match next(&mut ws).await {
            ServerMessage::State { tick, .. } => {
                assert_eq!(tick, expected, "exactly one state per tick");
                expected += 1;
            }
            ServerMessage::Result { outcome, episode_path } => break (outcome, episode_path),
            ServerMessage::Reject { reason } => panic!("unexpected reject {reason}"),
        }
    };
    assert_ne!(outcome, EpisodeOutcome::Abandoned);
    let ep = load_episode(&path).unwrap();
    assert_eq!(ep.frames.len() as u64, expected - 1);

    let (status, list) = http_get(addr, "/episodes").await;
    assert_eq!(status, 200);
    let names: Vec<String> = serde_json::from_str(&dechunk(&list)).unwrap();
    let name = Path::new(&path).file_name().unwrap().to_str().unwrap().to_string();
    assert_eq!(names, vec![name.clone()]);

    let (status, body) = http_get(addr, &format!("/episodes/{name}")).await;
    assert_eq!(status, 200);
    let fed = parse_episode(dechunk(&body).as_bytes()).unwrap();
    assert_eq!(fed, ep);
    let r = Roster::builtin();
    assert!(validate_episode(&fed, &r).is_empty());
    let end = replay_episode(&fed, &r).unwrap();
    assert_eq!(end.tick, expected - 1);

    assert_eq!(http_get(addr, "/episodes/missing.jsonl").await.0, 404);
    assert_eq!(http_get(addr, "/episodes/..%2Fsecret.jsonl").await.0, 400);
}

#[tokio::test]
async fn disconnect_records_an_abandoned_episode() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn_server(dir.path(), Duration::from_millis(5)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, r#"{"type":"start","seed":6}"#).await;
    for _ in 0..5 {
        next_state_tick(&mut ws).await;
    }
    ws.close(None).await.unwrap();
    drop(ws);
    let deadline = Instant::now() + Duration::from_secs(10);
    let file = loop {
        let found = std::fs::read_dir(dir.path()).unwrap().filter_map(|e| e.ok()).map(|e| e.path()).find(|p| p.extension().is_some_and(|x| x == "jsonl"));
        if let Some(f) = found {
            break f;
        }
        assert!(Instant::now() < deadline, "no episode written after disconnect");
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    let ep = load_episode(&file).unwrap();
    assert_eq!(ep.outcome, EpisodeOutcome::Abandoned);
    assert!(ep.frames.len() >= 4);
    replay_episode(&ep, &Roster::builtin()).unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn live_pacing_is_ten_hertz() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn_server(dir.path(), Duration::from_millis(100)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, r#"{"type":"start","seed":7}"#).await;
    next_state_tick(&mut ws).await;
    let mut stamps = Vec::new();
    for _ in 0..11 {
        next_state_tick(&mut ws).await;
        stamps.push(Instant::now());
    }
    let gaps: Vec<f64> = stamps.windows(2).map(|w| (w[1] - w[0]).as_secs_f64() * 1000.0).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    assert!((mean - 100.0).abs() <= 20.0, "mean gap {mean} ms ({gaps:?})");
    assert!((median - 100.0).abs() <= 20.0, "median gap {median} ms ({gaps:?})");
}
