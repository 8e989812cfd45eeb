//! WebSocket front end for [`LiveEngine`]. One trainee at a time; further
//! connections get a `busy` notice and are closed.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc as async_mpsc;
use tokio_tungstenite::tungstenite::Message;

use crate::live::{EngineConfig, LiveEngine, Reply};
use crate::protocol::{Envelope, ServerMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    /// Queued input is stepped every millisecond of wall-clock time.
    #[default]
    RealTime,
    /// Queued input is stepped as soon as a later message supersedes it.
    MaxSpeed,
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub engine: EngineConfig,
    pub clock: ClockMode,
}

enum Outbound {
    Text(String),
    Close,
}

/// Accepts connections until the listener fails.
pub async fn serve(listener: TcpListener, config: ServeConfig) -> std::io::Result<()> {
    LiveEngine::new(config.engine.clone()).map_err(std::io::Error::other)?;
    let busy = Arc::new(AtomicBool::new(false));
    loop {
        let (stream, _) = listener.accept().await?;
        let busy = Arc::clone(&busy);
        let config = config.clone();
        tokio::spawn(async move {
            if busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
                refuse_busy(stream).await;
                return;
            }
            run_connection(stream, config).await;
            busy.store(false, Ordering::Release);
        });
    }
}

async fn refuse_busy(stream: TcpStream) {
    let Ok(mut ws) = tokio_tungstenite::accept_async(stream).await else {
        return;
    };
    let notice = Envelope {
        seq: 1,
        message: ServerMessage::Busy {
            reason: "another trainee is connected".into(),
        },
    };
    let _ = ws.send(Message::text(notice.to_text())).await;
    let _ = ws.close(None).await;
}

async fn run_connection(stream: TcpStream, config: ServeConfig) {
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else {
        return;
    };
    let (mut sink, mut source) = ws.split();
    let (in_tx, in_rx) = mpsc::channel::<String>();
    let (out_tx, mut out_rx) = async_mpsc::unbounded_channel::<Outbound>();

    // all simulation work happens on this one thread, in arrival order
    let engine_thread = std::thread::spawn(move || {
        let Ok(mut engine) = LiveEngine::new(config.engine) else {
            return;
        };
        let send = |reply: Reply| -> bool {
            for env in reply.messages {
                if out_tx.send(Outbound::Text(env.to_text())).is_err() {
                    return false;
                }
            }
            if reply.close {
                let _ = out_tx.send(Outbound::Close);
                return false;
            }
            true
        };
        loop {
            let next = match config.clock {
                ClockMode::MaxSpeed => in_rx.recv().map_err(|_| true),
                ClockMode::RealTime => in_rx
                    .recv_timeout(Duration::from_millis(1))
                    .map_err(|e| e == mpsc::RecvTimeoutError::Disconnected),
            };
            let reply = match next {
                Ok(text) => engine.handle_text(&text),
                Err(true) => break,
                Err(false) => engine.tick(),
            };
            if !send(reply) {
                break;
            }
        }
    });

    let writer = tokio::spawn(async move {
        while let Some(out) = out_rx.recv().await {
            match out {
                Outbound::Text(text) => {
                    if sink.send(Message::text(text)).await.is_err() {
                        break;
                    }
                }
                Outbound::Close => {
                    let _ = sink.close().await;
                    break;
                }
            }
        }
    });

    while let Some(Ok(msg)) = source.next().await {
        match msg {
            Message::Text(text) => {
                if in_tx.send(text.to_string()).is_err() {
                    break;
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    drop(in_tx);
    let _ = tokio::task::spawn_blocking(move || engine_thread.join()).await;
    let _ = writer.await;
}
