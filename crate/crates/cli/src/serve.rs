//! Websocket server: one simulation thread, one thread per connection.
//!
//! Client messages go through a bounded queue to the simulation thread.
//! The simulation publishes frames into a single newest-wins slot; each
//! connection forwards the latest frame at most 30 times a second. Frames on
//! which the mode changes are also kept in a short bounded queue and sent in
//! order before newer frames, so one-tick modes still reach the client.

use crate::protocol::{self, ServerMessage};
use std::collections::VecDeque;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};
use tungstenite::{Message, WebSocket};
use vdi_core::session::Session;

const QUEUE_DEPTH: usize = 64;
const MIN_FRAME_INTERVAL: Duration = Duration::from_millis(34);
const POLL: Duration = Duration::from_millis(5);
const MAX_TRANSITIONS: usize = 16;

pub struct ServeOptions {
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
}

/// Latest serialized frame plus its sequence number, and the most recent
/// mode-change frames.
#[derive(Default)]
struct FrameSlot {
    seq: u64,
    json: String,
    transitions: VecDeque<(u64, String)>,
}

impl FrameSlot {
    /// The oldest mode-change frame not yet sent, else the latest frame.
    fn next_after(&self, sent: u64) -> Option<(u64, String)> {
        if let Some((seq, json)) = self.transitions.iter().find(|(seq, _)| *seq > sent) {
            return Some((*seq, json.clone()));
        }
        (self.seq > sent).then(|| (self.seq, self.json.clone()))
    }
}

/// A request from a connection, with a way to report an error back to it.
struct Request {
    text: String,
    reply: SyncSender<String>,
}

fn sim_loop(mut session: Session, requests: Receiver<Request>, slot: Arc<Mutex<FrameSlot>>, options: ServeOptions, stop: Arc<AtomicBool>) {
    let tick = Duration::from_secs_f64(session.scenario().tick / options.speed.max(1e-3));
    let mut next = Instant::now();
    let mut seq = 0u64;
    let mut mode = session.mode();
    while !stop.load(Ordering::Relaxed) {
        while let Ok(req) = requests.try_recv() {
            let result = protocol::parse_client(&req.text).and_then(|msg| protocol::apply(&mut session, msg));
            if let Err(message) = result {
                let _ = req.reply.try_send(ServerMessage::error(message).to_json());
            }
        }
        match session.tick() {
            Ok(Some(_)) => {}
            Ok(None) => break,
            Err(v) => {
                eprintln!("simulation stopped: {v}");
                break;
            }
        }
        if let Some(v) = session.take_violation() {
            eprintln!("warning: {v}");
        }
        seq += 1;
        let json = ServerMessage::State(protocol::frame(&session, seq)).to_json();
        {
            let mut s = slot.lock().expect("frame slot poisoned");
            if session.mode() != mode {
                mode = session.mode();
                if s.transitions.len() == MAX_TRANSITIONS {
                    s.transitions.pop_front();
                }
                s.transitions.push_back((seq, json.clone()));
            }
            s.seq = seq;
            s.json = json;
        }
        next += tick;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }
    stop.store(true, Ordering::Relaxed);
}

fn connection(stream: TcpStream, requests: SyncSender<Request>, slot: Arc<Mutex<FrameSlot>>, stop: Arc<AtomicBool>) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    let mut ws: WebSocket<TcpStream> = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            eprintln!("{peer}: handshake failed: {e}");
            return;
        }
    };
    if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let (reply_tx, reply_rx) = mpsc::sync_channel::<String>(QUEUE_DEPTH);
    let mut sent_seq = 0u64;
    let mut last_sent = Instant::now() - MIN_FRAME_INTERVAL;
    loop {
        if stop.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return;
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let req = Request {
                    text: text.to_string(),
                    reply: reply_tx.clone(),
                };
                match requests.try_send(req) {
                    Ok(()) => {}
                    Err(TrySendError::Full(_)) => {
                        let _ = ws.send(Message::text(ServerMessage::error("input queue full; message dropped").to_json()));
                    }
                    Err(TrySendError::Disconnected(_)) => return,
                }
            }
            Ok(Message::Binary(_)) => {
                let _ = ws.send(Message::text(ServerMessage::error("binary messages are not supported").to_json()));
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return;
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return,
            Err(e) => {
                eprintln!("{peer}: {e}");
                return;
            }
        }
        while let Ok(err) = reply_rx.try_recv() {
            if ws.send(Message::text(err)).is_err() {
                return;
            }
        }
        if last_sent.elapsed() >= MIN_FRAME_INTERVAL {
            let latest = slot.lock().expect("frame slot poisoned").next_after(sent_seq);
            if let Some((seq, json)) = latest {
                if ws.send(Message::text(json)).is_err() {
                    return;
                }
                sent_seq = seq;
                last_sent = Instant::now();
            }
        }
    }
}

/// Serves until the simulation ends. Prints the bound address first.
pub fn serve(listener: TcpListener, session: Session, options: ServeOptions) -> std::io::Result<()> {
    let (req_tx, req_rx) = mpsc::sync_channel::<Request>(QUEUE_DEPTH);
    let slot = Arc::new(Mutex::new(FrameSlot::default()));
    let stop = Arc::new(AtomicBool::new(false));
    let sim = {
        let slot = slot.clone();
        let stop = stop.clone();
        thread::spawn(move || sim_loop(session, req_rx, slot, options, stop))
    };
    listener.set_nonblocking(true)?;
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                let (tx, slot, stop) = (req_tx.clone(), slot.clone(), stop.clone());
                thread::spawn(move || connection(stream, tx, slot, stop));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(20)),
            Err(e) => return Err(e),
        }
    }
    let _ = sim.join();
    Ok(())
}
