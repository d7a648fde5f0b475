//! Socket ingestion. Each connection carries one capture stream in the
//! event file format; the server acks every [`ACK_EVERY`] events once they
//! are durable, and once more with the final count when the client closes
//! its side. A single writer thread owns the engine. A client that
//! reconnects may resend events an earlier connection of the same session
//! already delivered; those are acknowledged without being stored again.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpListener;
#[cfg(unix)]
use std::os::unix::net::UnixListener;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};
use vme_core::model::{parse_event, EVENTS_HEADER};
use vme_core::{Engine, IngestSummary};

pub const ACK_EVERY: u64 = 100;
const TICK: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ListenAddr {
    Tcp(String),
    Unix(String),
}

impl ListenAddr {
    /// `unix:<path>`, `tcp:<host:port>` or a bare `<host:port>`.
    pub fn parse(s: &str) -> ListenAddr {
        if let Some(path) = s.strip_prefix("unix:") {
            ListenAddr::Unix(path.to_string())
        } else {
            ListenAddr::Tcp(s.strip_prefix("tcp:").unwrap_or(s).to_string())
        }
    }
}

type Reply = Sender<Result<u64, String>>;

enum Msg {
    Open(u64, Reply),
    Event(u64, Box<vme_core::model::RawEvent>),
    /// Durability barrier; replies with the connection's accepted count.
    Sync(u64, Reply),
    Close(u64, Reply),
}

struct Active {
    conn: u64,
    accepted: u64,
    failed: Option<String>,
    last_arrival: Instant,
    /// Highest event id delivered by earlier connections.
    resume_floor: Option<u64>,
}

/// Owns the engine; serializes every append.
fn writer(mut engine: Engine, rx: Receiver<Msg>) -> IngestSummary {
    let mut active: Option<Active> = None;
    let mut session_last_id: Option<u64> = None;
    loop {
        let msg = match rx.recv_timeout(TICK) {
            Ok(m) => m,
            Err(RecvTimeoutError::Timeout) => {
                if let Some(a) = &active {
                    // Batch cadence runs on event time, advanced by the wall
                    // time since the last arrival.
                    if let Some(last) = engine.last_event_timestamp() {
                        let now = last + a.last_arrival.elapsed().as_millis() as i64;
                        if let Err(e) = engine.tick(now) {
                            log::error!("batch analysis failed: {e}");
                        }
                    }
                }
                continue;
            }
            Err(RecvTimeoutError::Disconnected) => break,
        };
        match msg {
            Msg::Open(conn, reply) => {
                let res = match &active {
                    Some(_) => Err("busy: another capture stream is attached".to_string()),
                    None => {
                        active = Some(Active {
                            conn,
                            accepted: 0,
                            failed: None,
                            last_arrival: Instant::now(),
                            resume_floor: session_last_id,
                        });
                        Ok(0)
                    }
                };
                let _ = reply.send(res);
            }
            Msg::Event(conn, event) => {
                let Some(a) = active.as_mut().filter(|a| a.conn == conn) else {
                    continue;
                };
                if a.failed.is_some() {
                    continue;
                }
                a.last_arrival = Instant::now();
                if a.resume_floor.is_some_and(|floor| event.event_id <= floor) {
                    log::debug!("event {} already delivered; skipped", event.event_id);
                    a.accepted += 1;
                    continue;
                }
                let id = event.event_id;
                match engine.push_event(*event) {
                    Ok(()) => {
                        a.accepted += 1;
                        session_last_id = Some(id);
                    }
                    Err(e) => a.failed = Some(e.to_string()),
                }
            }
            Msg::Sync(conn, reply) => {
                let res = match active.as_ref().filter(|a| a.conn == conn) {
                    None => Err("stream is not attached".to_string()),
                    Some(Active {
                        failed: Some(f), ..
                    }) => Err(f.clone()),
                    Some(a) => engine.sync().map(|_| a.accepted).map_err(|e| e.to_string()),
                };
                let _ = reply.send(res);
            }
            Msg::Close(conn, reply) => {
                let Some(a) = active.take_if(|a| a.conn == conn) else {
                    let _ = reply.send(Err("stream is not attached".to_string()));
                    continue;
                };
                let ended = engine.end_stream().map_err(|e| e.to_string());
                let res = match (a.failed, ended) {
                    (Some(f), _) | (None, Err(f)) => Err(f),
                    (None, Ok(())) => Ok(a.accepted),
                };
                let _ = reply.send(res);
            }
        }
    }
    engine.summary()
}

fn ask(tx: &Sender<Msg>, make: impl FnOnce(Reply) -> Msg) -> Result<u64, String> {
    let (reply_tx, reply_rx) = mpsc::channel();
    tx.send(make(reply_tx))
        .map_err(|_| "writer stopped".to_string())?;
    reply_rx.recv().map_err(|_| "writer stopped".to_string())?
}

/// Reads one capture stream and answers with acks or an error line.
fn serve<S: Read + Write>(stream: S, conn: u64, tx: &Sender<Msg>) -> io::Result<()> {
    let mut reader = BufReader::new(stream);
    let result = (|| -> Result<u64, String> {
        let mut line = String::new();
        reader.read_line(&mut line).map_err(|e| e.to_string())?;
        let header = line.trim_end_matches(['\n', '\r']);
        if header != EVENTS_HEADER {
            return Err(format!("expected header {EVENTS_HEADER:?}, got {header:?}"));
        }
        ask(tx, |r| Msg::Open(conn, r))?;
        let streamed = (|| -> Result<(), String> {
            let mut count = 0u64;
            let mut line_no = 1usize;
            loop {
                line.clear();
                if reader.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
                    return Ok(());
                }
                line_no += 1;
                let text = line.trim_end_matches(['\n', '\r']);
                if text.trim().is_empty() {
                    continue;
                }
                let event = parse_event(text).map_err(|e| format!("line {line_no}: {e}"))?;
                tx.send(Msg::Event(conn, Box::new(event)))
                    .map_err(|_| "writer stopped".to_string())?;
                count += 1;
                if count % ACK_EVERY == 0 {
                    let n = ask(tx, |r| Msg::Sync(conn, r))?;
                    writeln!(reader.get_mut(), "ack {n}").map_err(|e| e.to_string())?;
                    reader.get_mut().flush().map_err(|e| e.to_string())?;
                }
            }
        })();
        let closed = ask(tx, |r| Msg::Close(conn, r));
        streamed?;
        closed
    })();
    let out = reader.get_mut();
    match result {
        Ok(n) => writeln!(out, "ack {n}")?,
        Err(e) => {
            log::warn!("connection {conn}: {e}");
            writeln!(out, "error {e}")?
        }
    }
    out.flush()
}

fn run_acceptor<S, I>(incoming: I, engine: Engine, once: bool) -> io::Result<IngestSummary>
where
    S: Read + Write + Send + 'static,
    I: Iterator<Item = io::Result<S>>,
{
    let (tx, rx) = mpsc::channel::<Msg>();
    let writer = thread::spawn(move || writer(engine, rx));
    let mut readers = Vec::new();
    for (conn, stream) in incoming.enumerate() {
        let stream = stream?;
        let tx = tx.clone();
        readers.push(thread::spawn(move || {
            if let Err(e) = serve(stream, conn as u64, &tx) {
                log::warn!("connection {conn}: {e}");
            }
        }));
        if once {
            break;
        }
    }
    for r in readers {
        let _ = r.join();
    }
    drop(tx);
    writer
        .join()
        .map_err(|_| io::Error::other("writer thread panicked"))
}

/// Serves until the listener fails, or after the first connection when
/// `once` is set.
pub fn listen(addr: &ListenAddr, engine: Engine, once: bool) -> io::Result<IngestSummary> {
    match addr {
        ListenAddr::Tcp(a) => {
            let listener = TcpListener::bind(a)?;
            log::info!("listening on {}", listener.local_addr()?);
            run_acceptor(listener.incoming(), engine, once)
        }
        #[cfg(unix)]
        ListenAddr::Unix(path) => {
            let _ = std::fs::remove_file(path);
            let listener = UnixListener::bind(path)?;
            log::info!("listening on {path}");
            run_acceptor(listener.incoming(), engine, once)
        }
        #[cfg(not(unix))]
        ListenAddr::Unix(_) => Err(io::Error::other("unix sockets are not supported here")),
    }
}

/// Like [`listen`] on an already bound TCP listener (tests bind port 0).
pub fn serve_tcp(listener: TcpListener, engine: Engine, once: bool) -> io::Result<IngestSummary> {
    run_acceptor(listener.incoming(), engine, once)
}
