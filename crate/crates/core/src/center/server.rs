//! TCP ingest endpoint and replay client.
//!
//! Each connection runs on its own thread and forwards complete lines over a
//! bounded channel to a single writer thread that owns all storage writes.
//! Readers share the store through an `RwLock` and always see whole
//! records.

use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::storage::{IngestStats, Storage};
use crate::error::{Error, Result};

const POLL: Duration = Duration::from_millis(20);
const WRITE_BATCH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerConfig {
    /// Lines buffered between the connections and the writer; full buffers
    /// block the sending connection.
    pub channel_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            channel_capacity: 4096,
        }
    }
}

enum Msg {
    Line(String),
    Partial,
}

pub type SharedStorage = Arc<RwLock<Storage>>;

/// A running ingest endpoint. [`WireServer::shutdown`] stops accepting,
/// drains every open connection, flushes the logs and returns the store.
pub struct WireServer {
    addr: SocketAddr,
    storage: SharedStorage,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    writer: Option<JoinHandle<()>>,
    errors: Arc<Mutex<Vec<String>>>,
}

impl std::fmt::Debug for WireServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WireServer").field("addr", &self.addr).finish_non_exhaustive()
    }
}

pub fn serve_wire(addr: impl ToSocketAddrs, storage: Storage, cfg: ServerConfig) -> Result<WireServer> {
    if cfg.channel_capacity == 0 {
        return Err(Error::invalid("channel capacity must be positive"));
    }
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let storage = Arc::new(RwLock::new(storage));
    let stop = Arc::new(AtomicBool::new(false));
    let errors = Arc::new(Mutex::new(Vec::new()));
    let (tx, rx) = sync_channel::<Msg>(cfg.channel_capacity);

    let writer = {
        let storage = Arc::clone(&storage);
        let errors = Arc::clone(&errors);
        thread::spawn(move || write_loop(rx, storage, errors))
    };
    let acceptor = {
        let stop = Arc::clone(&stop);
        let errors = Arc::clone(&errors);
        thread::spawn(move || accept_loop(listener, tx, stop, errors))
    };
    Ok(WireServer {
        addr: local,
        storage,
        stop,
        acceptor: Some(acceptor),
        writer: Some(writer),
        errors,
    })
}

fn accept_loop(listener: TcpListener, tx: SyncSender<Msg>, stop: Arc<AtomicBool>, errors: Arc<Mutex<Vec<String>>>) {
    let mut conns = Vec::new();
    loop {
        // Read the flag before accepting: once stopping, connections still
        // queued in the backlog are accepted and drained before exit.
        let stopping = stop.load(Ordering::SeqCst);
        match listener.accept() {
            Ok((stream, _)) => {
                let tx = tx.clone();
                let stop = Arc::clone(&stop);
                let errors = Arc::clone(&errors);
                conns.push(thread::spawn(move || {
                    if let Err(e) = connection(stream, tx, stop) {
                        errors.lock().expect("error log").push(e.to_string());
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if stopping {
                    break;
                }
                thread::sleep(POLL);
            }
            Err(e) => {
                errors.lock().expect("error log").push(e.to_string());
                if stopping {
                    break;
                }
            }
        }
        conns.retain(|h: &JoinHandle<()>| !h.is_finished());
    }
    for h in conns {
        let _ = h.join();
    }
}

/// Reads newline-terminated lines until EOF. After shutdown is requested the
/// connection is drained of whatever has already arrived, then closed.
fn connection(stream: TcpStream, tx: SyncSender<Msg>, stop: Arc<AtomicBool>) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut reader = BufReader::new(stream);
    let mut buf: Vec<u8> = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) => {
                if buf.last() == Some(&b'\n') {
                    buf.pop();
                    let line = String::from_utf8_lossy(&buf).into_owned();
                    buf.clear();
                    if !line.trim().is_empty() && tx.send(Msg::Line(line)).is_err() {
                        return Ok(());
                    }
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => {
                if !buf.is_empty() {
                    let _ = tx.send(Msg::Partial);
                }
                return Err(e);
            }
        }
    }
    if !buf.is_empty() {
        let _ = tx.send(Msg::Partial);
    }
    Ok(())
}

fn write_loop(rx: Receiver<Msg>, storage: SharedStorage, errors: Arc<Mutex<Vec<String>>>) {
    let apply = |s: &mut Storage, m: Msg| match m {
        Msg::Line(l) => {
            let _ = s.ingest_line(&l);
        }
        Msg::Partial => s.note_partial_line(),
    };
    while let Ok(first) = rx.recv() {
        let mut s = storage.write().expect("storage lock");
        apply(&mut s, first);
        for m in rx.try_iter().take(WRITE_BATCH) {
            apply(&mut s, m);
        }
    }
    if let Err(e) = storage.write().expect("storage lock").flush() {
        errors.lock().expect("error log").push(e.to_string());
    }
}

impl WireServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn storage(&self) -> SharedStorage {
        Arc::clone(&self.storage)
    }

    pub fn stats(&self) -> IngestStats {
        self.storage.read().expect("storage lock").stats()
    }

    /// Connection-level errors seen so far.
    pub fn errors(&self) -> Vec<String> {
        self.errors.lock().expect("error log").clone()
    }

    pub fn shutdown(mut self) -> Result<Storage> {
        self.stop_threads();
        let storage = std::mem::replace(&mut self.storage, Arc::new(RwLock::new(Storage::in_memory())));
        let lock = Arc::try_unwrap(storage).map_err(|_| Error::invalid("storage still shared by a reader"))?;
        let mut s = lock.into_inner().expect("storage lock");
        s.flush()?;
        Ok(s)
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        if let Some(h) = self.writer.take() {
            let _ = h.join();
        }
    }
}

impl Drop for WireServer {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

/// Sends every line of a capture over one connection, in file order.
/// Returns the number of lines sent.
pub fn replay_capture<R: Read>(addr: impl ToSocketAddrs, capture: R) -> Result<usize> {
    let stream = TcpStream::connect(addr)?;
    let mut out = BufWriter::new(stream.try_clone()?);
    let mut n = 0;
    for line in BufReader::new(capture).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    drop(out);
    stream.shutdown(Shutdown::Write)?;
    Ok(n)
}
