use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::wire::{self, FrameHeader};
use super::{PatchBatch, ProbPatchBatch, Scorer};
use crate::error::{Error, Result};

type Reply = std::result::Result<(FrameHeader, Vec<f32>), String>;

#[derive(Default)]
struct Shared {
    pending: HashMap<u64, Sender<Reply>>,
    dead: Option<String>,
}

/// Client side of the wire protocol, over a child's stdio or a TCP socket.
///
/// A background thread reads responses and routes them to the waiting
/// request by id, so several threads may score through one handle at once.
pub struct ExternalScorer {
    label: String,
    writer: Mutex<Box<dyn Write + Send>>,
    shared: Arc<Mutex<Shared>>,
    next_id: AtomicU64,
    clamped: Arc<AtomicU64>,
    max_batch: u16,
    timeout: Duration,
    child: Mutex<Option<Child>>,
    socket: Option<TcpStream>,
    reader: Mutex<Option<JoinHandle<()>>>,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer")
            .field("label", &self.label)
            .field("max_batch", &self.max_batch)
            .finish()
    }
}

impl ExternalScorer {
    /// Launch `command` and talk to it over stdin/stdout.
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self> {
        let (prog, args) = command
            .split_first()
            .ok_or_else(|| Error::invalid("empty scorer command"))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let label = command.join(" ");
        match Self::handshake(label, Box::new(stdout), Box::new(stdin), timeout) {
            Ok(mut s) => {
                s.child = Mutex::new(Some(child));
                Ok(s)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    /// Connect to a scorer listening on `address` (`host:port`).
    pub fn connect(address: &str, timeout: Duration) -> Result<Self> {
        let addr = address
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::invalid(format!("cannot resolve `{address}`")))?;
        let stream = TcpStream::connect_timeout(&addr, timeout)?;
        stream.set_nodelay(true)?;
        let read_half = stream.try_clone()?;
        let write_half = stream.try_clone()?;
        let mut s = Self::handshake(
            address.to_string(),
            Box::new(read_half),
            Box::new(write_half),
            timeout,
        )
        .inspect_err(|_| {
            let _ = stream.shutdown(Shutdown::Both);
        })?;
        s.socket = Some(stream);
        Ok(s)
    }

    /// Run the protocol over arbitrary byte streams.
    pub fn from_streams(
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        timeout: Duration,
    ) -> Result<Self> {
        Self::handshake("streams".into(), reader, writer, timeout)
    }

    fn handshake(
        label: String,
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        timeout: Duration,
    ) -> Result<Self> {
        let mut writer: Box<dyn Write + Send> = Box::new(BufWriter::new(writer));
        wire::write_client_hello(&mut writer)?;

        let shared = Arc::new(Mutex::new(Shared::default()));
        let (hello_tx, hello_rx) = mpsc::channel();
        let thread_shared = shared.clone();
        let handle = std::thread::Builder::new()
            .name("scorer-reader".into())
            .spawn(move || {
                let mut r = BufReader::new(reader);
                let hello = wire::read_server_hello(&mut r);
                let ok = hello.is_ok();
                let _ = hello_tx.send(hello);
                if ok {
                    read_loop(&mut r, &thread_shared);
                }
            })?;

        let max_batch = match hello_rx.recv_timeout(timeout) {
            Ok(Ok(m)) => m,
            Ok(Err(e)) => return Err(e),
            Err(_) => {
                return Err(Error::Timeout(format!(
                    "no handshake from `{label}` within {timeout:?}"
                )))
            }
        };
        Ok(ExternalScorer {
            label,
            writer: Mutex::new(writer),
            shared,
            next_id: AtomicU64::new(1),
            clamped: Arc::new(AtomicU64::new(0)),
            max_batch,
            timeout,
            child: Mutex::new(None),
            socket: None,
            reader: Mutex::new(Some(handle)),
        })
    }

    pub fn max_batch(&self) -> u16 {
        self.max_batch
    }

    /// Number of output values that were outside `[0, 1]` (or NaN) and clamped.
    pub fn clamped_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    fn submit(&self, batch: &PatchBatch) -> Result<(u64, Receiver<Reply>)> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        {
            let mut shared = self.shared.lock().unwrap();
            if let Some(reason) = &shared.dead {
                return Err(Error::Protocol(format!("scorer `{}` is gone: {reason}", self.label)));
            }
            shared.pending.insert(id, tx);
        }
        let header = FrameHeader {
            request_id: id,
            n: batch.n as u32,
            patch_size: batch.patch_size,
        };
        let sent = {
            let mut w = self.writer.lock().unwrap();
            wire::write_request(&mut *w, &header, &batch.pixels)
        };
        if let Err(e) = sent {
            self.shared.lock().unwrap().pending.remove(&id);
            return Err(e);
        }
        Ok((id, rx))
    }

    fn collect(&self, id: u64, rx: Receiver<Reply>, expect: (usize, u32), deadline: Instant) -> Result<ProbPatchBatch> {
        let wait = deadline.saturating_duration_since(Instant::now());
        let (h, mut probs) = match rx.recv_timeout(wait) {
            Ok(Ok(reply)) => reply,
            Ok(Err(reason)) => return Err(Error::Protocol(reason)),
            Err(RecvTimeoutError::Timeout) => {
                self.shared.lock().unwrap().pending.remove(&id);
                return Err(Error::Timeout(format!(
                    "request {id} to `{}` unanswered after {:?}",
                    self.label, self.timeout
                )));
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Protocol(format!("scorer `{}` closed", self.label)))
            }
        };
        if (h.n as usize, h.patch_size) != expect {
            return Err(Error::Protocol(format!(
                "request {id}: asked for {}x{}, got {}x{}",
                expect.0, expect.1, h.n, h.patch_size
            )));
        }
        let mut bad = 0u64;
        for p in &mut probs {
            if !(0.0..=1.0).contains(p) {
                bad += 1;
                *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
            }
        }
        if bad > 0 {
            self.clamped.fetch_add(bad, Ordering::Relaxed);
            log::warn!("scorer `{}`: clamped {bad} out-of-range values", self.label);
        }
        ProbPatchBatch::new(h.n as usize, h.patch_size, probs)
    }
}

fn read_loop(r: &mut impl Read, shared: &Mutex<Shared>) {
    let reason = loop {
        match wire::read_response(r) {
            Ok(Some((h, probs))) => {
                let tx = shared.lock().unwrap().pending.remove(&h.request_id);
                match tx {
                    Some(tx) => {
                        let _ = tx.send(Ok((h, probs)));
                    }
                    // Late reply to a request that already timed out.
                    None => log::warn!("dropping reply to unknown request {}", h.request_id),
                }
            }
            Ok(None) => break "stream closed".to_string(),
            Err(e) => break e.to_string(),
        }
    };
    let mut s = shared.lock().unwrap();
    for (_, tx) in s.pending.drain() {
        let _ = tx.send(Err(reason.clone()));
    }
    s.dead = Some(reason);
}

impl Scorer for ExternalScorer {
    fn score(&self, batch: &PatchBatch) -> Result<ProbPatchBatch> {
        let chunk = if self.max_batch == 0 {
            batch.n
        } else {
            self.max_batch as usize
        };
        let deadline = Instant::now() + self.timeout;
        let mut inflight = Vec::new();
        for start in (0..batch.n).step_by(chunk) {
            let part = batch.slice(start..(start + chunk).min(batch.n));
            let (id, rx) = self.submit(&part)?;
            inflight.push((id, rx, part.n));
        }
        let parts = inflight
            .into_iter()
            .map(|(id, rx, n)| self.collect(id, rx, (n, batch.patch_size), deadline))
            .collect::<Result<Vec<_>>>()?;
        ProbPatchBatch::concat(parts)
    }

    fn describe(&self) -> String {
        format!("external({})", self.label)
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Some(s) = &self.socket {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(mut child) = self.child.lock().unwrap().take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        // The reader thread exits on its own once the stream closes.
        self.reader.lock().unwrap().take();
    }
}
