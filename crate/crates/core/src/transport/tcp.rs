//! Full mesh of TCP connections, one per ordered pair of workers.
//!
//! Each outgoing connection is drained by its own writer thread, so `send`
//! only pushes onto a channel. Reader threads feed a single inbound queue.
//! TCP keeps the messages of one connection in order, which gives per-pair
//! FIFO.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::wire::{encode_frame, read_frame};
use super::{Body, Message, Transport, WorkerId};
use crate::error::TransportError;

pub const HANDSHAKE_MAGIC: [u8; 4] = *b"SGRF";
pub const WIRE_VERSION: u16 = 1;

/// Addresses of all workers, indexed by worker id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Roster {
    addrs: Vec<String>,
}

impl Roster {
    pub fn new(addrs: Vec<String>) -> Roster {
        Roster { addrs }
    }

    pub fn len(&self) -> usize {
        self.addrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addrs.is_empty()
    }

    pub fn addr(&self, id: WorkerId) -> &str {
        &self.addrs[id as usize]
    }

    /// The roster file: one `worker_id host:port` line per worker.
    pub fn to_text(&self) -> String {
        self.addrs
            .iter()
            .enumerate()
            .map(|(i, a)| format!("{i} {a}\n"))
            .collect()
    }
}

/// Parses a roster file. Every id in `0..W` must appear exactly once.
pub fn parse_roster(text: &str) -> Result<Roster, String> {
    let mut entries: Vec<Option<String>> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(id), Some(addr), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("line {}: expected `worker_id host:port`", no + 1));
        };
        let id: usize = id
            .parse()
            .map_err(|_| format!("line {}: bad worker id `{id}`", no + 1))?;
        if !addr.contains(':') {
            return Err(format!("line {}: address `{addr}` has no port", no + 1));
        }
        if entries.len() <= id {
            entries.resize(id + 1, None);
        }
        if entries[id].replace(addr.to_string()).is_some() {
            return Err(format!("line {}: worker {id} listed twice", no + 1));
        }
    }
    if entries.is_empty() {
        return Err("empty roster".into());
    }
    let addrs = entries
        .into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| format!("worker {i} missing from roster")))
        .collect::<Result<_, _>>()?;
    Ok(Roster { addrs })
}

/// A roster of `workers` currently free ports on the loopback interface.
pub fn free_local_roster(workers: u32) -> io::Result<Roster> {
    let listeners = (0..workers)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<io::Result<Vec<_>>>()?;
    let addrs = listeners
        .iter()
        .map(|l| l.local_addr().map(|a| a.to_string()))
        .collect::<io::Result<_>>()?;
    Ok(Roster { addrs })
}

type Inbound = Result<Message, TransportError>;

pub struct TcpTransport {
    id: WorkerId,
    workers: u32,
    writers: Vec<Option<Sender<Vec<u8>>>>,
    writer_threads: Vec<JoinHandle<io::Result<()>>>,
    self_tx: Sender<Inbound>,
    inbound: Receiver<Inbound>,
    recv_timeout: Duration,
}

fn write_handshake(stream: &mut TcpStream, from: WorkerId, workers: u32) -> io::Result<()> {
    let mut hello = Vec::with_capacity(14);
    hello.extend_from_slice(&HANDSHAKE_MAGIC);
    hello.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    hello.extend_from_slice(&from.to_le_bytes());
    hello.extend_from_slice(&workers.to_le_bytes());
    stream.write_all(&hello)
}

fn read_handshake(stream: &mut TcpStream, workers: u32) -> Result<WorkerId, TransportError> {
    let mut hello = [0u8; 14];
    stream.read_exact(&mut hello)?;
    if hello[..4] != HANDSHAKE_MAGIC {
        return Err(TransportError::Frame("bad handshake magic".into()));
    }
    let version = u16::from_le_bytes([hello[4], hello[5]]);
    if version != WIRE_VERSION {
        return Err(TransportError::Frame(format!(
            "peer speaks wire version {version}, expected {WIRE_VERSION}"
        )));
    }
    let from = u32::from_le_bytes(hello[6..10].try_into().expect("4 bytes"));
    let theirs = u32::from_le_bytes(hello[10..14].try_into().expect("4 bytes"));
    if theirs != workers || from >= workers {
        return Err(TransportError::Frame(format!(
            "peer {from} expects {theirs} workers, this run has {workers}"
        )));
    }
    Ok(from)
}

fn reader_loop(stream: TcpStream, from: WorkerId, me: WorkerId, tx: Sender<Inbound>) {
    let mut reader = BufReader::with_capacity(1 << 16, stream);
    loop {
        match read_frame(&mut reader) {
            Ok(Some(msg)) => {
                let msg = if msg.from != from || msg.to != me {
                    Err(TransportError::Frame(format!(
                        "message {}->{} on connection {from}->{me}",
                        msg.from, msg.to
                    )))
                } else {
                    Ok(msg)
                };
                let failed = msg.is_err();
                if tx.send(msg).is_err() || failed {
                    return;
                }
            }
            // the peer finished; nothing more will come on this connection
            Ok(None) => return,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        }
    }
}

fn writer_loop(stream: TcpStream, rx: Receiver<Vec<u8>>) -> io::Result<()> {
    let mut out = BufWriter::with_capacity(1 << 16, stream);
    while let Ok(frame) = rx.recv() {
        out.write_all(&frame)?;
        // batch whatever is already queued, flush when the queue runs dry
        while let Ok(frame) = rx.try_recv() {
            out.write_all(&frame)?;
        }
        out.flush()?;
    }
    out.flush()?;
    out.get_ref().shutdown(Shutdown::Write)
}

fn connect_with_retry(addr: &str, peer: WorkerId, deadline: Instant) -> Result<TcpStream, TransportError> {
    loop {
        let attempt = addr
            .to_socket_addrs()
            .and_then(|mut addrs| {
                addrs
                    .next()
                    .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no address"))
            })
            .and_then(|a| TcpStream::connect_timeout(&a, Duration::from_secs(2)));
        match attempt {
            Ok(stream) => return Ok(stream),
            Err(e) if Instant::now() >= deadline => {
                return Err(TransportError::Connect { peer, source: e })
            }
            Err(_) => thread::sleep(Duration::from_millis(20)),
        }
    }
}

impl TcpTransport {
    /// Binds this worker's roster address and connects to every peer,
    /// retrying until `timeout` while peers come up.
    pub fn connect(roster: &Roster, id: WorkerId, timeout: Duration) -> Result<Self, TransportError> {
        let deadline = Instant::now() + timeout;
        let listener = loop {
            match TcpListener::bind(roster.addr(id)) {
                Ok(l) => break l,
                Err(e) if Instant::now() >= deadline => {
                    return Err(TransportError::Connect { peer: id, source: e })
                }
                Err(_) => thread::sleep(Duration::from_millis(20)),
            }
        };
        Self::with_listener(listener, roster, id, timeout)
    }

    /// Like [`TcpTransport::connect`] with an already bound listener.
    pub fn with_listener(
        listener: TcpListener,
        roster: &Roster,
        id: WorkerId,
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let workers = roster.len() as u32;
        assert!(id < workers, "worker {id} not in roster");
        let deadline = Instant::now() + timeout;
        let (tx, inbound) = mpsc::channel();

        let accept_tx = tx.clone();
        thread::Builder::new()
            .name(format!("accept-{id}"))
            .spawn(move || {
                for _ in 1..workers {
                    let accepted = listener.accept().map_err(TransportError::from).and_then(
                        |(mut stream, _)| {
                            stream.set_nodelay(true)?;
                            read_handshake(&mut stream, workers).map(|from| (stream, from))
                        },
                    );
                    match accepted {
                        Ok((stream, from)) => {
                            let tx = accept_tx.clone();
                            thread::Builder::new()
                                .name(format!("read-{from}-{id}"))
                                .spawn(move || reader_loop(stream, from, id, tx))
                                .expect("spawn reader");
                        }
                        Err(e) => {
                            let _ = accept_tx.send(Err(e));
                            return;
                        }
                    }
                }
            })
            .map_err(TransportError::Io)?;

        let mut writers = Vec::with_capacity(workers as usize);
        let mut writer_threads = Vec::new();
        for peer in 0..workers {
            if peer == id {
                writers.push(None);
                continue;
            }
            let mut stream = connect_with_retry(roster.addr(peer), peer, deadline)?;
            stream.set_nodelay(true)?;
            write_handshake(&mut stream, id, workers)?;
            let (wtx, wrx) = mpsc::channel();
            writers.push(Some(wtx));
            writer_threads.push(
                thread::Builder::new()
                    .name(format!("write-{id}-{peer}"))
                    .spawn(move || writer_loop(stream, wrx))?,
            );
        }
        Ok(TcpTransport {
            id,
            workers,
            writers,
            writer_threads,
            self_tx: tx,
            inbound,
            recv_timeout: Duration::from_secs(600),
        })
    }

    /// Upper bound on a single `recv` wait before the run is declared dead.
    pub fn set_recv_timeout(&mut self, timeout: Duration) {
        self.recv_timeout = timeout;
    }
}

impl Transport for TcpTransport {
    fn id(&self) -> WorkerId {
        self.id
    }

    fn workers(&self) -> u32 {
        self.workers
    }

    fn send(&self, to: WorkerId, body: Body) -> Result<(), TransportError> {
        let msg = Message {
            from: self.id,
            to,
            body,
        };
        match self.writers.get(to as usize) {
            None => Err(TransportError::Frame(format!("no worker {to}"))),
            Some(None) => self.self_tx.send(Ok(msg)).map_err(|_| TransportError::Closed),
            Some(Some(w)) => w.send(encode_frame(&msg)).map_err(|_| TransportError::Closed),
        }
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        match self.inbound.recv_timeout(self.recv_timeout) {
            Ok(msg) => msg,
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Io(io::Error::new(
                io::ErrorKind::TimedOut,
                "no message from any peer",
            ))),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        // closing the channels lets the writers flush and half-close
        self.writers.clear();
        for t in self.writer_threads.drain(..) {
            if let Ok(Err(e)) = t.join() {
                log::warn!("worker {}: flushing a connection failed: {e}", self.id);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_parsing() {
        let r = parse_roster("# cluster\n1 10.0.0.2:7001\n0 10.0.0.1:7000\n\n").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.addr(0), "10.0.0.1:7000");
        assert_eq!(parse_roster(&r.to_text()).unwrap(), r);
        assert!(parse_roster("0 a:1\n0 b:2\n").is_err());
        assert!(parse_roster("1 a:1\n").is_err());
        assert!(parse_roster("0 nowhere\n").is_err());
        assert!(parse_roster("").is_err());
    }

    #[test]
    fn mesh_delivers_in_order() {
        let workers = 3;
        let listeners: Vec<TcpListener> = (0..workers)
            .map(|_| TcpListener::bind("127.0.0.1:0").unwrap())
            .collect();
        let roster = Roster::new(
            listeners
                .iter()
                .map(|l| l.local_addr().unwrap().to_string())
                .collect(),
        );
        let handles: Vec<_> = listeners
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let roster = roster.clone();
                thread::spawn(move || {
                    let mut t =
                        TcpTransport::with_listener(l, &roster, i as u32, Duration::from_secs(10))
                            .unwrap();
                    for to in 0..workers as u32 {
                        for k in 0..100 {
                            t.send(to, Body::InEdge { state: k }).unwrap();
                        }
                        t.send(to, Body::Ack).unwrap();
                    }
                    let mut next = [0u32; 3];
                    let mut acks = 0;
                    while acks < workers {
                        let m = t.recv().unwrap();
                        assert_eq!(m.to, i as u32);
                        match m.body {
                            Body::InEdge { state } => {
                                assert_eq!(state, next[m.from as usize]);
                                next[m.from as usize] += 1;
                            }
                            Body::Ack => {
                                assert_eq!(next[m.from as usize], 100);
                                acks += 1;
                            }
                            other => panic!("unexpected {other:?}"),
                        }
                    }
                    t
                })
            })
            .collect();
        // keep every endpoint alive until all are done
        let endpoints: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        drop(endpoints);
    }

    #[test]
    fn handshake_rejects_wrong_cluster_size() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let client = thread::spawn(move || {
            let mut s = TcpStream::connect(addr).unwrap();
            write_handshake(&mut s, 1, 5).unwrap();
        });
        let (mut stream, _) = listener.accept().unwrap();
        client.join().unwrap();
        assert!(read_handshake(&mut stream, 4).is_err());
    }
}
