use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use parking_lot::Mutex;

use super::{wire, DecodeError, Endpoint, Envelope, TransportError};

/// A framed, persistent, bidirectional connection to one peer. Writes hold
/// the lock for a whole frame so concurrent senders never interleave.
struct Conn {
    writer: Mutex<TcpStream>,
}

type ConnMap = Arc<Mutex<HashMap<String, Arc<Conn>>>>;

/// Endpoint over TCP. Outbound connections are opened lazily to peers in the
/// address book; a peer that connected to us is reachable under the sender
/// name of its first frame, over that same connection.
pub struct TcpEndpoint {
    name: String,
    local: SocketAddr,
    peers: Mutex<HashMap<String, SocketAddr>>,
    conns: ConnMap,
    inbox_tx: Sender<Envelope>,
    inbox: Receiver<Envelope>,
    closed: Arc<AtomicBool>,
}

impl TcpEndpoint {
    /// Listens on `addr` (port 0 picks a free port).
    pub fn bind(name: &str, addr: impl ToSocketAddrs) -> io::Result<TcpEndpoint> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let (inbox_tx, inbox) = unbounded();
        let ep = TcpEndpoint {
            name: name.to_string(),
            local,
            peers: Mutex::new(HashMap::new()),
            conns: Arc::new(Mutex::new(HashMap::new())),
            inbox_tx,
            inbox,
            closed: Arc::new(AtomicBool::new(false)),
        };
        let conns = Arc::clone(&ep.conns);
        let tx = ep.inbox_tx.clone();
        let closed = Arc::clone(&ep.closed);
        thread::Builder::new().name(format!("{name}-accept")).spawn(move || {
            for stream in listener.incoming() {
                if closed.load(Ordering::Acquire) {
                    break;
                }
                if let Ok(stream) = stream {
                    let _ = spawn_reader(stream, None, Arc::clone(&conns), tx.clone(), Arc::clone(&closed));
                }
            }
        })?;
        Ok(ep)
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    pub fn add_peer(&self, name: &str, addr: SocketAddr) {
        self.peers.lock().insert(name.to_string(), addr);
    }

    fn connect(&self, to: &str) -> Result<Arc<Conn>, TransportError> {
        let addr = *self
            .peers
            .lock()
            .get(to)
            .ok_or_else(|| TransportError::UnknownNode(to.to_string()))?;
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5)).map_err(io_err)?;
        let conn = spawn_reader(
            stream,
            Some(to.to_string()),
            Arc::clone(&self.conns),
            self.inbox_tx.clone(),
            Arc::clone(&self.closed),
        )
        .map_err(io_err)?;
        Ok(conn)
    }

    fn conn(&self, to: &str) -> Result<Arc<Conn>, TransportError> {
        if let Some(c) = self.conns.lock().get(to) {
            return Ok(Arc::clone(c));
        }
        self.connect(to)
    }
}

fn io_err(e: io::Error) -> TransportError {
    TransportError::Io(e.to_string())
}

fn spawn_reader(
    stream: TcpStream,
    peer: Option<String>,
    conns: ConnMap,
    inbox: Sender<Envelope>,
    closed: Arc<AtomicBool>,
) -> io::Result<Arc<Conn>> {
    stream.set_nodelay(true)?;
    let conn = Arc::new(Conn {
        writer: Mutex::new(stream.try_clone()?),
    });
    if let Some(p) = &peer {
        conns.lock().insert(p.clone(), Arc::clone(&conn));
    }
    let mine = Arc::clone(&conn);
    thread::Builder::new().name("tcp-reader".into()).spawn(move || {
        let mut stream = stream;
        let mut known = peer;
        while !closed.load(Ordering::Acquire) {
            let env = match read_frame(&mut stream) {
                Ok(env) => env,
                Err(_) => break,
            };
            if known.is_none() {
                known = Some(env.sender.clone());
                conns.lock().insert(env.sender.clone(), Arc::clone(&mine));
            }
            if inbox.send(env).is_err() {
                break;
            }
        }
        let _ = stream.shutdown(Shutdown::Both);
        if let Some(p) = known {
            let mut map = conns.lock();
            if map.get(&p).is_some_and(|c| Arc::ptr_eq(c, &mine)) {
                map.remove(&p);
            }
        }
    })?;
    Ok(conn)
}

#[derive(Debug)]
enum ReadError {
    Io,
    Decode,
}

fn read_frame(stream: &mut TcpStream) -> Result<Envelope, ReadError> {
    let mut len = [0u8; 4];
    stream.read_exact(&mut len).map_err(|_| ReadError::Io)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > wire::MAX_FRAME {
        return Err(ReadError::Decode);
    }
    let mut body = vec![0u8; len];
    stream.read_exact(&mut body).map_err(|_| ReadError::Io)?;
    wire::decode_body(&body).map_err(|_: DecodeError| ReadError::Decode)
}

impl Endpoint for TcpEndpoint {
    fn name(&self) -> &str {
        &self.name
    }

    fn send(&self, to: &str, env: &Envelope) -> Result<(), TransportError> {
        let frame = wire::encode(env)?;
        let conn = self.conn(to)?;
        if conn.writer.lock().write_all(&frame).is_ok() {
            return Ok(());
        }
        // stale connection: forget it and try one fresh one
        {
            let mut map = self.conns.lock();
            if map.get(to).is_some_and(|c| Arc::ptr_eq(c, &conn)) {
                map.remove(to);
            }
        }
        let conn = self.connect(to)?;
        let result = conn.writer.lock().write_all(&frame).map_err(io_err);
        result
    }

    fn recv_timeout(&self, timeout: Duration) -> Result<Option<Envelope>, TransportError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(env) => Ok(Some(env)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        self.closed.store(true, Ordering::Release);
        for (_, c) in self.conns.lock().drain() {
            let _ = c.writer.lock().shutdown(Shutdown::Both);
        }
        // wake the accept loop so it sees the flag
        let _ = TcpStream::connect_timeout(&self.local, Duration::from_millis(200));
    }
}
