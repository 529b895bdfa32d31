//! Frame transports: an in-memory duplex pair and TCP.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use thiserror::Error;

use super::frame::{parse_header, Frame, FrameError, HEADER_LEN};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    ConnectionFailed(String),
    #[error("connection closed by peer")]
    ConnectionClosed,
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Delivers whole frames, reliably and in order.
pub trait Transport {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Frame, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        (**self).send(frame)
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        (**self).recv()
    }
}

/// One end of an in-process channel pair. Frames travel encoded so both
/// transports exercise the same codec.
#[derive(Debug)]
pub struct MemoryEndpoint {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Duration,
}

pub fn transport_pair() -> (MemoryEndpoint, MemoryEndpoint) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    (
        MemoryEndpoint {
            tx: tx_a,
            rx: rx_a,
            timeout: DEFAULT_TIMEOUT,
        },
        MemoryEndpoint {
            tx: tx_b,
            rx: rx_b,
            timeout: DEFAULT_TIMEOUT,
        },
    )
}

impl MemoryEndpoint {
    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }
}

impl Transport for MemoryEndpoint {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        self.tx
            .send(frame.encode()?)
            .map_err(|_| TransportError::ConnectionClosed)
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(bytes) => Ok(Frame::decode(&bytes)?),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::ConnectionClosed),
        }
    }
}

#[derive(Debug)]
pub struct TcpEndpoint {
    stream: TcpStream,
}

impl TcpEndpoint {
    fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true).map_err(io_err)?;
        stream
            .set_read_timeout(Some(DEFAULT_TIMEOUT))
            .map_err(io_err)?;
        Ok(Self { stream })
    }

    pub fn set_timeout(&mut self, timeout: Duration) -> Result<(), TransportError> {
        self.stream.set_read_timeout(Some(timeout)).map_err(io_err)
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.stream.peer_addr().ok()
    }
}

fn io_err(err: io::Error) -> TransportError {
    match err.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
        io::ErrorKind::UnexpectedEof
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe => TransportError::ConnectionClosed,
        _ => TransportError::Io(err.to_string()),
    }
}

impl Transport for TcpEndpoint {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        let bytes = frame.encode()?;
        self.stream.write_all(&bytes).map_err(io_err)?;
        self.stream.flush().map_err(io_err)
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let mut header = [0u8; HEADER_LEN];
        self.stream.read_exact(&mut header).map_err(io_err)?;
        let (msg_type, len) = parse_header(&header)?;
        let mut payload = vec![0u8; len];
        self.stream.read_exact(&mut payload).map_err(|err| match io_err(err) {
            TransportError::ConnectionClosed => TransportError::Frame(FrameError::Truncated),
            other => other,
        })?;
        Ok(Frame::new(msg_type, payload))
    }
}

/// A bound listener that hands out one endpoint per accepted connection.
#[derive(Debug)]
pub struct TcpAcceptor {
    listener: TcpListener,
}

impl TcpAcceptor {
    pub fn local_addr(&self) -> Result<SocketAddr, TransportError> {
        self.listener.local_addr().map_err(io_err)
    }

    pub fn accept(&self) -> Result<TcpEndpoint, TransportError> {
        let (stream, _) = self
            .listener
            .accept()
            .map_err(|e| TransportError::ConnectionFailed(e.to_string()))?;
        TcpEndpoint::new(stream)
    }
}

/// Binds `host:port`.
pub fn tcp_listen(addr: &str) -> Result<TcpAcceptor, TransportError> {
    let listener =
        TcpListener::bind(addr).map_err(|e| TransportError::ConnectionFailed(e.to_string()))?;
    Ok(TcpAcceptor { listener })
}

/// Connects to `host:port`.
pub fn tcp_connect(addr: &str) -> Result<TcpEndpoint, TransportError> {
    let addrs: Vec<SocketAddr> = addr
        .to_socket_addrs()
        .map_err(|e| TransportError::ConnectionFailed(e.to_string()))?
        .collect();
    let mut last = TransportError::ConnectionFailed(format!("{addr} resolved to no addresses"));
    for sock in addrs {
        match TcpStream::connect_timeout(&sock, DEFAULT_TIMEOUT) {
            Ok(stream) => return TcpEndpoint::new(stream),
            Err(e) => last = TransportError::ConnectionFailed(e.to_string()),
        }
    }
    Err(last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub bytes: Vec<u8>,
}

/// Wraps a transport and logs every frame that crosses it, encoded.
#[derive(Debug)]
pub struct Recording<T> {
    inner: T,
    log: Vec<TranscriptEntry>,
}

impl<T> Recording<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            log: Vec::new(),
        }
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.log
    }

    pub fn into_parts(self) -> (T, Vec<TranscriptEntry>) {
        (self.inner, self.log)
    }
}

impl<T: Transport> Transport for Recording<T> {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        self.inner.send(frame)?;
        self.log.push(TranscriptEntry {
            direction: Direction::Sent,
            bytes: frame.encode()?,
        });
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let frame = self.inner.recv()?;
        self.log.push(TranscriptEntry {
            direction: Direction::Received,
            bytes: frame.encode()?,
        });
        Ok(frame)
    }
}
