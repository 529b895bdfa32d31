//! Byte framing, session state machines and transports.

pub mod frame;
pub mod session;
pub mod transport;

pub use frame::{Frame, FrameError, Message, MsgType, MAGIC, MAX_PAYLOAD};
pub use session::{
    run_cubic_receiver, run_cubic_sender, run_okx_peer, simulate_cubic_session, CubicReceiver,
    CubicSender, LocalChoice, OkxPeer, OkxPhase, Phase, RankedPlaintext, RunError, SessionError,
};
pub use transport::{
    tcp_connect, tcp_listen, transport_pair, Direction, MemoryEndpoint, Recording, TcpAcceptor,
    TcpEndpoint, TranscriptEntry, Transport, TransportError, DEFAULT_TIMEOUT,
};
