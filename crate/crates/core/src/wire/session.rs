//! Session state machines.
//!
//! Cubic exchange, three stages:
//!
//! ```text
//! receiver (key owner)            sender
//!        PUBKEY(n, alpha, a)  -->
//!                             <-- CIPHER_RANKED(c || rank bits)
//!        ACK_RANK(rank)       -->
//! ```
//!
//! The sender checks that the acknowledged rank equals the rank it sent.
//!
//! Key exchange: each side sends exactly one OKX_MSG, optionally preceded by
//! a PARAMS frame from the initiator. Keys never go on the wire.

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cubic_cipher::{decrypt_ranked, encrypt_ranked, CipherError, CubicPrivateKey, CubicPublicKey, RankedCiphertext};
use crate::dh_okx::{okx_key, okx_message, OkxError, OkxKey, OkxLocal, OkxParams};
use crate::rank_coding::{RankCode, RankError};

use super::frame::{Frame, FrameError, Message, MsgType};
use super::transport::{Direction, Transport, TransportError, TranscriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    AwaitKey,
    AwaitCipher,
    AwaitAck,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("{got:?} frame not accepted in phase {phase:?}")]
    ProtocolViolation { phase: String, got: MsgType },
    #[error("acknowledged rank {received} differs from sent rank {sent}")]
    AckMismatch { sent: u32, received: u32 },
    #[error("received public key does not match the expected key")]
    KeyMismatch,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Okx(#[from] OkxError),
}

fn violation(phase: impl std::fmt::Debug, got: MsgType) -> SessionError {
    SessionError::ProtocolViolation {
        phase: format!("{phase:?}"),
        got,
    }
}

fn exponent_field(a: u32) -> Result<u16, SessionError> {
    u16::try_from(a).map_err(|_| {
        FrameError::BadPayload {
            msg_type: MsgType::PubKey,
            reason: format!("exponent {a} does not fit the 2-byte field"),
        }
        .into()
    })
}

/// The party holding a plaintext.
#[derive(Debug, Clone)]
pub struct CubicSender {
    phase: Phase,
    message: BigUint,
    expected_key: Option<CubicPublicKey>,
    sent: Option<RankedCiphertext>,
}

impl CubicSender {
    pub fn new(message: BigUint) -> Self {
        Self {
            phase: Phase::AwaitKey,
            message,
            expected_key: None,
            sent: None,
        }
    }

    /// Rejects a published key that differs from `key`.
    pub fn expecting(mut self, key: CubicPublicKey) -> Self {
        self.expected_key = Some(key);
        self
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// The ciphertext and rank sent, once the key has arrived.
    pub fn sent(&self) -> Option<&RankedCiphertext> {
        self.sent.as_ref()
    }

    pub fn step(&mut self, frame: &Frame) -> Result<Option<Frame>, SessionError> {
        let result = self.advance(frame);
        if result.is_err() {
            self.phase = Phase::Failed;
        }
        result
    }

    fn advance(&mut self, frame: &Frame) -> Result<Option<Frame>, SessionError> {
        match (self.phase, frame.msg_type) {
            (Phase::AwaitKey, MsgType::PubKey) => {
                let Message::PubKey { n, alpha, a } = Message::from_frame(frame)? else {
                    unreachable!("type checked above")
                };
                let key = CubicPublicKey::new(n, alpha, u32::from(a))?;
                if self.expected_key.as_ref().is_some_and(|k| *k != key) {
                    return Err(SessionError::KeyMismatch);
                }
                let rc = encrypt_ranked(&self.message, &key)?;
                let framed = RankCode::for_roots(key.a()).encode(&rc.c, rc.rank)?;
                self.sent = Some(rc);
                self.phase = Phase::AwaitAck;
                Ok(Some(Message::CipherRanked { framed }.to_frame()?))
            }
            (Phase::AwaitAck, MsgType::AckRank) => {
                let Message::AckRank { rank } = Message::from_frame(frame)? else {
                    unreachable!("type checked above")
                };
                let sent = self.sent.as_ref().expect("cipher sent before ack").rank;
                if rank != sent {
                    return Err(SessionError::AckMismatch {
                        sent,
                        received: rank,
                    });
                }
                self.phase = Phase::Done;
                Ok(None)
            }
            (phase, got) => Err(violation(phase, got)),
        }
    }
}

/// The key owner.
#[derive(Debug, Clone)]
pub struct CubicReceiver {
    phase: Phase,
    key: CubicPrivateKey,
    recovered: Option<RankedPlaintext>,
}

/// What the receiver learned from one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedPlaintext {
    pub framed: BigUint,
    pub ciphertext: RankedCiphertext,
    pub plaintext: BigUint,
}

impl CubicReceiver {
    /// Starts a session and returns the PUBKEY frame to publish.
    pub fn new(key: CubicPrivateKey) -> Result<(Self, Frame), SessionError> {
        let public = key.public();
        let frame = Message::PubKey {
            n: public.n().clone(),
            alpha: public.alpha().clone(),
            a: exponent_field(public.a())?,
        }
        .to_frame()?;
        let receiver = Self {
            phase: Phase::AwaitCipher,
            key,
            recovered: None,
        };
        Ok((receiver, frame))
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn recovered(&self) -> Option<&RankedPlaintext> {
        self.recovered.as_ref()
    }

    pub fn step(&mut self, frame: &Frame) -> Result<Option<Frame>, SessionError> {
        let result = self.advance(frame);
        if result.is_err() {
            self.phase = Phase::Failed;
        }
        result
    }

    fn advance(&mut self, frame: &Frame) -> Result<Option<Frame>, SessionError> {
        match (self.phase, frame.msg_type) {
            (Phase::AwaitCipher, MsgType::CipherRanked) => {
                let Message::CipherRanked { framed } = Message::from_frame(frame)? else {
                    unreachable!("type checked above")
                };
                let (c, rank) = RankCode::for_roots(self.key.public().a()).decode(&framed)?;
                let ciphertext = RankedCiphertext { c, rank };
                let plaintext = decrypt_ranked(&ciphertext, &self.key)?;
                self.recovered = Some(RankedPlaintext {
                    framed,
                    ciphertext,
                    plaintext,
                });
                self.phase = Phase::Done;
                Ok(Some(Message::AckRank { rank }.to_frame()?))
            }
            (phase, got) => Err(violation(phase, got)),
        }
    }
}

/// Phases of one key-exchange peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OkxPhase {
    /// Waiting for the initiator's PARAMS.
    AwaitParams,
    /// PARAMS sent; waiting for the responder's OKX_MSG.
    SentParams,
    /// Own OKX_MSG sent; waiting for the peer's.
    AwaitPeer,
    Done,
    Failed,
}

/// How a joining peer picks its private choices once parameters arrive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalChoice {
    Fixed(OkxLocal),
    Seeded(u64),
}

#[derive(Debug, Clone)]
pub struct OkxPeer {
    phase: OkxPhase,
    params: Option<OkxParams>,
    choice: LocalChoice,
    local: Option<OkxLocal>,
    sent: Option<BigUint>,
    received: Option<BigUint>,
    key: Option<OkxKey>,
}

impl OkxPeer {
    fn blank(phase: OkxPhase, params: Option<OkxParams>, choice: LocalChoice) -> Self {
        Self {
            phase,
            params,
            choice,
            local: None,
            sent: None,
            received: None,
            key: None,
        }
    }

    /// Initiator that announces the parameters first.
    pub fn announce(params: OkxParams, local: OkxLocal) -> Result<(Self, Frame), SessionError> {
        let frame = Message::Params {
            p: params.p().clone(),
            g: params.g().clone(),
            c: params.c().clone(),
            a: exponent_field(params.a())?,
        }
        .to_frame()?;
        okx_message(&params, &local)?;
        let mut peer = Self::blank(OkxPhase::SentParams, Some(params), LocalChoice::Fixed(local.clone()));
        peer.local = Some(local);
        Ok((peer, frame))
    }

    /// Peer whose parameters were agreed out of band; sends its message
    /// immediately.
    pub fn prearranged(params: OkxParams, local: OkxLocal) -> Result<(Self, Frame), SessionError> {
        let value = okx_message(&params, &local)?;
        let frame = Message::OkxMsg { value: value.clone() }.to_frame()?;
        let mut peer = Self::blank(OkxPhase::AwaitPeer, Some(params), LocalChoice::Fixed(local.clone()));
        peer.local = Some(local);
        peer.sent = Some(value);
        Ok((peer, frame))
    }

    /// Responder waiting for PARAMS.
    pub fn join(choice: LocalChoice) -> Self {
        Self::blank(OkxPhase::AwaitParams, None, choice)
    }

    pub fn phase(&self) -> OkxPhase {
        self.phase
    }

    pub fn params(&self) -> Option<&OkxParams> {
        self.params.as_ref()
    }

    pub fn local(&self) -> Option<&OkxLocal> {
        self.local.as_ref()
    }

    pub fn sent(&self) -> Option<&BigUint> {
        self.sent.as_ref()
    }

    pub fn received(&self) -> Option<&BigUint> {
        self.received.as_ref()
    }

    pub fn key(&self) -> Option<&OkxKey> {
        self.key.as_ref()
    }

    pub fn step(&mut self, frame: &Frame) -> Result<Option<Frame>, SessionError> {
        let result = self.advance(frame);
        if result.is_err() {
            self.phase = OkxPhase::Failed;
        }
        result
    }

    fn advance(&mut self, frame: &Frame) -> Result<Option<Frame>, SessionError> {
        match (self.phase, frame.msg_type) {
            (OkxPhase::AwaitParams, MsgType::Params) => {
                let Message::Params { p, g, c, a } = Message::from_frame(frame)? else {
                    unreachable!("type checked above")
                };
                let params = OkxParams::new(p, g, c, u32::from(a))?;
                let local = match &self.choice {
                    LocalChoice::Fixed(local) => local.clone(),
                    LocalChoice::Seeded(seed) => {
                        OkxLocal::random(&params, &mut ChaCha8Rng::seed_from_u64(*seed))
                    }
                };
                let value = okx_message(&params, &local)?;
                self.params = Some(params);
                self.local = Some(local);
                self.sent = Some(value.clone());
                self.phase = OkxPhase::AwaitPeer;
                Ok(Some(Message::OkxMsg { value }.to_frame()?))
            }
            (OkxPhase::SentParams, MsgType::OkxMsg) => {
                self.accept_peer(frame)?;
                let params = self.params.as_ref().expect("initiator has params");
                let local = self.local.as_ref().expect("initiator has local");
                let value = okx_message(params, local)?;
                self.sent = Some(value.clone());
                self.phase = OkxPhase::Done;
                Ok(Some(Message::OkxMsg { value }.to_frame()?))
            }
            (OkxPhase::AwaitPeer, MsgType::OkxMsg) => {
                self.accept_peer(frame)?;
                self.phase = OkxPhase::Done;
                Ok(None)
            }
            (phase, got) => Err(violation(phase, got)),
        }
    }

    fn accept_peer(&mut self, frame: &Frame) -> Result<(), SessionError> {
        let Message::OkxMsg { value } = Message::from_frame(frame)? else {
            unreachable!("caller checked the type")
        };
        let params = self.params.as_ref().expect("params known before peer message");
        let local = self.local.as_ref().expect("local chosen before peer message");
        self.key = Some(okx_key(params, local, &value)?);
        self.received = Some(value);
        Ok(())
    }

    /// This peer's view as decimal transcript lines, labelled with `me` and
    /// `peer` (for example `A` and `B`).
    pub fn transcript(&self, me: &str, peer: &str) -> String {
        let mut out = String::new();
        if let Some(params) = &self.params {
            out.push_str(&format!(
                "params p={} g={} c={} a={}\n",
                params.p(),
                params.g(),
                params.c(),
                params.a()
            ));
        }
        if let Some(sent) = &self.sent {
            out.push_str(&format!("{me}->{peer} {sent}\n"));
        }
        if let Some(received) = &self.received {
            out.push_str(&format!("{peer}->{me} {received}\n"));
        }
        if let Some(key) = &self.key {
            out.push_str(&format!("{me} key {}\n", key.0));
        }
        out
    }
}

/// Either a session-level or a transport-level failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

fn report_failure<T: Transport>(transport: &mut T, err: &SessionError) {
    if let Ok(frame) = (Message::Error {
        text: err.to_string(),
    })
    .to_frame()
    {
        let _ = transport.send(&frame);
    }
}

/// Drives a sender to completion and returns what it sent.
pub fn run_cubic_sender<T: Transport>(
    transport: &mut T,
    mut sender: CubicSender,
) -> Result<RankedCiphertext, RunError> {
    while sender.phase() != Phase::Done {
        let frame = transport.recv()?;
        match sender.step(&frame) {
            Ok(Some(reply)) => transport.send(&reply)?,
            Ok(None) => {}
            Err(err) => {
                report_failure(transport, &err);
                return Err(err.into());
            }
        }
    }
    Ok(sender.sent().cloned().expect("done implies sent"))
}

/// Drives a receiver to completion and returns the recovered plaintext.
pub fn run_cubic_receiver<T: Transport>(
    transport: &mut T,
    key: CubicPrivateKey,
) -> Result<RankedPlaintext, RunError> {
    let (mut receiver, publish) = CubicReceiver::new(key)?;
    transport.send(&publish)?;
    while receiver.phase() != Phase::Done {
        let frame = transport.recv()?;
        match receiver.step(&frame) {
            Ok(Some(reply)) => transport.send(&reply)?,
            Ok(None) => {}
            Err(err) => {
                report_failure(transport, &err);
                return Err(err.into());
            }
        }
    }
    Ok(receiver.recovered().cloned().expect("done implies recovered"))
}

/// Drives a key-exchange peer. `opening` is the frame returned by the
/// constructor, if any.
pub fn run_okx_peer<T: Transport>(
    transport: &mut T,
    mut peer: OkxPeer,
    opening: Option<Frame>,
) -> Result<OkxPeer, RunError> {
    if let Some(frame) = opening {
        transport.send(&frame)?;
    }
    while peer.phase() != OkxPhase::Done {
        let frame = transport.recv()?;
        match peer.step(&frame) {
            Ok(Some(reply)) => transport.send(&reply)?,
            Ok(None) => {}
            Err(err) => {
                report_failure(transport, &err);
                return Err(err.into());
            }
        }
    }
    Ok(peer)
}

/// Runs both cubic state machines against each other with no transport and
/// returns the sender's view of the frames exchanged.
pub fn simulate_cubic_session(
    key: CubicPrivateKey,
    message: BigUint,
) -> Result<(Vec<TranscriptEntry>, RankedPlaintext), SessionError> {
    let mut log = Vec::new();
    let mut record = |direction, frame: &Frame| -> Result<(), SessionError> {
        log.push(TranscriptEntry {
            direction,
            bytes: frame.encode()?,
        });
        Ok(())
    };
    let expected = key.public().clone();
    let (mut receiver, publish) = CubicReceiver::new(key)?;
    let mut sender = CubicSender::new(message).expecting(expected);

    record(Direction::Received, &publish)?;
    let cipher = sender.step(&publish)?.expect("sender answers the key");
    record(Direction::Sent, &cipher)?;
    let ack = receiver.step(&cipher)?.expect("receiver acknowledges");
    record(Direction::Received, &ack)?;
    sender.step(&ack)?;
    let recovered = receiver.recovered().cloned().expect("receiver finished");
    Ok((log, recovered))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key31() -> CubicPrivateKey {
        CubicPrivateKey::from_primes(31u8.into(), None, 3).unwrap()
    }

    #[test]
    fn paper_session_direct() {
        let (mut receiver, publish) = CubicReceiver::new(key31()).unwrap();
        let mut sender = CubicSender::new(7u8.into());
        let cipher = sender.step(&publish).unwrap().unwrap();
        assert_eq!(
            Message::from_frame(&cipher).unwrap(),
            Message::CipherRanked { framed: 9u8.into() }
        );
        let ack = receiver.step(&cipher).unwrap().unwrap();
        assert_eq!(Message::from_frame(&ack).unwrap(), Message::AckRank { rank: 2 });
        assert_eq!(receiver.recovered().unwrap().plaintext, BigUint::from(7u8));
        assert_eq!(receiver.phase(), Phase::Done);
        assert_eq!(sender.step(&ack).unwrap(), None);
        assert_eq!(sender.phase(), Phase::Done);
    }

    #[test]
    fn tampered_ack_fails_sender() {
        let (_, publish) = CubicReceiver::new(key31()).unwrap();
        let mut sender = CubicSender::new(7u8.into());
        sender.step(&publish).unwrap();
        let forged = Message::AckRank { rank: 3 }.to_frame().unwrap();
        assert_eq!(
            sender.step(&forged),
            Err(SessionError::AckMismatch { sent: 2, received: 3 })
        );
        assert_eq!(sender.phase(), Phase::Failed);
    }

    #[test]
    fn cipher_before_key_is_a_violation() {
        let mut sender = CubicSender::new(7u8.into());
        let cipher = Message::CipherRanked { framed: 9u8.into() }.to_frame().unwrap();
        assert!(matches!(
            sender.step(&cipher),
            Err(SessionError::ProtocolViolation { got: MsgType::CipherRanked, .. })
        ));
    }

    #[test]
    fn expected_key_is_enforced() {
        let other = CubicPrivateKey::from_primes(7u8.into(), None, 3).unwrap();
        let (_, publish) = CubicReceiver::new(key31()).unwrap();
        let mut sender = CubicSender::new(3u8.into()).expecting(other.public().clone());
        assert_eq!(sender.step(&publish), Err(SessionError::KeyMismatch));
    }

    #[test]
    fn okx_announce_flow() {
        let params = OkxParams::new(19u8.into(), 2u8.into(), 9u8.into(), 2).unwrap();
        let (mut alice, opening) = OkxPeer::announce(params, OkxLocal::new(7u8, 0, 0)).unwrap();
        let mut bob = OkxPeer::join(LocalChoice::Fixed(OkxLocal::new(11u8, 0, 0)));
        let bob_msg = bob.step(&opening).unwrap().unwrap();
        let alice_msg = alice.step(&bob_msg).unwrap().unwrap();
        assert_eq!(bob.step(&alice_msg).unwrap(), None);
        assert_eq!(alice.key().unwrap().0, BigUint::from(13u8));
        assert_eq!(bob.key().unwrap().0, BigUint::from(13u8));
        assert!(matches!(
            bob.step(&alice_msg),
            Err(SessionError::ProtocolViolation { got: MsgType::OkxMsg, .. })
        ));
        assert_eq!(
            alice.transcript("A", "B"),
            "params p=19 g=2 c=9 a=2\nA->B 17\nB->A 6\nA key 13\n"
        );
    }
}
