//! Two-party channels: in-process duplex and TCP, both behind the same
//! framed transport trait, wrapped by a transcript-logging layer.
//!
//! Wire frame: 4-byte little-endian payload length, 2-byte tag, payload.

use super::transcript::{Direction, Event, EventKind, PartyLog, Phase};
use super::Party;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("peer disconnected")]
    Disconnected,
    #[error("expected tag {expected}, received {got}")]
    WrongTag { expected: u16, got: u16 },
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Framed, ordered, exactly-once message transport.
pub trait Transport: Send {
    fn send_frame(&mut self, tag: u16, payload: &[u8]) -> Result<(), ChannelError>;
    fn recv_frame(&mut self) -> Result<(u16, Vec<u8>), ChannelError>;
}

/// In-process duplex transport over mpsc queues.
pub struct InProcTransport {
    tx: Sender<(u16, Vec<u8>)>,
    rx: Receiver<(u16, Vec<u8>)>,
}

impl InProcTransport {
    /// Connected pair (a, b): a's sends arrive at b and vice versa.
    pub fn pair() -> (InProcTransport, InProcTransport) {
        let (tx_ab, rx_ab) = channel();
        let (tx_ba, rx_ba) = channel();
        (
            InProcTransport { tx: tx_ab, rx: rx_ba },
            InProcTransport { tx: tx_ba, rx: rx_ab },
        )
    }
}

impl Transport for InProcTransport {
    fn send_frame(&mut self, tag: u16, payload: &[u8]) -> Result<(), ChannelError> {
        self.tx
            .send((tag, payload.to_vec()))
            .map_err(|_| ChannelError::Disconnected)
    }

    fn recv_frame(&mut self) -> Result<(u16, Vec<u8>), ChannelError> {
        self.rx.recv().map_err(|_| ChannelError::Disconnected)
    }
}

/// TCP transport with the 4-byte length + 2-byte tag framing.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> TcpTransport {
        stream.set_nodelay(true).ok();
        TcpTransport { stream }
    }
}

/// Loopback listener/connector pair on an OS-assigned port.
pub fn tcp_transport_pair() -> Result<(TcpTransport, TcpTransport), ChannelError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let connect = std::thread::spawn(move || TcpStream::connect(addr));
    let (accepted, _) = listener.accept()?;
    let connected = connect
        .join()
        .map_err(|_| ChannelError::MalformedFrame("connect thread panicked".into()))??;
    Ok((TcpTransport::new(accepted), TcpTransport::new(connected)))
}

impl Transport for TcpTransport {
    fn send_frame(&mut self, tag: u16, payload: &[u8]) -> Result<(), ChannelError> {
        let len: u32 = payload
            .len()
            .try_into()
            .map_err(|_| ChannelError::MalformedFrame("payload too large".into()))?;
        self.stream.write_all(&len.to_le_bytes())?;
        self.stream.write_all(&tag.to_le_bytes())?;
        self.stream.write_all(payload)?;
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<(u16, Vec<u8>), ChannelError> {
        let mut header = [0u8; 6];
        self.stream.read_exact(&mut header).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                ChannelError::Disconnected
            } else {
                ChannelError::Io(e)
            }
        })?;
        let len = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let tag = u16::from_le_bytes(header[4..6].try_into().unwrap());
        let mut payload = vec![0u8; len];
        self.stream.read_exact(&mut payload)?;
        Ok((tag, payload))
    }
}

/// A party's transcript-logging channel endpoint. Both endpoints of a run
/// must share the same clock so event interleaving is a total order.
pub struct LoggedChannel {
    party: Party,
    transport: Box<dyn Transport>,
    clock: Arc<AtomicU64>,
    events: Vec<Event>,
    phase: Phase,
}

impl LoggedChannel {
    pub fn new(
        party: Party,
        transport: Box<dyn Transport>,
        clock: Arc<AtomicU64>,
    ) -> LoggedChannel {
        LoggedChannel {
            party,
            transport,
            clock,
            events: Vec::new(),
            phase: Phase::Online,
        }
    }

    /// Connected in-process pair (client, server) with a shared clock.
    pub fn inproc_pair() -> (LoggedChannel, LoggedChannel) {
        let clock = Arc::new(AtomicU64::new(0));
        let (a, b) = InProcTransport::pair();
        (
            LoggedChannel::new(Party::Client, Box::new(a), clock.clone()),
            LoggedChannel::new(Party::Server, Box::new(b), clock),
        )
    }

    /// Connected loopback-TCP pair (client, server) with a shared clock.
    pub fn tcp_pair() -> Result<(LoggedChannel, LoggedChannel), ChannelError> {
        let clock = Arc::new(AtomicU64::new(0));
        let (a, b) = tcp_transport_pair()?;
        Ok((
            LoggedChannel::new(Party::Client, Box::new(b), clock.clone()),
            LoggedChannel::new(Party::Server, Box::new(a), clock),
        ))
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn send(&mut self, tag: u16, payload: &[u8]) -> Result<(), ChannelError> {
        self.send_with_cts(tag, payload, 0)
    }

    /// Send a message carrying `ciphertexts` ciphertexts (for counting).
    pub fn send_with_cts(
        &mut self,
        tag: u16,
        payload: &[u8],
        ciphertexts: u64,
    ) -> Result<(), ChannelError> {
        let seq = self.clock.fetch_add(1, Ordering::SeqCst);
        self.transport.send_frame(tag, payload)?;
        self.events.push(Event {
            seq,
            kind: EventKind::Send,
            dir: Direction::from_sender(self.party),
            tag,
            bytes: payload.len() as u64,
            ciphertexts,
            phase: self.phase,
        });
        Ok(())
    }

    /// Receive the next message; errors if its tag is not the expected one.
    pub fn recv(&mut self, expected_tag: u16) -> Result<Vec<u8>, ChannelError> {
        let (payload, _) = self.recv_with_cts(expected_tag)?;
        Ok(payload)
    }

    pub fn recv_with_cts(
        &mut self,
        expected_tag: u16,
    ) -> Result<(Vec<u8>, u64), ChannelError> {
        let (tag, payload) = self.transport.recv_frame()?;
        let seq = self.clock.fetch_add(1, Ordering::SeqCst);
        if tag != expected_tag {
            return Err(ChannelError::WrongTag {
                expected: expected_tag,
                got: tag,
            });
        }
        self.events.push(Event {
            seq,
            kind: EventKind::Recv,
            dir: Direction::from_sender(self.party.other()),
            tag,
            bytes: payload.len() as u64,
            ciphertexts: 0,
            phase: self.phase,
        });
        Ok((payload, 0))
    }

    pub fn into_log(self) -> PartyLog {
        PartyLog {
            party: self.party,
            events: self.events,
        }
    }
}
