//! Per-protocol communication accounting.
//!
//! Round definition: message m belongs to round 1 + max round of any
//! opposite-direction message its sender had already received when m was
//! sent (dependency barrier). Two dependent messages A->B then B->A count 2
//! rounds; independent messages sent in parallel count 1. Events are
//! stamped from a shared atomic clock so the interleaving is a total order.

use super::Party;

/// Wire direction of a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

impl Direction {
    pub fn from_sender(p: Party) -> Direction {
        match p {
            Party::Client => Direction::ClientToServer,
            Party::Server => Direction::ServerToClient,
        }
    }
}

/// Protocol phase a message belongs to (weight setup vs online query).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Phase {
    Setup,
    #[default]
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Send,
    Recv,
}

/// One logged channel event, stamped by the shared clock.
#[derive(Debug, Clone)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub dir: Direction,
    pub tag: u16,
    pub bytes: u64,
    pub ciphertexts: u64,
    pub phase: Phase,
}

/// Everything one party saw on the wire.
#[derive(Debug, Clone)]
pub struct PartyLog {
    pub party: Party,
    pub events: Vec<Event>,
}

/// A matched send/recv pair after merging both party logs.
#[derive(Debug, Clone)]
pub struct WireMessage {
    pub dir: Direction,
    pub tag: u16,
    pub bytes: u64,
    pub ciphertexts: u64,
    pub phase: Phase,
    pub send_seq: u64,
    pub recv_seq: u64,
    pub round: u64,
}

/// Merged view of a protocol run.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub messages: Vec<WireMessage>,
    /// Dependency-barrier rounds of the online phase.
    pub online_rounds: u64,
    pub setup_rounds: u64,
    pub online_bytes_c2s: u64,
    pub online_bytes_s2c: u64,
    pub setup_bytes: u64,
    pub online_cts_c2s: u64,
    pub online_cts_s2c: u64,
    pub setup_cts: u64,
}

impl Transcript {
    /// Pair sends with receives (in-order delivery per direction), then
    /// assign rounds by dependency depth.
    pub fn merge(client: &PartyLog, server: &PartyLog) -> Transcript {
        assert_eq!(client.party, Party::Client);
        assert_eq!(server.party, Party::Server);
        let mut messages = Vec::new();
        for (dir, sender, receiver) in [
            (Direction::ClientToServer, client, server),
            (Direction::ServerToClient, server, client),
        ] {
            let sends = sender
                .events
                .iter()
                .filter(|e| e.kind == EventKind::Send && e.dir == dir);
            let recvs: Vec<&Event> = receiver
                .events
                .iter()
                .filter(|e| e.kind == EventKind::Recv && e.dir == dir)
                .collect();
            for (i, s) in sends.enumerate() {
                let r = recvs
                    .get(i)
                    .unwrap_or_else(|| panic!("unmatched send #{i} in {dir:?}"));
                assert_eq!(s.tag, r.tag, "send/recv tag mismatch in order");
                messages.push(WireMessage {
                    dir,
                    tag: s.tag,
                    bytes: s.bytes,
                    ciphertexts: s.ciphertexts,
                    phase: s.phase,
                    send_seq: s.seq,
                    recv_seq: r.seq,
                    round: 0,
                });
            }
        }
        messages.sort_by_key(|m| m.send_seq);
        // rounds per phase, computed independently
        for phase in [Phase::Setup, Phase::Online] {
            let idx: Vec<usize> = (0..messages.len())
                .filter(|&i| messages[i].phase == phase)
                .collect();
            for pos in 0..idx.len() {
                let i = idx[pos];
                let mut depth = 1;
                for &j in &idx[..pos] {
                    if messages[j].dir != messages[i].dir
                        && messages[j].recv_seq < messages[i].send_seq
                    {
                        depth = depth.max(messages[j].round + 1);
                    }
                }
                messages[i].round = depth;
            }
        }
        let mut t = Transcript {
            messages,
            ..Transcript::default()
        };
        for m in &t.messages {
            match m.phase {
                Phase::Setup => {
                    t.setup_bytes += m.bytes;
                    t.setup_cts += m.ciphertexts;
                    t.setup_rounds = t.setup_rounds.max(m.round);
                }
                Phase::Online => {
                    match m.dir {
                        Direction::ClientToServer => {
                            t.online_bytes_c2s += m.bytes;
                            t.online_cts_c2s += m.ciphertexts;
                        }
                        Direction::ServerToClient => {
                            t.online_bytes_s2c += m.bytes;
                            t.online_cts_s2c += m.ciphertexts;
                        }
                    }
                    t.online_rounds = t.online_rounds.max(m.round);
                }
            }
        }
        t
    }
}
