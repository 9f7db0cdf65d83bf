//! Two-party machinery: additive shares, channels with transcript logging,
//! and dealer-backed ideal functionalities.
//!
//! The dealer is a trusted in-process endpoint that reconstructs inputs,
//! computes the functionality exactly, and re-shares outputs with fresh
//! randomness — functionally identical to (but not a secure replacement
//! for) OT-based realizations. Dealer traffic is accounted separately from
//! the two-party wire via a configurable cost table.

mod channel;
mod dealer;
mod shares;
mod transcript;

pub use channel::{
    tcp_transport_pair, ChannelError, InProcTransport, LoggedChannel, TcpTransport,
    Transport,
};
pub use dealer::{CostTable, Dealer, FuncKind, FuncStats, PartyCtx};
pub use shares::{reconstruct, reconstruct_bits, share, share_bits, BoolShare, ShareTensor};
pub use transcript::{Direction, Event, EventKind, PartyLog, Phase, Transcript, WireMessage};

/// Which of the two protocol parties we are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Client,
    Server,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Client => Party::Server,
            Party::Server => Party::Client,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Party::Client => 0,
            Party::Server => 1,
        }
    }
}
