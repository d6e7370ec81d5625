//! Minimal rank-based message passing.
//!
//! Ranks are processes connected pairwise by stream sockets. Rank 0 is the
//! master. Sends are blocking and tagged; receives select by source and tag.

mod clock;
mod comm;
pub mod launch;
pub mod wire;

use std::fmt;
use std::time::Duration;

use thiserror::Error;

pub use clock::wall_time;
pub use comm::{
    loopback_world, CommOptions, Communicator, Direction, TraceEvent, DEFAULT_CONNECT_TIMEOUT,
    DEFAULT_RECV_TIMEOUT,
};
pub use launch::{launch, Hosts, Job, LaunchError, LaunchSpec, RankExit};
pub use wire::{Envelope, Payload, PayloadKind, PayloadRef, WireError};

/// Rank of this process.
pub const ENV_RANK: &str = "RANK";
/// Comma-separated `host:port` per rank; entry 0 is the rendezvous.
pub const ENV_WORLD_ENDPOINTS: &str = "WORLD_ENDPOINTS";
/// Host label the launcher placed this rank on.
pub const ENV_HOST: &str = "WORLD_HOST";
/// Optional receive timeout override in milliseconds.
pub const ENV_RECV_TIMEOUT_MS: &str = "RECV_TIMEOUT_MS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RankId(pub u32);

impl RankId {
    pub const MASTER: RankId = RankId(0);

    pub fn is_master(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for RankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum MsgError {
    #[error("rank {rank} is outside a world of {world_size}")]
    RankOutOfRange { rank: u32, world_size: u32 },
    #[error("rank {0} cannot message itself")]
    SelfMessage(u32),
    #[error("transport to rank {peer} failed: {detail}")]
    Transport { peer: u32, detail: String },
    #[error("no message from rank {from} with tag {tag} after {waited:?}; deadlock suspected")]
    DeadlockSuspected {
        from: u32,
        tag: u32,
        waited: Duration,
    },
    #[error("rank {from} tag {tag}: expected {expected:?}, received {got:?}")]
    KindMismatch {
        from: u32,
        tag: u32,
        expected: PayloadKind,
        got: PayloadKind,
    },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("launch environment: {0}")]
    Env(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
