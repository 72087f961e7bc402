//! Store/load-only synchronization: spin backoff, the bakery lock (and its
//! interleaving checker), the sequence-number barrier, and PSCW flags.

pub mod backoff;
pub mod bakery;
pub mod barrier;
pub mod model;
pub mod pscw;

pub use backoff::Backoff;
pub use bakery::BakeryLock;
pub use barrier::SeqBarrier;
pub use model::{check_bakery, ModelConfig, ModelReport};
pub use pscw::SyncArray;
