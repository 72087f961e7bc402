pub mod arena;
pub mod bench;
pub mod checksum;
pub mod device;
pub mod error;
pub mod launch;
pub mod par;
pub mod queue;
pub mod rma;
pub mod runtime;
pub mod sync;
pub mod units;

pub use error::{Error, Result};
