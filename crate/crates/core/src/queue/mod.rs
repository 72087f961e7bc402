//! Two-sided messaging: a matrix of SPSC rings, one per ordered
//! (sender, receiver) pair, and the chunking send/recv engine on top.

mod matrix;
mod messenger;
mod ring;

pub(crate) use matrix::open_when_present;
pub use matrix::{QueueMatrix, DEFAULT_CELL_SIZE, DEFAULT_DEPTH};
pub use messenger::{Messenger, Status};
pub use ring::{
    chunk_count, validate_cell_size, validate_depth, MessageHeader, RingQueue, CONTROL_BYTES, HEADER_BYTES,
    MIN_CELL_SIZE,
};
