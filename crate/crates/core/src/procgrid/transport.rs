use alloc::vec::Vec;

use crate::CommError;

/// A point-to-point message. `tag` identifies the collective (kind plus
/// member list) so ranks that call different collectives are caught, and
/// `len` carries the sender's unpadded payload length.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub tag: u64,
    pub len: usize,
    pub data: Vec<f64>,
}

/// Reliable, per-pair ordered point-to-point channel between ranks.
///
/// Implementations own no state shared with other ranks except through
/// the messages themselves.
pub trait Transport {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    fn send(&mut self, dest: usize, msg: Message) -> Result<(), CommError>;
    fn recv(&mut self, src: usize) -> Result<Message, CommError>;
}

/// The single-rank world.
#[derive(Debug, Default, Clone, Copy)]
pub struct SoloTransport;

impl Transport for SoloTransport {
    fn rank(&self) -> usize {
        0
    }

    fn size(&self) -> usize {
        1
    }

    fn send(&mut self, dest: usize, _msg: Message) -> Result<(), CommError> {
        Err(CommError::Disconnected(dest))
    }

    fn recv(&mut self, src: usize) -> Result<Message, CommError> {
        Err(CommError::Disconnected(src))
    }
}
