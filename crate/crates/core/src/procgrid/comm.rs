use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::counters::{ceil_log2, Collective, CostCounters, Phase};
use super::transport::{Message, SoloTransport, Transport};
use crate::CommError;

/// One rank's endpoint: a transport plus the rank's cost ledger.
///
/// Every collective takes the member list of the sub-communicator
/// explicitly (as returned by `GridTopology::row_comm` and friends); the
/// calling rank must appear in it, and all members must make the same call.
/// Data moves by direct exchange, while costs are charged per the
/// recursive-doubling / halving model:
///
/// | collective     | messages      | words          |
/// |----------------|---------------|----------------|
/// | allgather      | ⌈log₂n⌉       | w·n            |
/// | reduce_scatter | ⌈log₂n⌉       | w (padded)     |
/// | allreduce      | 2⌈log₂n⌉      | 2w⌈log₂n⌉      |
/// | bcast, reduce  | ⌈log₂n⌉       | w⌈log₂n⌉       |
///
/// Single-member communicators move nothing and charge nothing.
pub struct Comm {
    transport: Box<dyn Transport + Send>,
    counters: CostCounters,
    phase: Phase,
}

impl core::fmt::Debug for Comm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Comm")
            .field("rank", &self.rank())
            .field("size", &self.size())
            .field("phase", &self.phase)
            .finish()
    }
}

impl Comm {
    pub fn new(transport: impl Transport + Send + 'static) -> Self {
        Self {
            transport: Box::new(transport),
            counters: CostCounters::new(),
            phase: Phase::Other,
        }
    }

    pub fn solo() -> Self {
        Self::new(SoloTransport)
    }

    pub fn rank(&self) -> usize {
        self.transport.rank()
    }

    pub fn size(&self) -> usize {
        self.transport.size()
    }

    pub fn counters(&self) -> &CostCounters {
        &self.counters
    }

    pub fn counters_mut(&mut self) -> &mut CostCounters {
        &mut self.counters
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Sets the phase subsequent charges are booked under; returns the old one.
    pub fn set_phase(&mut self, phase: Phase) -> Phase {
        core::mem::replace(&mut self.phase, phase)
    }

    pub fn add_flops(&mut self, flops: u64) {
        self.counters.add_flops(self.phase, flops);
    }

    pub fn allgather(&mut self, members: &[usize], local: &[f64]) -> Result<Vec<f64>, CommError> {
        let me = self.position(members)?;
        let n = members.len();
        if n == 1 {
            return Ok(local.to_vec());
        }
        let tag = tag_of(Collective::Allgather, members);
        self.send_all(members, me, tag, local.len(), |_| local.to_vec())?;
        let w = local.len();
        let mut out = Vec::with_capacity(w * n);
        for (idx, &src) in members.iter().enumerate() {
            if idx == me {
                out.extend_from_slice(local);
            } else {
                let msg = self.recv_checked(src, tag, "allgather", w)?;
                out.extend_from_slice(&msg.data);
            }
        }
        self.charge(Collective::Allgather, ceil_log2(n), (w * n) as u64);
        Ok(out)
    }

    /// Elementwise sum of all members' payloads, of which member `r` keeps
    /// the `r`-th of `n` equal slices. Payloads whose length is not a
    /// multiple of `n` are zero-padded; trailing members may then receive a
    /// short (possibly empty) slice.
    pub fn reduce_scatter(&mut self, members: &[usize], local: &[f64]) -> Result<Vec<f64>, CommError> {
        let me = self.position(members)?;
        let n = members.len();
        if n == 1 {
            return Ok(local.to_vec());
        }
        let tag = tag_of(Collective::ReduceScatter, members);
        let len = local.len();
        let s = len.div_ceil(n);
        let slice = |idx: usize| -> Vec<f64> {
            let mut v = vec![0.0; s];
            let lo = (idx * s).min(len);
            let hi = ((idx + 1) * s).min(len);
            v[..hi - lo].copy_from_slice(&local[lo..hi]);
            v
        };
        self.send_all(members, me, tag, len, slice)?;
        let mut parts = Vec::with_capacity(n);
        for (idx, &src) in members.iter().enumerate() {
            if idx == me {
                parts.push(slice(me));
            } else {
                let msg = self.recv_checked(src, tag, "reduce_scatter", len)?;
                parts.push(msg.data);
            }
        }
        let mut out = tree_reduce(&parts);
        let keep = ((me + 1) * s).min(len).saturating_sub(me * s);
        out.truncate(keep);
        self.charge(Collective::ReduceScatter, ceil_log2(n), (s * n) as u64);
        Ok(out)
    }

    /// Elementwise sum replicated on every member, combined in the fixed
    /// [`tree_reduce`] order so all members hold bit-identical results.
    pub fn allreduce(&mut self, members: &[usize], local: &[f64]) -> Result<Vec<f64>, CommError> {
        let me = self.position(members)?;
        let n = members.len();
        if n == 1 {
            return Ok(local.to_vec());
        }
        let tag = tag_of(Collective::Allreduce, members);
        self.send_all(members, me, tag, local.len(), |_| local.to_vec())?;
        let parts = self.gather_parts(members, me, tag, "allreduce", local)?;
        let w = local.len() as u64;
        let l = ceil_log2(n);
        self.charge(Collective::Allreduce, 2 * l, 2 * w * l);
        Ok(tree_reduce(&parts))
    }

    /// Copies the payload of member `root` (an index into `members`) to every
    /// member. Non-root payloads are ignored.
    pub fn bcast(&mut self, members: &[usize], root: usize, data: &[f64]) -> Result<Vec<f64>, CommError> {
        let me = self.position(members)?;
        let n = members.len();
        if root >= n {
            return Err(CommError::RootOutOfRange { root, size: n });
        }
        if n == 1 {
            return Ok(data.to_vec());
        }
        let tag = tag_of(Collective::Bcast, members) ^ root as u64;
        let out = if me == root {
            self.send_all(members, me, tag, data.len(), |_| data.to_vec())?;
            data.to_vec()
        } else {
            let msg = self.transport.recv(members[root])?;
            check_tag(members[root], tag, &msg)?;
            msg.data
        };
        let l = ceil_log2(n);
        self.charge(Collective::Bcast, l, out.len() as u64 * l);
        Ok(out)
    }

    /// Sum of all payloads delivered to member `root`; others get `None`.
    pub fn reduce(&mut self, members: &[usize], root: usize, local: &[f64]) -> Result<Option<Vec<f64>>, CommError> {
        let me = self.position(members)?;
        let n = members.len();
        if root >= n {
            return Err(CommError::RootOutOfRange { root, size: n });
        }
        if n == 1 {
            return Ok(Some(local.to_vec()));
        }
        let tag = tag_of(Collective::Reduce, members) ^ root as u64;
        let l = ceil_log2(n);
        self.charge(Collective::Reduce, l, local.len() as u64 * l);
        if me != root {
            let msg = Message { tag, len: local.len(), data: local.to_vec() };
            self.transport.send(members[root], msg)?;
            return Ok(None);
        }
        let parts = self.gather_parts(members, me, tag, "reduce", local)?;
        Ok(Some(tree_reduce(&parts)))
    }

    fn position(&self, members: &[usize]) -> Result<usize, CommError> {
        let rank = self.rank();
        members
            .iter()
            .position(|&r| r == rank)
            .ok_or(CommError::NotMember { rank })
    }

    fn charge(&mut self, kind: Collective, messages: u64, words: u64) {
        self.counters.charge(self.phase, kind, messages, words);
    }

    fn send_all(
        &mut self,
        members: &[usize],
        me: usize,
        tag: u64,
        len: usize,
        payload: impl Fn(usize) -> Vec<f64>,
    ) -> Result<(), CommError> {
        for (idx, &dest) in members.iter().enumerate() {
            if idx != me {
                let data = payload(idx);
                self.transport.send(dest, Message { tag, len, data })?;
            }
        }
        Ok(())
    }

    fn recv_checked(
        &mut self,
        src: usize,
        tag: u64,
        collective: &'static str,
        expected_len: usize,
    ) -> Result<Message, CommError> {
        let msg = self.transport.recv(src)?;
        check_tag(src, tag, &msg)?;
        // `len` is the sender's unpadded payload length
        if msg.len != expected_len {
            return Err(CommError::SizeMismatch { collective, expected: expected_len, got: msg.len });
        }
        Ok(msg)
    }

    fn gather_parts(
        &mut self,
        members: &[usize],
        me: usize,
        tag: u64,
        collective: &'static str,
        local: &[f64],
    ) -> Result<Vec<Vec<f64>>, CommError> {
        let mut parts = Vec::with_capacity(members.len());
        for (idx, &src) in members.iter().enumerate() {
            if idx == me {
                parts.push(local.to_vec());
            } else {
                parts.push(self.recv_checked(src, tag, collective, local.len())?.data);
            }
        }
        Ok(parts)
    }
}

fn check_tag(src: usize, expected: u64, msg: &Message) -> Result<(), CommError> {
    if msg.tag != expected {
        return Err(CommError::TagMismatch { src, expected, got: msg.tag });
    }
    Ok(())
}

/// FNV-1a over the collective kind and the member list.
fn tag_of(kind: Collective, members: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(kind as u64);
    for &m in members {
        eat(m as u64);
    }
    h
}

/// Elementwise sum of equal-length parts in a fixed left-leaning binary
/// tree: the left subtree takes the largest power of two strictly below the
/// part count. Every caller, serial or distributed, that sums the same
/// parts in the same order gets the same bits.
pub fn tree_reduce<S: AsRef<[f64]>>(parts: &[S]) -> Vec<f64> {
    match parts.len() {
        0 => Vec::new(),
        1 => parts[0].as_ref().to_vec(),
        n => {
            let split = 1 << (usize::BITS - 1 - (n - 1).leading_zeros());
            let mut left = tree_reduce(&parts[..split]);
            let right = tree_reduce(&parts[split..]);
            for (l, r) in left.iter_mut().zip(&right) {
                *l += r;
            }
            left
        }
    }
}
