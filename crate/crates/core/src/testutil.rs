//! Minimal channel transport for unit tests inside this crate.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::vec::Vec;

use crate::procgrid::{Comm, Message, Transport};
use crate::CommError;

struct ChannelTransport {
    rank: usize,
    senders: Vec<Sender<Message>>,
    receivers: Vec<Receiver<Message>>,
}

impl Transport for ChannelTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.senders.len()
    }

    fn send(&mut self, dest: usize, msg: Message) -> Result<(), CommError> {
        self.senders[dest].send(msg).map_err(|_| CommError::Disconnected(dest))
    }

    fn recv(&mut self, src: usize) -> Result<Message, CommError> {
        self.receivers[src].recv().map_err(|_| CommError::Disconnected(src))
    }
}

/// Runs `f` on `p` ranks, one thread each, returning results in rank order.
pub(crate) fn spmd<R, F>(p: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut Comm) -> R + Sync,
{
    // chans[src][dst]
    let mut tx: Vec<Vec<Option<Sender<Message>>>> = (0..p).map(|_| (0..p).map(|_| None).collect()).collect();
    let mut rx: Vec<Vec<Option<Receiver<Message>>>> = (0..p).map(|_| (0..p).map(|_| None).collect()).collect();
    for src in 0..p {
        for dst in 0..p {
            let (s, r) = channel();
            tx[src][dst] = Some(s);
            rx[dst][src] = Some(r);
        }
    }
    let transports: Vec<ChannelTransport> = tx
        .into_iter()
        .zip(rx)
        .enumerate()
        .map(|(rank, (s, r))| ChannelTransport {
            rank,
            senders: s.into_iter().map(Option::unwrap).collect(),
            receivers: r.into_iter().map(Option::unwrap).collect(),
        })
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = transports
            .into_iter()
            .map(|t| {
                let f = &f;
                scope.spawn(move || f(&mut Comm::new(t)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}
