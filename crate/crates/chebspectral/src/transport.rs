//! In-process transports that host one simulated rank per thread.

use std::collections::VecDeque;
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use chebspectral_core::procgrid::{Comm, Message, Transport};
use chebspectral_core::CommError;

/// Per-pair queue depth of [`ThreadedTransport`].
pub const CHANNEL_CAPACITY: usize = 1024;

/// How long a threaded rank waits on a receive before reporting deadlock.
pub const RECV_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    /// Every rank runs freely on its own thread over bounded channels.
    #[default]
    Threaded,
    /// Ranks take turns holding a single baton, so exactly one runs at a
    /// time and the interleaving is reproducible.
    Lockstep,
}

/// Bounded channels between every ordered pair of ranks.
pub struct ThreadedTransport {
    rank: usize,
    senders: Vec<SyncSender<Message>>,
    receivers: Vec<Receiver<Message>>,
    timeout: Duration,
}

impl ThreadedTransport {
    /// One transport per rank, in rank order.
    pub fn world(p: usize) -> Vec<Self> {
        Self::world_with(p, CHANNEL_CAPACITY, RECV_TIMEOUT)
    }

    pub fn world_with(p: usize, capacity: usize, timeout: Duration) -> Vec<Self> {
        let mut senders: Vec<Vec<SyncSender<Message>>> = (0..p).map(|_| Vec::with_capacity(p)).collect();
        let mut receivers: Vec<Vec<Option<Receiver<Message>>>> = (0..p).map(|_| (0..p).map(|_| None).collect()).collect();
        for (src, row) in senders.iter_mut().enumerate() {
            for dst_rx in receivers.iter_mut() {
                let (tx, rx) = sync_channel(capacity);
                row.push(tx);
                dst_rx[src] = Some(rx);
            }
        }
        senders
            .into_iter()
            .zip(receivers)
            .enumerate()
            .map(|(rank, (senders, rx))| Self {
                rank,
                senders,
                receivers: rx.into_iter().map(|r| r.expect("every pair has a channel")).collect(),
                timeout,
            })
            .collect()
    }
}

impl Transport for ThreadedTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.senders.len()
    }

    fn send(&mut self, dest: usize, msg: Message) -> Result<(), CommError> {
        let tx = self.senders.get(dest).ok_or(CommError::NotMember { rank: dest })?;
        tx.send(msg).map_err(|_| CommError::Disconnected(dest))
    }

    fn recv(&mut self, src: usize) -> Result<Message, CommError> {
        let rx = self.receivers.get(src).ok_or(CommError::NotMember { rank: src })?;
        rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => CommError::Deadlock,
            RecvTimeoutError::Disconnected => CommError::Disconnected(src),
        })
    }
}

struct Baton {
    turn: usize,
    /// `mail[src * p + dst]`.
    mail: Vec<VecDeque<Message>>,
    waiting_on: Vec<Option<usize>>,
    done: Vec<bool>,
    deadlock: bool,
}

impl Baton {
    fn runnable(&self, r: usize) -> bool {
        let p = self.done.len();
        !self.done[r] && self.waiting_on[r].is_none_or(|src| !self.mail[src * p + r].is_empty())
    }

    /// Hands the baton to the next runnable rank after `from`, or flags a
    /// deadlock when nobody can make progress.
    fn pass(&mut self, from: usize) {
        let p = self.done.len();
        match (1..=p).map(|d| (from + d) % p).find(|&r| self.runnable(r)) {
            Some(r) => self.turn = r,
            None => {
                if !self.done.iter().all(|&d| d) {
                    self.deadlock = true;
                }
            }
        }
    }
}

struct Shared {
    baton: Mutex<Baton>,
    cv: Condvar,
}

/// Single-baton scheduler: a rank keeps running until it blocks on an empty
/// mailbox or finishes, then the next runnable rank in round-robin order
/// takes over. Sends never block.
pub struct LockstepTransport {
    rank: usize,
    size: usize,
    shared: Arc<Shared>,
    started: bool,
}

impl LockstepTransport {
    pub fn world(p: usize) -> Vec<Self> {
        let shared = Arc::new(Shared {
            baton: Mutex::new(Baton {
                turn: 0,
                mail: (0..p * p).map(|_| VecDeque::new()).collect(),
                waiting_on: vec![None; p],
                done: vec![false; p],
                deadlock: false,
            }),
            cv: Condvar::new(),
        });
        (0..p)
            .map(|rank| Self {
                rank,
                size: p,
                shared: Arc::clone(&shared),
                started: false,
            })
            .collect()
    }

    fn lock(&self) -> Result<MutexGuard<'_, Baton>, CommError> {
        self.shared.baton.lock().map_err(|_| CommError::Transport("a rank panicked".into()))
    }

    fn wait_turn<'g>(&self, mut g: MutexGuard<'g, Baton>) -> Result<MutexGuard<'g, Baton>, CommError> {
        while g.turn != self.rank && !g.deadlock {
            g = self.shared.cv.wait(g).map_err(|_| CommError::Transport("a rank panicked".into()))?;
        }
        if g.deadlock {
            return Err(CommError::Deadlock);
        }
        Ok(g)
    }

    /// Blocks until this rank holds the baton for the first time. Called by
    /// [`run_spmd`] before any user code runs.
    pub fn start(&mut self) -> Result<(), CommError> {
        if !self.started {
            let g = self.lock()?;
            drop(self.wait_turn(g)?);
            self.started = true;
        }
        Ok(())
    }

    fn finish(&mut self) {
        if let Ok(mut g) = self.shared.baton.lock() {
            if !g.done[self.rank] {
                g.done[self.rank] = true;
                g.waiting_on[self.rank] = None;
                if g.turn == self.rank {
                    g.pass(self.rank);
                }
                self.shared.cv.notify_all();
            }
        }
    }
}

impl Drop for LockstepTransport {
    fn drop(&mut self) {
        self.finish();
    }
}

impl Transport for LockstepTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send(&mut self, dest: usize, msg: Message) -> Result<(), CommError> {
        if dest >= self.size {
            return Err(CommError::NotMember { rank: dest });
        }
        self.start()?;
        let mut g = self.lock()?;
        if g.done[dest] {
            return Err(CommError::Disconnected(dest));
        }
        let idx = self.rank * self.size + dest;
        g.mail[idx].push_back(msg);
        Ok(())
    }

    fn recv(&mut self, src: usize) -> Result<Message, CommError> {
        if src >= self.size {
            return Err(CommError::NotMember { rank: src });
        }
        self.start()?;
        let idx = src * self.size + self.rank;
        let mut g = self.lock()?;
        loop {
            if let Some(msg) = g.mail[idx].pop_front() {
                g.waiting_on[self.rank] = None;
                return Ok(msg);
            }
            if g.done[src] {
                return Err(CommError::Disconnected(src));
            }
            g.waiting_on[self.rank] = Some(src);
            g.pass(self.rank);
            self.shared.cv.notify_all();
            g = self.wait_turn(g)?;
        }
    }
}

/// Runs `f` once per rank on `p` threads and returns the results in rank
/// order. A panic on any rank is re-raised on the caller.
pub fn run_spmd<R, F>(p: usize, scheduler: Scheduler, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut Comm) -> R + Sync,
{
    fn spawn_all<R: Send, T: Transport + Send + 'static>(
        transports: Vec<T>,
        prepare: fn(&mut T),
        f: &(dyn Fn(&mut Comm) -> R + Sync),
    ) -> Vec<R> {
        std::thread::scope(|scope| {
            let handles: Vec<_> = transports
                .into_iter()
                .map(|mut t| {
                    scope.spawn(move || {
                        prepare(&mut t);
                        f(&mut Comm::new(t))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
                .collect()
        })
    }
    match scheduler {
        Scheduler::Threaded => spawn_all(ThreadedTransport::world(p), |_| {}, &f),
        // a start failure resurfaces on the first send or receive
        Scheduler::Lockstep => spawn_all(LockstepTransport::world(p), |t| drop(t.start()), &f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(tag: u64, x: f64) -> Message {
        Message { tag, len: 1, data: vec![x] }
    }

    #[test]
    fn lockstep_detects_deadlock() {
        let out: Vec<_> = std::thread::scope(|s| {
            let hs: Vec<_> = LockstepTransport::world(2)
                .into_iter()
                .map(|mut t| s.spawn(move || t.recv(1 - t.rank()).map(|_| ())))
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(out, vec![Err(CommError::Deadlock), Err(CommError::Deadlock)]);
    }

    #[test]
    fn lockstep_runs_one_rank_at_a_time() {
        let active = std::sync::atomic::AtomicUsize::new(0);
        let peak = std::sync::atomic::AtomicUsize::new(0);
        run_spmd(4, Scheduler::Lockstep, |c| {
            use std::sync::atomic::Ordering::SeqCst;
            for _ in 0..5 {
                let now = active.fetch_add(1, SeqCst) + 1;
                peak.fetch_max(now, SeqCst);
                std::thread::sleep(Duration::from_millis(1));
                active.fetch_sub(1, SeqCst);
                c.allreduce(&[0, 1, 2, 3], &[1.0]).unwrap();
            }
        });
        assert_eq!(peak.into_inner(), 1);
    }

    #[test]
    fn threaded_times_out_instead_of_hanging() {
        let mut w = ThreadedTransport::world_with(2, 4, Duration::from_millis(20));
        assert_eq!(w[0].recv(1), Err(CommError::Deadlock));
        w[1].send(0, msg(7, 1.5)).unwrap();
        assert_eq!(w[0].recv(1).unwrap(), msg(7, 1.5));
    }

    #[test]
    fn lockstep_reports_finished_peer() {
        let out: Vec<_> = std::thread::scope(|s| {
            let mut w = LockstepTransport::world(2);
            let t1 = w.pop().unwrap();
            let mut t0 = w.pop().unwrap();
            let h = s.spawn(move || {
                let mut t1 = t1;
                t1.start().unwrap();
                t1.send(0, msg(1, 2.0)).unwrap();
            });
            let first = t0.recv(1);
            let second = t0.recv(1);
            h.join().unwrap();
            vec![first.map(|m| m.data[0]), second.map(|m| m.data[0])]
        });
        assert_eq!(out, vec![Ok(2.0), Err(CommError::Disconnected(1))]);
    }
}
