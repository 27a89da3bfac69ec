use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt::Write;

/// The five collectives of the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Collective {
    Allgather,
    ReduceScatter,
    Allreduce,
    Bcast,
    Reduce,
}

impl Collective {
    pub const ALL: [Collective; 5] = [
        Collective::Allgather,
        Collective::ReduceScatter,
        Collective::Allreduce,
        Collective::Bcast,
        Collective::Reduce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Collective::Allgather => "allgather",
            Collective::ReduceScatter => "reduce_scatter",
            Collective::Allreduce => "allreduce",
            Collective::Bcast => "bcast",
            Collective::Reduce => "reduce",
        }
    }
}

/// What the solver was doing when a cost was charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Phase {
    /// Operator SpMMs inside the Chebyshev filter.
    FilterSpmm,
    /// Identity SpMMs that move filter intermediates back to the V layout.
    FilterRedistribute,
    /// `W = A·V` for freshly added basis vectors.
    Spmm,
    Orthonormalization,
    RayleighQuotient,
    Residual,
    /// Gathering distributed results for output.
    Collect,
    /// Replication checks.
    Debug,
    #[default]
    Other,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::FilterSpmm,
        Phase::FilterRedistribute,
        Phase::Spmm,
        Phase::Orthonormalization,
        Phase::RayleighQuotient,
        Phase::Residual,
        Phase::Collect,
        Phase::Debug,
        Phase::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::FilterSpmm => "filter_spmm",
            Phase::FilterRedistribute => "filter_redistribute",
            Phase::Spmm => "spmm",
            Phase::Orthonormalization => "orthonormalization",
            Phase::RayleighQuotient => "rayleigh_quotient",
            Phase::Residual => "residual",
            Phase::Collect => "collect",
            Phase::Debug => "debug",
            Phase::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub count: u64,
    pub messages: u64,
    pub words: u64,
}

impl Tally {
    fn add(&mut self, other: Tally) {
        self.count += other.count;
        self.messages += other.messages;
        self.words += other.words;
    }

    fn max(self, other: Tally) -> Tally {
        Tally {
            count: self.count.max(other.count),
            messages: self.messages.max(other.messages),
            words: self.words.max(other.words),
        }
    }
}

/// Per-rank α-β cost ledger. Counts only grow; [`CostCounters::reset`] is
/// the one way back to zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CostCounters {
    pub messages: u64,
    pub words: u64,
    pub flops: u64,
    collectives: BTreeMap<(Phase, Collective), Tally>,
    flops_by_phase: BTreeMap<Phase, u64>,
}

impl CostCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn charge(&mut self, phase: Phase, kind: Collective, messages: u64, words: u64) {
        self.messages += messages;
        self.words += words;
        self.collectives.entry((phase, kind)).or_default().add(Tally {
            count: 1,
            messages,
            words,
        });
    }

    pub fn add_flops(&mut self, phase: Phase, flops: u64) {
        self.flops += flops;
        *self.flops_by_phase.entry(phase).or_default() += flops;
    }

    pub fn tally(&self, phase: Phase, kind: Collective) -> Tally {
        self.collectives.get(&(phase, kind)).copied().unwrap_or_default()
    }

    /// All collectives charged during `phase`.
    pub fn phase_tally(&self, phase: Phase) -> Tally {
        let mut t = Tally::default();
        for kind in Collective::ALL {
            t.add(self.tally(phase, kind));
        }
        t
    }

    /// One collective kind summed over every phase.
    pub fn collective_tally(&self, kind: Collective) -> Tally {
        let mut t = Tally::default();
        for phase in Phase::ALL {
            t.add(self.tally(phase, kind));
        }
        t
    }

    pub fn phase_flops(&self, phase: Phase) -> u64 {
        self.flops_by_phase.get(&phase).copied().unwrap_or(0)
    }

    pub fn total_collectives(&self) -> u64 {
        self.collectives.values().map(|t| t.count).sum()
    }

    /// Counts accumulated since the snapshot `earlier` of the same ledger.
    pub fn since(&self, earlier: &CostCounters) -> CostCounters {
        let mut out = CostCounters {
            messages: self.messages - earlier.messages,
            words: self.words - earlier.words,
            flops: self.flops - earlier.flops,
            ..Default::default()
        };
        for (&key, &t) in &self.collectives {
            let before = earlier.collectives.get(&key).copied().unwrap_or_default();
            let d = Tally {
                count: t.count - before.count,
                messages: t.messages - before.messages,
                words: t.words - before.words,
            };
            if d != Tally::default() {
                out.collectives.insert(key, d);
            }
        }
        for (&phase, &f) in &self.flops_by_phase {
            let d = f - earlier.phase_flops(phase);
            if d != 0 {
                out.flops_by_phase.insert(phase, d);
            }
        }
        out
    }

    /// Entrywise maximum over ranks: the critical-path view of a run.
    pub fn merge_max<'a>(ranks: impl IntoIterator<Item = &'a CostCounters>) -> CostCounters {
        let mut out = CostCounters::default();
        for c in ranks {
            out.messages = out.messages.max(c.messages);
            out.words = out.words.max(c.words);
            out.flops = out.flops.max(c.flops);
            for (&key, &t) in &c.collectives {
                let e = out.collectives.entry(key).or_default();
                *e = e.max(t);
            }
            for (&phase, &f) in &c.flops_by_phase {
                let e = out.flops_by_phase.entry(phase).or_default();
                *e = (*e).max(f);
            }
        }
        out
    }

    /// `collective,count,messages,words`, one row per collective kind.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("collective,count,messages,words\n");
        for kind in Collective::ALL {
            let t = self.collective_tally(kind);
            let _ = writeln!(s, "{},{},{},{}", kind.name(), t.count, t.messages, t.words);
        }
        s
    }
}

/// `⌈log₂ n⌉`, with `ceil_log2(1) = 0`.
pub fn ceil_log2(n: usize) -> u64 {
    assert!(n > 0);
    (usize::BITS - (n - 1).leading_zeros()) as u64
}
