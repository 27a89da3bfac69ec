//! Per-component cost sweep over grid sizes.

use chebspectral_core::chebdav::SolverConfig;
use chebspectral_core::graph::CsrMatrix;
use chebspectral_core::procgrid::{CostCounters, Phase, Tally};
use chebspectral_core::Result;

use crate::run::{solve, Mode};
use crate::transport::Scheduler;

/// Column set of the bench CSV, in order.
pub const BENCH_HEADER: &str = "p,component,iterations,collectives,messages,words,flops";

/// Solver components and the phases charged to each.
pub const COMPONENTS: [(&str, &[Phase]); 5] = [
    ("filter", &[Phase::FilterSpmm, Phase::FilterRedistribute]),
    ("spmm", &[Phase::Spmm]),
    ("orthonormalization", &[Phase::Orthonormalization]),
    ("update_rq", &[Phase::RayleighQuotient]),
    ("residual", &[Phase::Residual]),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub p: usize,
    pub component: &'static str,
    pub iterations: usize,
    pub tally: Tally,
    pub flops: u64,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        let t = self.tally;
        format!("{},{},{},{},{},{},{}", self.p, self.component, self.iterations, t.count, t.messages, t.words, self.flops)
    }
}

fn component_rows(p: usize, iterations: usize, c: &CostCounters) -> Vec<BenchRow> {
    let mut rows: Vec<BenchRow> = COMPONENTS
        .iter()
        .map(|&(name, phases)| {
            let mut tally = Tally::default();
            let mut flops = 0;
            for &ph in phases {
                let t = c.phase_tally(ph);
                tally.count += t.count;
                tally.messages += t.messages;
                tally.words += t.words;
                flops += c.phase_flops(ph);
            }
            BenchRow { p, component: name, iterations, tally, flops }
        })
        .collect();
    let mut total = BenchRow { p, component: "total", iterations, tally: Tally::default(), flops: 0 };
    for r in &rows {
        total.tally.count += r.tally.count;
        total.tally.messages += r.tally.messages;
        total.tally.words += r.tally.words;
        total.flops += r.flops;
    }
    rows.push(total);
    rows
}

/// One distributed solve per `p`, reported as one row per component plus a
/// total. Every `p` must be a perfect square.
pub fn bench(a: &CsrMatrix, cfg: &SolverConfig, ps: &[usize], scheduler: Scheduler) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &p in ps {
        let out = solve(a, cfg, None, None, Mode::Distributed { p, scheduler, check_replication: false })?;
        log::info!("bench p={p}: {} iterations", out.result.iterations);
        rows.extend(component_rows(p, out.result.iterations, &out.counters));
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(BENCH_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}
