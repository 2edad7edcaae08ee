//! Protocol drivers.

pub mod baselines;
pub mod efbt;
pub mod recursive;

use crate::agent::Declaration;
use crate::exec::ExecCtx;
use crate::frac::Frac;
use crate::pieces::PieceSet;
use crate::transcript::Transcript;
use crate::verify::Allocation;

pub use baselines::{cut_and_choose, even_paz, selfridge_conway};
pub use efbt::{efbt, EfbtMode, EfbtRun};
pub use recursive::{efrw, pikhurto, recursive_default_budget};

/// The graph of advantage relations accumulated across stages: an edge
/// `(i, j)` means both players prefer their own share even if the other
/// also receives all remaining cake.
#[derive(Debug, Clone)]
pub struct AdvantageGraph {
    pub n: usize,
    /// Edges with the stage that added them.
    pub edges: Vec<(usize, usize, u32)>,
}

impl AdvantageGraph {
    pub fn new(n: usize) -> Self {
        AdvantageGraph { n, edges: Vec::new() }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges
            .iter()
            .any(|&(a, b, _)| (a, b) == (i, j) || (a, b) == (j, i))
    }

    pub fn add_edge(&mut self, i: usize, j: usize, stage: u32) {
        if !self.has_edge(i, j) {
            self.edges.push((i, j, stage));
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// What happened in one protocol stage, kept for post-run auditing.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub stage: u32,
    pub declarations: Vec<(usize, Declaration)>,
    pub case: String,
    pub pair_added: Option<(usize, usize)>,
    pub cuts_used: u64,
    pub residue: PieceSet,
}

/// A completed protocol run.
#[derive(Debug)]
pub struct RunOutcome {
    pub allocation: Allocation,
    pub transcript: Transcript,
    pub stages: Vec<StageRecord>,
    pub cuts_total: u64,
    pub omega_conversions: u64,
    /// The envy tolerance the run is verified against (0 = exact).
    pub final_tolerance: Frac,
}

pub(crate) fn finish_outcome(
    mut ctx: ExecCtx,
    allocation: Allocation,
    stages: Vec<StageRecord>,
    final_tolerance: Frac,
) -> RunOutcome {
    ctx.finish(&allocation.shares, &allocation.residue);
    RunOutcome {
        allocation,
        transcript: ctx.transcript,
        stages,
        cuts_total: ctx.cuts_total,
        omega_conversions: ctx.omega_conversions,
        final_tolerance,
    }
}
