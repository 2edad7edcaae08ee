//! The graph-based unbounded envy-free protocol.
//!
//! Each stage: the first player splits the remaining cake into
//! `L = lcm(2..=n)` pieces of equal value to herself; everyone declares
//! whether they agree the pieces are equal. If every disagreeing player
//! already holds an advantage edge with every agreeing player, the
//! agreeing players share the pieces and the protocol ends. Otherwise an
//! advantage stage runs for the least missing pair, adds its edge, and
//! the protocol recurses on the residue. A player connected to everyone
//! absorbs the remaining cake outright.

use crate::agent::{AgentSpec, Declaration};
use crate::analysis::{efbt_worst_bound, degree_threshold};
use crate::exec::{ExecCtx, ExecError};
use crate::frac::Frac;
use crate::ledger::OrdinalBudget;
use crate::pieces::PieceSet;
use crate::subprotocols::adv;
use crate::verify::{check_envy_free, check_partition, Allocation};

use super::{finish_outcome, AdvantageGraph, RunOutcome, StageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EfbtMode {
    /// Full execution over the cake with verified envy-freeness.
    Real,
    /// Graph process only: declarations drawn from the agents' policies,
    /// edges added as in the real protocol, no cake and no cuts.
    Scripted,
}

#[derive(Debug)]
pub struct EfbtRun {
    pub outcome: RunOutcome,
    pub graph: AdvantageGraph,
}

/// Lowest-index vertex of degree `n-1`, if any.
fn full_degree_vertex(g: &AdvantageGraph) -> Option<usize> {
    (0..g.n).find(|&v| (0..g.n).filter(|&u| u != v).all(|u| g.has_edge(v, u)))
}

/// Least missing (EQ, NEQ) pair lexicographically.
fn least_missing_pair(g: &AdvantageGraph, eq: &[usize], neq: &[usize]) -> Option<(usize, usize)> {
    for &i in eq {
        for &j in neq {
            if !g.has_edge(i, j) {
                return Some((i, j));
            }
        }
    }
    None
}

pub fn efbt(
    agents: Vec<AgentSpec>,
    mode: EfbtMode,
    budget: Option<OrdinalBudget>,
    seed: u64,
) -> Result<EfbtRun, ExecError> {
    let n = agents.len();
    if n < 2 {
        return Err(ExecError::Config("efbt needs at least 2 agents".into()));
    }
    let (default_budget, l) = efbt_worst_bound(n);
    let budget = budget.unwrap_or(default_budget);
    let mut ctx = ExecCtx::new("efbt", agents, budget, seed);
    ctx.transcript.header(
        "MODE",
        if mode == EfbtMode::Real { "real" } else { "scripted" },
    );
    let mut graph = AdvantageGraph::new(n);
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut shares: Vec<PieceSet> = vec![PieceSet::empty(); n];
    let mut cake = PieceSet::cake();
    let stage_cap = degree_threshold(n) + 1;

    loop {
        let stage = stages.len() as u32 + 1;
        if stage as u64 > stage_cap + 1 {
            return Err(ExecError::Config(
                "stage cap exceeded: termination bound violated".into(),
            ));
        }
        ctx.stage = stage;
        let cuts_before = ctx.cuts_total;

        // Step 1: a fully connected player absorbs the rest.
        if let Some(v) = full_degree_vertex(&graph) {
            if mode == EfbtMode::Real {
                shares[v] = shares[v].union(&cake);
                ctx.assign(v, &cake);
            }
            stages.push(StageRecord {
                stage,
                declarations: vec![],
                case: "degree_exit".to_string(),
                pair_added: None,
                cuts_used: 0,
                residue: PieceSet::empty(),
            });
            break;
        }

        // Step 2: the first player splits into L equal pieces.
        let pieces: Vec<PieceSet> = if mode == EfbtMode::Scripted || cake.is_empty() {
            vec![PieceSet::empty(); l as usize]
        } else {
            let (pieces, cuts) = ctx.agents[0].valuation.split_equal(&cake, l as usize)?;
            for x in &cuts {
                ctx.cut_at(Some(0), x)?;
            }
            pieces
        };

        // Steps 3-4: declarations. The splitter writes EQ by fiat; a NEQ
        // declaration without an actual witness pair is unverifiable and
        // reclassified as EQ.
        let decl_pieces: Vec<PieceSet> = if mode == EfbtMode::Scripted {
            vec![PieceSet::cake()]
        } else {
            pieces.clone()
        };
        let mut declarations: Vec<(usize, Declaration)> = Vec::with_capacity(n);
        let mut eq = Vec::new();
        let mut neq = Vec::new();
        for q in 0..n {
            let mut d = ctx.declare(q, &decl_pieces, q == 0)?;
            if mode == EfbtMode::Real
                && d == Declaration::Neq
                && ctx.agents[q].inequality_witness(&pieces).is_none()
            {
                d = Declaration::Eq;
            }
            declarations.push((q, d));
            match d {
                Declaration::Eq => eq.push(q),
                Declaration::Neq => neq.push(q),
            }
        }

        match least_missing_pair(&graph, &eq, &neq) {
            None => {
                // Case 1: complete bipartite — the agreeing players share
                // the L pieces in consecutive blocks and the protocol ends.
                if mode == EfbtMode::Real {
                    let k = eq.len();
                    let per = l as usize / k;
                    for (slot, &q) in eq.iter().enumerate() {
                        let mut block = PieceSet::empty();
                        for piece in &pieces[slot * per..(slot + 1) * per] {
                            block = block.union(piece);
                        }
                        shares[q] = shares[q].union(&block);
                        ctx.assign(q, &block);
                    }
                }
                stages.push(StageRecord {
                    stage,
                    declarations,
                    case: "case1".to_string(),
                    pair_added: None,
                    cuts_used: ctx.cuts_total - cuts_before,
                    residue: PieceSet::empty(),
                });
                break;
            }
            Some((i, j)) => {
                // Case 2: run the advantage stage for the least missing
                // pair, keep the residue for the next stage.
                let residue = if mode == EfbtMode::Real {
                    let (p_idx, q_idx) = ctx.agents[j]
                        .inequality_witness(&pieces)
                        .expect("NEQ declarations are witness-checked");
                    let p = pieces[p_idx].clone();
                    let q = pieces[q_idx].clone();
                    let mut r = PieceSet::empty();
                    for (idx, piece) in pieces.iter().enumerate() {
                        if idx != p_idx && idx != q_idx {
                            r = r.union(piece);
                        }
                    }
                    // The declared phase also reserves the next stage's
                    // opening split.
                    let players: Vec<usize> = (0..n).collect();
                    let result = adv(&mut ctx, &players, (i, j), &p, &q, &r, l - 1)?;
                    for (a, s) in &result.allocation.shares {
                        shares[*a] = shares[*a].union(s);
                    }
                    cake = result.residue.clone();
                    result.residue
                } else {
                    PieceSet::empty()
                };
                graph.add_edge(i, j, stage);
                stages.push(StageRecord {
                    stage,
                    declarations,
                    case: "case2".to_string(),
                    pair_added: Some((i, j)),
                    cuts_used: ctx.cuts_total - cuts_before,
                    residue,
                });
            }
        }
    }

    let allocation = Allocation {
        shares: (0..n).map(|q| (q, shares[q].clone())).collect(),
        residue: PieceSet::empty(),
    };
    if mode == EfbtMode::Real {
        let ok = check_partition(&PieceSet::cake(), &allocation).pass
            && check_envy_free(&ctx.agents, &allocation, &Frac::zero()).pass;
        if !ok {
            return Err(ExecError::Subprotocol {
                stage: stages.len() as u32,
                what: "efbt".to_string(),
                best_deviation: None,
            });
        }
    }
    Ok(EfbtRun {
        outcome: finish_outcome(ctx, allocation, stages, Frac::zero()),
        graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::DeclarationPolicy;
    use crate::valuation::ValuationDensity;

    fn uniform(name: &str) -> AgentSpec {
        AgentSpec::honest(name, ValuationDensity::uniform())
    }

    fn seg_agent(name: &str, segs: &[(i64, i64, i64, i64, i64, i64)]) -> AgentSpec {
        let segs: Vec<(Frac, Frac, Frac)> = segs
            .iter()
            .map(|&(a, b, c, d, e, g)| (Frac::new(a, b), Frac::new(c, d), Frac::new(e, g)))
            .collect();
        AgentSpec::honest(name, ValuationDensity::from_segments(&segs).unwrap())
    }

    #[test]
    fn identical_agents_end_in_one_stage() {
        let run = efbt(
            (0..4).map(|i| uniform(&format!("a{}", i + 1))).collect(),
            EfbtMode::Real,
            None,
            0,
        )
        .unwrap();
        assert_eq!(run.outcome.stages.len(), 1);
        assert_eq!(run.outcome.stages[0].case, "case1");
        // Everyone declares EQ, so each gets L/n = 3 of the 12 pieces.
        for (_, p) in &run.outcome.allocation.shares {
            assert_eq!(p.length(), Frac::new(1, 4));
        }
        assert_eq!(run.outcome.cuts_total, 11);
    }

    #[test]
    fn default_budget_matches_worst_bound() {
        let run = efbt(
            vec![uniform("a1"), uniform("a2"), uniform("a3"), uniform("a4")],
            EfbtMode::Real,
            None,
            0,
        )
        .unwrap();
        assert_eq!(
            run.outcome.transcript.header_value("BUDGET-INIT"),
            Some("5w+11")
        );
    }

    #[test]
    fn disagreeing_profile_runs_case2_and_stays_envy_free() {
        let a2 = seg_agent("a2", &[(0, 1, 1, 4, 2, 1), (1, 4, 1, 1, 2, 3)]);
        let a3 = seg_agent("a3", &[(0, 1, 1, 2, 1, 2), (1, 2, 1, 1, 3, 2)]);
        let run = efbt(
            vec![uniform("a1"), a2, a3],
            EfbtMode::Real,
            None,
            0,
        )
        .unwrap();
        assert!(run.outcome.stages.iter().any(|s| s.case == "case2"));
        assert!(run.graph.edge_count() >= 1);
        // The gate already verified exact envy-freeness and partition.
        assert!(run.outcome.allocation.residue.is_empty());
    }

    #[test]
    fn scripted_mode_is_a_pure_graph_process() {
        let mut agents: Vec<AgentSpec> =
            (0..4).map(|i| uniform(&format!("a{}", i + 1))).collect();
        for a in agents.iter_mut().skip(1) {
            a.policy = DeclarationPolicy::Random(Frac::new(1, 2));
        }
        let run = efbt(agents, EfbtMode::Scripted, None, 99).unwrap();
        assert_eq!(run.outcome.cuts_total, 0);
        assert!(run.outcome.stages.len() as u64 <= degree_threshold(4) + 1);
        let workful = run
            .outcome
            .stages
            .iter()
            .filter(|s| s.case != "degree_exit")
            .count() as u64;
        assert!(workful <= degree_threshold(4));
    }

    #[test]
    fn scripted_all_neq_marches_to_degree_exit() {
        let mut agents: Vec<AgentSpec> =
            (0..3).map(|i| uniform(&format!("a{}", i + 1))).collect();
        for a in agents.iter_mut().skip(1) {
            a.policy = DeclarationPolicy::Scripted(vec![Declaration::Neq; 10]);
        }
        let run = efbt(agents, EfbtMode::Scripted, None, 0).unwrap();
        // Hub adds edges (0,1) then (0,2), reaching degree n-1.
        assert_eq!(run.graph.edge_count(), 2);
        assert_eq!(run.outcome.stages.last().unwrap().case, "degree_exit");
    }
}
