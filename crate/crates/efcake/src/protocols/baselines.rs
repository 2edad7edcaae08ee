//! The classical reference protocols: cut-and-choose, Selfridge-Conway,
//! and Even-Paz.

use crate::agent::AgentSpec;
use crate::exec::{ExecCtx, ExecError};
use crate::frac::Frac;
use crate::ledger::OrdinalBudget;
use crate::pieces::PieceSet;
use crate::verify::{check_envy_free, check_partition, check_proportional, Allocation};

use super::{finish_outcome, RunOutcome, StageRecord};

fn gate(
    ctx: &ExecCtx,
    what: &str,
    alloc: &Allocation,
    envy_free: bool,
) -> Result<(), ExecError> {
    let ok = check_partition(&PieceSet::cake(), alloc).pass
        && check_proportional(&ctx.agents, &PieceSet::cake(), alloc).pass
        && (!envy_free || check_envy_free(&ctx.agents, alloc, &Frac::zero()).pass);
    if ok {
        Ok(())
    } else {
        Err(ExecError::Subprotocol {
            stage: ctx.stage,
            what: what.to_string(),
            best_deviation: None,
        })
    }
}

/// Picks the highest-valued piece among `available` (indices into
/// `pieces`), breaking ties toward the lowest piece index.
fn favorite(agent: &AgentSpec, pieces: &[PieceSet], available: &[usize]) -> usize {
    *available
        .iter()
        .max_by(|&&a, &&b| {
            agent
                .valuation
                .measure(&pieces[a])
                .cmp(&agent.valuation.measure(&pieces[b]))
                .then(b.cmp(&a))
        })
        .expect("nonempty piece list")
}

/// The 2-player, 1-cut protocol: player 1 halves the cake by their own
/// measure, player 2 takes the preferred piece.
pub fn cut_and_choose(
    agents: Vec<AgentSpec>,
    budget: Option<OrdinalBudget>,
    seed: u64,
) -> Result<RunOutcome, ExecError> {
    if agents.len() != 2 {
        return Err(ExecError::Config(format!(
            "cut_and_choose needs 2 agents, got {}",
            agents.len()
        )));
    }
    let budget = budget.unwrap_or_else(|| OrdinalBudget::finite(1));
    let mut ctx = ExecCtx::new("cut_and_choose", agents, budget, seed);
    let cake = PieceSet::cake();

    let half = ctx.eval(0, &cake) / Frac::int(2);
    let x = ctx.cut(0, &cake, &half)?;
    let pieces = [cake.before(&x), cake.from_point(&x)];
    let pick = if ctx.eval(1, &pieces[1]) > ctx.eval(1, &pieces[0]) {
        1
    } else {
        0
    };
    let shares = vec![
        (0usize, pieces[1 - pick].clone()),
        (1usize, pieces[pick].clone()),
    ];
    for (a, p) in &shares {
        ctx.assign(*a, p);
    }
    let alloc = Allocation {
        shares,
        residue: PieceSet::empty(),
    };
    gate(&ctx, "cut_and_choose", &alloc, true)?;
    let stages = vec![StageRecord {
        stage: 1,
        declarations: vec![],
        case: "cut_and_choose".to_string(),
        pair_added: None,
        cuts_used: ctx.cuts_total,
        residue: PieceSet::empty(),
    }];
    Ok(finish_outcome(ctx, alloc, stages, Frac::zero()))
}

/// The 3-player, at-most-5-cut exact envy-free procedure.
pub fn selfridge_conway(
    agents: Vec<AgentSpec>,
    budget: Option<OrdinalBudget>,
    seed: u64,
) -> Result<RunOutcome, ExecError> {
    if agents.len() != 3 {
        return Err(ExecError::Config(format!(
            "selfridge_conway needs 3 agents, got {}",
            agents.len()
        )));
    }
    let budget = budget.unwrap_or_else(|| OrdinalBudget::finite(5));
    let mut ctx = ExecCtx::new("selfridge_conway", agents, budget, seed);
    let cake = PieceSet::cake();

    // P1 cuts into thirds by their own measure.
    let (mut pieces, cuts) = ctx.agents[0].valuation.split_equal(&cake, 3)?;
    for x in &cuts {
        ctx.cut_at(Some(0), x)?;
    }

    // P2 trims their strictly-largest piece down to a tie with the
    // second largest; the trimmings are set aside.
    let vals: Vec<Frac> = pieces.iter().map(|p| ctx.eval(1, p)).collect();
    let largest = favorite(&ctx.agents[1], &pieces, &[0, 1, 2]);
    let second = (0..3)
        .filter(|&r| r != largest)
        .map(|r| vals[r].clone())
        .max()
        .unwrap();
    let mut trimmings = PieceSet::empty();
    let mut trimmed_idx = None;
    if vals[largest] > second {
        let x = ctx.agents[1]
            .valuation
            .quantile_cut(&pieces[largest], &second)?;
        ctx.cut_at(Some(1), &x)?;
        trimmings = pieces[largest].from_point(&x);
        pieces[largest] = pieces[largest].before(&x);
        trimmed_idx = Some(largest);
    }

    // Picking order P3, P2, P1; P2 must take the trimmed piece if P3
    // left it.
    let mut available = vec![0usize, 1, 2];
    let mut shares: Vec<(usize, PieceSet)> = Vec::new();
    let p3_pick = favorite(&ctx.agents[2], &pieces, &available);
    available.retain(|&r| r != p3_pick);
    let p2_pick = match trimmed_idx {
        Some(t) if available.contains(&t) => t,
        _ => favorite(&ctx.agents[1], &pieces, &available),
    };
    available.retain(|&r| r != p2_pick);
    let p1_pick = available[0];
    shares.push((0, pieces[p1_pick].clone()));
    shares.push((1, pieces[p2_pick].clone()));
    shares.push((2, pieces[p3_pick].clone()));
    for (a, p) in &shares {
        ctx.assign(*a, p);
    }

    // Trimmings phase: the non-taker of the trimmed piece among {P2,P3}
    // divides; picking order is taker, P1, divider.
    if let Some(t) = trimmed_idx {
        ctx.stage = 2;
        let taker = if p3_pick == t { 2 } else { 1 };
        let divider = if taker == 2 { 1 } else { 2 };
        let (t_pieces, t_cuts) = ctx.agents[divider].valuation.split_equal(&trimmings, 3)?;
        for x in &t_cuts {
            ctx.cut_at(Some(divider), x)?;
        }
        let mut avail = vec![0usize, 1, 2];
        for &who in &[taker, 0, divider] {
            let pick = favorite(&ctx.agents[who], &t_pieces, &avail);
            avail.retain(|&r| r != pick);
            let entry = shares.iter_mut().find(|(a, _)| *a == who).unwrap();
            entry.1 = entry.1.union(&t_pieces[pick]);
            ctx.assign(who, &t_pieces[pick]);
        }
    }

    let alloc = Allocation {
        shares,
        residue: PieceSet::empty(),
    };
    gate(&ctx, "selfridge_conway", &alloc, true)?;
    let stages = vec![StageRecord {
        stage: 1,
        declarations: vec![],
        case: if trimmed_idx.is_some() {
            "trimmed".to_string()
        } else {
            "no_trim".to_string()
        },
        pair_added: None,
        cuts_used: ctx.cuts_total,
        residue: PieceSet::empty(),
    }];
    Ok(finish_outcome(ctx, alloc, stages, Frac::zero()))
}

fn ceil_log2(n: u64) -> u64 {
    n.next_power_of_two().trailing_zeros() as u64
}

/// The divide-and-conquer proportional protocol: each group member marks
/// their own `floor(k/2)/k` quantile, the median-ish mark splits both
/// the cake and the group.
pub fn even_paz(
    agents: Vec<AgentSpec>,
    budget: Option<OrdinalBudget>,
    seed: u64,
) -> Result<RunOutcome, ExecError> {
    if agents.is_empty() {
        return Err(ExecError::Config("even_paz needs at least 1 agent".into()));
    }
    let n = agents.len() as u64;
    let budget = budget.unwrap_or_else(|| OrdinalBudget::finite(n * ceil_log2(n)));
    let mut ctx = ExecCtx::new("even_paz", agents, budget, seed);

    fn divide(
        ctx: &mut ExecCtx,
        players: &[usize],
        piece: &PieceSet,
        shares: &mut Vec<(usize, PieceSet)>,
    ) -> Result<(), ExecError> {
        let k = players.len();
        if k == 1 {
            ctx.assign(players[0], piece);
            shares.push((players[0], piece.clone()));
            return Ok(());
        }
        let h = k / 2;
        let mut marks: Vec<(Frac, usize)> = Vec::with_capacity(k);
        for &q in players {
            let target =
                ctx.agents[q].valuation.measure(piece) * Frac::new(h as i64, k as i64);
            let x = ctx.cut(q, piece, &target)?;
            marks.push((x, q));
        }
        marks.sort();
        let split = marks[h - 1].0.clone();
        let left_players: Vec<usize> = marks[..h].iter().map(|(_, q)| *q).collect();
        let right_players: Vec<usize> = marks[h..].iter().map(|(_, q)| *q).collect();
        divide(ctx, &left_players, &piece.before(&split), shares)?;
        divide(ctx, &right_players, &piece.from_point(&split), shares)
    }

    let mut shares = Vec::new();
    let players: Vec<usize> = (0..ctx.agents.len()).collect();
    divide(&mut ctx, &players, &PieceSet::cake(), &mut shares)?;
    let alloc = Allocation {
        shares,
        residue: PieceSet::empty(),
    };
    gate(&ctx, "even_paz", &alloc, false)?;
    let stages = vec![StageRecord {
        stage: 1,
        declarations: vec![],
        case: "even_paz".to_string(),
        pair_added: None,
        cuts_used: ctx.cuts_total,
        residue: PieceSet::empty(),
    }];
    Ok(finish_outcome(ctx, alloc, stages, Frac::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn cut_and_choose_identical_agents() {
        let out = cut_and_choose(vec![uniform("alice"), uniform("bob")], None, 0).unwrap();
        assert_eq!(out.cuts_total, 1);
        for (_, p) in &out.allocation.shares {
            assert_eq!(p.length(), Frac::new(1, 2));
        }
    }

    #[test]
    fn cut_and_choose_chooser_prefers_right() {
        // Bob's density is concentrated on the right half.
        let bob = seg_agent("bob", &[(0, 1, 1, 2, 1, 2), (1, 2, 1, 1, 3, 2)]);
        let out = cut_and_choose(vec![uniform("alice"), bob], None, 0).unwrap();
        let bob_share = out.allocation.share_of(1).unwrap();
        assert_eq!(*bob_share, PieceSet::interval(Frac::new(1, 2), Frac::one()));
    }

    #[test]
    fn cut_and_choose_budget_exhaustion() {
        let r = cut_and_choose(
            vec![uniform("a"), uniform("b")],
            Some(OrdinalBudget::finite(0)),
            0,
        );
        assert!(matches!(r, Err(ExecError::Ledger(_))));
    }

    #[test]
    fn selfridge_conway_identical_needs_two_cuts() {
        let out =
            selfridge_conway(vec![uniform("a"), uniform("b"), uniform("c")], None, 0).unwrap();
        assert_eq!(out.cuts_total, 2);
    }

    #[test]
    fn selfridge_conway_generic_profile_at_most_five_cuts() {
        let a = seg_agent("a", &[(0, 1, 1, 3, 2, 1), (1, 3, 1, 1, 1, 2)]);
        let b = seg_agent("b", &[(0, 1, 1, 2, 1, 4), (1, 2, 1, 1, 7, 4)]);
        let out = selfridge_conway(vec![a, b, uniform("c")], None, 0).unwrap();
        assert!(out.cuts_total <= 5);
    }

    #[test]
    fn even_paz_small_cases() {
        let out = even_paz(vec![uniform("a")], None, 0).unwrap();
        assert_eq!(out.cuts_total, 0);
        assert_eq!(out.allocation.shares[0].1, PieceSet::cake());

        let out = even_paz((0..4).map(|i| uniform(&format!("p{i}"))).collect(), None, 0).unwrap();
        assert!(out.cuts_total <= 8);
        for (_, p) in &out.allocation.shares {
            assert_eq!(p.length(), Frac::new(1, 4));
        }
    }
}
