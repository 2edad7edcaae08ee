//! Referee-assisted realizations of the black-box subprotocols: the
//! near-exact family, the controversial-piece shrink, and the advantage
//! stage.
//!
//! Each operation is planned referee-side from values revealed through
//! free EVAL queries, its cut count is declared to the ledger as the
//! phase bound before the first charge, and its contract is re-checked
//! with exact arithmetic before returning. A run that returns without
//! error therefore *has* the contract property.

use crate::agent::AgentSpec;
use crate::exec::{ExecCtx, ExecError};
use crate::frac::Frac;
use crate::pieces::PieceSet;
use crate::valuation::{new_boundaries, perfect_partition, refine, ValuationDensity};
use crate::verify::{check_advantage, check_envy_free, check_near_exact_ratios, check_partition, Allocation};
use std::collections::BTreeSet;

/// Output of a near-exact run.
#[derive(Debug, Clone)]
pub struct NearExactResult {
    pub bundles: Vec<PieceSet>,
    /// Worst relative deviation achieved for any non-starred player.
    pub achieved_deviation: Frac,
    pub cuts_used: u64,
}

/// A piece the A-players split over: a high-valuing group, a low-valuing
/// group, and the separating values `alpha > beta`.
#[derive(Debug, Clone)]
pub struct ControversyWitness {
    pub piece: PieceSet,
    pub group_hi: Vec<usize>,
    pub group_lo: Vec<usize>,
    pub alpha: Frac,
    pub beta: Frac,
}

impl ControversyWitness {
    pub fn is_valid(&self) -> bool {
        !self.group_hi.is_empty() && !self.group_lo.is_empty() && self.alpha > self.beta
    }
}

/// Output of the advantage stage: an envy-free division of the stage cake
/// minus a residue `T` over which the pair hold a mutual advantage.
#[derive(Debug, Clone)]
pub struct AdvResult {
    pub allocation: Allocation,
    pub residue: PieceSet,
    pub pair: (usize, usize),
    /// Whether the bonus-carving construction succeeded (`true`) or the
    /// exact perfect-partition fallback ran (`false`).
    pub primary_path: bool,
}

/// A planned sequence of knife strokes: `(owner, point)` with `None`
/// meaning the referee.
#[derive(Debug, Clone, Default)]
pub struct CutPlan {
    pub cuts: Vec<(Option<usize>, Frac)>,
}

impl CutPlan {
    pub fn count(&self) -> u64 {
        self.cuts.len() as u64
    }

    pub fn apply(&self, ctx: &mut ExecCtx) -> Result<(), ExecError> {
        for (owner, point) in &self.cuts {
            ctx.cut_at(*owner, point)?;
        }
        Ok(())
    }
}

/// Tracks which knife points already exist so a construction is charged
/// once per genuinely new boundary.
struct CutTracker {
    known: BTreeSet<Frac>,
    plan: CutPlan,
}

impl CutTracker {
    fn new(p: &PieceSet) -> Self {
        let mut known = BTreeSet::new();
        for (lo, hi) in p.intervals() {
            known.insert(lo.clone());
            known.insert(hi.clone());
        }
        CutTracker {
            known,
            plan: CutPlan::default(),
        }
    }

    fn cut(&mut self, owner: Option<usize>, point: &Frac) {
        if self.known.insert(point.clone()) {
            self.plan.cuts.push((owner, point.clone()));
        }
    }

    fn cut_piece_boundaries(&mut self, owner: Option<usize>, piece: &PieceSet) {
        for (lo, hi) in piece.intervals() {
            self.cut(owner, lo);
            self.cut(owner, hi);
        }
    }
}

/// A maximal constant-density run of a piece under two valuations.
#[derive(Debug, Clone)]
struct Cell {
    lo: Frac,
    hi: Frac,
    d1: Frac,
    dk: Frac,
}

fn cells_of(piece: &PieceSet, v1: &ValuationDensity, vk: &ValuationDensity) -> Vec<Cell> {
    refine(
        piece,
        v1.breakpoints()
            .iter()
            .chain(vk.breakpoints().iter())
            .cloned(),
    )
    .into_iter()
    .map(|(lo, hi)| {
        let len = &hi - &lo;
        let span = PieceSet::interval(lo.clone(), hi.clone());
        Cell {
            d1: v1.measure(&span) / len.clone(),
            dk: vk.measure(&span) / len,
            lo,
            hi,
        }
    })
    .collect()
}

/// Result of one planned exchange between two bundles.
struct Exchange {
    take_from_o: PieceSet,
    take_from_u: PieceSet,
    achieved: Frac,
}

/// Finds `X ⊆ o` and `Y ⊆ u` with `v1(X) = v1(Y)` and
/// `vk(X) - vk(Y)` equal to `m` if achievable, else maximal. Swapping X
/// and Y then moves that much k-value from `o` to `u` while leaving both
/// bundles' v1-values untouched.
fn plan_exchange(
    v1: &ValuationDensity,
    vk: &ValuationDensity,
    o: &PieceSet,
    u: &PieceSet,
    m: &Frac,
) -> Exchange {
    let mut x_spans: Vec<(Frac, Frac)> = Vec::new();
    let mut y_spans: Vec<(Frac, Frac)> = Vec::new();
    let mut remaining = m.clone();

    // Free k-value in o: cells with zero v1-density cost nothing to move.
    for c in cells_of(o, v1, vk) {
        if remaining.is_zero() {
            break;
        }
        if !c.d1.is_zero() || c.dk.is_zero() {
            continue;
        }
        let cap = &c.dk * &(&c.hi - &c.lo);
        if cap <= remaining {
            x_spans.push((c.lo, c.hi));
            remaining -= cap;
        } else {
            let take_len = &remaining / &c.dk;
            let split = &c.lo + &take_len;
            x_spans.push((c.lo, split));
            remaining = Frac::zero();
        }
    }

    if !remaining.is_zero() {
        // Pair positive-density cells: best k-per-v1 ratio from o against
        // worst from u, matched in equal v1 amounts.
        let mut ocells: Vec<Cell> = cells_of(o, v1, vk)
            .into_iter()
            .filter(|c| !c.d1.is_zero())
            .collect();
        let mut ucells: Vec<Cell> = cells_of(u, v1, vk)
            .into_iter()
            .filter(|c| !c.d1.is_zero())
            .collect();
        let ratio = |c: &Cell| &c.dk / &c.d1;
        ocells.sort_by(|a, b| ratio(b).cmp(&ratio(a)));
        ucells.sort_by(|a, b| ratio(a).cmp(&ratio(b)));

        let (mut oi, mut ui) = (0usize, 0usize);
        // v1-amount already consumed from the current cell on each side.
        let mut o_used = Frac::zero();
        let mut u_used = Frac::zero();
        while !remaining.is_zero() && oi < ocells.len() && ui < ucells.len() {
            let oc = &ocells[oi];
            let uc = &ucells[ui];
            let r_o = ratio(oc);
            let r_u = ratio(uc);
            if r_o <= r_u {
                break;
            }
            let o_cap = &oc.d1 * &(&oc.hi - &oc.lo) - o_used.clone();
            let u_cap = &uc.d1 * &(&uc.hi - &uc.lo) - u_used.clone();
            let cap = o_cap.clone().min(u_cap.clone());
            let gain_per_v1 = &r_o - &r_u;
            let full_gain = &cap * &gain_per_v1;
            let step = if full_gain >= remaining {
                &remaining / &gain_per_v1
            } else {
                cap
            };
            let o_from = &oc.lo + &(&o_used / &oc.d1);
            let o_to = &o_from + &(&step / &oc.d1);
            x_spans.push((o_from, o_to));
            let u_from = &uc.lo + &(&u_used / &uc.d1);
            let u_to = &u_from + &(&step / &uc.d1);
            y_spans.push((u_from, u_to));
            remaining -= &step * &gain_per_v1;
            o_used += step.clone();
            u_used += step;
            if o_used >= &oc.d1 * &(&oc.hi - &oc.lo) {
                oi += 1;
                o_used = Frac::zero();
            }
            if u_used >= &uc.d1 * &(&uc.hi - &uc.lo) {
                ui += 1;
                u_used = Frac::zero();
            }
        }
    }

    Exchange {
        take_from_o: PieceSet::from_intervals(x_spans),
        take_from_u: PieceSet::from_intervals(y_spans),
        achieved: m - &remaining,
    }
}

/// Plan data shared by the near-exact operations.
pub(crate) struct NearExactPlan {
    pub bundles: Vec<PieceSet>,
    pub deviation: Frac,
    pub plan: CutPlan,
}

/// Plans a near-exact division of `p` into bundles with target `ratios`:
/// the first listed player ends exact, everyone else within
/// `epsilon * v(p)` of each target.
///
/// Mechanism: the starred player quantile-splits exactly, then a referee
/// correction loop swaps equal-starred-value sub-pieces between the worst
/// player's most-over and most-under bundle. On stall or iteration cap
/// the referee rebuilds the bundles by perfect partition (deviation 0).
pub(crate) fn plan_near_exact(
    agents: &[AgentSpec],
    players: &[usize],
    p: &PieceSet,
    ratios: &[Frac],
    epsilon: &Frac,
) -> NearExactPlan {
    let starred = players[0];
    let v1 = &agents[starred].valuation;
    let parts = ratios.len();
    let mut tracker = CutTracker::new(p);

    let total1 = v1.measure(p);
    let mut bundles: Vec<PieceSet> = Vec::with_capacity(parts);
    {
        let mut prev = Frac::zero();
        let mut cum = Frac::zero();
        for (r, ratio) in ratios.iter().enumerate() {
            if r + 1 == parts {
                bundles.push(p.from_point(&prev));
            } else {
                cum += ratio * &total1;
                let x = v1
                    .quantile_cut(p, &cum)
                    .expect("cumulative target within range");
                bundles.push(p.intersect(&PieceSet::interval(prev.clone(), x.clone())));
                tracker.cut(Some(starred), &x);
                prev = x;
            }
        }
    }

    let totals: Vec<Frac> = players
        .iter()
        .map(|&a| agents[a].valuation.measure(p))
        .collect();

    let worst_deviation = |bundles: &[PieceSet]| -> (Frac, Option<usize>) {
        // Relative deviation plus the player index realizing it.
        let mut worst = Frac::zero();
        let mut who = None;
        for (pi, &a) in players.iter().enumerate().skip(1) {
            if totals[pi].is_zero() {
                continue;
            }
            for (r, b) in bundles.iter().enumerate() {
                let dev = (agents[a].valuation.measure(b) - &ratios[r] * &totals[pi]).abs()
                    / totals[pi].clone();
                if dev > worst {
                    worst = dev;
                    who = Some(pi);
                }
            }
        }
        (worst, who)
    };

    // The correction loop is a best-effort refinement: every iteration
    // adds intervals and compounds coordinate denominators, so it runs
    // on a strict budget and hands over to the exact referee fallback
    // rather than grind through ever-finer exchanges.
    let cap = 4 * players.len() * parts;
    for _iter in 0..=cap {
        if bundles.iter().map(|b| b.intervals().len()).sum::<usize>() > 32 * parts {
            break;
        }
        let (dev, who) = worst_deviation(&bundles);
        if &dev <= epsilon {
            return NearExactPlan {
                bundles,
                deviation: dev,
                plan: tracker.plan,
            };
        }
        if _iter == cap {
            break;
        }
        let pi = who.expect("nonzero deviation has a witness");
        let a = players[pi];
        let vk = &agents[a].valuation;
        // Most-over and most-under bundles for this player.
        let signed: Vec<Frac> = bundles
            .iter()
            .enumerate()
            .map(|(r, b)| vk.measure(b) - &ratios[r] * &totals[pi])
            .collect();
        let (o_idx, excess) = signed
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.cmp(y.1))
            .map(|(r, e)| (r, e.clone()))
            .unwrap();
        let (u_idx, deficit) = signed
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.cmp(y.1))
            .map(|(r, e)| (r, -e.clone()))
            .unwrap();
        if !excess.is_positive() || !deficit.is_positive() {
            break;
        }
        let m = excess.min(deficit);
        let ex = plan_exchange(v1, vk, &bundles[o_idx], &bundles[u_idx], &m);
        if ex.achieved.is_zero() {
            break;
        }
        // Every exchange compounds the boundary denominators; left
        // unchecked they grow exponentially across iterations. When the
        // coordinates get too fine, the exact fallback is cheaper.
        let too_fine = ex
            .take_from_o
            .intervals()
            .iter()
            .chain(ex.take_from_u.intervals().iter())
            .any(|(lo, hi)| lo.denom().bits() > 512 || hi.denom().bits() > 512);
        if too_fine {
            break;
        }
        tracker.cut_piece_boundaries(None, &ex.take_from_o);
        tracker.cut_piece_boundaries(None, &ex.take_from_u);
        bundles[o_idx] = bundles[o_idx].subtract(&ex.take_from_o).union(&ex.take_from_u);
        bundles[u_idx] = bundles[u_idx].subtract(&ex.take_from_u).union(&ex.take_from_o);
    }

    // Referee fallback: exact for every participant, within any epsilon.
    let vs: Vec<&ValuationDensity> = players.iter().map(|&a| &agents[a].valuation).collect();
    let bundles = perfect_partition(&vs, p, ratios);
    for x in new_boundaries(p, &bundles) {
        tracker.cut(None, &x);
    }
    NearExactPlan {
        bundles,
        deviation: Frac::zero(),
        plan: tracker.plan,
    }
}

fn near_exact_contract_check(
    ctx: &ExecCtx,
    players: &[usize],
    bundles: &[PieceSet],
    ratios: &[Frac],
    epsilon: &Frac,
    starred: usize,
    what: &str,
    achieved: &Frac,
) -> Result<(), ExecError> {
    let check = check_near_exact_ratios(
        &ctx.agents,
        players,
        bundles,
        ratios,
        epsilon,
        Some(starred),
    );
    if check.pass {
        Ok(())
    } else {
        Err(ExecError::Subprotocol {
            stage: ctx.stage,
            what: what.to_string(),
            best_deviation: Some(achieved.clone()),
        })
    }
}

/// Runs the near-exact-* protocol: `parts` bundles partitioning `p`,
/// exactly `1/parts` each for the first listed player and within
/// `epsilon` for everyone else. Declares its own phase.
pub fn near_exact_star(
    ctx: &mut ExecCtx,
    players: &[usize],
    p: &PieceSet,
    parts: usize,
    epsilon: &Frac,
) -> Result<NearExactResult, ExecError> {
    assert!(parts >= 1 && !players.is_empty());
    let ratios: Vec<Frac> = (0..parts)
        .map(|_| Frac::one() / Frac::int(parts as i64))
        .collect();
    near_exact_ratios(ctx, players, p, &ratios, epsilon, "near_exact_star", true)
}

/// The unfair two-bundle variant: targets `f1` and `f2 = 1 - f1`.
pub fn unfair_near_exact(
    ctx: &mut ExecCtx,
    players: &[usize],
    p: &PieceSet,
    f1: &Frac,
    f2: &Frac,
    epsilon: &Frac,
) -> Result<NearExactResult, ExecError> {
    assert!(f1.is_positive() && f2.is_positive());
    assert_eq!(f1 + f2, Frac::one());
    let ratios = vec![f1.clone(), f2.clone()];
    near_exact_ratios(ctx, players, p, &ratios, epsilon, "unfair_near_exact", true)
}

/// Shared driver; `own_phase = false` lets a caller fold this operation
/// into an already-declared phase.
pub(crate) fn near_exact_ratios(
    ctx: &mut ExecCtx,
    players: &[usize],
    p: &PieceSet,
    ratios: &[Frac],
    epsilon: &Frac,
    what: &str,
    own_phase: bool,
) -> Result<NearExactResult, ExecError> {
    for &a in players {
        ctx.eval(a, p);
    }
    let plan = plan_near_exact(&ctx.agents, players, p, ratios, epsilon);
    if own_phase {
        ctx.begin_phase(plan.plan.count());
    }
    plan.plan.apply(ctx)?;
    near_exact_contract_check(
        ctx,
        players,
        &plan.bundles,
        ratios,
        epsilon,
        players[0],
        what,
        &plan.deviation,
    )?;
    Ok(NearExactResult {
        bundles: plan.bundles,
        achieved_deviation: plan.deviation,
        cuts_used: plan.plan.count(),
    })
}

/// A planned shrink: the final piece and the bisection cuts that reach
/// it.
pub(crate) struct ShrinkPlan {
    pub piece: PieceSet,
    pub plan: CutPlan,
}

/// Simulates the shrink loop referee-side: players take turns cutting
/// the piece near the midpoint of their own measure, and the half with
/// the larger value difference for `pair` is kept. Cut points are
/// snapped onto a binary grid fine enough that either half keeps at
/// least a quarter of the cutter's value, so a full cycle shrinks every
/// player's value by 3/4 and the coordinates stay small across hundreds
/// of bisections instead of compounding denominators.
pub(crate) fn plan_shrink(
    agents: &[AgentSpec],
    order: &[usize],
    pair: (usize, usize),
    piece: &PieceSet,
    delta: &Frac,
) -> ShrinkPlan {
    let pair_diff = |piece: &PieceSet| {
        (agents[pair.0].valuation.measure(piece) - agents[pair.1].valuation.measure(piece)).abs()
    };
    let mut piece = piece.clone();
    let mut plan = CutPlan::default();
    let mut values: Vec<Frac> = order
        .iter()
        .map(|&a| agents[a].valuation.measure(&piece))
        .collect();
    let maxval = values.iter().cloned().fold(Frac::zero(), Frac::max);
    if &maxval <= delta {
        return ShrinkPlan { piece, plan };
    }
    // 3/4 decay per cut: log(4/3) cycles per halving, rounded up hard.
    let cycles = 3 * ceil_log2_ratio(&maxval, delta) + 3;
    'outer: for _cycle in 0..cycles {
        for (qi, &q) in order.iter().enumerate() {
            if values.iter().all(|v| v <= delta) {
                break 'outer;
            }
            if &values[qi] <= delta {
                continue;
            }
            let half_target = &values[qi] / &Frac::int(2);
            let x = agents[q]
                .valuation
                .quantile_cut(&piece, &half_target)
                .expect("half of own value is in range");
            let x = snap_cut(&agents[q].valuation, &piece, &x, &values[qi]);
            plan.cuts.push((Some(q), x.clone()));
            let left = piece.before(&x);
            let right = piece.from_point(&x);
            piece = if pair_diff(&left) >= pair_diff(&right) {
                left
            } else {
                right
            };
            for (vi, &a) in order.iter().enumerate() {
                values[vi] = agents[a].valuation.measure(&piece);
            }
        }
    }
    ShrinkPlan { piece, plan }
}

/// Shrinks a controversial piece until every listed player values it at
/// most `delta`, keeping it controversial among the A-players. Declares
/// its own phase with the exact planned cut count.
pub fn controversial_shrink(
    ctx: &mut ExecCtx,
    a_players: &[usize],
    b_players: &[usize],
    witness: &ControversyWitness,
    delta: &Frac,
) -> Result<ControversyWitness, ExecError> {
    assert!(delta.is_positive());
    if !witness.is_valid() {
        return Err(ExecError::InvalidWitness);
    }
    let everyone: Vec<usize> = a_players.iter().chain(b_players.iter()).copied().collect();
    let pair = (witness.group_hi[0], witness.group_lo[0]);
    let values: Vec<Frac> = everyone.iter().map(|&a| ctx.eval(a, &witness.piece)).collect();
    if (ctx.agents[pair.0].valuation.measure(&witness.piece)
        - ctx.agents[pair.1].valuation.measure(&witness.piece))
        .is_zero()
    {
        return Err(ExecError::InvalidWitness);
    }
    if values.iter().all(|v| v <= delta) {
        return Ok(witness.clone());
    }

    let shrink = plan_shrink(&ctx.agents, &everyone, pair, &witness.piece, delta);
    ctx.begin_phase(shrink.plan.count());
    shrink.plan.apply(ctx)?;

    let worst = everyone
        .iter()
        .map(|&a| ctx.agents[a].valuation.measure(&shrink.piece))
        .fold(Frac::zero(), Frac::max);
    if &worst > delta {
        return Err(ExecError::Subprotocol {
            stage: ctx.stage,
            what: "controversial_shrink".to_string(),
            best_deviation: Some(worst),
        });
    }
    let out = regroup_witness(&ctx.agents, a_players, &shrink.piece)
        .ok_or(ExecError::InvalidWitness)?;
    debug_assert!(out.piece.is_subset_of(&witness.piece));
    Ok(out)
}

/// Rounds a midpoint cut down onto a binary grid coarse enough to keep
/// small coordinates but fine enough that the left half retains at
/// least a quarter of the cutter's value; falls back to the exact
/// midpoint when the grid point would cut away too much.
fn snap_cut(v: &ValuationDensity, piece: &PieceSet, x: &Frac, value: &Frac) -> Frac {
    let dmax = v
        .segments()
        .map(|(_, _, d)| d.clone())
        .fold(Frac::zero(), Frac::max);
    if !dmax.is_positive() {
        return x.clone();
    }
    let t = value / &(&Frac::int(4) * &dmax);
    let g = (-t.floor_log2()).max(1);
    let snapped = &(x * &Frac::pow2(g)).floor() / &Frac::pow2(g);
    let left = v.measure(&piece.before(&snapped));
    if &(&left * &Frac::int(4)) >= value {
        snapped
    } else {
        x.clone()
    }
}

/// Smallest `k` with `maxval / 2^k <= delta`.
fn ceil_log2_ratio(maxval: &Frac, delta: &Frac) -> u64 {
    let ratio = maxval / delta;
    if ratio <= Frac::one() {
        return 0;
    }
    ratio.floor_log2() as u64 + 1
}

/// Rebuilds a controversy witness from realized values: players sorted by
/// value descending (ties by index), split at the largest value gap.
/// Returns `None` when all values are equal.
pub fn regroup_witness(
    agents: &[AgentSpec],
    a_players: &[usize],
    piece: &PieceSet,
) -> Option<ControversyWitness> {
    let mut valued: Vec<(usize, Frac)> = a_players
        .iter()
        .map(|&a| (a, agents[a].valuation.measure(piece)))
        .collect();
    valued.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut best_split = None;
    let mut best_gap = Frac::zero();
    for s in 1..valued.len() {
        let gap = &valued[s - 1].1 - &valued[s].1;
        if gap > best_gap {
            best_gap = gap;
            best_split = Some(s);
        }
    }
    let split = best_split?;
    Some(ControversyWitness {
        piece: piece.clone(),
        group_hi: valued[..split].iter().map(|(a, _)| *a).collect(),
        group_lo: valued[split..].iter().map(|(a, _)| *a).collect(),
        alpha: valued[split - 1].1.clone(),
        beta: valued[split].1.clone(),
    })
}

/// Planned advantage-stage outcome, before charging.
pub(crate) struct AdvPlan {
    pub shares: Vec<(usize, PieceSet)>,
    pub residue: PieceSet,
    pub plan: CutPlan,
    pub primary: bool,
}

/// Attempts the bonus-carving construction: give `i` and `j` small bonus
/// pieces from regions where their stage-normalized densities disagree in
/// opposite directions, compensate everyone through ratio-weighted
/// perfect partition, and carve a residue `T` as an exact fractional
/// slice. Returns `None` whenever any exact check would fail.
fn plan_adv_primary(
    agents: &[AgentSpec],
    players: &[usize],
    pair: (usize, usize),
    cake: &PieceSet,
) -> Option<AdvPlan> {
    let (i, j) = pair;
    let n = players.len();
    let vi = &agents[i].valuation;
    let vj = &agents[j].valuation;
    let mi = vi.measure(cake);
    let mj = vj.measure(cake);
    if mi.is_zero() || mj.is_zero() {
        return None;
    }

    // Cells where i's and j's cake-normalized densities differ.
    let all_points: Vec<Frac> = players
        .iter()
        .flat_map(|&a| agents[a].valuation.breakpoints().iter().cloned())
        .collect();
    let cells = refine(cake, all_points);
    let mut plus: Vec<(Frac, Frac, Frac)> = Vec::new(); // (lo, hi, r) with r > 0
    let mut minus: Vec<(Frac, Frac, Frac)> = Vec::new(); // r < 0, stored as -r
    for (lo, hi) in cells {
        let span = PieceSet::interval(lo.clone(), hi.clone());
        let len = &hi - &lo;
        let di = vi.measure(&span) / len.clone() / mi.clone();
        let dj = vj.measure(&span) / len / mj.clone();
        let r = di - dj;
        if r.is_positive() {
            plus.push((lo, hi, r));
        } else if r.is_negative() {
            minus.push((lo, hi, -r));
        }
    }
    if plus.is_empty() || minus.is_empty() {
        return None;
    }
    let disagreement: Frac = plus.iter().map(|(lo, hi, r)| r * &(hi - lo)).sum();

    // Bonus pieces capturing half the disagreement mass on each side.
    let carve = |cells: &[(Frac, Frac, Frac)], target: &Frac| -> PieceSet {
        let mut sorted = cells.to_vec();
        sorted.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
        let mut spans = Vec::new();
        let mut remaining = target.clone();
        for (lo, hi, r) in sorted {
            if remaining.is_zero() {
                break;
            }
            let mass = &r * &(&hi - &lo);
            if mass <= remaining {
                remaining -= mass;
                spans.push((lo, hi));
            } else {
                let take = &remaining / &r;
                spans.push((lo.clone(), &lo + &take));
                remaining = Frac::zero();
            }
        }
        PieceSet::from_intervals(spans)
    };
    let half = &disagreement / &Frac::int(2);
    let bonus_i = carve(&plus, &half);
    let bonus_j = carve(&minus, &half);

    // Residue: an exact fractional slice of what is left.
    let vs: Vec<&ValuationDensity> = players.iter().map(|&a| &agents[a].valuation).collect();
    let w0 = cake.subtract(&bonus_i).subtract(&bonus_j);
    let tau = &disagreement / &Frac::int(8 * n as i64);
    let t_split = perfect_partition(&vs, &w0, &[tau.clone(), Frac::one() - tau]);
    let residue = t_split[0].clone();
    let base = t_split[1].clone();

    // Ratio handicaps so nobody envies the bonus holders.
    let handicap = |bonus: &PieceSet, skip: usize| -> Option<Frac> {
        let mut h = Frac::zero();
        for &a in players {
            if a == skip {
                continue;
            }
            let w_val = agents[a].valuation.measure(&base);
            if w_val.is_zero() {
                return None;
            }
            h = h.max(agents[a].valuation.measure(bonus) / w_val);
        }
        Some(h)
    };
    let a_i = handicap(&bonus_i, i)?;
    let a_j = handicap(&bonus_j, j)?;
    let w = (Frac::one() + &a_i + &a_j) / Frac::int(n as i64);
    let w_i = &w - &a_i;
    let w_j = &w - &a_j;
    if w_i.is_negative() || w_j.is_negative() {
        return None;
    }
    let ratios: Vec<Frac> = players
        .iter()
        .map(|&a| {
            if a == i {
                w_i.clone()
            } else if a == j {
                w_j.clone()
            } else {
                w.clone()
            }
        })
        .collect();
    let bases = perfect_partition(&vs, &base, &ratios);
    let shares: Vec<(usize, PieceSet)> = players
        .iter()
        .zip(bases)
        .map(|(&a, b)| {
            let extra = if a == i {
                &bonus_i
            } else if a == j {
                &bonus_j
            } else {
                return (a, b);
            };
            (a, b.union(extra))
        })
        .collect();

    // Exact verification gate; any failure rejects the primary path.
    let alloc = Allocation {
        shares: shares.clone(),
        residue: residue.clone(),
    };
    if !check_partition(cake, &alloc).pass {
        return None;
    }
    if !check_envy_free(agents, &alloc, &Frac::zero()).pass {
        return None;
    }
    if !check_advantage(agents, &alloc, pair, &residue).pass {
        return None;
    }
    if residue.is_empty() {
        return None;
    }

    let mut tracker = CutTracker::new(cake);
    for (_, s) in &shares {
        tracker.cut_piece_boundaries(None, s);
    }
    tracker.cut_piece_boundaries(None, &residue);
    Some(AdvPlan {
        shares,
        residue,
        plan: tracker.plan,
        primary: true,
    })
}

/// The always-valid fallback: an exact equal perfect partition with an
/// empty residue. Envy-freeness holds with margin zero and the advantage
/// inequalities are vacuous.
fn plan_adv_fallback(agents: &[AgentSpec], players: &[usize], cake: &PieceSet) -> AdvPlan {
    let vs: Vec<&ValuationDensity> = players.iter().map(|&a| &agents[a].valuation).collect();
    let n = players.len() as i64;
    let ratios: Vec<Frac> = (0..n).map(|_| Frac::one() / Frac::int(n)).collect();
    let pieces = perfect_partition(&vs, cake, &ratios);
    let mut tracker = CutTracker::new(cake);
    for s in &pieces {
        tracker.cut_piece_boundaries(None, s);
    }
    AdvPlan {
        shares: players.iter().copied().zip(pieces).collect(),
        residue: PieceSet::empty(),
        plan: tracker.plan,
        primary: false,
    }
}

pub(crate) fn plan_adv(
    agents: &[AgentSpec],
    players: &[usize],
    pair: (usize, usize),
    cake: &PieceSet,
) -> AdvPlan {
    plan_adv_primary(agents, players, pair, cake)
        .unwrap_or_else(|| plan_adv_fallback(agents, players, cake))
}

/// Runs the advantage stage on pieces `P`, `Q`, `R`: an envy-free
/// division of their union minus a residue `T` over which players `i`
/// and `j` hold a mutual advantage.
///
/// `extra_phase_bound` lets the caller reserve additional cuts (EFBT
/// folds the next stage's opening split into this phase's ω conversion).
pub fn adv(
    ctx: &mut ExecCtx,
    players: &[usize],
    pair: (usize, usize),
    p: &PieceSet,
    q: &PieceSet,
    r: &PieceSet,
    extra_phase_bound: u64,
) -> Result<AdvResult, ExecError> {
    let (i, j) = pair;
    let vip = ctx.eval(i, p);
    let viq = ctx.eval(i, q);
    let vjp = ctx.eval(j, p);
    let vjq = ctx.eval(j, q);
    if vip != viq || vjp == vjq {
        return Err(ExecError::Config(format!(
            "adv precondition violated for pair ({}, {})",
            ctx.agents[i].name, ctx.agents[j].name
        )));
    }
    let cake = p.union(q).union(r);
    let plan = plan_adv(&ctx.agents, players, pair, &cake);
    ctx.begin_phase(plan.plan.count() + extra_phase_bound);
    plan.plan.apply(ctx)?;

    let allocation = Allocation {
        shares: plan.shares,
        residue: plan.residue.clone(),
    };
    let ok = check_partition(&cake, &allocation).pass
        && check_envy_free(&ctx.agents, &allocation, &Frac::zero()).pass
        && check_advantage(&ctx.agents, &allocation, pair, &plan.residue).pass;
    if !ok {
        return Err(ExecError::Subprotocol {
            stage: ctx.stage,
            what: "adv".to_string(),
            best_deviation: None,
        });
    }
    for (a, s) in &allocation.shares {
        ctx.assign(*a, s);
    }
    Ok(AdvResult {
        allocation,
        residue: plan.residue,
        pair,
        primary_path: plan.primary,
    })
}
