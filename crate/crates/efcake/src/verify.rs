//! Exact post-hoc checkers that gate every protocol run.
//!
//! All comparisons are closed (`>=`, `<=`) at exact rational precision;
//! "within epsilon" includes equality. Checkers are pure: verifying twice
//! yields identical reports.

use crate::agent::AgentSpec;
use crate::frac::Frac;
use crate::pieces::PieceSet;

/// A division outcome: per-agent shares (indices into the agent list)
/// plus any unallocated residue.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Allocation {
    pub shares: Vec<(usize, PieceSet)>,
    pub residue: PieceSet,
}

impl Allocation {
    pub fn share_of(&self, agent: usize) -> Option<&PieceSet> {
        self.shares
            .iter()
            .find(|(a, _)| *a == agent)
            .map(|(_, p)| p)
    }

    /// Merges a stage allocation into a running total.
    pub fn absorb(&mut self, other: &Allocation) {
        for (agent, piece) in &other.shares {
            match self.shares.iter_mut().find(|(a, _)| a == agent) {
                Some((_, acc)) => *acc = acc.union(piece),
                None => self.shares.push((*agent, piece.clone())),
            }
        }
    }
}

/// One named check with its worst margin. A non-negative margin passes.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// The ordered pair realizing the worst margin, when applicable.
    pub worst_pair: Option<(String, String)>,
    pub margin: Frac,
}

impl CheckResult {
    fn new(name: &str, pass: bool, worst_pair: Option<(String, String)>, margin: Frac) -> Self {
        CheckResult {
            name: name.to_string(),
            pass,
            worst_pair,
            margin,
        }
    }
}

/// The conjunction of a run's checks.
#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn overall(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "CHECK {} {} margin={}{}\n",
                c.name,
                if c.pass { "pass" } else { "FAIL" },
                c.margin,
                match &c.worst_pair {
                    Some((a, b)) => format!(" worst={a},{b}"),
                    None => String::new(),
                }
            ));
        }
        out.push_str(&format!(
            "OVERALL {}\n",
            if self.overall() { "pass" } else { "FAIL" }
        ));
        out
    }
}

/// Shares plus residue must be pairwise disjoint and union to the cake
/// exactly. The margin is the negated length of the offending region.
pub fn check_partition(cake: &PieceSet, alloc: &Allocation) -> CheckResult {
    let mut labelled: Vec<(String, &PieceSet)> = alloc
        .shares
        .iter()
        .map(|(a, p)| (format!("share#{a}"), p))
        .collect();
    if !alloc.residue.is_empty() {
        labelled.push(("residue".to_string(), &alloc.residue));
    }
    for i in 0..labelled.len() {
        for j in i + 1..labelled.len() {
            let overlap = labelled[i].1.intersect(labelled[j].1);
            if !overlap.is_empty() {
                return CheckResult::new(
                    "partition",
                    false,
                    Some((labelled[i].0.clone(), labelled[j].0.clone())),
                    -overlap.length(),
                );
            }
        }
    }
    let mut union = PieceSet::empty();
    for (_, p) in &labelled {
        union = union.union(p);
    }
    if &union != cake {
        let missing = cake.subtract(&union).length() + union.subtract(cake).length();
        return CheckResult::new(
            "partition",
            false,
            Some(("union".to_string(), "cake".to_string())),
            -missing,
        );
    }
    CheckResult::new("partition", true, None, Frac::zero())
}

/// Every sharing agent weakly prefers its own share:
/// `v_i(share_i) >= v_i(share_k) - tolerance` for all ordered pairs.
pub fn check_envy_free(agents: &[AgentSpec], alloc: &Allocation, tolerance: &Frac) -> CheckResult {
    let mut worst: Option<(Frac, (String, String))> = None;
    for (i, share_i) in &alloc.shares {
        let own = agents[*i].valuation.measure(share_i);
        for (k, share_k) in &alloc.shares {
            if i == k {
                continue;
            }
            let other = agents[*i].valuation.measure(share_k);
            let margin = &own - &other;
            if worst.as_ref().map_or(true, |(m, _)| &margin < m) {
                worst = Some((
                    margin,
                    (agents[*i].name.clone(), agents[*k].name.clone()),
                ));
            }
        }
    }
    match worst {
        None => CheckResult::new("envy_free", true, None, Frac::zero()),
        Some((margin, pair)) => {
            let pass = margin >= -tolerance.clone();
            CheckResult::new("envy_free", pass, Some(pair), margin)
        }
    }
}

/// Full-division proportionality: every sharing agent values its own
/// share at least `1/n` of its value of the whole cake.
pub fn check_proportional(agents: &[AgentSpec], cake: &PieceSet, alloc: &Allocation) -> CheckResult {
    let n = alloc.shares.len().max(1) as i64;
    let mut worst: Option<(Frac, String)> = None;
    for (i, share_i) in &alloc.shares {
        let own = agents[*i].valuation.measure(share_i);
        let fair = agents[*i].valuation.measure(cake) / Frac::int(n);
        let margin = own - fair;
        if worst.as_ref().map_or(true, |(m, _)| &margin < m) {
            worst = Some((margin, agents[*i].name.clone()));
        }
    }
    match worst {
        None => CheckResult::new("proportional", true, None, Frac::zero()),
        Some((margin, who)) => CheckResult::new(
            "proportional",
            !margin.is_negative(),
            Some((who, "fair-share".to_string())),
            margin,
        ),
    }
}

/// The mutual-advantage inequalities over residue `T`:
/// `v_i(share_i) >= v_i(share_j) + v_i(T)` and symmetrically for `j`.
pub fn check_advantage(
    agents: &[AgentSpec],
    alloc: &Allocation,
    pair: (usize, usize),
    residue: &PieceSet,
) -> CheckResult {
    let empty = PieceSet::empty();
    let (i, j) = pair;
    let share = |a: usize| alloc.share_of(a).unwrap_or(&empty);
    let margin_for = |a: usize, b: usize| {
        let v = &agents[a].valuation;
        v.measure(share(a)) - v.measure(share(b)) - v.measure(residue)
    };
    let mi = margin_for(i, j);
    let mj = margin_for(j, i);
    let (margin, pair_names) = if mi <= mj {
        (mi, (agents[i].name.clone(), agents[j].name.clone()))
    } else {
        (mj, (agents[j].name.clone(), agents[i].name.clone()))
    };
    CheckResult::new(
        "advantage",
        !margin.is_negative(),
        Some(pair_names),
        margin,
    )
}

/// Near-exact contract over arbitrary target ratios: participant `a` must
/// value bundle `r` within `epsilon * v_a(whole)` of
/// `ratios[r] * v_a(whole)`; the starred participant must be exact.
pub fn check_near_exact_ratios(
    agents: &[AgentSpec],
    participants: &[usize],
    bundles: &[PieceSet],
    ratios: &[Frac],
    epsilon: &Frac,
    starred: Option<usize>,
) -> CheckResult {
    assert_eq!(bundles.len(), ratios.len());
    let mut worst: Option<(Frac, (String, String))> = None;
    for &a in participants {
        let v = &agents[a].valuation;
        let whole: Frac = bundles.iter().map(|b| v.measure(b)).sum();
        let allowed = if Some(a) == starred {
            Frac::zero()
        } else {
            epsilon * &whole
        };
        for (r, bundle) in bundles.iter().enumerate() {
            let target = &ratios[r] * &whole;
            let deviation = (v.measure(bundle) - target).abs();
            let margin = &allowed - &deviation;
            if worst.as_ref().map_or(true, |(m, _)| &margin < m) {
                worst = Some((
                    margin,
                    (agents[a].name.clone(), format!("bundle#{r}")),
                ));
            }
        }
    }
    match worst {
        None => CheckResult::new("near_exact", true, None, Frac::zero()),
        Some((margin, pair)) => {
            CheckResult::new("near_exact", !margin.is_negative(), Some(pair), margin)
        }
    }
}

/// Near-exact contract for `parts` equal bundles.
pub fn check_near_exact(
    agents: &[AgentSpec],
    participants: &[usize],
    bundles: &[PieceSet],
    epsilon: &Frac,
    starred: Option<usize>,
) -> CheckResult {
    let parts = bundles.len().max(1) as i64;
    let ratios: Vec<Frac> = (0..bundles.len())
        .map(|_| Frac::one() / Frac::int(parts))
        .collect();
    check_near_exact_ratios(agents, participants, bundles, &ratios, epsilon, starred)
}
