//! Single-run execution state: the one place where queries are answered,
//! cuts are charged against the ordinal ledger, and events are recorded.

use crate::agent::{AgentSpec, Declaration, DeclarationPolicy};
use crate::frac::Frac;
use crate::ledger::{LedgerError, OrdinalBudget};
use crate::pieces::PieceSet;
use crate::transcript::{EventKind, Transcript};
use crate::valuation::ValuationError;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const REFEREE: &str = "referee";

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error("agent `{0}` exhausted its scripted declarations")]
    ScriptExhausted(String),
    /// A subprotocol could not meet its contract; carries the best
    /// deviation it achieved so the failure is never silent.
    #[error("subprotocol {what} failed at stage {stage} (best deviation {best_deviation:?})")]
    Subprotocol {
        stage: u32,
        what: String,
        best_deviation: Option<Frac>,
    },
    #[error("invalid controversy witness: disagreeing pair values are equal")]
    InvalidWitness,
    #[error("{0}")]
    Config(String),
}

/// Bookkeeping for one declared observer phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseRecord {
    pub stage: u32,
    pub declared_bound: u64,
    pub cuts_used: u64,
}

/// Mutable state for one protocol execution. Agents are immutable; the
/// ledger, transcript, script cursors and RNG are confined here.
pub struct ExecCtx {
    pub agents: Vec<AgentSpec>,
    pub ledger: OrdinalBudget,
    pub transcript: Transcript,
    pub stage: u32,
    pub cuts_total: u64,
    pub omega_conversions: u64,
    phases: Vec<PhaseRecord>,
    current_phase: Option<usize>,
    script_pos: Vec<usize>,
    rng: ChaCha8Rng,
}

impl ExecCtx {
    pub fn new(protocol: &str, agents: Vec<AgentSpec>, budget: OrdinalBudget, seed: u64) -> Self {
        let mut transcript = Transcript::new(protocol);
        transcript.header("AGENTS", agents.len());
        transcript.header("BUDGET-INIT", &budget);
        transcript.header("SEED", seed);
        let n = agents.len();
        ExecCtx {
            agents,
            ledger: budget,
            transcript,
            stage: 1,
            cuts_total: 0,
            omega_conversions: 0,
            phases: Vec::new(),
            current_phase: None,
            script_pos: vec![0; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn phases(&self) -> &[PhaseRecord] {
        &self.phases
    }

    /// Answers an EVAL query: free, never charges the counter.
    pub fn eval(&mut self, agent: usize, p: &PieceSet) -> Frac {
        let value = self.agents[agent].valuation.measure(p);
        let name = self.agents[agent].name.clone();
        self.transcript.push(
            self.stage,
            EventKind::Eval,
            &name,
            format!("piece={} value={}", p, value),
        );
        value
    }

    /// Declares the observer's finite bound for the phase that is about to
    /// start: the number of cuts sufficient to finish it, computed from
    /// values already revealed through queries.
    pub fn begin_phase(&mut self, bound: u64) {
        self.transcript.push(
            self.stage,
            EventKind::Phase,
            REFEREE,
            format!("bound={}", bound),
        );
        self.phases.push(PhaseRecord {
            stage: self.stage,
            declared_bound: bound,
            cuts_used: 0,
        });
        self.current_phase = Some(self.phases.len() - 1);
    }

    /// Charges one cut, then records the CUT event and the COUNTER state
    /// after it. A failed charge records nothing.
    fn charge(&mut self, agent: &str, details: String) -> Result<(), ExecError> {
        let bound = self
            .current_phase
            .map(|i| self.phases[i].declared_bound);
        let converted = self.ledger.charge_cut(bound)?;
        if converted {
            self.omega_conversions += 1;
        }
        if let Some(i) = self.current_phase {
            self.phases[i].cuts_used += 1;
        }
        self.cuts_total += 1;
        self.transcript
            .push(self.stage, EventKind::Cut, agent, details);
        let after = self.ledger.to_string();
        self.transcript
            .push(self.stage, EventKind::Counter, REFEREE, after);
        Ok(())
    }

    /// Answers a CUT query on the agent's own valuation; charges exactly
    /// one cut.
    pub fn cut(&mut self, agent: usize, p: &PieceSet, target: &Frac) -> Result<Frac, ExecError> {
        let point = self.agents[agent].valuation.quantile_cut(p, target)?;
        let name = self.agents[agent].name.clone();
        self.charge(
            &name,
            format!("piece={} target={} point={}", p, target, point),
        )?;
        Ok(point)
    }

    /// A referee-made cut at a known point; charges one cut.
    pub fn referee_cut(&mut self, point: &Frac) -> Result<(), ExecError> {
        self.cut_at(None, point)
    }

    /// A cut at a pre-computed point, attributed to `owner` (or the
    /// referee); charges one cut.
    pub fn cut_at(&mut self, owner: Option<usize>, point: &Frac) -> Result<(), ExecError> {
        let name = match owner {
            Some(a) => self.agents[a].name.clone(),
            None => REFEREE.to_string(),
        };
        self.charge(&name, format!("point={}", point))
    }

    /// Asks an agent for an EQ/NEQ declaration over the presented pieces.
    /// `forced_eq` implements "A1 has to write down EQ".
    pub fn declare(
        &mut self,
        agent: usize,
        pieces: &[PieceSet],
        forced_eq: bool,
    ) -> Result<Declaration, ExecError> {
        assert!(!pieces.is_empty());
        let decl = if forced_eq {
            Declaration::Eq
        } else {
            match &self.agents[agent].policy {
                DeclarationPolicy::Honest => self.agents[agent].honest_declaration(pieces),
                DeclarationPolicy::Scripted(script) => {
                    let pos = self.script_pos[agent];
                    self.script_pos[agent] += 1;
                    *script
                        .get(pos)
                        .ok_or_else(|| ExecError::ScriptExhausted(self.agents[agent].name.clone()))?
                }
                DeclarationPolicy::Random(p) => sample_bernoulli(&mut self.rng, p),
            }
        };
        let name = self.agents[agent].name.clone();
        self.transcript.push(
            self.stage,
            EventKind::Declare,
            &name,
            format!("{}{}", decl, if forced_eq { " forced" } else { "" }),
        );
        Ok(decl)
    }

    /// Records a piece being handed to an agent.
    pub fn assign(&mut self, agent: usize, piece: &PieceSet) {
        let name = self.agents[agent].name.clone();
        self.transcript
            .push(self.stage, EventKind::Assign, &name, piece.to_string());
    }

    /// Closes out the transcript with the final allocation state.
    pub fn finish(&mut self, shares: &[(usize, PieceSet)], residue: &PieceSet) {
        for (agent, piece) in shares {
            self.transcript
                .shares
                .push((self.agents[*agent].name.clone(), piece.clone()));
        }
        self.transcript.residue = residue.clone();
        self.transcript.budget_final = Some(self.ledger.clone());
        self.transcript.cuts_total = self.cuts_total;
    }
}

/// Exact Bernoulli draw: EQ with probability `p` (a rational in [0,1]).
fn sample_bernoulli(rng: &mut ChaCha8Rng, p: &Frac) -> Declaration {
    use num::ToPrimitive;
    let den = p.denom().to_u64().unwrap_or(u64::MAX);
    let num = p.numer().to_u64().unwrap_or(0);
    if rng.gen_range(0..den.max(1)) < num {
        Declaration::Eq
    } else {
        Declaration::Neq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentSpec;
    use crate::valuation::ValuationDensity;

    fn uniform_agents(n: usize) -> Vec<AgentSpec> {
        (0..n)
            .map(|i| AgentSpec::honest(format!("a{}", i + 1), ValuationDensity::uniform()))
            .collect()
    }

    #[test]
    fn eval_never_charges_cut_always_charges() {
        let mut ctx = ExecCtx::new("test", uniform_agents(2), OrdinalBudget::finite(3), 0);
        ctx.eval(0, &PieceSet::cake());
        assert_eq!(ctx.ledger, OrdinalBudget::finite(3));
        let half = Frac::new(1, 2);
        ctx.cut(0, &PieceSet::cake(), &half).unwrap();
        assert_eq!(ctx.ledger, OrdinalBudget::finite(2));
        for t in [Frac::new(1, 4), Frac::new(3, 4)] {
            ctx.cut(0, &PieceSet::cake(), &t).unwrap();
        }
        assert_eq!(ctx.ledger, OrdinalBudget::finite(0));
        assert!(matches!(
            ctx.cut(0, &PieceSet::cake(), &half),
            Err(ExecError::Ledger(LedgerError::BudgetExhausted))
        ));
        assert_eq!(ctx.cuts_total, 3);
        assert_eq!(ctx.transcript.count_kind(EventKind::Cut) as u64, ctx.cuts_total);
    }

    #[test]
    fn omega_conversion_uses_declared_phase_bound() {
        let mut ctx = ExecCtx::new("test", uniform_agents(1), OrdinalBudget::omega(2), 0);
        ctx.begin_phase(7);
        ctx.cut(0, &PieceSet::cake(), &Frac::new(1, 2)).unwrap();
        assert_eq!(ctx.ledger, OrdinalBudget::new(1, 6));
        assert_eq!(ctx.omega_conversions, 1);
        assert_eq!(ctx.phases()[0].cuts_used, 1);
    }

    #[test]
    fn scripted_policy_and_exhaustion() {
        let mut agents = uniform_agents(1);
        agents[0].policy = DeclarationPolicy::Scripted(vec![Declaration::Neq]);
        let mut ctx = ExecCtx::new("test", agents, OrdinalBudget::finite(0), 0);
        let pieces = [PieceSet::cake()];
        assert_eq!(ctx.declare(0, &pieces, false).unwrap(), Declaration::Neq);
        assert!(matches!(
            ctx.declare(0, &pieces, false),
            Err(ExecError::ScriptExhausted(_))
        ));
    }
}
