//! Players as query-answering entities over private valuations, and the
//! line-oriented agent profile format.

use crate::frac::Frac;
use crate::pieces::PieceSet;
use crate::valuation::{ValuationDensity, ValuationError};
use std::fmt;
use thiserror::Error;

/// An EQ/NEQ declaration (EFBT step 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Declaration {
    Eq,
    Neq,
}

impl fmt::Display for Declaration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Declaration::Eq => write!(f, "EQ"),
            Declaration::Neq => write!(f, "NEQ"),
        }
    }
}

/// How an agent produces declarations.
///
/// Honest agents declare EQ exactly when all presented pieces measure
/// equal under their own valuation. Scripted and random policies exist to
/// drive exploratory runs and the average-case dynamics model; no fairness
/// guarantee is claimed for deviating agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeclarationPolicy {
    Honest,
    Scripted(Vec<Declaration>),
    Random(Frac),
}

/// A player: name, private valuation, and behavior flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSpec {
    pub name: String,
    pub valuation: ValuationDensity,
    pub follows_advice: bool,
    pub policy: DeclarationPolicy,
}

impl AgentSpec {
    pub fn honest(name: impl Into<String>, valuation: ValuationDensity) -> Self {
        AgentSpec {
            name: name.into(),
            valuation,
            follows_advice: true,
            policy: DeclarationPolicy::Honest,
        }
    }

    /// What this agent honestly answers when asked whether all `pieces`
    /// are equal.
    pub fn honest_declaration(&self, pieces: &[PieceSet]) -> Declaration {
        let mut values = pieces.iter().map(|p| self.valuation.measure(p));
        match values.next() {
            None => Declaration::Eq,
            Some(first) => {
                if values.all(|v| v == first) {
                    Declaration::Eq
                } else {
                    Declaration::Neq
                }
            }
        }
    }

    /// The lexicographically least index pair `(p, q)` of unequal pieces,
    /// the witness an NEQ agent reports.
    pub fn inequality_witness(&self, pieces: &[PieceSet]) -> Option<(usize, usize)> {
        let values: Vec<Frac> = pieces.iter().map(|p| self.valuation.measure(p)).collect();
        for p in 0..values.len() {
            for q in p + 1..values.len() {
                if values[p] != values[q] {
                    return Some((p, q));
                }
            }
        }
        None
    }
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum ProfileError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: agent `{name}`: {err}")]
    Valuation {
        line: usize,
        name: String,
        err: ValuationError,
    },
    #[error("duplicate agent name `{0}`")]
    DuplicateName(String),
    #[error("profile defines no agents")]
    Empty,
}

/// Parses an agent profile.
///
/// ```text
/// agent alice policy=honest
/// seg 0 1/2 3/2
/// seg 1/2 1 1/2
/// agent bob advice=yes policy=random:1/2
/// seg 0 1 1
/// ```
pub fn parse_profile(text: &str) -> Result<Vec<AgentSpec>, ProfileError> {
    let syntax = |line: usize, msg: &str| ProfileError::Syntax {
        line,
        msg: msg.to_string(),
    };
    struct Pending {
        line: usize,
        name: String,
        follows_advice: bool,
        policy: DeclarationPolicy,
        segments: Vec<(Frac, Frac, Frac)>,
    }
    let mut agents: Vec<AgentSpec> = Vec::new();
    let mut pending: Option<Pending> = None;

    let finish = |p: Pending, agents: &mut Vec<AgentSpec>| -> Result<(), ProfileError> {
        let valuation =
            ValuationDensity::from_segments(&p.segments).map_err(|err| ProfileError::Valuation {
                line: p.line,
                name: p.name.clone(),
                err,
            })?;
        if agents.iter().any(|a| a.name == p.name) {
            return Err(ProfileError::DuplicateName(p.name));
        }
        agents.push(AgentSpec {
            name: p.name,
            valuation,
            follows_advice: p.follows_advice,
            policy: p.policy,
        });
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("agent") => {
                if let Some(p) = pending.take() {
                    finish(p, &mut agents)?;
                }
                let name = tokens
                    .next()
                    .ok_or_else(|| syntax(lineno, "agent line missing name"))?
                    .to_string();
                let mut follows_advice = true;
                let mut policy = DeclarationPolicy::Honest;
                for opt in tokens {
                    match opt.split_once('=') {
                        Some(("advice", v)) => {
                            follows_advice = match v {
                                "yes" => true,
                                "no" => false,
                                _ => return Err(syntax(lineno, "advice must be yes or no")),
                            };
                        }
                        Some(("policy", v)) => {
                            policy = parse_policy(v)
                                .ok_or_else(|| syntax(lineno, "bad policy specification"))?;
                        }
                        _ => return Err(syntax(lineno, "unknown agent option")),
                    }
                }
                pending = Some(Pending {
                    line: lineno,
                    name,
                    follows_advice,
                    policy,
                    segments: Vec::new(),
                });
            }
            Some("seg") => {
                let p = pending
                    .as_mut()
                    .ok_or_else(|| syntax(lineno, "seg line before any agent line"))?;
                let frac = |tok: Option<&str>| -> Result<Frac, ProfileError> {
                    tok.ok_or_else(|| syntax(lineno, "seg needs <lo> <hi> <density>"))?
                        .parse()
                        .map_err(|_| syntax(lineno, "bad fraction in seg line"))
                };
                let lo = frac(tokens.next())?;
                let hi = frac(tokens.next())?;
                let d = frac(tokens.next())?;
                if tokens.next().is_some() {
                    return Err(syntax(lineno, "trailing tokens on seg line"));
                }
                p.segments.push((lo, hi, d));
            }
            _ => return Err(syntax(lineno, "expected `agent` or `seg`")),
        }
    }
    if let Some(p) = pending.take() {
        finish(p, &mut agents)?;
    }
    if agents.is_empty() {
        return Err(ProfileError::Empty);
    }
    Ok(agents)
}

fn parse_policy(s: &str) -> Option<DeclarationPolicy> {
    if s == "honest" {
        return Some(DeclarationPolicy::Honest);
    }
    if let Some(p) = s.strip_prefix("random:") {
        let p: Frac = p.parse().ok()?;
        if p.is_negative() || p > Frac::one() {
            return None;
        }
        return Some(DeclarationPolicy::Random(p));
    }
    if let Some(script) = s.strip_prefix("script:") {
        let mut decls = Vec::new();
        for d in script.split(',') {
            match d {
                "EQ" => decls.push(Declaration::Eq),
                "NEQ" => decls.push(Declaration::Neq),
                _ => return None,
            }
        }
        return Some(DeclarationPolicy::Scripted(decls));
    }
    None
}

/// Writes agents back out in the profile format.
pub fn format_profile(agents: &[AgentSpec]) -> String {
    let mut out = String::new();
    for a in agents {
        out.push_str(&format!("agent {}", a.name));
        if !a.follows_advice {
            out.push_str(" advice=no");
        }
        match &a.policy {
            DeclarationPolicy::Honest => {}
            DeclarationPolicy::Random(p) => out.push_str(&format!(" policy=random:{}", p)),
            DeclarationPolicy::Scripted(s) => {
                let s: Vec<String> = s.iter().map(|d| d.to_string()).collect();
                out.push_str(&format!(" policy=script:{}", s.join(",")));
            }
        }
        out.push('\n');
        for (lo, hi, d) in a.valuation.segments() {
            out.push_str(&format!("seg {} {} {}\n", lo, hi, d));
        }
    }
    out
}
