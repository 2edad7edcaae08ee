//! Append-only query transcripts.
//!
//! Every protocol run produces a line-oriented transcript that is
//! bit-exact across platforms for a given seed: header lines, one
//! `EVT <stage> <kind> <agent> <details…>` line per query, and final
//! `SHARE` / `RESIDUE` / `BUDGET-FINAL` lines.

use crate::frac::Frac;
use crate::ledger::OrdinalBudget;
use crate::pieces::PieceSet;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Eval,
    Cut,
    Declare,
    Assign,
    /// Ledger value after a charge.
    Counter,
    /// A phase bound declared by the observer.
    Phase,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::Eval => "EVAL",
            EventKind::Cut => "CUT",
            EventKind::Declare => "DECLARE",
            EventKind::Assign => "ASSIGN",
            EventKind::Counter => "COUNTER",
            EventKind::Phase => "PHASE",
        };
        write!(f, "{s}")
    }
}

/// One recorded query. `agent` is a player name or `referee`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryEvent {
    pub stage: u32,
    pub kind: EventKind,
    pub agent: String,
    pub details: String,
}

/// An append-only ordered list of query events plus run metadata.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub protocol: String,
    pub headers: Vec<(String, String)>,
    pub events: Vec<QueryEvent>,
    pub shares: Vec<(String, PieceSet)>,
    pub residue: PieceSet,
    pub budget_final: Option<OrdinalBudget>,
    pub cuts_total: u64,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript line {0}: {1}")]
    Malformed(usize, String),
}

impl Transcript {
    pub fn new(protocol: &str) -> Self {
        Transcript {
            protocol: protocol.to_string(),
            ..Default::default()
        }
    }

    pub fn header(&mut self, key: &str, value: impl fmt::Display) {
        self.headers.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, stage: u32, kind: EventKind, agent: &str, details: String) {
        self.events.push(QueryEvent {
            stage,
            kind,
            agent: agent.to_string(),
            details,
        });
    }

    pub fn count_kind(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("PROTOCOL {}\n", self.protocol));
        for (k, v) in &self.headers {
            out.push_str(&format!("{} {}\n", k, v));
        }
        for e in &self.events {
            out.push_str(&format!(
                "EVT {} {} {} {}\n",
                e.stage, e.kind, e.agent, e.details
            ));
        }
        for (agent, piece) in &self.shares {
            out.push_str(&format!("SHARE {} {}\n", agent, piece));
        }
        out.push_str(&format!("RESIDUE {}\n", self.residue));
        if let Some(b) = &self.budget_final {
            out.push_str(&format!("BUDGET-FINAL {}\n", b));
        }
        out.push_str(&format!("CUTS {}\n", self.cuts_total));
        out
    }

    /// Parses a rendered transcript back far enough to re-verify it:
    /// protocol, headers, shares, residue, final budget and cut count.
    pub fn parse(text: &str) -> Result<Transcript, TranscriptError> {
        let mut t = Transcript::default();
        let mut headers: BTreeMap<String, String> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| TranscriptError::Malformed(lineno, msg.to_string());
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            match tag {
                "PROTOCOL" => t.protocol = rest.to_string(),
                "EVT" => {
                    let mut parts = rest.splitn(3, ' ');
                    let stage: u32 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("bad stage"))?;
                    let kind = match parts.next() {
                        Some("EVAL") => EventKind::Eval,
                        Some("CUT") => EventKind::Cut,
                        Some("DECLARE") => EventKind::Declare,
                        Some("ASSIGN") => EventKind::Assign,
                        Some("COUNTER") => EventKind::Counter,
                        Some("PHASE") => EventKind::Phase,
                        _ => return Err(bad("bad event kind")),
                    };
                    let rest = parts.next().unwrap_or("");
                    let (agent, details) = rest.split_once(' ').unwrap_or((rest, ""));
                    t.events.push(QueryEvent {
                        stage,
                        kind,
                        agent: agent.to_string(),
                        details: details.to_string(),
                    });
                }
                "SHARE" => {
                    let (agent, piece) = rest.split_once(' ').ok_or_else(|| bad("bad SHARE"))?;
                    let piece: PieceSet =
                        piece.parse().map_err(|_| bad("bad SHARE piece set"))?;
                    t.shares.push((agent.to_string(), piece));
                }
                "RESIDUE" => {
                    t.residue = rest.parse().map_err(|_| bad("bad RESIDUE piece set"))?;
                }
                "BUDGET-FINAL" => {
                    t.budget_final =
                        Some(rest.parse().map_err(|_| bad("bad BUDGET-FINAL"))?);
                }
                "CUTS" => {
                    t.cuts_total = rest.parse().map_err(|_| bad("bad CUTS"))?;
                }
                _ => {
                    headers.insert(tag.to_string(), rest.to_string());
                }
            }
        }
        t.headers = headers.into_iter().collect();
        Ok(t)
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Formats a `key=value` detail field with a [`Frac`] value.
pub fn kv(key: &str, value: &Frac) -> String {
    format!("{key}={value}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip_of_the_verifiable_parts() {
        let mut t = Transcript::new("efbt");
        t.header("AGENTS", 4);
        t.header("BUDGET-INIT", "5w+11");
        t.push(1, EventKind::Cut, "a1", "point=1/12".to_string());
        t.shares
            .push(("a1".to_string(), PieceSet::cake()));
        t.budget_final = Some("4w+3".parse().unwrap());
        t.cuts_total = 12;
        let text = t.render();
        let back = Transcript::parse(&text).unwrap();
        assert_eq!(back.protocol, "efbt");
        assert_eq!(back.header_value("BUDGET-INIT"), Some("5w+11"));
        assert_eq!(back.shares, t.shares);
        assert_eq!(back.residue, PieceSet::empty());
        assert_eq!(back.budget_final, t.budget_final);
        assert_eq!(back.cuts_total, 12);
        assert_eq!(back.events.len(), 1);
    }
}
