//! An exact-arithmetic laboratory for unbounded envy-free cake-cutting
//! protocols.
//!
//! The crate executes discrete fair-division protocols over
//! piecewise-constant rational valuations, charges every cut against an
//! ordinal budget of the form `c·ω + m`, and re-verifies every claimed
//! guarantee (envy-freeness, proportionality, advantage, near-exactness)
//! with exact rational arithmetic after each run.
//!
//! The long-form guide lives in `book/`; start with
//! [`protocols`] for the drivers and [`analysis`] for the bound and
//! dynamics checkers.

pub mod agent;
pub mod analysis;
pub mod guide;
pub mod exec;
pub mod frac;
pub mod ledger;
pub mod pieces;
pub mod protocols;
pub mod subprotocols;
pub mod transcript;
pub mod valuation;
pub mod verify;

pub use frac::Frac;
pub use ledger::OrdinalBudget;
pub use pieces::PieceSet;
pub use valuation::ValuationDensity;
