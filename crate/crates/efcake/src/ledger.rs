//! The ordinal cut counter.
//!
//! A protocol's cut budget is an ordinal of the form `c·ω + m`. Charging a
//! cut strictly decreases the ordinal: the finite part is decremented while
//! it lasts; when it is exhausted an ω term is converted into a finite
//! number declared by the observer as sufficient to finish the current
//! phase. A run that completes without exhausting the budget certifies the
//! claimed ordinal bound for that run.
//!
//! ```
//! use efcake::ledger::OrdinalBudget;
//!
//! let mut b: OrdinalBudget = "2w".parse().unwrap();
//! b.charge_cut(Some(7)).unwrap();
//! assert_eq!(b.to_string(), "1w+6");
//! ```

use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A degree-1 ordinal `c·ω + m`. Ordered lexicographically on `(c, m)`.
///
/// Every bound appearing here has this form; higher Cantor normal forms
/// are rejected at parse time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrdinalBudget {
    pub omega_coeff: u64,
    pub finite_part: u64,
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum LedgerError {
    /// The counter reached 0 and another cut was attempted. When the
    /// budget was initialized to a claimed bound, this doubles as a
    /// falsification alarm for that bound.
    #[error("cut budget exhausted")]
    BudgetExhausted,
    /// An ω term had to be converted but no phase bound was declared:
    /// a protocol bug, the phase began without its observer estimate.
    #[error("observer unready: omega conversion without a declared phase bound")]
    ObserverUnready,
    #[error("malformed ordinal `{input}` at position {position}")]
    Parse { input: String, position: usize },
}

impl OrdinalBudget {
    pub fn new(omega_coeff: u64, finite_part: u64) -> Self {
        OrdinalBudget {
            omega_coeff,
            finite_part,
        }
    }

    pub fn omega(c: u64) -> Self {
        OrdinalBudget::new(c, 0)
    }

    pub fn finite(m: u64) -> Self {
        OrdinalBudget::new(0, m)
    }

    pub fn is_zero(&self) -> bool {
        self.omega_coeff == 0 && self.finite_part == 0
    }

    /// Lexicographic ordinal order.
    pub fn leq(&self, other: &OrdinalBudget) -> bool {
        self <= other
    }

    /// Charges one cut. Returns `true` when an ω term was converted to a
    /// finite number (`phase_bound` cuts suffice to finish the phase; this
    /// charge consumes one of them).
    pub fn charge_cut(&mut self, phase_bound: Option<u64>) -> Result<bool, LedgerError> {
        if self.finite_part > 0 {
            self.finite_part -= 1;
            Ok(false)
        } else if self.omega_coeff > 0 {
            let k = phase_bound.ok_or(LedgerError::ObserverUnready)?;
            if k == 0 {
                // A phase that declared zero cuts cannot charge one.
                return Err(LedgerError::ObserverUnready);
            }
            self.omega_coeff -= 1;
            self.finite_part = k - 1;
            Ok(true)
        } else {
            Err(LedgerError::BudgetExhausted)
        }
    }
}

impl fmt::Display for OrdinalBudget {
    /// `Aw+B`, `Aw`, or `B`; `0` when the budget is zero.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.omega_coeff, self.finite_part) {
            (0, m) => write!(f, "{}", m),
            (c, 0) => write!(f, "{}w", c),
            (c, m) => write!(f, "{}w+{}", c, m),
        }
    }
}

impl FromStr for OrdinalBudget {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |pos: usize| LedgerError::Parse {
            input: s.to_string(),
            position: pos,
        };
        let t = s.trim();
        if t.is_empty() {
            return Err(err(0));
        }
        match t.find('w') {
            None => {
                let m: u64 = t.parse().map_err(|_| err(0))?;
                Ok(OrdinalBudget::finite(m))
            }
            Some(wpos) => {
                let c: u64 = t[..wpos].parse().map_err(|_| err(0))?;
                let rest = &t[wpos + 1..];
                if rest.is_empty() {
                    return Ok(OrdinalBudget::omega(c));
                }
                let rest = rest.strip_prefix('+').ok_or_else(|| err(wpos + 1))?;
                let m: u64 = rest.parse().map_err(|_| err(wpos + 2))?;
                Ok(OrdinalBudget::new(c, m))
            }
        }
    }
}
