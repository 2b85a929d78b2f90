//! Extended reals `R ∪ {+∞}` for penalty values.
//!
//! Penalties are allowed to be infinite. The infinite case is carried as its
//! own variant so that suprema and sums can honor it without ever pushing an
//! IEEE infinity through floating point arithmetic.

use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    PosInfinity,
}

impl Extended {
    pub const ZERO: Extended = Extended::Finite(0.0);

    /// Wraps a float, mapping `+inf` (and NaN) to the sentinel.
    pub fn from_f64(x: f64) -> Self {
        if x.is_finite() {
            Extended::Finite(x)
        } else if x == f64::NEG_INFINITY {
            // Penalties are bounded below; a -inf here is a caller bug.
            panic!("penalty evaluated to -inf")
        } else {
            Extended::PosInfinity
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(x) => Some(x),
            Extended::PosInfinity => None,
        }
    }

    /// Scales by a nonnegative factor. `0 · ∞ = 0` (measure theory convention).
    pub fn scale(self, factor: f64) -> Extended {
        debug_assert!(factor >= 0.0);
        match self {
            Extended::Finite(a) => Extended::Finite(a * factor),
            Extended::PosInfinity if factor == 0.0 => Extended::ZERO,
            Extended::PosInfinity => Extended::PosInfinity,
        }
    }

    /// `gain - self`, which is `None` (that is, `-∞`) when the penalty is infinite.
    pub fn subtract_from(self, gain: f64) -> Option<f64> {
        self.finite().map(|p| gain - p)
    }
}

/// `+∞` absorbs everything.
impl std::ops::Add for Extended {
    type Output = Extended;

    fn add(self, other: Extended) -> Extended {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::PosInfinity,
        }
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a.partial_cmp(b),
            (Extended::Finite(_), Extended::PosInfinity) => Some(Ordering::Less),
            (Extended::PosInfinity, Extended::Finite(_)) => Some(Ordering::Greater),
            (Extended::PosInfinity, Extended::PosInfinity) => Some(Ordering::Equal),
        }
    }
}

impl From<f64> for Extended {
    fn from(x: f64) -> Self {
        Extended::from_f64(x)
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(x) => write!(f, "{x}"),
            Extended::PosInfinity => f.write_str("inf"),
        }
    }
}
