//! Exact rational time values, static firing intervals and difference bounds.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, Zero};
use thiserror::Error;

/// Exact non-negative rational time. All semantic arithmetic goes through this type.
pub type Rat = Ratio<i64>;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(n)
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(n, d)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimeError {
    #[error("malformed rational `{0}`")]
    BadRational(String),
    #[error("negative bound {0}")]
    Negative(String),
    #[error("lower bound {lower} exceeds upper bound {upper}")]
    Inverted { lower: String, upper: String },
    #[error("empty interval: point interval with an open bound")]
    EmptyPoint,
}

/// Parses `n`, `n/d` or a decimal literal such as `0.9` (normalized to `9/10`).
pub fn parse_rat(text: &str) -> Result<Rat, TimeError> {
    let bad = || TimeError::BadRational(text.to_string());
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 15 {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int: i64 = if int.is_empty() || int == "-" {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let den = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        let num: i64 = frac.parse().map_err(|_| bad())?;
        let mut value = Rat::from_integer(int.abs()) + Rat::new(num, den);
        if negative {
            value = -value;
        }
        return Ok(value);
    }
    text.parse::<i64>().map(Rat::from_integer).map_err(|_| bad())
}

/// Canonical textual form: `n` for integers, `n/d` otherwise.
pub fn fmt_rat(value: &Rat) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Least common multiple of the denominators of `values` (1 for an empty input).
pub fn lcm_denominators<'a>(values: impl IntoIterator<Item = &'a Rat>) -> i64 {
    values.into_iter().fold(1i64, |acc, v| acc.lcm(v.denom()))
}

/// A non-empty interval of the non-negative rationals, possibly right-unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeInterval {
    pub lower: Rat,
    pub lower_strict: bool,
    /// `None` is `+inf`, always written as an open bound.
    pub upper: Option<Rat>,
    pub upper_strict: bool,
}

impl TimeInterval {
    pub fn new(
        lower: Rat,
        lower_strict: bool,
        upper: Option<Rat>,
        upper_strict: bool,
    ) -> Result<Self, TimeError> {
        if lower.is_negative() {
            return Err(TimeError::Negative(fmt_rat(&lower)));
        }
        match upper {
            None => Ok(TimeInterval { lower, lower_strict, upper: None, upper_strict: true }),
            Some(u) => {
                if u < lower {
                    return Err(TimeError::Inverted { lower: fmt_rat(&lower), upper: fmt_rat(&u) });
                }
                if u == lower && (lower_strict || upper_strict) {
                    return Err(TimeError::EmptyPoint);
                }
                Ok(TimeInterval { lower, lower_strict, upper: Some(u), upper_strict })
            }
        }
    }

    /// `[lower, upper]`
    pub fn closed(lower: Rat, upper: Rat) -> Self {
        Self::new(lower, false, Some(upper), false).expect("valid closed interval")
    }

    /// `[value, value]`
    pub fn point(value: Rat) -> Self {
        Self::closed(value, value)
    }

    /// `[lower, w[`
    pub fn at_least(lower: Rat) -> Self {
        Self::new(lower, false, None, true).expect("valid unbounded interval")
    }

    pub fn contains(&self, x: &Rat) -> bool {
        let above = if self.lower_strict { *x > self.lower } else { *x >= self.lower };
        let below = match &self.upper {
            None => true,
            Some(u) if self.upper_strict => x < u,
            Some(u) => x <= u,
        };
        above && below
    }

    /// Immediately fireable: `0` lies in the interval.
    pub fn contains_zero(&self) -> bool {
        self.lower.is_zero() && !self.lower_strict
    }

    /// Whether a delay of `d` keeps every point of the window reachable, i.e. `d <= upper`
    /// (strictly below an open upper bound).
    pub fn admits_delay(&self, d: &Rat) -> bool {
        match &self.upper {
            None => true,
            Some(u) if self.upper_strict => d < u,
            Some(u) => d <= u,
        }
    }

    /// The interval shifted towards the origin by `d` and truncated at zero.
    /// Returns `None` when `d` overruns the upper bound.
    pub fn shift(&self, d: &Rat) -> Option<TimeInterval> {
        if !self.admits_delay(d) {
            return None;
        }
        let (lower, lower_strict) = if self.lower > *d {
            (self.lower - d, self.lower_strict)
        } else if self.lower == *d {
            (Rat::zero(), self.lower_strict)
        } else {
            (Rat::zero(), false)
        };
        let upper = self.upper.map(|u| u - d);
        Some(TimeInterval { lower, lower_strict, upper, upper_strict: self.upper_strict })
    }

    pub fn is_unbounded(&self) -> bool {
        self.upper.is_none()
    }

    /// Largest finite constant mentioned by the interval.
    pub fn max_constant(&self) -> Rat {
        self.upper.unwrap_or(self.lower)
    }

    /// Lower bound as a difference bound on `0 - x`.
    pub fn lower_bound(&self) -> Bound {
        Bound::finite(-self.lower, self.lower_strict)
    }

    /// Upper bound as a difference bound on `x - 0`.
    pub fn upper_bound(&self) -> Bound {
        match self.upper {
            None => Bound::Infinite,
            Some(u) => Bound::finite(u, self.upper_strict),
        }
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lower_strict { ']' } else { '[' };
        match &self.upper {
            None => write!(f, "{}{},w[", open, fmt_rat(&self.lower)),
            Some(u) => {
                let close = if self.upper_strict { '[' } else { ']' };
                write!(f, "{}{},{}{}", open, fmt_rat(&self.lower), fmt_rat(u), close)
            }
        }
    }
}

impl FromStr for TimeInterval {
    type Err = TimeError;

    /// Accepts `[a,b]`, `]a,b]`, `[a,b[`, `]a,b[` and `[a,w[`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TimeError::BadRational(s.to_string());
        let s = s.trim();
        if s.len() < 5 {
            return Err(bad());
        }
        let lower_strict = match s.as_bytes()[0] {
            b'[' => false,
            b']' => true,
            _ => return Err(bad()),
        };
        let upper_strict = match s.as_bytes()[s.len() - 1] {
            b']' => false,
            b'[' => true,
            _ => return Err(bad()),
        };
        let (lo, hi) = s[1..s.len() - 1].split_once(',').ok_or_else(bad)?;
        let lower = parse_rat(lo)?;
        let hi = hi.trim();
        if hi == "w" {
            if !upper_strict {
                return Err(bad());
            }
            return TimeInterval::new(lower, lower_strict, None, true);
        }
        TimeInterval::new(lower, lower_strict, Some(parse_rat(hi)?), upper_strict)
    }
}

/// A difference bound `x - y < c`, `x - y <= c` or no bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bound {
    Finite { value: Rat, strict: bool },
    Infinite,
}

impl Bound {
    pub fn finite(value: Rat, strict: bool) -> Self {
        Bound::Finite { value, strict }
    }

    pub fn le(value: Rat) -> Self {
        Bound::Finite { value, strict: false }
    }

    pub fn lt(value: Rat) -> Self {
        Bound::Finite { value, strict: true }
    }

    pub fn zero() -> Self {
        Bound::le(Rat::zero())
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Bound::Finite { .. })
    }

    pub fn value(&self) -> Option<Rat> {
        match self {
            Bound::Finite { value, .. } => Some(*value),
            Bound::Infinite => None,
        }
    }

    pub fn is_strict(&self) -> bool {
        matches!(self, Bound::Finite { strict: true, .. })
    }

    /// Whether `x <= c` (or `x < c`) admits `x`.
    pub fn admits(&self, x: &Rat) -> bool {
        match self {
            Bound::Infinite => true,
            Bound::Finite { value, strict: true } => x < value,
            Bound::Finite { value, strict: false } => x <= value,
        }
    }

    /// The bound of the complement of `-(x - y) <= c`, i.e. the negated constraint
    /// read in the opposite direction: `not (x - y <= c)` is `y - x < -c`.
    pub fn negate(&self) -> Option<Bound> {
        match self {
            Bound::Infinite => None,
            Bound::Finite { value, strict } => Some(Bound::Finite { value: -value, strict: !strict }),
        }
    }
}

impl Add for Bound {
    type Output = Bound;

    fn add(self, rhs: Bound) -> Bound {
        match (self, rhs) {
            (Bound::Finite { value: a, strict: sa }, Bound::Finite { value: b, strict: sb }) => {
                Bound::Finite { value: a + b, strict: sa || sb }
            }
            _ => Bound::Infinite,
        }
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Bound::Infinite, Bound::Infinite) => Ordering::Equal,
            (Bound::Infinite, _) => Ordering::Greater,
            (_, Bound::Infinite) => Ordering::Less,
            (Bound::Finite { value: a, strict: sa }, Bound::Finite { value: b, strict: sb }) => {
                a.cmp(b).then_with(|| match (sa, sb) {
                    (true, false) => Ordering::Less,
                    (false, true) => Ordering::Greater,
                    _ => Ordering::Equal,
                })
            }
        }
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Infinite => write!(f, "< inf"),
            Bound::Finite { value, strict: true } => write!(f, "< {}", fmt_rat(value)),
            Bound::Finite { value, strict: false } => write!(f, "<= {}", fmt_rat(value)),
        }
    }
}
