//! Difference-bound matrices over exact rationals.
//!
//! Variable `0` is the reference origin; entry `(i, j)` bounds `x_i - x_j`. The same
//! structure backs two views: firing domains (one variable per enabled transition,
//! holding its remaining firing delay) and the clock zones stored in state classes
//! (one variable per enabled transition, holding the time since it was enabled).

use std::fmt;

use num_traits::Zero;

use crate::time::{fmt_rat, Bound, Rat};

/// A single difference constraint `x_i - x_j (<|<=) c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub i: usize,
    pub j: usize,
    pub bound: Bound,
}

impl Constraint {
    pub fn new(i: usize, j: usize, bound: Bound) -> Self {
        Constraint { i, j, bound }
    }

    /// `x_i >= c` (or `> c` when strict).
    pub fn at_least(i: usize, c: Rat, strict: bool) -> Self {
        Constraint { i: 0, j: i, bound: Bound::finite(-c, strict) }
    }

    /// `x_i <= c` (or `< c` when strict).
    pub fn at_most(i: usize, c: Rat, strict: bool) -> Self {
        Constraint { i, j: 0, bound: Bound::finite(c, strict) }
    }

    /// The complementary half-space, `not (x_i - x_j <= c)`.
    pub fn complement(&self) -> Option<Constraint> {
        self.bound.negate().map(|bound| Constraint { i: self.j, j: self.i, bound })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dbm {
    dim: usize,
    m: Vec<Bound>,
}

impl Dbm {
    /// All variables non-negative and otherwise unconstrained.
    pub fn nonnegative(vars: usize) -> Self {
        let dim = vars + 1;
        let mut m = vec![Bound::Infinite; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = Bound::zero();
            m[i] = Bound::zero();
        }
        Dbm { dim, m }
    }

    /// Every variable equal to zero.
    pub fn zero(vars: usize) -> Self {
        let dim = vars + 1;
        Dbm { dim, m: vec![Bound::zero(); dim * dim] }
    }

    /// Number of variables, origin excluded.
    pub fn vars(&self) -> usize {
        self.dim - 1
    }

    pub fn get(&self, i: usize, j: usize) -> Bound {
        self.m[i * self.dim + j]
    }

    fn set(&mut self, i: usize, j: usize, b: Bound) {
        self.m[i * self.dim + j] = b;
    }

    /// Intersects with one constraint, without re-closing.
    pub fn constrain(&mut self, c: Constraint) {
        if c.bound < self.get(c.i, c.j) {
            self.set(c.i, c.j, c.bound);
        }
    }

    /// Intersects with one constraint and restores canonical form incrementally.
    /// Returns `false` when the result is empty.
    pub fn and(&mut self, c: Constraint) -> bool {
        if c.bound >= self.get(c.i, c.j) {
            return true;
        }
        if (c.bound + self.get(c.j, c.i)) < Bound::zero() {
            self.set(c.i, c.j, c.bound);
            self.set(0, 0, Bound::lt(Rat::zero()));
            return false;
        }
        self.set(c.i, c.j, c.bound);
        let n = self.dim;
        for p in 0..n {
            for q in 0..n {
                let via = self.get(p, c.i) + c.bound + self.get(c.j, q);
                if via < self.get(p, q) {
                    self.set(p, q, via);
                }
            }
        }
        true
    }

    /// All-pairs tightening (Floyd-Warshall). Returns `false` when the system is inconsistent.
    pub fn close(&mut self) -> bool {
        let n = self.dim;
        for k in 0..n {
            for i in 0..n {
                let ik = self.get(i, k);
                if !ik.is_finite() {
                    continue;
                }
                for j in 0..n {
                    let via = ik + self.get(k, j);
                    if via < self.get(i, j) {
                        self.set(i, j, via);
                    }
                }
            }
        }
        !self.is_empty()
    }

    /// Emptiness of a closed matrix: some diagonal entry went negative.
    pub fn is_empty(&self) -> bool {
        (0..self.dim).any(|i| self.get(i, i) < Bound::zero())
    }

    /// Time elapse: remove every upper bound `x_i - 0`.
    pub fn up(&mut self) {
        for i in 1..self.dim {
            self.set(i, 0, Bound::Infinite);
        }
    }

    /// Keeps the listed variables (1-based indices) in the given order. The submatrix of a
    /// canonical matrix is canonical.
    pub fn project(&self, keep: &[usize]) -> Dbm {
        let idx: Vec<usize> = std::iter::once(0).chain(keep.iter().copied()).collect();
        let dim = idx.len();
        let mut m = Vec::with_capacity(dim * dim);
        for &i in &idx {
            for &j in &idx {
                m.push(self.get(i, j));
            }
        }
        Dbm { dim, m }
    }

    /// Appends a fresh variable equal to zero (the origin's copy). Keeps canonical form.
    pub fn push_zero_var(&self) -> Dbm {
        let old = self.dim;
        let dim = old + 1;
        let mut m = vec![Bound::Infinite; dim * dim];
        for i in 0..old {
            for j in 0..old {
                m[i * dim + j] = self.get(i, j);
            }
        }
        for j in 0..old {
            m[old * dim + j] = self.get(0, j);
            m[j * dim + old] = self.get(j, 0);
        }
        m[old * dim + old] = Bound::zero();
        Dbm { dim, m }
    }

    /// Per-variable maximal-constant extrapolation. `max[i]` is the largest constant
    /// variable `i + 1` is ever compared against. Re-closes the matrix.
    pub fn extrapolate(&mut self, max: &[Rat]) {
        let n = self.dim;
        let bound_of = |v: usize| if v == 0 { Rat::zero() } else { max[v - 1] };
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if let Bound::Finite { value, .. } = self.get(i, j) {
                    if i != 0 && value > bound_of(i) {
                        self.set(i, j, Bound::Infinite);
                    } else if j != 0 && value < -bound_of(j) {
                        self.set(i, j, Bound::lt(-bound_of(j)));
                    }
                }
            }
        }
        self.close();
    }

    /// Rebuilds the matrix over a new variable list: `src[i]` names the old variable
    /// (1-based) that new variable `i + 1` copies, or `None` for a fresh variable equal to
    /// zero. Canonical form is preserved.
    pub fn remap(&self, src: &[Option<usize>]) -> Dbm {
        let idx: Vec<usize> = std::iter::once(0).chain(src.iter().map(|s| s.unwrap_or(0))).collect();
        let dim = idx.len();
        let mut m = Vec::with_capacity(dim * dim);
        for &i in &idx {
            for &j in &idx {
                m.push(self.get(i, j));
            }
        }
        Dbm { dim, m }
    }

    /// Time predecessors: every valuation that reaches the zone by letting time pass.
    pub fn down(&mut self) {
        for i in 1..self.dim {
            self.set(0, i, Bound::zero());
        }
        self.close();
    }

    /// Intersection of two matrices of the same dimension (closed result).
    pub fn intersect(&self, other: &Dbm) -> Option<Dbm> {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = self.clone();
        for (a, b) in out.m.iter_mut().zip(&other.m) {
            if *b < *a {
                *a = *b;
            }
        }
        out.close().then_some(out)
    }

    /// `self` minus the convex set described by `cut`, as a list of disjoint closed pieces.
    pub fn subtract(&self, cut: &[Constraint]) -> Vec<Dbm> {
        let mut pieces = Vec::new();
        let mut rest = self.clone();
        for c in cut {
            if let Some(neg) = c.complement() {
                let mut piece = rest.clone();
                if piece.and(neg) {
                    pieces.push(piece);
                }
            }
            if !rest.and(*c) {
                break;
            }
        }
        pieces
    }

    /// Inclusion test on closed matrices.
    pub fn includes(&self, other: &Dbm) -> bool {
        self.dim == other.dim && self.m.iter().zip(&other.m).all(|(a, b)| b <= a)
    }

    pub fn contains_point(&self, point: &[Rat]) -> bool {
        let value = |i: usize| if i == 0 { Rat::zero() } else { point[i - 1] };
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.get(i, j).admits(&(value(i) - value(j)))))
    }

    /// A concrete point of a closed non-empty matrix. Variables are fixed in order, each at
    /// its smallest admissible value; an open lower bound is approached by `eps` (halved
    /// while it would overshoot the variable's upper bound).
    pub fn earliest_point(&self, eps: Rat) -> Vec<Rat> {
        let mut work = self.clone();
        let mut point = Vec::with_capacity(self.vars());
        for v in 1..self.dim {
            let lower = work.get(0, v);
            let upper = work.get(v, 0);
            let value = match lower {
                Bound::Finite { value, strict: false } => -value,
                Bound::Finite { value, strict: true } => {
                    let lo = -value;
                    let mut step = eps;
                    if let Some(hi) = upper.value() {
                        while lo + step >= hi && step > Rat::zero() {
                            step /= 2;
                        }
                    }
                    lo + step
                }
                Bound::Infinite => Rat::zero(),
            };
            work.and(Constraint::at_least(v, value, false));
            work.and(Constraint::at_most(v, value, false));
            point.push(value);
        }
        point
    }

    /// Non-trivial constraints of the matrix, as listed bounds.
    pub fn constraints(&self) -> Vec<Constraint> {
        let mut out = Vec::new();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j && self.get(i, j).is_finite() {
                    out.push(Constraint::new(i, j, self.get(i, j)));
                }
            }
        }
        out
    }

    /// Interval of values variable `v` can take: `(lower, upper)` as bounds on `-x` and `x`.
    pub fn var_bounds(&self, v: usize) -> (Bound, Bound) {
        (self.get(0, v), self.get(v, 0))
    }

    /// Renders constraints with the given variable names (origin omitted).
    pub fn describe(&self, names: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        for v in 1..self.dim {
            let name = &names[v - 1];
            let lo = self.get(0, v);
            let hi = self.get(v, 0);
            let lo_txt = match lo {
                Bound::Finite { value, strict } => {
                    format!("{} {} ", fmt_rat(&-value), if strict { "<" } else { "<=" })
                }
                Bound::Infinite => String::new(),
            };
            let hi_txt = match hi {
                Bound::Finite { value, strict } => {
                    format!(" {} {}", if strict { "<" } else { "<=" }, fmt_rat(&value))
                }
                Bound::Infinite => " < w".to_string(),
            };
            out.push(format!("{lo_txt}{name}{hi_txt}"));
        }
        for i in 1..self.dim {
            for j in 1..self.dim {
                if i != j {
                    if let Bound::Finite { value, strict } = self.get(i, j) {
                        out.push(format!(
                            "{} - {} {} {}",
                            names[i - 1],
                            names[j - 1],
                            if strict { "<" } else { "<=" },
                            fmt_rat(&value)
                        ));
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Dbm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (1..self.dim).map(|i| format!("x{i}")).collect();
        write!(f, "{}", self.describe(&names).join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{rat, ratio};

    fn brute_close(d: &Dbm) -> Dbm {
        // Bellman-Ford style relaxation until fixpoint, independent of the FW loop order.
        let mut out = d.clone();
        let n = out.dim;
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let via = out.get(i, k) + out.get(k, j);
                        if via < out.get(i, j) {
                            out.set(i, j, via);
                            changed = true;
                        }
                    }
                }
            }
            if !changed || out.is_empty() {
                return out;
            }
        }
    }

    #[test]
    fn close_tightens_and_detects_emptiness() {
        let mut d = Dbm::nonnegative(2);
        d.constrain(Constraint::at_most(1, rat(3), false));
        d.constrain(Constraint::new(2, 1, Bound::le(rat(2))));
        assert!(d.close());
        assert_eq!(d.get(2, 0), Bound::le(rat(5)));
        d.constrain(Constraint::at_least(2, rat(6), false));
        assert!(!d.close());
    }

    #[test]
    fn incremental_and_matches_full_close() {
        let mut a = Dbm::nonnegative(3);
        a.close();
        let cs = [
            Constraint::at_most(1, rat(4), true),
            Constraint::new(2, 1, Bound::le(rat(1))),
            Constraint::at_least(3, ratio(1, 2), false),
            Constraint::new(3, 2, Bound::lt(rat(2))),
        ];
        let mut b = a.clone();
        for c in cs {
            assert!(a.and(c));
            b.constrain(c);
        }
        b.close();
        assert_eq!(a, b);
        assert_eq!(brute_close(&b), b);
    }

    #[test]
    fn subtract_pieces_are_disjoint_and_cover() {
        let mut z = Dbm::nonnegative(1);
        z.constrain(Constraint::at_most(1, rat(10), false));
        z.close();
        let cut = [Constraint::at_least(1, rat(2), false), Constraint::at_most(1, rat(5), true)];
        let pieces = z.subtract(&cut);
        assert_eq!(pieces.len(), 2);
        for x in [rat(0), ratio(3, 2), rat(5), rat(10)] {
            let hits = pieces.iter().filter(|p| p.contains_point(&[x])).count();
            assert_eq!(hits, 1, "point {x}");
        }
        assert!(pieces.iter().all(|p| !p.contains_point(&[rat(3)])));
    }

    #[test]
    fn earliest_point_respects_open_bounds() {
        let mut z = Dbm::nonnegative(2);
        z.constrain(Constraint::at_least(1, rat(1), true));
        z.constrain(Constraint::new(1, 2, Bound::le(rat(0))));
        z.constrain(Constraint::at_most(2, rat(2), false));
        z.close();
        let p = z.earliest_point(ratio(1, 1000));
        assert!(z.contains_point(&p));
        assert_eq!(p[0], ratio(1001, 1000));
    }

    #[test]
    fn extrapolation_widens_beyond_max_constant() {
        let mut z = Dbm::zero(1);
        z.up();
        z.close();
        z.and(Constraint::at_least(1, rat(30), false));
        z.extrapolate(&[rat(20)]);
        assert_eq!(z.get(0, 1), Bound::lt(rat(-20)));
        assert_eq!(z.get(1, 0), Bound::Infinite);
    }
}
