//! Geometry of the integer lattice `Z^d`: word norms, balls, interiors and
//! boundaries of finite regions, and axis-aligned level boxes used as tower
//! shapes.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point of `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LatticeVector(pub Vec<i64>);

impl LatticeVector {
    pub fn zero(dim: usize) -> Self {
        LatticeVector(vec![0; dim])
    }

    /// The standard basis vector `e_k` (zero-based `k`).
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = vec![0; dim];
        v[k] = 1;
        LatticeVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn norm(&self, kind: NormKind) -> u64 {
        word_norm(self, kind)
    }

    /// Signed unit steps `(axis, +1|-1)` walking from the origin to `self`,
    /// axis by axis.
    pub fn generator_path(&self) -> Vec<(usize, i64)> {
        let mut path = Vec::new();
        for (axis, &c) in self.0.iter().enumerate() {
            let sign = c.signum();
            for _ in 0..c.unsigned_abs() {
                path.push((axis, sign));
            }
        }
        path
    }
}

impl From<Vec<i64>> for LatticeVector {
    fn from(v: Vec<i64>) -> Self {
        LatticeVector(v)
    }
}

impl fmt::Display for LatticeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Add for &LatticeVector {
    type Output = LatticeVector;
    fn add(self, rhs: &LatticeVector) -> LatticeVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        LatticeVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &LatticeVector {
    type Output = LatticeVector;
    fn sub(self, rhs: &LatticeVector) -> LatticeVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        LatticeVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &LatticeVector {
    type Output = LatticeVector;
    fn neg(self) -> LatticeVector {
        LatticeVector(self.0.iter().map(|a| -a).collect())
    }
}

impl Add for LatticeVector {
    type Output = LatticeVector;
    fn add(self, rhs: LatticeVector) -> LatticeVector {
        &self + &rhs
    }
}

impl Sub for LatticeVector {
    type Output = LatticeVector;
    fn sub(self, rhs: LatticeVector) -> LatticeVector {
        &self - &rhs
    }
}

/// Which norm measures lattice distances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    L1,
    #[default]
    Linf,
}

impl std::str::FromStr for NormKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(NormKind::L1),
            "linf" | "sup" | "max" => Ok(NormKind::Linf),
            other => Err(crate::Error::Parse(format!("unknown norm kind `{other}`"))),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormKind::L1 => write!(f, "l1"),
            NormKind::Linf => write!(f, "linf"),
        }
    }
}

pub fn word_norm(n: &LatticeVector, kind: NormKind) -> u64 {
    match kind {
        NormKind::L1 => n.0.iter().map(|c| c.unsigned_abs()).sum(),
        NormKind::Linf => n.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0),
    }
}

/// A finite set of lattice points.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeRegion {
    points: BTreeSet<LatticeVector>,
}

impl LatticeRegion {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: LatticeVector) -> bool {
        self.points.insert(p)
    }

    pub fn contains(&self, p: &LatticeVector) -> bool {
        self.points.contains(p)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatticeVector> {
        self.points.iter()
    }

    pub fn is_subset(&self, other: &LatticeRegion) -> bool {
        self.points.is_subset(&other.points)
    }

    pub fn union(&self, other: &LatticeRegion) -> LatticeRegion {
        LatticeRegion {
            points: self.points.union(&other.points).cloned().collect(),
        }
    }

    pub fn difference(&self, other: &LatticeRegion) -> LatticeRegion {
        LatticeRegion {
            points: self.points.difference(&other.points).cloned().collect(),
        }
    }

    /// `Σ(Q, R)`: all points within distance `radius` of some point of the region.
    pub fn thicken(&self, radius: u64, kind: NormKind) -> LatticeRegion {
        let mut out = LatticeRegion::new();
        for p in &self.points {
            for q in sigma_ball(p, radius, kind).points {
                out.points.insert(q);
            }
        }
        out
    }
}

impl FromIterator<LatticeVector> for LatticeRegion {
    fn from_iter<I: IntoIterator<Item = LatticeVector>>(iter: I) -> Self {
        LatticeRegion {
            points: iter.into_iter().collect(),
        }
    }
}

/// `Σ(k, R) = { j : ‖j − k‖ ≤ R }`.
pub fn sigma_ball(center: &LatticeVector, radius: u64, kind: NormKind) -> LatticeRegion {
    let r = radius as i64;
    let cube = LevelBox::cube(center.dim(), -r, r);
    cube.points()
        .filter(|p| word_norm(p, kind) <= radius)
        .map(|p| &p + center)
        .collect()
}

/// `Q° = { k ∈ Q : Σ(k,1) ⊂ Q }`, taken with the unit ball of the given norm.
pub fn region_interior(q: &LatticeRegion, kind: NormKind) -> LatticeRegion {
    q.iter()
        .filter(|k| sigma_ball(k, 1, kind).is_subset(q))
        .cloned()
        .collect()
}

/// `∂Q = Q ∖ Q°`.
pub fn region_boundary(q: &LatticeRegion, kind: NormKind) -> LatticeRegion {
    q.difference(&region_interior(q, kind))
}

/// An axis-aligned box `∏ [lo_i, hi_i]` (inclusive bounds). Empty when some
/// `hi_i < lo_i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl LevelBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds must share a dimension");
        LevelBox { lo, hi }
    }

    pub fn cube(dim: usize, lo: i64, hi: i64) -> Self {
        LevelBox::new(vec![lo; dim], vec![hi; dim])
    }

    /// The sup-norm ball `Σ_N` centred at the origin.
    pub fn ball(dim: usize, radius: u64) -> Self {
        let r = radius as i64;
        LevelBox::cube(dim, -r, r)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| h < l)
    }

    pub fn side(&self, axis: usize) -> u64 {
        (self.hi[axis] - self.lo[axis] + 1).max(0) as u64
    }

    pub fn len(&self) -> u64 {
        if self.is_empty() {
            return 0;
        }
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| l <= x && x <= h)
    }

    /// The box shrunk by one on every side: the levels whose unit neighbours
    /// all stay inside.
    pub fn interior(&self) -> LevelBox {
        LevelBox::new(
            self.lo.iter().map(|l| l + 1).collect(),
            self.hi.iter().map(|h| h - 1).collect(),
        )
    }

    /// Largest `N` with `Σ_N ⊂ box` (sup norm), if the box contains the origin.
    pub fn inscribed_radius(&self) -> Option<u64> {
        if !self.contains(&vec![0; self.dim()]) {
            return None;
        }
        self.lo.iter().zip(&self.hi).map(|(l, h)| (-l).min(*h) as u64).min()
    }

    /// Row-major iteration, last axis fastest.
    pub fn points(&self) -> BoxIter {
        BoxIter {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            cur: if self.is_empty() { None } else { Some(self.lo.clone()) },
        }
    }

    pub fn region(&self) -> LatticeRegion {
        self.points().collect()
    }
}

pub struct BoxIter {
    lo: Vec<i64>,
    hi: Vec<i64>,
    cur: Option<Vec<i64>>,
}

impl Iterator for BoxIter {
    type Item = LatticeVector;

    fn next(&mut self) -> Option<LatticeVector> {
        let cur = self.cur.take()?;
        let mut next = cur.clone();
        let mut axis = next.len();
        loop {
            if axis == 0 {
                self.cur = None;
                break;
            }
            axis -= 1;
            if next[axis] < self.hi[axis] {
                next[axis] += 1;
                self.cur = Some(next);
                break;
            }
            next[axis] = self.lo[axis];
        }
        Some(LatticeVector(cur))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[i64]) -> LatticeVector {
        LatticeVector(c.to_vec())
    }

    #[test]
    fn word_norm_examples() {
        assert_eq!(word_norm(&v(&[0, 0]), NormKind::L1), 0);
        assert_eq!(word_norm(&v(&[2, -1]), NormKind::L1), 3);
        assert_eq!(word_norm(&v(&[2, -1]), NormKind::Linf), 2);
    }

    #[test]
    fn sigma_ball_examples() {
        let b = sigma_ball(&v(&[0]), 2, NormKind::Linf);
        let pts: Vec<_> = b.iter().map(|p| p.0[0]).collect();
        assert_eq!(pts, vec![-2, -1, 0, 1, 2]);
        assert_eq!(sigma_ball(&v(&[0, 0]), 1, NormKind::Linf).len(), 9);
        assert_eq!(sigma_ball(&v(&[0, 0]), 1, NormKind::L1).len(), 5);
        assert_eq!(sigma_ball(&v(&[0, 0, 0]), 2, NormKind::Linf).len(), 125);
    }

    #[test]
    fn interior_and_boundary_of_small_ball() {
        let q = sigma_ball(&v(&[0]), 2, NormKind::Linf);
        let int: Vec<_> = region_interior(&q, NormKind::Linf).iter().map(|p| p.0[0]).collect();
        let bd: Vec<_> = region_boundary(&q, NormKind::Linf).iter().map(|p| p.0[0]).collect();
        assert_eq!(int, vec![-1, 0, 1]);
        assert_eq!(bd, vec![-2, 2]);

        let empty = LatticeRegion::new();
        assert!(region_interior(&empty, NormKind::L1).is_empty());
        assert!(region_boundary(&empty, NormKind::L1).is_empty());
    }

    #[test]
    fn interior_of_ball_is_smaller_ball() {
        // enumeration check for d=2, N ≤ 4, both norms
        for kind in [NormKind::L1, NormKind::Linf] {
            for n in 1..=4u64 {
                let q = sigma_ball(&LatticeVector::zero(2), n, kind);
                assert_eq!(
                    region_interior(&q, kind),
                    sigma_ball(&LatticeVector::zero(2), n - 1, kind)
                );
            }
        }
    }

    #[test]
    fn box_helpers() {
        let b = LevelBox::ball(2, 3);
        assert_eq!(b.len(), 49);
        assert_eq!(b.interior(), LevelBox::ball(2, 2));
        assert_eq!(b.inscribed_radius(), Some(3));
        assert_eq!(LevelBox::new(vec![-2], vec![1]).inscribed_radius(), Some(1));
        assert_eq!(LevelBox::ball(1, 0).interior().len(), 0);
        assert_eq!(b.points().count(), 49);
    }

    #[test]
    fn generator_path_reaches_target() {
        let n = v(&[3, -2, 0]);
        let mut cur = LatticeVector::zero(3);
        for (axis, sign) in n.generator_path() {
            cur.0[axis] += sign;
        }
        assert_eq!(cur, n);
        assert_eq!(n.generator_path().len() as u64, word_norm(&n, NormKind::L1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_region() -> impl Strategy<Value = LatticeRegion> {
            proptest::collection::vec((-3i64..=3, -3i64..=3), 0..8)
                .prop_map(|pts| pts.into_iter().map(|(a, b)| v(&[a, b])).collect())
        }

        proptest! {
            #[test]
            fn triangle_inequality(a in proptest::collection::vec(-50i64..50, 3),
                                   b in proptest::collection::vec(-50i64..50, 3)) {
                let (a, b) = (LatticeVector(a), LatticeVector(b));
                for kind in [NormKind::L1, NormKind::Linf] {
                    prop_assert!(word_norm(&(&a + &b), kind) <= word_norm(&a, kind) + word_norm(&b, kind));
                    prop_assert_eq!(word_norm(&a, kind) == 0, a.is_zero());
                }
            }

            #[test]
            fn thickening_composes(q in small_region(), r1 in 0u64..3, r2 in 0u64..3) {
                for kind in [NormKind::L1, NormKind::Linf] {
                    let once = q.thicken(r1, kind);
                    prop_assert!(q.is_subset(&once));
                    let twice = once.thicken(r2, kind);
                    let direct = q.thicken(r1 + r2, kind);
                    prop_assert!(direct.is_subset(&twice));
                    // lattice balls are convex in the relevant sense: equality holds
                    prop_assert_eq!(&twice, &direct);
                }
            }

            #[test]
            fn boundary_and_interior_partition(q in small_region()) {
                for kind in [NormKind::L1, NormKind::Linf] {
                    let int = region_interior(&q, kind);
                    let bd = region_boundary(&q, kind);
                    prop_assert_eq!(int.union(&bd), q.clone());
                    prop_assert!(int.iter().all(|p| !bd.contains(p)));
                }
            }
        }
    }
}
