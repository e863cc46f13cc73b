//! Bounded continuous cocycles over a transitive `Z^d` shift, built as guarded
//! sums of bump coboundaries, with orbit-density checks for the skew product.
//!
//! Points of the shift are configurations `Z^d -> {0..a-1}` and the action is
//! `(T_n x)_m = x_{m+n}`. Balls of the metric `θ^{t(x,y)}` are cylinders over the
//! L1 windows `{‖m‖_1 < level}`, so every neighborhood is described by an integer
//! level.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeVector, NormKind};
use crate::measure_space::ShiftPoint;

/// Anything that assigns a symbol to every lattice site.
pub trait Configuration: Sync {
    fn dim(&self) -> usize;
    fn symbol(&self, site: &[i64]) -> u32;
}

impl Configuration for ShiftPoint {
    fn dim(&self) -> usize {
        ShiftPoint::dim(self)
    }
    fn symbol(&self, site: &[i64]) -> u32 {
        ShiftPoint::symbol(self, site)
    }
}

/// `T_n x` as a view.
pub struct Translated<'a, C: Configuration + ?Sized> {
    base: &'a C,
    offset: Vec<i64>,
}

impl<'a, C: Configuration + ?Sized> Translated<'a, C> {
    pub fn new(base: &'a C, n: &[i64]) -> Self {
        Translated {
            base,
            offset: n.to_vec(),
        }
    }
}

impl<C: Configuration + ?Sized> Configuration for Translated<'_, C> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn symbol(&self, site: &[i64]) -> u32 {
        let s: Vec<i64> = site.iter().zip(&self.offset).map(|(a, b)| a + b).collect();
        self.base.symbol(&s)
    }
}

/// Calls `f` on every point of the L1 sphere of radius `r`, stopping early when
/// `f` returns false. Returns false iff stopped.
pub fn visit_l1_sphere(dim: usize, r: u64, f: &mut impl FnMut(&[i64]) -> bool) -> bool {
    fn rec(cur: &mut Vec<i64>, idx: usize, rem: i64, f: &mut impl FnMut(&[i64]) -> bool) -> bool {
        let dim = cur.len();
        if idx == dim - 1 {
            if rem == 0 {
                cur[idx] = 0;
                return f(cur);
            }
            for c in [-rem, rem] {
                cur[idx] = c;
                if !f(cur) {
                    return false;
                }
            }
            return true;
        }
        for c in -rem..=rem {
            cur[idx] = c;
            if !rec(cur, idx + 1, rem - c.abs(), f) {
                return false;
            }
        }
        true
    }
    let mut cur = vec![0i64; dim];
    rec(&mut cur, 0, r as i64, f)
}

pub fn l1_sphere(dim: usize, r: u64) -> Vec<LatticeVector> {
    let mut out = Vec::new();
    visit_l1_sphere(dim, r, &mut |p| {
        out.push(LatticeVector(p.to_vec()));
        true
    });
    out
}

/// Sites of the window `{‖m‖_1 < level}`, shell by shell.
pub fn window_sites(dim: usize, level: u32) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for r in 0..level as u64 {
        visit_l1_sphere(dim, r, &mut |p| {
            out.push(p.to_vec());
            true
        });
    }
    out
}

/// Word metric for the generators `±e_i`; left invariant and equal to the L1 distance.
pub fn word_metric(k: &LatticeVector, l: &LatticeVector) -> u64 {
    (l.clone() - k.clone()).norm(NormKind::L1)
}

/// First L1 radius below `horizon` where `x` and `y` disagree, if any.
pub fn disagreement<X, Y>(x: &X, y: &Y, horizon: u32) -> Option<u64>
where
    X: Configuration + ?Sized,
    Y: Configuration + ?Sized,
{
    let dim = x.dim();
    for r in 0..horizon as u64 {
        let same = visit_l1_sphere(dim, r, &mut |m| x.symbol(m) == y.symbol(m));
        if !same {
            return Some(r);
        }
    }
    None
}

/// `T_v x ∈ [x0 on the window of this level]`, scanned from the center outward.
pub fn matches_at<X, Y>(x: &X, v: &[i64], x0: &Y, level: u32) -> bool
where
    X: Configuration + ?Sized,
    Y: Configuration + ?Sized,
{
    let mut s = vec![0i64; v.len()];
    for r in 0..level as u64 {
        let ok = visit_l1_sphere(v.len(), r, &mut |m| {
            for i in 0..m.len() {
                s[i] = m[i] + v[i];
            }
            x.symbol(&s) == x0.symbol(m)
        });
        if !ok {
            return false;
        }
    }
    true
}

/// The full shift on `alphabet` symbols over `Z^dim` with metric `θ^{t(x,y)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpace {
    pub alphabet: u32,
    pub dim: usize,
    pub theta: f64,
}

impl ShiftSpace {
    pub fn new(alphabet: u32, dim: usize, theta: f64) -> Result<Self> {
        if alphabet < 2 {
            return Err(Error::InvalidArgument("alphabet needs at least two symbols".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0,1), got {theta}")));
        }
        Ok(ShiftSpace { alphabet, dim, theta })
    }

    /// Radius of the closed ball that equals the level-`level` cylinder.
    pub fn radius(&self, level: u32) -> f64 {
        self.theta.powi(level as i32)
    }

    /// Smallest level whose cylinders have diameter at most `r`.
    pub fn level_for_radius(&self, r: f64) -> u32 {
        let mut j = 0u32;
        while self.radius(j) > r * (1.0 + 1e-12) {
            j += 1;
        }
        j
    }

    /// Largest `c` with `θ^{-c} <= 2`, so `B(x, 2θ^e)` is the level `e - c` cylinder.
    pub fn doubling_gap(&self) -> u32 {
        let mut c = 0u32;
        while self.theta.powi(-(c as i32 + 1)) <= 2.0 * (1.0 + 1e-12) {
            c += 1;
        }
        c
    }

    /// `θ^{t(x,y)}`, or `θ^horizon` as an upper bound when the points agree that far.
    pub fn distance<X, Y>(&self, x: &X, y: &Y, horizon: u32) -> f64
    where
        X: Configuration + ?Sized,
        Y: Configuration + ?Sized,
    {
        match disagreement(x, y, horizon) {
            Some(t) => self.theta.powi(t as i32),
            None => self.radius(horizon),
        }
    }
}

/// A point whose orbit is dense: every pattern on a cube `[0,m)^d` appears,
/// all cubes of side 1, then side 2, and so on, laid out along the positive
/// first axis. All other sites carry symbol 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitivePoint {
    alphabet: u32,
    dim: usize,
    /// `(side, first axis offset, pattern count)` per block.
    blocks: Vec<(u64, u64, u128)>,
}

impl TransitivePoint {
    pub fn new(alphabet: u32, dim: usize) -> Result<Self> {
        if alphabet < 2 || dim == 0 {
            return Err(Error::InvalidArgument(
                "transitive point needs alphabet >= 2 and dim >= 1".into(),
            ));
        }
        let mut blocks = Vec::new();
        let mut offset: u128 = 0;
        for side in 1u64.. {
            let cells = (side as u128).pow(dim as u32);
            let count = match (alphabet as u128).checked_pow(cells as u32) {
                Some(c) if cells < 128 => c,
                _ => break,
            };
            if offset > i64::MAX as u128 {
                break;
            }
            blocks.push((side, offset as u64, count));
            offset = match count.checked_mul(side as u128).and_then(|w| w.checked_add(offset)) {
                Some(o) => o,
                None => break,
            };
        }
        Ok(TransitivePoint { alphabet, dim, blocks })
    }

    pub fn alphabet(&self) -> u32 {
        self.alphabet
    }

    /// Corner site of the given cube pattern (row-major, first axis fastest).
    pub fn locate_pattern(&self, side: u64, symbols: &[u32]) -> Option<Vec<i64>> {
        let &(_, offset, count) = self.blocks.iter().find(|b| b.0 == side)?;
        if symbols.len() as u128 != (side as u128).pow(self.dim as u32) {
            return None;
        }
        let mut index: u128 = 0;
        for &s in symbols.iter().rev() {
            if s >= self.alphabet {
                return None;
            }
            index = index * self.alphabet as u128 + s as u128;
        }
        debug_assert!(index < count);
        let first = offset as u128 + index * side as u128;
        if first > i64::MAX as u128 {
            return None;
        }
        let mut site = vec![0i64; self.dim];
        site[0] = first as i64;
        Some(site)
    }
}

impl Configuration for TransitivePoint {
    fn dim(&self) -> usize {
        self.dim
    }

    fn symbol(&self, site: &[i64]) -> u32 {
        if site.iter().any(|&c| c < 0) {
            return 0;
        }
        let p = site[0] as u64;
        let i = self.blocks.partition_point(|b| b.1 <= p);
        if i == 0 {
            return 0;
        }
        let (side, offset, count) = self.blocks[i - 1];
        let rel = (p - offset) as u128;
        let index = rel / side as u128;
        if index >= count {
            return 0;
        }
        let mut local = (rel % side as u128) as u64;
        if site[1..].iter().any(|&c| c as u64 >= side) {
            return 0;
        }
        let mut mul = side;
        for &c in &site[1..] {
            local += c as u64 * mul;
            mul *= side;
        }
        let a = self.alphabet as u128;
        ((index / a.pow(local as u32)) % a) as u32
    }
}

/// Smallest window level at which the cylinder around `x0` and its translate by
/// `v` conflict, i.e. `1 + min max(‖m‖, ‖m+v‖)` over sites with `x0_m != x0_{m+v}`.
pub fn overlap_level<C: Configuration + ?Sized>(x0: &C, v: &[i64], cap: u64) -> Result<u32> {
    let dim = v.len();
    let mut best: Option<u64> = None;
    let mut rho = 0u64;
    let mut m = vec![0i64; dim];
    let mut mv = vec![0i64; dim];
    loop {
        if let Some(b) = best {
            if rho >= 2 * b {
                return Ok(b as u32 + 1);
            }
        }
        if rho > cap {
            return Err(Error::SearchBudget(format!(
                "no conflict for translate {v:?} within radius {cap}"
            )));
        }
        // Sites with ‖2m + v‖_1 = rho have max(‖m‖, ‖m+v‖) >= rho / 2.
        visit_l1_sphere(dim, rho, &mut |u| {
            for i in 0..dim {
                let w = u[i] - v[i];
                if w.rem_euclid(2) != 0 {
                    return true;
                }
                m[i] = w / 2;
                mv[i] = m[i] + v[i];
            }
            if x0.symbol(&m) != x0.symbol(&mv) {
                let n1: u64 = m.iter().map(|c| c.unsigned_abs()).sum();
                let n2: u64 = mv.iter().map(|c| c.unsigned_abs()).sum();
                let val = n1.max(n2);
                best = Some(best.map_or(val, |b| b.min(val)));
            }
            true
        });
        rho += 1;
    }
}

/// Whether the cylinders of this level around `x0` and around `T_{-v} x0` conflict.
pub fn conflicts_at<C: Configuration + ?Sized>(x0: &C, v: &[i64], level: u32) -> bool {
    let dim = v.len();
    let e = level as u64;
    let mut m = vec![0i64; dim];
    let mut mv = vec![0i64; dim];
    // Shared sites satisfy ‖2m + v‖_1 < 2e; scan them from the middle outward.
    for rho in 0..2 * e {
        let done = !visit_l1_sphere(dim, rho, &mut |u| {
            for i in 0..dim {
                let w = u[i] - v[i];
                if w.rem_euclid(2) != 0 {
                    return true;
                }
                m[i] = w / 2;
                mv[i] = m[i] + v[i];
            }
            let n1: u64 = m.iter().map(|c| c.unsigned_abs()).sum();
            let n2: u64 = mv.iter().map(|c| c.unsigned_abs()).sum();
            !(n1 < e && n2 < e && x0.symbol(&m) != x0.symbol(&mv))
        });
        if done {
            return true;
        }
    }
    false
}

/// Smallest level at which all translates of the cylinder around `x0` by
/// nonzero `v` with `‖v‖_1 <= spread` are disjoint from it.
pub fn disjointness_level<C: Configuration + ?Sized>(x0: &C, dim: usize, spread: u64) -> Result<u32> {
    let cap = 4 * spread + 64;
    let mut vs = Vec::new();
    for r in (1..=spread).rev() {
        visit_l1_sphere(dim, r, &mut |p| {
            vs.push(p.to_vec());
            true
        });
    }
    // Conflicts persist as the level grows, so the predicate is monotone.
    let ok = |e: u32| vs.par_iter().all(|v| conflicts_at(x0, v, e));
    let mut hi = 1u32;
    while !ok(hi) {
        if hi as u64 > cap {
            return Err(Error::SearchBudget(format!(
                "translates within {spread} still overlap at level {hi}"
            )));
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    // ok(lo) is false (or lo = 0), ok(hi) is true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Orbit times `v` with `T_v x0` inside the cylinder of a term, found by
/// scanning shells up to `radius`.
#[derive(Clone, Debug, Default, PartialEq)]
struct ReturnSet {
    radius: u64,
    hits: Vec<LatticeVector>,
}

/// One bump coboundary `h(n,x) = g(T_n x) - g(x)` with
/// `g = s Σ_k a(k) G(T_k^{-1} x)` and `a(k) = (1 - ‖k - N‖/‖N‖)_+`.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpCoboundary {
    value: Vec<f64>,
    shift: LatticeVector,
    /// Level of the cylinder `B(x0, ℰ)` on which the bump equals one.
    level: u32,
    /// Level of `B(x0, 2ℰ)`.
    outer_level: u32,
    /// Smallest outer level that keeps the translates over the weight support apart.
    minimal_level: u32,
    theta: f64,
    /// Translates by `0 < ‖v‖ <= spread` are known to miss the cylinder.
    spread: u64,
    returns: ReturnSet,
}

impl BumpCoboundary {
    /// Builds the term for value `s` at shift `N`, choosing the bump radius so
    /// the translates `T_k B(x0, 2ℰ)`, `‖k‖ <= 3‖N‖`, are disjoint.
    pub fn new<C: Configuration + ?Sized>(
        space: &ShiftSpace,
        x0: &C,
        value: Vec<f64>,
        shift: LatticeVector,
    ) -> Result<Self> {
        if shift.dim() != space.dim {
            return Err(Error::DimensionMismatch {
                expected: space.dim,
                got: shift.dim(),
            });
        }
        let n = shift.norm(NormKind::L1);
        if n == 0 {
            return Err(Error::InvalidArgument("bump shift must be nonzero".into()));
        }
        let spread = 6 * n;
        let outer_level = disjointness_level(x0, space.dim, spread)?;
        let minimal_level = disjointness_level(x0, space.dim, 4 * n + 2)?;
        let level = outer_level + space.doubling_gap();
        Ok(BumpCoboundary {
            value,
            shift,
            level,
            outer_level,
            minimal_level,
            theta: space.theta,
            spread,
            returns: ReturnSet {
                radius: spread,
                hits: vec![LatticeVector::zero(space.dim)],
            },
        })
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn shift(&self) -> &LatticeVector {
        &self.shift
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn outer_level(&self) -> u32 {
        self.outer_level
    }

    pub fn minimal_level(&self) -> u32 {
        self.minimal_level
    }

    /// `ℰ`.
    pub fn radius(&self) -> f64 {
        self.theta.powi(self.level as i32)
    }

    fn shift_norm(&self) -> u64 {
        self.shift.norm(NormKind::L1)
    }

    pub fn weight(&self, k: &[i64]) -> f64 {
        let n = self.shift_norm() as f64;
        let rho: u64 = k
            .iter()
            .zip(self.shift.coords())
            .map(|(a, b)| (a - b).unsigned_abs())
            .sum();
        (1.0 - rho as f64 / n).max(0.0)
    }

    /// The weights on `{k : ρ(N,k) <= ‖N‖}`.
    pub fn weight_table(&self) -> Vec<(LatticeVector, f64)> {
        let mut out = Vec::new();
        for r in 0..=self.shift_norm() {
            for p in l1_sphere(self.shift.dim(), r) {
                let k = p + self.shift.clone();
                let w = self.weight(k.coords());
                out.push((k, w));
            }
        }
        out
    }

    /// Sup over generators and points of `‖h(γ,x)‖`; the weights are
    /// `1/‖N‖`-Lipschitz and the bumps are disjoint, so this is `‖s‖/‖N‖`.
    pub fn cocycle_norm(&self) -> f64 {
        sup_norm(&self.value) / self.shift_norm() as f64
    }

    /// `G(y) = (1 - d(B(x0,ℰ), y)/ℰ)_+`.
    pub fn bump<Y, C>(&self, y: &Y, x0: &C) -> f64
    where
        Y: Configuration + ?Sized,
        C: Configuration + ?Sized,
    {
        match disagreement(y, x0, self.level) {
            None => 1.0,
            Some(t) => (1.0 - self.theta.powi(t as i32) / self.radius()).max(0.0),
        }
    }

    /// `g(x)` by direct summation over the weight support.
    pub fn transfer_at<X, C>(&self, x: &X, x0: &C) -> Vec<f64>
    where
        X: Configuration + ?Sized,
        C: Configuration + ?Sized,
    {
        let mut total = 0.0;
        let n = self.shift_norm();
        for r in 0..n {
            visit_l1_sphere(self.shift.dim(), r, &mut |p| {
                let k: Vec<i64> = p.iter().zip(self.shift.coords()).map(|(a, b)| a + b).collect();
                let back: Vec<i64> = k.iter().map(|c| -c).collect();
                let g = self.bump(&Translated::new(x, &back), x0);
                if g != 0.0 {
                    total += self.weight(&k) * g;
                }
                true
            });
        }
        self.value.iter().map(|s| s * total).collect()
    }

    /// `h(n, x)` by direct summation.
    pub fn eval<X, C>(&self, n: &[i64], x: &X, x0: &C) -> Vec<f64>
    where
        X: Configuration + ?Sized,
        C: Configuration + ?Sized,
    {
        let after = self.transfer_at(&Translated::new(x, n), x0);
        let before = self.transfer_at(x, x0);
        after.iter().zip(&before).map(|(a, b)| a - b).collect()
    }

    /// Radius up to which orbit transfers can be read off the return set.
    fn orbit_reach(&self) -> u64 {
        self.returns.radius.saturating_sub(2 * self.shift_norm())
    }

    fn extend_returns<C: Configuration + ?Sized>(&mut self, x0: &C, orbit_radius: u64) {
        let need = orbit_radius + 2 * self.shift_norm();
        let dim = self.shift.dim();
        let level = self.level;
        for r in self.returns.radius + 1..=need {
            for v in l1_sphere(dim, r) {
                if matches_at(x0, v.coords(), x0, level) {
                    self.returns.hits.push(v);
                }
            }
        }
        self.returns.radius = self.returns.radius.max(need);
    }

    /// `g(T_n x0)` from the return set; `None` if `n` lies beyond the scanned range.
    pub fn orbit_transfer(&self, n: &[i64]) -> Option<Vec<f64>> {
        let norm: u64 = n.iter().map(|c| c.unsigned_abs()).sum();
        if norm > self.orbit_reach() {
            return None;
        }
        let mut total = 0.0;
        let mut k = vec![0i64; n.len()];
        for v in &self.returns.hits {
            for i in 0..n.len() {
                k[i] = n[i] - v.0[i];
            }
            total += self.weight(&k);
        }
        Some(self.value.iter().map(|s| s * total).collect())
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// A target `(U, t, η)`: `U` is the cylinder around `x0` of the given level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopoTarget {
    pub level: u32,
    pub value: Vec<f64>,
    pub eta: f64,
}

/// What the engine recorded for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub target: TopoTarget,
    /// Norm bound `Δ_k` imposed on the term.
    pub guard: f64,
    pub shift: Vec<i64>,
    pub term_norm: f64,
    /// `‖F(n_k,x0) - t_k‖` for the prefix ending at this term.
    pub prefix_residual: f64,
    /// The same quantity for the full sum.
    pub final_residual: f64,
    /// `Σ_{j>k} Δ_j ‖n_k‖`.
    pub tail_bound: f64,
    pub bump_level: u32,
    pub minimal_level: u32,
}

/// A finite sum of bump coboundaries over a transitive point.
#[derive(Clone, Debug)]
pub struct SequentialCocycle {
    space: ShiftSpace,
    point: TransitivePoint,
    value_dim: usize,
    terms: Vec<BumpCoboundary>,
    records: Vec<TargetRecord>,
}

impl SequentialCocycle {
    pub fn new(space: ShiftSpace, value_dim: usize) -> Result<Self> {
        if value_dim == 0 {
            return Err(Error::InvalidArgument("value dimension must be positive".into()));
        }
        let point = TransitivePoint::new(space.alphabet, space.dim)?;
        Ok(SequentialCocycle {
            space,
            point,
            value_dim,
            terms: Vec::new(),
            records: Vec::new(),
        })
    }

    pub fn space(&self) -> &ShiftSpace {
        &self.space
    }

    pub fn point(&self) -> &TransitivePoint {
        &self.point
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn terms(&self) -> &[BumpCoboundary] {
        &self.terms
    }

    pub fn records(&self) -> &[TargetRecord] {
        &self.records
    }

    pub fn push(&mut self, term: BumpCoboundary) -> Result<()> {
        if term.value.len() != self.value_dim {
            return Err(Error::DimensionMismatch {
                expected: self.value_dim,
                got: term.value.len(),
            });
        }
        self.terms.push(term);
        Ok(())
    }

    /// Makes orbit values available for `‖n‖ <= radius`.
    pub fn prepare_orbit(&mut self, radius: u64) {
        let x0 = &self.point;
        self.terms.par_iter_mut().for_each(|t| {
            if t.orbit_reach() < radius {
                t.extend_returns(x0, radius)
            }
        });
    }

    /// `F(n, x0)` for the first `count` terms.
    pub fn orbit_value_prefix(&self, count: usize, n: &[i64]) -> Result<Vec<f64>> {
        let zero = vec![0i64; n.len()];
        let mut out = vec![0.0; self.value_dim];
        for t in &self.terms[..count] {
            let (a, b) = match (t.orbit_transfer(n), t.orbit_transfer(&zero)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::SearchBudget(format!(
                        "orbit time {n:?} lies beyond the prepared range"
                    )))
                }
            };
            for i in 0..out.len() {
                out[i] += a[i] - b[i];
            }
        }
        Ok(out)
    }

    /// `F(n, x0)`.
    pub fn orbit_value(&self, n: &[i64]) -> Result<Vec<f64>> {
        self.orbit_value_prefix(self.terms.len(), n)
    }

    /// `F(n, x)` at an arbitrary point, by direct summation.
    pub fn eval<X: Configuration + ?Sized>(&self, n: &[i64], x: &X) -> Vec<f64> {
        let mut out = vec![0.0; self.value_dim];
        for t in &self.terms {
            for (o, v) in out.iter_mut().zip(t.eval(n, x, &self.point)) {
                *o += v;
            }
        }
        out
    }

    /// `T_n x0 ∈ U` for the cylinder of this level.
    pub fn orbit_in(&self, n: &[i64], level: u32) -> bool {
        matches_at(&self.point, n, &self.point, level)
    }
}

/// One step of the sequential construction: finds `N` with `T_N x0` in a
/// neighborhood `W ⊆ V` where the existing transfer varies by less than `Δ/3`,
/// with `‖s‖/‖N‖ < Δ/3`, and returns the bump term realizing `s` exactly at `N`.
pub fn extend_with_bump(
    f: &mut SequentialCocycle,
    level: u32,
    s: &[f64],
    delta: f64,
    budget: u64,
) -> Result<(BumpCoboundary, LatticeVector)> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    if s.len() != f.value_dim {
        return Err(Error::DimensionMismatch {
            expected: f.value_dim,
            got: s.len(),
        });
    }
    let start = ((3.0 * sup_norm(s) / delta).floor() as u64 + 1).max(1);
    if start > budget {
        return Err(Error::SearchBudget(format!(
            "need ‖N‖ >= {start} but the orbit budget is {budget}"
        )));
    }
    let dim = f.space.dim;
    let count = f.terms.len();
    for rho in start..=budget {
        f.prepare_orbit(rho);
        let mut found = None;
        let mut err = None;
        visit_l1_sphere(dim, rho, &mut |n| {
            if !f.orbit_in(n, level) {
                return true;
            }
            match f.orbit_value_prefix(count, n) {
                Ok(v) if sup_norm(&v) < delta / 6.0 => {
                    found = Some(n.to_vec());
                    false
                }
                Ok(_) => true,
                Err(e) => {
                    err = Some(e);
                    false
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(n) = found {
            let shift = LatticeVector(n);
            let term = BumpCoboundary::new(&f.space, &f.point, s.to_vec(), shift.clone())?;
            return Ok((term, shift));
        }
    }
    Err(Error::SearchBudget(format!(
        "no orbit time with ‖N‖ in [{start}, {budget}] returns to the level-{level} cylinder with small transfer change"
    )))
}

/// Guard bound for the next term given the targets and shifts chosen so far.
pub fn next_guard(etas: &[f64], shifts: &[u64]) -> f64 {
    let k = shifts.len();
    let mut g = etas[k] / 3.0;
    for j in 0..k {
        let b = etas[j] / (2f64.powi(k as i32 + 2) * (shifts[j] as f64 + 1.0));
        g = g.min(b);
    }
    g
}

/// Builds the sum of terms for the targets in order, then re-verifies every
/// target against the full sum.
pub fn build_sequential(
    space: ShiftSpace,
    value_dim: usize,
    targets: &[TopoTarget],
    budget: u64,
) -> Result<SequentialCocycle> {
    for w in targets.windows(2) {
        if !(w[1].eta < w[0].eta) {
            return Err(Error::InvalidArgument(
                "target tolerances must strictly decrease".into(),
            ));
        }
        if w[1].level < w[0].level {
            return Err(Error::InvalidArgument("target neighborhoods must shrink".into()));
        }
    }
    if targets.iter().any(|t| !(t.eta > 0.0)) {
        return Err(Error::InvalidArgument("target tolerances must be positive".into()));
    }
    let mut f = SequentialCocycle::new(space, value_dim)?;
    let etas: Vec<f64> = targets.iter().map(|t| t.eta).collect();
    let mut norms = Vec::new();
    let mut guards = Vec::new();
    for t in targets {
        let guard = next_guard(&etas, &norms);
        let (term, n) = extend_with_bump(&mut f, t.level, &t.value, guard, budget)?;
        let term_norm = term.cocycle_norm();
        let (bump_level, minimal_level) = (term.level, term.minimal_level);
        f.push(term)?;
        f.prepare_orbit(n.norm(NormKind::L1));
        let v = f.orbit_value(n.coords())?;
        let prefix_residual = sup_dist(&v, &t.value);
        norms.push(n.norm(NormKind::L1));
        guards.push(guard);
        f.records.push(TargetRecord {
            target: t.clone(),
            guard,
            shift: n.0.clone(),
            term_norm,
            prefix_residual,
            final_residual: prefix_residual,
            tail_bound: 0.0,
            bump_level,
            minimal_level,
        });
    }
    let reach = norms.iter().copied().max().unwrap_or(0);
    f.prepare_orbit(reach);
    for k in 0..f.records.len() {
        let n = f.records[k].shift.clone();
        let v = f.orbit_value(&n)?;
        let rec = &mut f.records[k];
        rec.final_residual = sup_dist(&v, &rec.target.value);
        rec.tail_bound = guards[k + 1..].iter().fold(0.0, |a, g| a + g) * norms[k] as f64;
    }
    for (k, rec) in f.records.iter().enumerate() {
        if !f.orbit_in(&rec.shift, rec.target.level) {
            return Err(Error::Verification(format!("target {k}: T_n x0 left the neighborhood")));
        }
        if !(rec.final_residual < rec.target.eta) {
            return Err(Error::Verification(format!(
                "target {k}: residual {} is not below {}",
                rec.final_residual, rec.target.eta
            )));
        }
        if !(rec.term_norm < rec.guard / 3.0) {
            return Err(Error::Verification(format!("target {k}: term norm exceeds its guard")));
        }
        if !(rec.tail_bound < rec.target.eta / 2.0) {
            return Err(Error::Verification(format!("target {k}: guard tail is too large")));
        }
    }
    Ok(f)
}

/// A cylinder given by a pattern on the window of some level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPattern {
    pub level: u32,
    /// Symbols on [`window_sites`] order.
    pub symbols: Vec<u32>,
}

impl WindowPattern {
    pub fn around<C: Configuration + ?Sized>(x: &C, level: u32) -> Self {
        let symbols = window_sites(x.dim(), level).iter().map(|s| x.symbol(s)).collect();
        WindowPattern { level, symbols }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub cell: String,
    pub value: Vec<f64>,
    /// Closest orbit value among orbit points within `δ` in space.
    pub nearest: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub budget: u64,
    pub delta: f64,
    pub radius: f64,
    pub spatial_level: u32,
    pub cells: usize,
    pub values_per_cell: usize,
    pub covered: usize,
    pub fraction: f64,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell,value,nearest\n");
        for r in &self.rows {
            let v: Vec<String> = r.value.iter().map(|x| format!("{x}")).collect();
            let near = r.nearest.map(|d| format!("{d}")).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", r.cell, v.join(" "), near));
        }
        s
    }
}

const MAX_GRID: usize = 1 << 22;

/// Fraction of a `δ`-grid of `W × [-R,R]^D` lying within `δ` of a skew orbit
/// point `(T_n x0, F(n,x0))`, `‖n‖_1 <= budget`.
pub fn verify_transitive_orbit(
    h: &mut SequentialCocycle,
    window: &WindowPattern,
    radius: f64,
    delta: f64,
    budget: u64,
) -> Result<CoverageReport> {
    if !(delta > 0.0) || !(radius >= 0.0) {
        return Err(Error::InvalidArgument("need delta > 0 and radius >= 0".into()));
    }
    let dim = h.space.dim;
    let a = h.space.alphabet;
    let wsites = window_sites(dim, window.level);
    if window.symbols.len() != wsites.len() {
        return Err(Error::InvalidArgument("window pattern does not match its level".into()));
    }
    let near_level = h.space.level_for_radius(delta);
    let cell_level = near_level.max(window.level);
    let csites = window_sites(dim, cell_level);
    let free = csites.len() - wsites.len();
    let cells = (a as usize)
        .checked_pow(free as u32)
        .filter(|c| *c <= MAX_GRID)
        .ok_or_else(|| Error::InvalidArgument("spatial grid is too fine for this window".into()))?;
    let per_axis = (2.0 * radius / delta).floor() as usize + 1;
    let values_per_cell = per_axis
        .checked_pow(h.value_dim as u32)
        .filter(|v| v.saturating_mul(cells) <= MAX_GRID)
        .ok_or_else(|| Error::InvalidArgument("value grid is too fine".into()))?;
    let grid_value = |idx: usize| -> Vec<f64> {
        let mut i = idx;
        (0..h.value_dim)
            .map(|_| {
                let c = i % per_axis;
                i /= per_axis;
                -radius + c as f64 * delta
            })
            .collect()
    };
    let grid: Vec<Vec<f64>> = (0..values_per_cell).map(grid_value).collect();

    h.prepare_orbit(budget);
    let key_sites = window_sites(dim, near_level);
    let mut times = Vec::new();
    for r in 0..=budget {
        visit_l1_sphere(dim, r, &mut |p| {
            times.push(p.to_vec());
            true
        });
    }
    let hh: &SequentialCocycle = h;
    let points: Result<Vec<(Vec<u32>, Vec<f64>)>> = times
        .par_iter()
        .map(|n| {
            let key: Vec<u32> = key_sites
                .iter()
                .map(|m| {
                    let s: Vec<i64> = m.iter().zip(n).map(|(a, b)| a + b).collect();
                    hh.point.symbol(&s)
                })
                .collect();
            Ok((key, hh.orbit_value(n)?))
        })
        .collect();
    let mut nearest: HashMap<Vec<u32>, Vec<f64>> = HashMap::new();
    for (key, v) in points? {
        let e = nearest.entry(key).or_insert_with(|| vec![f64::INFINITY; grid.len()]);
        for (slot, z) in e.iter_mut().zip(&grid) {
            *slot = slot.min(sup_dist(&v, z));
        }
    }

    let mut rows = Vec::with_capacity(cells * values_per_cell);
    let mut covered = 0;
    for c in 0..cells {
        let mut symbols = window.symbols.clone();
        let mut i = c;
        for _ in 0..free {
            symbols.push((i % a as usize) as u32);
            i /= a as usize;
        }
        let key = &symbols[..key_sites.len()];
        let best = nearest.get(key);
        let cell: String = symbols.iter().map(|s| s.to_string()).collect();
        for (j, z) in grid.iter().enumerate() {
            let d = best.map(|b| b[j]);
            if d.is_some_and(|d| d <= delta) {
                covered += 1;
            }
            rows.push(CoverageRow {
                cell: cell.clone(),
                value: z.clone(),
                nearest: d,
            });
        }
    }
    let total = cells * values_per_cell;
    Ok(CoverageReport {
        budget,
        delta,
        radius,
        spatial_level: near_level,
        cells,
        values_per_cell,
        covered,
        fraction: covered as f64 / total as f64,
        rows,
    })
}

/// Witnesses for `s`, `t` and their composition `s + t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupWitness {
    pub first: Vec<i64>,
    pub second: Vec<i64>,
    pub combined: Vec<i64>,
    pub residual: f64,
}

/// Finds `n` realizing `s` within `ε/2` in `U`, then `N` realizing `t` within
/// `ε/2` inside `U ∩ T_n^{-1} U ∩ [‖F(n,·) - s‖ < ε/2]`, and checks that
/// `n + N` realizes `s + t` within `ε`.
pub fn compose_witnesses(
    h: &mut SequentialCocycle,
    level: u32,
    s: &[f64],
    t: &[f64],
    eps: f64,
    budget: u64,
) -> Result<SemigroupWitness> {
    h.prepare_orbit(2 * budget);
    let dim = h.space.dim;
    let hh: &SequentialCocycle = h;
    let mut times = Vec::new();
    for r in 0..=budget {
        times.extend(l1_sphere(dim, r));
    }
    let first = times
        .iter()
        .find(|n| {
            hh.orbit_in(n.coords(), level) && hh.orbit_value(n.coords()).is_ok_and(|v| sup_dist(&v, s) < eps / 2.0)
        })
        .ok_or_else(|| Error::SearchBudget("no witness for the first value".into()))?;
    let fv = first.coords();
    for big in &times {
        let nv = big.coords();
        let both: Vec<i64> = fv.iter().zip(nv).map(|(a, b)| a + b).collect();
        if !hh.orbit_in(nv, level) || !hh.orbit_in(&both, level) {
            continue;
        }
        let at_big = hh.orbit_value(nv)?;
        let at_both = hh.orbit_value(&both)?;
        let moved: Vec<f64> = at_both.iter().zip(&at_big).map(|(a, b)| a - b).collect();
        if sup_dist(&moved, s) < eps / 2.0 && sup_dist(&at_big, t) < eps / 2.0 {
            let target: Vec<f64> = s.iter().zip(t).map(|(a, b)| a + b).collect();
            let residual = sup_dist(&at_both, &target);
            if !(residual < eps) {
                return Err(Error::Verification(format!(
                    "composed witness misses s+t by {residual}"
                )));
            }
            return Ok(SemigroupWitness {
                first: fv.to_vec(),
                second: nv.to_vec(),
                combined: both,
                residual,
            });
        }
    }
    Err(Error::SearchBudget("no witness for the second value".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space1() -> ShiftSpace {
        ShiftSpace::new(2, 1, 0.5).unwrap()
    }

    #[test]
    fn word_metric_examples() {
        let a = LatticeVector(vec![0, 0]);
        let b = LatticeVector(vec![2, -1]);
        assert_eq!(word_metric(&a, &a), 0);
        assert_eq!(word_metric(&a, &b), 3);
    }

    #[test]
    fn sphere_sizes() {
        assert_eq!(l1_sphere(1, 0).len(), 1);
        assert_eq!(l1_sphere(1, 3).len(), 2);
        assert_eq!(l1_sphere(2, 2).len(), 8);
        assert_eq!(l1_sphere(3, 1).len(), 6);
        assert_eq!(window_sites(2, 3).len(), 1 + 4 + 8);
    }

    #[test]
    fn every_short_word_occurs() {
        let x0 = TransitivePoint::new(2, 1).unwrap();
        let seq: Vec<u32> = (0..2000).map(|i| x0.symbol(&[i])).collect();
        for len in 1..=5u32 {
            for w in 0..(1u32 << len) {
                let word: Vec<u32> = (0..len).map(|i| (w >> i) & 1).collect();
                assert!(seq.windows(len as usize).any(|s| s == word.as_slice()), "{word:?}");
                let at = x0.locate_pattern(len as u64, &word).unwrap();
                for (i, &s) in word.iter().enumerate() {
                    assert_eq!(x0.symbol(&[at[0] + i as i64]), s);
                }
            }
        }
    }

    #[test]
    fn two_dim_patterns_occur() {
        let x0 = TransitivePoint::new(2, 2).unwrap();
        for w in 0..16u32 {
            let pat: Vec<u32> = (0..4).map(|i| (w >> i) & 1).collect();
            let at = x0.locate_pattern(2, &pat).unwrap();
            for (i, &s) in pat.iter().enumerate() {
                let site = [at[0] + (i % 2) as i64, at[1] + (i / 2) as i64];
                assert_eq!(x0.symbol(&site), s);
            }
        }
    }

    #[test]
    fn overlap_level_matches_brute_force() {
        let x0 = TransitivePoint::new(2, 1).unwrap();
        for v in -30i64..=30 {
            if v == 0 {
                continue;
            }
            let lvl = overlap_level(&x0, &[v], 1000).unwrap();
            let conflict = |e: i64| (-(e - 1)..e).any(|m| (m + v).abs() < e && x0.symbol(&[m]) != x0.symbol(&[m + v]));
            assert!(conflict(lvl as i64));
            assert!(!conflict(lvl as i64 - 1));
        }
    }

    #[test]
    fn disjointness_level_is_max_overlap_level() {
        let x0 = TransitivePoint::new(2, 1).unwrap();
        for spread in [1u64, 5, 17, 40] {
            let want = (1..=spread as i64)
                .flat_map(|v| [v, -v])
                .map(|v| overlap_level(&x0, &[v], 1000).unwrap())
                .max()
                .unwrap();
            assert_eq!(disjointness_level(&x0, 1, spread).unwrap(), want);
        }
        let x2 = TransitivePoint::new(2, 2).unwrap();
        let lvl = disjointness_level(&x2, 2, 4).unwrap();
        for v in (1..=4).flat_map(|r| l1_sphere(2, r)) {
            assert!(conflicts_at(&x2, v.coords(), lvl));
        }
    }

    #[test]
    fn doubling_gap_by_theta() {
        assert_eq!(space1().doubling_gap(), 1);
        assert_eq!(ShiftSpace::new(2, 1, 0.9).unwrap().doubling_gap(), 6);
        assert_eq!(ShiftSpace::new(2, 1, 0.25).unwrap().doubling_gap(), 0);
    }

    #[test]
    fn first_extension_hits_value_exactly() {
        let mut f = SequentialCocycle::new(space1(), 1).unwrap();
        let level = space1().level_for_radius(0.25);
        let (term, n) = extend_with_bump(&mut f, level, &[1.0], 1.0, 10_000).unwrap();
        assert!(term.cocycle_norm() < 1.0 / 3.0);
        let x0 = f.point().clone();
        let direct = term.eval(n.coords(), &x0, &x0);
        assert!((direct[0] - 1.0).abs() < 1e-12);
        assert!(f.orbit_in(n.coords(), level));
        f.push(term).unwrap();
        f.prepare_orbit(n.norm(NormKind::L1));
        let v = f.orbit_value(n.coords()).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_value_term() {
        let mut f = SequentialCocycle::new(space1(), 1).unwrap();
        let (term, n) = extend_with_bump(&mut f, 2, &[0.0], 0.5, 10_000).unwrap();
        assert!(f.orbit_in(n.coords(), 2));
        assert_eq!(term.cocycle_norm(), 0.0);
    }

    #[test]
    fn budget_too_small() {
        let mut f = SequentialCocycle::new(space1(), 1).unwrap();
        let err = extend_with_bump(&mut f, 2, &[1.0], 0.01, 50).unwrap_err();
        assert!(matches!(err, Error::SearchBudget(_)));
    }

    fn small_term() -> (SequentialCocycle, BumpCoboundary) {
        let mut f = SequentialCocycle::new(space1(), 1).unwrap();
        let (term, _) = extend_with_bump(&mut f, 2, &[1.0], 0.5, 10_000).unwrap();
        (f, term)
    }

    #[test]
    fn weights_and_bump() {
        let (f, term) = small_term();
        let n = term.shift().clone();
        assert_eq!(term.weight(n.coords()), 1.0);
        assert_eq!(term.weight(&[0]), 0.0);
        for (k, w) in term.weight_table() {
            for g in [-1i64, 1] {
                let kg = [k.0[0] + g];
                assert!((w - term.weight(&kg)).abs() <= 1.0 / n.norm(NormKind::L1) as f64 + 1e-15);
            }
        }
        let x0 = f.point();
        assert_eq!(term.bump(x0, x0), 1.0);
        assert!(term.minimal_level() <= term.outer_level());
        assert!((term.radius() - 0.5f64.powi(term.level() as i32)).abs() < 1e-300);
    }

    #[test]
    fn orbit_transfer_matches_direct_sum() {
        let (f, term) = small_term();
        let x0 = f.point();
        let mut t = term.clone();
        t.extend_returns(x0, 40);
        for n in -40i64..=40 {
            let fast = t.orbit_transfer(&[n]).unwrap();
            let slow = term.transfer_at(&Translated::new(x0, &[n]), x0);
            assert!((fast[0] - slow[0]).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn coverage_trivial_cases() {
        let mut f = SequentialCocycle::new(space1(), 1).unwrap();
        let w = WindowPattern::around(f.point(), 1);
        let r = verify_transitive_orbit(&mut f, &w, 0.5, 1.0, 10).unwrap();
        assert_eq!(r.fraction, 1.0);
        let r = verify_transitive_orbit(&mut f, &w, 1.0, 0.25, 200).unwrap();
        for row in &r.rows {
            if row.value[0].abs() > 0.25 {
                assert!(row.nearest.map_or(true, |d| d > 0.25));
            }
        }
    }

    #[test]
    fn rejects_bad_targets() {
        let t = |level, eta| TopoTarget {
            level,
            value: vec![1.0],
            eta,
        };
        assert!(build_sequential(space1(), 1, &[t(2, 0.5), t(2, 0.5)], 100).is_err());
        assert!(build_sequential(space1(), 1, &[t(3, 0.5), t(2, 0.25)], 100).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn word_metric_left_invariant(m in prop::collection::vec(-50i64..50, 2),
                                      k in prop::collection::vec(-50i64..50, 2),
                                      l in prop::collection::vec(-50i64..50, 2)) {
            let (m, k, l) = (LatticeVector(m), LatticeVector(k), LatticeVector(l));
            prop_assert_eq!(word_metric(&(m.clone() + k.clone()), &(m + l.clone())), word_metric(&k, &l));
            prop_assert_eq!(word_metric(&k, &l), (l - k).norm(NormKind::L1));
        }

        #[test]
        fn metric_is_ultrametric(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000) {
            let sp = ShiftSpace::new(2, 2, 0.5).unwrap();
            let pts = [ShiftPoint::uniform(2, 2, s1), ShiftPoint::uniform(2, 2, s2), ShiftPoint::uniform(2, 2, s3)];
            let d = |i: usize, j: usize| sp.distance(&pts[i], &pts[j], 12);
            prop_assert_eq!(d(0, 1), d(1, 0));
            prop_assert!(d(0, 2) <= d(0, 1).max(d(1, 2)));
            prop_assert!(d(0, 0) <= sp.radius(12));
        }

        #[test]
        fn term_is_a_bounded_cocycle(seed in 0u64..500, n in -12i64..12, k in -12i64..12) {
            let (f, term) = small_term();
            let x0 = f.point();
            let x = ShiftPoint::uniform(2, 1, seed);
            let lhs = term.eval(&[n + k], &x, x0)[0];
            let rhs = term.eval(&[k], &x, x0)[0] + term.eval(&[n], &Translated::new(&x, &[k]), x0)[0];
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let bound = term.cocycle_norm() * (n.unsigned_abs() as f64);
            prop_assert!(term.eval(&[n], &x, x0)[0].abs() <= bound + 1e-12);
            // points near x0 exercise the bumps
            let y = Translated::new(x0, &[k]);
            let g = term.eval(&[1], &y, x0)[0];
            prop_assert!(g.abs() <= term.cocycle_norm() + 1e-12);
        }
    }
}
