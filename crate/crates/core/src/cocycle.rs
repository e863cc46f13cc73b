//! Value groups, step transfer functions and the cocycles they generate.
//!
//! Group elements are formal integer combinations of a generating set `S`,
//! stored over one representative of each pair `{s, −s}`. All arithmetic on
//! cocycle values is integer arithmetic on these coefficient vectors; the
//! float embedding in `R^D` is used only for distances.

use std::fmt;
use std::fmt::Write as _;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeVector, LevelBox};
use crate::measure_space::{
    parse_rational, rational_to_string, split_tuples, CylinderSet, Odometer, OdometerPoint, Rational,
};
use crate::towers::RokhlinTower;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    Lattice,
    Dense,
    Mixed,
}

impl std::str::FromStr for GroupKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lattice" => Ok(GroupKind::Lattice),
            "dense" => Ok(GroupKind::Dense),
            "mixed" => Ok(GroupKind::Mixed),
            other => Err(Error::Parse(format!("unknown group kind `{other}`"))),
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupKind::Lattice => "lattice",
            GroupKind::Dense => "dense",
            GroupKind::Mixed => "mixed",
        })
    }
}

/// A closed subgroup of `R^D` presented by a finite symmetric generating set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueGroup {
    dim: usize,
    kind: GroupKind,
    /// One representative per pair `{s, −s}`.
    reps: Vec<Vec<f64>>,
    reps_exact: Option<Vec<Vec<Rational>>>,
}

impl ValueGroup {
    /// Builds a group from generators given with exact rational coordinates.
    /// Missing negatives are added.
    pub fn from_rationals(generators: Vec<Vec<Rational>>, kind: GroupKind) -> Result<Self> {
        let dim = Self::check_dims(generators.iter().map(|g| g.len()))?;
        let mut reps: Vec<Vec<Rational>> = Vec::new();
        for g in generators {
            if g.iter().all(|c| c.is_zero()) {
                return Err(Error::InvalidArgument("0 may not be a generator".into()));
            }
            let neg: Vec<Rational> = g.iter().map(|c| -c).collect();
            if !reps.iter().any(|r| *r == g || *r == neg) {
                reps.push(g);
            }
        }
        if kind == GroupKind::Lattice && rational_rank(&reps) != dim {
            return Err(Error::InvalidArgument(format!(
                "lattice generators must span a rank-{dim} lattice"
            )));
        }
        let floats = reps
            .iter()
            .map(|r| r.iter().map(|c| *c.numer() as f64 / *c.denom() as f64).collect())
            .collect();
        Ok(ValueGroup {
            dim,
            kind,
            reps: floats,
            reps_exact: Some(reps),
        })
    }

    /// Builds a group from float generators. Lattice kinds need exact input.
    pub fn from_floats(generators: Vec<Vec<f64>>, kind: GroupKind) -> Result<Self> {
        if kind == GroupKind::Lattice {
            return Err(Error::InvalidArgument("lattice groups need exact generators".into()));
        }
        let dim = Self::check_dims(generators.iter().map(|g| g.len()))?;
        let mut reps: Vec<Vec<f64>> = Vec::new();
        for g in generators {
            if g.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument("generator coordinates must be finite".into()));
            }
            if g.iter().all(|&c| c == 0.0) {
                return Err(Error::InvalidArgument("0 may not be a generator".into()));
            }
            let same = |a: &[f64], b: &[f64], sign: f64| a.iter().zip(b).all(|(x, y)| (x - sign * y).abs() <= 1e-12);
            if !reps.iter().any(|r| same(r, &g, 1.0) || same(r, &g, -1.0)) {
                reps.push(g);
            }
        }
        Ok(ValueGroup {
            dim,
            kind,
            reps,
            reps_exact: None,
        })
    }

    fn check_dims(lens: impl Iterator<Item = usize>) -> Result<usize> {
        let lens: Vec<usize> = lens.collect();
        let Some(&dim) = lens.first() else {
            return Err(Error::InvalidArgument("generating set is empty".into()));
        };
        if dim == 0 {
            return Err(Error::InvalidArgument("value dimension must be at least 1".into()));
        }
        if let Some(&bad) = lens.iter().find(|&&l| l != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad,
            });
        }
        Ok(dim)
    }

    /// `Z^D` with `S = {±e_1, …, ±e_D}`.
    pub fn signed_basis(dim: usize) -> Self {
        let gens = (0..dim)
            .map(|i| (0..dim).map(|j| Rational::from_integer((i == j) as i128)).collect())
            .collect();
        Self::from_rationals(gens, GroupKind::Lattice).expect("basis is a lattice")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// Number of generator pairs, the length of every coefficient vector.
    pub fn pairs(&self) -> usize {
        self.reps.len()
    }

    /// The full symmetric generating set, as coefficient vectors.
    pub fn generators(&self) -> Vec<GroupValue> {
        let mut out = Vec::with_capacity(2 * self.pairs());
        for i in 0..self.pairs() {
            for sign in [1i64, -1] {
                let mut c = vec![0; self.pairs()];
                c[i] = sign;
                out.push(self.value(c));
            }
        }
        out
    }

    pub fn generator(&self, pair: usize, sign: i64) -> GroupValue {
        let mut c = vec![0; self.pairs()];
        c[pair] = sign.signum();
        self.value(c)
    }

    pub fn zero(&self) -> GroupValue {
        self.value(vec![0; self.pairs()])
    }

    pub fn value(&self, coeffs: Vec<i64>) -> GroupValue {
        assert_eq!(coeffs.len(), self.pairs(), "coefficient vector length");
        let embedding = self.embed(&coeffs);
        GroupValue { coeffs, embedding }
    }

    pub fn embed(&self, coeffs: &[i64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (c, r) in coeffs.iter().zip(&self.reps) {
            if *c != 0 {
                for (o, x) in out.iter_mut().zip(r) {
                    *o += *c as f64 * x;
                }
            }
        }
        out
    }

    pub fn embed_exact(&self, coeffs: &[i64]) -> Option<Vec<Rational>> {
        let reps = self.reps_exact.as_ref()?;
        let mut out = vec![Rational::zero(); self.dim];
        for (c, r) in coeffs.iter().zip(reps) {
            if *c != 0 {
                for (o, x) in out.iter_mut().zip(r) {
                    *o += x * Rational::from_integer(*c as i128);
                }
            }
        }
        Some(out)
    }

    /// Equality in the group: exact when rational coordinates are known,
    /// formal otherwise.
    pub fn same_element(&self, a: &[i64], b: &[i64]) -> bool {
        if a == b {
            return true;
        }
        match (self.embed_exact(a), self.embed_exact(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    /// Whether the coefficient vector represents an element of `S ∪ {0}`.
    pub fn in_s_or_zero(&self, coeffs: &[i64]) -> bool {
        let mut nonzero = coeffs.iter().filter(|&&c| c != 0);
        match (nonzero.next(), nonzero.next()) {
            (None, _) => return true,
            (Some(&c), None) if c.abs() == 1 => return true,
            _ => {}
        }
        if self.reps_exact.is_none() {
            return false;
        }
        let zero = vec![0; self.pairs()];
        if self.same_element(coeffs, &zero) {
            return true;
        }
        self.generators().iter().any(|g| self.same_element(coeffs, &g.coeffs))
    }

    /// Sup-norm distance between two elements in `R^D`.
    pub fn distance(&self, a: &[i64], b: &[i64]) -> f64 {
        let diff: Vec<i64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.embed(&diff).iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn norm(&self, a: &[i64]) -> f64 {
        self.embed(a).iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// `kind=lattice; S=[(1,0),(0,1)]`, one representative per pair.
    pub fn to_text(&self) -> String {
        let vecs: Vec<String> = match &self.reps_exact {
            Some(reps) => reps
                .iter()
                .map(|r| format!("({})", r.iter().map(rational_to_string).collect::<Vec<_>>().join(",")))
                .collect(),
            None => self
                .reps
                .iter()
                .map(|r| format!("({})", r.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")))
                .collect(),
        };
        format!("kind={}; S=[{}]", self.kind, vecs.join(","))
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad group text `{text}`"));
        let (kind_part, s_part) = text.trim().split_once(';').ok_or_else(bad)?;
        let kind: GroupKind = kind_part.trim().strip_prefix("kind=").ok_or_else(bad)?.parse()?;
        let list = s_part
            .trim()
            .strip_prefix("S=")
            .ok_or_else(bad)?
            .trim()
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(bad)?;
        let mut tuples: Vec<Vec<String>> = Vec::new();
        for t in split_tuples(list).ok_or_else(bad)? {
            tuples.push(t.split(',').map(|x| x.trim().to_string()).collect());
        }
        let exact: Option<Vec<Vec<Rational>>> = tuples
            .iter()
            .map(|t| t.iter().map(|x| parse_rational(x).ok()).collect::<Option<Vec<_>>>())
            .collect();
        match exact {
            Some(gens) => Self::from_rationals(gens, kind),
            None => {
                let floats = tuples
                    .iter()
                    .map(|t| {
                        t.iter()
                            .map(|x| parse_float_expr(x).ok_or_else(bad))
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::from_floats(floats, kind)
            }
        }
    }
}

/// Parses a float, `sqrt(q)` or `pi`, optionally negated.
pub(crate) fn parse_float_expr(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix('-') {
        return parse_float_expr(rest).map(|x| -x);
    }
    if let Some(inner) = s.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
        let q = parse_rational(inner).ok()?;
        return Some((*q.numer() as f64 / *q.denom() as f64).sqrt());
    }
    if s == "pi" {
        return Some(std::f64::consts::PI);
    }
    s.parse().ok()
}

fn rational_rank(rows: &[Vec<Rational>]) -> usize {
    let mut m: Vec<Vec<Rational>> = rows.to_vec();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        for r in 0..m.len() {
            if r != rank && !m[r][col].is_zero() {
                let f = m[r][col] / m[rank][col];
                for c in col..cols {
                    let sub = m[rank][c] * f;
                    m[r][c] -= sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// An element of the value group: integer coefficients over the pair
/// representatives plus their embedding in `R^D`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupValue {
    pub coeffs: Vec<i64>,
    pub embedding: Vec<f64>,
}

impl PartialEq for GroupValue {
    fn eq(&self, other: &Self) -> bool {
        self.coeffs == other.coeffs
    }
}

impl Eq for GroupValue {}

impl GroupValue {
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }
}

impl fmt::Display for GroupValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

pub(crate) fn add_into(acc: &mut [i64], v: &[i64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

pub(crate) fn sub_into(acc: &mut [i64], v: &[i64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a -= x;
    }
}

/// A transfer function constant on the depth-`depth` cells, tied to the
/// tower it was built on. Values are coefficient vectors stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    tower: RokhlinTower,
    depth: u32,
    pairs: usize,
    table: Vec<i64>,
}

impl StepFunction {
    pub fn zeros(tower: RokhlinTower, pairs: usize) -> Self {
        let depth = tower.depth();
        let cells = tower.space().cell_count(depth) as usize;
        StepFunction {
            tower,
            depth,
            pairs,
            table: vec![0; cells * pairs],
        }
    }

    /// A step function over `tower` whose value on the level-`k` cell is `f(k)`.
    pub fn from_levels(tower: RokhlinTower, pairs: usize, mut f: impl FnMut(&LatticeVector) -> Vec<i64>) -> Self {
        let mut out = StepFunction::zeros(tower, pairs);
        for cell in 0..out.cell_count() {
            if let Some(k) = out.tower.level_of_cell(cell, out.depth) {
                let v = f(&k);
                out.set(cell, &v);
            }
        }
        out
    }

    pub fn tower(&self) -> &RokhlinTower {
        &self.tower
    }

    pub fn space(&self) -> Odometer {
        self.tower.space()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn cell_count(&self) -> u64 {
        (self.table.len() / self.pairs.max(1)) as u64
    }

    /// Value on a cell of the function's own depth.
    pub fn at(&self, cell: u64) -> &[i64] {
        let i = cell as usize * self.pairs;
        &self.table[i..i + self.pairs]
    }

    /// Value on any cell at least as fine as the function's depth.
    pub fn at_depth(&self, cell: u64, depth: u32) -> &[i64] {
        self.at(self.space().coarsen_cell(cell, depth, self.depth))
    }

    pub fn set(&mut self, cell: u64, value: &[i64]) {
        let i = cell as usize * self.pairs;
        self.table[i..i + self.pairs].copy_from_slice(value);
    }

    pub fn value_at(&self, group: &ValueGroup, x: &OdometerPoint) -> GroupValue {
        group.value(self.at(x.cell(self.depth)).to_vec())
    }

    /// The same function on a finer tower built over the same space.
    pub fn lift(&self, tower: RokhlinTower) -> StepFunction {
        assert!(tower.depth() >= self.depth, "lift needs a finer tower");
        let mut out = StepFunction::zeros(tower, self.pairs);
        let d = out.depth;
        for cell in 0..out.cell_count() {
            let v = self.at_depth(cell, d).to_vec();
            out.set(cell, &v);
        }
        out
    }

    /// `∇F(e_axis, cell) = F(cell) − F(T_{e_axis} cell)` into `out`.
    pub(crate) fn generator_step(&self, axis: usize, cell: u64, out: &mut [i64]) {
        let next = self.space().shift_cell(cell, axis, 1, self.depth);
        out.copy_from_slice(self.at(cell));
        sub_into(out, self.at(next));
    }

    pub fn sup_norm(&self, group: &ValueGroup) -> f64 {
        (0..self.cell_count())
            .map(|c| group.norm(self.at(c)))
            .fold(0.0, f64::max)
    }

    /// First cell and axis where `∇F(e_i,·) ∉ S ∪ {0}`.
    pub fn incremental_violation(&self, group: &ValueGroup) -> Option<IncrementWitness> {
        let mut step = vec![0; self.pairs];
        for cell in 0..self.cell_count() {
            for axis in 0..self.space().dim {
                self.generator_step(axis, cell, &mut step);
                if !group.in_s_or_zero(&step) {
                    return Some(IncrementWitness {
                        cell,
                        depth: self.depth,
                        axis,
                        value: step.clone(),
                    });
                }
            }
        }
        None
    }

    pub fn is_incremental(&self, group: &ValueGroup) -> bool {
        self.incremental_violation(group).is_none()
    }

    /// Whether the function vanishes on every boundary level of its tower.
    pub fn is_internal(&self) -> bool {
        self.internal_violation().is_none()
    }

    pub fn internal_violation(&self) -> Option<u64> {
        (0..self.cell_count()).find(|&cell| {
            self.at(cell).iter().any(|&c| c != 0)
                && self
                    .tower
                    .level_of_cell(cell, self.depth)
                    .map_or(true, |k| self.tower.is_boundary_level(&k))
        })
    }
}

/// Where incrementality fails.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementWitness {
    pub cell: u64,
    pub depth: u32,
    pub axis: usize,
    pub value: Vec<i64>,
}

/// A `Z`-linear map `Z^d → G`, given by the images of the basis vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Homomorphism {
    pub images: Vec<Vec<i64>>,
}

impl Homomorphism {
    pub fn apply(&self, n: &[i64]) -> Vec<i64> {
        let pairs = self.images.first().map_or(0, |v| v.len());
        let mut out = vec![0; pairs];
        for (img, &k) in self.images.iter().zip(n) {
            for (o, c) in out.iter_mut().zip(img) {
                *o += k * c;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Cocycle {
    Coboundary(StepFunction),
    Homomorphism(Homomorphism),
    Sum(Vec<Cocycle>),
}

/// Result of evaluating a coboundary on a cylinder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoboundaryValue {
    Constant(GroupValue),
    /// Not constant on the cylinder: values on its subcells at the function's depth.
    PerCell(Vec<(CylinderSet, GroupValue)>),
}

impl Cocycle {
    /// Finest depth at which every constituent is constant.
    pub fn resolution(&self) -> u32 {
        match self {
            Cocycle::Coboundary(f) => f.depth(),
            Cocycle::Homomorphism(_) => 0,
            Cocycle::Sum(parts) => parts.iter().map(|p| p.resolution()).max().unwrap_or(0),
        }
    }

    /// `F(n, x)` for `x` in the depth-`depth` cell, `depth ≥ resolution`.
    pub fn eval_cell(&self, space: &Odometer, n: &[i64], cell: u64, depth: u32, out: &mut [i64]) {
        match self {
            Cocycle::Coboundary(f) => {
                let moved = space.translate_cell(cell, n, depth);
                add_into(out, f.at_depth(cell, depth));
                sub_into(out, f.at_depth(moved, depth));
            }
            Cocycle::Homomorphism(h) => add_into(out, &h.apply(n)),
            Cocycle::Sum(parts) => {
                for p in parts {
                    p.eval_cell(space, n, cell, depth, out);
                }
            }
        }
    }

    /// `F(e_axis, x)` for `x` in the depth-`depth` cell.
    pub fn generator_value(&self, space: &Odometer, axis: usize, cell: u64, depth: u32, out: &mut [i64]) {
        match self {
            Cocycle::Coboundary(f) => {
                let moved = space.shift_cell(cell, axis, 1, depth);
                add_into(out, f.at_depth(cell, depth));
                sub_into(out, f.at_depth(moved, depth));
            }
            Cocycle::Homomorphism(h) => add_into(out, &h.images[axis]),
            Cocycle::Sum(parts) => {
                for p in parts {
                    p.generator_value(space, axis, cell, depth, out);
                }
            }
        }
    }

    /// `F(n, x)` assembled from generator values along the path
    /// `(axis, ±1)*` from `0` to `n`.
    pub fn eval_along(&self, space: &Odometer, path: &[(usize, i64)], cell: u64, depth: u32, pairs: usize) -> Vec<i64> {
        let mut out = vec![0; pairs];
        let mut step = vec![0; pairs];
        let mut cur = cell;
        for &(axis, sign) in path {
            if sign > 0 {
                step.iter_mut().for_each(|s| *s = 0);
                self.generator_value(space, axis, cur, depth, &mut step);
                add_into(&mut out, &step);
                cur = space.shift_cell(cur, axis, 1, depth);
            } else {
                cur = space.shift_cell(cur, axis, -1, depth);
                step.iter_mut().for_each(|s| *s = 0);
                self.generator_value(space, axis, cur, depth, &mut step);
                sub_into(&mut out, &step);
            }
        }
        out
    }

    /// `cocycle_eval` on a cell.
    pub fn eval(&self, group: &ValueGroup, space: &Odometer, n: &LatticeVector, cell: u64, depth: u32) -> GroupValue {
        assert!(depth >= self.resolution(), "cell too coarse for this cocycle");
        let path = n.generator_path();
        group.value(self.eval_along(space, &path, cell, depth, group.pairs()))
    }

    /// `cocycle_eval` at a point.
    pub fn eval_point(&self, group: &ValueGroup, n: &LatticeVector, x: &OdometerPoint) -> GroupValue {
        let depth = self.resolution();
        let space = self.space_hint().unwrap_or_else(|| Odometer { dim: n.dim(), base: 2 });
        self.eval(group, &space, n, x.cell(depth), depth)
    }

    fn space_hint(&self) -> Option<Odometer> {
        match self {
            Cocycle::Coboundary(f) => Some(f.space()),
            Cocycle::Homomorphism(_) => None,
            Cocycle::Sum(parts) => parts.iter().find_map(|p| p.space_hint()),
        }
    }

    /// `T^{(F)}_n(x, z) = (T_n x, z + F(n, x))`.
    pub fn skew_apply(
        &self,
        group: &ValueGroup,
        n: &LatticeVector,
        x: &OdometerPoint,
        z: &GroupValue,
    ) -> (OdometerPoint, GroupValue) {
        let v = self.eval_point(group, n, x);
        let mut c = z.coeffs.clone();
        add_into(&mut c, &v.coeffs);
        (x.apply(n), group.value(c))
    }
}

/// `coboundary_eval`: `∇F(n,·) = F(·) − F(T_n ·)` on a cylinder.
pub fn coboundary_eval(group: &ValueGroup, f: &StepFunction, n: &LatticeVector, a: &CylinderSet) -> CoboundaryValue {
    let space = f.space();
    let depth = a.depth.max(f.depth());
    let cells = a.to_set(&space).refine_to(depth);
    let values: Vec<(u64, Vec<i64>)> = cells
        .cells()
        .iter()
        .map(|&c| {
            let mut v = vec![0; f.pairs()];
            Cocycle::Coboundary(f.clone()).eval_cell(&space, n.coords(), c, depth, &mut v);
            (c, v)
        })
        .collect();
    if values.windows(2).all(|w| w[0].1 == w[1].1) {
        return CoboundaryValue::Constant(group.value(values[0].1.clone()));
    }
    CoboundaryValue::PerCell(
        values
            .into_iter()
            .map(|(c, v)| {
                (
                    CylinderSet::from_residues(&space, &space.decode(c, depth), depth),
                    group.value(v),
                )
            })
            .collect(),
    )
}

fn write_coeffs(v: &[i64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_coeffs(s: &str, pairs: usize) -> Result<Vec<i64>> {
    let v: Vec<i64> = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<i64>()
                .map_err(|_| Error::Parse(format!("bad coefficient list `{s}`")))
        })
        .collect::<Result<_>>()?;
    if v.len() != pairs {
        return Err(Error::DimensionMismatch {
            expected: pairs,
            got: v.len(),
        });
    }
    Ok(v)
}

fn write_cocycle_body(c: &Cocycle, out: &mut String) {
    match c {
        Cocycle::Coboundary(f) => {
            let b = f.tower().level_box().expect("serialized towers are box shaped");
            writeln!(
                out,
                "coboundary depth={} tower_depth={} lo={} hi={}",
                f.depth(),
                f.tower().depth(),
                write_coeffs(&b.lo),
                write_coeffs(&b.hi)
            )
            .unwrap();
            for cell in 0..f.cell_count() {
                let v = f.at(cell);
                if v.iter().any(|&x| x != 0) {
                    writeln!(out, "{cell} {}", write_coeffs(v)).unwrap();
                }
            }
            writeln!(out, "end").unwrap();
        }
        Cocycle::Homomorphism(h) => {
            writeln!(out, "homomorphism").unwrap();
            for img in &h.images {
                writeln!(out, "{}", write_coeffs(img)).unwrap();
            }
            writeln!(out, "end").unwrap();
        }
        Cocycle::Sum(parts) => {
            writeln!(out, "sum {}", parts.len()).unwrap();
            for p in parts {
                write_cocycle_body(p, out);
            }
        }
    }
}

/// Line-based text form:
///
/// ```text
/// cocycle dim=<d> base=<b>
/// group kind=<kind>; S=[...]
/// coboundary depth=<q> tower_depth=<p> lo=<..> hi=<..>
/// <cell> <coeffs>        (nonzero cells only)
/// end
/// homomorphism
/// <coeffs of F(e_1)>
/// ...
/// end
/// sum <count>            (followed by <count> bodies)
/// ```
pub fn cocycle_to_text(space: &Odometer, group: &ValueGroup, c: &Cocycle) -> String {
    let mut out = String::new();
    writeln!(out, "cocycle dim={} base={}", space.dim, space.base).unwrap();
    writeln!(out, "group {}", group.to_text()).unwrap();
    write_cocycle_body(c, &mut out);
    out
}

fn field<'a>(token: &'a str, key: &str) -> Result<&'a str> {
    token
        .strip_prefix(key)
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| Error::Parse(format!("expected `{key}=` in `{token}`")))
}

fn parse_cocycle_body<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    space: &Odometer,
    group: &ValueGroup,
) -> Result<Cocycle> {
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("unexpected end of cocycle".into()))?;
    let mut tokens = header.split_whitespace();
    match tokens.next() {
        Some("coboundary") => {
            let depth: u32 = field(tokens.next().unwrap_or(""), "depth")?
                .parse()
                .map_err(|_| Error::Parse(header.into()))?;
            let tower_depth: u32 = field(tokens.next().unwrap_or(""), "tower_depth")?
                .parse()
                .map_err(|_| Error::Parse(header.into()))?;
            let lo = parse_coeffs(field(tokens.next().unwrap_or(""), "lo")?, space.dim)?;
            let hi = parse_coeffs(field(tokens.next().unwrap_or(""), "hi")?, space.dim)?;
            if depth != tower_depth || tower_depth > space.max_depth() {
                return Err(Error::Parse(format!("unsupported depths in `{header}`")));
            }
            let side = space.modulus(tower_depth) as i64;
            if lo.iter().zip(&hi).any(|(l, h)| h - l + 1 != side) {
                return Err(Error::Parse(format!("level box does not tile in `{header}`")));
            }
            let tower = RokhlinTower::from_box(*space, tower_depth, LevelBox::new(lo, hi))?;
            let mut f = StepFunction::zeros(tower, group.pairs());
            loop {
                let line = lines.next().ok_or_else(|| Error::Parse("missing `end`".into()))?;
                if line.trim() == "end" {
                    break;
                }
                let (cell, coeffs) = line
                    .trim()
                    .split_once(' ')
                    .ok_or_else(|| Error::Parse(format!("bad table line `{line}`")))?;
                let cell: u64 = cell.parse().map_err(|_| Error::Parse(format!("bad cell `{cell}`")))?;
                if cell >= f.cell_count() {
                    return Err(Error::Parse(format!("cell {cell} out of range")));
                }
                f.set(cell, &parse_coeffs(coeffs, group.pairs())?);
            }
            Ok(Cocycle::Coboundary(f))
        }
        Some("homomorphism") => {
            let mut images = Vec::new();
            loop {
                let line = lines.next().ok_or_else(|| Error::Parse("missing `end`".into()))?;
                if line.trim() == "end" {
                    break;
                }
                images.push(parse_coeffs(line.trim(), group.pairs())?);
            }
            if images.len() != space.dim {
                return Err(Error::DimensionMismatch {
                    expected: space.dim,
                    got: images.len(),
                });
            }
            Ok(Cocycle::Homomorphism(Homomorphism { images }))
        }
        Some("sum") => {
            let count: usize = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse(header.into()))?;
            let parts = (0..count)
                .map(|_| parse_cocycle_body(lines, space, group))
                .collect::<Result<Vec<_>>>()?;
            Ok(Cocycle::Sum(parts))
        }
        _ => Err(Error::Parse(format!("unknown cocycle line `{header}`"))),
    }
}

pub fn cocycle_from_text(text: &str) -> Result<(Odometer, ValueGroup, Cocycle)> {
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty cocycle file".into()))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("cocycle") {
        return Err(Error::Parse("cocycle file must start with `cocycle`".into()));
    }
    let dim: usize = field(tokens.next().unwrap_or(""), "dim")?
        .parse()
        .map_err(|_| Error::Parse(header.into()))?;
    let base: u32 = field(tokens.next().unwrap_or(""), "base")?
        .parse()
        .map_err(|_| Error::Parse(header.into()))?;
    let space = Odometer::new(dim, base)?;
    let group_line = lines.next().ok_or_else(|| Error::Parse("missing group line".into()))?;
    let group = ValueGroup::parse_text(
        group_line
            .trim()
            .strip_prefix("group")
            .ok_or_else(|| Error::Parse("missing group line".into()))?,
    )?;
    let c = parse_cocycle_body(&mut lines, &space, &group)?;
    Ok((space, group, c))
}
