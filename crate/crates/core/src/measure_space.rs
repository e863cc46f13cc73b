//! Concrete free ergodic `Z^d` systems.
//!
//! The construction engine works on the `d`-dimensional base-`b` odometer
//! (product adding machine). A depth-`p` cylinder fixes the first `p` digits
//! of every coordinate stream; equivalently it is a residue vector in
//! `(Z / b^p)^d`, and the action of `n ∈ Z^d` on depth-`p` cylinders is
//! translation of residues modulo `b^p`. All measures are exact rationals with
//! denominator `b^{pd}`.
//!
//! Digits are least-significant first: the residue of a cylinder with digits
//! `(c_1, c_2, …, c_p)` is `c_1 + c_2 b + … + c_p b^{p-1}`.
//!
//! Text form of a set: `depth=p; cells=[(r_1,…,r_d),…]` with residues
//! `r_i ∈ [0, b^p)`, cells sorted by index.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeVector, LevelBox};

pub type Rational = num_rational::Ratio<i128>;

/// Renders `num/den` (integers render as `num/1`).
pub fn rational_to_string(q: &Rational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: i128 = n.parse().map_err(|_| Error::Parse(format!("bad rational `{s}`")))?;
    let d: i128 = d.parse().map_err(|_| Error::Parse(format!("bad rational `{s}`")))?;
    if d == 0 {
        return Err(Error::Parse(format!("zero denominator in `{s}`")));
    }
    Ok(Rational::new(n, d))
}

/// Largest number of cells a single set may enumerate.
pub const MAX_CELL_INDEX: u64 = 1 << 62;

/// The `d`-dimensional base-`b` odometer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Odometer {
    pub dim: usize,
    pub base: u32,
}

impl Odometer {
    pub fn new(dim: usize, base: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if base < 2 {
            return Err(Error::InvalidArgument("odometer base must be at least 2".into()));
        }
        Ok(Odometer { dim, base })
    }

    /// `b^p`, the number of residues per coordinate at depth `p`.
    pub fn modulus(&self, depth: u32) -> u64 {
        (self.base as u64)
            .checked_pow(depth)
            .expect("odometer depth overflows u64")
    }

    /// `b^{pd}`, the number of depth-`p` cells.
    pub fn cell_count(&self, depth: u32) -> u64 {
        let m = self.modulus(depth);
        let mut total: u64 = 1;
        for _ in 0..self.dim {
            total = total
                .checked_mul(m)
                .filter(|&t| t <= MAX_CELL_INDEX)
                .unwrap_or_else(|| panic!("depth {depth} with dim {} exceeds the cell index range", self.dim));
        }
        total
    }

    /// Largest depth whose cells still fit an index.
    pub fn max_depth(&self) -> u32 {
        let mut p = 0;
        loop {
            let m = match (self.base as u64).checked_pow(p + 1) {
                Some(m) => m as u128,
                None => return p,
            };
            if m.pow(self.dim as u32) > MAX_CELL_INDEX as u128 {
                return p;
            }
            p += 1;
        }
    }

    pub fn cell_measure(&self, depth: u32) -> Rational {
        Rational::new(1, self.cell_count(depth) as i128)
    }

    pub fn encode(&self, residues: &[u64], depth: u32) -> u64 {
        debug_assert_eq!(residues.len(), self.dim);
        let m = self.modulus(depth);
        residues.iter().rev().fold(0u64, |acc, &r| acc * m + r)
    }

    pub fn decode(&self, index: u64, depth: u32) -> Vec<u64> {
        let m = self.modulus(depth);
        let mut out = Vec::with_capacity(self.dim);
        let mut rest = index;
        for _ in 0..self.dim {
            out.push(rest % m);
            rest /= m;
        }
        out
    }

    /// The depth-`depth` cell containing `T_n x` for any `x` in cell `index`.
    pub fn translate_cell(&self, index: u64, n: &[i64], depth: u32) -> u64 {
        let m = self.modulus(depth);
        let mut stride = 1u64;
        let mut out = index;
        for &step in n {
            if step != 0 {
                let r = (index / stride) % m;
                let moved = (r as i128 + step as i128).rem_euclid(m as i128) as u64;
                out = out - r * stride + moved * stride;
            }
            stride = stride.wrapping_mul(m);
        }
        out
    }

    /// `translate_cell` by `step·e_axis`.
    pub fn shift_cell(&self, index: u64, axis: usize, step: i64, depth: u32) -> u64 {
        let m = self.modulus(depth);
        let stride = m.pow(axis as u32);
        let r = (index / stride) % m;
        let moved = (r as i128 + step as i128).rem_euclid(m as i128) as u64;
        index - r * stride + moved * stride
    }

    /// Index of the depth-`coarse` cell containing the depth-`fine` cell.
    pub fn coarsen_cell(&self, index: u64, fine: u32, coarse: u32) -> u64 {
        debug_assert!(coarse <= fine);
        if coarse == fine {
            return index;
        }
        let mf = self.modulus(fine);
        let mc = self.modulus(coarse);
        let mut rest = index;
        let mut stride = 1u64;
        let mut out = 0u64;
        for _ in 0..self.dim {
            out += (rest % mf % mc) * stride;
            rest /= mf;
            stride *= mc;
        }
        out
    }

    /// All depth-`fine` cells inside the depth-`coarse` cell, sorted.
    pub fn refine_cell(&self, index: u64, coarse: u32, fine: u32) -> Vec<u64> {
        debug_assert!(coarse <= fine);
        let m = self.modulus(coarse);
        let k = self.modulus(fine - coarse);
        let base = self.decode(index, coarse);
        let offsets = LevelBox::cube(self.dim, 0, k as i64 - 1);
        let mut out: Vec<u64> = offsets
            .points()
            .map(|t| {
                let r: Vec<u64> = base.iter().zip(t.coords()).map(|(&r, &t)| r + t as u64 * m).collect();
                self.encode(&r, fine)
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// A single cylinder: the first `depth` digits of each coordinate stream.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CylinderSet {
    pub depth: u32,
    /// `prefix[k]` holds the digits of stream `k`, least significant first.
    pub prefix: Vec<Vec<u8>>,
}

impl CylinderSet {
    pub fn whole(space: &Odometer) -> Self {
        CylinderSet {
            depth: 0,
            prefix: vec![Vec::new(); space.dim],
        }
    }

    pub fn new(space: &Odometer, prefix: Vec<Vec<u8>>) -> Result<Self> {
        if prefix.len() != space.dim {
            return Err(Error::DimensionMismatch {
                expected: space.dim,
                got: prefix.len(),
            });
        }
        let depth = prefix[0].len();
        if prefix.iter().any(|p| p.len() != depth) {
            return Err(Error::InvalidArgument("cylinder prefixes must share one depth".into()));
        }
        if prefix.iter().flatten().any(|&d| d as u32 >= space.base) {
            return Err(Error::InvalidArgument("cylinder digit out of range".into()));
        }
        Ok(CylinderSet {
            depth: depth as u32,
            prefix,
        })
    }

    pub fn from_residues(space: &Odometer, residues: &[u64], depth: u32) -> Self {
        let b = space.base as u64;
        let prefix = residues
            .iter()
            .map(|&r| {
                let mut r = r;
                (0..depth)
                    .map(|_| {
                        let d = (r % b) as u8;
                        r /= b;
                        d
                    })
                    .collect()
            })
            .collect();
        CylinderSet { depth, prefix }
    }

    pub fn residues(&self, space: &Odometer) -> Vec<u64> {
        self.prefix
            .iter()
            .map(|digits| {
                digits
                    .iter()
                    .rev()
                    .fold(0u64, |acc, &d| acc * space.base as u64 + d as u64)
            })
            .collect()
    }

    pub fn index(&self, space: &Odometer) -> u64 {
        space.encode(&self.residues(space), self.depth)
    }

    pub fn measure(&self, space: &Odometer) -> Rational {
        space.cell_measure(self.depth)
    }

    pub fn to_set(&self, space: &Odometer) -> MeasurableSet {
        MeasurableSet::from_cells(*space, self.depth, vec![self.index(space)])
    }
}

/// A finite union of cylinders, stored as a sorted list of cells at one depth.
/// Equality is equality of sets, whatever the stored depths.
#[derive(Clone, Debug)]
pub struct MeasurableSet {
    space: Odometer,
    depth: u32,
    cells: Vec<u64>,
}

impl MeasurableSet {
    pub fn empty(space: Odometer, depth: u32) -> Self {
        MeasurableSet {
            space,
            depth,
            cells: Vec::new(),
        }
    }

    pub fn whole(space: Odometer) -> Self {
        MeasurableSet {
            space,
            depth: 0,
            cells: vec![0],
        }
    }

    /// Builds a set from cell indices at `depth`; sorts and deduplicates.
    pub fn from_cells(space: Odometer, depth: u32, mut cells: Vec<u64>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        debug_assert!(cells.last().map_or(true, |&c| c < space.cell_count(depth)));
        MeasurableSet { space, depth, cells }
    }

    /// Cells given already sorted and unique.
    pub(crate) fn from_sorted_cells(space: Odometer, depth: u32, cells: Vec<u64>) -> Self {
        debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
        MeasurableSet { space, depth, cells }
    }

    pub fn from_predicate(space: Odometer, depth: u32, mut keep: impl FnMut(u64) -> bool) -> Self {
        let cells = (0..space.cell_count(depth)).filter(|&c| keep(c)).collect();
        MeasurableSet { space, depth, cells }
    }

    pub fn space(&self) -> Odometer {
        self.space
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn cells(&self) -> &[u64] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn measure(&self) -> Rational {
        Rational::new(self.cells.len() as i128, self.space.cell_count(self.depth) as i128)
    }

    pub fn contains_cell(&self, index: u64) -> bool {
        self.cells.binary_search(&index).is_ok()
    }

    /// Whether the depth-`depth` cell `index` lies inside the set (`depth`
    /// must be at least the set's depth).
    pub fn contains_fine_cell(&self, index: u64, depth: u32) -> bool {
        debug_assert!(depth >= self.depth);
        self.contains_cell(self.space.coarsen_cell(index, depth, self.depth))
    }

    pub fn refine_to(&self, depth: u32) -> MeasurableSet {
        assert!(depth >= self.depth, "cannot refine to a coarser depth");
        if depth == self.depth {
            return self.clone();
        }
        let mut cells = Vec::with_capacity(
            self.cells.len() * (self.space.cell_count(depth) / self.space.cell_count(self.depth)) as usize,
        );
        for &c in &self.cells {
            cells.extend(self.space.refine_cell(c, self.depth, depth));
        }
        cells.sort_unstable();
        MeasurableSet {
            space: self.space,
            depth,
            cells,
        }
    }

    /// Coarsest equivalent representation.
    pub fn canonical(&self) -> MeasurableSet {
        let mut cur = self.clone();
        while cur.depth > 0 {
            let coarse = cur.depth - 1;
            let per_parent = (self.space.base as u64).pow(self.space.dim as u32) as usize;
            let mut parents: BTreeMap<u64, usize> = BTreeMap::new();
            for &c in &cur.cells {
                *parents
                    .entry(self.space.coarsen_cell(c, cur.depth, coarse))
                    .or_default() += 1;
            }
            if parents.values().any(|&n| n != per_parent) {
                break;
            }
            cur = MeasurableSet {
                space: self.space,
                depth: coarse,
                cells: parents.into_keys().collect(),
            };
        }
        if cur.cells.is_empty() {
            cur.depth = 0;
        }
        cur
    }

    fn aligned(&self, other: &MeasurableSet) -> (MeasurableSet, MeasurableSet) {
        assert_eq!(self.space, other.space, "sets live on different odometers");
        let depth = self.depth.max(other.depth);
        (self.refine_to(depth), other.refine_to(depth))
    }

    pub fn union(&self, other: &MeasurableSet) -> MeasurableSet {
        let (a, b) = self.aligned(other);
        let mut cells = Vec::with_capacity(a.cells.len() + b.cells.len());
        let (mut i, mut j) = (0, 0);
        while i < a.cells.len() || j < b.cells.len() {
            let next = match (a.cells.get(i), b.cells.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            cells.push(next);
        }
        MeasurableSet::from_sorted_cells(a.space, a.depth, cells)
    }

    pub fn intersection(&self, other: &MeasurableSet) -> MeasurableSet {
        let (a, b) = self.aligned(other);
        let cells = a.cells.iter().copied().filter(|c| b.contains_cell(*c)).collect();
        MeasurableSet::from_sorted_cells(a.space, a.depth, cells)
    }

    pub fn difference(&self, other: &MeasurableSet) -> MeasurableSet {
        let (a, b) = self.aligned(other);
        let cells = a.cells.iter().copied().filter(|c| !b.contains_cell(*c)).collect();
        MeasurableSet::from_sorted_cells(a.space, a.depth, cells)
    }

    pub fn complement(&self) -> MeasurableSet {
        MeasurableSet::whole(self.space).difference(self)
    }

    pub fn is_subset(&self, other: &MeasurableSet) -> bool {
        if other.depth <= self.depth {
            self.cells.iter().all(|&c| other.contains_fine_cell(c, self.depth))
        } else {
            let (a, b) = self.aligned(other);
            a.cells.iter().all(|&c| b.contains_cell(c))
        }
    }

    pub fn is_disjoint(&self, other: &MeasurableSet) -> bool {
        let (a, b) = if self.depth >= other.depth {
            (self, other)
        } else {
            (other, self)
        };
        a.cells.iter().all(|&c| !b.contains_fine_cell(c, a.depth))
    }

    /// `T_n A`.
    pub fn translate(&self, n: &LatticeVector) -> MeasurableSet {
        assert_eq!(n.dim(), self.space.dim);
        let cells = self
            .cells
            .iter()
            .map(|&c| self.space.translate_cell(c, n.coords(), self.depth))
            .collect();
        MeasurableSet::from_cells(self.space, self.depth, cells)
    }

    /// Canonical text form `depth=p; cells=[(r_1,…),…]` of the coarsest representation.
    pub fn to_text(&self) -> String {
        let c = self.canonical();
        let cells: Vec<String> = c
            .cells
            .iter()
            .map(|&i| {
                let r: Vec<String> = self.space.decode(i, c.depth).iter().map(|x| x.to_string()).collect();
                format!("({})", r.join(","))
            })
            .collect();
        format!("depth={}; cells=[{}]", c.depth, cells.join(","))
    }

    pub fn parse_text(space: Odometer, text: &str) -> Result<MeasurableSet> {
        let bad = || Error::Parse(format!("bad set text `{text}`"));
        let (depth_part, cells_part) = text.trim().split_once(';').ok_or_else(bad)?;
        let depth: u32 = depth_part
            .trim()
            .strip_prefix("depth=")
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        if depth > space.max_depth() {
            return Err(Error::Parse(format!("depth {depth} too large")));
        }
        let list = cells_part
            .trim()
            .strip_prefix("cells=")
            .ok_or_else(bad)?
            .trim()
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(bad)?;
        let modulus = space.modulus(depth);
        let mut cells = Vec::new();
        for tuple in split_tuples(list).ok_or_else(bad)? {
            let residues: Vec<u64> = tuple
                .split(',')
                .map(|x| x.trim().parse::<u64>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if residues.len() != space.dim {
                return Err(Error::DimensionMismatch {
                    expected: space.dim,
                    got: residues.len(),
                });
            }
            if residues.iter().any(|&r| r >= modulus) {
                return Err(Error::Parse(format!("residue out of range in `{text}`")));
            }
            cells.push(space.encode(&residues, depth));
        }
        Ok(MeasurableSet::from_cells(space, depth, cells))
    }
}

impl PartialEq for MeasurableSet {
    fn eq(&self, other: &Self) -> bool {
        if self.space != other.space {
            return false;
        }
        if self.depth == other.depth {
            return self.cells == other.cells;
        }
        let (a, b) = self.aligned(other);
        a.cells == b.cells
    }
}

impl Eq for MeasurableSet {}

#[derive(Serialize, Deserialize)]
struct SetRepr {
    dim: usize,
    base: u32,
    set: String,
}

impl Serialize for MeasurableSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SetRepr {
            dim: self.space.dim,
            base: self.space.base,
            set: self.to_text(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MeasurableSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SetRepr::deserialize(deserializer)?;
        let space = Odometer::new(repr.dim, repr.base).map_err(serde::de::Error::custom)?;
        MeasurableSet::parse_text(space, &repr.set).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter writing rationals as `"num/den"` strings.
pub mod rational_string {
    use super::{parse_rational, rational_to_string, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rational_to_string(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for MeasurableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Exact box frequencies of a set along odometer orbits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxFrequency {
    /// Frequency seen from the requested phase.
    #[serde(with = "rational_string")]
    pub frequency: Rational,
    #[serde(with = "rational_string")]
    pub min: Rational,
    #[serde(with = "rational_string")]
    pub max: Rational,
    /// `max |frequency(phase) − m(A)|` over all phases.
    #[serde(with = "rational_string")]
    pub deviation: Rational,
}

/// `(1/|box|) #{k ∈ box : T_k x ∈ A}` for `x` in the depth-`A.depth` cell
/// `phase`, together with its exact worst-case deviation from `m(A)` over
/// every phase.
pub fn box_frequency(a: &MeasurableSet, shape: &LevelBox, phase: u64) -> BoxFrequency {
    let space = a.space();
    let depth = a.depth();
    let total = shape.len() as i128;
    assert!(total > 0, "box must be nonempty");
    let m = space.modulus(depth) as i64;
    // Counting along each axis reduces to residue multiplicities.
    let mut per_axis: Vec<Vec<i128>> = Vec::with_capacity(space.dim);
    for axis in 0..space.dim {
        let mut mult = vec![0i128; m as usize];
        for k in shape.lo[axis]..=shape.hi[axis] {
            mult[k.rem_euclid(m) as usize] += 1;
        }
        per_axis.push(mult);
    }
    let offsets = LevelBox::cube(space.dim, 0, m - 1);
    let count_at = |p: u64| -> i128 {
        let mut count = 0i128;
        for off in offsets.points() {
            let weight: i128 = off
                .coords()
                .iter()
                .enumerate()
                .map(|(i, &o)| per_axis[i][o as usize])
                .product();
            if weight == 0 {
                continue;
            }
            if a.contains_cell(space.translate_cell(p, off.coords(), depth)) {
                count += weight;
            }
        }
        count
    };
    let target = a.measure();
    let mut min = Rational::one();
    let mut max = Rational::zero();
    let mut deviation = Rational::zero();
    for p in 0..space.cell_count(depth) {
        let f = Rational::new(count_at(p), total);
        if f < min {
            min = f;
        }
        if f > max {
            max = f;
        }
        let dev = if f > target { f - target } else { target - f };
        if dev > deviation {
            deviation = dev;
        }
    }
    BoxFrequency {
        frequency: Rational::new(count_at(phase), total),
        min,
        max,
        deviation,
    }
}

/// Splits `(a,b),(c,d)` into the inner texts `a,b` and `c,d`, honouring
/// nested parentheses.
pub(crate) fn split_tuples(list: &str) -> Option<Vec<String>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in list.chars() {
        match ch {
            '(' => {
                if depth > 0 {
                    cur.push(ch);
                }
                depth += 1;
            }
            ')' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    out.push(std::mem::take(&mut cur));
                } else {
                    cur.push(ch);
                }
            }
            ',' | ' ' | '\t' if depth == 0 => {}
            _ if depth == 0 => return None,
            _ => cur.push(ch),
        }
    }
    (depth == 0).then_some(out)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x5EED_0F_C0C1C1Eu64, |h, &w| splitmix64(h ^ splitmix64(w)))
}

/// A point of the odometer: `d` digit streams, materialized lazily from a seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdometerPoint {
    space: Odometer,
    seed: u64,
    digits: Vec<Vec<u8>>,
}

const MAX_CARRY_DIGITS: usize = 1 << 20;

impl OdometerPoint {
    pub fn random(space: Odometer, seed: u64) -> Self {
        OdometerPoint {
            space,
            seed,
            digits: vec![Vec::new(); space.dim],
        }
    }

    /// A point whose leading digits are given; later digits come from `seed`.
    pub fn with_prefix(space: Odometer, seed: u64, prefix: Vec<Vec<u8>>) -> Result<Self> {
        if prefix.len() != space.dim {
            return Err(Error::DimensionMismatch {
                expected: space.dim,
                got: prefix.len(),
            });
        }
        if prefix.iter().flatten().any(|&d| d as u32 >= space.base) {
            return Err(Error::InvalidArgument("digit out of range".into()));
        }
        Ok(OdometerPoint {
            space,
            seed,
            digits: prefix,
        })
    }

    fn generated_digit(&self, coord: usize, index: usize) -> u8 {
        (hash_words(&[self.seed, coord as u64, index as u64]) % self.space.base as u64) as u8
    }

    fn materialize(&mut self, coord: usize, len: usize) {
        while self.digits[coord].len() < len {
            let i = self.digits[coord].len();
            let d = self.generated_digit(coord, i);
            self.digits[coord].push(d);
        }
    }

    pub fn digit(&self, coord: usize, index: usize) -> u8 {
        self.digits[coord]
            .get(index)
            .copied()
            .unwrap_or_else(|| self.generated_digit(coord, index))
    }

    pub fn digits(&self, coord: usize, len: usize) -> Vec<u8> {
        (0..len).map(|i| self.digit(coord, i)).collect()
    }

    /// Index of the depth-`depth` cell containing the point.
    pub fn cell(&self, depth: u32) -> u64 {
        let b = self.space.base as u64;
        let residues: Vec<u64> = (0..self.space.dim)
            .map(|k| {
                (0..depth as usize)
                    .rev()
                    .fold(0u64, |acc, i| acc * b + self.digit(k, i) as u64)
            })
            .collect();
        self.space.encode(&residues, depth)
    }

    /// `T_n x`: adds `n_k` with carry to stream `k`.
    pub fn apply(&self, n: &LatticeVector) -> OdometerPoint {
        assert_eq!(n.dim(), self.space.dim);
        let mut out = self.clone();
        let b = self.space.base as i128;
        for (k, &step) in n.coords().iter().enumerate() {
            let mut carry = step as i128;
            let mut j = 0usize;
            while carry != 0 {
                assert!(j < MAX_CARRY_DIGITS, "carry did not terminate");
                out.materialize(k, j + 1);
                let t = out.digits[k][j] as i128 + carry;
                out.digits[k][j] = t.rem_euclid(b) as u8;
                carry = t.div_euclid(b);
                j += 1;
            }
        }
        out
    }
}

/// `T_n x` on the odometer.
pub fn odometer_apply(n: &LatticeVector, x: &OdometerPoint) -> OdometerPoint {
    x.apply(n)
}

/// `T_n A` on the odometer.
pub fn translate_set(n: &LatticeVector, a: &MeasurableSet) -> MeasurableSet {
    a.translate(n)
}

/// A point of the full shift `S^{Z^d}` with i.i.d. symbols drawn from a
/// product measure, generated lazily from a seed. `(T_n x)_m = x_{m+n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftPoint {
    alphabet: u32,
    dim: usize,
    seed: u64,
    offset: Vec<i64>,
    /// Cumulative symbol probabilities; uniform when absent.
    cumulative: Option<Vec<f64>>,
    overrides: BTreeMap<Vec<i64>, u32>,
}

impl ShiftPoint {
    pub fn uniform(alphabet: u32, dim: usize, seed: u64) -> Self {
        assert!(alphabet >= 1 && dim >= 1);
        ShiftPoint {
            alphabet,
            dim,
            seed,
            offset: vec![0; dim],
            cumulative: None,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_weights(weights: &[f64], dim: usize, seed: u64) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "weights must be nonnegative and nonempty".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("weights must not all vanish".into()));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        let mut p = ShiftPoint::uniform(weights.len() as u32, dim, seed);
        p.cumulative = Some(cumulative);
        Ok(p)
    }

    pub fn alphabet(&self) -> u32 {
        self.alphabet
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fixes the symbol at absolute site `site` (relative to the current offset).
    pub fn set_symbol(&mut self, site: &[i64], symbol: u32) {
        assert!(symbol < self.alphabet);
        let abs: Vec<i64> = site.iter().zip(&self.offset).map(|(a, b)| a + b).collect();
        self.overrides.insert(abs, symbol);
    }

    pub fn symbol(&self, site: &[i64]) -> u32 {
        let abs: Vec<i64> = site.iter().zip(&self.offset).map(|(a, b)| a + b).collect();
        if let Some(&s) = self.overrides.get(&abs) {
            return s;
        }
        let mut words = vec![self.seed];
        words.extend(abs.iter().map(|&c| c as u64));
        let h = hash_words(&words);
        match &self.cumulative {
            None => (h % self.alphabet as u64) as u32,
            Some(cum) => {
                let u = (h >> 11) as f64 / (1u64 << 53) as f64;
                cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1) as u32
            }
        }
    }

    /// `T_n x`.
    pub fn shift(&self, n: &[i64]) -> ShiftPoint {
        let mut out = self.clone();
        for (o, s) in out.offset.iter_mut().zip(n) {
            *o += s;
        }
        out
    }

    /// Symbols over a window of sites, in the given order.
    pub fn window(&self, sites: &[Vec<i64>]) -> Vec<u32> {
        sites.iter().map(|s| self.symbol(s)).collect()
    }
}
