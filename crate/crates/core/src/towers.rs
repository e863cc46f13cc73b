//! Rokhlin towers, castles and purifications over the odometer.
//!
//! A tower is a base set `B` together with a finite set of levels `K ⊂ Z^d`
//! such that the translates `T_k B`, `k ∈ K`, are pairwise disjoint. Towers
//! built here use the zero cylinder of depth `p` as base and a box of side
//! `b^p` as levels, which tiles the odometer exactly (error 0). Ball-shaped
//! towers are available for small experiments.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{region_boundary, region_interior, sigma_ball, LatticeRegion, LatticeVector, LevelBox, NormKind};
use crate::measure_space::{rational_to_string, MeasurableSet, Odometer, Rational};

/// Level index set of a tower.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TowerShape {
    Box(LevelBox),
    Ball { radius: u64, norm: NormKind },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RokhlinTower {
    space: Odometer,
    base: MeasurableSet,
    shape: TowerShape,
}

impl RokhlinTower {
    /// Tower over a single depth-`depth` cylinder with the given box of
    /// levels. The base is placed so that the lowest level is the all-zero
    /// cylinder; level `k` is then the cell with residues `k − lo (mod b^p)`.
    pub fn from_box(space: Odometer, depth: u32, levels: LevelBox) -> Result<Self> {
        if depth > space.max_depth() {
            return Err(Error::InfeasibleBreadth {
                required: depth,
                limit: space.max_depth(),
                detail: "cell index range".into(),
            });
        }
        let side = space.modulus(depth);
        if levels.dim() != space.dim || levels.is_empty() || (0..space.dim).any(|i| levels.side(i) > side) {
            return Err(Error::InvalidArgument("level box does not fit the tower depth".into()));
        }
        let residues: Vec<u64> = levels
            .lo
            .iter()
            .map(|&lo| (-lo).rem_euclid(side as i64) as u64)
            .collect();
        let base = MeasurableSet::from_cells(space, depth, vec![space.encode(&residues, depth)]);
        Ok(RokhlinTower {
            space,
            base,
            shape: TowerShape::Box(levels),
        })
    }

    /// The exact tower of depth `depth`: levels form the box
    /// `[-h, s-1-h]^d`, `s = b^depth`, `h = ⌊s/2⌋`, and level `-h` is the
    /// all-zero cylinder. Boundary levels are the cells with a residue `0` or
    /// `s-1`, so the columns of every coarser tower built this way line up
    /// with this one.
    pub fn with_depth(space: Odometer, depth: u32) -> Result<Self> {
        if depth > space.max_depth() {
            return Err(Error::InfeasibleBreadth {
                required: depth,
                limit: space.max_depth(),
                detail: "cell index range".into(),
            });
        }
        let s = space.modulus(depth) as i64;
        let h = s / 2;
        Self::from_box(space, depth, LevelBox::cube(space.dim, -h, s - 1 - h))
    }

    /// Literal ball tower `{T_k B : k ∈ Σ_radius}` over the depth-`depth`
    /// zero cylinder. Fails if the translates overlap.
    pub fn ball(space: Odometer, depth: u32, radius: u64, norm: NormKind) -> Result<Self> {
        let s = space.modulus(depth);
        let _ = norm;
        if 2 * radius >= s {
            return Err(Error::InvalidArgument(format!(
                "ball of radius {radius} does not fit side {s}"
            )));
        }
        Ok(RokhlinTower {
            space,
            base: MeasurableSet::from_cells(space, depth, vec![0]),
            shape: TowerShape::Ball { radius, norm },
        })
    }

    pub fn space(&self) -> Odometer {
        self.space
    }

    pub fn base(&self) -> &MeasurableSet {
        &self.base
    }

    pub fn shape(&self) -> &TowerShape {
        &self.shape
    }

    pub fn depth(&self) -> u32 {
        self.base.depth()
    }

    /// Side `b^p` of the periodic cell grid.
    pub fn side(&self) -> u64 {
        self.space.modulus(self.depth())
    }

    /// Largest `N` with `Σ_N` (Linf) inside the level set.
    pub fn breadth(&self) -> u64 {
        match &self.shape {
            TowerShape::Box(b) => b.inscribed_radius().unwrap_or(0),
            TowerShape::Ball { radius, norm } => match norm {
                NormKind::Linf => *radius,
                NormKind::L1 => *radius / self.space.dim as u64,
            },
        }
    }

    pub fn level_box(&self) -> Option<&LevelBox> {
        match &self.shape {
            TowerShape::Box(b) => Some(b),
            TowerShape::Ball { .. } => None,
        }
    }

    pub fn levels(&self) -> Vec<LatticeVector> {
        match &self.shape {
            TowerShape::Box(b) => b.points().collect(),
            TowerShape::Ball { radius, norm } => sigma_ball(&LatticeVector::zero(self.space.dim), *radius, *norm)
                .iter()
                .cloned()
                .collect(),
        }
    }

    pub fn level_count(&self) -> u64 {
        match &self.shape {
            TowerShape::Box(b) => b.len(),
            TowerShape::Ball { .. } => self.levels().len() as u64,
        }
    }

    pub fn contains_level(&self, k: &LatticeVector) -> bool {
        match &self.shape {
            TowerShape::Box(b) => b.contains(k.coords()),
            TowerShape::Ball { radius, norm } => k.norm(*norm) <= *radius,
        }
    }

    pub fn level_set(&self, k: &LatticeVector) -> MeasurableSet {
        self.base.translate(k)
    }

    /// `ε_T = 1 − |levels|·m(B)`.
    pub fn error(&self) -> Rational {
        Rational::one() - Rational::from_integer(self.level_count() as i128) * self.base.measure()
    }

    /// Union of all levels, computed explicitly.
    pub fn covered(&self) -> MeasurableSet {
        let depth = self.depth();
        let cells: Vec<u64> = self
            .levels()
            .iter()
            .flat_map(|k| self.level_set(k).cells().to_vec())
            .collect();
        MeasurableSet::from_cells(self.space, depth, cells)
    }

    /// Exact pairwise disjointness of the levels.
    pub fn levels_disjoint(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        for k in self.levels() {
            for &c in self.level_set(&k).cells() {
                if !seen.insert(c) {
                    return false;
                }
            }
        }
        true
    }

    /// Level of the tower containing the depth-`depth` cell, for towers over
    /// a single cylinder.
    pub fn level_of_cell(&self, cell: u64, depth: u32) -> Option<LatticeVector> {
        let p = self.depth();
        if depth < p || self.base.cell_count() != 1 {
            return None;
        }
        let s = self.side() as i64;
        let residues = self.space.decode(self.space.coarsen_cell(cell, depth, p), p);
        let origin = self.space.decode(self.base.cells()[0], p);
        let rel = residues.iter().zip(&origin).map(|(&r, &o)| r as i64 - o as i64);
        match &self.shape {
            TowerShape::Box(b) => Some(LatticeVector(
                rel.zip(&b.lo).map(|(r, &lo)| lo + (r - lo).rem_euclid(s)).collect(),
            )),
            TowerShape::Ball { .. } => {
                let k = LatticeVector(
                    rel.map(|r| {
                        let r = r.rem_euclid(s);
                        if r > s / 2 {
                            r - s
                        } else {
                            r
                        }
                    })
                    .collect(),
                );
                self.contains_level(&k).then_some(k)
            }
        }
    }

    /// Levels `Σ_{N−1}` for ball towers, the box shrunk by one otherwise.
    pub fn interior(&self) -> LatticeRegion {
        match &self.shape {
            TowerShape::Box(b) => b.interior().region(),
            TowerShape::Ball { radius, norm } => {
                region_interior(&sigma_ball(&LatticeVector::zero(self.space.dim), *radius, *norm), *norm)
            }
        }
    }

    pub fn boundary(&self) -> LatticeRegion {
        match &self.shape {
            TowerShape::Box(b) => b.region().difference(&b.interior().region()),
            TowerShape::Ball { radius, norm } => {
                region_boundary(&sigma_ball(&LatticeVector::zero(self.space.dim), *radius, *norm), *norm)
            }
        }
    }

    pub fn is_boundary_level(&self, k: &LatticeVector) -> bool {
        match &self.shape {
            TowerShape::Box(b) => b.contains(k.coords()) && !b.interior().contains(k.coords()),
            TowerShape::Ball { radius, norm } => {
                k.norm(*norm) <= *radius
                    && (0..k.dim()).any(|i| {
                        [1i64, -1].iter().any(|&sgn| {
                            let mut m = k.clone();
                            m.0[i] += sgn;
                            m.norm(*norm) > *radius
                        })
                    })
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "tower dim={} base={}", self.space.dim, self.space.base).unwrap();
        match &self.shape {
            TowerShape::Box(b) => writeln!(
                out,
                "shape box lo={} hi={}",
                LatticeVector(b.lo.clone()),
                LatticeVector(b.hi.clone())
            )
            .unwrap(),
            TowerShape::Ball { radius, norm } => writeln!(out, "shape ball radius={radius} norm={norm}").unwrap(),
        }
        writeln!(out, "breadth {}", self.breadth()).unwrap();
        writeln!(out, "levels {}", self.level_count()).unwrap();
        writeln!(out, "base {}", self.base.to_text()).unwrap();
        writeln!(out, "error {}", rational_to_string(&self.error())).unwrap();
        out
    }
}

/// `build_tower`: an exact tower whose levels contain `Σ_breadth`.
/// On the odometer the error is 0 whatever the budget.
pub fn build_tower(space: Odometer, breadth: u64, error_budget: Rational) -> Result<RokhlinTower> {
    if error_budget < Rational::zero() || error_budget >= Rational::one() {
        return Err(Error::InvalidArgument("error budget must lie in [0,1)".into()));
    }
    let needed = 2 * breadth + 1;
    let mut depth = 0;
    while space.modulus(depth) < needed {
        depth += 1;
        if depth > space.max_depth() {
            return Err(Error::InfeasibleBreadth {
                required: depth,
                limit: space.max_depth(),
                detail: format!("breadth {breadth}"),
            });
        }
    }
    RokhlinTower::with_depth(space, depth)
}

/// Finitely many towers of one breadth with pairwise disjoint levels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Castle {
    towers: Vec<RokhlinTower>,
}

impl Castle {
    pub fn new(towers: Vec<RokhlinTower>) -> Result<Self> {
        if let Some(first) = towers.first() {
            if towers.iter().any(|t| t.breadth() != first.breadth()) {
                return Err(Error::InvalidArgument("castle towers must share one breadth".into()));
            }
        }
        let castle = Castle { towers };
        if !castle.levels_disjoint() {
            return Err(Error::InvalidArgument("castle levels overlap".into()));
        }
        Ok(castle)
    }

    pub fn towers(&self) -> &[RokhlinTower] {
        &self.towers
    }

    pub fn levels_disjoint(&self) -> bool {
        let depth = self.towers.iter().map(|t| t.depth()).max().unwrap_or(0);
        let mut seen = std::collections::HashSet::new();
        for t in &self.towers {
            for k in t.levels() {
                for &c in t.level_set(&k).refine_to(depth).cells() {
                    if !seen.insert(c) {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn error(&self) -> Rational {
        self.towers.iter().fold(Rational::one(), |acc, t| {
            acc - Rational::from_integer(t.level_count() as i128) * t.base().measure()
        })
    }
}

/// The base of a tower split so that a partition is constant on every level
/// of every block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Purification {
    parent: RokhlinTower,
    alpha: Vec<MeasurableSet>,
    blocks: Vec<MeasurableSet>,
}

impl Purification {
    pub fn parent(&self) -> &RokhlinTower {
        &self.parent
    }

    pub fn blocks(&self) -> &[MeasurableSet] {
        &self.blocks
    }

    pub fn partition(&self) -> &[MeasurableSet] {
        &self.alpha
    }

    /// Index of the partition member containing `T_k b` for block `block`.
    pub fn block_name(&self, block: usize) -> Vec<usize> {
        let lookup = PartitionLookup::new(&self.alpha).expect("validated on construction");
        let b = &self.blocks[block];
        let depth = b.depth().max(lookup.depth);
        let cell = b.refine_to(depth).cells()[0];
        self.parent
            .levels()
            .iter()
            .map(|k| {
                lookup.member(
                    self.parent.space(),
                    self.parent.space().translate_cell(cell, k.coords(), depth),
                    depth,
                )
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = self.parent.to_text();
        writeln!(out, "blocks {}", self.blocks.len()).unwrap();
        for (i, b) in self.blocks.iter().enumerate() {
            writeln!(out, "block {i} {}", b.to_text()).unwrap();
        }
        out
    }
}

struct PartitionLookup {
    depth: u32,
    owner: HashMap<u64, usize>,
}

impl PartitionLookup {
    fn new(alpha: &[MeasurableSet]) -> Result<Self> {
        let depth = alpha.iter().map(|a| a.depth()).max().unwrap_or(0);
        let mut owner = HashMap::new();
        let mut total = Rational::zero();
        for (i, a) in alpha.iter().enumerate() {
            total += a.measure();
            for &c in a.refine_to(depth).cells() {
                if owner.insert(c, i).is_some() {
                    return Err(Error::InvalidArgument("partition members overlap".into()));
                }
            }
        }
        if total != Rational::one() {
            return Err(Error::InvalidArgument("partition does not cover the space".into()));
        }
        Ok(PartitionLookup { depth, owner })
    }

    fn member(&self, space: Odometer, cell: u64, depth: u32) -> usize {
        self.owner[&space.coarsen_cell(cell, depth, self.depth)]
    }
}

/// `B_a = B ∩ ⋂_k T_k^{-1} a_k`, grouped over the names `a` that occur.
pub fn purify(tower: &RokhlinTower, alpha: &[MeasurableSet]) -> Result<Purification> {
    let space = tower.space();
    if alpha.iter().any(|a| a.space() != space) {
        return Err(Error::InvalidArgument("partition lives on another space".into()));
    }
    let lookup = PartitionLookup::new(alpha)?;
    let depth = tower.depth().max(lookup.depth);
    let base = tower.base().refine_to(depth);
    let blocks = if depth == tower.depth() && base.cell_count() <= 1 {
        vec![tower.base().clone()]
    } else {
        let levels = tower.levels();
        let mut groups: HashMap<Vec<usize>, Vec<u64>> = HashMap::new();
        let mut order: Vec<Vec<usize>> = Vec::new();
        for &c in base.cells() {
            let name: Vec<usize> = levels
                .iter()
                .map(|k| lookup.member(space, space.translate_cell(c, k.coords(), depth), depth))
                .collect();
            let entry = groups.entry(name.clone()).or_default();
            if entry.is_empty() {
                order.push(name);
            }
            entry.push(c);
        }
        order
            .into_iter()
            .map(|name| MeasurableSet::from_cells(space, depth, groups.remove(&name).unwrap()).canonical())
            .collect()
    };
    Ok(Purification {
        parent: tower.clone(),
        alpha: alpha.to_vec(),
        blocks,
    })
}

/// `tower_interior`.
pub fn tower_interior(t: &RokhlinTower) -> LatticeRegion {
    t.interior()
}

/// `tower_boundary`.
pub fn tower_boundary(t: &RokhlinTower) -> LatticeRegion {
    t.boundary()
}

/// All depth-`depth` cylinders, as a partition.
pub fn cylinder_partition(space: Odometer, depth: u32) -> Vec<MeasurableSet> {
    (0..space.cell_count(depth))
        .map(|c| MeasurableSet::from_cells(space, depth, vec![c]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn od(d: usize) -> Odometer {
        Odometer::new(d, 2).unwrap()
    }

    /// Independent cover check: every cell of the base depth is hit exactly once.
    fn covers_exactly_once(t: &RokhlinTower) -> bool {
        let space = t.space();
        let p = t.depth();
        let mut hits = vec![0u32; space.cell_count(p) as usize];
        for k in t.levels() {
            let r: Vec<u64> = k
                .coords()
                .iter()
                .map(|&c| c.rem_euclid(space.modulus(p) as i64) as u64)
                .collect();
            hits[space.encode(&r, p) as usize] += 1;
        }
        hits.iter().all(|&h| h == 1)
    }

    #[test]
    fn build_examples() {
        let t = RokhlinTower::with_depth(od(1), 2).unwrap();
        assert_eq!(t.level_count(), 4);
        assert_eq!(t.base().measure(), Rational::new(1, 4));
        assert_eq!(t.error(), Rational::zero());
        assert!(covers_exactly_once(&t));
        assert!(t.levels_disjoint());

        let t2 = RokhlinTower::with_depth(od(2), 1).unwrap();
        assert_eq!(t2.base().measure(), Rational::new(1, 4));
        assert_eq!(t2.level_count(), 4);
        assert_eq!(t2.error(), Rational::zero());
        assert!(covers_exactly_once(&t2));

        let t3 = build_tower(od(2), 3, Rational::new(1, 10)).unwrap();
        assert!(t3.breadth() >= 3);
        assert_eq!(t3.error(), Rational::zero());
        assert_eq!(t3.covered().measure(), Rational::one());
    }

    #[test]
    fn ball_tower_error_matches_union() {
        let t = RokhlinTower::ball(od(2), 3, 2, NormKind::L1).unwrap();
        assert!(t.levels_disjoint());
        assert_eq!(t.error(), Rational::one() - t.covered().measure());
        assert_eq!(t.error(), Rational::new(64 - 13, 64));
    }

    #[test]
    fn interior_examples() {
        let t = RokhlinTower::ball(od(1), 2, 1, NormKind::Linf).unwrap();
        assert_eq!(tower_interior(&t), LatticeRegion::from_iter([LatticeVector(vec![0])]));
        assert_eq!(
            tower_boundary(&t),
            LatticeRegion::from_iter([LatticeVector(vec![-1]), LatticeVector(vec![1])])
        );
        let t0 = RokhlinTower::ball(od(1), 1, 0, NormKind::Linf).unwrap();
        assert!(tower_interior(&t0).is_empty());
        assert_eq!(tower_boundary(&t0), LatticeRegion::from_iter([LatticeVector(vec![0])]));

        let t3 = RokhlinTower::ball(od(2), 3, 3, NormKind::Linf).unwrap();
        assert_eq!(tower_boundary(&t3).len(), 49 - 25);
        for k in t3.levels() {
            assert_eq!(t3.is_boundary_level(&k), tower_boundary(&t3).contains(&k));
        }
    }

    #[test]
    fn level_of_cell_inverts_level_set() {
        let t = RokhlinTower::with_depth(od(2), 3).unwrap();
        for k in t.levels() {
            let cell = t.level_set(&k).cells()[0];
            assert_eq!(t.level_of_cell(cell, 3), Some(k));
        }
    }

    #[test]
    fn purify_examples() {
        let space = od(1);
        let t = RokhlinTower::with_depth(space, 2).unwrap();
        let trivial = purify(&t, &[MeasurableSet::whole(space)]).unwrap();
        assert_eq!(trivial.blocks(), &[t.base().clone()]);

        let alpha = cylinder_partition(space, 3);
        let p = purify(&t, &alpha).unwrap();
        assert_eq!(p.blocks().len(), 2);
        let union = p
            .blocks()
            .iter()
            .fold(MeasurableSet::empty(space, 0), |acc, b| acc.union(b));
        assert_eq!(union.canonical(), t.base().canonical());
        for (i, b) in p.blocks().iter().enumerate() {
            for j in 0..i {
                assert!(b.is_disjoint(&p.blocks()[j]));
            }
            for k in t.levels() {
                let lvl = b.translate(&k);
                assert!(alpha.iter().any(|a| lvl.is_subset(a)));
            }
        }
        let again = purify(&t, &alpha).unwrap();
        assert_eq!(again.blocks(), p.blocks());
    }

    #[test]
    fn castle_rejects_overlap() {
        let space = od(1);
        let t = RokhlinTower::ball(space, 2, 0, NormKind::Linf).unwrap();
        assert!(Castle::new(vec![t.clone(), t]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn purification_refines_partition(cells in proptest::collection::vec(0u64..16, 1..16)) {
                let space = Odometer::new(2, 2).unwrap();
                let a = MeasurableSet::from_cells(space, 2, cells);
                let alpha: Vec<MeasurableSet> = [a.clone(), a.complement()]
                    .into_iter().filter(|s| !s.is_empty()).collect();
                let t = RokhlinTower::ball(space, 3, 1, NormKind::L1).unwrap();
                let p = purify(&t, &alpha).unwrap();
                let total = p.blocks().iter().fold(Rational::zero(), |acc, b| acc + b.measure());
                prop_assert_eq!(total, t.base().measure());
                for b in p.blocks() {
                    for k in t.levels() {
                        let lvl = b.translate(&k);
                        prop_assert!(alpha.iter().any(|m| lvl.is_subset(m)));
                    }
                }
            }

            #[test]
            fn exact_towers_have_zero_error(d in 1usize..3, p in 0u32..4, b in 2u32..4) {
                let space = Odometer::new(d, b).unwrap();
                let t = RokhlinTower::with_depth(space, p).unwrap();
                prop_assert_eq!(t.error(), Rational::zero());
                prop_assert_eq!(t.covered().measure(), Rational::one());
            }
        }
    }
}
