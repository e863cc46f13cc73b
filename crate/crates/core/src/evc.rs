//! Holonomies, essential value conditions and their certificates.
//!
//! A holonomy is a partial measure-preserving map that moves each point of a
//! piece `D_j` by a fixed lattice vector `u_j`. An EVC certificate records a
//! holonomy inside a set `A` whose cocycle displacement `φ(u_j, x)` lies
//! within `ε` of a target `σ` on a set of measure greater than `c·m(A)`.

use std::collections::HashSet;

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{Cocycle, GroupValue, ValueGroup};
use crate::error::{Error, Result};
use crate::lattice::{LatticeVector, LevelBox, NormKind};
use crate::measure_space::{rational_string, rational_to_string, MeasurableSet, Odometer, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolonomyPiece {
    pub domain: MeasurableSet,
    pub shift: LatticeVector,
}

impl HolonomyPiece {
    pub fn image(&self) -> MeasurableSet {
        self.domain.translate(&self.shift)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holonomy {
    space: Odometer,
    pieces: Vec<HolonomyPiece>,
}

impl Holonomy {
    /// Validates that domains and images are pairwise disjoint. Empty pieces are dropped.
    pub fn new(space: Odometer, pieces: Vec<HolonomyPiece>) -> Result<Self> {
        let pieces: Vec<HolonomyPiece> = pieces.into_iter().filter(|p| !p.domain.is_empty()).collect();
        for p in &pieces {
            if p.domain.space() != space || p.shift.dim() != space.dim {
                return Err(Error::InvalidArgument("holonomy piece lives on another space".into()));
            }
        }
        let h = Holonomy { space, pieces };
        h.check_disjoint()?;
        Ok(h)
    }

    pub fn identity(a: &MeasurableSet) -> Self {
        let space = a.space();
        Holonomy {
            space,
            pieces: vec![HolonomyPiece {
                domain: a.clone(),
                shift: LatticeVector::zero(space.dim),
            }]
            .into_iter()
            .filter(|p| !p.domain.is_empty())
            .collect(),
        }
    }

    pub fn empty(space: Odometer) -> Self {
        Holonomy {
            space,
            pieces: Vec::new(),
        }
    }

    pub fn space(&self) -> Odometer {
        self.space
    }

    pub fn pieces(&self) -> &[HolonomyPiece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    fn check_disjoint(&self) -> Result<()> {
        for i in 0..self.pieces.len() {
            for j in 0..i {
                if !self.pieces[i].domain.is_disjoint(&self.pieces[j].domain) {
                    return Err(Error::InvalidArgument(format!("holonomy domains {j} and {i} overlap")));
                }
                if !self.pieces[i].image().is_disjoint(&self.pieces[j].image()) {
                    return Err(Error::InvalidArgument(format!("holonomy images {j} and {i} overlap")));
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> MeasurableSet {
        self.pieces
            .iter()
            .fold(MeasurableSet::empty(self.space, 0), |acc, p| acc.union(&p.domain))
    }

    pub fn image(&self) -> MeasurableSet {
        self.pieces
            .iter()
            .fold(MeasurableSet::empty(self.space, 0), |acc, p| acc.union(&p.image()))
    }

    pub fn measure(&self) -> Rational {
        self.pieces
            .iter()
            .fold(Rational::zero(), |acc, p| acc + p.domain.measure())
    }

    /// Longest generator path among the shifts.
    pub fn max_path_length(&self) -> u64 {
        self.pieces
            .iter()
            .map(|p| p.shift.norm(NormKind::L1))
            .max()
            .unwrap_or(0)
    }

    pub fn inverse(&self) -> Holonomy {
        Holonomy {
            space: self.space,
            pieces: self
                .pieces
                .iter()
                .map(|p| HolonomyPiece {
                    domain: p.image(),
                    shift: -&p.shift,
                })
                .collect(),
        }
    }

    /// `self ∘ inner`, defined on `D(inner) ∩ inner^{-1} D(self)`.
    pub fn compose(&self, inner: &Holonomy) -> Holonomy {
        assert_eq!(self.space, inner.space);
        let mut pieces = Vec::new();
        for q in &inner.pieces {
            for p in &self.pieces {
                let domain = q.domain.intersection(&p.domain.translate(&-&q.shift));
                if !domain.is_empty() {
                    pieces.push(HolonomyPiece {
                        domain,
                        shift: &p.shift + &q.shift,
                    });
                }
            }
        }
        // pieces with equal shifts are merged so the result stays injective piecewise
        let mut merged: Vec<HolonomyPiece> = Vec::new();
        for piece in pieces {
            match merged.iter_mut().find(|m| m.shift == piece.shift) {
                Some(m) => m.domain = m.domain.union(&piece.domain),
                None => merged.push(piece),
            }
        }
        Holonomy {
            space: self.space,
            pieces: merged,
        }
    }

    /// Restricts the holonomy to a subset of its domain.
    pub fn restrict(&self, keep: &MeasurableSet) -> Holonomy {
        Holonomy {
            space: self.space,
            pieces: self
                .pieces
                .iter()
                .map(|p| HolonomyPiece {
                    domain: p.domain.intersection(keep),
                    shift: p.shift.clone(),
                })
                .filter(|p| !p.domain.is_empty())
                .collect(),
        }
    }
}

/// `φ(R, x)` for each depth-`depth` cell of each piece's domain.
pub fn holonomy_values(phi: &Cocycle, r: &Holonomy, depth: u32, pairs: usize) -> Vec<Vec<(u64, Vec<i64>)>> {
    let space = r.space();
    r.pieces()
        .iter()
        .map(|p| {
            let cells = p.domain.refine_to(depth.max(p.domain.depth()));
            let d = cells.depth();
            cells
                .cells()
                .par_iter()
                .map(|&c| {
                    let mut v = vec![0; pairs];
                    phi.eval_cell(&space, p.shift.coords(), c, d, &mut v);
                    (c, v)
                })
                .collect()
        })
        .collect()
}

/// What an EVC asks for: `U` is the sup-norm ball of radius `epsilon` around `sigma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvcTarget {
    pub set: MeasurableSet,
    pub sigma: GroupValue,
    pub epsilon: f64,
    #[serde(with = "rational_string")]
    pub c: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvcCertificate {
    pub set: MeasurableSet,
    pub sigma: GroupValue,
    pub epsilon: f64,
    #[serde(with = "rational_string")]
    pub c: Rational,
    pub holonomy: Holonomy,
    #[serde(with = "rational_string")]
    pub measured: Rational,
    pub residuals: Vec<f64>,
}

impl EvcCertificate {
    pub fn target(&self) -> EvcTarget {
        EvcTarget {
            set: self.set.clone(),
            sigma: self.sigma.clone(),
            epsilon: self.epsilon,
            c: self.c,
        }
    }

    /// `measured − c·m(A)`.
    pub fn slack(&self) -> Rational {
        self.measured - self.c * self.set.measure()
    }

    /// Recomputes every clause and compares with the recorded values.
    pub fn validate(&self, group: &ValueGroup, phi: &Cocycle) -> Result<()> {
        let fresh = check_evc(group, phi, &self.holonomy, &self.target())?;
        if fresh.measured != self.measured {
            return Err(Error::Verification(format!(
                "measured: recorded {} but holonomy domain has measure {}",
                rational_to_string(&self.measured),
                rational_to_string(&fresh.measured)
            )));
        }
        if fresh.residuals.len() != self.residuals.len()
            || fresh
                .residuals
                .iter()
                .zip(&self.residuals)
                .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(Error::Verification(
                "residuals: recorded values do not match recomputation".into(),
            ));
        }
        Ok(())
    }
}

/// `check_evc`: verifies `D(R), Im(R) ⊆ A`, `‖φ_R − σ‖ < ε` on `D(R)` and
/// `m(D(R)) > c·m(A)`. The error names the first failing clause.
pub fn check_evc(group: &ValueGroup, phi: &Cocycle, r: &Holonomy, target: &EvcTarget) -> Result<EvcCertificate> {
    if target.sigma.coeffs.len() != group.pairs() {
        return Err(Error::DimensionMismatch {
            expected: group.pairs(),
            got: target.sigma.coeffs.len(),
        });
    }
    let depth = phi.resolution();
    if depth > r.space().max_depth() {
        return Err(Error::Resolution(format!("cocycle needs depth {depth}")));
    }
    r.check_disjoint()
        .map_err(|e| Error::Verification(format!("holonomy: {e}")))?;
    if !r.domain().is_subset(&target.set) {
        return Err(Error::Verification("domain: D(R) is not contained in A".into()));
    }
    if !r.image().is_subset(&target.set) {
        return Err(Error::Verification("image: Im(R) is not contained in A".into()));
    }
    let values = holonomy_values(phi, r, depth, group.pairs());
    let residuals: Vec<f64> = values
        .iter()
        .map(|piece| {
            piece
                .iter()
                .map(|(_, v)| group.distance(v, &target.sigma.coeffs))
                .fold(0.0, f64::max)
        })
        .collect();
    if let Some((i, res)) = residuals.iter().enumerate().find(|(_, &res)| !(res < target.epsilon)) {
        return Err(Error::Verification(format!(
            "residual: piece {i} has ‖φ_R − σ‖ = {res} ≥ ε = {}",
            target.epsilon
        )));
    }
    let measured = r.measure();
    let threshold = target.c * target.set.measure();
    if measured <= threshold {
        return Err(Error::Verification(format!(
            "measure: m(D(R)) = {} is not greater than c·m(A) = {}",
            rational_to_string(&measured),
            rational_to_string(&threshold)
        )));
    }
    Ok(EvcCertificate {
        set: target.set.clone(),
        sigma: target.sigma.clone(),
        epsilon: target.epsilon,
        c: target.c,
        holonomy: r.clone(),
        measured,
        residuals,
    })
}

/// Cells (per generator axis) where `φ(e_i,·) ≠ ψ(e_i,·)`, at `depth`.
pub fn generator_diff(space: &Odometer, phi: &Cocycle, psi: &Cocycle, depth: u32, pairs: usize) -> Vec<Vec<u64>> {
    (0..space.dim)
        .map(|axis| {
            (0..space.cell_count(depth))
                .into_par_iter()
                .filter(|&c| {
                    let mut a = vec![0; pairs];
                    let mut b = vec![0; pairs];
                    phi.generator_value(space, axis, c, depth, &mut a);
                    psi.generator_value(space, axis, c, depth, &mut b);
                    a != b
                })
                .collect()
        })
        .collect()
}

/// Measure of `⋃_i [φ(e_i,·) ≠ ψ(e_i,·)]` from a diff table.
pub fn diff_measure(space: &Odometer, diff: &[Vec<u64>], depth: u32) -> Rational {
    let all: HashSet<u64> = diff.iter().flatten().copied().collect();
    Rational::new(all.len() as i128, space.cell_count(depth) as i128)
}

/// Outcome of carrying a certificate from `ψ` to a perturbed cocycle `φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    #[serde(with = "rational_string")]
    pub diff_measure: Rational,
    #[serde(with = "rational_string")]
    pub slack: Rational,
    pub path_length: u64,
    /// Measure removed from the holonomy domain.
    #[serde(with = "rational_string")]
    pub excised: Rational,
    pub holds: bool,
    pub certificate: Option<EvcCertificate>,
}

/// Domain cells (at `depth`) whose generator path under the piece's shift
/// meets a cell where the generators changed.
fn touched_cells(
    space: &Odometer,
    piece: &HolonomyPiece,
    diff: &[Vec<u64>],
    depth: u32,
    domain: &[u64],
) -> HashSet<u64> {
    let path = piece.shift.generator_path();
    // offset of the generator evaluation for each step, per axis
    let mut probes: Vec<Vec<Vec<i64>>> = vec![Vec::new(); space.dim];
    let mut pos = vec![0i64; space.dim];
    for &(axis, sign) in &path {
        if sign > 0 {
            probes[axis].push(pos.clone());
            pos[axis] += 1;
        } else {
            pos[axis] -= 1;
            probes[axis].push(pos.clone());
        }
    }
    let diff_total: usize = (0..space.dim).map(|a| diff[a].len() * probes[a].len()).sum();
    let domain_total = domain.len() * path.len();
    let mut out = HashSet::new();
    if diff_total <= domain_total {
        for axis in 0..space.dim {
            for &y in &diff[axis] {
                for q in &probes[axis] {
                    let back: Vec<i64> = q.iter().map(|c| -c).collect();
                    out.insert(space.translate_cell(y, &back, depth));
                }
            }
        }
    } else {
        let sets: Vec<HashSet<u64>> = diff.iter().map(|d| d.iter().copied().collect()).collect();
        for &x in domain {
            let hit = (0..space.dim).any(|axis| {
                probes[axis]
                    .iter()
                    .any(|q| sets[axis].contains(&space.translate_cell(x, q, depth)))
            });
            if hit {
                out.insert(x);
            }
        }
    }
    out
}

/// Re-certifies `cert` (valid for `psi`) for `phi`, given the generator diff
/// table at `depth` (at least both resolutions). Domain cells whose path meets
/// a changed generator are re-evaluated and dropped if they left `U`.
pub fn recheck_with_diff(
    group: &ValueGroup,
    phi: &Cocycle,
    cert: &EvcCertificate,
    diff: &[Vec<u64>],
    depth: u32,
) -> StabilityReport {
    let space = cert.holonomy.space();
    let dm = diff_measure(&space, diff, depth);
    let mut pieces = Vec::new();
    for piece in cert.holonomy.pieces() {
        let domain = piece.domain.refine_to(depth.max(piece.domain.depth()));
        let d = domain.depth();
        let touched = if d == depth {
            touched_cells(&space, piece, diff, depth, domain.cells())
        } else {
            HashSet::new()
        };
        let cells: Vec<u64> = domain
            .cells()
            .iter()
            .copied()
            .filter(|c| {
                if !touched.contains(c) {
                    return true;
                }
                let mut v = vec![0; group.pairs()];
                phi.eval_cell(&space, piece.shift.coords(), *c, d, &mut v);
                group.distance(&v, &cert.sigma.coeffs) < cert.epsilon
            })
            .collect();
        pieces.push(HolonomyPiece {
            domain: MeasurableSet::from_sorted_cells(space, d, cells),
            shift: piece.shift.clone(),
        });
    }
    let holonomy = Holonomy {
        space,
        pieces: pieces.into_iter().filter(|p| !p.domain.is_empty()).collect(),
    };
    let excised = cert.measured - holonomy.measure();
    let certificate = check_evc(group, phi, &holonomy, &cert.target()).ok();
    StabilityReport {
        diff_measure: dm,
        slack: cert.slack(),
        path_length: cert.holonomy.max_path_length(),
        excised,
        holds: certificate.is_some(),
        certificate,
    }
}

/// `stability_recheck`: carries a certificate valid for `psi` over to `phi`.
/// Fails when the generators differ on a set of measure `≥ delta`.
pub fn stability_recheck(
    group: &ValueGroup,
    phi: &Cocycle,
    psi: &Cocycle,
    cert: &EvcCertificate,
    delta: Rational,
) -> StabilityReport {
    let space = cert.holonomy.space();
    let depth = phi.resolution().max(psi.resolution()).max(
        cert.holonomy
            .pieces()
            .iter()
            .map(|p| p.domain.depth())
            .max()
            .unwrap_or(0),
    );
    let diff = generator_diff(&space, phi, psi, depth, group.pairs());
    let mut report = recheck_with_diff(group, phi, cert, &diff, depth);
    if report.diff_measure >= delta {
        report.holds = false;
    }
    report
}

/// `essential_value_scan`: every `n` in `levels` with
/// `m(A ∩ T_n^{-1}A ∩ [‖φ(n,·) − a‖ < ε]) > 0`.
pub fn essential_value_scan(
    group: &ValueGroup,
    phi: &Cocycle,
    a_set: &MeasurableSet,
    a: &GroupValue,
    epsilon: f64,
    levels: &LevelBox,
) -> Vec<LatticeVector> {
    let space = a_set.space();
    let depth = phi.resolution().max(a_set.depth());
    let cells = a_set.refine_to(depth);
    let candidates: Vec<LatticeVector> = levels.points().collect();
    candidates
        .into_par_iter()
        .filter(|n| {
            let mut v = vec![0; group.pairs()];
            cells.cells().iter().any(|&c| {
                if !cells.contains_cell(space.translate_cell(c, n.coords(), depth)) {
                    return false;
                }
                v.iter_mut().for_each(|x| *x = 0);
                phi.eval_cell(&space, n.coords(), c, depth, &mut v);
                group.distance(&v, &a.coeffs) < epsilon
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::{Homomorphism, StepFunction};
    use crate::towers::RokhlinTower;
    use num_traits::One;

    fn od(d: usize) -> Odometer {
        Odometer::new(d, 2).unwrap()
    }

    fn cyl(space: Odometer, depth: u32, cells: &[u64]) -> MeasurableSet {
        MeasurableSet::from_cells(space, depth, cells.to_vec())
    }

    fn zero_cocycle(space: Odometer, pairs: usize) -> Cocycle {
        Cocycle::Coboundary(StepFunction::zeros(RokhlinTower::with_depth(space, 1).unwrap(), pairs))
    }

    #[test]
    fn identity_holonomy_is_valid() {
        let space = od(1);
        let g = ValueGroup::signed_basis(1);
        let a = cyl(space, 2, &[1, 2]);
        let target = EvcTarget {
            set: a.clone(),
            sigma: g.zero(),
            epsilon: 1e-3,
            c: Rational::new(99, 100),
        };
        let cert = check_evc(&g, &zero_cocycle(space, 1), &Holonomy::identity(&a), &target).unwrap();
        assert_eq!(cert.measured, a.measure());
        assert_eq!(cert.residuals, vec![0.0]);
    }

    #[test]
    fn measure_clause_is_strict() {
        let space = od(1);
        let g = ValueGroup::signed_basis(1);
        let a = cyl(space, 2, &[0, 1, 2, 3]);
        let piece = cyl(space, 2, &[0]);
        let r = Holonomy::new(
            space,
            vec![HolonomyPiece {
                domain: piece,
                shift: LatticeVector(vec![0]),
            }],
        )
        .unwrap();
        let target = EvcTarget {
            set: a,
            sigma: g.zero(),
            epsilon: 0.5,
            c: Rational::new(1, 4),
        };
        let err = check_evc(&g, &zero_cocycle(space, 1), &r, &target).unwrap_err();
        assert!(err.to_string().contains("measure"), "{err}");
    }

    #[test]
    fn overlapping_images_rejected() {
        let space = od(1);
        let pieces = vec![
            HolonomyPiece {
                domain: cyl(space, 2, &[0]),
                shift: LatticeVector(vec![1]),
            },
            HolonomyPiece {
                domain: cyl(space, 2, &[2]),
                shift: LatticeVector(vec![-1]),
            },
        ];
        assert!(Holonomy::new(space, pieces).is_err());
    }

    fn sample_holonomy(space: Odometer) -> Holonomy {
        Holonomy::new(
            space,
            vec![
                HolonomyPiece {
                    domain: cyl(space, 3, &[0, 1]),
                    shift: LatticeVector(vec![3]),
                },
                HolonomyPiece {
                    domain: cyl(space, 3, &[5]),
                    shift: LatticeVector(vec![-4]),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn compose_and_invert() {
        let space = od(1);
        let r = sample_holonomy(space);
        let back = r.compose(&r.inverse());
        assert_eq!(back.domain(), r.image());
        assert!(back.pieces().iter().all(|p| p.shift.is_zero()));
        let id = Holonomy::identity(&MeasurableSet::whole(space));
        assert_eq!(r.compose(&id).domain(), r.domain());
        assert_eq!(id.compose(&r).pieces(), r.pieces());
        let empty = Holonomy::empty(space).compose(&r);
        assert!(empty.is_empty());
    }

    #[test]
    fn cocycle_over_composition() {
        let space = od(1);
        let t = RokhlinTower::with_depth(space, 3).unwrap();
        let f = StepFunction::from_levels(t, 1, |k| vec![k.0[0] * k.0[0] - 3]);
        let phi = Cocycle::Coboundary(f);
        let r1 = sample_holonomy(space);
        let r2 = Holonomy::new(
            space,
            vec![HolonomyPiece {
                domain: cyl(space, 3, &[2, 3, 6]),
                shift: LatticeVector(vec![1]),
            }],
        )
        .unwrap();
        let comp = r1.compose(&r2);
        for p in comp.pieces() {
            for &x in p.domain.refine_to(3).cells() {
                let q = r2.pieces().iter().find(|q| q.domain.contains_fine_cell(x, 3)).unwrap();
                let y = space.translate_cell(x, q.shift.coords(), 3);
                let s = r1.pieces().iter().find(|s| s.domain.contains_fine_cell(y, 3)).unwrap();
                let mut lhs = vec![0];
                phi.eval_cell(&space, p.shift.coords(), x, 3, &mut lhs);
                let mut rhs = vec![0];
                phi.eval_cell(&space, q.shift.coords(), x, 3, &mut rhs);
                phi.eval_cell(&space, s.shift.coords(), y, 3, &mut rhs);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn homomorphism_scan_matches_enumeration() {
        let space = od(1);
        let g = ValueGroup::signed_basis(1);
        let phi = Cocycle::Homomorphism(Homomorphism { images: vec![vec![2]] });
        let a = cyl(space, 2, &[0, 1]);
        let target = g.value(vec![4]);
        let levels = LevelBox::ball(1, 6);
        let found = essential_value_scan(&g, &phi, &a, &target, 0.5, &levels);
        let expected: Vec<LatticeVector> = levels
            .points()
            .filter(|n| (2 * n.0[0] - 4).abs() == 0 && !a.intersection(&a.translate(&-n)).is_empty())
            .collect();
        assert_eq!(found, expected);
        let zero = essential_value_scan(&g, &phi, &a, &g.zero(), 0.5, &levels);
        assert!(zero.contains(&LatticeVector(vec![0])));
    }

    #[test]
    fn stability_examples() {
        let space = od(1);
        let g = ValueGroup::signed_basis(1);
        let t = RokhlinTower::with_depth(space, 4).unwrap();
        // F = 1 on levels [-4, 3], giving ∇F(8, x) = 1 there
        let f = StepFunction::from_levels(t.clone(), 1, |k| vec![(k.0[0] >= -4 && k.0[0] < 4) as i64]);
        let psi = Cocycle::Coboundary(f.clone());
        let a = MeasurableSet::whole(space);
        let dom = MeasurableSet::from_cells(
            space,
            4,
            (-4i64..4)
                .map(|k| t.level_set(&LatticeVector(vec![k])).cells()[0])
                .collect(),
        );
        let r = Holonomy::new(
            space,
            vec![HolonomyPiece {
                domain: dom,
                shift: LatticeVector(vec![8]),
            }],
        )
        .unwrap();
        let target = EvcTarget {
            set: a,
            sigma: g.value(vec![1]),
            epsilon: 0.5,
            c: Rational::new(1, 4),
        };
        let cert = check_evc(&g, &psi, &r, &target).unwrap();
        assert_eq!(cert.measured, Rational::new(1, 2));

        let same = stability_recheck(&g, &psi, &psi, &cert, Rational::new(1, 100));
        assert!(same.holds);
        assert_eq!(same.excised, Rational::zero());

        // a spoiler on one level, inside the holonomy paths
        let mut spoiled = f.clone();
        let cell = t.level_set(&LatticeVector(vec![0])).cells()[0];
        spoiled.set(cell, &[5]);
        let phi = Cocycle::Coboundary(spoiled);
        let rep = stability_recheck(&g, &phi, &psi, &cert, Rational::one());
        assert!(rep.holds);
        assert_eq!(rep.excised, Rational::new(1, 16));
        let c = rep.certificate.unwrap();
        c.validate(&g, &phi).unwrap();

        // a perturbation wider than the slack breaks the certificate
        let wide = StepFunction::from_levels(t, 1, |k| vec![(k.0[0] >= -4 && k.0[0] < -1) as i64]);
        let rep = stability_recheck(&g, &Cocycle::Coboundary(wide), &psi, &cert, Rational::one());
        assert!(!rep.holds);
    }

    #[test]
    fn tampered_measure_fails_validation() {
        let space = od(1);
        let g = ValueGroup::signed_basis(1);
        let a = cyl(space, 1, &[0]);
        let phi = zero_cocycle(space, 1);
        let target = EvcTarget {
            set: a.clone(),
            sigma: g.zero(),
            epsilon: 0.1,
            c: Rational::new(1, 2),
        };
        let mut cert = check_evc(&g, &phi, &Holonomy::identity(&a), &target).unwrap();
        cert.validate(&g, &phi).unwrap();
        let json = serde_json::to_string(&cert).unwrap();
        let back: EvcCertificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cert);
        cert.measured = Rational::new(3, 4);
        let err = cert.validate(&g, &phi).unwrap_err();
        assert!(err.to_string().contains("measured"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_epsilon_and_c(cells in proptest::collection::btree_set(0u64..16, 1..10),
                                         shift in -5i64..5, eps in 0.1f64..3.0, c_num in 0i128..8) {
                let space = od(1);
                let g = ValueGroup::signed_basis(1);
                let t = RokhlinTower::with_depth(space, 4).unwrap();
                let f = StepFunction::from_levels(t, 1, |k| vec![(k.0[0] % 3).abs()]);
                let phi = Cocycle::Coboundary(f);
                let dom = MeasurableSet::from_cells(space, 4, cells.into_iter().collect());
                let r = Holonomy::new(space, vec![HolonomyPiece { domain: dom.clone(), shift: LatticeVector(vec![shift]) }]).unwrap();
                let a = dom.union(&dom.translate(&LatticeVector(vec![shift])));
                let target = EvcTarget { set: a, sigma: g.value(vec![1]), epsilon: eps, c: Rational::new(c_num, 8) };
                if check_evc(&g, &phi, &r, &target).is_ok() {
                    let mut wider = target.clone();
                    wider.epsilon *= 2.0;
                    prop_assert!(check_evc(&g, &phi, &r, &wider).is_ok());
                    let mut lower = target.clone();
                    lower.c = lower.c / 2;
                    prop_assert!(check_evc(&g, &phi, &r, &lower).is_ok());
                }
                prop_assert_eq!(r.domain().measure(), r.image().measure());
            }
        }
    }
}
