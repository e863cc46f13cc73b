//! The tower engine for bounded cocycles with ergodic skew products.
//!
//! Each stage refines the tower, adds a generator `σ` on an inner block of
//! columns and records a holonomy that shifts that block half a tower over,
//! so the coboundary displacement along the holonomy is exactly `σ`. Earlier
//! certificates are carried forward by exact excision.

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{sub_into, Cocycle, GroupValue, StepFunction, ValueGroup};
use crate::error::{Error, Result};
use crate::evc::{
    check_evc, diff_measure, generator_diff, recheck_with_diff, EvcCertificate, EvcTarget, Holonomy, HolonomyPiece,
};
use crate::lattice::{LatticeVector, LevelBox};
use crate::measure_space::{box_frequency, rational_string, MeasurableSet, Odometer, Rational};
use crate::towers::{purify, Purification, RokhlinTower};

/// How the depth of each new tower is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalePolicy {
    /// Breadth at least `2𝔫/δ`, and the change measure below `ε`.
    Conservative,
    /// Smallest depth whose exact change measure is below `ε`.
    Exact,
}

impl std::str::FromStr for ScalePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conservative" => Ok(ScalePolicy::Conservative),
            "exact" => Ok(ScalePolicy::Exact),
            other => Err(Error::Parse(format!("unknown scale policy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub policy: ScalePolicy,
    pub depth_limit: u32,
    /// Certified fraction `r`; must be below `1/2^{d+3}`.
    #[serde(with = "rational_string")]
    pub r: Rational,
    /// Radius of the neighbourhood `U` recorded in certificates.
    pub neighborhood: f64,
}

impl StepConfig {
    pub fn new(dim: usize, policy: ScalePolicy, depth_limit: u32) -> Self {
        StepConfig {
            policy,
            depth_limit,
            r: Rational::new(1, 1i128 << (dim + 4)),
            neighborhood: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageState {
    pub transfer: StepFunction,
    pub purification: Purification,
    pub certificates: Vec<EvcCertificate>,
    #[serde(with = "rational_string")]
    pub epsilon: Rational,
    pub position: usize,
}

impl StageState {
    /// `F_0 ≡ 0` on the one-level tower.
    pub fn initial(space: Odometer, group: &ValueGroup) -> Self {
        let tower = RokhlinTower::with_depth(space, 0).expect("depth 0 tower");
        let purification = purify(&tower, &[MeasurableSet::whole(space)]).expect("trivial partition");
        StageState {
            transfer: StepFunction::zeros(tower, group.pairs()),
            purification,
            certificates: Vec::new(),
            epsilon: Rational::one(),
            position: 0,
        }
    }

    pub fn cocycle(&self) -> Cocycle {
        Cocycle::Coboundary(self.transfer.clone())
    }

    pub fn tower(&self) -> &RokhlinTower {
        self.transfer.tower()
    }
}

/// Everything measured during one application of the inductive step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub sigma: Vec<i64>,
    pub set_index: Option<usize>,
    #[serde(with = "rational_string")]
    pub epsilon: Rational,
    #[serde(with = "rational_string")]
    pub delta: Rational,
    pub depth: u32,
    pub column_depth: u32,
    pub breadth: u64,
    /// Box scale from `choose_scale` (conservative policy only).
    pub scale: Option<u64>,
    pub blocks: usize,
    #[serde(with = "rational_string")]
    pub good_base_measure: Rational,
    /// Measure zeroed to restore internality before adding `σ`.
    #[serde(with = "rational_string")]
    pub collar_change: Rational,
    /// `m([∇F(e_i,·) ≠ ∇F_0(e_i,·) for some i])`.
    #[serde(with = "rational_string")]
    pub change_measure: Rational,
    #[serde(with = "rational_string")]
    pub measured: Rational,
    #[serde(with = "rational_string")]
    pub threshold: Rational,
    /// Measure excised from each earlier certificate.
    #[serde(with = "vec_rational")]
    pub excised: Vec<Rational>,
    pub internal: bool,
    pub incremental: bool,
}

mod vec_rational {
    use crate::measure_space::{parse_rational, rational_to_string, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(rational_to_string))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|t| parse_rational(t).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Smallest side `n` such that, for every member `a` of `alpha`, the
/// frequency of `a` along every box `[0,n)^d` orbit segment is within
/// `delta` of `m(a)`. A side of `b^q` (q the partition depth) is always exact.
pub fn choose_scale(alpha: &[MeasurableSet], delta: Rational) -> u64 {
    let Some(first) = alpha.first() else {
        return 1;
    };
    let space = first.space();
    let q = alpha.iter().map(|a| a.depth()).max().unwrap_or(0);
    let exact = space.modulus(q);
    // brute force costs (phases × offsets) per member and side
    let cost = (space.cell_count(q) as u128).pow(2) * alpha.len() as u128;
    if cost > 50_000_000 {
        return exact;
    }
    for n in 1..exact {
        let shape = LevelBox::cube(space.dim, 0, n as i64 - 1);
        let ok = alpha.iter().all(|a| {
            let a = a.refine_to(q);
            box_frequency(&a, &shape, 0).deviation <= delta
        });
        if ok {
            return n;
        }
    }
    exact
}

/// Geometry of the inner block for a tower of depth `depth` with columns of
/// depth `column_depth`: `(columns per axis c, first inner column, inner width w)`.
fn inner_geometry(space: &Odometer, depth: u32, column_depth: u32) -> (u64, u64, u64) {
    let c = space.modulus(depth) / space.modulus(column_depth);
    let first = c.div_ceil(4);
    (c, first, c - 2 * first)
}

/// Exact measure of the points where adding `σ` on the inner block changes
/// some generator value: `(W^d − (W−1)^d + d·W^{d−1}) / s^d`, `W = w·L`.
pub fn inner_change_measure(space: &Odometer, depth: u32, column_depth: u32) -> Rational {
    let (_, _, w) = inner_geometry(space, depth, column_depth);
    let width = (w * space.modulus(column_depth)) as i128;
    let d = space.dim as u32;
    let count = width.pow(d) - (width - 1).pow(d) + d as i128 * width.pow(d - 1);
    Rational::new(count, space.cell_count(depth) as i128)
}

fn min_column_ratio_depth(space: &Odometer) -> u32 {
    (1..).find(|&k| space.modulus(k) >= 3).unwrap()
}

/// `A_k = A ∩ [F_0 = v]` for the distinct values `v`, plus `X ∖ A`.
fn value_partition(f0: &StepFunction, a: &MeasurableSet) -> Vec<MeasurableSet> {
    let space = a.space();
    let depth = f0.depth().max(a.depth());
    let cells = a.refine_to(depth);
    let mut groups: Vec<(Vec<i64>, Vec<u64>)> = Vec::new();
    for &c in cells.cells() {
        let v = f0.at_depth(c, depth);
        match groups.iter_mut().find(|(k, _)| k.as_slice() == v) {
            Some((_, list)) => list.push(c),
            None => groups.push((v.to_vec(), vec![c])),
        }
    }
    let mut out: Vec<MeasurableSet> = groups
        .into_iter()
        .map(|(_, list)| MeasurableSet::from_cells(space, depth, list).canonical())
        .collect();
    let rest = a.complement();
    if !rest.is_empty() {
        out.push(rest.canonical());
    }
    out
}

/// Common refinement of two partitions.
fn join(p: &[MeasurableSet], q: &[MeasurableSet]) -> Vec<MeasurableSet> {
    let mut out = Vec::new();
    for a in p {
        for b in q {
            let c = a.intersection(b);
            if !c.is_empty() {
                out.push(c.canonical());
            }
        }
    }
    out
}

/// Result of one inductive step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: StageState,
    pub certificate: EvcCertificate,
    pub record: StageRecord,
}

/// `inductive_step`: from a `T_0`-internal, `S`-incremental `F_0`, builds a
/// finer tower and an internal, incremental `F` with
/// `m([∇F ≠ ∇F_0]) < ε` and a holonomy inside `A` along which `∇F = σ`
/// on a set of measure greater than `r·m(A)`.
pub fn inductive_step(
    state: &StageState,
    group: &ValueGroup,
    sigma: &GroupValue,
    a: &MeasurableSet,
    epsilon: Rational,
    config: &StepConfig,
) -> Result<StepOutcome> {
    let space = state.tower().space();
    let d = space.dim;
    if a.space() != space {
        return Err(Error::InvalidArgument("target set lives on another space".into()));
    }
    if sigma.coeffs.len() != group.pairs() {
        return Err(Error::DimensionMismatch {
            expected: group.pairs(),
            got: sigma.coeffs.len(),
        });
    }
    if sigma.is_zero() || !group.in_s_or_zero(&sigma.coeffs) {
        return Err(Error::InvalidArgument(format!("σ = {sigma} is not an element of S")));
    }
    if a.measure() <= Rational::zero() {
        return Err(Error::InvalidArgument("target set must have positive measure".into()));
    }
    if epsilon <= Rational::zero() {
        return Err(Error::InvalidArgument("ε must be positive".into()));
    }
    let r_max = Rational::new(1, 1i128 << (d + 3));
    if config.r <= Rational::zero() || config.r >= r_max {
        return Err(Error::InvalidArgument(format!(
            "r must lie in (0, 1/{})",
            1i128 << (d + 3)
        )));
    }

    let f0 = &state.transfer;
    let p0 = f0.depth();
    let column_depth = p0.max(a.depth());
    let delta = epsilon.min(Rational::one()) / 8;

    // the partition α̂ and the scale
    let alpha = value_partition(f0, a);
    let old_base = state.tower().base().clone();
    let base_split: Vec<MeasurableSet> = [old_base.clone(), old_base.complement()]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    let alpha_hat = join(&alpha, &base_split);

    let min_depth = column_depth + min_column_ratio_depth(&space);
    let (scale, min_breadth) = match config.policy {
        ScalePolicy::Conservative => {
            let n = choose_scale(&alpha_hat, delta).max(state.tower().breadth());
            let need = (Rational::from_integer(2 * n as i128) / delta).ceil().to_integer() as u64;
            (Some(n), need)
        }
        ScalePolicy::Exact => (None, 0),
    };
    let mut depth = min_depth;
    loop {
        if depth > config.depth_limit || depth > space.max_depth() {
            return Err(Error::InfeasibleBreadth {
                required: depth,
                limit: config.depth_limit.min(space.max_depth()),
                detail: format!(
                    "ε = {}, breadth ≥ {min_breadth}, column depth {column_depth}",
                    crate::measure_space::rational_to_string(&epsilon)
                ),
            });
        }
        let s = space.modulus(depth);
        let breadth = (s / 2).min(s - 1 - s / 2);
        if breadth >= min_breadth && inner_change_measure(&space, depth, column_depth) < epsilon {
            break;
        }
        depth += 1;
    }

    let tower = RokhlinTower::with_depth(space, depth)?;
    let purification = purify(&tower, &alpha_hat)?;
    // 𝔞_𝔫 is everything, so every block is good
    let good_base_measure = purification
        .blocks()
        .iter()
        .fold(Rational::zero(), |acc, b| acc + b.measure());

    // F_1: F_0 lifted, zeroed on any old column that meets the new boundary
    let mut f = f0.lift(tower.clone());
    let collar: Vec<u64> = (0..f.cell_count())
        .into_par_iter()
        .filter(|&c| {
            f.at(c).iter().any(|&x| x != 0)
                && tower
                    .level_of_cell(c, depth)
                    .map_or(true, |k| tower.is_boundary_level(&k))
        })
        .collect();
    for &c in &collar {
        f.set(c, &vec![0; group.pairs()]);
    }
    let collar_change = Rational::new(collar.len() as i128, space.cell_count(depth) as i128);

    // F = F_1 + σ on the inner block of columns; in residue coordinates the
    // tower occupies [0, s)^d with boundary at residues 0 and s-1
    let (c, first, w) = inner_geometry(&space, depth, column_depth);
    let l = space.modulus(column_depth) as i64;
    let inner = LevelBox::cube(d, first as i64 * l, (first + w) as i64 * l - 1);
    let mut inner_cells = Vec::with_capacity(inner.len() as usize);
    for r in inner.points() {
        let residues: Vec<u64> = r.coords().iter().map(|&x| x as u64).collect();
        let cell = space.encode(&residues, depth);
        let mut v = f.at(cell).to_vec();
        crate::cocycle::add_into(&mut v, &sigma.coeffs);
        f.set(cell, &v);
        inner_cells.push(cell);
    }
    let inner_set = MeasurableSet::from_cells(space, depth, inner_cells);

    // holonomy: shift the inner block ⌊c/2⌋ columns along the first axis
    let mut shift = LatticeVector::zero(d);
    shift.0[0] = (c / 2) as i64 * l;
    let domain = a.intersection(&inner_set);
    let holonomy = Holonomy::new(space, vec![HolonomyPiece { domain, shift }])?;
    let cocycle = Cocycle::Coboundary(f.clone());
    let target = EvcTarget {
        set: a.clone(),
        sigma: sigma.clone(),
        epsilon: config.neighborhood,
        c: config.r,
    };
    let certificate = check_evc(group, &cocycle, &holonomy, &target)?;

    // exact change measure and the postconditions
    let old = Cocycle::Coboundary(f0.clone());
    let diff = generator_diff(&space, &cocycle, &old, depth, group.pairs());
    let change_measure = diff_measure(&space, &diff, depth);
    let internal = f.is_internal();
    let incremental = f.is_incremental(group);
    if !internal || !incremental {
        return Err(Error::Verification(format!(
            "stage output lost a postcondition (internal: {internal}, incremental: {incremental})"
        )));
    }
    if change_measure >= epsilon {
        return Err(Error::Verification("change measure reached ε".into()));
    }

    // carry the earlier certificates forward
    let mut certificates = Vec::with_capacity(state.certificates.len() + 1);
    let mut excised = Vec::with_capacity(state.certificates.len());
    for (i, cert) in state.certificates.iter().enumerate() {
        let report = recheck_with_diff(group, &cocycle, cert, &diff, depth);
        excised.push(report.excised);
        match report.certificate {
            Some(c) => certificates.push(c),
            None => {
                return Err(Error::Verification(format!(
                    "certificate {i} did not survive stage {}",
                    state.position + 1
                )))
            }
        }
    }
    certificates.push(certificate.clone());

    let record = StageRecord {
        stage: state.position + 1,
        sigma: sigma.coeffs.clone(),
        set_index: None,
        epsilon,
        delta,
        depth,
        column_depth,
        breadth: tower.breadth(),
        scale,
        blocks: purification.blocks().len(),
        good_base_measure,
        collar_change,
        change_measure,
        measured: certificate.measured,
        threshold: config.r * a.measure(),
        excised,
        internal,
        incremental,
    };
    Ok(StepOutcome {
        state: StageState {
            transfer: f,
            purification,
            certificates,
            epsilon,
            position: state.position + 1,
        },
        certificate,
        record,
    })
}

/// The list of `(σ_n, A_n)` with their `ε_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub sigmas: Vec<GroupValue>,
    pub sets: Vec<MeasurableSet>,
    /// `(σ index, set index)` per stage.
    pub pairs: Vec<(usize, usize)>,
    #[serde(with = "vec_rational")]
    pub epsilons: Vec<Rational>,
}

impl Schedule {
    /// Every `(σ, A)` once per round, `ε_n = 2^{-(n+1)}`.
    pub fn round_robin(sigmas: Vec<GroupValue>, sets: Vec<MeasurableSet>, rounds: usize) -> Self {
        let mut pairs = Vec::new();
        for _ in 0..rounds {
            for i in 0..sigmas.len() {
                for j in 0..sets.len() {
                    pairs.push((i, j));
                }
            }
        }
        let epsilons = (1..=pairs.len()).map(|n| Rational::new(1, 1i128 << (n + 1))).collect();
        Schedule {
            sigmas,
            sets,
            pairs,
            epsilons,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.len() != self.epsilons.len() {
            return Err(Error::InvalidArgument("one ε per stage is required".into()));
        }
        for (n, e) in self.epsilons.iter().enumerate() {
            let bound = Rational::new(1, 1i128 << (n + 1));
            if *e <= Rational::zero() || *e >= bound {
                return Err(Error::InvalidArgument(format!(
                    "ε_{} must lie in (0, 2^-{})",
                    n + 1,
                    n + 1
                )));
            }
            if n > 0 && *e >= self.epsilons[n - 1] {
                return Err(Error::InvalidArgument("ε must be strictly decreasing".into()));
            }
        }
        if self
            .pairs
            .iter()
            .any(|&(i, j)| i >= self.sigmas.len() || j >= self.sets.len())
        {
            return Err(Error::InvalidArgument("schedule index out of range".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionLog {
    pub stages: Vec<StageRecord>,
    /// `Σ_n m([∇F_n ≠ ∇F_{n−1}])`.
    #[serde(with = "rational_string")]
    pub total_change: Rational,
    #[serde(with = "rational_string")]
    pub epsilon_sum: Rational,
    /// `m([∇F(e_i,·) ≠ ∇F_n(e_i,·) for some i])` for the final `F`, per stage.
    #[serde(with = "vec_rational")]
    pub stabilization: Vec<Rational>,
    /// `Σ_{m>n} ε_m` per stage.
    #[serde(with = "vec_rational")]
    pub tail_bounds: Vec<Rational>,
    /// Whether each certificate revalidates against the final cocycle.
    pub final_valid: Vec<bool>,
    pub final_incremental: bool,
    pub final_internal: bool,
}

/// Final stage of a construction run.
#[derive(Clone, Debug)]
pub struct Construction {
    pub cocycle: Cocycle,
    pub state: StageState,
    pub log: ConstructionLog,
}

/// `run_construction`: applies the inductive step along the schedule and
/// revalidates every certificate against the final cocycle.
pub fn run_construction(
    space: Odometer,
    group: &ValueGroup,
    schedule: &Schedule,
    config: &StepConfig,
) -> Result<Construction> {
    schedule.validate()?;
    let mut state = StageState::initial(space, group);
    let mut transfers = vec![state.transfer.clone()];
    let mut stages = Vec::new();
    for (n, &(si, ai)) in schedule.pairs.iter().enumerate() {
        let out = inductive_step(
            &state,
            group,
            &schedule.sigmas[si],
            &schedule.sets[ai],
            schedule.epsilons[n],
            config,
        )?;
        let mut record = out.record;
        record.set_index = Some(ai);
        stages.push(record);
        state = out.state;
        transfers.push(state.transfer.clone());
    }
    let cocycle = state.cocycle();
    let depth = state.transfer.depth();
    let stabilization: Vec<Rational> = transfers[1..]
        .iter()
        .map(|t| {
            let diff = generator_diff(&space, &cocycle, &Cocycle::Coboundary(t.clone()), depth, group.pairs());
            diff_measure(&space, &diff, depth)
        })
        .collect();
    let tail_bounds = (0..schedule.pairs.len())
        .map(|n| schedule.epsilons[n + 1..].iter().fold(Rational::zero(), |a, e| a + e))
        .collect();
    let final_valid = state
        .certificates
        .iter()
        .map(|c| c.validate(group, &cocycle).is_ok())
        .collect();
    let log = ConstructionLog {
        total_change: stages.iter().fold(Rational::zero(), |a, s| a + s.change_measure),
        epsilon_sum: schedule.epsilons.iter().fold(Rational::zero(), |a, e| a + e),
        stabilization,
        tail_bounds,
        final_valid,
        final_incremental: state.transfer.is_incremental(group),
        final_internal: state.transfer.is_internal(),
        stages,
    };
    Ok(Construction { cocycle, state, log })
}

/// Smallest shift norm (Linf) among the certificates for each `(σ, A)` pair.
pub fn certificate_reach(state: &StageState, sigma: &GroupValue, a: &MeasurableSet) -> Option<u64> {
    state
        .certificates
        .iter()
        .filter(|c| c.sigma == *sigma && c.set == *a)
        .flat_map(|c| {
            c.holonomy
                .pieces()
                .iter()
                .map(|p| p.shift.norm(crate::lattice::NormKind::Linf))
        })
        .min()
}

/// `∇F(e_i, x) − ∇F_0(e_i, x)` at a cell, for tests and reports.
pub fn generator_delta(f: &StepFunction, f0: &StepFunction, axis: usize, cell: u64) -> Vec<i64> {
    let pairs = f.pairs();
    let mut a = vec![0; pairs];
    f.generator_step(axis, cell, &mut a);
    let space = f.space();
    let depth = f.depth();
    let next = space.shift_cell(cell, axis, 1, depth);
    let mut b = f0.at_depth(cell, depth).to_vec();
    sub_into(&mut b, f0.at_depth(next, depth));
    sub_into(&mut a, &b);
    a
}
