//! Block cocycles over full shifts: random-walk skew products, coboundary plus
//! homomorphism decompositions, and the torus-lattice action used to build an
//! ergodic product with a homomorphism.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure_space::{splitmix64, ShiftPoint};
use crate::topo::{visit_l1_sphere, Configuration};

const MAX_PATTERNS: u64 = 1 << 22;

/// Sites of the box `Π [0, extents_c)`, first axis fastest.
pub fn box_sites(extents: &[u32]) -> Vec<Vec<i64>> {
    let total: usize = extents.iter().map(|&e| e as usize).product();
    let mut out = Vec::with_capacity(total);
    for mut i in 0..total {
        let mut s = Vec::with_capacity(extents.len());
        for &e in extents {
            s.push((i % e as usize) as i64);
            i /= e as usize;
        }
        out.push(s);
    }
    out
}

fn pattern_count(alphabet: u32, sites: usize) -> Result<u64> {
    (alphabet as u64)
        .checked_pow(sites as u32)
        .filter(|c| *c <= MAX_PATTERNS)
        .ok_or_else(|| Error::InvalidArgument(format!("{sites} sites over {alphabet} symbols is too many patterns")))
}

fn decode(mut index: u64, alphabet: u32, len: usize) -> Vec<u32> {
    (0..len)
        .map(|_| {
            let s = (index % alphabet as u64) as u32;
            index /= alphabet as u64;
            s
        })
        .collect()
}

/// A function of the symbols on the box `[0,depth)^dim`, with values in `R^D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockFunction {
    alphabet: u32,
    dim: usize,
    depth: u32,
    value_dim: usize,
    /// One value per window pattern, indexed base `alphabet`, first site least significant.
    table: Vec<Vec<f64>>,
}

impl BlockFunction {
    pub fn from_fn(
        alphabet: u32,
        dim: usize,
        depth: u32,
        value_dim: usize,
        mut f: impl FnMut(&[u32]) -> Vec<f64>,
    ) -> Result<Self> {
        if alphabet < 1 || dim == 0 || depth == 0 || value_dim == 0 {
            return Err(Error::InvalidArgument("block function needs positive sizes".into()));
        }
        let len = (depth as usize).pow(dim as u32);
        let count = pattern_count(alphabet, len)?;
        let mut table = Vec::with_capacity(count as usize);
        for i in 0..count {
            let v = f(&decode(i, alphabet, len));
            if v.len() != value_dim {
                return Err(Error::DimensionMismatch {
                    expected: value_dim,
                    got: v.len(),
                });
            }
            table.push(v);
        }
        Ok(BlockFunction {
            alphabet,
            dim,
            depth,
            value_dim,
            table,
        })
    }

    pub fn constant(alphabet: u32, dim: usize, value: Vec<f64>) -> Result<Self> {
        let d = value.len();
        BlockFunction::from_fn(alphabet, dim, 1, d, |_| value.clone())
    }

    /// Random values on the dyadic grid `2^-bits Z ∩ [-1,1]`, so sums and
    /// differences of a few values are exact in floating point.
    pub fn random_dyadic(
        alphabet: u32,
        dim: usize,
        depth: u32,
        value_dim: usize,
        bits: u32,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (1u64 << bits) as f64;
        let top = 1i64 << bits;
        BlockFunction::from_fn(alphabet, dim, depth, value_dim, |_| {
            (0..value_dim)
                .map(|_| rng.gen_range(-top..=top) as f64 / scale)
                .collect()
        })
    }

    /// Wraps an explicit table, one value per pattern in index order.
    pub fn from_table(alphabet: u32, dim: usize, depth: u32, value_dim: usize, table: Vec<Vec<f64>>) -> Result<Self> {
        if alphabet < 1 || dim == 0 || depth == 0 || value_dim == 0 {
            return Err(Error::InvalidArgument("block function needs positive sizes".into()));
        }
        let count = pattern_count(alphabet, (depth as usize).pow(dim as u32))?;
        if table.len() as u64 != count {
            return Err(Error::DimensionMismatch {
                expected: count as usize,
                got: table.len(),
            });
        }
        if let Some(v) = table.iter().find(|v| v.len() != value_dim) {
            return Err(Error::DimensionMismatch {
                expected: value_dim,
                got: v.len(),
            });
        }
        Ok(BlockFunction {
            alphabet,
            dim,
            depth,
            value_dim,
            table,
        })
    }

    pub fn alphabet(&self) -> u32 {
        self.alphabet
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn window(&self) -> Vec<Vec<i64>> {
        box_sites(&vec![self.depth; self.dim])
    }

    /// `f(T_n x)`.
    pub fn eval_at<C: Configuration + ?Sized>(&self, x: &C, n: &[i64]) -> &[f64] {
        let d = self.dim;
        let k = self.depth as i64;
        let len = (self.depth as usize).pow(d as u32);
        let mut buf = vec![0i64; d];
        let mut idx = 0usize;
        for t in (0..len).rev() {
            let mut r = t;
            for c in 0..d {
                buf[c] = (r % k as usize) as i64 + n[c];
                r /= k as usize;
            }
            idx = idx * self.alphabet as usize + x.symbol(&buf) as usize;
        }
        &self.table[idx]
    }

    pub fn eval<C: Configuration + ?Sized>(&self, x: &C) -> &[f64] {
        self.eval_at(x, &vec![0; self.dim])
    }

    /// Mean under the uniform product measure.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.value_dim];
        for v in &self.table {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        let n = self.table.len() as f64;
        m.iter().map(|a| a / n).collect()
    }

    /// A constant `M` with `‖f(x) - f(y)‖_2 <= M θ^{t(x,y)}`.
    pub fn holder_constant(&self, theta: f64) -> f64 {
        let mut osc: f64 = 0.0;
        for a in &self.table {
            for b in &self.table {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                osc = osc.max(d.sqrt());
            }
        }
        // Points agreeing on the window have equal values, and the window lies in
        // the L1 ball of radius dim*(depth-1).
        let reach = (self.dim as i32) * (self.depth as i32 - 1);
        osc * theta.powi(-(reach + 1))
    }
}

/// A cocycle over the shift given by block functions on the generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCocycle {
    generators: Vec<BlockFunction>,
}

impl BlockCocycle {
    pub fn new(generators: Vec<BlockFunction>) -> Result<Self> {
        let first = generators
            .first()
            .ok_or_else(|| Error::InvalidArgument("no generators".into()))?;
        if generators.len() != first.dim {
            return Err(Error::DimensionMismatch {
                expected: first.dim,
                got: generators.len(),
            });
        }
        if generators
            .iter()
            .any(|g| g.alphabet != first.alphabet || g.depth != first.depth || g.value_dim != first.value_dim)
        {
            return Err(Error::InvalidArgument(
                "generator tables must share alphabet, depth and value dimension".into(),
            ));
        }
        Ok(BlockCocycle { generators })
    }

    /// `F(e_i, x) = g(T_{e_i} x) - g(x) + H(e_i)`.
    pub fn synthesize(g: &BlockFunction, h: &HomomorphismH) -> Result<Self> {
        if h.images.len() != g.dim || h.images.iter().any(|v| v.len() != g.value_dim) {
            return Err(Error::InvalidArgument(
                "homomorphism does not match the block function".into(),
            ));
        }
        let depth = g.depth + 1;
        let ext = vec![depth; g.dim];
        let zero = vec![0i64; g.dim];
        let gens = (0..g.dim)
            .map(|i| {
                let mut e = vec![0i64; g.dim];
                e[i] = 1;
                BlockFunction::from_fn(g.alphabet, g.dim, depth, g.value_dim, |pat| {
                    let view = PatternView {
                        extents: &ext,
                        symbols: pat,
                    };
                    let after = g.eval_at(&view, &e);
                    let before = g.eval_at(&view, &zero);
                    after
                        .iter()
                        .zip(before)
                        .zip(&h.images[i])
                        .map(|((a, b), c)| a - b + c)
                        .collect()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BlockCocycle::new(gens)
    }

    pub fn from_homomorphism(alphabet: u32, h: &HomomorphismH) -> Result<Self> {
        let gens = h
            .images
            .iter()
            .map(|v| BlockFunction::constant(alphabet, h.images.len(), v.clone()))
            .collect::<Result<Vec<_>>>()?;
        BlockCocycle::new(gens)
    }

    /// Plain-text table:
    ///
    /// ```text
    /// blocks alphabet=2 dim=2 depth=2 valdim=1
    /// generator 0
    /// 0000 0.25        (pattern symbols in site order, then the value)
    /// ...
    /// end
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "blocks alphabet={} dim={} depth={} valdim={}\n",
            self.alphabet(),
            self.dim(),
            self.depth(),
            self.value_dim()
        );
        let len = (self.depth() as usize).pow(self.dim() as u32);
        let sep = if self.alphabet() > 10 { "." } else { "" };
        for (i, g) in self.generators.iter().enumerate() {
            out.push_str(&format!("generator {i}\n"));
            for (p, v) in g.table.iter().enumerate() {
                let pat: Vec<String> = decode(p as u64, g.alphabet, len)
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                let vals: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
                out.push_str(&format!("{} {}\n", pat.join(sep), vals.join(" ")));
            }
            out.push_str("end\n");
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty block table".into()))?;
        let rest = header
            .strip_prefix("blocks")
            .ok_or_else(|| Error::Parse("block table must start with `blocks`".into()))?;
        let mut sizes = [None; 4];
        for tok in rest.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token `{tok}`")))?;
            let slot = match k {
                "alphabet" => 0,
                "dim" => 1,
                "depth" => 2,
                "valdim" => 3,
                _ => return Err(Error::Parse(format!("unknown header key `{k}`"))),
            };
            sizes[slot] = Some(
                v.parse::<u64>()
                    .map_err(|_| Error::Parse(format!("bad header value `{tok}`")))?,
            );
        }
        let [Some(a), Some(d), Some(k), Some(vd)] = sizes else {
            return Err(Error::Parse("header needs alphabet, dim, depth and valdim".into()));
        };
        let (a, d, k, vd) = (a as u32, d as usize, k as u32, vd as usize);
        let mut gens = Vec::new();
        while let Some(line) = lines.next() {
            let idx = line
                .strip_prefix("generator")
                .and_then(|r| r.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Parse(format!("expected `generator <i>`, got `{line}`")))?;
            if idx != gens.len() {
                return Err(Error::Parse(format!("generator {idx} out of order")));
            }
            let mut table = Vec::new();
            loop {
                let row = lines.next().ok_or_else(|| Error::Parse("missing `end`".into()))?;
                if row == "end" {
                    break;
                }
                let vals = row
                    .split_whitespace()
                    .skip(1)
                    .map(|x| x.parse::<f64>().map_err(|_| Error::Parse(format!("bad value `{x}`"))))
                    .collect::<Result<Vec<f64>>>()?;
                table.push(vals);
            }
            gens.push(BlockFunction::from_table(a, d, k, vd, table)?);
        }
        BlockCocycle::new(gens)
    }

    pub fn generators(&self) -> &[BlockFunction] {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    pub fn alphabet(&self) -> u32 {
        self.generators[0].alphabet
    }

    pub fn depth(&self) -> u32 {
        self.generators[0].depth
    }

    pub fn value_dim(&self) -> usize {
        self.generators[0].value_dim
    }

    /// `F(n, x)` along the generator path of `n`.
    pub fn eval<C: Configuration + ?Sized>(&self, n: &[i64], x: &C) -> Vec<f64> {
        let mut out = vec![0.0; self.value_dim()];
        let mut pos = vec![0i64; self.dim()];
        for (i, &c) in n.iter().enumerate() {
            for _ in 0..c.abs() {
                if c > 0 {
                    for (o, v) in out.iter_mut().zip(self.generators[i].eval_at(x, &pos)) {
                        *o += v;
                    }
                    pos[i] += 1;
                } else {
                    pos[i] -= 1;
                    for (o, v) in out.iter_mut().zip(self.generators[i].eval_at(x, &pos)) {
                        *o -= v;
                    }
                }
            }
        }
        out
    }

    /// Largest violation of `F(e_i,x) + F(e_j,T_{e_i}x) = F(e_j,x) + F(e_i,T_{e_j}x)`
    /// over all patterns of the joint window.
    pub fn mixed_defect(&self) -> Result<f64> {
        let d = self.dim();
        let k = self.depth();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                let mut ext = vec![k; d];
                ext[i] += 1;
                ext[j] += 1;
                let sites = box_sites(&ext);
                let count = pattern_count(self.alphabet(), sites.len())?;
                let mut ei = vec![0i64; d];
                ei[i] = 1;
                let mut ej = vec![0i64; d];
                ej[j] = 1;
                let zero = vec![0i64; d];
                let a = self.alphabet();
                let local = (0..count)
                    .into_par_iter()
                    .map(|p| {
                        let pat = decode(p, a, sites.len());
                        let view = PatternView {
                            extents: &ext,
                            symbols: &pat,
                        };
                        let fi = &self.generators[i];
                        let fj = &self.generators[j];
                        let mut w: f64 = 0.0;
                        for c in 0..self.value_dim() {
                            let lhs = fi.eval_at(&view, &zero)[c] + fj.eval_at(&view, &ei)[c];
                            let rhs = fj.eval_at(&view, &zero)[c] + fi.eval_at(&view, &ej)[c];
                            w = w.max((lhs - rhs).abs());
                        }
                        w
                    })
                    .reduce(|| 0.0, f64::max);
                worst = worst.max(local);
            }
        }
        Ok(worst)
    }

    /// Values `F(n,x)` for `‖n‖_1 <= budget`, built outward from the origin.
    pub fn orbit_values<C: Configuration + ?Sized>(&self, x: &C, budget: u64) -> Vec<(Vec<i64>, Vec<f64>)> {
        let d = self.dim();
        let mut known: HashMap<Vec<i64>, Vec<f64>> = HashMap::new();
        let mut out = Vec::new();
        for r in 0..=budget {
            visit_l1_sphere(d, r, &mut |n| {
                let v = if r == 0 {
                    vec![0.0; self.value_dim()]
                } else {
                    let i = n.iter().position(|&c| c != 0).unwrap();
                    let mut m = n.to_vec();
                    let step = n[i].signum();
                    m[i] -= step;
                    let base = &known[&m];
                    if step > 0 {
                        let f = self.generators[i].eval_at(x, &m);
                        base.iter().zip(f).map(|(a, b)| a + b).collect()
                    } else {
                        let f = self.generators[i].eval_at(x, n);
                        base.iter().zip(f).map(|(a, b)| a - b).collect()
                    }
                };
                known.insert(n.to_vec(), v.clone());
                out.push((n.to_vec(), v));
                true
            });
        }
        out
    }
}

/// A finite pattern on a box viewed as a configuration (symbol 0 outside).
struct PatternView<'a> {
    extents: &'a [u32],
    symbols: &'a [u32],
}

impl Configuration for PatternView<'_> {
    fn dim(&self) -> usize {
        self.extents.len()
    }
    fn symbol(&self, site: &[i64]) -> u32 {
        let mut idx = 0usize;
        for c in (0..site.len()).rev() {
            let e = self.extents[c] as i64;
            if site[c] < 0 || site[c] >= e {
                return 0;
            }
            idx = idx * e as usize + site[c] as usize;
        }
        self.symbols[idx]
    }
}

/// `H(n) = Σ n_i H(e_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomomorphismH {
    pub images: Vec<Vec<f64>>,
}

/// What can be said about the closure of `H(Z^d)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageShape {
    /// The images span fewer dimensions than the value space.
    LowRank,
    /// All images are integer vectors, so the image group is discrete.
    Discrete,
    /// Full rank with non-integer images; floats cannot settle denseness.
    Undetermined,
}

impl HomomorphismH {
    pub fn new(images: Vec<Vec<f64>>) -> Self {
        HomomorphismH { images }
    }

    /// `H(n) = Σ_{j<d} n_j e_j + n_d α`, values in `R^{d-1}`.
    pub fn torus_example(alpha: &[f64]) -> Self {
        let k = alpha.len();
        let mut images: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let mut e = vec![0.0; k];
                e[j] = 1.0;
                e
            })
            .collect();
        images.push(alpha.to_vec());
        HomomorphismH { images }
    }

    pub fn apply(&self, n: &[i64]) -> Vec<f64> {
        let dd = self.images.first().map_or(0, |v| v.len());
        let mut out = vec![0.0; dd];
        for (c, img) in n.iter().zip(&self.images) {
            for (o, v) in out.iter_mut().zip(img) {
                *o += *c as f64 * v;
            }
        }
        out
    }

    /// Rank of the image vectors by Gaussian elimination.
    pub fn span_rank(&self, tol: f64) -> usize {
        let mut rows: Vec<Vec<f64>> = self.images.clone();
        let cols = rows.first().map_or(0, |r| r.len());
        let mut rank = 0;
        for c in 0..cols {
            let piv = (rank..rows.len()).max_by(|&a, &b| rows[a][c].abs().total_cmp(&rows[b][c].abs()));
            let Some(p) = piv else { break };
            if rows[p][c].abs() <= tol {
                continue;
            }
            rows.swap(rank, p);
            for r in 0..rows.len() {
                if r != rank {
                    let f = rows[r][c] / rows[rank][c];
                    for cc in 0..cols {
                        rows[r][cc] -= f * rows[rank][cc];
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    pub fn image_shape(&self, tol: f64) -> ImageShape {
        let dd = self.images.first().map_or(0, |v| v.len());
        if self.span_rank(tol) < dd {
            ImageShape::LowRank
        } else if self.images.iter().flatten().all(|v| (v - v.round()).abs() <= tol) {
            ImageShape::Discrete
        } else {
            ImageShape::Undetermined
        }
    }
}

/// Result of splitting a block cocycle into a coboundary and a homomorphism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub g: BlockFunction,
    pub h: HomomorphismH,
    /// Largest `|g(T_{e_i}x) - g(x) - H(e_i) + F(e_i,x)|` over all cylinders.
    pub residual: f64,
    pub depth: u32,
    /// `(depth, residual)` for every depth tried.
    pub attempts: Vec<(u32, f64)>,
    /// The splitting is only guaranteed from dimension two up.
    pub outside_guarantee: bool,
    pub image_shape: ImageShape,
}

/// Solves `g(T_{e_i} x) - g(x) = H(e_i) - F(e_i,x)` on cylinders of increasing
/// depth, with `H(e_i)` the exact mean of `F(e_i,·)`.
pub fn decompose_block_cocycle(f: &BlockCocycle, depth_limit: u32, tol: f64) -> Result<Decomposition> {
    let d = f.dim();
    if d >= 2 {
        let defect = f.mixed_defect()?;
        if defect > tol {
            return Err(Error::InconsistentCocycle(format!("mixed relation fails by {defect}")));
        }
    }
    let h = HomomorphismH::new(f.generators.iter().map(|g| g.mean()).collect());
    let mut attempts = Vec::new();
    let mut best: Option<(BlockFunction, f64, u32)> = None;
    for depth in 1..=depth_limit {
        let (g, residual) = solve_transfer(f, &h, depth)?;
        attempts.push((depth, residual));
        let better = best.as_ref().map_or(true, |b| residual < b.1);
        if better {
            best = Some((g, residual, depth));
        }
        if residual < tol {
            break;
        }
    }
    let (g, residual, depth) = best.ok_or_else(|| Error::InvalidArgument("depth limit must be positive".into()))?;
    if !(residual < tol) {
        return Err(Error::NoSolution(format!(
            "best residual {residual} at depth {depth} is not below {tol} (depth limit {depth_limit})"
        )));
    }
    Ok(Decomposition {
        g,
        image_shape: h.image_shape(1e-12),
        h,
        residual,
        depth,
        attempts,
        outside_guarantee: d < 2,
    })
}

struct Equation {
    from: usize,
    to: usize,
    rhs: Vec<f64>,
}

fn solve_transfer(f: &BlockCocycle, h: &HomomorphismH, depth: u32) -> Result<(BlockFunction, f64)> {
    let d = f.dim();
    let a = f.alphabet();
    let k = f.depth();
    let dd = f.value_dim();
    let gsites = box_sites(&vec![depth; d]);
    let unknowns = pattern_count(a, gsites.len())? as usize;
    let mut eqs = Vec::new();
    for i in 0..d {
        let ext: Vec<u32> = (0..d).map(|c| k.max(depth + (c == i) as u32)).collect();
        let sites = box_sites(&ext);
        let count = pattern_count(a, sites.len())?;
        let mut ei = vec![0i64; d];
        ei[i] = 1;
        let zero = vec![0i64; d];
        let chunk: Vec<Equation> = (0..count)
            .into_par_iter()
            .map(|p| {
                let pat = decode(p, a, sites.len());
                let view = PatternView {
                    extents: &ext,
                    symbols: &pat,
                };
                let mut t = vec![0i64; d];
                let mut idx = |off: &[i64]| {
                    let mut ix = 0usize;
                    for s in gsites.iter().rev() {
                        for c in 0..d {
                            t[c] = s[c] + off[c];
                        }
                        ix = ix * a as usize + view.symbol(&t) as usize;
                    }
                    ix
                };
                let fv = f.generators[i].eval_at(&view, &zero);
                let rhs = h.images[i].iter().zip(fv).map(|(x, y)| x - y).collect();
                let (from, to) = (idx(&zero), idx(&ei));
                Equation { from, to, rhs }
            })
            .collect();
        eqs.extend(chunk);
    }

    // Aggregate parallel equations; every pattern carries equal weight.
    let mut edges: HashMap<(usize, usize), (f64, Vec<f64>)> = HashMap::new();
    for e in &eqs {
        let slot = edges.entry((e.from, e.to)).or_insert_with(|| (0.0, vec![0.0; dd]));
        slot.0 += 1.0;
        for (s, r) in slot.1.iter_mut().zip(&e.rhs) {
            *s += r;
        }
    }
    let mut edges: Vec<(usize, usize, f64, Vec<f64>)> =
        edges.into_iter().map(|((p, q), (w, s))| (p, q, w, s)).collect();
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

    let mut g = bfs_seed(unknowns, &edges, dd);
    for c in 0..dd {
        let col: Vec<f64> = g.iter().map(|v| v[c]).collect();
        let solved = cg_polish(unknowns, &edges, c, col);
        for (gv, s) in g.iter_mut().zip(solved) {
            gv[c] = s;
        }
    }
    let mut residual: f64 = 0.0;
    for e in &eqs {
        for c in 0..dd {
            residual = residual.max((g[e.to][c] - g[e.from][c] - e.rhs[c]).abs());
        }
    }
    let gf = BlockFunction {
        alphabet: a,
        dim: d,
        depth,
        value_dim: dd,
        table: g,
    };
    Ok((gf, residual))
}

/// Propagates averaged differences along a spanning forest.
fn bfs_seed(n: usize, edges: &[(usize, usize, f64, Vec<f64>)], dd: usize) -> Vec<Vec<f64>> {
    let mut adj: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); n];
    for (k, e) in edges.iter().enumerate() {
        adj[e.0].push((e.1, k, true));
        adj[e.1].push((e.0, k, false));
    }
    let mut g = vec![vec![0.0; dd]; n];
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(p) = queue.pop_front() {
            for &(q, k, forward) in &adj[p] {
                if seen[q] {
                    continue;
                }
                seen[q] = true;
                let (w, s) = (edges[k].2, &edges[k].3);
                for c in 0..dd {
                    let r = s[c] / w;
                    g[q][c] = if forward { g[p][c] + r } else { g[p][c] - r };
                }
                queue.push_back(q);
            }
        }
    }
    g
}

/// Conjugate gradients on the weighted graph Laplacian normal equations.
fn cg_polish(n: usize, edges: &[(usize, usize, f64, Vec<f64>)], c: usize, mut x: Vec<f64>) -> Vec<f64> {
    let apply = |v: &[f64]| {
        let mut out = vec![0.0; n];
        for &(p, q, w, _) in edges {
            let t = w * (v[q] - v[p]);
            out[q] += t;
            out[p] -= t;
        }
        out
    };
    let mut b = vec![0.0; n];
    for (p, q, _, s) in edges {
        b[*q] += s[c];
        b[*p] -= s[c];
    }
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..(4 * n + 100) {
        if rr.sqrt() <= 1e-15 * bnorm {
            break;
        }
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(u, v)| u * v).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr2: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr2 / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr2;
    }
    x
}

/// Partial sums `F(m, x) = Σ_{j<m} φ(x_j)` for `m = 0..=n` on a one-sided orbit.
pub fn random_walk_path(phi: &[Vec<f64>], x: &ShiftPoint, n: u64) -> Result<Vec<Vec<f64>>> {
    if x.dim() != 1 {
        return Err(Error::InvalidArgument(
            "random walks run over one-dimensional shifts".into(),
        ));
    }
    let dd = phi.first().map_or(0, |v| v.len());
    if phi.len() < x.alphabet() as usize {
        return Err(Error::InvalidArgument("phi needs a value for every symbol".into()));
    }
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut cur = vec![0.0; dd];
    out.push(cur.clone());
    for j in 0..n as i64 {
        let s = x.symbol(&[j]) as usize;
        for (c, v) in cur.iter_mut().zip(&phi[s]) {
            *c += v;
        }
        out.push(cur.clone());
    }
    Ok(out)
}

/// Empirical mean of the increments and its standard error, per coordinate.
pub fn increment_statistics(phi: &[Vec<f64>], x: &ShiftPoint, n: u64) -> (Vec<f64>, Vec<f64>) {
    let dd = phi.first().map_or(0, |v| v.len());
    let mut sum = vec![0.0; dd];
    let mut sq = vec![0.0; dd];
    for j in 0..n as i64 {
        let v = &phi[x.symbol(&[j]) as usize];
        for c in 0..dd {
            sum[c] += v[c];
            sq[c] += v[c] * v[c];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let se = (0..dd)
        .map(|c| {
            let var = (sq[c] / nf - mean[c] * mean[c]).max(0.0) * nf / (nf - 1.0).max(1.0);
            (var / nf).sqrt()
        })
        .collect();
    (mean, se)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub seed: u64,
    /// Steps `m >= 1` with `‖F(m,x)‖_2 <= radius`.
    pub returns: u64,
    pub max_excursion: f64,
    /// `(horizon, fraction of steps 1..=horizon inside the ball)`.
    pub occupation: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub steps: u64,
    pub radius: f64,
    pub declared_mean: Vec<f64>,
    pub empirical_mean: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub drift_warning: bool,
    pub trials: Vec<TrialStats>,
    /// Mean return count per step over all trials.
    pub return_frequency: f64,
    /// Occupation fractions averaged over trials, per horizon.
    pub mean_occupation: Vec<(u64, f64)>,
}

/// Nested horizons `steps/100, steps/10, steps` (distinct, at least one step).
pub fn nested_horizons(steps: u64) -> Vec<u64> {
    let mut hs: Vec<u64> = [steps / 100, steps / 10, steps]
        .into_iter()
        .filter(|&h| h > 0)
        .collect();
    hs.dedup();
    hs
}

/// Return counts and occupation fractions of the walk `φ` under symbol law `μ`.
pub fn recurrence_diagnostic(
    phi: &[Vec<f64>],
    mu: &[f64],
    steps: u64,
    trials: u32,
    radius: f64,
    seed: u64,
) -> Result<RecurrenceReport> {
    if phi.len() != mu.len() || phi.is_empty() {
        return Err(Error::InvalidArgument("phi and mu must list the same symbols".into()));
    }
    let dd = phi[0].len();
    if phi.iter().any(|v| v.len() != dd) {
        return Err(Error::InvalidArgument("phi values must share a dimension".into()));
    }
    let total: f64 = mu.iter().sum();
    let declared: Vec<f64> = (0..dd)
        .map(|c| phi.iter().zip(mu).map(|(v, w)| v[c] * w / total).sum())
        .collect();
    if declared.iter().any(|m| m.abs() > 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "declared mean {declared:?} is not zero"
        )));
    }
    let horizons = nested_horizons(steps);
    let seeds: Vec<u64> = (0..trials as u64)
        .map(|t| splitmix64(seed ^ splitmix64(t + 1)))
        .collect();
    let results: Result<Vec<(TrialStats, Vec<f64>, Vec<f64>)>> = seeds
        .par_iter()
        .map(|&s| {
            let x = ShiftPoint::with_weights(mu, 1, s)?;
            let mut cur = vec![0.0; dd];
            let mut sum = vec![0.0; dd];
            let mut sq = vec![0.0; dd];
            let mut returns = 0u64;
            let mut inside = 0u64;
            let mut max_exc: f64 = 0.0;
            let mut occ = Vec::new();
            let mut hi = 0;
            for m in 1..=steps {
                let v = &phi[x.symbol(&[m as i64 - 1]) as usize];
                for c in 0..dd {
                    cur[c] += v[c];
                    sum[c] += v[c];
                    sq[c] += v[c] * v[c];
                }
                let norm = cur.iter().map(|c| c * c).sum::<f64>().sqrt();
                max_exc = max_exc.max(norm);
                if norm <= radius {
                    returns += 1;
                    inside += 1;
                }
                if hi < horizons.len() && m == horizons[hi] {
                    occ.push((m, inside as f64 / m as f64));
                    hi += 1;
                }
            }
            Ok((
                TrialStats {
                    seed: s,
                    returns,
                    max_excursion: max_exc,
                    occupation: occ,
                },
                sum,
                sq,
            ))
        })
        .collect();
    let results = results?;
    let n = (steps * trials as u64) as f64;
    let mut sum = vec![0.0; dd];
    let mut sq = vec![0.0; dd];
    for (_, s, q) in &results {
        for c in 0..dd {
            sum[c] += s[c];
            sq[c] += q[c];
        }
    }
    let empirical: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se: Vec<f64> = (0..dd)
        .map(|c| ((sq[c] / n - empirical[c] * empirical[c]).max(0.0) / n).sqrt())
        .collect();
    let drift_warning = empirical.iter().zip(&se).any(|(m, s)| m.abs() > 3.0 * s);
    let trials: Vec<TrialStats> = results.into_iter().map(|r| r.0).collect();
    let return_frequency =
        trials.iter().map(|t| t.returns as f64).sum::<f64>() / (trials.len().max(1) as f64 * steps.max(1) as f64);
    let mean_occupation = horizons
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let m = trials.iter().map(|t| t.occupation[i].1).sum::<f64>() / trials.len().max(1) as f64;
            (h, m)
        })
        .collect();
    Ok(RecurrenceReport {
        steps,
        radius,
        declared_mean: declared,
        empirical_mean: empirical,
        standard_error: se,
        drift_warning,
        trials,
        return_frequency,
        mean_occupation,
    })
}

/// A point of `T^{d-1} × Z^{d-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusLatticePoint {
    pub x: Vec<f64>,
    pub z: Vec<i64>,
}

impl TorusLatticePoint {
    pub fn new(x: Vec<f64>, z: Vec<i64>) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: z.len(),
            });
        }
        if x.iter().any(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::InvalidArgument("torus coordinates must lie in [0,1)".into()));
        }
        Ok(TorusLatticePoint { x, z })
    }
}

/// Generator `k` (1-based) of the action: `k < d` moves `z` by `e_k`; `k = d`
/// rotates `x` by `α` and carries the wrap-arounds into `z`.
pub fn j_action_apply(k: usize, p: &TorusLatticePoint, alpha: &[f64]) -> Result<TorusLatticePoint> {
    let d = alpha.len() + 1;
    if p.x.len() != alpha.len() {
        return Err(Error::DimensionMismatch {
            expected: alpha.len(),
            got: p.x.len(),
        });
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("generator index {k} outside 1..={d}")));
    }
    let mut out = p.clone();
    if k < d {
        out.z[k - 1] += 1;
    } else {
        for i in 0..alpha.len() {
            let s = p.x[i] + alpha[i];
            let carry = s.floor();
            out.x[i] = s - carry;
            out.z[i] += carry as i64;
        }
    }
    Ok(out)
}

/// Inverse of generator `k`.
pub fn j_action_inverse(k: usize, p: &TorusLatticePoint, alpha: &[f64]) -> Result<TorusLatticePoint> {
    let d = alpha.len() + 1;
    if k == 0 || k > d || p.x.len() != alpha.len() {
        return Err(Error::InvalidArgument(format!("generator index {k} outside 1..={d}")));
    }
    let mut out = p.clone();
    if k < d {
        out.z[k - 1] -= 1;
    } else {
        for i in 0..alpha.len() {
            let s = p.x[i] - alpha[i];
            let borrow = if s < 0.0 { 1 } else { 0 };
            out.x[i] = s + borrow as f64;
            out.z[i] -= borrow;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquidistributionReport {
    pub cells_per_axis: usize,
    /// `(n, max cell discrepancy)` over nested sample sizes.
    pub discrepancies: Vec<(u64, f64)>,
    pub discrepancy: f64,
    pub plateau_warning: bool,
}

/// Cell frequencies of `{x0 + kα mod 1 : k < n}` against Lebesgue measure.
pub fn equidistribution_check(
    alpha: &[f64],
    x0: &[f64],
    n: u64,
    cells_per_axis: usize,
) -> Result<EquidistributionReport> {
    if alpha.len() != x0.len() || alpha.is_empty() {
        return Err(Error::InvalidArgument(
            "alpha and start point must share a positive dimension".into(),
        ));
    }
    if n == 0 || cells_per_axis == 0 {
        return Err(Error::InvalidArgument("need at least one point and one cell".into()));
    }
    let dd = alpha.len();
    let total_cells = cells_per_axis
        .checked_pow(dd as u32)
        .filter(|c| *c <= MAX_PATTERNS as usize)
        .ok_or_else(|| Error::InvalidArgument("too many test cells".into()))?;
    let horizons = nested_horizons(n);
    let mut counts = vec![0u64; total_cells];
    let mut out = Vec::new();
    let mut hi = 0;
    for k in 0..n {
        let mut idx = 0usize;
        for i in (0..dd).rev() {
            let v = (x0[i] + k as f64 * alpha[i]).rem_euclid(1.0);
            let c = ((v * cells_per_axis as f64) as usize).min(cells_per_axis - 1);
            idx = idx * cells_per_axis + c;
        }
        counts[idx] += 1;
        if hi < horizons.len() && k + 1 == horizons[hi] {
            let m = (k + 1) as f64;
            let expect = 1.0 / total_cells as f64;
            let disc = counts
                .iter()
                .map(|&c| (c as f64 / m - expect).abs())
                .fold(0.0, f64::max);
            out.push((k + 1, disc));
            hi += 1;
        }
    }
    let discrepancy = out.last().map(|p| p.1).unwrap_or(0.0);
    let first = out.first().map(|p| p.1).unwrap_or(discrepancy);
    let plateau_warning = out.len() > 1 && discrepancy > 0.5 * first && discrepancy > 10.0 / n as f64;
    Ok(EquidistributionReport {
        cells_per_axis,
        discrepancies: out,
        discrepancy,
        plateau_warning,
    })
}

/// Fraction of a `δ`-grid of `[-R,R]^D` within `δ` (sup norm) of `{F(n,x) : ‖n‖_1 <= budget}`.
pub fn value_coverage<C: Configuration + ?Sized>(f: &BlockCocycle, x: &C, budget: u64, radius: f64, delta: f64) -> f64 {
    let dd = f.value_dim();
    let per_axis = (2.0 * radius / delta).floor() as usize + 1;
    let total = per_axis.pow(dd as u32);
    let values = f.orbit_values(x, budget);
    let covered = (0..total)
        .into_par_iter()
        .filter(|&g| {
            let mut i = g;
            let z: Vec<f64> = (0..dd)
                .map(|_| {
                    let c = i % per_axis;
                    i /= per_axis;
                    -radius + c as f64 * delta
                })
                .collect();
            values
                .iter()
                .any(|(_, v)| v.iter().zip(&z).all(|(a, b)| (a - b).abs() <= delta))
        })
        .count();
    covered as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_coin_walks() {
        let x = ShiftPoint::uniform(2, 1, 7);
        let zero = random_walk_path(&[vec![0.0], vec![0.0]], &x, 50).unwrap();
        assert!(zero.iter().all(|v| v[0] == 0.0));
        let coin = random_walk_path(&[vec![1.0], vec![-1.0]], &x, 50).unwrap();
        for m in 0..50 {
            let step = coin[m + 1][0] - coin[m][0];
            let want = if x.symbol(&[m as i64]) == 0 { 1.0 } else { -1.0 };
            assert_eq!(step, want);
        }
        let r = recurrence_diagnostic(&[vec![0.0], vec![0.0]], &[0.5, 0.5], 100, 1, 0.5, 1).unwrap();
        assert_eq!(r.trials[0].returns, 100);
    }

    #[test]
    fn increments_match_the_declared_mean() {
        let phi = vec![vec![2.0], vec![-1.0], vec![0.5]];
        let mu = [0.2, 0.5, 0.3];
        let want: f64 = phi.iter().zip(&mu).map(|(v, w)| v[0] * w).sum();
        let x = ShiftPoint::with_weights(&mu, 1, 11).unwrap();
        let (mean, se) = increment_statistics(&phi, &x, 200_000);
        assert!(
            (mean[0] - want).abs() < 3.0 * se[0] + 1e-12,
            "{} vs {want} ± {}",
            mean[0],
            se[0]
        );
    }

    #[test]
    fn block_tables_round_trip_through_text() {
        let g = BlockFunction::random_dyadic(2, 2, 1, 2, 6, 3).unwrap();
        let h = HomomorphismH::new(vec![vec![0.5, 0.0], vec![-0.25, 1.0]]);
        let f = BlockCocycle::synthesize(&g, &h).unwrap();
        let text = f.to_text();
        assert!(text.starts_with("blocks alphabet=2 dim=2 depth=2 valdim=2\n"));
        assert_eq!(BlockCocycle::parse_text(&text).unwrap(), f);
        assert!(BlockCocycle::parse_text(&text.replace("generator 1", "generator 2")).is_err());
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        assert!(recurrence_diagnostic(&[vec![1.0], vec![0.0]], &[0.5, 0.5], 10, 1, 1.0, 0).is_err());
    }

    #[test]
    fn j_action_examples() {
        let p = TorusLatticePoint::new(vec![0.7], vec![0]).unwrap();
        let q = j_action_apply(2, &p, &[0.415]).unwrap();
        assert_eq!(q.z, vec![1]);
        assert!((q.x[0] - 0.115).abs() < 1e-12);
        let r = j_action_apply(1, &p, &[0.415]).unwrap();
        assert_eq!(r.x, p.x);
        assert_eq!(r.z, vec![1]);
        let back = j_action_inverse(2, &q, &[0.415]).unwrap();
        assert_eq!(back.z, p.z);
        assert!((back.x[0] - p.x[0]).abs() < 1e-12);
        assert!(j_action_apply(3, &p, &[0.415]).is_err());
    }

    #[test]
    fn equidistribution_examples() {
        let one = equidistribution_check(&[2f64.sqrt() - 1.0], &[0.0], 1, 10).unwrap();
        assert!((one.discrepancy - 0.9).abs() < 1e-12);
        let irr = equidistribution_check(&[2f64.sqrt() - 1.0], &[0.0], 100_000, 10).unwrap();
        assert!(irr.discrepancy < 0.01);
        assert!(!irr.plateau_warning);
        let half = equidistribution_check(&[0.5], &[0.0], 10_000, 10).unwrap();
        assert!(half.plateau_warning);
    }

    #[test]
    fn homomorphism_only_gives_zero_transfer() {
        let h = HomomorphismH::new(vec![vec![1.0, 0.5], vec![-2.0, 0.25]]);
        let f = BlockCocycle::from_homomorphism(2, &h).unwrap();
        let dec = decompose_block_cocycle(&f, 3, 1e-9).unwrap();
        assert_eq!(dec.residual, 0.0);
        assert!(dec.g.table().iter().flatten().all(|v| *v == 0.0));
        assert_eq!(dec.h, h);
        assert!(!dec.outside_guarantee);
    }

    #[test]
    fn recovers_synthesized_decomposition() {
        let g0 = BlockFunction::random_dyadic(2, 2, 2, 2, 8, 3).unwrap();
        let h0 = HomomorphismH::new(vec![vec![0.75, -1.5], vec![0.125, 2.0]]);
        let f = BlockCocycle::synthesize(&g0, &h0).unwrap();
        assert_eq!(f.mixed_defect().unwrap(), 0.0);
        let dec = decompose_block_cocycle(&f, 3, 1e-9).unwrap();
        assert_eq!(dec.depth, 2);
        assert!(dec.residual < 1e-9);
        for (a, b) in dec.h.images.iter().flatten().zip(h0.images.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inconsistent_table_is_reported() {
        let g = BlockFunction::random_dyadic(2, 2, 2, 1, 4, 9).unwrap();
        let g2 = BlockFunction::from_fn(2, 2, 2, 1, |_| vec![0.0]).unwrap();
        let f = BlockCocycle::new(vec![g, g2]).unwrap();
        assert!(matches!(
            decompose_block_cocycle(&f, 2, 1e-9),
            Err(Error::InconsistentCocycle(_))
        ));
    }

    #[test]
    fn random_walk_does_not_decompose() {
        let phi = BlockFunction::from_fn(2, 1, 1, 1, |p| vec![if p[0] == 0 { 1.0 } else { -1.0 }]).unwrap();
        let f = BlockCocycle::new(vec![phi]).unwrap();
        match decompose_block_cocycle(&f, 4, 1e-9) {
            Err(Error::NoSolution(_)) => {}
            other => panic!("expected no solution, got {other:?}"),
        }
    }

    #[test]
    fn image_shapes() {
        assert_eq!(
            HomomorphismH::new(vec![vec![1.0, 0.0], vec![0.0, 2.0]]).image_shape(1e-12),
            ImageShape::Discrete
        );
        assert_eq!(
            HomomorphismH::new(vec![vec![1.0, 2.0], vec![0.5, 1.0]]).image_shape(1e-12),
            ImageShape::LowRank
        );
        let t = HomomorphismH::torus_example(&[2f64.sqrt() - 1.0]);
        assert_eq!(t.image_shape(1e-12), ImageShape::Undetermined);
        assert_eq!(t.apply(&[2, 3]), vec![2.0 + 3.0 * (2f64.sqrt() - 1.0)]);
    }

    #[test]
    fn decomposed_cocycle_coverage_stalls() {
        let mut g0 = BlockFunction::random_dyadic(2, 2, 2, 2, 6, 5).unwrap();
        g0.table.iter_mut().flatten().for_each(|v| *v *= 0.05);
        let h0 = HomomorphismH::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let f = BlockCocycle::synthesize(&g0, &h0).unwrap();
        let x = ShiftPoint::uniform(2, 2, 4);
        let a = value_coverage(&f, &x, 12, 2.0, 0.1);
        let b = value_coverage(&f, &x, 24, 2.0, 0.1);
        assert!(b < 0.5, "coverage {b}");
        assert!(b - a < 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn generators_commute(x in 0.0f64..1.0, y in 0.0f64..1.0, z1 in -5i64..5, z2 in -5i64..5,
                              i in 1usize..=3, j in 1usize..=3) {
            let alpha = [2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0];
            let p = TorusLatticePoint::new(vec![x, y], vec![z1, z2]).unwrap();
            let a = j_action_apply(i, &j_action_apply(j, &p, &alpha).unwrap(), &alpha).unwrap();
            let b = j_action_apply(j, &j_action_apply(i, &p, &alpha).unwrap(), &alpha).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn synthesized_cocycles_satisfy_the_identity(seed in 0u64..1000, n1 in -3i64..3, n2 in -3i64..3,
                                                      k1 in -3i64..3, k2 in -3i64..3) {
            let g0 = BlockFunction::random_dyadic(2, 2, 2, 1, 6, seed).unwrap();
            let h0 = HomomorphismH::new(vec![vec![0.5], vec![-0.25]]);
            let f = BlockCocycle::synthesize(&g0, &h0).unwrap();
            prop_assert_eq!(f.mixed_defect().unwrap(), 0.0);
            let x = ShiftPoint::uniform(2, 2, seed);
            let lhs = f.eval(&[n1 + k1, n2 + k2], &x)[0];
            let tk = x.shift(&[k1, k2]);
            let rhs = f.eval(&[k1, k2], &x)[0] + f.eval(&[n1, n2], &tk)[0];
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let direct = g0.eval(&x.shift(&[n1, n2]))[0] - g0.eval(&x)[0] + h0.apply(&[n1, n2])[0];
            prop_assert!((f.eval(&[n1, n2], &x)[0] - direct).abs() < 1e-12);
        }
    }
}
