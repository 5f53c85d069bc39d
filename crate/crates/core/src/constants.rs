//! Scalar constants of a weight pair: `A_p`-type characteristics, Sawyer
//! testing constants (full and doubling-parent restricted) and a randomized
//! lower bound for the operator norm.
//!
//! Suprema run over the standard dyadic cubes of the lattice unless a report
//! says otherwise. Cubes are evaluated in parallel; the reduction keeps the
//! first maximizer in (level, index) order so reports are reproducible.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{CellBox, DyadicCube, Lattice, MAX_DIM};
use crate::error::{Error, Result};
use crate::field::{weighted_power_sum, CellFunction, HalfSpaceField, WeightField};
use crate::operators::{apply, OperatorKind, OperatorOutput};
use crate::scalar::{Exponent, Pyramid, Threshold};

/// Which cubes a supremum runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Dyadic,
    AllAligned,
}

/// The cube at which a supremum is attained.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Witness {
    Dyadic { level: u32, coords: Vec<i64> },
    Aligned { origin: Vec<usize>, side_cells: usize },
}

impl Witness {
    pub fn dyadic(q: &DyadicCube) -> Self {
        Witness::Dyadic { level: q.level(), coords: q.coords().to_vec() }
    }

    pub fn cube(&self, dim: usize) -> Option<DyadicCube> {
        match self {
            Witness::Dyadic { level, coords } => Some(DyadicCube::new(dim, *level, coords)),
            Witness::Aligned { .. } => None,
        }
    }

    pub fn cell_box(&self, lattice: &Lattice) -> CellBox {
        match self {
            Witness::Dyadic { level, coords } => DyadicCube::new(lattice.dim(), *level, coords).cells(lattice.level()),
            Witness::Aligned { origin, side_cells } => {
                let lo: Vec<i64> = origin.iter().map(|&x| x as i64).collect();
                let hi: Vec<i64> = origin.iter().map(|&x| (x + side_cells) as i64).collect();
                CellBox::new(&lo, &hi)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub constant: String,
    pub value: f64,
    /// `None` when no cube contributes (zero weights, no qualifying cube).
    pub witness: Option<Witness>,
    pub family: Family,
    pub params: BTreeMap<String, f64>,
    /// Number of cubes admitted by a doubling-parent restriction.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub qualifying: Option<usize>,
}

impl ConstantReport {
    fn new(constant: &str, family: Family, best: Best, params: &[(&str, f64)]) -> Self {
        ConstantReport {
            constant: constant.to_string(),
            value: best.value,
            witness: best.witness,
            family,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            qualifying: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Best {
    value: f64,
    witness: Option<Witness>,
}

/// First maximizer of a sequence; zero values never become witnesses.
fn first_max(values: impl IntoIterator<Item = (f64, Witness)>) -> Best {
    let mut best = Best::default();
    for (v, w) in values {
        if v > best.value {
            best = Best { value: v, witness: Some(w) };
        }
    }
    best
}

/// Evaluate `f` at every standard dyadic cube and keep the first maximizer.
fn dyadic_sup(lattice: &Lattice, f: impl Fn(&DyadicCube) -> f64 + Sync) -> Best {
    let cubes: Vec<DyadicCube> = lattice.dyadic_cubes().collect();
    let values: Vec<f64> = cubes.par_iter().map(&f).collect();
    first_max(values.into_iter().zip(cubes.iter().map(Witness::dyadic)))
}

/// Largest number of aligned cubes scanned by an all-aligned supremum.
pub const ALIGNED_GUARD: f64 = 5e9;

fn aligned_sup(lattice: &Lattice, f: impl Fn(&CellBox, usize) -> f64 + Sync) -> Result<Best> {
    let n = lattice.side();
    let d = lattice.dim() as i32;
    let count: f64 = (1..=n).map(|s| ((n - s + 1) as f64).powi(d)).sum();
    if count > ALIGNED_GUARD {
        return Err(Error::SizeGuard {
            what: "all-aligned supremum",
            detail: format!("{count:.3e} cubes > {ALIGNED_GUARD:.0e}; use the dyadic family"),
        });
    }
    let dim = lattice.dim();
    let mut best = Best::default();
    for side in 1..=n {
        let per_axis = n - side + 1;
        let total = per_axis.pow(dim as u32);
        let origin_of = |mut k: usize| {
            let mut lo = [0usize; MAX_DIM];
            if dim == 1 {
                lo[0] = k;
                return lo;
            }
            for axis in (0..dim).rev() {
                lo[axis] = k % per_axis;
                k /= per_axis;
            }
            lo
        };
        // (value, index) with the first index winning ties
        let (value, at) = (0..total)
            .into_par_iter()
            .with_min_len(1 << 12)
            .map(|k| {
                let lo = origin_of(k);
                let mut b = CellBox { dim, lo: [0; MAX_DIM], hi: [0; MAX_DIM] };
                for axis in 0..dim {
                    b.lo[axis] = lo[axis] as i64;
                    b.hi[axis] = (lo[axis] + side) as i64;
                }
                (f(&b, side), k)
            })
            .reduce(|| (0.0, usize::MAX), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
        if value > best.value {
            let origin = origin_of(at)[..dim].to_vec();
            best = Best { value, witness: Some(Witness::Aligned { origin, side_cells: side }) };
        }
    }
    Ok(best)
}

/// [`aligned_sup`] on a line, with `f(a(I), b(I), side)` evaluated from plain prefix sums.
fn aligned_sup_1d(lattice: &Lattice, a: &[f64], b: &[f64], f: impl Fn(f64, f64, usize) -> f64 + Sync) -> Result<Best> {
    let n = lattice.side();
    if (n as f64) * (n as f64 + 1.0) / 2.0 > ALIGNED_GUARD {
        return Err(Error::SizeGuard {
            what: "all-aligned supremum",
            detail: format!("{n} cells; use the dyadic family"),
        });
    }
    let prefix = |v: &[f64]| {
        let mut acc = Vec::with_capacity(v.len() + 1);
        acc.push(0.0);
        for x in v {
            acc.push(acc.last().copied().unwrap_or(0.0) + x);
        }
        acc
    };
    let (pa, pb) = (prefix(a), prefix(b));
    let per_side: Vec<(f64, usize)> = (1..=n)
        .into_par_iter()
        .map(|side| {
            let mut best = (0.0, 0);
            for lo in 0..=n - side {
                let v = f((pa[lo + side] - pa[lo]).max(0.0), (pb[lo + side] - pb[lo]).max(0.0), side);
                if v > best.0 {
                    best = (v, lo);
                }
            }
            best
        })
        .collect();
    let mut best = Best::default();
    for (i, (value, lo)) in per_side.into_iter().enumerate() {
        if value > best.value {
            best = Best { value, witness: Some(Witness::Aligned { origin: vec![lo], side_cells: i + 1 }) };
        }
    }
    Ok(best)
}

fn check_same_lattice(a: &Lattice, b: &Lattice) -> Result<()> {
    if a != b {
        return Err(Error::Mismatch("the two weights live on different lattices".into()));
    }
    Ok(())
}

/// `⟨w⟩^{1/p} ⟨σ⟩^{1/p'}` from averages.
fn ap_product(w_avg: f64, s_avg: f64, p: &Exponent) -> f64 {
    if w_avg <= 0.0 || s_avg <= 0.0 {
        return 0.0;
    }
    w_avg.powf(1.0 / p.value) * s_avg.powf(1.0 / p.dual())
}

/// `[w, σ]_p = sup_Q ⟨w⟩_Q^{1/p} ⟨σ⟩_Q^{1/p'}`.
pub fn ap_constant(w: &WeightField, sigma: &WeightField, p: f64, family: Family) -> Result<ConstantReport> {
    let p = Exponent::new(p)?;
    check_same_lattice(w.lattice(), sigma.lattice())?;
    let lattice = *w.lattice();
    let best = match family {
        Family::Dyadic => {
            let (wp, sp) = (w.pyramid(), sigma.pyramid());
            dyadic_sup(&lattice, |q| {
                let vol = w.cube_volume(q.level());
                ap_product(wp.get(q.level(), q.index()) / vol, sp.get(q.level(), q.index()) / vol, &p)
            })
        }
        Family::AllAligned => {
            // maximize ⟨w⟩⟨σ⟩^{p-1}, a monotone image of the product, and take the root once
            let cell = w.cell_volume();
            let key = |wm: f64, sm: f64, side: usize| {
                let vol = cell * (side as f64).powi(lattice.dim() as i32);
                let (wa, sa) = (wm / vol, sm / vol);
                if wa <= 0.0 || sa <= 0.0 {
                    0.0
                } else if p.value == 2.0 {
                    wa * sa
                } else {
                    wa * sa.powf(p.value - 1.0)
                }
            };
            let mut best = if lattice.dim() == 1 {
                aligned_sup_1d(&lattice, w.masses(), sigma.masses(), key)?
            } else {
                aligned_sup(&lattice, |b, side| key(w.measure_box(b), sigma.measure_box(b), side))?
            };
            best.value = best.value.powf(1.0 / p.value);
            best
        }
    };
    Ok(ConstantReport::new("ap", family, best, &[("p", p.value)]))
}

/// `sup_Q ⟨w⟩_{Q̃}^{1/p} ⟨σ⟩_Q^{1/p'}` with `⟨w⟩_{Q̃} = w(Q̃) / (|Q| ℓQ)`.
pub fn poisson_ap_constant(w: &HalfSpaceField, sigma: &WeightField, p: f64) -> Result<ConstantReport> {
    let p = Exponent::new(p)?;
    check_same_lattice(w.lattice(), sigma.lattice())?;
    let sp = sigma.pyramid();
    let best = dyadic_sup(w.lattice(), |q| {
        let w_avg = w.box_measure(q) / w.box_volume(q.level());
        ap_product(w_avg, sp.get(q.level(), q.index()) / sigma.cube_volume(q.level()), &p)
    });
    Ok(ConstantReport::new("poisson_ap", Family::Dyadic, best, &[("p", p.value)]))
}

/// `sup_Q w(Q)^{1/q} σ(Q)^{1/p'} / |Q|^α`.
pub fn apq_constant(
    w: &WeightField,
    sigma: &WeightField,
    p: f64,
    q: f64,
    alpha: f64,
    family: Family,
) -> Result<ConstantReport> {
    let (pe, qe) = check_pq(p, q)?;
    OperatorKind::DyadicFractional { alpha }.validate()?;
    check_same_lattice(w.lattice(), sigma.lattice())?;
    let lattice = *w.lattice();
    let ratio = |wm: f64, sm: f64, vol: f64| {
        if wm <= 0.0 || sm <= 0.0 {
            return 0.0;
        }
        wm.powf(1.0 / qe.value) * sm.powf(1.0 / pe.dual()) / vol.powf(alpha)
    };
    let best = match family {
        Family::Dyadic => {
            let (wp, sp) = (w.pyramid(), sigma.pyramid());
            dyadic_sup(&lattice, |c| {
                ratio(*wp.get(c.level(), c.index()), *sp.get(c.level(), c.index()), w.cube_volume(c.level()))
            })
        }
        Family::AllAligned => {
            let cell = w.cell_volume();
            aligned_sup(&lattice, |b, side| {
                ratio(w.measure_box(b), sigma.measure_box(b), cell * (side as f64).powi(lattice.dim() as i32))
            })?
        }
    };
    Ok(ConstantReport::new("apq", family, best, &[("p", p), ("q", q), ("alpha", alpha)]))
}

fn check_pq(p: f64, q: f64) -> Result<(Exponent, Exponent)> {
    let (pe, qe) = (Exponent::new(p)?, Exponent::new(q)?);
    if q < p {
        return Err(Error::param(format!("need p ≤ q, got p = {p}, q = {q}")));
    }
    Ok((pe, qe))
}

/// How the enlarged cube `P ⊇ Q` of a doubling-parent condition is searched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentMode {
    /// `P = Q^{(⌈log₂ ρ⌉)}`, the dyadic parent for `ρ ≤ 2`.
    Dyadic,
    /// Every lattice-aligned `P ⊇ Q` of side `⌈ρ ℓQ⌉` cells, clipped to the root.
    #[default]
    Sliding,
}

/// Only cubes with some admissible `P ⊇ Q` satisfying `μ(P) ≤ D μ(Q)` are tested.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Restriction {
    pub rho: f64,
    pub threshold: Threshold,
    pub parent_mode: ParentMode,
}

impl Restriction {
    pub fn new(rho: f64, d: f64, parent_mode: ParentMode) -> Result<Self> {
        Self::with_threshold(rho, Threshold::Value(d), parent_mode)
    }

    pub fn with_threshold(rho: f64, threshold: Threshold, parent_mode: ParentMode) -> Result<Self> {
        if !(rho > 1.0 && rho <= 2.0) {
            return Err(Error::param(format!("parent dilation ρ = {rho} must lie in (1, 2]")));
        }
        if !(threshold.value() > 1.0) {
            return Err(Error::param(format!("doubling threshold D = {} must exceed 1", threshold.value())));
        }
        Ok(Restriction { rho, threshold, parent_mode })
    }

    fn params(&self) -> [(&'static str, f64); 3] {
        let mode = match self.parent_mode {
            ParentMode::Dyadic => 0.0,
            ParentMode::Sliding => 1.0,
        };
        [("rho", self.rho), ("D", self.threshold.value()), ("sliding", mode)]
    }

    fn admits(&self, parent_mass: f64, mass: f64) -> bool {
        mass > 0.0 && parent_mass <= self.threshold.value() * mass
    }

    /// Side in cells of the sliding parent of a cube with `side` cells.
    fn parent_side(&self, side: usize) -> usize {
        ((self.rho * side as f64) - 1e-9).ceil() as usize
    }

    /// Smallest mass of an admissible parent, with `measure(box, side)` giving masses.
    fn parent_mass(&self, lattice: &Lattice, q: &DyadicCube, measure: &impl Fn(&CellBox, usize) -> f64) -> f64 {
        let top = lattice.level();
        let side = q.side_cells(top) as usize;
        match self.parent_mode {
            ParentMode::Dyadic => {
                let up = (self.rho.log2() - 1e-12).ceil().max(1.0) as u32;
                let grow = side << up;
                match q.parent_chain(up) {
                    Ok(p) => measure(&p.cells(top), grow),
                    // beyond the root the parent is clipped to the root
                    Err(_) => measure(&lattice.root().cells(top), grow),
                }
            }
            ParentMode::Sliding => {
                let ps = self.parent_side(side);
                let slack = (ps - side) as i64;
                let base = q.cells(top);
                let d = lattice.dim();
                let n = lattice.side();
                let positions = (slack as usize + 1).pow(d as u32);
                let mut best = f64::INFINITY;
                for k in 0..positions {
                    let mut rest = k;
                    let mut b = CellBox { dim: d, lo: [0; MAX_DIM], hi: [0; MAX_DIM] };
                    for a in 0..d {
                        let off = (rest % (slack as usize + 1)) as i64;
                        rest /= slack as usize + 1;
                        b.lo[a] = base.lo[a] - slack + off;
                        b.hi[a] = b.lo[a] + ps as i64;
                    }
                    best = best.min(measure(&b.clip(n), ps));
                }
                best
            }
        }
    }
}

/// `μ(P) / μ(Q)` for the best admissible parent (infinite when `μ(Q) = 0`).
pub fn parent_ratio(mu: &WeightField, q: &DyadicCube, rho: f64, mode: ParentMode) -> Result<f64> {
    let r = Restriction::new(rho, 2.0, mode)?;
    let mass = mu.measure(q);
    let parent = r.parent_mass(mu.lattice(), q, &|b, _| mu.measure_box(b));
    Ok(if mass > 0.0 { parent / mass } else { f64::INFINITY })
}

/// Sums of `ν(x) · value(x)^r` over the cells of each cube `Q`, where the value
/// at a cell of `Q` is built from per-cube numbers `a` along the chain from `Q`
/// down to the cell: their maximum, or `offset(Q)` plus their sum.
enum Chain<'a> {
    Max,
    Sum { offset: &'a [Vec<f64>] },
}

fn chain_integrals(lattice: &Lattice, a: &[Vec<f64>], chain: Chain, nu: &[f64], r: f64) -> Vec<Vec<f64>> {
    let top = lattice.level();
    let cells = lattice.cells();
    let mut out: Vec<Vec<f64>> = (0..=top).map(|l| vec![0.0; lattice.cubes_at(l)]).collect();
    for (x, &m) in nu.iter().enumerate() {
        if m <= 0.0 {
            continue;
        }
        let mut v = 0.0f64;
        for lev in (0..=top).rev() {
            let idx = cells.ancestor(x, top - lev);
            let val = match chain {
                Chain::Max => {
                    v = v.max(a[lev as usize][idx]);
                    v
                }
                Chain::Sum { offset } => {
                    v += a[lev as usize][idx];
                    offset[lev as usize][idx] + v
                }
            };
            if val > 0.0 {
                out[lev as usize][idx] += m * val.powf(r);
            }
        }
    }
    out
}

/// `Σ_{l ≤ j} |Q_l|^{-β}` for a root-to-level-`j` chain, `j = -1..L`, shifted by one.
fn ancestor_weights(w: &WeightField, beta: f64) -> Vec<f64> {
    let top = w.lattice().level();
    let mut acc = vec![0.0];
    for l in 0..=top {
        let last = *acc.last().expect("nonempty");
        acc.push(last + w.cube_volume(l).powf(-beta));
    }
    acc
}

/// The lattice operators whose testing integrals have a closed tree form.
enum TreeKind {
    Maximal,
    Fractional(f64),
}

fn tree_kind(op: &OperatorKind) -> Option<TreeKind> {
    match *op {
        OperatorKind::DyadicMaximal { grid: 0 } => Some(TreeKind::Maximal),
        OperatorKind::DyadicFractional { alpha } => Some(TreeKind::Fractional(alpha)),
        _ => None,
    }
}

/// Per-cube integrals `∫_Q Op(μ 1_Q)^r dν` and, for the norm search, the
/// integrals over the whole root, for a tree operator.
struct TreeIntegrals {
    inside: Vec<Vec<f64>>,
    whole: Vec<Vec<f64>>,
}

fn tree_integrals(kind: &TreeKind, mu: &WeightField, nu: &WeightField, r: f64) -> TreeIntegrals {
    let lattice = *mu.lattice();
    let top = lattice.level();
    let mp = mu.pyramid();
    let np = nu.pyramid();
    let (a, weights): (Vec<Vec<f64>>, Option<Vec<f64>>) = match *kind {
        TreeKind::Maximal => (
            (0..=top).map(|l| mp.level(l).iter().map(|m| m / mu.cube_volume(l)).collect()).collect(),
            None,
        ),
        TreeKind::Fractional(alpha) => (
            (0..=top).map(|l| mp.level(l).iter().map(|m| m * mu.cube_volume(l).powf(-alpha)).collect()).collect(),
            Some(ancestor_weights(mu, alpha)),
        ),
    };
    let inside = match &weights {
        None => chain_integrals(&lattice, &a, Chain::Max, nu.masses(), r),
        Some(g) => {
            let offset: Vec<Vec<f64>> =
                (0..=top).map(|l| mp.level(l).iter().map(|m| m * g[l as usize]).collect()).collect();
            chain_integrals(&lattice, &a, Chain::Sum { offset: &offset }, nu.masses(), r)
        }
    };
    // outside Q the value only depends on the smallest common ancestor
    let whole = (0..=top)
        .map(|lq| {
            let ix = lattice.indexer(lq);
            (0..lattice.cubes_at(lq))
                .map(|idx| {
                    let mass = *mp.get(lq, idx);
                    let mut total = inside[lq as usize][idx];
                    if mass <= 0.0 {
                        return total;
                    }
                    for j in 1..=lq {
                        let lev = lq - j;
                        let value = match &weights {
                            None => mass / mu.cube_volume(lev),
                            Some(g) => mass * g[lev as usize + 1],
                        };
                        let ring = np.get(lev, ix.ancestor(idx, j)) - np.get(lev + 1, ix.ancestor(idx, j - 1));
                        total += value.powf(r) * ring.max(0.0);
                    }
                    total
                })
                .collect()
        })
        .collect();
    TreeIntegrals { inside, whole }
}

/// `∫_Q M_D(μ 1_Q)^r dν` for every standard cube `Q`, per level and index.
pub(crate) fn maximal_testing_integrals(mu: &WeightField, nu: &WeightField, r: f64) -> Vec<Vec<f64>> {
    tree_integrals(&TreeKind::Maximal, mu, nu, r).inside
}

/// `‖1_Q Op(μ 1_Q)‖_{L^r(ν)}^r` for one cube, by applying the operator.
fn direct_integral(op: &OperatorKind, mu: &WeightField, nu: &WeightField, q: &DyadicCube, r: f64) -> Result<f64> {
    let lattice = *mu.lattice();
    let b = q.cells(lattice.level());
    let ind = CellFunction::indicator(lattice, &b);
    let OperatorOutput::Cells(out) = apply(op, mu, &ind)? else {
        return Err(Error::param("the Poisson operator needs a half-space weight"));
    };
    let vals: Vec<f64> = out.values().iter().zip(ind.values()).map(|(v, i)| v * i).collect();
    Ok(weighted_power_sum(&vals, nu.masses(), r))
}

/// Common driver: `sup_Q μ(Q)^{-1/s} ‖1_Q Op(μ 1_Q)‖_{L^r(ν)}` over admitted cubes.
fn lattice_testing(
    name: &str,
    mu: &WeightField,
    nu: &WeightField,
    r: f64,
    s: f64,
    op: &OperatorKind,
    restriction: Option<&Restriction>,
    params: &[(&str, f64)],
) -> Result<ConstantReport> {
    op.validate()?;
    if op.is_poisson() {
        return Err(Error::param("use the Poisson testing constants for the Poisson operator"));
    }
    check_same_lattice(mu.lattice(), nu.lattice())?;
    let lattice = *mu.lattice();
    let mp = mu.pyramid();
    let admitted = admitted_cubes(&lattice, restriction, &mp, &|b, _| mu.measure_box(b));
    let integrals = tree_kind(op).map(|k| tree_integrals(&k, mu, nu, r).inside);
    let cubes: Vec<DyadicCube> = lattice.dyadic_cubes().collect();
    let values: Vec<f64> = cubes
        .par_iter()
        .map(|q| {
            let (l, i) = (q.level(), q.index());
            if !admitted[l as usize][i] {
                return Ok(0.0);
            }
            let integral = match &integrals {
                Some(t) => t[l as usize][i],
                None => direct_integral(op, mu, nu, q, r)?,
            };
            Ok(integral.powf(1.0 / r) / mp.get(l, i).powf(1.0 / s))
        })
        .collect::<Result<_>>()?;
    let best = first_max(values.into_iter().zip(cubes.iter().map(Witness::dyadic)));
    let mut all: Vec<(&str, f64)> = params.to_vec();
    if let Some(rst) = restriction {
        all.extend(rst.params());
    }
    let mut report = ConstantReport::new(name, Family::Dyadic, best, &all);
    report.qualifying = restriction.map(|_| admitted.iter().flatten().filter(|&&a| a).count());
    Ok(report)
}

/// Admission flags per level and index; without a restriction every cube of positive mass.
fn admitted_cubes(
    lattice: &Lattice,
    restriction: Option<&Restriction>,
    masses: &Pyramid<f64>,
    measure: &(impl Fn(&CellBox, usize) -> f64 + Sync),
) -> Vec<Vec<bool>> {
    (0..=lattice.level())
        .map(|l| {
            let ix = lattice.indexer(l);
            (0..lattice.cubes_at(l))
                .into_par_iter()
                .map(|i| {
                    let mass = *masses.get(l, i);
                    match restriction {
                        None => mass > 0.0,
                        Some(r) => r.admits(r.parent_mass(lattice, &ix.cube(i), measure), mass),
                    }
                })
                .collect()
        })
        .collect()
}

/// Sawyer's testing constant `sup_{σ(Q)>0} σ(Q)^{-1/p} ‖1_Q Op(σ 1_Q)‖_{L^p(w)}`.
pub fn full_testing_constant(w: &WeightField, sigma: &WeightField, p: f64, op: &OperatorKind) -> Result<ConstantReport> {
    let pe = Exponent::new(p)?;
    lattice_testing("testing", sigma, w, pe.value, pe.value, op, None, &[("p", p)])
}

/// The testing constant over cubes with a doubling parent, `𝔓_{ρ,D}`.
pub fn restricted_testing_constant(
    w: &WeightField,
    sigma: &WeightField,
    p: f64,
    op: &OperatorKind,
    restriction: &Restriction,
) -> Result<ConstantReport> {
    let pe = Exponent::new(p)?;
    lattice_testing("restricted_testing", sigma, w, pe.value, pe.value, op, Some(restriction), &[("p", p)])
}

/// `sup_Q σ(Q)^{-1/p} ‖1_Q T_α(σ 1_Q)‖_{L^q(w)}`, optionally restricted.
pub fn fractional_testing_constant(
    w: &WeightField,
    sigma: &WeightField,
    p: f64,
    q: f64,
    alpha: f64,
    restriction: Option<&Restriction>,
) -> Result<ConstantReport> {
    check_pq(p, q)?;
    let op = OperatorKind::DyadicFractional { alpha };
    lattice_testing("fractional_testing", sigma, w, q, p, &op, restriction, &[("p", p), ("q", q), ("alpha", alpha)])
}

/// Dual condition with the roles reversed: `sup_Q w(Q)^{-1/q'} ‖1_Q T_α(w 1_Q)‖_{L^{p'}(σ)}`,
/// restricted by the doubling of `w`.
pub fn fractional_dual_testing_constant(
    w: &WeightField,
    sigma: &WeightField,
    p: f64,
    q: f64,
    alpha: f64,
    restriction: Option<&Restriction>,
) -> Result<ConstantReport> {
    let (pe, qe) = check_pq(p, q)?;
    let op = OperatorKind::DyadicFractional { alpha };
    let params = [("p", p), ("q", q), ("alpha", alpha)];
    lattice_testing("fractional_dual_testing", w, sigma, pe.dual(), qe.dual(), &op, restriction, &params)
}

/// `∫_{Q̃} P_D(σ 1_Q)^p dw` for every standard cube.
fn poisson_integrals(w: &HalfSpaceField, sigma: &WeightField, p: f64) -> Vec<Vec<f64>> {
    let lattice = *sigma.lattice();
    let top = lattice.level();
    let sp = sigma.pyramid();
    let inv: Vec<f64> = (0..=top).map(|l| 1.0 / sigma.cube_volume(l)).collect();
    let h = prefix_of(&inv);
    let cells = lattice.cells();
    let mut out: Vec<Vec<f64>> = (0..=top).map(|l| vec![0.0; lattice.cubes_at(l)]).collect();
    let mut avg = vec![0.0; top as usize + 1];
    for x in 0..lattice.cell_count() {
        for lev in 0..=top {
            avg[lev as usize] = sp.get(lev, cells.ancestor(x, top - lev)) * inv[lev as usize];
        }
        for lq in 0..=top {
            let idx = cells.ancestor(x, top - lq);
            let mut run = sp.get(lq, idx) * h[lq as usize];
            let mut acc = 0.0;
            for j in lq..=top {
                run += avg[j as usize];
                let m = w.mass(x, j);
                if m > 0.0 && run > 0.0 {
                    acc += m * run.powf(p);
                }
            }
            out[lq as usize][idx] += acc;
        }
    }
    out
}

/// `[0, v0, v0 + v1, ...]`.
fn prefix_of(v: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for x in v {
        let last = *acc.last().expect("nonempty");
        acc.push(last + x);
    }
    acc
}

/// Box masses `w(Q̃)` per level and index.
fn box_pyramid(w: &HalfSpaceField) -> Vec<Vec<f64>> {
    let lattice = *w.lattice();
    (0..=lattice.level())
        .map(|l| lattice.cubes_at_level(l).map(|q| w.box_measure(&q)).collect())
        .collect()
}

/// `sup_Q σ(Q)^{-1/p} ‖1_{Q̃} P_D(σ 1_Q)‖_{L^p(w)}`, optionally restricted by the doubling of `σ`.
pub fn poisson_testing_constant(
    w: &HalfSpaceField,
    sigma: &WeightField,
    p: f64,
    restriction: Option<&Restriction>,
) -> Result<ConstantReport> {
    let pe = Exponent::new(p)?;
    check_same_lattice(w.lattice(), sigma.lattice())?;
    let lattice = *sigma.lattice();
    let sp = sigma.pyramid();
    let admitted = admitted_cubes(&lattice, restriction, &sp, &|b, _| sigma.measure_box(b));
    let integrals = poisson_integrals(w, sigma, pe.value);
    let best = dyadic_sup(&lattice, |q| {
        let (l, i) = (q.level() as usize, q.index());
        if !admitted[l][i] {
            return 0.0;
        }
        integrals[l][i].powf(1.0 / pe.value) / sp.get(q.level(), i).powf(1.0 / pe.value)
    });
    let name = if restriction.is_some() { "poisson_restricted_testing" } else { "poisson_testing" };
    finish_restricted(name, best, &[("p", p)], restriction, &admitted)
}

/// `sup_Q w(Q̃)^{-1/p'} ‖1_Q P_D^*(w 1_{Q̃})‖_{L^{p'}(σ)}`, optionally restricted by
/// the doubling of the boxes, `w(ρ̃Q) ≤ D w(Q̃)`.
pub fn poisson_dual_testing_constant(
    w: &HalfSpaceField,
    sigma: &WeightField,
    p: f64,
    restriction: Option<&Restriction>,
) -> Result<ConstantReport> {
    let pe = Exponent::new(p)?;
    check_same_lattice(w.lattice(), sigma.lattice())?;
    let lattice = *sigma.lattice();
    let top = lattice.level();
    let boxes = box_pyramid(w);
    let box_masses = Pyramid::from_levels(lattice, boxes.clone());
    let cell = sigma.cell_volume();
    let admitted = admitted_cubes(&lattice, restriction, &box_masses, &|b, side| {
        w.box_measure_region(b, side as f64 * cell.powf(1.0 / lattice.dim() as f64))
    });
    let inv: Vec<f64> = (0..=top).map(|l| 1.0 / sigma.cube_volume(l)).collect();
    let h = prefix_of(&inv);
    let a: Vec<Vec<f64>> =
        (0..=top).map(|l| boxes[l as usize].iter().map(|m| m * inv[l as usize]).collect()).collect();
    let offset: Vec<Vec<f64>> =
        (0..=top).map(|l| boxes[l as usize].iter().map(|m| m * h[l as usize]).collect()).collect();
    let pd = pe.dual();
    let integrals = chain_integrals(&lattice, &a, Chain::Sum { offset: &offset }, sigma.masses(), pd);
    let best = dyadic_sup(&lattice, |q| {
        let (l, i) = (q.level() as usize, q.index());
        if !admitted[l][i] {
            return 0.0;
        }
        integrals[l][i].powf(1.0 / pd) / boxes[l][i].powf(1.0 / pd)
    });
    let name = if restriction.is_some() { "poisson_dual_restricted_testing" } else { "poisson_dual_testing" };
    finish_restricted(name, best, &[("p", p)], restriction, &admitted)
}

fn finish_restricted(
    name: &str,
    best: Best,
    params: &[(&str, f64)],
    restriction: Option<&Restriction>,
    admitted: &[Vec<bool>],
) -> Result<ConstantReport> {
    let mut all: Vec<(&str, f64)> = params.to_vec();
    if let Some(r) = restriction {
        all.extend(r.params());
    }
    let mut report = ConstantReport::new(name, Family::Dyadic, best, &all);
    report.qualifying = restriction.map(|_| admitted.iter().flatten().filter(|&&a| a).count());
    Ok(report)
}

/// The testing ratio `σ(Q)^{-1/p} ‖1_Q Op(σ 1_Q)‖_{L^p(w)}` at one cube, by direct operator application.
pub fn testing_ratio(w: &WeightField, sigma: &WeightField, p: f64, op: &OperatorKind, q: &DyadicCube) -> Result<f64> {
    let pe = Exponent::new(p)?;
    let mass = sigma.measure(q);
    if mass <= 0.0 {
        return Ok(0.0);
    }
    Ok(direct_integral(op, sigma, w, q, pe.value)?.powf(1.0 / pe.value) / mass.powf(1.0 / pe.value))
}

/// Where the image of a norm estimate is measured.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Lattice(&'a WeightField),
    HalfSpace(&'a HalfSpaceField),
}

impl Target<'_> {
    fn lattice(&self) -> &Lattice {
        match self {
            Target::Lattice(w) => w.lattice(),
            Target::HalfSpace(w) => w.lattice(),
        }
    }
}

/// Effort spent by [`norm_lower_bound`] beyond the cube indicators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    /// Random nonnegative cell functions tried.
    pub random: usize,
    /// Coordinate-ascent passes over the best candidate.
    pub passes: usize,
    /// Upper bound on the number of ascent coordinates; beyond it cells are
    /// grouped into the dyadic cubes of one level.
    pub coordinates: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { random: 32, passes: 4, coordinates: 1024, seed: 0 }
    }
}

/// A norm lower bound together with the function that attains it.
#[derive(Clone, Debug)]
pub struct NormEstimate {
    pub report: ConstantReport,
    pub best: CellFunction,
}

/// Relative gain below which the coordinate ascent stops.
const ASCENT_TOLERANCE: f64 = 1e-4;

/// Multiplicative bumps tried per coordinate.
const BUMPS: [f64; 5] = [0.0, 0.25, 0.5, 2.0, 4.0];

/// `max_f ‖Op(σf)‖_{L^q(w)} / ‖f‖_{L^p(σ)}` over cube indicators, random
/// functions and a coordinate ascent from the best of them.
pub fn norm_lower_bound(
    target: Target,
    sigma: &WeightField,
    p: f64,
    op: &OperatorKind,
    budget: &SearchBudget,
) -> Result<NormEstimate> {
    norm_lower_bound_pq(target, sigma, p, p, op, budget)
}

pub fn norm_lower_bound_pq(
    target: Target,
    sigma: &WeightField,
    p: f64,
    q: f64,
    op: &OperatorKind,
    budget: &SearchBudget,
) -> Result<NormEstimate> {
    let (pe, qe) = check_pq(p, q)?;
    op.validate()?;
    check_same_lattice(target.lattice(), sigma.lattice())?;
    if op.is_poisson() != matches!(target, Target::HalfSpace(_)) {
        return Err(Error::param("the Poisson operator pairs with a half-space weight, and only it"));
    }
    let lattice = *sigma.lattice();
    let eval = |f: &CellFunction| -> Result<f64> {
        let den = weighted_power_sum(f.values(), sigma.masses(), pe.value);
        if den <= 0.0 {
            return Ok(0.0);
        }
        let num = match (apply(op, sigma, f)?, target) {
            (OperatorOutput::Cells(out), Target::Lattice(w)) => weighted_power_sum(out.values(), w.masses(), qe.value),
            (OperatorOutput::HalfSpace(out), Target::HalfSpace(w)) => {
                weighted_power_sum(out.values(), w.masses(), qe.value)
            }
            _ => unreachable!("operator and target checked above"),
        };
        Ok(num.powf(1.0 / qe.value) / den.powf(1.0 / pe.value))
    };

    // cube indicators
    let cubes: Vec<DyadicCube> = lattice.dyadic_cubes().collect();
    let indicator_values: Vec<f64> = match (tree_kind(op), target) {
        (Some(kind), Target::Lattice(w)) => {
            let t = tree_integrals(&kind, sigma, w, qe.value);
            let sp = sigma.pyramid();
            cubes
                .iter()
                .map(|c| {
                    let (l, i) = (c.level(), c.index());
                    let mass = *sp.get(l, i);
                    if mass <= 0.0 {
                        0.0
                    } else {
                        t.whole[l as usize][i].powf(1.0 / qe.value) / mass.powf(1.0 / pe.value)
                    }
                })
                .collect()
        }
        _ => cubes
            .par_iter()
            .map(|c| eval(&CellFunction::indicator(lattice, &c.cells(lattice.level()))))
            .collect::<Result<_>>()?,
    };
    let mut best = first_max(indicator_values.into_iter().zip(cubes.iter().map(Witness::dyadic)));
    let mut best_f = match &best.witness {
        Some(wt) => CellFunction::indicator(lattice, &wt.cell_box(&lattice)),
        None => CellFunction::constant(lattice, 1.0)?,
    };
    let mut source = "indicator";

    // random candidates, drawn in order from one seeded stream
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let spread = LogNormal::new(0.0, 1.5).expect("valid parameters");
    let candidates: Vec<CellFunction> = (0..budget.random)
        .map(|_| {
            let keep = rng.random_range(0.2..1.0);
            let values = (0..lattice.cell_count())
                .map(|_| if rng.random::<f64>() < keep { spread.sample(&mut rng) } else { 0.0 })
                .collect();
            CellFunction::new(lattice, values)
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = candidates.par_iter().map(&eval).collect::<Result<_>>()?;
    for (f, s) in candidates.into_iter().zip(scores) {
        if s > best.value {
            best = Best { value: s, witness: None };
            best_f = f;
            source = "random";
        }
    }

    // coordinate ascent on groups of cells
    let mut group_level = lattice.level();
    while group_level > 0 && lattice.cubes_at(group_level) > budget.coordinates.max(1) {
        group_level -= 1;
    }
    let groups = lattice.cubes_at(group_level);
    let owner = lattice.cells();
    let up = lattice.level() - group_level;
    let mut current = best.value;
    let mut values = best_f.values().to_vec();
    for _ in 0..budget.passes {
        if current <= 0.0 {
            break;
        }
        let start = current;
        for g in 0..groups {
            let members: Vec<usize> = (0..values.len()).filter(|&c| owner.ancestor(c, up) == g).collect();
            if members.iter().all(|&c| values[c] == 0.0) {
                continue;
            }
            let trials: Vec<Vec<f64>> = BUMPS
                .iter()
                .map(|&t| {
                    let mut v = values.clone();
                    for &c in &members {
                        v[c] *= t;
                    }
                    v
                })
                .collect();
            let scores: Vec<f64> = trials
                .par_iter()
                .map(|v| eval(&CellFunction::new(lattice, v.clone())?))
                .collect::<Result<_>>()?;
            for (v, s) in trials.into_iter().zip(scores) {
                if s > current {
                    current = s;
                    values = v;
                }
            }
        }
        if current - start <= ASCENT_TOLERANCE * start {
            break;
        }
    }
    if current > best.value {
        best = Best { value: current, witness: None };
        best_f = CellFunction::new(lattice, values)?;
        source = "ascent";
    }

    let mut params = vec![("p", p), ("random", budget.random as f64), ("passes", budget.passes as f64)];
    if q != p {
        params.push(("q", q));
    }
    let mut report = ConstantReport::new(&format!("norm_lower_bound:{}", op.name()), Family::Dyadic, best, &params);
    report.params.insert(
        "best_source".into(),
        match source {
            "indicator" => 0.0,
            "random" => 1.0,
            _ => 2.0,
        },
    );
    Ok(NormEstimate { report, best: best_f })
}
