//! The four-collection decomposition behind the doubling-parent testing theorem.
//!
//! Every dyadic subcube `Q` of a test cube `Q0` falls into exactly one of
//!
//! * **T**: `Q` lies under a maximal cube with a doubling parent
//!   `σ(Q^{(1)}) ≤ D σ(Q)` (those maximal cubes form **T\***);
//! * **U**: `Q ∉ T` is within `k` generations of `Q0`;
//! * **A**: `Q ∉ T ∪ U` has a small local `A_p` product,
//!   `⟨σ⟩_Q^{p-1} ⟨w⟩_Q · m^p ≤ [w,σ]_p^p` with `m = log₂(ℓQ0/ℓQ)`;
//! * **R**: everything else.
//!
//! At `D = 2^{d(p+1)/(p-1)}` the chain argument shows `R = ∅`. The engine runs
//! in double precision or, with [`BigRational`] masses, exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use crate::constants::{maximal_testing_integrals, ParentMode};
use crate::dyadic::{CellBox, DyadicCube, Lattice, MAX_DIM};
use crate::error::{Error, Result};
use crate::field::WeightField;
use crate::scalar::{Exponent, PrefixSums, Pyramid, Scalar, Threshold};

/// `D = 2^{d(p+1)/(p-1)}`.
pub fn paper_d(d: usize, p: f64) -> Result<f64> {
    Ok(doubling_threshold(d, p)?.value())
}

/// The threshold `2^{d(p+1)/(p-1)}`, as an exact power of two when `p` is a small fraction.
pub fn doubling_threshold(d: usize, p: f64) -> Result<Threshold> {
    let e = Exponent::new(p)?;
    Ok(match e.ratio {
        Some((a, b)) => {
            let (num, den) = ((d as i64) * (a + b) as i64, (a - b) as i64);
            let g = num_integer::gcd(num, den);
            Threshold::Pow2 { num: num / g, den: den / g }
        }
        None => Threshold::Value((d as f64 * (p + 1.0) / (p - 1.0)).exp2()),
    })
}

/// Smallest `k ≥ ⌈p / (d ln 2)⌉` with `2^{dm} m^{-p} > 1` for every `m ≥ k`.
///
/// Past `p / (d ln 2)` the map `t ↦ 2^{dt} t^{-p}` increases, so it is enough
/// to find the first `k` where it exceeds one. Rational `p = a/b` is decided
/// in integers: `2^{dkb} > k^a`.
pub fn min_top_k(d: usize, p: f64) -> Result<u32> {
    let e = Exponent::new(p)?;
    if d == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    let start = (p / (d as f64 * std::f64::consts::LN_2)).ceil().max(1.0) as u32;
    let exceeds = |k: u32| match e.ratio {
        Some((a, b)) => {
            let lhs = BigInt::one() << (d as u64 * k as u64 * b as u64) as usize;
            lhs > num_traits::pow(BigInt::from(k), a as usize)
        }
        None => (d as f64) * k as f64 * std::f64::consts::LN_2 > p * (k as f64).ln(),
    };
    Ok((start..).find(|&k| exceeds(k)).expect("2^{dk} outgrows k^p"))
}

/// `Σ_{m > k} m^{-p}`, certified from above by the integral tail past the last summed term.
pub fn small_cube_coefficient(k: u32, p: f64) -> f64 {
    const TERMS: u32 = 1_000_000;
    let mut s = 0.0;
    for m in (k + 1..=k + TERMS).rev() {
        s += (m as f64).powf(-p);
    }
    let last = (k + TERMS) as f64;
    s + last.powf(1.0 - p) / (p - 1.0)
}

/// Parameters of a decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Settings {
    pub p: f64,
    pub rho: f64,
    pub threshold: Threshold,
    pub parent_mode: ParentMode,
}

impl Settings {
    /// `ρ = 2`, `D = 2^{d(p+1)/(p-1)}`, dyadic parents.
    pub fn paper(d: usize, p: f64) -> Result<Self> {
        Ok(Settings { p, rho: 2.0, threshold: doubling_threshold(d, p)?, parent_mode: ParentMode::Dyadic })
    }

    pub fn with_threshold(self, threshold: Threshold) -> Self {
        Settings { threshold, ..self }
    }

    fn validate(&self) -> Result<Exponent> {
        let e = Exponent::new(self.p)?;
        if !(self.rho > 1.0 && self.rho <= 2.0) {
            return Err(Error::param(format!("parent dilation ρ = {} must lie in (1, 2]", self.rho)));
        }
        if !(self.threshold.value() > 1.0) {
            return Err(Error::param(format!("doubling threshold D = {} must exceed 1", self.threshold.value())));
        }
        Ok(e)
    }
}

/// A standard-grid cube in reports.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CubeRef {
    pub level: u32,
    pub coords: Vec<i64>,
}

impl From<&DyadicCube> for CubeRef {
    fn from(q: &DyadicCube) -> Self {
        CubeRef { level: q.level(), coords: q.coords().to_vec() }
    }
}

/// Collection labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Collection {
    Testing,
    Top,
    SmallAp,
    Remaining,
}

/// Per-collection numbers.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PerCollection {
    pub testing: f64,
    pub top: f64,
    pub small_ap: f64,
    pub remaining: f64,
}

impl PerCollection {
    fn slot(&mut self, c: Collection) -> &mut f64 {
        match c {
            Collection::Testing => &mut self.testing,
            Collection::Top => &mut self.top,
            Collection::SmallAp => &mut self.small_ap,
            Collection::Remaining => &mut self.remaining,
        }
    }
}

/// The constant assembled from the three collection bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertifiedConstant {
    /// Coefficient of `𝔓^p σ(Q0)`.
    pub testing: f64,
    /// `2^{1+d(k+1)}`, the bound on `|U|`.
    pub top_count_bound: f64,
    /// Upper bound for `Σ_{m>k} m^{-p}`.
    pub small_ap: f64,
}

/// Exact masses, reported by the rational engine.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactMasses {
    pub sigma_q0: String,
    pub t_star_sigma: String,
    pub t_star_within_q0: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub q0: CubeRef,
    pub dimension: usize,
    pub p: f64,
    pub rho: f64,
    #[serde(rename = "D")]
    pub threshold: f64,
    pub parent_mode: ParentMode,
    pub k: u32,
    pub exact: bool,
    /// `[w, σ]_p` over the dyadic cubes of the root.
    pub ap: f64,
    pub t_star: Vec<CubeRef>,
    pub t: Vec<CubeRef>,
    pub u: Vec<CubeRef>,
    pub a: Vec<CubeRef>,
    pub r: Vec<CubeRef>,
    /// T: `Σ_{Q ∈ T*} ∫_Q M_D(σ1_Q)^p dw`; the others `Σ_Q ⟨σ⟩_Q^p w(Q)`.
    pub sums: PerCollection,
    /// `∫_{Q0} sup_{Q ∈ C} ⟨σ⟩_Q^p 1_Q dw` per collection `C`.
    pub sup_integrals: PerCollection,
    /// `∫_{Q0} M_D(σ 1_{Q0})^p dw`.
    pub testing_integral: f64,
    pub sigma_q0: f64,
    pub t_star_sigma: f64,
    pub certified_c: CertifiedConstant,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_masses: Option<ExactMasses>,
    /// Chain diagnostics for the first remaining cube, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remainder_certificate: Option<ChainCertificate>,
    /// Labels per generation below `Q0`, in row-major order of the local coordinates.
    #[serde(skip)]
    pub labels: Vec<Vec<Collection>>,
}

impl DecompositionReport {
    pub fn is_remainder_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Every cube under `Q0` once, and `T*` pairwise disjoint.
    pub fn check_partition(&self) -> bool {
        let d = self.dimension;
        let total: usize = (0..self.labels.len()).map(|m| 1usize << (d * m)).sum();
        let counted = self.t.len() + self.u.len() + self.a.len() + self.r.len();
        let labelled: usize = self.labels.iter().map(Vec::len).sum();
        let disjoint = self.t_star.iter().enumerate().all(|(i, a)| {
            self.t_star[i + 1..].iter().all(|b| {
                let (qa, qb) = (DyadicCube::new(d, a.level, &a.coords), DyadicCube::new(d, b.level, &b.coords));
                !qa.contains(&qb) && !qb.contains(&qa)
            })
        });
        counted == total && labelled == total && disjoint
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One inequality of the chain argument.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainLink {
    pub name: String,
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// The chain argument evaluated at a cube with no doubling ancestor inside `Q0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainCertificate {
    pub cube: CubeRef,
    pub q0: CubeRef,
    pub m: u32,
    pub k: u32,
    /// `σ(Q0) / σ(Q)`.
    pub sigma_ratio: f64,
    /// `⟨σ⟩_Q^{p-1} ⟨w⟩_Q`.
    pub local_q: f64,
    pub local_q0: f64,
    /// `⟨σ⟩_Q^{p-1}⟨w⟩_Q m^p / [w,σ]_p^p`; above one means the small-`A_p` test fails.
    pub small_ratio: f64,
    pub links: Vec<ChainLink>,
    /// `m < k`, i.e. the cube is one of the top cubes.
    pub conclusion_m_below_k: bool,
}

impl ChainCertificate {
    pub fn first_failure(&self) -> Option<&ChainLink> {
        self.links.iter().find(|l| !l.holds)
    }
}

/// Checks of the testing-inequality assembly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EptBound {
    pub testing_integral: f64,
    pub bound: f64,
    pub holds: bool,
    pub testing_bound: ChainLink,
    pub top_bound: ChainLink,
    pub small_ap_bound: ChainLink,
    pub top_count: ChainLink,
}

impl EptBound {
    pub fn all_hold(&self) -> bool {
        self.holds && self.testing_bound.holds && self.top_bound.holds && self.small_ap_bound.holds && self.top_count.holds
    }
}

/// Relative slack for comparisons of double-precision sums.
pub const SUM_TOLERANCE: f64 = 1e-9;

fn link(name: &str, lhs: f64, rhs: f64) -> ChainLink {
    ChainLink { name: name.into(), holds: lhs <= rhs * (1.0 + SUM_TOLERANCE), lhs, rhs }
}

/// `testing_integral ≤ 𝔓^p σ(Q0) + ap^p (|U| + Σ_{m>k} m^{-p}) σ(Q0)`, with the
/// three collection bounds checked one by one.
pub fn assemble_ept_bound(report: &DecompositionReport, testing_constant: f64, ap: f64) -> Result<EptBound> {
    if let Some(cert) = &report.remainder_certificate {
        return Err(Error::NonEmptyRemainder { count: report.r.len(), certificate: Box::new(cert.clone()) });
    }
    let p = report.p;
    let s0 = report.sigma_q0;
    let (tp, app) = (testing_constant.powf(p), ap.powf(p));
    let u = report.u.len() as f64;
    let coef = report.certified_c.small_ap;
    let bound = tp * s0 + app * (u + coef) * s0;
    Ok(EptBound {
        testing_integral: report.testing_integral,
        bound,
        holds: report.testing_integral <= bound * (1.0 + SUM_TOLERANCE),
        testing_bound: link("testing", report.sums.testing, tp * s0),
        top_bound: link("top", report.sums.top, app * u * s0),
        small_ap_bound: link("small_ap", report.sums.small_ap, app * coef * s0),
        top_count: link("top_count", u, report.certified_c.top_count_bound),
    })
}

/// Masses of a weight pair prepared for repeated decompositions.
#[derive(Clone, Debug)]
pub struct Decomposer<T> {
    lattice: Lattice,
    settings: Settings,
    exponent: Exponent,
    k: u32,
    sigma: Pyramid<T>,
    w: Pyramid<T>,
    sigma_prefix: Option<PrefixSums<T>>,
    volumes: Vec<T>,
    max_local: T,
    sigma_f: Pyramid<f64>,
    w_f: Pyramid<f64>,
    volumes_f: Vec<f64>,
    testing: Vec<Vec<f64>>,
}

impl Decomposer<f64> {
    pub fn from_fields(w: &WeightField, sigma: &WeightField, settings: Settings) -> Result<Self> {
        Self::build(w, sigma, settings, |x| x)
    }
}

impl Decomposer<BigRational> {
    /// Exact engine; every double mass converts without rounding.
    pub fn from_fields_exact(w: &WeightField, sigma: &WeightField, settings: Settings) -> Result<Self> {
        Exponent::new(settings.p)?.rational()?;
        Self::build(w, sigma, settings, BigRational::from_f64)
    }
}

impl<T: Scalar> Decomposer<T> {
    fn build(w: &WeightField, sigma: &WeightField, settings: Settings, conv: impl Fn(f64) -> T) -> Result<Self> {
        let exponent = settings.validate()?;
        if w.lattice() != sigma.lattice() || w.root() != sigma.root() {
            return Err(Error::Mismatch("the two weights live on different lattices".into()));
        }
        let lattice = *sigma.lattice();
        let sigma_t = Pyramid::from_cells(lattice, sigma.masses().iter().map(|&m| conv(m)).collect());
        let w_t = Pyramid::from_cells(lattice, w.masses().iter().map(|&m| conv(m)).collect());
        let volumes_f: Vec<f64> = (0..=lattice.level()).map(|l| sigma.cube_volume(l)).collect();
        let volumes = volumes_f.iter().map(|&v| conv(v)).collect();
        let sigma_prefix = (settings.parent_mode == ParentMode::Sliding).then(|| {
            let cells: Vec<T> = sigma.masses().iter().map(|&m| conv(m)).collect();
            PrefixSums::new(&lattice, &cells)
        });
        let testing = maximal_testing_integrals(sigma, w, exponent.value);
        let mut dec = Decomposer {
            lattice,
            settings,
            exponent,
            k: min_top_k(lattice.dim(), settings.p)?,
            sigma: sigma_t,
            w: w_t,
            sigma_prefix,
            volumes,
            max_local: T::zero(),
            sigma_f: sigma.pyramid(),
            w_f: w.pyramid(),
            volumes_f,
            testing,
        };
        dec.max_local = dec.ambient_max_local();
        Ok(dec)
    }

    /// Multiply both weights by `c > 0`; the collections must not change.
    pub fn scale(&self, c: &T) -> Self {
        let cf = c.to_f64();
        let power = cf.powf(self.exponent.value + 1.0);
        let mut out = Decomposer {
            lattice: self.lattice,
            settings: self.settings,
            exponent: self.exponent,
            k: self.k,
            sigma: self.sigma.map(|m| m.clone() * c.clone()),
            w: self.w.map(|m| m.clone() * c.clone()),
            sigma_prefix: None,
            volumes: self.volumes.clone(),
            max_local: T::zero(),
            sigma_f: self.sigma_f.map(|m| m * cf),
            w_f: self.w_f.map(|m| m * cf),
            volumes_f: self.volumes_f.clone(),
            testing: self.testing.iter().map(|l| l.iter().map(|v| v * power).collect()).collect(),
        };
        if let Some(prefix) = &self.sigma_prefix {
            out.sigma_prefix = Some(prefix.scaled(c));
        }
        out.max_local = out.ambient_max_local();
        out
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// `[w, σ]_p` over the dyadic cubes of the root.
    pub fn ambient_ap(&self) -> f64 {
        let local = T::local_to_f64(&self.max_local, &self.exponent);
        local.powf(1.0 / self.exponent.value)
    }

    fn local(&self, level: u32, idx: usize) -> T {
        let vol = &self.volumes[level as usize];
        let s = self.sigma.get(level, idx).clone() / vol.clone();
        let w = self.w.get(level, idx).clone() / vol.clone();
        T::local_product(&s, &w, &self.exponent)
    }

    fn ambient_max_local(&self) -> T {
        let mut best = T::zero();
        for level in 0..=self.lattice.level() {
            for idx in 0..self.lattice.cubes_at(level) {
                let v = self.local(level, idx);
                if v > best {
                    best = v;
                }
            }
        }
        best
    }

    /// Mass of the admissible parent used by the doubling test.
    fn parent_mass(&self, q: &DyadicCube) -> T {
        match &self.sigma_prefix {
            None => match q.parent() {
                Some(p) => self.sigma.get(p.level(), p.index()).clone(),
                // beyond the root the parent is clipped to the root
                None => self.sigma.total().clone(),
            },
            Some(prefix) => {
                let top = self.lattice.level();
                let side = q.side_cells(top) as i64;
                let ps = ((self.settings.rho * side as f64) - 1e-9).ceil() as i64;
                let slack = ps - side;
                let base = q.cells(top);
                let d = self.lattice.dim();
                let per = (slack + 1) as usize;
                let mut best: Option<T> = None;
                for k in 0..per.pow(d as u32) {
                    let mut rest = k;
                    let mut b = CellBox { dim: d, lo: [0; MAX_DIM], hi: [0; MAX_DIM] };
                    for a in 0..d {
                        b.lo[a] = base.lo[a] - slack + (rest % per) as i64;
                        rest /= per;
                        b.hi[a] = b.lo[a] + ps;
                    }
                    let m = prefix.query(&b.clip(self.lattice.side()));
                    if best.as_ref().is_none_or(|cur| m < *cur) {
                        best = Some(m);
                    }
                }
                best.expect("at least one position")
            }
        }
    }

    fn doubling(&self, q: &DyadicCube) -> bool {
        let mass = self.sigma.get(q.level(), q.index());
        T::doubling_holds(&self.parent_mass(q), mass, &self.settings.threshold)
    }

    fn cube_at(&self, q0: &DyadicCube, local: &Lattice, m: u32, i: usize) -> DyadicCube {
        let u = local.indexer(m).coords(i);
        let mut coords = [0i64; MAX_DIM];
        for a in 0..self.lattice.dim() {
            coords[a] = (q0.coords()[a] << m) + u[a] as i64;
        }
        DyadicCube::new(self.lattice.dim(), q0.level() + m, &coords[..self.lattice.dim()])
    }

    fn check_q0(&self, q0: &DyadicCube) -> Result<()> {
        if !self.lattice.holds(q0) {
            return Err(Error::param("the test cube must be a standard-grid cube inside the root"));
        }
        Ok(())
    }

    /// Sort every dyadic `Q ⊆ Q0` down to the cells into T, U, A, R.
    pub fn classify(&self, q0: &DyadicCube) -> Result<DecompositionReport> {
        self.check_q0(q0)?;
        let d = self.lattice.dim();
        let depth = self.lattice.level() - q0.level();
        let local = Lattice::new(d, depth)?;
        let p = self.exponent.value;

        let mut labels: Vec<Vec<Collection>> = Vec::with_capacity(depth as usize + 1);
        let mut powers: Vec<Vec<f64>> = Vec::with_capacity(depth as usize + 1);
        let (mut t_star, mut t, mut u, mut a, mut r) = (vec![], vec![], vec![], vec![], vec![]);
        let mut sums = PerCollection::default();
        let mut t_star_sigma = T::zero();
        let mut prev_in_t: Vec<bool> = Vec::new();
        for m in 0..=depth {
            let ix = local.indexer(m);
            let count = local.cubes_at(m);
            let mut level_labels = Vec::with_capacity(count);
            let mut level_powers = Vec::with_capacity(count);
            let mut in_t = Vec::with_capacity(count);
            for i in 0..count {
                let q = self.cube_at(q0, &local, m, i);
                let (lv, gi) = (q.level(), q.index());
                let sigma_avg = self.sigma_f.get(lv, gi) / self.volumes_f[lv as usize];
                let term = if sigma_avg > 0.0 { sigma_avg.powf(p) * self.w_f.get(lv, gi) } else { 0.0 };
                let parent_in_t = m > 0 && prev_in_t[ix.ancestor(i, 1)];
                let label = if parent_in_t {
                    Collection::Testing
                } else if self.doubling(&q) {
                    t_star.push(CubeRef::from(&q));
                    t_star_sigma += self.sigma.get(lv, gi);
                    sums.testing += self.testing[lv as usize][gi];
                    Collection::Testing
                } else if m <= self.k {
                    Collection::Top
                } else if T::small_holds(&self.local(lv, gi), m, &self.max_local, &self.exponent) {
                    Collection::SmallAp
                } else {
                    Collection::Remaining
                };
                match label {
                    Collection::Testing => t.push(CubeRef::from(&q)),
                    Collection::Top => u.push(CubeRef::from(&q)),
                    Collection::SmallAp => a.push(CubeRef::from(&q)),
                    Collection::Remaining => r.push(CubeRef::from(&q)),
                }
                if label != Collection::Testing {
                    *sums.slot(label) += term;
                }
                in_t.push(label == Collection::Testing);
                level_labels.push(label);
                level_powers.push(sigma_avg.powf(p).max(0.0));
            }
            prev_in_t = in_t;
            labels.push(level_labels);
            powers.push(level_powers);
        }

        // per-collection pointwise suprema integrated against w over the cells of Q0
        let mut sup_integrals = PerCollection::default();
        let cells = local.indexer(depth);
        let top = self.lattice.level();
        for j in 0..local.cubes_at(depth) {
            let cell = self.cube_at(q0, &local, depth, j);
            let wx = *self.w_f.get(top, cell.index());
            if wx <= 0.0 {
                continue;
            }
            let mut best = PerCollection::default();
            for m in 0..=depth {
                let i = cells.ancestor(j, depth - m);
                let slot = best.slot(labels[m as usize][i]);
                *slot = slot.max(powers[m as usize][i]);
            }
            sup_integrals.testing += wx * best.testing;
            sup_integrals.top += wx * best.top;
            sup_integrals.small_ap += wx * best.small_ap;
            sup_integrals.remaining += wx * best.remaining;
        }

        let sigma_q0 = self.sigma.get(q0.level(), q0.index()).clone();
        let exact_masses = match (sigma_q0.exact_string(), t_star_sigma.exact_string()) {
            (Some(s), Some(ts)) => {
                Some(ExactMasses { sigma_q0: s, t_star_sigma: ts, t_star_within_q0: t_star_sigma <= sigma_q0 })
            }
            _ => None,
        };
        let remainder_certificate = match r.first() {
            Some(c) => Some(self.chain_certificate(&DyadicCube::new(d, c.level, &c.coords), q0)?),
            None => None,
        };
        Ok(DecompositionReport {
            q0: CubeRef::from(q0),
            dimension: d,
            p,
            rho: self.settings.rho,
            threshold: self.settings.threshold.value(),
            parent_mode: self.settings.parent_mode,
            k: self.k,
            exact: T::EXACT,
            ap: self.ambient_ap(),
            t_star,
            t,
            u,
            a,
            r,
            sums,
            sup_integrals,
            testing_integral: self.testing[q0.level() as usize][q0.index()],
            sigma_q0: sigma_q0.to_f64(),
            t_star_sigma: t_star_sigma.to_f64(),
            certified_c: CertifiedConstant {
                testing: 1.0,
                top_count_bound: (1.0 + (d as f64) * (self.k as f64 + 1.0)).exp2(),
                small_ap: small_cube_coefficient(self.k, p),
            },
            exact_masses,
            remainder_certificate,
            labels,
        })
    }

    /// Walk the chain argument at `Q ⊆ Q0`, which must have no doubling ancestor inside `Q0`.
    pub fn chain_certificate(&self, q: &DyadicCube, q0: &DyadicCube) -> Result<ChainCertificate> {
        self.check_q0(q0)?;
        if !self.lattice.holds(q) || !q0.contains(q) {
            return Err(Error::param("the cube must be a standard-grid cube inside the test cube"));
        }
        let m = q.level() - q0.level();
        let chain: Vec<DyadicCube> = (0..=m).map(|j| q.parent_chain(j)).collect::<Result<_>>()?;
        if let Some(bad) = chain.iter().find(|c| self.doubling(c)) {
            return Err(Error::ChainHypothesis(format!(
                "cube at level {} {:?} has a doubling parent",
                bad.level(),
                bad.coords()
            )));
        }
        let d = self.lattice.dim() as f64;
        let p = self.exponent.value;
        let dval = self.settings.threshold.value();
        let mut links = Vec::new();
        for j in 0..m as usize {
            let (child, parent) = (&chain[j], &chain[j + 1]);
            let (cm, pm) = (self.sigma.get(child.level(), child.index()), self.sigma.get(parent.level(), parent.index()));
            links.push(ChainLink {
                name: format!("doubling_fails_{j}"),
                holds: !T::doubling_holds(pm, cm, &self.settings.threshold),
                lhs: pm.to_f64(),
                rhs: dval * cm.to_f64(),
            });
        }
        let sq = self.sigma.get(q.level(), q.index());
        let sq0 = self.sigma.get(q0.level(), q0.index());
        let growth_threshold = match self.settings.threshold {
            Threshold::Pow2 { num, den } => Threshold::Pow2 { num: -num * m as i64, den },
            Threshold::Value(v) => Threshold::Value(v.powi(-(m as i32))),
        };
        links.push(ChainLink {
            name: "mass_growth".into(),
            holds: T::doubling_holds(sq, sq0, &growth_threshold),
            lhs: sq0.to_f64(),
            rhs: dval.powi(m as i32) * sq.to_f64(),
        });
        let local_q = self.local(q.level(), q.index());
        let local_q0 = self.local(q0.level(), q0.index());
        let (lq, lq0) = (T::local_to_f64(&local_q, &self.exponent), T::local_to_f64(&local_q0, &self.exponent));
        let max_f = T::local_to_f64(&self.max_local, &self.exponent);
        links.push(ChainLink { name: "ap_at_top".into(), holds: local_q0 <= self.max_local, lhs: lq0, rhs: max_f });
        let factor = (dval / (d * self.exponent.dual()).exp2()).powf(m as f64 * (p - 1.0));
        links.push(ChainLink {
            name: "transfer".into(),
            holds: lq0 >= factor * lq * (1.0 - 1e-12),
            lhs: lq0,
            rhs: factor * lq,
        });
        let small = m > 0 && T::small_holds(&local_q, m, &self.max_local, &self.exponent);
        links.push(ChainLink {
            name: "not_small".into(),
            holds: m > 0 && !small,
            lhs: lq * (m as f64).powf(p),
            rhs: max_f,
        });
        let needed = d * (p + 1.0) / (p - 1.0);
        links.push(ChainLink {
            name: "growth".into(),
            holds: dval.log2() >= needed - 1e-12,
            lhs: needed,
            rhs: dval.log2(),
        });
        Ok(ChainCertificate {
            cube: CubeRef::from(q),
            q0: CubeRef::from(q0),
            m,
            k: self.k,
            sigma_ratio: if sq.is_zero() { f64::INFINITY } else { sq0.to_f64() / sq.to_f64() },
            local_q: lq,
            local_q0: lq0,
            small_ratio: if max_f > 0.0 { lq * (m as f64).powf(p) / max_f } else { f64::INFINITY },
            links,
            conclusion_m_below_k: m < self.k,
        })
    }
}
