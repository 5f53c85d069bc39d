//! Weights as nonnegative mass fields on the cell lattice.
//!
//! A [`WeightField`] stores the mass of every lattice cell of the root cube;
//! a [`HalfSpaceField`] stores, per cell, the mass of each dyadic height slab
//! above it. Cube and box measures are exact sums of cell masses.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::dyadic::{AlignedCube, CellBox, DyadicCube, GridDescriptor, Lattice};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::scalar::{PrefixSums, Pyramid};

/// The root cube `[lower, lower + side)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub lower: f64,
    pub side: f64,
}

impl Default for Root {
    fn default() -> Self {
        Root::unit()
    }
}

impl Root {
    /// `[0, 1)^d`.
    pub fn unit() -> Self {
        Root { lower: 0.0, side: 1.0 }
    }

    /// `[-1, 1)^d`, used for origin-centred power weights.
    pub fn centered() -> Self {
        Root { lower: -1.0, side: 2.0 }
    }

    pub fn cell_width(&self, lattice: &Lattice) -> f64 {
        self.side / lattice.side() as f64
    }

    /// Volume `|Q|` of a cube at `level`.
    pub fn cube_volume(&self, lattice: &Lattice, level: u32) -> f64 {
        (self.side * (-(level as f64)).exp2()).powi(lattice.dim() as i32)
    }

    /// Side length `ℓQ` of a cube at `level`.
    pub fn cube_side(&self, level: u32) -> f64 {
        self.side * (-(level as f64)).exp2()
    }

    /// Centre of a lattice cell along one axis.
    pub fn cell_center(&self, lattice: &Lattice, c: usize) -> f64 {
        self.lower + (c as f64 + 0.5) * self.cell_width(lattice)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.side.is_finite() && self.side > 0.0) {
            return Err(Error::param(format!("invalid root {self:?}")));
        }
        Ok(())
    }
}

/// A nonnegative measure with constant density on each lattice cell.
#[derive(Clone, Debug)]
pub struct WeightField {
    lattice: Lattice,
    root: Root,
    masses: Vec<f64>,
    prefix: PrefixSums<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldDocument {
    dimension: usize,
    level: u32,
    root: Root,
    masses: Vec<f64>,
}

impl WeightField {
    pub fn new(lattice: Lattice, root: Root, masses: Vec<f64>) -> Result<Self> {
        root.validate()?;
        if masses.len() != lattice.cell_count() {
            return Err(Error::Mismatch(format!(
                "{} masses for a lattice of {} cells",
                masses.len(),
                lattice.cell_count()
            )));
        }
        if let Some(bad) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::param(format!("cell mass {bad} is not a finite nonnegative value")));
        }
        let prefix = PrefixSums::new(&lattice, &masses);
        Ok(WeightField { lattice, root, masses, prefix })
    }

    /// Constant density on the root.
    pub fn uniform(lattice: Lattice, root: Root, density: f64) -> Result<Self> {
        let m = density * root.cube_volume(&lattice, lattice.level());
        Self::new(lattice, root, vec![m; lattice.cell_count()])
    }

    pub fn zero(lattice: Lattice, root: Root) -> Result<Self> {
        Self::new(lattice, root, vec![0.0; lattice.cell_count()])
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn root(&self) -> &Root {
        &self.root
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.prefix.query(&CellBox::new(
            &vec![0; self.lattice.dim()],
            &vec![self.lattice.side() as i64; self.lattice.dim()],
        ))
    }

    pub fn cell_volume(&self) -> f64 {
        self.root.cube_volume(&self.lattice, self.lattice.level())
    }

    pub fn cube_volume(&self, level: u32) -> f64 {
        self.root.cube_volume(&self.lattice, level)
    }

    /// Mass of a box of cells, clipped to the root.
    pub fn measure_box(&self, b: &CellBox) -> f64 {
        self.prefix.query(b).max(0.0)
    }

    /// `σ(Q)` for a standard-grid cube.
    pub fn measure(&self, q: &DyadicCube) -> f64 {
        self.measure_box(&q.cells(self.lattice.level()))
    }

    /// Mass of a cube of a shifted grid; the part outside the root carries no mass.
    pub fn measure_in_grid(&self, q: &DyadicCube, grid: &GridDescriptor) -> f64 {
        self.measure_box(&q.cell_box(self.lattice.level(), &grid.shift))
    }

    pub fn measure_aligned(&self, q: &AlignedCube) -> f64 {
        self.measure_box(&q.cell_box())
    }

    /// `⟨σ⟩_Q = σ(Q)/|Q|`.
    pub fn average(&self, q: &DyadicCube) -> f64 {
        self.measure(q) / self.cube_volume(q.level())
    }

    /// Mass of the box `[lo, hi)` given in root coordinates; endpoints must lie on the lattice.
    pub fn measure_region(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let d = self.lattice.dim();
        if lo.len() != d || hi.len() != d {
            return Err(Error::Mismatch(format!("region of dimension {} in a {d}-d field", lo.len())));
        }
        let h = self.root.cell_width(&self.lattice);
        let to_cell = |x: f64| -> Result<i64> {
            let t = (x - self.root.lower) / h;
            if (t - t.round()).abs() > 1e-9 {
                return Err(Error::NotAligned(format!("coordinate {x} is not a lattice point")));
            }
            Ok(t.round() as i64)
        };
        let lo: Vec<i64> = lo.iter().map(|&x| to_cell(x)).collect::<Result<_>>()?;
        let hi: Vec<i64> = hi.iter().map(|&x| to_cell(x)).collect::<Result<_>>()?;
        Ok(self.measure_box(&CellBox::new(&lo, &hi)))
    }

    /// Cube masses for the standard grid, aggregated bottom-up.
    pub fn pyramid(&self) -> Pyramid<f64> {
        Pyramid::from_cells(self.lattice, self.masses.clone())
    }

    /// The field `c · σ`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.lattice, self.root, self.masses.iter().map(|m| m * c).collect())
    }

    /// Cell densities `mass / cell volume`.
    pub fn density(&self) -> CellFunction {
        let v = self.cell_volume();
        CellFunction::new(self.lattice, self.masses.iter().map(|m| m / v).collect())
            .expect("densities of a valid field")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&FieldDocument {
            dimension: self.lattice.dim(),
            level: self.lattice.level(),
            root: self.root,
            masses: self.masses.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FieldDocument = serde_json::from_str(text)?;
        Self::new(Lattice::new(doc.dimension, doc.level)?, doc.root, doc.masses)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// Instance generators for random weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum FieldModel {
    /// Independent log-normal cell masses, `exp(N(mu, s^2))`.
    #[serde(rename = "iid-lognormal")]
    LogNormal { mu: f64, s: f64 },
    /// `count` distinct cells carrying `amplitude` each; all other cells empty.
    SparseAtoms { count: usize, amplitude: f64 },
}

impl FieldModel {
    fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            FieldModel::LogNormal { mu, s } => {
                let dist = LogNormal::new(mu, s)
                    .map_err(|e| Error::param(format!("log-normal({mu}, {s}): {e}")))?;
                Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
            }
            FieldModel::SparseAtoms { count, amplitude } => {
                if count > n {
                    return Err(Error::param(format!("{count} atoms on {n} cells")));
                }
                if !(amplitude.is_finite() && amplitude > 0.0) {
                    return Err(Error::param(format!("atom amplitude {amplitude}")));
                }
                let mut masses = vec![0.0; n];
                for i in rand::seq::index::sample(&mut rng, n, count) {
                    masses[i] = amplitude;
                }
                Ok(masses)
            }
        }
    }
}

/// A random field; identical `seed` gives an identical field.
pub fn random_field(lattice: Lattice, root: Root, model: &FieldModel, seed: u64) -> Result<WeightField> {
    let masses = model.sample(lattice.cell_count(), seed)?;
    WeightField::new(lattice, root, masses)
}

/// Cell masses of `|x - center|^exponent`.
///
/// In one dimension every cell is integrated exactly. In two dimensions cells
/// touching the centre are integrated exactly by an angular reduction and all
/// others by tensor Gauss–Legendre quadrature refined to a relative change
/// below `1e-6`.
pub fn power_weight(lattice: Lattice, root: Root, exponent: f64, center: &[f64]) -> Result<WeightField> {
    let d = lattice.dim();
    if !(exponent > -(d as f64)) {
        return Err(Error::NonIntegrable { exponent, dim: d });
    }
    if center.len() != d {
        return Err(Error::Mismatch(format!("centre of dimension {} for a {d}-d lattice", center.len())));
    }
    let h = root.cell_width(&lattice);
    let edge = |c: usize| root.lower + c as f64 * h;
    let cells = lattice.cells();
    let masses: Vec<f64> = match d {
        1 => (0..lattice.cell_count())
            .map(|i| quadrature::power_interval(edge(i) - center[0], edge(i + 1) - center[0], exponent))
            .collect(),
        2 => {
            use rayon::prelude::*;
            let half = exponent / 2.0;
            let f = move |x: f64, y: f64| {
                let r2 = x * x + y * y;
                if r2 == 0.0 {
                    0.0
                } else {
                    r2.powf(half)
                }
            };
            (0..lattice.cell_count())
                .into_par_iter()
                .map(|i| {
                    let c = cells.coords(i);
                    let (x0, x1) = (edge(c[0]) - center[0], edge(c[0] + 1) - center[0]);
                    let (y0, y1) = (edge(c[1]) - center[1], edge(c[1] + 1) - center[1]);
                    if x0 <= 0.0 && 0.0 <= x1 && y0 <= 0.0 && 0.0 <= y1 {
                        let mut s = 0.0;
                        for a in [-x0, x1] {
                            for b in [-y0, y1] {
                                s += quadrature::corner_rect_power(a, b, exponent);
                            }
                        }
                        s
                    } else {
                        quadrature::refined_rect(&f, x0, x1, y0, y1, 1e-6)
                    }
                })
                .collect()
        }
        _ => return Err(Error::param("power weights are implemented for d = 1, 2")),
    };
    WeightField::new(lattice, root, masses)
}

/// A nonnegative function constant on lattice cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFunction {
    lattice: Lattice,
    values: Vec<f64>,
}

impl CellFunction {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.cell_count() {
            return Err(Error::Mismatch(format!(
                "{} values for a lattice of {} cells",
                values.len(),
                lattice.cell_count()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::param(format!("function value {bad} is not finite and nonnegative")));
        }
        Ok(CellFunction { lattice, values })
    }

    pub fn constant(lattice: Lattice, c: f64) -> Result<Self> {
        Self::new(lattice, vec![c; lattice.cell_count()])
    }

    /// `1_B` for a box of cells.
    pub fn indicator(lattice: Lattice, b: &CellBox) -> Self {
        let cells = lattice.cells();
        let values = (0..lattice.cell_count())
            .map(|i| if b.contains_cell(&cells.coords(i)) { 1.0 } else { 0.0 })
            .collect();
        CellFunction { lattice, values }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.lattice, self.values.iter().map(|v| v * c).collect())
    }
}

/// `‖f‖_{L^p(σ)} = (Σ f(c)^p σ(c))^{1/p}`.
pub fn lp_norm(f: &CellFunction, field: &WeightField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::param(format!("norm exponent {p} < 1")));
    }
    if f.lattice() != field.lattice() {
        return Err(Error::Mismatch("function and field live on different lattices".into()));
    }
    Ok(weighted_power_sum(f.values(), field.masses(), p).powf(1.0 / p))
}

pub(crate) fn weighted_power_sum(values: &[f64], masses: &[f64], p: f64) -> f64 {
    values
        .iter()
        .zip(masses)
        .filter(|(v, m)| **v > 0.0 && **m > 0.0)
        .map(|(v, m)| v.powf(p) * m)
        .sum()
}

/// A weight on the upper half-space, discretized into cells × dyadic height slabs.
///
/// Slab `j < L` is the height range `(2^{-j-1}, 2^{-j}]` (in units of the root
/// side) and slab `L` is `(0, 2^{-L}]`. The Carleson box over a cube of level
/// `k` contains exactly the slabs `j >= k`.
#[derive(Clone, Debug)]
pub struct HalfSpaceField {
    lattice: Lattice,
    root: Root,
    masses: Vec<f64>,
    /// `tails[k]` sums, per cell, the masses of slabs `j >= k`.
    tails: Vec<PrefixSums<f64>>,
}

#[derive(Serialize, Deserialize)]
struct HalfSpaceDocument {
    dimension: usize,
    level: u32,
    root: Root,
    slabs: u32,
    masses: Vec<f64>,
}

impl HalfSpaceField {
    pub fn new(lattice: Lattice, root: Root, masses: Vec<f64>) -> Result<Self> {
        root.validate()?;
        let slabs = lattice.level() as usize + 1;
        if masses.len() != lattice.cell_count() * slabs {
            return Err(Error::Mismatch(format!(
                "{} slab masses for {} cells × {slabs} slabs",
                masses.len(),
                lattice.cell_count()
            )));
        }
        if let Some(bad) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::param(format!("slab mass {bad} is not a finite nonnegative value")));
        }
        let mut tails = Vec::with_capacity(slabs);
        let mut acc = vec![0.0; lattice.cell_count()];
        for j in (0..slabs).rev() {
            for (c, a) in acc.iter_mut().enumerate() {
                *a += masses[c * slabs + j];
            }
            tails.push(PrefixSums::new(&lattice, &acc));
        }
        tails.reverse();
        Ok(HalfSpaceField { lattice, root, masses, tails })
    }

    /// Constant density with respect to `dx dt`.
    pub fn uniform(lattice: Lattice, root: Root, density: f64) -> Result<Self> {
        let cell = root.cube_volume(&lattice, lattice.level());
        let slabs = lattice.level() + 1;
        let mut masses = Vec::with_capacity(lattice.cell_count() * slabs as usize);
        for _ in 0..lattice.cell_count() {
            for j in 0..slabs {
                masses.push(density * cell * slab_height(&root, &lattice, j));
            }
        }
        Self::new(lattice, root, masses)
    }

    /// Random slab masses; each (cell, slab) entry is drawn from `model`.
    pub fn random(lattice: Lattice, root: Root, model: &FieldModel, seed: u64) -> Result<Self> {
        let n = lattice.cell_count() * (lattice.level() as usize + 1);
        Self::new(lattice, root, model.sample(n, seed)?)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn root(&self) -> &Root {
        &self.root
    }

    pub fn slab_count(&self) -> usize {
        self.lattice.level() as usize + 1
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, cell: usize, slab: u32) -> f64 {
        self.masses[cell * self.slab_count() + slab as usize]
    }

    pub fn slab_bounds(&self, j: u32) -> (f64, f64) {
        slab_bounds(&self.root, &self.lattice, j)
    }

    /// `w(Q̃)` for the Carleson box over a standard-grid cube.
    pub fn box_measure(&self, q: &DyadicCube) -> f64 {
        self.tails[q.level() as usize].query(&q.cells(self.lattice.level())).max(0.0)
    }

    /// `w(B × [0, height))` for a box of base cells; only whole slabs under `height` count.
    pub fn box_measure_region(&self, b: &CellBox, height: f64) -> f64 {
        match first_slab_below(&self.root, &self.lattice, height) {
            Some(j) => self.tails[j as usize].query(b).max(0.0),
            None => 0.0,
        }
    }

    /// `|Q̃| = |Q| · ℓQ`.
    pub fn box_volume(&self, level: u32) -> f64 {
        self.root.cube_volume(&self.lattice, level) * self.root.cube_side(level)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.lattice, self.root, self.masses.iter().map(|m| m * c).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&HalfSpaceDocument {
            dimension: self.lattice.dim(),
            level: self.lattice.level(),
            root: self.root,
            slabs: self.lattice.level() + 1,
            masses: self.masses.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: HalfSpaceDocument = serde_json::from_str(text)?;
        if doc.slabs != doc.level + 1 {
            return Err(Error::Input(format!("{} slabs for lattice level {}", doc.slabs, doc.level)));
        }
        Self::new(Lattice::new(doc.dimension, doc.level)?, doc.root, doc.masses)
    }
}

/// Height range of slab `j`.
pub fn slab_bounds(root: &Root, lattice: &Lattice, j: u32) -> (f64, f64) {
    let top = root.side * (-(j as f64)).exp2();
    if j == lattice.level() {
        (0.0, top)
    } else {
        (top / 2.0, top)
    }
}

pub fn slab_height(root: &Root, lattice: &Lattice, j: u32) -> f64 {
    let (lo, hi) = slab_bounds(root, lattice, j);
    hi - lo
}

/// First slab whose upper end lies at or below `height`.
fn first_slab_below(root: &Root, lattice: &Lattice, height: f64) -> Option<u32> {
    (0..=lattice.level()).find(|&j| slab_bounds(root, lattice, j).1 <= height * (1.0 + 1e-12))
}

/// A function on cells × height slabs, e.g. the dyadic Poisson extension.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpaceFunction {
    lattice: Lattice,
    values: Vec<f64>,
}

impl HalfSpaceFunction {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.cell_count() * (lattice.level() as usize + 1) {
            return Err(Error::Mismatch("half-space function of the wrong size".into()));
        }
        Ok(HalfSpaceFunction { lattice, values })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, cell: usize, slab: u32) -> f64 {
        self.values[cell * (self.lattice.level() as usize + 1) + slab as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn lat(d: usize, l: u32) -> Lattice {
        Lattice::new(d, l).unwrap()
    }

    #[test]
    fn uniform_half_interval() {
        let f = WeightField::uniform(lat(1, 3), Root::unit(), 1.0).unwrap();
        assert!((f.measure_region(&[0.0], &[0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(f.measure_region(&[0.1], &[0.5]).is_err());
    }

    #[test]
    fn atom_outside_region() {
        let mut m = vec![0.0; 8];
        m[0] = 1.0;
        let f = WeightField::new(lat(1, 3), Root::unit(), m).unwrap();
        assert_eq!(f.measure_region(&[0.25], &[1.0]).unwrap(), 0.0);
        assert_eq!(f.measure_region(&[0.0], &[0.125]).unwrap(), 1.0);
    }

    #[test]
    fn prefix_measures_match_loops() {
        let l = lat(2, 5);
        let f = random_field(l, Root::unit(), &FieldModel::LogNormal { mu: 0.0, s: 1.0 }, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cells = l.cells();
        for _ in 0..100 {
            let side = rng.random_range(1..=32);
            let lo = [rng.random_range(0..=32 - side), rng.random_range(0..=32 - side)];
            let q = AlignedCube::new(&lo, side);
            let b = q.cell_box();
            let direct: f64 = (0..l.cell_count())
                .filter(|&i| b.contains_cell(&cells.coords(i)))
                .map(|i| f.masses()[i])
                .sum();
            let fast = f.measure_aligned(&q);
            assert!((fast - direct).abs() <= 1e-10 * direct.max(1.0), "{fast} vs {direct}");
        }
    }

    #[test]
    fn power_weight_totals() {
        let l = lat(1, 6);
        let f = power_weight(l, Root::unit(), 0.0, &[0.0]).unwrap();
        assert!(f.masses().iter().all(|&m| (m - 1.0 / 64.0).abs() < 1e-15));
        let f = power_weight(l, Root::unit(), 1.0, &[0.0]).unwrap();
        assert!((f.total_mass() - 0.5).abs() < 1e-13);
        let f = power_weight(l, Root::unit(), -0.5, &[0.0]).unwrap();
        assert!((f.total_mass() - 2.0).abs() < 1e-13);
        assert!(matches!(
            power_weight(l, Root::unit(), -1.0, &[0.0]),
            Err(Error::NonIntegrable { .. })
        ));
    }

    #[test]
    fn power_weight_2d_total() {
        // ∫_{[-1,1)^2} |x|^{-1} dx = 8 asinh(1) = 8 ln(1 + √2)
        let l = lat(2, 4);
        let f = power_weight(l, Root::centered(), -1.0, &[0.0, 0.0]).unwrap();
        let exact = 8.0 * (1.0 + 2f64.sqrt()).ln();
        assert!((f.total_mass() - exact).abs() < 1e-5 * exact, "{}", f.total_mass());
    }

    #[test]
    fn lognormal_mean() {
        let l = lat(1, 10);
        let f = random_field(l, Root::unit(), &FieldModel::LogNormal { mu: 0.0, s: 1.0 }, 3).unwrap();
        let n = 1024.0;
        let mean = n * 0.5f64.exp();
        // Var of a lognormal(0,1) sample: (e - 1) e
        let sd = (n * (1f64.exp() - 1.0) * 1f64.exp()).sqrt();
        assert!((f.total_mass() - mean).abs() < 5.0 * sd);
    }

    #[test]
    fn sparse_atoms_and_determinism() {
        let l = lat(2, 4);
        let f = random_field(l, Root::unit(), &FieldModel::SparseAtoms { count: 1, amplitude: 1.0 }, 9).unwrap();
        assert_eq!(f.masses().iter().filter(|&&m| m > 0.0).count(), 1);
        let model = FieldModel::LogNormal { mu: 0.0, s: 2.0 };
        let a = random_field(l, Root::unit(), &model, 77).unwrap();
        let b = random_field(l, Root::unit(), &model, 77).unwrap();
        assert_eq!(a.masses(), b.masses());
    }

    #[test]
    fn lp_norm_cases() {
        let l = lat(1, 4);
        let sigma = random_field(l, Root::unit(), &FieldModel::LogNormal { mu: 0.0, s: 1.0 }, 1).unwrap();
        let one = CellFunction::constant(l, 1.0).unwrap();
        let v = lp_norm(&one, &sigma, 3.0).unwrap();
        assert!((v - sigma.total_mass().powf(1.0 / 3.0)).abs() < 1e-12);

        let leb = WeightField::uniform(l, Root::unit(), 1.0).unwrap();
        let q = DyadicCube::new(1, 2, &[1]);
        let ind = CellFunction::indicator(l, &q.cells(4));
        let v = lp_norm(&ind, &leb, 2.0).unwrap();
        assert!((v - 0.25f64.sqrt()).abs() < 1e-15);

        let f = random_field(l, Root::unit(), &FieldModel::LogNormal { mu: 0.0, s: 1.0 }, 2).unwrap();
        let f = CellFunction::new(l, f.masses().to_vec()).unwrap();
        let mut naive = 0.0;
        for i in 0..16 {
            naive += f.values()[i] * f.values()[i] * sigma.masses()[i];
        }
        assert!((lp_norm(&f, &sigma, 2.0).unwrap() - naive.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let l = lat(2, 3);
        let f = random_field(l, Root::centered(), &FieldModel::LogNormal { mu: 0.3, s: 1.7 }, 4).unwrap();
        let g = WeightField::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f.masses(), g.masses());
        assert_eq!(f.root(), g.root());
        assert!(WeightField::from_json("{\"dimension\":1}").is_err());
    }

    #[test]
    fn uniform_half_space_boxes() {
        let l = lat(1, 4);
        let w = HalfSpaceField::uniform(l, Root::unit(), 1.0).unwrap();
        for q in l.dyadic_cubes() {
            let avg = w.box_measure(&q) / w.box_volume(q.level());
            assert!((avg - 1.0).abs() < 1e-13);
        }
        let b = CellBox::new(&[0], &[16]);
        assert!((w.box_measure_region(&b, 1.0) - 1.0).abs() < 1e-13);
        assert!((w.box_measure_region(&b, 0.75) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn additivity_over_children() {
        let l = lat(2, 4);
        let f = random_field(l, Root::unit(), &FieldModel::SparseAtoms { count: 5, amplitude: 2.0 }, 8).unwrap();
        for q in l.dyadic_cubes().filter(|q| q.level() < 4) {
            let kids: f64 = l.children(&q).unwrap().iter().map(|k| f.measure(k)).sum();
            assert_eq!(kids, f.measure(&q));
        }
    }
}
