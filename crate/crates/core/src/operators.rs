//! Positive operators applied to `σ f` on the lattice.
//!
//! Every dyadic operator is a tree sweep over the cube masses of `σ f`:
//! maximal functions carry a running maximum from the root to the cells, the
//! Poisson and fractional models carry a running sum.

use serde::{Deserialize, Serialize};

use crate::dyadic::{shifted_grids, CellBox, DyadicCube, GridDescriptor, Lattice, MAX_DIM};
use crate::error::{Error, Result};
use crate::field::{CellFunction, HalfSpaceField, HalfSpaceFunction, Root, WeightField};
use crate::scalar::{PrefixSums, Pyramid};

/// Which operator a testing constant or norm estimate refers to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    /// `M_D` over one of the shifted grids (`grid = 0` is the standard grid).
    DyadicMaximal {
        #[serde(default)]
        grid: usize,
    },
    /// Supremum over all lattice-aligned cubes.
    FullMaximal,
    /// Pointwise maximum of `M_{D_j}` over the shifted grids.
    ShiftedMaximal,
    /// `P_D f = Σ_Q ⟨f⟩_Q 1_{Q̃}`.
    DyadicPoisson,
    /// `Σ_{Q ∋ x} |Q|^{1-α} ⟨f⟩_Q`.
    DyadicFractional { alpha: f64 },
}

impl OperatorKind {
    pub fn standard_maximal() -> Self {
        OperatorKind::DyadicMaximal { grid: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if let OperatorKind::DyadicFractional { alpha } = *self {
            check_alpha(alpha)?;
        }
        Ok(())
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self, OperatorKind::DyadicPoisson)
    }

    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::DyadicMaximal { .. } => "dyadic_maximal",
            OperatorKind::FullMaximal => "full_maximal",
            OperatorKind::ShiftedMaximal => "shifted_maximal",
            OperatorKind::DyadicPoisson => "dyadic_poisson",
            OperatorKind::DyadicFractional { .. } => "dyadic_fractional",
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("fractional order α = {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// Output of an operator: a cell function, or a function on the half-space.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorOutput {
    Cells(CellFunction),
    HalfSpace(HalfSpaceFunction),
}

/// Apply `op` to `σ f`.
pub fn apply(op: &OperatorKind, sigma: &WeightField, f: &CellFunction) -> Result<OperatorOutput> {
    op.validate()?;
    Ok(match *op {
        OperatorKind::DyadicMaximal { grid } => {
            let grids = shifted_grids(sigma.lattice().dim(), sigma.lattice().side())?;
            let g = grids
                .iter()
                .find(|g| g.id == grid)
                .ok_or_else(|| Error::param(format!("no shifted grid with id {grid}")))?;
            OperatorOutput::Cells(dyadic_maximal(sigma, f, g)?)
        }
        OperatorKind::FullMaximal => OperatorOutput::Cells(full_maximal(sigma, f)?),
        OperatorKind::ShiftedMaximal => OperatorOutput::Cells(shifted_maximal(sigma, f)?),
        OperatorKind::DyadicPoisson => OperatorOutput::HalfSpace(dyadic_poisson(sigma, f)?),
        OperatorKind::DyadicFractional { alpha } => OperatorOutput::Cells(dyadic_fractional(sigma, f, alpha)?),
    })
}

fn weighted_masses(sigma: &WeightField, f: &CellFunction) -> Result<Vec<f64>> {
    if sigma.lattice() != f.lattice() {
        return Err(Error::Mismatch("weight and function live on different lattices".into()));
    }
    Ok(sigma.masses().iter().zip(f.values()).map(|(m, v)| m * v).collect())
}

/// Top-down sweep over the standard grid: `acc(Q) = combine(acc(parent), value(Q))`.
fn sweep(
    pyr: &Pyramid<f64>,
    root: &Root,
    mut value: impl FnMut(u32, f64, f64) -> f64,
    combine: impl Fn(f64, f64) -> f64,
) -> Vec<Vec<f64>> {
    let lattice = *pyr.lattice();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(lattice.level() as usize + 1);
    out.push(vec![value(0, *pyr.total(), root.cube_volume(&lattice, 0))]);
    for level in 1..=lattice.level() {
        let ix = lattice.indexer(level);
        let vol = root.cube_volume(&lattice, level);
        let prev = &out[level as usize - 1];
        let cur: Vec<f64> = pyr
            .level(level)
            .iter()
            .enumerate()
            .map(|(i, &m)| combine(prev[ix.ancestor(i, 1)], value(level, m, vol)))
            .collect();
        out.push(cur);
    }
    out
}

/// `M_D(σf)(x) = max_{Q ∋ x} σf(Q) / |Q|` over the cubes of one grid.
///
/// Cubes of a shifted grid that stick out of the root keep their full volume;
/// the part outside carries no mass.
pub fn dyadic_maximal(sigma: &WeightField, f: &CellFunction, grid: &GridDescriptor) -> Result<CellFunction> {
    let masses = weighted_masses(sigma, f)?;
    let lattice = *sigma.lattice();
    if grid.dim != lattice.dim() {
        return Err(Error::Mismatch("grid and lattice dimensions differ".into()));
    }
    if grid.is_standard() {
        let pyr = Pyramid::from_cells(lattice, masses);
        let mut levels = sweep(&pyr, sigma.root(), |_, m, v| m / v, f64::max);
        return CellFunction::new(lattice, levels.pop().expect("cell level"));
    }
    let mut best = vec![0.0f64; lattice.cell_count()];
    for_each_grid_level(&lattice, grid, &masses, |level, cube_of, cube_mass| {
        let vol = sigma.root().cube_volume(&lattice, level);
        for (b, &k) in best.iter_mut().zip(cube_of) {
            *b = b.max(cube_mass[k] / vol);
        }
    });
    CellFunction::new(lattice, best)
}

/// Visit each level of a shifted grid with the cube index of every cell and the cube masses.
fn for_each_grid_level(
    lattice: &Lattice,
    grid: &GridDescriptor,
    masses: &[f64],
    mut visit: impl FnMut(u32, &[usize], &[f64]),
) {
    let d = lattice.dim();
    let n = lattice.side() as i64;
    let cells = lattice.cells();
    let mut cube_of = vec![0usize; lattice.cell_count()];
    for level in 0..=lattice.level() {
        let up = lattice.level() - level;
        let mut qmin = [0i64; MAX_DIM];
        let mut count = [1usize; MAX_DIM];
        for a in 0..d {
            let s = grid.shift[a] as i64;
            qmin[a] = (-s) >> up;
            count[a] = (((n - 1 - s) >> up) - qmin[a] + 1) as usize;
        }
        let total: usize = count[..d].iter().product();
        let mut cube_mass = vec![0.0; total];
        for (i, slot) in cube_of.iter_mut().enumerate() {
            let c = cells.coords(i);
            let mut k = 0usize;
            for a in 0..d {
                let q = ((c[a] as i64 - grid.shift[a] as i64) >> up) - qmin[a];
                k = k * count[a] + q as usize;
            }
            *slot = k;
            cube_mass[k] += masses[i];
        }
        visit(level, &cube_of, &cube_mass);
    }
}

/// Largest `n^{2d+1}` the full maximal function accepts.
pub const FULL_MAXIMAL_GUARD: f64 = 1e9;

/// `M(σf)(x) = max` of `⟨σf⟩_Q` over every lattice-aligned cube `Q ∋ x`.
pub fn full_maximal(sigma: &WeightField, f: &CellFunction) -> Result<CellFunction> {
    let lattice = *sigma.lattice();
    let n = lattice.side();
    let d = lattice.dim();
    let cost = (n as f64).powi(2 * d as i32 + 1);
    if cost > FULL_MAXIMAL_GUARD {
        return Err(Error::SizeGuard {
            what: "full maximal function",
            detail: format!("n^(2d+1) = {cost:.3e} > {FULL_MAXIMAL_GUARD:.0e}"),
        });
    }
    let masses = weighted_masses(sigma, f)?;
    let prefix = PrefixSums::new(&lattice, &masses);
    let cells = lattice.cells();
    let h = sigma.root().cell_width(&lattice);
    let mut best = vec![0.0f64; lattice.cell_count()];
    for side in 1..=n {
        let vol = (side as f64 * h).powi(d as i32);
        let per_axis = n - side + 1;
        // window averages indexed by lower corner, laid out on the n^d lattice
        let mut win = vec![f64::NEG_INFINITY; lattice.cell_count()];
        for (i, slot) in win.iter_mut().enumerate() {
            let c = cells.coords(i);
            if c[..d].iter().all(|&x| x < per_axis) {
                let mut b = CellBox { dim: d, lo: [0; MAX_DIM], hi: [0; MAX_DIM] };
                for a in 0..d {
                    b.lo[a] = c[a] as i64;
                    b.hi[a] = (c[a] + side) as i64;
                }
                *slot = prefix.query(&b).max(0.0) / vol;
            }
        }
        // separable max filter: cell x sees corners in [x - side + 1, x] per axis
        for a in 0..d {
            let stride = n.pow((d - 1 - a) as u32);
            let mut next = vec![f64::NEG_INFINITY; win.len()];
            for (i, slot) in next.iter_mut().enumerate() {
                let x = (i / stride) % n;
                let lo = x.saturating_sub(side - 1);
                let mut m = f64::NEG_INFINITY;
                for y in lo..=x {
                    m = m.max(win[i - (x - y) * stride]);
                }
                *slot = m;
            }
            win = next;
        }
        for (b, w) in best.iter_mut().zip(&win) {
            *b = b.max(*w);
        }
    }
    CellFunction::new(lattice, best)
}

/// Pointwise maximum of the dyadic maximal functions over the shifted grids.
pub fn shifted_maximal(sigma: &WeightField, f: &CellFunction) -> Result<CellFunction> {
    let lattice = sigma.lattice();
    let mut best = vec![0.0f64; lattice.cell_count()];
    for g in shifted_grids(lattice.dim(), lattice.side())? {
        let m = dyadic_maximal(sigma, f, &g)?;
        for (b, v) in best.iter_mut().zip(m.values()) {
            *b = b.max(*v);
        }
    }
    CellFunction::new(*lattice, best)
}

/// `P_D(σf)` on cells × height slabs: at slab `j` the sum of `⟨σf⟩_Q` over the
/// cubes `Q ∋ x` of level at most `j`.
pub fn dyadic_poisson(sigma: &WeightField, f: &CellFunction) -> Result<HalfSpaceFunction> {
    let masses = weighted_masses(sigma, f)?;
    let lattice = *sigma.lattice();
    let pyr = Pyramid::from_cells(lattice, masses);
    let cum = sweep(&pyr, sigma.root(), |_, m, v| m / v, |a, b| a + b);
    let top = lattice.level();
    let slabs = top as usize + 1;
    let ix = lattice.cells();
    let mut values = vec![0.0; lattice.cell_count() * slabs];
    for c in 0..lattice.cell_count() {
        for j in 0..=top {
            values[c * slabs + j as usize] = cum[j as usize][ix.ancestor(c, top - j)];
        }
    }
    HalfSpaceFunction::new(lattice, values)
}

/// Box masses `w(Q̃)` of every standard-grid cube, for the Poisson adjoint.
#[derive(Clone, Debug)]
pub struct PoissonAdjoint {
    lattice: Lattice,
    root: Root,
    boxes: Vec<Vec<f64>>,
}

impl PoissonAdjoint {
    pub fn new(w: &HalfSpaceField) -> Self {
        let lattice = *w.lattice();
        let boxes = (0..=lattice.level())
            .map(|level| lattice.cubes_at_level(level).map(|q| w.box_measure(&q)).collect())
            .collect();
        PoissonAdjoint { lattice, root: *w.root(), boxes }
    }

    pub fn box_mass(&self, q: &DyadicCube) -> f64 {
        self.boxes[q.level() as usize][q.index()]
    }

    /// `P_D^*(w 1_{Q̃})(x) = Σ_{Q' ∋ x} w(Q̃' ∩ Q̃) / |Q'|`.
    pub fn apply(&self, q: &DyadicCube) -> Result<CellFunction> {
        if !self.lattice.holds(q) {
            return Err(Error::param("Poisson adjoint needs a standard-grid cube inside the root"));
        }
        let top = self.lattice.level();
        let lq = q.level();
        let w_q = self.box_mass(q);
        let cells = self.lattice.cells();
        let inv_vol: Vec<f64> = (0..=top).map(|l| 1.0 / self.root.cube_volume(&self.lattice, l)).collect();
        let qc = q.coords();
        let values = (0..self.lattice.cell_count())
            .map(|c| {
                let x = cells.coords(c);
                let mut v = 0.0;
                let mut inside = true;
                for lev in 0..lq {
                    let same = (0..self.lattice.dim())
                        .all(|a| (x[a] >> (top - lev)) as i64 == qc[a] >> (lq - lev));
                    if !same {
                        inside = false;
                        break;
                    }
                    v += w_q * inv_vol[lev as usize];
                }
                if inside && q.cells(top).contains_cell(&x) {
                    for lev in lq..=top {
                        v += self.boxes[lev as usize][cells.ancestor(c, top - lev)] * inv_vol[lev as usize];
                    }
                }
                v
            })
            .collect();
        CellFunction::new(self.lattice, values)
    }
}

/// The adjoint of `P_D` (with respect to Lebesgue measure) applied to `w 1_{Q̃}`.
pub fn dyadic_poisson_dual(w: &HalfSpaceField, q: &DyadicCube) -> Result<CellFunction> {
    PoissonAdjoint::new(w).apply(q)
}

/// A point `(x, t)` of the upper half-space.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpacePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

/// `P f(x,t) = ∫ t (t² + |x - y|²)^{-(d+1)/2} f(y) dy` for `f` constant on cells.
///
/// In one dimension each cell is integrated exactly through the arctangent;
/// in higher dimension by the midpoint rule, each cell subdivided to a
/// resolution of about a sixth of its distance to `(x, t)`.
pub fn continuous_poisson(f: &CellFunction, root: &Root, samples: &[HalfSpacePoint]) -> Result<Vec<f64>> {
    let lattice = *f.lattice();
    let d = lattice.dim();
    let h = root.cell_width(&lattice);
    let cells = lattice.cells();
    samples
        .iter()
        .map(|s| {
            if !(s.t > 0.0) {
                return Err(Error::param(format!("Poisson height t = {} must be positive", s.t)));
            }
            if s.x.len() != d {
                return Err(Error::Mismatch("sample point of the wrong dimension".into()));
            }
            let t = s.t;
            let mut total = 0.0;
            for (i, &v) in f.values().iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let c = cells.coords(i);
                if d == 1 {
                    let a = root.lower + c[0] as f64 * h - s.x[0];
                    let b = a + h;
                    total += v * ((b / t).atan() - (a / t).atan());
                    continue;
                }
                // distance from x to the cell, which sets the subdivision
                let gap = (0..d)
                    .map(|a| {
                        let lo = root.lower + c[a] as f64 * h;
                        (lo - s.x[a]).max(s.x[a] - lo - h).max(0.0).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt();
                let r = ((6.0 * h / gap.max(t)).ceil() as usize).clamp(1, 24);
                let sub = h / r as f64;
                let mut acc = 0.0;
                for k in 0..r.pow(d as u32) {
                    let mut rest = k;
                    let mut d2 = 0.0;
                    for a in 0..d {
                        let y = root.lower + c[a] as f64 * h + ((rest % r) as f64 + 0.5) * sub;
                        rest /= r;
                        d2 += (y - s.x[a]).powi(2);
                    }
                    acc += t / (t * t + d2).powf((d as f64 + 1.0) / 2.0);
                }
                total += v * acc * sub.powi(d as i32);
            }
            Ok(total)
        })
        .collect()
}

/// `T_{α,D}(σf)(x) = Σ_{Q ∋ x} |Q|^{1-α} ⟨σf⟩_Q = Σ_{Q ∋ x} σf(Q) |Q|^{-α}`.
pub fn dyadic_fractional(sigma: &WeightField, f: &CellFunction, alpha: f64) -> Result<CellFunction> {
    check_alpha(alpha)?;
    let masses = weighted_masses(sigma, f)?;
    let lattice = *sigma.lattice();
    let pyr = Pyramid::from_cells(lattice, masses);
    let mut levels = sweep(&pyr, sigma.root(), |_, m, v| m * v.powf(-alpha), |a, b| a + b);
    CellFunction::new(lattice, levels.pop().expect("cell level"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{random_field, FieldModel};

    fn lat(d: usize, l: u32) -> Lattice {
        Lattice::new(d, l).unwrap()
    }

    fn atom0(l: Lattice) -> WeightField {
        let mut m = vec![0.0; l.cell_count()];
        m[0] = 1.0;
        WeightField::new(l, Root::unit(), m).unwrap()
    }

    #[test]
    fn maximal_of_uniform_is_one() {
        let l = lat(2, 3);
        let sigma = WeightField::uniform(l, Root::unit(), 1.0).unwrap();
        let one = CellFunction::constant(l, 1.0).unwrap();
        for out in [
            dyadic_maximal(&sigma, &one, &GridDescriptor::standard(2)).unwrap(),
            full_maximal(&sigma, &one).unwrap(),
            shifted_maximal(&sigma, &one).unwrap(),
        ] {
            assert!(out.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn atom_ladder() {
        let l = lat(1, 3);
        let sigma = atom0(l);
        let one = CellFunction::constant(l, 1.0).unwrap();
        let m = dyadic_maximal(&sigma, &one, &GridDescriptor::standard(1)).unwrap();
        assert_eq!(m.values(), &[8.0, 4.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
        let full = full_maximal(&sigma, &one).unwrap();
        assert_eq!(full.values()[7], 1.0);
        assert!(full.values().iter().zip(m.values()).all(|(a, b)| a >= b));
    }

    #[test]
    fn homogeneity() {
        let l = lat(1, 5);
        let sigma = random_field(l, Root::unit(), &FieldModel::LogNormal { mu: 0.0, s: 1.0 }, 1).unwrap();
        let f = CellFunction::new(l, random_field(l, Root::unit(), &FieldModel::LogNormal { mu: 0.0, s: 1.0 }, 2).unwrap().masses().to_vec()).unwrap();
        let g = f.scaled(3.5).unwrap();
        let a = dyadic_maximal(&sigma, &f, &GridDescriptor::standard(1)).unwrap();
        let b = dyadic_maximal(&sigma, &g, &GridDescriptor::standard(1)).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((3.5 * x - y).abs() <= 1e-12 * y);
        }
    }

    #[test]
    fn shifted_equals_dyadic_on_tiny_lattice() {
        let l = lat(1, 1);
        let sigma = random_field(l, Root::unit(), &FieldModel::LogNormal { mu: 0.0, s: 1.0 }, 4).unwrap();
        let one = CellFunction::constant(l, 1.0).unwrap();
        let a = shifted_maximal(&sigma, &one).unwrap();
        let b = dyadic_maximal(&sigma, &one, &GridDescriptor::standard(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shifted_grids_capture_full_maximal_within_eight() {
        let l = lat(1, 6);
        let one = CellFunction::constant(l, 1.0).unwrap();
        for seed in 0..10 {
            let sigma = random_field(l, Root::unit(), &FieldModel::SparseAtoms { count: 3, amplitude: 1.0 }, seed).unwrap();
            let full = full_maximal(&sigma, &one).unwrap();
            let shifted = shifted_maximal(&sigma, &one).unwrap();
            let plain = dyadic_maximal(&sigma, &one, &GridDescriptor::standard(1)).unwrap();
            for i in 0..64 {
                assert!(shifted.values()[i] >= plain.values()[i]);
                assert!(full.values()[i] <= 8.0 * shifted.values()[i] + 1e-12);
            }
        }
    }

    #[test]
    fn full_maximal_size_guard() {
        let l = lat(2, 7);
        let sigma = WeightField::uniform(l, Root::unit(), 1.0).unwrap();
        let one = CellFunction::constant(l, 1.0).unwrap();
        assert!(matches!(full_maximal(&sigma, &one), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn poisson_counts_ancestors() {
        let l = lat(1, 3);
        let sigma = WeightField::uniform(l, Root::unit(), 1.0).unwrap();
        let one = CellFunction::constant(l, 1.0).unwrap();
        let p = dyadic_poisson(&sigma, &one).unwrap();
        for c in 0..8 {
            for j in 0..=3 {
                assert!((p.get(c, j) - (j + 1) as f64).abs() < 1e-12);
            }
        }
        let zero = CellFunction::constant(l, 0.0).unwrap();
        assert!(dyadic_poisson(&sigma, &zero).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn poisson_is_additive() {
        let l = lat(2, 3);
        let model = FieldModel::LogNormal { mu: 0.0, s: 1.0 };
        let sigma = random_field(l, Root::unit(), &model, 1).unwrap();
        let f = CellFunction::new(l, random_field(l, Root::unit(), &model, 2).unwrap().masses().to_vec()).unwrap();
        let g = CellFunction::new(l, random_field(l, Root::unit(), &model, 3).unwrap().masses().to_vec()).unwrap();
        let fg = CellFunction::new(l, f.values().iter().zip(g.values()).map(|(a, b)| a + b).collect()).unwrap();
        let (a, b, c) = (
            dyadic_poisson(&sigma, &f).unwrap(),
            dyadic_poisson(&sigma, &g).unwrap(),
            dyadic_poisson(&sigma, &fg).unwrap(),
        );
        for i in 0..c.values().len() {
            assert!((a.values()[i] + b.values()[i] - c.values()[i]).abs() <= 1e-12 * c.values()[i]);
        }
    }

    #[test]
    fn poisson_adjoint_zero_cases() {
        let l = lat(1, 3);
        let w = HalfSpaceField::new(l, Root::unit(), vec![0.0; 8 * 4]).unwrap();
        let q = DyadicCube::new(1, 1, &[0]);
        assert!(dyadic_poisson_dual(&w, &q).unwrap().values().iter().all(|&v| v == 0.0));

        // unit mass at (cell 0, slab 3); the query cube Q = [1/2, 1) never meets it
        let mut m = vec![0.0; 8 * 4];
        m[3] = 1.0;
        let w = HalfSpaceField::new(l, Root::unit(), m).unwrap();
        let q = DyadicCube::new(1, 1, &[1]);
        let out = dyadic_poisson_dual(&w, &q).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn continuous_poisson_interval() {
        let l = lat(1, 6);
        let one = CellFunction::constant(l, 1.0).unwrap();
        for t in [0.125, 0.25, 0.5, 1.0, 2.0] {
            let v = continuous_poisson(&one, &Root::centered(), &[HalfSpacePoint { x: vec![0.0], t }]).unwrap();
            assert!((v[0] - 2.0 * (1.0 / t).atan()).abs() < 1e-3);
        }
        let zero = CellFunction::constant(l, 0.0).unwrap();
        let v = continuous_poisson(&zero, &Root::centered(), &[HalfSpacePoint { x: vec![0.3], t: 0.1 }]).unwrap();
        assert_eq!(v[0], 0.0);
        assert!(continuous_poisson(&one, &Root::centered(), &[HalfSpacePoint { x: vec![0.0], t: 0.0 }]).is_err());
    }

    #[test]
    fn continuous_poisson_2d_constant() {
        // P 1 over R^2 is 2π; on a large square around x it is close to it.
        let l = lat(2, 5);
        let one = CellFunction::constant(l, 1.0).unwrap();
        let root = Root { lower: -8.0, side: 16.0 };
        let v = continuous_poisson(&one, &root, &[HalfSpacePoint { x: vec![0.1, -0.2], t: 0.3 }]).unwrap();
        // the mass outside the disc of radius R is 2π t / R; the square sits between R = 8 and 8√2
        let tau = 2.0 * std::f64::consts::PI;
        let (lo, hi) = (tau - tau * 0.3 / 7.8, tau - tau * 0.3 / (8.2 * 2f64.sqrt()));
        assert!(v[0] > lo && v[0] < hi, "{}", v[0]);
    }

    #[test]
    fn fractional_geometric_sum() {
        let l = lat(1, 3);
        let sigma = WeightField::uniform(l, Root::unit(), 1.0).unwrap();
        let one = CellFunction::constant(l, 1.0).unwrap();
        let out = dyadic_fractional(&sigma, &one, 0.5).unwrap();
        let expect = 1.0 + 0.5f64.sqrt() + 0.5 + 0.125f64.sqrt();
        assert!(out.values().iter().all(|v| (v - expect).abs() < 1e-12));
        assert!((expect - 2.5607).abs() < 1e-4);
        assert!(dyadic_fractional(&sigma, &one, 1.0).is_err());
        // cubes of the unit root have volume at most one, so the sum grows with α
        let a = dyadic_fractional(&sigma, &one, 0.3).unwrap();
        let b = dyadic_fractional(&sigma, &one, 0.9).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x < y));
    }
}
