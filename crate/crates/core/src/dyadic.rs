//! Dyadic cubes, grids and Carleson boxes on a uniform lattice.
//!
//! All geometry is integer-exact in units of lattice cells. A lattice of level
//! `L` has `n = 2^L` cells per side; a dyadic cube of level `k` has side
//! `2^(L-k)` cells, so level 0 is the root cube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

/// Dimension and resolution of the cell lattice over the root cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    dim: usize,
    level: u32,
}

impl Lattice {
    pub fn new(dim: usize, level: u32) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::param(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        if dim as u32 * level > 30 {
            return Err(Error::SizeGuard {
                what: "lattice",
                detail: format!("2^({dim}*{level}) cells"),
            });
        }
        Ok(Lattice { dim, level })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cells per side, `n = 2^L`.
    pub fn side(&self) -> usize {
        1 << self.level
    }

    pub fn cell_count(&self) -> usize {
        1 << (self.dim as u32 * self.level)
    }

    /// Number of standard-grid cubes at `level`.
    pub fn cubes_at(&self, level: u32) -> usize {
        1 << (self.dim as u32 * level)
    }

    pub fn indexer(&self, level: u32) -> LevelIndexer {
        LevelIndexer { dim: self.dim, bits: level }
    }

    pub fn cells(&self) -> LevelIndexer {
        self.indexer(self.level)
    }

    pub fn root(&self) -> DyadicCube {
        DyadicCube::new(self.dim, 0, &[0; MAX_DIM][..self.dim])
    }

    /// The `2^d` children of `q`, in child-index order.
    pub fn children(&self, q: &DyadicCube) -> Result<Vec<DyadicCube>> {
        if q.level >= self.level {
            return Err(Error::BelowResolution { level: q.level, max_level: self.level });
        }
        Ok((0..1usize << self.dim).map(|j| q.child(j)).collect())
    }

    /// Standard-grid cubes at one level, in row-major order.
    pub fn cubes_at_level(&self, level: u32) -> impl Iterator<Item = DyadicCube> + '_ {
        let ix = self.indexer(level);
        (0..self.cubes_at(level)).map(move |i| ix.cube(i))
    }

    /// Every standard-grid cube from the root down to the cells.
    pub fn dyadic_cubes(&self) -> impl Iterator<Item = DyadicCube> + '_ {
        (0..=self.level).flat_map(move |l| self.cubes_at_level(l))
    }

    /// Whether `q` is a standard-grid cube inside the root at or above cell level.
    pub fn holds(&self, q: &DyadicCube) -> bool {
        q.dim() == self.dim
            && q.grid == 0
            && q.level <= self.level
            && q.coords().iter().all(|&c| c >= 0 && c < (1i64 << q.level))
    }
}

/// Row-major index arithmetic for the `2^(d*level)` cubes of one level.
///
/// The last axis varies fastest.
#[derive(Clone, Copy, Debug)]
pub struct LevelIndexer {
    dim: usize,
    bits: u32,
}

impl LevelIndexer {
    pub fn level(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        1 << (self.dim as u32 * self.bits)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; MAX_DIM] {
        let mask = (1usize << self.bits) - 1;
        let mut c = [0; MAX_DIM];
        for axis in 0..self.dim {
            c[self.dim - 1 - axis] = (idx >> (self.bits as usize * axis)) & mask;
        }
        c
    }

    #[inline]
    pub fn index(&self, coords: &[usize]) -> usize {
        coords[..self.dim].iter().fold(0, |acc, &c| (acc << self.bits) | c)
    }

    /// Index of the ancestor `up` levels higher.
    #[inline]
    pub fn ancestor(&self, idx: usize, up: u32) -> usize {
        if self.dim == 1 {
            return idx >> up;
        }
        let c = self.coords(idx);
        let bits = self.bits - up;
        c[..self.dim].iter().fold(0, |acc, &x| (acc << bits) | (x >> up))
    }

    /// Index (one level finer) of child `j`; bit `d-1-axis` of `j` selects the upper half along `axis`.
    #[inline]
    pub fn child(&self, idx: usize, j: usize) -> usize {
        let c = self.coords(idx);
        let bits = self.bits + 1;
        (0..self.dim).fold(0, |acc, axis| {
            let b = (j >> (self.dim - 1 - axis)) & 1;
            (acc << bits) | (2 * c[axis] + b)
        })
    }

    pub fn cube(&self, idx: usize) -> DyadicCube {
        let c = self.coords(idx);
        let mut coords = [0i64; MAX_DIM];
        for axis in 0..self.dim {
            coords[axis] = c[axis] as i64;
        }
        DyadicCube { grid: 0, level: self.bits, dim: self.dim as u8, coords }
    }
}

/// A cube of a (possibly shifted) dyadic grid: `level` plus integer position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    grid: u16,
    level: u32,
    dim: u8,
    coords: [i64; MAX_DIM],
}

impl DyadicCube {
    /// A cube of the standard (unshifted) grid.
    pub fn new(dim: usize, level: u32, coords: &[i64]) -> Self {
        Self::in_grid(0, dim, level, coords)
    }

    pub fn in_grid(grid: u16, dim: usize, level: u32, coords: &[i64]) -> Self {
        assert!((1..=MAX_DIM).contains(&dim) && coords.len() == dim);
        let mut c = [0i64; MAX_DIM];
        c[..dim].copy_from_slice(coords);
        DyadicCube { grid, level, dim: dim as u8, coords: c }
    }

    pub fn grid(&self) -> u16 {
        self.grid
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim as usize]
    }

    /// Row-major position among the standard-grid cubes of its level.
    pub fn index(&self) -> usize {
        self.coords().iter().fold(0usize, |acc, &c| (acc << self.level) | c as usize)
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| self.ancestor(1))
    }

    /// `Q^{(m)}`, the ancestor `m` generations up.
    pub fn parent_chain(&self, m: u32) -> Result<Self> {
        if m > self.level {
            return Err(Error::AboveRoot { level: self.level, steps: m });
        }
        Ok(self.ancestor(m))
    }

    fn ancestor(&self, m: u32) -> Self {
        let mut out = *self;
        out.level -= m;
        for c in out.coords.iter_mut().take(self.dim as usize) {
            *c >>= m;
        }
        out
    }

    /// Child `j` one level down; no resolution check.
    pub fn child(&self, j: usize) -> Self {
        let d = self.dim as usize;
        let mut out = *self;
        out.level += 1;
        for axis in 0..d {
            out.coords[axis] = 2 * self.coords[axis] + ((j >> (d - 1 - axis)) & 1) as i64;
        }
        out
    }

    /// Nestedness within one grid: `other ⊆ self`.
    pub fn contains(&self, other: &DyadicCube) -> bool {
        self.grid == other.grid
            && self.dim == other.dim
            && other.level >= self.level
            && other.ancestor(other.level - self.level).coords == self.coords
    }

    pub fn side_cells(&self, lattice_level: u32) -> u64 {
        1u64 << (lattice_level - self.level)
    }

    /// Cell range covered by the cube in a grid with the given shift (not clipped).
    pub fn cell_box(&self, lattice_level: u32, shift: &[usize]) -> CellBox {
        let side = self.side_cells(lattice_level) as i64;
        let mut b = CellBox { dim: self.dim as usize, lo: [0; MAX_DIM], hi: [0; MAX_DIM] };
        for axis in 0..self.dim as usize {
            let s = shift.get(axis).copied().unwrap_or(0) as i64;
            b.lo[axis] = s + self.coords[axis] * side;
            b.hi[axis] = b.lo[axis] + side;
        }
        b
    }

    /// Cell range of a standard-grid cube.
    pub fn cells(&self, lattice_level: u32) -> CellBox {
        self.cell_box(lattice_level, &[])
    }
}

/// Half-open box of lattice cells `[lo, hi)` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellBox {
    pub dim: usize,
    pub lo: [i64; MAX_DIM],
    pub hi: [i64; MAX_DIM],
}

impl CellBox {
    pub fn new(lo: &[i64], hi: &[i64]) -> Self {
        let dim = lo.len();
        assert!(dim == hi.len() && (1..=MAX_DIM).contains(&dim));
        let mut b = CellBox { dim, lo: [0; MAX_DIM], hi: [0; MAX_DIM] };
        b.lo[..dim].copy_from_slice(lo);
        b.hi[..dim].copy_from_slice(hi);
        b
    }

    /// Intersection with the root `[0, n)^d`.
    pub fn clip(&self, n: usize) -> CellBox {
        let mut b = *self;
        for axis in 0..self.dim {
            b.lo[axis] = b.lo[axis].clamp(0, n as i64);
            b.hi[axis] = b.hi[axis].clamp(b.lo[axis], n as i64);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim).any(|a| self.hi[a] <= self.lo[a])
    }

    /// Cell count of the box (zero when empty).
    pub fn cell_count(&self) -> u64 {
        (0..self.dim).map(|a| (self.hi[a] - self.lo[a]).max(0) as u64).product()
    }

    pub fn contains(&self, other: &CellBox) -> bool {
        (0..self.dim).all(|a| self.lo[a] <= other.lo[a] && other.hi[a] <= self.hi[a])
    }

    pub fn contains_cell(&self, cell: &[usize]) -> bool {
        (0..self.dim).all(|a| self.lo[a] <= cell[a] as i64 && (cell[a] as i64) < self.hi[a])
    }
}

/// One of the `3^d` translated dyadic grids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub dim: usize,
    /// Base-3 index of the shift pattern.
    pub id: usize,
    /// Offset per axis, in cells.
    pub shift: Vec<usize>,
}

impl GridDescriptor {
    pub fn standard(dim: usize) -> Self {
        GridDescriptor { dim, id: 0, shift: vec![0; dim] }
    }

    pub fn is_standard(&self) -> bool {
        self.shift.iter().all(|&s| s == 0)
    }

    /// The cube of this grid at `level` containing the cell.
    pub fn cube_containing(&self, cell: &[usize], level: u32, lattice_level: u32) -> DyadicCube {
        let up = lattice_level - level;
        let mut coords = [0i64; MAX_DIM];
        for axis in 0..self.dim {
            coords[axis] = (cell[axis] as i64 - self.shift[axis] as i64) >> up;
        }
        DyadicCube::in_grid(self.id as u16, self.dim, level, &coords[..self.dim])
    }

    /// Smallest cube of this grid whose (clipped) cell range contains `target`.
    pub fn smallest_containing(&self, lattice: &Lattice, target: &CellBox) -> Option<DyadicCube> {
        let lo: Vec<usize> = target.lo[..self.dim].iter().map(|&x| x as usize).collect();
        (0..=lattice.level()).rev().find_map(|level| {
            let q = self.cube_containing(&lo, level, lattice.level());
            q.cell_box(lattice.level(), &self.shift).contains(target).then_some(q)
        })
    }
}

/// The shifted grids: per axis, offsets `0`, `⌊n/3⌋`, `⌊2n/3⌋` cells.
///
/// Duplicate shift patterns (tiny lattices) are dropped; `id` keeps the base-3
/// index of the first occurrence and grid 0 is always the standard grid.
pub fn shifted_grids(dim: usize, n_cells: usize) -> Result<Vec<GridDescriptor>> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::param(format!("dimension {dim} not in 1..={MAX_DIM}")));
    }
    if !n_cells.is_power_of_two() {
        return Err(Error::param(format!("cells per side {n_cells} is not a power of two")));
    }
    let offsets = [0, n_cells / 3, 2 * n_cells / 3];
    let mut grids: Vec<GridDescriptor> = Vec::new();
    for id in 0..3usize.pow(dim as u32) {
        let mut rest = id;
        let mut shift = vec![0; dim];
        for axis in (0..dim).rev() {
            shift[axis] = offsets[rest % 3];
            rest /= 3;
        }
        if grids.iter().all(|g| g.shift != shift) {
            grids.push(GridDescriptor { dim, id, shift });
        }
    }
    Ok(grids)
}

/// An axis-parallel cube of `side` cells with lower corner `lo`, inside the root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AlignedCube {
    pub dim: usize,
    pub lo: [usize; MAX_DIM],
    pub side: usize,
}

impl AlignedCube {
    pub fn new(lo: &[usize], side: usize) -> Self {
        let mut c = [0; MAX_DIM];
        c[..lo.len()].copy_from_slice(lo);
        AlignedCube { dim: lo.len(), lo: c, side }
    }

    pub fn origin(&self) -> &[usize] {
        &self.lo[..self.dim]
    }

    pub fn cell_box(&self) -> CellBox {
        let mut b = CellBox { dim: self.dim, lo: [0; MAX_DIM], hi: [0; MAX_DIM] };
        for a in 0..self.dim {
            b.lo[a] = self.lo[a] as i64;
            b.hi[a] = (self.lo[a] + self.side) as i64;
        }
        b
    }
}

/// All lattice-aligned cubes of the given side inside the root: `(n - side + 1)^d` of them.
pub fn aligned_cubes(lattice: &Lattice, side_cells: usize) -> Result<Vec<AlignedCube>> {
    let n = lattice.side();
    if side_cells == 0 || side_cells > n {
        return Err(Error::param(format!("aligned side {side_cells} not in 1..={n}")));
    }
    let per_axis = n - side_cells + 1;
    let d = lattice.dim();
    let total = per_axis.pow(d as u32);
    Ok((0..total)
        .map(|mut i| {
            let mut lo = [0usize; MAX_DIM];
            for axis in (0..d).rev() {
                lo[axis] = i % per_axis;
                i /= per_axis;
            }
            AlignedCube { dim: d, lo, side: side_cells }
        })
        .collect())
}

/// The Carleson box `Q × [0, ℓQ)` over a standard-grid cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CarlesonBox {
    pub base: DyadicCube,
}

impl CarlesonBox {
    pub fn new(base: DyadicCube) -> Self {
        CarlesonBox { base }
    }

    /// Height as a fraction of the root side, `2^-level`.
    pub fn height_fraction(&self) -> f64 {
        (-(self.base.level() as f64)).exp2()
    }

    /// First height slab inside the box; slabs `j >= level` lie under height `ℓQ`.
    pub fn first_slab(&self) -> u32 {
        self.base.level()
    }

    pub fn contains(&self, other: &CarlesonBox) -> bool {
        self.base.contains(&other.base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(d: usize, l: u32) -> Lattice {
        Lattice::new(d, l).unwrap()
    }

    #[test]
    fn children_bisect_unit_interval() {
        let l = lat(1, 3);
        let kids = l.children(&l.root()).unwrap();
        assert_eq!(kids.len(), 2);
        assert_eq!(kids[0].cells(3), CellBox::new(&[0], &[4]));
        assert_eq!(kids[1].cells(3), CellBox::new(&[4], &[8]));
    }

    #[test]
    fn children_of_quarter_interval() {
        // [1/2, 3/4) at level 2 has children [1/2,5/8) and [5/8,3/4).
        let l = lat(1, 3);
        let q = DyadicCube::new(1, 2, &[2]);
        let kids = l.children(&q).unwrap();
        assert!(kids.iter().all(|k| k.level() == 3));
        assert_eq!(kids.iter().map(|k| k.coords()[0]).collect::<Vec<_>>(), vec![4, 5]);
        // endpoints in units of 1/8
        assert_eq!(kids[0].cells(3).lo[0], 4);
        assert_eq!(kids[1].cells(3).hi[0], 6);
    }

    #[test]
    fn quadrants_partition_the_square() {
        let l = lat(2, 2);
        let kids = l.children(&l.root()).unwrap();
        assert_eq!(kids.len(), 4);
        let total: u64 = kids.iter().map(|k| k.cells(2).cell_count()).sum();
        assert_eq!(total, 16);
        for (i, a) in kids.iter().enumerate() {
            for b in &kids[i + 1..] {
                assert!(!a.contains(b) && !b.contains(a));
            }
        }
    }

    #[test]
    fn children_below_resolution() {
        let l = lat(1, 2);
        let cell = DyadicCube::new(1, 2, &[1]);
        assert!(matches!(l.children(&cell), Err(Error::BelowResolution { .. })));
    }

    #[test]
    fn parent_chain_examples() {
        let q = DyadicCube::new(1, 2, &[1]); // [1/4, 1/2)
        assert_eq!(q.parent_chain(1).unwrap(), DyadicCube::new(1, 1, &[0]));
        let q = DyadicCube::new(1, 3, &[3]); // [3/8, 1/2)
        assert_eq!(q.parent_chain(3).unwrap(), DyadicCube::new(1, 0, &[0]));
        assert_eq!(q.parent_chain(0).unwrap(), q);
        assert!(matches!(q.parent_chain(4), Err(Error::AboveRoot { .. })));
    }

    #[test]
    fn shifted_grid_offsets() {
        let g = shifted_grids(1, 8).unwrap();
        assert_eq!(g.iter().map(|g| g.shift[0]).collect::<Vec<_>>(), vec![0, 2, 5]);
        let g = shifted_grids(2, 8).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g[0].is_standard());
        for a in [0, 2, 5] {
            for b in [0, 2, 5] {
                assert!(g.iter().any(|x| x.shift == vec![a, b]));
            }
        }
        let g = shifted_grids(1, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert!(shifted_grids(1, 6).is_err());
    }

    #[test]
    fn aligned_counts() {
        assert_eq!(aligned_cubes(&lat(1, 3), 8).unwrap().len(), 1);
        assert_eq!(aligned_cubes(&lat(1, 3), 3).unwrap().len(), 6);
        assert_eq!(aligned_cubes(&lat(2, 2), 2).unwrap().len(), 9);
        assert!(aligned_cubes(&lat(1, 3), 9).is_err());
    }

    #[test]
    fn indexer_roundtrip_and_children() {
        let l = lat(2, 3);
        let ix = l.indexer(2);
        for i in 0..ix.len() {
            let c = ix.coords(i);
            assert_eq!(ix.index(&c), i);
            let q = ix.cube(i);
            assert_eq!(q.index(), i);
            for j in 0..4 {
                let child = l.indexer(3).cube(ix.child(i, j));
                assert_eq!(child, q.child(j));
                assert_eq!(l.indexer(3).ancestor(child.index(), 1), i);
            }
        }
    }

    #[test]
    fn levels_tile_the_root() {
        for d in 1..=2 {
            let l = lat(d, 4);
            for level in 0..=4 {
                let total: u64 = l.cubes_at_level(level).map(|q| q.cells(4).cell_count()).sum();
                assert_eq!(total, l.cell_count() as u64);
            }
        }
    }

    #[test]
    fn shifted_grid_levels_tile_the_root() {
        let l = lat(2, 4);
        let n = l.side();
        for g in shifted_grids(2, n).unwrap() {
            for level in 0..=4 {
                let mut seen = std::collections::HashSet::new();
                for idx in 0..l.cell_count() {
                    let c = l.cells().coords(idx);
                    seen.insert(g.cube_containing(&c, level, 4));
                }
                let total: u64 = seen
                    .iter()
                    .map(|q| q.cell_box(4, &g.shift).clip(n).cell_count())
                    .sum();
                assert_eq!(total, l.cell_count() as u64);
            }
        }
    }

    #[test]
    fn carleson_box_containment_matches_cubes() {
        let l = lat(1, 3);
        let cubes: Vec<_> = l.dyadic_cubes().collect();
        for a in &cubes {
            for b in &cubes {
                assert_eq!(CarlesonBox::new(*a).contains(&CarlesonBox::new(*b)), a.contains(b));
            }
        }
    }
}
