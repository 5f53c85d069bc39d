//! Mass arithmetic shared by the double-precision and exact-rational engines.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::dyadic::{CellBox, Lattice};
use crate::error::{Error, Result};

/// A Lebesgue exponent `p > 1`, with its exact fraction when it has a small one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponent {
    pub value: f64,
    /// `p = num / den` in lowest terms.
    pub ratio: Option<(u32, u32)>,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::param(format!("exponent p = {p} must satisfy p > 1")));
        }
        let ratio = (1u32..=64).find_map(|den| {
            let num = p * den as f64;
            (num == num.round() && num < u32::MAX as f64 && (num as u32) as f64 / den as f64 == p)
                .then(|| {
                    let num = num as u32;
                    let g = num_integer::gcd(num, den);
                    (num / g, den / g)
                })
        });
        Ok(Exponent { value: p, ratio })
    }

    /// Dual exponent `p' = p / (p - 1)`.
    pub fn dual(&self) -> f64 {
        self.value / (self.value - 1.0)
    }

    pub(crate) fn rational(&self) -> Result<(u32, u32)> {
        self.ratio.ok_or_else(|| {
            Error::param(format!("exact mode needs a rational exponent, got p = {}", self.value))
        })
    }
}

/// A doubling threshold `D`, kept exact when it is a rational power of two.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    /// `D = 2^(num/den)`, `den > 0`.
    Pow2 { num: i64, den: i64 },
    Value(f64),
}

impl Threshold {
    pub fn value(&self) -> f64 {
        match *self {
            Threshold::Pow2 { num, den } => (num as f64 / den as f64).exp2(),
            Threshold::Value(v) => v,
        }
    }
}

/// Scalar types that can carry lattice masses through the decomposition engine.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + for<'a> AddAssign<&'a Self>
    + Send
    + Sync
{
    const EXACT: bool;

    /// Exact conversion (every finite double is a dyadic rational).
    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// Exact decimal rendering, for the exact engine only.
    fn exact_string(&self) -> Option<String>;

    /// A monotone surrogate of the local `A_p` product `⟨σ⟩^{p-1} ⟨w⟩`.
    fn local_product(sigma_avg: &Self, w_avg: &Self, p: &Exponent) -> Self;

    /// The double value of `⟨σ⟩^{p-1}⟨w⟩` recovered from [`Scalar::local_product`].
    fn local_to_f64(local: &Self, p: &Exponent) -> f64;

    /// Small-`A_p` test `local · depth^p ≤ max_local` in surrogate form.
    fn small_holds(local: &Self, depth: u32, max_local: &Self, p: &Exponent) -> bool;

    /// Doubling test `parent ≤ D · child`.
    fn doubling_holds(parent: &Self, child: &Self, threshold: &Threshold) -> bool;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn exact_string(&self) -> Option<String> {
        None
    }

    fn local_product(sigma_avg: &f64, w_avg: &f64, p: &Exponent) -> f64 {
        if *sigma_avg == 0.0 || *w_avg == 0.0 {
            return 0.0;
        }
        sigma_avg.powf(p.value - 1.0) * w_avg
    }

    fn local_to_f64(local: &f64, _p: &Exponent) -> f64 {
        *local
    }

    fn small_holds(local: &f64, depth: u32, max_local: &f64, p: &Exponent) -> bool {
        *local * (depth as f64).powf(p.value) <= *max_local
    }

    fn doubling_holds(parent: &f64, child: &f64, threshold: &Threshold) -> bool {
        *parent <= threshold.value() * *child
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite mass")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn exact_string(&self) -> Option<String> {
        Some(exact_decimal(self))
    }

    /// `⟨σ⟩^{a-b} ⟨w⟩^b` for `p = a/b`, the `b`-th power of the local product.
    fn local_product(sigma_avg: &Self, w_avg: &Self, p: &Exponent) -> Self {
        let (a, b) = p.rational().expect("rational exponent checked up front");
        num_traits::pow(sigma_avg.clone(), (a - b) as usize) * num_traits::pow(w_avg.clone(), b as usize)
    }

    fn local_to_f64(local: &Self, p: &Exponent) -> f64 {
        let (_, b) = p.rational().expect("rational exponent checked up front");
        Scalar::to_f64(local).powf(1.0 / b as f64)
    }

    fn small_holds(local: &Self, depth: u32, max_local: &Self, p: &Exponent) -> bool {
        let (a, _) = p.rational().expect("rational exponent checked up front");
        let m = BigRational::from_integer(BigInt::from(depth));
        local.clone() * num_traits::pow(m, a as usize) <= *max_local
    }

    fn doubling_holds(parent: &Self, child: &Self, threshold: &Threshold) -> bool {
        match *threshold {
            Threshold::Value(v) => *parent <= Self::from_f64(v) * child.clone(),
            Threshold::Pow2 { num, den } => {
                let two_pow = |e: i64| {
                    let p = BigRational::from_integer(BigInt::one() << e.unsigned_abs() as usize);
                    if e >= 0 {
                        p
                    } else {
                        p.recip()
                    }
                };
                if den == 1 {
                    return *parent <= two_pow(num) * child.clone();
                }
                if child.is_negative() || parent.is_negative() {
                    return false;
                }
                let lhs = num_traits::pow(parent.clone(), den as usize);
                let rhs = num_traits::pow(child.clone(), den as usize) * two_pow(num);
                lhs <= rhs
            }
        }
    }
}

/// Exact decimal expansion of a rational whose denominator is a power of two.
pub fn exact_decimal(r: &BigRational) -> String {
    let den = r.denom();
    let twos = den.trailing_zeros().unwrap_or(0);
    if (den >> twos as usize) != BigInt::one() {
        return format!("{}/{}", r.numer(), den);
    }
    let neg = r.is_negative();
    let scaled = r.numer().abs() * num_traits::pow(BigInt::from(5), twos as usize);
    let mut digits = scaled.to_string();
    let frac = twos as usize;
    if frac == 0 {
        return format!("{}{}", if neg { "-" } else { "" }, digits);
    }
    if digits.len() <= frac {
        digits = "0".repeat(frac - digits.len() + 1) + &digits;
    }
    let (int, dec) = digits.split_at(digits.len() - frac);
    let dec = dec.trim_end_matches('0');
    let sign = if neg { "-" } else { "" };
    if dec.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{dec}")
    }
}

/// Masses of every standard-grid cube, aggregated bottom-up from the cells.
#[derive(Clone, Debug)]
pub struct Pyramid<T> {
    lattice: Lattice,
    levels: Vec<Vec<T>>,
}

impl<T: Scalar> Pyramid<T> {
    pub fn from_cells(lattice: Lattice, cells: Vec<T>) -> Self {
        assert_eq!(cells.len(), lattice.cell_count());
        let mut levels = vec![cells];
        for level in (0..lattice.level()).rev() {
            let finer = levels.last().expect("nonempty");
            let ix = lattice.indexer(level + 1);
            let mut coarse = vec![T::zero(); lattice.cubes_at(level)];
            for (i, m) in finer.iter().enumerate() {
                coarse[ix.ancestor(i, 1)] += m;
            }
            levels.push(coarse);
        }
        levels.reverse();
        Pyramid { lattice, levels }
    }

    /// Wrap per-level cube values that were aggregated elsewhere.
    pub fn from_levels(lattice: Lattice, levels: Vec<Vec<T>>) -> Self {
        assert_eq!(levels.len(), lattice.level() as usize + 1);
        Pyramid { lattice, levels }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn level(&self, level: u32) -> &[T] {
        &self.levels[level as usize]
    }

    pub fn get(&self, level: u32, idx: usize) -> &T {
        &self.levels[level as usize][idx]
    }

    pub fn total(&self) -> &T {
        &self.levels[0][0]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Pyramid<U> {
        Pyramid {
            lattice: self.lattice,
            levels: self.levels.iter().map(|l| l.iter().map(&f).collect()).collect(),
        }
    }
}

/// Inclusive cumulative sums over the cell lattice for `O(2^d)` box queries.
#[derive(Clone, Debug)]
pub struct PrefixSums<T> {
    dim: usize,
    n: usize,
    sums: Vec<T>,
}

impl<T: Scalar> PrefixSums<T> {
    pub fn new(lattice: &Lattice, cells: &[T]) -> Self {
        let dim = lattice.dim();
        let n = lattice.side();
        let m = n + 1;
        let mut sums = vec![T::zero(); m.pow(dim as u32)];
        let cix = lattice.cells();
        for (i, v) in cells.iter().enumerate() {
            let c = cix.coords(i);
            let j = (0..dim).fold(0, |acc, a| acc * m + c[a] + 1);
            sums[j] = v.clone();
        }
        let stride = |axis: usize| m.pow((dim - 1 - axis) as u32);
        for axis in 0..dim {
            let s = stride(axis);
            for j in 0..sums.len() {
                if (j / s) % m >= 1 {
                    let prev = sums[j - s].clone();
                    sums[j] += &prev;
                }
            }
        }
        PrefixSums { dim, n, sums }
    }

    /// Sum over the box after clipping to the root.
    pub fn scaled(&self, c: &T) -> Self {
        PrefixSums { dim: self.dim, n: self.n, sums: self.sums.iter().map(|s| s.clone() * c.clone()).collect() }
    }

    pub fn query(&self, b: &CellBox) -> T {
        let b = b.clip(self.n);
        if b.is_empty() {
            return T::zero();
        }
        if self.dim == 1 {
            return self.sums[b.hi[0] as usize].clone() - self.sums[b.lo[0] as usize].clone();
        }
        let m = self.n + 1;
        let mut plus = T::zero();
        let mut minus = T::zero();
        for corner in 0..1usize << self.dim {
            let mut j = 0;
            let mut lows = 0;
            for axis in 0..self.dim {
                let use_lo = (corner >> axis) & 1 == 1;
                let x = if use_lo { b.lo[axis] } else { b.hi[axis] } as usize;
                lows += use_lo as usize;
                j = j * m + x;
            }
            if lows % 2 == 0 {
                plus += &self.sums[j];
            } else {
                minus += &self.sums[j];
            }
        }
        plus - minus
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_detects_fractions() {
        assert_eq!(Exponent::new(1.5).unwrap().ratio, Some((3, 2)));
        assert_eq!(Exponent::new(2.0).unwrap().ratio, Some((2, 1)));
        assert_eq!(Exponent::new(3.0).unwrap().ratio, Some((3, 1)));
        assert_eq!(Exponent::new(std::f64::consts::PI).unwrap().ratio, None);
        assert!(Exponent::new(1.0).is_err());
    }

    #[test]
    fn decimal_expansion_is_exact() {
        let r = BigRational::from_float(0.375).unwrap();
        assert_eq!(exact_decimal(&r), "0.375");
        let r = BigRational::from_float(12.0).unwrap();
        assert_eq!(exact_decimal(&r), "12");
        let r = BigRational::from_float(-2.5).unwrap();
        assert_eq!(exact_decimal(&r), "-2.5");
        let third = BigRational::new(1.into(), 3.into());
        assert_eq!(exact_decimal(&third), "1/3");
    }

    #[test]
    fn fractional_power_threshold() {
        // D = 2^(5/3) ≈ 3.1748
        let t = Threshold::Pow2 { num: 5, den: 3 };
        let q = |x: f64| BigRational::from_float(x).unwrap();
        assert!(BigRational::doubling_holds(&q(3.17), &q(1.0), &t));
        assert!(!BigRational::doubling_holds(&q(3.18), &q(1.0), &t));
        assert!(f64::doubling_holds(&3.17, &1.0, &t));
        assert!(!f64::doubling_holds(&3.18, &1.0, &t));
    }

    #[test]
    fn prefix_sums_match_direct() {
        let l = Lattice::new(2, 3).unwrap();
        let cells: Vec<f64> = (0..64).map(|i| (i * 7 % 11) as f64).collect();
        let ps = PrefixSums::new(&l, &cells);
        let b = CellBox::new(&[1, 2], &[5, 7]);
        let mut direct = 0.0;
        for i in 0..64 {
            let c = l.cells().coords(i);
            if b.contains_cell(&c) {
                direct += cells[i];
            }
        }
        assert_eq!(ps.query(&b), direct);
        assert_eq!(ps.query(&CellBox::new(&[-3, -3], &[20, 20])), cells.iter().sum::<f64>());
    }

    #[test]
    fn pyramid_is_additive() {
        let l = Lattice::new(1, 3).unwrap();
        let p = Pyramid::from_cells(l, (1..=8).map(|x| x as f64).collect());
        assert_eq!(*p.total(), 36.0);
        assert_eq!(p.level(1), &[10.0, 26.0]);
    }
}
