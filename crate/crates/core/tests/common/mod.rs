//! Definition-chasing oracles on a line (`d = 1`, unit root), written as plain
//! loops over cells and cubes with no shared code from the library.

#![allow(dead_code)]

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Arithmetic both oracles run in: `f64` and exact rationals.
pub trait Num: Clone + PartialOrd + std::ops::Add<Output = Self> + std::ops::Mul<Output = Self> + std::ops::Div<Output = Self> {
    fn from_f64(x: f64) -> Self;
    fn origin() -> Self;
}

impl Num for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn origin() -> Self {
        0.0
    }
}

impl Num for BigRational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite")
    }
    fn origin() -> Self {
        <BigRational as Zero>::zero()
    }
}

fn max<T: Num>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

/// `σf` on the interval of cells `[lo, hi)`, clipped to `[0, n)`.
fn mass<T: Num>(sf: &[T], lo: i64, hi: i64) -> T {
    let n = sf.len() as i64;
    let mut s = T::origin();
    for y in lo.max(0)..hi.min(n) {
        s = s + sf[y as usize].clone();
    }
    s
}

fn product<T: Num>(sigma: &[f64], f: &[f64]) -> Vec<T> {
    sigma.iter().zip(f).map(|(s, v)| T::from_f64(*s) * T::from_f64(*v)).collect()
}

/// Length of `side` cells on the unit root with `n` cells.
fn length<T: Num>(side: i64, n: usize) -> T {
    T::from_f64(side as f64) / T::from_f64(n as f64)
}

/// `max` over intervals `[shift + k·side, shift + (k+1)·side) ∋ x`, side `n / 2^l`.
pub fn grid_maximal<T: Num>(sigma: &[f64], f: &[f64], shift: i64) -> Vec<T> {
    let n = sigma.len();
    let sf = product::<T>(sigma, f);
    (0..n as i64)
        .map(|x| {
            let mut best = T::origin();
            let mut side = n as i64;
            while side >= 1 {
                let k = (x - shift).div_euclid(side);
                let lo = shift + k * side;
                best = max(best, mass(&sf, lo, lo + side) / length::<T>(side, n));
                side /= 2;
            }
            best
        })
        .collect()
}

/// `max` over every interval of whole cells containing `x`.
pub fn full_maximal<T: Num>(sigma: &[f64], f: &[f64]) -> Vec<T> {
    let n = sigma.len() as i64;
    let sf = product::<T>(sigma, f);
    (0..n)
        .map(|x| {
            let mut best = T::origin();
            for lo in 0..=x {
                for hi in x + 1..=n {
                    best = max(best, mass(&sf, lo, hi) / length::<T>(hi - lo, n as usize));
                }
            }
            best
        })
        .collect()
}

/// Pointwise max over the grids shifted by `0, ⌊n/3⌋, ⌊2n/3⌋` cells.
pub fn shifted_maximal<T: Num>(sigma: &[f64], f: &[f64]) -> Vec<T> {
    let n = sigma.len() as i64;
    let mut best: Vec<T> = vec![T::origin(); n as usize];
    for shift in [0, n / 3, 2 * n / 3] {
        for (b, v) in best.iter_mut().zip(grid_maximal::<T>(sigma, f, shift)) {
            *b = max(b.clone(), v);
        }
    }
    best
}

/// `P_D(σf)` at (cell, slab `j`): the sum of averages over standard intervals of level `≤ j` containing the cell.
/// Output laid out as `cell * (L + 1) + j`.
pub fn dyadic_poisson<T: Num>(sigma: &[f64], f: &[f64]) -> Vec<T> {
    let n = sigma.len() as i64;
    let levels = n.trailing_zeros() as i64;
    let sf = product::<T>(sigma, f);
    let mut out = Vec::new();
    for x in 0..n {
        for j in 0..=levels {
            let mut s = T::origin();
            for l in 0..=j {
                let side = n >> l;
                let lo = (x / side) * side;
                s = s + mass(&sf, lo, lo + side) / length::<T>(side, n as usize);
            }
            out.push(s);
        }
    }
    out
}

/// `P_D^*(w 1_{Q̃})(x) = Σ_{Q' ∋ x} w(Q̃' ∩ Q̃) / |Q'|`, where `w` has slab masses
/// `w[cell * (L + 1) + j]`, `Q` is the standard interval `(level, k)`, and the
/// box over a level-`l` interval holds the slabs `j ≥ l`.
pub fn poisson_dual<T: Num>(w: &[f64], n: usize, level: i64, k: i64) -> Vec<T> {
    let levels = n.trailing_zeros() as i64;
    let slabs = levels + 1;
    let side_q = n as i64 >> level;
    let (q_lo, q_hi) = (k * side_q, (k + 1) * side_q);
    (0..n as i64)
        .map(|x| {
            let mut s = T::origin();
            for l in 0..=levels {
                let side = n as i64 >> l;
                let lo = (x / side) * side;
                let mut overlap = T::origin();
                for y in lo.max(q_lo)..(lo + side).min(q_hi) {
                    for j in l.max(level)..slabs {
                        overlap = overlap + T::from_f64(w[(y * slabs + j) as usize]);
                    }
                }
                s = s + overlap / length::<T>(side, n);
            }
            s
        })
        .collect()
}

/// `Σ_{Q ∋ x} σf(Q) |Q|^{-α}` over the standard intervals.
pub fn fractional(sigma: &[f64], f: &[f64], alpha: f64) -> Vec<f64> {
    let n = sigma.len() as i64;
    let sf = product::<f64>(sigma, f);
    (0..n)
        .map(|x| {
            let mut s = 0.0;
            let mut side = n;
            while side >= 1 {
                let lo = (x / side) * side;
                s += mass(&sf, lo, lo + side) * (side as f64 / n as f64).powf(-alpha);
                side /= 2;
            }
            s
        })
        .collect()
}

/// Relative error, with exact zeros compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

/// Exact equality of doubles against rationals.
pub fn exactly(a: &[f64], b: &[BigRational]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| BigRational::from_float(*x).as_ref() == Some(y))
}

pub fn to_f64(v: &[BigRational]) -> Vec<f64> {
    v.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect()
}

/// Log-normal-ish positive values with a few exact zeros.
pub fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random_bool(0.1) { 0.0 } else { (rng.random::<f64>() * 4.0 - 2.0).exp() })
        .collect()
}

/// Small integers, so that every double operation on dyadic volumes is exact.
pub fn random_integers(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0..8) as f64).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
