//! Small quadrature kit for power-weight cell masses.

/// 5-point Gauss–Legendre nodes and weights on [-1, 1].
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// Tensor Gauss–Legendre rule on the rectangle `[x0,x1] × [y0,y1]`.
pub fn gauss_rect(f: &impl Fn(f64, f64) -> f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let (hx, cx) = ((x1 - x0) / 2.0, (x1 + x0) / 2.0);
    let (hy, cy) = ((y1 - y0) / 2.0, (y1 + y0) / 2.0);
    let mut s = 0.0;
    for &(u, wu) in &GL5 {
        for &(v, wv) in &GL5 {
            s += wu * wv * f(cx + hx * u, cy + hy * v);
        }
    }
    s * hx * hy
}

/// Tensor rule on a `2^k × 2^k` subdivision of the rectangle.
pub fn gauss_rect_split(f: &impl Fn(f64, f64) -> f64, x0: f64, x1: f64, y0: f64, y1: f64, k: u32) -> f64 {
    let parts = 1usize << k;
    let dx = (x1 - x0) / parts as f64;
    let dy = (y1 - y0) / parts as f64;
    let mut s = 0.0;
    for i in 0..parts {
        for j in 0..parts {
            let ax = x0 + i as f64 * dx;
            let ay = y0 + j as f64 * dy;
            s += gauss_rect(f, ax, ax + dx, ay, ay + dy);
        }
    }
    s
}

/// Refine [`gauss_rect_split`] until successive estimates agree to `rel_tol`.
pub fn refined_rect(f: &impl Fn(f64, f64) -> f64, x0: f64, x1: f64, y0: f64, y1: f64, rel_tol: f64) -> f64 {
    let mut prev = gauss_rect(f, x0, x1, y0, y1);
    for k in 1..=9 {
        let next = gauss_rect_split(f, x0, x1, y0, y1, k);
        if (next - prev).abs() <= rel_tol * next.abs() {
            return next;
        }
        prev = next;
    }
    prev
}

/// Adaptive Simpson on a smooth integrand.
pub fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = (a + b) / 2.0;
        let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f((a + b) / 2.0));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `∫_{[0,a]×[0,b]} |x|^e dx` for `e > -2`, exactly reduced to a smooth angular integral.
pub fn corner_rect_power(a: f64, b: f64, e: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let s = e + 2.0;
    // split the rectangle along its diagonal into two right triangles
    let tri = |adj: f64, opp: f64| {
        let theta = (opp / adj).atan();
        let g = |t: f64| (adj / t.cos()).powf(s);
        simpson(&g, 0.0, theta, 1e-13 * adj.powf(s).max(f64::MIN_POSITIVE))
    };
    (tri(a, b) + tri(b, a)) / s
}

/// `∫_a^b |x|^e dx` for `e > -1`, computed without cancellation.
pub fn power_interval(a: f64, b: f64, e: f64) -> f64 {
    debug_assert!(a <= b);
    if a >= 0.0 {
        ray_power(a, b, e)
    } else if b <= 0.0 {
        ray_power(-b, -a, e)
    } else {
        ray_power(0.0, -a, e) + ray_power(0.0, b, e)
    }
}

/// `∫_a^b t^e dt` on `0 ≤ a ≤ b`.
fn ray_power(a: f64, b: f64, e: f64) -> f64 {
    let s = e + 1.0;
    if b <= a {
        return 0.0;
    }
    if a == 0.0 {
        return b.powf(s) / s;
    }
    // b^s - a^s = a^s · expm1(s · ln(b/a))
    a.powf(s) * (s * (b / a).ln()).exp_m1() / s
}
