//! Small interpolation and quadrature helpers shared by the solvers.

/// Piecewise-linear interpolation of uniform samples starting at `lo` with spacing `h`.
pub fn linear_uniform(v: &[f64], lo: f64, h: f64, x: f64) -> f64 {
    let n = v.len();
    if n == 1 {
        return v[0];
    }
    let s = ((x - lo) / h).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    let t = s - i as f64;
    v[i] * (1.0 - t) + v[i + 1] * t
}

/// Four-point Lagrange interpolation of uniform samples.
///
/// The stencil is centred on `x` and shifted inward near the ends; short
/// arrays fall back to the highest order available.
pub fn cubic_uniform(v: &[f64], lo: f64, h: f64, x: f64) -> f64 {
    let n = v.len();
    if n < 4 {
        let xs: Vec<f64> = (0..n).map(|k| lo + k as f64 * h).collect();
        return lagrange(&xs, v, x);
    }
    let s = (x - lo) / h;
    let base = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let t = s - base as f64;
    // nodes at t = 0, 1, 2, 3
    let (a, b, c, d) = (v[base], v[base + 1], v[base + 2], v[base + 3]);
    let l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    let l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
    let l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
    let l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
    a * l0 + b * l1 + c * l2 + d * l3
}

/// Lagrange interpolation through all points `(xs[k], ys[k])`.
pub fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..xs.len() {
        let mut w = 1.0;
        for m in 0..xs.len() {
            if m != k {
                w *= (x - xs[m]) / (xs[k] - xs[m]);
            }
        }
        acc += w * ys[k];
    }
    acc
}

/// Four-point Lagrange interpolation on sorted, possibly nonuniform abscissae.
pub fn lagrange4(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n <= 4 {
        return lagrange(xs, ys, x);
    }
    // first index with xs[k] > x
    let k = xs.partition_point(|&t| t <= x);
    let base = k.saturating_sub(2).min(n - 4);
    lagrange(&xs[base..base + 4], &ys[base..base + 4], x)
}

/// Lagrange extrapolation of degree `min(3, len-1)` using the points nearest `x`.
pub fn extrapolate(xs: &[f64], ys: &[f64], x: f64, order: usize) -> f64 {
    let n = xs.len();
    let m = (order + 1).min(n);
    if x >= xs[n - 1] {
        lagrange(&xs[n - m..], &ys[n - m..], x)
    } else {
        lagrange(&xs[..m], &ys[..m], x)
    }
}

/// Trapezoid rule for uniform samples.
pub fn trapz(v: &[f64], h: f64) -> f64 {
    match v.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (v[0] + v[n - 1]) + v[1..n - 1].iter().sum::<f64>()),
    }
}

/// Cumulative trapezoid for uniform samples; output starts at zero.
pub fn cumtrapz(v: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    for k in 0..v.len() {
        if k > 0 {
            acc += 0.5 * h * (v[k - 1] + v[k]);
        }
        out.push(acc);
    }
    out
}

/// Cumulative trapezoid on arbitrary ordered abscissae; output starts at zero.
pub fn cumtrapz_xy(t: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    for k in 0..v.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (v[k - 1] + v[k]);
        }
        out.push(acc);
    }
    out
}

/// Cumulative integral of the piecewise-cubic interpolant through ordered samples.
///
/// Each interval integrates the cubic through its four nearest samples
/// (two-point Gauss, exact for cubics). Stencils never straddle an index in
/// `breaks`, so derivative jumps at those samples are not smeared.
pub fn cumquad(t: &[f64], f: &[f64], breaks: &[usize]) -> Vec<f64> {
    let n = t.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(0.0);
    let g = 0.5 / 3.0_f64.sqrt();
    let mut acc = 0.0;
    let mut lo = 0;
    for k in 0..n - 1 {
        if breaks.contains(&k) {
            lo = k;
        }
        let hi = breaks.iter().copied().filter(|&b| b > k).min().unwrap_or(n - 1).min(n - 1);
        let (b0, b1) = if hi - lo >= 3 {
            let b = (k.saturating_sub(1)).clamp(lo, hi - 3);
            (b, b + 4)
        } else {
            (lo, hi + 1)
        };
        let (xs, ys) = (&t[b0..b1], &f[b0..b1]);
        let d = t[k + 1] - t[k];
        let m = 0.5 * (t[k] + t[k + 1]);
        acc += 0.5 * d * (lagrange(xs, ys, m - g * d) + lagrange(xs, ys, m + g * d));
        out.push(acc);
    }
    out
}

/// Insert a sample at `tc` into an ordered path whose integrand has a kink there.
///
/// The value is extrapolated from up to four samples on the left of `tc` (or
/// the right, near the path start). Returns the index of the kink sample,
/// which may be an existing sample within `tol` of `tc`. The extrapolation
/// stencil stays between the existing kink indices in `breaks`.
pub fn insert_kink(ts: &mut Vec<f64>, fs: &mut Vec<f64>, tc: f64, tol: f64, breaks: &[usize]) -> Option<usize> {
    let n = ts.len();
    if n < 2 || !(tc > ts[0] - tol && tc < ts[n - 1] + tol) {
        return None;
    }
    let q = ts.partition_point(|&t| t < tc - tol);
    if (ts[q] - tc).abs() <= tol {
        return Some(q);
    }
    let seg_lo = breaks.iter().copied().filter(|&b| b < q).max().unwrap_or(0);
    let seg_hi = breaks.iter().copied().filter(|&b| b >= q).min().unwrap_or(n - 1);
    let (lo, hi) = if q - seg_lo >= 2 {
        (q.saturating_sub(4).max(seg_lo), q)
    } else {
        (q, (q + 4).min(seg_hi + 1))
    };
    let v = lagrange(&ts[lo..hi], &fs[lo..hi], tc);
    ts.insert(q, tc);
    fs.insert(q, v);
    Some(q)
}

/// Interpolate samples of a function with derivative jumps at `kinks` onto `at`.
///
/// Kink values are extrapolated from one side, then each target uses a
/// four-point stencil that stays within its own smooth piece.
pub fn resample_kinked(xs: &[f64], ys: &[f64], kinks: &[f64], at: &[f64], tol: f64) -> Vec<f64> {
    let mut ts = xs.to_vec();
    let mut fs = ys.to_vec();
    let mut breaks: Vec<usize> = Vec::new();
    for &kc in kinks {
        let before = ts.len();
        if let Some(b) = insert_kink(&mut ts, &mut fs, kc, tol, &breaks) {
            if ts.len() > before {
                for bb in breaks.iter_mut().filter(|bb| **bb >= b) {
                    *bb += 1;
                }
            }
            breaks.push(b);
        }
    }
    breaks.sort_unstable();
    let n = ts.len();
    at.iter()
        .map(|&x| {
            let q = ts.partition_point(|&t| t <= x);
            let lo = breaks.iter().copied().filter(|&b| b < q).max().unwrap_or(0);
            let hi = breaks.iter().copied().filter(|&b| b >= q).min().unwrap_or(n - 1);
            lagrange4(&ts[lo..=hi], &fs[lo..=hi], x)
        })
        .collect()
}

/// [`cumquad`] on a uniform grid with no breaks.
pub fn cumquad_uniform(f: &[f64], h: f64) -> Vec<f64> {
    let t: Vec<f64> = (0..f.len()).map(|k| k as f64 * h).collect();
    cumquad(&t, f, &[])
}

/// Cumulative integral of `f` over `[0, k*step]` for `k = 0..=count`,
/// three-point Gauss per subinterval.
pub fn cumulative_gauss(f: impl Fn(f64) -> f64, step: f64, count: usize) -> Vec<f64> {
    let g = (3.0_f64 / 5.0).sqrt() / 2.0;
    let mut out = Vec::with_capacity(count + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..count {
        let m = (k as f64 + 0.5) * step;
        let q = 5.0 * f(m - g * step) + 8.0 * f(m) + 5.0 * f(m + g * step);
        acc += q * step / 18.0;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_reproduces_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let v: Vec<f64> = (0..11).map(|k| f(k as f64 * 0.1)).collect();
        for &x in &[0.0, 0.03, 0.47, 0.95, 1.0] {
            assert!((cubic_uniform(&v, 0.0, 0.1, x) - f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn lagrange4_on_nonuniform_points() {
        let xs = [0.0, 0.1, 0.25, 0.3, 0.55, 0.6];
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x - x).collect();
        for &x in &[0.05, 0.28, 0.58] {
            assert!((lagrange4(&xs, &ys, x) - (x * x * x - x)).abs() < 1e-13);
        }
    }

    #[test]
    fn gauss_cumulative_is_exact_for_quintics() {
        let c = cumulative_gauss(|x| x.powi(5), 0.25, 4);
        assert!((c[4] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn cumquad_exact_for_cubics_with_and_without_breaks() {
        let t = [0.0, 0.05, 0.15, 0.25, 0.3, 0.45, 0.55];
        let f: Vec<f64> = t.iter().map(|x| 2.0 * x * x * x - x + 1.0).collect();
        let exact = |x: f64| 0.5 * x.powi(4) - 0.5 * x * x + x;
        for breaks in [&[][..], &[3][..]] {
            let c = cumquad(&t, &f, breaks);
            for k in 0..t.len() {
                assert!((c[k] - exact(t[k])).abs() < 1e-14);
            }
        }
        let kink: Vec<f64> = t.iter().map(|&x| (x - 0.25_f64).abs()).collect();
        let c = cumquad(&t, &kink, &[3]);
        assert!((c[6] - (0.25 * 0.25 / 2.0 + 0.3 * 0.3 / 2.0)).abs() < 1e-14);
    }

    #[test]
    fn trapz_linear_exact() {
        let v: Vec<f64> = (0..5).map(|k| 2.0 * k as f64).collect();
        assert!((trapz(&v, 1.0) - 16.0).abs() < 1e-14);
        assert_eq!(cumtrapz(&v, 1.0)[4], 16.0);
    }
}
