//! The 2x2 backstepping kernel `K(x, y)` on the lower triangle.
//!
//! Each row is written as a first-order system in Riemann invariants and
//! solved by successive approximation of its characteristic integral form.
//! `k12` travels along lines of slope `a`, so it lives on a grid stretched by
//! `a` in `y`; `k21` travels along slope `1/a` and lives on a grid compressed
//! by `a`. Every characteristic integral then runs along grid lines, and the
//! results are resampled onto the common `(x, y)` triangle at the end.

use crate::error::{invalid, Error, Result};
use crate::fold::FoldedParams;
use crate::grid::{Field, Grid1D, Orientation, TriGrid};
use crate::interp::{cubic_uniform, cumquad, cumquad_uniform, cumulative_gauss, lagrange, lagrange4, trapz};

/// Convergence bookkeeping shared by the kernel solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    /// Sup-norm difference between successive iterates, one entry per sweep.
    pub history: Vec<f64>,
}

impl Convergence {
    pub fn final_difference(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }
}

/// First kernel row and its Riemann invariants `kc1j = s1 d_x k1j + s_j d_y k1j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row1Kernels {
    pub k11: TriGrid,
    pub k12: TriGrid,
    pub kc11: TriGrid,
    pub kc12: TriGrid,
    pub a: f64,
    pub convergence: Convergence,
}

/// Second kernel row, its invariants, and the trace feeding the target system.
#[derive(Debug, Clone, PartialEq)]
pub struct Row2Kernels {
    pub k21: TriGrid,
    pub k22: TriGrid,
    pub kh21: TriGrid,
    pub kh22: TriGrid,
    pub kc21: TriGrid,
    pub kc22: TriGrid,
    pub g_trace: Field,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub convergence: Convergence,
}

/// Reflection coefficients `(delta1, delta2, delta3)` of the folded system.
pub fn deltas(fp: &FoldedParams) -> (f64, f64, f64) {
    let (s1, s2, a) = (fp.s1(), fp.s2(), fp.a);
    (
        (s1 - s2) / (s1 + s2),
        (1.0 - a * a) / (1.0 + a * a),
        s1 / (s1 + s2),
    )
}

fn check_common(fp: &FoldedParams, c: f64, tri_n: usize, tol: f64, max_iter: usize) -> Result<()> {
    if !(c > 0.0) {
        return Err(invalid(format!("target rate must be positive, got {c}")));
    }
    if tri_n < 4 {
        return Err(invalid(format!("triangular grid needs at least 4 nodes, got {tri_n}")));
    }
    if !(fp.eps1 >= fp.eps2 * (1.0 - 1e-12)) || !(fp.a > 0.0 && fp.a <= 1.0 + 1e-12) {
        return Err(invalid("kernel solvers need eps1 >= eps2 (fold point in (-1, 0])"));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(invalid("tolerance and iteration cap must be positive"));
    }
    Ok(())
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Values of a packed lower triangle, flattened for difference norms.
fn flat(t: &TriGrid) -> &[f64] {
    t.values()
}

/// Solve the first kernel row.
pub fn solve_row1(fp: &FoldedParams, c1: f64, tri_n: usize, tol: f64, max_iter: usize) -> Result<Row1Kernels> {
    check_common(fp, c1, tri_n, tol, max_iter)?;
    let n = tri_n;
    let nn = n - 1;
    let h = 1.0 / nn as f64;
    let (s1, s2, a) = (fp.s1(), fp.s2(), fp.a.min(1.0));
    let eps1 = fp.eps1;

    // reaction + c1 at half nodes, on the plain and on the stretched y axis
    let lam1h: Vec<f64> = (0..=2 * nn).map(|k| fp.lambda1_at(k as f64 * h / 2.0) + c1).collect();
    let lam2sh: Vec<f64> = (0..=2 * nn).map(|k| fp.lambda2_at(a * k as f64 * h / 2.0) + c1).collect();
    let d11h: Vec<f64> = cumulative_gauss(|x| -(fp.lambda1_at(x) + c1) / (2.0 * eps1), h / 2.0, 2 * nn);

    let mut k11 = TriGrid::zeros(n, Orientation::Lower);
    let mut k12s = TriGrid::zeros(n, Orientation::Lower);
    let mut kc11 = TriGrid::zeros(n, Orientation::Lower);
    let mut kc12s = TriGrid::zeros(n, Orientation::Lower);
    let mut history = Vec::new();
    let mut converged = false;

    for _ in 0..max_iter {
        // invariants from the current kernels, integrating outward from the diagonal midpoint
        for s in 0..=2 * nn {
            let i_start = s.div_ceil(2);
            let i_end = s.min(nn);
            if i_start > i_end {
                continue;
            }
            let odd = s % 2 == 1;
            let mut f11 = Vec::with_capacity(i_end - i_start + 2);
            let mut f12 = Vec::with_capacity(i_end - i_start + 2);
            let mut ts = Vec::with_capacity(i_end - i_start + 2);
            if odd {
                ts.push(0.0);
                f11.push(lam1h[s] * d11h[s]);
                f12.push(0.0);
            }
            let m = s as f64 * h / 2.0;
            for i in i_start..=i_end {
                let j = s - i;
                ts.push(i as f64 * h - m);
                f11.push(lam1h[2 * j] * k11.get(i, j));
                f12.push(lam2sh[2 * j] * k12s.get(i, j));
            }
            let c11 = cumquad(&ts, &f11, &[]);
            let c12 = cumquad(&ts, &f12, &[]);
            let off = usize::from(odd);
            for (q, i) in (i_start..=i_end).enumerate() {
                let j = s - i;
                kc11.set(i, j, -lam1h[s] / (2.0 * s1) + c11[q + off] / s1);
                kc12s.set(i, j, c12[q + off] / s1);
            }
        }

        // kernels from the invariants, integrating up from y = 0
        let bnd: Vec<f64> = (0..n).map(|i| s1 * kc11.get(i, 0) + s2 * kc12s.get(i, 0)).collect();
        let kb: Vec<f64> = cumquad_uniform(&bnd, h).into_iter().map(|v| v / (2.0 * eps1)).collect();
        let mut new11 = TriGrid::zeros(n, Orientation::Lower);
        let mut new12 = TriGrid::zeros(n, Orientation::Lower);
        for d in 0..n {
            let len = n - d;
            let c11: Vec<f64> = (0..len).map(|l| kc11.get(d + l, l)).collect();
            let c12: Vec<f64> = (0..len).map(|l| kc12s.get(d + l, l)).collect();
            let i11 = cumquad_uniform(&c11, h);
            let i12 = cumquad_uniform(&c12, h);
            for l in 0..len {
                new11.set(d + l, l, kb[d] + i11[l] / s1);
                new12.set(d + l, l, kb[d] / a + i12[l] / s1);
            }
        }
        let diff = sup_diff(flat(&new11), flat(&k11)).max(sup_diff(flat(&new12), flat(&k12s)));
        let scale = 1.0 + sup(flat(&new11)).max(sup(flat(&new12)));
        k11 = new11;
        k12s = new12;
        history.push(diff);
        if diff < tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            solver: "kernel row 1",
            iterations: history.len(),
            residual: history.last().copied().unwrap_or(f64::NAN),
        });
    }

    let k12 = unstretch(&k12s, a);
    let kc12 = unstretch(&kc12s, a);
    Ok(Row1Kernels {
        k11,
        k12,
        kc11,
        kc12,
        a,
        convergence: Convergence {
            iterations: history.len(),
            history,
        },
    })
}

/// Resample a kernel stored at `(x_i, a * y'_j)` (zero above `y = a x`) onto the plain grid.
fn unstretch(s: &TriGrid, a: f64) -> TriGrid {
    let n = s.n();
    let h = s.h();
    let mut out = TriGrid::zeros(n, Orientation::Lower);
    for i in 0..n {
        let col = s.column(i);
        for j in 0..=i {
            let yp = j as f64 / a;
            if yp >= i as f64 - 1e-9 {
                continue;
            }
            out.set(i, j, cubic_uniform(&col, 0.0, h, yp * h));
        }
    }
    out
}

/// Solve the second kernel row given the first.
pub fn solve_row2(
    row1: &Row1Kernels,
    fp: &FoldedParams,
    c2: f64,
    tri_n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Row2Kernels> {
    check_common(fp, c2, tri_n, tol, max_iter)?;
    if row1.k11.n() != tri_n {
        return Err(Error::GridMismatch {
            expected: tri_n,
            found: row1.k11.n(),
        });
    }
    let n = tri_n;
    let nn = n - 1;
    let h = 1.0 / nn as f64;
    let (s1, s2, a) = (fp.s1(), fp.s2(), fp.a.min(1.0));
    let eps2 = fp.eps2;
    let (delta1, delta2, delta3) = deltas(fp);

    // top eta index of each column on the compressed grid (x_i, eta_j = a y)
    let jtop: Vec<usize> = (0..n).map(|i| (a * i as f64 + 1e-9).floor() as usize).collect();
    let on_boundary = |i: usize| (a * i as f64 - jtop[i] as f64).abs() < 1e-9;

    let lam1e: Vec<f64> = (0..=jtop[nn]).map(|j| fp.lambda1_at(j as f64 * h / a) + c2).collect();
    let lam2n: Vec<f64> = (0..n).map(|j| fp.lambda2_at(j as f64 * h) + c2).collect();
    let lam2h: Vec<f64> = (0..=2 * nn).map(|k| fp.lambda2_at(k as f64 * h / 2.0) + c2).collect();
    let d22h = cumulative_gauss(|x| -(fp.lambda2_at(x) + c2) / (2.0 * eps2), h / 2.0, 2 * nn);
    let d11 = row1.k11.diagonal();
    let k11e: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let col = row1.k11.column(i);
            (0..=jtop[i]).map(|j| cubic_uniform(&col, 0.0, h, j as f64 * h / a)).collect()
        })
        .collect();

    let ragged = || -> Vec<Vec<f64>> { (0..n).map(|i| vec![0.0; jtop[i] + 1]).collect() };
    let mut k21e = ragged();
    let mut kh21e = ragged();
    let mut kc21e = ragged();
    let mut rhs1 = ragged();
    let mut k22 = TriGrid::zeros(n, Orientation::Lower);
    let mut kh22 = TriGrid::zeros(n, Orientation::Lower);
    let mut kc22 = TriGrid::zeros(n, Orientation::Lower);
    let mut kh21d = vec![0.0; n];
    let mut kc21d = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut history = Vec::new();
    let mut converged = false;

    // abscissae and values of column i of a ragged eta field, closed by the diagonal point
    let column_with_boundary = |col: &[f64], i: usize, bval: f64| -> (Vec<f64>, Vec<f64>) {
        let mut xs: Vec<f64> = (0..col.len()).map(|j| j as f64 * h).collect();
        let mut ys = col.to_vec();
        if !on_boundary(i) {
            xs.push(a * i as f64 * h);
            ys.push(bval);
        }
        (xs, ys)
    };

    for _ in 0..max_iter {
        let prev: Vec<f64> = kh21e
            .iter()
            .chain(kc21e.iter())
            .flatten()
            .copied()
            .chain(kh22.values().iter().copied())
            .chain(kc22.values().iter().copied())
            .collect();

        // source of the k22 family
        let mut rhs2 = TriGrid::zeros(n, Orientation::Lower);
        for (i, j) in k22.indices().collect::<Vec<_>>() {
            rhs2.set(i, j, lam2n[j] * k22.get(i, j) - g[i] * row1.k12.get(i, j));
        }

        // kc22 from the diagonal, along slope -1, split where it crosses y = a x
        for s in 0..=2 * nn {
            let i_start = s.div_ceil(2);
            let i_end = s.min(nn);
            if i_start > i_end {
                continue;
            }
            let m = s as f64 * h / 2.0;
            let mut ts = Vec::new();
            let mut fs = Vec::new();
            let mut ks = Vec::new();
            if s % 2 == 1 {
                ts.push(0.0);
                fs.push(lam2h[s] * d22h[s]);
                ks.push(d22h[s]);
            }
            for i in i_start..=i_end {
                ts.push(i as f64 * h - m);
                fs.push(rhs2.get(i, s - i));
                ks.push(k22.get(i, s - i));
            }
            let tc = m * (1.0 - a) / (1.0 + a);
            let brk = insert_crossing(&mut ts, &mut fs, &ks, tc, h, |t, k| (fp.lambda2_at(m - t) + c2) * k);
            let cum = cumquad(&ts, &fs, brk.as_slice());
            for i in i_start..=i_end {
                let t = i as f64 * h - m;
                let q = ts.iter().position(|&v| (v - t).abs() < 1e-12).unwrap();
                kc22.set(i, s - i, -lam2h[s] / (2.0 * s2) + cum[q] / s2);
            }
        }

        // y = 0 transmission into kh21
        for i in 0..n {
            kh21e[i][0] = a * kc22.get(i, 0);
        }

        // source of the k21 family on the eta grid and its diagonal value
        let rb: Vec<f64> = (0..n).map(|i| -g[i] * d11[i]).collect();
        for i in 0..n {
            for j in 0..=jtop[i] {
                rhs1[i][j] = lam1e[j] * k21e[i][j] - g[i] * k11e[i][j];
            }
        }
        let rhs1_row0: Vec<f64> = (0..n).map(|i| rhs1[i][0]).collect();
        let kh21_row0: Vec<f64> = (0..n).map(|i| kh21e[i][0]).collect();

        // kh21 along slope +1 from y = 0
        for d in 0..n {
            let mut f = Vec::new();
            let mut l = 0;
            while d + l < n && l <= jtop[d + l] {
                f.push(rhs1[d + l][l]);
                l += 1;
            }
            let cum = cumquad_uniform(&f, h);
            for (l, c) in cum.iter().enumerate() {
                kh21e[d + l][l] = kh21_row0[d] + c / s2;
            }
        }

        // kh21 on the diagonal, by integrating along its characteristic from y = 0
        let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..n).map(|k| column_with_boundary(&rhs1[k], k, rb[k])).collect();
        for i in 0..n {
            let x = i as f64 * h;
            let xs = x * (1.0 - a);
            let mut ts = Vec::new();
            let mut fs = Vec::new();
            let k0 = (xs / h - 1e-9).ceil() as usize;
            if (k0 as f64 * h - xs).abs() > 1e-12 {
                ts.push(xs);
                fs.push(cubic_uniform(&rhs1_row0, 0.0, h, xs));
            }
            for k in k0..=i {
                let eta = k as f64 * h - xs;
                ts.push(k as f64 * h);
                fs.push(lagrange4(&cols[k].0, &cols[k].1, eta));
            }
            kh21d[i] = cubic_uniform(&kh21_row0, 0.0, h, xs) + trapz_xy(&ts, &fs) / s2;
        }
        for i in 0..n {
            kc21d[i] = -delta1 * kh21d[i];
            g[i] = -(s1 - s2) * kh21d[i];
        }

        // kc21 along slope -1 from the diagonal
        for s in 0..=(nn + jtop[nn]) {
            let xb = s as f64 * h / (1.0 + a);
            if xb > 1.0 + 1e-12 {
                continue;
            }
            let i_start = (xb / h - 1e-9).ceil() as usize;
            let mut ts = Vec::new();
            let mut fs = Vec::new();
            let mut nodes = Vec::new();
            if (i_start as f64 * h - xb).abs() > 1e-12 {
                ts.push(xb);
                fs.push(-cubic_uniform(&g, 0.0, h, xb) * cubic_uniform(&d11, 0.0, h, xb));
            }
            for i in i_start..=nn.min(s) {
                let j = s - i;
                if j > jtop[i] {
                    continue;
                }
                ts.push(i as f64 * h);
                fs.push(rhs1[i][j]);
                nodes.push((i, j, ts.len() - 1));
            }
            let cum = cumquad(&ts, &fs, &[]);
            let base = cubic_uniform(&kc21d, 0.0, h, xb);
            for (i, j, q) in nodes {
                kc21e[i][j] = base + cum[q] / s2;
            }
        }

        // y = 0 transmission into kh22, then kh22 along slope +1, split at y = a x
        for d in 0..n {
            let len = n - d;
            let mut ts: Vec<f64> = (0..len).map(|l| l as f64 * h).collect();
            let mut fs: Vec<f64> = (0..len).map(|l| rhs2.get(d + l, l)).collect();
            let ks: Vec<f64> = (0..len).map(|l| k22.get(d + l, l)).collect();
            let mut brk = None;
            if a < 1.0 {
                let tc = a * d as f64 * h / (1.0 - a);
                brk = insert_crossing(&mut ts, &mut fs, &ks, tc, h, |t, k| (fp.lambda2_at(t) + c2) * k);
            }
            let cum = cumquad(&ts, &fs, brk.as_slice());
            let base = kc21e[d][0] / a;
            let mut q = 0;
            for l in 0..len {
                while (ts[q] - l as f64 * h).abs() > 1e-12 {
                    q += 1;
                }
                kh22.set(d + l, l, base + cum[q] / s2);
            }
        }

        // reconstruct k21 along rows of the eta grid, starting on the diagonal
        for j in 0..=jtop[nn] {
            let xb = j as f64 * h / a;
            let i0 = (xb / h - 1e-9).ceil() as usize;
            let mut ts = Vec::new();
            let mut fs = Vec::new();
            if (i0 as f64 * h - xb).abs() > 1e-12 {
                ts.push(xb);
                fs.push(cubic_uniform(&kc21d, 0.0, h, xb) + cubic_uniform(&kh21d, 0.0, h, xb));
            }
            let first = ts.len();
            for i in i0..n {
                ts.push(i as f64 * h);
                fs.push(kc21e[i][j] + kh21e[i][j]);
            }
            let cum = cumquad(&ts, &fs, &[]);
            for (q, i) in (i0..n).enumerate() {
                k21e[i][j] = cum[first + q] / (2.0 * s2);
            }
        }

        // reconstruct k22 along rows, starting from its diagonal value
        for j in 0..n {
            let f: Vec<f64> = (j..n).map(|i| kc22.get(i, j) + kh22.get(i, j)).collect();
            let cum = cumquad_uniform(&f, h);
            for (q, i) in (j..n).enumerate() {
                k22.set(i, j, d22h[2 * j] + cum[q] / (2.0 * s2));
            }
        }

        let cur: Vec<f64> = kh21e
            .iter()
            .chain(kc21e.iter())
            .flatten()
            .copied()
            .chain(kh22.values().iter().copied())
            .chain(kc22.values().iter().copied())
            .collect();
        let diff = sup_diff(&cur, &prev);
        history.push(diff);
        if diff < tol * (1.0 + sup(&cur)) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            solver: "kernel row 2",
            iterations: history.len(),
            residual: history.last().copied().unwrap_or(f64::NAN),
        });
    }

    let resample = |e: &Vec<Vec<f64>>, bvals: &dyn Fn(usize) -> f64| -> TriGrid {
        let mut out = TriGrid::zeros(n, Orientation::Lower);
        for i in 0..n {
            let (xs, ys) = column_with_boundary(&e[i], i, bvals(i));
            for j in 0..=i {
                out.set(i, j, lagrange4(&xs, &ys, a * j as f64 * h));
            }
        }
        out
    };
    let k21 = resample(&k21e, &|_| 0.0);
    let kh21 = resample(&kh21e, &|i| kh21d[i]);
    let kc21 = resample(&kc21e, &|i| kc21d[i]);
    Ok(Row2Kernels {
        k21,
        k22,
        kh21,
        kh22,
        kc21,
        kc22,
        g_trace: Field::new(Grid1D::unit(n)?, g)?,
        delta1,
        delta2,
        delta3,
        convergence: Convergence {
            iterations: history.len(),
            history,
        },
    })
}

fn trapz_xy(t: &[f64], f: &[f64]) -> f64 {
    cumquad(t, f, &[]).last().copied().unwrap_or(0.0)
}

/// Insert a sample at parameter `tc` into an ordered path where the integrand has a kink.
///
/// `ks` carries a companion quantity sampled at the same points; it is
/// extrapolated to `tc` from the samples before the kink and handed to `value`
/// to build the integrand there. Returns the index of the inserted sample.
fn insert_crossing(
    ts: &mut Vec<f64>,
    fs: &mut Vec<f64>,
    ks: &[f64],
    tc: f64,
    h: f64,
    value: impl Fn(f64, f64) -> f64,
) -> Option<usize> {
    let tol = 1e-9 * h;
    if ts.len() < 2 || !(tc > ts[0] - tol && tc < ts[ts.len() - 1] + tol) {
        return None;
    }
    let q = ts.partition_point(|&t| t < tc - tol);
    if (ts[q] - tc).abs() < tol {
        return Some(q);
    }
    let (lo, hi) = if q >= 2 { (q.saturating_sub(4), q) } else { (q, (q + 4).min(ts.len())) };
    let k = lagrange(&ts[lo..hi], &ks[lo..hi], tc);
    ts.insert(q, tc);
    fs.insert(q, value(tc, k));
    Some(q)
}

/// The full 2x2 kernel on the lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub k: [[TriGrid; 2]; 2],
}

impl KernelMatrix {
    pub fn from_rows(row1: &Row1Kernels, row2: &Row2Kernels) -> Self {
        Self {
            k: [
                [row1.k11.clone(), row1.k12.clone()],
                [row2.k21.clone(), row2.k22.clone()],
            ],
        }
    }

    pub fn zeros(n: usize) -> Self {
        let z = TriGrid::zeros(n, Orientation::Lower);
        Self {
            k: [[z.clone(), z.clone()], [z.clone(), z]],
        }
    }

    pub fn n(&self) -> usize {
        self.k[0][0].n()
    }

    /// Pointwise induced 2-norm integrated in L2 over the triangle.
    pub fn l2_norm(&self) -> f64 {
        let n = self.n();
        let mut sq = TriGrid::zeros(n, Orientation::Lower);
        for (i, j) in sq.indices().collect::<Vec<_>>() {
            let m = spectral_norm2(
                self.k[0][0].get(i, j),
                self.k[0][1].get(i, j),
                self.k[1][0].get(i, j),
                self.k[1][1].get(i, j),
            );
            sq.set(i, j, m);
        }
        sq.l2_norm()
    }
}

/// Largest singular value of `[[a, b], [c, d]]`.
fn spectral_norm2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    ((s + disc) / 2.0).sqrt()
}

fn check_pair(n: usize, u: &(Field, Field)) -> Result<()> {
    for f in [&u.0, &u.1] {
        if f.values.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                found: f.values.len(),
            });
        }
    }
    Ok(())
}

/// `W(x) = U(x) - int_0^x K(x, y) U(y) dy` by trapezoid on the kernel grid.
pub fn apply_volterra(k: &KernelMatrix, u: &(Field, Field)) -> Result<(Field, Field)> {
    let n = k.n();
    check_pair(n, u)?;
    let h = k.k[0][0].h();
    let uu = [&u.0.values, &u.1.values];
    let mut w = [u.0.values.clone(), u.1.values.clone()];
    for i in 1..n {
        for r in 0..2 {
            let f: Vec<f64> = (0..=i)
                .map(|j| k.k[r][0].get(i, j) * uu[0][j] + k.k[r][1].get(i, j) * uu[1][j])
                .collect();
            w[r][i] -= trapz(&f, h);
        }
    }
    let [w0, w1] = w;
    Ok((Field::new(u.0.grid.clone(), w0)?, Field::new(u.1.grid.clone(), w1)?))
}

/// Invert [`apply_volterra`] exactly on the grid by forward substitution in `x`.
pub fn invert_volterra(k: &KernelMatrix, w: &(Field, Field), tol: f64) -> Result<(Field, Field)> {
    let n = k.n();
    check_pair(n, w)?;
    let h = k.k[0][0].h();
    let mut u = [vec![0.0; n], vec![0.0; n]];
    u[0][0] = w.0.values[0];
    u[1][0] = w.1.values[0];
    for i in 1..n {
        let mut rhs = [w.0.values[i], w.1.values[i]];
        for (r, rv) in rhs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..i {
                let wt = if j == 0 { 0.5 * h } else { h };
                acc += wt * (k.k[r][0].get(i, j) * u[0][j] + k.k[r][1].get(i, j) * u[1][j]);
            }
            *rv += acc;
        }
        let m00 = 1.0 - 0.5 * h * k.k[0][0].get(i, i);
        let m01 = -0.5 * h * k.k[0][1].get(i, i);
        let m10 = -0.5 * h * k.k[1][0].get(i, i);
        let m11 = 1.0 - 0.5 * h * k.k[1][1].get(i, i);
        let det = m00 * m11 - m01 * m10;
        if det.abs() < 1e-14 {
            return Err(Error::Singular("Volterra inversion"));
        }
        u[0][i] = (m11 * rhs[0] - m01 * rhs[1]) / det;
        u[1][i] = (m00 * rhs[1] - m10 * rhs[0]) / det;
    }
    let [u0, u1] = u;
    let out = (Field::new(w.0.grid.clone(), u0)?, Field::new(w.1.grid.clone(), u1)?);
    let back = apply_volterra(k, &out)?;
    let err = sup_diff(&back.0.values, &w.0.values).max(sup_diff(&back.1.values, &w.1.values));
    if err > tol.max(1e-13) * (1.0 + sup(&w.0.values).max(sup(&w.1.values))) {
        return Err(Error::NonConvergence {
            solver: "Volterra inversion",
            iterations: 1,
            residual: err,
        });
    }
    Ok(out)
}
