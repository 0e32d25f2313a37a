//! Kernels `(p, q, r)` of the second transformation, forced by the trace `g`.
//!
//! In the compressed coordinate `eta = a y` both `q` (below the interface
//! `eta = a x`) and `r` (between the interface and `eta = a`) satisfy a plain
//! wave equation, so their Riemann invariants travel along slopes `+1` and `-1`
//! of a uniform `(x, eta)` grid. The interface transmission injects a jump of
//! size `g(0)/(s1 - s2)` at the corner which then travels through the domain;
//! it is removed analytically and only the continuous remainder is iterated.

use crate::error::{invalid, Error, Result};
use crate::fold::FoldedParams;
use crate::grid::{Field, Grid1D, Orientation, TriGrid};
use crate::interp::{cubic_uniform, cumquad, cumquad_uniform, insert_kink, lagrange4, resample_kinked};
use crate::kernel_ctrl::Convergence;

/// Solved auxiliary kernels and their Riemann invariants on the common triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct QRKernels {
    pub q: TriGrid,
    pub r: TriGrid,
    pub p: Field,
    pub qh: TriGrid,
    pub qc: TriGrid,
    pub rh: TriGrid,
    pub rc: TriGrid,
    pub convergence: Convergence,
}

impl QRKernels {
    pub fn zeros(n: usize) -> Result<Self> {
        let lo = TriGrid::zeros(n, Orientation::Lower);
        let up = TriGrid::zeros(n, Orientation::Upper);
        Ok(Self {
            q: lo.clone(),
            r: up.clone(),
            p: Field::zeros(Grid1D::unit(n)?),
            qh: lo.clone(),
            qc: lo,
            rh: up.clone(),
            rc: up,
            convergence: Convergence {
                iterations: 0,
                history: Vec::new(),
            },
        })
    }
}

/// Column-ragged storage on the compressed grid.
#[derive(Debug, Clone)]
struct Ragged {
    lo: Vec<usize>,
    data: Vec<Vec<f64>>,
}

impl Ragged {
    fn new(lo: &[usize], hi: &[usize]) -> Self {
        Self {
            lo: lo.to_vec(),
            data: lo.iter().zip(hi).map(|(&l, &h)| vec![0.0; h + 1 - l]).collect(),
        }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i][j - self.lo[i]]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i][j - self.lo[i]] = v;
    }

    fn contains(&self, i: usize, j: usize) -> bool {
        i < self.data.len() && j >= self.lo[i] && j < self.lo[i] + self.data[i].len()
    }

    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().flatten().copied()
    }
}

const GAP: f64 = 0.25;

struct Layout {
    n: usize,
    h: f64,
    a: f64,
    /// last q-region eta index of each column
    jq: Vec<usize>,
    /// first r-region eta index of each column
    jr: Vec<usize>,
    jtop: usize,
}

impl Layout {
    fn new(n: usize, a: f64) -> Self {
        let h = 1.0 / (n - 1) as f64;
        let jq = (0..n).map(|i| (a * i as f64 + 1e-9).floor() as usize).collect();
        let jr = (0..n).map(|i| (a * i as f64 - 1e-9).ceil() as usize).collect();
        let jtop = (a * (n - 1) as f64 + 1e-9).floor() as usize;
        Self { n, h, a, jq, jr, jtop }
    }

    fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    fn iface_on_node(&self, i: usize) -> bool {
        self.jq[i] == self.jr[i]
    }

    fn top_on_node(&self) -> bool {
        (self.a - self.jtop as f64 * self.h).abs() < 1e-9 * self.h
    }

    fn first_at_or_after(&self, x: f64) -> usize {
        ((x / self.h - 1e-9).ceil().max(0.0)) as usize
    }

    fn coincides(&self, x: f64, k: usize) -> bool {
        (k as f64 * self.h - x).abs() < 1e-9 * self.h
    }

    /// Abscissae and values of q-region column `i`, closed by the interface point.
    ///
    /// A node closer than `GAP * h` to a boundary point is left out so the
    /// interpolant is not steered by two nearly coincident samples.
    fn q_column(&self, v: &Ragged, i: usize, iface: f64) -> (Vec<f64>, Vec<f64>) {
        let e = self.a * self.x(i);
        let mut xs = Vec::with_capacity(self.jq[i] + 2);
        let mut ys = Vec::with_capacity(self.jq[i] + 2);
        for j in 0..=self.jq[i] {
            let t = j as f64 * self.h;
            if j > 0 && e - t < GAP * self.h && !self.iface_on_node(i) {
                continue;
            }
            xs.push(t);
            ys.push(v.get(i, j));
        }
        if !self.iface_on_node(i) {
            xs.push(e);
            ys.push(iface);
        }
        (xs, ys)
    }

    /// Abscissae and values of r-region column `i`, closed by the interface and top points.
    fn r_column(&self, v: &Ragged, i: usize, iface: f64, top: f64) -> (Vec<f64>, Vec<f64>) {
        let e = self.a * self.x(i);
        let mut xs = Vec::with_capacity(self.jtop.saturating_sub(self.jr[i]) + 3);
        let mut ys = Vec::with_capacity(self.jtop.saturating_sub(self.jr[i]) + 3);
        let iface_extra = !self.iface_on_node(i);
        let top_extra = !self.top_on_node();
        if iface_extra {
            xs.push(e);
            ys.push(iface);
        }
        for j in self.jr[i]..=self.jtop {
            let t = j as f64 * self.h;
            let crowded = (iface_extra && t - e < GAP * self.h) || (top_extra && self.a - t < GAP * self.h);
            // keep at least one node so short columns still have interior data
            if crowded && self.jtop > self.jr[i] {
                continue;
            }
            xs.push(t);
            ys.push(v.get(i, j));
        }
        if top_extra {
            xs.push(self.a);
            ys.push(top);
        }
        (xs, ys)
    }
}

/// Step parts removed from the invariants, integrated in closed form.
#[derive(Clone, Copy)]
struct Steps {
    j0: f64,
    a: f64,
    s2: f64,
}

impl Steps {
    fn rh(&self, x: f64, eta: f64) -> f64 {
        if x > eta + 1e-12 {
            -self.j0
        } else {
            0.0
        }
    }

    fn cross(&self, x: f64, eta: f64) -> f64 {
        if x + eta > 2.0 * self.a + 1e-12 {
            self.j0
        } else {
            0.0
        }
    }

    fn q(&self, x: f64, eta: f64) -> f64 {
        let k = self.j0 / (2.0 * self.s2);
        k * ((x - 2.0 * self.a).max(0.0) + (eta - (2.0 * self.a - x).max(0.0)).max(0.0))
    }

    fn r(&self, x: f64, eta: f64) -> f64 {
        let k = self.j0 / (2.0 * self.s2);
        k * (-(x - eta).max(0.0) + (x - (2.0 * self.a - eta)).max(0.0))
    }
}

struct State {
    qh: Ragged,
    qc: Ragged,
    rh: Ragged,
    rc: Ragged,
    qs: Ragged,
    rs: Ragged,
    fq: Ragged,
    fr: Ragged,
    qh_if: Vec<f64>,
    qc_if: Vec<f64>,
    rh_if: Vec<f64>,
    rc_if: Vec<f64>,
    rh_top: Vec<f64>,
    rc_top: Vec<f64>,
    fq_if: Vec<f64>,
    q_if: Vec<f64>,
    qs_if: Vec<f64>,
    p: Vec<f64>,
}

struct Solver<'a> {
    lay: Layout,
    g: &'a [f64],
    gy: Vec<f64>,
    s1: f64,
    s2: f64,
    dc: f64,
    steps: Steps,
}

impl Solver<'_> {
    fn state(&self) -> State {
        let l = &self.lay;
        let n = l.n;
        let zeros_q = Ragged::new(&vec![0; n], &l.jq);
        let zeros_r = Ragged::new(&l.jr, &vec![l.jtop; n]);
        State {
            qh: zeros_q.clone(),
            qc: zeros_q.clone(),
            qs: zeros_q.clone(),
            fq: zeros_q,
            rh: zeros_r.clone(),
            rc: zeros_r.clone(),
            rs: zeros_r.clone(),
            fr: zeros_r,
            qh_if: vec![0.0; n],
            qc_if: vec![0.0; n],
            rh_if: vec![0.0; n],
            rc_if: vec![0.0; n],
            rh_top: vec![0.0; n],
            rc_top: vec![0.0; n],
            fq_if: vec![0.0; n],
            q_if: vec![0.0; n],
            qs_if: vec![0.0; n],
            p: vec![0.0; n],
        }
    }

    /// Source terms from the current reconstruction; zero when `with_source` is off.
    fn sources(&self, st: &mut State, with_source: bool) {
        let l = &self.lay;
        for i in 0..l.n {
            let x = l.x(i);
            for j in 0..=l.jq[i] {
                let eta = j as f64 * l.h;
                let v = if with_source {
                    let q = st.qs.get(i, j) + self.steps.q(x, eta);
                    let arg = (x - eta / l.a).max(0.0);
                    self.dc * q + self.gy[j] * cubic_uniform(&st.p, 0.0, l.h, arg)
                } else {
                    0.0
                };
                st.fq.set(i, j, v);
            }
            for j in l.jr[i]..=l.jtop {
                let eta = j as f64 * l.h;
                let v = if with_source {
                    self.dc * (st.rs.get(i, j) + self.steps.r(x, eta))
                } else {
                    0.0
                };
                st.fr.set(i, j, v);
            }
            st.fq_if[i] = if with_source {
                self.dc * st.q_if[i] + self.g[i] * st.p[0]
            } else {
                0.0
            };
        }
    }

    /// Boundary trace sampled at the x nodes, evaluated at `x` without smoothing over its kink.
    fn trace_at(&self, v: &[f64], x: f64, kink: f64) -> f64 {
        let l = &self.lay;
        let lo = l.first_at_or_after(x).saturating_sub(4);
        let hi = (lo + 8).min(l.n - 1);
        let xs: Vec<f64> = (lo..=hi).map(|k| l.x(k)).collect();
        resample_kinked(&xs, &v[lo..=hi], &[kink], &[x], 1e-9 * l.h)[0]
    }

    fn fq_at(&self, st: &State, k: usize, eta: f64) -> f64 {
        let (xs, ys) = self.lay.q_column(&st.fq, k, st.fq_if[k]);
        lagrange4(&xs, &ys, eta)
    }

    fn fr_at(&self, st: &State, k: usize, eta: f64) -> f64 {
        let (xs, ys) = self.lay.r_column(&st.fr, k, st.fq_if[k], 0.0);
        lagrange4(&xs, &ys, eta)
    }

    /// Integral of `F/s2` along a characteristic sampled at the columns it crosses.
    ///
    /// `start` is the path origin `(x, F)`; `eta_at(k)` gives the path height in column `k`.
    fn path_integral(
        &self,
        start: (f64, f64),
        end_col: usize,
        eta_at: impl Fn(usize) -> f64,
        f_at: impl Fn(usize, f64) -> f64,
    ) -> f64 {
        let l = &self.lay;
        let k0 = l.first_at_or_after(start.0);
        let mut ts = Vec::new();
        let mut fs = Vec::new();
        if k0 > end_col || !l.coincides(start.0, k0) {
            ts.push(start.0);
            fs.push(start.1);
        }
        for k in k0..=end_col {
            ts.push(l.x(k));
            fs.push(f_at(k, eta_at(k)));
        }
        cumquad(&ts, &fs, &[]).last().copied().unwrap_or(0.0) / self.s2
    }

    fn sweep(&self, st: &mut State, with_source: bool) {
        let l = &self.lay;
        let n = l.n;
        let (a, h, s1, s2) = (l.a, l.h, self.s1, self.s2);
        let gm = 1.0 / (s1 - s2);
        let gp = 1.0 / (s1 + s2);
        self.sources(st, with_source);

        // qh from eta = 0 along slope +1
        for d in 0..n {
            let mut f = Vec::new();
            let mut k = 0;
            while d + k < n && k <= l.jq[d + k] {
                f.push(st.fq.get(d + k, k));
                k += 1;
            }
            for (k, c) in cumquad_uniform(&f, h).into_iter().enumerate() {
                st.qh.set(d + k, k, c / s2);
            }
        }

        // qh on the interface
        let row0: Vec<f64> = (0..n).map(|k| st.fq.get(k, 0)).collect();
        for i in 0..n {
            let xs = l.x(i) * (1.0 - a);
            st.qh_if[i] = self.path_integral(
                (xs, cubic_uniform(&row0, 0.0, h, xs)),
                i,
                |k| l.x(k) - xs,
                |k, e| self.fq_at(st, k, e),
            );
        }
        for i in 0..n {
            st.rh_if[i] = st.qh_if[i] - gm * self.g[i] + self.steps.j0;
        }

        // rh along slope +1, from the interface below the jump line and from x = 0 above it
        for d in -(l.jtop as isize)..(n as isize) {
            let mut ts = Vec::new();
            let mut fs = Vec::new();
            let mut nodes = Vec::new();
            let base;
            if d >= 0 {
                let xb = d as f64 * h / (1.0 - a);
                if xb > 1.0 + 1e-12 {
                    continue;
                }
                base = cubic_uniform(&st.rh_if, 0.0, h, xb);
                let k0 = l.first_at_or_after(xb);
                if !l.coincides(xb, k0) {
                    ts.push(xb);
                    fs.push(cubic_uniform(&st.fq_if, 0.0, h, xb));
                }
                for k in k0.max(d as usize)..n {
                    let j = k - d as usize;
                    if j > l.jtop {
                        break;
                    }
                    if j < l.jr[k] {
                        continue;
                    }
                    ts.push(l.x(k));
                    fs.push(st.fr.get(k, j));
                    nodes.push((k, j, ts.len() - 1));
                }
            } else {
                base = 0.0;
                for k in 0..n {
                    let j = (k as isize - d) as usize;
                    if j > l.jtop {
                        break;
                    }
                    ts.push(l.x(k));
                    fs.push(st.fr.get(k, j));
                    nodes.push((k, j, ts.len() - 1));
                }
            }
            let cum = cumquad(&ts, &fs, &[]);
            for (k, j, q) in nodes {
                st.rh.set(k, j, base + cum[q] / s2);
            }
        }

        // rh at the top, reflected into rc
        for i in 0..n {
            let x = l.x(i);
            let d = x - a;
            let (xs, base, f0) = if d >= 0.0 {
                let xb = d / (1.0 - a);
                (
                    xb,
                    cubic_uniform(&st.rh_if, 0.0, h, xb),
                    cubic_uniform(&st.fq_if, 0.0, h, xb),
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            let start = if d >= 0.0 { xs } else { 0.0 };
            st.rh_top[i] = base + self.path_integral((start, f0), i, |k| l.x(k) - d, |k, e| self.fr_at(st, k, e));
            st.rc_top[i] = -st.rh_top[i];
        }

        // rc along slope -1, from the top or from x = 0
        for sigma in 0..=(n - 1 + l.jtop) {
            let xt = sigma as f64 * h - a;
            let (x0, base) = if xt > 0.0 {
                (xt, self.trace_at(&st.rc_top, xt, a))
            } else {
                (0.0, 0.0)
            };
            let mut ts = Vec::new();
            let mut fs = Vec::new();
            let mut nodes = Vec::new();
            let k0 = l.first_at_or_after(x0);
            if !l.coincides(x0, k0) {
                ts.push(x0);
                fs.push(0.0);
            }
            for k in k0..n.min(sigma + 1) {
                let j = sigma - k;
                if j > l.jtop {
                    continue;
                }
                if j < l.jr[k] {
                    break;
                }
                ts.push(l.x(k));
                fs.push(st.fr.get(k, j));
                nodes.push((k, j, ts.len() - 1));
            }
            let cum = cumquad(&ts, &fs, &[]);
            for (k, j, q) in nodes {
                st.rc.set(k, j, base + cum[q] / s2);
            }
        }

        // rc on the interface, transmitted into qc
        for i in 0..n {
            let sx = l.x(i) * (1.0 + a);
            let xt = sx - a;
            let (x0, base) = if xt > 0.0 {
                (xt, self.trace_at(&st.rc_top, xt, a))
            } else {
                (0.0, 0.0)
            };
            st.rc_if[i] = base + self.path_integral((x0, 0.0), i, |k| sx - l.x(k), |k, e| self.fr_at(st, k, e));
            st.qc_if[i] = st.rc_if[i] - gp * self.g[i];
        }

        // qc along slope -1 from the interface
        for sigma in 0..=(n - 1 + l.jq[n - 1]) {
            let xb = sigma as f64 * h / (1.0 + a);
            if xb > 1.0 + 1e-12 {
                continue;
            }
            let base = self.trace_at(&st.qc_if, xb, 2.0 * a / (1.0 + a));
            let mut ts = Vec::new();
            let mut fs = Vec::new();
            let mut nodes = Vec::new();
            let k0 = l.first_at_or_after(xb);
            if !l.coincides(xb, k0) {
                ts.push(xb);
                fs.push(cubic_uniform(&st.fq_if, 0.0, h, xb));
            }
            for k in k0..n.min(sigma + 1) {
                let j = sigma - k;
                if j > l.jq[k] {
                    continue;
                }
                ts.push(l.x(k));
                fs.push(st.fq.get(k, j));
                nodes.push((k, j, ts.len() - 1));
            }
            let cum = cumquad(&ts, &fs, &[]);
            for (k, j, q) in nodes {
                st.qc.set(k, j, base + cum[q] / s2);
            }
        }

        self.reconstruct(st);
    }

    fn reconstruct(&self, st: &mut State) {
        let l = &self.lay;
        let n = l.n;
        let (h, s2, a) = (l.h, self.s2, l.a);
        let tol = 1e-9 * h;
        let row0: Vec<f64> = (0..n).map(|k| st.qc.get(k, 0) / (2.0 * s2)).collect();
        let q0 = integrate_with_kinks((0..n).map(|k| l.x(k)).collect(), row0, &[2.0 * a], tol);
        for i in 0..n {
            let (ts, fs) = {
                let (ts, hs) = l.q_column(&st.qh, i, st.qh_if[i]);
                let (_, cs) = l.q_column(&st.qc, i, st.qc_if[i]);
                let fs: Vec<f64> = cs.iter().zip(&hs).map(|(c, h)| (c - h) / (2.0 * s2)).collect();
                (ts, fs)
            };
            let eta_nodes: Vec<f64> = (0..=l.jq[i]).map(|j| j as f64 * h).collect();
            let e = a * l.x(i);
            let mut targets = eta_nodes.clone();
            targets.push(e);
            let cum = integrate_at(ts, fs, &q_kinks(a, l.x(i)), &targets, tol);
            for j in 0..=l.jq[i] {
                st.qs.set(i, j, q0[i] + cum[j]);
            }
            st.qs_if[i] = q0[i] + cum[l.jq[i] + 1];
            st.q_if[i] = st.qs_if[i] + self.steps.q(l.x(i), e);
            st.p[i] = (q0[i] + self.steps.q(l.x(i), 0.0)) / a;
        }
        for j in 0..=l.jtop {
            let eta = j as f64 * h;
            let ks: Vec<usize> = (0..n).take_while(|&k| st.rs.contains(k, j)).collect();
            let ts: Vec<f64> = ks.iter().map(|&k| l.x(k)).collect();
            let fs: Vec<f64> = ks
                .iter()
                .map(|&k| (st.rh.get(k, j) + st.rc.get(k, j)) / (2.0 * s2))
                .collect();
            let cum = integrate_with_kinks(ts, fs, &[eta, 2.0 * a - eta], tol);
            for (&k, c) in ks.iter().zip(cum) {
                st.rs.set(k, j, c);
            }
        }
    }
}

/// Eta positions in q-region column `x` where the solution loses smoothness.
fn q_kinks(a: f64, x: f64) -> Vec<f64> {
    let mut k = vec![2.0 * a - x];
    if x > 2.0 * a {
        k.push(a * (x - 2.0 * a));
    }
    k
}

/// Cumulative integral at the original samples, with stencils broken at the kink locations.
fn integrate_with_kinks(ts: Vec<f64>, fs: Vec<f64>, kinks: &[f64], tol: f64) -> Vec<f64> {
    let targets = ts.clone();
    integrate_at(ts, fs, kinks, &targets, tol)
}

/// Cumulative integral from `ts[0]`, reported at `targets`.
///
/// Targets that are not samples (dropped crowded nodes) are interpolated from the cumulative values.
fn integrate_at(mut ts: Vec<f64>, mut fs: Vec<f64>, kinks: &[f64], targets: &[f64], tol: f64) -> Vec<f64> {
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
    let cum = cumquad(&ts, &fs, &breaks);
    targets
        .iter()
        .map(|&t| {
            let q = ts.partition_point(|&v| v < t - tol);
            if q < ts.len() && (ts[q] - t).abs() <= tol {
                cum[q]
            } else {
                lagrange4(&ts, &cum, t)
            }
        })
        .collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn invariants(st: &State) -> Vec<f64> {
    st.qh
        .flat()
        .chain(st.qc.flat())
        .chain(st.rh.flat())
        .chain(st.rc.flat())
        .collect()
}

fn check_inputs(g: &Field, fp: &FoldedParams, tri_n: usize) -> Result<()> {
    if tri_n < 4 {
        return Err(invalid(format!("triangular grid needs at least 4 nodes, got {tri_n}")));
    }
    if g.values.len() != tri_n {
        return Err(Error::GridMismatch {
            expected: tri_n,
            found: g.values.len(),
        });
    }
    if !(fp.a > 0.0 && fp.a <= 1.0 + 1e-12) {
        return Err(invalid("auxiliary kernels need a fold point in (-1, 0]"));
    }
    Ok(())
}

fn symmetric(fp: &FoldedParams) -> bool {
    fp.a >= 1.0 - 1e-12
}

fn solver<'a>(g: &'a Field, fp: &FoldedParams, c1: f64, c2: f64, tri_n: usize) -> Solver<'a> {
    let lay = Layout::new(tri_n, fp.a);
    let (s1, s2) = (fp.s1(), fp.s2());
    let gy = (0..=lay.jtop)
        .map(|j| cubic_uniform(&g.values, 0.0, lay.h, (j as f64 * lay.h / fp.a).min(1.0)))
        .collect();
    Solver {
        g: &g.values,
        gy,
        s1,
        s2,
        dc: c2 - c1,
        steps: Steps {
            j0: g.values[0] / (s1 - s2),
            a: fp.a,
            s2,
        },
        lay,
    }
}

/// Solve for `(p, q, r)` given the trace `g` sampled on the kernel grid.
pub fn solve_qr(
    g: &Field,
    fp: &FoldedParams,
    c1: f64,
    c2: f64,
    tri_n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<QRKernels> {
    check_inputs(g, fp, tri_n)?;
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(invalid("target rates must be positive"));
    }
    if symmetric(fp) {
        // the interface is itself a characteristic; only the unforced problem is well posed
        if g.max_abs() > 1e-12 {
            return Err(invalid("nonzero trace with a symmetric fold"));
        }
        return QRKernels::zeros(tri_n);
    }
    let sv = solver(g, fp, c1, c2, tri_n);
    let mut st = sv.state();
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let prev = invariants(&st);
        sv.sweep(&mut st, true);
        let cur = invariants(&st);
        let diff = sup_diff(&cur, &prev);
        let scale = 1.0 + cur.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        history.push(diff);
        if diff < tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            solver: "auxiliary kernels",
            iterations: history.len(),
            residual: history.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok(resample(&sv, &st, history))
}

fn resample(sv: &Solver, st: &State, history: Vec<f64>) -> QRKernels {
    let l = &sv.lay;
    let n = l.n;
    let a = l.a;
    let steps = sv.steps;
    let tol = 1e-9 * l.h;
    let mut q = TriGrid::zeros(n, Orientation::Lower);
    let mut qh = q.clone();
    let mut qc = q.clone();
    for i in 0..n {
        let x = l.x(i);
        let at: Vec<f64> = (0..=i).map(|j| a * j as f64 * l.h).collect();
        let kinks = q_kinks(a, x);
        let (xs, qs) = l.q_column(&st.qs, i, st.qs_if[i]);
        let (_, hs) = l.q_column(&st.qh, i, st.qh_if[i]);
        let (_, cs) = l.q_column(&st.qc, i, st.qc_if[i]);
        let vq = resample_kinked(&xs, &qs, &kinks, &at, tol);
        let vh = resample_kinked(&xs, &hs, &kinks, &at, tol);
        let vc = resample_kinked(&xs, &cs, &kinks, &at, tol);
        for (j, &eta) in at.iter().enumerate() {
            q.set(i, j, vq[j] + steps.q(x, eta));
            qh.set(i, j, vh[j]);
            qc.set(i, j, vc[j] + steps.cross(x, eta));
        }
    }
    let mut r = TriGrid::zeros(n, Orientation::Upper);
    let mut rh = r.clone();
    let mut rc = r.clone();
    for i in 0..n {
        let x = l.x(i);
        let at: Vec<f64> = (i..n).map(|j| a * j as f64 * l.h).collect();
        let kinks = [x, 2.0 * a - x];
        let r_if = st.q_if[i] - steps.r(x, a * x);
        let r_top = -steps.r(x, a);
        let (xs, rs) = l.r_column(&st.rs, i, r_if, r_top);
        let (_, hs) = l.r_column(&st.rh, i, st.rh_if[i], st.rh_top[i]);
        let (_, cs) = l.r_column(&st.rc, i, st.rc_if[i] - steps.cross(x, a * x), st.rc_top[i]);
        let vr = resample_kinked(&xs, &rs, &kinks, &at, tol);
        let vh = resample_kinked(&xs, &hs, &kinks, &at, tol);
        let vc = resample_kinked(&xs, &cs, &kinks, &at, tol);
        for (k, &eta) in at.iter().enumerate() {
            let j = i + k;
            r.set(i, j, vr[k] + steps.r(x, eta));
            rh.set(i, j, vh[k] + steps.rh(x, eta));
            rc.set(i, j, vc[k] + steps.cross(x, eta));
        }
    }
    let grid = Grid1D::unit(n).expect("kernel grid has at least 4 nodes");
    QRKernels {
        q,
        r,
        p: Field {
            grid,
            values: st.p.clone(),
        },
        qh,
        qc,
        rh,
        rc,
        convergence: Convergence {
            iterations: history.len(),
            history,
        },
    }
}

/// Norm of the data-only part of the invariant iteration and its a priori bound.
///
/// Returns `(sum of sup norms of the four invariants, (4 s1 + 2 s2)/(eps1 - eps2) * sup|g|)`.
pub fn psi4_bound_check(g: &Field, fp: &FoldedParams, tri_n: usize) -> Result<(f64, f64)> {
    check_inputs(g, fp, tri_n)?;
    if symmetric(fp) {
        return Ok((0.0, 0.0));
    }
    let sv = solver(g, fp, 1.0, 1.0, tri_n);
    let mut st = sv.state();
    sv.sweep(&mut st, false);
    let l = &sv.lay;
    let steps = sv.steps;
    let mut norms = [0.0_f64; 4];
    for i in 0..l.n {
        let x = l.x(i);
        for j in 0..=l.jq[i] {
            let eta = j as f64 * l.h;
            norms[0] = norms[0].max(st.qh.get(i, j).abs());
            norms[1] = norms[1].max((st.qc.get(i, j) + steps.cross(x, eta)).abs());
        }
        for j in l.jr[i]..=l.jtop {
            let eta = j as f64 * l.h;
            norms[2] = norms[2].max((st.rh.get(i, j) + steps.rh(x, eta)).abs());
            norms[3] = norms[3].max((st.rc.get(i, j) + steps.cross(x, eta)).abs());
        }
    }
    let bound = (4.0 * fp.s1() + 2.0 * fp.s2()) / (fp.eps1 - fp.eps2) * g.max_abs();
    Ok((norms.iter().sum(), bound))
}

fn check_pair(n: usize, w: &(Field, Field)) -> Result<()> {
    for f in [&w.0, &w.1] {
        if f.values.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                found: f.values.len(),
            });
        }
    }
    Ok(())
}

/// `omega1 = w1`, `omega2 = w2 - int_0^x (q w1 + p(x-y) w2) - int_x^1 r w1`, trapezoid.
pub fn apply_second_transform(k: &QRKernels, w: &(Field, Field)) -> Result<(Field, Field)> {
    let n = k.q.n();
    check_pair(n, w)?;
    let h = k.q.h();
    let (w1, w2) = (&w.0.values, &w.1.values);
    let mut out = w2.clone();
    for i in 0..n {
        let lower: Vec<f64> = (0..=i).map(|j| k.q.get(i, j) * w1[j] + k.p.values[i - j] * w2[j]).collect();
        let upper: Vec<f64> = (i..n).map(|j| k.r.get(i, j) * w1[j]).collect();
        out[i] -= crate::interp::trapz(&lower, h) + crate::interp::trapz(&upper, h);
    }
    Ok((w.0.clone(), Field::new(w.1.grid.clone(), out)?))
}

/// Invert [`apply_second_transform`]: `w1 = omega1`, then forward substitution for `w2`.
pub fn invert_second_transform(k: &QRKernels, omega: &(Field, Field), tol: f64) -> Result<(Field, Field)> {
    let n = k.q.n();
    check_pair(n, omega)?;
    let h = k.q.h();
    let w1 = &omega.0.values;
    let p = &k.p.values;
    let mut w2 = vec![0.0; n];
    for i in 0..n {
        let lower: Vec<f64> = (0..=i).map(|j| k.q.get(i, j) * w1[j]).collect();
        let upper: Vec<f64> = (i..n).map(|j| k.r.get(i, j) * w1[j]).collect();
        let mut rhs = omega.1.values[i] + crate::interp::trapz(&lower, h) + crate::interp::trapz(&upper, h);
        let mut diag = 1.0;
        if i > 0 {
            rhs += 0.5 * h * p[i] * w2[0];
            for j in 1..i {
                rhs += h * p[i - j] * w2[j];
            }
            diag -= 0.5 * h * p[0];
        }
        if diag.abs() < 1e-14 {
            return Err(Error::Singular("second transform inversion"));
        }
        w2[i] = rhs / diag;
    }
    let out = (omega.0.clone(), Field::new(omega.1.grid.clone(), w2)?);
    let back = apply_second_transform(k, &out)?;
    let err = sup_diff(&back.1.values, &omega.1.values);
    let scale = 1.0 + omega.1.max_abs();
    if err > tol.max(1e-13) * scale {
        return Err(Error::NonConvergence {
            solver: "second transform inversion",
            iterations: 1,
            residual: err,
        });
    }
    Ok(out)
}
