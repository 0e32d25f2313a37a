//! Centered finite-difference residuals of the kernel equations.
//!
//! Nodes whose five-point stencil straddles a known kink or jump line are
//! left out; the solutions are only piecewise smooth there.

use crate::fold::FoldedParams;
use crate::grid::{Field, Orientation, TriGrid};
use crate::interp::cubic_uniform;
use crate::kernel_obs::ObserverKernel;

/// Maximum absolute residual together with the number of nodes it was taken over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub max_abs: f64,
    pub nodes: usize,
}

/// Per-entry maxima of the matrix kernel residual, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixResidual {
    pub entries: [f64; 4],
    pub nodes: usize,
}

impl MatrixResidual {
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, v| m.max(*v))
    }
}

fn second_x(t: &TriGrid, i: usize, j: usize, h2: f64) -> f64 {
    (t.get(i + 1, j) - 2.0 * t.get(i, j) + t.get(i - 1, j)) / h2
}

fn second_y(t: &TriGrid, i: usize, j: usize, h2: f64) -> f64 {
    (t.get(i, j + 1) - 2.0 * t.get(i, j) + t.get(i, j - 1)) / h2
}

fn near_line(x: f64, y: f64, lines: &[(f64, f64)], band: f64) -> bool {
    lines
        .iter()
        .any(|&(m, b)| (y - (m * x + b)).abs() < band * m.abs().max(1.0))
}

fn near_point(x: f64, y: f64, points: &[(f64, f64)], radius: f64) -> bool {
    points.iter().any(|&(px, py)| (x - px).hypot(y - py) < radius)
}

/// Nodes of a triangle whose five-point stencil is interior, away from the
/// lines `y = m x + b` and from the points where such lines meet.
fn interior(
    n: usize,
    orientation: Orientation,
    lines: &[(f64, f64)],
    points: &[(f64, f64)],
    band: f64,
) -> Vec<(usize, usize)> {
    let h = 1.0 / (n - 1) as f64;
    let mut out = Vec::new();
    for i in 1..n - 1 {
        let js = match orientation {
            Orientation::Lower => 1..i,
            Orientation::Upper => i + 1..n - 1,
        };
        for j in js {
            let (x, y) = (i as f64 * h, j as f64 * h);
            if !near_line(x, y, lines, band * h) && !near_point(x, y, points, 2.0 * band * h) {
                out.push((i, j));
            }
        }
    }
    out
}

fn lower_interior(n: usize, lines: &[(f64, f64)], band: f64) -> Vec<(usize, usize)> {
    interior(n, Orientation::Lower, lines, &[], band)
}

/// Residual of the matrix kernel equation, all four entries.
pub fn k_residual(
    k: &[[TriGrid; 2]; 2],
    fp: &FoldedParams,
    c: [f64; 2],
    g: &[f64],
) -> MatrixResidual {
    let n = k[0][0].n();
    let h = k[0][0].h();
    let h2 = h * h;
    let (e1, e2) = (fp.eps1, fp.eps2);
    let lines = if fp.a < 1.0 - 1e-12 { vec![(fp.a, 0.0)] } else { vec![] };
    let nodes = lower_interior(n, &lines, 2.0);
    let mut worst = [0.0_f64; 4];
    for &(i, j) in &nodes {
        let y = j as f64 * h;
        let l1 = fp.lambda1_at(y);
        let l2 = fp.lambda2_at(y);
        let r11 = e1 * (second_x(&k[0][0], i, j, h2) - second_y(&k[0][0], i, j, h2)) - (l1 + c[0]) * k[0][0].get(i, j);
        let r12 = e1 * second_x(&k[0][1], i, j, h2) - e2 * second_y(&k[0][1], i, j, h2) - (l2 + c[0]) * k[0][1].get(i, j);
        let r21 = e2 * second_x(&k[1][0], i, j, h2) - e1 * second_y(&k[1][0], i, j, h2) - (l1 + c[1]) * k[1][0].get(i, j)
            + g[i] * k[0][0].get(i, j);
        let r22 = e2 * (second_x(&k[1][1], i, j, h2) - second_y(&k[1][1], i, j, h2)) - (l2 + c[1]) * k[1][1].get(i, j)
            + g[i] * k[0][1].get(i, j);
        for (w, r) in worst.iter_mut().zip([r11, r12, r21, r22]) {
            *w = w.max(r.abs());
        }
    }
    MatrixResidual {
        entries: worst,
        nodes: nodes.len(),
    }
}

/// Residual of the `q` equation `eps2 q_xx - eps1 q_yy = (c2 - c1) q + g(y) p(x - y)`.
pub fn q_residual(q: &TriGrid, p: &Field, g: &Field, fp: &FoldedParams, c: [f64; 2]) -> Residual {
    let h = q.h();
    let h2 = h * h;
    let a = fp.a;
    // jump lines of the invariants and the kink of p(x - y)
    let lines = [(-1.0 / a, 2.0), (1.0, -2.0 * a)];
    let xc = 2.0 * a / (1.0 + a);
    let nodes = interior(q.n(), Orientation::Lower, &lines, &[(xc, xc)], 4.0);
    let mut worst = 0.0_f64;
    for &(i, j) in &nodes {
        let (x, y) = (i as f64 * h, j as f64 * h);
        let pv = cubic_uniform(&p.values, 0.0, h, x - y);
        let r = fp.eps2 * second_x(q, i, j, h2) - fp.eps1 * second_y(q, i, j, h2)
            - (c[1] - c[0]) * q.get(i, j)
            - g.values[j] * pv;
        worst = worst.max(r.abs());
    }
    Residual {
        max_abs: worst,
        nodes: nodes.len(),
    }
}

/// Residual of the `r` equation `eps2 r_xx - eps1 r_yy = (c2 - c1) r` on the upper triangle.
pub fn r_residual(r: &TriGrid, fp: &FoldedParams, c: [f64; 2]) -> Residual {
    let h = r.h();
    let h2 = h * h;
    let a = fp.a;
    let lines = [(1.0 / a, 0.0), (-1.0 / a, 2.0)];
    let xc = 2.0 * a / (1.0 + a);
    let nodes = interior(r.n(), Orientation::Upper, &lines, &[(xc, xc), (a, 1.0)], 4.0);
    let mut worst = 0.0_f64;
    for &(i, j) in &nodes {
        let rxx = (r.get(i + 1, j) - 2.0 * r.get(i, j) + r.get(i - 1, j)) / h2;
        let ryy = (r.get(i, j + 1) - 2.0 * r.get(i, j) + r.get(i, j - 1)) / h2;
        let res = fp.eps2 * rxx - fp.eps1 * ryy - (c[1] - c[0]) * r.get(i, j);
        worst = worst.max(res.abs());
    }
    Residual {
        max_abs: worst,
        nodes: nodes.len(),
    }
}

/// Residual of the observer kernel equation `Phi_xx - Phi_yy + mu(x) Phi`.
pub fn obs_residual(k: &ObserverKernel) -> Residual {
    let phi = &k.phi_kernel;
    let h = phi.h();
    let h2 = h * h;
    let nodes = lower_interior(phi.n(), &[], 0.0);
    let mut worst = 0.0_f64;
    for &(i, j) in &nodes {
        let r = second_x(phi, i, j, h2) - second_y(phi, i, j, h2) + k.mu(i as f64 * h) * phi.get(i, j);
        worst = worst.max(r.abs());
    }
    Residual {
        max_abs: worst,
        nodes: nodes.len(),
    }
}
