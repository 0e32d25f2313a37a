//! Feedback gains on the original domain and the control laws built from them.

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid1D, TriGrid};
use crate::interp::{linear_uniform, trapz};
use crate::kernel_aux::QRKernels;
use crate::kernel_ctrl::{Row1Kernels, Row2Kernels};
use crate::plant::{gauge_transform, GaugeDirection, PlantSpec};

/// Gains `F1`, `F2` on `[-1, 1]`, discontinuous at the fold node.
///
/// `f1` and `f2` hold the left-branch value at the fold node; the right-branch
/// values there are kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub f1: Field,
    pub f2: Field,
    pub f1_fold_right: f64,
    pub f2_fold_right: f64,
    pub h1: Field,
    pub h2: Field,
    pub y0: f64,
    pub fold_node_index: usize,
}

impl GainTable {
    /// Both one-sided values `(left, right)` of `(F1, F2)` at the fold node.
    pub fn fold_values(&self) -> [(f64, f64); 2] {
        let k = self.fold_node_index;
        [
            (self.f1.values[k], self.f1_fold_right),
            (self.f2.values[k], self.f2_fold_right),
        ]
    }

    /// `int_{-1}^{1} F_j u` by trapezoid, each side of the fold with its own gain value.
    pub fn apply(&self, u: &[f64]) -> Result<(f64, f64)> {
        let n = self.f1.values.len();
        if u.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                found: u.len(),
            });
        }
        Ok((
            split_integral(&self.f1.values, self.f1_fold_right, u, self.fold_node_index, self.f1.grid.h()),
            split_integral(&self.f2.values, self.f2_fold_right, u, self.fold_node_index, self.f2.grid.h()),
        ))
    }

    pub fn grid(&self) -> &Grid1D {
        &self.f1.grid
    }
}

fn split_integral(f: &[f64], right_at_fold: f64, u: &[f64], k0: usize, h: f64) -> f64 {
    let left: Vec<f64> = (0..=k0).map(|k| f[k] * u[k]).collect();
    let mut right: Vec<f64> = (k0..f.len()).map(|k| f[k] * u[k]).collect();
    right[0] = right_at_fold * u[k0];
    trapz(&left, h) + trapz(&right, h)
}

fn row_at_one(t: &TriGrid) -> Vec<f64> {
    let n = t.n();
    (0..n).map(|j| t.get(n - 1, j)).collect()
}

/// Auxiliary gains `h1`, `h2` on `[0, 1]` from the second kernel row and `(p, q)`.
pub fn assemble_h(row1: &Row1Kernels, row2: &Row2Kernels, qr: &QRKernels) -> Result<(Field, Field)> {
    let n = row2.k21.n();
    for m in [row1.k11.n(), row1.k12.n(), qr.q.n(), qr.p.values.len()] {
        if m != n {
            return Err(Error::GridMismatch { expected: n, found: m });
        }
    }
    let h = row2.k21.h();
    let p = &qr.p.values;
    let q1: Vec<f64> = (0..n).map(|z| qr.q.get(n - 1, z)).collect();
    let mut h1 = vec![0.0; n];
    let mut h2 = vec![0.0; n];
    for j in 0..n {
        let f1: Vec<f64> = (j..n)
            .map(|z| p[n - 1 - z] * row2.k21.get(z, j) + q1[z] * row1.k11.get(z, j))
            .collect();
        let f2: Vec<f64> = (j..n)
            .map(|z| p[n - 1 - z] * row2.k22.get(z, j) + q1[z] * row1.k12.get(z, j))
            .collect();
        h1[j] = row2.k21.get(n - 1, j) + q1[j] - trapz(&f1, h);
        h2[j] = row2.k22.get(n - 1, j) + p[n - 1 - j] - trapz(&f2, h);
    }
    let grid = Grid1D::unit(n)?;
    Ok((Field::new(grid.clone(), h1)?, Field::new(grid, h2)?))
}

/// Unfold the kernel slices at `x = 1` and `(h1, h2)` into `F1`, `F2` on `out_grid`.
pub fn assemble_feedback(row1: &Row1Kernels, h: &(Field, Field), y0: f64, out_grid: &Grid1D) -> Result<GainTable> {
    if !(y0 > -1.0 && y0 < 1.0) {
        return Err(invalid(format!("fold point {y0} outside (-1, 1)")));
    }
    if (out_grid.lo() + 1.0).abs() > 1e-12 || (out_grid.hi() - 1.0).abs() > 1e-12 {
        return Err(invalid("gain grid must cover [-1, 1]"));
    }
    let k0 = out_grid
        .node_index(y0, 1e-9)
        .ok_or(Error::NotANode { what: "y0", value: y0 })?;
    let k11 = row_at_one(&row1.k11);
    let k12 = row_at_one(&row1.k12);
    let hk = row1.k11.h();
    let (l, r) = (1.0 + y0, 1.0 - y0);
    let eval = |v: &[f64], x: f64| linear_uniform(v, 0.0, hk, x);
    let hh = h.0.grid.h();
    let evalh = |v: &[f64], x: f64| linear_uniform(v, 0.0, hh, x);
    let mut f1 = vec![0.0; out_grid.n()];
    let mut f2 = vec![0.0; out_grid.n()];
    for (k, &y) in out_grid.nodes().iter().enumerate() {
        if k <= k0 {
            let x = ((y0 - y) / l).clamp(0.0, 1.0);
            f1[k] = eval(&k11, x) / l;
            f2[k] = evalh(&h.0.values, x) / l;
        } else {
            let x = ((y - y0) / r).clamp(0.0, 1.0);
            f1[k] = eval(&k12, x) / r;
            f2[k] = evalh(&h.1.values, x) / r;
        }
    }
    Ok(GainTable {
        f1: Field::new(out_grid.clone(), f1)?,
        f2: Field::new(out_grid.clone(), f2)?,
        f1_fold_right: k12[0] / r,
        f2_fold_right: h.1.values[0] / r,
        h1: h.0.clone(),
        h2: h.1.clone(),
        y0,
        fold_node_index: k0,
    })
}

fn feedback(ubar: &Field, gt: &GainTable, spec: &PlantSpec) -> Result<(f64, f64)> {
    ubar.grid.check_same(gt.grid())?;
    let u = gauge_transform(ubar, spec, GaugeDirection::Forward)?;
    let (c1, c2) = gt.apply(&u.values)?;
    let back = spec.gauge_factor(&ubar.grid);
    Ok((c1, c2 / back[back.len() - 1]))
}

/// `(U1bar, U2bar)` from the full state.
pub fn state_feedback(ubar: &Field, gt: &GainTable, spec: &PlantSpec) -> Result<(f64, f64)> {
    feedback(ubar, gt, spec)
}

/// `(U1bar, U2bar)` from the state estimate.
pub fn output_feedback(uhat_bar: &Field, gt: &GainTable, spec: &PlantSpec) -> Result<(f64, f64)> {
    feedback(uhat_bar, gt, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_ctrl::{Convergence, Row1Kernels};
    use crate::grid::Orientation;

    fn zero_row1(n: usize) -> Row1Kernels {
        let z = TriGrid::zeros(n, Orientation::Lower);
        Row1Kernels {
            k11: z.clone(),
            k12: z.clone(),
            kc11: z.clone(),
            kc12: z,
            a: 1.0,
            convergence: Convergence {
                iterations: 0,
                history: vec![],
            },
        }
    }

    fn constant_table(v: f64, n: usize, y0: f64) -> GainTable {
        let g = Grid1D::new(-1.0, 1.0, n).unwrap();
        let k0 = g.node_index(y0, 1e-9).unwrap();
        let unit = Grid1D::unit(5).unwrap();
        GainTable {
            f1: Field::from_fn(g.clone(), |_| v),
            f2: Field::from_fn(g, |_| v),
            f1_fold_right: v,
            f2_fold_right: v,
            h1: Field::zeros(unit.clone()),
            h2: Field::zeros(unit),
            y0,
            fold_node_index: k0,
        }
    }

    #[test]
    fn zero_kernels_give_zero_gains() {
        let r1 = zero_row1(21);
        let h = (Field::zeros(Grid1D::unit(21).unwrap()), Field::zeros(Grid1D::unit(21).unwrap()));
        let gt = assemble_feedback(&r1, &h, -0.2, &Grid1D::new(-1.0, 1.0, 41).unwrap()).unwrap();
        assert!(gt.f1.values.iter().chain(&gt.f2.values).all(|&v| v == 0.0));
        assert!(assemble_feedback(&r1, &h, -0.23, &Grid1D::new(-1.0, 1.0, 41).unwrap()).is_err());
    }

    #[test]
    fn constant_gain_integrates_length() {
        let gt = constant_table(1.0, 41, -0.5);
        let spec = PlantSpec::table1(-0.5, 0.0).unwrap();
        let u = Field::from_fn(gt.grid().clone(), |_| 1.0);
        let (a, b) = state_feedback(&u, &gt, &spec).unwrap();
        assert!((a - 2.0).abs() < 1e-14 && (b - 2.0).abs() < 1e-14);
        let z = Field::zeros(gt.grid().clone());
        assert_eq!(output_feedback(&z, &gt, &spec).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn refinement_is_second_order() {
        let spec = PlantSpec::table1(-0.5, 0.0).unwrap();
        let exact = {
            // int_{-1}^{1} cos(y) e^y dy
            let f = |y: f64| 0.5 * y.exp() * (y.cos() + y.sin());
            f(1.0) - f(-1.0)
        };
        let err = |n: usize| {
            let mut gt = constant_table(0.0, n, -0.5);
            gt.f1 = Field::from_fn(gt.grid().clone(), f64::cos);
            gt.f1_fold_right = (-0.5_f64).cos();
            let u = Field::from_fn(gt.grid().clone(), f64::exp);
            (state_feedback(&u, &gt, &spec).unwrap().0 - exact).abs()
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }
}
