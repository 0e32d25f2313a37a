//! End-to-end kernel synthesis for a plant: control kernels, gains, observer kernels.

use crate::error::{invalid, Error, Result};
use crate::fold::{folded_params, FoldedParams};
use crate::gains::{assemble_feedback, assemble_h, GainTable};
use crate::grid::{Field, Grid1D};
use crate::kernel_aux::{solve_qr, QRKernels};
use crate::kernel_ctrl::{solve_row1, solve_row2, KernelMatrix, Row1Kernels, Row2Kernels};
use crate::kernel_obs::{solve_observer_kernel, ObserverKernel};
use crate::plant::{FoldSide, PlantSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tri_n: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tri_n: 201,
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.tri_n < 11 {
            return Err(invalid(format!("tri_n must be at least 11, got {}", self.tri_n)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("need tol > 0 and max_iter > 0"));
        }
        Ok(())
    }

    /// Reaction samples used for the folded coefficients.
    fn lambda_nodes(&self) -> usize {
        4 * (self.tri_n - 1) + 1
    }
}

/// All control-side kernels for one folding point.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlKernels {
    pub fp: FoldedParams,
    pub c1: f64,
    pub c2: f64,
    pub row1: Row1Kernels,
    pub row2: Row2Kernels,
    pub qr: QRKernels,
    pub h: (Field, Field),
}

impl ControlKernels {
    pub fn matrix(&self) -> KernelMatrix {
        KernelMatrix::from_rows(&self.row1, &self.row2)
    }

    pub fn gains(&self, out_grid: &Grid1D) -> Result<GainTable> {
        assemble_feedback(&self.row1, &self.h, self.fp.fold_point, out_grid)
    }
}

pub fn solve_control_kernels(spec: &PlantSpec, c1: f64, c2: f64, s: &SolverSettings) -> Result<ControlKernels> {
    spec.validate()?;
    s.validate()?;
    let fp = folded_params(spec, FoldSide::Control, s.lambda_nodes())?;
    let row1 = solve_row1(&fp, c1, s.tri_n, s.tol, s.max_iter)?;
    let row2 = solve_row2(&row1, &fp, c2, s.tri_n, s.tol, s.max_iter)?;
    let qr = solve_qr(&row2.g_trace, &fp, c1, c2, s.tri_n, s.tol, s.max_iter)?;
    let h = assemble_h(&row1, &row2, &qr)?;
    Ok(ControlKernels {
        fp,
        c1,
        c2,
        row1,
        row2,
        qr,
        h,
    })
}

/// Observer kernels about `yhat0` on `tri_n` nodes per half.
pub fn solve_observer_kernels(spec: &PlantSpec, cc1: f64, cc2: f64, s: &SolverSettings) -> Result<[ObserverKernel; 2]> {
    s.validate()?;
    observer_pair(spec, cc1, cc2, [s.tri_n, s.tri_n], s)
}

/// Observer kernels sampled on the plant nodes of each half of `grid`, as the simulator needs.
pub fn observer_kernels_for_grid(
    spec: &PlantSpec,
    grid: &Grid1D,
    cc1: f64,
    cc2: f64,
    s: &SolverSettings,
) -> Result<[ObserverKernel; 2]> {
    let k0 = grid
        .node_index(spec.yhat0, 1e-9)
        .ok_or(Error::NotANode { what: "yhat0", value: spec.yhat0 })?;
    observer_pair(spec, cc1, cc2, [k0 + 1, grid.n() - k0], s)
}

fn observer_pair(spec: &PlantSpec, cc1: f64, cc2: f64, sizes: [usize; 2], s: &SolverSettings) -> Result<[ObserverKernel; 2]> {
    spec.validate()?;
    let m = 4 * (sizes[0].max(sizes[1]) - 1) + 1;
    let fp = folded_params(spec, FoldSide::Observer, m)?;
    let unit = Grid1D::unit(m)?;
    let l1 = Field::new(unit.clone(), fp.lambda1.clone())?;
    let l2 = Field::new(unit, fp.lambda2.clone())?;
    Ok([
        solve_observer_kernel(&l1, fp.eps1, cc1, sizes[0], s.tol, s.max_iter)?,
        solve_observer_kernel(&l2, fp.eps2, cc2, sizes[1], s.tol, s.max_iter)?,
    ])
}
