//! Uniform 1-D grids and packed triangular grids on the unit square.

use crate::error::{invalid, Error, Result};
use crate::interp;

/// Uniform grid on `[lo, hi]` with inclusive endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("grid needs at least 3 nodes, got {n}")));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(invalid(format!("grid interval [{lo}, {hi}] is empty")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        nodes[n - 1] = hi;
        Ok(Self { lo, hi, nodes })
    }

    /// Unit interval `[0, 1]`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.n() - 1) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn x(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Index of the node at `y`, if `y` lies within `tol * h` of one.
    pub fn node_index(&self, y: f64, tol: f64) -> Option<usize> {
        let s = (y - self.lo) / self.h();
        let k = s.round();
        if k < 0.0 || k > (self.n() - 1) as f64 || (s - k).abs() > tol {
            None
        } else {
            Some(k as usize)
        }
    }

    /// Index of the node nearest to `y`, clamped to the grid.
    pub fn nearest(&self, y: f64) -> usize {
        let s = ((y - self.lo) / self.h()).round();
        s.clamp(0.0, (self.n() - 1) as f64) as usize
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.n() == other.n()
            && (self.lo - other.lo).abs() <= 1e-12 * (1.0 + self.lo.abs())
            && (self.hi - other.hi).abs() <= 1e-12 * (1.0 + self.hi.abs())
    }

    pub fn check_same(&self, other: &Grid1D) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.n(),
                found: other.n(),
            })
        }
    }
}

/// A sampled scalar field on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::GridMismatch {
                expected: grid.n(),
                found: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&y| f(y)).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Grid1D) -> Self {
        let n = grid.n();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Piecewise-linear evaluation, clamped to the grid interval.
    pub fn eval_linear(&self, y: f64) -> f64 {
        interp::linear_uniform(&self.values, self.grid.lo(), self.grid.h(), y)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Which triangle of the unit square a [`TriGrid`] covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `0 <= y <= x <= 1`
    Lower,
    /// `0 <= x <= y <= 1`
    Upper,
}

/// Packed storage of node values on a triangle of the uniform `n x n` grid over `[0,1]^2`.
///
/// Node `(i, j)` sits at `(x_i, y_j) = (i h, j h)` with `h = 1/(n-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriGrid {
    n: usize,
    orientation: Orientation,
    values: Vec<f64>,
}

impl TriGrid {
    pub fn zeros(n: usize, orientation: Orientation) -> Self {
        assert!(n >= 2, "triangular grid needs at least 2 nodes per side");
        Self {
            n,
            orientation,
            values: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn from_fn(n: usize, orientation: Orientation, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut g = Self::zeros(n, orientation);
        let h = g.h();
        for (i, j) in g.indices().collect::<Vec<_>>() {
            let v = f(i as f64 * h, j as f64 * h);
            g.set(i, j, v);
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn coord(&self, k: usize) -> f64 {
        if k == self.n - 1 {
            1.0
        } else {
            k as f64 * self.h()
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.n
            && j < self.n
            && match self.orientation {
                Orientation::Lower => j <= i,
                Orientation::Upper => i <= j,
            }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.contains(i, j), "({i},{j}) outside triangle");
        match self.orientation {
            Orientation::Lower => i * (i + 1) / 2 + j,
            Orientation::Upper => i * self.n - i * i.saturating_sub(1) / 2 + (j - i),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.values[k] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row-major `(i, j)` pairs of the stored triangle.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        let o = self.orientation;
        (0..n).flat_map(move |i| {
            let (lo, hi) = match o {
                Orientation::Lower => (0, i),
                Orientation::Upper => (i, n - 1),
            };
            (lo..=hi).map(move |j| (i, j))
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// L2 norm over the triangle by nested trapezoid (columns, then across `x`).
    pub fn l2_norm(&self) -> f64 {
        let h = self.h();
        let inner: Vec<f64> = (0..self.n)
            .map(|i| {
                let col: Vec<f64> = self.column(i).iter().map(|v| v * v).collect();
                interp::trapz(&col, h)
            })
            .collect();
        interp::trapz(&inner, h).max(0.0).sqrt()
    }

    /// Values along the slice `x = x_i`, indexed by `j` over the stored range.
    pub fn column(&self, i: usize) -> Vec<f64> {
        let (lo, hi) = self.column_range(i);
        (lo..=hi).map(|j| self.get(i, j)).collect()
    }

    /// Stored `j` range of column `i`.
    pub fn column_range(&self, i: usize) -> (usize, usize) {
        match self.orientation {
            Orientation::Lower => (0, i),
            Orientation::Upper => (i, self.n - 1),
        }
    }

    /// Values along the diagonal `x = y`.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Piecewise-linear interpolation inside the stored triangle.
    ///
    /// Cells cut by the diagonal are split and interpolated linearly on the
    /// half that belongs to the triangle.
    pub fn interp(&self, x: f64, y: f64) -> f64 {
        let (x, y) = match self.orientation {
            Orientation::Lower => (x, y),
            Orientation::Upper => (y, x),
        };
        let get = |i: usize, j: usize| match self.orientation {
            Orientation::Lower => self.get(i, j),
            Orientation::Upper => self.get(j, i),
        };
        let h = self.h();
        let last = self.n - 1;
        let x = x.clamp(0.0, 1.0);
        let y = y.clamp(0.0, x);
        let i = ((x / h).floor() as usize).min(last - 1);
        let j = ((y / h).floor() as usize).min(i);
        let tx = (x / h - i as f64).clamp(0.0, 1.0);
        let ty = (y / h - j as f64).clamp(0.0, 1.0);
        if j < i {
            let v00 = get(i, j);
            let v10 = get(i + 1, j);
            let v01 = get(i, j + 1);
            let v11 = get(i + 1, j + 1);
            (1.0 - tx) * (1.0 - ty) * v00 + tx * (1.0 - ty) * v10 + (1.0 - tx) * ty * v01 + tx * ty * v11
        } else {
            // triangle (i,i), (i+1,i), (i+1,i+1) with ty <= tx
            let ty = ty.min(tx);
            let v00 = get(i, i);
            let v10 = get(i + 1, i);
            let v11 = get(i + 1, i + 1);
            v00 + tx * (v10 - v00) + ty * (v11 - v10)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_construction_and_lookup() {
        let g = Grid1D::new(-1.0, 1.0, 41).unwrap();
        assert_eq!(g.h(), 0.05);
        assert_eq!(g.x(40), 1.0);
        assert_eq!(g.node_index(-0.05, 1e-9), Some(19));
        assert_eq!(g.node_index(-0.06, 1e-9), None);
        assert_eq!(g.nearest(7.0), 40);
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        assert!(Grid1D::new(1.0, 1.0, 5).is_err());
        assert!(g.check_same(&Grid1D::unit(41).unwrap()).is_err());
        assert!(Field::new(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn packed_triangles_visit_every_node_once() {
        for o in [Orientation::Lower, Orientation::Upper] {
            let mut t = TriGrid::zeros(7, o);
            let idx: Vec<_> = t.indices().collect();
            assert_eq!(idx.len(), 28);
            for (k, &(i, j)) in idx.iter().enumerate() {
                t.set(i, j, k as f64);
            }
            for (k, &(i, j)) in idx.iter().enumerate() {
                assert_eq!(t.get(i, j), k as f64);
            }
        }
    }

    #[test]
    fn triangle_l2_norm_of_constant() {
        let t = TriGrid::from_fn(41, Orientation::Lower, |_, _| 2.0);
        assert!((t.l2_norm() - 2.0 * 0.5f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn interp_reproduces_bilinear_functions(x in 0.0f64..1.0, t in 0.0f64..1.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let f = |x: f64, y: f64| 1.0 + a * x + b * y;
            let y = t * x;
            let lo = TriGrid::from_fn(17, Orientation::Lower, f);
            prop_assert!((lo.interp(x, y) - f(x, y)).abs() < 1e-12);
            let up = TriGrid::from_fn(17, Orientation::Upper, f);
            prop_assert!((up.interp(y, x) - f(y, x)).abs() < 1e-12);
        }
    }
}
