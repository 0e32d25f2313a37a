//! Folding maps between `(-1, 1)` and the pair of half-domains on `[0, 1]`.

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid1D};
use crate::interp;
use crate::plant::{FoldSide, PlantSpec};

/// Parameters of the folded 2x2 system about one folding point.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedParams {
    pub eps1: f64,
    pub eps2: f64,
    pub a: f64,
    pub fold_point: f64,
    /// `lambda(y0 - (1+y0) x)` on a uniform grid over `[0, 1]`.
    pub lambda1: Vec<f64>,
    /// `lambda(y0 + (1-y0) x)` on the same grid.
    pub lambda2: Vec<f64>,
}

impl FoldedParams {
    pub fn s1(&self) -> f64 {
        self.eps1.sqrt()
    }

    pub fn s2(&self) -> f64 {
        self.eps2.sqrt()
    }

    pub fn m(&self) -> usize {
        self.lambda1.len()
    }

    pub fn lambda1_at(&self, x: f64) -> f64 {
        interp::cubic_uniform(&self.lambda1, 0.0, 1.0 / (self.m() - 1) as f64, x)
    }

    pub fn lambda2_at(&self, x: f64) -> f64 {
        interp::cubic_uniform(&self.lambda2, 0.0, 1.0 / (self.m() - 1) as f64, x)
    }

    /// Build directly from constants, for tests and symmetric studies.
    pub fn from_parts(eps1: f64, eps2: f64, a: f64, lambda1: Vec<f64>, lambda2: Vec<f64>) -> Result<Self> {
        if !(eps1 > 0.0 && eps2 > 0.0 && a > 0.0 && a <= 1.0) {
            return Err(invalid("folded parameters need eps1, eps2 > 0 and a in (0, 1]"));
        }
        if lambda1.len() != lambda2.len() || lambda1.len() < 4 {
            return Err(invalid("reaction samples must share a grid with at least 4 nodes"));
        }
        Ok(Self {
            eps1,
            eps2,
            a,
            fold_point: (a - 1.0) / (a + 1.0),
            lambda1,
            lambda2,
        })
    }
}

/// Folded-system parameters about `y0` (control) or `yhat0` (observer), reaction sampled on `m` nodes.
pub fn folded_params(spec: &PlantSpec, which: FoldSide, m: usize) -> Result<FoldedParams> {
    let y0 = spec.fold_point(which);
    if !(y0 > -1.0 && y0 < 1.0) {
        return Err(invalid(format!("fold point {y0} outside (-1, 1)")));
    }
    if m < 4 {
        return Err(invalid(format!("need at least 4 reaction samples, got {m}")));
    }
    let h = 1.0 / (m - 1) as f64;
    let lambda1 = (0..m).map(|k| spec.lambda(y0 - (1.0 + y0) * k as f64 * h)).collect();
    let lambda2 = (0..m).map(|k| spec.lambda(y0 + (1.0 - y0) * k as f64 * h)).collect();
    Ok(FoldedParams {
        eps1: spec.eps / (1.0 + y0).powi(2),
        eps2: spec.eps / (1.0 - y0).powi(2),
        a: (1.0 + y0) / (1.0 - y0),
        fold_point: y0,
        lambda1,
        lambda2,
    })
}

/// Split `u` at `y0` into the two folded halves on `[0, 1]`.
///
/// Both halves are resampled onto a common uniform grid whose node count
/// matches the larger side of the input grid.
pub fn fold(u: &Field, y0: f64) -> Result<(Field, Field)> {
    let g = &u.grid;
    if !(y0 > g.lo() && y0 < g.hi()) {
        return Err(invalid(format!("fold point {y0} outside ({}, {})", g.lo(), g.hi())));
    }
    let k0 = g.node_index(y0, 1e-8).ok_or(Error::NotANode { what: "y0", value: y0 })?;
    let left = k0;
    let right = g.n() - 1 - k0;
    if left < 2 || right < 2 {
        return Err(invalid("fold needs at least 3 nodes on each side of the fold point"));
    }
    let m = left.max(right) + 1;
    let out = Grid1D::unit(m)?;
    let lo = g.lo();
    let hi = g.hi();
    let u1 = Field::from_fn(out.clone(), |x| u.eval_linear(y0 - (y0 - lo) * x));
    let u2 = Field::from_fn(out, |x| u.eval_linear(y0 + (hi - y0) * x));
    Ok((u1, u2))
}

/// Reassemble a field on `target` from the folded halves.
pub fn unfold(u1: &Field, u2: &Field, y0: f64, target: &Grid1D) -> Result<Field> {
    let tol = 1e-8 * (1.0 + u1.max_abs().max(u2.max_abs()));
    let jump = (u1.values[0] - u2.values[0]).abs();
    if jump > tol {
        return Err(Error::Continuity { jump, tol });
    }
    let lo = target.lo();
    let hi = target.hi();
    if !(y0 > lo && y0 < hi) {
        return Err(invalid(format!("fold point {y0} outside ({lo}, {hi})")));
    }
    Ok(Field::from_fn(target.clone(), |y| {
        if y <= y0 {
            u1.eval_linear((y0 - y) / (y0 - lo))
        } else {
            u2.eval_linear((y - y0) / (hi - y0))
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Profile;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(-1.0, 1.0, n).unwrap()
    }

    #[test]
    fn symmetric_fold_of_linear_and_even_fields() {
        let (u1, u2) = fold(&Field::from_fn(grid(101), |y| y), 0.0).unwrap();
        for (k, &x) in u1.grid.nodes().iter().enumerate() {
            assert!((u1.values[k] + x).abs() < 1e-14);
            assert!((u2.values[k] - x).abs() < 1e-14);
        }
        let (v1, v2) = fold(&Field::from_fn(grid(101), |y| y * y), 0.0).unwrap();
        for k in 0..v1.values.len() {
            assert!((v1.values[k] - v2.values[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn biased_fold_point_values() {
        let (u1, u2) = fold(&Field::from_fn(grid(201), |y| y), -0.5).unwrap();
        assert!((u1.eval_linear(0.5) + 0.75).abs() < 1e-12);
        assert!((u2.eval_linear(0.5) - 0.25).abs() < 1e-12);
        assert!((u1.values[0] - u2.values[0]).abs() < 1e-15);
    }

    #[test]
    fn fold_rejects_bad_points() {
        let u = Field::from_fn(grid(101), |y| y);
        assert!(fold(&u, 1.0).is_err());
        assert!(fold(&u, -0.98).is_err());
        assert!(fold(&u, 0.013).is_err());
    }

    #[test]
    fn round_trip_sine() {
        let g = grid(201);
        let u = Field::from_fn(g.clone(), |y| (std::f64::consts::PI * y).sin());
        let (u1, u2) = fold(&u, -0.05).unwrap();
        let back = unfold(&u1, &u2, -0.05, &g).unwrap();
        let err = back
            .values
            .iter()
            .zip(&u.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-3, "round trip error {err}");
    }

    #[test]
    fn unfold_zero_and_discontinuous() {
        let g1 = Grid1D::unit(11).unwrap();
        let z = Field::zeros(g1.clone());
        let out = unfold(&z, &z, -0.2, &grid(21)).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
        let mut one = Field::zeros(g1);
        one.values[0] = 1.0;
        assert!(matches!(unfold(&one, &z, -0.2, &grid(21)), Err(Error::Continuity { .. })));
    }

    #[test]
    fn folded_parameters_reference_values() {
        let spec = PlantSpec::table1(-0.30, 0.05).unwrap();
        let fp = folded_params(&spec, FoldSide::Control, 101).unwrap();
        assert!((fp.eps1 - 1.0 / 0.49).abs() < 1e-12);
        assert!((fp.eps2 - 1.0 / 1.69).abs() < 1e-12);
        assert!((fp.a - 0.7 / 1.3).abs() < 1e-12);
        let spec = PlantSpec::table1(-0.05, 0.05).unwrap();
        let fp = folded_params(&spec, FoldSide::Control, 101).unwrap();
        assert!((fp.lambda1[0] - 6.09).abs() < 1e-12);
        assert!((fp.lambda2[0] - 6.09).abs() < 1e-12);
        let sym = PlantSpec::new(1.0, Profile::Constant(0.0), Profile::table1(), 0.0, 0.0).unwrap();
        let fp = folded_params(&sym, FoldSide::Control, 11).unwrap();
        assert_eq!((fp.eps1, fp.eps2, fp.a), (1.0, 1.0, 1.0));
    }

    #[test]
    fn observer_branch_uses_measurement_point() {
        let spec = PlantSpec::table1(-0.05, 0.05).unwrap();
        let fp = folded_params(&spec, FoldSide::Observer, 11).unwrap();
        assert!((fp.eps1 - 1.0 / 1.05_f64.powi(2)).abs() < 1e-12);
        assert!(fp.a > 1.0);
    }
}
