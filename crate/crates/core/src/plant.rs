//! Plant description and the advection gauge transform.

use crate::error::{invalid, Result};
use crate::grid::{Field, Grid1D};
use crate::interp;

/// A scalar coefficient on an interval, either closed form or sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// Coefficients with the highest degree first.
    Polynomial(Vec<f64>),
    /// Uniform samples, evaluated by four-point Lagrange interpolation.
    Sampled(Field),
}

impl Profile {
    /// Reaction profile used by the reference scenario: `-4y^2 - 2y + 6`.
    pub fn table1() -> Self {
        Profile::Polynomial(vec![-4.0, -2.0, 6.0])
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Polynomial(c) => c.iter().fold(0.0, |acc, &a| acc * y + a),
            Profile::Sampled(f) => interp::cubic_uniform(&f.values, f.grid.lo(), f.grid.h(), y),
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            Profile::Constant(_) => 0.0,
            Profile::Polynomial(c) => {
                let d = c.len().saturating_sub(1);
                c.iter()
                    .take(d)
                    .enumerate()
                    .fold(0.0, |acc, (k, &a)| acc * y + a * (d - k) as f64)
            }
            Profile::Sampled(f) => {
                let h = 1e-3 * f.grid.h();
                (self.eval(y + h) - self.eval(y - h)) / (2.0 * h)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Constant(c) => *c == 0.0,
            Profile::Polynomial(c) => c.iter().all(|&a| a == 0.0),
            Profile::Sampled(f) => f.values.iter().all(|&a| a == 0.0),
        }
    }

    pub fn sample(&self, grid: &Grid1D) -> Field {
        Field::from_fn(grid.clone(), |y| self.eval(y))
    }
}

/// Which folding point a derived quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldSide {
    /// The control folding point `y0`.
    Control,
    /// The measurement point `yhat0`.
    Observer,
}

/// Reaction-diffusion plant on `(-1, 1)` with folding and measurement points.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub eps: f64,
    pub nu: Profile,
    pub lambda_bar: Profile,
    pub y0: f64,
    pub yhat0: f64,
}

impl PlantSpec {
    pub fn new(eps: f64, nu: Profile, lambda_bar: Profile, y0: f64, yhat0: f64) -> Result<Self> {
        let s = Self {
            eps,
            nu,
            lambda_bar,
            y0,
            yhat0,
        };
        s.validate()?;
        Ok(s)
    }

    /// The reference scenario with no advection.
    pub fn table1(y0: f64, yhat0: f64) -> Result<Self> {
        Self::new(1.0, Profile::Constant(0.0), Profile::table1(), y0, yhat0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.y0 > -1.0 && self.y0 <= 0.0) {
            return Err(invalid(format!("y0 must lie in (-1, 0], got {}", self.y0)));
        }
        if !(self.yhat0 > -1.0 && self.yhat0 < 1.0) {
            return Err(invalid(format!("yhat0 must lie in (-1, 1), got {}", self.yhat0)));
        }
        Ok(())
    }

    pub fn fold_point(&self, side: FoldSide) -> f64 {
        match side {
            FoldSide::Control => self.y0,
            FoldSide::Observer => self.yhat0,
        }
    }

    /// Reaction coefficient after the gauge transform removes advection.
    pub fn lambda(&self, y: f64) -> f64 {
        if self.nu.is_zero() {
            return self.lambda_bar.eval(y);
        }
        let nu = self.nu.eval(y);
        self.lambda_bar.eval(y) - 0.5 * self.nu.derivative(y) - nu * nu / (4.0 * self.eps)
    }

    /// Gauge factor `exp(int_{-1}^{y} nu/(2 eps))` at every node of `grid`.
    pub fn gauge_factor(&self, grid: &Grid1D) -> Vec<f64> {
        if self.nu.is_zero() {
            return vec![1.0; grid.n()];
        }
        let integrand: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&y| self.nu.eval(y) / (2.0 * self.eps))
            .collect();
        interp::cumtrapz(&integrand, grid.h())
            .into_iter()
            .map(f64::exp)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeDirection {
    /// `u = exp(int nu/(2 eps)) ubar`
    Forward,
    /// `ubar = exp(-int nu/(2 eps)) u`
    Inverse,
}

/// Apply the advection-removing gauge transform on a grid over `[-1, 1]`.
pub fn gauge_transform(ubar: &Field, spec: &PlantSpec, direction: GaugeDirection) -> Result<Field> {
    if !(spec.eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {}", spec.eps)));
    }
    if (ubar.grid.lo() + 1.0).abs() > 1e-12 || (ubar.grid.hi() - 1.0).abs() > 1e-12 {
        return Err(invalid("gauge transform expects a grid over [-1, 1]"));
    }
    if let Profile::Sampled(f) = &spec.nu {
        ubar.grid.check_same(&f.grid)?;
    }
    let factor = spec.gauge_factor(&ubar.grid);
    let values = ubar
        .values
        .iter()
        .zip(&factor)
        .map(|(&u, &e)| match direction {
            GaugeDirection::Forward => u * e,
            GaugeDirection::Inverse => u / e,
        })
        .collect();
    Field::new(ubar.grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with_nu(nu: Profile) -> PlantSpec {
        PlantSpec::new(1.0, nu, Profile::Constant(0.0), -0.05, 0.05).unwrap()
    }

    #[test]
    fn zero_advection_is_identity() {
        let g = Grid1D::new(-1.0, 1.0, 41).unwrap();
        let u = Field::from_fn(g, |y| y.sin() + 0.3);
        let out = gauge_transform(&u, &spec_with_nu(Profile::Constant(0.0)), GaugeDirection::Forward).unwrap();
        assert_eq!(out.values, u.values);
    }

    #[test]
    fn constant_advection_closed_form() {
        let g = Grid1D::new(-1.0, 1.0, 21).unwrap();
        let u = Field::from_fn(g, |_| 1.0);
        let out = gauge_transform(&u, &spec_with_nu(Profile::Constant(1.0)), GaugeDirection::Forward).unwrap();
        for (k, &y) in out.grid.nodes().iter().enumerate() {
            assert!((out.values[k] - ((y + 1.0) / 2.0).exp()).abs() < 1e-12);
        }
        assert!((out.values[20] - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn linear_advection_matches_antiderivative() {
        let g = Grid1D::new(-1.0, 1.0, 201).unwrap();
        let u = Field::from_fn(g, |_| 1.0);
        let spec = spec_with_nu(Profile::Polynomial(vec![1.0, 0.0]));
        let out = gauge_transform(&u, &spec, GaugeDirection::Forward).unwrap();
        for (k, &y) in out.grid.nodes().iter().enumerate() {
            let exact = ((y * y - 1.0) / 4.0).exp();
            assert!(((out.values[k] - exact) / exact).abs() < 1e-6);
        }
        let back = gauge_transform(&out, &spec, GaugeDirection::Inverse).unwrap();
        for v in back.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_eps() {
        assert!(PlantSpec::new(-1.0, Profile::Constant(0.0), Profile::table1(), -0.05, 0.05).is_err());
        assert!(PlantSpec::table1(0.2, 0.05).is_err());
        assert!(PlantSpec::table1(-0.05, 1.0).is_err());
    }

    #[test]
    fn polynomial_derivative() {
        let p = Profile::table1();
        assert!((p.derivative(0.5) - (-8.0 * 0.5 - 2.0)).abs() < 1e-14);
        assert!((p.eval(-0.25) - 6.25).abs() < 1e-14);
    }

    #[test]
    fn effective_reaction_absorbs_advection() {
        let spec = PlantSpec::new(2.0, Profile::Constant(2.0), Profile::Constant(3.0), -0.1, 0.0).unwrap();
        assert!((spec.lambda(0.3) - (3.0 - 4.0 / 8.0)).abs() < 1e-14);
    }
}
