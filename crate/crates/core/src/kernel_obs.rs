//! Observer gain kernels on each folded half.
//!
//! In `xi = x + y`, `eta = x - y` the kernel equation becomes
//! `G_{xi eta} = -mu G / 4` with data on `eta = 0` and on `x = 1`, which
//! integrates to
//! `G(xi, eta) = f(xi) - f(2 - eta) + 1/4 int_xi^{2-eta} int_0^eta mu G`.
//! The double integral is iterated to a fixed point on the full `(xi, eta)`
//! lattice of spacing `h`; nodes of the `(x, y)` triangle are the lattice
//! points of even `xi + eta` index sum.

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid1D, Orientation, TriGrid};
use crate::interp::{cubic_uniform, cumquad_uniform, cumulative_gauss};
use crate::kernel_ctrl::Convergence;

/// Kernel `Phi` for one folded half, with its injection gain `phi(x) = -eps Phi(x, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverKernel {
    pub phi_kernel: TriGrid,
    pub phi: Field,
    pub eps: f64,
    pub c: f64,
    pub lambda: Field,
    pub convergence: Convergence,
}

impl ObserverKernel {
    /// `mu(x) = (lambda(x) + c) / eps`.
    pub fn mu(&self, x: f64) -> f64 {
        (cubic_uniform(&self.lambda.values, 0.0, self.lambda.grid.h(), x) + self.c) / self.eps
    }
}

/// `I1(z) / z` by its even power series; equals `1/2` at `z = 0`.
pub fn i1_over_z(z: f64) -> f64 {
    let w = z * z / 4.0;
    let mut term = 0.5;
    let mut sum = term;
    for k in 1..400 {
        term *= w / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() <= 1e-16 * sum.abs() {
            break;
        }
    }
    sum
}

/// The constant-coefficient closed form with argument `z = sqrt(mu (2 - x - y))`.
pub fn bessel_phi_closed_form(x: f64, y: f64, lambda: f64, eps: f64, c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=x).contains(&y) {
        return Err(Error::Domain(format!("({x}, {y}) is outside the lower triangle")));
    }
    if !(eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    let mu = (lambda + c) / eps;
    if mu < 0.0 {
        return Err(Error::Domain(format!("lambda + c = {} is negative", lambda + c)));
    }
    let z = (mu * (2.0 - x - y)).sqrt();
    Ok(-mu * (1.0 - x) * i1_over_z(z))
}

/// Solve for `Phi` with `Phi(1, y) = 0` and `Phi(x, x) = -int_x^1 mu / 2`.
pub fn solve_observer_kernel(
    lambda: &Field,
    eps: f64,
    c: f64,
    tri_n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ObserverKernel> {
    if !(eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    if !(c > 0.0) {
        return Err(invalid(format!("c must be positive, got {c}")));
    }
    if tri_n < 4 {
        return Err(invalid(format!("tri_n must be at least 4, got {tri_n}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(invalid("need tol > 0 and max_iter > 0"));
    }
    if (lambda.grid.lo()).abs() > 1e-12 || (lambda.grid.hi() - 1.0).abs() > 1e-12 {
        return Err(invalid("lambda must be sampled on [0, 1]"));
    }
    let n = tri_n - 1;
    let h = 1.0 / n as f64;
    let lh = lambda.grid.h();
    let mu = |x: f64| (cubic_uniform(&lambda.values, 0.0, lh, x) + c) / eps;

    // f(xi) = -1/2 int_{xi/2}^1 mu, sampled at xi = p h
    let cum = cumulative_gauss(mu, 0.5 * h, 2 * n);
    let total = cum[2 * n];
    let f: Vec<f64> = (0..=2 * n).map(|p| -0.5 * (total - cum[p])).collect();

    let lat = Lattice { n };
    let mut g0 = vec![0.0; lat.len()];
    let mut weight = vec![0.0; lat.len()];
    for q in 0..=n {
        for p in q..=2 * n - q {
            let k = lat.at(p, q);
            g0[k] = f[p] - f[2 * n - q];
            weight[k] = 0.25 * mu(0.5 * (p + q) as f64 * h);
        }
    }

    let mut g = g0.clone();
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let next = lat.step(&g0, &g, &weight, h);
        let diff = next.iter().zip(&g).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = next.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        g = next;
        history.push(diff);
        if diff < tol * (1.0 + scale) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            solver: "observer kernel",
            iterations: history.len(),
            residual: history.last().copied().unwrap_or(f64::NAN),
        });
    }

    let mut phi_kernel = TriGrid::zeros(tri_n, Orientation::Lower);
    for (i, j) in phi_kernel.indices().collect::<Vec<_>>() {
        phi_kernel.set(i, j, g[lat.at(i + j, i - j)]);
    }
    let grid = Grid1D::unit(tri_n)?;
    let phi = Field::new(grid, (0..tri_n).map(|i| -eps * phi_kernel.get(i, 0)).collect())?;
    Ok(ObserverKernel {
        phi_kernel,
        phi,
        eps,
        c,
        lambda: lambda.clone(),
        convergence: Convergence {
            iterations: history.len(),
            history,
        },
    })
}

/// Packed `(p, q)` lattice with `q <= p <= 2n - q`.
struct Lattice {
    n: usize,
}

impl Lattice {
    fn at(&self, p: usize, q: usize) -> usize {
        // row q holds 2(n - q) + 1 entries starting at p = q
        q * (2 * self.n + 1) - q * q.saturating_sub(1) + (p - q)
    }

    fn len(&self) -> usize {
        self.at(self.n, self.n) + 1
    }

    /// One successive-approximation sweep.
    fn step(&self, g0: &[f64], g: &[f64], weight: &[f64], h: f64) -> Vec<f64> {
        let n = self.n;
        // a(p, q) = int_0^{qh} w G (p, t) dt along each xi column
        let mut a = vec![0.0; g.len()];
        for p in 0..=2 * n {
            let qmax = p.min(2 * n - p);
            let col: Vec<f64> = (0..=qmax)
                .map(|q| {
                    let k = self.at(p, q);
                    weight[k] * g[k]
                })
                .collect();
            let cum = cumquad_uniform(&col, h);
            for q in 0..=qmax {
                a[self.at(p, q)] = cum[q];
            }
        }
        let mut out = vec![0.0; g.len()];
        for q in 0..=n {
            let row: Vec<f64> = (q..=2 * n - q).map(|p| a[self.at(p, q)]).collect();
            let cum = cumquad_uniform(&row, h);
            let last = cum[cum.len() - 1];
            for p in q..=2 * n - q {
                let k = self.at(p, q);
                out[k] = g0[k] + (last - cum[p - q]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(v: f64) -> Field {
        Field::from_fn(Grid1D::unit(11).unwrap(), |_| v)
    }

    fn corrected(x: f64, y: f64, mu: f64) -> f64 {
        -mu * (1.0 - x) * i1_over_z((mu * (x - y) * (2.0 - x - y)).sqrt())
    }

    #[test]
    fn series_matches_reference_values() {
        assert_eq!(i1_over_z(0.0), 0.5);
        // I1(1) = 0.565159103992485..., I1(5) = 24.33564214245052...
        assert!((i1_over_z(1.0) - 0.565_159_103_992_485).abs() < 1e-14);
        assert!((i1_over_z(5.0) - 24.335_642_142_450_52 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn cancelling_reaction_gives_zero_kernel() {
        let k = solve_observer_kernel(&constant(-1.0), 1.0, 1.0, 21, 1e-12, 50).unwrap();
        assert!(k.phi_kernel.max_abs() < 1e-15);
        assert!(k.phi.max_abs() < 1e-15);
    }

    #[test]
    fn diagonal_and_boundary_conditions() {
        let k = solve_observer_kernel(&constant(2.0), 1.0, 1.0, 41, 1e-13, 100).unwrap();
        let n = k.phi_kernel.n();
        for i in 0..n {
            let x = i as f64 / (n - 1) as f64;
            assert!((k.phi_kernel.get(i, i) + 1.5 * (1.0 - x)).abs() < 1e-12);
            assert!(k.phi_kernel.get(n - 1, i).abs() < 1e-14);
        }
        assert!((k.phi_kernel.get(0, 0) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn constant_coefficient_solution_matches_bessel_form() {
        for lam in [0.0, 2.0] {
            let k = solve_observer_kernel(&constant(lam), 1.0, 1.0, 51, 1e-13, 100).unwrap();
            for (i, j) in k.phi_kernel.indices() {
                let (x, y) = (k.phi_kernel.coord(i), k.phi_kernel.coord(j));
                let e = corrected(x, y, lam + 1.0);
                assert!((k.phi_kernel.get(i, j) - e).abs() <= 1e-6 * e.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn printed_form_agrees_only_on_the_diagonal() {
        // at y = x the two arguments differ but both vanish only at x = 1
        let p = bessel_phi_closed_form(0.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        assert!((p + i1_over_z(2f64.sqrt())).abs() < 1e-15);
        assert_eq!(bessel_phi_closed_form(1.0, 0.5, 0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(bessel_phi_closed_form(0.5, 0.7, 0.0, 1.0, 1.0).is_err());
        assert!(bessel_phi_closed_form(0.5, 0.2, -3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_observer_kernel(&constant(0.0), 0.0, 1.0, 21, 1e-12, 50).is_err());
        assert!(solve_observer_kernel(&constant(0.0), 1.0, -1.0, 21, 1e-12, 50).is_err());
        assert!(solve_observer_kernel(&constant(0.0), 1.0, 1.0, 3, 1e-12, 50).is_err());
        let shifted = Field::from_fn(Grid1D::new(-1.0, 1.0, 11).unwrap(), |_| 0.0);
        assert!(solve_observer_kernel(&shifted, 1.0, 1.0, 21, 1e-12, 50).is_err());
        assert!(matches!(
            solve_observer_kernel(&constant(40.0), 1.0, 1.0, 21, 1e-14, 2),
            Err(Error::NonConvergence { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn injection_gain_scales_with_eps(lam in -0.5f64..3.0, eps in 0.3f64..2.0) {
            let k = solve_observer_kernel(&constant(lam), eps, 1.0, 21, 1e-13, 200).unwrap();
            for i in 0..21 {
                prop_assert!((k.phi.values[i] + eps * k.phi_kernel.get(i, 0)).abs() < 1e-15);
            }
            let d = -(lam + 1.0) / (2.0 * eps);
            prop_assert!((k.phi_kernel.get(0, 0) - d).abs() < 1e-11 * (1.0 + d.abs()));
        }
    }
}
