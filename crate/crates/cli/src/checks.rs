//! Self-checks run by `foldbs verify`.

use anyhow::Result;
use foldbs_core::analysis::verify_norm_equivalence;
use foldbs_core::kernel_aux::{apply_second_transform, invert_second_transform, psi4_bound_check};
use foldbs_core::kernel_ctrl::{apply_volterra, invert_volterra};
use foldbs_core::kernel_obs::{bessel_phi_closed_form, i1_over_z, solve_observer_kernel, ObserverKernel};
use foldbs_core::residual::{k_residual, obs_residual, q_residual};
use foldbs_core::synthesis::{solve_control_kernels, solve_observer_kernels, ControlKernels, SolverSettings};
use foldbs_core::*;

use crate::config::Config;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tol: f64,
    pub pass: bool,
    /// Passing means `measured >= tol` rather than `measured <= tol`.
    pub at_least: bool,
}

impl Check {
    fn below(name: &str, measured: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tol,
            pass: measured <= tol,
            at_least: false,
        }
    }

    fn above(name: &str, measured: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tol,
            pass: measured >= tol,
            at_least: true,
        }
    }

    pub fn line(&self) -> String {
        let op = if self.at_least { ">=" } else { "<=" };
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        format!("{verdict} {:<32} measured {:.3e} (need {op} {:.1e})", self.name, self.measured, self.tol)
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn ratio(coarse: f64, fine: f64) -> f64 {
    if fine == 0.0 {
        f64::INFINITY
    } else {
        coarse / fine
    }
}

fn with_n(s: &SolverSettings, tri_n: usize) -> SolverSettings {
    SolverSettings { tri_n, ..*s }
}

fn k_res(ck: &ControlKernels) -> f64 {
    k_residual(&ck.matrix().k, &ck.fp, [ck.c1, ck.c2], &ck.row2.g_trace.values).max_abs()
}

fn q_res(ck: &ControlKernels) -> f64 {
    q_residual(&ck.qr.q, &ck.qr.p, &ck.row2.g_trace, &ck.fp, [ck.c1, ck.c2]).max_abs
}

fn smooth_pair(n: usize, seed: f64) -> (Field, Field) {
    let g = Grid1D::unit(n).expect("n >= 3");
    (
        Field::from_fn(g.clone(), |x| (seed * x + 0.3).sin() + 0.2 * x * x),
        Field::from_fn(g, |x| (1.0 + seed * x).cos() - seed * x),
    )
}

fn corrected_bessel(x: f64, y: f64, mu: f64) -> f64 {
    -mu * (1.0 - x) * i1_over_z((mu * (x - y) * (2.0 - x - y)).sqrt())
}

/// Worst relative gap of `|Phi|` against `reference` over nodes off the `x = 1` edge.
pub fn bessel_gap(k: &ObserverKernel, reference: impl Fn(f64, f64) -> f64) -> f64 {
    let t = &k.phi_kernel;
    let last = t.n() - 1;
    t.indices()
        .filter(|&(i, _)| i < last)
        .map(|(i, j)| {
            let r = reference(t.coord(i), t.coord(j)).abs();
            (t.get(i, j).abs() - r).abs() / r
        })
        .fold(0.0_f64, f64::max)
}

/// Worst gap of `|Phi(x, x)|` against `(lambda + c)(1 - x) / (2 eps)`.
pub fn diagonal_gap(k: &ObserverKernel, lambda: f64) -> f64 {
    let t = &k.phi_kernel;
    (0..t.n())
        .map(|i| (t.get(i, i).abs() - (lambda + k.c) * (1.0 - t.coord(i)) / (2.0 * k.eps)).abs())
        .fold(0.0_f64, f64::max)
}

pub fn run_checks(cfg: &Config) -> Result<Vec<Check>> {
    let s = cfg.settings();
    let (c1, c2) = (cfg.control.c1, cfg.control.c2);
    let fine_n = 2 * (s.tri_n - 1) + 1;
    let spec = cfg.spec(cfg.plant.y0, cfg.plant.yhat0)?;
    let mut out = Vec::new();

    let coarse = solve_control_kernels(&spec, c1, c2, &s)?;
    let fine = solve_control_kernels(&spec, c1, c2, &with_n(&s, fine_n))?;
    out.push(Check::above("k_residual_ratio", ratio(k_res(&coarse), k_res(&fine)), 1.8));
    if coarse.row2.g_trace.max_abs() > 0.0 {
        out.push(Check::above("q_residual_ratio", ratio(q_res(&coarse), q_res(&fine)), 1.8));
        let (lhs, rhs) = psi4_bound_check(&coarse.row2.g_trace, &coarse.fp, s.tri_n)?;
        out.push(Check::below("forcing_bound_excess", lhs - rhs, 0.0));
    }
    let oc = solve_observer_kernels(&spec, cfg.observer.c1, cfg.observer.c2, &s)?;
    let of = solve_observer_kernels(&spec, cfg.observer.c1, cfg.observer.c2, &with_n(&s, fine_n))?;
    for side in 0..2 {
        let r = ratio(obs_residual(&oc[side]).max_abs, obs_residual(&of[side]).max_abs);
        out.push(Check::above(&format!("observer_residual_ratio_{}", side + 1), r, 1.8));
    }

    let sym = solve_control_kernels(&cfg.spec(0.0, cfg.plant.yhat0)?, c1, c2, &s)?;
    let scale = sym.row1.k11.max_abs().max(sym.row2.k22.max_abs());
    out.push(Check::below("g_trace_at_symmetric_fold", sym.row2.g_trace.max_abs(), 1e-12 * (1.0 + scale)));
    let pqr = sym.qr.p.max_abs().max(sym.qr.q.max_abs()).max(sym.qr.r.max_abs());
    out.push(Check::below("pqr_at_symmetric_fold", pqr, 1e-10));

    let unit = Grid1D::unit(11)?;
    let mut printed = 0.0_f64;
    let mut corrected = 0.0_f64;
    let mut diagonal = 0.0_f64;
    for lam in [0.0, 2.0] {
        let k = solve_observer_kernel(&Field::from_fn(unit.clone(), |_| lam), 1.0, 1.0, s.tri_n, 1e-13, s.max_iter)?;
        printed = printed.max(bessel_gap(&k, |x, y| bessel_phi_closed_form(x, y, lam, 1.0, 1.0).unwrap_or(f64::NAN)));
        corrected = corrected.max(bessel_gap(&k, |x, y| corrected_bessel(x, y, lam + 1.0)));
        diagonal = diagonal.max(diagonal_gap(&k, lam));
    }
    out.push(Check::below("bessel_printed_form", printed, 1e-6));
    out.push(Check::below("bessel_corrected_argument", corrected, 1e-6));
    out.push(Check::below("observer_diagonal", diagonal, 1e-8));

    let km = coarse.matrix();
    let n = km.n();
    let mut vol = 0.0_f64;
    let mut second = 0.0_f64;
    for seed in [0.7, 1.9, 3.1] {
        let u = smooth_pair(n, seed);
        let w = apply_volterra(&km, &u)?;
        let b = invert_volterra(&km, &w, 1e-10)?;
        vol = vol.max(sup_diff(&b.0.values, &u.0.values)).max(sup_diff(&b.1.values, &u.1.values));
        let om = apply_second_transform(&coarse.qr, &u)?;
        let b = invert_second_transform(&coarse.qr, &om, 1e-10)?;
        second = second.max(sup_diff(&b.0.values, &u.0.values)).max(sup_diff(&b.1.values, &u.1.values));
    }
    out.push(Check::below("volterra_round_trip", vol, 1e-8));
    out.push(Check::below("second_transform_round_trip", second, 1e-8));

    let g = Grid1D::new(-1.0, 1.0, 201)?;
    let u = Field::from_fn(g.clone(), |y| (std::f64::consts::PI * y).sin());
    let (u1, u2) = fold(&u, spec.y0.min(-0.05))?;
    let back = unfold(&u1, &u2, spec.y0.min(-0.05), &g)?;
    out.push(Check::below("fold_round_trip", sup_diff(&back.values, &u.values), 1e-3));
    let adv = PlantSpec::new(1.0, Profile::Polynomial(vec![1.0, 0.0]), Profile::table1(), spec.y0, spec.yhat0)?;
    let there = gauge_transform(&u, &adv, GaugeDirection::Forward)?;
    let back = gauge_transform(&there, &adv, GaugeDirection::Inverse)?;
    out.push(Check::below("gauge_round_trip", sup_diff(&back.values, &u.values), 1e-12));

    let fields: Vec<_> = [0.7, 1.9, 3.1].iter().map(|&s| smooth_pair(n, s)).collect();
    let rep = verify_norm_equivalence(&km, &coarse.qr, &fields)?;
    println!(
        "INFO norm equivalence: ||K|| = {:.3}, ||p||+||q||+||r|| = {:.3}, M1 = {:.3e}{}, M2 = {:.3e}{}",
        rep.norm_k,
        rep.norm_p + rep.norm_q + rep.norm_r,
        rep.m1,
        if rep.m1_vacuous { " (vacuous)" } else { "" },
        rep.m2,
        if rep.m2_vacuous { " (vacuous)" } else { "" },
    );
    Ok(out)
}
