//! Norms, decay fits, stability constants and control-effort metrics.

use crate::error::{invalid, Error, Result};
use crate::grid::Field;
use crate::interp::trapz;
use crate::kernel_aux::{apply_second_transform, QRKernels};
use crate::kernel_ctrl::{apply_volterra, KernelMatrix};

/// Trapezoid approximation of `(int f^2)^{1/2}`.
pub fn l2_norm(f: &Field) -> f64 {
    let sq: Vec<f64> = f.values.iter().map(|v| v * v).collect();
    trapz(&sq, f.grid.h()).sqrt()
}

fn pair_norm_sq(u: &(Field, Field)) -> f64 {
    l2_norm(&u.0).powi(2) + l2_norm(&u.1).powi(2)
}

/// Overshoot and rate `(Pi, gamma)` of the folded target system.
pub fn target_bound_constants(a: f64, c1: f64, c2: f64, eps2: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Domain(format!("a = {a} outside (0, 1]")));
    }
    if !(c1 > 0.0 && c2 > 0.0 && eps2 > 0.0) {
        return Err(Error::Domain("c1, c2 and eps2 must be positive".into()));
    }
    Ok((a.powf(-1.5), (a.powi(3) * c1).min(c2) + eps2 / 4.0))
}

/// Least-squares fit of `log norm = log pi_hat - gamma_hat t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub pi_hat: f64,
    /// Positive for decay.
    pub gamma_hat: f64,
    pub fit_window: (f64, f64),
    /// RMS deviation of `log norm` from the fitted line.
    pub residual: f64,
}

/// Fit an exponential rate over `window`; stops at the first norm below `1e-14`.
pub fn fit_decay(times: &[f64], norms: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if times.len() != norms.len() {
        return Err(Error::GridMismatch {
            expected: times.len(),
            found: norms.len(),
        });
    }
    if !(window.0 < window.1) {
        return Err(invalid(format!("empty fit window {window:?}")));
    }
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    let eps = 1e-9 * (window.1 - window.0).abs().max(1.0);
    for (&t, &v) in times.iter().zip(norms) {
        if t < window.0 - eps || t > window.1 + eps {
            continue;
        }
        if v < 1e-14 {
            break;
        }
        ts.push(t);
        ls.push(v.ln());
    }
    if ts.len() < 4 {
        return Err(invalid(format!("only {} usable points in fit window", ts.len())));
    }
    let m = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let lm = ls.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, l) in ts.iter().zip(&ls) {
        sxy += (t - tm) * (l - lm);
        sxx += (t - tm) * (t - tm);
    }
    let slope = sxy / sxx;
    let intercept = lm - slope * tm;
    let rss: f64 = ts
        .iter()
        .zip(&ls)
        .map(|(t, l)| (l - intercept - slope * t).powi(2))
        .sum();
    Ok(DecayFit {
        pi_hat: intercept.exp(),
        gamma_hat: -slope,
        fit_window: (ts[0], ts[ts.len() - 1]),
        residual: (rss / m).sqrt(),
    })
}

/// Time-domain effort of both control channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterbedMetrics {
    pub l2_time_u1: f64,
    pub l2_time_u2: f64,
    pub peak_u1: f64,
    pub peak_u2: f64,
}

pub fn waterbed_metrics(controls: &[(f64, f64)], times: &[f64]) -> Result<WaterbedMetrics> {
    if controls.is_empty() {
        return Err(invalid("empty control history"));
    }
    if controls.len() != times.len() {
        return Err(Error::GridMismatch {
            expected: times.len(),
            found: controls.len(),
        });
    }
    let l2_time = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let mut acc = 0.0;
        for k in 1..times.len() {
            let (a, b) = (f(&controls[k - 1]), f(&controls[k]));
            acc += 0.5 * (times[k] - times[k - 1]) * (a * a + b * b);
        }
        acc.sqrt()
    };
    Ok(WaterbedMetrics {
        l2_time_u1: l2_time(&|c| c.0),
        l2_time_u2: l2_time(&|c| c.1),
        peak_u1: controls.iter().fold(0.0_f64, |m, c| m.max(c.0.abs())),
        peak_u2: controls.iter().fold(0.0_f64, |m, c| m.max(c.1.abs())),
    })
}

/// Norm-equivalence coefficients and how the sampled transforms compare with them.
#[derive(Debug, Clone, PartialEq)]
pub struct NormEquivalenceReport {
    pub norm_k: f64,
    pub norm_p: f64,
    pub norm_q: f64,
    pub norm_r: f64,
    pub m1: f64,
    pub m2: f64,
    /// `1 - ||q|| - ||p|| - ||r|| <= 0`.
    pub m1_vacuous: bool,
    /// `1 - ||K|| <= 0`.
    pub m2_vacuous: bool,
    /// `(min, max)` of `||Omega||^2 / ||W||^2` over the samples.
    pub ratio_second: (f64, f64),
    /// `(min, max)` of `||W||^2 / ||U||^2` over the samples.
    pub ratio_first: (f64, f64),
    /// Samples with `||Omega||^2 < ||W||^2 / M1`.
    pub violations_m1: usize,
    /// Samples with `||W||^2 > M2 ||U||^2`.
    pub violations_m2: usize,
}

/// Evaluate the printed coefficients and test the two checkable inequalities on `fields`.
pub fn verify_norm_equivalence(
    k: &KernelMatrix,
    qr: &QRKernels,
    fields: &[(Field, Field)],
) -> Result<NormEquivalenceReport> {
    let norm_k = k.l2_norm();
    let norm_p = l2_norm(&qr.p);
    let norm_q = qr.q.l2_norm();
    let norm_r = qr.r.l2_norm();
    let b1 = 1.0 - norm_q - norm_p - norm_r;
    let b2 = 1.0 - norm_k;
    let (m1, m2) = (b1 * b1, b2 * b2);
    let mut ratio_second = (f64::INFINITY, 0.0_f64);
    let mut ratio_first = (f64::INFINITY, 0.0_f64);
    let (mut v1, mut v2) = (0, 0);
    for u in fields {
        let w = apply_volterra(k, u)?;
        let om = apply_second_transform(qr, &w)?;
        let (nu, nw, no) = (pair_norm_sq(u), pair_norm_sq(&w), pair_norm_sq(&om));
        if nu == 0.0 || nw == 0.0 {
            continue;
        }
        let rs = no / nw;
        let rf = nw / nu;
        ratio_second = (ratio_second.0.min(rs), ratio_second.1.max(rs));
        ratio_first = (ratio_first.0.min(rf), ratio_first.1.max(rf));
        if no * m1 < nw * (1.0 - 1e-12) {
            v1 += 1;
        }
        if nw > m2 * nu * (1.0 + 1e-12) {
            v2 += 1;
        }
    }
    Ok(NormEquivalenceReport {
        norm_k,
        norm_p,
        norm_q,
        norm_r,
        m1,
        m2,
        m1_vacuous: b1 <= 0.0,
        m2_vacuous: b2 <= 0.0,
        ratio_second,
        ratio_first,
        violations_m1: v1,
        violations_m2: v2,
    })
}
