//! Acceptance suite. Each test prints one `PASS`/`FAIL` line, then asserts it.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use foldbs_core::analysis::{fit_decay, target_bound_constants, waterbed_metrics, WaterbedMetrics};
use foldbs_core::kernel_aux::{apply_second_transform, invert_second_transform};
use foldbs_core::kernel_ctrl::{apply_volterra, invert_volterra};
use foldbs_core::kernel_obs::{bessel_phi_closed_form, solve_observer_kernel, ObserverKernel};
use foldbs_core::residual::{k_residual, obs_residual, q_residual};
use foldbs_core::sim::{self, Mode, SimConfig, Trajectory};
use foldbs_core::synthesis::{
    observer_kernels_for_grid, solve_control_kernels, solve_observer_kernels, ControlKernels, SolverSettings,
};
use foldbs_core::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const POINTS: [(f64, f64); 2] = [(-0.05, 0.05), (-0.30, -0.45)];
const GRID_N: usize = 401;
const DT: f64 = 0.005;

fn report(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn settings(tri_n: usize) -> SolverSettings {
    SolverSettings {
        tri_n,
        ..SolverSettings::default()
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed())
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn scenario(y0: f64, yhat0: f64, mode: Mode, cc: f64) -> (Trajectory, Duration) {
    let mut cfg = SimConfig::table1(y0, yhat0, GRID_N, DT, mode).unwrap();
    cfg.cc1 = cc;
    cfg.cc2 = cc;
    let s = SolverSettings::default();
    timed(|| {
        let gt = mode
            .needs_gains()
            .then(|| solve_control_kernels(&cfg.spec, cfg.c1, cfg.c2, &s).unwrap().gains(&cfg.grid).unwrap());
        let obs = mode
            .needs_observer()
            .then(|| observer_kernels_for_grid(&cfg.spec, &cfg.grid, cc, cc, &s).unwrap());
        sim::run(&cfg, gt.as_ref(), obs.as_ref()).unwrap()
    })
}

fn rate(tr: &Trajectory, norms: &[f64], window: (f64, f64)) -> f64 {
    fit_decay(&tr.times, norms, window).unwrap().gamma_hat
}

fn effort(tr: &Trajectory) -> WaterbedMetrics {
    waterbed_metrics(&tr.controls, &tr.times).unwrap()
}

// Observer errors reach roundoff before t = 3; fit before that.
const OBSERVER_WINDOW: (f64, f64) = (0.5, 1.5);

#[test]
fn c01_kernel_residual_convergence() {
    for (y0, yhat0) in POINTS {
        let spec = PlantSpec::table1(y0, yhat0).unwrap();
        let (ck, tc) = timed(|| solve_control_kernels(&spec, 5.0, 5.0, &settings(101)).unwrap());
        let (fk, tf) = timed(|| solve_control_kernels(&spec, 5.0, 5.0, &settings(201)).unwrap());
        let (oc, toc) = timed(|| solve_observer_kernels(&spec, 1.0, 1.0, &settings(101)).unwrap());
        let (of, tof) = timed(|| solve_observer_kernels(&spec, 1.0, 1.0, &settings(201)).unwrap());
        let kres = |k: &ControlKernels| k_residual(&k.matrix().k, &k.fp, [5.0, 5.0], &k.row2.g_trace.values).max_abs();
        let qres = |k: &ControlKernels| q_residual(&k.qr.q, &k.qr.p, &k.row2.g_trace, &k.fp, [5.0, 5.0]).max_abs;
        let ores = |k: &[ObserverKernel; 2]| obs_residual(&k[0]).max_abs.max(obs_residual(&k[1]).max_abs);
        let ratios = [kres(&ck) / kres(&fk), qres(&ck) / qres(&fk), ores(&oc) / ores(&of)];
        let slowest = [tc, tf, toc, tof].into_iter().max().unwrap();
        let pass = ratios.iter().all(|&r| r >= 1.8) && slowest < Duration::from_secs(60);
        report(
            &format!("c01 residual convergence y0={y0:+.2}"),
            pass,
            format!(
                "ratios K {:.2}, q {:.2}, obs {:.2} (need >= 1.8); slowest solve {:.2}s (need < 60s)",
                ratios[0],
                ratios[1],
                ratios[2],
                slowest.as_secs_f64()
            ),
        );
    }
}

#[test]
fn c02_symmetric_fold_collapse() {
    let spec = PlantSpec::table1(0.0, 0.05).unwrap();
    let ck = solve_control_kernels(&spec, 5.0, 5.0, &settings(201)).unwrap();
    let scale = ck.row1.k11.max_abs().max(ck.row1.k12.max_abs()).max(ck.row2.k21.max_abs()).max(ck.row2.k22.max_abs());
    let g = ck.row2.g_trace.max_abs();
    let (p, q, r) = (ck.qr.p.max_abs(), ck.qr.q.max_abs(), ck.qr.r.max_abs());
    let pass = g <= 1e-12 * (1.0 + scale) && p < 1e-10 && q < 1e-10 && r < 1e-10;
    report(
        "c02 symmetric fold collapse",
        pass,
        format!("|g| {g:.1e} (need <= {:.1e}); |p| {p:.1e}, |q| {q:.1e}, |r| {r:.1e} (need < 1e-10)", 1e-12 * (1.0 + scale)),
    );
}

/// `I1(z) / z` by its power series.
fn i1_over_z(z: f64) -> f64 {
    let w = 0.25 * z * z;
    let (mut term, mut sum, mut k) = (0.5, 0.5, 1.0);
    while term > 1e-18 * sum {
        term *= w / (k * (k + 1.0));
        sum += term;
        k += 1.0;
    }
    sum
}

fn constant_lambda_kernel(lam: f64) -> ObserverKernel {
    let unit = Grid1D::unit(11).unwrap();
    solve_observer_kernel(&Field::from_fn(unit, |_| lam), 1.0, 1.0, 201, 1e-13, 200).unwrap()
}

/// Worst relative gap of `|Phi|` against `|reference|` at interior nodes.
fn relative_gap(k: &ObserverKernel, reference: impl Fn(f64, f64) -> f64) -> f64 {
    let t = &k.phi_kernel;
    t.indices()
        .filter(|&(i, j)| i > j && i + 1 < t.n())
        .map(|(i, j)| {
            let r = reference(t.coord(i), t.coord(j)).abs();
            (t.get(i, j).abs() - r).abs() / r
        })
        .fold(0.0_f64, f64::max)
}

fn diagonal_gap(k: &ObserverKernel, lam: f64) -> f64 {
    let t = &k.phi_kernel;
    (0..t.n())
        .map(|i| (t.get(i, i).abs() - 0.5 * (lam + 1.0) * (1.0 - t.coord(i))).abs())
        .fold(0.0_f64, f64::max)
}

#[test]
#[ignore = "the published closed form uses z = sqrt(mu (2 - x - y)), which is not a solution of the kernel equation; measured gap about 0.49"]
fn c03_bessel_closed_form() {
    let mut gap = 0.0_f64;
    let mut diag = 0.0_f64;
    for lam in [0.0, 2.0] {
        let k = constant_lambda_kernel(lam);
        gap = gap.max(relative_gap(&k, |x, y| bessel_phi_closed_form(x, y, lam, 1.0, 1.0).unwrap()));
        diag = diag.max(diagonal_gap(&k, lam));
    }
    report(
        "c03 closed-form Bessel kernel",
        gap <= 1e-6 && diag <= 1e-8,
        format!("relative gap {gap:.2e} (need <= 1e-6); diagonal gap {diag:.1e} (need <= 1e-8)"),
    );
}

#[test]
fn c03_supplement_bessel_with_corrected_argument() {
    let mut gap = 0.0_f64;
    let mut diag = 0.0_f64;
    for lam in [0.0, 2.0] {
        let mu = lam + 1.0;
        let k = constant_lambda_kernel(lam);
        gap = gap.max(relative_gap(&k, |x, y| mu * (1.0 - x) * i1_over_z((mu * (x - y) * (2.0 - x - y)).sqrt())));
        diag = diag.max(diagonal_gap(&k, lam));
    }
    report(
        "c03 supplement, z = sqrt(mu (x - y)(2 - x - y))",
        gap <= 1e-6 && diag <= 1e-8,
        format!("relative gap {gap:.2e} (need <= 1e-6); diagonal gap {diag:.1e} (need <= 1e-8)"),
    );
}

#[test]
fn c04_open_loop_instability() {
    let (tr, _) = scenario(-0.05, 0.05, Mode::Open, 1.0);
    let growth = -rate(&tr, &tr.norm_u, (1.0, 3.0));

    let grid = Grid1D::new(-1.0, 1.0, GRID_N).unwrap();
    let m = GRID_N - 2;
    let h = grid.h();
    let lam = Profile::table1();
    let op = nalgebra::DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            -2.0 / (h * h) + lam.eval(grid.x(i + 1))
        } else if i.abs_diff(j) == 1 {
            1.0 / (h * h)
        } else {
            0.0
        }
    });
    let sigma = op.symmetric_eigen().eigenvalues.max();
    let rel = (growth - sigma).abs() / sigma;
    report(
        "c04 open-loop instability",
        growth > 0.0 && sigma > 0.0 && rel <= 0.05,
        format!("fitted growth {growth:.4}, principal eigenvalue {sigma:.4}, relative gap {rel:.2e} (need <= 5%)"),
    );
}

#[test]
fn c05_state_feedback_decay() {
    let (a0, e0) = (1.0_f64, 1.0_f64);
    let at_mid = 5.0_f64.min(a0 * a0 * a0 * 5.0) + e0 / 4.0;
    let mid_ok = (target_bound_constants(a0, 5.0, 5.0, e0).unwrap().1 - at_mid).abs() < 1e-12;
    for y0 in [-0.05, -0.30] {
        let a: f64 = (1.0 + y0) / (1.0 - y0);
        let eps2 = 1.0 / ((1.0 - y0) * (1.0 - y0));
        let gamma = (a * a * a * 5.0).min(5.0) + eps2 / 4.0;
        let fp = folded_params(&PlantSpec::table1(y0, 0.05).unwrap(), FoldSide::Control, 11).unwrap();
        let lib = target_bound_constants(fp.a, 5.0, 5.0, fp.eps2).unwrap().1;
        let (tr, took) = scenario(y0, 0.05, Mode::StateFeedback, 1.0);
        let fit = rate(&tr, &tr.norm_u, (1.5, 3.0));
        let pass = fit >= 0.9 * gamma && (lib - gamma).abs() < 1e-12 && mid_ok && took < Duration::from_secs(30);
        report(
            &format!("c05 state-feedback decay y0={y0:+.2}"),
            pass,
            format!(
                "fitted {fit:.4} vs gamma {gamma:.5} (need >= {:.4}, midpoint reference {at_mid}); run {:.2}s (need < 30s)",
                0.9 * gamma,
                took.as_secs_f64()
            ),
        );
    }
}

#[test]
fn c06_observer_convergence() {
    for (y0, yhat0) in POINTS {
        let (base, _) = scenario(y0, yhat0, Mode::Observer, 1.0);
        let (fast, _) = scenario(y0, yhat0, Mode::Observer, 2.0);
        let r1 = rate(&base, &base.norm_err, OBSERVER_WINDOW);
        let r2 = rate(&fast, &fast.norm_err, OBSERVER_WINDOW);
        report(
            &format!("c06 observer convergence yhat0={yhat0:+.2}"),
            r1 > 0.0 && r2 > r1,
            format!("error rate {r1:.4} with c = 1, {r2:.4} with c = 2 (need > 0 and increasing)"),
        );
    }
}

#[test]
fn c07_separation() {
    for (y0, yhat0) in POINTS {
        let (state, _) = scenario(y0, yhat0, Mode::StateFeedback, 1.0);
        let (observer, _) = scenario(y0, yhat0, Mode::Observer, 1.0);
        let (output, _) = scenario(y0, yhat0, Mode::OutputFeedback, 1.0);
        let state_fit = rate(&state, &state.norm_u, (1.5, 3.0));
        let obs_fit = rate(&observer, &observer.norm_err, OBSERVER_WINDOW);
        let combined = rate(&output, &output.combined_norm(), (1.5, 3.0));
        let peak = observer.norm_err.iter().cloned().fold(0.0_f64, f64::max);
        let autonomy = sup_diff(&output.norm_err, &observer.norm_err) / peak;
        let floor = 0.9 * state_fit.min(obs_fit);
        report(
            &format!("c07 separation y0={y0:+.2} yhat0={yhat0:+.2}"),
            combined >= floor && autonomy <= 1e-6,
            format!(
                "combined {combined:.4} (need >= {floor:.4} from state {state_fit:.4}, observer {obs_fit:.4}); \
                 error mismatch {autonomy:.1e} of peak (need <= 1e-6)"
            ),
        );
    }
}

#[test]
fn c08_waterbed_ordering() {
    for (mode, yhat0) in [(Mode::StateFeedback, 0.05), (Mode::OutputFeedback, 0.05), (Mode::OutputFeedback, -0.45)] {
        let near = effort(&scenario(-0.05, yhat0, mode, 1.0).0);
        let far = effort(&scenario(-0.30, yhat0, mode, 1.0).0);
        report(
            &format!("c08 waterbed {} yhat0={yhat0:+.2}", mode.name()),
            far.peak_u1 < near.peak_u1 && far.peak_u2 > near.peak_u2,
            format!(
                "peak |U1| {:.4} -> {:.4} (need decrease), peak |U2| {:.4} -> {:.4} (need increase)",
                near.peak_u1, far.peak_u1, near.peak_u2, far.peak_u2
            ),
        );
    }
}

/// A random trigonometric sum on [0, 1].
fn random_field(rng: &mut StdRng, n: usize) -> Field {
    let coeffs: Vec<(f64, f64)> = (0..6).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.0))).collect();
    Field::from_fn(Grid1D::unit(n).unwrap(), |x| coeffs.iter().map(|&(c, w)| c * (w * x + c).sin()).sum())
}

#[test]
fn c09_transform_round_trips() {
    let mut rng = StdRng::seed_from_u64(20_241_016);
    let mut vol = 0.0_f64;
    let mut second = 0.0_f64;
    for y0 in [-0.05, -0.30] {
        let ck = solve_control_kernels(&PlantSpec::table1(y0, 0.05).unwrap(), 5.0, 5.0, &settings(201)).unwrap();
        let km = ck.matrix();
        for _ in 0..4 {
            let u = (random_field(&mut rng, km.n()), random_field(&mut rng, km.n()));
            let w = apply_volterra(&km, &u).unwrap();
            let b = invert_volterra(&km, &w, 1e-12).unwrap();
            vol = vol.max(sup_diff(&b.0.values, &u.0.values)).max(sup_diff(&b.1.values, &u.1.values));
            let om = apply_second_transform(&ck.qr, &u).unwrap();
            let b = invert_second_transform(&ck.qr, &om, 1e-12).unwrap();
            second = second.max(sup_diff(&b.0.values, &u.0.values)).max(sup_diff(&b.1.values, &u.1.values));
        }
    }
    report(
        "c09 Volterra round trip",
        vol <= 1e-8,
        format!("sup error {vol:.1e} (need <= 1e-8)"),
    );
    report(
        "c09 second-transform round trip",
        second <= 1e-8,
        format!("sup error {second:.1e} (need <= 1e-8)"),
    );

    let g = Grid1D::new(-1.0, 1.0, 201).unwrap();
    let u = Field::from_fn(g.clone(), |y| (std::f64::consts::PI * y).sin());
    let (u1, u2) = fold(&u, -0.05).unwrap();
    let folded = sup_diff(&unfold(&u1, &u2, -0.05, &g).unwrap().values, &u.values);
    report(
        "c09 fold/unfold round trip",
        folded < 1e-3,
        format!("max error {folded:.1e} (need < 1e-3)"),
    );

    let mut worst = 0.0_f64;
    for nu in [Profile::Constant(0.0), Profile::Polynomial(vec![1.0, 0.0])] {
        let spec = PlantSpec::new(1.0, nu, Profile::table1(), -0.05, 0.05).unwrap();
        let there = gauge_transform(&u, &spec, GaugeDirection::Forward).unwrap();
        let back = gauge_transform(&there, &spec, GaugeDirection::Inverse).unwrap();
        let rel = u
            .values
            .iter()
            .zip(&back.values)
            .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
            .filter(|r| r.is_finite())
            .fold(0.0_f64, f64::max);
        worst = worst.max(rel);
    }
    report(
        "c09 gauge round trip",
        worst <= 4.0 * f64::EPSILON,
        format!("worst relative error {worst:.1e} (need <= {:.1e})", 4.0 * f64::EPSILON),
    );
}

fn sweep_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let o = Command::new(env!("CARGO_BIN_EXE_foldbs"))
        .args(["sweep", "--out"])
        .arg(dir)
        .env("FOLDBS_THREADS", "4")
        .output()
        .expect("foldbs runs");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn c10_sweep_determinism() {
    let d = tempfile::tempdir().unwrap();
    let first = sweep_outputs(&d.path().join("a"));
    let second = sweep_outputs(&d.path().join("b"));
    let same = first == second;
    report(
        "c10 sweep determinism",
        same && first.len() == 5,
        format!("{} files per run, byte-identical: {same}", first.len()),
    );
}
