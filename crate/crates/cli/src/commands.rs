//! The five subcommands.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Result};
use foldbs_core::analysis::{fit_decay, target_bound_constants, waterbed_metrics, DecayFit, WaterbedMetrics};
use foldbs_core::export::{write_field, write_gains, write_snapshots, write_trajectory, write_tri_columns};
use foldbs_core::kernel_obs::ObserverKernel;
use foldbs_core::sim::{self, Mode, Trajectory};
use foldbs_core::synthesis::{observer_kernels_for_grid, solve_control_kernels, solve_observer_kernels};
use foldbs_core::{folded_params, FoldSide, Grid1D};

use crate::checks::run_checks;
use crate::config::Config;
use crate::outputs::{tag, Outputs};

/// The outcome a command reports through the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    ChecksFailed,
}

pub fn kernels(cfg: &Config, cfg_path: Option<&Path>, out: &Path) -> Result<Outcome> {
    let (y0, yhat0) = (cfg.plant.y0, cfg.plant.yhat0);
    let spec = cfg.spec(y0, yhat0)?;
    let s = cfg.settings();
    let ck = solve_control_kernels(&spec, cfg.control.c1, cfg.control.c2, &s)?;
    let obs = solve_observer_kernels(&spec, cfg.observer.c1, cfg.observer.c2, &s)?;
    for (name, c) in [
        ("row 1", &ck.row1.convergence),
        ("row 2", &ck.row2.convergence),
        ("p, q, r", &ck.qr.convergence),
        ("observer 1", &obs[0].convergence),
        ("observer 2", &obs[1].convergence),
    ] {
        println!("{name:<10} iterations {:>3}  final difference {:.3e}", c.iterations, c.final_difference());
    }
    let mut o = Outputs::new(out, cfg_path, format!("kernels_y0_{}_yhat0_{}", tag(y0), tag(yhat0)))?;
    o.emit("k_row1.csv", |w| write_tri_columns(w, &["k11", "k12"], &[&ck.row1.k11, &ck.row1.k12]))?;
    o.emit("k_row2.csv", |w| write_tri_columns(w, &["k21", "k22"], &[&ck.row2.k21, &ck.row2.k22]))?;
    o.emit("p.csv", |w| write_field(w, &ck.qr.p))?;
    o.emit("q.csv", |w| write_tri_columns(w, &["q"], &[&ck.qr.q]))?;
    o.emit("r.csv", |w| write_tri_columns(w, &["r"], &[&ck.qr.r]))?;
    o.emit("phi.csv", |w| write_tri_columns(w, &["Phi1", "Phi2"], &[&obs[0].phi_kernel, &obs[1].phi_kernel]))?;
    o.finish()?;
    Ok(Outcome::Ok)
}

pub fn gains(cfg: &Config, cfg_path: Option<&Path>, out: &Path, y0s: &[f64]) -> Result<Outcome> {
    let grid = Grid1D::new(-1.0, 1.0, cfg.sim.grid_n)?;
    let mut o = Outputs::new(out, cfg_path, "gains")?;
    for &y0 in y0s {
        let spec = cfg.spec(y0, cfg.plant.yhat0)?;
        let ck = solve_control_kernels(&spec, cfg.control.c1, cfg.control.c2, &cfg.settings())?;
        let gt = ck.gains(&grid)?;
        let [(f1l, f1r), (f2l, f2r)] = gt.fold_values();
        println!("y0 = {y0:+.4}: F1 at fold {f1l:.6} | {f1r:.6}, F2 at fold {f2l:.6} | {f2r:.6}");
        o.emit(&format!("gains_y0_{}.csv", tag(y0)), |w| write_gains(w, &gt))?;
    }
    o.finish()?;
    Ok(Outcome::Ok)
}

/// Result of one simulated scenario.
pub struct ScenarioRun {
    pub y0: f64,
    pub yhat0: f64,
    pub trajectory: Trajectory,
    /// `None` when the norm vanishes inside the fit window.
    pub fit: Option<DecayFit>,
    pub effort: WaterbedMetrics,
    pub bound: (f64, f64),
}

fn observer_kernels(cfg: &Config, y0: f64, yhat0: f64, grid: &Grid1D) -> Result<[ObserverKernel; 2]> {
    let spec = cfg.spec(y0, yhat0)?;
    Ok(observer_kernels_for_grid(&spec, grid, cfg.observer.c1, cfg.observer.c2, &cfg.settings())?)
}

pub fn run_scenario(cfg: &Config, y0: f64, yhat0: f64) -> Result<ScenarioRun> {
    let sc = cfg.sim_config(y0, yhat0)?;
    let mode = sc.mode;
    let gt = if mode.needs_gains() {
        Some(solve_control_kernels(&sc.spec, sc.c1, sc.c2, &cfg.settings())?.gains(&sc.grid)?)
    } else {
        None
    };
    let obs = if mode.needs_observer() {
        Some(observer_kernels(cfg, y0, yhat0, &sc.grid)?)
    } else {
        None
    };
    let tr = sim::run(&sc, gt.as_ref(), obs.as_ref())?;
    let norms = match mode {
        Mode::Observer => tr.norm_err.clone(),
        _ => tr.combined_norm(),
    };
    let fit = fit_decay(&tr.times, &norms, (0.5 * sc.t_end, sc.t_end)).ok();
    let effort = waterbed_metrics(&tr.controls, &tr.times)?;
    let fp = folded_params(&sc.spec, FoldSide::Control, 11)?;
    let bound = target_bound_constants(fp.a, sc.c1, sc.c2, fp.eps2)?;
    Ok(ScenarioRun {
        y0,
        yhat0,
        trajectory: tr,
        fit,
        effort,
        bound,
    })
}

pub fn simulate(cfg: &Config, cfg_path: Option<&Path>, out: &Path) -> Result<Outcome> {
    let r = run_scenario(cfg, cfg.plant.y0, cfg.plant.yhat0)?;
    match &r.fit {
        Some(f) => println!(
            "{}: fitted rate {:.4} over [{}, {}], peak |U1| {:.4}, peak |U2| {:.4}",
            cfg.sim.mode, f.gamma_hat, f.fit_window.0, f.fit_window.1, r.effort.peak_u1, r.effort.peak_u2
        ),
        None => println!("{}: norm vanishes, no rate fitted", cfg.sim.mode),
    }
    let mut o = Outputs::new(out, cfg_path, scenario_id(cfg, r.y0, r.yhat0))?;
    o.emit("trajectory.csv", |w| write_trajectory(w, &r.trajectory))?;
    o.emit("snapshots.csv", |w| write_snapshots(w, &r.trajectory))?;
    o.finish()?;
    Ok(Outcome::Ok)
}

fn scenario_id(cfg: &Config, y0: f64, yhat0: f64) -> String {
    format!("{}_y0_{}_yhat0_{}", cfg.sim.mode, tag(y0), tag(yhat0))
}

/// Worker count from `FOLDBS_THREADS`, else the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var("FOLDBS_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("FOLDBS_THREADS must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

pub fn sweep(cfg: &Config, cfg_path: Option<&Path>, out: &Path) -> Result<Outcome> {
    let points: Vec<(f64, f64)> = cfg
        .sweep
        .y0
        .iter()
        .flat_map(|&y0| cfg.sweep.yhat0.iter().map(move |&yh| (y0, yh)))
        .collect();
    let slots: Vec<Mutex<Option<Result<ScenarioRun>>>> = points.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = worker_count()?.min(points.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let r = run_scenario(cfg, points[i].0, points[i].1);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });

    let mut o = Outputs::new(out, cfg_path, format!("sweep_{}", cfg.sim.mode))?;
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record([
        "y0",
        "yhat0",
        "mode",
        "gamma_fit",
        "pi_fit",
        "fit_residual",
        "peak_U1",
        "peak_U2",
        "l2_U1",
        "l2_U2",
        "bound_gamma",
        "bound_pi",
        "status",
    ])?;
    let num = |v: f64| format!("{v:.16e}");
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut first_error = None;
    for (slot, &(y0, yh)) in slots.into_iter().zip(&points) {
        let result = slot.into_inner().expect("result slot poisoned").expect("every scenario ran");
        match result {
            Ok(r) => {
                o.emit(&format!("trajectory_y0_{}_yhat0_{}.csv", tag(y0), tag(yh)), |w| {
                    write_trajectory(w, &r.trajectory)
                })?;
                summary.write_record([
                    num(y0),
                    num(yh),
                    cfg.sim.mode.clone(),
                    opt(r.fit.map(|f| f.gamma_hat)),
                    opt(r.fit.map(|f| f.pi_hat)),
                    opt(r.fit.map(|f| f.residual)),
                    num(r.effort.peak_u1),
                    num(r.effort.peak_u2),
                    num(r.effort.l2_time_u1),
                    num(r.effort.l2_time_u2),
                    num(r.bound.1),
                    num(r.bound.0),
                    "ok".into(),
                ])?;
                println!(
                    "y0 = {y0:+.4}, yhat0 = {yh:+.4}: rate {} (bound {:.4}), peak |U1| {:.4}, peak |U2| {:.4}",
                    r.fit.map(|f| format!("{:.4}", f.gamma_hat)).unwrap_or_else(|| "n/a".into()),
                    r.bound.1,
                    r.effort.peak_u1,
                    r.effort.peak_u2
                );
            }
            Err(e) => {
                eprintln!("y0 = {y0:+.4}, yhat0 = {yh:+.4}: {e:#}");
                let mut row = vec![num(y0), num(yh), cfg.sim.mode.clone()];
                row.resize(12, String::new());
                row.push(format!("error: {e}"));
                summary.write_record(&row)?;
                first_error.get_or_insert(e);
            }
        }
    }
    let bytes = summary.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    o.write("summary.csv", &bytes)?;
    o.finish()?;
    match first_error {
        Some(e) => Err(e.context("at least one sweep scenario failed")),
        None => Ok(Outcome::Ok),
    }
}

pub fn verify(cfg: &Config) -> Result<Outcome> {
    let checks = run_checks(cfg)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(if failed == 0 { Outcome::Ok } else { Outcome::ChecksFailed })
}
