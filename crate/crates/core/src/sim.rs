//! Simulation of the plant, the folded observer, and the closed loops.
//!
//! Time stepping is Crank-Nicolson after a short backward-Euler start-up.
//! The plant lives on `[-1, 1]` with Dirichlet actuation at both ends. Each
//! observer copy runs on the nodes of its own half of the plant grid, so
//! folding and unfolding the estimate never interpolates. Controls are
//! evaluated at the new time level: the step is linear in `(U1, U2)`, so the
//! unit responses are precomputed and each step ends with a 2x2 solve.

use crate::error::{invalid, Error, Result};
use crate::gains::GainTable;
use crate::grid::{Field, Grid1D};
use crate::kernel_obs::ObserverKernel;
use crate::plant::PlantSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Open,
    StateFeedback,
    Observer,
    OutputFeedback,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Open => "open",
            Mode::StateFeedback => "state_fb",
            Mode::Observer => "observer",
            Mode::OutputFeedback => "output_fb",
        }
    }

    pub fn needs_gains(self) -> bool {
        matches!(self, Mode::StateFeedback | Mode::OutputFeedback)
    }

    pub fn needs_observer(self) -> bool {
        matches!(self, Mode::Observer | Mode::OutputFeedback)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Mode::Open),
            "state_fb" => Ok(Mode::StateFeedback),
            "observer" => Ok(Mode::Observer),
            "output_fb" => Ok(Mode::OutputFeedback),
            other => Err(invalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: PlantSpec,
    pub grid: Grid1D,
    pub dt: f64,
    pub t_end: f64,
    pub c1: f64,
    pub c2: f64,
    pub cc1: f64,
    pub cc2: f64,
    /// Initial state in the original (advective) coordinates.
    pub initial_u: Field,
    pub initial_uhat: Field,
    pub mode: Mode,
    pub stride: usize,
}

impl SimConfig {
    /// Reference scenario defaults: `u0 = cos(pi y / 2)`, zero initial estimate, `t_end = 3`.
    pub fn table1(y0: f64, yhat0: f64, n: usize, dt: f64, mode: Mode) -> Result<Self> {
        let spec = PlantSpec::table1(y0, yhat0)?;
        let grid = Grid1D::new(-1.0, 1.0, n)?;
        let initial_u = Field::from_fn(grid.clone(), |y| (std::f64::consts::FRAC_PI_2 * y).cos());
        let initial_uhat = Field::zeros(grid.clone());
        let cfg = Self {
            spec,
            grid,
            dt,
            t_end: 3.0,
            c1: 5.0,
            c2: 5.0,
            cc1: 1.0,
            cc2: 1.0,
            initial_u,
            initial_uhat,
            mode,
            stride: 10,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if (self.grid.lo() + 1.0).abs() > 1e-12 || (self.grid.hi() - 1.0).abs() > 1e-12 {
            return Err(invalid("simulation grid must cover [-1, 1]"));
        }
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(invalid(format!("dt must lie in (0, 0.01], got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid(format!("t_end must be positive, got {}", self.t_end)));
        }
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("cc1", self.cc1), ("cc2", self.cc2)] {
            if !(v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.stride == 0 {
            return Err(invalid("snapshot stride must be positive"));
        }
        self.grid.check_same(&self.initial_u.grid)?;
        self.grid.check_same(&self.initial_uhat.grid)?;
        for (what, y) in [("y0", self.spec.y0), ("yhat0", self.spec.yhat0)] {
            let k = self.grid.node_index(y, 1e-9).ok_or(Error::NotANode { what, value: y })?;
            if k < 3 || k + 4 > self.grid.n() {
                return Err(invalid(format!("{what} = {y} is too close to the boundary for this grid")));
            }
        }
        if matches!(self.mode, Mode::Open | Mode::Observer) {
            let v = &self.initial_u.values;
            let tol = 1e-12 * (1.0 + self.initial_u.max_abs());
            if v[0].abs() > tol || v[v.len() - 1].abs() > tol {
                return Err(invalid("open-loop initial state must vanish at y = -1 and y = 1"));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Time history of a run. Fields are in the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub u_snapshots: Vec<Field>,
    pub uhat_snapshots: Option<Vec<Field>>,
    pub controls: Vec<(f64, f64)>,
    pub measurements: Vec<(f64, f64)>,
    pub norm_u: Vec<f64>,
    /// `||u - uhat||`, empty without an observer.
    pub norm_err: Vec<f64>,
    /// `||uhat||`, empty without an observer.
    pub norm_uhat: Vec<f64>,
}

impl Trajectory {
    /// `sqrt(||u||^2 + ||uhat||^2)` per time, or `||u||` without an observer.
    pub fn combined_norm(&self) -> Vec<f64> {
        if self.norm_uhat.is_empty() {
            return self.norm_u.clone();
        }
        self.norm_u.iter().zip(&self.norm_uhat).map(|(a, b)| a.hypot(*b)).collect()
    }
}

/// Tridiagonal system with rows `sub[k] x[k-1] + diag[k] x[k] + sup[k] x[k+1]`.
#[derive(Debug, Clone)]
struct Tridiag {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl Tridiag {
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.diag.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut piv = self.diag[0];
        if piv.abs() < 1e-300 {
            return Err(Error::Singular("tridiagonal solve"));
        }
        c[0] = self.sup[0] / piv;
        d[0] = rhs[0] / piv;
        for k in 1..n {
            piv = self.diag[k] - self.sub[k] * c[k - 1];
            if piv.abs() < 1e-14 * self.diag[k].abs().max(1.0) {
                return Err(Error::Singular("tridiagonal solve"));
            }
            c[k] = self.sup[k] / piv;
            d[k] = (rhs[k] - self.sub[k] * d[k - 1]) / piv;
        }
        let mut x = d;
        for k in (0..n - 1).rev() {
            x[k] -= c[k] * x[k + 1];
        }
        Ok(x)
    }
}

/// Theta scheme `(I - theta dt A) u' = (I + (1 - theta) dt A) u` for `A = eps D2 + lambda`.
#[derive(Debug, Clone)]
struct Theta {
    lhs: Tridiag,
    /// `(1 - theta) dt eps / h^2`
    r_old: f64,
    lam: Vec<f64>,
    dt_old: f64,
}

impl Theta {
    fn new(lam: Vec<f64>, eps_over_h2: f64, dt: f64, theta: f64) -> Self {
        let n = lam.len();
        let r = theta * dt * eps_over_h2;
        let mut sub = vec![-r; n];
        let mut diag: Vec<f64> = lam.iter().map(|l| 1.0 + 2.0 * r - theta * dt * l).collect();
        let mut sup = vec![-r; n];
        for k in [0, n - 1] {
            sub[k] = 0.0;
            sup[k] = 0.0;
            diag[k] = 1.0;
        }
        Self {
            lhs: Tridiag { sub, diag, sup },
            r_old: (1.0 - theta) * dt * eps_over_h2,
            lam,
            dt_old: (1.0 - theta) * dt,
        }
    }

    /// Explicit part on interior rows, boundary rows set to `(left, right)`.
    fn rhs(&self, u: &[f64], left: f64, right: f64) -> Vec<f64> {
        let n = u.len();
        let mut out = vec![0.0; n];
        for k in 1..n - 1 {
            out[k] = u[k] + self.r_old * (u[k - 1] - 2.0 * u[k] + u[k + 1]) + self.dt_old * self.lam[k] * u[k];
        }
        out[0] = left;
        out[n - 1] = right;
        out
    }
}

/// One Crank-Nicolson step of `u_t = eps u_yy + lambda(y) u` with new-level Dirichlet data.
pub fn step_plant(u: &Field, bc_left: f64, bc_right: f64, spec: &PlantSpec, dt: f64) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    let h = u.grid.h();
    let lam: Vec<f64> = u.grid.nodes().iter().map(|&y| spec.lambda(y)).collect();
    let cn = Theta::new(lam, spec.eps / (h * h), dt, 0.5);
    let next = cn.lhs.solve(&cn.rhs(&u.values, bc_left, bc_right))?;
    Field::new(u.grid.clone(), next)
}

/// `(u(yhat0), d_y u(yhat0))` with a centred difference for the flux.
pub fn measure(u: &Field, yhat0: f64) -> Result<(f64, f64)> {
    let g = &u.grid;
    let k = g.node_index(yhat0, 1e-9).ok_or(Error::NotANode { what: "yhat0", value: yhat0 })?;
    if k == 0 || k + 1 >= g.n() {
        return Err(invalid("measurement point must be an interior node"));
    }
    let v = &u.values;
    Ok((v[k], (v[k + 1] - v[k - 1]) / (2.0 * g.h())))
}

/// Second-order one-sided derivative at `x = 0` on spacing `dx`.
fn flux0(f: &[f64], dx: f64) -> f64 {
    (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx)
}

/// One folded observer copy on the plant nodes of one side of `yhat0`.
#[derive(Debug, Clone)]
struct ObserverCopy {
    /// Plant node index of folded node `m`.
    nodes: Vec<usize>,
    scheme: Theta,
    dx: f64,
    /// `theta dt phi` on interior rows.
    inj_new: Vec<f64>,
    /// `(1 - theta) dt phi` on interior rows.
    inj_old: Vec<f64>,
    /// `T^{-1} inj_new`, for the Sherman-Morrison update.
    t_inv_inj: Vec<f64>,
    denom: f64,
}

impl ObserverCopy {
    fn new(nodes: Vec<usize>, lam_plant: &[f64], eps_over_h2: f64, kernel: &ObserverKernel, dt: f64, theta: f64) -> Result<Self> {
        let m = nodes.len();
        if kernel.phi.values.len() != m {
            return Err(Error::GridMismatch {
                expected: m,
                found: kernel.phi.values.len(),
            });
        }
        let lam: Vec<f64> = nodes.iter().map(|&k| lam_plant[k]).collect();
        let scheme = Theta::new(lam, eps_over_h2, dt, theta);
        let dx = 1.0 / (m - 1) as f64;
        let weights = |w: f64| -> Vec<f64> {
            let mut v: Vec<f64> = kernel.phi.values.iter().map(|p| w * p).collect();
            v[0] = 0.0;
            v[m - 1] = 0.0;
            v
        };
        let inj_new = weights(theta * dt);
        let inj_old = weights((1.0 - theta) * dt);
        let t_inv_inj = scheme.lhs.solve(&inj_new)?;
        let denom = 1.0 + (4.0 * t_inv_inj[1] - t_inv_inj[2]) / (2.0 * dx);
        if denom.abs() < 1e-12 {
            return Err(Error::Singular("observer injection update"));
        }
        Ok(Self {
            nodes,
            scheme,
            dx,
            inj_new,
            inj_old,
            t_inv_inj,
            denom,
        })
    }

    fn gather(&self, u: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&k| u[k]).collect()
    }

    /// Advance `uhat` given plant samples `u_old`, `u_new` on this side and the new boundary input.
    ///
    /// The injection `phi (d_x u(0) - d_x uhat(0))` is weighted over both time levels like the rest of the scheme.
    fn step(&self, uhat: &[f64], u_old: &[f64], u_new: &[f64], control: f64) -> Result<Vec<f64>> {
        let m = uhat.len();
        let innov_old = flux0(u_old, self.dx) - flux0(uhat, self.dx);
        let meas_new = flux0(u_new, self.dx);
        let mut b = self.scheme.rhs(uhat, u_new[0], control);
        // the node-0 part of the new-level estimate flux is known from the Dirichlet value
        let known = -3.0 * u_new[0] / (2.0 * self.dx);
        for k in 1..m - 1 {
            b[k] += self.inj_old[k] * innov_old + self.inj_new[k] * (meas_new - known);
        }
        let y = self.scheme.lhs.solve(&b)?;
        let dy = (4.0 * y[1] - y[2]) / (2.0 * self.dx);
        let s = dy / self.denom;
        Ok(y.iter().zip(&self.t_inv_inj).map(|(a, b)| a - s * b).collect())
    }
}

/// The two observer copies about `yhat0` together with the unfolding map.
#[derive(Debug, Clone)]
struct Observer {
    copies: [ObserverCopy; 2],
    n: usize,
}

impl Observer {
    fn new(grid: &Grid1D, spec: &PlantSpec, kernels: &[ObserverKernel; 2], dt: f64, theta: f64) -> Result<Self> {
        let n = grid.n();
        let k0 = grid
            .node_index(spec.yhat0, 1e-9)
            .ok_or(Error::NotANode { what: "yhat0", value: spec.yhat0 })?;
        let lam: Vec<f64> = grid.nodes().iter().map(|&y| spec.lambda(y)).collect();
        let e = spec.eps / (grid.h() * grid.h());
        let left: Vec<usize> = (0..=k0).rev().collect();
        let right: Vec<usize> = (k0..n).collect();
        Ok(Self {
            copies: [
                ObserverCopy::new(left, &lam, e, &kernels[0], dt, theta)?,
                ObserverCopy::new(right, &lam, e, &kernels[1], dt, theta)?,
            ],
            n,
        })
    }

    fn step(&self, uhat: &[f64], u_old: &[f64], u_new: &[f64], controls: (f64, f64)) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        for (copy, c) in self.copies.iter().zip([controls.0, controls.1]) {
            let v = copy.step(&copy.gather(uhat), &copy.gather(u_old), &copy.gather(u_new), c)?;
            for (m, &k) in copy.nodes.iter().enumerate() {
                out[k] = v[m];
            }
        }
        Ok(out)
    }
}

fn l2(values: &[f64], h: f64) -> f64 {
    crate::interp::trapz(&values.iter().map(|v| v * v).collect::<Vec<_>>(), h).sqrt()
}

fn solve2(m: [[f64; 2]; 2], b: [f64; 2]) -> Result<(f64, f64)> {
    let a = [[1.0 - m[0][0], -m[0][1]], [-m[1][0], 1.0 - m[1][1]]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-12 {
        return Err(Error::Singular("implicit control coupling"));
    }
    Ok((
        (a[1][1] * b[0] - a[0][1] * b[1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ))
}

fn pair(v: (f64, f64)) -> [f64; 2] {
    [v.0, v.1]
}

fn combine(base: &[f64], resp: &[Vec<f64>; 2], c: (f64, f64)) -> Vec<f64> {
    base.iter()
        .zip(resp[0].iter().zip(&resp[1]))
        .map(|(b, (r0, r1))| b + c.0 * r0 + c.1 * r1)
        .collect()
}

/// New-level controls, state and estimate.
type Step = ((f64, f64), Vec<f64>, Option<Vec<f64>>);

/// Everything needed to advance the loop by one step of a fixed size and scheme.
struct Stepper<'a> {
    mode: Mode,
    gains: Option<&'a GainTable>,
    plant: Theta,
    observer: Option<Observer>,
    /// Plant responses to unit boundary data.
    e: [Vec<f64>; 2],
    /// Estimate responses to unit boundary data.
    obs_unit: Option<[Vec<f64>; 2]>,
    coupling: Option<[[f64; 2]; 2]>,
}

impl<'a> Stepper<'a> {
    fn new(
        config: &SimConfig,
        gains: Option<&'a GainTable>,
        obs: Option<&[ObserverKernel; 2]>,
        dt: f64,
        theta: f64,
    ) -> Result<Self> {
        let grid = &config.grid;
        let spec = &config.spec;
        let n = grid.n();
        let h = grid.h();
        let lam: Vec<f64> = grid.nodes().iter().map(|&y| spec.lambda(y)).collect();
        let plant = Theta::new(lam, spec.eps / (h * h), dt, theta);
        let observer = match obs {
            Some(k) => Some(Observer::new(grid, spec, k, dt, theta)?),
            None => None,
        };
        let unit = |left: f64, right: f64| -> Result<Vec<f64>> {
            let mut b = vec![0.0; n];
            b[0] = left;
            b[n - 1] = right;
            plant.lhs.solve(&b)
        };
        let e = [unit(1.0, 0.0)?, unit(0.0, 1.0)?];
        let zeros = vec![0.0; n];
        let obs_unit = match &observer {
            Some(o) => Some([
                o.step(&zeros, &zeros, &e[0], (1.0, 0.0))?,
                o.step(&zeros, &zeros, &e[1], (0.0, 1.0))?,
            ]),
            None => None,
        };
        let matrix = |gt: &GainTable, resp: &[Vec<f64>; 2]| -> Result<[[f64; 2]; 2]> {
            let a = gt.apply(&resp[0])?;
            let b = gt.apply(&resp[1])?;
            Ok([[a.0, b.0], [a.1, b.1]])
        };
        let coupling = match (config.mode, gains, &obs_unit) {
            (Mode::StateFeedback, Some(gt), _) => Some(matrix(gt, &e)?),
            (Mode::OutputFeedback, Some(gt), Some(r)) => Some(matrix(gt, r)?),
            _ => None,
        };
        Ok(Self {
            mode: config.mode,
            gains,
            plant,
            observer,
            e,
            obs_unit,
            coupling,
        })
    }

    fn advance(&self, u: &[f64], uhat: &[f64]) -> Result<Step> {
        let base = self.plant.lhs.solve(&self.plant.rhs(u, 0.0, 0.0))?;
        let open = (0.0, 0.0);
        Ok(match (self.mode, self.gains, &self.observer, self.coupling) {
            (Mode::StateFeedback, Some(gt), _, Some(m)) => {
                let c = solve2(m, pair(gt.apply(&base)?))?;
                (c, combine(&base, &self.e, c), None)
            }
            (Mode::OutputFeedback, Some(gt), Some(o), Some(m)) => {
                let obs_base = o.step(uhat, u, &base, open)?;
                let r = self.obs_unit.as_ref().ok_or(Error::MissingInput("observer responses".into()))?;
                let c = solve2(m, pair(gt.apply(&obs_base)?))?;
                (c, combine(&base, &self.e, c), Some(combine(&obs_base, r, c)))
            }
            (Mode::Observer, _, Some(o), _) => {
                let next = o.step(uhat, u, &base, open)?;
                (open, base, Some(next))
            }
            _ => (open, base, None),
        })
    }
}

/// Backward-Euler half steps replacing the first Crank-Nicolson steps.
pub const STARTUP_STEPS: usize = 2;

/// Run the configured loop.
///
/// The first [`STARTUP_STEPS`] steps are each taken as two backward-Euler half
/// steps, which damps the stiff modes excited by incompatible initial and
/// boundary data; the rest use Crank-Nicolson.
pub fn run(config: &SimConfig, gains: Option<&GainTable>, obs: Option<&[ObserverKernel; 2]>) -> Result<Trajectory> {
    config.validate()?;
    let mode = config.mode;
    if mode.needs_gains() && gains.is_none() {
        return Err(Error::MissingInput(format!("mode {} needs a gain table", mode.name())));
    }
    if mode.needs_observer() && obs.is_none() {
        return Err(Error::MissingInput(format!("mode {} needs observer kernels", mode.name())));
    }
    let gains = gains.filter(|_| mode.needs_gains());
    let obs = obs.filter(|_| mode.needs_observer());
    if let Some(gt) = gains {
        config.grid.check_same(gt.grid())?;
    }
    let dt = config.dt;
    let startup = Stepper::new(config, gains, obs, 0.5 * dt, 1.0)?;
    let main = Stepper::new(config, gains, obs, dt, 0.5)?;

    let gauge = config.spec.gauge_factor(&config.grid);
    let mut u: Vec<f64> = config.initial_u.values.iter().zip(&gauge).map(|(v, g)| v * g).collect();
    let mut uhat: Vec<f64> = config.initial_uhat.values.iter().zip(&gauge).map(|(v, g)| v * g).collect();
    let steps = config.steps();
    let with_obs = obs.is_some();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        snapshot_times: Vec::new(),
        u_snapshots: Vec::new(),
        uhat_snapshots: with_obs.then(Vec::new),
        controls: Vec::with_capacity(steps + 1),
        measurements: Vec::with_capacity(steps + 1),
        norm_u: Vec::with_capacity(steps + 1),
        norm_err: Vec::new(),
        norm_uhat: Vec::new(),
    };

    let initial_controls = match (mode, gains) {
        (Mode::StateFeedback, Some(gt)) => gt.apply(&u)?,
        (Mode::OutputFeedback, Some(gt)) => gt.apply(&uhat)?,
        _ => (0.0, 0.0),
    };
    record(&mut traj, config, 0, 0.0, &u, with_obs.then_some(uhat.as_slice()), initial_controls, &gauge)?;

    for step in 1..=steps {
        let substeps: &[&Stepper] = if step <= STARTUP_STEPS { &[&startup, &startup] } else { &[&main] };
        let mut controls = (0.0, 0.0);
        for st in substeps {
            let (c, u_new, uhat_new) = st.advance(&u, &uhat)?;
            controls = c;
            u = u_new;
            if let Some(v) = uhat_new {
                uhat = v;
            }
        }
        let t = step as f64 * dt;
        record(&mut traj, config, step, t, &u, with_obs.then_some(uhat.as_slice()), controls, &gauge)?;
    }
    Ok(traj)
}

#[allow(clippy::too_many_arguments)]
fn record(
    traj: &mut Trajectory,
    config: &SimConfig,
    step: usize,
    t: f64,
    u: &[f64],
    uhat: Option<&[f64]>,
    controls: (f64, f64),
    gauge: &[f64],
) -> Result<()> {
    let grid = &config.grid;
    let h = grid.h();
    let ubar: Vec<f64> = u.iter().zip(gauge).map(|(v, g)| v / g).collect();
    traj.times.push(t);
    traj.controls.push((controls.0, controls.1 / gauge[gauge.len() - 1]));
    let uf = Field::new(grid.clone(), ubar)?;
    traj.measurements.push(measure(&Field::new(grid.clone(), u.to_vec())?, config.spec.yhat0)?);
    traj.norm_u.push(l2(&uf.values, h));
    let snap = step % config.stride == 0;
    if let Some(uh) = uhat {
        let hbar: Vec<f64> = uh.iter().zip(gauge).map(|(v, g)| v / g).collect();
        let err: Vec<f64> = uf.values.iter().zip(&hbar).map(|(a, b)| a - b).collect();
        traj.norm_err.push(l2(&err, h));
        traj.norm_uhat.push(l2(&hbar, h));
        if snap {
            if let Some(s) = traj.uhat_snapshots.as_mut() {
                s.push(Field::new(grid.clone(), hbar)?);
            }
        }
    }
    if snap {
        traj.snapshot_times.push(t);
        traj.u_snapshots.push(uf);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Profile;
    use crate::synthesis::{observer_kernels_for_grid, solve_control_kernels, SolverSettings};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    const N: usize = 81;

    fn small_setup(y0: f64, yhat0: f64) -> (GainTable, [ObserverKernel; 2]) {
        let spec = PlantSpec::table1(y0, yhat0).unwrap();
        let s = SolverSettings {
            tri_n: 41,
            ..SolverSettings::default()
        };
        let grid = Grid1D::new(-1.0, 1.0, N).unwrap();
        let gt = solve_control_kernels(&spec, 5.0, 5.0, &s).unwrap().gains(&grid).unwrap();
        let obs = observer_kernels_for_grid(&spec, &grid, 1.0, 1.0, &s).unwrap();
        (gt, obs)
    }

    fn config(mode: Mode, t_end: f64) -> SimConfig {
        let mut c = SimConfig::table1(-0.05, 0.05, N, 0.005, mode).unwrap();
        c.t_end = t_end;
        c
    }

    #[test]
    fn heat_eigenmode_decays_at_its_eigenvalue() {
        let spec = PlantSpec::new(1.0, Profile::Constant(0.0), Profile::Constant(0.0), -0.5, 0.5).unwrap();
        let grid = Grid1D::new(-1.0, 1.0, 401).unwrap();
        let mut u = Field::from_fn(grid, |y| (FRAC_PI_2 * y).cos());
        for _ in 0..100 {
            u = step_plant(&u, 0.0, 0.0, &spec, 1e-3).unwrap();
        }
        let expected = (-FRAC_PI_2 * FRAC_PI_2 * 0.1).exp();
        assert!((u.values[200] - expected).abs() < 1e-5, "{}", u.values[200]);
    }

    #[test]
    fn constant_reaction_multiplies_growth() {
        let grid = Grid1D::new(-1.0, 1.0, 201).unwrap();
        let u0 = Field::from_fn(grid, |y| (FRAC_PI_2 * y).cos());
        let go = |lam: f64| {
            let spec = PlantSpec::new(1.0, Profile::Constant(0.0), Profile::Constant(lam), -0.5, 0.5).unwrap();
            let mut u = u0.clone();
            for _ in 0..50 {
                u = step_plant(&u, 0.0, 0.0, &spec, 2e-3).unwrap();
            }
            u.values[100]
        };
        let ratio = go(3.0) / go(0.0);
        assert!((ratio - (0.3f64).exp()).abs() < 1e-4, "{ratio}");
    }

    #[test]
    fn centred_flux_is_exact_for_quadratics() {
        let u = Field::from_fn(Grid1D::new(-1.0, 1.0, 41).unwrap(), |y| y * y);
        let (v, d) = measure(&u, 0.05).unwrap();
        assert!((v - 0.0025).abs() < 1e-15);
        assert!((d - 0.1).abs() < 1e-12);
        assert!(measure(&u, 0.06).is_err());
        assert!(measure(&u, 1.0).is_err());
    }

    #[test]
    fn missing_inputs_are_rejected() {
        let (gt, obs) = small_setup(-0.05, 0.05);
        assert!(matches!(run(&config(Mode::StateFeedback, 0.1), None, Some(&obs)), Err(Error::MissingInput(_))));
        assert!(matches!(run(&config(Mode::Observer, 0.1), Some(&gt), None), Err(Error::MissingInput(_))));
        assert!(matches!(run(&config(Mode::OutputFeedback, 0.1), Some(&gt), None), Err(Error::MissingInput(_))));
        assert!(run(&config(Mode::Open, 0.1), None, None).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::table1(-0.05, 0.05, N, 0.02, Mode::Open).is_err());
        assert!(SimConfig::table1(-0.05, 0.06, N, 0.005, Mode::Open).is_err());
        assert!(SimConfig::table1(-0.05, 0.975, N, 0.005, Mode::Open).is_err());
        let mut c = config(Mode::Open, 1.0);
        c.initial_u = Field::from_fn(c.grid.clone(), |_| 1.0);
        assert!(c.validate().is_err());
        c.mode = Mode::StateFeedback;
        assert!(c.validate().is_ok());
        assert_eq!("output_fb".parse::<Mode>().unwrap(), Mode::OutputFeedback);
        assert!("closed".parse::<Mode>().is_err());
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let (gt, obs) = small_setup(-0.05, 0.05);
        for mode in [Mode::Open, Mode::StateFeedback, Mode::Observer, Mode::OutputFeedback] {
            let mut c = config(mode, 0.2);
            c.initial_u = Field::zeros(c.grid.clone());
            let tr = run(&c, Some(&gt), Some(&obs)).unwrap();
            assert!(tr.norm_u.iter().chain(&tr.norm_err).all(|&v| v == 0.0));
            assert!(tr.controls.iter().all(|&(a, b)| a == 0.0 && b == 0.0));
        }
    }

    #[test]
    fn exact_initial_estimate_reproduces_state_feedback() {
        let (gt, obs) = small_setup(-0.05, 0.05);
        let state = run(&config(Mode::StateFeedback, 1.0), Some(&gt), None).unwrap();
        let mut c = config(Mode::OutputFeedback, 1.0);
        c.initial_uhat = c.initial_u.clone();
        let out = run(&c, Some(&gt), Some(&obs)).unwrap();
        for (a, b) in state.norm_u.iter().zip(&out.norm_u) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(out.norm_err.iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn estimation_error_ignores_the_loop() {
        let (gt, obs) = small_setup(-0.3, -0.45);
        let mk = |mode| {
            let mut c = config(mode, 1.5);
            c.spec = PlantSpec::table1(-0.3, -0.45).unwrap();
            c
        };
        let a = run(&mk(Mode::Observer), Some(&gt), Some(&obs)).unwrap();
        let b = run(&mk(Mode::OutputFeedback), Some(&gt), Some(&obs)).unwrap();
        let peak = a.norm_err.iter().fold(0.0_f64, |m, v| m.max(*v));
        for (x, y) in a.norm_err.iter().zip(&b.norm_err) {
            assert!((x - y).abs() < 1e-9 * peak);
        }
        assert!(a.norm_err[a.norm_err.len() - 1] < 1e-3 * a.norm_err[0]);
    }

    #[test]
    fn crank_nicolson_order_survives_the_start_up() {
        let end = |dt: f64| {
            let mut c = config(Mode::Open, 0.4);
            c.dt = dt;
            let tr = run(&c, None, None).unwrap();
            tr.norm_u[tr.norm_u.len() - 1]
        };
        let (a, b, c) = (end(0.01), end(0.005), end(0.0025));
        let ratio = (a - b) / (b - c);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn snapshots_follow_the_stride() {
        let (gt, obs) = small_setup(-0.05, 0.05);
        let tr = run(&config(Mode::OutputFeedback, 0.5), Some(&gt), Some(&obs)).unwrap();
        assert_eq!(tr.times.len(), 101);
        assert_eq!(tr.snapshot_times.len(), 11);
        assert_eq!(tr.uhat_snapshots.as_ref().unwrap().len(), 11);
        assert!((tr.snapshot_times[10] - 0.5).abs() < 1e-12);
        let comb = tr.combined_norm();
        assert!((comb[0] - tr.norm_u[0]).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn trajectories_are_linear_in_the_initial_data(s in -3.0f64..3.0) {
            let (gt, obs) = small_setup(-0.05, 0.05);
            let base = config(Mode::OutputFeedback, 0.3);
            let mut scaled = base.clone();
            scaled.initial_u.values.iter_mut().for_each(|v| *v *= s);
            let a = run(&base, Some(&gt), Some(&obs)).unwrap();
            let b = run(&scaled, Some(&gt), Some(&obs)).unwrap();
            for (x, y) in a.controls.iter().zip(&b.controls) {
                prop_assert!((s * x.0 - y.0).abs() < 1e-10 * (1.0 + x.0.abs()));
                prop_assert!((s * x.1 - y.1).abs() < 1e-10 * (1.0 + x.1.abs()));
            }
            for (x, y) in a.norm_u.iter().zip(&b.norm_u) {
                prop_assert!((s.abs() * x - y).abs() < 1e-10 * (1.0 + x));
            }
        }
    }
}
