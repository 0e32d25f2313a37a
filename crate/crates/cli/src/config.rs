//! TOML run configuration and command-line overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use foldbs_core::sim::{Mode, SimConfig};
use foldbs_core::synthesis::SolverSettings;
use foldbs_core::{Field, Grid1D, PlantSpec, Profile};
use serde::Deserialize;

/// A coefficient given as a builtin name or as polynomial coefficients, highest degree first.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Coeffs {
    Named(String),
    List(Vec<f64>),
}

impl Coeffs {
    pub fn profile(&self) -> Result<Profile> {
        match self {
            Coeffs::Named(n) if n == "table1" => Ok(Profile::table1()),
            Coeffs::Named(n) if n == "zero" => Ok(Profile::Constant(0.0)),
            Coeffs::Named(n) => bail!("unknown builtin profile {n:?} (expected \"table1\" or \"zero\")"),
            Coeffs::List(c) if c.is_empty() => bail!("polynomial needs at least one coefficient"),
            Coeffs::List(c) if c.iter().any(|v| !v.is_finite()) => bail!("polynomial coefficients must be finite"),
            Coeffs::List(c) => Ok(Profile::Polynomial(c.clone())),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    /// `cos(pi y / 2)`
    Cos,
    Zero,
    /// Same as the plant's initial state.
    Exact,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub eps: f64,
    pub lambda: Coeffs,
    pub nu: Coeffs,
    pub y0: f64,
    pub yhat0: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            eps: 1.0,
            lambda: Coeffs::Named("table1".into()),
            nu: Coeffs::Named("zero".into()),
            y0: -0.05,
            yhat0: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tri_n: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            tri_n: s.tri_n,
            tol: s.tol,
            max_iter: s.max_iter,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub grid_n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub mode: String,
    pub stride: usize,
    pub initial: Initial,
    pub initial_estimate: Initial,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            grid_n: 401,
            dt: 0.005,
            t_end: 3.0,
            mode: "output_fb".into(),
            stride: 10,
            initial: Initial::Cos,
            initial_estimate: Initial::Zero,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub y0: Vec<f64>,
    pub yhat0: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            y0: vec![-0.05, -0.30],
            yhat0: vec![0.05, -0.45],
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub plant: PlantSection,
    pub control: Rates,
    pub observer: Rates,
    pub solver: SolverSection,
    pub sim: SimSection,
    pub sweep: SweepSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            plant: PlantSection::default(),
            control: Rates { c1: 5.0, c2: 5.0 },
            observer: Rates { c1: 1.0, c2: 1.0 },
            solver: SolverSection::default(),
            sim: SimSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Values given on the command line; each replaces the matching config entry.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tri_n: Option<usize>,
    pub grid_n: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub mode: Option<String>,
    pub y0: Vec<f64>,
    pub yhat0: Vec<f64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    /// Apply overrides. A single `--y0`/`--yhat0` also sets the plant value;
    /// lists only replace the sweep lists.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.tri_n {
            self.solver.tri_n = v;
        }
        if let Some(v) = o.grid_n {
            self.sim.grid_n = v;
        }
        if let Some(v) = o.dt {
            self.sim.dt = v;
        }
        if let Some(v) = o.t_end {
            self.sim.t_end = v;
        }
        if let Some(v) = &o.mode {
            self.sim.mode = v.clone();
        }
        if !o.y0.is_empty() {
            self.sweep.y0 = o.y0.clone();
            self.plant.y0 = o.y0[0];
        }
        if !o.yhat0.is_empty() {
            self.sweep.yhat0 = o.yhat0.clone();
            self.plant.yhat0 = o.yhat0[0];
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec(self.plant.y0, self.plant.yhat0)?;
        for (name, v) in [
            ("control.c1", self.control.c1),
            ("control.c2", self.control.c2),
            ("observer.c1", self.observer.c1),
            ("observer.c2", self.observer.c2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive, got {v}");
            }
        }
        self.settings().validate()?;
        if !(self.sim.dt > 0.0) {
            bail!("sim.dt must be positive, got {}", self.sim.dt);
        }
        if !(self.sim.t_end > 0.0) {
            bail!("sim.t_end must be positive, got {}", self.sim.t_end);
        }
        self.mode()?;
        if self.sweep.y0.is_empty() || self.sweep.yhat0.is_empty() {
            bail!("sweep lists must be nonempty");
        }
        for &y0 in &self.sweep.y0 {
            for &yh in &self.sweep.yhat0 {
                self.spec(y0, yh)?;
            }
        }
        Ok(())
    }

    pub fn spec(&self, y0: f64, yhat0: f64) -> Result<PlantSpec> {
        Ok(PlantSpec::new(
            self.plant.eps,
            self.plant.nu.profile()?,
            self.plant.lambda.profile()?,
            y0,
            yhat0,
        )?)
    }

    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            tri_n: self.solver.tri_n,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn mode(&self) -> Result<Mode> {
        Ok(self.sim.mode.parse::<Mode>()?)
    }

    pub fn sim_config(&self, y0: f64, yhat0: f64) -> Result<SimConfig> {
        let spec = self.spec(y0, yhat0)?;
        let grid = Grid1D::new(-1.0, 1.0, self.sim.grid_n)?;
        let cos = |g: &Grid1D| Field::from_fn(g.clone(), |y| (std::f64::consts::FRAC_PI_2 * y).cos());
        let initial_u = match self.sim.initial {
            Initial::Cos => cos(&grid),
            Initial::Zero | Initial::Exact => Field::zeros(grid.clone()),
        };
        let initial_uhat = match self.sim.initial_estimate {
            Initial::Cos => cos(&grid),
            Initial::Zero => Field::zeros(grid.clone()),
            Initial::Exact => initial_u.clone(),
        };
        let cfg = SimConfig {
            spec,
            grid,
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            c1: self.control.c1,
            c2: self.control.c2,
            cc1: self.observer.c1,
            cc2: self.observer.c2,
            initial_u,
            initial_uhat,
            mode: self.mode()?,
            stride: self.sim.stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_scenario() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!(c.plant.lambda.profile().unwrap(), Profile::table1());
        assert_eq!(c.mode().unwrap(), Mode::OutputFeedback);
    }

    #[test]
    fn parses_partial_toml() {
        let c: Config = toml::from_str(
            "[plant]\nlambda = [-4.0, -2.0, 6.0]\ny0 = -0.3\n[sim]\nmode = \"state_fb\"\ninitial_estimate = \"exact\"\n",
        )
        .unwrap();
        assert_eq!(c.plant.y0, -0.3);
        assert_eq!(c.plant.lambda.profile().unwrap(), Profile::table1());
        assert_eq!(c.sim.initial_estimate, Initial::Exact);
        assert_eq!(c.control, Rates { c1: 5.0, c2: 5.0 });
        assert!(toml::from_str::<Config>("[plant]\nepsilon = 1.0\n").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = |f: &dyn Fn(&mut Config)| {
            let mut c = Config::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(&|c| c.plant.eps = -1.0));
        assert!(bad(&|c| c.plant.y0 = 0.2));
        assert!(bad(&|c| c.plant.yhat0 = 1.0));
        assert!(bad(&|c| c.sim.dt = 0.0));
        assert!(bad(&|c| c.control.c2 = 0.0));
        assert!(bad(&|c| c.sim.mode = "closed".into()));
        assert!(bad(&|c| c.plant.lambda = Coeffs::Named("cubic".into())));
        assert!(bad(&|c| c.sweep.y0 = vec![-0.05, 0.5]));
    }

    #[test]
    fn single_override_sets_plant_and_sweep() {
        let mut c = Config::default();
        c.apply(&Overrides {
            y0: vec![-0.3],
            tri_n: Some(51),
            ..Overrides::default()
        });
        assert_eq!(c.plant.y0, -0.3);
        assert_eq!(c.sweep.y0, vec![-0.3]);
        assert_eq!(c.solver.tri_n, 51);
    }
}
