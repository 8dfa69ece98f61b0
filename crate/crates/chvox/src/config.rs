//! Flat `key = value` configuration files: one struct carrying every
//! physical, numerical, and output parameter, with per-scenario defaults,
//! a parser, and a serializer whose output parses back to itself.
//!
//! Lines starting with `#` (and trailing `# ...` fragments) are comments.
//! Unknown keys are rejected so typos fail loudly instead of silently
//! running the default.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::grid::ExteriorSpec;
use crate::krylov::GmresConfig;
use crate::newton::NewtonParams;
use crate::stepper::{Preconditioner, SolverParams};
use crate::velocity::VelocitySpec;
use crate::{Error, Result};

/// Which driver a config file belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Manufactured-solution refinement study.
    Convergence,
    /// Random-initial-data phase separation in a closed box.
    Spinodal,
    /// Pseudo-2D square droplet relaxing to a stationary disc.
    Droplet,
    /// Advective invasion of a masked pore space.
    Breakthrough,
    /// No scenario-specific initial data; plain time stepping.
    Custom,
}

impl Scenario {
    /// Config-file spelling.
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Convergence => "convergence",
            Scenario::Spinodal => "spinodal",
            Scenario::Droplet => "droplet",
            Scenario::Breakthrough => "breakthrough",
            Scenario::Custom => "custom",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convergence" => Ok(Scenario::Convergence),
            "spinodal" => Ok(Scenario::Spinodal),
            "droplet" => Ok(Scenario::Droplet),
            "breakthrough" => Ok(Scenario::Breakthrough),
            "custom" => Ok(Scenario::Custom),
            _ => Err(Error::Config(format!("unknown scenario '{s}'"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One piece of a time step schedule: use `tau` while t < `until_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSegment {
    /// Upper end of the validity window (infinity on the last segment).
    pub until_time: f64,
    /// Step size inside the window.
    pub tau: f64,
}

/// How often VTK snapshots are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotCadence {
    /// No snapshots.
    Off,
    /// After steps 1, 2, 4, 8, ... (and the final step).
    PowersOfTwo,
    /// Every k-th step.
    Every(usize),
}

impl fmt::Display for SnapshotCadence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnapshotCadence::Off => write!(f, "off"),
            SnapshotCadence::PowersOfTwo => write!(f, "pow2"),
            SnapshotCadence::Every(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for SnapshotCadence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(SnapshotCadence::Off),
            "pow2" => Ok(SnapshotCadence::PowersOfTwo),
            _ => s
                .parse::<usize>()
                .map(SnapshotCadence::Every)
                .map_err(|_| Error::Config(format!("bad vtk_cadence '{s}'"))),
        }
    }
}

/// Every knob of a run. Construct via [`ScenarioConfig::defaults_for`] or
/// [`ScenarioConfig::parse`]; the serializer emits all effective values.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Driver selection.
    pub scenario: Scenario,
    /// Voxels per cube edge.
    pub n: usize,
    /// Polynomial degree of the broken space.
    pub p: usize,
    /// Mobility switch (0 constant, 1 degenerate).
    pub beta: f64,
    /// Interface energy coefficient.
    pub kappa: f64,
    /// Peclet number.
    pub peclet: f64,
    /// Interior penalty override; `None` uses 2^p.
    pub sigma: Option<f64>,
    /// Time step schedule; a single segment means a fixed step.
    pub tau: Vec<TauSegment>,
    /// End time of the run.
    pub t_end: f64,
    /// Absolute nonlinear tolerance (also the stationarity threshold).
    pub tol_abs: f64,
    /// Relative nonlinear tolerance.
    pub tol_rel: f64,
    /// Nonlinear iteration cap per step.
    pub max_newton_iters: usize,
    /// GMRES restart length.
    pub krylov_restart: usize,
    /// GMRES relative tolerance.
    pub krylov_rel_tol: f64,
    /// GMRES absolute tolerance.
    pub krylov_abs_tol: f64,
    /// GMRES total iteration cap.
    pub krylov_max_iters: usize,
    /// Inner solver preconditioner.
    pub precond: Preconditioner,
    /// Seed for all randomized initial data.
    pub rng_seed: u64,
    /// Voxel mask path; `None` means the scenario's built-in domain.
    pub mask: Option<PathBuf>,
    /// Wall/exterior classification of the six cube sides.
    pub exterior: ExteriorSpec,
    /// Advection field.
    pub velocity: VelocitySpec,
    /// Inflow boundary value.
    pub c_in: f64,
    /// Directory for CSV/VTK output; `None` disables file output.
    pub output_dir: Option<PathBuf>,
    /// Snapshot cadence.
    pub vtk_cadence: SnapshotCadence,
    /// Hard cap on accepted steps (`None` = until t_end).
    pub max_steps: Option<usize>,
    /// Stop as soon as a step reports the stationary flag.
    pub run_to_stationary: bool,
    /// Spinodal: mean of the random initial data.
    pub mean: f64,
    /// Spinodal: amplitude of the random perturbation.
    pub amplitude: f64,
    /// Droplet: initial square side length L.
    pub droplet_side: f64,
    /// Droplet: initial composition inside the square (outside gets the
    /// negated value).
    pub droplet_value: f64,
    /// Convergence: finest refinement level; 0 picks 5 for p <= 1, 4 for
    /// higher degrees.
    pub levels: usize,
}

impl ScenarioConfig {
    /// Built-in desk-scale defaults of one scenario.
    pub fn defaults_for(scenario: Scenario) -> Self {
        let fixed = |tau: f64| vec![TauSegment { until_time: f64::INFINITY, tau }];
        let base = Self {
            scenario,
            n: 16,
            p: 0,
            beta: 0.0,
            kappa: 1.0 / 256.0,
            peclet: 1.0,
            sigma: None,
            tau: fixed(1e-3),
            t_end: 0.1,
            tol_abs: 1e-16,
            tol_rel: 1e-8,
            max_newton_iters: 50,
            krylov_restart: 60,
            krylov_rel_tol: 1e-8,
            krylov_abs_tol: 1e-14,
            krylov_max_iters: 2000,
            precond: Preconditioner::FastDiag,
            rng_seed: 42,
            mask: None,
            exterior: ExteriorSpec::all_wall(),
            velocity: VelocitySpec::Zero,
            c_in: 1.0,
            output_dir: None,
            vtk_cadence: SnapshotCadence::Off,
            max_steps: None,
            run_to_stationary: false,
            mean: -0.4,
            amplitude: 0.05,
            droplet_side: 0.5,
            droplet_value: 0.95,
            levels: 0,
        };
        match scenario {
            Scenario::Convergence => Self { p: 1, kappa: 1.0, t_end: 1.0, ..base },
            Scenario::Spinodal => Self {
                n: 32,
                kappa: 1.0 / 1024.0,
                tau: fixed(2e-3),
                t_end: 1.024,
                vtk_cadence: SnapshotCadence::PowersOfTwo,
                ..base
            },
            Scenario::Droplet => Self {
                n: 40,
                kappa: 1.0 / 800.0,
                tau: fixed(1e-3),
                t_end: 16.0,
                run_to_stationary: true,
                ..base
            },
            Scenario::Breakthrough => Self {
                n: 24,
                kappa: 1.0 / 576.0,
                peclet: 100.0,
                tau: fixed(2e-3),
                t_end: 1.0,
                precond: Preconditioner::BlockJacobi,
                exterior: ExteriorSpec::x_open(),
                velocity: VelocitySpec::Constant([1.0, 0.0, 0.0]),
                ..base
            },
            Scenario::Custom => base,
        }
    }

    /// Parse a config file's text. Keys not present keep the scenario's
    /// defaults, so the `scenario` key (if any) is read first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let scenario = match pairs.iter().find(|(k, _)| k == "scenario") {
            Some((_, v)) => v.parse()?,
            None => Scenario::Custom,
        };
        let mut cfg = Self::defaults_for(scenario);
        for (key, value) in &pairs {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value '{value}' for key '{key}'")))
        }
        match key {
            "scenario" => self.scenario = value.parse()?,
            "n" => self.n = num(key, value)?,
            "p" => self.p = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "peclet" => self.peclet = num(key, value)?,
            "sigma" => {
                self.sigma = if value == "auto" { None } else { Some(num(key, value)?) };
            }
            "tau" => self.tau = parse_tau_schedule(value)?,
            "t_end" => self.t_end = num(key, value)?,
            "tol_abs" => self.tol_abs = num(key, value)?,
            "tol_rel" => self.tol_rel = num(key, value)?,
            "max_newton_iters" => self.max_newton_iters = num(key, value)?,
            "krylov_restart" => self.krylov_restart = num(key, value)?,
            "krylov_rel_tol" => self.krylov_rel_tol = num(key, value)?,
            "krylov_abs_tol" => self.krylov_abs_tol = num(key, value)?,
            "krylov_max_iters" => self.krylov_max_iters = num(key, value)?,
            "precond" => self.precond = value.parse()?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            "mask" => {
                self.mask = if value == "none" { None } else { Some(PathBuf::from(value)) };
            }
            "exterior" => self.exterior = parse_exterior(value)?,
            "velocity" => self.velocity = VelocitySpec::parse(value)?,
            "c_in" => self.c_in = num(key, value)?,
            "output_dir" => {
                self.output_dir = if value == "none" { None } else { Some(PathBuf::from(value)) };
            }
            "vtk_cadence" => self.vtk_cadence = value.parse()?,
            "max_steps" => {
                self.max_steps = if value == "none" { None } else { Some(num(key, value)?) };
            }
            "run_to_stationary" => self.run_to_stationary = parse_bool(key, value)?,
            "mean" => self.mean = num(key, value)?,
            "amplitude" => self.amplitude = num(key, value)?,
            "droplet_side" => self.droplet_side = num(key, value)?,
            "droplet_value" => self.droplet_value = num(key, value)?,
            "levels" => {
                self.levels = if value == "auto" { 0 } else { num(key, value)? };
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.p > 3 {
            return Err(Error::Config(format!("p = {} out of range 0..=3", self.p)));
        }
        if self.beta != 0.0 && self.beta != 1.0 {
            return Err(Error::Config(format!("beta must be 0 or 1, got {}", self.beta)));
        }
        if !(self.kappa > 0.0) || !(self.peclet > 0.0) {
            return Err(Error::Config("kappa and peclet must be positive".into()));
        }
        if self.tau.is_empty() {
            return Err(Error::Config("empty tau schedule".into()));
        }
        let mut prev = 0.0;
        for seg in &self.tau {
            if !(seg.tau > 0.0) {
                return Err(Error::Config("tau values must be positive".into()));
            }
            if seg.until_time <= prev {
                return Err(Error::Config("tau schedule times must increase".into()));
            }
            prev = seg.until_time;
        }
        if self.tau.last().unwrap().until_time.is_finite() {
            return Err(Error::Config("last tau segment must be open-ended".into()));
        }
        Ok(())
    }

    /// Step size in effect at time `t`.
    pub fn tau_at(&self, t: f64) -> f64 {
        for seg in &self.tau {
            if t < seg.until_time {
                return seg.tau;
            }
        }
        self.tau.last().unwrap().tau
    }

    /// Penalty actually used: the override, or 2^p.
    pub fn sigma_value(&self) -> f64 {
        self.sigma.unwrap_or_else(|| (2.0f64).powi(self.p as i32))
    }

    /// Mesh size h = 1/n.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Non-fatal configuration smells, one message per finding.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let h2 = self.h() * self.h();
        if self.kappa < h2 {
            out.push(format!(
                "kappa = {:e} is below h^2 = {:e}; the interface is thinner than \
                 the mesh resolves (recommended kappa >= h^2)",
                self.kappa, h2
            ));
        }
        out
    }

    /// Solver parameter bundle for the stepper.
    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            beta: self.beta,
            kappa: self.kappa,
            peclet: self.peclet,
            sigma: self.sigma_value(),
            newton: NewtonParams {
                tol_abs: self.tol_abs,
                tol_rel: self.tol_rel,
                max_iters: self.max_newton_iters,
                ..NewtonParams::default()
            },
            gmres: GmresConfig {
                restart: self.krylov_restart,
                rel_tol: self.krylov_rel_tol,
                abs_tol: self.krylov_abs_tol,
                max_iters: self.krylov_max_iters,
            },
            precond: self.precond,
        }
    }

    /// Render as config-file text; `parse` of the output reproduces `self`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("scenario", self.scenario.to_string());
        kv("n", self.n.to_string());
        kv("p", self.p.to_string());
        kv("beta", self.beta.to_string());
        kv("kappa", format!("{:e}", self.kappa));
        kv("peclet", format!("{:e}", self.peclet));
        kv("sigma", self.sigma.map_or("auto".into(), |v| format!("{v:e}")));
        kv("tau", format_tau_schedule(&self.tau));
        kv("t_end", format!("{:e}", self.t_end));
        kv("tol_abs", format!("{:e}", self.tol_abs));
        kv("tol_rel", format!("{:e}", self.tol_rel));
        kv("max_newton_iters", self.max_newton_iters.to_string());
        kv("krylov_restart", self.krylov_restart.to_string());
        kv("krylov_rel_tol", format!("{:e}", self.krylov_rel_tol));
        kv("krylov_abs_tol", format!("{:e}", self.krylov_abs_tol));
        kv("krylov_max_iters", self.krylov_max_iters.to_string());
        kv("precond", self.precond.name().into());
        kv("rng_seed", self.rng_seed.to_string());
        kv("mask", self.mask.as_ref().map_or("none".into(), |p| p.display().to_string()));
        kv("exterior", format_exterior(&self.exterior));
        kv("velocity", self.velocity.to_string());
        kv("c_in", format!("{:e}", self.c_in));
        kv(
            "output_dir",
            self.output_dir.as_ref().map_or("none".into(), |p| p.display().to_string()),
        );
        kv("vtk_cadence", self.vtk_cadence.to_string());
        kv("max_steps", self.max_steps.map_or("none".into(), |v| v.to_string()));
        kv("run_to_stationary", self.run_to_stationary.to_string());
        kv("mean", format!("{:e}", self.mean));
        kv("amplitude", format!("{:e}", self.amplitude));
        kv("droplet_side", format!("{:e}", self.droplet_side));
        kv("droplet_value", format!("{:e}", self.droplet_value));
        kv("levels", if self.levels == 0 { "auto".into() } else { self.levels.to_string() });
        s
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value '{value}' for key '{key}'"))),
    }
}

/// Either a bare number (fixed step) or segments `(until_time:tau) ...`.
fn parse_tau_schedule(value: &str) -> Result<Vec<TauSegment>> {
    let bad = || Error::Config(format!("bad tau schedule '{value}'"));
    if !value.contains('(') {
        let tau: f64 = value.trim().parse().map_err(|_| bad())?;
        return Ok(vec![TauSegment { until_time: f64::INFINITY, tau }]);
    }
    let mut out = Vec::new();
    for part in value.split(')') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let inner = part.strip_prefix('(').ok_or_else(bad)?;
        let (t, tau) = inner.split_once(':').ok_or_else(bad)?;
        let until_time = match t.trim() {
            "inf" => f64::INFINITY,
            other => other.parse().map_err(|_| bad())?,
        };
        out.push(TauSegment { until_time, tau: tau.trim().parse().map_err(|_| bad())? });
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn format_tau_schedule(segments: &[TauSegment]) -> String {
    if segments.len() == 1 && segments[0].until_time.is_infinite() {
        return format!("{:e}", segments[0].tau);
    }
    segments
        .iter()
        .map(|s| {
            let t = if s.until_time.is_infinite() {
                "inf".to_string()
            } else {
                format!("{:e}", s.until_time)
            };
            format!("({}:{:e})", t, s.tau)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Six whitespace-separated tokens `wall`/`exterior` in side order
/// x- x+ y- y+ z- z+.
fn parse_exterior(value: &str) -> Result<ExteriorSpec> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    if tokens.len() != 6 {
        return Err(Error::Config(format!(
            "exterior needs 6 side tokens (x- x+ y- y+ z- z+), got {}",
            tokens.len()
        )));
    }
    let mut sides = [false; 6];
    for (side, token) in sides.iter_mut().zip(&tokens) {
        *side = match *token {
            "wall" => false,
            "exterior" => true,
            _ => return Err(Error::Config(format!("bad exterior side '{token}'"))),
        };
    }
    Ok(ExteriorSpec { sides })
}

fn format_exterior(spec: &ExteriorSpec) -> String {
    spec.sides
        .iter()
        .map(|&open| if open { "exterior" } else { "wall" })
        .collect::<Vec<_>>()
        .join(" ")
}
