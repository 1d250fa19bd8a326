//! Optimizer settings document (TOML). Every key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use sensoralloc::hypergrad::{GradientOptions, ObservationCoupling};
use sensoralloc::outer::{Algorithm, GridAxis, StepSchedule, WarmStart};
use sensoralloc::qp::InnerStep;
use sensoralloc::{AnnealConfig, InnerConfig, InnerSolver, OuterConfig, SensorLayout};

use crate::scenario::ScenarioError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    PrimalDual,
    ActiveSet,
    Enumerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub solver: SolverKind,
    pub gamma: f64,
    /// Fixed primal-dual stepsize; omitted means the automatic choice.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub max_iters: usize,
    pub kkt_tol: f64,
    pub early_exit: bool,
    pub check_every: usize,
}

impl SolverSection {
    fn with_kind(solver: SolverKind) -> Self {
        let d = InnerConfig::default();
        Self {
            solver,
            gamma: d.gamma,
            step: None,
            max_iters: d.max_iters,
            kkt_tol: d.kkt_tol,
            early_exit: d.early_exit,
            check_every: d.check_every,
        }
    }

    pub fn build(&self) -> InnerSolver {
        match self.solver {
            SolverKind::ActiveSet => InnerSolver::ActiveSet,
            SolverKind::Enumerate => InnerSolver::Enumerate,
            SolverKind::PrimalDual => InnerSolver::PrimalDual(InnerConfig {
                gamma: self.gamma,
                step: self.step.map_or(InnerStep::Auto, InnerStep::Fixed),
                max_iters: self.max_iters,
                active_tol: None,
                kkt_tol: self.kkt_tol,
                early_exit: self.early_exit,
                check_every: self.check_every,
            }),
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        Self::with_kind(SolverKind::PrimalDual)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    Decaying,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmKind {
    SameSample,
    Always,
    Never,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    Resynthesized,
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterSection {
    pub iterations: usize,
    pub batch_size: usize,
    pub runs: usize,
    pub step: f64,
    pub schedule: ScheduleKind,
    pub eval_n: usize,
    pub alpha: f64,
    pub trace_every: usize,
    pub warm_start: WarmKind,
    pub align_runs: bool,
    pub random_iterate: bool,
    pub comp_tol: f64,
    pub coupling: CouplingKind,
    pub max_diverged_fraction: f64,
}

impl Default for OuterSection {
    fn default() -> Self {
        let d = OuterConfig::default();
        Self {
            iterations: d.iterations,
            batch_size: d.batch_size,
            runs: d.runs,
            step: 1e-2,
            schedule: ScheduleKind::Constant,
            eval_n: d.eval_n,
            alpha: d.alpha,
            trace_every: d.trace_every,
            warm_start: WarmKind::SameSample,
            align_runs: d.align_runs,
            random_iterate: d.random_iterate,
            comp_tol: d.gradient.comp_tol,
            coupling: CouplingKind::Resynthesized,
            max_diverged_fraction: d.max_diverged_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSection {
    pub iterations: usize,
    pub initial_temp: f64,
    pub cooling: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal_sigma: Option<f64>,
    pub restarts: usize,
    pub mc_wind_samples: usize,
}

impl Default for AnnealSection {
    fn default() -> Self {
        let d = AnnealConfig::default();
        Self {
            iterations: d.iterations,
            initial_temp: d.initial_temp,
            cooling: d.cooling,
            proposal_sigma: d.proposal_sigma,
            restarts: d.restarts,
            mc_wind_samples: d.mc_wind_samples,
        }
    }
}

impl AnnealSection {
    pub fn build(&self) -> AnnealConfig {
        AnnealConfig {
            iterations: self.iterations,
            initial_temp: self.initial_temp,
            cooling: self.cooling,
            proposal_sigma: self.proposal_sigma,
            restarts: self.restarts,
            mc_wind_samples: self.mc_wind_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisEntry {
    /// Flattened coordinate index: `2·sensor + {0 for x, 1 for y}`.
    pub coordinate: usize,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub axes: Vec<AxisEntry>,
    /// Samples per grid point; falls back to `outer.eval_n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_n: Option<usize>,
}

impl GridSection {
    pub fn coordinates(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.coordinate).collect()
    }

    pub fn grid_axes(&self) -> Vec<GridAxis<f64>> {
        self.axes.iter().map(|a| GridAxis { lo: a.lo, hi: a.hi, points: a.points }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub trials: usize,
    pub noise_sigmas: Vec<f64>,
    pub prior_sigmas: Vec<f64>,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self { trials: 1000, noise_sigmas: Vec::new(), prior_sigmas: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// Uniform draw inside the sensor box.
    Random,
    /// Simulated annealing on the linear-Gaussian risk.
    Aopt,
    /// `init_layout` as given.
    Layout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sensors: usize,
    pub init: InitKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub init_layout: Vec<[f64; 2]>,
    /// Number of synthetic data sets drawn by `simulate`.
    pub simulate_count: usize,
    pub outer: OuterSection,
    pub inner: SolverSection,
    pub evaluation: SolverSection,
    pub anneal: AnnealSection,
    pub grid: GridSection,
    pub validate: ValidateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sensors: 5,
            init: InitKind::Random,
            init_layout: Vec::new(),
            simulate_count: 1,
            outer: OuterSection::default(),
            inner: SolverSection::default(),
            evaluation: SolverSection::with_kind(SolverKind::ActiveSet),
            anneal: AnnealSection::default(),
            grid: GridSection::default(),
            validate: ValidateSection::default(),
        }
    }
}

pub const CONFIG_PRESETS: &[(&str, &str)] = &[
    ("example1", include_str!("../scenarios/example1.toml")),
    ("example2", include_str!("../scenarios/example2.toml")),
    ("validation20", include_str!("../scenarios/validation20.toml")),
];

pub fn config_preset(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    CONFIG_PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        match std::fs::read_to_string(path) {
            Ok(t) => Self::parse(&t),
            Err(e) => match config_preset(&path.to_string_lossy()) {
                Some(t) => Self::parse(t),
                None => Err(ScenarioError::Io(format!("{}: {e}", path.display()))),
            },
        }
    }

    /// The preset matching a scenario's file stem, if any.
    pub fn for_scenario(path: &Path) -> Option<Self> {
        let stem = path.file_stem()?.to_string_lossy().into_owned();
        config_preset(&stem).map(|t| Self::parse(t).expect("shipped config parses"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn outer(&self, algorithm: Algorithm) -> OuterConfig {
        let o = &self.outer;
        OuterConfig {
            algorithm,
            iterations: o.iterations,
            batch_size: o.batch_size,
            runs: if algorithm == Algorithm::Sba { 1 } else { o.runs },
            step: match o.schedule {
                ScheduleKind::Constant => StepSchedule::Constant(o.step),
                ScheduleKind::Decaying => StepSchedule::Decaying(o.step),
            },
            eval_n: o.eval_n,
            alpha: o.alpha,
            trace_every: o.trace_every,
            inner: self.inner.build(),
            eval_solver: self.evaluation.build(),
            warm_start: match o.warm_start {
                WarmKind::SameSample => WarmStart::SameSample,
                WarmKind::Always => WarmStart::Always,
                WarmKind::Never => WarmStart::Never,
            },
            align_runs: o.align_runs,
            random_iterate: o.random_iterate,
            gradient: GradientOptions {
                comp_tol: o.comp_tol,
                coupling: match o.coupling {
                    CouplingKind::Resynthesized => ObservationCoupling::Resynthesized,
                    CouplingKind::Frozen => ObservationCoupling::Frozen,
                },
            },
            max_diverged_fraction: o.max_diverged_fraction,
        }
    }

    pub fn explicit_layout(&self) -> Option<SensorLayout> {
        if self.init_layout.is_empty() {
            None
        } else {
            SensorLayout::new(self.init_layout.clone()).ok()
        }
    }
}
