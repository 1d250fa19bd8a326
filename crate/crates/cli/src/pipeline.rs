//! End-to-end runs shared by the subcommands and the test suites.

use sensoralloc::aopt::{anneal_layout, AnnealResult};
use sensoralloc::outer::{random_layout, run_rsaa, run_sba, Algorithm};
use sensoralloc::sampling::RngStream;
use sensoralloc::validate::{validate_designs, SweepGrid, ValidationReport};
use sensoralloc::{RunReport, Scenario, SensorLayout, WindModel};

use crate::config::{InitKind, RunConfig};
use crate::CliError;

/// Stream of the random starting layout.
pub const INIT_STREAM: u64 = 12345;
/// Stream of the random baseline design in comparisons.
pub const RANDOM_DESIGN_STREAM: u64 = 999;

pub fn aopt_layout(scenario: &Scenario, wind: &WindModel, config: &RunConfig, seed: u64) -> Result<AnnealResult<f64>, CliError> {
    Ok(anneal_layout(scenario, wind, config.sensors, &config.anneal.build(), seed)?)
}

pub fn initial_layout(scenario: &Scenario, wind: &WindModel, config: &RunConfig, seed: u64) -> Result<SensorLayout, CliError> {
    match config.init {
        InitKind::Random => Ok(random_layout(scenario, config.sensors, RngStream::new(seed, INIT_STREAM))?),
        InitKind::Aopt => Ok(aopt_layout(scenario, wind, config, seed)?.layout),
        InitKind::Layout => {
            let layout = config.explicit_layout().ok_or_else(|| CliError::Input("init = \"layout\" needs init_layout".into()))?;
            scenario.check_layout(&layout).map_err(|e| CliError::Input(format!("init_layout: {e}")))?;
            Ok(layout)
        }
    }
}

pub fn optimize(
    scenario: &Scenario,
    wind: &WindModel,
    config: &RunConfig,
    algorithm: Algorithm,
    init: &SensorLayout,
    seed: u64,
) -> Result<RunReport, CliError> {
    let outer = config.outer(algorithm);
    outer.validate().map_err(|e| CliError::Input(format!("config: {e}")))?;
    let report = match algorithm {
        Algorithm::Sba => run_sba(scenario, wind, &outer, init, seed)?,
        Algorithm::Rsaa => run_rsaa(scenario, wind, &outer, std::slice::from_ref(init), seed)?,
    };
    Ok(report)
}

pub struct Comparison {
    pub designs: Vec<(String, SensorLayout)>,
    pub report: ValidationReport<f64>,
    pub bilevel: Option<RunReport>,
}

/// Random, A-optimal and bilevel designs (the last started from the second),
/// compared on the same synthetic trials.
pub fn compare_designs(scenario: &Scenario, wind: &WindModel, config: &RunConfig, seed: u64) -> Result<Comparison, CliError> {
    let random = random_layout(scenario, config.sensors, RngStream::new(seed, RANDOM_DESIGN_STREAM))?;
    let aopt = aopt_layout(scenario, wind, config, seed)?.layout;
    let bilevel = optimize(scenario, wind, config, Algorithm::Sba, &aopt, seed)?;
    let designs = vec![
        ("random".to_string(), random),
        ("aopt".to_string(), aopt),
        ("bilevel".to_string(), bilevel.combined.clone()),
    ];
    let report = validate_with(scenario, wind, config, &designs, seed)?;
    Ok(Comparison { designs, report, bilevel: Some(bilevel) })
}

pub fn validate_with(
    scenario: &Scenario,
    wind: &WindModel,
    config: &RunConfig,
    designs: &[(String, SensorLayout)],
    seed: u64,
) -> Result<ValidationReport<f64>, CliError> {
    let sweep = SweepGrid { noise_sigmas: config.validate.noise_sigmas.clone(), prior_sigmas: config.validate.prior_sigmas.clone() };
    Ok(validate_designs(scenario, wind, designs, config.validate.trials, seed, &config.evaluation.build(), &sweep)?)
}
