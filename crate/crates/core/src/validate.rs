//! Design comparison: recover emissions from synthetic data under each
//! layout and score the estimates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plume::{Scenario, SensorLayout};
use crate::qp::InnerSolver;
use crate::sampling::{draw_sample, BatchStreams, WindModel};
use crate::scalar::Real;

/// Guards the percentage denominator against exact-zero true emissions.
pub const THETA_FLOOR: f64 = 1e-6;

const VALIDATION_RUN: u64 = u64::MAX - 4;

/// `100/(trials·N_p) Σ |θ̂_j − θ_j| / max(θ_j, floor)`
pub fn mape<T: Real>(estimates: &[Vec<T>], truths: &[Vec<T>]) -> T {
    let floor = T::lit(THETA_FLOOR);
    let mut total = T::zero();
    let mut count = 0usize;
    for (est, truth) in estimates.iter().zip(truths) {
        for (&e, &t) in est.iter().zip(truth) {
            total = total + (e - t).abs() / t.max(floor);
            count += 1;
        }
    }
    if count == 0 {
        return T::zero();
    }
    T::lit(100.0) * total / T::lit(count as f64)
}

/// `(min, q1, median, q3, max)` with linear interpolation between order statistics.
pub fn quartiles<T: Real>(values: &[T]) -> [T; 5] {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    if v.is_empty() {
        return [T::nan(); 5];
    }
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * T::lit(h - lo as f64)
    };
    [v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord<T> {
    pub design: usize,
    pub trial: usize,
    pub truth: Vec<T>,
    pub estimate: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignSummary<T> {
    pub name: String,
    pub mape: T,
    /// Per source: quartiles of the estimates.
    pub estimate_quartiles: Vec<[T; 5]>,
    /// Per source: quartiles of the true rates.
    pub truth_quartiles: Vec<[T; 5]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell<T> {
    pub design: usize,
    pub noise_sigma: T,
    pub prior_sigma: T,
    /// Mean `‖θ̂ − θ‖` over the trials.
    pub mean_error: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport<T> {
    pub designs: Vec<DesignSummary<T>>,
    pub records: Vec<TrialRecord<T>>,
    pub sweep: Vec<SweepCell<T>>,
}

/// Solves `trials` synthetic inversions per design; every design sees the
/// same emissions, winds and noise draws.
fn recover<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    layout: &SensorLayout<T>,
    trials: usize,
    seed: u64,
    solver: &InnerSolver<T>,
) -> Result<Vec<(Vec<T>, Vec<T>)>> {
    let streams = BatchStreams::new(seed, VALIDATION_RUN, 0);
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut t = draw_sample(scenario, wind_model, layout, streams, i).map_err(|e| e.at_sample(i))?;
            let (_, qp) = t.instance_at(scenario, layout).map_err(|e| e.at_sample(i))?;
            let sol = solver.solve(&qp, None).map_err(|e| e.at_sample(i))?;
            Ok((t.theta, sol.theta_hat))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SweepGrid<T> {
    pub noise_sigmas: Vec<T>,
    pub prior_sigmas: Vec<T>,
}

pub fn validate_designs<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    designs: &[(String, SensorLayout<T>)],
    trials: usize,
    seed: u64,
    solver: &InnerSolver<T>,
    sweep: &SweepGrid<T>,
) -> Result<ValidationReport<T>> {
    scenario.validate()?;
    if trials < 100 {
        return Err(Error::invalid("validation needs at least 100 trials"));
    }
    let np = scenario.num_sources();
    let mut summaries = Vec::with_capacity(designs.len());
    let mut records = Vec::with_capacity(designs.len() * trials);
    for (d, (name, layout)) in designs.iter().enumerate() {
        scenario.check_layout(layout)?;
        let pairs = recover(scenario, wind_model, layout, trials, seed, solver)?;
        let (truths, estimates): (Vec<Vec<T>>, Vec<Vec<T>>) = pairs.into_iter().unzip();
        let column = |rows: &[Vec<T>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<T>>();
        summaries.push(DesignSummary {
            name: name.clone(),
            mape: mape(&estimates, &truths),
            estimate_quartiles: (0..np).map(|j| quartiles(&column(&estimates, j))).collect(),
            truth_quartiles: (0..np).map(|j| quartiles(&column(&truths, j))).collect(),
        });
        for (trial, (truth, estimate)) in truths.into_iter().zip(estimates).enumerate() {
            records.push(TrialRecord { design: d, trial, truth, estimate });
        }
    }
    let mut cells = Vec::new();
    for (d, (_, layout)) in designs.iter().enumerate() {
        for &noise in &sweep.noise_sigmas {
            for &prior in &sweep.prior_sigmas {
                let mut sc = scenario.clone();
                sc.noise_sigma = noise;
                sc.prior_sigma = prior;
                sc.validate()?;
                let pairs = recover(&sc, wind_model, layout, trials, seed, solver)?;
                let total: T = pairs
                    .iter()
                    .map(|(t, e)| t.iter().zip(e).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt())
                    .sum();
                cells.push(SweepCell { design: d, noise_sigma: noise, prior_sigma: prior, mean_error: total / T::lit(trials as f64) });
            }
        }
    }
    Ok(ValidationReport { designs: summaries, records, sweep: cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_arithmetic() {
        let m = mape(&[vec![11.0, 18.0]], &[vec![10.0, 20.0]]);
        assert!((m - 10.0f64).abs() < 1e-12);
    }

    #[test]
    fn quartiles_are_ordered() {
        let q = quartiles(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!(q, [1.0, 2.0, 3.0, 4.0, 5.0]);
    }
}
