//! Linear-Gaussian Bayes risk of a layout (ignoring non-negativity) and a
//! simulated-annealing search that minimizes it to seed the bilevel solver.
//!
//! With prior precision `LᵀL`, noise precision `UᵀU` and
//! `Γ_post = (FᵀUᵀUF + LᵀL)⁻¹`, the risk of the posterior mean is
//! `‖Γ_post Lᵀ‖_F² + ‖Γ_post Fᵀ Uᵀ‖_F²`, averaged over winds.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::plume::{forward_matrix, Scenario, SensorLayout, WindVector};
use crate::sampling::{draw_wind, stream_id, BatchStreams, Purpose, RngStream, WindModel};
use crate::scalar::Real;

const AOPT_RUN: u64 = u64::MAX - 3;

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorPair<T> {
    /// Present when observations were supplied.
    pub mu_post: Option<Vec<T>>,
    pub gamma_post: Mat<T>,
}

fn check_gaussian<T: Real>(scenario: &Scenario<T>) -> Result<()> {
    if !(scenario.noise_sigma > T::zero()) {
        return Err(Error::invalid("linear-Gaussian posterior needs noise_sigma > 0"));
    }
    if !(scenario.prior_sigma > T::zero()) {
        return Err(Error::invalid("linear-Gaussian posterior needs prior sigma > 0"));
    }
    Ok(())
}

/// `(σ_ε⁻² FᵀF + LᵀL)`, the posterior precision.
pub fn posterior_precision<T: Real>(f: &Mat<T>, noise_sigma: T, prior_factor: &Mat<T>) -> Mat<T> {
    f.gram().scale(T::one() / (noise_sigma * noise_sigma)).add(&prior_factor.gram())
}

/// Diagonal prior factor `L = σ_Pr⁻¹ I`.
pub fn isotropic_prior_factor<T: Real>(np: usize, prior_sigma: T) -> Mat<T> {
    Mat::identity(np).scale(T::one() / prior_sigma)
}

pub fn posterior<T: Real>(
    scenario: &Scenario<T>,
    wind: &WindVector<T>,
    layout: &SensorLayout<T>,
    observations: Option<&[T]>,
) -> Result<PosteriorPair<T>> {
    check_gaussian(scenario)?;
    let f = forward_matrix(scenario, wind, layout)?;
    let l = isotropic_prior_factor(scenario.num_sources(), scenario.prior_sigma);
    let chol = Cholesky::new(&posterior_precision(&f, scenario.noise_sigma, &l))?;
    let mu_post = match observations {
        None => None,
        Some(phi) => {
            if phi.len() != layout.len() {
                return Err(Error::Dimension("observation count".into()));
            }
            let w = T::one() / (scenario.noise_sigma * scenario.noise_sigma);
            let p = T::one() / (scenario.prior_sigma * scenario.prior_sigma);
            let rhs: Vec<T> = f.tr_mul_vec(phi).iter().zip(&scenario.prior_mean).map(|(&a, &m)| w * a + p * m).collect();
            Some(chol.solve(&rhs))
        }
    };
    Ok(PosteriorPair { mu_post, gamma_post: chol.inverse() })
}

/// `‖(Γ_post (σ_ε⁻² FᵀF + LᵀL) − I) μ_pr‖`
pub fn posterior_identity_residual<T: Real>(gamma_post: &Mat<T>, precision: &Mat<T>, prior_mean: &[T]) -> T {
    let v = gamma_post.matmul(precision).mul_vec(prior_mean);
    v.iter().zip(prior_mean).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()
}

/// Risk for one forward matrix with a general prior factor `L`.
pub fn linear_gaussian_risk<T: Real>(f: &Mat<T>, noise_sigma: T, prior_factor: &Mat<T>) -> Result<T> {
    let gamma = Cholesky::new(&posterior_precision(f, noise_sigma, prior_factor))?.inverse();
    let prior_term = gamma.matmul(&prior_factor.transpose()).frobenius_sq();
    let data_term = gamma.matmul(&f.transpose()).frobenius_sq() / (noise_sigma * noise_sigma);
    Ok(prior_term + data_term)
}

/// Mean risk over a fixed set of wind vectors.
pub fn risk_over_winds<T: Real>(scenario: &Scenario<T>, winds: &[WindVector<T>], layout: &SensorLayout<T>) -> Result<T> {
    check_gaussian(scenario)?;
    if winds.is_empty() {
        return Err(Error::invalid("need at least one wind sample"));
    }
    let l = isotropic_prior_factor(scenario.num_sources(), scenario.prior_sigma);
    let mut total = T::zero();
    for w in winds {
        let f = forward_matrix(scenario, w, layout)?;
        total = total + linear_gaussian_risk(&f, scenario.noise_sigma, &l)?;
    }
    Ok(total / T::lit(winds.len() as f64))
}

pub fn wind_samples<T: Real>(wind_model: &WindModel<T>, count: usize, seed: u64) -> Result<Vec<WindVector<T>>> {
    let streams = BatchStreams::new(seed, AOPT_RUN, 0);
    (0..count).map(|i| draw_wind(wind_model, streams.stream(i, Purpose::Wind))).collect()
}

pub fn aopt_risk<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    layout: &SensorLayout<T>,
    mc_wind_samples: usize,
    seed: u64,
) -> Result<T> {
    let winds = wind_samples(wind_model, mc_wind_samples, seed)?;
    risk_over_winds(scenario, &winds, layout)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnealConfig<T> {
    pub iterations: usize,
    /// Multiplies the starting risk to give `T₀`.
    pub initial_temp: T,
    pub cooling: T,
    /// Gaussian step scale; `None` means 5% of the sensor-box diagonal.
    pub proposal_sigma: Option<T>,
    pub restarts: usize,
    pub mc_wind_samples: usize,
}

impl<T: Real> Default for AnnealConfig<T> {
    fn default() -> Self {
        Self {
            iterations: 2000,
            initial_temp: T::one(),
            cooling: T::lit(0.995),
            proposal_sigma: None,
            restarts: 5,
            mc_wind_samples: 32,
        }
    }
}

impl<T: Real> AnnealConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.restarts == 0 || self.mc_wind_samples == 0 {
            return Err(Error::invalid("iterations, restarts and mc_wind_samples must be at least 1"));
        }
        if !(self.cooling > T::zero() && self.cooling < T::one()) {
            return Err(Error::invalid("cooling must lie in (0, 1)"));
        }
        if !(self.initial_temp > T::zero()) || self.proposal_sigma.is_some_and(|s| !(s > T::zero())) {
            return Err(Error::invalid("temperature and proposal scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnealResult<T> {
    pub layout: SensorLayout<T>,
    pub risk: T,
    /// Risk of each restart's starting layout.
    pub start_risks: Vec<T>,
    /// Best-so-far risk per iteration of the winning restart.
    pub trace: Vec<T>,
    pub restart: usize,
}

/// One annealing chain from `start` against fixed wind samples. Each step
/// moves a single randomly chosen sensor.
pub fn anneal_chain<T: Real>(
    scenario: &Scenario<T>,
    winds: &[WindVector<T>],
    start: &SensorLayout<T>,
    config: &AnnealConfig<T>,
    stream: RngStream,
) -> Result<(SensorLayout<T>, T, Vec<T>)> {
    config.validate()?;
    scenario.check_layout(start)?;
    let mut rng = stream.rng();
    let diag = ((scenario.sensor_hi[0] - scenario.sensor_lo[0]).powi(2) + (scenario.sensor_hi[1] - scenario.sensor_lo[1]).powi(2)).sqrt();
    let sigma = config.proposal_sigma.unwrap_or(T::lit(0.05) * diag);
    let mut current = start.clone();
    let mut current_risk = risk_over_winds(scenario, winds, &current)?;
    let mut best = (current.clone(), current_risk);
    let mut temp = config.initial_temp * current_risk;
    let mut trace = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let i = rng.random_range(0..current.len());
        let mut proposal = current.clone();
        for c in 0..2 {
            let step: f64 = rng.sample(StandardNormal);
            let v = proposal.positions[i][c] + sigma * T::lit(step);
            proposal.positions[i][c] = v.max(scenario.sensor_lo[c]).min(scenario.sensor_hi[c]);
        }
        let u: f64 = rng.random();
        let risk = risk_over_winds(scenario, winds, &proposal)?;
        let delta = risk - current_risk;
        if delta <= T::zero() || (temp > T::zero() && T::lit(u) < (-delta / temp).exp()) {
            current = proposal;
            current_risk = risk;
            if risk < best.1 {
                best = (current.clone(), risk);
            }
        }
        trace.push(best.1);
        temp = temp * config.cooling;
    }
    Ok((best.0, best.1, trace))
}

/// Simulated annealing from uniform random starts; the lowest-risk restart wins.
pub fn anneal_layout<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    n_sensors: usize,
    config: &AnnealConfig<T>,
    seed: u64,
) -> Result<AnnealResult<T>> {
    config.validate()?;
    if n_sensors == 0 {
        return Err(Error::invalid("need at least one sensor"));
    }
    let winds = wind_samples(wind_model, config.mc_wind_samples, seed)?;
    let chains: Vec<Result<(T, SensorLayout<T>, T, Vec<T>)>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let start = crate::outer::random_layout(
                scenario,
                n_sensors,
                RngStream::new(seed, stream_id(r as u64, 0, 0, Purpose::Init)),
            )?;
            let start_risk = risk_over_winds(scenario, &winds, &start)?;
            let stream = RngStream::new(seed, stream_id(r as u64, 0, 0, Purpose::Anneal));
            let (layout, risk, trace) = anneal_chain(scenario, &winds, &start, config, stream)?;
            Ok((start_risk, layout, risk, trace))
        })
        .collect();
    let mut best: Option<AnnealResult<T>> = None;
    let mut start_risks = Vec::with_capacity(config.restarts);
    for (r, chain) in chains.into_iter().enumerate() {
        let (start_risk, layout, risk, trace) = chain?;
        start_risks.push(start_risk);
        if best.as_ref().is_none_or(|b| risk < b.risk) {
            best = Some(AnnealResult { layout, risk, start_risks: Vec::new(), trace, restart: r });
        }
    }
    let mut best = best.expect("at least one restart");
    best.start_risks = start_risks;
    Ok(best)
}
