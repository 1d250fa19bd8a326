//! Priors, reproducible random streams, Monte Carlo sample triples and the
//! Monte Carlo objective `Ψ̂_N(s) = (1/N) Σ ‖θ̂⁽ⁱ⁾(s) − θ⁽ⁱ⁾‖²`.
//!
//! Every random draw comes from a [`RngStream`] addressed by `(seed, stream_id)`;
//! stream ids are derived by hashing `(run, iteration, sample, purpose)` so the
//! draws never depend on evaluation order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::plume::{forward_matrix, observations_from_noise, Scenario, SensorLayout, WindVector};
use crate::qp::{QpInstance, QpSolution, InnerSolver};
use crate::scalar::{pos, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// What a stream is used for; part of the stream-id hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Wind = 1,
    Emission = 2,
    Noise = 3,
    Evaluation = 4,
    Init = 5,
    Anneal = 6,
    Validation = 7,
    Selection = 8,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for `(run, iteration, sample, purpose)`.
pub fn stream_id(run: u64, iteration: u64, sample: u64, purpose: Purpose) -> u64 {
    [run, iteration, sample, purpose as u64]
        .iter()
        .fold(0x5EED_0F_5A4D_u64, |h, &part| splitmix(h ^ splitmix(part)))
}

/// Base address of a batch: all samples of `(run, iteration)` under `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BatchStreams {
    pub seed: u64,
    pub run: u64,
    pub iteration: u64,
    /// Offset added to the sample index, so a large evaluation can be split.
    pub first_sample: u64,
}

impl BatchStreams {
    pub fn new(seed: u64, run: u64, iteration: u64) -> Self {
        Self { seed, run, iteration, first_sample: 0 }
    }

    pub fn stream(&self, sample: usize, purpose: Purpose) -> RngStream {
        RngStream::new(self.seed, stream_id(self.run, self.iteration, self.first_sample + sample as u64, purpose))
    }
}

pub fn standard_normals<T: Real>(stream: RngStream, count: usize) -> Vec<T> {
    let mut rng = stream.rng();
    (0..count).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// Uniform speed band and direction arc. Directions are radians clockwise
/// from north with `β = speed · (sin α, −cos α)`, so `α = 0` is a north wind
/// blowing towards −y.
#[derive(Clone, Debug, PartialEq)]
pub struct WindModel<T> {
    pub speed_lo: T,
    pub speed_hi: T,
    pub dir_lo: T,
    pub dir_hi: T,
}

impl<T: Real> WindModel<T> {
    pub fn new(speed: (T, T), direction: (T, T)) -> Result<Self> {
        let m = Self { speed_lo: speed.0, speed_hi: speed.1, dir_lo: direction.0, dir_hi: direction.1 };
        m.validate()?;
        Ok(m)
    }

    /// A single fixed wind vector.
    pub fn constant(speed: T, direction: T) -> Result<Self> {
        Self::new((speed, speed), (direction, direction))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_lo > T::zero() && self.speed_lo <= self.speed_hi) {
            return Err(Error::invalid("wind speed band must satisfy 0 < lo <= hi"));
        }
        if !(self.dir_lo <= self.dir_hi) {
            return Err(Error::invalid("wind direction arc must satisfy lo <= hi"));
        }
        Ok(())
    }
}

pub fn wind_from_polar<T: Real>(speed: T, direction: T) -> Result<WindVector<T>> {
    WindVector::new([speed * direction.sin(), -speed * direction.cos()])
}

pub fn draw_wind<T: Real>(model: &WindModel<T>, stream: RngStream) -> Result<WindVector<T>> {
    let mut rng = stream.rng();
    let a: f64 = rng.random();
    let b: f64 = rng.random();
    let speed = model.speed_lo + (model.speed_hi - model.speed_lo) * T::lit(a);
    let dir = model.dir_lo + (model.dir_hi - model.dir_lo) * T::lit(b);
    wind_from_polar(speed, dir)
}

/// One draw of `N(μ, σ²)` truncated to `[0, ∞)`.
///
/// Rejection sampling while the acceptance probability is at least 10%,
/// otherwise inverse-CDF sampling of the upper tail.
pub fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return mean.max(0.0);
    }
    let std = Normal::standard();
    let a = -mean / sigma;
    let tail = std.sf(a);
    if tail >= 0.1 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z >= a {
                return (mean + sigma * z).max(0.0);
            }
        }
    }
    if tail > 1e-250 {
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let z = -std.inverse_cdf(u * tail);
        return (mean + sigma * z.max(a)).max(0.0);
    }
    // tail mass below double precision: exponential proposal with rejection
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let z = a - u.ln() / rate;
        let accept: f64 = rng.random();
        if accept <= (-0.5 * (z - rate) * (z - rate)).exp() {
            return (mean + sigma * z).max(0.0);
        }
    }
}

/// Emission rates from the truncated-normal prior `N⁺(μ_pr, σ_Pr² I)`.
pub fn draw_emissions<T: Real>(scenario: &Scenario<T>, stream: RngStream) -> Vec<T> {
    let mut rng = stream.rng();
    let sigma = scenario.prior_sigma.to_f64_lossy();
    scenario
        .prior_mean
        .iter()
        .map(|&m| {
            if sigma <= 0.0 {
                pos(m)
            } else {
                T::lit(truncated_normal(&mut rng, m.to_f64_lossy(), sigma))
            }
        })
        .collect()
}

/// One Monte Carlo draw `(θ⁽ⁱ⁾, β⁽ⁱ⁾, Φ⁽ⁱ⁾)`. The standard-normal noise `z` is
/// kept so `Φ = F(β, s)θ + σ_ε z` can be re-synthesized when the layout moves.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTriple<T> {
    pub theta: Vec<T>,
    pub beta: WindVector<T>,
    pub noise: Vec<T>,
    pub phi: Vec<T>,
}

impl<T: Real> SampleTriple<T> {
    /// Recomputes `Φ` at `layout` with the stored noise; returns `F(β, s)`.
    pub fn resynthesize(&mut self, scenario: &Scenario<T>, layout: &SensorLayout<T>) -> Result<Mat<T>> {
        if self.noise.len() != layout.len() {
            return Err(Error::Dimension(format!("{} noise draws for {} sensors", self.noise.len(), layout.len())));
        }
        let f = forward_matrix(scenario, &self.beta, layout)?;
        self.phi = observations_from_noise(&f, &self.theta, scenario.noise_sigma, &self.noise)?;
        Ok(f)
    }

    /// Inner QP at `layout`, re-synthesizing the observations first.
    pub fn instance_at(&mut self, scenario: &Scenario<T>, layout: &SensorLayout<T>) -> Result<(Mat<T>, QpInstance<T>)> {
        let f = self.resynthesize(scenario, layout)?;
        let qp = QpInstance::from_forward(scenario, &f, &self.phi)?;
        Ok((f, qp))
    }

    /// Order-sensitive fingerprint of the random inputs (not of `Φ`).
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xF1A6_u64;
        let mut eat = |x: T| h = splitmix(h ^ x.to_f64_lossy().to_bits());
        self.theta.iter().for_each(|&x| eat(x));
        eat(self.beta.beta()[0]);
        eat(self.beta.beta()[1]);
        self.noise.iter().for_each(|&x| eat(x));
        h
    }
}

pub fn draw_sample<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    layout: &SensorLayout<T>,
    streams: BatchStreams,
    index: usize,
) -> Result<SampleTriple<T>> {
    let beta = draw_wind(wind_model, streams.stream(index, Purpose::Wind))?;
    let theta = draw_emissions(scenario, streams.stream(index, Purpose::Emission));
    let noise = standard_normals(streams.stream(index, Purpose::Noise), layout.len());
    let mut triple = SampleTriple { theta, beta, noise, phi: Vec::new() };
    triple.resynthesize(scenario, layout)?;
    Ok(triple)
}

pub fn draw_batch<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    layout: &SensorLayout<T>,
    count: usize,
    streams: BatchStreams,
) -> Result<Vec<SampleTriple<T>>> {
    if count == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    (0..count)
        .into_par_iter()
        .map(|i| draw_sample(scenario, wind_model, layout, streams, i).map_err(|e| e.at_sample(i)))
        .collect()
}

fn batch_fingerprint<T: Real>(batch: &[SampleTriple<T>]) -> u64 {
    batch.iter().fold(0u64, |h, t| splitmix(h ^ t.fingerprint()))
}

pub fn fingerprint_batch<T: Real>(batch: &[SampleTriple<T>]) -> u64 {
    batch_fingerprint(batch)
}

/// `(psi_hat, per-sample squared errors, σ̂_N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub psi_hat: T,
    pub per_sample: Vec<T>,
    pub std_err: T,
}

impl<T: Real> Evaluation<T> {
    /// Mean and `σ̂_N = sqrt(Σ(x − x̄)² / (N(N−1)))` of per-sample values.
    pub fn from_samples(per_sample: Vec<T>) -> Self {
        let n = per_sample.len();
        let nf = T::lit(n as f64);
        let mean = per_sample.iter().copied().sum::<T>() / nf;
        let std_err = if n >= 2 {
            let ss: T = per_sample.iter().map(|&x| (x - mean) * (x - mean)).sum();
            (ss / (nf * (nf - T::one()))).sqrt()
        } else {
            T::zero()
        };
        Self { psi_hat: mean, per_sample, std_err }
    }
}

pub fn squared_error<T: Real>(estimate: &[T], truth: &[T]) -> T {
    estimate.iter().zip(truth).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

/// Solves the inner problem for every sample of a fixed batch at `layout`.
pub fn solve_batch<T: Real>(
    scenario: &Scenario<T>,
    layout: &SensorLayout<T>,
    batch: &mut [SampleTriple<T>],
    solver: &InnerSolver<T>,
    warm: Option<&[QpSolution<T>]>,
) -> Vec<Result<QpSolution<T>>> {
    batch
        .par_iter_mut()
        .enumerate()
        .map(|(i, triple)| {
            let (_, qp) = triple.instance_at(scenario, layout).map_err(|e| e.at_sample(i))?;
            solver.solve(&qp, warm.map(|w| &w[i])).map_err(|e| e.at_sample(i))
        })
        .collect()
}

/// `Ψ̂` of a fixed batch at `layout`.
pub fn evaluate_batch<T: Real>(
    scenario: &Scenario<T>,
    layout: &SensorLayout<T>,
    batch: &mut [SampleTriple<T>],
    solver: &InnerSolver<T>,
) -> Result<Evaluation<T>> {
    let sols = solve_batch(scenario, layout, batch, solver, None);
    let mut per_sample = Vec::with_capacity(batch.len());
    for (sol, triple) in sols.into_iter().zip(batch.iter()) {
        per_sample.push(squared_error(&sol?.theta_hat, &triple.theta));
    }
    Ok(Evaluation::from_samples(per_sample))
}

/// Monte Carlo objective from `count` fresh samples addressed by `streams`.
pub fn evaluate_objective<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    layout: &SensorLayout<T>,
    count: usize,
    streams: BatchStreams,
    solver: &InnerSolver<T>,
) -> Result<Evaluation<T>> {
    if count < 2 {
        return Err(Error::invalid("objective evaluation needs at least 2 samples"));
    }
    scenario.check_layout(layout)?;
    let per_sample: Result<Vec<T>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut t = draw_sample(scenario, wind_model, layout, streams, i).map_err(|e| e.at_sample(i))?;
            let (_, qp) = t.instance_at(scenario, layout).map_err(|e| e.at_sample(i))?;
            let sol = solver.solve(&qp, None).map_err(|e| e.at_sample(i))?;
            Ok(squared_error(&sol.theta_hat, &t.theta))
        })
        .collect();
    Ok(Evaluation::from_samples(per_sample?))
}
