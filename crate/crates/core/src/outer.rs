//! Outer drivers: repeated SAA with a fixed batch per run, stochastic
//! bilevel descent with a fresh batch per iteration, the optimality-gap
//! certificate, and a brute-force grid oracle over one or two coordinates.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::hypergrad::{average_contributions, sample_outcome, GradientOptions, SampleOutcome};
use crate::linalg::Mat;
use crate::plume::{Point, Scenario, SensorLayout};
use crate::qp::{InnerConfig, InnerSolver, QpSolution};
use crate::sampling::{
    draw_batch, evaluate_objective, fingerprint_batch, stream_id, BatchStreams, Evaluation, Purpose, RngStream, SampleTriple,
    WindModel,
};
use crate::scalar::{norm2, Real};

/// Reserved run indices for evaluation streams, far from any real run index.
const TRACE_RUN: u64 = u64::MAX;
const GAP_RUN: u64 = u64::MAX - 1;
const GRID_RUN: u64 = u64::MAX - 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Rsaa,
    Sba,
}

/// When the inner solver may start from the previous iteration's solution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WarmStart {
    /// Only when the sample is the same as last iteration (fixed batches).
    #[default]
    SameSample,
    Always,
    Never,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule<T> {
    Constant(T),
    /// `ρ₀ / (m + 1)`
    Decaying(T),
}

impl<T: Real> StepSchedule<T> {
    pub fn at(&self, m: usize) -> T {
        match *self {
            Self::Constant(r) => r,
            Self::Decaying(r0) => r0 / T::lit((m + 1) as f64),
        }
    }

    fn base(&self) -> T {
        match *self {
            Self::Constant(r) | Self::Decaying(r) => r,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterConfig<T> {
    pub algorithm: Algorithm,
    /// Outer iterations `M`.
    pub iterations: usize,
    /// `Ñ`
    pub batch_size: usize,
    /// `K`, rSAA only.
    pub runs: usize,
    pub step: StepSchedule<T>,
    /// Samples for large-N re-evaluation (trace and gap upper bound).
    pub eval_n: usize,
    pub alpha: T,
    /// Trace the large-N objective every this many iterations; 0 disables.
    pub trace_every: usize,
    /// Solver used inside the outer loop.
    pub inner: InnerSolver<T>,
    /// Solver used for objective evaluation.
    pub eval_solver: InnerSolver<T>,
    pub warm_start: WarmStart,
    /// Match sensors across runs before averaging.
    pub align_runs: bool,
    /// Draw a random iterate with probability proportional to `1/(m+1)`.
    pub random_iterate: bool,
    pub gradient: GradientOptions<T>,
    /// Abort a run when more than this fraction of a batch diverges.
    pub max_diverged_fraction: f64,
}

impl<T: Real> Default for OuterConfig<T> {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Sba,
            iterations: 100,
            batch_size: 100,
            runs: 1,
            step: StepSchedule::Constant(T::lit(1e-2)),
            eval_n: 10_000,
            alpha: T::lit(0.025),
            trace_every: 10,
            inner: InnerSolver::PrimalDual(InnerConfig::default()),
            eval_solver: InnerSolver::ActiveSet,
            warm_start: WarmStart::default(),
            align_runs: false,
            random_iterate: false,
            gradient: GradientOptions::default(),
            max_diverged_fraction: 0.1,
        }
    }
}

impl<T: Real> OuterConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.runs == 0 {
            return Err(Error::invalid("iterations, batch_size and runs must be at least 1"));
        }
        if !(self.step.base() > T::zero()) {
            return Err(Error::invalid("outer stepsize must be positive"));
        }
        if !(self.alpha > T::zero() && self.alpha < T::lit(0.5)) {
            return Err(Error::invalid("alpha must lie in (0, 0.5)"));
        }
        if let InnerSolver::PrimalDual(cfg) = &self.inner {
            cfg.validate()?;
        }
        if let InnerSolver::PrimalDual(cfg) = &self.eval_solver {
            cfg.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint<T> {
    pub m: usize,
    pub psi_hat: T,
    pub std_err: T,
    pub eval_n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub clamped_steps: usize,
    pub degenerate_jacobians: usize,
    pub diverged_inner: usize,
    pub failed_runs: usize,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    fn absorb(&mut self, other: &Diagnostics) {
        self.clamped_steps += other.clamped_steps;
        self.degenerate_jacobians += other.degenerate_jacobians;
        self.diverged_inner += other.diverged_inner;
        self.failed_runs += other.failed_runs;
        self.warnings.extend(other.warnings.iter().cloned());
    }
}

/// One outer run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace<T> {
    pub run: usize,
    /// `s_0, …, s_M` (fewer when aborted).
    pub iterates: Vec<SensorLayout<T>>,
    pub gradient_norms: Vec<T>,
    /// Hash of the batch used at each iteration.
    pub batch_fingerprints: Vec<u64>,
    /// Base stream id of the batch used at each iteration.
    pub batch_streams: Vec<u64>,
    pub objective_trace: Vec<TracePoint<T>>,
    pub final_layout: SensorLayout<T>,
    /// Objective of the run's fixed batch at the final layout (rSAA).
    pub batch_objective: Option<T>,
    pub selected_iterate: Option<usize>,
    pub diagnostics: Diagnostics,
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapCertificate<T> {
    pub upper: T,
    pub lower: T,
    pub delta: T,
    pub z_alpha: T,
    pub t_alpha: T,
    pub runs_used: usize,
    pub psi_eval: T,
    pub psi_eval_std_err: T,
    pub run_mean: T,
    pub run_std_err: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport<T> {
    pub algorithm: Algorithm,
    pub runs: Vec<RunTrace<T>>,
    pub combined: SensorLayout<T>,
    pub gap: Option<GapCertificate<T>>,
    pub diagnostics: Diagnostics,
    pub wall_time_secs: f64,
}

impl<T: Real> RunReport<T> {
    /// Iterates of the first run.
    pub fn iterates(&self) -> &[SensorLayout<T>] {
        &self.runs[0].iterates
    }

    pub fn objective_trace(&self) -> &[TracePoint<T>] {
        &self.runs[0].objective_trace
    }

    /// `(ŝ^k, Ψ̂^k)` of the runs that completed.
    pub fn per_run_solutions(&self) -> Vec<(SensorLayout<T>, T)> {
        self.runs
            .iter()
            .filter(|r| r.aborted.is_none())
            .filter_map(|r| r.batch_objective.map(|v| (r.final_layout.clone(), v)))
            .collect()
    }
}

/// `clamp(s − ρ∇, lo, hi)` and the number of coordinates the clamp moved.
pub fn projected_step<T: Real>(
    layout: &SensorLayout<T>,
    gradient: &[T],
    rho: T,
    lo: Point<T>,
    hi: Point<T>,
) -> Result<(SensorLayout<T>, usize)> {
    if gradient.len() != 2 * layout.len() {
        return Err(Error::Dimension(format!("{} gradient entries for {} sensors", gradient.len(), layout.len())));
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("outer gradient"));
    }
    let mut clamped = 0;
    let positions = layout
        .positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut q = [T::zero(); 2];
            for c in 0..2 {
                let raw = p[c] - rho * gradient[2 * i + c];
                q[c] = raw.max(lo[c]).min(hi[c]);
                if q[c] != raw {
                    clamped += 1;
                }
            }
            q
        })
        .collect();
    Ok((SensorLayout { positions }, clamped))
}

/// Uniform random layout inside the sensor box.
pub fn random_layout<T: Real>(scenario: &Scenario<T>, sensors: usize, stream: RngStream) -> Result<SensorLayout<T>> {
    let mut rng = stream.rng();
    let positions = (0..sensors)
        .map(|_| {
            let mut p = [T::zero(); 2];
            for (c, v) in p.iter_mut().enumerate() {
                let u: f64 = rng.random();
                *v = scenario.sensor_lo[c] + (scenario.sensor_hi[c] - scenario.sensor_lo[c]) * T::lit(u);
            }
            p
        })
        .collect();
    SensorLayout::new(positions)
}

fn is_divergence(e: &Error) -> bool {
    match e {
        Error::Diverged { .. } => true,
        Error::Sample { source, .. } => is_divergence(source),
        _ => false,
    }
}

/// Large-N objective with the trace's common random numbers.
pub fn evaluate_large_n<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    layout: &SensorLayout<T>,
    eval_n: usize,
    seed: u64,
    solver: &InnerSolver<T>,
) -> Result<Evaluation<T>> {
    evaluate_objective(scenario, wind_model, layout, eval_n, BatchStreams::new(seed, TRACE_RUN, 0), solver)
}

fn select_iterate(count: usize, stream: RngStream) -> usize {
    let weights: Vec<f64> = (0..count).map(|m| 1.0 / (m + 1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut u: f64 = stream.rng().random::<f64>() * total;
    for (m, w) in weights.iter().enumerate() {
        if u < *w {
            return m;
        }
        u -= w;
    }
    count - 1
}

#[allow(clippy::too_many_arguments)]
fn single_run<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    config: &OuterConfig<T>,
    init: &SensorLayout<T>,
    seed: u64,
    run: usize,
    fixed_batch: bool,
    trace: bool,
) -> Result<RunTrace<T>> {
    scenario.check_layout(init)?;
    let mut layout = init.clone();
    let mut out = RunTrace {
        run,
        iterates: vec![layout.clone()],
        gradient_norms: Vec::new(),
        batch_fingerprints: Vec::new(),
        batch_streams: Vec::new(),
        objective_trace: Vec::new(),
        final_layout: layout.clone(),
        batch_objective: None,
        selected_iterate: None,
        diagnostics: Diagnostics::default(),
        aborted: None,
    };
    let trace_at = |m: usize, layout: &SensorLayout<T>, out: &mut RunTrace<T>| -> Result<()> {
        if trace && config.trace_every > 0 && config.eval_n >= 2 {
            let e = evaluate_large_n(scenario, wind_model, layout, config.eval_n, seed, &config.eval_solver)?;
            out.objective_trace.push(TracePoint { m, psi_hat: e.psi_hat, std_err: e.std_err, eval_n: config.eval_n });
        }
        Ok(())
    };

    let streams_for = |m: usize| BatchStreams::new(seed, run as u64, if fixed_batch { 0 } else { m as u64 + 1 });
    let mut batch: Vec<SampleTriple<T>> = draw_batch(scenario, wind_model, &layout, config.batch_size, streams_for(0))?;
    let mut warm: Vec<Option<QpSolution<T>>> = vec![None; config.batch_size];
    let use_warm = match config.warm_start {
        WarmStart::SameSample => fixed_batch,
        WarmStart::Always => true,
        WarmStart::Never => false,
    };

    for m in 0..config.iterations {
        if config.trace_every > 0 && m % config.trace_every == 0 {
            trace_at(m, &layout, &mut out)?;
        }
        let streams = streams_for(m);
        if !fixed_batch && m > 0 {
            batch = draw_batch(scenario, wind_model, &layout, config.batch_size, streams)?;
        }
        out.batch_streams.push(stream_id(streams.run, streams.iteration, 0, Purpose::Wind));
        out.batch_fingerprints.push(fingerprint_batch(&batch));

        let outcomes: Vec<Result<SampleOutcome<T>>> = batch
            .par_iter_mut()
            .zip(warm.par_iter())
            .enumerate()
            .map(|(i, (triple, w))| {
                let w = if use_warm { w.as_ref() } else { None };
                sample_outcome(scenario, &layout, triple, &config.inner, w, &config.gradient).map_err(|e| e.at_sample(i))
            })
            .collect();
        let mut contributions = Vec::with_capacity(outcomes.len());
        let mut failed = 0;
        for (i, r) in outcomes.into_iter().enumerate() {
            match r {
                Ok(o) => {
                    if o.diagnostics.degenerate {
                        out.diagnostics.degenerate_jacobians += 1;
                    }
                    contributions.push(o.contribution);
                    warm[i] = Some(o.solution);
                }
                Err(e) if is_divergence(&e) => {
                    failed += 1;
                    warm[i] = None;
                }
                Err(e) => return Err(e),
            }
        }
        out.diagnostics.diverged_inner += failed;
        if failed as f64 > config.max_diverged_fraction * config.batch_size as f64 || contributions.is_empty() {
            let e = Error::InnerBreakdown { iteration: m, failed, batch: config.batch_size };
            out.aborted = Some(e.to_string());
            out.diagnostics.warnings.push(format!("run {run}: {e}"));
            out.final_layout = layout.clone();
            return Ok(out);
        }
        let gradient = average_contributions(&contributions);
        out.gradient_norms.push(norm2(&gradient));
        let (next, clamped) = projected_step(&layout, &gradient, config.step.at(m), scenario.sensor_lo, scenario.sensor_hi)?;
        out.diagnostics.clamped_steps += clamped;
        layout = next;
        out.iterates.push(layout.clone());
    }
    if config.trace_every > 0 {
        trace_at(config.iterations, &layout, &mut out)?;
    }
    if fixed_batch {
        let sols = crate::sampling::solve_batch(scenario, &layout, &mut batch, &config.eval_solver, None);
        let mut per = Vec::with_capacity(batch.len());
        for (s, t) in sols.into_iter().zip(&batch) {
            per.push(crate::sampling::squared_error(&s?.theta_hat, &t.theta));
        }
        out.batch_objective = Some(Evaluation::from_samples(per).psi_hat);
    }
    if config.random_iterate {
        let stream = RngStream::new(seed, stream_id(run as u64, 0, 0, Purpose::Selection));
        out.selected_iterate = Some(select_iterate(config.iterations, stream));
    }
    out.final_layout = layout;
    Ok(out)
}

/// Stochastic bilevel descent: a fresh batch every outer iteration.
pub fn run_sba<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    config: &OuterConfig<T>,
    init: &SensorLayout<T>,
    seed: u64,
) -> Result<RunReport<T>> {
    scenario.validate()?;
    config.validate()?;
    let start = Instant::now();
    let run = single_run(scenario, wind_model, config, init, seed, 0, false, true)?;
    let mut diagnostics = Diagnostics::default();
    diagnostics.absorb(&run.diagnostics);
    if run.aborted.is_some() {
        diagnostics.failed_runs = 1;
    }
    let combined = run.final_layout.clone();
    Ok(RunReport {
        algorithm: Algorithm::Sba,
        runs: vec![run],
        combined,
        gap: None,
        diagnostics,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Repeated SAA: `K` independent runs, each reusing one batch for all `M`
/// iterations, combined by the componentwise mean.
pub fn run_rsaa<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    config: &OuterConfig<T>,
    inits: &[SensorLayout<T>],
    seed: u64,
) -> Result<RunReport<T>> {
    scenario.validate()?;
    config.validate()?;
    let k = config.runs;
    if !(inits.len() == 1 || inits.len() == k) {
        return Err(Error::invalid(format!("{} initial layouts for {k} runs", inits.len())));
    }
    let start = Instant::now();
    let results: Vec<Result<RunTrace<T>>> = (0..k)
        .into_par_iter()
        .map(|r| {
            let init = &inits[if inits.len() == 1 { 0 } else { r }];
            single_run(scenario, wind_model, config, init, seed, r, true, r == 0)
        })
        .collect();
    let mut diagnostics = Diagnostics::default();
    let mut runs = Vec::with_capacity(k);
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(t) => {
                diagnostics.absorb(&t.diagnostics);
                if t.aborted.is_some() {
                    diagnostics.failed_runs += 1;
                }
                runs.push(t);
            }
            Err(e) if is_divergence(&e) => {
                diagnostics.failed_runs += 1;
                diagnostics.warnings.push(format!("run {r} excluded: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    let good: Vec<&RunTrace<T>> = runs.iter().filter(|r| r.aborted.is_none()).collect();
    if good.is_empty() {
        return Err(Error::invalid("every rSAA run failed"));
    }
    let layouts: Vec<SensorLayout<T>> = good.iter().map(|r| r.final_layout.clone()).collect();
    let combined = combine_layouts(&layouts, config.align_runs)?;
    let values: Vec<T> = good.iter().filter_map(|r| r.batch_objective).collect();
    let gap = if values.len() >= 2 && config.eval_n >= 2 {
        Some(gap_bound(&values, &combined, scenario, wind_model, config.eval_n, config.alpha, seed, &config.eval_solver)?)
    } else {
        None
    };
    Ok(RunReport {
        algorithm: Algorithm::Rsaa,
        runs,
        combined,
        gap,
        diagnostics,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Componentwise mean of layouts, optionally after matching each layout's
/// sensors to the first one.
pub fn combine_layouts<T: Real>(layouts: &[SensorLayout<T>], align: bool) -> Result<SensorLayout<T>> {
    let first = layouts.first().ok_or_else(|| Error::invalid("no layouts to combine"))?;
    let n = first.len();
    if layouts.iter().any(|l| l.len() != n) {
        return Err(Error::Dimension("layouts differ in size".into()));
    }
    let mut sum = vec![[T::zero(); 2]; n];
    for l in layouts {
        let order: Vec<usize> = if align { align_to(first, l) } else { (0..n).collect() };
        for (i, &j) in order.iter().enumerate() {
            sum[i][0] = sum[i][0] + l.positions[j][0];
            sum[i][1] = sum[i][1] + l.positions[j][1];
        }
    }
    let k = T::lit(layouts.len() as f64);
    SensorLayout::new(sum.into_iter().map(|p| [p[0] / k, p[1] / k]).collect())
}

/// `order[i]` is the sensor of `other` matched to sensor `i` of `reference`.
fn align_to<T: Real>(reference: &SensorLayout<T>, other: &SensorLayout<T>) -> Vec<usize> {
    let n = reference.len();
    let cost = Mat::from_fn(n, n, |i, j| {
        let a = reference.positions[i];
        let b = other.positions[j];
        ((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])).to_f64_lossy()
    });
    min_cost_assignment(&cost)
}

/// Hungarian algorithm on a square cost matrix; `result[row] = column`.
pub fn min_cost_assignment(cost: &Mat<f64>) -> Vec<usize> {
    let n = cost.rows();
    // 1-based potentials formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Gap certificate from the per-run values and a large-N evaluation of the
/// combined layout.
pub fn gap_from_parts<T: Real>(per_run_values: &[T], upper_eval: &Evaluation<T>, alpha: T) -> Result<GapCertificate<T>> {
    let k = per_run_values.len();
    if k < 2 {
        return Err(Error::invalid("gap certificate needs at least 2 runs"));
    }
    let a = alpha.to_f64_lossy();
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::invalid("alpha must lie in (0, 0.5)"));
    }
    let z = Normal::standard().inverse_cdf(1.0 - a);
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .map_err(|e| Error::invalid(e.to_string()))?
        .inverse_cdf(1.0 - a);
    let runs = Evaluation::from_samples(per_run_values.to_vec());
    let (z, t) = (T::lit(z), T::lit(t));
    let upper = upper_eval.psi_hat + z * upper_eval.std_err;
    let lower = runs.psi_hat - t * runs.std_err;
    Ok(GapCertificate {
        upper,
        lower,
        delta: upper - lower,
        z_alpha: z,
        t_alpha: t,
        runs_used: k,
        psi_eval: upper_eval.psi_hat,
        psi_eval_std_err: upper_eval.std_err,
        run_mean: runs.psi_hat,
        run_std_err: runs.std_err,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn gap_bound<T: Real>(
    per_run_values: &[T],
    combined: &SensorLayout<T>,
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    eval_n: usize,
    alpha: T,
    seed: u64,
    solver: &InnerSolver<T>,
) -> Result<GapCertificate<T>> {
    if per_run_values.len() < 2 {
        return Err(Error::invalid("gap certificate needs at least 2 runs"));
    }
    let upper = evaluate_objective(scenario, wind_model, combined, eval_n, BatchStreams::new(seed, GAP_RUN, 0), solver)?;
    gap_from_parts(per_run_values, &upper, alpha)
}

/// Evenly spaced values including both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridAxis<T> {
    pub lo: T,
    pub hi: T,
    pub points: usize,
}

impl<T: Real> GridAxis<T> {
    pub fn values(&self) -> Vec<T> {
        if self.points <= 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / T::lit((self.points - 1) as f64);
        (0..self.points).map(|i| if i + 1 == self.points { self.hi } else { self.lo + step * T::lit(i as f64) }).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint<T> {
    pub coords: Vec<T>,
    pub psi_hat: T,
    pub std_err: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult<T> {
    pub best_layout: SensorLayout<T>,
    pub best_index: usize,
    pub curve: Vec<GridPoint<T>>,
}

/// Exhaustive evaluation over at most two free coordinates (flattened
/// indices into the layout), with the same samples at every grid point.
/// Ties go to the first grid point.
#[allow(clippy::too_many_arguments)]
pub fn grid_oracle<T: Real>(
    scenario: &Scenario<T>,
    wind_model: &WindModel<T>,
    template: &SensorLayout<T>,
    free_coords: &[usize],
    axes: &[GridAxis<T>],
    eval_n: usize,
    seed: u64,
    solver: &InnerSolver<T>,
) -> Result<GridResult<T>> {
    if free_coords.is_empty() || free_coords.len() > 2 {
        return Err(Error::invalid("grid oracle takes one or two free coordinates"));
    }
    if axes.len() != free_coords.len() {
        return Err(Error::Dimension("one grid axis per free coordinate".into()));
    }
    if free_coords.iter().any(|&k| k >= 2 * template.len()) {
        return Err(Error::invalid("free coordinate index out of range"));
    }
    if eval_n < 2 {
        return Err(Error::invalid("grid oracle needs at least 2 samples"));
    }
    let values: Vec<Vec<T>> = axes.iter().map(GridAxis::values).collect();
    let mut points: Vec<Vec<T>> = values[0].iter().map(|&v| vec![v]).collect();
    if let Some(second) = values.get(1) {
        points = points.into_iter().flat_map(|p| second.iter().map(move |&v| vec![p[0], v])).collect();
    }
    let streams = BatchStreams::new(seed, GRID_RUN, 0);
    let batch = draw_batch(scenario, wind_model, template, eval_n, streams)?;
    let mut curve = Vec::with_capacity(points.len());
    for coords in points {
        let mut layout = template.clone();
        for (&k, &v) in free_coords.iter().zip(&coords) {
            layout = layout.with_coord(k, v);
        }
        scenario.check_layout(&layout)?;
        let mut b = batch.clone();
        let e = crate::sampling::evaluate_batch(scenario, &layout, &mut b, solver)?;
        curve.push(GridPoint { coords, psi_hat: e.psi_hat, std_err: e.std_err });
    }
    let mut best_index = 0;
    for (i, p) in curve.iter().enumerate() {
        if p.psi_hat < curve[best_index].psi_hat {
            best_index = i;
        }
    }
    let mut best_layout = template.clone();
    for (&k, &v) in free_coords.iter().zip(&curve[best_index].coords) {
        best_layout = best_layout.with_coord(k, v);
    }
    Ok(GridResult { best_layout, best_index, curve })
}
