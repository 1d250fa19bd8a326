//! Non-negative quadratic program `min ½θᵀCθ + dθ  s.t. θ ≥ 0` solved per Monte
//! Carlo sample.
//!
//! Three solvers:
//! * [`solve_pd`], the augmented primal-dual gradient iteration used inside the
//!   outer loop (fixed iteration budget, optional early exit);
//! * [`solve_active_set`], an exact primal active-set method for larger problems;
//! * [`solve_enumerate`], brute force over all active sets for `N_p ≤ 15`.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::plume::{forward_matrix, Scenario, SensorLayout, WindVector};
use crate::scalar::{all_finite, dot, norm_inf, pos, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct QpInstance<T> {
    pub c: Mat<T>,
    pub d: Vec<T>,
}

impl<T: Real> QpInstance<T> {
    pub fn new(c: Mat<T>, d: Vec<T>) -> Result<Self> {
        if !c.is_square() || c.rows() != d.len() {
            return Err(Error::Dimension(format!("C is {}x{}, d has {}", c.rows(), c.cols(), d.len())));
        }
        if !all_finite(c.as_slice()) || !all_finite(&d) {
            return Err(Error::NonFinite("QP data"));
        }
        Ok(Self { c, d })
    }

    /// `C = wFᵀF + λ₁I`, `d = λ₂1 − wFᵀΦ` with `w` the scenario's data weight.
    pub fn from_forward(scenario: &Scenario<T>, f: &Mat<T>, phi: &[T]) -> Result<Self> {
        if f.rows() != phi.len() || f.cols() != scenario.num_sources() {
            return Err(Error::Dimension(format!(
                "F is {}x{}, {} observations, {} sources",
                f.rows(),
                f.cols(),
                phi.len(),
                scenario.num_sources()
            )));
        }
        let w = scenario.data_weight();
        let mut c = f.gram().scale(w);
        c.add_diagonal(scenario.elastic_l2);
        let d = f.tr_mul_vec(phi).into_iter().map(|v| scenario.elastic_l1 - w * v).collect();
        Self::new(c, d)
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn objective(&self, theta: &[T]) -> T {
        T::lit(0.5) * self.c.quad_form(theta) + dot(&self.d, theta)
    }

    /// `Cθ + d`
    pub fn gradient(&self, theta: &[T]) -> Vec<T> {
        self.c.mul_vec(theta).into_iter().zip(&self.d).map(|(a, &b)| a + b).collect()
    }

    /// `max(‖Cθ + d − η‖∞, |η·θ|, ‖min(θ,0)‖∞, ‖min(η,0)‖∞)`
    pub fn kkt_residual(&self, theta: &[T], eta: &[T]) -> T {
        let g = self.gradient(theta);
        let stat = g.iter().zip(eta).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        let comp = dot(eta, theta).abs();
        let neg = theta.iter().chain(eta).fold(T::zero(), |m, &x| m.max(-x));
        stat.max(comp).max(neg)
    }
}

pub fn assemble_qp<T: Real>(
    scenario: &Scenario<T>,
    wind: &WindVector<T>,
    layout: &SensorLayout<T>,
    phi: &[T],
) -> Result<QpInstance<T>> {
    let f = forward_matrix(scenario, wind, layout)?;
    QpInstance::from_forward(scenario, &f, phi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution<T> {
    pub theta_hat: Vec<T>,
    /// Multipliers; for the iterative solver these are recovered as `[Cθ̂ + d]₊`.
    pub eta_hat: Vec<T>,
    pub active_set: Vec<usize>,
    pub kkt_residual: T,
    pub iterations_used: usize,
    pub converged: bool,
}

impl<T: Real> QpSolution<T> {
    fn finish(qp: &QpInstance<T>, theta: Vec<T>, eta: Vec<T>, iterations: usize, active_tol: Option<T>, kkt_tol: T) -> Self {
        let tol = active_tol.unwrap_or_else(|| default_active_tol(&theta));
        let active_set = theta.iter().enumerate().filter(|(_, &t)| t <= tol).map(|(j, _)| j).collect();
        let kkt_residual = qp.kkt_residual(&theta, &eta);
        Self { theta_hat: theta, eta_hat: eta, active_set, kkt_residual, iterations_used: iterations, converged: kkt_residual <= kkt_tol }
    }

    /// Smallest multiplier over the active set, or `None` when nothing is active.
    pub fn complementarity_margin(&self) -> Option<T> {
        self.active_set.iter().map(|&j| self.eta_hat[j]).reduce(|a, b| a.min(b))
    }
}

/// `10⁻⁶ (1 + ‖θ‖∞)`
pub fn default_active_tol<T: Real>(theta: &[T]) -> T {
    T::lit(1e-6) * (T::one() + norm_inf(theta))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerStep<T> {
    /// `0.9 / (‖C‖₂ + γ)` with `‖C‖₂` from 20 power iterations.
    Auto,
    Fixed(T),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerConfig<T> {
    pub gamma: T,
    pub step: InnerStep<T>,
    pub max_iters: usize,
    /// `None` means `10⁻⁶(1 + ‖θ̂‖∞)`.
    pub active_tol: Option<T>,
    pub kkt_tol: T,
    pub early_exit: bool,
    pub check_every: usize,
}

impl<T: Real> Default for InnerConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(10.0),
            step: InnerStep::Auto,
            max_iters: 20_000,
            active_tol: None,
            kkt_tol: T::lit(1e-6),
            early_exit: true,
            check_every: 50,
        }
    }
}

impl<T: Real> InnerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero()) {
            return Err(Error::invalid("gamma must be positive"));
        }
        if let InnerStep::Fixed(t) = self.step {
            if !(t > T::zero()) {
                return Err(Error::invalid("inner stepsize must be positive"));
            }
        }
        if self.max_iters == 0 || self.check_every == 0 {
            return Err(Error::invalid("max_iters and check_every must be at least 1"));
        }
        if !(self.kkt_tol > T::zero()) {
            return Err(Error::invalid("kkt_tol must be positive"));
        }
        Ok(())
    }

    pub fn stepsize(&self, qp: &QpInstance<T>) -> T {
        match self.step {
            InnerStep::Fixed(t) => t,
            InnerStep::Auto => T::lit(0.9) / (qp.c.power_norm(20) + self.gamma),
        }
    }
}

/// Augmented primal-dual projected gradient iteration.
///
/// ```text
/// ξ   = [η − γθ]₊
/// θ  ← [θ − τ(Cθ + d − ξ)]₊
/// η  ← [η + τ(ξ − η)/γ]₊
/// ```
pub fn solve_pd<T: Real>(qp: &QpInstance<T>, config: &InnerConfig<T>, warm: Option<&QpSolution<T>>) -> Result<QpSolution<T>> {
    config.validate()?;
    let n = qp.dim();
    let (mut theta, mut eta) = match warm {
        Some(w) if w.theta_hat.len() == n && w.eta_hat.len() == n => {
            (w.theta_hat.iter().map(|&x| pos(x)).collect(), w.eta_hat.iter().map(|&x| pos(x)).collect())
        }
        Some(_) => return Err(Error::Dimension("warm start size".into())),
        None => (vec![T::zero(); n], vec![T::zero(); n]),
    };
    let tau = config.stepsize(qp);
    let gamma = config.gamma;
    let recovered = |theta: &[T]| qp.gradient(theta).into_iter().map(pos).collect::<Vec<T>>();

    let mut used = 0;
    let done = |theta: &[T]| config.early_exit && qp.kkt_residual(theta, &recovered(theta)) <= config.kkt_tol;
    if !(warm.is_some() && done(&theta)) {
        for j in 0..config.max_iters {
            let g = qp.gradient(&theta);
            for b in 0..n {
                let xi = pos(eta[b] - gamma * theta[b]);
                let g_theta = g[b] - xi;
                let g_eta = (xi - eta[b]) / gamma;
                theta[b] = pos(theta[b] - tau * g_theta);
                eta[b] = pos(eta[b] + tau * g_eta);
            }
            used = j + 1;
            if !all_finite(&theta) || !all_finite(&eta) {
                return Err(Error::Diverged { iteration: j });
            }
            if used % config.check_every == 0 && done(&theta) {
                break;
            }
        }
    }
    let eta_hat = recovered(&theta);
    Ok(QpSolution::finish(qp, theta, eta_hat, used, config.active_tol, config.kkt_tol))
}

/// Solves the equality-constrained system with `θ_S = 0`; returns `(θ, η)` with
/// `η` zero off `S`.
fn solve_with_active<T: Real>(qp: &QpInstance<T>, active: &[bool]) -> Result<(Vec<T>, Vec<T>)> {
    let n = qp.dim();
    let free: Vec<usize> = (0..n).filter(|&j| !active[j]).collect();
    let mut theta = vec![T::zero(); n];
    if !free.is_empty() {
        let chol = Cholesky::new(&qp.c.submatrix(&free))?;
        let rhs: Vec<T> = free.iter().map(|&j| -qp.d[j]).collect();
        for (&j, v) in free.iter().zip(chol.solve(&rhs)) {
            theta[j] = v;
        }
    }
    let g = qp.gradient(&theta);
    let eta = (0..n).map(|j| if active[j] { g[j] } else { T::zero() }).collect();
    Ok((theta, eta))
}

/// Exact solution by enumerating every active set. Candidates are visited by
/// size, then lexicographically, and only a strictly smaller objective
/// replaces the incumbent.
pub fn solve_enumerate<T: Real>(qp: &QpInstance<T>) -> Result<QpSolution<T>> {
    let n = qp.dim();
    if n > 15 {
        return Err(Error::TooManyUnknowns(n));
    }
    let scale = T::one() + norm_inf(&qp.d) + qp.c.max_abs();
    let feas_tol = T::lit(1e3) * T::epsilon() * scale;
    let mut masks: Vec<u32> = (0..1u32 << n).collect();
    let members = |m: u32| (0..n).filter(move |&j| m >> j & 1 == 1);
    masks.sort_by(|&a, &b| a.count_ones().cmp(&b.count_ones()).then_with(|| members(a).cmp(members(b))));

    let mut best: Option<(T, Vec<T>, Vec<T>)> = None;
    for mask in masks {
        let active: Vec<bool> = (0..n).map(|j| mask >> j & 1 == 1).collect();
        let (theta, eta) = solve_with_active(qp, &active)?;
        if theta.iter().chain(&eta).any(|&x| x < -feas_tol) {
            continue;
        }
        let theta: Vec<T> = theta.into_iter().map(pos).collect();
        let eta: Vec<T> = eta.into_iter().map(pos).collect();
        let obj = qp.objective(&theta);
        let better = match &best {
            None => true,
            Some((b, _, _)) => obj < *b - T::lit(1e-13) * (T::one() + b.abs()),
        };
        if better {
            best = Some((obj, theta, eta));
        }
    }
    let (_, theta, eta) = best.ok_or_else(|| Error::invalid("no feasible active set"))?;
    Ok(QpSolution::finish(qp, theta, eta, 1 << n, None, T::lit(1e-6)))
}

/// Primal active-set method for the strictly convex bound-constrained QP.
/// Exact up to round-off; used where the fixed-budget iteration is too slow.
pub fn solve_active_set<T: Real>(qp: &QpInstance<T>) -> Result<QpSolution<T>> {
    let n = qp.dim();
    let scale = T::one() + norm_inf(&qp.d) + qp.c.max_abs();
    let tol = T::lit(1e3) * T::epsilon() * scale;
    // start from θ = 0 with every bound active
    let mut active = vec![true; n];
    let mut theta = vec![T::zero(); n];
    let max_iter = 10 * n + 50;
    for it in 0..max_iter {
        let (cand, _) = solve_with_active(qp, &active)?;
        let blocked = (0..n).any(|j| !active[j] && cand[j] < -tol);
        if !blocked {
            theta = cand;
            let g = qp.gradient(&theta);
            // release the most negative multiplier
            let release = (0..n)
                .filter(|&j| active[j] && g[j] < -tol)
                .min_by(|&a, &b| g[a].partial_cmp(&g[b]).unwrap_or(std::cmp::Ordering::Equal));
            match release {
                Some(j) => active[j] = false,
                None => {
                    let theta: Vec<T> = theta.into_iter().map(pos).collect();
                    let eta = qp.gradient(&theta).into_iter().enumerate().map(|(j, v)| if active[j] { pos(v) } else { T::zero() }).collect();
                    return Ok(QpSolution::finish(qp, theta, eta, it + 1, None, T::lit(1e-6)));
                }
            }
        } else {
            // step towards the candidate until the first free coordinate hits zero
            let mut alpha = T::one();
            let mut hit = None;
            for j in 0..n {
                if !active[j] && cand[j] < theta[j] {
                    let a = theta[j] / (theta[j] - cand[j]);
                    if a < alpha {
                        alpha = a;
                        hit = Some(j);
                    }
                }
            }
            for j in 0..n {
                theta[j] = theta[j] + alpha * (cand[j] - theta[j]);
            }
            if let Some(j) = hit {
                active[j] = true;
                theta[j] = T::zero();
            }
            for j in 0..n {
                if !active[j] && theta[j] <= T::zero() {
                    active[j] = true;
                    theta[j] = T::zero();
                }
            }
        }
    }
    Err(Error::Diverged { iteration: max_iter })
}

/// Inner solver selection for the outer loop and for objective evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerSolver<T> {
    PrimalDual(InnerConfig<T>),
    ActiveSet,
    Enumerate,
}

impl<T: Real> InnerSolver<T> {
    pub fn solve(&self, qp: &QpInstance<T>, warm: Option<&QpSolution<T>>) -> Result<QpSolution<T>> {
        match self {
            Self::PrimalDual(cfg) => solve_pd(qp, cfg, warm),
            Self::ActiveSet => solve_active_set(qp),
            Self::Enumerate => solve_enumerate(qp),
        }
    }
}
