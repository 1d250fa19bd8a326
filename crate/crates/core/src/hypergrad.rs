//! Implicit differentiation of the inner solution with respect to sensor
//! coordinates, and the Monte Carlo hypergradient
//! `∇_s Ψ̂ = (2/Ñ) Σ (∇_s θ̂⁽ⁱ⁾)ᵀ (θ̂⁽ⁱ⁾ − θ⁽ⁱ⁾)`.
//!
//! Coordinates are flattened as `[x_1, y_1, x_2, y_2, …]`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::plume::{Scenario, SensorLayout, WindVector};
use crate::qp::{InnerSolver, QpInstance, QpSolution};
use crate::sampling::SampleTriple;
use crate::scalar::Real;

/// How the observations react when a sensor moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ObservationCoupling {
    /// `Φ = F(s)θ + ε` is re-synthesized with the sample's fixed noise, so
    /// `∂Φ_i/∂s_i = Σ_n θ_n ∂A_n(s_i)/∂s_i` enters `∂d`.
    #[default]
    Resynthesized,
    /// `Φ` is held fixed.
    Frozen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSensitivities<T> {
    /// `∂C/∂s_k`, one matrix per coordinate.
    pub dc: Vec<Mat<T>>,
    /// `∂d/∂s_k`, one vector per coordinate.
    pub dd: Vec<Vec<T>>,
}

/// `∂C/∂s_k` and `∂d/∂s_k` for every coordinate. `truth` is the emission vector
/// that generated `phi`; pass `None` to hold the observations fixed.
pub fn qp_sensitivities<T: Real>(
    scenario: &Scenario<T>,
    wind: &WindVector<T>,
    layout: &SensorLayout<T>,
    phi: &[T],
    truth: Option<&[T]>,
) -> Result<QpSensitivities<T>> {
    let np = scenario.num_sources();
    if phi.len() != layout.len() || truth.is_some_and(|t| t.len() != np) {
        return Err(Error::Dimension("sensitivity inputs".into()));
    }
    let kernel = scenario.kernel();
    let w = scenario.data_weight();
    let mut dc = Vec::with_capacity(2 * layout.len());
    let mut dd = Vec::with_capacity(2 * layout.len());
    for (i, &s) in layout.positions.iter().enumerate() {
        let values: Vec<T> = scenario.sources.iter().map(|src| kernel.value(src, s, wind)).collect::<Result<_>>()?;
        let grads: Vec<[T; 2]> = scenario.sources.iter().map(|src| kernel.gradient(src, s, wind)).collect::<Result<_>>()?;
        let mut blocks = [Mat::zeros(np, np), Mat::zeros(np, np)];
        for m in 0..np {
            for n in m..np {
                if values[m] == T::zero() || values[n] == T::zero() {
                    continue;
                }
                let g = kernel.product_gradient(&scenario.sources[m], &scenario.sources[n], s, wind)?;
                for c in 0..2 {
                    blocks[c][(m, n)] = w * g[c];
                    blocks[c][(n, m)] = w * g[c];
                }
            }
        }
        let [bx, by] = blocks;
        dc.push(bx);
        dc.push(by);
        for c in 0..2 {
            let dphi = truth.map_or(T::zero(), |t| t.iter().zip(&grads).map(|(&th, g)| th * g[c]).sum());
            dd.push((0..np).map(|m| -w * (grads[m][c] * phi[i] + values[m] * dphi)).collect());
        }
    }
    Ok(QpSensitivities { dc, dd })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaJacobian<T> {
    /// `∇_s θ̂`, `N_p × 2n`.
    pub j_theta: Mat<T>,
    /// `∇_s η̄` on the active set, `|active| × 2n`.
    pub j_eta: Mat<T>,
    pub active: Vec<usize>,
    pub margin: Option<T>,
    /// Set when some active multiplier is below the complementarity tolerance.
    pub degenerate: bool,
}

pub const DEFAULT_COMP_TOL: f64 = 1e-8;

/// Per coordinate `k` with `r_k = ∂C_k θ̂ + ∂d_k`:
///
/// ```text
/// ∇η̄ = (Ī C⁻¹ Īᵀ)⁻¹ Ī C⁻¹ r_k
/// ∇θ = C⁻¹ (−r_k + Īᵀ ∇η̄)
/// ```
///
/// `C` is factored once for all coordinates.
pub fn implicit_jacobian<T: Real>(
    qp: &QpInstance<T>,
    sens: &QpSensitivities<T>,
    solution: &QpSolution<T>,
    comp_tol: T,
) -> Result<ThetaJacobian<T>> {
    let np = qp.dim();
    let ncoord = sens.dc.len();
    if sens.dd.len() != ncoord || solution.theta_hat.len() != np {
        return Err(Error::Dimension("jacobian inputs".into()));
    }
    let chol = Cholesky::new(&qp.c)?;
    let active = solution.active_set.clone();
    // columns C⁻¹ e_a for a in the active set, and the Schur block (C⁻¹)_{AA}
    let mut unit = vec![T::zero(); np];
    let inv_cols: Vec<Vec<T>> = active
        .iter()
        .map(|&a| {
            unit[a] = T::one();
            let col = chol.solve(&unit);
            unit[a] = T::zero();
            col
        })
        .collect();
    let schur = Mat::from_fn(active.len(), active.len(), |p, q| inv_cols[q][active[p]]);
    let schur = if active.is_empty() { None } else { Some(Cholesky::new(&schur)?) };

    let mut j_theta = Mat::zeros(np, ncoord);
    let mut j_eta = Mat::zeros(active.len(), ncoord);
    for k in 0..ncoord {
        let mut r = sens.dc[k].mul_vec(&solution.theta_hat);
        for (x, &y) in r.iter_mut().zip(&sens.dd[k]) {
            *x = *x + y;
        }
        let y = chol.solve(&r);
        let mut dtheta: Vec<T> = y.iter().map(|&v| -v).collect();
        if let Some(s) = &schur {
            let rhs: Vec<T> = active.iter().map(|&a| y[a]).collect();
            let deta = s.solve(&rhs);
            for (p, &de) in deta.iter().enumerate() {
                j_eta[(p, k)] = de;
                for (dt, &ci) in dtheta.iter_mut().zip(&inv_cols[p]) {
                    *dt = *dt + ci * de;
                }
            }
        }
        for (j, &v) in dtheta.iter().enumerate() {
            j_theta[(j, k)] = v;
        }
    }
    let margin = solution.complementarity_margin();
    let degenerate = margin.is_some_and(|m| m < comp_tol);
    Ok(ThetaJacobian { j_theta, j_eta, active, margin, degenerate })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleDiagnostics<T> {
    pub kkt_residual: T,
    pub margin: Option<T>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperGradient<T> {
    pub gradient: Vec<T>,
    pub diagnostics: Vec<SampleDiagnostics<T>>,
}

impl<T: Real> HyperGradient<T> {
    pub fn degenerate_count(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.degenerate).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientOptions<T> {
    pub comp_tol: T,
    pub coupling: ObservationCoupling,
}

impl<T: Real> Default for GradientOptions<T> {
    fn default() -> Self {
        Self { comp_tol: T::lit(DEFAULT_COMP_TOL), coupling: ObservationCoupling::default() }
    }
}

/// `Jᵀ(θ̂ − θ)` for one sample.
pub fn residual_contribution<T: Real>(jacobian: &Mat<T>, theta_hat: &[T], truth: &[T]) -> Vec<T> {
    let resid: Vec<T> = theta_hat.iter().zip(truth).map(|(&a, &b)| a - b).collect();
    jacobian.tr_mul_vec(&resid)
}

/// `(2/Ñ) Σ contributions`, summed in index order.
pub fn average_contributions<T: Real>(contributions: &[Vec<T>]) -> Vec<T> {
    let dim = contributions.first().map_or(0, Vec::len);
    let scale = T::lit(2.0) / T::lit(contributions.len() as f64);
    let mut out = vec![T::zero(); dim];
    for c in contributions {
        for (o, &v) in out.iter_mut().zip(c) {
            *o = *o + v;
        }
    }
    out.into_iter().map(|v| v * scale).collect()
}

/// Jacobian of one sample whose observations are already synthesized at `layout`.
pub fn sample_jacobian<T: Real>(
    scenario: &Scenario<T>,
    layout: &SensorLayout<T>,
    triple: &SampleTriple<T>,
    qp: &QpInstance<T>,
    solution: &QpSolution<T>,
    options: &GradientOptions<T>,
) -> Result<ThetaJacobian<T>> {
    let truth = match options.coupling {
        ObservationCoupling::Resynthesized => Some(triple.theta.as_slice()),
        ObservationCoupling::Frozen => None,
    };
    let sens = qp_sensitivities(scenario, &triple.beta, layout, &triple.phi, truth)?;
    implicit_jacobian(qp, &sens, solution, options.comp_tol)
}

/// Everything one sample contributes to an outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome<T> {
    pub contribution: Vec<T>,
    pub diagnostics: SampleDiagnostics<T>,
    pub solution: QpSolution<T>,
}

/// Re-synthesizes the sample at `layout`, solves its inner problem and returns
/// `Jᵀ(θ̂ − θ)`.
pub fn sample_outcome<T: Real>(
    scenario: &Scenario<T>,
    layout: &SensorLayout<T>,
    triple: &mut SampleTriple<T>,
    solver: &InnerSolver<T>,
    warm: Option<&QpSolution<T>>,
    options: &GradientOptions<T>,
) -> Result<SampleOutcome<T>> {
    let (_, qp) = triple.instance_at(scenario, layout)?;
    let solution = solver.solve(&qp, warm)?;
    let jac = sample_jacobian(scenario, layout, triple, &qp, &solution, options)?;
    let contribution = residual_contribution(&jac.j_theta, &solution.theta_hat, &triple.theta);
    let diagnostics = SampleDiagnostics { kkt_residual: solution.kkt_residual, margin: jac.margin, degenerate: jac.degenerate };
    Ok(SampleOutcome { contribution, diagnostics, solution })
}

/// Solves every inner problem at `layout` (re-synthesizing observations) and
/// returns the hypergradient with the per-sample solutions.
pub fn outer_gradient<T: Real>(
    scenario: &Scenario<T>,
    layout: &SensorLayout<T>,
    batch: &mut [SampleTriple<T>],
    solver: &InnerSolver<T>,
    warm: Option<&[QpSolution<T>]>,
    options: &GradientOptions<T>,
) -> Result<(HyperGradient<T>, Vec<QpSolution<T>>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let outcomes: Vec<Result<SampleOutcome<T>>> = batch
        .par_iter_mut()
        .enumerate()
        .map(|(i, triple)| {
            sample_outcome(scenario, layout, triple, solver, warm.map(|w| &w[i]), options).map_err(|e| e.at_sample(i))
        })
        .collect();
    let mut contributions = Vec::with_capacity(batch.len());
    let mut diagnostics = Vec::with_capacity(batch.len());
    let mut solutions = Vec::with_capacity(batch.len());
    for r in outcomes {
        let o = r?;
        contributions.push(o.contribution);
        diagnostics.push(o.diagnostics);
        solutions.push(o.solution);
    }
    Ok((HyperGradient { gradient: average_contributions(&contributions), diagnostics }, solutions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::solve_enumerate;

    #[test]
    fn all_active_gives_zero_jacobian() {
        let qp = QpInstance::new(Mat::<f64>::identity(2), vec![1.0, 2.0]).unwrap();
        let sol = solve_enumerate(&qp).unwrap();
        let sens = QpSensitivities { dc: vec![Mat::identity(2); 2], dd: vec![vec![0.3, -0.7]; 2] };
        let jac = implicit_jacobian(&qp, &sens, &sol, 1e-8).unwrap();
        assert!(jac.j_theta.as_slice().iter().all(|&v| v.abs() < 1e-15));
        assert!(!jac.degenerate);
    }

    #[test]
    fn empty_active_set_is_plain_solve() {
        let mut c = Mat::<f64>::identity(2);
        c[(0, 1)] = 0.5;
        c[(1, 0)] = 0.5;
        c.add_diagonal(1.0);
        let qp = QpInstance::new(c.clone(), vec![-3.0, -2.0]).unwrap();
        let sol = solve_enumerate(&qp).unwrap();
        assert!(sol.active_set.is_empty());
        let dc = Mat::from_fn(2, 2, |i, j| (i + 2 * j) as f64 * 0.1);
        let dc = dc.add(&dc.transpose());
        let dd = vec![0.4, -0.2];
        let sens = QpSensitivities { dc: vec![dc.clone()], dd: vec![dd.clone()] };
        let jac = implicit_jacobian(&qp, &sens, &sol, 1e-8).unwrap();
        let mut r = dc.mul_vec(&sol.theta_hat);
        r[0] += dd[0];
        r[1] += dd[1];
        let expected = crate::linalg::gauss_jordan_inverse(&c).unwrap().mul_vec(&r);
        for j in 0..2 {
            assert!((jac.j_theta[(j, 0)] + expected[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn contributions_are_linear_in_residual() {
        let j = Mat::from_fn(3, 4, |a, b| (a as f64 - b as f64) * 0.37 + 0.1);
        let truth = [1.0, 2.0, 3.0];
        let est = [1.5, 1.0, 3.25];
        let doubled: Vec<f64> = est.iter().zip(&truth).map(|(e, t)| t + 2.0 * (e - t)).collect();
        let g1 = average_contributions(&[residual_contribution(&j, &est, &truth)]);
        let g2 = average_contributions(&[residual_contribution(&j, &doubled, &truth)]);
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }
}
