use crate::error::Result;
use crate::matcore::{frobenius_norm, Mat};
use crate::problem::{local_objective, AgentEstimate, DtleProblem, LocalData};

use super::SolverState;

/// Metrics at one recorded round.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub k: usize,
    /// Mean over agents of `|A X_i A' - X_i + Q|_F`.
    pub residual_mean: f64,
    pub residual_max: f64,
    pub disagreement: f64,
    pub consensus_error: f64,
    /// `F = sum_i f_i(Z_i)`.
    pub objective: f64,
    /// Step-weighted distance to the reference; `None` without a reference.
    pub lyapunov_distance: Option<f64>,
    /// `sum_i (1 - a_i xi_i) f_i` at the agents' running means; 0 at `k = 0`.
    pub ergodic_bound_lhs: f64,
    pub trace: Option<Vec<f64>>,
}

impl MetricRecord {
    pub const CSV_HEADER: &'static str = "k,residual_mean,residual_max,disagreement,consensus_error,objective,lyapunov_distance,ergodic_bound_lhs";

    pub fn csv_line(&self) -> String {
        let mut line = format!(
            "{},{:?},{:?},{:?},{:?},{:?},{},{:?}",
            self.k,
            self.residual_mean,
            self.residual_max,
            self.disagreement,
            self.consensus_error,
            self.objective,
            self.lyapunov_distance
                .map(|d| format!("{d:?}"))
                .unwrap_or_default(),
            self.ergodic_bound_lhs
        );
        for v in self.trace.iter().flatten() {
            line.push_str(&format!(",{v:?}"));
        }
        line
    }
}

pub fn residual(problem: &DtleProblem, x: &Mat) -> f64 {
    problem.residual(x)
}

/// `sum_i |sum_j (X_i - X_j)|_F = sum_i |m X_i - sum_j X_j|_F`
pub fn disagreement(state: &SolverState) -> f64 {
    let m = state.m() as f64;
    let n = state.n();
    let mut total = Mat::zeros(n, n);
    for a in &state.agents {
        total += &a.x;
    }
    state
        .agents
        .iter()
        .map(|a| frobenius_norm(&(&a.x.scale(m) - &total)))
        .sum()
}

/// `max_i |Z_i - H|_F` with `H` the agents' mean.
pub fn consensus_error(state: &SolverState) -> f64 {
    let n = state.n();
    let inv_m = 1.0 / state.m() as f64;
    let mut h = AgentEstimate::zeros(n);
    for a in &state.agents {
        h.x.axpy(inv_m, &a.x);
        h.y.axpy(inv_m, &a.y);
    }
    state
        .agents
        .iter()
        .map(|a| a.squared_distance(&h).sqrt())
        .fold(0.0, f64::max)
}

pub fn objective(state: &SolverState) -> Result<f64> {
    state
        .locals
        .iter()
        .zip(&state.agents)
        .map(|(d, e)| local_objective(d, e))
        .sum()
}

/// `sqrt(sum_i (|X_i - X_i*|^2 + |Y_i - Y_i*|^2) / a_i)`
pub fn lyapunov_distance(state: &SolverState, reference: &[AgentEstimate], alphas: &[f64]) -> f64 {
    assert_eq!(reference.len(), state.m(), "reference agent count");
    assert_eq!(alphas.len(), state.m(), "step size count");
    state
        .agents
        .iter()
        .zip(reference)
        .zip(alphas)
        .map(|((a, r), alpha)| a.squared_distance(r) / alpha)
        .sum::<f64>()
        .sqrt()
}

/// `sum_i (1 - a_i xi_i) f_i(means_i)`
pub fn ergodic_bound_lhs(locals: &[LocalData], means: &[AgentEstimate]) -> Result<f64> {
    locals
        .iter()
        .zip(means)
        .map(|(d, z)| Ok((1.0 - d.alpha() * d.xi()) * local_objective(d, z)?))
        .sum()
}
