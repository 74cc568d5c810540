//! Synchronous-round distributed iteration.
//!
//! Each round every agent mixes its neighbors' round-`k` estimates and
//! takes a local gradient step:
//!
//! ```text
//! X_i <- X_i - a_i dX_i - (a_i/2) sum_{j in N_i} a_ij (X_i - X_j)
//! Y_i <- Y_i - a_i dY_i - (a_i/2) sum_{j in N_i} a_ij (Y_i - Y_j)
//! ```
//!
//! which is the same as `Z_i <- sum_j w_ij Z_j - a_i grad f_i(Z_i)` with the
//! mixing matrix from [`weight_matrix`](crate::network::weight_matrix).

mod metrics;
mod rate;
mod transition;

use rand::Rng;
use rayon::prelude::*;

pub use metrics::{
    consensus_error, disagreement, ergodic_bound_lhs, lyapunov_distance, objective, residual,
    MetricRecord,
};
pub use rate::{estimate_linear_rate, RateEstimate, MIN_FIT_RECORDS};
pub use transition::{phi_bound, transition_matrix};

use crate::error::{Error, Result};
use crate::matcore::Mat;
use crate::network::{weight_matrix, Graph, TopologySchedule};
use crate::problem::{local_gradients, AgentEstimate, DtleProblem, LocalData};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitRule {
    Zeros,
    /// Entries i.i.d. uniform in `[-scale, scale]`.
    SeededRandom {
        scale: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub k: usize,
    pub agents: Vec<AgentEstimate>,
    pub locals: Vec<LocalData>,
}

impl SolverState {
    pub fn m(&self) -> usize {
        self.agents.len()
    }

    pub fn n(&self) -> usize {
        self.locals[0].n()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.locals.iter().map(LocalData::alpha).collect()
    }

    /// Mean of the agents' `X_i`.
    pub fn consensus_x(&self) -> Mat {
        let mut mean = Mat::zeros(self.n(), self.n());
        for a in &self.agents {
            mean.axpy(1.0 / self.m() as f64, &a.x);
        }
        mean
    }
}

pub fn init_state(locals: &[LocalData], rule: InitRule) -> Result<SolverState> {
    let n = locals
        .first()
        .map(LocalData::n)
        .ok_or_else(|| Error::Parameter("at least one agent is required".into()))?;
    if locals.iter().any(|d| d.n() != n) {
        return Err(Error::Dimension("agents disagree on n".into()));
    }
    let agents = match rule {
        InitRule::Zeros => vec![AgentEstimate::zeros(n); locals.len()],
        InitRule::SeededRandom { scale, seed } => {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(Error::Parameter(format!("init scale {scale} must be >= 0")));
            }
            let mut rng = rng::seeded(seed);
            let mut draw = || {
                if scale == 0.0 {
                    0.0
                } else {
                    rng.random_range(-scale..=scale)
                }
            };
            (0..locals.len())
                .map(|_| {
                    let x = Mat::from_fn(n, n, |_, _| draw());
                    let y = Mat::from_fn(n, n, |_, _| draw());
                    AgentEstimate { x, y }
                })
                .collect()
        }
    };
    Ok(SolverState {
        k: 0,
        agents,
        locals: locals.to_vec(),
    })
}

fn check_graph(state: &SolverState, g: &Graph) -> Result<()> {
    if g.m() != state.m() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes but there are {} agents",
            g.m(),
            state.m()
        )));
    }
    Ok(())
}

fn finish_round(state: &SolverState, agents: Vec<AgentEstimate>) -> Result<SolverState> {
    if let Some(agent) = agents.iter().position(|a| !a.is_finite()) {
        return Err(Error::Diverged {
            round: state.k + 1,
            agent: agent + 1,
        });
    }
    Ok(SolverState {
        k: state.k + 1,
        agents,
        locals: state.locals.clone(),
    })
}

/// One synchronous round in neighbor-difference form. Agents read only
/// round-`k` values and are evaluated in parallel.
pub fn step(state: &SolverState, g: &Graph) -> Result<SolverState> {
    check_graph(state, g)?;
    let agents = (0..state.m())
        .into_par_iter()
        .map(|i| {
            let d = &state.locals[i];
            let cur = &state.agents[i];
            let (dx, dy) = local_gradients(d, cur)?;
            let alpha = d.alpha();
            let mut x = cur.x.clone();
            let mut y = cur.y.clone();
            x.axpy(-alpha, &dx);
            y.axpy(-alpha, &dy);
            for (j, a_ij) in g.neighbors(i) {
                let other = &state.agents[j];
                let c = alpha / 2.0 * a_ij;
                x.axpy(-c, &(&cur.x - &other.x));
                y.axpy(-c, &(&cur.y - &other.y));
            }
            Ok(AgentEstimate { x, y })
        })
        .collect::<Result<Vec<_>>>()?;
    finish_round(state, agents)
}

/// One round in mixing-matrix form, `Z_i <- sum_j w_ij Z_j - a_i grad f_i(Z_i)`.
/// Requires every step size in `(0, 1]`.
pub fn step_mixing(state: &SolverState, g: &Graph) -> Result<SolverState> {
    check_graph(state, g)?;
    let w = weight_matrix(g, &state.alphas())?.w;
    let n = state.n();
    let agents = (0..state.m())
        .into_par_iter()
        .map(|i| {
            let d = &state.locals[i];
            let (dx, dy) = local_gradients(d, &state.agents[i])?;
            let mut x = Mat::zeros(n, n);
            let mut y = Mat::zeros(n, n);
            for (j, other) in state.agents.iter().enumerate() {
                let wij = w[(i, j)];
                if wij != 0.0 {
                    x.axpy(wij, &other.x);
                    y.axpy(wij, &other.y);
                }
            }
            x.axpy(-d.alpha(), &dx);
            y.axpy(-d.alpha(), &dy);
            Ok(AgentEstimate { x, y })
        })
        .collect::<Result<Vec<_>>>()?;
    finish_round(state, agents)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Stop once `residual_max <= tol`.
    pub tol: f64,
    /// Record metrics every `stride` rounds; the final round is always recorded.
    pub stride: usize,
    pub init: InitRule,
    /// Solution `X*` used for the weighted-distance metrics.
    pub reference: Option<Mat>,
    /// One-based row of agent 1's `X` to trace into each record.
    pub trace_row: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_iters: 10_000,
            tol: 1e-8,
            stride: 10,
            init: InitRule::Zeros,
            reference: None,
            trace_row: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<MetricRecord>,
    pub final_state: SolverState,
    /// Per-agent time averages `(1/k) sum_{l=1..k} Z_{i,l}`; equal to the
    /// initial state when no round ran.
    pub running_means: Vec<AgentEstimate>,
    pub termination: Termination,
    /// Residual level treated as rounding noise.
    pub floor: f64,
}

impl Trajectory {
    pub fn last(&self) -> &MetricRecord {
        self.records
            .last()
            .expect("a run records at least one round")
    }

    /// Linear-rate fit over `window`, or the default post-transient window.
    pub fn linear_rate(&self, window: Option<(usize, usize)>) -> Result<RateEstimate> {
        estimate_linear_rate(&self.records, self.floor, window)
    }

    /// First recorded round with `residual_max <= level`.
    pub fn rounds_to_reach(&self, level: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.residual_max <= level)
            .map(|r| r.k)
    }

    /// Writes the trajectory as CSV. Trace columns are appended when the
    /// records carry them.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        Self::write_records_csv(&self.records, out)
    }

    /// [`write_csv`](Self::write_csv) for a bare record list.
    pub fn write_records_csv<W: std::io::Write>(
        records: &[MetricRecord],
        mut out: W,
    ) -> std::io::Result<()> {
        let trace_header = records.first().and_then(|r| r.trace.as_ref()).map(|t| {
            (1..=t.len())
                .map(|c| format!(",x1_c{c}"))
                .collect::<String>()
        });
        writeln!(
            out,
            "{}{}",
            MetricRecord::CSV_HEADER,
            trace_header.unwrap_or_default()
        )?;
        for r in records {
            writeln!(out, "{}", r.csv_line())?;
        }
        Ok(())
    }
}

fn record(
    problem: &DtleProblem,
    state: &SolverState,
    reference: Option<&[AgentEstimate]>,
    means: &[AgentEstimate],
    trace_row: Option<usize>,
) -> Result<MetricRecord> {
    let residuals: Vec<f64> = state
        .agents
        .iter()
        .map(|a| residual(problem, &a.x))
        .collect();
    let residual_mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let residual_max = residuals.iter().copied().fold(0.0, f64::max);
    let alphas = state.alphas();
    Ok(MetricRecord {
        k: state.k,
        residual_mean,
        residual_max,
        disagreement: disagreement(state),
        consensus_error: consensus_error(state),
        objective: objective(state)?,
        lyapunov_distance: reference.map(|r| lyapunov_distance(state, r, &alphas)),
        ergodic_bound_lhs: if state.k == 0 {
            0.0
        } else {
            ergodic_bound_lhs(&state.locals, means)?
        },
        trace: trace_row.map(|row| state.agents[0].x.row(row - 1).to_vec()),
    })
}

fn max_residual(problem: &DtleProblem, state: &SolverState) -> f64 {
    state
        .agents
        .iter()
        .map(|a| residual(problem, &a.x))
        .fold(0.0, f64::max)
}

/// Iterates [`step`] over `schedule` until `residual_max <= tol` or
/// `max_iters` rounds, recording metrics along the way.
pub fn run(
    problem: &DtleProblem,
    locals: &[LocalData],
    schedule: &TopologySchedule,
    opts: &RunOptions,
) -> Result<Trajectory> {
    run_observed(problem, locals, schedule, opts, |_| {})
}

/// [`run`] that also hands every record to `observe` as it is taken, so
/// callers keep the partial trajectory when a run diverges.
pub fn run_observed(
    problem: &DtleProblem,
    locals: &[LocalData],
    schedule: &TopologySchedule,
    opts: &RunOptions,
    mut observe: impl FnMut(&MetricRecord),
) -> Result<Trajectory> {
    if opts.tol.is_nan() || opts.tol < 0.0 {
        return Err(Error::Parameter(format!(
            "tolerance {} must be >= 0",
            opts.tol
        )));
    }
    if opts.stride == 0 {
        return Err(Error::Parameter("stride must be at least 1".into()));
    }
    let n = problem.n();
    if locals.iter().any(|d| d.n() != n) {
        return Err(Error::Dimension(
            "local data does not match the problem size".into(),
        ));
    }
    if schedule.m() != locals.len() {
        return Err(Error::Dimension(format!(
            "schedule has {} agents, local data has {}",
            schedule.m(),
            locals.len()
        )));
    }
    if let Some(row) = opts.trace_row {
        if row == 0 || row > n {
            return Err(Error::Parameter(format!("trace row {row} outside 1..={n}")));
        }
    }
    let reference: Option<Vec<AgentEstimate>> = match &opts.reference {
        Some(x) if x.shape() != (n, n) => {
            return Err(Error::Dimension("reference solution must be n x n".into()))
        }
        Some(x) => Some(vec![
            AgentEstimate::from_solution(problem.a(), x);
            locals.len()
        ]),
        None => None,
    };

    let mut state = init_state(locals, opts.init)?;
    let mut means = state.agents.clone();
    let mut records = Vec::new();
    let mut push = |r: MetricRecord| {
        observe(&r);
        records.push(r);
    };
    push(record(
        problem,
        &state,
        reference.as_deref(),
        &means,
        opts.trace_row,
    )?);
    let mut last_k = 0;

    let termination = loop {
        if max_residual(problem, &state) <= opts.tol {
            break Termination::Converged;
        }
        if state.k >= opts.max_iters {
            break Termination::MaxIters;
        }
        state = step(&state, schedule.graph_at(state.k))?;
        let inv_k = 1.0 / state.k as f64;
        for (mean, cur) in means.iter_mut().zip(&state.agents) {
            if state.k == 1 {
                *mean = cur.clone();
            } else {
                mean.x.axpy(inv_k, &(&cur.x - &mean.x));
                mean.y.axpy(inv_k, &(&cur.y - &mean.y));
            }
        }
        if state.k % opts.stride == 0 {
            push(record(
                problem,
                &state,
                reference.as_deref(),
                &means,
                opts.trace_row,
            )?);
            last_k = state.k;
        }
    };
    if last_k != state.k {
        push(record(
            problem,
            &state,
            reference.as_deref(),
            &means,
            opts.trace_row,
        )?);
    }
    Ok(Trajectory {
        records,
        final_state: state,
        running_means: means,
        termination,
        floor: problem.numerical_floor(),
    })
}
