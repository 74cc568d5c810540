//! TOML-configured experiments: build an instance and schedule, run the
//! solver, and write `trajectory.csv`, `summary.txt` and `solution_X.txt`.
//!
//! ```toml
//! [problem]
//! fixture = "table1"        # or a_file/q_file, or [problem.random]
//! m = 5
//!
//! [steps]
//! safety = 0.5              # or alphas = [...]
//! scale = 1.0               # 0.5 halves every step
//!
//! [schedule]
//! family = "finite-connected"
//! seed = 7
//! count = 3                 # or graphs = [[[1, 2], [2, 3]], ...]
//!
//! [run]
//! max_iters = 6000
//! tol = 1e-8
//!
//! [output]
//! dir = "out"
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fixtures::{generate_random_problem, load_fixture};
use crate::matcore::{frobenius_norm, sym_eigenvalues, Mat};
use crate::network::{
    schedule_finite_connected, schedule_random_connected, schedule_uniformly_connected,
    TopologySchedule,
};
use crate::oracle::{solve_centralized, MAX_ORACLE_N};
use crate::problem::{decompose, default_step, DtleProblem, LocalData, DEFAULT_SAFETY};
use crate::solver::{run_observed, InitRule, MetricRecord, RunOptions, Termination, Trajectory};

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub steps: StepSection,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub fixture: Option<String>,
    /// Matrix files in text format, relative to the config file.
    pub a_file: Option<PathBuf>,
    pub q_file: Option<PathBuf>,
    pub random: Option<RandomSection>,
    pub m: usize,
    pub sizes: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RandomSection {
    pub n: usize,
    pub spectral_scale: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    #[serde(default = "default_safety")]
    pub safety: f64,
    /// Explicit per-agent steps; replaces the safety rule.
    pub alphas: Option<Vec<f64>>,
    /// Global multiplier applied after either rule.
    #[serde(default = "one")]
    pub scale: f64,
    /// Accept steps outside the admissible range (for divergence studies).
    #[serde(default)]
    pub allow_inadmissible: bool,
}

impl Default for StepSection {
    fn default() -> Self {
        StepSection {
            safety: DEFAULT_SAFETY,
            alphas: None,
            scale: 1.0,
            allow_inadmissible: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub family: String,
    pub seed: u64,
    /// Explicit graphs as one-based edge lists (finite-connected only).
    pub graphs: Option<Vec<Vec<[usize; 2]>>>,
    /// Number of random connected graphs when `graphs` is absent.
    #[serde(default = "default_count")]
    pub count: usize,
    /// Window bound `B` (uniformly-connected only).
    pub b: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// `"zeros"` or `"random"`.
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default = "one")]
    pub init_scale: f64,
    #[serde(default)]
    pub init_seed: u64,
    /// One-based row of agent 1's `X` emitted as extra CSV columns.
    pub trace_row: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            max_iters: default_max_iters(),
            tol: default_tol(),
            stride: default_stride(),
            init: default_init(),
            init_scale: 1.0,
            init_seed: 0,
            trace_row: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_dir() }
    }
}

fn default_safety() -> f64 {
    DEFAULT_SAFETY
}
fn one() -> f64 {
    1.0
}
fn default_count() -> usize {
    3
}
fn default_max_iters() -> usize {
    10_000
}
fn default_tol() -> f64 {
    1e-8
}
fn default_stride() -> usize {
    10
}
fn default_init() -> String {
    "zeros".into()
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Parses a config, reporting TOML errors with their one-based line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            line,
            message: e.message().to_string(),
        }
    })
}

/// A config resolved against its own directory.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = parse_config(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Experiment { config, base_dir })
    }

    pub fn from_config(config: ExperimentConfig, base_dir: impl Into<PathBuf>) -> Self {
        Experiment {
            config,
            base_dir: base_dir.into(),
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output.dir)
    }

    pub fn problem(&self) -> Result<DtleProblem> {
        let p = &self.config.problem;
        let sources = usize::from(p.fixture.is_some())
            + usize::from(p.a_file.is_some() || p.q_file.is_some())
            + usize::from(p.random.is_some());
        if sources != 1 {
            return Err(Error::Config(
                "[problem] needs exactly one of fixture, a_file/q_file, or [problem.random]".into(),
            ));
        }
        if let Some(name) = &p.fixture {
            return load_fixture(name);
        }
        if let Some(r) = &p.random {
            return generate_random_problem(r.n, r.spectral_scale, r.seed)
                .map_err(|e| Error::Config(e.to_string()));
        }
        let (Some(a), Some(q)) = (&p.a_file, &p.q_file) else {
            return Err(Error::Config(
                "a_file and q_file must be given together".into(),
            ));
        };
        let read = |f: &Path| -> Result<Mat> {
            let path = self.resolve(f);
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            Mat::from_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        };
        DtleProblem::new(read(a)?, read(q)?)
    }

    /// Local data with the configured step rule applied.
    pub fn locals(&self, problem: &DtleProblem) -> Result<Vec<LocalData>> {
        let p = &self.config.problem;
        let s = &self.config.steps;
        let locals = decompose(problem, p.m, p.sizes.clone())?;
        if !(s.scale > 0.0 && s.scale <= 1.0) {
            return Err(Error::Config(format!(
                "steps.scale {} outside (0, 1]",
                s.scale
            )));
        }
        let base: Vec<f64> = match &s.alphas {
            Some(list) if list.len() != locals.len() => {
                return Err(Error::Config(format!(
                    "{} step sizes for {} agents",
                    list.len(),
                    locals.len()
                )))
            }
            Some(list) => list.clone(),
            None => locals
                .iter()
                .map(|d| default_step(d, s.safety))
                .collect::<Result<_>>()?,
        };
        locals
            .into_iter()
            .zip(base)
            .map(|(d, a)| {
                let alpha = a * s.scale;
                if s.allow_inadmissible {
                    if alpha > 0.0 && alpha.is_finite() {
                        Ok(d.with_step_unchecked(alpha))
                    } else {
                        Err(Error::Config(format!("step {alpha} must be positive")))
                    }
                } else {
                    d.with_step(alpha)
                }
            })
            .collect()
    }

    pub fn schedule(&self, m: usize) -> Result<TopologySchedule> {
        let s = &self.config.schedule;
        match s.family.as_str() {
            "finite-connected" => {
                if s.b.is_some() {
                    return Err(Error::Config(
                        "b applies to the uniformly-connected family only".into(),
                    ));
                }
                match &s.graphs {
                    Some(graphs) => {
                        let specs = graphs
                            .iter()
                            .map(|edges| {
                                edges
                                    .iter()
                                    .map(|&[i, j]| {
                                        if i == 0 || j == 0 {
                                            Err(Error::Config(
                                                "edge endpoints are one-based".into(),
                                            ))
                                        } else {
                                            Ok((i - 1, j - 1))
                                        }
                                    })
                                    .collect::<Result<Vec<_>>>()
                            })
                            .collect::<Result<Vec<_>>>()?;
                        schedule_finite_connected(m, &specs, s.seed)
                    }
                    None => schedule_random_connected(m, s.count, s.seed),
                }
            }
            "uniformly-connected" => {
                if s.graphs.is_some() {
                    return Err(Error::Config(
                        "explicit graphs apply to the finite-connected family only".into(),
                    ));
                }
                let b = s.b.ok_or_else(|| {
                    Error::Config("uniformly-connected schedules need b".into())
                })?;
                schedule_uniformly_connected(m, b, s.seed)
            }
            other => Err(Error::Config(format!(
                "unknown schedule family `{other}`; expected finite-connected or uniformly-connected"
            ))),
        }
    }

    pub fn run_options(&self, reference: Option<Mat>) -> Result<RunOptions> {
        let r = &self.config.run;
        let init = match r.init.as_str() {
            "zeros" => InitRule::Zeros,
            "random" => InitRule::SeededRandom {
                scale: r.init_scale,
                seed: r.init_seed,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown init rule `{other}`; expected zeros or random"
                )))
            }
        };
        Ok(RunOptions {
            max_iters: r.max_iters,
            tol: r.tol,
            stride: r.stride,
            init,
            reference,
            trace_row: r.trace_row,
        })
    }
}

/// Comparison of the consensus `X` with the centralized solution.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleComparison {
    RelativeError(f64),
    NonUnique,
    /// `n` above the oracle's dense limit.
    Skipped,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Finished(Termination),
    Diverged { round: usize, agent: usize },
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Finished(t) => t.name(),
            Outcome::Diverged { .. } => "diverged",
        }
    }

    /// 0 converged, 2 max iterations, 3 diverged. Configuration errors use 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Finished(Termination::Converged) => 0,
            Outcome::Finished(Termination::MaxIters) => 2,
            Outcome::Diverged { .. } => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryReport {
    pub outcome: Outcome,
    pub rounds: usize,
    /// Last trajectory record.
    pub last: MetricRecord,
    pub rate: Option<(f64, f64)>,
    /// Smallest eigenvalue of the symmetric part of the consensus `X`.
    pub min_eigenvalue: Option<f64>,
    pub oracle: OracleComparison,
}

impl SummaryReport {
    /// `key=value` lines; floats use the same formatting as the CSV.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        let f = |v: f64| format!("{v:?}");
        kv("termination", self.outcome.name().into());
        if let Outcome::Diverged { round, agent } = self.outcome {
            kv("diverged_round", round.to_string());
            kv("diverged_agent", agent.to_string());
        }
        kv("rounds", self.rounds.to_string());
        kv("final_k", self.last.k.to_string());
        kv("final_residual_mean", f(self.last.residual_mean));
        kv("final_residual_max", f(self.last.residual_max));
        kv("final_disagreement", f(self.last.disagreement));
        kv("final_consensus_error", f(self.last.consensus_error));
        kv("final_objective", f(self.last.objective));
        kv(
            "final_lyapunov_distance",
            self.last.lyapunov_distance.map(f).unwrap_or_default(),
        );
        kv("final_ergodic_bound_lhs", f(self.last.ergodic_bound_lhs));
        match self.rate {
            Some((slope, r2)) => {
                kv("rate_slope", f(slope));
                kv("rate_r_squared", f(r2));
            }
            None => {
                kv("rate_slope", "n/a".into());
                kv("rate_r_squared", "n/a".into());
            }
        }
        kv(
            "min_eigenvalue_x",
            self.min_eigenvalue.map(f).unwrap_or_else(|| "n/a".into()),
        );
        match self.oracle {
            OracleComparison::RelativeError(e) => {
                kv("oracle", "unique".into());
                kv("oracle_relative_error", f(e));
            }
            OracleComparison::NonUnique => kv("oracle", "non-unique".into()),
            OracleComparison::Skipped => kv("oracle", "skipped".into()),
        }
        out
    }
}

/// Files and summary of one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub summary: SummaryReport,
    pub out_dir: PathBuf,
    pub trajectory: Option<Trajectory>,
}

/// Centralized solution, or `None` when it is not unique or `n` is too large.
pub fn oracle_reference(problem: &DtleProblem) -> Result<(Option<Mat>, OracleComparison)> {
    if problem.n() > MAX_ORACLE_N {
        return Ok((None, OracleComparison::Skipped));
    }
    match solve_centralized(problem) {
        Ok(sol) => Ok((Some(sol.x_star), OracleComparison::RelativeError(f64::NAN))),
        Err(Error::NoUniqueSolution(_)) => Ok((None, OracleComparison::NonUnique)),
        Err(e) => Err(e),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

/// Runs `exp`, writing outputs to `out_dir` (or the configured directory).
/// Configuration problems are returned as errors; divergence is an outcome.
pub fn run_experiment(exp: &Experiment, out_dir: Option<&Path>) -> Result<ExperimentResult> {
    let problem = exp.problem()?;
    let locals = exp.locals(&problem)?;
    let schedule = exp.schedule(locals.len())?;
    let (reference, mut oracle) = oracle_reference(&problem)?;
    let opts = exp.run_options(reference.clone())?;
    let out_dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| exp.output_dir());

    let mut seen: Vec<MetricRecord> = Vec::new();
    let result = run_observed(&problem, &locals, &schedule, &opts, |r| {
        seen.push(r.clone())
    });
    let (outcome, trajectory) = match result {
        Ok(t) => (Outcome::Finished(t.termination), Some(t)),
        Err(Error::Diverged { round, agent }) => (Outcome::Diverged { round, agent }, None),
        Err(e) => return Err(e),
    };

    fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut csv = Vec::new();
    match &trajectory {
        Some(t) => t.write_csv(&mut csv)?,
        None => Trajectory::write_records_csv(&seen, &mut csv)?,
    }
    write_file(
        &out_dir.join("trajectory.csv"),
        &String::from_utf8_lossy(&csv),
    )?;

    let (rounds, rate, min_eigenvalue) = match &trajectory {
        Some(t) => {
            let x = t.final_state.consensus_x();
            let x_sym = (&x + &x.transpose()).scale(0.5);
            let min_eig = sym_eigenvalues(&x_sym)?[0];
            if let (Some(x_star), OracleComparison::RelativeError(err)) = (&reference, &mut oracle)
            {
                let scale = frobenius_norm(x_star);
                let gap = frobenius_norm(&(&x - x_star));
                *err = if scale > 0.0 { gap / scale } else { gap };
            }
            write_file(&out_dir.join("solution_X.txt"), &x.to_text())?;
            let rate = t.linear_rate(None).ok().map(|r| (r.slope, r.r_squared));
            (t.final_state.k, rate, Some(min_eig))
        }
        None => {
            if let OracleComparison::RelativeError(_) = oracle {
                oracle = OracleComparison::RelativeError(f64::NAN);
            }
            let round = match outcome {
                Outcome::Diverged { round, .. } => round,
                Outcome::Finished(_) => unreachable!("only divergence lacks a trajectory"),
            };
            (round, None, None)
        }
    };
    let last = seen
        .last()
        .cloned()
        .expect("the initial state is always recorded");
    let summary = SummaryReport {
        outcome,
        rounds,
        last,
        rate,
        min_eigenvalue,
        oracle,
    };
    write_file(&out_dir.join("summary.txt"), &summary.to_text())?;
    Ok(ExperimentResult {
        summary,
        out_dir,
        trajectory,
    })
}
