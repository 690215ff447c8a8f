//! Experiment orchestration: run configs, the evaluation modes, multi-graph
//! multi-trial sweeps and their CSV/JSON outputs.
//!
//! Output layout of [`run_experiment`]:
//!
//! ```text
//! <out>/trajectories/traj_g000_t000.csv   one per (graph, trial), all optimizers
//! <out>/aggregate.csv                      best-of-trials per graph, mean/std over graphs
//! <out>/summary.json                       config, graphs, per-trial finals, aggregates
//! ```
//!
//! [`write_report`] recomputes the aggregates from the trajectory files and
//! adds `<out>/curve.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, AdamConfig, NelderMeadConfig, OptimizerTrace, SpsaConfig};
use crate::darbo::{self, DarboConfig};
use crate::mitigation::{self, ConfusionMode, ConfusionSpec, ZneOrder, ZneSeries};
use crate::noise_sim::{self, FoldFactor, NoiseModel, DENSITY_MAX_N};
use crate::problem::{generate_w3r, BruteForceResult, QuboProblem, WeightedGraph, BRUTE_FORCE_MAX_N};
use crate::seeding;
use crate::simulator::{self, QaoaParams, STATEVECTOR_MAX_N};
use crate::{Error, Result};

/// Version of the CSV column layout and summary JSON.
pub const SCHEMA_VERSION: u32 = 1;

/// Finite-difference step Adam uses when the objective is stochastic and the
/// config leaves `fd_step` unset.
pub const STOCHASTIC_FD_STEP: f64 = 1e-1;

const TAG_X0: u64 = 0x7830;
const TAG_CALIBRATION: u64 = 0xCA1;
const TAG_SUCCESS: u64 = 0x5CC;
const TAG_OPTIMIZER: u64 = 0x0F7;

fn default_folds() -> Vec<u32> {
    vec![1, 3, 5]
}

fn default_true() -> bool {
    true
}

fn default_repeats() -> u32 {
    1
}

fn default_one() -> usize {
    1
}

fn default_weight_high() -> f64 {
    1.0
}

fn default_budget() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    /// A graph JSON file as written by `gen-graph`.
    File { path: PathBuf },
    /// `count` w3R graphs with seeds `seed, seed + 1, ...`.
    W3r {
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_one")]
        count: usize,
        #[serde(default)]
        weight_low: f64,
        #[serde(default = "default_weight_high")]
        weight_high: f64,
    },
    /// The five-variable benchmark `z0z1 - z0z2 + z0z3 - z3z4`.
    FiveVariable,
}

impl ProblemSource {
    pub fn load(&self) -> Result<Vec<QuboProblem>> {
        match self {
            ProblemSource::File { path } => Ok(vec![QuboProblem::new(WeightedGraph::load(path)?)]),
            ProblemSource::W3r { n, seed, count, weight_low, weight_high } => {
                if *count == 0 {
                    return Err(Error::InvalidArgument("w3r count must be at least 1".into()));
                }
                (0..*count as u64)
                    .map(|k| Ok(QuboProblem::new(generate_w3r(*n, seed + k, *weight_low, *weight_high)?)))
                    .collect()
            }
            ProblemSource::FiveVariable => Ok(vec![QuboProblem::five_variable_benchmark()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalMode {
    /// Exact expectation from the statevector.
    Exact,
    /// Shot estimate from `m` fresh samples per evaluation.
    Shots { m: u64 },
    /// Density-matrix simulation with readout errors.
    Noisy {
        #[serde(default)]
        noise: NoiseModel,
        m: u64,
        /// Fold factors for ZNE; only used with mitigation.
        #[serde(default = "default_folds")]
        folds: Vec<u32>,
        #[serde(default = "default_true")]
        mitigation: bool,
        /// Count every fold as one circuit evaluation instead of one per
        /// mitigated estimate.
        #[serde(default)]
        count_folds: bool,
        /// Independent mitigated estimates averaged at each fold before
        /// extrapolating.
        #[serde(default = "default_repeats")]
        repeats: u32,
        /// Shots per calibration preparation; defaults to `m`.
        #[serde(default)]
        calibration_shots: Option<u64>,
    },
}

impl EvalMode {
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, EvalMode::Exact)
    }

    /// Label of the evaluation path recorded in trajectories: `ideal`
    /// (exact), `shots`, `raw` (noisy, unmitigated) or `mitigated`.
    pub fn series(&self) -> &'static str {
        match self {
            EvalMode::Exact => "ideal",
            EvalMode::Shots { .. } => "shots",
            EvalMode::Noisy { mitigation: false, .. } => "raw",
            EvalMode::Noisy { mitigation: true, .. } => "mitigated",
        }
    }

    /// Shot count of the mode, if it samples.
    pub fn shots(&self) -> Option<u64> {
        match self {
            EvalMode::Exact => None,
            EvalMode::Shots { m } | EvalMode::Noisy { m, .. } => Some(*m),
        }
    }

    fn max_qubits(&self) -> (usize, &'static str) {
        match self {
            EvalMode::Exact | EvalMode::Shots { .. } => (STATEVECTOR_MAX_N, "statevector simulation"),
            EvalMode::Noisy { .. } => (DENSITY_MAX_N, "density-matrix simulation"),
        }
    }

    /// Mode-level problems, independent of the graph.
    fn check(&self, p: usize) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            EvalMode::Exact => {}
            EvalMode::Shots { m } => {
                if *m == 0 {
                    errs.push("mode.m must be positive".into());
                }
            }
            EvalMode::Noisy { m, folds, mitigation, calibration_shots, repeats, .. } => {
                if *m == 0 {
                    errs.push("mode.m must be positive".into());
                }
                if *repeats == 0 {
                    errs.push("mode.repeats must be at least 1".into());
                }
                if *calibration_shots == Some(0) {
                    errs.push("mode.calibration_shots must be positive".into());
                }
                if *mitigation {
                    if folds.is_empty() {
                        errs.push("mode.folds must not be empty".into());
                    } else if folds.len() > 1 {
                        let series = ZneSeries { factors: folds.clone(), values: vec![0.0; folds.len()], order: ZneOrder::for_depth(p) };
                        if let Err(e) = series.validate() {
                            errs.push(format!("mode.folds: {e}"));
                        }
                    } else if folds[0] != 1 {
                        errs.push("mode.folds must start at 1".into());
                    }
                }
            }
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "optimizer", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Darbo(DarboConfig),
    Spsa(SpsaConfig),
    NelderMead(NelderMeadConfig),
    AdamFd(AdamConfig),
}

impl OptimizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Darbo(_) => "darbo",
            OptimizerSpec::Spsa(_) => "spsa",
            OptimizerSpec::NelderMead(_) => "nelder_mead",
            OptimizerSpec::AdamFd(_) => "adam_fd",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            OptimizerSpec::Darbo(_) => 0,
            OptimizerSpec::Spsa(_) => 1,
            OptimizerSpec::NelderMead(_) => 2,
            OptimizerSpec::AdamFd(_) => 3,
        }
    }
}

/// One experiment. Seeds and budgets inside optimizer blocks are replaced by
/// values derived from `seed` and `budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub p: usize,
    pub mode: EvalMode,
    pub optimizers: Vec<OptimizerSpec>,
    /// Circuit-evaluation budget per optimizer run.
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default = "default_one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Shots for the final success-ratio report; defaults to the mode's `m`,
    /// or 10000 in exact mode.
    #[serde(default)]
    pub success_shots: Option<u64>,
}

/// A validated graph with its brute-force optimum.
#[derive(Debug, Clone)]
pub struct GraphInstance {
    pub id: usize,
    pub problem: QuboProblem,
    pub oracle: BruteForceResult,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn success_shots(&self) -> u64 {
        self.success_shots.or(self.mode.shots()).unwrap_or(10_000)
    }

    /// Circuit evaluations charged per objective call.
    pub fn units_per_call(&self) -> u64 {
        match &self.mode {
            EvalMode::Noisy { mitigation: true, count_folds: true, folds, repeats, .. } => {
                (folds.len() as u64 * u64::from(*repeats)).max(1)
            }
            _ => 1,
        }
    }

    /// Objective calls each optimizer may make.
    pub fn calls(&self) -> u64 {
        self.budget / self.units_per_call()
    }

    /// Check everything before any optimization runs. All problems are
    /// reported together in one [`Error::Config`].
    pub fn validate(&self) -> Result<Vec<GraphInstance>> {
        let mut errs = Vec::new();
        if self.p == 0 {
            errs.push("p must be at least 1".to_string());
        }
        if self.trials == 0 {
            errs.push("trials must be at least 1".to_string());
        }
        if self.budget == 0 {
            errs.push("budget must be positive".to_string());
        }
        if self.success_shots == Some(0) {
            errs.push("success_shots must be positive".to_string());
        }
        errs.extend(self.mode.check(self.p.max(1)));

        if self.optimizers.is_empty() {
            errs.push("at least one optimizer is required".to_string());
        }
        let calls = self.calls();
        let mut seen = Vec::new();
        for spec in &self.optimizers {
            let name = spec.name();
            if seen.contains(&name) {
                errs.push(format!("optimizer {name} listed twice"));
            }
            seen.push(name);
            match spec {
                OptimizerSpec::Darbo(c) => errs.extend(c.validate().into_iter().map(|e| format!("darbo: {e}"))),
                OptimizerSpec::Spsa(c) => {
                    if calls < 2 {
                        errs.push(format!("spsa needs at least 2 evaluations, budget allows {calls}"));
                    }
                    if !(c.lower < c.upper) {
                        errs.push("spsa: lower must be below upper".into());
                    }
                }
                OptimizerSpec::NelderMead(_) => {}
                OptimizerSpec::AdamFd(c) => {
                    let need = 4 * self.p as u64 + 1;
                    if calls < need {
                        errs.push(format!("adam_fd needs {need} evaluations per iteration, budget allows {calls}"));
                    }
                    if c.fd_step.is_some_and(|h| !(h > 0.0)) {
                        errs.push("adam_fd: fd_step must be positive".into());
                    }
                }
            }
        }

        let mut graphs = Vec::new();
        match self.problem.load() {
            Err(e) => errs.push(format!("problem: {e}")),
            Ok(problems) => {
                let (max_n, what) = self.mode.max_qubits();
                for (id, problem) in problems.into_iter().enumerate() {
                    let n = problem.n();
                    if n > max_n.min(BRUTE_FORCE_MAX_N) {
                        errs.push(format!("graph {id}: {what} and the oracle support at most {} qubits, got {n}", max_n.min(BRUTE_FORCE_MAX_N)));
                        continue;
                    }
                    if let EvalMode::Noisy { noise, .. } = &self.mode {
                        if let Err(e) = noise.validate(n) {
                            errs.push(format!("graph {id}: {e}"));
                        }
                    }
                    match problem.brute_force_optimum() {
                        Ok(oracle) if oracle.max_cut > 0.0 => graphs.push(GraphInstance { id, problem, oracle }),
                        Ok(_) => errs.push(format!("graph {id}: max cut is zero, approximation ratio undefined")),
                        Err(e) => errs.push(format!("graph {id}: {e}")),
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(graphs)
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Learn a local confusion spec from all-zeros and all-ones preparations.
pub fn calibrate_readout(n: usize, noise: &NoiseModel, shots: u64, seed: u64) -> Result<ConfusionSpec> {
    let ones = (1usize << n) - 1;
    let runs = vec![
        (0, noise_sim::sample_prepared(n, 0, noise, shots, seeding::derive(&[seed, 0]))?),
        (ones, noise_sim::sample_prepared(n, ones, noise, shots, seeding::derive(&[seed, 1]))?),
    ];
    mitigation::learn_confusion(&runs, ConfusionMode::Local)
}

/// Objective evaluation under one mode.
#[derive(Debug, Clone)]
pub struct Evaluator {
    problem: QuboProblem,
    mode: EvalMode,
    confusion: Option<ConfusionSpec>,
}

impl Evaluator {
    /// Mitigated noisy modes calibrate the readout here, seeded by
    /// `calibration_seed`.
    pub fn new(problem: QuboProblem, mode: EvalMode, calibration_seed: u64) -> Result<Self> {
        let (max_n, what) = mode.max_qubits();
        if problem.n() > max_n {
            return Err(Error::TooLarge { what, n: problem.n(), max: max_n });
        }
        let confusion = match &mode {
            EvalMode::Noisy { noise, m, mitigation: true, calibration_shots, .. } => {
                Some(calibrate_readout(problem.n(), noise, calibration_shots.unwrap_or(*m), calibration_seed)?)
            }
            _ => None,
        };
        Ok(Self { problem, mode, confusion })
    }

    /// Use a known confusion spec instead of calibrating.
    pub fn with_confusion(problem: QuboProblem, mode: EvalMode, confusion: ConfusionSpec) -> Result<Self> {
        let mut e = Self::new(problem, mode, 0)?;
        e.confusion = Some(confusion);
        Ok(e)
    }

    pub fn problem(&self) -> &QuboProblem {
        &self.problem
    }

    pub fn mode(&self) -> &EvalMode {
        &self.mode
    }

    pub fn confusion(&self) -> Option<&ConfusionSpec> {
        self.confusion.as_ref()
    }

    /// Objective value for `params`; `seed` drives all sampling.
    pub fn evaluate(&self, params: &QaoaParams, seed: u64) -> Result<f64> {
        let problem = &self.problem;
        match &self.mode {
            EvalMode::Exact => simulator::exact_expectation(problem, params),
            EvalMode::Shots { m } => {
                let state = simulator::build_state(problem, params)?;
                simulator::shot_estimate(problem, &simulator::sample_bitstrings(&state, *m, seed)?)
            }
            EvalMode::Noisy { noise, m, folds, repeats, .. } => match &self.confusion {
                None => {
                    let sample = noise_sim::sample_noisy(problem, params, noise, FoldFactor::ONE, *m, seed)?;
                    simulator::shot_estimate(problem, &sample)
                }
                Some(spec) => {
                    let mut values = Vec::with_capacity(folds.len());
                    for &f in folds {
                        let mut total = 0.0;
                        for r in 0..*repeats {
                            let s = match r {
                                0 => seeding::derive(&[seed, f as u64]),
                                _ => seeding::derive(&[seed, f as u64, r as u64]),
                            };
                            let sample = noise_sim::sample_noisy(problem, params, noise, FoldFactor::new(f)?, *m, s)?;
                            let quasi = mitigation::mitigate_counts(&sample, spec)?;
                            total += simulator::distribution_expectation(problem, &quasi)?;
                        }
                        values.push(total / f64::from(*repeats));
                    }
                    if values.len() == 1 {
                        return Ok(values[0]);
                    }
                    mitigation::zne_extrapolate(&ZneSeries {
                        factors: folds.clone(),
                        values,
                        order: ZneOrder::for_depth(params.depth()),
                    })
                }
            },
        }
    }

    /// Distribution over outcomes reported at the end of a run: empirical
    /// frequencies of `m` shots, readout-mitigated and projected onto the
    /// simplex when mitigation is on.
    pub fn final_distribution(&self, params: &QaoaParams, m: u64, seed: u64) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::InvalidArgument("success report needs at least one shot".into()));
        }
        let problem = &self.problem;
        match &self.mode {
            EvalMode::Exact | EvalMode::Shots { .. } => {
                let state = simulator::build_state(problem, params)?;
                Ok(simulator::sample_bitstrings(&state, m, seed)?.frequencies())
            }
            EvalMode::Noisy { noise, .. } => {
                let sample = noise_sim::sample_noisy(problem, params, noise, FoldFactor::ONE, m, seed)?;
                match &self.confusion {
                    None => Ok(sample.frequencies()),
                    Some(spec) => Ok(mitigation::project_to_simplex(&mitigation::mitigate_counts(&sample, spec)?)),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub success_ratio: f64,
    /// `|optima| / 2^n`, the chance a uniformly random bitstring is optimal.
    pub random_baseline: f64,
    pub shots: u64,
}

/// Fraction of `m` shots (through the evaluator's pipeline) that land on an
/// optimal bitstring.
pub fn success_report(
    evaluator: &Evaluator,
    oracle: &BruteForceResult,
    params: &QaoaParams,
    m: u64,
    seed: u64,
) -> Result<SuccessReport> {
    let dist = evaluator.final_distribution(params, m, seed)?;
    Ok(SuccessReport {
        success_ratio: simulator::success_ratio_distribution(&dist, oracle),
        random_baseline: oracle.random_guess_ratio(),
        shots: m,
    })
}

/// One row of a trajectory CSV. `iteration` indexes objective calls;
/// `r` and `gap` are exact (noise-free) values at the optimizer's incumbent
/// after that call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub optimizer: String,
    pub series: String,
    pub graph_id: usize,
    pub trial: usize,
    pub iteration: u64,
    pub cumulative_evals: u64,
    pub query_value: f64,
    pub best_value: f64,
    pub r: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub optimizer: String,
    pub graph_id: usize,
    pub trial: usize,
    pub evaluations: u64,
    pub final_r: f64,
    pub final_gap: f64,
    pub best_value: f64,
    pub final_params: Vec<f64>,
    pub success: SuccessReport,
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord>,
}

/// Normalized starting point shared by all optimizers of one trial.
pub fn initial_point(seed: u64, graph_id: usize, trial: usize, dim: usize) -> Vec<f64> {
    let mut rng = seeding::rng_for(&[seed, graph_id as u64, trial as u64, TAG_X0]);
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// Run one optimizer on one graph for one trial.
pub fn run_trial(config: &RunConfig, graph: &GraphInstance, trial: usize, spec: &OptimizerSpec) -> Result<TrialResult> {
    let (g, t) = (graph.id as u64, trial as u64);
    let base = config.seed;
    let evaluator =
        Evaluator::new(graph.problem.clone(), config.mode.clone(), seeding::derive(&[base, g, t, TAG_CALIBRATION]))?;
    let x0 = initial_point(base, graph.id, trial, 2 * config.p);
    let calls = config.calls();
    let units = config.units_per_call();
    let tag = spec.tag();
    let opt_seed = seeding::derive(&[base, g, t, TAG_OPTIMIZER, tag]);

    let mut k = 0u64;
    let mut objective = |params: &QaoaParams| {
        let seed = seeding::derive(&[base, g, t, tag, k]);
        k += 1;
        evaluator.evaluate(params, seed)
    };
    let flat = |objective: &mut dyn FnMut(&QaoaParams) -> Result<f64>, x: &[f64]| objective(&QaoaParams::from_flat(x)?);

    let trace: OptimizerTrace = match spec {
        OptimizerSpec::Darbo(c) => {
            let cfg = DarboConfig { seed: opt_seed, max_iter: calls.saturating_sub(1) as usize, ..c.clone() };
            darbo::minimize(&mut objective, &x0, cfg, calls)?
        }
        OptimizerSpec::Spsa(c) => {
            let cfg = SpsaConfig { seed: opt_seed, budget: calls, ..c.clone() };
            baselines::spsa_minimize(|x| flat(&mut objective, x), &x0, &cfg)?
        }
        OptimizerSpec::NelderMead(c) => {
            let cfg = NelderMeadConfig { budget: calls, ..c.clone() };
            baselines::nelder_mead_minimize(|x| flat(&mut objective, x), &x0, &cfg)?
        }
        OptimizerSpec::AdamFd(c) => {
            let fd_step = c.fd_step.or(config.mode.is_stochastic().then_some(STOCHASTIC_FD_STEP));
            let cfg = AdamConfig { budget: calls, fd_step, ..c.clone() };
            baselines::adam_fd_minimize(|x| flat(&mut objective, x), &x0, &cfg)?
        }
    };

    let ratio = |x: &[f64]| -> Result<f64> {
        let e = simulator::exact_expectation(&graph.problem, &QaoaParams::from_flat(x)?)?;
        graph.problem.approximation_ratio(e, &graph.oracle)
    };
    let mut records = Vec::with_capacity(trace.len());
    let mut cache: Option<(&[f64], f64)> = None;
    for i in 0..trace.len() {
        let inc = trace.incumbents[i].as_slice();
        let r = match cache {
            Some((x, r)) if x == inc => r,
            _ => ratio(inc)?,
        };
        cache = Some((inc, r));
        records.push(TrajectoryRecord {
            optimizer: spec.name().to_string(),
            series: config.mode.series().to_string(),
            graph_id: graph.id,
            trial,
            iteration: i as u64,
            cumulative_evals: trace.evals[i] * units,
            query_value: trace.raw[i],
            best_value: trace.objective[i],
            r,
            gap: 1.0 - r,
        });
    }
    let final_r = ratio(&trace.params_final)?;
    let final_params = QaoaParams::from_flat(&trace.params_final)?;
    let success = success_report(
        &evaluator,
        &graph.oracle,
        &final_params,
        config.success_shots(),
        seeding::derive(&[base, g, t, TAG_SUCCESS, tag]),
    )?;
    Ok(TrialResult {
        optimizer: spec.name().to_string(),
        graph_id: graph.id,
        trial,
        evaluations: trace.len() as u64 * units,
        final_r,
        final_gap: 1.0 - final_r,
        best_value: trace.best().unwrap_or(f64::NAN),
        final_params: trace.params_final.clone(),
        success,
        records,
    })
}

/// Final values of one trial as needed for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFinal {
    pub optimizer: String,
    pub graph_id: usize,
    pub trial: usize,
    pub r: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBest {
    pub graph_id: usize,
    pub best_trial: usize,
    pub gap: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub optimizer: String,
    /// Mean over graphs of the best-of-trials gap.
    pub mean_gap: f64,
    /// Sample standard deviation over graphs (0 for one graph).
    pub std_gap: f64,
    pub graphs: Vec<GraphBest>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Best trial per (optimizer, graph) by final gap (lowest trial on ties),
/// then mean and std over graphs. Optimizers keep first-appearance order.
pub fn aggregate(finals: &[TrialFinal]) -> Vec<OptimizerSummary> {
    let mut order: Vec<&str> = Vec::new();
    let mut best: BTreeMap<(&str, usize), &TrialFinal> = BTreeMap::new();
    for f in finals {
        if !order.contains(&f.optimizer.as_str()) {
            order.push(&f.optimizer);
        }
        best.entry((&f.optimizer, f.graph_id))
            .and_modify(|b| {
                if f.gap < b.gap || (f.gap == b.gap && f.trial < b.trial) {
                    *b = f;
                }
            })
            .or_insert(f);
    }
    order
        .into_iter()
        .map(|name| {
            let graphs: Vec<GraphBest> = best
                .iter()
                .filter(|((o, _), _)| *o == name)
                .map(|((_, g), f)| GraphBest { graph_id: *g, best_trial: f.trial, gap: f.gap, r: f.r })
                .collect();
            let (mean_gap, std_gap) = mean_std(&graphs.iter().map(|g| g.gap).collect::<Vec<_>>());
            OptimizerSummary { optimizer: name.to_string(), mean_gap, std_gap, graphs }
        })
        .collect()
}

/// Row of `aggregate.csv`: `scope` is `graph` for best-of-trials rows and
/// `all` for the cross-graph mean (with `gap_std`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub optimizer: String,
    pub scope: String,
    pub graph_id: Option<usize>,
    pub best_trial: Option<usize>,
    pub gap: f64,
    pub r: Option<f64>,
    pub gap_std: Option<f64>,
}

pub fn aggregate_rows(summaries: &[OptimizerSummary]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for s in summaries {
        for g in &s.graphs {
            rows.push(AggregateRow {
                optimizer: s.optimizer.clone(),
                scope: "graph".into(),
                graph_id: Some(g.graph_id),
                best_trial: Some(g.best_trial),
                gap: g.gap,
                r: Some(g.r),
                gap_std: None,
            });
        }
        rows.push(AggregateRow {
            optimizer: s.optimizer.clone(),
            scope: "all".into(),
            graph_id: None,
            best_trial: None,
            gap: s.mean_gap,
            r: None,
            gap_std: Some(s.std_gap),
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInfo {
    pub graph_id: usize,
    pub n: usize,
    pub edges: usize,
    pub max_cut: f64,
    pub min_value: f64,
    pub optimal_bitstrings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub config: RunConfig,
    pub graphs: Vec<GraphInfo>,
    pub trials: Vec<TrialResult>,
    pub optimizers: Vec<OptimizerSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    /// Overrides `config.output`.
    pub output: Option<PathBuf>,
    /// Worker threads; 0 picks the number of CPUs.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { output: None, workers: 1 }
    }
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))
}

pub fn trajectory_file_name(graph_id: usize, trial: usize) -> String {
    format!("traj_g{graph_id:03}_t{trial:03}.csv")
}

/// Run every (graph, trial, optimizer) combination and write the outputs.
///
/// Without an output directory (neither in `options` nor the config) nothing
/// is written and only the summary is returned.
pub fn run_experiment(config: &RunConfig, options: &RunOptions) -> Result<RunSummary> {
    let graphs = config.validate()?;
    let out = options.output.clone().or_else(|| config.output.clone());

    let mut tasks = Vec::new();
    for graph in &graphs {
        for trial in 0..config.trials {
            for spec in &config.optimizers {
                tasks.push((graph, trial, spec));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let results: Vec<TrialResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(graph, trial, spec)| {
                log::info!("graph {} trial {} {}", graph.id, trial, spec.name());
                run_trial(config, graph, *trial, spec)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let finals: Vec<TrialFinal> = results
        .iter()
        .map(|r| TrialFinal { optimizer: r.optimizer.clone(), graph_id: r.graph_id, trial: r.trial, r: r.final_r, gap: r.final_gap })
        .collect();
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        graphs: graphs
            .iter()
            .map(|g| GraphInfo {
                graph_id: g.id,
                n: g.problem.n(),
                edges: g.problem.graph().edges().len(),
                max_cut: g.oracle.max_cut,
                min_value: g.oracle.min_value,
                optimal_bitstrings: g.oracle.optimal_bitstrings(),
            })
            .collect(),
        optimizers: aggregate(&finals),
        trials: results,
    };

    if let Some(dir) = out {
        let traj_dir = dir.join("trajectories");
        fs::create_dir_all(&traj_dir).map_err(|e| Error::io(&traj_dir, e))?;
        let per_task = config.optimizers.len();
        for chunk in summary.trials.chunks(per_task) {
            let rows: Vec<&TrajectoryRecord> = chunk.iter().flat_map(|r| &r.records).collect();
            let path = traj_dir.join(trajectory_file_name(chunk[0].graph_id, chunk[0].trial));
            write_atomic(&path, &csv_bytes(&rows)?)?;
        }
        write_atomic(&dir.join("aggregate.csv"), &csv_bytes(&aggregate_rows(&summary.optimizers))?)?;
        let mut json = serde_json::to_string_pretty(&summary)?;
        json.push('\n');
        write_atomic(&dir.join("summary.json"), json.as_bytes())?;
    }
    Ok(summary)
}

/// All trajectory rows under `<dir>/trajectories`, in file-name order.
pub fn load_trajectories(dir: &Path) -> Result<Vec<TrajectoryRecord>> {
    let traj_dir = dir.join("trajectories");
    let mut files: Vec<PathBuf> = fs::read_dir(&traj_dir)
        .map_err(|e| Error::io(&traj_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no trajectory files in {}", traj_dir.display())));
    }
    let mut rows = Vec::new();
    for f in files {
        let mut rdr = csv::Reader::from_path(&f)?;
        for r in rdr.deserialize() {
            rows.push(r?);
        }
    }
    Ok(rows)
}

/// Mean/std over graphs of the best-of-trials trajectories at each
/// evaluation count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub optimizer: String,
    pub cumulative_evals: u64,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub mean_best_value: f64,
    pub graphs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub optimizers: Vec<OptimizerSummary>,
    pub curve: Vec<CurvePoint>,
}

/// Recompute aggregates from trajectory rows. The final values of a trial
/// are those of its last row.
pub fn build_report(records: &[TrajectoryRecord]) -> Report {
    let mut runs: BTreeMap<(String, usize, usize), Vec<&TrajectoryRecord>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in records {
        if !order.contains(&r.optimizer) {
            order.push(r.optimizer.clone());
        }
        runs.entry((r.optimizer.clone(), r.graph_id, r.trial)).or_default().push(r);
    }
    for rows in runs.values_mut() {
        rows.sort_by_key(|r| r.iteration);
    }
    let mut finals: Vec<TrialFinal> = runs
        .iter()
        .map(|((o, g, t), rows)| {
            let last = rows[rows.len() - 1];
            TrialFinal { optimizer: o.clone(), graph_id: *g, trial: *t, r: last.r, gap: last.gap }
        })
        .collect();
    finals.sort_by_key(|f| order.iter().position(|o| *o == f.optimizer));
    let optimizers = aggregate(&finals);

    let mut curve = Vec::new();
    for s in &optimizers {
        let best: Vec<&Vec<&TrajectoryRecord>> =
            s.graphs.iter().map(|g| &runs[&(s.optimizer.clone(), g.graph_id, g.best_trial)]).collect();
        let len = best.iter().map(|r| r.len()).min().unwrap_or(0);
        for i in 0..len {
            let (mean_gap, std_gap) = mean_std(&best.iter().map(|r| r[i].gap).collect::<Vec<_>>());
            let (mean_best_value, _) = mean_std(&best.iter().map(|r| r[i].best_value).collect::<Vec<_>>());
            curve.push(CurvePoint {
                optimizer: s.optimizer.clone(),
                cumulative_evals: best[0][i].cumulative_evals,
                mean_gap,
                std_gap,
                mean_best_value,
                graphs: best.len(),
            });
        }
    }
    Report { optimizers, curve }
}

/// Rebuild the report of a run directory and write `curve.csv` next to it.
pub fn write_report(dir: &Path) -> Result<Report> {
    let report = build_report(&load_trajectories(dir)?);
    write_atomic(&dir.join("curve.csv"), &csv_bytes(&report.curve)?)?;
    Ok(report)
}

/// Plain-text table of mean ± std gap per optimizer.
pub fn format_table(summaries: &[OptimizerSummary]) -> String {
    let mut s = format!("{:<14} {:>7} {:>12} {:>12}\n", "optimizer", "graphs", "mean gap", "std gap");
    for o in summaries {
        s.push_str(&format!("{:<14} {:>7} {:>12.6} {:>12.6}\n", o.optimizer, o.graphs.len(), o.mean_gap, o.std_gap));
    }
    s
}
