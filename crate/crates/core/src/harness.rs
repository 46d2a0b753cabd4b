//! Experiment harness: configuration, the maze and cart-pole drift suites,
//! scenario scoring, and report rendering.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cartpole::{
    compare_episode_sets, generate_cartpole_episodes, train_q_policy, CartPoleError,
    CartPoleParams, Discretizer, LearningConfig, TrainedPolicy,
};
use crate::episodes::{
    generate_episodes, generate_measures, perturb_transitions, write_episodes_jsonl,
    write_samples_csv, EpisodeError, EpisodeLimits, EpisodeSet, MeasureSampleSet, NoiseSpec,
};
use crate::gridmdp::{
    build_transition_model, greedy_policy, optimal_path, softmax_policy, value_iteration,
    DeterministicPolicy, GridError, GridSpec, Policy, SlipModel, TransitionModel, ValueFunction,
    ValueIterationConfig,
};
use crate::rng::{derive_seed, tag};
use crate::seqmeasure::{MeasureError, MeasureKind, Token};
use crate::stats::{
    confusion_metrics, summarize, welch_t_test, ConfusionCounts, ConfusionMetrics, StatsError,
    DEFAULT_ALPHA,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Episodes(#[from] EpisodeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    CartPole(#[from] CartPoleError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("report has no rows")]
    EmptyReport,
    #[error("row {0} has no ground-truth label")]
    MissingLabel(usize),
}

impl HarnessError {
    /// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Grid(e) => match e {
                GridError::NotConverged { .. } | GridError::Cycle(_) | GridError::MissingAction(_) => 3,
                _ => 2,
            },
            HarnessError::Episodes(e) => episode_exit_code(e),
            HarnessError::Stats(e) => match e {
                StatsError::NoConvergence { .. } | StatsError::NonFinite => 3,
                _ => 2,
            },
            HarnessError::CartPole(e) => match e {
                CartPoleError::BadParams(_)
                | CartPoleError::BadDiscretizer(_)
                | CartPoleError::BadLearning(_) => 2,
                CartPoleError::Episodes(e) => episode_exit_code(e),
                CartPoleError::Stats(_) => 3,
                _ => 1,
            },
            HarnessError::Measure(_) => 2,
            HarnessError::Io { .. } => 1,
            HarnessError::EmptyReport | HarnessError::MissingLabel(_) => 3,
        }
    }
}

fn episode_exit_code(e: &EpisodeError) -> i32 {
    match e {
        EpisodeError::RetryBudget { .. } | EpisodeError::DeadRow { .. } | EpisodeError::Measure(_) => 3,
        EpisodeError::Io(_) | EpisodeError::Json(_) | EpisodeError::Csv(_) => 1,
        _ => 2,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    Deterministic,
    Stochastic,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Deterministic => "deterministic",
            PolicyKind::Stochastic => "stochastic",
        }
    }

    fn code(self) -> u64 {
        match self {
            PolicyKind::Deterministic => 0,
            PolicyKind::Stochastic => 1,
        }
    }
}

impl FromStr for PolicyKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deterministic" | "greedy" => Ok(PolicyKind::Deterministic),
            "stochastic" | "softmax" => Ok(PolicyKind::Stochastic),
            other => Err(HarnessError::Config(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    Gravity,
    PoleLength,
}

impl SweepParameter {
    pub fn label(self) -> &'static str {
        match self {
            SweepParameter::Gravity => "gravity",
            SweepParameter::PoleLength => "pole_length",
        }
    }

    pub fn apply(self, base: CartPoleParams, value: f64) -> CartPoleParams {
        match self {
            SweepParameter::Gravity => base.with_gravity(value),
            SweepParameter::PoleLength => base.with_half_length(value),
        }
    }

    /// Default sweep grid: start, end, increment.
    pub fn default_grid(self) -> (f64, f64, f64) {
        match self {
            SweepParameter::Gravity => (3.0, 4.4, 0.2),
            SweepParameter::PoleLength => (0.5, 1.9, 0.2),
        }
    }

    fn code(self) -> u64 {
        match self {
            SweepParameter::Gravity => 10,
            SweepParameter::PoleLength => 11,
        }
    }
}

impl FromStr for SweepParameter {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gravity" => Ok(SweepParameter::Gravity),
            "pole_length" | "length" | "half_length" => Ok(SweepParameter::PoleLength),
            other => Err(HarnessError::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Both,
}

impl ReportFormat {
    fn csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::Both)
    }

    fn markdown(self) -> bool {
        matches!(self, ReportFormat::Markdown | ReportFormat::Both)
    }
}

impl FromStr for ReportFormat {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "both" | "all" => Ok(ReportFormat::Both),
            other => Err(HarnessError::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// Every knob of every experiment. Keys of the flat `key = value` config
/// file match the long CLI flag names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub episodes: usize,
    pub noise_max: f64,
    pub noise_step: f64,
    pub seed: u64,
    pub alpha: f64,
    pub measures: Vec<MeasureKind>,
    pub window: Option<usize>,
    pub tau: f64,
    pub out: PathBuf,
    pub format: ReportFormat,
    pub policy: PolicyKind,
    /// Independent no-drift replicates per policy kind in the scored suite.
    pub nodrift_runs: usize,
    /// Run the whole labelled scenario suite and score it.
    pub suite: bool,
    /// Write `episodes/` and `samples/` next to the report.
    pub artifacts: bool,
    pub sweep: SweepParameter,
    pub sweep_start: f64,
    pub sweep_end: f64,
    pub sweep_step: f64,
    pub cartpole_episodes: usize,
    pub training_budget: usize,
    pub rollout_epsilon: f64,
    pub step_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let (sweep_start, sweep_end, sweep_step) = SweepParameter::Gravity.default_grid();
        let learning = LearningConfig::default();
        ExperimentConfig {
            episodes: 1000,
            noise_max: 0.4,
            noise_step: 0.1,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            measures: MeasureKind::ALL.to_vec(),
            window: None,
            tau: 1.0,
            out: PathBuf::from("out"),
            format: ReportFormat::Both,
            policy: PolicyKind::Deterministic,
            nodrift_runs: 5,
            suite: false,
            artifacts: true,
            sweep: SweepParameter::Gravity,
            sweep_start,
            sweep_end,
            sweep_step,
            cartpole_episodes: 100,
            training_budget: learning.episode_budget,
            rollout_epsilon: learning.rollout_epsilon,
            step_cap: crate::episodes::DEFAULT_STEP_CAP,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .trim()
        .parse()
        .map_err(|_| HarnessError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(HarnessError::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

pub fn parse_measures(list: &str) -> Result<Vec<MeasureKind>, HarnessError> {
    let list = list.trim();
    if list.eq_ignore_ascii_case("all") {
        return Ok(MeasureKind::ALL.to_vec());
    }
    let mut out: Vec<MeasureKind> = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind: MeasureKind = name
            .parse()
            .map_err(|e: MeasureError| HarnessError::Config(e.to_string()))?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Config("no measures selected".into()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "episodes" => self.episodes = parse(&key, v)?,
            "noise-max" => self.noise_max = parse(&key, v)?,
            "noise-step" => self.noise_step = parse(&key, v)?,
            "seed" => self.seed = parse(&key, v)?,
            "alpha" => self.alpha = parse(&key, v)?,
            "measures" => self.measures = parse_measures(v)?,
            "window" => {
                self.window = match v.to_ascii_lowercase().as_str() {
                    "" | "none" | "unbounded" | "0" => None,
                    _ => Some(parse(&key, v)?),
                }
            }
            "tau" => self.tau = parse(&key, v)?,
            "out" => self.out = PathBuf::from(v),
            "format" => self.format = v.parse()?,
            "policy" => self.policy = v.parse()?,
            "nodrift-runs" => self.nodrift_runs = parse(&key, v)?,
            "suite" => self.suite = parse_bool(&key, v)?,
            "artifacts" => self.artifacts = parse_bool(&key, v)?,
            "sweep" => {
                let sweep: SweepParameter = v.parse()?;
                if sweep != self.sweep {
                    let (s, e, i) = sweep.default_grid();
                    self.sweep_start = s;
                    self.sweep_end = e;
                    self.sweep_step = i;
                }
                self.sweep = sweep;
            }
            "sweep-start" => self.sweep_start = parse(&key, v)?,
            "sweep-end" => self.sweep_end = parse(&key, v)?,
            "sweep-step" => self.sweep_step = parse(&key, v)?,
            "cartpole-episodes" => self.cartpole_episodes = parse(&key, v)?,
            "training-budget" => self.training_budget = parse(&key, v)?,
            "rollout-epsilon" => self.rollout_epsilon = parse(&key, v)?,
            "step-cap" => self.step_cap = parse(&key, v)?,
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat config: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.episodes < 2 {
            return bad(format!("episodes must be at least 2, got {}", self.episodes));
        }
        if !(self.noise_step > 0.0 && self.noise_step.is_finite()) {
            return bad(format!("noise-step must be positive, got {}", self.noise_step));
        }
        if !(self.noise_max >= 0.0 && self.noise_max.is_finite()) {
            return bad(format!("noise-max must be non-negative, got {}", self.noise_max));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.measures.is_empty() {
            return bad("no measures selected".into());
        }
        if self.window == Some(0) {
            return bad("window must be positive".into());
        }
        if self.step_cap == 0 {
            return bad("step-cap must be positive".into());
        }
        if self.suite && self.nodrift_runs == 0 {
            return bad("nodrift-runs must be positive for a suite".into());
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> Result<(), HarnessError> {
        if !(self.sweep_step > 0.0 && self.sweep_step.is_finite()) {
            return Err(HarnessError::Config(format!("sweep-step must be positive, got {}", self.sweep_step)));
        }
        if !(self.sweep_start.is_finite() && self.sweep_end.is_finite()) || self.sweep_start > self.sweep_end {
            return Err(HarnessError::Config(format!(
                "sweep range [{}, {}] is empty",
                self.sweep_start, self.sweep_end
            )));
        }
        if self.cartpole_episodes < 2 {
            return Err(HarnessError::Config("cartpole-episodes must be at least 2".into()));
        }
        Ok(())
    }

    /// `0, step, 2·step, …` up to and including `noise_max` (within 1e-9).
    pub fn noise_levels(&self) -> Vec<f64> {
        let count = (self.noise_max / self.noise_step + 1e-9).floor() as usize;
        (0..=count).map(|k| round9(k as f64 * self.noise_step)).collect()
    }

    pub fn sweep_points(&self) -> Vec<f64> {
        let count = ((self.sweep_end - self.sweep_start) / self.sweep_step + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| round9(self.sweep_start + k as f64 * self.sweep_step))
            .collect()
    }

    fn learning(&self) -> LearningConfig {
        LearningConfig {
            episode_budget: self.training_budget,
            rollout_epsilon: self.rollout_epsilon,
            ..LearningConfig::default()
        }
    }

    fn limits(&self) -> EpisodeLimits {
        EpisodeLimits {
            cap: self.step_cap,
            ..EpisodeLimits::default()
        }
    }
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub measure: MeasureKind,
    pub reference: String,
    pub condition: String,
    pub n_reference: usize,
    pub mean_reference: f64,
    pub sd_reference: f64,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub drift: bool,
    /// Ground truth for scoring; `None` for rows outside the labelled suite.
    pub truth: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub title: String,
    pub rows: Vec<ReportRow>,
    /// Free-form run facts such as retry and skip counts.
    pub notes: Vec<String>,
}

impl DriftReport {
    pub fn new(title: impl Into<String>) -> Self {
        DriftReport {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn extend(&mut self, other: DriftReport) {
        self.rows.extend(other.rows);
        self.notes.extend(other.notes);
    }
}

fn compare_rows(
    scenario: &str,
    reference: &MeasureSampleSet,
    condition: &MeasureSampleSet,
    alpha: f64,
    truth: Option<bool>,
) -> Result<ReportRow, HarnessError> {
    let r = summarize(&reference.values)?;
    let c = summarize(&condition.values)?;
    let w = welch_t_test(&reference.values, &condition.values, alpha)?;
    Ok(ReportRow {
        scenario: scenario.to_owned(),
        measure: condition.kind,
        reference: reference.condition.clone(),
        condition: condition.condition.clone(),
        n_reference: r.n,
        mean_reference: r.mean,
        sd_reference: r.sd,
        n: c.n,
        mean: c.mean,
        sd: c.sd,
        t: w.t,
        df: w.df,
        p: w.p,
        drift: w.drift,
        truth,
    })
}

/// Solved maze with its fixed policy and optimal reference path.
#[derive(Debug, Clone)]
pub struct MazeSetup {
    pub grid: GridSpec,
    pub model: TransitionModel,
    pub value: ValueFunction,
    pub greedy: DeterministicPolicy,
    pub policy: Policy,
    pub reference: Vec<Token>,
}

pub fn maze_setup(policy: PolicyKind, tau: f64) -> Result<MazeSetup, HarnessError> {
    let grid = GridSpec::maze();
    let vi_cfg = ValueIterationConfig::default();
    let model = build_transition_model(&grid, &SlipModel::default());
    let value = value_iteration(&model, &vi_cfg)?.value;
    let greedy = greedy_policy(&model, &value, vi_cfg.gamma);
    let reference = optimal_path(&greedy, &grid)?;
    let policy = match policy {
        PolicyKind::Deterministic => Policy::Deterministic(greedy.clone()),
        PolicyKind::Stochastic => Policy::Stochastic(softmax_policy(&model, &value, vi_cfg.gamma, tau)?),
    };
    Ok(MazeSetup {
        grid,
        model,
        value,
        greedy,
        policy,
        reference,
    })
}

/// Report plus the episode and sample sets behind it.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub report: DriftReport,
    pub episodes: Vec<(String, EpisodeSet)>,
    pub samples: Vec<(String, Vec<MeasureSampleSet>)>,
}

impl RunOutput {
    fn absorb(&mut self, other: RunOutput) {
        self.report.extend(other.report);
        self.episodes.extend(other.episodes);
        self.samples.extend(other.samples);
    }
}

fn measure_all(
    reference: &[Token],
    set: &EpisodeSet,
    cfg: &ExperimentConfig,
) -> Result<Vec<MeasureSampleSet>, HarnessError> {
    cfg.measures
        .iter()
        .map(|&kind| Ok(generate_measures(reference, set, kind, cfg.window)?))
        .collect()
}

fn noise_label(sigma: f64) -> String {
    format!("noise={sigma}")
}

/// Baseline at noise 0 against a fresh episode set at every noise level.
pub fn run_maze_drift(cfg: &ExperimentConfig, policy: PolicyKind) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let setup = maze_setup(policy, cfg.tau)?;
    let scenario = format!("{}-drift", policy.label());
    let base_seed = derive_seed(cfg.seed, tag::CONDITION, policy.code());
    let limits = cfg.limits();

    let baseline = generate_episodes(
        &setup.model,
        &setup.policy,
        &setup.grid,
        cfg.episodes,
        derive_seed(base_seed, tag::EPISODE, 0),
        limits,
        "baseline",
    )?;
    let base_samples = measure_all(&setup.reference, &baseline, cfg)?;

    let mut out = RunOutput {
        report: DriftReport::new(format!("maze drift, {} policy", policy.label())),
        ..Default::default()
    };
    out.report.notes.push(format!(
        "{scenario} baseline: {} episodes, {} retries, mean length {:.4}",
        baseline.episodes.len(),
        baseline.retries,
        baseline.mean_length()
    ));
    for (k, sigma) in cfg.noise_levels().into_iter().enumerate() {
        let noise = NoiseSpec::new(sigma, derive_seed(base_seed, tag::NOISE_ROW, k as u64))?;
        let drifted = perturb_transitions(&setup.model, &noise)?;
        let set = generate_episodes(
            &drifted,
            &setup.policy,
            &setup.grid,
            cfg.episodes,
            derive_seed(base_seed, tag::EPISODE, k as u64 + 1),
            limits,
            noise_label(sigma),
        )?;
        let samples = measure_all(&setup.reference, &set, cfg)?;
        let truth = (sigma > 0.0).then_some(true);
        for (b, s) in base_samples.iter().zip(&samples) {
            out.report.rows.push(compare_rows(&scenario, b, s, cfg.alpha, truth)?);
        }
        out.report.notes.push(format!(
            "{scenario} {}: {} retries, mean length {:.4}",
            set.condition,
            set.retries,
            set.mean_length()
        ));
        out.episodes.push((format!("{scenario}_{}", set.condition), set));
        out.samples.push((format!("{scenario}_{}", noise_label(sigma)), samples));
    }
    out.episodes.insert(0, (format!("{scenario}_baseline"), baseline));
    out.samples.insert(0, (format!("{scenario}_baseline"), base_samples));
    Ok(out)
}

/// Two independent noise-0 episode sets, tested against each other.
pub fn run_maze_nodrift(cfg: &ExperimentConfig, policy: PolicyKind, replicate: u64) -> Result<RunOutput, HarnessError> {
    let base_seed = derive_seed(cfg.seed, tag::CONDITION, 100 + policy.code());
    run_maze_nodrift_with_seeds(
        cfg,
        policy,
        derive_seed(base_seed, tag::EPISODE, 2 * replicate),
        derive_seed(base_seed, tag::EPISODE, 2 * replicate + 1),
        replicate,
    )
}

pub fn run_maze_nodrift_with_seeds(
    cfg: &ExperimentConfig,
    policy: PolicyKind,
    seed_a: u64,
    seed_b: u64,
    replicate: u64,
) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let setup = maze_setup(policy, cfg.tau)?;
    let scenario = format!("{}-nodrift", policy.label());
    let gen = |seed, label: &str| {
        generate_episodes(&setup.model, &setup.policy, &setup.grid, cfg.episodes, seed, cfg.limits(), label)
    };
    let a = gen(seed_a, &format!("run{replicate}-set1"))?;
    let b = gen(seed_b, &format!("run{replicate}-set2"))?;
    let sa = measure_all(&setup.reference, &a, cfg)?;
    let sb = measure_all(&setup.reference, &b, cfg)?;
    let mut out = RunOutput {
        report: DriftReport::new(format!("maze no drift, {} policy", policy.label())),
        ..Default::default()
    };
    for (x, y) in sa.iter().zip(&sb) {
        out.report.rows.push(compare_rows(&scenario, x, y, cfg.alpha, Some(false))?);
    }
    out.episodes.push((format!("{scenario}_{}", a.condition), a.clone()));
    out.episodes.push((format!("{scenario}_{}", b.condition), b.clone()));
    out.samples.push((format!("{scenario}_{}", a.condition), sa));
    out.samples.push((format!("{scenario}_{}", b.condition), sb));
    Ok(out)
}

/// Deterministic and stochastic drift runs plus `nodrift_runs` no-drift
/// replicates per policy kind; every scored row is labelled.
pub fn run_maze_suite(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let mut out = RunOutput {
        report: DriftReport::new("maze scenario suite"),
        ..Default::default()
    };
    for policy in [PolicyKind::Deterministic, PolicyKind::Stochastic] {
        out.absorb(run_maze_drift(cfg, policy)?);
    }
    for policy in [PolicyKind::Deterministic, PolicyKind::Stochastic] {
        for r in 0..cfg.nodrift_runs as u64 {
            out.absorb(run_maze_nodrift(cfg, policy, r)?);
        }
    }
    Ok(out)
}

/// Consecutive-pair comparisons along the sweep grid, each followed by the
/// drift-free control of the newer point against itself when `controls`.
///
/// One policy is trained per grid point and reused as the previous policy
/// for the next pair.
pub fn run_cartpole_sweep(
    cfg: &ExperimentConfig,
    sweep: SweepParameter,
    start: f64,
    end: f64,
    step: f64,
    controls: bool,
) -> Result<RunOutput, HarnessError> {
    let local = ExperimentConfig {
        sweep,
        sweep_start: start,
        sweep_end: end,
        sweep_step: step,
        ..cfg.clone()
    };
    local.validate()?;
    local.validate_sweep()?;
    let points = local.sweep_points();
    let base_params = CartPoleParams::default();
    let d = Discretizer::default();
    let learning = local.learning();
    let sweep_seed = derive_seed(cfg.seed, tag::CONDITION, sweep.code());
    let label = sweep.label();
    let scenario = format!("cartpole-{label}");
    let mut out = RunOutput {
        report: DriftReport::new(format!("cart-pole {label} sweep")),
        ..Default::default()
    };

    let train = |i: usize, value: f64| -> Result<TrainedPolicy, HarnessError> {
        let params = sweep.apply(base_params, value);
        Ok(train_q_policy(&params, &d, &learning, derive_seed(sweep_seed, tag::TRAINING, i as u64))?)
    };
    let episodes = |policy: &TrainedPolicy, value: f64, stream: u64, name: String| -> Result<EpisodeSet, HarnessError> {
        let params = sweep.apply(base_params, value);
        Ok(generate_cartpole_episodes(
            &policy.policy,
            &params,
            &d,
            local.cartpole_episodes,
            derive_seed(sweep_seed, tag::CARTPOLE_EPISODE, stream),
            name,
        )?)
    };

    let mut prev: Option<TrainedPolicy> = None;
    for (i, &value) in points.iter().enumerate() {
        let current = train(i, value)?;
        out.report.notes.push(format!(
            "{scenario} {label}={value}: converged={} after {} episodes, rolling mean {:.1}",
            current.converged, current.episodes_run, current.rolling_mean
        ));
        let Some(prev_policy) = prev.replace(current.clone()) else {
            continue;
        };
        let prev_value = points[i - 1];
        let ep_prev = episodes(&prev_policy, prev_value, 4 * i as u64, format!("{label}={prev_value}"))?;
        let ep_cur = episodes(&current, value, 4 * i as u64 + 1, format!("{label}={value}"))?;
        push_cartpole_rows(&mut out, &scenario, &ep_prev, &ep_cur, &local, Some(true))?;

        if controls {
            let ctl_a = episodes(&current, value, 4 * i as u64 + 2, format!("{label}={value}/a"))?;
            let ctl_b = episodes(&current, value, 4 * i as u64 + 3, format!("{label}={value}/b"))?;
            push_cartpole_rows(&mut out, &format!("{scenario}-control"), &ctl_a, &ctl_b, &local, Some(false))?;
        }
    }
    Ok(out)
}

fn push_cartpole_rows(
    out: &mut RunOutput,
    scenario: &str,
    prev: &EpisodeSet,
    cur: &EpisodeSet,
    cfg: &ExperimentConfig,
    truth: Option<bool>,
) -> Result<(), HarnessError> {
    for &kind in &cfg.measures {
        let c = compare_episode_sets(prev, cur, kind, cfg.window, cfg.alpha)?;
        out.report.rows.push(ReportRow {
            scenario: scenario.to_owned(),
            measure: kind,
            reference: prev.condition.clone(),
            condition: cur.condition.clone(),
            n_reference: c.within.n,
            mean_reference: c.within.mean,
            sd_reference: c.within.sd,
            n: c.inter.n,
            mean: c.inter.mean,
            sd: c.inter.sd,
            t: c.result.t,
            df: c.result.df,
            p: c.result.p,
            drift: c.result.drift,
            truth,
        });
    }
    let tag_name = |s: &EpisodeSet| format!("{scenario}_{}", s.condition.replace('/', "-"));
    out.report.notes.push(format!(
        "{scenario} {} vs {}: mean lengths {:.1} / {:.1}",
        prev.condition,
        cur.condition,
        prev.mean_length(),
        cur.mean_length()
    ));
    out.episodes.push((tag_name(prev), prev.clone()));
    out.episodes.push((tag_name(cur), cur.clone()));
    Ok(())
}

/// Gravity and pole-length sweeps with one control per newer grid point.
pub fn run_cartpole_suite(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let mut out = RunOutput {
        report: DriftReport::new("cart-pole scenario suite"),
        ..Default::default()
    };
    for sweep in [SweepParameter::Gravity, SweepParameter::PoleLength] {
        let (s, e, i) = sweep.default_grid();
        out.absorb(run_cartpole_sweep(cfg, sweep, s, e, i, true)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureScore {
    pub measure: MeasureKind,
    pub counts: ConfusionCounts,
    pub metrics: ConfusionMetrics,
}

/// Per-measure confusion counts over labelled rows, in first-seen order.
pub fn score_scenarios(rows: &[ReportRow]) -> Result<Vec<MeasureScore>, HarnessError> {
    let mut order: Vec<MeasureKind> = Vec::new();
    let mut counts: Vec<ConfusionCounts> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let truth = row.truth.ok_or(HarnessError::MissingLabel(i))?;
        let slot = match order.iter().position(|k| *k == row.measure) {
            Some(j) => j,
            None => {
                order.push(row.measure);
                counts.push(ConfusionCounts::default());
                order.len() - 1
            }
        };
        counts[slot].record(truth, row.drift);
    }
    order
        .into_iter()
        .zip(counts)
        .map(|(measure, counts)| {
            Ok(MeasureScore {
                measure,
                counts,
                metrics: confusion_metrics(&counts)?,
            })
        })
        .collect()
}

/// Rows that carry a label, for scoring a suite.
pub fn labelled_rows(report: &DriftReport) -> Vec<ReportRow> {
    report.rows.iter().filter(|r| r.truth.is_some()).cloned().collect()
}

fn flag(drift: bool) -> &'static str {
    if drift {
        "*"
    } else {
        "∘"
    }
}

fn truth_label(t: Option<bool>) -> &'static str {
    match t {
        Some(true) => "drift",
        Some(false) => "none",
        None => "",
    }
}

pub const REPORT_CSV_HEADER: [&str; 15] = [
    "scenario",
    "measure",
    "reference",
    "condition",
    "n_reference",
    "mean_reference",
    "sd_reference",
    "n",
    "mean",
    "sd",
    "t",
    "df",
    "p",
    "drift",
    "truth",
];

pub fn report_csv(report: &DriftReport) -> Result<Vec<u8>, HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Episodes(EpisodeError::Csv(e));
    w.write_record(REPORT_CSV_HEADER).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.scenario.clone(),
            r.measure.name().to_owned(),
            r.reference.clone(),
            r.condition.clone(),
            r.n_reference.to_string(),
            r.mean_reference.to_string(),
            r.sd_reference.to_string(),
            r.n.to_string(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.t.to_string(),
            r.df.to_string(),
            r.p.to_string(),
            r.drift.to_string(),
            truth_label(r.truth).to_owned(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::Config(format!("csv buffer: {e}")))
}

pub fn report_markdown(report: &DriftReport, scores: Option<&[MeasureScore]>) -> Result<String, HarnessError> {
    use fmt::Write as _;
    if report.rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut s = String::new();
    let _ = writeln!(s, "# {}\n", report.title);
    let mut scenarios: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
    }
    for scenario in scenarios {
        let _ = writeln!(s, "## {scenario}\n");
        let _ = writeln!(
            s,
            "| Method | Reference | Condition | Mean-1 | Std-1 | Mean-2 | Std-2 | t | p-value | |"
        );
        let _ = writeln!(s, "|---|---|---|---:|---:|---:|---:|---:|---:|:-:|");
        for r in report.rows.iter().filter(|r| r.scenario == scenario) {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.2e} | {} |",
                r.measure.name(),
                r.reference,
                r.condition,
                r.mean_reference,
                r.sd_reference,
                r.mean,
                r.sd,
                r.t,
                r.p,
                flag(r.drift)
            );
        }
        s.push('\n');
    }
    if let Some(scores) = scores {
        let _ = writeln!(s, "## scores\n");
        let _ = writeln!(s, "| Method | TP | FP | TN | FN | Accuracy | Precision | Recall | F1 |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|---:|---:|---:|");
        for m in scores {
            let undef = |r: &crate::stats::Ratio| if r.undefined { " (undefined)" } else { "" };
            let c = m.counts;
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {:.3} | {:.3}{} | {:.3}{} | {:.3}{} |",
                m.measure.name(),
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                m.metrics.accuracy,
                m.metrics.precision.value,
                undef(&m.metrics.precision),
                m.metrics.recall.value,
                undef(&m.metrics.recall),
                m.metrics.f1.value,
                undef(&m.metrics.f1),
            );
        }
        s.push('\n');
    }
    if !report.notes.is_empty() {
        let _ = writeln!(s, "## notes\n");
        for n in &report.notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    Ok(s)
}

pub fn scores_csv(scores: &[MeasureScore]) -> Vec<u8> {
    let mut s = String::from("measure,tp,fp,tn,fn,accuracy,precision,recall,f1,precision_undefined,recall_undefined,f1_undefined\n");
    for m in scores {
        let c = m.counts;
        let x = m.metrics;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            m.measure.name(),
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            x.accuracy,
            x.precision.value,
            x.recall.value,
            x.f1.value,
            x.precision.undefined,
            x.recall.undefined,
            x.f1.undefined
        ));
    }
    s.into_bytes()
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '-' })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

/// Writes `report.csv` / `report.md` (per `format`), `scores.csv` when
/// scores are given, and the episode and sample artifacts when requested.
pub fn emit_report(
    run: &RunOutput,
    scores: Option<&[MeasureScore]>,
    cfg: &ExperimentConfig,
) -> Result<Vec<PathBuf>, HarnessError> {
    if run.report.rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let dir = &cfg.out;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    if cfg.format.csv() {
        let path = dir.join("report.csv");
        write_file(&path, &report_csv(&run.report)?)?;
        written.push(path);
        if let Some(scores) = scores {
            let path = dir.join("scores.csv");
            write_file(&path, &scores_csv(scores))?;
            written.push(path);
        }
    }
    if cfg.format.markdown() {
        let path = dir.join("report.md");
        write_file(&path, report_markdown(&run.report, scores)?.as_bytes())?;
        written.push(path);
    }
    if cfg.artifacts {
        let ep_dir = dir.join("episodes");
        fs::create_dir_all(&ep_dir).map_err(io_err(&ep_dir))?;
        for (name, set) in &run.episodes {
            let path = ep_dir.join(format!("{}.jsonl", sanitize(name)));
            let mut buf = Vec::new();
            write_episodes_jsonl(set, &mut buf)?;
            write_file(&path, &buf)?;
            written.push(path);
        }
        let sm_dir = dir.join("samples");
        fs::create_dir_all(&sm_dir).map_err(io_err(&sm_dir))?;
        for (name, sets) in &run.samples {
            let path = sm_dir.join(format!("{}.csv", sanitize(name)));
            let refs: Vec<&MeasureSampleSet> = sets.iter().collect();
            let mut buf = Vec::new();
            write_samples_csv(&refs, &mut buf)?;
            write_file(&path, &buf)?;
            written.push(path);
        }
    }
    Ok(written)
}
