//! Cart-pole dynamics, equal-width discretization with mixed-radix state
//! codes, a tabular Q-learning policy, and the within/inter episode-set
//! drift comparison.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episodes::{suffix_samples, Episode, EpisodeError, EpisodeSet};
use crate::rng::{self, tag};
use crate::seqmeasure::{MeasureKind, Token};
use crate::stats::{summarize, welch_t_test, SampleSummary, StatsError, WelchResult};

#[derive(Debug, Error)]
pub enum CartPoleError {
    #[error("invalid cart-pole parameter: {0}")]
    BadParams(String),
    #[error("invalid discretizer: {0}")]
    BadDiscretizer(String),
    #[error("invalid learning configuration: {0}")]
    BadLearning(String),
    #[error("q table does not match a {expected}-state discretizer (got {got})")]
    TableShape { expected: usize, got: usize },
    #[error(transparent)]
    Episodes(#[from] EpisodeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from pivot to the pole's centre of mass.
    pub half_length: f64,
    pub force: f64,
    pub dt: f64,
    pub position_limit: f64,
    pub angle_limit: f64,
    pub max_steps: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            dt: 0.02,
            position_limit: 2.4,
            angle_limit: 12.0_f64.to_radians(),
            max_steps: 200,
        }
    }
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<(), CartPoleError> {
        let positive = [
            ("gravity", self.gravity),
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("half_length", self.half_length),
            ("force", self.force),
            ("position_limit", self.position_limit),
            ("angle_limit", self.angle_limit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CartPoleError::BadParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(CartPoleError::BadParams(format!("dt must lie in (0, 0.1], got {}", self.dt)));
        }
        if self.max_steps == 0 {
            return Err(CartPoleError::BadParams("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn with_gravity(self, gravity: f64) -> Self {
        CartPoleParams { gravity, ..self }
    }

    pub fn with_half_length(self, half_length: f64) -> Self {
        CartPoleParams { half_length, ..self }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ContinuousState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl ContinuousState {
    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Push {
    Left = 0,
    Right = 1,
}

impl Push {
    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Push::Left
        } else {
            Push::Right
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One explicit-Euler step of the coupled cart/pole equations of motion.
pub fn step_dynamics(s: &ContinuousState, action: Push, p: &CartPoleParams) -> ContinuousState {
    let force = match action {
        Push::Left => -p.force,
        Push::Right => p.force,
    };
    let total_mass = p.cart_mass + p.pole_mass;
    let pole_moment = p.pole_mass * p.half_length;
    let (sin, cos) = s.theta.sin_cos();
    let temp = (force + pole_moment * s.theta_dot * s.theta_dot * sin) / total_mass;
    let theta_acc = (p.gravity * sin - cos * temp)
        / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
    let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
    ContinuousState {
        x: s.x + p.dt * s.x_dot,
        x_dot: s.x_dot + p.dt * x_acc,
        theta: s.theta + p.dt * s.theta_dot,
        theta_dot: s.theta_dot + p.dt * theta_acc,
    }
}

/// Pole fallen past the angle limit or cart past the track end.
pub fn is_terminal(s: &ContinuousState, p: &CartPoleParams) -> bool {
    s.x.abs() > p.position_limit || s.theta.abs() > p.angle_limit
}

/// Initial state with every component uniform in [-0.05, 0.05).
pub fn initial_state<R: Rng + ?Sized>(rng: &mut R) -> ContinuousState {
    let mut u = || rng.random_range(-0.05..0.05);
    ContinuousState {
        x: u(),
        x_dot: u(),
        theta: u(),
        theta_dot: u(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub bins: usize,
    /// Closed clip interval per component: x, x_dot, theta, theta_dot.
    pub ranges: [(f64, f64); 4],
}

impl Default for Discretizer {
    fn default() -> Self {
        Discretizer {
            bins: 10,
            ranges: [(-2.4, 2.4), (-3.0, 3.0), (-0.21, 0.21), (-3.5, 3.5)],
        }
    }
}

impl Discretizer {
    pub fn new(bins: usize, ranges: [(f64, f64); 4]) -> Result<Self, CartPoleError> {
        let d = Discretizer { bins, ranges };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), CartPoleError> {
        if self.bins < 2 {
            return Err(CartPoleError::BadDiscretizer(format!("need at least 2 bins, got {}", self.bins)));
        }
        if self.bins.checked_pow(4).is_none_or(|n| n > Token::MAX as usize) {
            return Err(CartPoleError::BadDiscretizer(format!("{} bins overflow a token", self.bins)));
        }
        for (i, (lo, hi)) in self.ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CartPoleError::BadDiscretizer(format!("range {i} is [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.bins.pow(4)
    }

    /// Equal-width bin of `value` in dimension `dim`, clipped to the end bins.
    pub fn bin(&self, dim: usize, value: f64) -> usize {
        let (lo, hi) = self.ranges[dim];
        let v = value.clamp(lo, hi);
        let scaled = ((v - lo) / (hi - lo) * self.bins as f64).floor();
        (scaled.max(0.0) as usize).min(self.bins - 1)
    }

    pub fn bins_of(&self, s: &ContinuousState) -> [usize; 4] {
        let v = s.as_array();
        [0, 1, 2, 3].map(|d| self.bin(d, v[d]))
    }

    /// `s0 + s1·b + s2·b² + s3·b³`.
    pub fn encode_bins(&self, bins: [usize; 4]) -> Token {
        let b = self.bins;
        (bins[0] + b * (bins[1] + b * (bins[2] + b * bins[3]))) as Token
    }
}

pub fn encode_observation(s: &ContinuousState, d: &Discretizer) -> Token {
    d.encode_bins(d.bins_of(s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPolicy {
    /// Action values indexed by state token.
    pub q: Vec<[f64; 2]>,
    /// Exploration probability used when acting.
    pub epsilon: f64,
}

impl QPolicy {
    pub fn new(n_states: usize, init: f64, epsilon: f64) -> Self {
        QPolicy {
            q: vec![[init; 2]; n_states],
            epsilon,
        }
    }

    pub fn values(&self, token: Token) -> [f64; 2] {
        self.q[token as usize]
    }

    /// Argmax action; ties go to the left push.
    pub fn greedy(&self, token: Token) -> Push {
        let [l, r] = self.values(token);
        if r > l {
            Push::Right
        } else {
            Push::Left
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        QPolicy {
            q: self.q.clone(),
            epsilon,
        }
    }

    /// Writes `{"epsilon": e, "states": n, "q": {"token": [left, right], ...}}`,
    /// omitting entries equal to `init`.
    pub fn write_json<W: Write>(&self, init: f64, out: W) -> Result<(), CartPoleError> {
        let q: BTreeMap<Token, [f64; 2]> = self
            .q
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != [init; 2])
            .map(|(i, v)| (i as Token, *v))
            .collect();
        let doc = QTableFile {
            epsilon: self.epsilon,
            states: self.q.len(),
            init,
            q,
        };
        serde_json::to_writer_pretty(out, &doc)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R, expected_states: usize) -> Result<Self, CartPoleError> {
        let doc: QTableFile = serde_json::from_reader(input)?;
        if doc.states != expected_states {
            return Err(CartPoleError::TableShape {
                expected: expected_states,
                got: doc.states,
            });
        }
        let mut policy = QPolicy::new(doc.states, doc.init, doc.epsilon);
        for (token, v) in doc.q {
            let slot = policy.q.get_mut(token as usize).ok_or(CartPoleError::TableShape {
                expected: expected_states,
                got: token as usize + 1,
            })?;
            *slot = v;
        }
        Ok(policy)
    }
}

#[derive(Serialize, Deserialize)]
struct QTableFile {
    epsilon: f64,
    states: usize,
    init: f64,
    q: BTreeMap<Token, [f64; 2]>,
}

/// With probability `1 - ε` the greedy action, otherwise a uniform one.
pub fn epsilon_greedy_action<R: Rng + ?Sized>(q: &QPolicy, token: Token, rng: &mut R) -> Push {
    if q.epsilon > 0.0 && rng.random::<f64>() < q.epsilon {
        Push::from_index(rng.random_range(0..2))
    } else {
        q.greedy(token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Multiplicative per-episode epsilon decay.
    pub epsilon_decay: f64,
    pub episode_budget: usize,
    /// Rolling mean episode length that counts as converged.
    pub threshold: f64,
    pub rolling_window: usize,
    pub q_init: f64,
    /// Exploration probability of the returned policy.
    pub rollout_epsilon: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            learning_rate: 0.1,
            discount: 0.99,
            epsilon_start: 1.0,
            epsilon_min: 0.01,
            epsilon_decay: 0.995,
            episode_budget: 50_000,
            threshold: 195.0,
            rolling_window: 100,
            q_init: 0.0,
            rollout_epsilon: 0.05,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<(), CartPoleError> {
        let unit = [
            ("learning_rate", self.learning_rate),
            ("discount", self.discount),
            ("epsilon_start", self.epsilon_start),
            ("epsilon_min", self.epsilon_min),
            ("epsilon_decay", self.epsilon_decay),
            ("rollout_epsilon", self.rollout_epsilon),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(CartPoleError::BadLearning(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.rolling_window == 0 {
            return Err(CartPoleError::BadLearning("rolling_window must be positive".into()));
        }
        if !self.q_init.is_finite() || !self.threshold.is_finite() {
            return Err(CartPoleError::BadLearning("q_init and threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub policy: QPolicy,
    pub converged: bool,
    pub episodes_run: usize,
    /// Mean length of the last `rolling_window` training episodes.
    pub rolling_mean: f64,
}

/// Tabular Q-learning with an ε-greedy behaviour policy.
///
/// Stops once the rolling mean episode length exceeds the threshold or the
/// episode budget is spent. Falling is terminal; hitting the step limit
/// bootstraps from the next state.
pub fn train_q_policy(
    params: &CartPoleParams,
    d: &Discretizer,
    hyper: &LearningConfig,
    seed: u64,
) -> Result<TrainedPolicy, CartPoleError> {
    params.validate()?;
    d.validate()?;
    hyper.validate()?;
    let mut rng = rng::substream(seed, tag::TRAINING, 0);
    let mut policy = QPolicy::new(d.n_states(), hyper.q_init, hyper.epsilon_start);
    let mut recent: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut recent_sum = 0usize;
    let mut episodes_run = 0;
    let mut rolling_mean = 0.0;
    let mut converged = false;

    while episodes_run < hyper.episode_budget {
        let mut s = initial_state(&mut rng);
        let mut token = encode_observation(&s, d);
        let mut steps = 0;
        loop {
            let action = epsilon_greedy_action(&policy, token, &mut rng);
            let next = step_dynamics(&s, action, params);
            steps += 1;
            let next_token = encode_observation(&next, d);
            let fallen = is_terminal(&next, params);
            let target = if fallen {
                1.0
            } else {
                let [l, r] = policy.values(next_token);
                1.0 + hyper.discount * l.max(r)
            };
            let slot = &mut policy.q[token as usize][action.index()];
            *slot += hyper.learning_rate * (target - *slot);
            s = next;
            token = next_token;
            if fallen || steps >= params.max_steps {
                break;
            }
        }
        episodes_run += 1;
        recent.push_back(steps);
        recent_sum += steps;
        if recent.len() > hyper.rolling_window {
            recent_sum -= recent.pop_front().unwrap_or(0);
        }
        policy.epsilon = (policy.epsilon * hyper.epsilon_decay).max(hyper.epsilon_min);
        if recent.len() == hyper.rolling_window {
            rolling_mean = recent_sum as f64 / recent.len() as f64;
            if rolling_mean >= hyper.threshold {
                converged = true;
                break;
            }
        }
    }
    if !converged && !recent.is_empty() {
        rolling_mean = recent_sum as f64 / recent.len() as f64;
    }
    policy.epsilon = hyper.rollout_epsilon;
    Ok(TrainedPolicy {
        policy,
        converged,
        episodes_run,
        rolling_mean,
    })
}

/// Observation tokens of one rollout, initial state first; ends when the
/// pole falls, the cart leaves the track, or after `max_steps` actions.
pub fn rollout<R: Rng + ?Sized>(
    policy: &QPolicy,
    params: &CartPoleParams,
    d: &Discretizer,
    rng: &mut R,
) -> (Vec<Token>, bool) {
    let mut s = initial_state(rng);
    let mut tokens = vec![encode_observation(&s, d)];
    for _ in 0..params.max_steps {
        let action = epsilon_greedy_action(policy, *tokens.last().unwrap_or(&0), rng);
        s = step_dynamics(&s, action, params);
        tokens.push(encode_observation(&s, d));
        if is_terminal(&s, params) {
            return (tokens, false);
        }
    }
    (tokens, true)
}

/// `n` rollouts; episode `i` depends only on `(seed, i)`. `completed` marks
/// episodes that survived to the step limit.
pub fn generate_cartpole_episodes(
    policy: &QPolicy,
    params: &CartPoleParams,
    d: &Discretizer,
    n: usize,
    seed: u64,
    condition: impl Into<String>,
) -> Result<EpisodeSet, CartPoleError> {
    params.validate()?;
    if n == 0 {
        return Err(EpisodeError::NoEpisodes.into());
    }
    let episodes = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng::substream(seed, tag::CARTPOLE_EPISODE, i as u64);
            let (states, completed) = rollout(policy, params, d, &mut stream);
            Episode {
                seed_index: i as u64,
                states,
                completed,
            }
        })
        .collect();
    Ok(EpisodeSet {
        episodes,
        seed,
        condition: condition.into(),
        retries: 0,
    })
}

/// Every episode of `set` as reference against all other episodes of `set`.
pub fn within_samples(
    set: &EpisodeSet,
    kind: MeasureKind,
    window: Option<usize>,
) -> Result<Vec<f64>, CartPoleError> {
    let all = set.token_slices();
    let mut out = Vec::new();
    for (j, reference) in all.iter().enumerate() {
        let others: Vec<&[Token]> = all
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, e)| *e)
            .collect();
        out.extend(suffix_samples(reference, &others, kind, window)?.0);
    }
    Ok(out)
}

/// Every episode of `prev` as reference against all episodes of `cur`.
///
/// When both sets are the same set, the episode-with-itself pairs are left
/// out, matching the within-set rule.
pub fn inter_samples(
    prev: &EpisodeSet,
    cur: &EpisodeSet,
    kind: MeasureKind,
    window: Option<usize>,
) -> Result<Vec<f64>, CartPoleError> {
    let same = prev == cur;
    let targets = cur.token_slices();
    let mut out = Vec::new();
    for (j, reference) in prev.token_slices().into_iter().enumerate() {
        let chosen: Vec<&[Token]> = targets
            .iter()
            .enumerate()
            .filter(|(k, _)| !same || *k != j)
            .map(|(_, e)| *e)
            .collect();
        out.extend(suffix_samples(reference, &chosen, kind, window)?.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetComparison {
    /// Union of both within-set sample sets.
    pub within: SampleSummary,
    pub inter: SampleSummary,
    pub result: WelchResult,
}

/// Welch's test of the pooled within-set samples against the inter-set samples.
pub fn compare_episode_sets(
    prev: &EpisodeSet,
    cur: &EpisodeSet,
    kind: MeasureKind,
    window: Option<usize>,
    alpha: f64,
) -> Result<SetComparison, CartPoleError> {
    let mut within = within_samples(prev, kind, window)?;
    within.extend(within_samples(cur, kind, window)?);
    let inter = inter_samples(prev, cur, kind, window)?;
    Ok(SetComparison {
        within: summarize(&within)?,
        inter: summarize(&inter)?,
        result: welch_t_test(&within, &inter, alpha)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartPoleDriftConfig {
    pub episodes_per_set: usize,
    pub window: Option<usize>,
    pub alpha: f64,
    pub learning: LearningConfig,
    pub discretizer: Discretizer,
}

impl Default for CartPoleDriftConfig {
    fn default() -> Self {
        CartPoleDriftConfig {
            episodes_per_set: 100,
            window: None,
            alpha: crate::stats::DEFAULT_ALPHA,
            learning: LearningConfig::default(),
            discretizer: Discretizer::default(),
        }
    }
}

/// Seeds for one comparison: each environment's training stream and episode stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComparisonSeeds {
    pub train_a: u64,
    pub train_b: u64,
    pub episodes_a: u64,
    pub episodes_b: u64,
}

impl ComparisonSeeds {
    /// Independent training and episode streams for both sides.
    pub fn derived(seed: u64) -> Self {
        ComparisonSeeds {
            train_a: rng::derive_seed(seed, tag::TRAINING, 0),
            train_b: rng::derive_seed(seed, tag::TRAINING, 1),
            episodes_a: rng::derive_seed(seed, tag::CARTPOLE_EPISODE, 0),
            episodes_b: rng::derive_seed(seed, tag::CARTPOLE_EPISODE, 1),
        }
    }

    /// Shared training stream, disjoint episode streams: the drift-free control.
    pub fn shared_training(seed: u64) -> Self {
        let d = Self::derived(seed);
        ComparisonSeeds {
            train_b: d.train_a,
            ..d
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleDrift {
    pub comparison: SetComparison,
    pub converged: (bool, bool),
    pub mean_lengths: (f64, f64),
}

/// Trains a policy per environment, rolls out one episode set in each, and
/// compares them. Identical training seeds and parameters reuse one policy.
pub fn detect_drift_cartpole(
    params_a: &CartPoleParams,
    params_b: &CartPoleParams,
    kind: MeasureKind,
    config: &CartPoleDriftConfig,
    seeds: ComparisonSeeds,
) -> Result<CartPoleDrift, CartPoleError> {
    let d = &config.discretizer;
    let policy_a = train_q_policy(params_a, d, &config.learning, seeds.train_a)?;
    let policy_b = if params_a == params_b && seeds.train_a == seeds.train_b {
        policy_a.clone()
    } else {
        train_q_policy(params_b, d, &config.learning, seeds.train_b)?
    };
    let n = config.episodes_per_set;
    let set_a = generate_cartpole_episodes(&policy_a.policy, params_a, d, n, seeds.episodes_a, "a")?;
    let set_b = generate_cartpole_episodes(&policy_b.policy, params_b, d, n, seeds.episodes_b, "b")?;
    let comparison = compare_episode_sets(&set_a, &set_b, kind, config.window, config.alpha)?;
    Ok(CartPoleDrift {
        comparison,
        converged: (policy_a.converged, policy_b.converged),
        mean_lengths: (set_a.mean_length(), set_b.mean_length()),
    })
}
