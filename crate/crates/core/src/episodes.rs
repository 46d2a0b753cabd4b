//! Episode generation under a fixed policy, Gaussian drift injection into a
//! transition model, and conversion of episode sets into measure samples
//! against a reference trajectory.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridmdp::{Action, Cell, GridError, GridSpec, Policy, TransitionModel};
use crate::rng::{self, tag};
use crate::seqmeasure::{compute_measure, MeasureError, MeasureKind, Token};

pub const DEFAULT_STEP_CAP: usize = 1000;
pub const DEFAULT_MAX_RETRIES: usize = 100;
const MAX_ROW_REDRAWS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("episode {index} did not reach the goal in {attempts} attempts")]
    RetryBudget { index: usize, attempts: usize },
    #[error("noise level must be finite and non-negative, got {0}")]
    BadNoise(f64),
    #[error("every noise redraw for row ({state}, {action}) clamped to zero")]
    DeadRow { state: usize, action: Action },
    #[error("episode count must be positive")]
    NoEpisodes,
    #[error("step cap must be positive")]
    ZeroCap,
    #[error("reference trajectory is empty")]
    EmptyReference,
    #[error("window must be positive")]
    ZeroWindow,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed sample file: {0}")]
    Malformed(String),
}

/// Row-major state code, `row * width + col`.
pub fn encode_state(cell: Cell, grid: &GridSpec) -> Result<Token, GridError> {
    grid.encode(cell)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    /// Index of the stream the episode was drawn from within its set.
    pub seed_index: u64,
    /// Visited states, start first.
    #[serde(rename = "tokens")]
    pub states: Vec<Token>,
    pub completed: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSet {
    pub episodes: Vec<Episode>,
    pub seed: u64,
    pub condition: String,
    /// Draws discarded because they hit the step cap.
    pub retries: usize,
}

impl EpisodeSet {
    pub fn token_slices(&self) -> Vec<&[Token]> {
        self.episodes.iter().map(|e| e.states.as_slice()).collect()
    }

    pub fn mean_length(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(Episode::len).sum::<usize>() as f64 / self.episodes.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeLimits {
    /// Maximum number of recorded states per episode.
    pub cap: usize,
    /// Fresh streams tried per episode index after the first.
    pub max_retries: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        EpisodeLimits {
            cap: DEFAULT_STEP_CAP,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

fn sample_successor<R: Rng + ?Sized>(row: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(next, p) in row {
        acc += p;
        if u < acc {
            return next;
        }
    }
    // rounding left u above the cumulative sum
    row.iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map(|(s, _)| *s)
        .expect("transition row has positive mass")
}

/// Rolls out one episode from the start cell, recording at most `cap` states.
pub fn generate_episode<R: Rng + ?Sized>(
    model: &TransitionModel,
    policy: &Policy,
    grid: &GridSpec,
    rng: &mut R,
    cap: usize,
) -> Episode {
    let goal = grid.goal_index();
    let mut state = grid.start_index();
    let mut states = vec![state as Token];
    while state != goal && states.len() < cap {
        let Some(action) = policy.sample(state, rng) else {
            break;
        };
        state = sample_successor(model.row(state, action), rng);
        states.push(state as Token);
    }
    Episode {
        seed_index: 0,
        completed: state == goal,
        states,
    }
}

fn attempt_stream(seed: u64, index: usize, attempt: usize) -> rng::Stream {
    rng::substream(seed, tag::EPISODE, ((attempt as u64) << 32) | index as u64)
}

/// Draws `n` completed episodes; episode `i` depends only on `(seed, i)`.
pub fn generate_episodes(
    model: &TransitionModel,
    policy: &Policy,
    grid: &GridSpec,
    n: usize,
    seed: u64,
    limits: EpisodeLimits,
    condition: impl Into<String>,
) -> Result<EpisodeSet, EpisodeError> {
    if n == 0 {
        return Err(EpisodeError::NoEpisodes);
    }
    if limits.cap == 0 {
        return Err(EpisodeError::ZeroCap);
    }
    let drawn: Vec<Result<(Episode, usize), EpisodeError>> = (0..n)
        .into_par_iter()
        .map(|index| {
            for attempt in 0..=limits.max_retries {
                let mut stream = attempt_stream(seed, index, attempt);
                let mut ep = generate_episode(model, policy, grid, &mut stream, limits.cap);
                if ep.completed {
                    ep.seed_index = index as u64;
                    return Ok((ep, attempt));
                }
            }
            Err(EpisodeError::RetryBudget {
                index,
                attempts: limits.max_retries + 1,
            })
        })
        .collect();
    let mut episodes = Vec::with_capacity(n);
    let mut retries = 0;
    for item in drawn {
        let (ep, attempt) = item?;
        retries += attempt;
        episodes.push(ep);
    }
    Ok(EpisodeSet {
        episodes,
        seed,
        condition: condition.into(),
        retries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of the additive Gaussian noise.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self, EpisodeError> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(EpisodeError::BadNoise(sigma));
        }
        Ok(NoiseSpec { sigma, seed })
    }
}

/// Adds independent Gaussian noise to every in-support successor probability,
/// clamps negatives to zero and renormalizes each row.
///
/// Row `(s, a)` draws from its own substream; a row that clamps entirely to
/// zero is redrawn from the next substream. The goal row stays absorbing.
pub fn perturb_transitions(
    model: &TransitionModel,
    noise: &NoiseSpec,
) -> Result<TransitionModel, EpisodeError> {
    if !(noise.sigma.is_finite() && noise.sigma >= 0.0) {
        return Err(EpisodeError::BadNoise(noise.sigma));
    }
    let mut out = model.clone();
    if noise.sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, noise.sigma).map_err(|_| EpisodeError::BadNoise(noise.sigma))?;
    for state in 0..model.n_states() {
        if state == model.goal() {
            continue;
        }
        for action in Action::ALL {
            let row_id = (state * Action::ALL.len() + action.index()) as u64;
            let base = model.row(state, action);
            let mut redraw = 0u64;
            let fresh = loop {
                if redraw >= MAX_ROW_REDRAWS {
                    return Err(EpisodeError::DeadRow { state, action });
                }
                let mut stream = rng::substream(noise.seed, tag::NOISE_ROW, (redraw << 32) | row_id);
                let noisy: Vec<(usize, f64)> = base
                    .iter()
                    .map(|&(next, p)| (next, (p + normal.sample(&mut stream)).max(0.0)))
                    .collect();
                let mass: f64 = noisy.iter().map(|(_, p)| p).sum();
                if mass > 0.0 {
                    break noisy.into_iter().map(|(s, p)| (s, p / mass)).collect::<Vec<_>>();
                }
                redraw += 1;
            };
            *out.row_mut(state, action) = fresh;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSampleSet {
    pub kind: MeasureKind,
    pub values: Vec<f64>,
    pub condition: String,
    /// Pairs skipped because a suffix was missing or outside the kind's domain.
    pub skipped: usize,
}

/// Suffix-pair samples of `kind` between `reference` and each episode.
///
/// For each reference position `i` and episode `e`, compares `reference[i..]`
/// with `e[i..]`, both truncated to `window` tokens when set. Pairs where the
/// episode has no token at `i`, or the kind rejects the lengths, are skipped.
/// Output order is position-major, then episode.
pub fn suffix_samples(
    reference: &[Token],
    episodes: &[&[Token]],
    kind: MeasureKind,
    window: Option<usize>,
) -> Result<(Vec<f64>, usize), EpisodeError> {
    if reference.is_empty() {
        return Err(EpisodeError::EmptyReference);
    }
    if window == Some(0) {
        return Err(EpisodeError::ZeroWindow);
    }
    let cut = |s: &[Token]| -> usize { window.map_or(s.len(), |w| w.min(s.len())) };
    let n = episodes.len();
    let cells: Vec<Result<Option<f64>, MeasureError>> = (0..reference.len() * n)
        .into_par_iter()
        .map(|k| {
            let (i, e) = (k / n, k % n);
            let ep = episodes[e];
            if ep.len() <= i {
                return Ok(None);
            }
            let a = &reference[i..];
            let b = &ep[i..];
            let (a, b) = (&a[..cut(a)], &b[..cut(b)]);
            if !kind.accepts(a.len(), b.len()) {
                return Ok(None);
            }
            compute_measure(kind, a, b).map(|v| Some(v.value))
        })
        .collect();
    let mut values = Vec::with_capacity(cells.len());
    let mut skipped = 0;
    for cell in cells {
        match cell? {
            Some(v) => values.push(v),
            None => skipped += 1,
        }
    }
    Ok((values, skipped))
}

pub fn generate_measures(
    reference: &[Token],
    eps: &EpisodeSet,
    kind: MeasureKind,
    window: Option<usize>,
) -> Result<MeasureSampleSet, EpisodeError> {
    let included: Vec<&[Token]> = eps
        .episodes
        .iter()
        .filter(|e| e.completed)
        .map(|e| e.states.as_slice())
        .collect();
    let (values, skipped) = suffix_samples(reference, &included, kind, window)?;
    Ok(MeasureSampleSet {
        kind,
        values,
        condition: eps.condition.clone(),
        skipped,
    })
}

pub fn write_episodes_jsonl<W: Write>(set: &EpisodeSet, mut out: W) -> Result<(), EpisodeError> {
    for ep in &set.episodes {
        serde_json::to_writer(&mut out, ep)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_episodes_jsonl<R: BufRead>(input: R) -> Result<Vec<Episode>, EpisodeError> {
    let mut episodes = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        episodes.push(serde_json::from_str(&line)?);
    }
    Ok(episodes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub measure: String,
    pub condition: String,
    pub sample: f64,
}

pub fn write_samples_csv<W: Write>(sets: &[&MeasureSampleSet], out: W) -> Result<(), EpisodeError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["measure", "condition", "sample"])?;
    for set in sets {
        let name = set.kind.name();
        for v in &set.values {
            w.write_record([name, set.condition.as_str(), v.to_string().as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the `measure,condition,sample` layout, or a bare column of numbers.
pub fn read_samples_csv<R: std::io::Read>(input: R) -> Result<Vec<f64>, EpisodeError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut column = None;
    let mut values = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let col = match column {
            Some(c) => c,
            None => {
                if let Some(c) = record.iter().position(|f| f == "sample") {
                    column = Some(c);
                    continue;
                }
                *column.insert(0)
            }
        };
        let field = record
            .get(col)
            .ok_or_else(|| EpisodeError::Malformed(format!("line {} has no column {col}", line + 1)))?;
        let v: f64 = field
            .parse()
            .map_err(|_| EpisodeError::Malformed(format!("line {}: {field:?} is not a number", line + 1)))?;
        values.push(v);
    }
    Ok(values)
}
