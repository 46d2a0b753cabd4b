//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! terminal. Cart-pole comparisons use 20 episodes per set and a 16-token
//! window; full-length suffixes at 100 episodes are far beyond a test budget.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use trajdrift::cartpole::{
    detect_drift_cartpole, CartPoleDriftConfig, CartPoleParams, ComparisonSeeds, Discretizer,
};
use trajdrift::gridmdp::{Action, Cell};
use trajdrift::harness::{maze_setup, report_csv, run_maze_drift, run_maze_nodrift, ExperimentConfig, PolicyKind};
use trajdrift::seqmeasure::{compute_measure, MeasureKind, Token};
use trajdrift::stats::welch_t_test;

const SEEDS: u64 = 20;
const BASELINE_SEEDS: u64 = 10;
const MIN_HIT_RATE: f64 = 0.9;
const MAX_FALSE_RATE: f64 = 0.1;
const POWER_MEASURES: [MeasureKind; 4] = [
    MeasureKind::LevenshteinRatio,
    MeasureKind::JaroWinkler,
    MeasureKind::LcSubstringSimilarity,
    MeasureKind::DtwSimilarity,
];
const CARTPOLE_MEASURES: [MeasureKind; 2] = [MeasureKind::DamerauSimilarity, MeasureKind::DtwSimilarity];
const CARTPOLE_EPISODES: usize = 20;
const CARTPOLE_WINDOW: usize = 16;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: impl Into<String>) -> Verdict {
    let v = Verdict {
        name,
        pass,
        detail: detail.into(),
    };
    println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    v
}

fn value_function() -> Verdict {
    let started = Instant::now();
    let s = maze_setup(PolicyKind::Deterministic, 1.0).expect("maze solves");
    let elapsed = started.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    let mut policy_misses = 0;
    for r in 0..5 {
        for c in 0..5 {
            let idx = s.grid.index(Cell::new(r, c));
            worst = worst.max((s.value.reported(idx) - common::MAZE_VALUES[r][c]).abs());
            if s.greedy.action(idx).map_or('G', Action::arrow) != common::MAZE_POLICY[r][c] {
                policy_misses += 1;
            }
        }
    }
    let path_ok = s.reference == common::MAZE_OPTIMAL_PATH;
    verdict(
        "value function",
        worst <= 0.01 && policy_misses == 0 && path_ok && elapsed < 1.0,
        format!(
            "max |V - table| {worst:.4} (<= 0.01), policy mismatches {policy_misses}, path {}, {elapsed:.3}s",
            if path_ok { "exact" } else { "differs" }
        ),
    )
}

fn measure_oracle() -> Verdict {
    let mut bad = 0;
    let mut first = String::new();
    for kind in MeasureKind::ALL {
        let m = common::exhaustive_mismatches(kind);
        if first.is_empty() {
            if let Some(x) = m.first() {
                first = x.clone();
            }
        }
        bad += m.len();
    }
    let codes = |s: &str| s.bytes().map(Token::from).collect::<Vec<_>>();
    let jaro = compute_measure(MeasureKind::Jaro, &codes("MARTHA"), &codes("MARHTA")).unwrap().value;
    let osa = compute_measure(MeasureKind::Damerau, &codes("CA"), &codes("ABC")).unwrap().value;
    let dtw = compute_measure(MeasureKind::Dtw, &[0, 0], &[1, 1]).unwrap().value;
    let pinned = (jaro - 17.0 / 18.0).abs() <= 1e-12 && osa == 3.0 && dtw == 2.0;
    verdict(
        "measure oracle",
        bad == 0 && pinned,
        format!("{bad} disagreements over all pairs up to length 6 on 3 symbols; pinned values {}{first}", if pinned { "ok" } else { "WRONG " }),
    )
}

/// Drift flags per (measure, noise label) and baseline levenshtein moments, from one maze run per seed.
struct MazeRuns {
    flags: BTreeMap<(MeasureKind, String), usize>,
    baseline: Vec<(f64, f64)>,
}

fn maze_runs() -> MazeRuns {
    let mut measures = POWER_MEASURES.to_vec();
    measures.push(MeasureKind::Levenshtein);
    let mut flags = BTreeMap::new();
    let mut baseline = Vec::new();
    for seed in 0..SEEDS {
        let cfg = ExperimentConfig {
            seed,
            measures: measures.clone(),
            ..Default::default()
        };
        let run = run_maze_drift(&cfg, PolicyKind::Deterministic).expect("maze drift run");
        for row in &run.report.rows {
            *flags.entry((row.measure, row.condition.clone())).or_insert(0) += usize::from(row.drift);
            if seed < BASELINE_SEEDS && row.measure == MeasureKind::Levenshtein && row.condition == "noise=0" {
                baseline.push((row.mean, row.sd));
            }
        }
    }
    MazeRuns { flags, baseline }
}

fn baseline_statistics(runs: &MazeRuns) -> Verdict {
    let n = runs.baseline.len() as f64;
    let mean = runs.baseline.iter().map(|r| r.0).sum::<f64>() / n;
    let sd = runs.baseline.iter().map(|r| r.1).sum::<f64>() / n;
    verdict(
        "baseline statistics",
        (mean - 2.65).abs() <= 0.3 && (sd - 1.53).abs() <= 0.3,
        format!("levenshtein noise-0 mean {mean:.3} (2.65 +/- 0.3), sd {sd:.3} (1.53 +/- 0.3), {} seeds", runs.baseline.len()),
    )
}

fn drift_power(runs: &MazeRuns) -> Verdict {
    let mut weakest = (usize::MAX, String::new());
    for kind in POWER_MEASURES {
        for noise in ["noise=0.2", "noise=0.3", "noise=0.4"] {
            let hits = runs.flags.get(&(kind, noise.to_string())).copied().unwrap_or(0);
            if hits < weakest.0 {
                weakest = (hits, format!("{kind} at {noise}"));
            }
        }
    }
    let need = (MIN_HIT_RATE * SEEDS as f64).ceil() as usize;
    verdict(
        "drift power",
        weakest.0 >= need,
        format!("weakest cell {} flagged {}/{SEEDS} (need {need})", weakest.1, weakest.0),
    )
}

fn no_drift_robustness() -> Verdict {
    let allowed = (MAX_FALSE_RATE * SEEDS as f64).floor() as usize;
    let mut worst = (0usize, String::new());
    let mut over = 0;
    for policy in [PolicyKind::Deterministic, PolicyKind::Stochastic] {
        let mut counts: BTreeMap<MeasureKind, usize> = BTreeMap::new();
        for seed in 0..SEEDS {
            let cfg = ExperimentConfig {
                seed,
                ..Default::default()
            };
            let run = run_maze_nodrift(&cfg, policy, 0).expect("no-drift run");
            for row in &run.report.rows {
                *counts.entry(row.measure).or_insert(0) += usize::from(row.drift);
            }
        }
        for (kind, c) in counts {
            if c > allowed {
                over += 1;
            }
            if c > worst.0 || worst.1.is_empty() {
                worst = (c, format!("{kind} ({})", policy.label()));
            }
        }
    }
    verdict(
        "no-drift robustness",
        over == 0,
        format!(
            "{over}/20 policy-measure cells above {allowed}/{SEEDS} false positives; worst {} with {}/{SEEDS}",
            worst.1, worst.0
        ),
    )
}

fn welch_correctness() -> Verdict {
    let [t, df, p] = common::welch_max_errors(&common::random_sample_pairs(100, 2024));
    let pinned = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0], 0.05).unwrap();
    let pinned_ok = (pinned.t + 1.0).abs() < 1e-12 && (pinned.df - 8.0).abs() < 1e-12 && (pinned.p - 0.34659).abs() < 1e-5;
    verdict(
        "welch correctness",
        t <= 1e-9 && df <= 1e-9 && p <= 1e-9 && pinned_ok,
        format!(
            "max error vs statrs over 100 pairs: t {t:.1e}, df {df:.1e}, p {p:.1e}; pinned t={} df={} p={:.5}",
            pinned.t, pinned.df, pinned.p
        ),
    )
}

fn confusion_metrics() -> Verdict {
    let mut bad = common::metric_mismatches(&common::MAZE_METRICS);
    bad.extend(common::metric_mismatches(&common::CARTPOLE_METRICS));
    verdict(
        "confusion metrics",
        bad.is_empty(),
        if bad.is_empty() {
            "all 20 rows reproduce at 3 decimals".to_string()
        } else {
            bad.join("; ")
        },
    )
}

fn cartpole_config() -> CartPoleDriftConfig {
    CartPoleDriftConfig {
        episodes_per_set: CARTPOLE_EPISODES,
        window: Some(CARTPOLE_WINDOW),
        ..Default::default()
    }
}

fn cartpole_control() -> Verdict {
    let cfg = cartpole_config();
    let p = CartPoleParams::default();
    let allowed = (MAX_FALSE_RATE * SEEDS as f64).floor() as usize;
    let mut detail = Vec::new();
    let mut pass = true;
    for kind in CARTPOLE_MEASURES {
        let flagged = (0..SEEDS)
            .filter(|&seed| {
                detect_drift_cartpole(&p, &p, kind, &cfg, ComparisonSeeds::shared_training(seed))
                    .expect("control comparison")
                    .comparison
                    .result
                    .drift
            })
            .count();
        pass &= flagged <= allowed;
        detail.push(format!("{kind} {flagged}/{SEEDS}"));
    }
    verdict(
        "cartpole control",
        pass,
        format!("false positives {} (allowed {allowed})", detail.join(", ")),
    )
}

fn cartpole_large_drift() -> Verdict {
    let cfg = cartpole_config();
    let base = CartPoleParams::default();
    let need = (MIN_HIT_RATE * SEEDS as f64).ceil() as usize;
    let mut detail = Vec::new();
    let mut pass = true;
    for (label, other) in [("gravity 19.6", base.with_gravity(19.6)), ("half-length 1.0", base.with_half_length(1.0))] {
        for kind in CARTPOLE_MEASURES {
            let hits = (0..SEEDS)
                .filter(|&seed| {
                    detect_drift_cartpole(&base, &other, kind, &cfg, ComparisonSeeds::derived(seed))
                        .expect("drift comparison")
                        .comparison
                        .result
                        .drift
                })
                .count();
            pass &= hits >= need;
            detail.push(format!("{label} {kind} {hits}/{SEEDS}"));
        }
    }
    verdict("cartpole large drift", pass, format!("{} (need {need})", detail.join(", ")))
}

fn cartpole_encoding() -> Verdict {
    let d = Discretizer::default();
    let mut bad = 0;
    for t in 0..10_000usize {
        let bins = [t % 10, t / 10 % 10, t / 100 % 10, t / 1000];
        if u64::from(d.encode_bins(bins)) != common::mixed_radix(bins, 10) {
            bad += 1;
        }
    }
    verdict("cartpole encoding", bad == 0, format!("{bad} of 10000 bin tuples differ from the mixed-radix code"))
}

fn determinism() -> Verdict {
    let cfg = ExperimentConfig::default();
    let csv_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| report_csv(&run_maze_drift(&cfg, PolicyKind::Deterministic).unwrap().report).unwrap())
    };
    let one = csv_with(1);
    let four = csv_with(4);
    let again = csv_with(4);
    verdict(
        "determinism",
        one == four && four == again,
        format!("report.csv {} bytes; 1 vs 4 threads {}, repeat {}", one.len(), one == four, four == again),
    )
}

fn performance() -> Verdict {
    let started = Instant::now();
    run_maze_drift(&ExperimentConfig::default(), PolicyKind::Deterministic).expect("full maze run");
    let secs = started.elapsed().as_secs_f64();
    verdict(
        "performance",
        secs < 60.0,
        format!(
            "5 noise levels x 1000 episodes x 10 measures in {secs:.1}s on {} thread(s)",
            rayon::current_num_threads()
        ),
    )
}

fn main() -> ExitCode {
    let mut verdicts = vec![value_function(), measure_oracle()];
    let runs = maze_runs();
    verdicts.push(baseline_statistics(&runs));
    verdicts.push(drift_power(&runs));
    verdicts.push(no_drift_robustness());
    verdicts.push(welch_correctness());
    verdicts.push(confusion_metrics());
    verdicts.push(cartpole_control());
    verdicts.push(cartpole_large_drift());
    verdicts.push(cartpole_encoding());
    verdicts.push(determinism());
    verdicts.push(performance());
    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.pass).map(|v| v.name).collect();
    println!(
        "acceptance: {}/{} criteria pass",
        verdicts.len() - failed.len(),
        verdicts.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
