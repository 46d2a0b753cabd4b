use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trajdrift::episodes::read_samples_csv;
use trajdrift::gridmdp::{format_policy_table, format_value_table};
use trajdrift::harness::{
    emit_report, labelled_rows, maze_setup, parse_measures, run_cartpole_suite, run_cartpole_sweep,
    run_maze_drift, run_maze_nodrift, run_maze_suite, score_scenarios, ExperimentConfig,
    HarnessError, MeasureScore, PolicyKind, RunOutput,
};
use trajdrift::seqmeasure::{compute_measure, Token};
use trajdrift::stats::welch_t_test;

#[derive(Parser)]
#[command(name = "trajdrift", version, about = "Detect model drift by comparing state trajectories")]
struct Cli {
    /// Flat `key = value` config applied before command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    episodes: Option<String>,
    #[arg(long)]
    noise_max: Option<String>,
    #[arg(long)]
    noise_step: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Comma-separated measure names, or `all`.
    #[arg(long)]
    measures: Option<String>,
    /// Truncate both compared suffixes to this many tokens.
    #[arg(long)]
    window: Option<String>,
    /// Softmax temperature of the stochastic maze policy.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// csv, markdown or both.
    #[arg(long)]
    format: Option<String>,
    /// Skip writing episodes/ and samples/.
    #[arg(long)]
    no_artifacts: bool,
}

impl Common {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("episodes", &self.episodes),
            ("noise-max", &self.noise_max),
            ("noise-step", &self.noise_step),
            ("seed", &self.seed),
            ("alpha", &self.alpha),
            ("measures", &self.measures),
            ("window", &self.window),
            ("tau", &self.tau),
            ("out", &self.out),
            ("format", &self.format),
        ]
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the maze and print values, policy and optimal path.
    SolveMaze,
    /// Drift suite with the greedy policy.
    MazeDrift {
        #[command(flatten)]
        common: Common,
        /// Also run the stochastic policy and no-drift replicates, then score.
        #[arg(long)]
        suite: bool,
        #[arg(long)]
        nodrift_runs: Option<String>,
    },
    /// Two independent drift-free episode sets per replicate.
    MazeNodrift {
        #[command(flatten)]
        common: Common,
        /// deterministic or stochastic.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        nodrift_runs: Option<String>,
    },
    /// Drift suite with the softmax policy.
    MazeStochastic {
        #[command(flatten)]
        common: Common,
    },
    /// Consecutive-pair drift tests along a cart-pole parameter sweep.
    CartpoleSweep {
        #[command(flatten)]
        common: Common,
        /// gravity or pole_length.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        end: Option<String>,
        #[arg(long)]
        step: Option<String>,
        #[arg(long)]
        cartpole_episodes: Option<String>,
        #[arg(long)]
        training_budget: Option<String>,
        /// Run both sweeps with drift-free controls and score them.
        #[arg(long)]
        suite: bool,
    },
    /// Compute measures between two token files.
    Measure {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "all")]
        measures: String,
    },
    /// Welch's t-test between two sample files.
    Ttest {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

fn build_config(
    file: Option<&Path>,
    preset: &[(&str, &str)],
    common: &Common,
    extra: &[(&str, &Option<String>)],
) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in preset {
        cfg.set(k, v)?;
    }
    if let Some(path) = file {
        cfg.apply_file(path)?;
    }
    for (k, v) in common.pairs().into_iter().chain(extra.iter().copied()) {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    if common.no_artifacts {
        cfg.artifacts = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(run: &RunOutput, scores: Option<&[MeasureScore]>, cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let written = emit_report(run, scores, cfg)?;
    if let Ok(md) = trajdrift::harness::report_markdown(&run.report, scores) {
        print!("{md}");
    }
    eprintln!("wrote {} files under {}", written.len(), cfg.out.display());
    Ok(())
}

fn read_tokens(path: &Path) -> Result<Vec<Token>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| HarnessError::Config(format!("{}: {s:?} is not a token", path.display())))
        })
        .collect()
}

fn read_samples(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let f = fs::File::open(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_samples_csv(f).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::SolveMaze => {
            let setup = maze_setup(PolicyKind::Deterministic, 1.0)?;
            println!("values");
            print!("{}", format_value_table(&setup.grid, &setup.value));
            println!("policy");
            print!("{}", format_policy_table(&setup.grid, &setup.greedy));
            let path: Vec<String> = setup.reference.iter().map(|t| t.to_string()).collect();
            println!("path {}", path.join(" "));
        }
        Command::MazeDrift {
            common,
            suite,
            nodrift_runs,
        } => {
            let cfg = build_config(file, &[], &common, &[("nodrift-runs", &nodrift_runs)])?;
            if suite || cfg.suite {
                let run = run_maze_suite(&cfg)?;
                let scores = score_scenarios(&labelled_rows(&run.report))?;
                finish(&run, Some(&scores), &cfg)?;
            } else {
                finish(&run_maze_drift(&cfg, PolicyKind::Deterministic)?, None, &cfg)?;
            }
        }
        Command::MazeStochastic { common } => {
            let cfg = build_config(file, &[("policy", "stochastic")], &common, &[])?;
            finish(&run_maze_drift(&cfg, PolicyKind::Stochastic)?, None, &cfg)?;
        }
        Command::MazeNodrift {
            common,
            policy,
            nodrift_runs,
        } => {
            let cfg = build_config(
                file,
                &[("nodrift-runs", "1")],
                &common,
                &[("policy", &policy), ("nodrift-runs", &nodrift_runs)],
            )?;
            let mut all = RunOutput::default();
            all.report.title = format!("maze no drift, {} policy", cfg.policy.label());
            for r in 0..cfg.nodrift_runs.max(1) as u64 {
                let one = run_maze_nodrift(&cfg, cfg.policy, r)?;
                all.report.rows.extend(one.report.rows);
                all.episodes.extend(one.episodes);
                all.samples.extend(one.samples);
            }
            finish(&all, None, &cfg)?;
        }
        Command::CartpoleSweep {
            common,
            sweep,
            start,
            end,
            step,
            cartpole_episodes,
            training_budget,
            suite,
        } => {
            let cfg = build_config(
                file,
                &[],
                &common,
                &[
                    ("sweep", &sweep),
                    ("sweep-start", &start),
                    ("sweep-end", &end),
                    ("sweep-step", &step),
                    ("cartpole-episodes", &cartpole_episodes),
                    ("training-budget", &training_budget),
                ],
            )?;
            if suite || cfg.suite {
                let run = run_cartpole_suite(&cfg)?;
                let scores = score_scenarios(&labelled_rows(&run.report))?;
                finish(&run, Some(&scores), &cfg)?;
            } else {
                cfg.validate_sweep()?;
                let run = run_cartpole_sweep(&cfg, cfg.sweep, cfg.sweep_start, cfg.sweep_end, cfg.sweep_step, false)?;
                if run.report.rows.is_empty() {
                    println!("sweep has a single point; no comparisons");
                    return Ok(());
                }
                finish(&run, None, &cfg)?;
            }
        }
        Command::Measure { a, b, measures } => {
            let kinds = parse_measures(&measures)?;
            let (ta, tb) = (read_tokens(&a)?, read_tokens(&b)?);
            println!("measure,value");
            for kind in kinds {
                let v = compute_measure(kind, &ta, &tb)?;
                println!("{},{}", kind.name(), v.value);
            }
        }
        Command::Ttest { a, b, alpha } => {
            let r = welch_t_test(&read_samples(&a)?, &read_samples(&b)?, alpha)?;
            println!("t,df,p,drift");
            println!("{},{},{},{}", r.t, r.df, r.p, r.drift);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
