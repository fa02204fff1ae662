use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use mbrl_dialogue::belief::{BeliefState, LearnerConfig};
use mbrl_dialogue::dirichlet::{fit_weighted, FitOptions};
use mbrl_dialogue::harness::{aggregate_path, run_experiment, write_aggregate_csv, write_detail_csv, write_traces, ExperimentConfig};
use mbrl_dialogue::planner::{PlanConfig, Planner};
use mbrl_dialogue::transition::{ModelType, TransitionModel};
use mbrl_dialogue::{load_domain, Error, Result};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "mbrl-dialogue", version, about = "Bayesian model-based RL for POMDP dialogue")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Multinomial,
    Rules,
}

impl From<ModelArg> for ModelType {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Multinomial => ModelType::Multinomial,
            ModelArg::Rules => ModelType::Rules,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run learning episodes against the simulator and write CSV results.
    Run {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, default_value_t = 2)]
        horizon: usize,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long = "topk-obs", default_value_t = 3)]
        topk_obs: usize,
        #[arg(long = "theta-samples", default_value_t = 1000)]
        theta_samples: usize,
        #[arg(long = "planner-noise", default_value_t = 0.1)]
        planner_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Detail CSV; the aggregate goes next to it with an `_aggregate` suffix.
        #[arg(long)]
        out: PathBuf,
        /// Write per-turn trace CSVs into this directory.
        #[arg(long = "dump-traces")]
        dump_traces: Option<PathBuf>,
        /// Fill the wall_ms column (makes output machine dependent).
        #[arg(long = "record-wall-time")]
        record_wall_time: bool,
        /// Plan with the simulator's true dynamics and no learning.
        #[arg(long = "oracle-model")]
        oracle_model: bool,
        /// Worker threads (default: available cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print Q values for one belief and the selected action.
    Plan {
        #[arg(long)]
        domain: PathBuf,
        /// JSON belief: {"intention": {label: prob}, "context": {var: value}}.
        #[arg(long)]
        belief: PathBuf,
        #[arg(long, default_value_t = 2)]
        horizon: usize,
        #[arg(long, value_enum, default_value = "multinomial")]
        model: ModelArg,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long = "topk-obs", default_value_t = 3)]
        topk_obs: usize,
        #[arg(long = "deadline-ms")]
        deadline_ms: Option<u64>,
    },
    /// Fit a Dirichlet to rows of probabilities in a CSV file.
    FitDirichlet {
        #[arg(long)]
        samples: PathBuf,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BeliefFile {
    intention: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    context: std::collections::BTreeMap<String, String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            domain,
            model,
            runs,
            episodes,
            horizon,
            gamma,
            topk_obs,
            theta_samples,
            planner_noise,
            seed,
            out,
            dump_traces,
            record_wall_time,
            oracle_model,
            threads,
        } => {
            let mut cfg = ExperimentConfig::new(load_domain(&domain)?, model.into());
            cfg.runs = runs;
            cfg.episodes = episodes;
            cfg.plan = PlanConfig {
                horizon,
                gamma,
                obs_top_k: topk_obs,
                planner_noise,
                ..PlanConfig::default()
            };
            cfg.learner = LearnerConfig {
                theta_samples,
                ..LearnerConfig::default()
            };
            cfg.seed = seed;
            cfg.oracle_model = oracle_model;
            cfg.record_wall_time = record_wall_time;
            cfg.traces_dir = dump_traces.clone();
            let result = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?
                    .install(|| run_experiment(&cfg))?,
                None => run_experiment(&cfg)?,
            };
            write_detail_csv(&out, &result.records)?;
            write_aggregate_csv(&aggregate_path(&out), &result.aggregate)?;
            if let Some(dir) = dump_traces {
                write_traces(&dir, &result.traces)?;
            }
            Ok(())
        }
        Command::Plan {
            domain,
            belief,
            horizon,
            model,
            gamma,
            topk_obs,
            deadline_ms,
        } => {
            let domain = load_domain(&domain)?;
            let vocab = domain.vocab();
            let text = std::fs::read_to_string(&belief).map_err(|e| Error::Io {
                path: belief.display().to_string(),
                source: e,
            })?;
            let file: BeliefFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            let pairs: Vec<(&str, &str)> = file.context.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            let context = vocab.context_index(&vocab.context_from_labels(&pairs)?);
            let mut probs = vec![0.0; vocab.n_intentions() * vocab.n_contexts()];
            let mut total = 0.0;
            for (label, p) in &file.intention {
                probs[context * vocab.n_intentions() + vocab.intention_index(label)?] = *p;
                total += p;
            }
            probs.iter_mut().for_each(|p| *p /= total);
            let b = BeliefState::from_probs(vocab, probs)?;
            let model = TransitionModel::from_domain(&domain, model.into())?;
            let cfg = PlanConfig {
                horizon,
                gamma,
                obs_top_k: topk_obs,
                deadline: deadline_ms.map(Duration::from_millis),
                ..PlanConfig::default()
            };
            cfg.validate()?;
            let result = Planner::new(&domain, model.tables(), &cfg).plan(&b);
            for (a, q) in result.q_values.iter().enumerate() {
                println!("{}\t{q:.6}", vocab.actions[a].label);
            }
            println!("selected\t{}", vocab.actions[result.action].label);
            if result.truncated {
                println!("truncated\tdepth {}", result.depth);
            }
            Ok(())
        }
        Command::FitDirichlet { samples } => {
            let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(&samples)?;
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for (k, record) in reader.records().enumerate() {
                let record = record?;
                let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(|f| f.trim().parse::<f64>()).collect();
                match parsed {
                    Ok(row) => rows.push(row),
                    Err(_) if k == 0 => continue,
                    Err(e) => {
                        return Err(Error::Parse {
                            line: k + 1,
                            column: 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let fit = fit_weighted(&refs, None, &FitOptions::default())?;
            let alphas: Vec<String> = fit.alphas.iter().map(|a| format!("{a:.6}")).collect();
            println!("{}", alphas.join(","));
            Ok(())
        }
    }
}
