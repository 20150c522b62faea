//! Benchmark CLI. Every verb reads an optional `key=value` config file
//! first; flags repeat the same keys and win on conflict.

use clap::{Args, Parser, Subcommand};
use lookahead::harness::{
    apply_pairs, format_summary, gen_instances, parse_config_text, run_benchmark, show_trace,
    sweep_steps, sweep_tree_width, EnvSpec, HarnessError, RunConfig,
};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "lookahead",
    about = "Predictive rollout search over tool-grounded tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the batch verbs; each maps onto one config key.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// key=value config file applied before any flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// nav, tiling or geometry
    #[arg(long)]
    env: Option<String>,
    /// nav difficulty (corridor segments)
    #[arg(long)]
    level: Option<usize>,
    /// tiling piece count
    #[arg(long)]
    pieces: Option<usize>,
    /// geometry problem file (defaults to the bundled set)
    #[arg(long)]
    problem: Option<PathBuf>,
    /// oracle, noisy:<eps>, random, replay:<path> or llm
    #[arg(long)]
    agent: Option<String>,
    /// ground_truth, first or llm
    #[arg(long)]
    voter: Option<String>,
    /// linear or rollout
    #[arg(long)]
    search: Option<String>,
    /// candidates per expansion
    #[arg(long)]
    k: Option<usize>,
    /// step budget per episode
    #[arg(long)]
    tau: Option<u32>,
    #[arg(long)]
    expansion_temperature: Option<f64>,
    #[arg(long)]
    rollout_temperature: Option<f64>,
    #[arg(long)]
    vote_temperature: Option<f64>,
    #[arg(long)]
    vote_samples: Option<u32>,
    /// sibling rollouts in flight at once
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// trace output file (one JSON record per episode)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    /// environment variable holding the API key
    #[arg(long)]
    llm_key_env: Option<String>,
    /// prompt template directory
    #[arg(long)]
    templates_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig, HarnessError> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.insert(key.to_string(), v);
            }
        };
        set("env", self.env.clone());
        set("level", self.level.map(|v| v.to_string()));
        set("pieces", self.pieces.map(|v| v.to_string()));
        set("problem", self.problem.as_ref().map(|p| p.display().to_string()));
        set("agent", self.agent.clone());
        set("voter", self.voter.clone());
        set("search", self.search.clone());
        set("k", self.k.map(|v| v.to_string()));
        set("tau", self.tau.map(|v| v.to_string()));
        set(
            "expansion_temperature",
            self.expansion_temperature.map(|v| v.to_string()),
        );
        set(
            "rollout_temperature",
            self.rollout_temperature.map(|v| v.to_string()),
        );
        set(
            "vote_temperature",
            self.vote_temperature.map(|v| v.to_string()),
        );
        set("vote_samples", self.vote_samples.map(|v| v.to_string()));
        set("concurrency", self.concurrency.map(|v| v.to_string()));
        set("episodes", self.episodes.map(|v| v.to_string()));
        set("seed", self.seed.map(|v| v.to_string()));
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        set("llm_url", self.llm_url.clone());
        set("llm_model", self.llm_model.clone());
        set("llm_key_env", self.llm_key_env.clone());
        set(
            "templates_dir",
            self.templates_dir.as_ref().map(|p| p.display().to_string()),
        );

        // The env key must land before level/pieces/problem, so resolve it
        // from flags, then the file, before anything else.
        let file_pairs = match &self.config {
            Some(path) => parse_config_text(&std::fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        let env_name = pairs
            .get("env")
            .or_else(|| file_pairs.get("env"))
            .ok_or_else(|| {
                HarnessError::Config("no environment selected; pass --env or env= in the config".into())
            })?;
        let env = match env_name.as_str() {
            "nav" => EnvSpec::Nav { level: 1 },
            "tiling" => EnvSpec::Tiling { pieces: 2 },
            "geometry" => EnvSpec::Geometry { problem: None },
            other => {
                return Err(HarnessError::Config(format!(
                    "env={other}: expected nav, tiling or geometry"
                )))
            }
        };
        let mut cfg = RunConfig::new(env);
        let mut file_pairs = file_pairs;
        file_pairs.remove("env");
        pairs.remove("env");
        apply_pairs(&mut cfg, &file_pairs)?;
        apply_pairs(&mut cfg, &pairs)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark batch and print the summary
    Run(ConfigArgs),
    /// Rerun the batch across step budgets; emit CSV
    SweepSteps {
        #[command(flatten)]
        config: ConfigArgs,
        /// comma-separated step budgets, e.g. 5,10,20
        #[arg(long, value_delimiter = ',')]
        taus: Vec<u32>,
        /// CSV output file (stdout when omitted)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rerun the batch across tree widths; emit CSV
    SweepWidth {
        #[command(flatten)]
        config: ConfigArgs,
        /// comma-separated tree widths, e.g. 1,3,5
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Pretty-print one episode from a saved trace file
    ShowTrace {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        episode: usize,
    },
    /// Emit generated instances as text files
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn emit(csv: String, path: Option<PathBuf>) -> Result<(), HarnessError> {
    match path {
        Some(path) => std::fs::write(path, csv).map_err(HarnessError::Io),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run() -> Result<(), HarnessError> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.build()?;
            let summary = run_benchmark(&cfg)?;
            print!("{}", format_summary(&summary));
            Ok(())
        }
        Command::SweepSteps { config, taus, csv } => {
            let cfg = config.build()?;
            emit(sweep_steps(&cfg, &taus)?, csv)
        }
        Command::SweepWidth { config, ks, csv } => {
            let cfg = config.build()?;
            emit(sweep_tree_width(&cfg, &ks)?, csv)
        }
        Command::ShowTrace { path, episode } => {
            print!("{}", show_trace(&path, episode)?);
            Ok(())
        }
        Command::Gen {
            config,
            count,
            out_dir,
        } => {
            let cfg = config.build()?;
            let written = gen_instances(&cfg.env, count, cfg.seed, &out_dir)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
