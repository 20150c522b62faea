//! Benchmark harness: episode batches, metrics, sweeps, trace files.
//!
//! Each episode derives its own seed from the batch seed and the episode
//! index, and that seed drives both instance generation and the engine.
//! Two batches sharing a seed therefore face identical instances episode
//! for episode, which turns sweeps into paired comparisons.
//!
//! Episodes run sequentially in index order; an episode that fails to set
//! up is recorded as a failed episode and the batch continues.

use crate::agents::{
    AgentBackend, FirstVoter, GroundTruthVoter, NavOracle, NoisyNavOracle, RandomNav,
    ReplayAgent, ScriptedGeometry, TilingOracle, VoterBackend,
};
use crate::env::geometry::{builtin_problems, parse_problem_file, GeometryEnv, GeometryProblem};
use crate::env::nav::{generate_map, write_map_file, NavEnv};
use crate::env::tiling::{generate_instance, write_instance_file, TilingEnv};
use crate::env::Environment;
use crate::search::{run_linear, run_search, SearchConfig};
use crate::seed;
use crate::trace::{
    read_trace_file, Action, NodeId, Outcome, SearchTree, SnapshotHandle, Thought, TraceRecord,
};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

const EPISODE_TAG: u64 = 0x6570_6973; // "epis"

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace error: {0}")]
    Trace(#[from] crate::trace::ParseError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Nav { level: usize },
    Tiling { pieces: usize },
    Geometry { problem: Option<PathBuf> },
}

impl EnvSpec {
    fn label(&self) -> &'static str {
        match self {
            EnvSpec::Nav { .. } => "nav",
            EnvSpec::Tiling { .. } => "tiling",
            EnvSpec::Geometry { .. } => "geometry",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    /// The env-appropriate deterministic solver.
    Oracle,
    /// Nav oracle with move corruption probability.
    Noisy(f64),
    /// Uniform random nav moves.
    Random,
    /// Replays chosen chains from a saved trace file.
    Replay(PathBuf),
    /// Chat-completions backend (needs the `llm` feature).
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoterSpec {
    GroundTruth,
    First,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Linear,
    Rollout,
}

/// Endpoint settings used only when the agent or voter is `llm`.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmSettings {
    pub url: String,
    pub model: String,
    pub key_env_var: String,
    pub templates_dir: Option<PathBuf>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            url: String::new(),
            model: "local-model".into(),
            key_env_var: "LOOKAHEAD_API_KEY".into(),
            templates_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub agent: AgentSpec,
    pub voter: VoterSpec,
    pub mode: SearchMode,
    pub search: SearchConfig,
    pub episodes: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub llm: LlmSettings,
}

impl RunConfig {
    pub fn new(env: EnvSpec) -> Self {
        RunConfig {
            env,
            agent: AgentSpec::Oracle,
            voter: VoterSpec::GroundTruth,
            mode: SearchMode::Rollout,
            search: SearchConfig::default(),
            episodes: 10,
            seed: 0,
            output: None,
            llm: LlmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeVerdict {
    pub index: usize,
    pub task_id: String,
    pub outcome: Outcome,
    pub success: bool,
    pub steps: usize,
    pub wall_time: f64,
}

/// Batch metrics. Success counts are exact integers; the rate is computed
/// once at the end, never accumulated.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub successes: usize,
    pub verdicts: Vec<EpisodeVerdict>,
    pub mean_steps: f64,
    pub mean_wall_time: f64,
    pub total_agent_calls: u64,
}

impl MetricsSummary {
    pub fn pass_at_1(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }

    fn from_verdicts(verdicts: Vec<EpisodeVerdict>, total_agent_calls: u64) -> Self {
        let episodes = verdicts.len();
        let successes = verdicts.iter().filter(|v| v.success).count();
        let steps: usize = verdicts.iter().map(|v| v.steps).sum();
        let wall: f64 = verdicts.iter().map(|v| v.wall_time).sum();
        MetricsSummary {
            episodes,
            successes,
            verdicts,
            mean_steps: steps as f64 / episodes as f64,
            mean_wall_time: wall / episodes as f64,
            total_agent_calls,
        }
    }
}

/// Plain-text summary table for the CLI.
pub fn format_summary(summary: &MetricsSummary) -> String {
    let mut out = String::new();
    out.push_str("episode  task                         steps  verdict           ok\n");
    for v in &summary.verdicts {
        out.push_str(&format!(
            "{:<8} {:<28} {:<6} {:<17} {}\n",
            v.index,
            v.task_id,
            v.steps,
            v.outcome.kind.as_str(),
            if v.success { "yes" } else { "no" }
        ));
    }
    out.push_str(&format!(
        "pass@1 {}/{} = {:.4}  mean steps {:.2}  mean wall {:.4}s  agent calls {}\n",
        summary.successes,
        summary.episodes,
        summary.pass_at_1(),
        summary.mean_steps,
        summary.mean_wall_time,
        summary.total_agent_calls
    ));
    out
}

pub fn episode_seed(batch_seed: u64, index: usize) -> u64 {
    seed::mix(batch_seed, &[EPISODE_TAG, index as u64])
}

fn validate(cfg: &RunConfig) -> Result<(), HarnessError> {
    let bad = |msg: String| Err(HarnessError::Config(msg));
    if cfg.episodes == 0 {
        return bad("episodes must be at least 1".into());
    }
    if cfg.search.tree_width == 0 || cfg.search.budget == 0 {
        return bad("tree width and step budget must be at least 1".into());
    }
    if cfg.search.vote_samples == 0 || cfg.search.concurrency_width == 0 {
        return bad("vote samples and concurrency width must be at least 1".into());
    }
    if cfg.search.expansion_temperature < 0.0
        || cfg.search.rollout_temperature < 0.0
        || cfg.search.vote_temperature < 0.0
    {
        return bad("temperatures must be non-negative".into());
    }
    match (&cfg.agent, &cfg.env) {
        (AgentSpec::Noisy(eps), EnvSpec::Nav { .. }) => {
            if !(0.0..=1.0).contains(eps) {
                return bad(format!("noise level {eps} is outside [0, 1]"));
            }
        }
        (AgentSpec::Noisy(_), other) => {
            return bad(format!("the noisy agent only drives nav, not {}", other.label()));
        }
        (AgentSpec::Random, EnvSpec::Nav { .. }) => {}
        (AgentSpec::Random, other) => {
            return bad(format!("the random agent only drives nav, not {}", other.label()));
        }
        (AgentSpec::Replay(path), _) => {
            if !path.is_file() {
                return Err(HarnessError::NotFound(format!(
                    "replay trace {}",
                    path.display()
                )));
            }
        }
        _ => {}
    }
    match &cfg.env {
        EnvSpec::Nav { level } => {
            generate_map(*level, episode_seed(cfg.seed, 0), None)
                .map_err(|e| HarnessError::Config(format!("nav level {level}: {e}")))?;
        }
        EnvSpec::Tiling { pieces } => {
            generate_instance(*pieces, episode_seed(cfg.seed, 0))
                .map_err(|e| HarnessError::Config(format!("tiling k={pieces}: {e}")))?;
        }
        EnvSpec::Geometry { problem } => {
            if let Some(path) = problem {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    HarnessError::NotFound(format!("problem file {}: {e}", path.display()))
                })?;
                parse_problem_file(&text)
                    .map_err(|e| HarnessError::Config(format!("problem file: {e}")))?;
            }
        }
    }
    let needs_llm =
        matches!(cfg.agent, AgentSpec::Llm) || matches!(cfg.voter, VoterSpec::Llm);
    if needs_llm {
        #[cfg(not(feature = "llm"))]
        return bad("built without the llm feature; llm agent and voter are unavailable".into());
        #[cfg(feature = "llm")]
        {
            build_endpoint(&cfg.llm)?;
            load_templates(cfg)?;
        }
    }
    Ok(())
}

#[cfg(feature = "llm")]
fn build_endpoint(settings: &LlmSettings) -> Result<crate::llm::EndpointConfig, HarnessError> {
    if settings.url.is_empty() {
        return Err(HarnessError::Config(
            "llm backend selected but no endpoint url configured".into(),
        ));
    }
    let endpoint = crate::llm::EndpointConfig {
        base_url: settings.url.clone(),
        model_name: settings.model.clone(),
        api_key_env_var: settings.key_env_var.clone(),
        ..crate::llm::EndpointConfig::default()
    };
    crate::llm::LlmClient::new(endpoint.clone())
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(endpoint)
}

#[cfg(feature = "llm")]
fn load_templates(cfg: &RunConfig) -> Result<crate::llm::TemplateSet, HarnessError> {
    let kind = match &cfg.env {
        EnvSpec::Nav { .. } => crate::env::EnvKind::Nav,
        EnvSpec::Tiling { .. } => crate::env::EnvKind::Tiling,
        EnvSpec::Geometry { .. } => crate::env::EnvKind::Geometry,
    };
    match &cfg.llm.templates_dir {
        Some(dir) => crate::llm::TemplateSet::from_dir(dir, Some(kind))
            .map_err(HarnessError::Io),
        None => Ok(crate::llm::TemplateSet::embedded()),
    }
}

/// Resources loaded once per batch.
struct Prepared {
    problems: Vec<GeometryProblem>,
    replay: Option<Vec<TraceRecord>>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, HarnessError> {
    let problems = match &cfg.env {
        EnvSpec::Geometry { problem: Some(path) } => {
            let text = std::fs::read_to_string(path)?;
            vec![parse_problem_file(&text)
                .map_err(|e| HarnessError::Config(e.to_string()))?]
        }
        EnvSpec::Geometry { problem: None } => builtin_problems(),
        _ => Vec::new(),
    };
    let replay = match &cfg.agent {
        AgentSpec::Replay(path) => {
            let records = read_trace_file(path)?;
            if records.is_empty() {
                return Err(HarnessError::Config("replay trace file is empty".into()));
            }
            Some(records)
        }
        _ => None,
    };
    Ok(Prepared { problems, replay })
}

fn replay_agent(prepared: &Prepared, index: usize) -> ReplayAgent {
    let records = prepared.replay.as_ref().expect("validated replay config");
    let record = &records[index % records.len()];
    let steps: Vec<(Thought, Action)> = record
        .chosen_chain()
        .steps
        .iter()
        .map(|s| (s.thought.clone(), s.action.clone()))
        .collect();
    ReplayAgent::new(steps)
}

fn voter_box(cfg: &RunConfig) -> Result<Box<dyn VoterBackend>, HarnessError> {
    match cfg.voter {
        VoterSpec::GroundTruth => Ok(Box::new(GroundTruthVoter)),
        VoterSpec::First => Ok(Box::new(FirstVoter)),
        VoterSpec::Llm => {
            #[cfg(feature = "llm")]
            {
                let endpoint = build_endpoint(&cfg.llm)?;
                let templates = load_templates(cfg)?;
                return Ok(Box::new(
                    crate::llm::LlmVoter::new(endpoint, templates)
                        .map_err(|e| HarnessError::Config(e.to_string()))?,
                ));
            }
            #[cfg(not(feature = "llm"))]
            Err(HarnessError::Config("llm voter needs the llm feature".into()))
        }
    }
}

#[cfg(feature = "llm")]
fn llm_agent_box(cfg: &RunConfig) -> Result<Box<dyn AgentBackend>, HarnessError> {
    let endpoint = build_endpoint(&cfg.llm)?;
    let templates = load_templates(cfg)?;
    Ok(Box::new(
        crate::llm::LlmAgent::new(endpoint, templates)
            .map_err(|e| HarnessError::Config(e.to_string()))?,
    ))
}

#[cfg(not(feature = "llm"))]
fn llm_agent_box(_cfg: &RunConfig) -> Result<Box<dyn AgentBackend>, HarnessError> {
    Err(HarnessError::Config("llm agent needs the llm feature".into()))
}

fn drive<E: Environment>(
    env: &E,
    agent: &dyn AgentBackend,
    cfg: &RunConfig,
    sc: &SearchConfig,
) -> Result<(TraceRecord, bool), HarnessError> {
    let record = match cfg.mode {
        SearchMode::Linear => run_linear(env, agent, sc),
        SearchMode::Rollout => {
            let voter = voter_box(cfg)?;
            run_search(env, agent, voter.as_ref(), sc)
        }
    };
    let success = env.outcome_success(&record.verdict);
    Ok((record, success))
}

/// A placeholder record for an episode whose setup failed; keeps the batch
/// going and the trace file line-aligned with episode indices.
fn failed_record(cfg: &RunConfig, index: usize, seed: u64, message: String) -> TraceRecord {
    TraceRecord {
        task_id: format!("{}-episode-{index}-setup-failed", cfg.env.label()),
        config_digest: "setup-failure".into(),
        seed,
        budget: cfg.search.budget,
        tree: SearchTree::with_root(SnapshotHandle(0)),
        chosen_path: vec![NodeId(0)],
        verdict: Outcome::tool_error("episode_setup_failed"),
        events: vec![message],
        agent_calls: 0,
        wall_time: 0.0,
    }
}

fn run_episode(
    cfg: &RunConfig,
    prepared: &Prepared,
    index: usize,
) -> Result<(TraceRecord, bool), HarnessError> {
    let ep_seed = episode_seed(cfg.seed, index);
    let mut sc = cfg.search.clone();
    sc.seed = ep_seed;
    match &cfg.env {
        EnvSpec::Nav { level } => {
            let map = match generate_map(*level, ep_seed, None) {
                Ok(map) => map,
                Err(e) => {
                    return Ok((failed_record(cfg, index, ep_seed, e.to_string()), false))
                }
            };
            let env = NavEnv::new(map.clone());
            let agent: Box<dyn AgentBackend> = match &cfg.agent {
                AgentSpec::Oracle => Box::new(NavOracle::new(map)),
                AgentSpec::Noisy(eps) => Box::new(NoisyNavOracle::new(map, *eps)),
                AgentSpec::Random => Box::new(RandomNav),
                AgentSpec::Replay(_) => Box::new(replay_agent(prepared, index)),
                AgentSpec::Llm => llm_agent_box(cfg)?,
            };
            drive(&env, agent.as_ref(), cfg, &sc)
        }
        EnvSpec::Tiling { pieces } => {
            let instance = match generate_instance(*pieces, ep_seed) {
                Ok(instance) => instance,
                Err(e) => {
                    return Ok((failed_record(cfg, index, ep_seed, e.to_string()), false))
                }
            };
            let env = TilingEnv::new(instance.clone());
            let agent: Box<dyn AgentBackend> = match &cfg.agent {
                AgentSpec::Oracle => Box::new(TilingOracle::new(instance)),
                AgentSpec::Replay(_) => Box::new(replay_agent(prepared, index)),
                AgentSpec::Llm => llm_agent_box(cfg)?,
                other => {
                    return Err(HarnessError::Config(format!(
                        "agent {other:?} cannot drive tiling"
                    )))
                }
            };
            drive(&env, agent.as_ref(), cfg, &sc)
        }
        EnvSpec::Geometry { .. } => {
            let problem = prepared.problems[index % prepared.problems.len()].clone();
            let env = GeometryEnv::new(problem.clone());
            let agent: Box<dyn AgentBackend> = match &cfg.agent {
                AgentSpec::Oracle => Box::new(ScriptedGeometry::new(problem.script.clone())),
                AgentSpec::Replay(_) => Box::new(replay_agent(prepared, index)),
                AgentSpec::Llm => llm_agent_box(cfg)?,
                other => {
                    return Err(HarnessError::Config(format!(
                        "agent {other:?} cannot drive geometry"
                    )))
                }
            };
            drive(&env, agent.as_ref(), cfg, &sc)
        }
    }
}

/// Runs the batch, writes one trace line per episode when an output path is
/// configured, and returns the metrics.
pub fn run_benchmark(cfg: &RunConfig) -> Result<MetricsSummary, HarnessError> {
    validate(cfg)?;
    let prepared = prepare(cfg)?;
    let mut verdicts = Vec::with_capacity(cfg.episodes);
    let mut total_agent_calls = 0u64;
    let mut lines = Vec::with_capacity(cfg.episodes);
    for index in 0..cfg.episodes {
        let (record, success) = run_episode(cfg, &prepared, index)?;
        total_agent_calls += record.agent_calls;
        verdicts.push(EpisodeVerdict {
            index,
            task_id: record.task_id.clone(),
            outcome: record.verdict.clone(),
            success,
            steps: record.chosen_chain().len(),
            wall_time: record.wall_time,
        });
        if cfg.output.is_some() {
            lines.push(record.to_json_line());
        }
    }
    if let Some(path) = &cfg.output {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut file = std::fs::File::create(path)?;
        for line in &lines {
            writeln!(file, "{line}")?;
        }
    }
    Ok(MetricsSummary::from_verdicts(verdicts, total_agent_calls))
}

/// Reruns the batch once per step budget, pairing episode seeds across
/// rows. Returns CSV with header `tau,successes,episodes,success_rate`.
pub fn sweep_steps(cfg: &RunConfig, taus: &[u32]) -> Result<String, HarnessError> {
    if taus.is_empty() {
        return Err(HarnessError::Config("no step budgets to sweep".into()));
    }
    let mut csv = String::from("tau,successes,episodes,success_rate\n");
    for &tau in taus {
        let mut row_cfg = cfg.clone();
        row_cfg.search.budget = tau;
        // The CSV is the artifact; per-row trace files would overwrite
        // each other.
        row_cfg.output = None;
        let summary = run_benchmark(&row_cfg)?;
        csv.push_str(&format!(
            "{tau},{},{},{}\n",
            summary.successes,
            summary.episodes,
            summary.pass_at_1()
        ));
    }
    Ok(csv)
}

/// Reruns the batch once per tree width on paired seeds. Returns CSV with
/// header `k,successes,episodes,success_rate,agent_calls`.
pub fn sweep_tree_width(cfg: &RunConfig, ks: &[usize]) -> Result<String, HarnessError> {
    if ks.is_empty() {
        return Err(HarnessError::Config("no tree widths to sweep".into()));
    }
    let mut csv = String::from("k,successes,episodes,success_rate,agent_calls\n");
    for &k in ks {
        let mut row_cfg = cfg.clone();
        row_cfg.search.tree_width = k;
        row_cfg.mode = SearchMode::Rollout;
        row_cfg.output = None;
        let summary = run_benchmark(&row_cfg)?;
        csv.push_str(&format!(
            "{k},{},{},{},{}\n",
            summary.successes,
            summary.episodes,
            summary.pass_at_1(),
            summary.total_agent_calls
        ));
    }
    Ok(csv)
}

/// Pretty-prints one episode of a saved trace file.
pub fn show_trace(path: &Path, episode_index: usize) -> Result<String, HarnessError> {
    let records = read_trace_file(path)?;
    let record = records.get(episode_index).ok_or_else(|| {
        HarnessError::NotFound(format!(
            "episode {episode_index} in {} ({} episodes)",
            path.display(),
            records.len()
        ))
    })?;
    let mut out = String::new();
    out.push_str(&format!("task {}\n", record.task_id));
    out.push_str(&format!(
        "config {} seed {} tau {}\n",
        record.config_digest, record.seed, record.budget
    ));
    out.push_str(&format!(
        "verdict {} ({})\n",
        record.verdict.kind.as_str(),
        record.verdict.final_state_digest
    ));
    if let Some(value) = record.verdict.value {
        out.push_str(&format!("answer {value}\n"));
    }
    for (depth, node_id) in record.chosen_path.iter().skip(1).enumerate() {
        let node = record.tree.node(*node_id);
        let step = node.step.as_ref().expect("non-root nodes carry steps");
        out.push_str(&format!("step {} [{}]", depth + 1, node_id));
        if let Some(score) = node.vote_score {
            out.push_str(&format!(" (ballot {score})"));
        }
        out.push('\n');
        out.push_str(&format!("  thought: {}\n", step.thought.text));
        out.push_str(&format!("  action: {}\n", step.action.raw_text));
        out.push_str(&format!("  observation: {}\n", step.observation.text_feedback));
    }
    if !record.events.is_empty() {
        out.push_str("events:\n");
        for event in &record.events {
            out.push_str(&format!("  - {event}\n"));
        }
    }
    Ok(out)
}

/// Emits instance files for offline inspection: maps, tiling instances, or
/// the bundled geometry problems. Returns the written paths.
pub fn gen_instances(
    env: &EnvSpec,
    count: usize,
    batch_seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    match env {
        EnvSpec::Nav { level } => {
            for i in 0..count {
                let map_seed = episode_seed(batch_seed, i);
                let map = generate_map(*level, map_seed, None)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                let path = out_dir.join(format!("nav-level{level}-{i:03}.txt"));
                std::fs::write(&path, write_map_file(&map, map_seed))?;
                written.push(path);
            }
        }
        EnvSpec::Tiling { pieces } => {
            for i in 0..count {
                let instance = generate_instance(*pieces, episode_seed(batch_seed, i))
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                let path = out_dir.join(format!("tiling-k{pieces}-{i:03}.txt"));
                std::fs::write(&path, write_instance_file(&instance))?;
                written.push(path);
            }
        }
        EnvSpec::Geometry { .. } => {
            // The geometry corpus is the bundled problem set.
            for problem in builtin_problems() {
                let path = out_dir.join(format!("{}.txt", problem.id));
                std::fs::write(&path, crate::env::geometry::write_problem_file(&problem))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// `key=value` config text: one pair per line, `#` comments, later keys
/// win. Unknown keys are errors so typos surface.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut pairs = BTreeMap::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            HarnessError::Config(format!("line {}: expected key=value, got {line:?}", number + 1))
        })?;
        pairs.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(pairs)
}

/// Applies `key=value` pairs onto a config; CLI flags reuse this, applied
/// after the file so flags win.
pub fn apply_pairs(
    cfg: &mut RunConfig,
    pairs: &BTreeMap<String, String>,
) -> Result<(), HarnessError> {
    let bad = |key: &str, value: &str, hint: &str| {
        HarnessError::Config(format!("{key}={value}: {hint}"))
    };
    for (key, value) in pairs {
        match key.as_str() {
            "env" => {
                cfg.env = match value.as_str() {
                    "nav" => EnvSpec::Nav { level: 1 },
                    "tiling" => EnvSpec::Tiling { pieces: 2 },
                    "geometry" => EnvSpec::Geometry { problem: None },
                    _ => return Err(bad(key, value, "expected nav, tiling or geometry")),
                };
            }
            "level" => {
                let level = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected an integer"))?;
                match &mut cfg.env {
                    EnvSpec::Nav { level: l } => *l = level,
                    _ => return Err(bad(key, value, "level only applies to nav")),
                }
            }
            "pieces" => {
                let pieces = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected an integer"))?;
                match &mut cfg.env {
                    EnvSpec::Tiling { pieces: p } => *p = pieces,
                    _ => return Err(bad(key, value, "pieces only applies to tiling")),
                }
            }
            "problem" => match &mut cfg.env {
                EnvSpec::Geometry { problem } => *problem = Some(PathBuf::from(value)),
                _ => return Err(bad(key, value, "problem only applies to geometry")),
            },
            "agent" => {
                cfg.agent = if value == "oracle" {
                    AgentSpec::Oracle
                } else if value == "random" {
                    AgentSpec::Random
                } else if value == "llm" {
                    AgentSpec::Llm
                } else if let Some(eps) = value.strip_prefix("noisy:") {
                    AgentSpec::Noisy(
                        eps.parse()
                            .map_err(|_| bad(key, value, "expected noisy:<float>"))?,
                    )
                } else if let Some(path) = value.strip_prefix("replay:") {
                    AgentSpec::Replay(PathBuf::from(path))
                } else {
                    return Err(bad(
                        key,
                        value,
                        "expected oracle, noisy:<eps>, random, replay:<path> or llm",
                    ));
                };
            }
            "voter" => {
                cfg.voter = match value.as_str() {
                    "ground_truth" => VoterSpec::GroundTruth,
                    "first" => VoterSpec::First,
                    "llm" => VoterSpec::Llm,
                    _ => return Err(bad(key, value, "expected ground_truth, first or llm")),
                };
            }
            "search" => {
                cfg.mode = match value.as_str() {
                    "linear" => SearchMode::Linear,
                    "rollout" => SearchMode::Rollout,
                    _ => return Err(bad(key, value, "expected linear or rollout")),
                };
            }
            "k" => {
                cfg.search.tree_width = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected an integer"))?
            }
            "tau" => {
                cfg.search.budget = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected an integer"))?
            }
            "expansion_temperature" => {
                cfg.search.expansion_temperature = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected a float"))?
            }
            "rollout_temperature" => {
                cfg.search.rollout_temperature = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected a float"))?
            }
            "vote_temperature" => {
                cfg.search.vote_temperature = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected a float"))?
            }
            "vote_samples" => {
                cfg.search.vote_samples = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected an integer"))?
            }
            "concurrency" => {
                cfg.search.concurrency_width = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected an integer"))?
            }
            "episodes" => {
                cfg.episodes = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected an integer"))?
            }
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| bad(key, value, "expected an integer"))?
            }
            "out" => cfg.output = Some(PathBuf::from(value)),
            "llm_url" => cfg.llm.url = value.clone(),
            "llm_model" => cfg.llm.model = value.clone(),
            "llm_key_env" => cfg.llm.key_env_var = value.clone(),
            "templates_dir" => cfg.llm.templates_dir = Some(PathBuf::from(value)),
            _ => return Err(HarnessError::Config(format!("unknown config key {key:?}"))),
        }
    }
    Ok(())
}
