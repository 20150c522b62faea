//! Predictive rollout search over reasoning chains.
//!
//! At each committed depth the engine asks the agent for up to `tree_width`
//! candidate next steps (sampled at the expansion temperature), deduplicates
//! identical actions, applies each survivor to a cloned environment
//! snapshot, and plays every non-terminal candidate forward with a greedy
//! single-path rollout to the remaining step budget. A voter scores the
//! candidates by where their rollouts ended, and the argmax candidate is
//! committed; its expansion-time observation is reused, so the environment
//! never sees the committed action twice. Linear mode is the same loop with
//! one candidate and no voting, and `tree_width = 1` collapses search to it
//! exactly.
//!
//! Determinism: every agent call gets its own RNG stream derived from the
//! episode seed and the call's coordinates (expansion candidate `i` at depth
//! `t`, or rollout step `j` under that candidate). Streams never depend on
//! how much randomness other calls consumed, so sibling rollouts can run on
//! threads without changing a byte of the trace; results merge by candidate
//! index and only the orchestrator appends events.
//!
//! This is one-shot lookahead, not MCTS: no value backpropagation, no visit
//! counts, one expansion per depth.

use crate::agents::{
    AgentBackend, AgentConcurrency, CandidateView, ProposalContext, VoteContext, VoterBackend,
};
use crate::env::Environment;
use crate::seed;
use crate::trace::{
    Action, NodeId, Observation, Outcome, ReasoningChain, ReasoningStep, Rollout, SearchTree,
    SnapshotHandle, Thought, TraceRecord,
};
use sha2::{Digest, Sha256};
use std::time::Instant;

const EXPAND_TAG: u64 = 0x6578_7061; // "expa"
const ROLLOUT_TAG: u64 = 0x726f_6c6c; // "roll"

/// How far a candidate's rollout may run. Only one policy exists: up to the
/// steps left under the episode budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutBudgetPolicy {
    RemainingDepth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Candidates sampled per expansion (k).
    pub tree_width: usize,
    /// Maximum committed chain length (tau).
    pub budget: u32,
    pub rollout_budget_policy: RolloutBudgetPolicy,
    pub expansion_temperature: f64,
    /// Rollouts continue greedily at temperature zero unless raised here.
    pub rollout_temperature: f64,
    pub vote_temperature: f64,
    /// Ballots averaged per selection; one vote by default.
    pub vote_samples: u32,
    pub seed: u64,
    /// Upper bound on sibling rollouts in flight at once.
    pub concurrency_width: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tree_width: 3,
            budget: 10,
            rollout_budget_policy: RolloutBudgetPolicy::RemainingDepth,
            expansion_temperature: 0.8,
            rollout_temperature: 0.0,
            vote_temperature: 0.0,
            vote_samples: 1,
            seed: 0,
            concurrency_width: 1,
        }
    }
}

impl SearchConfig {
    fn assert_valid(&self) {
        assert!(self.tree_width >= 1, "tree_width must be at least 1");
        assert!(self.budget >= 1, "budget must be at least 1");
        assert!(self.vote_samples >= 1, "vote_samples must be at least 1");
        assert!(self.concurrency_width >= 1, "concurrency_width must be at least 1");
        assert!(
            self.expansion_temperature >= 0.0
                && self.rollout_temperature >= 0.0
                && self.vote_temperature >= 0.0,
            "temperatures must be non-negative"
        );
    }
}

/// One voter judgment on one candidate, as recorded on the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteBallot {
    pub candidate_id: NodeId,
    pub score: f64,
    pub rationale: Option<String>,
}

/// Index of the highest score; ties go to the lowest index. NaN never wins
/// against a comparable score.
pub fn select_argmax(scores: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, score) in scores.iter().enumerate().skip(1) {
        let current = scores[best];
        if !score.is_nan() && (current.is_nan() || *score > current) {
            best = i;
        }
    }
    best
}

/// Stable digest of everything that shapes engine behavior apart from the
/// seed, so traces carry a fingerprint of their configuration.
pub fn config_digest(config: &SearchConfig, agent_name: &str, voter_name: &str) -> String {
    let policy = match config.rollout_budget_policy {
        RolloutBudgetPolicy::RemainingDepth => "remaining_depth",
    };
    let text = format!(
        "width={} budget={} policy={policy} exp_temp={} roll_temp={} vote_temp={} \
         vote_samples={} concurrency={} agent={agent_name} voter={voter_name}",
        config.tree_width,
        config.budget,
        config.expansion_temperature,
        config.rollout_temperature,
        config.vote_temperature,
        config.vote_samples,
        config.concurrency_width,
    );
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// A candidate surviving expansion: the proposed step applied once, plus the
/// resulting state. `source_index` is the pre-dedup proposal slot, which
/// pins the candidate's rollout RNG streams.
struct Candidate<S> {
    source_index: usize,
    step: ReasoningStep,
    state: S,
}

struct RolloutResult {
    rollout: Rollout,
    ground_truth: f64,
    agent_calls: u64,
    events: Vec<String>,
}

fn rollout_candidate<E: Environment>(
    env: &E,
    agent: &dyn AgentBackend,
    config: &SearchConfig,
    task_description: &str,
    initial_observation: &Observation,
    committed: &[ReasoningStep],
    candidate: &Candidate<E::State>,
    depth: u32,
) -> RolloutResult {
    let horizon = match config.rollout_budget_policy {
        RolloutBudgetPolicy::RemainingDepth => config.budget.saturating_sub(depth + 1),
    };
    let mut suffix = ReasoningChain::new(horizon);
    let mut events = Vec::new();
    let mut agent_calls = 0u64;

    if candidate.step.observation.terminal {
        let outcome = candidate
            .step
            .observation
            .outcome
            .clone()
            .expect("terminal observations carry an outcome");
        let ground_truth = env.ground_truth_score(&candidate.state, &outcome);
        return RolloutResult {
            rollout: Rollout { suffix, outcome },
            ground_truth,
            agent_calls,
            events,
        };
    }

    let mut state = candidate.state.clone();
    let mut visible: Vec<ReasoningStep> = committed.to_vec();
    visible.push(candidate.step.clone());
    let mut outcome = None;
    for j in 0..horizon {
        let mut rng = seed::rng_from(
            config.seed,
            &[ROLLOUT_TAG, depth as u64, candidate.source_index as u64, j as u64],
        );
        let ctx = ProposalContext {
            task_description,
            initial_observation,
            steps: &visible,
            temperature: config.rollout_temperature,
        };
        agent_calls += 1;
        let (thought, action) = match agent.propose(&ctx, &mut rng) {
            Ok(pair) => pair,
            Err(e) => {
                events.push(format!(
                    "depth {depth}: rollout of candidate {} stopped by an agent error ({e})",
                    candidate.source_index
                ));
                outcome = Some(Outcome::tool_error("rollout_agent_error"));
                break;
            }
        };
        let (next, obs) = match env.apply(&state, &action) {
            Ok(pair) => pair,
            Err(e) => {
                events.push(format!(
                    "depth {depth}: rollout of candidate {} stopped by an environment error ({e})",
                    candidate.source_index
                ));
                outcome = Some(Outcome::tool_error("rollout_env_error"));
                break;
            }
        };
        state = next;
        let terminal = obs.terminal;
        let end = obs.outcome.clone();
        suffix = suffix
            .append(thought.clone(), action.clone(), obs.clone())
            .expect("rollout loop respects the horizon");
        visible.push(ReasoningStep {
            index: visible.len() as u32 + 1,
            thought,
            action,
            observation: obs,
        });
        if terminal {
            outcome = end;
            break;
        }
    }
    let outcome = outcome.unwrap_or_else(|| {
        Outcome::budget_exhausted(format!("depth={}", config.budget))
    });
    let ground_truth = env.ground_truth_score(&state, &outcome);
    RolloutResult {
        rollout: Rollout { suffix, outcome },
        ground_truth,
        agent_calls,
        events,
    }
}

/// Shared episode assembly for both modes.
struct Episode {
    tree: SearchTree,
    chain: ReasoningChain,
    chosen_path: Vec<NodeId>,
    events: Vec<String>,
    agent_calls: u64,
}

impl Episode {
    fn record(
        self,
        task_id: String,
        config: &SearchConfig,
        digest: String,
        verdict: Outcome,
        started: Instant,
    ) -> TraceRecord {
        TraceRecord {
            task_id,
            config_digest: digest,
            seed: config.seed,
            budget: config.budget,
            tree: self.tree,
            chosen_path: self.chosen_path,
            verdict,
            events: self.events,
            agent_calls: self.agent_calls,
            wall_time: started.elapsed().as_secs_f64(),
        }
    }
}

/// Single-path execution at temperature zero: the ablation baseline and the
/// semantics `tree_width = 1` search must reproduce byte for byte.
pub fn run_linear<E: Environment>(
    env: &E,
    agent: &dyn AgentBackend,
    config: &SearchConfig,
) -> TraceRecord {
    config.assert_valid();
    let started = Instant::now();
    let digest = config_digest(config, agent.name(), "none");
    let task_description = env.task_description();

    let mut state = env.initial_state();
    let initial_observation = env.observe_initial(&state);
    let mut episode = Episode {
        tree: SearchTree::with_root(SnapshotHandle(0)),
        chain: ReasoningChain::new(config.budget),
        chosen_path: vec![NodeId(0)],
        events: Vec::new(),
        agent_calls: 0,
    };
    let mut snapshots = 1u32;

    if initial_observation.terminal {
        let verdict = initial_observation
            .outcome
            .clone()
            .expect("terminal observations carry an outcome");
        return episode.record(env.task_id(), config, digest, verdict, started);
    }

    let mut verdict = None;
    for t in 0..config.budget {
        let mut rng = seed::rng_from(config.seed, &[EXPAND_TAG, t as u64, 0]);
        let ctx = ProposalContext {
            task_description: &task_description,
            initial_observation: &initial_observation,
            steps: &episode.chain.steps,
            temperature: 0.0,
        };
        episode.agent_calls += 1;
        let (thought, action) = match agent.propose(&ctx, &mut rng) {
            Ok(pair) => pair,
            Err(e) => {
                episode
                    .events
                    .push(format!("depth {t}: proposal failed ({e})"));
                verdict = Some(Outcome::tool_error("proposal_failed"));
                break;
            }
        };
        let (next, obs) = match env.apply(&state, &action) {
            Ok(pair) => pair,
            Err(e) => {
                episode
                    .events
                    .push(format!("depth {t}: action rejected ({e})"));
                verdict = Some(Outcome::tool_error("action_rejected"));
                break;
            }
        };
        state = next;
        let terminal = obs.terminal;
        let end = obs.outcome.clone();
        episode.chain = episode
            .chain
            .append(thought.clone(), action.clone(), obs.clone())
            .expect("loop bound matches the chain budget");
        let step = episode.chain.steps.last().cloned().unwrap();
        let parent = *episode.chosen_path.last().unwrap();
        let node = episode.tree.push_child(parent, step, SnapshotHandle(snapshots));
        snapshots += 1;
        episode.chosen_path.push(node);
        if terminal {
            verdict = end;
            break;
        }
    }
    let verdict =
        verdict.unwrap_or_else(|| Outcome::budget_exhausted(format!("depth={}", config.budget)));
    episode.record(env.task_id(), config, digest, verdict, started)
}

/// Full predictive rollout search.
pub fn run_search<E: Environment>(
    env: &E,
    agent: &dyn AgentBackend,
    voter: &dyn VoterBackend,
    config: &SearchConfig,
) -> TraceRecord {
    config.assert_valid();
    let started = Instant::now();
    let digest = config_digest(config, agent.name(), voter.name());
    let task_description = env.task_description();

    let mut state = env.initial_state();
    let initial_observation = env.observe_initial(&state);
    let mut episode = Episode {
        tree: SearchTree::with_root(SnapshotHandle(0)),
        chain: ReasoningChain::new(config.budget),
        chosen_path: vec![NodeId(0)],
        events: Vec::new(),
        agent_calls: 0,
    };
    let mut snapshots = 1u32;

    if initial_observation.terminal {
        let verdict = initial_observation
            .outcome
            .clone()
            .expect("terminal observations carry an outcome");
        return episode.record(env.task_id(), config, digest, verdict, started);
    }

    let mut verdict = None;
    'depths: for t in 0..config.budget {
        // Expansion: up to k proposals on independent streams.
        let mut proposals: Vec<(usize, Thought, Action)> = Vec::new();
        for i in 0..config.tree_width {
            let mut rng = seed::rng_from(config.seed, &[EXPAND_TAG, t as u64, i as u64]);
            let ctx = ProposalContext {
                task_description: &task_description,
                initial_observation: &initial_observation,
                steps: &episode.chain.steps,
                temperature: config.expansion_temperature,
            };
            episode.agent_calls += 1;
            match agent.propose(&ctx, &mut rng) {
                Ok((thought, action)) => proposals.push((i, thought, action)),
                Err(e) => episode
                    .events
                    .push(format!("depth {t}: candidate {i} proposal failed ({e})")),
            }
        }

        // Dedup identical actions by canonical wire form, keeping first.
        let proposed = proposals.len();
        let mut distinct: Vec<(usize, Thought, Action)> = Vec::new();
        for (i, thought, action) in proposals {
            let wire = action.body.wire_text();
            if !distinct.iter().any(|(_, _, a)| a.body.wire_text() == wire) {
                distinct.push((i, thought, action));
            }
        }
        if distinct.len() < proposed {
            episode.events.push(format!(
                "depth {t}: {proposed} proposals collapsed to {} distinct actions",
                distinct.len()
            ));
        }

        // Apply each survivor to its own cloned snapshot.
        let step_index = episode.chain.steps.len() as u32 + 1;
        let mut candidates: Vec<Candidate<E::State>> = Vec::new();
        for (i, thought, action) in distinct {
            match env.apply(&state, &action) {
                Ok((next, obs)) => candidates.push(Candidate {
                    source_index: i,
                    step: ReasoningStep {
                        index: step_index,
                        thought,
                        action,
                        observation: obs,
                    },
                    state: next,
                }),
                Err(e) => episode
                    .events
                    .push(format!("depth {t}: candidate {i} dropped ({e})")),
            }
        }
        if candidates.is_empty() {
            episode
                .events
                .push(format!("depth {t}: expansion failed; episode ends with a tool error"));
            verdict = Some(Outcome::tool_error("expansion_failed"));
            break 'depths;
        }

        let selected = if candidates.len() == 1 {
            // A lone candidate commits directly: no rollout, no voter call.
            let candidate = candidates.pop().unwrap();
            let node = episode.tree.push_child(
                *episode.chosen_path.last().unwrap(),
                candidate.step.clone(),
                SnapshotHandle(snapshots),
            );
            snapshots += 1;
            (candidate, node, None)
        } else {
            // Rollouts, possibly on threads; merged by candidate order.
            let results = run_rollouts(
                env,
                agent,
                config,
                &task_description,
                &initial_observation,
                &episode.chain.steps,
                &candidates,
                t,
            );
            for result in &results {
                episode.agent_calls += result.agent_calls;
                episode.events.extend(result.events.iter().cloned());
            }

            // Vote: averaged over vote_samples ballots.
            let views: Vec<CandidateView<'_>> = candidates
                .iter()
                .zip(&results)
                .map(|(candidate, result)| CandidateView {
                    step: &candidate.step,
                    rollout: &result.rollout,
                    ground_truth_score: result.ground_truth,
                })
                .collect();
            let vote_ctx = VoteContext {
                task_description: &task_description,
                committed: &episode.chain.steps,
                temperature: config.vote_temperature,
            };
            let mut scores = vec![0.0f64; views.len()];
            let mut vote_error = None;
            for _ in 0..config.vote_samples {
                match voter.vote(&vote_ctx, &views) {
                    Ok(ballot) if ballot.len() == views.len() => {
                        for (total, score) in scores.iter_mut().zip(&ballot) {
                            *total += score;
                        }
                    }
                    Ok(ballot) => {
                        vote_error = Some(format!(
                            "voter returned {} scores for {} candidates",
                            ballot.len(),
                            views.len()
                        ));
                        break;
                    }
                    Err(e) => {
                        vote_error = Some(e.to_string());
                        break;
                    }
                }
            }
            let (chosen, scored) = match vote_error {
                Some(e) => {
                    episode.events.push(format!(
                        "depth {t}: voter failure ({e}); fell back to the first candidate"
                    ));
                    (0, None)
                }
                None => {
                    for score in &mut scores {
                        *score /= config.vote_samples as f64;
                    }
                    let chosen = select_argmax(&scores);
                    let listed: Vec<String> = scores.iter().map(|s| s.to_string()).collect();
                    episode.events.push(format!(
                        "depth {t}: votes [{}]; selected candidate {}",
                        listed.join(", "),
                        candidates[chosen].source_index
                    ));
                    (chosen, Some(scores))
                }
            };

            // Every candidate becomes a tree node; the argmax one continues
            // the chosen path.
            let parent = *episode.chosen_path.last().unwrap();
            let mut selected_node = None;
            let mut selected_candidate = None;
            for (index, (candidate, result)) in
                candidates.into_iter().zip(results).enumerate()
            {
                let node = episode.tree.push_child(
                    parent,
                    candidate.step.clone(),
                    SnapshotHandle(snapshots),
                );
                snapshots += 1;
                let entry = episode.tree.node_mut(node);
                entry.rollout = Some(result.rollout);
                entry.vote_score = scored.as_ref().map(|s| s[index]);
                if index == chosen {
                    selected_node = Some(node);
                    selected_candidate = Some(candidate);
                }
            }
            let ballot_score = scored.map(|s| s[chosen]);
            (selected_candidate.unwrap(), selected_node.unwrap(), ballot_score)
        };

        let (candidate, node, _score) = selected;
        episode.chosen_path.push(node);
        let terminal = candidate.step.observation.terminal;
        let end = candidate.step.observation.outcome.clone();
        episode.chain = episode
            .chain
            .append(
                candidate.step.thought.clone(),
                candidate.step.action.clone(),
                candidate.step.observation.clone(),
            )
            .expect("depth loop respects the chain budget");
        state = candidate.state;
        if terminal {
            verdict = end;
            break 'depths;
        }
    }
    let verdict =
        verdict.unwrap_or_else(|| Outcome::budget_exhausted(format!("depth={}", config.budget)));
    episode.record(env.task_id(), config, digest, verdict, started)
}

/// Rollouts for a slate of candidates. Runs serially unless the agent is
/// concurrent-safe and the config allows width; either way the returned
/// order matches the candidate order, so downstream bytes are identical.
#[allow(clippy::too_many_arguments)]
fn run_rollouts<E: Environment>(
    env: &E,
    agent: &dyn AgentBackend,
    config: &SearchConfig,
    task_description: &str,
    initial_observation: &Observation,
    committed: &[ReasoningStep],
    candidates: &[Candidate<E::State>],
    depth: u32,
) -> Vec<RolloutResult> {
    let parallel = config.concurrency_width > 1
        && candidates.len() > 1
        && agent.concurrency() == AgentConcurrency::ConcurrentSafe;
    if !parallel {
        return candidates
            .iter()
            .map(|c| {
                rollout_candidate(
                    env,
                    agent,
                    config,
                    task_description,
                    initial_observation,
                    committed,
                    c,
                    depth,
                )
            })
            .collect();
    }

    let mut results: Vec<Option<RolloutResult>> = Vec::new();
    results.resize_with(candidates.len(), || None);
    for (chunk_start, chunk) in candidates
        .chunks(config.concurrency_width)
        .enumerate()
        .map(|(n, c)| (n * config.concurrency_width, c))
    {
        let chunk_results: Vec<(usize, RolloutResult)> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .enumerate()
                .map(|(offset, candidate)| {
                    scope.spawn(move || {
                        (
                            chunk_start + offset,
                            rollout_candidate(
                                env,
                                agent,
                                config,
                                task_description,
                                initial_observation,
                                committed,
                                candidate,
                                depth,
                            ),
                        )
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("rollout threads do not panic"))
                .collect()
        });
        for (index, result) in chunk_results {
            results[index] = Some(result);
        }
    }
    results
        .into_iter()
        .map(|r| r.expect("every candidate rolled out"))
        .collect()
}
