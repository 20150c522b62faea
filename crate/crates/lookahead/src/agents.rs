//! Step proposers and candidate voters.
//!
//! An agent backend turns the visible episode so far (task text, committed
//! steps, the latest observation) into the next thought and action. A voter
//! backend scores a slate of expanded candidates, each carrying its lookahead
//! rollout; the engine commits the argmax. Backends must be deterministic
//! given the derived RNG stream they are handed: the engine derives an
//! independent stream per proposal call, so a backend may consume as much or
//! as little randomness as it likes without perturbing its neighbors.
//!
//! The built-in backends are solvers with known behavior (oracles, noisy
//! oracles, uniform random, scripted replay). They exist to make search
//! behavior measurable without a language model; the model-backed agent
//! lives in the `llm` module.

use crate::env::geometry::ScriptStep;
use crate::env::nav::{Coord, NavMap};
use crate::env::tiling::{exact_cover, CoverOutcome, TilingEnv, TilingInstance};
use crate::env::Environment;
use crate::trace::{
    Action, ActionBody, Direction, Observation, Outcome, ReasoningStep, Rollout, Thought,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("agent failure: {0}")]
    Backend(String),
    #[error("replay exhausted after {0} steps")]
    Exhausted(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VoterError {
    #[error("voter failure: {0}")]
    Backend(String),
    #[error("vote {score} for candidate {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
}

/// Everything an agent may look at when proposing the next step. `steps` is
/// the full visible history: committed steps plus the rollout suffix when
/// the engine is playing a candidate forward.
pub struct ProposalContext<'a> {
    pub task_description: &'a str,
    pub initial_observation: &'a Observation,
    pub steps: &'a [ReasoningStep],
    pub temperature: f64,
}

impl ProposalContext<'_> {
    pub fn last_observation(&self) -> &Observation {
        self.steps
            .last()
            .map(|s| &s.observation)
            .unwrap_or(self.initial_observation)
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }
}

/// Whether an agent's `propose` may be called from several rollout threads
/// at once. The conservative default is serialized; stateless backends
/// opt in to concurrency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentConcurrency {
    ConcurrentSafe,
    Serialized,
}

pub trait AgentBackend: Send + Sync {
    fn name(&self) -> &str;
    fn propose(
        &self,
        ctx: &ProposalContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Thought, Action), AgentError>;
    fn concurrency(&self) -> AgentConcurrency {
        AgentConcurrency::Serialized
    }
}

/// One expanded candidate as the voter sees it: the proposed step, its
/// lookahead rollout, and the environment's private score for the rollout
/// end state. Only the ground-truth voter reads `ground_truth_score`; model
/// voters judge from the visible fields.
pub struct CandidateView<'a> {
    pub step: &'a ReasoningStep,
    pub rollout: &'a Rollout,
    pub ground_truth_score: f64,
}

impl CandidateView<'_> {
    pub fn outcome(&self) -> &Outcome {
        &self.rollout.outcome
    }
}

pub struct VoteContext<'a> {
    pub task_description: &'a str,
    pub committed: &'a [ReasoningStep],
    pub temperature: f64,
}

pub trait VoterBackend: Send + Sync {
    fn name(&self) -> &str;
    fn vote(
        &self,
        ctx: &VoteContext<'_>,
        candidates: &[CandidateView<'_>],
    ) -> Result<Vec<f64>, VoterError>;
}

/// Replays nav moves with the environment's collision semantics to recover
/// the current position from the history alone.
fn replay_nav_position(map: &NavMap, steps: &[ReasoningStep]) -> Coord {
    let mut at = map.start;
    for step in steps {
        if let ActionBody::NavMove { direction, steps } = &step.action.body {
            let (dr, dc) = direction.delta();
            let (mut row, mut col) = (at.row as i64, at.col as i64);
            let mut blocked = false;
            for _ in 0..*steps {
                row += dr;
                col += dc;
                if !map.in_bounds(row, col) || !map.is_free(Coord::new(row as usize, col as usize))
                {
                    blocked = true;
                    break;
                }
            }
            if !blocked {
                at = Coord::new(row as usize, col as usize);
            }
        }
    }
    at
}

fn direction_between(from: Coord, to: Coord) -> Direction {
    if to.row < from.row {
        Direction::Up
    } else if to.row > from.row {
        Direction::Down
    } else if to.col < from.col {
        Direction::Left
    } else {
        Direction::Right
    }
}

/// Shortest-path navigator: walks the distance field and emits one maximal
/// straight run per step, so a level-k corridor costs exactly k moves.
pub struct NavOracle {
    map: NavMap,
}

impl NavOracle {
    pub fn new(map: NavMap) -> Self {
        NavOracle { map }
    }

    fn plan(&self, ctx: &ProposalContext<'_>) -> (Thought, Action) {
        let at = replay_nav_position(&self.map, ctx.steps);
        if at == self.map.destination {
            return (
                Thought::new("already at the destination"),
                Action::new(ActionBody::FinalAnswer { value: Some(1.0) }),
            );
        }
        let Some(path) = self.map.shortest_path(at) else {
            return (
                Thought::new("no route to the destination exists"),
                Action::new(ActionBody::FinalAnswer { value: None }),
            );
        };
        let direction = direction_between(path[0], path[1]);
        let mut run = 1usize;
        while run + 1 < path.len() && direction_between(path[run], path[run + 1]) == direction {
            run += 1;
        }
        (
            Thought::new(format!(
                "follow the corridor {direction} for {run} cells toward the destination"
            )),
            Action::new(ActionBody::NavMove {
                direction,
                steps: run as u32,
            }),
        )
    }
}

impl AgentBackend for NavOracle {
    fn name(&self) -> &str {
        "nav-oracle"
    }

    fn propose(
        &self,
        ctx: &ProposalContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(Thought, Action), AgentError> {
        Ok(self.plan(ctx))
    }

    fn concurrency(&self) -> AgentConcurrency {
        AgentConcurrency::ConcurrentSafe
    }
}

/// Oracle that, with probability epsilon per call, discards the planned move
/// for a uniformly random one. Epsilon zero behaves exactly like the oracle.
pub struct NoisyNavOracle {
    oracle: NavOracle,
    epsilon: f64,
}

impl NoisyNavOracle {
    pub fn new(map: NavMap, epsilon: f64) -> Self {
        assert!((0.0..=1.0).contains(&epsilon), "epsilon must be in [0, 1]");
        NoisyNavOracle {
            oracle: NavOracle::new(map),
            epsilon,
        }
    }
}

impl AgentBackend for NoisyNavOracle {
    fn name(&self) -> &str {
        "nav-noisy-oracle"
    }

    fn propose(
        &self,
        ctx: &ProposalContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Thought, Action), AgentError> {
        if rng.gen_bool(self.epsilon) {
            let direction = Direction::ALL[rng.gen_range(0..4)];
            let steps = rng.gen_range(1..=3u32);
            return Ok((
                Thought::new(format!("wander {direction} for {steps}")),
                Action::new(ActionBody::NavMove { direction, steps }),
            ));
        }
        Ok(self.oracle.plan(ctx))
    }

    fn concurrency(&self) -> AgentConcurrency {
        AgentConcurrency::ConcurrentSafe
    }
}

/// Uniform random mover, the floor any search method should beat.
pub struct RandomNav;

impl AgentBackend for RandomNav {
    fn name(&self) -> &str {
        "nav-random"
    }

    fn propose(
        &self,
        _ctx: &ProposalContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Thought, Action), AgentError> {
        let direction = Direction::ALL[rng.gen_range(0..4)];
        let steps = rng.gen_range(1..=3u32);
        Ok((
            Thought::new(format!("try {direction} for {steps}")),
            Action::new(ActionBody::NavMove { direction, steps }),
        ))
    }

    fn concurrency(&self) -> AgentConcurrency {
        AgentConcurrency::ConcurrentSafe
    }
}

/// Exact-cover navigator for tiling: re-solves the remaining region each
/// call and emits the first placement of the solution. If an earlier
/// placement made the rest unsolvable, it backs the newest piece out.
pub struct TilingOracle {
    env: TilingEnv,
    node_budget: u64,
}

impl TilingOracle {
    pub fn new(instance: TilingInstance) -> Self {
        TilingOracle {
            env: TilingEnv::new(instance),
            node_budget: 1_000_000,
        }
    }

    /// Replays the history through the environment to recover the state.
    fn replay_state(&self, ctx: &ProposalContext<'_>) -> crate::env::tiling::TilingState {
        let mut state = self.env.initial_state();
        for step in ctx.steps {
            if let Ok((next, _)) = self.env.apply(&state, &step.action) {
                state = next;
            }
        }
        state
    }
}

impl AgentBackend for TilingOracle {
    fn name(&self) -> &str {
        "tiling-oracle"
    }

    fn propose(
        &self,
        ctx: &ProposalContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(Thought, Action), AgentError> {
        let state = self.replay_state(ctx);
        let free = state.free_cells();
        if free.is_empty() {
            return Ok((
                Thought::new("the region is covered"),
                Action::new(ActionBody::FinalAnswer { value: Some(1.0) }),
            ));
        }
        let result = exact_cover(&free, &state.inventory, self.env.allow_reflections, self.node_budget);
        match result.outcome {
            CoverOutcome::Solved(placements) => {
                let first = &placements[0];
                let cells: Vec<_> = first.cells.iter().copied().collect();
                Ok((
                    Thought::new(format!(
                        "the remaining region packs; place a {} first",
                        first.kind
                    )),
                    Action::new(ActionBody::tile_fit(first.kind.as_str(), cells)),
                ))
            }
            CoverOutcome::Unsolvable => match state.placed.last() {
                Some(last) => {
                    let cells: Vec<_> = last.cells.iter().copied().collect();
                    Ok((
                        Thought::new(format!(
                            "the rest cannot pack; take the {} back out",
                            last.kind
                        )),
                        Action::new(ActionBody::tile_remove(last.kind.as_str(), cells)),
                    ))
                }
                None => Ok((
                    Thought::new("the region cannot be packed with these pieces"),
                    Action::new(ActionBody::FinalAnswer { value: None }),
                )),
            },
            CoverOutcome::BudgetExceeded => Err(AgentError::Backend(format!(
                "cover search exceeded {} nodes",
                self.node_budget
            ))),
        }
    }

    fn concurrency(&self) -> AgentConcurrency {
        AgentConcurrency::ConcurrentSafe
    }
}

/// Plays out a fixed worked solution, indexed purely by how many steps are
/// already visible. Identical histories therefore always get identical
/// proposals, whether reached by linear execution or inside a rollout.
pub struct ScriptedGeometry {
    script: Vec<ScriptStep>,
}

impl ScriptedGeometry {
    pub fn new(script: Vec<ScriptStep>) -> Self {
        ScriptedGeometry { script }
    }
}

impl AgentBackend for ScriptedGeometry {
    fn name(&self) -> &str {
        "geometry-scripted"
    }

    fn propose(
        &self,
        ctx: &ProposalContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(Thought, Action), AgentError> {
        match self.script.get(ctx.depth()) {
            Some(step) => Ok((
                Thought::new(step.thought.clone()),
                Action::new(step.body.clone()),
            )),
            None => Ok((
                Thought::new("the worked solution is exhausted with no answer"),
                Action::new(ActionBody::FinalAnswer { value: None }),
            )),
        }
    }

    fn concurrency(&self) -> AgentConcurrency {
        AgentConcurrency::ConcurrentSafe
    }
}

/// Hands out a fixed sequence of steps one call at a time, regardless of
/// context. The cursor is shared: under search the replayed step is proposed
/// once, deduplicated into a single candidate, and committed as-is.
pub struct ReplayAgent {
    cursor: Mutex<usize>,
    steps: Vec<(Thought, Action)>,
}

impl ReplayAgent {
    pub fn new(steps: Vec<(Thought, Action)>) -> Self {
        ReplayAgent {
            cursor: Mutex::new(0),
            steps,
        }
    }
}

impl AgentBackend for ReplayAgent {
    fn name(&self) -> &str {
        "replay"
    }

    fn propose(
        &self,
        _ctx: &ProposalContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(Thought, Action), AgentError> {
        let mut cursor = self.cursor.lock().unwrap();
        match self.steps.get(*cursor) {
            Some((thought, action)) => {
                *cursor += 1;
                Ok((thought.clone(), action.clone()))
            }
            None => Err(AgentError::Exhausted(self.steps.len())),
        }
    }
}

/// Scores each candidate by the environment's private score for its rollout
/// end state. The upper bound on what any learned voter could achieve.
pub struct GroundTruthVoter;

impl VoterBackend for GroundTruthVoter {
    fn name(&self) -> &str {
        "ground-truth"
    }

    fn vote(
        &self,
        _ctx: &VoteContext<'_>,
        candidates: &[CandidateView<'_>],
    ) -> Result<Vec<f64>, VoterError> {
        Ok(candidates.iter().map(|c| c.ground_truth_score).collect())
    }
}

/// Always prefers candidate zero. Turns search into a fixed-choice pipeline,
/// useful for isolating expansion cost from selection quality.
pub struct FirstVoter;

impl VoterBackend for FirstVoter {
    fn name(&self) -> &str {
        "first"
    }

    fn vote(
        &self,
        _ctx: &VoteContext<'_>,
        candidates: &[CandidateView<'_>],
    ) -> Result<Vec<f64>, VoterError> {
        Ok((0..candidates.len())
            .map(|i| if i == 0 { 1.0 } else { 0.0 })
            .collect())
    }
}
