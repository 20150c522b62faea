//! Tool environments and the executor contract they share.
//!
//! An [`Environment`] is a deterministic, immutable task description; all
//! mutable progress lives in its `State` type, which the search engine
//! clones freely when branching. Applying an action never mutates in place:
//! it returns the successor state together with the [`Observation`] the
//! agent will see.
//!
//! Illegal-but-well-formed actions (walking into a wall, placing a piece on
//! an occupied cell) are reported through failure observations so an agent
//! can recover. [`EnvError`] is reserved for actions the environment cannot
//! execute at all: wrong tool for the environment, schema violations, or
//! commands issued in the wrong phase.

pub mod geometry;
pub mod nav;
pub mod tiling;

use crate::trace::{Action, Observation, Outcome};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Nav,
    Tiling,
    Geometry,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Nav => "nav",
            EnvKind::Tiling => "tiling",
            EnvKind::Geometry => "geometry",
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("malformed action: {0}")]
    MalformedAction(String),
    #[error("phase violation: {0}")]
    PhaseViolation(String),
}

pub trait Environment: Send + Sync {
    type State: Clone + Send + Sync;

    fn kind(&self) -> EnvKind;

    /// Stable identifier of the task instance (encodes level and seed for
    /// generated instances).
    fn task_id(&self) -> String;

    /// Prose statement of the task, suitable for prompts and vote requests.
    fn task_description(&self) -> String;

    fn initial_state(&self) -> Self::State;

    /// Presentation of the initial state. Terminal when the task is already
    /// solved at step zero (e.g. start equals destination).
    fn observe_initial(&self, state: &Self::State) -> Observation;

    /// Executes one action. Well-formed but illegal actions produce failure
    /// observations; `EnvError` means the action could not be executed at
    /// all.
    fn apply(
        &self,
        state: &Self::State,
        action: &Action,
    ) -> Result<(Self::State, Observation), EnvError>;

    /// Privileged progress score used by the ground-truth voter: 1.0 for a
    /// successful outcome, otherwise a value in [-1, 0] that increases as
    /// the end state gets closer to the goal.
    fn ground_truth_score(&self, end_state: &Self::State, outcome: &Outcome) -> f64;

    /// Whether a verdict counts as a solved episode for metrics.
    fn outcome_success(&self, outcome: &Outcome) -> bool;
}
