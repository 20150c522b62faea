//! Reasoning-trace data model shared by the search engine, agents, and
//! environments.
//!
//! A trace is a sequence of [`ReasoningStep`]s, each pairing a free-text
//! [`Thought`] with a structured [`Action`] and the [`Observation`] the
//! environment returned for it. Steps accumulate in a [`ReasoningChain`]
//! bounded by a step budget, and tree search stores them in a [`SearchTree`]
//! whose nodes carry optional rollout continuations and vote scores.
//!
//! Everything here is an immutable value: appending to a chain returns a new
//! chain, and trees only ever grow. Serialized forms are canonical (fixed
//! struct field order, sorted object keys inside action payloads), so byte
//! equality of two serializations implies semantic equality. That property is
//! what lets the engine deduplicate candidate actions and lets tests compare
//! whole episodes by string diff.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};
use std::fmt;
use thiserror::Error;

/// Free-text rationale emitted by an agent before it commits to an action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thought {
    pub text: String,
}

impl Thought {
    pub fn new(text: impl Into<String>) -> Self {
        Thought { text: text.into() }
    }
}

/// Cardinal movement direction on a grid. Rows grow downward, so `Up`
/// decrements the row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    /// Row/column delta for a single step in this direction.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        match text.to_ascii_lowercase().as_str() {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            other => Err(ParseError::Field {
                field: "direction",
                why: format!("unknown direction {other:?}"),
            }),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grid cell addressed as (row, col). Used by the tiling action payloads,
/// where coordinates may be negative before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: i32,
    pub col: i32,
}

impl Cell {
    pub fn new(row: i32, col: i32) -> Self {
        Cell { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Auxiliary-construction command for the geometry environment.
///
/// Names refer to points in the active scene; `PerpendicularFoot` drops a
/// foot onto the infinite extension of the named segment, and
/// `ParallelThrough` requires an explicit length because a direction alone
/// does not determine the new endpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxCommand {
    Connect {
        p: String,
        q: String,
    },
    PerpendicularFoot {
        from: String,
        onto: (String, String),
    },
    ParallelThrough {
        through: String,
        reference: (String, String),
        length: f64,
    },
    /// Sentinel closing the construction phase.
    AuxEnd,
}

/// Discriminant of an [`Action`], used for phase checks and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    NavMove,
    TileFit,
    TileRemove,
    GeomAux,
    GeomAuxEnd,
    GeomEquation,
    FinalAnswer,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::NavMove => "nav_move",
            ActionKind::TileFit => "tile_fit",
            ActionKind::TileRemove => "tile_remove",
            ActionKind::GeomAux => "geom_aux",
            ActionKind::GeomAuxEnd => "geom_aux_end",
            ActionKind::GeomEquation => "geom_equation",
            ActionKind::FinalAnswer => "final_answer",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Structured payload of an action, one variant per tool verb.
///
/// The wire form of each variant is the bare JSON object an agent is expected
/// to emit inside a fenced block, e.g. `{"direction": "right", "steps": 2}`
/// or `{"polyomino": "L", "cells": [[0, 0], [1, 0]], "action": "fit"}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionBody {
    NavMove { direction: Direction, steps: u32 },
    TileFit { piece: String, cells: Vec<Cell> },
    TileRemove { piece: String, cells: Vec<Cell> },
    GeomAux(AuxCommand),
    GeomEquation { source: String },
    FinalAnswer { value: Option<f64> },
}

impl ActionBody {
    pub fn kind(&self) -> ActionKind {
        match self {
            ActionBody::NavMove { .. } => ActionKind::NavMove,
            ActionBody::TileFit { .. } => ActionKind::TileFit,
            ActionBody::TileRemove { .. } => ActionKind::TileRemove,
            ActionBody::GeomAux(AuxCommand::AuxEnd) => ActionKind::GeomAuxEnd,
            ActionBody::GeomAux(_) => ActionKind::GeomAux,
            ActionBody::GeomEquation { .. } => ActionKind::GeomEquation,
            ActionBody::FinalAnswer { .. } => ActionKind::FinalAnswer,
        }
    }

    /// Constructor that normalizes cell order so the wire form is canonical.
    pub fn tile_fit(piece: impl Into<String>, mut cells: Vec<Cell>) -> Self {
        cells.sort();
        ActionBody::TileFit {
            piece: piece.into(),
            cells,
        }
    }

    /// See [`ActionBody::tile_fit`].
    pub fn tile_remove(piece: impl Into<String>, mut cells: Vec<Cell>) -> Self {
        cells.sort();
        ActionBody::TileRemove {
            piece: piece.into(),
            cells,
        }
    }

    /// Bare JSON object an agent would emit for this action.
    pub fn to_wire(&self) -> Value {
        match self {
            ActionBody::NavMove { direction, steps } => {
                json!({ "direction": direction.as_str(), "steps": steps })
            }
            ActionBody::TileFit { piece, cells } => {
                let cells: Vec<Value> = cells.iter().map(|c| json!([c.row, c.col])).collect();
                json!({ "polyomino": piece, "cells": cells, "action": "fit" })
            }
            ActionBody::TileRemove { piece, cells } => {
                let cells: Vec<Value> = cells.iter().map(|c| json!([c.row, c.col])).collect();
                json!({ "polyomino": piece, "cells": cells, "action": "remove" })
            }
            ActionBody::GeomAux(AuxCommand::Connect { p, q }) => json!({ "connect": [p, q] }),
            ActionBody::GeomAux(AuxCommand::PerpendicularFoot { from, onto }) => {
                json!({ "perpendicular": { "from": from, "onto": [&onto.0, &onto.1] } })
            }
            ActionBody::GeomAux(AuxCommand::ParallelThrough {
                through,
                reference,
                length,
            }) => json!({ "parallel": {
                "through": through,
                "reference": [&reference.0, &reference.1],
                "length": length,
            }}),
            ActionBody::GeomAux(AuxCommand::AuxEnd) => json!({ "aux_end": true }),
            ActionBody::GeomEquation { source } => json!({ "equation": source }),
            ActionBody::FinalAnswer { value } => json!({ "answer": value }),
        }
    }

    /// Canonical single-line wire text. Object keys are sorted, so two bodies
    /// with the same meaning serialize to the same bytes.
    pub fn wire_text(&self) -> String {
        self.to_wire().to_string()
    }

    /// Parses the bare wire object, inferring the action kind from the keys
    /// present. Cell lists are re-sorted so parsing is canonicalizing.
    pub fn from_wire(value: &Value) -> Result<Self, ParseError> {
        let obj = value
            .as_object()
            .ok_or_else(|| ParseError::UnknownShape("not a json object".into()))?;

        if let Some(dir) = obj.get("direction") {
            let direction = Direction::parse(str_field(dir, "direction")?)?;
            let steps = obj
                .get("steps")
                .and_then(Value::as_u64)
                .ok_or(ParseError::Field {
                    field: "steps",
                    why: "expected a non-negative integer".into(),
                })?;
            if steps == 0 || steps > u32::MAX as u64 {
                return Err(ParseError::Field {
                    field: "steps",
                    why: format!("{steps} outside 1..=u32::MAX"),
                });
            }
            return Ok(ActionBody::NavMove {
                direction,
                steps: steps as u32,
            });
        }

        if let Some(piece) = obj.get("polyomino") {
            let piece = str_field(piece, "polyomino")?.to_string();
            let cells = cells_field(obj.get("cells"))?;
            let verb = obj
                .get("action")
                .and_then(Value::as_str)
                .unwrap_or("fit");
            return match verb {
                "fit" => Ok(ActionBody::tile_fit(piece, cells)),
                "remove" => Ok(ActionBody::tile_remove(piece, cells)),
                other => Err(ParseError::Field {
                    field: "action",
                    why: format!("expected \"fit\" or \"remove\", got {other:?}"),
                }),
            };
        }

        if let Some(pair) = obj.get("connect") {
            let (p, q) = name_pair(pair, "connect")?;
            return Ok(ActionBody::GeomAux(AuxCommand::Connect { p, q }));
        }

        if let Some(spec) = obj.get("perpendicular") {
            let from = spec
                .get("from")
                .ok_or(ParseError::Field {
                    field: "perpendicular.from",
                    why: "missing".into(),
                })
                .and_then(|v| str_field(v, "perpendicular.from"))?
                .to_string();
            let onto = name_pair(
                spec.get("onto").unwrap_or(&Value::Null),
                "perpendicular.onto",
            )?;
            return Ok(ActionBody::GeomAux(AuxCommand::PerpendicularFoot {
                from,
                onto,
            }));
        }

        if let Some(spec) = obj.get("parallel") {
            let through = spec
                .get("through")
                .ok_or(ParseError::Field {
                    field: "parallel.through",
                    why: "missing".into(),
                })
                .and_then(|v| str_field(v, "parallel.through"))?
                .to_string();
            let reference = name_pair(
                spec.get("reference").unwrap_or(&Value::Null),
                "parallel.reference",
            )?;
            let length = spec
                .get("length")
                .and_then(Value::as_f64)
                .ok_or(ParseError::Field {
                    field: "parallel.length",
                    why: "expected a number".into(),
                })?;
            if !length.is_finite() {
                return Err(ParseError::Field {
                    field: "parallel.length",
                    why: "must be finite".into(),
                });
            }
            return Ok(ActionBody::GeomAux(AuxCommand::ParallelThrough {
                through,
                reference,
                length,
            }));
        }

        if obj.contains_key("aux_end") {
            return Ok(ActionBody::GeomAux(AuxCommand::AuxEnd));
        }

        if let Some(src) = obj.get("equation") {
            return Ok(ActionBody::GeomEquation {
                source: str_field(src, "equation")?.to_string(),
            });
        }

        if let Some(ans) = obj.get("answer") {
            let value = match ans {
                Value::Null => None,
                v => Some(v.as_f64().ok_or(ParseError::Field {
                    field: "answer",
                    why: "expected a number or null".into(),
                })?),
            };
            return Ok(ActionBody::FinalAnswer { value });
        }

        let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        Err(ParseError::UnknownShape(format!(
            "no recognized action key among {keys:?}"
        )))
    }

    pub fn from_wire_text(text: &str) -> Result<Self, ParseError> {
        let value: Value =
            serde_json::from_str(text.trim()).map_err(|e| ParseError::Json(e.to_string()))?;
        ActionBody::from_wire(&value)
    }
}

fn str_field<'v>(value: &'v Value, field: &'static str) -> Result<&'v str, ParseError> {
    value.as_str().ok_or(ParseError::Field {
        field,
        why: "expected a string".into(),
    })
}

fn name_pair(value: &Value, field: &'static str) -> Result<(String, String), ParseError> {
    let arr = value.as_array().ok_or(ParseError::Field {
        field,
        why: "expected a two-element array of point names".into(),
    })?;
    if arr.len() != 2 {
        return Err(ParseError::Field {
            field,
            why: format!("expected 2 names, got {}", arr.len()),
        });
    }
    Ok((
        str_field(&arr[0], field)?.to_string(),
        str_field(&arr[1], field)?.to_string(),
    ))
}

fn cells_field(value: Option<&Value>) -> Result<Vec<Cell>, ParseError> {
    let arr = value.and_then(Value::as_array).ok_or(ParseError::Field {
        field: "cells",
        why: "expected an array of [row, col] pairs".into(),
    })?;
    let mut cells = Vec::with_capacity(arr.len());
    for item in arr {
        let pair = item.as_array().filter(|p| p.len() == 2);
        let (r, c) = match pair {
            Some(p) => (p[0].as_i64(), p[1].as_i64()),
            None => (None, None),
        };
        match (r, c) {
            (Some(r), Some(c))
                if (i32::MIN as i64..=i32::MAX as i64).contains(&r)
                    && (i32::MIN as i64..=i32::MAX as i64).contains(&c) =>
            {
                cells.push(Cell::new(r as i32, c as i32));
            }
            _ => {
                return Err(ParseError::Field {
                    field: "cells",
                    why: format!("bad cell entry {item}"),
                })
            }
        }
    }
    Ok(cells)
}

/// One structured tool invocation plus the verbatim text it was parsed from.
///
/// `raw_text` preserves what the agent actually emitted; deterministic
/// backends set it to the canonical wire text.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub body: ActionBody,
    pub raw_text: String,
}

impl Action {
    /// Wraps a body, using its canonical wire text as the raw text.
    pub fn new(body: ActionBody) -> Self {
        let raw_text = body.wire_text();
        Action { body, raw_text }
    }

    pub fn with_raw(body: ActionBody, raw_text: impl Into<String>) -> Self {
        Action {
            body,
            raw_text: raw_text.into(),
        }
    }

    pub fn kind(&self) -> ActionKind {
        self.body.kind()
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("Action", 3)?;
        st.serialize_field("kind", self.kind().as_str())?;
        st.serialize_field("payload", &self.body.to_wire())?;
        st.serialize_field("raw_text", &self.raw_text)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Shadow {
            kind: String,
            payload: Value,
            raw_text: String,
        }
        let shadow = Shadow::deserialize(deserializer)?;
        let body = ActionBody::from_wire(&shadow.payload).map_err(D::Error::custom)?;
        if body.kind().as_str() != shadow.kind {
            return Err(D::Error::custom(format!(
                "action kind {:?} does not match payload kind {:?}",
                shadow.kind,
                body.kind().as_str()
            )));
        }
        Ok(Action {
            body,
            raw_text: shadow.raw_text,
        })
    }
}

/// How an episode (or a rollout) ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    NumericAnswer,
    GoalReached,
    GoalFailed,
    BudgetExhausted,
    ToolError,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::NumericAnswer => "numeric_answer",
            OutcomeKind::GoalReached => "goal_reached",
            OutcomeKind::GoalFailed => "goal_failed",
            OutcomeKind::BudgetExhausted => "budget_exhausted",
            OutcomeKind::ToolError => "tool_error",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Terminal result of a chain. `value` is present exactly for numeric
/// answers; `final_state_digest` is a short human-readable summary of the
/// ending state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub value: Option<f64>,
    pub final_state_digest: String,
}

impl Outcome {
    pub fn numeric_answer(value: f64, digest: impl Into<String>) -> Self {
        Outcome {
            kind: OutcomeKind::NumericAnswer,
            value: Some(value),
            final_state_digest: digest.into(),
        }
    }

    pub fn goal_reached(digest: impl Into<String>) -> Self {
        Outcome {
            kind: OutcomeKind::GoalReached,
            value: None,
            final_state_digest: digest.into(),
        }
    }

    pub fn goal_failed(digest: impl Into<String>) -> Self {
        Outcome {
            kind: OutcomeKind::GoalFailed,
            value: None,
            final_state_digest: digest.into(),
        }
    }

    pub fn budget_exhausted(digest: impl Into<String>) -> Self {
        Outcome {
            kind: OutcomeKind::BudgetExhausted,
            value: None,
            final_state_digest: digest.into(),
        }
    }

    pub fn tool_error(digest: impl Into<String>) -> Self {
        Outcome {
            kind: OutcomeKind::ToolError,
            value: None,
            final_state_digest: digest.into(),
        }
    }
}

/// Executor feedback for one action: textual feedback always, a rendered
/// SVG when the environment produces visual state, and a terminal outcome
/// exactly when the episode ended here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub text_feedback: String,
    pub visual_feedback: Option<String>,
    pub terminal: bool,
    pub outcome: Option<Outcome>,
}

impl Observation {
    /// Non-terminal feedback. `terminal` stays false and no outcome is set.
    pub fn feedback(text: impl Into<String>, visual: Option<String>) -> Self {
        Observation {
            text_feedback: text.into(),
            visual_feedback: visual,
            terminal: false,
            outcome: None,
        }
    }

    /// Terminal feedback carrying the episode outcome.
    pub fn terminal(text: impl Into<String>, visual: Option<String>, outcome: Outcome) -> Self {
        Observation {
            text_feedback: text.into(),
            visual_feedback: visual,
            terminal: true,
            outcome: Some(outcome),
        }
    }

    /// True when the terminal flag and outcome presence agree.
    pub fn is_consistent(&self) -> bool {
        self.terminal == self.outcome.is_some()
    }
}

/// One thought/action/observation triple. Indices are 1-based within their
/// chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningStep {
    pub index: u32,
    pub thought: Thought,
    pub action: Action,
    pub observation: Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("step budget of {budget} exhausted")]
    BudgetExceeded { budget: u32 },
    #[error("cannot append after a terminal step")]
    AppendAfterTerminal,
}

/// An append-only sequence of steps with a hard budget. The budget counts
/// steps, each action costing exactly one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningChain {
    pub steps: Vec<ReasoningStep>,
    pub budget: u32,
}

impl ReasoningChain {
    pub fn new(budget: u32) -> Self {
        ReasoningChain {
            steps: Vec::new(),
            budget,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Steps still allowed before the budget is exhausted.
    pub fn remaining_budget(&self) -> u32 {
        self.budget.saturating_sub(self.steps.len() as u32)
    }

    pub fn is_terminal(&self) -> bool {
        self.steps.last().is_some_and(|s| s.observation.terminal)
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.steps.last().and_then(|s| s.observation.outcome.as_ref())
    }

    /// Returns a new chain with one more step (indices are assigned here).
    /// Fails if the chain already ended in a terminal observation or the
    /// budget is spent.
    pub fn append(
        &self,
        thought: Thought,
        action: Action,
        observation: Observation,
    ) -> Result<ReasoningChain, ChainError> {
        if self.is_terminal() {
            return Err(ChainError::AppendAfterTerminal);
        }
        if self.steps.len() as u32 >= self.budget {
            return Err(ChainError::BudgetExceeded {
                budget: self.budget,
            });
        }
        let mut steps = self.steps.clone();
        steps.push(ReasoningStep {
            index: steps.len() as u32 + 1,
            thought,
            action,
            observation,
        });
        Ok(ReasoningChain {
            steps,
            budget: self.budget,
        })
    }
}

/// Identifier of a node within one [`SearchTree`]. Ids are dense indices
/// assigned in insertion order, root first.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Opaque key into the engine's snapshot store. The trace keeps the handle
/// so the tree shape is reconstructible, but the states themselves are not
/// serialized; they are regenerable from the task seed.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SnapshotHandle(pub u32);

/// Greedy continuation simulated from a candidate node, plus how it ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rollout {
    pub suffix: ReasoningChain,
    pub outcome: Outcome,
}

/// One node of the search tree. The root carries no step (it represents the
/// task's initial state); every other node records the step that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub step: Option<ReasoningStep>,
    pub env_snapshot: SnapshotHandle,
    pub rollout: Option<Rollout>,
    pub vote_score: Option<f64>,
}

/// Append-only tree of search nodes. Node 0 is always the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    /// Creates a tree containing only a root bound to the given snapshot.
    pub fn with_root(snapshot: SnapshotHandle) -> Self {
        SearchTree {
            nodes: vec![SearchNode {
                id: NodeId(0),
                parent: None,
                step: None,
                env_snapshot: snapshot,
                rollout: None,
                vote_score: None,
            }],
        }
    }

    pub fn root_id(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id.0 as usize]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut SearchNode {
        &mut self.nodes[id.0 as usize]
    }

    /// Adds a child under `parent` and returns its id.
    pub fn push_child(
        &mut self,
        parent: NodeId,
        step: ReasoningStep,
        snapshot: SnapshotHandle,
    ) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(SearchNode {
            id,
            parent: Some(parent),
            step: Some(step),
            env_snapshot: snapshot,
            rollout: None,
            vote_score: None,
        });
        id
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.parent == Some(id))
            .map(|n| n.id)
            .collect()
    }

    /// Number of steps between the root and `id`.
    pub fn depth(&self, id: NodeId) -> u32 {
        let mut depth = 0;
        let mut cursor = id;
        while let Some(parent) = self.node(cursor).parent {
            depth += 1;
            cursor = parent;
        }
        depth
    }
}

/// Everything recorded for one episode: the search tree (a path, in linear
/// mode), the committed root-to-leaf path, and the verdict. `wall_time` is
/// the only field allowed to differ between reruns of the same seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub task_id: String,
    pub config_digest: String,
    pub seed: u64,
    pub budget: u32,
    pub tree: SearchTree,
    pub chosen_path: Vec<NodeId>,
    pub verdict: Outcome,
    pub events: Vec<String>,
    pub agent_calls: u64,
    pub wall_time: f64,
}

impl TraceRecord {
    /// Reassembles the committed chain from the chosen path.
    pub fn chosen_chain(&self) -> ReasoningChain {
        let steps = self
            .chosen_path
            .iter()
            .filter_map(|id| self.tree.node(*id).step.clone())
            .collect();
        ReasoningChain {
            steps,
            budget: self.budget,
        }
    }

    /// Structural sanity check: the chosen path starts at the root, follows
    /// parent links, and every referenced id exists.
    pub fn validate(&self) -> Result<(), ParseError> {
        for id in &self.chosen_path {
            if id.0 as usize >= self.tree.len() {
                return Err(ParseError::Field {
                    field: "chosen_path",
                    why: format!("{id} out of range"),
                });
            }
        }
        match self.chosen_path.first() {
            Some(first) if *first != self.tree.root_id() => {
                return Err(ParseError::Field {
                    field: "chosen_path",
                    why: "does not start at the root".into(),
                });
            }
            _ => {}
        }
        for pair in self.chosen_path.windows(2) {
            if self.tree.node(pair[1]).parent != Some(pair[0]) {
                return Err(ParseError::Field {
                    field: "chosen_path",
                    why: format!("{} is not a child of {}", pair[1], pair[0]),
                });
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self, ParseError> {
        serde_json::from_str(line).map_err(|e| ParseError::Json(e.to_string()))
    }
}

/// Reads a line-delimited trace file (one record per line, blank lines
/// ignored).
pub fn read_trace_file(path: &std::path::Path) -> Result<Vec<TraceRecord>, ParseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ParseError::Json(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(TraceRecord::from_json_line)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("invalid json: {0}")]
    Json(String),
    #[error("unrecognized action shape: {0}")]
    UnknownShape(String),
    #[error("bad `{field}` field: {why}")]
    Field { field: &'static str, why: String },
}

/// Stable single-line serialization of a step. Byte equality of two
/// serializations implies the steps are semantically equal.
pub fn canonical_serialize(step: &ReasoningStep) -> String {
    serde_json::to_string(step).expect("steps always serialize")
}

/// Inverse of [`canonical_serialize`].
pub fn canonical_parse(text: &str) -> Result<ReasoningStep, ParseError> {
    serde_json::from_str(text).map_err(|e| ParseError::Json(e.to_string()))
}
