//! Polyomino tiling of masked regions.
//!
//! The task is to cover a region exactly with a given multiset of pieces.
//! Pieces are free polyominoes: any rotation is legal, and reflections are
//! legal too unless the environment is configured one-sided. A `fit` action
//! names a piece type and the absolute cells it should cover; the placement
//! must be congruent to the type, inside the region, disjoint from earlier
//! placements, and backed by an unused piece of that type. `remove` undoes a
//! placement and returns the piece to the inventory.
//!
//! Instances are generated backwards: sample the pieces, pack them by
//! randomized search, and declare the union of the packing to be the region.
//! Every generated instance is therefore solvable, and the bundled
//! exact-cover solver doubles as an oracle agent and a soundness check.

use crate::env::{EnvError, EnvKind, Environment};
use crate::seed;
use crate::svg::SvgDoc;
use crate::trace::{Action, ActionBody, Cell, Observation, Outcome, OutcomeKind};
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

const TILE_GEN_TAG: u64 = 0x7469_6c65; // "tile"

/// Piece alphabet: the seven tetrominoes plus the two trominoes. The
/// declaration order is the canonical type order used by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PieceKind {
    I,
    O,
    T,
    S,
    Z,
    L,
    J,
    I3,
    L3,
}

impl PieceKind {
    pub const ALL: [PieceKind; 9] = [
        PieceKind::I,
        PieceKind::O,
        PieceKind::T,
        PieceKind::S,
        PieceKind::Z,
        PieceKind::L,
        PieceKind::J,
        PieceKind::I3,
        PieceKind::L3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PieceKind::I => "I",
            PieceKind::O => "O",
            PieceKind::T => "T",
            PieceKind::S => "S",
            PieceKind::Z => "Z",
            PieceKind::L => "L",
            PieceKind::J => "J",
            PieceKind::I3 => "I3",
            PieceKind::L3 => "L3",
        }
    }

    pub fn parse(text: &str) -> Option<PieceKind> {
        PieceKind::ALL.iter().copied().find(|k| k.as_str() == text)
    }

    pub fn size(self) -> usize {
        self.base_cells().len()
    }

    /// Reference shape in one fixed orientation.
    pub fn base_cells(self) -> &'static [(i32, i32)] {
        match self {
            PieceKind::I => &[(0, 0), (0, 1), (0, 2), (0, 3)],
            PieceKind::O => &[(0, 0), (0, 1), (1, 0), (1, 1)],
            PieceKind::T => &[(0, 0), (0, 1), (0, 2), (1, 1)],
            PieceKind::S => &[(0, 1), (0, 2), (1, 0), (1, 1)],
            PieceKind::Z => &[(0, 0), (0, 1), (1, 1), (1, 2)],
            PieceKind::L => &[(0, 0), (1, 0), (2, 0), (2, 1)],
            PieceKind::J => &[(0, 1), (1, 1), (2, 1), (2, 0)],
            PieceKind::I3 => &[(0, 0), (0, 1), (0, 2)],
            PieceKind::L3 => &[(0, 0), (1, 0), (1, 1)],
        }
    }
}

impl fmt::Display for PieceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Translates a shape so its minimum row and column are zero and sorts the
/// cells, giving every congruence class a single representative.
pub fn normalize(cells: &BTreeSet<Cell>) -> Vec<Cell> {
    let min_row = cells.iter().map(|c| c.row).min().unwrap_or(0);
    let min_col = cells.iter().map(|c| c.col).min().unwrap_or(0);
    let mut out: Vec<Cell> = cells
        .iter()
        .map(|c| Cell::new(c.row - min_row, c.col - min_col))
        .collect();
    out.sort();
    out
}

/// All distinct orientations of a piece, each normalized, in lexicographic
/// order. With `allow_reflections` the piece is free (both chiralities);
/// without it only rotations count.
pub fn enumerate_variants(kind: PieceKind, allow_reflections: bool) -> Vec<Vec<Cell>> {
    let mut shapes: BTreeSet<Vec<Cell>> = BTreeSet::new();
    let reflections: &[bool] = if allow_reflections {
        &[false, true]
    } else {
        &[false]
    };
    for &reflect in reflections {
        let mut cells: Vec<(i32, i32)> = kind
            .base_cells()
            .iter()
            .map(|&(r, c)| if reflect { (r, -c) } else { (r, c) })
            .collect();
        for _ in 0..4 {
            cells = cells.iter().map(|&(r, c)| (c, -r)).collect();
            let set: BTreeSet<Cell> = cells.iter().map(|&(r, c)| Cell::new(r, c)).collect();
            shapes.insert(normalize(&set));
        }
    }
    shapes.into_iter().collect()
}

/// One committed placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedPiece {
    pub kind: PieceKind,
    pub cells: BTreeSet<Cell>,
}

/// Mutable episode state: the fixed region, the placements so far, and the
/// pieces still unused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilingState {
    pub region: BTreeSet<Cell>,
    pub placed: Vec<PlacedPiece>,
    pub inventory: BTreeMap<PieceKind, u32>,
}

impl TilingState {
    pub fn covered(&self) -> BTreeSet<Cell> {
        self.placed
            .iter()
            .flat_map(|p| p.cells.iter().copied())
            .collect()
    }

    pub fn free_cells(&self) -> BTreeSet<Cell> {
        let covered = self.covered();
        self.region
            .iter()
            .copied()
            .filter(|c| !covered.contains(c))
            .collect()
    }

    /// True iff the placements partition the region exactly: pairwise
    /// disjoint, inside the region, and jointly covering all of it.
    pub fn verify_cover(&self) -> bool {
        let mut seen = BTreeSet::new();
        for piece in &self.placed {
            for cell in &piece.cells {
                if !self.region.contains(cell) || !seen.insert(*cell) {
                    return false;
                }
            }
        }
        seen == self.region
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("instance generation failed: {0}")]
    GenerationFailed(String),
    #[error("bad instance file: {0}")]
    BadFile(String),
}

/// Immutable description of one tiling task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilingInstance {
    pub id: String,
    pub seed: u64,
    pub region: BTreeSet<Cell>,
    /// Piece multiset in canonical type order.
    pub pieces: Vec<PieceKind>,
    pub generation_notes: Vec<String>,
}

impl TilingInstance {
    pub fn inventory(&self) -> BTreeMap<PieceKind, u32> {
        let mut inv = BTreeMap::new();
        for kind in &self.pieces {
            *inv.entry(*kind).or_insert(0) += 1;
        }
        inv
    }
}

/// Generates a `k`-piece instance, deterministic in `(k, seed)`. Pieces are
/// drawn with repetition from the full alphabet; each placement is attached
/// edge-to-edge to the union built so far, and the final union (translated
/// to the origin) becomes the region.
pub fn generate_instance(k: usize, instance_seed: u64) -> Result<TilingInstance, InstanceError> {
    if k == 0 {
        return Err(InstanceError::GenerationFailed("k must be at least 1".into()));
    }
    let mut notes = Vec::new();
    for round in 0..64u64 {
        let mut rng = seed::rng_from(instance_seed, &[TILE_GEN_TAG, k as u64, round]);
        let kinds: Vec<PieceKind> = (0..k)
            .map(|_| PieceKind::ALL[rng.gen_range(0..PieceKind::ALL.len())])
            .collect();
        if let Some(union) = pack(&kinds, &mut rng) {
            let region: BTreeSet<Cell> = normalize(&union).into_iter().collect();
            let mut pieces = kinds;
            pieces.sort();
            return Ok(TilingInstance {
                id: format!("tile-k{k}-s{instance_seed}"),
                seed: instance_seed,
                region,
                pieces,
                generation_notes: notes,
            });
        }
        notes.push(format!("instance generation reseeded after round {round}"));
    }
    Err(InstanceError::GenerationFailed(format!(
        "could not pack {k} pieces for seed {instance_seed}"
    )))
}

/// Randomized packing: place each piece disjointly and edge-adjacent to the
/// union so far (the first piece anchors at the origin).
fn pack(kinds: &[PieceKind], rng: &mut rand_chacha::ChaCha8Rng) -> Option<BTreeSet<Cell>> {
    let mut union: BTreeSet<Cell> = BTreeSet::new();
    for (i, kind) in kinds.iter().enumerate() {
        let variants = enumerate_variants(*kind, true);
        let mut placed = false;
        for _ in 0..400 {
            let variant = &variants[rng.gen_range(0..variants.len())];
            let anchor = if i == 0 {
                (0, 0)
            } else {
                let min_r = union.iter().map(|c| c.row).min().unwrap() - 4;
                let max_r = union.iter().map(|c| c.row).max().unwrap() + 4;
                let min_c = union.iter().map(|c| c.col).min().unwrap() - 4;
                let max_c = union.iter().map(|c| c.col).max().unwrap() + 4;
                (rng.gen_range(min_r..=max_r), rng.gen_range(min_c..=max_c))
            };
            let cells: BTreeSet<Cell> = variant
                .iter()
                .map(|c| Cell::new(c.row + anchor.0, c.col + anchor.1))
                .collect();
            let disjoint = cells.iter().all(|c| !union.contains(c));
            let adjacent = i == 0
                || cells.iter().any(|c| {
                    [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .any(|(dr, dc)| union.contains(&Cell::new(c.row + dr, c.col + dc)))
                });
            if disjoint && adjacent {
                union.extend(cells);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(union)
}

/// Result of an exact-cover search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoverOutcome {
    Solved(Vec<PlacedPiece>),
    Unsolvable,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverResult {
    pub outcome: CoverOutcome,
    /// Backtracking nodes visited (recursion entries).
    pub nodes: u64,
}

/// Depth-first exact cover: always branch on the lexicographically first
/// free cell, trying piece types in canonical order and variants in their
/// canonical enumeration order. Deterministic, bounded by `node_budget`.
pub fn exact_cover(
    region: &BTreeSet<Cell>,
    inventory: &BTreeMap<PieceKind, u32>,
    allow_reflections: bool,
    node_budget: u64,
) -> CoverResult {
    struct Ctx {
        nodes: u64,
        budget: u64,
        variants: BTreeMap<PieceKind, Vec<Vec<Cell>>>,
    }

    fn recurse(
        free: &mut BTreeSet<Cell>,
        inventory: &mut BTreeMap<PieceKind, u32>,
        stack: &mut Vec<PlacedPiece>,
        ctx: &mut Ctx,
    ) -> Option<bool> {
        ctx.nodes += 1;
        if ctx.nodes > ctx.budget {
            return None; // budget exhausted
        }
        let target = match free.iter().next() {
            Some(c) => *c,
            None => return Some(true),
        };
        for kind in PieceKind::ALL {
            if inventory.get(&kind).copied().unwrap_or(0) == 0 {
                continue;
            }
            for variant in ctx.variants[&kind].clone() {
                for pivot in &variant {
                    let anchor = (target.row - pivot.row, target.col - pivot.col);
                    let cells: BTreeSet<Cell> = variant
                        .iter()
                        .map(|c| Cell::new(c.row + anchor.0, c.col + anchor.1))
                        .collect();
                    if !cells.iter().all(|c| free.contains(c)) {
                        continue;
                    }
                    for c in &cells {
                        free.remove(c);
                    }
                    *inventory.get_mut(&kind).unwrap() -= 1;
                    stack.push(PlacedPiece {
                        kind,
                        cells: cells.clone(),
                    });
                    match recurse(free, inventory, stack, ctx) {
                        Some(true) => return Some(true),
                        Some(false) => {}
                        None => return None,
                    }
                    stack.pop();
                    *inventory.get_mut(&kind).unwrap() += 1;
                    free.extend(cells);
                }
            }
        }
        Some(false)
    }

    let mut ctx = Ctx {
        nodes: 0,
        budget: node_budget,
        variants: PieceKind::ALL
            .iter()
            .map(|k| (*k, enumerate_variants(*k, allow_reflections)))
            .collect(),
    };
    let mut free = region.clone();
    let mut inv = inventory.clone();
    let mut stack = Vec::new();
    let outcome = match recurse(&mut free, &mut inv, &mut stack, &mut ctx) {
        Some(true) => CoverOutcome::Solved(stack),
        Some(false) => CoverOutcome::Unsolvable,
        None => CoverOutcome::BudgetExceeded,
    };
    CoverResult {
        outcome,
        nodes: ctx.nodes,
    }
}

/// Glyph grid over the region's bounding box: `#` outside the region, `.`
/// free, and placed pieces shown by placement index (0-9 then a-z).
pub fn render_text(state: &TilingState) -> String {
    if state.region.is_empty() {
        return String::new();
    }
    let min_r = state.region.iter().map(|c| c.row).min().unwrap();
    let max_r = state.region.iter().map(|c| c.row).max().unwrap();
    let min_c = state.region.iter().map(|c| c.col).min().unwrap();
    let max_c = state.region.iter().map(|c| c.col).max().unwrap();
    let mut owner: BTreeMap<Cell, usize> = BTreeMap::new();
    for (i, piece) in state.placed.iter().enumerate() {
        for cell in &piece.cells {
            owner.insert(*cell, i);
        }
    }
    let glyph_for = |i: usize| {
        let glyphs = "0123456789abcdefghijklmnopqrstuvwxyz";
        glyphs.chars().nth(i % glyphs.len()).unwrap()
    };
    let mut out = String::new();
    for row in min_r..=max_r {
        for col in min_c..=max_c {
            let cell = Cell::new(row, col);
            let glyph = if let Some(i) = owner.get(&cell) {
                glyph_for(*i)
            } else if state.region.contains(&cell) {
                '.'
            } else {
                '#'
            };
            out.push(glyph);
        }
        out.push('\n');
    }
    out
}

const CELL_PX: f64 = 20.0;
const PALETTE: [&str; 8] = [
    "#e6734b", "#4b9de6", "#62c462", "#c4a000", "#9b59b6", "#e67e22", "#1abc9c", "#7f8c8d",
];

/// Deterministic SVG: masked cells dark, free region cells outlined, placed
/// pieces colored by placement index.
pub fn render_svg(state: &TilingState) -> String {
    if state.region.is_empty() {
        let mut doc = SvgDoc::new(CELL_PX, CELL_PX);
        doc.rect(0.0, 0.0, CELL_PX, CELL_PX, "#ffffff", Some("#888888"));
        return doc.finish();
    }
    let min_r = state.region.iter().map(|c| c.row).min().unwrap();
    let max_r = state.region.iter().map(|c| c.row).max().unwrap();
    let min_c = state.region.iter().map(|c| c.col).min().unwrap();
    let max_c = state.region.iter().map(|c| c.col).max().unwrap();
    let width = (max_c - min_c + 1) as f64 * CELL_PX;
    let height = (max_r - min_r + 1) as f64 * CELL_PX;
    let mut owner: BTreeMap<Cell, usize> = BTreeMap::new();
    for (i, piece) in state.placed.iter().enumerate() {
        for cell in &piece.cells {
            owner.insert(*cell, i);
        }
    }
    let mut doc = SvgDoc::new(width, height);
    for row in min_r..=max_r {
        for col in min_c..=max_c {
            let cell = Cell::new(row, col);
            let x = (col - min_c) as f64 * CELL_PX;
            let y = (row - min_r) as f64 * CELL_PX;
            let fill = if let Some(i) = owner.get(&cell) {
                PALETTE[i % PALETTE.len()]
            } else if state.region.contains(&cell) {
                "#ffffff"
            } else {
                "#444444"
            };
            doc.rect(x, y, CELL_PX, CELL_PX, fill, Some("#888888"));
        }
    }
    doc.finish()
}

/// Writes the instance file: `k=... seed=...` header, region grid, then the
/// piece multiset as a line of type names.
pub fn write_instance_file(instance: &TilingInstance) -> String {
    let state = TilingState {
        region: instance.region.clone(),
        placed: Vec::new(),
        inventory: instance.inventory(),
    };
    let names: Vec<&str> = instance.pieces.iter().map(|k| k.as_str()).collect();
    format!(
        "k={} seed={}\n{}{}\n",
        instance.pieces.len(),
        instance.seed,
        render_text(&state),
        names.join(" ")
    )
}

/// Parses the instance file format.
pub fn parse_instance_file(text: &str) -> Result<TilingInstance, InstanceError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| InstanceError::BadFile("empty file".into()))?;
    let mut k = None;
    let mut file_seed = None;
    for part in header.split_whitespace() {
        if let Some(v) = part.strip_prefix("k=") {
            k = v.parse::<usize>().ok();
        } else if let Some(v) = part.strip_prefix("seed=") {
            file_seed = v.parse::<u64>().ok();
        }
    }
    let (k, file_seed) = match (k, file_seed) {
        (Some(k), Some(s)) => (k, s),
        _ => {
            return Err(InstanceError::BadFile(format!(
                "header must be `k=... seed=...`, got {header:?}"
            )))
        }
    };

    let rest: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    let (grid_rows, piece_line) = match rest.split_last() {
        Some((last, rows)) if !rows.is_empty() => (rows, *last),
        _ => return Err(InstanceError::BadFile("missing grid or piece line".into())),
    };

    let mut region = BTreeSet::new();
    for (r, row) in grid_rows.iter().enumerate() {
        for (c, glyph) in row.chars().enumerate() {
            match glyph {
                '#' => {}
                '.' => {
                    region.insert(Cell::new(r as i32, c as i32));
                }
                other => {
                    return Err(InstanceError::BadFile(format!(
                        "unknown region glyph {other:?}"
                    )))
                }
            }
        }
    }
    if region.is_empty() {
        return Err(InstanceError::BadFile("region is empty".into()));
    }

    let mut pieces = Vec::new();
    for name in piece_line.split_whitespace() {
        let kind = PieceKind::parse(name)
            .ok_or_else(|| InstanceError::BadFile(format!("unknown piece type {name:?}")))?;
        pieces.push(kind);
    }
    pieces.sort();
    if pieces.len() != k {
        return Err(InstanceError::BadFile(format!(
            "header says k={k} but {} pieces listed",
            pieces.len()
        )));
    }
    Ok(TilingInstance {
        id: format!("tile-k{k}-s{file_seed}"),
        seed: file_seed,
        region,
        pieces,
        generation_notes: Vec::new(),
    })
}

/// Tiling task plugged into the search engine.
#[derive(Debug, Clone)]
pub struct TilingEnv {
    pub instance: TilingInstance,
    pub allow_reflections: bool,
}

impl TilingEnv {
    pub fn new(instance: TilingInstance) -> Self {
        TilingEnv {
            instance,
            allow_reflections: true,
        }
    }

    pub fn one_sided(mut self) -> Self {
        self.allow_reflections = false;
        self
    }

    fn feedback(&self, state: &TilingState, text: String) -> Observation {
        Observation::feedback(text, Some(render_svg(state)))
    }

    fn fit(
        &self,
        state: &TilingState,
        kind: PieceKind,
        cells: &[Cell],
    ) -> Result<(TilingState, Observation), EnvError> {
        if cells.len() != kind.size() {
            return Err(EnvError::MalformedAction(format!(
                "a {kind} piece covers {} cells, got {}",
                kind.size(),
                cells.len()
            )));
        }
        let cellset: BTreeSet<Cell> = cells.iter().copied().collect();
        if state.inventory.get(&kind).copied().unwrap_or(0) == 0 {
            let text = format!("no unused {kind} piece remains");
            return Ok((state.clone(), self.feedback(state, text)));
        }
        let variants = enumerate_variants(kind, self.allow_reflections);
        if !variants.contains(&normalize(&cellset)) {
            let text = format!("shape is not a variant of {kind}");
            return Ok((state.clone(), self.feedback(state, text)));
        }
        if let Some(cell) = cellset.iter().find(|c| !state.region.contains(c)) {
            let text = format!("cell {cell} is outside the region");
            return Ok((state.clone(), self.feedback(state, text)));
        }
        let covered = state.covered();
        if let Some(cell) = cellset.iter().find(|c| covered.contains(c)) {
            let text = format!("cell {cell} is already occupied");
            return Ok((state.clone(), self.feedback(state, text)));
        }

        let mut next = state.clone();
        *next.inventory.get_mut(&kind).unwrap() -= 1;
        next.placed.push(PlacedPiece {
            kind,
            cells: cellset,
        });
        let free = next.free_cells().len();
        if free == 0 {
            let obs = Observation::terminal(
                "region completely covered".to_string(),
                Some(render_svg(&next)),
                Outcome::goal_reached("uncovered=0"),
            );
            Ok((next, obs))
        } else {
            let text = format!("placed {kind}; {free} free cells remain");
            let obs = self.feedback(&next, text);
            Ok((next, obs))
        }
    }

    fn remove(
        &self,
        state: &TilingState,
        kind: PieceKind,
        cells: &[Cell],
    ) -> Result<(TilingState, Observation), EnvError> {
        let cellset: BTreeSet<Cell> = cells.iter().copied().collect();
        let found = state
            .placed
            .iter()
            .position(|p| p.cells == cellset && p.kind == kind);
        match found {
            Some(i) => {
                let mut next = state.clone();
                next.placed.remove(i);
                *next.inventory.entry(kind).or_insert(0) += 1;
                let text = format!("removed {kind}; piece returned to the inventory");
                let obs = self.feedback(&next, text);
                Ok((next, obs))
            }
            None => {
                let text = format!("no placed {kind} occupies exactly those cells");
                Ok((state.clone(), self.feedback(state, text)))
            }
        }
    }
}

impl Environment for TilingEnv {
    type State = TilingState;

    fn kind(&self) -> EnvKind {
        EnvKind::Tiling
    }

    fn task_id(&self) -> String {
        self.instance.id.clone()
    }

    fn task_description(&self) -> String {
        let names: Vec<&str> = self.instance.pieces.iter().map(|k| k.as_str()).collect();
        let chirality = if self.allow_reflections {
            "rotations and reflections are legal"
        } else {
            "rotations are legal, reflections are not"
        };
        format!(
            "Cover the region exactly with these pieces: {} ({chirality}). \
             `.` is free, `#` is outside the region. Fit actions look like \
             `{{\"polyomino\": \"L\", \"cells\": [[r, c], ...], \"action\": \"fit\"}}`.\n{}",
            names.join(" "),
            render_text(&TilingState {
                region: self.instance.region.clone(),
                placed: Vec::new(),
                inventory: self.instance.inventory(),
            })
        )
    }

    fn initial_state(&self) -> TilingState {
        TilingState {
            region: self.instance.region.clone(),
            placed: Vec::new(),
            inventory: self.instance.inventory(),
        }
    }

    fn observe_initial(&self, state: &TilingState) -> Observation {
        if state.free_cells().is_empty() {
            return Observation::terminal(
                "region is already covered".to_string(),
                Some(render_svg(state)),
                Outcome::goal_reached("uncovered=0"),
            );
        }
        let text = format!(
            "{} free cells to cover with {} pieces",
            state.free_cells().len(),
            state.inventory.values().sum::<u32>()
        );
        self.feedback(state, text)
    }

    fn apply(
        &self,
        state: &TilingState,
        action: &Action,
    ) -> Result<(TilingState, Observation), EnvError> {
        match &action.body {
            ActionBody::TileFit { piece, cells } | ActionBody::TileRemove { piece, cells } => {
                let kind = PieceKind::parse(piece).ok_or_else(|| {
                    EnvError::MalformedAction(format!("unknown polyomino type {piece:?}"))
                })?;
                if matches!(action.body, ActionBody::TileFit { .. }) {
                    self.fit(state, kind, cells)
                } else {
                    self.remove(state, kind, cells)
                }
            }
            ActionBody::FinalAnswer { .. } => {
                let uncovered = state.free_cells().len();
                let outcome = if uncovered == 0 {
                    Outcome::goal_reached("uncovered=0")
                } else {
                    Outcome::goal_failed(format!("uncovered={uncovered}"))
                };
                let text = if uncovered == 0 {
                    "stopped with the region covered".to_string()
                } else {
                    format!("stopped with {uncovered} cells uncovered")
                };
                Ok((
                    state.clone(),
                    Observation::terminal(text, Some(render_svg(state)), outcome),
                ))
            }
            other => Err(EnvError::MalformedAction(format!(
                "tiling cannot execute a {} action",
                other.kind()
            ))),
        }
    }

    fn ground_truth_score(&self, end_state: &TilingState, outcome: &Outcome) -> f64 {
        if outcome.kind == OutcomeKind::GoalReached {
            return 1.0;
        }
        let uncovered = end_state.free_cells().len() as f64;
        let total = end_state.region.len().max(1) as f64;
        (-(uncovered / total)).max(-1.0)
    }

    fn outcome_success(&self, outcome: &Outcome) -> bool {
        outcome.kind == OutcomeKind::GoalReached
    }
}
