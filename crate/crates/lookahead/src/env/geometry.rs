//! Plane geometry problems with auxiliary-line construction.
//!
//! An episode has two phases. In the construction phase the agent may extend
//! the figure: connect two named points, drop a perpendicular foot onto a
//! line, or draw a segment through a point parallel to a reference line. The
//! `aux_end` action closes the figure and switches to the computation phase,
//! where the agent solves equations in one unknown `x` and finally commits a
//! numeric answer. Actions sent in the wrong phase are protocol errors, not
//! in-world failures; a legal drawing command that is geometrically
//! impossible (say a perpendicular from a point already on the line) comes
//! back as ordinary failure feedback.
//!
//! Construction-phase observations carry an SVG of the current figure with
//! auxiliary elements dashed; computation-phase observations are textual.

use crate::env::{EnvError, EnvKind, Environment};
use crate::svg::SvgDoc;
use crate::trace::{Action, ActionBody, AuxCommand, Observation, Outcome, OutcomeKind};
use std::fmt::Write as _;
use thiserror::Error;

/// A named point. `aux` marks points created during construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub aux: bool,
}

/// A segment between two named points. `aux` marks constructed segments,
/// drawn dashed.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub a: String,
    pub b: String,
    pub aux: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub points: Vec<Point>,
    pub segments: Vec<Segment>,
}

impl Scene {
    pub fn point(&self, name: &str) -> Option<&Point> {
        self.points.iter().find(|p| p.name == name)
    }

    pub fn has_segment(&self, a: &str, b: &str) -> bool {
        self.segments
            .iter()
            .any(|s| (s.a == a && s.b == b) || (s.a == b && s.b == a))
    }

    /// First unused name in the series `{prefix}1`, `{prefix}2`, ...
    pub fn next_name(&self, prefix: &str) -> String {
        let taken = self
            .points
            .iter()
            .filter_map(|p| p.name.strip_prefix(prefix)?.parse::<u32>().ok())
            .max()
            .unwrap_or(0);
        format!("{prefix}{}", taken + 1)
    }
}

/// Numbers in feedback text: up to four decimals, trailing zeros trimmed.
fn fmt_num(v: f64) -> String {
    let mut s = format!("{v:.4}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

const EPS: f64 = 1e-9;

/// Executes one drawing command, returning the extended scene and a line of
/// feedback, or the reason the command is impossible. `AuxEnd` is a phase
/// transition, not a drawing command, and is rejected here.
pub fn apply_aux(scene: &Scene, cmd: &AuxCommand) -> Result<(Scene, String), String> {
    match cmd {
        AuxCommand::Connect { p, q } => {
            let (pp, qq) = (lookup(scene, p)?, lookup(scene, q)?);
            if p == q {
                return Err(format!("cannot connect {p} to itself"));
            }
            if scene.has_segment(p, q) {
                return Err(format!("{p} and {q} are already connected"));
            }
            let mut next = scene.clone();
            let _ = (pp, qq);
            next.segments.push(Segment {
                a: p.clone(),
                b: q.clone(),
                aux: true,
            });
            Ok((next, format!("connected {p} and {q}")))
        }
        AuxCommand::PerpendicularFoot { from, onto } => {
            let p = lookup(scene, from)?;
            let (a, b) = (lookup(scene, &onto.0)?, lookup(scene, &onto.1)?);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            if len2 < EPS * EPS {
                return Err(format!(
                    "{} and {} coincide; they do not define a line",
                    onto.0, onto.1
                ));
            }
            let t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
            let (fx, fy) = (a.x + t * dx, a.y + t * dy);
            if (fx - p.x).hypot(fy - p.y) < EPS {
                return Err(format!(
                    "{from} already lies on the line through {} and {}",
                    onto.0, onto.1
                ));
            }
            let name = scene.next_name("F");
            let mut next = scene.clone();
            next.points.push(Point {
                name: name.clone(),
                x: fx,
                y: fy,
                aux: true,
            });
            next.segments.push(Segment {
                a: from.clone(),
                b: name.clone(),
                aux: true,
            });
            Ok((
                next,
                format!(
                    "dropped a perpendicular from {from} to the line through {} and {}; \
                     the foot is {name} = ({}, {})",
                    onto.0,
                    onto.1,
                    fmt_num(fx),
                    fmt_num(fy)
                ),
            ))
        }
        AuxCommand::ParallelThrough {
            through,
            reference,
            length,
        } => {
            let p = lookup(scene, through)?;
            let (a, b) = (lookup(scene, &reference.0)?, lookup(scene, &reference.1)?);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let norm = dx.hypot(dy);
            if norm < EPS {
                return Err(format!(
                    "{} and {} coincide; they do not define a direction",
                    reference.0, reference.1
                ));
            }
            if !length.is_finite() || length.abs() < EPS {
                return Err("length must be a nonzero number".to_string());
            }
            let (qx, qy) = (p.x + dx / norm * length, p.y + dy / norm * length);
            let name = scene.next_name("Q");
            let mut next = scene.clone();
            next.points.push(Point {
                name: name.clone(),
                x: qx,
                y: qy,
                aux: true,
            });
            next.segments.push(Segment {
                a: through.clone(),
                b: name.clone(),
                aux: true,
            });
            Ok((
                next,
                format!(
                    "drew a segment from {through} parallel to {}{}; it ends at {name} = ({}, {})",
                    reference.0,
                    reference.1,
                    fmt_num(qx),
                    fmt_num(qy)
                ),
            ))
        }
        AuxCommand::AuxEnd => Err("aux_end is not a drawing command".to_string()),
    }
}

fn lookup<'s>(scene: &'s Scene, name: &str) -> Result<&'s Point, String> {
    scene
        .point(name)
        .ok_or_else(|| format!("no point named {name}"))
}

const CANVAS: f64 = 400.0;

/// Deterministic figure rendering: solid dark strokes for the given figure,
/// dashed red for auxiliary elements, labels beside each point. The viewport
/// fits the points with a 10% margin; y grows upward.
pub fn render_svg(scene: &Scene) -> String {
    if scene.points.is_empty() {
        let mut doc = SvgDoc::new(CANVAS, CANVAS);
        doc.text(CANVAS / 2.0, CANVAS / 2.0, 12.0, "empty figure");
        return doc.finish();
    }
    let min_x = scene.points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = scene.points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = scene.points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = scene.points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let span = (max_x - min_x).max(max_y - min_y);
    let pad = if span < EPS { 0.5 } else { span * 0.1 };
    let (wx0, wx1) = (min_x - pad, max_x + pad);
    let (wy0, wy1) = (min_y - pad, max_y + pad);
    let scale = CANVAS / (wx1 - wx0);
    let height = (wy1 - wy0) * scale;
    let map = |x: f64, y: f64| ((x - wx0) * scale, (wy1 - y) * scale);

    let mut doc = SvgDoc::new(CANVAS, height);
    for seg in &scene.segments {
        let (a, b) = match (scene.point(&seg.a), scene.point(&seg.b)) {
            (Some(a), Some(b)) => (a, b),
            _ => continue,
        };
        let (x1, y1) = map(a.x, a.y);
        let (x2, y2) = map(b.x, b.y);
        let color = if seg.aux { "#d9534b" } else { "#222222" };
        doc.line(x1, y1, x2, y2, color, seg.aux);
    }
    for point in &scene.points {
        let (x, y) = map(point.x, point.y);
        let color = if point.aux { "#d9534b" } else { "#222222" };
        doc.circle(x, y, 3.0, color);
        doc.text(x + 5.0, y - 5.0, 12.0, &point.name);
    }
    doc.finish()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquationError {
    #[error("could not parse equation: {0}")]
    Parse(String),
    #[error("the equation holds for every x")]
    Tautology,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Sqrt(Box<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var => x,
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Node::Neg(a) => -a.eval(x),
            Node::Sqrt(a) => a.eval(x).sqrt(),
        }
    }

    /// Coefficients (constant term first) when the expression is a
    /// polynomial in `x` of modest degree; `None` sends the solver down the
    /// numeric path.
    fn to_poly(&self) -> Option<Vec<f64>> {
        fn add(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
            let mut out = vec![0.0; a.len().max(b.len())];
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = a.get(i).copied().unwrap_or(0.0) + sign * b.get(i).copied().unwrap_or(0.0);
            }
            out
        }
        match self {
            Node::Num(v) => Some(vec![*v]),
            Node::Var => Some(vec![0.0, 1.0]),
            Node::Add(a, b) => Some(add(&a.to_poly()?, &b.to_poly()?, 1.0)),
            Node::Sub(a, b) => Some(add(&a.to_poly()?, &b.to_poly()?, -1.0)),
            Node::Mul(a, b) => mul_polys(&a.to_poly()?, &b.to_poly()?),
            Node::Div(a, b) => {
                let pb = trim(b.to_poly()?);
                if pb.len() != 1 || pb[0] == 0.0 {
                    return None;
                }
                Some(a.to_poly()?.iter().map(|c| c / pb[0]).collect())
            }
            Node::Pow(a, b) => {
                let pb = trim(b.to_poly()?);
                if pb.len() != 1 {
                    return None;
                }
                let e = pb[0];
                if e < 0.0 || e.fract() != 0.0 || e > MAX_POLY_DEG as f64 {
                    return None;
                }
                let base = a.to_poly()?;
                let mut out = vec![1.0];
                for _ in 0..e as usize {
                    out = mul_polys(&out, &base)?;
                }
                Some(out)
            }
            Node::Neg(a) => Some(a.to_poly()?.iter().map(|c| -c).collect()),
            Node::Sqrt(a) => {
                let pa = trim(a.to_poly()?);
                if pa.len() == 1 && pa[0] >= 0.0 {
                    Some(vec![pa[0].sqrt()])
                } else {
                    None
                }
            }
        }
    }
}

const MAX_POLY_DEG: usize = 16;

fn mul_polys(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    if a.len() + b.len() > MAX_POLY_DEG + 2 {
        return None;
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ca) in a.iter().enumerate() {
        for (j, &cb) in b.iter().enumerate() {
            out[i + j] += ca * cb;
        }
    }
    Some(out)
}

fn trim(mut poly: Vec<f64>) -> Vec<f64> {
    let scale = poly.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    while poly.len() > 1 && poly.last().unwrap().abs() <= 1e-12 * scale {
        poly.pop();
    }
    poly
}

struct Parser<'t> {
    chars: std::iter::Peekable<std::str::Chars<'t>>,
}

impl<'t> Parser<'t> {
    fn new(text: &'t str) -> Self {
        Parser {
            chars: text.chars().peekable(),
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn eat(&mut self, want: char) -> bool {
        self.skip_ws();
        if self.chars.peek() == Some(&want) {
            self.chars.next();
            return true;
        }
        false
    }

    fn expr(&mut self) -> Result<Node, String> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, String> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, String> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, String> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, String> {
        self.skip_ws();
        match self.chars.peek().copied() {
            Some('(') => {
                self.chars.next();
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err("missing closing parenthesis".to_string());
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let mut name = String::new();
                while matches!(self.chars.peek(), Some(c) if c.is_ascii_alphanumeric()) {
                    name.push(self.chars.next().unwrap());
                }
                match name.as_str() {
                    "x" => Ok(Node::Var),
                    "sqrt" => {
                        if !self.eat('(') {
                            return Err("sqrt needs parentheses".to_string());
                        }
                        let inner = self.expr()?;
                        if !self.eat(')') {
                            return Err("missing closing parenthesis".to_string());
                        }
                        Ok(Node::Sqrt(Box::new(inner)))
                    }
                    other => Err(format!("unknown identifier {other:?}; the unknown is x")),
                }
            }
            Some(c) => Err(format!("unexpected character {c:?}")),
            None => Err("unexpected end of input".to_string()),
        }
    }

    fn number(&mut self) -> Result<Node, String> {
        let mut text = String::new();
        while matches!(self.chars.peek(), Some(c) if c.is_ascii_digit() || *c == '.') {
            text.push(self.chars.next().unwrap());
        }
        if matches!(self.chars.peek(), Some('e') | Some('E')) {
            let mut probe = self.chars.clone();
            let e = probe.next().unwrap();
            let mut tail = String::new();
            if matches!(probe.peek(), Some('+') | Some('-')) {
                tail.push(probe.next().unwrap());
            }
            let mut digits = false;
            while matches!(probe.peek(), Some(c) if c.is_ascii_digit()) {
                tail.push(probe.next().unwrap());
                digits = true;
            }
            if digits {
                text.push(e);
                text.push_str(&tail);
                self.chars = probe;
            }
        }
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| format!("bad number {text:?}"))
    }

    fn finish(&mut self) -> Result<(), String> {
        self.skip_ws();
        match self.chars.peek() {
            None => Ok(()),
            Some(c) => Err(format!("unexpected trailing {c:?}")),
        }
    }
}

fn parse_side(text: &str) -> Result<Node, EquationError> {
    let mut parser = Parser::new(text);
    let node = parser.expr().map_err(EquationError::Parse)?;
    parser.finish().map_err(EquationError::Parse)?;
    Ok(node)
}

const SCAN_LO: f64 = -1e6;
const SCAN_HI: f64 = 1e6;
const SCAN_INTERVALS: u32 = 64;
const ROOT_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-7;

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

/// Sign-change scan over 64 equal intervals of `[-1e6, 1e6]`, each crossing
/// refined by bisection. Intervals with non-finite endpoints are skipped.
fn scan_roots(f: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let step = (SCAN_HI - SCAN_LO) / SCAN_INTERVALS as f64;
    let mut roots = Vec::new();
    let mut prev_x = SCAN_LO;
    let mut prev_f = f(prev_x);
    if prev_f == 0.0 {
        roots.push(prev_x);
    }
    for i in 1..=SCAN_INTERVALS {
        let x = SCAN_LO + step * i as f64;
        let fx = f(x);
        if fx == 0.0 {
            roots.push(x);
        } else if prev_f.is_finite() && fx.is_finite() && prev_f * fx < 0.0 {
            roots.push(bisect(f, prev_x, x, prev_f));
        }
        prev_x = x;
        prev_f = fx;
    }
    dedup_sorted(roots)
}

fn dedup_sorted(mut roots: Vec<f64>) -> Vec<f64> {
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::new();
    for r in roots {
        if out.last().map_or(true, |&last| (r - last).abs() > DEDUP_TOL) {
            out.push(r);
        }
    }
    out
}

/// Solves `lhs = rhs` for `x`. Polynomials up to degree two get the closed
/// form; everything else goes through the sign-change scan. Roots come back
/// sorted ascending; an empty vector means no real solution was found.
pub fn solve_equation(source: &str) -> Result<Vec<f64>, EquationError> {
    let mut sides = source.split('=');
    let (lhs, rhs) = match (sides.next(), sides.next(), sides.next()) {
        (Some(l), Some(r), None) => (l, r),
        _ => {
            return Err(EquationError::Parse(
                "an equation needs exactly one `=`".to_string(),
            ))
        }
    };
    let node = Node::Sub(Box::new(parse_side(lhs)?), Box::new(parse_side(rhs)?));

    if let Some(poly) = node.to_poly().map(trim) {
        match poly.len() {
            1 => {
                return if poly[0].abs() <= 1e-9 {
                    Err(EquationError::Tautology)
                } else {
                    Ok(Vec::new())
                };
            }
            2 => return Ok(vec![-poly[0] / poly[1]]),
            3 => {
                let (c, b, a) = (poly[0], poly[1], poly[2]);
                let disc = b * b - 4.0 * a * c;
                let scale = (b * b).max((4.0 * a * c).abs()).max(1.0);
                if disc < -1e-9 * scale {
                    return Ok(Vec::new());
                }
                if disc <= 0.0 {
                    return Ok(vec![-b / (2.0 * a)]);
                }
                let sq = disc.sqrt();
                let roots = vec![(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
                return Ok(dedup_sorted(roots));
            }
            _ => {}
        }
    }
    Ok(scan_roots(&|x| node.eval(x)))
}

/// Relative comparison with an absolute floor of one: small targets are not
/// held to impossible precision.
pub fn check_answer(value: f64, target: f64, tolerance: f64) -> bool {
    (value - target).abs() <= tolerance * target.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Construction,
    Computation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryState {
    pub scene: Scene,
    pub phase: Phase,
}

/// One step of a worked solution, used by the scripted solver agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptStep {
    pub thought: String,
    pub body: ActionBody,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryProblem {
    pub id: String,
    pub description: String,
    pub scene: Scene,
    pub answer: f64,
    pub tolerance: f64,
    pub script: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("bad problem file: {0}")]
    BadFile(String),
}

/// Line-oriented problem file: a header, one `desc` line, `point` and
/// `segment` lines, then alternating `thought`/`action` lines for the worked
/// solution.
pub fn write_problem_file(problem: &GeometryProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "id={} answer={} tolerance={}",
        problem.id, problem.answer, problem.tolerance
    );
    let _ = writeln!(out, "desc {}", problem.description);
    for p in &problem.scene.points {
        let _ = writeln!(out, "point {} {} {}", p.name, p.x, p.y);
    }
    for s in &problem.scene.segments {
        let _ = writeln!(out, "segment {} {}", s.a, s.b);
    }
    for step in &problem.script {
        let _ = writeln!(out, "thought {}", step.thought);
        let _ = writeln!(out, "action {}", step.body.wire_text());
    }
    out
}

pub fn parse_problem_file(text: &str) -> Result<GeometryProblem, ProblemError> {
    let bad = |msg: String| ProblemError::BadFile(msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".to_string()))?;
    let (mut id, mut answer, mut tolerance) = (None, None, None);
    for part in header.split_whitespace() {
        if let Some(v) = part.strip_prefix("id=") {
            id = Some(v.to_string());
        } else if let Some(v) = part.strip_prefix("answer=") {
            answer = v.parse::<f64>().ok();
        } else if let Some(v) = part.strip_prefix("tolerance=") {
            tolerance = v.parse::<f64>().ok();
        }
    }
    let (id, answer, tolerance) = match (id, answer, tolerance) {
        (Some(i), Some(a), Some(t)) => (i, a, t),
        _ => {
            return Err(bad(format!(
                "header must be `id=... answer=... tolerance=...`, got {header:?}"
            )))
        }
    };

    let mut description = None;
    let mut scene = Scene::default();
    let mut script = Vec::new();
    let mut pending_thought: Option<String> = None;
    for line in lines {
        let (verb, rest) = line.split_once(' ').unwrap_or((line, ""));
        if verb != "action" && pending_thought.is_some() {
            return Err(bad("each thought line needs an action line".to_string()));
        }
        match verb {
            "desc" => description = Some(rest.to_string()),
            "point" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(bad(format!("point line needs name x y, got {rest:?}")));
                }
                let name = parts[0];
                if !name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                    || !name.chars().all(|c| c.is_ascii_alphanumeric())
                {
                    return Err(bad(format!("bad point name {name:?}")));
                }
                if scene.point(name).is_some() {
                    return Err(bad(format!("duplicate point {name:?}")));
                }
                let x = parts[1].parse::<f64>().map_err(|_| bad(format!("bad x in {rest:?}")))?;
                let y = parts[2].parse::<f64>().map_err(|_| bad(format!("bad y in {rest:?}")))?;
                scene.points.push(Point {
                    name: name.to_string(),
                    x,
                    y,
                    aux: false,
                });
            }
            "segment" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(bad(format!("segment line needs two names, got {rest:?}")));
                }
                for name in &parts {
                    if scene.point(name).is_none() {
                        return Err(bad(format!("segment references unknown point {name:?}")));
                    }
                }
                scene.segments.push(Segment {
                    a: parts[0].to_string(),
                    b: parts[1].to_string(),
                    aux: false,
                });
            }
            "thought" => pending_thought = Some(rest.to_string()),
            "action" => {
                let thought = pending_thought
                    .take()
                    .ok_or_else(|| bad("action line without a preceding thought".to_string()))?;
                let body = ActionBody::from_wire_text(rest)
                    .map_err(|e| bad(format!("bad action line: {e}")))?;
                script.push(ScriptStep { thought, body });
            }
            other => return Err(bad(format!("unknown line verb {other:?}"))),
        }
    }
    if pending_thought.is_some() {
        return Err(bad("each thought line needs an action line".to_string()));
    }
    let description = description.ok_or_else(|| bad("missing desc line".to_string()))?;
    if scene.points.is_empty() {
        return Err(bad("a problem needs at least one point".to_string()));
    }
    Ok(GeometryProblem {
        id,
        description,
        scene,
        answer,
        tolerance,
        script,
    })
}

/// Geometry task plugged into the search engine.
#[derive(Debug, Clone)]
pub struct GeometryEnv {
    pub problem: GeometryProblem,
}

impl GeometryEnv {
    pub fn new(problem: GeometryProblem) -> Self {
        GeometryEnv { problem }
    }
}

impl Environment for GeometryEnv {
    type State = GeometryState;

    fn kind(&self) -> EnvKind {
        EnvKind::Geometry
    }

    fn task_id(&self) -> String {
        self.problem.id.clone()
    }

    fn task_description(&self) -> String {
        let coords: Vec<String> = self
            .problem
            .scene
            .points
            .iter()
            .map(|p| format!("{} = ({}, {})", p.name, fmt_num(p.x), fmt_num(p.y)))
            .collect();
        format!(
            "{} Points: {}. Draw auxiliary lines if they help, send \
             {{\"aux_end\": true}} when the figure is complete, then solve \
             equations in x and give a final numeric answer.",
            self.problem.description,
            coords.join(", ")
        )
    }

    fn initial_state(&self) -> GeometryState {
        GeometryState {
            scene: self.problem.scene.clone(),
            phase: Phase::Construction,
        }
    }

    fn observe_initial(&self, state: &GeometryState) -> Observation {
        Observation::feedback(
            "construction phase: extend the figure or send aux_end",
            Some(render_svg(&state.scene)),
        )
    }

    fn apply(
        &self,
        state: &GeometryState,
        action: &Action,
    ) -> Result<(GeometryState, Observation), EnvError> {
        match &action.body {
            ActionBody::GeomAux(AuxCommand::AuxEnd) => {
                if state.phase == Phase::Computation {
                    return Err(EnvError::PhaseViolation(
                        "auxiliary construction already finished".to_string(),
                    ));
                }
                let next = GeometryState {
                    scene: state.scene.clone(),
                    phase: Phase::Computation,
                };
                Ok((
                    next,
                    Observation::feedback(
                        "construction finished; solve equations and give a final answer",
                        None,
                    ),
                ))
            }
            ActionBody::GeomAux(cmd) => {
                if state.phase == Phase::Computation {
                    return Err(EnvError::PhaseViolation(
                        "drawing is not allowed after aux_end".to_string(),
                    ));
                }
                match apply_aux(&state.scene, cmd) {
                    Ok((scene, text)) => {
                        let obs = Observation::feedback(text, Some(render_svg(&scene)));
                        Ok((
                            GeometryState {
                                scene,
                                phase: Phase::Construction,
                            },
                            obs,
                        ))
                    }
                    Err(reason) => Ok((
                        state.clone(),
                        Observation::feedback(
                            format!("construction failed: {reason}"),
                            Some(render_svg(&state.scene)),
                        ),
                    )),
                }
            }
            ActionBody::GeomEquation { source } => {
                if state.phase == Phase::Construction {
                    return Err(EnvError::PhaseViolation(
                        "finish construction with aux_end before computing".to_string(),
                    ));
                }
                let text = match solve_equation(source) {
                    Ok(roots) if roots.is_empty() => "no real solutions".to_string(),
                    Ok(roots) => {
                        let parts: Vec<String> =
                            roots.iter().map(|r| format!("x = {r}")).collect();
                        format!("solutions: {}", parts.join(", "))
                    }
                    Err(e) => format!("equation error: {e}"),
                };
                Ok((state.clone(), Observation::feedback(text, None)))
            }
            ActionBody::FinalAnswer { value: Some(v) } => {
                let outcome = Outcome::numeric_answer(*v, format!("answer={v}"));
                Ok((
                    state.clone(),
                    Observation::terminal(format!("final answer recorded: {v}"), None, outcome),
                ))
            }
            ActionBody::FinalAnswer { value: None } => Ok((
                state.clone(),
                Observation::terminal(
                    "no numeric answer given",
                    None,
                    Outcome::goal_failed("answer=none"),
                ),
            )),
            other => Err(EnvError::MalformedAction(format!(
                "geometry cannot execute a {} action",
                other.kind()
            ))),
        }
    }

    fn ground_truth_score(&self, _end_state: &GeometryState, outcome: &Outcome) -> f64 {
        match (outcome.kind, outcome.value) {
            (OutcomeKind::NumericAnswer, Some(v)) => {
                if check_answer(v, self.problem.answer, self.problem.tolerance) {
                    1.0
                } else {
                    let rel = (v - self.problem.answer).abs() / self.problem.answer.abs().max(1.0);
                    -rel.min(1.0)
                }
            }
            _ => -1.0,
        }
    }

    fn outcome_success(&self, outcome: &Outcome) -> bool {
        matches!((outcome.kind, outcome.value), (OutcomeKind::NumericAnswer, Some(v))
            if check_answer(v, self.problem.answer, self.problem.tolerance))
    }
}

fn given_point(name: &str, x: f64, y: f64) -> Point {
    Point {
        name: name.to_string(),
        x,
        y,
        aux: false,
    }
}

fn given_segment(a: &str, b: &str) -> Segment {
    Segment {
        a: a.to_string(),
        b: b.to_string(),
        aux: false,
    }
}

fn step(thought: &str, body: ActionBody) -> ScriptStep {
    ScriptStep {
        thought: thought.to_string(),
        body,
    }
}

fn aux_end() -> ActionBody {
    ActionBody::GeomAux(AuxCommand::AuxEnd)
}

fn equation(src: &str) -> ActionBody {
    ActionBody::GeomEquation {
        source: src.to_string(),
    }
}

fn answer(v: f64) -> ActionBody {
    ActionBody::FinalAnswer { value: Some(v) }
}

/// The built-in problem set: small plane figures whose answers are fixed by
/// the given coordinates, each with a worked solution script.
pub fn builtin_problems() -> Vec<GeometryProblem> {
    let connect = |p: &str, q: &str| {
        ActionBody::GeomAux(AuxCommand::Connect {
            p: p.to_string(),
            q: q.to_string(),
        })
    };
    let perp = |from: &str, a: &str, b: &str| {
        ActionBody::GeomAux(AuxCommand::PerpendicularFoot {
            from: from.to_string(),
            onto: (a.to_string(), b.to_string()),
        })
    };
    let parallel = |through: &str, a: &str, b: &str, length: f64| {
        ActionBody::GeomAux(AuxCommand::ParallelThrough {
            through: through.to_string(),
            reference: (a.to_string(), b.to_string()),
            length,
        })
    };

    vec![
        GeometryProblem {
            id: "geo-rect-area".to_string(),
            description: "Rectangle ABCD has AB = 9 and BC = 6. Find its area.".to_string(),
            scene: Scene {
                points: vec![
                    given_point("A", 0.0, 0.0),
                    given_point("B", 9.0, 0.0),
                    given_point("C", 9.0, 6.0),
                    given_point("D", 0.0, 6.0),
                ],
                segments: vec![
                    given_segment("A", "B"),
                    given_segment("B", "C"),
                    given_segment("C", "D"),
                    given_segment("D", "A"),
                ],
            },
            answer: 54.0,
            tolerance: 0.01,
            script: vec![
                step("The figure is complete; area is length times width.", aux_end()),
                step("Multiply the two side lengths.", equation("x = 9 * 6")),
                step("The area is 54.", answer(54.0)),
            ],
        },
        GeometryProblem {
            id: "geo-tri-area".to_string(),
            description: "Right triangle ABC has legs AB = 15 and BC = 8 meeting at B. \
                          Find its area."
                .to_string(),
            scene: Scene {
                points: vec![
                    given_point("A", 0.0, 0.0),
                    given_point("B", 15.0, 0.0),
                    given_point("C", 15.0, 8.0),
                ],
                segments: vec![
                    given_segment("A", "B"),
                    given_segment("B", "C"),
                    given_segment("C", "A"),
                ],
            },
            answer: 60.0,
            tolerance: 0.01,
            script: vec![
                step("The legs are perpendicular, so no construction is needed.", aux_end()),
                step("Twice the area equals the product of the legs.", equation("2 * x = 15 * 8")),
                step("The area is 60.", answer(60.0)),
            ],
        },
        GeometryProblem {
            id: "geo-rect-perimeter".to_string(),
            description: "Rectangle ABCD has AB = 13 and BC = 9. Find its perimeter.".to_string(),
            scene: Scene {
                points: vec![
                    given_point("A", 0.0, 0.0),
                    given_point("B", 13.0, 0.0),
                    given_point("C", 13.0, 9.0),
                    given_point("D", 0.0, 9.0),
                ],
                segments: vec![
                    given_segment("A", "B"),
                    given_segment("B", "C"),
                    given_segment("C", "D"),
                    given_segment("D", "A"),
                ],
            },
            answer: 44.0,
            tolerance: 0.01,
            script: vec![
                step(
                    "Mark the vertical span from A to confirm it matches BC.",
                    parallel("A", "B", "C", 9.0),
                ),
                step("Both side lengths are confirmed.", aux_end()),
                step("Perimeter is twice the sum of the sides.", equation("x = 2 * (13 + 9)")),
                step("The perimeter is 44.", answer(44.0)),
            ],
        },
        GeometryProblem {
            id: "geo-trapezoid-area".to_string(),
            description: "Trapezoid ABCD has AB parallel to DC with AB = 8, DC = 4, and \
                          height 5. Find its area."
                .to_string(),
            scene: Scene {
                points: vec![
                    given_point("A", 0.0, 0.0),
                    given_point("B", 8.0, 0.0),
                    given_point("C", 6.0, 5.0),
                    given_point("D", 2.0, 5.0),
                ],
                segments: vec![
                    given_segment("A", "B"),
                    given_segment("B", "C"),
                    given_segment("C", "D"),
                    given_segment("D", "A"),
                ],
            },
            answer: 30.0,
            tolerance: 0.01,
            script: vec![
                step("Drop the height from C onto the base AB.", perp("C", "A", "B")),
                step("The foot confirms the height of 5.", aux_end()),
                step(
                    "Area is half the sum of the parallel sides times the height.",
                    equation("x = (1/2) * (8 + 4) * 5"),
                ),
                step("The area is 30.", answer(30.0)),
            ],
        },
        GeometryProblem {
            id: "geo-parallelogram-area".to_string(),
            description: "Parallelogram ABCD has base AB = 7 and height 5. Find its area."
                .to_string(),
            scene: Scene {
                points: vec![
                    given_point("A", 0.0, 0.0),
                    given_point("B", 7.0, 0.0),
                    given_point("C", 10.0, 5.0),
                    given_point("D", 3.0, 5.0),
                ],
                segments: vec![
                    given_segment("A", "B"),
                    given_segment("B", "C"),
                    given_segment("C", "D"),
                    given_segment("D", "A"),
                ],
            },
            answer: 35.0,
            tolerance: 0.01,
            script: vec![
                step("Drop the height from D onto the base AB.", perp("D", "A", "B")),
                step("The foot confirms the height of 5.", aux_end()),
                step("Area is base times height.", equation("x = 7 * 5")),
                step("The area is 35.", answer(35.0)),
            ],
        },
        GeometryProblem {
            id: "geo-hypotenuse".to_string(),
            description: "Legs AB = 5 and BC = 12 of a right triangle meet at B. Find the \
                          length of AC."
                .to_string(),
            scene: Scene {
                points: vec![
                    given_point("A", 0.0, 0.0),
                    given_point("B", 5.0, 0.0),
                    given_point("C", 5.0, 12.0),
                ],
                segments: vec![given_segment("A", "B"), given_segment("B", "C")],
            },
            answer: 13.0,
            tolerance: 0.01,
            script: vec![
                step("Close the triangle by connecting A and C.", connect("A", "C")),
                step("The triangle is complete.", aux_end()),
                step(
                    "The hypotenuse satisfies the Pythagorean relation.",
                    equation("x^2 = 5^2 + 12^2"),
                ),
                step("The positive root is the length.", answer(13.0)),
            ],
        },
        GeometryProblem {
            id: "geo-square-diagonal".to_string(),
            description: "Square ABCD has side 6. Find the length of the diagonal AC."
                .to_string(),
            scene: Scene {
                points: vec![
                    given_point("A", 0.0, 0.0),
                    given_point("B", 6.0, 0.0),
                    given_point("C", 6.0, 6.0),
                    given_point("D", 0.0, 6.0),
                ],
                segments: vec![
                    given_segment("A", "B"),
                    given_segment("B", "C"),
                    given_segment("C", "D"),
                    given_segment("D", "A"),
                ],
            },
            answer: 8.485281374238571,
            tolerance: 0.01,
            script: vec![
                step("Draw the diagonal.", connect("A", "C")),
                step("The diagonal splits the square into right triangles.", aux_end()),
                step("Apply the Pythagorean relation.", equation("x = sqrt(6^2 + 6^2)")),
                step("The diagonal is 6 times the square root of 2.", answer(8.485281374238571)),
            ],
        },
        GeometryProblem {
            id: "geo-trapezoid-foot".to_string(),
            description: "Trapezoid ABCD has AB parallel to DC with AB = 16 and DC = 6. Drop \
                          a perpendicular to see the height, then find the area."
                .to_string(),
            scene: Scene {
                points: vec![
                    given_point("A", 0.0, 0.0),
                    given_point("B", 16.0, 0.0),
                    given_point("C", 11.0, 5.0),
                    given_point("D", 5.0, 5.0),
                ],
                segments: vec![
                    given_segment("A", "B"),
                    given_segment("B", "C"),
                    given_segment("C", "D"),
                    given_segment("D", "A"),
                ],
            },
            answer: 55.0,
            tolerance: 0.01,
            script: vec![
                step("Drop the height from D onto the base AB.", perp("D", "A", "B")),
                step("The foot shows the height is 5.", aux_end()),
                step(
                    "Twice the area equals the sum of the parallel sides times the height.",
                    equation("2 * x = (16 + 6) * 5"),
                ),
                step("The area is 55.", answer(55.0)),
            ],
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn shoelace(points: &[(f64, f64)]) -> f64 {
        let n = points.len();
        let mut twice = 0.0;
        for i in 0..n {
            let (x1, y1) = points[i];
            let (x2, y2) = points[(i + 1) % n];
            twice += x1 * y2 - x2 * y1;
        }
        twice.abs() / 2.0
    }

    fn coords(problem: &GeometryProblem, names: &[&str]) -> Vec<(f64, f64)> {
        names
            .iter()
            .map(|n| {
                let p = problem.scene.point(n).unwrap();
                (p.x, p.y)
            })
            .collect()
    }

    fn problem(id: &str) -> GeometryProblem {
        builtin_problems().into_iter().find(|p| p.id == id).unwrap()
    }

    #[test]
    fn builtin_answers_match_independent_oracles() {
        // Areas by the shoelace formula over the given coordinates.
        for (id, names) in [
            ("geo-rect-area", vec!["A", "B", "C", "D"]),
            ("geo-tri-area", vec!["A", "B", "C"]),
            ("geo-trapezoid-area", vec!["A", "B", "C", "D"]),
            ("geo-parallelogram-area", vec!["A", "B", "C", "D"]),
            ("geo-trapezoid-foot", vec!["A", "B", "C", "D"]),
        ] {
            let p = problem(id);
            let area = shoelace(&coords(&p, &names));
            assert!(
                (area - p.answer).abs() < 1e-9,
                "{id}: shoelace {area} vs stated {}",
                p.answer
            );
        }
        // Lengths by the hypotenuse of the coordinate differences.
        for (id, from, to) in [("geo-hypotenuse", "A", "C"), ("geo-square-diagonal", "A", "C")] {
            let p = problem(id);
            let [(x1, y1), (x2, y2)] = coords(&p, &[from, to])[..] else {
                unreachable!()
            };
            let len = (x2 - x1).hypot(y2 - y1);
            assert!((len - p.answer).abs() < 1e-9, "{id}");
        }
        // Perimeter from the four side lengths.
        let p = problem("geo-rect-perimeter");
        let pts = coords(&p, &["A", "B", "C", "D"]);
        let perimeter: f64 = (0..4)
            .map(|i| {
                let (x1, y1) = pts[i];
                let (x2, y2) = pts[(i + 1) % 4];
                (x2 - x1).hypot(y2 - y1)
            })
            .sum();
        assert!((perimeter - p.answer).abs() < 1e-9);
    }

    #[test]
    fn every_builtin_script_solves_its_problem() {
        for problem in builtin_problems() {
            let env = GeometryEnv::new(problem.clone());
            let mut state = env.initial_state();
            let mut last = env.observe_initial(&state);
            assert!(!last.terminal, "{}: initial observation terminal", problem.id);
            for step in &problem.script {
                assert!(!last.terminal, "{}: script continues past terminal", problem.id);
                let action = Action::new(step.body.clone());
                let (next, obs) = env
                    .apply(&state, &action)
                    .unwrap_or_else(|e| panic!("{}: {e}", problem.id));
                assert!(
                    !obs.text_feedback.starts_with("construction failed")
                        && !obs.text_feedback.starts_with("equation error"),
                    "{}: step failed: {}",
                    problem.id,
                    obs.text_feedback
                );
                state = next;
                last = obs;
            }
            assert!(last.terminal, "{}: script must end the episode", problem.id);
            let outcome = last.outcome.unwrap();
            assert!(env.outcome_success(&outcome), "{}: wrong answer", problem.id);
            assert_eq!(env.ground_truth_score(&state, &outcome), 1.0);
        }
    }

    #[test]
    fn perpendicular_feet_satisfy_the_right_angle() {
        let mut rng = crate::seed::rng_from(11, &[0x67656f]);
        for _ in 0..200 {
            let scene = Scene {
                points: vec![
                    Point { name: "A".into(), x: rng.gen_range(-50.0..50.0), y: rng.gen_range(-50.0..50.0), aux: false },
                    Point { name: "B".into(), x: rng.gen_range(-50.0..50.0), y: rng.gen_range(-50.0..50.0), aux: false },
                    Point { name: "P".into(), x: rng.gen_range(-50.0..50.0), y: rng.gen_range(-50.0..50.0), aux: false },
                ],
                segments: vec![],
            };
            let cmd = AuxCommand::PerpendicularFoot {
                from: "P".into(),
                onto: ("A".into(), "B".into()),
            };
            let Ok((next, _)) = apply_aux(&scene, &cmd) else {
                continue; // degenerate draw (P on AB), rejected by design
            };
            let f = next.point("F1").unwrap();
            let (a, b, p) = (next.point("A").unwrap(), next.point("B").unwrap(), next.point("P").unwrap());
            let dot = (f.x - p.x) * (b.x - a.x) + (f.y - p.y) * (b.y - a.y);
            let cross = (f.x - a.x) * (b.y - a.y) - (f.y - a.y) * (b.x - a.x);
            let scale = ((b.x - a.x).hypot(b.y - a.y)).powi(2).max(1.0);
            assert!(dot.abs() <= 1e-9 * scale, "foot not perpendicular: {dot}");
            assert!(cross.abs() <= 1e-9 * scale, "foot not on the line: {cross}");
        }
    }

    #[test]
    fn parallel_segments_have_the_requested_direction_and_length() {
        let mut rng = crate::seed::rng_from(12, &[0x67656f]);
        for _ in 0..200 {
            let scene = Scene {
                points: vec![
                    Point { name: "A".into(), x: rng.gen_range(-50.0..50.0), y: rng.gen_range(-50.0..50.0), aux: false },
                    Point { name: "B".into(), x: rng.gen_range(-50.0..50.0), y: rng.gen_range(-50.0..50.0), aux: false },
                    Point { name: "P".into(), x: rng.gen_range(-50.0..50.0), y: rng.gen_range(-50.0..50.0), aux: false },
                ],
                segments: vec![],
            };
            let length: f64 = rng.gen_range(0.5..20.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let cmd = AuxCommand::ParallelThrough {
                through: "P".into(),
                reference: ("A".into(), "B".into()),
                length,
            };
            let (next, _) = apply_aux(&scene, &cmd).unwrap();
            let q = next.point("Q1").unwrap();
            let (a, b, p) = (next.point("A").unwrap(), next.point("B").unwrap(), next.point("P").unwrap());
            let cross = (q.x - p.x) * (b.y - a.y) - (q.y - p.y) * (b.x - a.x);
            let drawn = (q.x - p.x).hypot(q.y - p.y);
            let scale = ((b.x - a.x).hypot(b.y - a.y)) * length.abs();
            assert!(cross.abs() <= 1e-9 * scale.max(1.0), "not parallel: {cross}");
            assert!((drawn - length.abs()).abs() <= 1e-9 * length.abs().max(1.0));
            // Signed length flips the direction.
            let along = (q.x - p.x) * (b.x - a.x) + (q.y - p.y) * (b.y - a.y);
            assert_eq!(along.signum(), length.signum());
        }
    }

    #[test]
    fn drawing_rejections_name_the_reason() {
        let scene = problem("geo-rect-area").scene;
        let connect = |p: &str, q: &str| AuxCommand::Connect {
            p: p.into(),
            q: q.into(),
        };
        assert_eq!(
            apply_aux(&scene, &connect("A", "A")).unwrap_err(),
            "cannot connect A to itself"
        );
        assert_eq!(
            apply_aux(&scene, &connect("A", "B")).unwrap_err(),
            "A and B are already connected"
        );
        assert_eq!(
            apply_aux(&scene, &connect("A", "Z")).unwrap_err(),
            "no point named Z"
        );
        let on_line = AuxCommand::PerpendicularFoot {
            from: "A".into(),
            onto: ("B".into(), "C".into()),
        };
        // A = (0,0) is not on line BC (x = 9); drop from B instead.
        let from_b = AuxCommand::PerpendicularFoot {
            from: "B".into(),
            onto: ("B".into(), "C".into()),
        };
        assert!(apply_aux(&scene, &on_line).is_ok());
        assert_eq!(
            apply_aux(&scene, &from_b).unwrap_err(),
            "B already lies on the line through B and C"
        );
        let zero_len = AuxCommand::ParallelThrough {
            through: "A".into(),
            reference: ("B".into(), "C".into()),
            length: 0.0,
        };
        assert_eq!(
            apply_aux(&scene, &zero_len).unwrap_err(),
            "length must be a nonzero number"
        );
    }

    #[test]
    fn auto_names_extend_the_existing_series() {
        let mut scene = problem("geo-rect-area").scene;
        scene.points.push(Point {
            name: "F3".into(),
            x: -1.0,
            y: -1.0,
            aux: true,
        });
        assert_eq!(scene.next_name("F"), "F4");
        assert_eq!(scene.next_name("Q"), "Q1");
    }

    #[test]
    fn phase_machine_rejects_out_of_order_actions() {
        let env = GeometryEnv::new(problem("geo-rect-area"));
        let construction = env.initial_state();
        let eq = Action::new(ActionBody::GeomEquation {
            source: "x = 1".into(),
        });
        assert!(matches!(
            env.apply(&construction, &eq),
            Err(EnvError::PhaseViolation(_))
        ));

        let end = Action::new(ActionBody::GeomAux(AuxCommand::AuxEnd));
        let (computation, obs) = env.apply(&construction, &end).unwrap();
        assert_eq!(computation.phase, Phase::Computation);
        assert!(!obs.terminal);

        assert!(matches!(
            env.apply(&computation, &end),
            Err(EnvError::PhaseViolation(_))
        ));
        let draw = Action::new(ActionBody::GeomAux(AuxCommand::Connect {
            p: "A".into(),
            q: "C".into(),
        }));
        assert!(matches!(
            env.apply(&computation, &draw),
            Err(EnvError::PhaseViolation(_))
        ));
        let nav = Action::new(ActionBody::NavMove {
            direction: crate::trace::Direction::Up,
            steps: 1,
        });
        assert!(matches!(
            env.apply(&computation, &nav),
            Err(EnvError::MalformedAction(_))
        ));
    }

    #[test]
    fn impossible_draws_are_failures_not_errors() {
        let env = GeometryEnv::new(problem("geo-rect-area"));
        let state = env.initial_state();
        let dup = Action::new(ActionBody::GeomAux(AuxCommand::Connect {
            p: "A".into(),
            q: "B".into(),
        }));
        let (next, obs) = env.apply(&state, &dup).unwrap();
        assert_eq!(next, state);
        assert_eq!(
            obs.text_feedback,
            "construction failed: A and B are already connected"
        );
        assert!(!obs.terminal);
    }

    /// Test-local oracle: bisection inside a bracket known to hold exactly
    /// one simple root.
    fn bisect_oracle(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut flo = f(lo);
        assert!(flo * f(hi) < 0.0, "oracle bracket must straddle the root");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm == 0.0 {
                return mid;
            }
            if flo * fm < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                flo = fm;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn closed_form_matches_an_independent_bisection_oracle() {
        let mut rng = crate::seed::rng_from(13, &[0x67656f]);
        for _ in 0..60 {
            let r1 = rng.gen_range(-40i32..=40) as f64;
            let mut r2 = rng.gen_range(-40i32..=40) as f64;
            if r2 == r1 {
                r2 += 1.0;
            }
            let a = [1.0, 2.0, 3.0, -1.0, -2.0][rng.gen_range(0..5)];
            let b = -a * (r1 + r2);
            let c = a * r1 * r2;
            let source = format!("{a} * x^2 + {b} * x + {c} = 0");
            let roots = solve_equation(&source).unwrap();
            let mut expect = vec![r1, r2];
            expect.sort_by(|p, q| p.partial_cmp(q).unwrap());
            assert_eq!(roots.len(), 2, "{source}");
            // Integer roots at least one apart: a half-unit bracket around
            // each isolates exactly one simple root for the oracle.
            let f = |x: f64| a * x * x + b * x + c;
            for (got, want) in roots.iter().zip(&expect) {
                let oracle = bisect_oracle(f, want - 0.49, want + 0.49);
                assert!((got - oracle).abs() < 1e-6, "{source}: {got} vs {oracle}");
            }
        }
    }

    #[test]
    fn cubic_root_matches_the_independent_oracle() {
        let roots = solve_equation("x^3 - x - 2 = 0").unwrap();
        assert_eq!(roots.len(), 1);
        let oracle = bisect_oracle(|x| x * x * x - x - 2.0, 1.0, 2.0);
        assert!((roots[0] - oracle).abs() < 1e-6);
        assert!((roots[0] - 1.5213797).abs() < 1e-6);
    }

    #[test]
    fn linear_constant_and_degenerate_equations() {
        assert_eq!(solve_equation("x + 5 = 2").unwrap(), vec![-3.0]);
        assert_eq!(solve_equation("2 * x = 15 * 8").unwrap(), vec![60.0]);
        assert_eq!(solve_equation("1 = 2").unwrap(), Vec::<f64>::new());
        assert_eq!(solve_equation("3 = 3").unwrap_err(), EquationError::Tautology);
        // Negative discriminant.
        assert_eq!(solve_equation("x^2 + 1 = 0").unwrap(), Vec::<f64>::new());
        // Perfect square collapses to one root.
        assert_eq!(solve_equation("x^2 - 4 * x + 4 = 0").unwrap(), vec![2.0]);
    }

    #[test]
    fn non_polynomial_equations_fall_back_to_scanning() {
        let roots = solve_equation("sqrt(x) = 3").unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 9.0).abs() < 1e-6);
        let roots = solve_equation("x^3 = 8").unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 2.0).abs() < 1e-6);
        // The scan skips intervals with a non-finite endpoint, so the root
        // of 1/x = 4 next to the pole at zero is out of reach; the solver
        // reports nothing rather than something wrong.
        assert_eq!(solve_equation("1 / x = 4").unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn malformed_equations_are_parse_errors() {
        for bad in ["x + = 3", "x = = 1", "y = 3", "x", "sqrt 4 = 2", "(x = 3", "x = 3 4"] {
            assert!(
                matches!(solve_equation(bad), Err(EquationError::Parse(_))),
                "{bad:?} should not parse"
            );
        }
    }

    #[test]
    fn answer_check_uses_relative_tolerance_with_a_floor() {
        assert!(check_answer(101.0, 100.0, 0.01));
        assert!(!check_answer(101.1, 100.0, 0.01));
        assert!(check_answer(0.0149, 0.005, 0.01)); // floor of 1 near zero
        assert!(!check_answer(0.02, 0.005, 0.01));
        assert!(check_answer(-54.0, -54.0, 0.01));
    }

    #[test]
    fn equation_feedback_lists_sorted_roots() {
        let env = GeometryEnv::new(problem("geo-hypotenuse"));
        let (state, _) = env
            .apply(
                &env.initial_state(),
                &Action::new(ActionBody::GeomAux(AuxCommand::AuxEnd)),
            )
            .unwrap();
        let eq = Action::new(ActionBody::GeomEquation {
            source: "x^2 = 5^2 + 12^2".into(),
        });
        let (_, obs) = env.apply(&state, &eq).unwrap();
        assert_eq!(obs.text_feedback, "solutions: x = -13, x = 13");
        let bad = Action::new(ActionBody::GeomEquation {
            source: "x +".into(),
        });
        let (_, obs) = env.apply(&state, &bad).unwrap();
        assert!(obs.text_feedback.starts_with("equation error:"));
    }

    #[test]
    fn wrong_answers_are_terminal_but_unsuccessful() {
        let env = GeometryEnv::new(problem("geo-rect-area"));
        let state = env.initial_state();
        let wrong = Action::new(ActionBody::FinalAnswer { value: Some(50.0) });
        let (end, obs) = env.apply(&state, &wrong).unwrap();
        assert!(obs.terminal);
        let outcome = obs.outcome.unwrap();
        assert!(!env.outcome_success(&outcome));
        let score = env.ground_truth_score(&end, &outcome);
        assert!((score - (-4.0 / 54.0)).abs() < 1e-12);

        let none = Action::new(ActionBody::FinalAnswer { value: None });
        let (_, obs) = env.apply(&state, &none).unwrap();
        let outcome = obs.outcome.unwrap();
        assert_eq!(outcome.kind, OutcomeKind::GoalFailed);
        assert_eq!(env.ground_truth_score(&state, &outcome), -1.0);
    }

    #[test]
    fn svg_marks_auxiliary_elements_dashed() {
        let scene = problem("geo-hypotenuse").scene;
        let before = render_svg(&scene);
        assert!(!before.contains("stroke-dasharray"));
        let (after_scene, _) = apply_aux(
            &scene,
            &AuxCommand::Connect {
                p: "A".into(),
                q: "C".into(),
            },
        )
        .unwrap();
        let after = render_svg(&after_scene);
        assert!(after.contains("stroke-dasharray"));
        assert_eq!(after, render_svg(&after_scene));
    }

    #[test]
    fn degenerate_scenes_render_without_nan() {
        let one = Scene {
            points: vec![given_point("A", 2.0, 3.0)],
            segments: vec![],
        };
        let svg = render_svg(&one);
        assert!(svg.starts_with("<svg"));
        assert!(!svg.contains("NaN"));
        let empty = render_svg(&Scene::default());
        assert!(empty.contains("empty figure"));
    }

    #[test]
    fn golden_figure_matches_the_committed_fixture() {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/geometry/square-diagonal.svg"
        );
        let (scene, _) = apply_aux(
            &problem("geo-square-diagonal").scene,
            &AuxCommand::Connect {
                p: "A".into(),
                q: "C".into(),
            },
        )
        .unwrap();
        let rendered = render_svg(&scene);
        if std::env::var_os("REGEN_GOLDEN").is_some() {
            std::fs::write(path, &rendered).unwrap();
        }
        let fixture = std::fs::read_to_string(path).expect("run with REGEN_GOLDEN=1 once");
        assert_eq!(rendered, fixture);
    }

    #[test]
    fn problem_files_round_trip() {
        for problem in builtin_problems() {
            let text = write_problem_file(&problem);
            let parsed = parse_problem_file(&text).unwrap();
            assert_eq!(parsed, problem);
            assert_eq!(write_problem_file(&parsed), text);
        }
    }

    #[test]
    fn problem_files_reject_garbage() {
        assert!(parse_problem_file("").is_err());
        assert!(parse_problem_file("id=x answer=1 tolerance=0.01\npoint A 0 0\n").is_err()); // no desc
        assert!(parse_problem_file("id=x answer=1 tolerance=0.01\ndesc d\n").is_err()); // no points
        assert!(
            parse_problem_file("id=x answer=1 tolerance=0.01\ndesc d\npoint A 0 zero\n").is_err()
        );
        assert!(parse_problem_file(
            "id=x answer=1 tolerance=0.01\ndesc d\npoint A 0 0\nsegment A B\n"
        )
        .is_err());
        assert!(parse_problem_file(
            "id=x answer=1 tolerance=0.01\ndesc d\npoint A 0 0\nthought t\n"
        )
        .is_err());
        assert!(parse_problem_file(
            "id=x answer=1 tolerance=0.01\ndesc d\npoint A 0 0\npoint A 1 1\n"
        )
        .is_err());
    }

    #[test]
    fn feedback_numbers_are_trimmed() {
        assert_eq!(fmt_num(5.0), "5");
        assert_eq!(fmt_num(2.5), "2.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.3333");
        assert_eq!(fmt_num(-0.000001), "0");
    }
}
