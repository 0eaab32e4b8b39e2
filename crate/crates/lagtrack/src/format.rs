//! Line-oriented text formats for instances, solutions and convergence
//! logs.
//!
//! Instance records, one per line, `#` starting a comment:
//!
//! ```text
//! H <frame> <id> <det_cost> <app_cost> <disapp_cost>
//! MOVE <from_frame> <from_id> <to_id> <cost>
//! DIV <from_frame> <from_id> <to_id1> <to_id2> <cost>
//! CONFSET <frame> <id> <id>...
//! ```
//!
//! The frame count is the largest frame mentioned. A writer emits a
//! `# frames <T>` line when trailing frames are empty; the parser honours
//! that line and ignores every other comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use lagtrack_core::bca::{relative_gap, ConvergenceRecord};
use lagtrack_core::instance::{
    Assignment, ConflictSet, Detection, DetectionId, Instance, Record, Transition, TransitionKind,
    Violation,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {violation}")]
    Invalid { line: usize, violation: Violation },
    #[error("{0}")]
    InvalidInstance(Violation),
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { line, .. } | ParseError::Invalid { line, .. } => Some(*line),
            ParseError::InvalidInstance(_) => None,
        }
    }
}

/// Renders a float with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

struct Fields<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, ParseError> {
        self.tokens
            .next()
            .ok_or_else(|| self.error(format!("missing {what}")))
    }

    fn int(&mut self, what: &str) -> Result<u32, ParseError> {
        let token = self.next(what)?;
        token
            .parse()
            .map_err(|_| self.error(format!("invalid {what} `{token}`")))
    }

    fn float(&mut self, what: &str) -> Result<f64, ParseError> {
        let token = self.next(what)?;
        token
            .parse()
            .map_err(|_| self.error(format!("invalid {what} `{token}`")))
    }

    fn end(&mut self) -> Result<(), ParseError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(extra) => Err(self.error(format!("unexpected trailing field `{extra}`"))),
        }
    }
}

fn strip_comment(raw: &str) -> (&str, Option<&str>) {
    match raw.find('#') {
        Some(k) => (&raw[..k], Some(&raw[k + 1..])),
        None => (raw, None),
    }
}

/// Parses and validates an instance. Records keep their file order.
pub fn parse_instance(text: &str) -> Result<Instance, ParseError> {
    let mut instance = Instance::empty(1);
    let mut lines = Lines::default();
    let mut declared_frames: Option<u32> = None;
    let mut max_frame = 0u32;

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let (content, comment) = strip_comment(raw);
        if let Some(frames) = comment.and_then(frames_pragma) {
            declared_frames = Some(frames.map_err(|message| ParseError::Syntax { line, message })?);
        }
        let mut f = Fields {
            line,
            tokens: content.split_whitespace(),
        };
        let Some(tag) = f.tokens.next() else { continue };
        match tag {
            "H" => {
                let frame = f.int("frame")?;
                let index = f.int("id")?;
                let cost = f.float("detection cost")?;
                let appearance_cost = f.float("appearance cost")?;
                let disappearance_cost = f.float("disappearance cost")?;
                f.end()?;
                max_frame = max_frame.max(frame);
                lines.detections.push(line);
                instance.detections.push(Detection {
                    id: DetectionId::new(frame, index),
                    cost,
                    appearance_cost,
                    disappearance_cost,
                });
            }
            "MOVE" => {
                let frame = f.int("frame")?;
                let from = f.int("source id")?;
                let to = f.int("target id")?;
                let cost = f.float("cost")?;
                f.end()?;
                max_frame = max_frame.max(frame.saturating_add(1));
                lines.transitions.push(line);
                instance.transitions.push(Transition {
                    kind: TransitionKind::Move {
                        from: DetectionId::new(frame, from),
                        to: DetectionId::new(frame.wrapping_add(1), to),
                    },
                    cost,
                });
            }
            "DIV" => {
                let frame = f.int("frame")?;
                let from = f.int("source id")?;
                let to1 = f.int("first child id")?;
                let to2 = f.int("second child id")?;
                let cost = f.float("cost")?;
                f.end()?;
                max_frame = max_frame.max(frame.saturating_add(1));
                lines.transitions.push(line);
                let next = frame.wrapping_add(1);
                instance.transitions.push(Transition {
                    kind: TransitionKind::Division {
                        from: DetectionId::new(frame, from),
                        to1: DetectionId::new(next, to1),
                        to2: DetectionId::new(next, to2),
                    },
                    cost,
                });
            }
            "CONFSET" => {
                let frame = f.int("frame")?;
                let mut members = Vec::new();
                for token in f.tokens.by_ref() {
                    let id: u32 = token.parse().map_err(|_| ParseError::Syntax {
                        line,
                        message: format!("invalid member id `{token}`"),
                    })?;
                    members.push(DetectionId::new(frame, id));
                }
                if members.len() < 2 {
                    return Err(f.error("CONFSET needs at least two ids"));
                }
                max_frame = max_frame.max(frame);
                lines.conflicts.push(line);
                instance.conflicts.push(ConflictSet { frame, members });
            }
            other => return Err(f.error(format!("unknown record `{other}`"))),
        }
    }

    instance.frame_count = declared_frames.unwrap_or(max_frame.max(1));
    let report = instance.validate();
    if let Some(v) = report.violations.into_iter().next() {
        return Err(match v.record().map(|r| lines.of(r)) {
            Some(line) => ParseError::Invalid { line, violation: v },
            None => ParseError::InvalidInstance(v),
        });
    }
    Ok(instance)
}

fn frames_pragma(comment: &str) -> Option<Result<u32, String>> {
    let mut tokens = comment.split_whitespace();
    if tokens.next() != Some("frames") {
        return None;
    }
    let value = tokens.next().and_then(|t| t.parse::<u32>().ok());
    Some(match (value, tokens.next()) {
        (Some(t), None) if t >= 1 => Ok(t),
        _ => Err("malformed `# frames` line".to_string()),
    })
}

#[derive(Default)]
struct Lines {
    detections: Vec<usize>,
    transitions: Vec<usize>,
    conflicts: Vec<usize>,
}

impl Lines {
    fn of(&self, record: Record) -> usize {
        match record {
            Record::Detection(i) => self.detections[i],
            Record::Transition(i) => self.transitions[i],
            Record::Conflict(i) => self.conflicts[i],
        }
    }
}

fn max_record_frame(instance: &Instance) -> u32 {
    let detections = instance.detections.iter().map(|d| d.id.frame);
    let transitions = instance
        .transitions
        .iter()
        .map(|t| t.kind.source().frame + 1);
    let conflicts = instance.conflicts.iter().map(|c| c.frame);
    detections
        .chain(transitions)
        .chain(conflicts)
        .max()
        .unwrap_or(0)
}

/// Canonical text: records grouped by frame in the order H, MOVE, DIV,
/// CONFSET, ids ascending.
pub fn write_instance(instance: &Instance) -> String {
    let mut canonical = instance.clone();
    canonical.canonicalize();
    let mut out = String::new();
    if canonical.frame_count != max_record_frame(&canonical).max(1) {
        writeln!(out, "# frames {}", canonical.frame_count).unwrap();
    }

    let mut per_frame: BTreeMap<u32, [Vec<String>; 4]> = BTreeMap::new();
    for d in &canonical.detections {
        per_frame.entry(d.id.frame).or_default()[0].push(format!(
            "H {} {} {} {} {}",
            d.id.frame,
            d.id.index,
            fmt_float(d.cost),
            fmt_float(d.appearance_cost),
            fmt_float(d.disappearance_cost)
        ));
    }
    for t in &canonical.transitions {
        let (slot, line) = match t.kind {
            TransitionKind::Move { from, to } => (
                1,
                format!(
                    "MOVE {} {} {} {}",
                    from.frame,
                    from.index,
                    to.index,
                    fmt_float(t.cost)
                ),
            ),
            TransitionKind::Division { from, to1, to2 } => (
                2,
                format!(
                    "DIV {} {} {} {} {}",
                    from.frame,
                    from.index,
                    to1.index,
                    to2.index,
                    fmt_float(t.cost)
                ),
            ),
        };
        per_frame.entry(t.kind.source().frame).or_default()[slot].push(line);
    }
    for c in &canonical.conflicts {
        let ids: Vec<String> = c.members.iter().map(|m| m.index.to_string()).collect();
        per_frame.entry(c.frame).or_default()[3].push(format!(
            "CONFSET {} {}",
            c.frame,
            ids.join(" ")
        ));
    }
    for groups in per_frame.values() {
        for line in groups.iter().flatten() {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolutionError {
    #[error("refusing to write an infeasible solution: {0}")]
    Infeasible(String),
    #[error("assignment does not match the instance")]
    ShapeMismatch,
}

/// Header with energy, bound and relative gap, then one `ON` line per
/// active detection and one `LINK` line per active transition, both in
/// canonical order.
pub fn write_solution(
    instance: &Instance,
    assignment: &Assignment,
    energy: f64,
    dual_bound: f64,
) -> Result<String, SolutionError> {
    if assignment.detection_on.len() != instance.detections.len()
        || assignment.transition_on.len() != instance.transitions.len()
    {
        return Err(SolutionError::ShapeMismatch);
    }
    let report = lagtrack_core::instance::check_feasible(instance, assignment);
    if !report.is_feasible() {
        let reasons: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(SolutionError::Infeasible(reasons.join("; ")));
    }

    let mut out = String::new();
    writeln!(out, "ENERGY {}", fmt_float(energy)).unwrap();
    writeln!(out, "BOUND {}", fmt_float(dual_bound)).unwrap();
    writeln!(out, "GAP {}", fmt_float(relative_gap(energy, dual_bound))).unwrap();

    let mut on: Vec<DetectionId> = instance
        .detections
        .iter()
        .zip(&assignment.detection_on)
        .filter(|(_, &x)| x)
        .map(|(d, _)| d.id)
        .collect();
    on.sort();
    for id in on {
        writeln!(out, "ON {} {}", id.frame, id.index).unwrap();
    }
    let mut sorted = Instance {
        transitions: instance
            .transitions
            .iter()
            .zip(&assignment.transition_on)
            .filter(|(_, &x)| x)
            .map(|(t, _)| *t)
            .collect(),
        ..Instance::empty(instance.frame_count)
    };
    sorted.canonicalize();
    for t in &sorted.transitions {
        match t.kind {
            TransitionKind::Move { from, to } => {
                writeln!(out, "LINK MOVE {} {} {}", from.frame, from.index, to.index).unwrap()
            }
            TransitionKind::Division { from, to1, to2 } => writeln!(
                out,
                "LINK DIV {} {} {} {}",
                from.frame, from.index, to1.index, to2.index
            )
            .unwrap(),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFile {
    pub energy: f64,
    pub bound: f64,
    pub gap: f64,
    pub assignment: Assignment,
}

/// Parses a solution against its instance. Division children may be given
/// in either order.
pub fn parse_solution(text: &str, instance: &Instance) -> Result<SolutionFile, ParseError> {
    let position: BTreeMap<DetectionId, usize> = instance
        .detections
        .iter()
        .enumerate()
        .map(|(p, d)| (d.id, p))
        .collect();
    let mut transition_of: BTreeMap<(DetectionId, DetectionId, Option<DetectionId>), usize> =
        BTreeMap::new();
    for (e, t) in instance.transitions.iter().enumerate() {
        let key = match t.kind {
            TransitionKind::Move { from, to } => (from, to, None),
            TransitionKind::Division { from, to1, to2 } => (from, to1.min(to2), Some(to1.max(to2))),
        };
        transition_of.insert(key, e);
    }

    let mut header: [Option<f64>; 3] = [None; 3];
    let mut assignment = Assignment::all_off(instance);
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let mut f = Fields {
            line,
            tokens: strip_comment(raw).0.split_whitespace(),
        };
        let Some(tag) = f.tokens.next() else { continue };
        match tag {
            "ENERGY" | "BOUND" | "GAP" => {
                let slot = ["ENERGY", "BOUND", "GAP"]
                    .iter()
                    .position(|&h| h == tag)
                    .unwrap();
                if header[slot].is_some() {
                    return Err(f.error(format!("repeated {tag} line")));
                }
                header[slot] = Some(f.float("value")?);
                f.end()?;
            }
            "ON" => {
                let id = DetectionId::new(f.int("frame")?, f.int("id")?);
                f.end()?;
                let p = *position
                    .get(&id)
                    .ok_or_else(|| f.error(format!("unknown detection {id}")))?;
                assignment.detection_on[p] = true;
            }
            "LINK" => {
                let kind = f.next("link kind")?;
                let frame = f.int("frame")?;
                let from = DetectionId::new(frame, f.int("source id")?);
                let next = frame.wrapping_add(1);
                let key = match kind {
                    "MOVE" => (from, DetectionId::new(next, f.int("target id")?), None),
                    "DIV" => {
                        let a = DetectionId::new(next, f.int("first child id")?);
                        let b = DetectionId::new(next, f.int("second child id")?);
                        (from, a.min(b), Some(a.max(b)))
                    }
                    other => return Err(f.error(format!("unknown link kind `{other}`"))),
                };
                f.end()?;
                let e = *transition_of
                    .get(&key)
                    .ok_or_else(|| f.error("link is not a transition of the instance"))?;
                assignment.transition_on[e] = true;
            }
            other => return Err(f.error(format!("unknown record `{other}`"))),
        }
    }
    let missing = |name: &str| ParseError::Syntax {
        line: 0,
        message: format!("missing {name} line"),
    };
    Ok(SolutionFile {
        energy: header[0].ok_or_else(|| missing("ENERGY"))?,
        bound: header[1].ok_or_else(|| missing("BOUND"))?,
        gap: header[2].ok_or_else(|| missing("GAP"))?,
        assignment,
    })
}

pub const CSV_HEADER: &str = "sweep,direction,dual_bound,primal_energy,wall_time_s";

pub fn write_convergence_csv(records: &[ConvergenceRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let primal = r.primal_energy.map(fmt_float).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{:.6}",
            r.sweep,
            r.direction,
            fmt_float(r.dual_bound),
            primal,
            r.wall_time
        )
        .unwrap();
    }
    out
}
