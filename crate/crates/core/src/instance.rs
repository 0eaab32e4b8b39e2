//! Standard tracking model: detections per frame, move and division
//! candidates between consecutive frames, and per-frame conflict sets.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::iter;

/// A detection hypothesis, addressed by its 1-based frame and its index
/// within that frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectionId {
    pub frame: u32,
    pub index: u32,
}

impl DetectionId {
    pub const fn new(frame: u32, index: u32) -> Self {
        Self { frame, index }
    }
}

impl fmt::Display for DetectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.frame, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub id: DetectionId,
    pub cost: f64,
    /// Charged when the detection is active without an active incoming
    /// transition (frames after the first only).
    pub appearance_cost: f64,
    /// Charged when the detection is active without an active outgoing
    /// transition (frames before the last only).
    pub disappearance_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Move {
        from: DetectionId,
        to: DetectionId,
    },
    Division {
        from: DetectionId,
        to1: DetectionId,
        to2: DetectionId,
    },
}

impl TransitionKind {
    pub fn source(&self) -> DetectionId {
        match *self {
            TransitionKind::Move { from, .. } | TransitionKind::Division { from, .. } => from,
        }
    }

    pub fn targets(&self) -> impl Iterator<Item = DetectionId> {
        let (first, second) = match *self {
            TransitionKind::Move { to, .. } => (to, None),
            TransitionKind::Division { to1, to2, .. } => (to1, Some(to2)),
        };
        iter::once(first).chain(second)
    }

    pub fn is_division(&self) -> bool {
        matches!(self, TransitionKind::Division { .. })
    }

    /// Key identifying the transition up to the order of division children.
    fn dedup_key(&self) -> (u8, DetectionId, DetectionId, DetectionId) {
        match *self {
            TransitionKind::Move { from, to } => (0, from, to, to),
            TransitionKind::Division { from, to1, to2 } => (1, from, to1.min(to2), to1.max(to2)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub kind: TransitionKind,
    pub cost: f64,
}

/// Detections of one frame of which at most one may be active.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictSet {
    pub frame: u32,
    pub members: Vec<DetectionId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub frame_count: u32,
    pub detections: Vec<Detection>,
    pub transitions: Vec<Transition>,
    pub conflicts: Vec<ConflictSet>,
}

/// Which record of an instance a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    Detection(usize),
    Transition(usize),
    Conflict(usize),
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Record::Detection(i) => write!(f, "detection #{i}"),
            Record::Transition(i) => write!(f, "transition #{i}"),
            Record::Conflict(i) => write!(f, "conflict set #{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoFrames,
    FrameOutOfRange { record: Record, frame: u32 },
    DuplicateDetection { record: Record, id: DetectionId },
    NonFiniteCost { record: Record },
    NegativeBoundaryCost { record: Record },
    DanglingId { record: Record, id: DetectionId },
    NonConsecutiveFrames { record: Record },
    IdenticalDaughters { record: Record },
    DuplicateTransition { record: Record, first: usize },
    ConflictTooSmall { record: Record },
    ConflictCrossFrame { record: Record, id: DetectionId },
    ConflictDuplicateMember { record: Record, id: DetectionId },
}

impl Violation {
    /// The offending record, if the violation concerns a single one.
    pub fn record(&self) -> Option<Record> {
        match *self {
            Violation::NoFrames => None,
            Violation::FrameOutOfRange { record, .. }
            | Violation::DuplicateDetection { record, .. }
            | Violation::NonFiniteCost { record }
            | Violation::NegativeBoundaryCost { record }
            | Violation::DanglingId { record, .. }
            | Violation::NonConsecutiveFrames { record }
            | Violation::IdenticalDaughters { record }
            | Violation::DuplicateTransition { record, .. }
            | Violation::ConflictTooSmall { record }
            | Violation::ConflictCrossFrame { record, .. }
            | Violation::ConflictDuplicateMember { record, .. } => Some(record),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoFrames => write!(f, "frame count must be at least 1"),
            Violation::FrameOutOfRange { record, frame } => {
                write!(f, "{record}: frame {frame} out of range")
            }
            Violation::DuplicateDetection { record, id } => {
                write!(f, "{record}: duplicate detection id {id}")
            }
            Violation::NonFiniteCost { record } => write!(f, "{record}: non-finite cost"),
            Violation::NegativeBoundaryCost { record } => {
                write!(f, "{record}: negative appearance/disappearance cost")
            }
            Violation::DanglingId { record, id } => write!(f, "{record}: dangling id {id}"),
            Violation::NonConsecutiveFrames { record } => {
                write!(f, "{record}: non-consecutive frames")
            }
            Violation::IdenticalDaughters { record } => {
                write!(f, "{record}: division children are identical")
            }
            Violation::DuplicateTransition { record, first } => {
                write!(f, "{record}: duplicate of transition #{first}")
            }
            Violation::ConflictTooSmall { record } => {
                write!(f, "{record}: fewer than two members")
            }
            Violation::ConflictCrossFrame { record, id } => {
                write!(f, "{record}: member {id} lies in another frame")
            }
            Violation::ConflictDuplicateMember { record, id } => {
                write!(f, "{record}: member {id} listed twice")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ValidationReport {}

impl Instance {
    pub fn empty(frame_count: u32) -> Self {
        Self {
            frame_count,
            detections: Vec::new(),
            transitions: Vec::new(),
            conflicts: Vec::new(),
        }
    }

    pub fn variable_count(&self) -> usize {
        self.detections.len() + self.transitions.len()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.frame_count == 0 {
            violations.push(Violation::NoFrames);
        }
        let in_range = |frame: u32| frame >= 1 && frame <= self.frame_count;

        let mut known = BTreeMap::new();
        for (i, d) in self.detections.iter().enumerate() {
            let record = Record::Detection(i);
            if !in_range(d.id.frame) {
                violations.push(Violation::FrameOutOfRange {
                    record,
                    frame: d.id.frame,
                });
            }
            if known.insert(d.id, i).is_some() {
                violations.push(Violation::DuplicateDetection { record, id: d.id });
            }
            if !(d.cost.is_finite()
                && d.appearance_cost.is_finite()
                && d.disappearance_cost.is_finite())
            {
                violations.push(Violation::NonFiniteCost { record });
            } else if d.appearance_cost < 0.0 || d.disappearance_cost < 0.0 {
                violations.push(Violation::NegativeBoundaryCost { record });
            }
        }

        let mut seen_transitions = BTreeMap::new();
        for (i, t) in self.transitions.iter().enumerate() {
            let record = Record::Transition(i);
            if !t.cost.is_finite() {
                violations.push(Violation::NonFiniteCost { record });
            }
            let from = t.kind.source();
            for id in iter::once(from).chain(t.kind.targets()) {
                if !known.contains_key(&id) {
                    violations.push(Violation::DanglingId { record, id });
                }
            }
            if t.kind
                .targets()
                .any(|to| to.frame != from.frame.wrapping_add(1))
            {
                violations.push(Violation::NonConsecutiveFrames { record });
            }
            if let TransitionKind::Division { to1, to2, .. } = t.kind {
                if to1 == to2 {
                    violations.push(Violation::IdenticalDaughters { record });
                }
            }
            if let Some(&first) = seen_transitions.get(&t.kind.dedup_key()) {
                violations.push(Violation::DuplicateTransition { record, first });
            } else {
                seen_transitions.insert(t.kind.dedup_key(), i);
            }
        }

        for (i, c) in self.conflicts.iter().enumerate() {
            let record = Record::Conflict(i);
            if !in_range(c.frame) {
                violations.push(Violation::FrameOutOfRange {
                    record,
                    frame: c.frame,
                });
            }
            if c.members.len() < 2 {
                violations.push(Violation::ConflictTooSmall { record });
            }
            for (k, &id) in c.members.iter().enumerate() {
                if !known.contains_key(&id) {
                    violations.push(Violation::DanglingId { record, id });
                }
                if id.frame != c.frame {
                    violations.push(Violation::ConflictCrossFrame { record, id });
                }
                if c.members[..k].contains(&id) {
                    violations.push(Violation::ConflictDuplicateMember { record, id });
                }
            }
        }

        ValidationReport { violations }
    }

    /// Validates the instance and resolves all id references to positions.
    pub fn index(&self) -> Result<InstanceIndex, ValidationReport> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(report);
        }
        let positions: BTreeMap<DetectionId, usize> = self
            .detections
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id, i))
            .collect();
        let transitions: Vec<Endpoints> = self
            .transitions
            .iter()
            .map(|t| {
                let mut targets = [usize::MAX; 2];
                let mut arity = 0;
                for (slot, to) in targets.iter_mut().zip(t.kind.targets()) {
                    *slot = positions[&to];
                    arity += 1;
                }
                Endpoints {
                    source: positions[&t.kind.source()],
                    targets,
                    arity,
                }
            })
            .collect();
        let conflicts = self
            .conflicts
            .iter()
            .map(|c| c.members.iter().map(|id| positions[id]).collect())
            .collect();
        let mut incoming = alloc::vec![Vec::new(); self.detections.len()];
        let mut outgoing = alloc::vec![Vec::new(); self.detections.len()];
        for (e, ends) in transitions.iter().enumerate() {
            outgoing[ends.source].push(e);
            for &to in ends.targets() {
                incoming[to].push(e);
            }
        }
        Ok(InstanceIndex {
            positions,
            transitions,
            conflicts,
            incoming,
            outgoing,
        })
    }

    /// Sorts all records into canonical order: detections by id, transitions
    /// by source frame, then kind (moves first), then ids with division
    /// children ascending,
    /// conflict members ascending and conflict sets by frame then members.
    pub fn canonicalize(&mut self) {
        self.detections.sort_by_key(|d| d.id);
        for t in &mut self.transitions {
            if let TransitionKind::Division { to1, to2, .. } = &mut t.kind {
                if *to2 < *to1 {
                    core::mem::swap(to1, to2);
                }
            }
        }
        self.transitions.sort_by_key(|t| {
            let (kind, from, a, b) = t.kind.dedup_key();
            (from.frame, kind, from, a, b)
        });
        for c in &mut self.conflicts {
            c.members.sort();
        }
        self.conflicts
            .sort_by(|a, b| (a.frame, &a.members).cmp(&(b.frame, &b.members)));
    }
}

/// Source and target positions of one transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoints {
    pub source: usize,
    targets: [usize; 2],
    arity: u8,
}

impl Endpoints {
    pub fn targets(&self) -> &[usize] {
        &self.targets[..self.arity as usize]
    }
}

/// Position lookup for a validated instance.
#[derive(Debug, Clone)]
pub struct InstanceIndex {
    positions: BTreeMap<DetectionId, usize>,
    transitions: Vec<Endpoints>,
    conflicts: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl InstanceIndex {
    pub fn position(&self, id: DetectionId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn endpoints(&self, transition: usize) -> &Endpoints {
        &self.transitions[transition]
    }

    pub fn conflict_members(&self, conflict: usize) -> &[usize] {
        &self.conflicts[conflict]
    }

    /// Transitions entering the detection at `position`, in instance order.
    pub fn incoming(&self, position: usize) -> &[usize] {
        &self.incoming[position]
    }

    pub fn outgoing(&self, position: usize) -> &[usize] {
        &self.outgoing[position]
    }

    pub fn check_feasible(&self, instance: &Instance, x: &Assignment) -> FeasibilityReport {
        let mut violations = Vec::new();
        if x.detection_on.len() != instance.detections.len()
            || x.transition_on.len() != instance.transitions.len()
        {
            violations.push(ConstraintViolation::ShapeMismatch);
            return FeasibilityReport { violations };
        }
        for (e, ends) in self.transitions.iter().enumerate() {
            if !x.transition_on[e] {
                continue;
            }
            for &endpoint in iter::once(&ends.source).chain(ends.targets()) {
                if !x.detection_on[endpoint] {
                    violations.push(ConstraintViolation::InactiveEndpoint {
                        transition: e,
                        detection: instance.detections[endpoint].id,
                    });
                }
            }
        }
        for (v, d) in instance.detections.iter().enumerate() {
            let active_in = self.incoming[v]
                .iter()
                .filter(|&&e| x.transition_on[e])
                .count();
            if active_in > 1 {
                violations.push(ConstraintViolation::MultipleIncoming { detection: d.id });
            }
            let active_out = self.outgoing[v]
                .iter()
                .filter(|&&e| x.transition_on[e])
                .count();
            if active_out > 1 {
                violations.push(ConstraintViolation::MultipleOutgoing { detection: d.id });
            }
        }
        for (c, members) in self.conflicts.iter().enumerate() {
            if members.iter().filter(|&&m| x.detection_on[m]).count() > 1 {
                violations.push(ConstraintViolation::ConflictViolated { conflict: c });
            }
        }
        FeasibilityReport { violations }
    }

    /// Total cost of `x`, including appearance and disappearance charges.
    pub fn energy(&self, instance: &Instance, x: &Assignment) -> Energy {
        let feasible = self.check_feasible(instance, x).is_feasible();
        if x.detection_on.len() != instance.detections.len()
            || x.transition_on.len() != instance.transitions.len()
        {
            return Energy {
                value: f64::NAN,
                feasible,
            };
        }
        let mut value = 0.0;
        for (v, d) in instance.detections.iter().enumerate() {
            if !x.detection_on[v] {
                continue;
            }
            value += d.cost;
            if d.id.frame > 1 && !self.incoming[v].iter().any(|&e| x.transition_on[e]) {
                value += d.appearance_cost;
            }
            if d.id.frame < instance.frame_count
                && !self.outgoing[v].iter().any(|&e| x.transition_on[e])
            {
                value += d.disappearance_cost;
            }
        }
        for (t, &on) in instance.transitions.iter().zip(&x.transition_on) {
            if on {
                value += t.cost;
            }
        }
        Energy { value, feasible }
    }
}

/// 0/1 values for every detection and transition, aligned with the
/// instance's `detections` and `transitions` vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub detection_on: Vec<bool>,
    pub transition_on: Vec<bool>,
}

impl Assignment {
    pub fn all_off(instance: &Instance) -> Self {
        Self {
            detection_on: alloc::vec![false; instance.detections.len()],
            transition_on: alloc::vec![false; instance.transitions.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintViolation {
    /// Assignment length differs from the instance's variable counts.
    ShapeMismatch,
    /// The instance itself failed validation.
    InvalidInstance,
    /// An active transition touches an inactive detection.
    InactiveEndpoint {
        transition: usize,
        detection: DetectionId,
    },
    MultipleIncoming {
        detection: DetectionId,
    },
    MultipleOutgoing {
        detection: DetectionId,
    },
    /// More than one member of a conflict set is active.
    ConflictViolated {
        conflict: usize,
    },
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintViolation::ShapeMismatch => {
                write!(f, "assignment does not match the instance's variables")
            }
            ConstraintViolation::InvalidInstance => write!(f, "instance is not well-formed"),
            ConstraintViolation::InactiveEndpoint {
                transition,
                detection,
            } => write!(
                f,
                "transition #{transition} is active but its endpoint {detection} is off"
            ),
            ConstraintViolation::MultipleIncoming { detection } => {
                write!(
                    f,
                    "detection {detection} has more than one active incoming transition"
                )
            }
            ConstraintViolation::MultipleOutgoing { detection } => {
                write!(
                    f,
                    "detection {detection} has more than one active outgoing transition"
                )
            }
            ConstraintViolation::ConflictViolated { conflict } => {
                write!(
                    f,
                    "conflict set #{conflict} has more than one active member"
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub violations: Vec<ConstraintViolation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub value: f64,
    pub feasible: bool,
}

pub fn validate(instance: &Instance) -> ValidationReport {
    instance.validate()
}

pub fn check_feasible(instance: &Instance, x: &Assignment) -> FeasibilityReport {
    match instance.index() {
        Ok(index) => index.check_feasible(instance, x),
        Err(_) => FeasibilityReport {
            violations: alloc::vec![ConstraintViolation::InvalidInstance],
        },
    }
}

pub fn energy(instance: &Instance, x: &Assignment) -> Energy {
    match instance.index() {
        Ok(index) => index.energy(instance, x),
        Err(_) => Energy {
            value: f64::NAN,
            feasible: false,
        },
    }
}
