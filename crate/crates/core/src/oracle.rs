//! Exhaustive solver of the standard model for tiny instances.
//!
//! Depth-first enumeration over detection bits, then transition bits, both
//! in instance order with 0 tried before 1. Branches that already violate a
//! conflict, endpoint or slot constraint are cut. Only strictly better
//! leaves replace the incumbent, so the lexicographically smallest argmin
//! is returned.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::instance::{Assignment, Instance, InstanceIndex, ValidationReport};

pub const DEFAULT_BUDGET: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub optimum: f64,
    pub argmin: Assignment,
    /// Feasible assignments visited.
    pub explored: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    OverBudget { variables: usize, budget: usize },
    Invalid(ValidationReport),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::OverBudget { variables, budget } => write!(
                f,
                "instance has {variables} binary variables, more than the oracle budget of {budget}"
            ),
            OracleError::Invalid(report) => write!(f, "{report}"),
        }
    }
}

impl core::error::Error for OracleError {}

pub fn brute_force_solve(instance: &Instance, budget: usize) -> Result<OracleResult, OracleError> {
    let variables = instance.variable_count();
    if variables > budget {
        return Err(OracleError::OverBudget { variables, budget });
    }
    let index = instance.index().map_err(OracleError::Invalid)?;
    let detections = instance.detections.len();

    let mut conflicts_of: Vec<Vec<usize>> = vec![Vec::new(); detections];
    for c in 0..instance.conflicts.len() {
        for &m in index.conflict_members(c) {
            conflicts_of[m].push(c);
        }
    }
    let mut search = Search {
        instance,
        index: &index,
        conflicts_of,
        conflict_load: vec![0; instance.conflicts.len()],
        x: Assignment::all_off(instance),
        in_count: vec![0; detections],
        out_count: vec![0; detections],
        best: None,
        explored: 0,
    };
    search.detection(0, 0.0);
    let (_, argmin) = search
        .best
        .expect("the all-off assignment is always feasible");
    let optimum = index.energy(instance, &argmin).value;
    Ok(OracleResult {
        optimum,
        argmin,
        explored: search.explored,
    })
}

struct Search<'a> {
    instance: &'a Instance,
    index: &'a InstanceIndex,
    conflicts_of: Vec<Vec<usize>>,
    conflict_load: Vec<u32>,
    x: Assignment,
    in_count: Vec<u32>,
    out_count: Vec<u32>,
    best: Option<(f64, Assignment)>,
    explored: u64,
}

impl Search<'_> {
    fn detection(&mut self, p: usize, partial: f64) {
        if p == self.instance.detections.len() {
            self.transition(0, partial);
            return;
        }
        self.detection(p + 1, partial);
        if self.conflicts_of[p]
            .iter()
            .any(|&c| self.conflict_load[c] > 0)
        {
            return;
        }
        for &c in &self.conflicts_of[p] {
            self.conflict_load[c] += 1;
        }
        self.x.detection_on[p] = true;
        self.detection(p + 1, partial + self.instance.detections[p].cost);
        self.x.detection_on[p] = false;
        for &c in &self.conflicts_of[p] {
            self.conflict_load[c] -= 1;
        }
    }

    fn transition(&mut self, e: usize, partial: f64) {
        if e == self.instance.transitions.len() {
            self.leaf(partial);
            return;
        }
        self.transition(e + 1, partial);
        let ends = *self.index.endpoints(e);
        let admissible = self.x.detection_on[ends.source]
            && self.out_count[ends.source] == 0
            && ends
                .targets()
                .iter()
                .all(|&t| self.x.detection_on[t] && self.in_count[t] == 0);
        if !admissible {
            return;
        }
        self.out_count[ends.source] += 1;
        for &t in ends.targets() {
            self.in_count[t] += 1;
        }
        self.x.transition_on[e] = true;
        self.transition(e + 1, partial + self.instance.transitions[e].cost);
        self.x.transition_on[e] = false;
        self.out_count[ends.source] -= 1;
        for &t in ends.targets() {
            self.in_count[t] -= 1;
        }
    }

    fn leaf(&mut self, partial: f64) {
        self.explored += 1;
        let last = self.instance.frame_count;
        let mut value = partial;
        for (p, d) in self.instance.detections.iter().enumerate() {
            if !self.x.detection_on[p] {
                continue;
            }
            if d.id.frame > 1 && self.in_count[p] == 0 {
                value += d.appearance_cost;
            }
            if d.id.frame < last && self.out_count[p] == 0 {
                value += d.disappearance_cost;
            }
        }
        if self.best.as_ref().is_none_or(|(b, _)| value < *b) {
            self.best = Some((value, self.x.clone()));
        }
    }
}
