//! Primal rounding from a reparametrization.
//!
//! Frame by frame in one temporal direction: resolve the frame's conflicts
//! by an exact set packing over the detections' activation scores, then let
//! the surviving detections, in ascending score order, greedily pick their
//! cheapest transition towards the already fixed neighbouring frame.
//! Options that would break a coupling constraint with fixed detections are
//! skipped, so every produced assignment is feasible.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::bca::Direction;
use crate::decomposition::{
    rank_options, DecomposedGraph, DetectionFactorState, FactorCosts, Reparametrization,
};
use crate::instance::{Assignment, FeasibilityReport};
use crate::set_packing::{solve_packing, PackingProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrimalDirections {
    #[default]
    Both,
    Forward,
    Backward,
}

impl PrimalDirections {
    pub fn allows(self, direction: Direction) -> bool {
        self.directions().contains(&direction)
    }

    fn directions(self) -> &'static [Direction] {
        match self {
            PrimalDirections::Both => &[Direction::Forward, Direction::Backward],
            PrimalDirections::Forward => &[Direction::Forward],
            PrimalDirections::Backward => &[Direction::Backward],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionStatus {
    Off,
    OnUnassigned,
    /// Active. `in_choice` / `out_choice` record claimed edge slots.
    OnAssigned(DetectionFactorState),
}

impl DetectionStatus {
    pub fn is_on(&self) -> bool {
        !matches!(self, DetectionStatus::Off)
    }
}

/// Per-factor decisions of a primal extraction in progress.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialAssignment {
    status: Vec<DetectionStatus>,
}

impl PartialAssignment {
    pub fn new(graph: &DecomposedGraph) -> Self {
        Self {
            status: vec![DetectionStatus::OnUnassigned; graph.factors().len()],
        }
    }

    pub fn status(&self, factor: usize) -> DetectionStatus {
        self.status[factor]
    }

    pub fn claimed_in(&self, factor: usize) -> Option<usize> {
        match self.status[factor] {
            DetectionStatus::OnAssigned(s) => s.in_choice,
            _ => None,
        }
    }

    pub fn claimed_out(&self, factor: usize) -> Option<usize> {
        match self.status[factor] {
            DetectionStatus::OnAssigned(s) => s.out_choice,
            _ => None,
        }
    }

    fn state_mut(&mut self, factor: usize) -> &mut DetectionFactorState {
        if self.status[factor] == DetectionStatus::OnUnassigned {
            self.status[factor] = DetectionStatus::OnAssigned(DetectionFactorState {
                det: true,
                in_choice: None,
                out_choice: None,
            });
        }
        match &mut self.status[factor] {
            DetectionStatus::OnAssigned(s) => s,
            _ => panic!("claiming a slot of an inactive detection"),
        }
    }

    /// Standard-model assignment; unassigned active detections stay
    /// isolated.
    pub fn to_assignment(&self, graph: &DecomposedGraph) -> Assignment {
        let mut x = Assignment::all_off(graph.instance());
        for (f, status) in self.status.iter().enumerate() {
            x.detection_on[graph.detection_of(f)] = status.is_on();
        }
        for (e, link) in graph.links().iter().enumerate() {
            x.transition_on[e] = self.claimed_out(link.source) == Some(link.source_slot);
        }
        x
    }
}

/// Minimal reparametrized cost of each detection of `frame` conditioned on
/// being active.
pub fn score_detections(
    graph: &DecomposedGraph,
    lambda: &Reparametrization,
    frame: u32,
) -> Vec<f64> {
    let mut costs = FactorCosts::default();
    graph
        .frame_factors(frame)
        .map(|u| {
            graph.fill_detection_costs(&lambda.0, u, &mut costs);
            costs.min_active()
        })
        .collect()
}

/// Activation decision per detection of `frame` (in factor order) from an
/// exact packing of the scores under the frame's conflict sets.
pub fn resolve_conflicts(
    graph: &DecomposedGraph,
    lambda: &Reparametrization,
    frame: u32,
) -> Vec<bool> {
    let first = graph.frame_factors(frame).start;
    let problem = PackingProblem {
        scores: score_detections(graph, lambda, frame),
        conflicts: graph
            .frame_conflicts(frame)
            .map(|c| {
                graph.conflicts()[c]
                    .members
                    .iter()
                    .map(|&m| m - first)
                    .collect()
            })
            .collect(),
    };
    solve_packing(&problem).selected
}

/// Resolves the conflicts of `frame` and assigns its active detections'
/// transitions towards the frame before it in `direction`.
pub fn assign_frame(
    graph: &DecomposedGraph,
    lambda: &Reparametrization,
    frame: u32,
    direction: Direction,
    partial: &mut PartialAssignment,
) {
    let range = graph.frame_factors(frame);
    let on = resolve_conflicts(graph, lambda, frame);
    let scores = score_detections(graph, lambda, frame);
    for (k, u) in range.clone().enumerate() {
        if !on[k] {
            partial.status[u] = DetectionStatus::Off;
        }
    }
    let mut order: Vec<usize> = (0..on.len()).filter(|&k| on[k]).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let mut costs = FactorCosts::default();
    for k in order {
        let v = range.start + k;
        if partial.status[v] != DetectionStatus::OnUnassigned {
            continue;
        }
        graph.fill_detection_costs(&lambda.0, v, &mut costs);
        match direction {
            Direction::Forward => assign_incoming(graph, &costs, v, partial),
            Direction::Backward => assign_outgoing(graph, &costs, v, partial),
        }
    }
}

fn assign_incoming(
    graph: &DecomposedGraph,
    costs: &FactorCosts,
    v: usize,
    partial: &mut PartialAssignment,
) {
    let factor = &graph.factors()[v];
    let mut best = (0.0, None);
    for (slot, (edge, &cost)) in factor.in_edges.iter().zip(&costs.ins).enumerate() {
        if cost >= best.0 {
            continue;
        }
        let link = &graph.links()[edge.transition];
        let source_free =
            partial.status(link.source).is_on() && partial.claimed_out(link.source).is_none();
        let sibling_free = link.targets().iter().all(|&w| {
            w == v
                || (partial.status(w) == DetectionStatus::OnUnassigned
                    && partial.claimed_in(w).is_none())
        });
        if source_free && sibling_free {
            best = (cost, Some(slot));
        }
    }
    let total = costs.det + best.0 + rank_options(&costs.outs).best;
    if total >= 0.0 {
        partial.status[v] = DetectionStatus::Off;
        return;
    }
    partial.state_mut(v);
    if let Some(slot) = best.1 {
        let link = graph.links()[factor.in_edges[slot].transition];
        partial.state_mut(link.source).out_choice = Some(link.source_slot);
        for (&w, &w_slot) in link.targets().iter().zip(link.target_slots()) {
            partial.state_mut(w).in_choice = Some(w_slot);
        }
    }
}

fn assign_outgoing(
    graph: &DecomposedGraph,
    costs: &FactorCosts,
    v: usize,
    partial: &mut PartialAssignment,
) {
    let factor = &graph.factors()[v];
    let mut best = (0.0, None);
    for (slot, (edge, &cost)) in factor.out_edges.iter().zip(&costs.outs).enumerate() {
        if cost >= best.0 {
            continue;
        }
        let link = &graph.links()[edge.transition];
        let targets_free = link
            .targets()
            .iter()
            .all(|&w| partial.status(w).is_on() && partial.claimed_in(w).is_none());
        if targets_free {
            best = (cost, Some(slot));
        }
    }
    let total = costs.det + best.0 + rank_options(&costs.ins).best;
    if total >= 0.0 {
        partial.status[v] = DetectionStatus::Off;
        return;
    }
    partial.state_mut(v).out_choice = best.1;
    if let Some(slot) = best.1 {
        let link = graph.links()[factor.out_edges[slot].transition];
        for (&w, &w_slot) in link.targets().iter().zip(link.target_slots()) {
            partial.state_mut(w).in_choice = Some(w_slot);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub assignment: Assignment,
    /// Energy under the original costs.
    pub energy: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrimalError {
    Infeasible {
        direction: Direction,
        report: FeasibilityReport,
    },
}

impl fmt::Display for PrimalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimalError::Infeasible { direction, report } => {
                write!(
                    f,
                    "{direction} primal extraction produced an infeasible assignment"
                )?;
                for v in &report.violations {
                    write!(f, "; {v}")?;
                }
                Ok(())
            }
        }
    }
}

impl core::error::Error for PrimalError {}

/// Converts a complete partial assignment, checks feasibility and
/// evaluates the original-cost energy.
pub fn finish_partial(
    graph: &DecomposedGraph,
    partial: PartialAssignment,
    direction: Direction,
) -> Result<PrimalSolution, PrimalError> {
    let assignment = partial.to_assignment(graph);
    let index = graph.instance_index();
    let report = index.check_feasible(graph.instance(), &assignment);
    if !report.is_feasible() {
        return Err(PrimalError::Infeasible { direction, report });
    }
    let energy = index.energy(graph.instance(), &assignment).value;
    Ok(PrimalSolution {
        assignment,
        energy,
        direction,
    })
}

/// Runs the frame loop in one direction over the whole problem.
pub fn extract_in_direction(
    graph: &DecomposedGraph,
    lambda: &Reparametrization,
    direction: Direction,
) -> Result<PrimalSolution, PrimalError> {
    let mut partial = PartialAssignment::new(graph);
    for t in direction.frames(graph.frame_count()) {
        assign_frame(graph, lambda, t, direction, &mut partial);
    }
    finish_partial(graph, partial, direction)
}

/// Best of the forward and backward extractions; forward wins ties.
pub fn extract_primal(
    graph: &DecomposedGraph,
    lambda: &Reparametrization,
) -> Result<PrimalSolution, PrimalError> {
    extract_primal_with(graph, lambda, PrimalDirections::Both)
}

pub fn extract_primal_with(
    graph: &DecomposedGraph,
    lambda: &Reparametrization,
    directions: PrimalDirections,
) -> Result<PrimalSolution, PrimalError> {
    let mut best: Option<PrimalSolution> = None;
    for &d in directions.directions() {
        let candidate = extract_in_direction(graph, lambda, d)?;
        if best.as_ref().is_none_or(|b| candidate.energy < b.energy) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one direction"))
}
