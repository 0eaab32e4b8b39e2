//! Decomposed factor graph: one factor per detection (activation bit plus
//! at most one incoming and one outgoing transition) and one factor per
//! conflict set, coupled through a flat vector of dual variables.

use alloc::vec::Vec;
use core::ops::Range;

use crate::instance::{Assignment, DetectionId, Instance, InstanceIndex, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InEdge {
    pub transition: usize,
    pub cost: f64,
    /// Dual coordinate added to this copy.
    pub lambda: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutEdge {
    pub transition: usize,
    pub cost: f64,
    /// First dual coordinate subtracted from this copy; divisions also
    /// subtract `lambda + 1`.
    pub lambda: usize,
    pub division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConflictEdge {
    pub conflict: usize,
    /// Position of the detection within the conflict factor.
    pub slot: usize,
    pub lambda: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFactor {
    pub id: DetectionId,
    pub det_cost: f64,
    pub in_edges: Vec<InEdge>,
    pub out_edges: Vec<OutEdge>,
    pub conflict_edges: Vec<ConflictEdge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictFactor {
    pub frame: u32,
    /// Detection factor indices.
    pub members: Vec<usize>,
    pub costs: Vec<f64>,
    pub lambdas: Vec<usize>,
}

/// Factor-level view of one transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionLink {
    pub source: usize,
    /// Position within the source's `out_edges`.
    pub source_slot: usize,
    targets: [usize; 2],
    target_slots: [usize; 2],
    pub division: bool,
    pub lambda: usize,
}

impl TransitionLink {
    pub fn targets(&self) -> &[usize] {
        &self.targets[..self.arity()]
    }

    /// Positions within each target's `in_edges`.
    pub fn target_slots(&self) -> &[usize] {
        &self.target_slots[..self.arity()]
    }

    fn arity(&self) -> usize {
        if self.division {
            2
        } else {
            1
        }
    }
}

/// Dual vector: one coordinate per move, two per division (one per child,
/// in child order) and one per (detection, conflict) incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Reparametrization(pub Vec<f64>);

impl Reparametrization {
    pub fn zeros(graph: &DecomposedGraph) -> Self {
        Self(alloc::vec![0.0; graph.lambda_len()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionFactorState {
    pub det: bool,
    pub in_choice: Option<usize>,
    pub out_choice: Option<usize>,
}

impl DetectionFactorState {
    pub const OFF: Self = Self {
        det: false,
        in_choice: None,
        out_choice: None,
    };

    pub fn is_admissible(&self, factor: &DetectionFactor) -> bool {
        let fits = |choice: Option<usize>, len: usize| choice.is_none_or(|k| k < len);
        (self.det || (self.in_choice.is_none() && self.out_choice.is_none()))
            && fits(self.in_choice, factor.in_edges.len())
            && fits(self.out_choice, factor.out_edges.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConflictFactorState {
    pub active_member: Option<usize>,
}

/// Reparametrized costs of a detection factor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorCosts {
    pub det: f64,
    pub ins: Vec<f64>,
    pub outs: Vec<f64>,
}

impl FactorCosts {
    pub fn cost_of(&self, state: &DetectionFactorState) -> f64 {
        if !state.det {
            return 0.0;
        }
        self.det
            + state.in_choice.map_or(0.0, |k| self.ins[k])
            + state.out_choice.map_or(0.0, |k| self.outs[k])
    }

    /// Minimum over active states.
    pub fn min_active(&self) -> f64 {
        self.det + rank_options(&self.ins).best + rank_options(&self.outs).best
    }
}

/// Best and second-best among the options "no edge" (cost 0) and one option
/// per edge. Ties prefer "no edge", then the lowest edge index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedOptions {
    pub best: f64,
    pub best_choice: Option<usize>,
    /// `+inf` when there are no edges.
    pub second: f64,
}

pub fn rank_options(costs: &[f64]) -> RankedOptions {
    let mut r = RankedOptions {
        best: 0.0,
        best_choice: None,
        second: f64::INFINITY,
    };
    for (k, &c) in costs.iter().enumerate() {
        if c < r.best {
            r.second = r.best;
            r.best = c;
            r.best_choice = Some(k);
        } else if c < r.second {
            r.second = c;
        }
    }
    r
}

/// Minimum of a detection factor over all its states. Linear in the number
/// of edges.
pub fn min_detection_factor(costs: &FactorCosts) -> (f64, DetectionFactorState) {
    let ins = rank_options(&costs.ins);
    let outs = rank_options(&costs.outs);
    let active = costs.det + ins.best + outs.best;
    if active < 0.0 {
        let state = DetectionFactorState {
            det: true,
            in_choice: ins.best_choice,
            out_choice: outs.best_choice,
        };
        (active, state)
    } else {
        (0.0, DetectionFactorState::OFF)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictMinima {
    pub best: (f64, ConflictFactorState),
    pub second_best: (f64, ConflictFactorState),
}

/// The two lowest-cost states of a conflict factor: "all off" (cost 0) or
/// exactly one member on. Ties prefer "all off", then the lowest member.
pub fn min_conflict_factor(costs: &[f64]) -> ConflictMinima {
    let mut best = (0.0, None);
    let mut second = (f64::INFINITY, None);
    for (k, &c) in costs.iter().enumerate() {
        if c < best.0 {
            second = best;
            best = (c, Some(k));
        } else if c < second.0 {
            second = (c, Some(k));
        }
    }
    let wrap = |(v, m): (f64, Option<usize>)| (v, ConflictFactorState { active_member: m });
    ConflictMinima {
        best: wrap(best),
        second_best: wrap(second),
    }
}

/// Node states for every factor of the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorLabeling {
    pub detections: Vec<DetectionFactorState>,
    pub conflicts: Vec<ConflictFactorState>,
}

#[derive(Debug, Clone)]
pub struct DecomposedGraph {
    instance: Instance,
    index: InstanceIndex,
    factors: Vec<DetectionFactor>,
    /// Instance detection position of each factor.
    detection_of: Vec<usize>,
    factor_of: Vec<usize>,
    conflicts: Vec<ConflictFactor>,
    /// Instance conflict position of each conflict factor.
    conflict_source: Vec<usize>,
    links: Vec<TransitionLink>,
    frame_factors: Vec<Range<usize>>,
    frame_conflicts: Vec<Range<usize>>,
    lambda_len: usize,
}

/// Builds the decomposed graph with transition costs split evenly over
/// their copies (halves for moves, thirds for divisions) and boundary
/// charges folded into activation and transition costs.
pub fn decompose(instance: &Instance) -> Result<DecomposedGraph, ValidationReport> {
    DecomposedGraph::new(instance)
}

impl DecomposedGraph {
    pub fn new(instance: &Instance) -> Result<Self, ValidationReport> {
        let index = instance.index()?;
        let frames = instance.frame_count as usize;

        let mut detection_of: Vec<usize> = (0..instance.detections.len()).collect();
        detection_of.sort_by_key(|&p| instance.detections[p].id);
        let mut factor_of = alloc::vec![0; detection_of.len()];
        for (f, &p) in detection_of.iter().enumerate() {
            factor_of[p] = f;
        }

        let mut factors: Vec<DetectionFactor> = detection_of
            .iter()
            .map(|&p| {
                let d = &instance.detections[p];
                DetectionFactor {
                    id: d.id,
                    det_cost: d.cost,
                    in_edges: Vec::new(),
                    out_edges: Vec::new(),
                    conflict_edges: Vec::new(),
                }
            })
            .collect();

        let mut lambda_len = 0;
        let mut links = Vec::with_capacity(instance.transitions.len());
        for (e, t) in instance.transitions.iter().enumerate() {
            let ends = index.endpoints(e);
            let division = t.kind.is_division();
            let share = t.cost / (1 + ends.targets().len()) as f64;
            let source = factor_of[ends.source];
            let source_slot = factors[source].out_edges.len();
            factors[source].out_edges.push(OutEdge {
                transition: e,
                cost: share,
                lambda: lambda_len,
                division,
            });
            let mut targets = [usize::MAX; 2];
            let mut target_slots = [usize::MAX; 2];
            for (k, &to) in ends.targets().iter().enumerate() {
                let target = factor_of[to];
                targets[k] = target;
                target_slots[k] = factors[target].in_edges.len();
                factors[target].in_edges.push(InEdge {
                    transition: e,
                    cost: share,
                    lambda: lambda_len + k,
                });
            }
            links.push(TransitionLink {
                source,
                source_slot,
                targets,
                target_slots,
                division,
                lambda: lambda_len,
            });
            lambda_len += ends.targets().len();
        }

        // Boundary charges: an active detection without incoming transition
        // pays the appearance cost, which is exactly what adding it to the
        // activation cost and subtracting it from every incoming copy does.
        for (f, factor) in factors.iter_mut().enumerate() {
            let d = &instance.detections[detection_of[f]];
            if d.id.frame > 1 {
                factor.det_cost += d.appearance_cost;
                for edge in &mut factor.in_edges {
                    edge.cost -= d.appearance_cost;
                }
            }
            if d.id.frame < instance.frame_count {
                factor.det_cost += d.disappearance_cost;
                for edge in &mut factor.out_edges {
                    edge.cost -= d.disappearance_cost;
                }
            }
        }

        let mut conflict_source: Vec<usize> = (0..instance.conflicts.len()).collect();
        conflict_source.sort_by_key(|&c| instance.conflicts[c].frame);
        let mut conflicts = Vec::with_capacity(conflict_source.len());
        for (c, &source) in conflict_source.iter().enumerate() {
            let members: Vec<usize> = index
                .conflict_members(source)
                .iter()
                .map(|&p| factor_of[p])
                .collect();
            let lambdas: Vec<usize> = (lambda_len..lambda_len + members.len()).collect();
            for (slot, (&m, &lambda)) in members.iter().zip(&lambdas).enumerate() {
                factors[m].conflict_edges.push(ConflictEdge {
                    conflict: c,
                    slot,
                    lambda,
                });
            }
            lambda_len += members.len();
            conflicts.push(ConflictFactor {
                frame: instance.conflicts[source].frame,
                costs: alloc::vec![0.0; members.len()],
                members,
                lambdas,
            });
        }

        let frame_factors = frame_ranges(frames, factors.iter().map(|f| f.id.frame));
        let frame_conflicts = frame_ranges(frames, conflicts.iter().map(|c| c.frame));

        Ok(Self {
            instance: instance.clone(),
            index,
            factors,
            detection_of,
            factor_of,
            conflicts,
            conflict_source,
            links,
            frame_factors,
            frame_conflicts,
            lambda_len,
        })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn instance_index(&self) -> &InstanceIndex {
        &self.index
    }

    pub fn frame_count(&self) -> u32 {
        self.instance.frame_count
    }

    pub fn factors(&self) -> &[DetectionFactor] {
        &self.factors
    }

    pub fn conflicts(&self) -> &[ConflictFactor] {
        &self.conflicts
    }

    pub fn links(&self) -> &[TransitionLink] {
        &self.links
    }

    /// Factor index of the instance detection at `position`.
    pub fn factor_of(&self, position: usize) -> usize {
        self.factor_of[position]
    }

    /// Instance detection position of factor `f`.
    pub fn detection_of(&self, f: usize) -> usize {
        self.detection_of[f]
    }

    /// Instance position of conflict factor `c`.
    pub fn conflict_source(&self, c: usize) -> usize {
        self.conflict_source[c]
    }

    /// Detection factors of a 1-based frame, as a contiguous index range.
    pub fn frame_factors(&self, frame: u32) -> Range<usize> {
        self.frame_factors[frame as usize - 1].clone()
    }

    pub fn frame_conflicts(&self, frame: u32) -> Range<usize> {
        self.frame_conflicts[frame as usize - 1].clone()
    }

    pub fn lambda_len(&self) -> usize {
        self.lambda_len
    }

    pub fn move_count(&self) -> usize {
        self.links.iter().filter(|l| !l.division).count()
    }

    pub fn division_count(&self) -> usize {
        self.links.iter().filter(|l| l.division).count()
    }

    pub fn conflict_edge_count(&self) -> usize {
        self.conflicts.iter().map(|c| c.members.len()).sum()
    }

    /// Writes the reparametrized costs of detection factor `u` into `out`,
    /// reusing its buffers. Returns the number of stored values read.
    pub fn fill_detection_costs(&self, lambda: &[f64], u: usize, out: &mut FactorCosts) -> usize {
        let factor = &self.factors[u];
        out.det = factor.det_cost
            - factor
                .conflict_edges
                .iter()
                .map(|e| lambda[e.lambda])
                .sum::<f64>();
        out.ins.clear();
        out.ins
            .extend(factor.in_edges.iter().map(|e| e.cost + lambda[e.lambda]));
        out.outs.clear();
        out.outs.extend(factor.out_edges.iter().map(|e| {
            let shift = if e.division {
                lambda[e.lambda] + lambda[e.lambda + 1]
            } else {
                lambda[e.lambda]
            };
            e.cost - shift
        }));
        1 + factor.conflict_edges.len() + factor.in_edges.len() + factor.out_edges.len()
    }

    pub fn detection_costs(&self, lambda: &Reparametrization, u: usize) -> FactorCosts {
        let mut costs = FactorCosts::default();
        self.fill_detection_costs(&lambda.0, u, &mut costs);
        costs
    }

    pub fn fill_conflict_costs(&self, lambda: &[f64], c: usize, out: &mut Vec<f64>) -> usize {
        let factor = &self.conflicts[c];
        out.clear();
        out.extend(
            factor
                .costs
                .iter()
                .zip(&factor.lambdas)
                .map(|(&cost, &l)| cost + lambda[l]),
        );
        factor.costs.len()
    }

    pub fn conflict_costs(&self, lambda: &Reparametrization, c: usize) -> Vec<f64> {
        let mut costs = Vec::new();
        self.fill_conflict_costs(&lambda.0, c, &mut costs);
        costs
    }

    /// Lower bound: sum of all factor minima under the reparametrized costs.
    pub fn dual_value(&self, lambda: &[f64]) -> f64 {
        let mut costs = FactorCosts::default();
        let mut conflict = Vec::new();
        let mut total = 0.0;
        for u in 0..self.factors.len() {
            self.fill_detection_costs(lambda, u, &mut costs);
            total += min_detection_factor(&costs).0;
        }
        for c in 0..self.conflicts.len() {
            self.fill_conflict_costs(lambda, c, &mut conflict);
            total += min_conflict_factor(&conflict).best.0;
        }
        total
    }

    /// Factor states induced by a standard-model assignment. Consistent with
    /// all coupling constraints whenever the assignment is feasible.
    pub fn labeling_from_assignment(&self, x: &Assignment) -> FactorLabeling {
        let mut detections = alloc::vec![DetectionFactorState::OFF; self.factors.len()];
        for (f, state) in detections.iter_mut().enumerate() {
            state.det = x.detection_on[self.detection_of[f]];
        }
        for (e, link) in self.links.iter().enumerate() {
            if !x.transition_on[e] {
                continue;
            }
            detections[link.source].out_choice = Some(link.source_slot);
            for (&t, &slot) in link.targets().iter().zip(link.target_slots()) {
                detections[t].in_choice = Some(slot);
            }
        }
        let conflicts = self
            .conflicts
            .iter()
            .map(|c| ConflictFactorState {
                active_member: c
                    .members
                    .iter()
                    .position(|&m| x.detection_on[self.detection_of[m]]),
            })
            .collect();
        FactorLabeling {
            detections,
            conflicts,
        }
    }

    /// Sum of factor costs of a labeling under reparametrization `lambda`.
    pub fn decomposed_energy(&self, lambda: &[f64], labeling: &FactorLabeling) -> f64 {
        let mut costs = FactorCosts::default();
        let mut conflict = Vec::new();
        let mut total = 0.0;
        for (u, state) in labeling.detections.iter().enumerate() {
            self.fill_detection_costs(lambda, u, &mut costs);
            total += costs.cost_of(state);
        }
        for (c, state) in labeling.conflicts.iter().enumerate() {
            if let Some(k) = state.active_member {
                self.fill_conflict_costs(lambda, c, &mut conflict);
                total += conflict[k];
            }
        }
        total
    }
}

fn frame_ranges(frames: usize, sorted_frames: impl Iterator<Item = u32>) -> Vec<Range<usize>> {
    let mut counts = alloc::vec![0usize; frames];
    for frame in sorted_frames {
        counts[frame as usize - 1] += 1;
    }
    let mut start = 0;
    counts
        .into_iter()
        .map(|n| {
            start += n;
            start - n..start
        })
        .collect()
}
