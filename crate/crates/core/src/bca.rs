//! Monotone dual block-coordinate ascent over the decomposed graph.
//!
//! Four update types act on the dual vector:
//!
//! * detection → conflict: moves the minimal active cost of a detection
//!   evenly onto its conflict copies;
//! * conflict → detection: levels all member costs of a conflict factor at
//!   the mean of its best and second-best state, handing the excess back to
//!   the detections;
//! * forward / backward transition updates: equalize the active minima
//!   conditioned on each outgoing (incoming) edge and push the excess to
//!   the neighbouring frame.
//!
//! Every update is applied immediately and never decreases the dual value.
//! A sweep visits all frames in one temporal direction; [`run`] alternates
//! directions and periodically extracts a primal solution.

use alloc::vec::Vec;
use core::fmt;

use crate::decomposition::{
    min_conflict_factor, rank_options, DecomposedGraph, FactorCosts, Reparametrization,
};
use crate::instance::{Assignment, FeasibilityReport};
use crate::primal::{self, PartialAssignment, PrimalDirections, PrimalError, PrimalSolution};

/// Sparse increment of the dual vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DualUpdate {
    pub deltas: Vec<(usize, f64)>,
}

impl DualUpdate {
    pub fn apply(&self, lambda: &mut [f64]) {
        for &(k, d) in &self.deltas {
            lambda[k] += d;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.deltas.iter().fold(0.0, |m, &(_, d)| m.max(d.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    /// Frames 1..=T in this direction's visiting order.
    pub fn frames(self, frame_count: u32) -> impl Iterator<Item = u32> {
        let forward = self == Direction::Forward;
        (1..=frame_count).map(move |t| if forward { t } else { frame_count + 1 - t })
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

/// Counts of elementary operations: stored costs and duals read while
/// evaluating factors, and dual coordinates written.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub cost_reads: u64,
    pub dual_writes: u64,
    pub updates: u64,
}

impl OpCounter {
    pub fn elementary(&self) -> u64 {
        self.cost_reads + self.dual_writes
    }
}

#[derive(Debug, Default)]
struct Scratch {
    costs: FactorCosts,
    conflict: Vec<f64>,
    update: DualUpdate,
}

fn detection_to_conflicts(g: &DecomposedGraph, lambda: &[f64], u: usize, s: &mut Scratch) -> usize {
    s.update.deltas.clear();
    let edges = &g.factors()[u].conflict_edges;
    if edges.is_empty() {
        return 0;
    }
    let reads = g.fill_detection_costs(lambda, u, &mut s.costs);
    let share = s.costs.min_active() / edges.len() as f64;
    s.update
        .deltas
        .extend(edges.iter().map(|e| (e.lambda, share)));
    reads
}

fn conflict_to_detections(g: &DecomposedGraph, lambda: &[f64], c: usize, s: &mut Scratch) -> usize {
    let reads = g.fill_conflict_costs(lambda, c, &mut s.conflict);
    let minima = min_conflict_factor(&s.conflict);
    let level = 0.5 * (minima.best.0 + minima.second_best.0);
    s.update.deltas.clear();
    s.update.deltas.extend(
        g.conflicts()[c]
            .lambdas
            .iter()
            .zip(&s.conflict)
            .map(|(&l, &cost)| (l, level - cost)),
    );
    reads
}

fn forward_transition(g: &DecomposedGraph, lambda: &[f64], u: usize, s: &mut Scratch) -> usize {
    s.update.deltas.clear();
    let factor = &g.factors()[u];
    if factor.out_edges.is_empty() {
        return 0;
    }
    let reads = g.fill_detection_costs(lambda, u, &mut s.costs);
    let base = s.costs.det + rank_options(&s.costs.ins).best;
    let outs = rank_options(&s.costs.outs);
    let target = (0.5 * ((base + outs.best) + (base + outs.second))).min(0.0);
    for (edge, &cost) in factor.out_edges.iter().zip(&s.costs.outs) {
        let excess = base + cost - target;
        if edge.division {
            s.update.deltas.push((edge.lambda, 0.5 * excess));
            s.update.deltas.push((edge.lambda + 1, 0.5 * excess));
        } else {
            s.update.deltas.push((edge.lambda, excess));
        }
    }
    reads
}

fn backward_transition(g: &DecomposedGraph, lambda: &[f64], v: usize, s: &mut Scratch) -> usize {
    s.update.deltas.clear();
    let factor = &g.factors()[v];
    if factor.in_edges.is_empty() {
        return 0;
    }
    let reads = g.fill_detection_costs(lambda, v, &mut s.costs);
    let base = s.costs.det + rank_options(&s.costs.outs).best;
    let ins = rank_options(&s.costs.ins);
    let target = (0.5 * ((base + ins.best) + (base + ins.second))).min(0.0);
    s.update.deltas.extend(
        factor
            .in_edges
            .iter()
            .zip(&s.costs.ins)
            .map(|(edge, &cost)| (edge.lambda, target - (base + cost))),
    );
    reads
}

type UpdateFn = fn(&DecomposedGraph, &[f64], usize, &mut Scratch) -> usize;

fn single_update(
    f: UpdateFn,
    g: &DecomposedGraph,
    lambda: &Reparametrization,
    node: usize,
) -> DualUpdate {
    let mut s = Scratch::default();
    f(g, &lambda.0, node, &mut s);
    s.update
}

/// Update moving the minimal active cost of detection `u` onto its conflict
/// copies. Empty when `u` belongs to no conflict set.
pub fn conflict_update_detection(
    g: &DecomposedGraph,
    lambda: &Reparametrization,
    u: usize,
) -> DualUpdate {
    single_update(detection_to_conflicts, g, lambda, u)
}

/// Update levelling the member costs of conflict factor `c`.
pub fn conflict_update_conflict(
    g: &DecomposedGraph,
    lambda: &Reparametrization,
    c: usize,
) -> DualUpdate {
    single_update(conflict_to_detections, g, lambda, c)
}

/// Update pushing the outgoing-edge costs of `u` into the next frame.
pub fn transition_update_forward(
    g: &DecomposedGraph,
    lambda: &Reparametrization,
    u: usize,
) -> DualUpdate {
    single_update(forward_transition, g, lambda, u)
}

/// Update pushing the incoming-edge costs of `v` into the previous frame.
/// For a division only the coordinate belonging to `v` changes.
pub fn transition_update_backward(
    g: &DecomposedGraph,
    lambda: &Reparametrization,
    v: usize,
) -> DualUpdate {
    single_update(backward_transition, g, lambda, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalMode {
    /// Assign frames inside the sweep, right after each frame's conflict
    /// updates, in the sweep's direction. At that point the costs pushed in
    /// from the previous frame have not yet moved on, so activation scores
    /// are informative.
    FrameSynchronized,
    /// Extract from the whole problem after the sweep, in the configured
    /// directions.
    WholeProblem,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    /// Relative primal/dual gap at which to stop.
    pub gap_tolerance: f64,
    /// A sweep counts as stalled when it improves the dual by less than
    /// `stall_tolerance * (1 + |D|)`; three stalled sweeps in a row stop
    /// the solver.
    pub stall_tolerance: f64,
    /// Sweeps between primal extractions.
    pub primal_period: usize,
    pub primal_directions: PrimalDirections,
    pub primal_mode: PrimalMode,
    /// Re-evaluate the dual after every single update and fail on any
    /// decrease. Quadratic cost; for debugging.
    pub check_monotonicity: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 1000,
            gap_tolerance: 1e-4,
            stall_tolerance: 1e-9,
            primal_period: 25,
            primal_directions: PrimalDirections::Both,
            primal_mode: PrimalMode::FrameSynchronized,
            check_monotonicity: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.max_sweeps < 1 {
            return Err(SolveError::InvalidConfig("max_sweeps must be at least 1"));
        }
        if self.gap_tolerance.is_nan() || self.gap_tolerance < 0.0 {
            return Err(SolveError::InvalidConfig(
                "gap_tolerance must be non-negative",
            ));
        }
        if self.stall_tolerance.is_nan() || self.stall_tolerance < 0.0 {
            return Err(SolveError::InvalidConfig(
                "stall_tolerance must be non-negative",
            ));
        }
        if self.primal_period < 1 {
            return Err(SolveError::InvalidConfig(
                "primal_period must be at least 1",
            ));
        }
        Ok(())
    }
}

/// Tolerance used when comparing dual values for monotonicity.
pub fn monotonicity_slack(dual: f64) -> f64 {
    1e-9 * (1.0 + dual.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    InvalidConfig(&'static str),
    DualDecreased { before: f64, after: f64 },
    Primal(PrimalError),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::InvalidConfig(msg) => write!(f, "invalid solver configuration: {msg}"),
            SolveError::DualDecreased { before, after } => {
                write!(
                    f,
                    "dual update decreased the bound from {before} to {after}"
                )
            }
            SolveError::Primal(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SolveError {}

impl From<PrimalError> for SolveError {
    fn from(e: PrimalError) -> Self {
        SolveError::Primal(e)
    }
}

/// Owns the dual state of one solver run.
pub struct DualSolver<'g> {
    graph: &'g DecomposedGraph,
    lambda: Reparametrization,
    scratch: Scratch,
    counters: OpCounter,
    check_monotonicity: bool,
}

impl<'g> DualSolver<'g> {
    pub fn new(graph: &'g DecomposedGraph) -> Self {
        Self::with_lambda(graph, Reparametrization::zeros(graph))
    }

    pub fn with_lambda(graph: &'g DecomposedGraph, lambda: Reparametrization) -> Self {
        assert_eq!(
            lambda.len(),
            graph.lambda_len(),
            "dual vector length mismatch"
        );
        Self {
            graph,
            lambda,
            scratch: Scratch::default(),
            counters: OpCounter::default(),
            check_monotonicity: false,
        }
    }

    pub fn set_check_monotonicity(&mut self, on: bool) {
        self.check_monotonicity = on;
    }

    pub fn graph(&self) -> &'g DecomposedGraph {
        self.graph
    }

    pub fn lambda(&self) -> &Reparametrization {
        &self.lambda
    }

    pub fn into_lambda(self) -> Reparametrization {
        self.lambda
    }

    pub fn counters(&self) -> OpCounter {
        self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters = OpCounter::default();
    }

    pub fn dual_value(&self) -> f64 {
        self.graph.dual_value(&self.lambda.0)
    }

    fn step(&mut self, f: UpdateFn, node: usize) -> Result<(), SolveError> {
        let before = if self.check_monotonicity {
            Some(self.dual_value())
        } else {
            None
        };
        let reads = f(self.graph, &self.lambda.0, node, &mut self.scratch);
        self.scratch.update.apply(&mut self.lambda.0);
        self.counters.cost_reads += reads as u64;
        self.counters.dual_writes += self.scratch.update.deltas.len() as u64;
        self.counters.updates += 1;
        if let Some(before) = before {
            let after = self.dual_value();
            if after < before - monotonicity_slack(before) {
                return Err(SolveError::DualDecreased { before, after });
            }
        }
        Ok(())
    }

    pub fn update_detection_to_conflicts(&mut self, u: usize) -> Result<(), SolveError> {
        self.step(detection_to_conflicts, u)
    }

    pub fn update_conflict_to_detections(&mut self, c: usize) -> Result<(), SolveError> {
        self.step(conflict_to_detections, c)
    }

    pub fn update_forward(&mut self, u: usize) -> Result<(), SolveError> {
        self.step(forward_transition, u)
    }

    pub fn update_backward(&mut self, v: usize) -> Result<(), SolveError> {
        self.step(backward_transition, v)
    }

    /// One pass over all frames in `direction`. `hook` runs for each frame
    /// after its conflict updates and before its transition updates.
    /// Returns the dual value after the pass.
    pub fn sweep<H>(&mut self, direction: Direction, mut hook: H) -> Result<f64, SolveError>
    where
        H: FnMut(u32, &DecomposedGraph, &Reparametrization),
    {
        let g = self.graph;
        for t in direction.frames(g.frame_count()) {
            for u in g.frame_factors(t) {
                self.update_detection_to_conflicts(u)?;
            }
            for c in g.frame_conflicts(t) {
                self.update_conflict_to_detections(c)?;
            }
            hook(t, g, &self.lambda);
            for u in g.frame_factors(t) {
                match direction {
                    Direction::Forward => self.update_forward(u)?,
                    Direction::Backward => self.update_backward(u)?,
                }
            }
        }
        Ok(self.dual_value())
    }
}

/// One sweep over `lambda` in place; returns the new dual value.
pub fn sweep<H>(
    graph: &DecomposedGraph,
    lambda: &mut Reparametrization,
    direction: Direction,
    hook: H,
) -> f64
where
    H: FnMut(u32, &DecomposedGraph, &Reparametrization),
{
    let mut solver = DualSolver::with_lambda(
        graph,
        core::mem::replace(lambda, Reparametrization(Vec::new())),
    );
    let value = solver
        .sweep(direction, hook)
        .expect("monotonicity checking is disabled");
    *lambda = solver.into_lambda();
    value
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub sweep: usize,
    pub direction: Direction,
    pub dual_bound: f64,
    /// Best primal energy so far, on sweeps where a primal was extracted.
    pub primal_energy: Option<f64>,
    pub wall_time: f64,
}

/// Source of elapsed wall time for convergence records.
pub trait Clock {
    fn elapsed_seconds(&self) -> f64;
}

/// Reports zero elapsed time.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxSweeps,
    GapReached,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub assignment: Assignment,
    pub energy: f64,
    pub dual_bound: f64,
    pub gap: f64,
    pub sweeps: usize,
    pub termination: Termination,
    pub log: Vec<ConvergenceRecord>,
    pub lambda: Reparametrization,
    pub counters: OpCounter,
}

/// `(primal - dual) / |dual|`, clamped at zero; zero when both agree.
pub fn relative_gap(primal: f64, dual: f64) -> f64 {
    let diff = primal - dual;
    if diff <= 0.0 {
        0.0
    } else if dual == 0.0 || dual.is_infinite() {
        f64::INFINITY
    } else {
        diff / dual.abs()
    }
}

pub fn run(graph: &DecomposedGraph, config: &SolverConfig) -> Result<SolveResult, SolveError> {
    run_with_clock(graph, config, &NoClock)
}

pub fn run_with_clock(
    graph: &DecomposedGraph,
    config: &SolverConfig,
    clock: &dyn Clock,
) -> Result<SolveResult, SolveError> {
    config.validate()?;
    let mut solver = DualSolver::new(graph);
    solver.set_check_monotonicity(config.check_monotonicity);

    let mut best: Option<PrimalSolution> = None;
    let mut log = Vec::new();
    let mut previous = solver.dual_value();
    let mut dual = previous;
    let mut stalled = 0;
    let mut sweeps = 0;
    let mut last_primal_sweep = 0;
    let mut termination = Termination::MaxSweeps;
    let mut pending = false;

    for sweep_no in 1..=config.max_sweeps {
        let direction = if sweep_no % 2 == 1 {
            Direction::Forward
        } else {
            Direction::Backward
        };
        pending |= sweep_no == 1 || sweep_no % config.primal_period == 0;
        // A synchronized extraction follows the sweep direction, so it waits
        // for a sweep in an allowed direction.
        let primal_due = pending
            && (config.primal_mode == PrimalMode::WholeProblem
                || config.primal_directions.allows(direction));
        let synchronized = primal_due && config.primal_mode == PrimalMode::FrameSynchronized;

        let mut partial = synchronized.then(|| PartialAssignment::new(graph));
        dual = solver.sweep(direction, |t, g, lambda| {
            if let Some(p) = partial.as_mut() {
                primal::assign_frame(g, lambda, t, direction, p);
            }
        })?;
        sweeps = sweep_no;

        let mut primal_energy = None;
        if primal_due {
            let candidate = match partial {
                Some(p) => primal::finish_partial(graph, p, direction)?,
                None => {
                    primal::extract_primal_with(graph, solver.lambda(), config.primal_directions)?
                }
            };
            keep_better(&mut best, candidate);
            pending = false;
            last_primal_sweep = sweep_no;
            primal_energy = best.as_ref().map(|b| b.energy);
        }
        log.push(ConvergenceRecord {
            sweep: sweep_no,
            direction,
            dual_bound: dual,
            primal_energy,
            wall_time: clock.elapsed_seconds(),
        });

        if dual - previous < config.stall_tolerance * (1.0 + dual.abs()) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        previous = dual;

        if let Some(b) = &best {
            if relative_gap(b.energy, dual) <= config.gap_tolerance {
                termination = Termination::GapReached;
                break;
            }
        }
        if stalled >= 3 {
            termination = Termination::Stalled;
            break;
        }
    }

    if last_primal_sweep != sweeps {
        let candidate =
            primal::extract_primal_with(graph, solver.lambda(), config.primal_directions)?;
        keep_better(&mut best, candidate);
        if let Some(record) = log.last_mut() {
            record.primal_energy = best.as_ref().map(|b| b.energy);
            record.wall_time = clock.elapsed_seconds();
        }
    }
    let best = best.expect("at least one primal extraction runs");
    let counters = solver.counters();
    Ok(SolveResult {
        gap: relative_gap(best.energy, dual),
        energy: best.energy,
        assignment: best.assignment,
        dual_bound: dual,
        sweeps,
        termination,
        log,
        lambda: solver.into_lambda(),
        counters,
    })
}

fn keep_better(best: &mut Option<PrimalSolution>, candidate: PrimalSolution) {
    if best.as_ref().is_none_or(|b| candidate.energy < b.energy) {
        *best = Some(candidate);
    }
}

/// Used by tests and the CLI to double-check a result.
pub fn verify(graph: &DecomposedGraph, result: &SolveResult) -> FeasibilityReport {
    graph
        .instance_index()
        .check_feasible(graph.instance(), &result.assignment)
}
