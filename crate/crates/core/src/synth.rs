//! Synthetic tracking instances with known ground truth.
//!
//! Point objects perform a Gaussian random walk in a square arena, divide
//! with a fixed per-frame probability and vanish when they leave the arena.
//! Each object yields several segmentation hypotheses per frame: the first
//! is the true one, the others are jittered in area and position and have a
//! larger convex hull. All hypotheses of one object form a conflict set.
//!
//! Randomness comes from xoshiro256** seeded through SplitMix64, with one
//! independent stream per frame, so output is reproducible everywhere.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::cost_model::{build_instance, CostParams, DetectionFeatures, FeatureGraph};
use crate::instance::{
    Assignment, ConflictSet, Detection, DetectionId, Instance, Transition, TransitionKind,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub frames: u32,
    pub initial_objects: u32,
    /// Per object and frame.
    pub division_prob: f64,
    pub motion_sigma: f64,
    /// Overlap factor.
    pub hypotheses_per_object: u32,
    /// Maximal centroid distance of candidate links.
    pub candidate_radius: f64,
    /// Side length of the square arena.
    pub arena_size: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            frames: 50,
            initial_objects: 80,
            division_prob: 0.01,
            motion_sigma: 1.0,
            hypotheses_per_object: 2,
            candidate_radius: 5.0,
            arena_size: 200.0,
            seed: 1,
        }
    }
}

impl GenParams {
    pub fn is_valid(&self) -> bool {
        self.frames >= 1
            && (0.0..=1.0).contains(&self.division_prob)
            && self.motion_sigma >= 0.0
            && self.hypotheses_per_object >= 1
            && self.candidate_radius >= 0.0
            && self.arena_size > 0.0
    }
}

/// Mean object area in pixels.
const MEAN_AREA: f64 = 20.0;

struct Stream(Xoshiro256StarStar);

impl Stream {
    fn for_frame(seed: u64, frame: u32) -> Self {
        let key = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(u64::from(frame) + 1);
        Stream(Xoshiro256StarStar::seed_from_u64(key))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by the Box-Muller transform.
    fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }
}

#[derive(Debug, Clone, Copy)]
struct Object {
    position: [f64; 2],
    area: f64,
    orientation: f64,
}

/// True lineage link between consecutive frames, by object index.
enum Lineage {
    Move(usize, usize),
    Division(usize, usize, usize),
}

/// Generates an instance and the assignment that activates exactly the
/// true hypotheses and true links. Panics on invalid parameters.
pub fn generate(p: &GenParams) -> (Instance, Assignment) {
    generate_with_costs(p, &CostParams::default())
}

/// As [`generate`], with explicit cost parameters.
pub fn generate_with_costs(p: &GenParams, params: &CostParams) -> (Instance, Assignment) {
    assert!(p.is_valid(), "invalid generator parameters");
    let h = p.hypotheses_per_object as usize;

    let mut rng = Stream::for_frame(p.seed, 0);
    let mut objects: Vec<Vec<Object>> = Vec::with_capacity(p.frames as usize);
    objects.push(
        (0..p.initial_objects)
            .map(|_| Object {
                position: [rng.uniform() * p.arena_size, rng.uniform() * p.arena_size],
                area: MEAN_AREA * (1.0 + 0.1 * rng.normal()).max(0.5),
                orientation: rng.uniform() * core::f64::consts::PI,
            })
            .collect(),
    );
    let mut lineage: Vec<Vec<Lineage>> = Vec::new();
    for t in 1..p.frames {
        let mut rng = Stream::for_frame(p.seed, t);
        let (next, links) = step(&objects[t as usize - 1], p, &mut rng);
        objects.push(next);
        lineage.push(links);
    }

    let mut graph = FeatureGraph::default();
    for (t, frame) in objects.iter().enumerate() {
        let mut rng = Stream::for_frame(p.seed ^ 0x5555_5555_5555_5555, t as u32);
        let mut features = Vec::with_capacity(frame.len() * h);
        for (o, object) in frame.iter().enumerate() {
            for k in 0..h {
                features.push(hypothesis(object, k, p, &mut rng));
            }
            if h >= 2 {
                graph.conflicts.push((
                    t as u32 + 1,
                    ((o * h) as u32..((o + 1) * h) as u32).collect(),
                ));
            }
        }
        graph.frames.push(features);
    }

    let mut true_moves = Vec::new();
    let mut true_divisions = Vec::new();
    for (t, links) in lineage.iter().enumerate() {
        let frame = t as u32 + 1;
        for link in links {
            match *link {
                Lineage::Move(a, b) => true_moves.push((frame, (a * h) as u32, (b * h) as u32)),
                Lineage::Division(a, b, c) => {
                    true_divisions.push((frame, (a * h) as u32, (b * h) as u32, (c * h) as u32))
                }
            }
        }
    }
    add_candidates(&mut graph, p, &objects, h);
    let known: BTreeSet<_> = graph.moves.iter().copied().collect();
    graph
        .moves
        .extend(true_moves.iter().filter(|m| !known.contains(m)));
    let known: BTreeSet<_> = graph.divisions.iter().copied().collect();
    graph
        .divisions
        .extend(true_divisions.iter().filter(|d| !known.contains(d)));

    let mut instance = build_instance(&graph, params).expect("generated instance is valid");
    instance.canonicalize();
    let truth = ground_truth(&instance, h, &true_moves, &true_divisions);
    (instance, truth)
}

fn step(current: &[Object], p: &GenParams, rng: &mut Stream) -> (Vec<Object>, Vec<Lineage>) {
    let mut next = Vec::with_capacity(current.len() + 4);
    let mut links = Vec::new();
    let inside = |o: &Object| {
        (0.0..=p.arena_size).contains(&o.position[0])
            && (0.0..=p.arena_size).contains(&o.position[1])
    };
    for (i, parent) in current.iter().enumerate() {
        if rng.uniform() < p.division_prob {
            let offset = 0.25 * libm::sqrt(parent.area);
            let axis = [libm::cos(parent.orientation), libm::sin(parent.orientation)];
            let mut daughters = [*parent; 2];
            for (d, sign) in daughters.iter_mut().zip([-1.0, 1.0]) {
                d.area = parent.area * (0.5 + 0.05 * rng.normal()).max(0.3);
                d.orientation =
                    parent.orientation + core::f64::consts::FRAC_PI_2 + 0.2 * rng.normal();
                for (x, a) in d.position.iter_mut().zip(axis) {
                    *x += sign * offset * a + 0.5 * p.motion_sigma * rng.normal();
                }
            }
            if daughters.iter().all(inside) {
                links.push(Lineage::Division(i, next.len(), next.len() + 1));
                next.extend(daughters);
            }
        } else {
            let mut child = *parent;
            for c in 0..2 {
                child.position[c] += p.motion_sigma * rng.normal();
            }
            // daughters grow back towards the mean size
            child.area += 0.2 * (MEAN_AREA - child.area) + 0.3 * rng.normal();
            child.area = child.area.max(1.0);
            child.orientation += 0.1 * rng.normal();
            if inside(&child) {
                links.push(Lineage::Move(i, next.len()));
                next.push(child);
            }
        }
    }
    (next, links)
}

fn hypothesis(object: &Object, k: usize, p: &GenParams, rng: &mut Stream) -> DetectionFeatures {
    let (area, hull, centroid) = if k == 0 {
        let hull = object.area * (1.0 + 0.05 * rng.uniform());
        (object.area, hull, object.position)
    } else {
        let area = object.area * (1.0 + 0.3 * rng.normal()).clamp(0.3, 2.0);
        let hull = area * (1.1 + 0.2 * rng.uniform());
        let centroid = [
            object.position[0] + 0.5 * rng.normal(),
            object.position[1] + 0.5 * rng.normal(),
        ];
        (area, hull, centroid)
    };
    let boundary_distance = centroid
        .iter()
        .flat_map(|&c| [c, p.arena_size - c])
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    DetectionFeatures {
        area,
        convex_hull_area: hull,
        centroid,
        orientation: object.orientation + if k == 0 { 0.0 } else { 0.2 * rng.normal() },
        boundary_distance,
    }
}

/// Radius-gated candidate moves and divisions between all hypotheses of
/// consecutive frames. Division daughters must belong to distinct objects;
/// no division candidates are emitted when objects never divide.
fn add_candidates(graph: &mut FeatureGraph, p: &GenParams, objects: &[Vec<Object>], h: usize) {
    let r2 = p.candidate_radius * p.candidate_radius;
    let cell = p.candidate_radius.max(1e-9);
    for t in 0..graph.frames.len().saturating_sub(1) {
        let (from, to) = (&graph.frames[t], &graph.frames[t + 1]);
        let grid = Grid::new(to, cell);
        let frame = t as u32 + 1;
        let mut near = Vec::new();
        for (a, fa) in from.iter().enumerate() {
            near.clear();
            grid.within(to, fa.centroid, r2, &mut near);
            for &b in &near {
                graph.moves.push((frame, a as u32, b as u32));
            }
            if p.division_prob == 0.0 {
                continue;
            }
            for (i, &b) in near.iter().enumerate() {
                for &c in &near[i + 1..] {
                    if b / h != c / h {
                        graph.divisions.push((frame, a as u32, b as u32, c as u32));
                    }
                }
            }
        }
        debug_assert_eq!(to.len(), objects[t + 1].len() * h);
    }
}

/// Uniform bucket grid over centroids.
struct Grid {
    cell: f64,
    buckets: BTreeMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[DetectionFeatures], cell: f64) -> Self {
        let mut buckets = BTreeMap::new();
        for (i, f) in points.iter().enumerate() {
            buckets
                .entry(Self::key(f.centroid, cell))
                .or_insert_with(Vec::new)
                .push(i);
        }
        Grid { cell, buckets }
    }

    fn key(c: [f64; 2], cell: f64) -> (i64, i64) {
        (
            libm::floor(c[0] / cell) as i64,
            libm::floor(c[1] / cell) as i64,
        )
    }

    /// Appends, in ascending order, the points within squared distance `r2`.
    fn within(&self, points: &[DetectionFeatures], c: [f64; 2], r2: f64, out: &mut Vec<usize>) {
        let (kx, ky) = Self::key(c, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.buckets.get(&(kx + dx, ky + dy)) {
                    out.extend(list.iter().copied().filter(|&i| {
                        let q = points[i].centroid;
                        let (ex, ey) = (q[0] - c[0], q[1] - c[1]);
                        ex * ex + ey * ey <= r2
                    }));
                }
            }
        }
        out.sort_unstable();
    }
}

fn ground_truth(
    instance: &Instance,
    h: usize,
    moves: &[(u32, u32, u32)],
    divisions: &[(u32, u32, u32, u32)],
) -> Assignment {
    let moves: BTreeSet<_> = moves.iter().copied().collect();
    let divisions: BTreeSet<_> = divisions.iter().copied().collect();
    let mut x = Assignment::all_off(instance);
    for (p, d) in instance.detections.iter().enumerate() {
        x.detection_on[p] = (d.id.index as usize).is_multiple_of(h);
    }
    for (e, t) in instance.transitions.iter().enumerate() {
        x.transition_on[e] = match t.kind {
            TransitionKind::Move { from, to } => {
                moves.contains(&(from.frame, from.index, to.index))
            }
            TransitionKind::Division { from, to1, to2 } => {
                divisions.contains(&(from.frame, from.index, to1.index, to2.index))
                    || divisions.contains(&(from.frame, from.index, to2.index, to1.index))
            }
        };
    }
    x
}

/// Shape of [`random_instance`] output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomParams {
    pub max_frames: u32,
    pub max_per_frame: u32,
    /// Probability of each possible move candidate.
    pub move_prob: f64,
    /// Probability of each possible division candidate.
    pub division_prob: f64,
    /// Per frame, probability of each of up to two conflict sets.
    pub conflict_prob: f64,
    /// Cap on detections plus transitions.
    pub max_variables: usize,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            max_frames: 4,
            max_per_frame: 3,
            move_prob: 0.5,
            division_prob: 0.2,
            conflict_prob: 0.4,
            max_variables: 20,
        }
    }
}

/// Multiple of 1/16 drawn uniformly from `[lo, hi]`.
fn dyadic(rng: &mut Stream, lo: f64, hi: f64) -> f64 {
    let steps = ((hi - lo) * 16.0) as u64 + 1;
    lo + (rng.0.next_u64() % steps) as f64 / 16.0
}

fn below(rng: &mut Stream, n: u32) -> u32 {
    (rng.0.next_u64() % u64::from(n.max(1))) as u32
}

/// Unstructured small instance with dyadic costs of either sign, for
/// exhaustive testing. Always valid.
pub fn random_instance(seed: u64, p: &RandomParams) -> Instance {
    let mut rng = Stream::for_frame(seed ^ 0xA5A5_A5A5_A5A5_A5A5, 0);
    let frames = 1 + below(&mut rng, p.max_frames);
    let mut counts: Vec<u32> = (0..frames)
        .map(|_| 1 + below(&mut rng, p.max_per_frame))
        .collect();
    let mut budget = p.max_variables.max(1);
    while counts.iter().sum::<u32>() as usize > budget {
        let last = counts.len() - 1;
        if counts[last] > 1 || last == 0 {
            counts[last] -= 1;
        } else {
            counts.pop();
        }
    }
    let mut instance = Instance::empty(frames);
    for (t, &n) in counts.iter().enumerate() {
        for i in 0..n {
            instance.detections.push(Detection {
                id: DetectionId::new(t as u32 + 1, i),
                cost: dyadic(&mut rng, -2.0, 1.0),
                appearance_cost: dyadic(&mut rng, 0.0, 1.0),
                disappearance_cost: dyadic(&mut rng, 0.0, 1.0),
            });
        }
    }
    budget -= instance.detections.len();

    for t in 1..counts.len() {
        let (here, next) = (counts[t - 1], counts[t]);
        let (f, g) = (t as u32, t as u32 + 1);
        for i in 0..here {
            for j in 0..next {
                if budget > 0 && rng.uniform() < p.move_prob {
                    budget -= 1;
                    instance.transitions.push(Transition {
                        kind: TransitionKind::Move {
                            from: DetectionId::new(f, i),
                            to: DetectionId::new(g, j),
                        },
                        cost: dyadic(&mut rng, -1.0, 1.0),
                    });
                }
                for k in j + 1..next {
                    if budget > 0 && rng.uniform() < p.division_prob {
                        budget -= 1;
                        instance.transitions.push(Transition {
                            kind: TransitionKind::Division {
                                from: DetectionId::new(f, i),
                                to1: DetectionId::new(g, j),
                                to2: DetectionId::new(g, k),
                            },
                            cost: dyadic(&mut rng, -1.0, 1.0),
                        });
                    }
                }
            }
        }
    }

    for (t, &n) in counts.iter().enumerate() {
        if n < 2 {
            continue;
        }
        for _ in 0..2 {
            if rng.uniform() >= p.conflict_prob {
                continue;
            }
            let members: Vec<DetectionId> = (0..n)
                .filter(|_| rng.uniform() < 0.6)
                .map(|i| DetectionId::new(t as u32 + 1, i))
                .collect();
            if members.len() >= 2 {
                instance.conflicts.push(ConflictSet {
                    frame: t as u32 + 1,
                    members,
                });
            }
        }
    }
    instance
}

/// Random feasible assignment of a valid instance: detections switched on
/// in instance order unless a conflict forbids it, then transitions added
/// in random order while their endpoints are free. Panics on invalid
/// instances.
pub fn random_feasible_assignment(instance: &Instance, seed: u64) -> Assignment {
    let index = instance.index().expect("valid instance");
    let mut rng = Stream::for_frame(seed ^ 0x3C3C_3C3C_3C3C_3C3C, 0);
    let n = instance.detections.len();
    let mut x = Assignment::all_off(instance);
    let mut conflicts_of: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for c in 0..instance.conflicts.len() {
        for &m in index.conflict_members(c) {
            conflicts_of[m].push(c);
        }
    }
    let mut taken = alloc::vec![false; instance.conflicts.len()];
    let p_on = rng.uniform();
    for (p, mine) in conflicts_of.iter().enumerate() {
        if rng.uniform() < p_on && mine.iter().all(|&c| !taken[c]) {
            x.detection_on[p] = true;
            for &c in mine {
                taken[c] = true;
            }
        }
    }
    let mut order: Vec<usize> = (0..instance.transitions.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, below(&mut rng, i as u32 + 1) as usize);
    }
    let mut has_in = alloc::vec![false; n];
    let mut has_out = alloc::vec![false; n];
    let p_link = rng.uniform();
    for e in order {
        let ends = index.endpoints(e);
        let free = x.detection_on[ends.source]
            && !has_out[ends.source]
            && ends
                .targets()
                .iter()
                .all(|&t| x.detection_on[t] && !has_in[t]);
        if free && rng.uniform() < p_link {
            x.transition_on[e] = true;
            has_out[ends.source] = true;
            for &t in ends.targets() {
                has_in[t] = true;
            }
        }
    }
    x
}
