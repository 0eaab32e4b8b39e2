#![allow(dead_code)]

use lagtrack_core::bca::Direction;
use lagtrack_core::decomposition::{DecomposedGraph, Reparametrization};
use lagtrack_core::instance::{Assignment, Instance, TransitionKind};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub struct Rng(Xoshiro256StarStar);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n.max(1) as u64) as usize
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Mixes exact small values (zeros and ties) with continuous ones.
    pub fn cost(&mut self) -> f64 {
        const GRID: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.0, 0.5, 1.0];
        if self.coin(0.5) {
            GRID[self.below(GRID.len())]
        } else {
            4.0 * self.uniform() - 2.5
        }
    }
}

pub fn random_lambda(graph: &DecomposedGraph, rng: &mut Rng) -> Reparametrization {
    Reparametrization((0..graph.lambda_len()).map(|_| rng.cost()).collect())
}

/// Random lambda, optionally followed by a few sweeps so that it is
/// reachable by the solver as well.
pub fn sampled_lambda(graph: &DecomposedGraph, rng: &mut Rng) -> Reparametrization {
    let mut lambda = random_lambda(graph, rng);
    let sweeps = rng.below(3);
    let mut d = Direction::Forward;
    for _ in 0..sweeps {
        lagtrack_core::bca::sweep(graph, &mut lambda, d, |_, _, _| {});
        d = d.reversed();
    }
    lambda
}

pub fn random_feasible(instance: &Instance, rng: &mut Rng) -> Assignment {
    lagtrack_core::synth::random_feasible_assignment(instance, rng.0.next_u64())
}

/// Feasibility evaluated straight from the constraint definitions, without
/// the instance index.
pub fn feasible_by_definition(instance: &Instance, x: &Assignment) -> bool {
    let on = |id| {
        instance
            .detections
            .iter()
            .zip(&x.detection_on)
            .any(|(d, &b)| b && d.id == id)
    };
    for c in &instance.conflicts {
        if c.members.iter().filter(|&&m| on(m)).count() > 1 {
            return false;
        }
    }
    let active: Vec<_> = instance
        .transitions
        .iter()
        .zip(&x.transition_on)
        .filter(|(_, &y)| y)
        .map(|(t, _)| t.kind)
        .collect();
    for (d, &b) in instance.detections.iter().zip(&x.detection_on) {
        let ins = active
            .iter()
            .filter(|k| k.targets().any(|v| v == d.id))
            .count();
        let outs = active.iter().filter(|k| k.source() == d.id).count();
        if ins > 1 || outs > 1 || (!b && ins + outs > 0) {
            return false;
        }
    }
    true
}

/// Time reversal of a move-only instance: frame `t` becomes `T + 1 - t`,
/// moves flip and appearance swaps with disappearance.
pub fn reversed(instance: &Instance) -> Instance {
    let t = instance.frame_count;
    let flip = |id: lagtrack_core::instance::DetectionId| {
        lagtrack_core::instance::DetectionId::new(t + 1 - id.frame, id.index)
    };
    let mut r = instance.clone();
    for d in &mut r.detections {
        d.id = flip(d.id);
        std::mem::swap(&mut d.appearance_cost, &mut d.disappearance_cost);
    }
    for tr in &mut r.transitions {
        match tr.kind {
            TransitionKind::Move { from, to } => {
                tr.kind = TransitionKind::Move {
                    from: flip(to),
                    to: flip(from),
                }
            }
            TransitionKind::Division { .. } => panic!("divisions are not reversible"),
        }
    }
    for c in &mut r.conflicts {
        c.frame = t + 1 - c.frame;
        for m in &mut c.members {
            *m = flip(*m);
        }
    }
    r
}
