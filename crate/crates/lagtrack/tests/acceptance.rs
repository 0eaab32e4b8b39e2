//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use lagtrack::format::{parse_instance, parse_solution, write_instance, write_solution};
use lagtrack_core::bca::{
    conflict_update_conflict, conflict_update_detection, run, transition_update_backward,
    transition_update_forward, Direction, DualSolver, SolverConfig,
};
use lagtrack_core::decomposition::{
    decompose, min_conflict_factor, min_detection_factor, DecomposedGraph, DetectionFactorState,
    FactorCosts, Reparametrization,
};
use lagtrack_core::instance::{check_feasible, energy, Instance};
use lagtrack_core::oracle::{brute_force_solve, DEFAULT_BUDGET};
use lagtrack_core::set_packing::{is_packing, packing_value, solve_packing, PackingProblem};
use lagtrack_core::synth::{
    generate, random_feasible_assignment, random_instance, GenParams, RandomParams,
};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

struct Rng(Xoshiro256StarStar);

impl Rng {
    fn new(seed: u64) -> Self {
        Rng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n.max(1) as u64) as usize
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Negative, zero and tied values half of the time.
    fn cost(&mut self) -> f64 {
        const GRID: [f64; 6] = [-1.5, -1.0, -0.5, 0.0, 0.0, 0.5];
        if self.uniform() < 0.5 {
            GRID[self.below(GRID.len())]
        } else {
            4.0 * self.uniform() - 2.5
        }
    }
}

fn random_lambda(g: &DecomposedGraph, rng: &mut Rng) -> Reparametrization {
    Reparametrization((0..g.lambda_len()).map(|_| rng.cost()).collect())
}

fn tiny(seed: u64) -> Instance {
    random_instance(
        seed,
        &RandomParams {
            max_frames: 4,
            max_per_frame: 4,
            max_variables: DEFAULT_BUDGET,
            ..RandomParams::default()
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn oracle_sandwich() -> Outcome {
    let start = Instant::now();
    let config = SolverConfig {
        max_sweeps: 200,
        ..SolverConfig::default()
    };
    let (mut runs, mut sandwiched, mut feasible) = (0, 0, 0);
    let mut worst = String::new();
    for seed in 0..250u64 {
        let inst = tiny(seed);
        let g = decompose(&inst).unwrap();
        let opt = brute_force_solve(&inst, DEFAULT_BUDGET).unwrap().optimum;
        let r = run(&g, &config).unwrap();
        runs += 1;
        if check_feasible(&inst, &r.assignment).is_feasible() {
            feasible += 1;
        }
        if r.dual_bound <= opt + 1e-6 && opt <= r.energy + 1e-6 {
            sandwiched += 1;
        } else if worst.is_empty() {
            worst = format!(
                " first violation seed {seed}: {} / {opt} / {}",
                r.dual_bound, r.energy
            );
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        runs >= 200 && sandwiched == runs && feasible == runs && secs < 30.0,
        format!("{sandwiched}/{runs} sandwiched, {feasible}/{runs} feasible, {secs:.2} s{worst}"),
    )
}

fn monotonicity() -> Outcome {
    let mut counts = [0usize; 4];
    let mut failures = 0;
    let mut seed = 0u64;
    while counts.iter().sum::<usize>() < 6000 || counts.iter().any(|&c| c < 1000) {
        let inst = tiny(seed);
        let g = decompose(&inst).unwrap();
        let mut rng = Rng::new(seed);
        seed += 1;
        let mut lambda = random_lambda(&g, &mut rng);
        for _ in 0..20 {
            let kind = rng.below(4);
            let update = match kind {
                0 => conflict_update_detection(&g, &lambda, rng.below(g.factors().len())),
                1 if g.conflicts().is_empty() => continue,
                1 => conflict_update_conflict(&g, &lambda, rng.below(g.conflicts().len())),
                2 => transition_update_forward(&g, &lambda, rng.below(g.factors().len())),
                _ => transition_update_backward(&g, &lambda, rng.below(g.factors().len())),
            };
            let before = g.dual_value(&lambda.0);
            update.apply(&mut lambda.0);
            let after = g.dual_value(&lambda.0);
            counts[kind] += 1;
            if after < before - 1e-9 * (1.0 + before.abs()) {
                failures += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    outcome(
        failures == 0 && total >= 5000,
        format!("{total} updates (per type {counts:?}), {failures} decreases"),
    )
}

fn invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut triples = 0;
    let mut failures = 0;
    for seed in 0..1200u64 {
        let inst = random_instance(
            seed,
            &RandomParams {
                max_variables: 40,
                max_frames: 6,
                ..RandomParams::default()
            },
        );
        let g = decompose(&inst).unwrap();
        let x = random_feasible_assignment(&inst, seed);
        let e = energy(&inst, &x).value;
        let lambda = random_lambda(&g, &mut Rng::new(seed));
        let moved = g.decomposed_energy(&lambda.0, &g.labeling_from_assignment(&x));
        let err = (moved - e).abs();
        worst = worst.max(err);
        triples += 1;
        if !check_feasible(&inst, &x).is_feasible() || err > 1e-9 * (1.0 + e.abs()) {
            failures += 1;
        }
    }
    outcome(
        failures == 0 && triples >= 1000,
        format!("{triples} triples, {failures} failures, max deviation {worst:.2e}"),
    )
}

fn packing() -> Outcome {
    let mut rng = Rng::new(7);
    let (mut problems, mut mismatches) = (0, 0);
    for _ in 0..600 {
        let n = 1 + rng.below(15);
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.below(33) as f64 - 20.0) / 8.0)
            .collect();
        let conflicts: Vec<Vec<usize>> = (0..rng.below(8))
            .map(|_| {
                let mut set: Vec<usize> = (0..2 + rng.below(3)).map(|_| rng.below(n)).collect();
                set.sort_unstable();
                set.dedup();
                set
            })
            .filter(|s| s.len() >= 2)
            .collect();
        let problem = PackingProblem { scores, conflicts };
        let got = solve_packing(&problem);
        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let selected: Vec<bool> = (0..n).map(|k| mask >> k & 1 == 1).collect();
            if is_packing(&problem, &selected) {
                best = best.min(packing_value(&problem.scores, &selected));
            }
        }
        problems += 1;
        if got.value != best || !is_packing(&problem, &got.selected) {
            mismatches += 1;
        }
    }
    outcome(
        problems >= 500 && mismatches == 0,
        format!("{problems} problems with up to 15 items, {mismatches} mismatches"),
    )
}

fn gap_at_scale() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for seed in 1..=3u64 {
        let (inst, _) = generate(&GenParams {
            seed,
            ..GenParams::default()
        });
        let per_frame = inst.detections.len() as f64 / f64::from(inst.frame_count);
        let start = Instant::now();
        let g = decompose(&inst).unwrap();
        let r = run(&g, &SolverConfig::default()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let ok = r.gap <= 0.02
            && r.sweeps <= 1000
            && secs < 60.0
            && check_feasible(&inst, &r.assignment).is_feasible();
        pass &= ok;
        detail.push(format!(
            "seed {seed}: {per_frame:.0} det/frame, gap {:.3}% after {} sweeps in {secs:.2} s",
            100.0 * r.gap,
            r.sweeps
        ));
    }
    outcome(pass, detail.join("; "))
}

fn sweep_ops(g: &DecomposedGraph) -> u64 {
    let mut solver = DualSolver::new(g);
    solver.sweep(Direction::Forward, |_, _, _| {}).unwrap();
    solver.counters().elementary()
}

/// Entries of all factor tables: activation, in/out copies and conflict
/// copies on both sides.
fn incidences(g: &DecomposedGraph) -> usize {
    let detections: usize = g
        .factors()
        .iter()
        .map(|f| 1 + f.in_edges.len() + f.out_edges.len() + f.conflict_edges.len())
        .sum();
    detections + g.conflicts().iter().map(|c| c.members.len()).sum::<usize>()
}

fn linear_structure() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (label, division_prob) in [("stationary", 0.0), ("dividing", 0.01)] {
        let mut rows = Vec::new();
        for frames in [25u32, 50, 100] {
            let (inst, _) = generate(&GenParams {
                frames,
                division_prob,
                ..GenParams::default()
            });
            let g = decompose(&inst).unwrap();
            let divisions = inst
                .transitions
                .iter()
                .filter(|t| t.kind.is_division())
                .count();
            let moves = inst.transitions.len() - divisions;
            let conflict_edges: usize = inst.conflicts.iter().map(|c| c.members.len()).sum();
            pass &= g.lambda_len() == moves + 2 * divisions + conflict_edges;
            rows.push((
                sweep_ops(&g) as f64,
                incidences(&g) as f64,
                inst.detections.len() as f64,
            ));
        }
        for w in rows.windows(2) {
            let (ops, size, dets) = (w[1].0 / w[0].0, w[1].1 / w[0].1, w[1].2 / w[0].2);
            // Ops must track instance size; where the population is
            // stationary, doubling T must also double the ops.
            let relative = ops / size;
            pass &= (0.9..=1.1).contains(&relative);
            if division_prob == 0.0 {
                pass &= (1.8..=2.2).contains(&ops);
            }
            detail.push(format!(
                "{label} ops x{ops:.3} size x{size:.3} detections x{dets:.3}"
            ));
        }
    }
    outcome(pass, format!("dual length exact; {}", detail.join(", ")))
}

fn factor_minima() -> Outcome {
    let mut rng = Rng::new(11);
    let (mut checked, mut mismatches) = (0, 0);
    let small = |rng: &mut Rng| (rng.below(9) as f64 - 4.0) / 2.0;
    for _ in 0..1500 {
        let costs = FactorCosts {
            det: small(&mut rng),
            ins: (0..rng.below(5)).map(|_| small(&mut rng)).collect(),
            outs: (0..rng.below(5)).map(|_| small(&mut rng)).collect(),
        };
        let mut best = 0.0f64;
        for i in std::iter::once(None).chain((0..costs.ins.len()).map(Some)) {
            for o in std::iter::once(None).chain((0..costs.outs.len()).map(Some)) {
                let s = DetectionFactorState {
                    det: true,
                    in_choice: i,
                    out_choice: o,
                };
                best = best.min(costs.cost_of(&s));
            }
        }
        let (value, state) = min_detection_factor(&costs);
        if value != best || costs.cost_of(&state) != best {
            mismatches += 1;
        }

        let members: Vec<f64> = (0..1 + rng.below(6)).map(|_| small(&mut rng)).collect();
        let mut all: Vec<f64> = std::iter::once(0.0)
            .chain(members.iter().copied())
            .collect();
        all.sort_by(f64::total_cmp);
        let m = min_conflict_factor(&members);
        if m.best.0 != all[0] || m.second_best.0 != all[1] {
            mismatches += 1;
        }
        checked += 1;
    }
    outcome(
        checked >= 1000 && mismatches == 0,
        format!("{checked} detection and {checked} conflict factors, {mismatches} mismatches"),
    )
}

fn io_round_trips() -> Outcome {
    let (mut instances, mut failures) = (0, 0);
    for seed in 0..600u64 {
        let mut inst = random_instance(
            seed,
            &RandomParams {
                max_variables: 40,
                max_frames: 6,
                ..RandomParams::default()
            },
        );
        let mut rng = Rng::new(seed);
        for d in &mut inst.detections {
            d.cost += rng.uniform() / 3.0;
        }
        let text = write_instance(&inst);
        let Ok(parsed) = parse_instance(&text) else {
            failures += 1;
            continue;
        };
        let mut canonical = inst.clone();
        canonical.canonicalize();
        let same = parsed == canonical && write_instance(&parsed) == text;

        let x = random_feasible_assignment(&parsed, seed);
        let e = energy(&parsed, &x).value;
        let sol = write_solution(&parsed, &x, e, f64::NEG_INFINITY).expect("feasible");
        let verified = match parse_solution(&sol, &parsed) {
            Ok(s) => {
                check_feasible(&parsed, &s.assignment).is_feasible()
                    && (energy(&parsed, &s.assignment).value - s.energy).abs() <= 1e-6
            }
            Err(_) => false,
        };
        instances += 1;
        if !(same && verified) {
            failures += 1;
        }
    }
    outcome(
        instances >= 500 && failures == 0,
        format!("{instances} instance and solution round trips, {failures} failures"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("oracle sandwich", oracle_sandwich),
        ("dual monotonicity", monotonicity),
        ("reparametrization invariance", invariance),
        ("set packing exactness", packing),
        ("gap at scale", gap_at_scale),
        ("linear structure", linear_structure),
        ("factor minima", factor_minima),
        ("io round trips", io_round_trips),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
