mod common;

use common::{feasible_by_definition, random_feasible, reversed, sampled_lambda, Rng};
use lagtrack_core::bca::{
    conflict_update_conflict, conflict_update_detection, monotonicity_slack, run,
    transition_update_backward, transition_update_forward, Direction, SolverConfig,
};
use lagtrack_core::decomposition::{
    decompose, min_conflict_factor, min_detection_factor, DetectionFactor, DetectionFactorState,
    FactorCosts, InEdge, OutEdge, Reparametrization,
};
use lagtrack_core::instance::{check_feasible, energy, Assignment, DetectionId, Instance};
use lagtrack_core::oracle::{brute_force_solve, DEFAULT_BUDGET};
use lagtrack_core::primal::extract_in_direction;
use lagtrack_core::set_packing::{is_packing, packing_value, solve_packing, PackingProblem};
use lagtrack_core::synth::{generate, random_instance, GenParams, RandomParams};
use proptest::prelude::*;

fn small(seed: u64) -> Instance {
    random_instance(seed, &RandomParams::default())
}

fn tol(x: f64) -> f64 {
    1e-9 * (1.0 + x.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_update_is_monotone(seed in any::<u64>(), pick in any::<u64>()) {
        let inst = small(seed);
        let g = decompose(&inst).unwrap();
        let mut rng = Rng::new(pick);
        let mut lambda = sampled_lambda(&g, &mut rng);
        for _ in 0..20 {
            let before = g.dual_value(&lambda.0);
            let update = match rng.below(4) {
                0 => conflict_update_detection(&g, &lambda, rng.below(g.factors().len())),
                1 if !g.conflicts().is_empty() => conflict_update_conflict(&g, &lambda, rng.below(g.conflicts().len())),
                2 => transition_update_forward(&g, &lambda, rng.below(g.factors().len())),
                _ => transition_update_backward(&g, &lambda, rng.below(g.factors().len())),
            };
            update.apply(&mut lambda.0);
            let after = g.dual_value(&lambda.0);
            prop_assert!(after >= before - monotonicity_slack(before), "{before} -> {after}");
        }
    }

    #[test]
    fn detection_to_conflict_update_is_idempotent(seed in any::<u64>(), pick in any::<u64>()) {
        let inst = small(seed);
        let g = decompose(&inst).unwrap();
        let mut rng = Rng::new(pick);
        let mut lambda = sampled_lambda(&g, &mut rng);
        for u in 0..g.factors().len() {
            conflict_update_detection(&g, &lambda, u).apply(&mut lambda.0);
            let again = conflict_update_detection(&g, &lambda, u);
            prop_assert!(again.max_abs() <= 1e-12, "{again:?}");
        }
    }

    #[test]
    fn transition_updates_level_conditioned_minima(seed in any::<u64>(), pick in any::<u64>()) {
        let inst = small(seed);
        let g = decompose(&inst).unwrap();
        let mut rng = Rng::new(pick);
        let mut lambda = sampled_lambda(&g, &mut rng);
        for u in 0..g.factors().len() {
            for forward in [true, false] {
                let before = g.detection_costs(&lambda, u);
                let (edges, rest) = if forward { (&before.outs, &before.ins) } else { (&before.ins, &before.outs) };
                if edges.is_empty() {
                    continue;
                }
                let base = before.det + rest.iter().copied().fold(0.0, f64::min);
                let mut options: Vec<f64> = std::iter::once(0.0).chain(edges.iter().copied()).collect();
                options.sort_by(f64::total_cmp);
                let target = (base + 0.5 * (options[0] + options[1])).min(0.0);

                let update = if forward { transition_update_forward(&g, &lambda, u) } else { transition_update_backward(&g, &lambda, u) };
                update.apply(&mut lambda.0);
                let after = g.detection_costs(&lambda, u);
                let edges = if forward { &after.outs } else { &after.ins };
                for &c in edges {
                    prop_assert!((base + c - target).abs() <= tol(target), "{} vs {target}", base + c);
                }
                // Repeating is a no-op once "none" is no longer among the two
                // best options.
                let again = if forward { transition_update_forward(&g, &lambda, u) } else { transition_update_backward(&g, &lambda, u) };
                if edges.len() >= 2 && target <= base {
                    prop_assert!(again.max_abs() <= 1e-12, "{again:?}");
                }
            }
        }
    }

    #[test]
    fn dual_is_a_lower_bound(seed in any::<u64>(), pick in any::<u64>()) {
        let inst = small(seed);
        let g = decompose(&inst).unwrap();
        let opt = brute_force_solve(&inst, DEFAULT_BUDGET).unwrap().optimum;
        let mut rng = Rng::new(pick);
        for _ in 0..5 {
            let lambda = sampled_lambda(&g, &mut rng);
            let d = g.dual_value(&lambda.0);
            prop_assert!(d <= opt + 1e-9, "dual {d} above optimum {opt}");
        }
    }

    #[test]
    fn decomposed_energy_is_invariant(seed in any::<u64>(), pick in any::<u64>()) {
        let inst = small(seed);
        let g = decompose(&inst).unwrap();
        let mut rng = Rng::new(pick);
        let x = random_feasible(&inst, &mut rng);
        prop_assert!(check_feasible(&inst, &x).is_feasible());
        let e = energy(&inst, &x).value;
        let labeling = g.labeling_from_assignment(&x);
        let zero = Reparametrization::zeros(&g);
        prop_assert!((g.decomposed_energy(&zero.0, &labeling) - e).abs() <= tol(e));
        let lambda = sampled_lambda(&g, &mut rng);
        let moved = g.decomposed_energy(&lambda.0, &labeling);
        prop_assert!((moved - e).abs() <= tol(e), "{moved} vs {e}");
    }

    #[test]
    fn feasibility_matches_definition(seed in any::<u64>(), bits in any::<u64>()) {
        let inst = small(seed);
        let mut rng = Rng::new(bits);
        let x = Assignment {
            detection_on: inst.detections.iter().map(|_| rng.coin(0.6)).collect(),
            transition_on: inst.transitions.iter().map(|_| rng.coin(0.3)).collect(),
        };
        prop_assert_eq!(check_feasible(&inst, &x).is_feasible(), feasible_by_definition(&inst, &x));
        let y = random_feasible(&inst, &mut rng);
        prop_assert!(feasible_by_definition(&inst, &y));
    }

    #[test]
    fn energy_is_linear_in_costs(seed in any::<u64>(), other in any::<u64>(), pick in any::<u64>()) {
        let a = small(seed);
        let mut b = a.clone();
        let mut rng = Rng::new(other);
        for d in &mut b.detections {
            d.cost = rng.cost();
            d.appearance_cost = rng.uniform();
            d.disappearance_cost = rng.uniform();
        }
        for t in &mut b.transitions {
            t.cost = rng.cost();
        }
        let mut sum = a.clone();
        for (s, d) in sum.detections.iter_mut().zip(&b.detections) {
            s.cost += d.cost;
            s.appearance_cost += d.appearance_cost;
            s.disappearance_cost += d.disappearance_cost;
        }
        for (s, t) in sum.transitions.iter_mut().zip(&b.transitions) {
            s.cost += t.cost;
        }
        let x = random_feasible(&a, &mut Rng::new(pick));
        let lhs = energy(&a, &x).value + energy(&b, &x).value;
        let rhs = energy(&sum, &x).value;
        prop_assert!((lhs - rhs).abs() <= tol(rhs));
    }

    #[test]
    fn packing_matches_enumeration(scores in prop::collection::vec(-8i32..8, 0..12), raw in prop::collection::vec(prop::collection::vec(0usize..12, 2..5), 0..6)) {
        let n = scores.len();
        let scores: Vec<f64> = scores.iter().map(|&s| f64::from(s) / 4.0).collect();
        let mut conflicts = Vec::new();
        for set in raw {
            let mut members: Vec<usize> = set.into_iter().filter(|&m| m < n).collect();
            members.sort_unstable();
            members.dedup();
            if members.len() >= 2 {
                conflicts.push(members);
            }
        }
        let problem = PackingProblem { scores: scores.clone(), conflicts };
        let got = solve_packing(&problem);
        prop_assert!(is_packing(&problem, &got.selected));
        prop_assert_eq!(got.value, packing_value(&scores, &got.selected));
        prop_assert!(got.value <= 0.0);

        let mut best: Option<(f64, Vec<bool>)> = None;
        for mask in 0u32..(1 << n) {
            let selected: Vec<bool> = (0..n).map(|k| mask >> k & 1 == 1).collect();
            if !is_packing(&problem, &selected) {
                continue;
            }
            let value = packing_value(&scores, &selected);
            let better = match &best {
                None => true,
                Some((v, s)) => value < *v || (value == *v && selected < *s),
            };
            if better {
                best = Some((value, selected));
            }
        }
        let (value, selected) = best.unwrap();
        prop_assert_eq!(got.value, value);
        prop_assert_eq!(got.selected, selected);

        let mut pruned = problem.clone();
        for s in &mut pruned.scores {
            *s = s.min(0.0);
        }
        prop_assert_eq!(solve_packing(&pruned).value, value);
    }

    #[test]
    fn factor_minima_match_enumeration(det in -3i32..3, ins in prop::collection::vec(-3i32..3, 0..4), outs in prop::collection::vec(-3i32..3, 0..4), conflict in prop::collection::vec(-3i32..3, 0..5)) {
        let q = |v: &i32| f64::from(*v) / 2.0;
        let costs = FactorCosts { det: q(&det), ins: ins.iter().map(q).collect(), outs: outs.iter().map(q).collect() };
        let factor = DetectionFactor {
            id: DetectionId::new(1, 0),
            det_cost: costs.det,
            in_edges: (0..ins.len()).map(|k| InEdge { transition: k, cost: 0.0, lambda: 0 }).collect(),
            out_edges: (0..outs.len()).map(|k| OutEdge { transition: k, cost: 0.0, lambda: 0, division: false }).collect(),
            conflict_edges: Vec::new(),
        };
        let mut states = vec![DetectionFactorState::OFF];
        let choices = |n: usize| std::iter::once(None).chain((0..n).map(Some)).collect::<Vec<_>>();
        for i in choices(ins.len()) {
            for o in choices(outs.len()) {
                states.push(DetectionFactorState { det: true, in_choice: i, out_choice: o });
            }
        }
        let best = states.iter().filter(|s| s.is_admissible(&factor)).map(|s| costs.cost_of(s)).fold(f64::INFINITY, f64::min);
        let (value, state) = min_detection_factor(&costs);
        prop_assert_eq!(value, best);
        prop_assert_eq!(costs.cost_of(&state), best);

        let c: Vec<f64> = conflict.iter().map(q).collect();
        let mut values: Vec<f64> = std::iter::once(0.0).chain(c.iter().copied()).collect();
        values.sort_by(f64::total_cmp);
        let m = min_conflict_factor(&c);
        prop_assert_eq!(m.best.0, values[0]);
        prop_assert_eq!(m.second_best.0, values.get(1).copied().unwrap_or(f64::INFINITY));
        let cost_of = |k: Option<usize>| k.map_or(0.0, |k| c[k]);
        prop_assert_eq!(cost_of(m.best.1.active_member), m.best.0);
    }

    #[test]
    fn solver_is_sandwiched_by_oracle(seed in any::<u64>()) {
        let inst = small(seed);
        let g = decompose(&inst).unwrap();
        let opt = brute_force_solve(&inst, DEFAULT_BUDGET).unwrap().optimum;
        let config = SolverConfig { max_sweeps: 200, ..SolverConfig::default() };
        let r = run(&g, &config).unwrap();
        prop_assert!(check_feasible(&inst, &r.assignment).is_feasible());
        prop_assert!(r.dual_bound <= opt + 1e-6, "bound {} optimum {opt}", r.dual_bound);
        prop_assert!(opt <= r.energy + 1e-6, "energy {} optimum {opt}", r.energy);
        prop_assert_eq!(r.energy, energy(&inst, &r.assignment).value);
        for w in r.log.windows(2) {
            prop_assert!(w[1].dual_bound >= w[0].dual_bound - monotonicity_slack(w[0].dual_bound));
        }
    }

    #[test]
    fn extraction_is_feasible_and_above_dual(seed in any::<u64>(), pick in any::<u64>(), dense in any::<bool>()) {
        let params = if dense {
            RandomParams { conflict_prob: 1.0, division_prob: 0.6, max_per_frame: 4, ..RandomParams::default() }
        } else {
            RandomParams::default()
        };
        let inst = random_instance(seed, &params);
        let g = decompose(&inst).unwrap();
        let lambda = sampled_lambda(&g, &mut Rng::new(pick));
        let d = g.dual_value(&lambda.0);
        for direction in [Direction::Forward, Direction::Backward] {
            let p = extract_in_direction(&g, &lambda, direction).unwrap();
            prop_assert!(check_feasible(&inst, &p.assignment).is_feasible());
            prop_assert!(p.energy >= d - 1e-9);
        }
    }

    #[test]
    fn extraction_commutes_with_time_reversal(seed in any::<u64>(), noise in any::<u64>()) {
        let params = RandomParams { division_prob: 0.0, ..RandomParams::default() };
        let mut inst = random_instance(seed, &params);
        let mut rng = Rng::new(noise);
        for d in &mut inst.detections {
            d.cost += 1e-3 * rng.uniform();
        }
        for t in &mut inst.transitions {
            t.cost += 1e-3 * rng.uniform();
        }
        let rev = reversed(&inst);
        let (g, h) = (decompose(&inst).unwrap(), decompose(&rev).unwrap());
        // A move coordinate enters the source's out copy with a minus sign
        // and the target's in copy with a plus sign; reversal swaps the two.
        let (mut lg, mut lh) = (Reparametrization::zeros(&g), Reparametrization::zeros(&h));
        for (a, b) in g.links().iter().zip(h.links()) {
            let value = 2.0 * rng.uniform() - 1.0;
            lg.0[a.lambda] = value;
            lh.0[b.lambda] = -value;
        }
        prop_assert!((g.dual_value(&lg.0) - h.dual_value(&lh.0)).abs() <= 1e-9);
        for (fwd, bwd) in [(&g, &h), (&h, &g)] {
            let (lf, lb) = if std::ptr::eq(fwd, &g) { (&lg, &lh) } else { (&lh, &lg) };
            let a = extract_in_direction(fwd, lf, Direction::Forward).unwrap();
            let b = extract_in_direction(bwd, lb, Direction::Backward).unwrap();
            prop_assert!((a.energy - b.energy).abs() <= 1e-9, "{} vs {}", a.energy, b.energy);
            prop_assert_eq!(&a.assignment.detection_on, &b.assignment.detection_on);
            prop_assert_eq!(&a.assignment.transition_on, &b.assignment.transition_on);
        }
    }

    #[test]
    fn oracle_ignores_record_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let inst = small(seed);
        let mut perm = inst.clone();
        let mut rng = Rng::new(shuffle);
        for i in (1..perm.detections.len()).rev() {
            let j = rng.below(i + 1);
            perm.detections.swap(i, j);
        }
        for i in (1..perm.transitions.len()).rev() {
            let j = rng.below(i + 1);
            perm.transitions.swap(i, j);
        }
        perm.conflicts.reverse();
        let a = brute_force_solve(&inst, DEFAULT_BUDGET).unwrap();
        let b = brute_force_solve(&perm, DEFAULT_BUDGET).unwrap();
        prop_assert!((a.optimum - b.optimum).abs() <= 1e-12);
        prop_assert_eq!(b.optimum, energy(&perm, &b.argmin).value);
    }

    #[test]
    fn lambda_length_counts_copies(seed in any::<u64>()) {
        let inst = small(seed);
        let g = decompose(&inst).unwrap();
        let conflict_edges: usize = inst.conflicts.iter().map(|c| c.members.len()).sum();
        prop_assert_eq!(g.lambda_len(), g.move_count() + 2 * g.division_count() + conflict_edges);
        let divisions = inst.transitions.iter().filter(|t| t.kind.is_division()).count();
        prop_assert_eq!(g.division_count(), divisions);
        prop_assert_eq!(g.move_count(), inst.transitions.len() - divisions);
    }
}

#[test]
fn generated_truth_is_no_better_than_the_oracle() {
    let mut checked = 0;
    for seed in 0..300 {
        let p = GenParams {
            frames: 2 + (seed % 2) as u32,
            initial_objects: 1 + (seed % 3) as u32,
            hypotheses_per_object: 1 + (seed % 2) as u32,
            division_prob: 0.3,
            arena_size: 15.0,
            seed,
            ..GenParams::default()
        };
        let (inst, truth) = generate(&p);
        assert!(check_feasible(&inst, &truth).is_feasible());
        let Ok(oracle) = brute_force_solve(&inst, DEFAULT_BUDGET) else {
            continue;
        };
        assert!(
            energy(&inst, &truth).value >= oracle.optimum - 1e-9,
            "seed {seed}"
        );
        checked += 1;
    }
    assert!(checked >= 50, "only {checked} instances fit the oracle");
}
