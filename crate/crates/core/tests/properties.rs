mod common;

use clsp::encoding::{decode_target, encode_source, encode_target, fit_normalizer, TokenizerConfig};
use clsp::exact::{bnb_solve, brute_force_solve, dp_solve, BnbOptions};
use clsp::flow::{relaxation_bound, solve_fixed_setup, FixState, Fixing};
use clsp::instance::{evaluate_objective, setup_feasible, validate_plan, Instance, ProductionPlan, SetupPlan};
use clsp::pipeline::{repair, repair_and_solve, RepairOptions};
use common::*;
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

fn brute_min(inst: &Instance) -> Option<i64> {
    all_setups(inst.horizon())
        .filter_map(|y| solve_fixed_setup(inst, &y).unwrap().map(|s| s.objective))
        .min()
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn valid_plan_implies_feasible_setup(
        (inst, y) in instance_with_setup(8, 20, 25),
        frac in prop::collection::vec(0.0..=1.0f64, 8),
    ) {
        let x: Vec<i64> = (0..inst.horizon())
            .map(|t| if y.get(t) { (frac[t] * inst.capacity[t] as f64).round() as i64 } else { 0 })
            .collect();
        let plan = ProductionPlan::from_production(&inst, x);
        if validate_plan(&inst, &y, &plan).unwrap().is_empty() {
            prop_assert!(setup_feasible(&inst, &y).unwrap());
        }
    }

    #[test]
    fn opening_a_period_keeps_feasibility((inst, y) in instance_with_setup(10, 20, 25), t in 0usize..10) {
        let t = t % inst.horizon();
        let mut opened = y.clone();
        opened.set(t, true);
        if setup_feasible(&inst, &y).unwrap() {
            prop_assert!(setup_feasible(&inst, &opened).unwrap());
        }
    }

    #[test]
    fn infeasible_exactly_when_prefix_test_fails((inst, y) in instance_with_setup(10, 20, 25)) {
        let sol = solve_fixed_setup(&inst, &y).unwrap();
        prop_assert_eq!(sol.is_some(), setup_feasible(&inst, &y).unwrap());
        if let Some(sol) = sol {
            prop_assert!(validate_plan(&inst, &y, &sol.plan).unwrap().is_empty());
            prop_assert_eq!(evaluate_objective(&inst, &y, &sol.plan).unwrap(), sol.objective);
        }
    }

    #[test]
    fn objective_is_linear_in_costs((inst, y) in instance_with_setup(8, 20, 25), k in 2i64..5) {
        if let Some(sol) = solve_fixed_setup(&inst, &y).unwrap() {
            let mut scaled = inst.clone();
            for v in scaled.unit_cost.iter_mut().chain(&mut scaled.setup_cost).chain(&mut scaled.holding_cost) {
                *v *= k;
            }
            prop_assert_eq!(
                evaluate_objective(&scaled, &y, &sol.plan).unwrap(),
                k * evaluate_objective(&inst, &y, &sol.plan).unwrap()
            );
        }
    }
}

proptest! {
    #![proptest_config(cases(256))]

    #[test]
    fn flow_matches_inventory_dp(inst in instance_strategy(5, 6, 8)) {
        for y in all_setups(inst.horizon()) {
            let flow = solve_fixed_setup(&inst, &y).unwrap().map(|s| s.objective);
            prop_assert_eq!(flow, inventory_dp(&inst, &y), "setup {}", y);
        }
    }

    #[test]
    fn relaxation_is_a_lower_bound(inst in instance_strategy(10, 20, 25)) {
        let bound = relaxation_bound(&inst, &Fixing::all_free(inst.horizon())).unwrap();
        match brute_min(&inst) {
            Some(best) => prop_assert!(bound.unwrap() <= best as f64 + 1e-9),
            None => prop_assert!(bound.is_none()),
        }
    }

    #[test]
    fn tightening_never_lowers_the_bound(
        inst in instance_strategy(8, 20, 25),
        states in prop::collection::vec(0u8..3, 8),
        t in 0usize..8,
        one in any::<bool>(),
    ) {
        let n = inst.horizon();
        let mut fixing = Fixing(
            (0..n)
                .map(|i| match states[i] {
                    0 => FixState::FixedZero,
                    1 => FixState::FixedOne,
                    _ => FixState::Free,
                })
                .collect(),
        );
        let t = t % n;
        fixing.0[t] = FixState::Free;
        let loose = relaxation_bound(&inst, &fixing).unwrap();
        fixing.0[t] = if one { FixState::FixedOne } else { FixState::FixedZero };
        let tight = relaxation_bound(&inst, &fixing).unwrap();
        match (loose, tight) {
            (Some(a), Some(b)) => prop_assert!(b >= a - 1e-9, "{} < {}", b, a),
            (None, t) => prop_assert!(t.is_none()),
            (Some(_), None) => {}
        }
    }

    #[test]
    fn exact_solvers_agree(inst in instance_strategy(9, 20, 25)) {
        let brute = brute_force_solve(&inst).unwrap();
        let bnb = bnb_solve(&inst, &BnbOptions::default()).unwrap();
        let dp = dp_solve(&inst).unwrap();
        prop_assert_eq!(bnb.solution.objective, brute.objective);
        prop_assert_eq!(dp.objective, brute.objective);
        let n = inst.horizon() as u32;
        prop_assert!(bnb.nodes < 1u64 << (n + 1));
        if let Some(obj) = bnb.solution.objective {
            let bound = relaxation_bound(&inst, &Fixing::all_free(inst.horizon())).unwrap().unwrap();
            prop_assert!(obj as f64 >= bound - 1e-9);
        }
        let plain = bnb_solve(&inst, &BnbOptions { pruning: false, ..BnbOptions::default() }).unwrap();
        prop_assert_eq!(plain.solution.objective, brute.objective);
        prop_assert!(plain.nodes < 1u64 << (n + 1));
        let again = bnb_solve(&inst, &BnbOptions::default()).unwrap();
        prop_assert_eq!(again.nodes, bnb.nodes);
        prop_assert_eq!(again.solution.setup, bnb.solution.setup);
        prop_assert_eq!(again.solution.plan, bnb.solution.plan);
    }
}

proptest! {
    #![proptest_config(cases(10_000))]

    #[test]
    fn repair_never_returns_an_invalid_plan(
        (inst, y) in instance_with_setup(8, 20, 25),
        flip in any::<bool>(),
        fallback in any::<bool>(),
    ) {
        let opts = RepairOptions { flip_last: flip, fallback_exact: fallback, ..RepairOptions::default() };
        let sol = repair_and_solve(&inst, &y, &opts).unwrap();
        prop_assert_eq!(sol.plan.is_some(), sol.is_feasible());
        if let Some(plan) = &sol.plan {
            prop_assert!(validate_plan(&inst, &sol.setup, plan).unwrap().is_empty());
            prop_assert_eq!(Some(evaluate_objective(&inst, &sol.setup, plan).unwrap()), sol.objective);
        }
        if fallback && brute_min(&inst).is_some() {
            prop_assert!(sol.is_feasible());
        }
    }

    #[test]
    fn source_tokens_stay_in_vocabulary(inst in instance_strategy(12, 600, 2640)) {
        let mut tok = TokenizerConfig::unfitted();
        tok.mean = [5.0, 3.0, 7.0, 7.0, 1.0];
        tok.std = [1.0, 1.5, 1.2, 0.5, 1e-6];
        let src = encode_source(&inst, &tok);
        prop_assert_eq!(src.0.len(), 5 * inst.horizon());
        prop_assert!(src.0.iter().all(|&t| t < 12_000));
        let y = SetupPlan::from_bools(inst.demand.iter().map(|&d| d % 2 == 0).collect());
        prop_assert!(encode_target(&y).0.iter().all(|&t| t < 4));
    }
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn flipped_last_period_is_always_repaired((mut inst, y) in instance_with_setup(10, 20, 25)) {
        for t in 0..inst.horizon() {
            inst.capacity[t] = inst.capacity[t].max(inst.demand[t]);
        }
        // Open periods from the front until the prefix test passes.
        let mut good = y;
        for t in 0..inst.horizon() {
            if setup_feasible(&inst, &good).unwrap() {
                break;
            }
            good.set(t, true);
        }
        prop_assert!(setup_feasible(&inst, &good).unwrap());
        let corrupted = good.with_last_flipped();
        let opts = RepairOptions { fallback_exact: false, ..RepairOptions::default() };
        let out = repair(&inst, &corrupted, &opts).unwrap();
        prop_assert!(out.solution.is_feasible());
        prop_assert!(out.direct_feasible || out.flipped_feasible == Some(true));
    }

    #[test]
    fn binning_is_monotone(a in -6.0..6.0f64, b in -6.0..6.0f64) {
        let tok = TokenizerConfig::unfitted();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(tok.bin(lo) <= tok.bin(hi));
        let width = 2.0 * tok.clip_sigmas / tok.bins as f64;
        if hi - lo > width && hi <= tok.clip_sigmas && lo >= -tok.clip_sigmas {
            prop_assert!(tok.bin(lo) < tok.bin(hi));
        }
    }

    #[test]
    fn target_round_trip(bits in prop::collection::vec(any::<bool>(), 1..=16)) {
        let y = SetupPlan::from_bools(bits);
        prop_assert_eq!(decode_target(&encode_target(&y).0).unwrap(), y);
    }
}

#[test]
fn distinct_standardized_values_give_distinct_sequences() {
    let base = Instance::new(vec![100; 3], vec![3; 3], vec![1000; 3], vec![1; 3], vec![900; 3]).unwrap();
    let mut other = base.clone();
    other.unit_cost[1] = 4;
    let tok = fit_normalizer([&base, &other]).unwrap();
    assert_ne!(encode_source(&base, &tok), encode_source(&other, &tok));
}
