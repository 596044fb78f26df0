#![allow(dead_code)]

use clsp::instance::{Instance, SetupPlan};
use proptest::prelude::*;
use rand::Rng;

/// Fixed-setup optimum by dynamic programming over integral ending
/// inventory, trying every production quantity in every period.
pub fn inventory_dp(inst: &Instance, setup: &SetupPlan) -> Option<i64> {
    let total: i64 = inst.demand.iter().sum();
    let max_s = total as usize;
    let mut cost: Vec<Option<i64>> = vec![None; max_s + 1];
    cost[0] = Some(0);
    for t in 0..inst.horizon() {
        let cap = if setup.get(t) { inst.capacity[t] } else { 0 };
        let mut next: Vec<Option<i64>> = vec![None; max_s + 1];
        for (s, c) in cost.iter().enumerate() {
            let Some(c) = c else { continue };
            for x in 0..=cap {
                let end = s as i64 + x - inst.demand[t];
                if end < 0 || end as usize > max_s {
                    continue;
                }
                let v = c + inst.unit_cost[t] * x + inst.holding_cost[t] * end;
                let slot = &mut next[end as usize];
                if slot.is_none_or(|old| v < old) {
                    *slot = Some(v);
                }
            }
        }
        cost = next;
    }
    let setups: i64 = (0..inst.horizon())
        .filter(|&t| setup.get(t))
        .map(|t| inst.setup_cost[t])
        .sum();
    cost.iter().flatten().min().map(|c| c + setups)
}

pub fn all_setups(horizon: usize) -> impl Iterator<Item = SetupPlan> {
    (0..1u64 << horizon).map(move |m| SetupPlan::from_mask(horizon, m))
}

/// Instances with `T <= max_t`, demand `<= max_d`, capacity in `1..=max_cap`.
pub fn instance_strategy(max_t: usize, max_d: i64, max_cap: i64) -> impl Strategy<Value = Instance> {
    (1..=max_t).prop_flat_map(move |t| {
        (
            prop::collection::vec(0..=max_d, t),
            prop::collection::vec(0..=5i64, t),
            prop::collection::vec(0..=30i64, t),
            prop::collection::vec(0..=3i64, t),
            prop::collection::vec(1..=max_cap, t),
        )
            .prop_map(|(d, p, f, h, cap)| Instance::new(d, p, f, h, cap).unwrap())
    })
}

pub fn setup_strategy(horizon: usize) -> impl Strategy<Value = SetupPlan> {
    prop::collection::vec(any::<bool>(), horizon).prop_map(SetupPlan::from_bools)
}

pub fn instance_with_setup(
    max_t: usize,
    max_d: i64,
    max_cap: i64,
) -> impl Strategy<Value = (Instance, SetupPlan)> {
    instance_strategy(max_t, max_d, max_cap).prop_flat_map(|inst| {
        let t = inst.horizon();
        (Just(inst), setup_strategy(t))
    })
}

/// Same ranges as [`instance_strategy`], drawn from a plain RNG.
pub fn random_instance(rng: &mut impl Rng, max_t: usize, max_d: i64, max_cap: i64) -> Instance {
    let t = rng.random_range(1..=max_t);
    let mut col = |lo: i64, hi: i64| -> Vec<i64> { (0..t).map(|_| rng.random_range(lo..=hi)).collect() };
    let d = col(0, max_d);
    let p = col(0, 5);
    let f = col(0, 30);
    let h = col(0, 3);
    let cap = col(1, max_cap);
    Instance::new(d, p, f, h, cap).unwrap()
}
