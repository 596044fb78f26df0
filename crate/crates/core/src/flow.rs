//! Exact solver for the lot sizing problem once setups are fixed, and the
//! closed-form LP-relaxation bound used by branch-and-bound.
//!
//! With setups fixed the residual problem is a transportation problem on a
//! line: open period `u` ships to demand period `t >= u` at unit cost
//! `p[u] + H[t] - H[u]` where `H[t]` is the holding cost accumulated before
//! period `t`. The `H[t]` part is the same for every source serving `t`, so
//! sources can be ranked once by the time-invariant key `p[u] - H[u]`.
//! Serving demands in period order from the cheapest open source with
//! residual capacity is optimal for this cost structure and runs in
//! `O(T log T)`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::{evaluate_objective, Instance, Money, ProductionPlan, SetupPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FixState {
    FixedZero,
    FixedOne,
    Free,
}

/// Per-period state of the setup variables during tree search.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fixing(pub Vec<FixState>);

impl Fixing {
    pub fn all_free(horizon: usize) -> Self {
        Fixing(vec![FixState::Free; horizon])
    }

    pub fn from_setup(setup: &SetupPlan) -> Self {
        Fixing(
            setup
                .as_slice()
                .iter()
                .map(|&y| if y { FixState::FixedOne } else { FixState::FixedZero })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSolution {
    pub plan: ProductionPlan,
    /// Includes the setup costs of the open periods.
    pub objective: Money,
}

#[derive(Clone, Copy)]
struct Source {
    key: f64,
    period: usize,
}

impl PartialEq for Source {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Source {}

impl PartialOrd for Source {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Source {
    // Cheaper first, then earlier period.
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.period.cmp(&other.period))
    }
}

/// Greedy line transportation. `unit_cost(u)` is `None` for closed periods
/// and `Some((production cost per unit, capacity))` otherwise. Returns the
/// production quantities, or `None` if some demand prefix cannot be covered.
fn line_flow<F>(instance: &Instance, mut unit_cost: F) -> Option<Vec<i64>>
where
    F: FnMut(usize) -> Option<(f64, i64)>,
{
    let n = instance.horizon();
    let mut x = vec![0i64; n];
    let mut residual = vec![0i64; n];
    let mut heap: BinaryHeap<Reverse<Source>> = BinaryHeap::with_capacity(n);
    let mut held = 0.0f64;

    for t in 0..n {
        if let Some((cost, cap)) = unit_cost(t) {
            if cap > 0 {
                residual[t] = cap;
                heap.push(Reverse(Source {
                    key: cost - held,
                    period: t,
                }));
            }
        }
        let mut need = instance.demand[t];
        while need > 0 {
            let Reverse(top) = *heap.peek()?;
            let u = top.period;
            let take = need.min(residual[u]);
            x[u] += take;
            residual[u] -= take;
            need -= take;
            if residual[u] == 0 {
                heap.pop();
            }
        }
        held += instance.holding_cost[t] as f64;
    }
    Some(x)
}

/// Minimum-cost production plan with every setup fixed, or `None` when the
/// opened capacity cannot cover some demand prefix.
pub fn solve_fixed_setup(instance: &Instance, setup: &SetupPlan) -> Result<Option<FlowSolution>> {
    instance.require_len("setup", setup.len())?;
    let x = line_flow(instance, |u| {
        setup
            .get(u)
            .then(|| (instance.unit_cost[u] as f64, instance.capacity[u]))
    });
    let Some(x) = x else {
        return Ok(None);
    };
    let plan = ProductionPlan::from_production(instance, x);
    let objective = evaluate_objective(instance, setup, &plan)?;
    Ok(Some(FlowSolution { plan, objective }))
}

/// Lower bound over every 0/1 completion of `fixing`.
///
/// At the relaxed optimum a free setup equals `x[u] / cap[u]`, so a free
/// period behaves like a source with unit cost `p[u] + f[u] / cap[u]`. Fixed
/// open periods pay `f[u]` up front, fixed closed periods are removed.
/// Returns `None` if even opening every non-closed period is infeasible.
pub fn relaxation_bound(instance: &Instance, fixing: &Fixing) -> Result<Option<f64>> {
    instance.require_len("fixing", fixing.len())?;
    let unit = |u: usize| -> Option<(f64, i64)> {
        let p = instance.unit_cost[u] as f64;
        let cap = instance.capacity[u];
        match fixing.0[u] {
            FixState::FixedZero => None,
            FixState::FixedOne => Some((p, cap)),
            FixState::Free if cap > 0 => Some((p + instance.setup_cost[u] as f64 / cap as f64, cap)),
            FixState::Free => None,
        }
    };
    let Some(x) = line_flow(instance, unit) else {
        return Ok(None);
    };

    let mut bound = 0.0;
    let mut stock = 0i64;
    for (u, &xu) in x.iter().enumerate() {
        if fixing.0[u] == FixState::FixedOne {
            bound += instance.setup_cost[u] as f64;
        }
        if let Some((cost, _)) = unit(u) {
            bound += cost * xu as f64;
        }
        stock += xu - instance.demand[u];
        bound += (instance.holding_cost[u] * stock) as f64;
    }
    Ok(Some(bound))
}
