//! Ground-truth solvers: exhaustive enumeration of setup vectors and a
//! depth-first branch-and-bound over the setups.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{relaxation_bound, solve_fixed_setup, FixState, Fixing, FlowSolution};
use crate::instance::{Instance, Money, Provenance, SetupPlan, Solution, Status};

/// Largest horizon accepted by [`brute_force_solve`].
pub const BRUTE_FORCE_MAX_T: usize = 24;

/// Enumerates all `2^T` setup vectors (bit `t` of the counter is `y[t]`,
/// counting up from zero) and keeps the first minimum found.
pub fn brute_force_solve(instance: &Instance) -> Result<Solution> {
    let n = instance.horizon();
    if n > BRUTE_FORCE_MAX_T {
        return Err(Error::TooLarge(format!(
            "brute force enumerates 2^T setups; T = {n} exceeds {BRUTE_FORCE_MAX_T}"
        )));
    }
    let start = Instant::now();
    let mut best: Option<(SetupPlan, FlowSolution)> = None;
    for mask in 0..(1u64 << n) {
        let setup = SetupPlan::from_mask(n, mask);
        if let Some(sol) = solve_fixed_setup(instance, &setup)? {
            if best.as_ref().is_none_or(|(_, b)| sol.objective < b.objective) {
                best = Some((setup, sol));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(match best {
        Some((setup, sol)) => Solution {
            status: Status::Optimal,
            setup,
            plan: Some(sol.plan),
            objective: Some(sol.objective),
            solve_time: elapsed,
            provenance: Provenance::BruteForce,
        },
        None => Solution::infeasible(n, Provenance::BruteForce, elapsed),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchOrder {
    Chronological,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FirstBranch {
    OneFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnbOptions {
    pub node_limit: u64,
    /// Seconds.
    pub time_limit: f64,
    pub branch_order: BranchOrder,
    pub first_branch: FirstBranch,
    /// Bound-based pruning. Infeasible leaves are skipped either way.
    pub pruning: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            node_limit: u64::MAX,
            time_limit: f64::INFINITY,
            branch_order: BranchOrder::Chronological,
            first_branch: FirstBranch::OneFirst,
            pruning: true,
        }
    }
}

impl BnbOptions {
    pub fn validate(&self) -> Result<()> {
        if self.node_limit == 0 || self.time_limit.is_nan() || self.time_limit <= 0.0 {
            return Err(Error::Config("node and time limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbResult {
    pub solution: Solution,
    pub nodes: u64,
    pub limit_reached: bool,
}

struct Search<'a> {
    instance: &'a Instance,
    options: BnbOptions,
    deadline: Option<Instant>,
    fixing: Fixing,
    incumbent: Option<(SetupPlan, FlowSolution)>,
    nodes: u64,
    stopped: bool,
}

impl Search<'_> {
    fn incumbent_value(&self) -> Option<Money> {
        self.incumbent.as_ref().map(|(_, s)| s.objective)
    }

    fn limits_hit(&mut self) -> bool {
        if self.nodes >= self.options.node_limit
            || self.deadline.is_some_and(|d| Instant::now() >= d)
        {
            self.stopped = true;
        }
        self.stopped
    }

    fn visit(&mut self, depth: usize) -> Result<()> {
        if self.limits_hit() {
            return Ok(());
        }
        self.nodes += 1;
        let n = self.instance.horizon();

        if depth == n {
            let setup = SetupPlan::from_bools(
                self.fixing.0.iter().map(|&s| s == FixState::FixedOne).collect(),
            );
            if let Some(sol) = solve_fixed_setup(self.instance, &setup)? {
                if self.incumbent_value().is_none_or(|best| sol.objective < best) {
                    self.incumbent = Some((setup, sol));
                }
            }
            return Ok(());
        }

        if self.options.pruning {
            match relaxation_bound(self.instance, &self.fixing)? {
                None => return Ok(()),
                Some(bound) => {
                    if self.incumbent_value().is_some_and(|best| bound >= best as f64) {
                        return Ok(());
                    }
                }
            }
        }

        for state in [FixState::FixedOne, FixState::FixedZero] {
            self.fixing.0[depth] = state;
            self.visit(depth + 1)?;
        }
        self.fixing.0[depth] = FixState::Free;
        Ok(())
    }
}

/// Depth-first branch-and-bound on the setup variables, branching
/// chronologically with the open branch first. A node is pruned when its
/// relaxation bound reaches the incumbent or when its open and free periods
/// cannot cover some demand prefix. The incumbent starts from the all-open
/// setup.
pub fn bnb_solve(instance: &Instance, options: &BnbOptions) -> Result<BnbResult> {
    options.validate()?;
    let start = Instant::now();
    let n = instance.horizon();
    let all_open = SetupPlan::all(n, true);
    let incumbent = solve_fixed_setup(instance, &all_open)?.map(|s| (all_open, s));

    let mut search = Search {
        instance,
        options: *options,
        deadline: options
            .time_limit
            .is_finite()
            .then(|| start + Duration::from_secs_f64(options.time_limit)),
        fixing: Fixing::all_free(n),
        nodes: 0,
        stopped: false,
        incumbent,
    };
    // Every setup is dominated by all-open for feasibility.
    if search.incumbent.is_some() {
        search.visit(0)?;
    }

    let elapsed = start.elapsed().as_secs_f64();
    let solution = match search.incumbent {
        Some((setup, sol)) => Solution {
            status: if search.stopped {
                Status::Feasible
            } else {
                Status::Optimal
            },
            setup,
            plan: Some(sol.plan),
            objective: Some(sol.objective),
            solve_time: elapsed,
            provenance: Provenance::BranchAndBound,
        },
        None => Solution::infeasible(n, Provenance::BranchAndBound, elapsed),
    };
    Ok(BnbResult {
        solution,
        nodes: search.nodes,
        limit_reached: search.stopped,
    })
}

/// Exact solver by dynamic programming over integral ending inventory.
///
/// `cost[t][s]` is the cheapest way to meet demand through period `t` and
/// end it holding `s` units, where `s` never exceeds the remaining demand.
/// Opening period `t` allows `x` in `[0, cap[t]]`; the minimum over the
/// producible window of `cost[t-1][j] - p[t]·j` is maintained with a
/// monotone deque, so each period costs `O(remaining demand)`. Ties prefer
/// leaving a period closed. Runs in pseudo-polynomial time and handles the
/// full benchmark horizon.
pub fn dp_solve(instance: &Instance) -> Result<Solution> {
    const INF: i64 = i64::MAX / 4;
    let start = Instant::now();
    let n = instance.horizon();
    let d = &instance.demand;

    // remaining[t]: demand of periods t.., so stock after period t is at
    // most remaining[t + 1].
    let mut remaining = vec![0i64; n + 1];
    for t in (0..n).rev() {
        remaining[t] = remaining[t + 1] + d[t];
    }
    let mut prev = vec![INF; remaining[0] as usize + 1];
    prev[0] = 0;
    // produced[t][s]: production chosen in period t to end at stock s, -1 if closed.
    let mut produced: Vec<Vec<i64>> = Vec::with_capacity(n);
    let mut window: std::collections::VecDeque<usize> = std::collections::VecDeque::new();

    for t in 0..n {
        let width = remaining[t + 1] as usize + 1;
        let (p, f, h, cap) = (
            instance.unit_cost[t],
            instance.setup_cost[t],
            instance.holding_cost[t],
            instance.capacity[t],
        );
        let value = |j: usize| prev[j].saturating_sub(p * j as i64);
        let mut cur = vec![INF; width];
        let mut choice = vec![-1i64; width];
        window.clear();
        let mut pushed = 0usize;

        for s in 0..width {
            let hi = s + d[t] as usize; // incoming stock with no production
            let lo = hi.saturating_sub(cap.max(0) as usize);
            while pushed <= hi {
                if prev[pushed] < INF {
                    while window.back().is_some_and(|&b| value(b) >= value(pushed)) {
                        window.pop_back();
                    }
                    window.push_back(pushed);
                }
                pushed += 1;
            }
            while window.front().is_some_and(|&j| j < lo) {
                window.pop_front();
            }
            let mut best = prev[hi];
            let mut x = -1;
            if let Some(&j) = window.front() {
                let open = f + value(j) + p * hi as i64;
                if open < best {
                    best = open;
                    x = (hi - j) as i64;
                }
            }
            if best < INF {
                cur[s] = best + h * s as i64;
                choice[s] = x;
            }
        }
        produced.push(choice);
        prev = cur;
    }

    let elapsed = || start.elapsed().as_secs_f64();
    if prev[0] >= INF {
        return Ok(Solution::infeasible(n, Provenance::InventoryDp, elapsed()));
    }

    let mut x = vec![0i64; n];
    let mut setup = SetupPlan::all(n, false);
    let mut stock = 0usize;
    for t in (0..n).rev() {
        let chosen = produced[t][stock];
        if chosen >= 0 {
            setup.set(t, true);
            x[t] = chosen;
        }
        stock = stock + d[t] as usize - x[t] as usize;
    }
    debug_assert_eq!(stock, 0);

    let plan = crate::instance::ProductionPlan::from_production(instance, x);
    let objective = crate::instance::evaluate_objective(instance, &setup, &plan)?;
    debug_assert_eq!(objective, prev[0]);
    Ok(Solution {
        status: Status::Optimal,
        setup,
        plan: Some(plan),
        objective: Some(objective),
        solve_time: elapsed(),
        provenance: Provenance::InventoryDp,
    })
}

/// Selects one of the exact solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSolver {
    BruteForce,
    BranchAndBound(BnbOptions),
    InventoryDp,
}

impl Default for ExactSolver {
    fn default() -> Self {
        ExactSolver::BranchAndBound(BnbOptions::default())
    }
}

impl ExactSolver {
    pub fn solve(&self, instance: &Instance) -> Result<Solution> {
        match self {
            ExactSolver::BruteForce => brute_force_solve(instance),
            ExactSolver::BranchAndBound(opts) => Ok(bnb_solve(instance, opts)?.solution),
            ExactSolver::InventoryDp => dp_solve(instance),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExactSolver::BruteForce => "brute_force",
            ExactSolver::BranchAndBound(_) => "bnb",
            ExactSolver::InventoryDp => "dp",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::fixtures::{i1, i2, y};

    #[test]
    fn brute_force_hand_examples() {
        let s1 = brute_force_solve(&i1()).unwrap();
        assert_eq!(s1.status, Status::Optimal);
        assert_eq!(s1.setup, y(&[1, 0]));
        assert_eq!(s1.objective, Some(30));

        let s2 = brute_force_solve(&i2()).unwrap();
        assert_eq!(s2.setup, y(&[1, 1]));
        assert_eq!(s2.objective, Some(20));
    }

    #[test]
    fn brute_force_infeasible_and_guard() {
        let short = Instance::new(vec![5, 5], vec![1, 1], vec![1, 1], vec![1, 1], vec![4, 4]).unwrap();
        let sol = brute_force_solve(&short).unwrap();
        assert_eq!(sol.status, Status::Infeasible);
        assert!(sol.objective.is_none());

        let n = BRUTE_FORCE_MAX_T + 1;
        let big = Instance::new(vec![1; n], vec![1; n], vec![1; n], vec![1; n], vec![1; n]).unwrap();
        assert!(matches!(brute_force_solve(&big), Err(Error::TooLarge(_))));
    }

    #[test]
    fn bnb_hand_examples() {
        let opts = BnbOptions::default();
        let r1 = bnb_solve(&i1(), &opts).unwrap();
        assert_eq!(r1.solution.status, Status::Optimal);
        assert_eq!(r1.solution.objective, Some(30));
        assert_eq!(r1.solution.setup, y(&[1, 0]));

        let r2 = bnb_solve(&i2(), &opts).unwrap();
        assert_eq!(r2.solution.status, Status::Optimal);
        assert_eq!(r2.solution.objective, Some(20));
    }

    #[test]
    fn bnb_free_setups_match_all_open() {
        let inst = Instance::new(
            vec![3, 9, 1, 4],
            vec![2, 5, 1, 3],
            vec![0, 0, 0, 0],
            vec![2, 1, 1, 3],
            vec![8, 8, 8, 8],
        )
        .unwrap();
        let all_open = solve_fixed_setup(&inst, &SetupPlan::all(4, true))
            .unwrap()
            .unwrap();
        let r = bnb_solve(&inst, &BnbOptions::default()).unwrap();
        assert_eq!(r.solution.objective, Some(all_open.objective));
    }

    #[test]
    fn bnb_without_pruning_visits_full_tree() {
        let opts = BnbOptions {
            pruning: false,
            ..BnbOptions::default()
        };
        let r = bnb_solve(&i1(), &opts).unwrap();
        assert_eq!(r.nodes, 7);
        assert_eq!(r.solution.objective, Some(30));
    }

    #[test]
    fn bnb_infeasible_instance() {
        let short = Instance::new(vec![5, 5], vec![1, 1], vec![1, 1], vec![1, 1], vec![4, 4]).unwrap();
        let r = bnb_solve(&short, &BnbOptions::default()).unwrap();
        assert_eq!(r.solution.status, Status::Infeasible);
        assert_eq!(r.nodes, 0);
    }

    #[test]
    fn node_limit_returns_incumbent_as_feasible() {
        let opts = BnbOptions {
            node_limit: 1,
            pruning: false,
            ..BnbOptions::default()
        };
        let r = bnb_solve(&i1(), &opts).unwrap();
        assert!(r.limit_reached);
        assert_eq!(r.solution.status, Status::Feasible);
        assert_eq!(r.solution.objective, Some(36));
    }

    #[test]
    fn dp_hand_examples() {
        let s1 = dp_solve(&i1()).unwrap();
        assert_eq!(s1.objective, Some(30));
        assert_eq!(s1.setup, y(&[1, 0]));
        assert_eq!(dp_solve(&i2()).unwrap().objective, Some(20));
        let short = Instance::new(vec![5, 5], vec![1, 1], vec![1, 1], vec![1, 1], vec![4, 4]).unwrap();
        assert_eq!(dp_solve(&short).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn dp_plan_is_consistent() {
        use crate::generator::{generate_instance, GeneratorConfig};
        use crate::instance::validate_plan;
        for seed in 0..20 {
            let inst = generate_instance(&GeneratorConfig::new(30, 5, 10000, seed)).unwrap();
            let sol = dp_solve(&inst).unwrap();
            let plan = sol.plan.unwrap();
            assert!(validate_plan(&inst, &sol.setup, &plan).unwrap().is_empty());
            let fixed = solve_fixed_setup(&inst, &sol.setup).unwrap().unwrap();
            assert_eq!(fixed.objective, sol.objective.unwrap());
        }
    }

    #[test]
    fn rejects_zero_limits() {
        let opts = BnbOptions {
            node_limit: 0,
            ..BnbOptions::default()
        };
        assert!(bnb_solve(&i1(), &opts).is_err());
    }
}
