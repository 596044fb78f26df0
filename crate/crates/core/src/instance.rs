//! Problem data, decision vectors and the constraint/objective predicates of
//! the single-item capacitated lot sizing problem.
//!
//! Periods are indexed from 0 in code. Inventory before the first period is
//! zero and there is no value attached to ending inventory.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Money is kept integral: generated data is integral and the fixed-setup
/// solver always returns integral production plans.
pub type Money = i64;

/// Generator parameters echoed into a serialized instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenInfo {
    pub c: u32,
    pub f: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct Instance {
    pub demand: Vec<i64>,
    pub unit_cost: Vec<i64>,
    pub setup_cost: Vec<i64>,
    pub holding_cost: Vec<i64>,
    pub capacity: Vec<i64>,
    pub gen: Option<GenInfo>,
}

/// Wire form: `{"T":..,"d":[..],"p":[..],"f":[..],"h":[..],"cap":[..],"gen":{..}}`.
#[derive(Serialize, Deserialize)]
struct RawInstance {
    #[serde(rename = "T")]
    horizon: usize,
    d: Vec<i64>,
    p: Vec<i64>,
    f: Vec<i64>,
    h: Vec<i64>,
    cap: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gen: Option<GenInfo>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let inst = Instance {
            demand: raw.d,
            unit_cost: raw.p,
            setup_cost: raw.f,
            holding_cost: raw.h,
            capacity: raw.cap,
            gen: raw.gen,
        };
        if inst.horizon() != raw.horizon {
            return Err(contract(format!(
                "T = {} but arrays have length {}",
                raw.horizon,
                inst.horizon()
            )));
        }
        inst.check()?;
        Ok(inst)
    }
}

impl From<Instance> for RawInstance {
    fn from(inst: Instance) -> Self {
        RawInstance {
            horizon: inst.horizon(),
            d: inst.demand,
            p: inst.unit_cost,
            f: inst.setup_cost,
            h: inst.holding_cost,
            cap: inst.capacity,
            gen: inst.gen,
        }
    }
}

impl Instance {
    /// Builds and validates an instance without generator metadata.
    pub fn new(
        demand: Vec<i64>,
        unit_cost: Vec<i64>,
        setup_cost: Vec<i64>,
        holding_cost: Vec<i64>,
        capacity: Vec<i64>,
    ) -> Result<Self> {
        let inst = Instance {
            demand,
            unit_cost,
            setup_cost,
            holding_cost,
            capacity,
            gen: None,
        };
        inst.check()?;
        Ok(inst)
    }

    pub fn horizon(&self) -> usize {
        self.demand.len()
    }

    /// Checks the structural invariants: equal lengths, `T >= 1`,
    /// nonnegative entries, and some capacity whenever there is demand.
    pub fn check(&self) -> Result<()> {
        let t = self.demand.len();
        if t == 0 {
            return Err(contract("horizon must be at least one period"));
        }
        for (name, arr) in self.columns() {
            if arr.len() != t {
                return Err(contract(format!(
                    "`{name}` has length {} but horizon is {t}",
                    arr.len()
                )));
            }
            if let Some(pos) = arr.iter().position(|&v| v < 0) {
                return Err(contract(format!(
                    "`{name}` is negative in period {}",
                    pos + 1
                )));
            }
        }
        if self.total_demand() > 0 && self.capacity.iter().all(|&c| c == 0) {
            return Err(contract("positive demand but zero capacity everywhere"));
        }
        Ok(())
    }

    /// The five per-period columns in tokenizer feature order.
    pub fn columns(&self) -> [(&'static str, &[i64]); 5] {
        [
            ("d", &self.demand),
            ("p", &self.unit_cost),
            ("f", &self.setup_cost),
            ("cap", &self.capacity),
            ("h", &self.holding_cost),
        ]
    }

    pub fn total_demand(&self) -> i64 {
        self.demand.iter().sum()
    }

    pub fn total_capacity(&self) -> i64 {
        self.capacity.iter().sum()
    }

    pub(crate) fn require_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.horizon() {
            return Err(contract(format!(
                "{what} has length {len}, instance horizon is {}",
                self.horizon()
            )));
        }
        Ok(())
    }
}

/// Binary setup decisions, one per period.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct SetupPlan(Vec<bool>);

impl SetupPlan {
    pub fn from_bools(y: Vec<bool>) -> Self {
        SetupPlan(y)
    }

    pub fn all(horizon: usize, value: bool) -> Self {
        SetupPlan(vec![value; horizon])
    }

    /// Bit `t` of `mask` is the setup of period `t`.
    pub fn from_mask(horizon: usize, mask: u64) -> Self {
        SetupPlan((0..horizon).map(|t| (mask >> t) & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, t: usize) -> bool {
        self.0[t]
    }

    pub fn set(&mut self, t: usize, value: bool) {
        self.0[t] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn count_open(&self) -> usize {
        self.0.iter().filter(|&&y| y).count()
    }

    /// Copy with the last period toggled.
    pub fn with_last_flipped(&self) -> Self {
        let mut out = self.clone();
        if let Some(last) = out.0.last_mut() {
            *last = !*last;
        }
        out
    }
}

impl TryFrom<Vec<u8>> for SetupPlan {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        v.into_iter()
            .enumerate()
            .map(|(t, b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(contract(format!(
                    "setup value {other} in period {} is not binary",
                    t + 1
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(SetupPlan)
    }
}

impl From<SetupPlan> for Vec<u8> {
    fn from(plan: SetupPlan) -> Self {
        plan.0.into_iter().map(u8::from).collect()
    }
}

impl fmt::Display for SetupPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &y in &self.0 {
            f.write_str(if y { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Production `x[t]` and ending inventory `s[t]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductionPlan {
    pub x: Vec<i64>,
    pub s: Vec<i64>,
}

impl ProductionPlan {
    pub fn zeros(horizon: usize) -> Self {
        ProductionPlan {
            x: vec![0; horizon],
            s: vec![0; horizon],
        }
    }

    /// Builds the plan implied by production quantities and flow balance.
    pub fn from_production(instance: &Instance, x: Vec<i64>) -> Self {
        let mut stock = 0;
        let s = x
            .iter()
            .zip(&instance.demand)
            .map(|(&xt, &dt)| {
                stock += xt - dt;
                stock
            })
            .collect();
        ProductionPlan { x, s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    BruteForce,
    BranchAndBound,
    InventoryDp,
    MLDirect,
    MLFlipped,
    ExactFallback,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    pub setup: SetupPlan,
    /// `None` exactly when `status` is `Infeasible`.
    pub plan: Option<ProductionPlan>,
    pub objective: Option<Money>,
    pub solve_time: f64,
    pub provenance: Provenance,
}

impl Solution {
    pub fn infeasible(horizon: usize, provenance: Provenance, solve_time: f64) -> Self {
        Solution {
            status: Status::Infeasible,
            setup: SetupPlan::all(horizon, false),
            plan: None,
            objective: None,
            solve_time,
            provenance,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != Status::Infeasible
    }
}

/// Sum over periods of `p[t]·x[t] + f[t]·y[t] + h[t]·s[t]`.
pub fn evaluate_objective(
    instance: &Instance,
    setup: &SetupPlan,
    plan: &ProductionPlan,
) -> Result<Money> {
    instance.require_len("setup", setup.len())?;
    instance.require_len("production", plan.x.len())?;
    instance.require_len("inventory", plan.s.len())?;
    Ok((0..instance.horizon())
        .map(|t| {
            instance.unit_cost[t] * plan.x[t]
                + instance.setup_cost[t] * i64::from(setup.get(t))
                + instance.holding_cost[t] * plan.s[t]
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// `s[t-1] + x[t] - d[t] != s[t]`.
    FlowBalance { t: usize, lhs: i64, rhs: i64 },
    /// `x[t] > y[t]·cap[t]`.
    Capacity { t: usize, produced: i64, limit: i64 },
    NegativeProduction { t: usize, value: i64 },
    NegativeInventory { t: usize, value: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::FlowBalance { t, lhs, rhs } => {
                write!(f, "period {}: flow balance {lhs} != {rhs}", t + 1)
            }
            Violation::Capacity { t, produced, limit } => {
                write!(f, "period {}: production {produced} > {limit}", t + 1)
            }
            Violation::NegativeProduction { t, value } => {
                write!(f, "period {}: negative production {value}", t + 1)
            }
            Violation::NegativeInventory { t, value } => {
                write!(f, "period {}: negative inventory {value}", t + 1)
            }
        }
    }
}

/// Checks flow balance, setup-gated capacity and nonnegativity. Binarity
/// holds by construction of [`SetupPlan`]. Returns every violation found.
pub fn validate_plan(
    instance: &Instance,
    setup: &SetupPlan,
    plan: &ProductionPlan,
) -> Result<Vec<Violation>> {
    instance.require_len("setup", setup.len())?;
    instance.require_len("production", plan.x.len())?;
    instance.require_len("inventory", plan.s.len())?;

    let mut out = Vec::new();
    let mut prev = 0;
    for t in 0..instance.horizon() {
        let (x, s) = (plan.x[t], plan.s[t]);
        let lhs = prev + x - instance.demand[t];
        if lhs != s {
            out.push(Violation::FlowBalance { t, lhs, rhs: s });
        }
        let limit = if setup.get(t) { instance.capacity[t] } else { 0 };
        if x > limit {
            out.push(Violation::Capacity {
                t,
                produced: x,
                limit,
            });
        }
        if x < 0 {
            out.push(Violation::NegativeProduction { t, value: x });
        }
        if s < 0 {
            out.push(Violation::NegativeInventory { t, value: s });
        }
        prev = s;
    }
    Ok(out)
}

/// Prefix-capacity test: opened capacity through every period covers the
/// cumulative demand through that period.
pub fn setup_feasible(instance: &Instance, setup: &SetupPlan) -> Result<bool> {
    instance.require_len("setup", setup.len())?;
    let mut slack = 0i64;
    for t in 0..instance.horizon() {
        if setup.get(t) {
            slack += instance.capacity[t];
        }
        slack -= instance.demand[t];
        if slack < 0 {
            return Ok(false);
        }
    }
    Ok(true)
}
