//! Seeded benchmark instance generator.
//!
//! Randomness comes from `ChaCha8Rng` seeded with the 64-bit config seed.
//! Columns are drawn in a fixed order (demand, unit cost, setup cost,
//! capacity), each over all periods, so a seed fully determines an instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{GenInfo, Instance};

pub const DEMAND_RANGE: (i64, i64) = (1, 600);
pub const UNIT_COST_RANGE: (i64, i64) = (1, 5);
pub const HOLDING_COST: i64 = 1;
/// Capacity ratios multiply this reference demand to give the capacity scale.
pub const CAPACITY_SCALE: i64 = 300;

pub const CAPACITY_RATIOS: [u32; 3] = [3, 5, 8];
pub const SETUP_RATIOS: [u32; 2] = [1000, 10000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Capacity-to-demand ratio `c`.
    pub c: u32,
    /// Setup-to-holding cost ratio `f`.
    pub f: u32,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(horizon: usize, c: u32, f: u32, seed: u64) -> Self {
        GeneratorConfig { horizon, c, f, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !CAPACITY_RATIOS.contains(&self.c) {
            return Err(Error::Config(format!(
                "capacity ratio {} not in {CAPACITY_RATIOS:?}",
                self.c
            )));
        }
        if !SETUP_RATIOS.contains(&self.f) {
            return Err(Error::Config(format!(
                "setup ratio {} not in {SETUP_RATIOS:?}",
                self.f
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        GeneratorConfig { seed, ..self }
    }

    /// Inclusive setup-cost bounds `[round(0.9 f), round(1.1 f)]`.
    pub fn setup_cost_range(&self) -> (i64, i64) {
        let f = i64::from(self.f);
        (round_tenths(9 * f), round_tenths(11 * f))
    }

    /// Inclusive capacity bounds `[round(0.7 k), round(1.1 k)]` with `k = 300 c`.
    pub fn capacity_range(&self) -> (i64, i64) {
        let k = CAPACITY_SCALE * i64::from(self.c);
        (round_tenths(7 * k), round_tenths(11 * k))
    }
}

/// Rounds `v / 10` to the nearest integer, halves up (v >= 0).
fn round_tenths(v: i64) -> i64 {
    (v + 5) / 10
}

pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance> {
    config.validate()?;
    let n = config.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut column = |(lo, hi): (i64, i64)| -> Vec<i64> {
        (0..n).map(|_| rng.random_range(lo..=hi)).collect()
    };
    let demand = column(DEMAND_RANGE);
    let unit_cost = column(UNIT_COST_RANGE);
    let setup_cost = column(config.setup_cost_range());
    let capacity = column(config.capacity_range());

    Ok(Instance {
        demand,
        unit_cost,
        setup_cost,
        holding_cost: vec![HOLDING_COST; n],
        capacity,
        gen: Some(GenInfo {
            c: config.c,
            f: config.f,
            seed: config.seed,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_range(v: &[i64], (lo, hi): (i64, i64)) -> bool {
        v.iter().all(|&x| (lo..=hi).contains(&x))
    }

    #[test]
    fn documented_ranges_t90() {
        let cfg = GeneratorConfig::new(90, 3, 1000, 7);
        let inst = generate_instance(&cfg).unwrap();
        assert_eq!(inst.horizon(), 90);
        assert!(in_range(&inst.demand, (1, 600)));
        assert!(in_range(&inst.unit_cost, (1, 5)));
        assert!(in_range(&inst.setup_cost, (900, 1100)));
        assert!(in_range(&inst.capacity, (630, 990)));
        assert!(inst.holding_cost.iter().all(|&h| h == 1));
    }

    #[test]
    fn single_period_bounds() {
        let cfg = GeneratorConfig::new(1, 5, 10000, 0);
        assert_eq!(cfg.setup_cost_range(), (9000, 11000));
        assert_eq!(cfg.capacity_range(), (1050, 1650));
        let inst = generate_instance(&cfg).unwrap();
        assert_eq!(inst.horizon(), 1);
        assert!(in_range(&inst.setup_cost, (9000, 11000)));
        assert!(in_range(&inst.capacity, (1050, 1650)));
    }

    #[test]
    fn capacity_ranges_per_ratio() {
        let r = |c| GeneratorConfig::new(1, c, 1000, 0).capacity_range();
        assert_eq!(r(3), (630, 990));
        assert_eq!(r(5), (1050, 1650));
        assert_eq!(r(8), (1680, 2640));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = GeneratorConfig::new(30, 8, 10000, 12345);
        assert_eq!(
            generate_instance(&cfg).unwrap(),
            generate_instance(&cfg).unwrap()
        );
        assert_ne!(
            generate_instance(&cfg).unwrap(),
            generate_instance(&cfg.with_seed(12346)).unwrap()
        );
    }

    #[test]
    fn rejects_invalid_ratios() {
        assert!(matches!(
            generate_instance(&GeneratorConfig::new(10, 4, 1000, 0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_instance(&GeneratorConfig::new(10, 3, 500, 0)),
            Err(Error::Config(_))
        ));
        assert!(generate_instance(&GeneratorConfig::new(0, 3, 1000, 0)).is_err());
    }

    #[test]
    fn ranges_hold_on_many_samples() {
        for &c in &CAPACITY_RATIOS {
            for &f in &SETUP_RATIOS {
                let base = GeneratorConfig::new(10, c, f, 0);
                for seed in 0..10_000u64 {
                    let inst = generate_instance(&base.with_seed(seed)).unwrap();
                    assert!(in_range(&inst.demand, DEMAND_RANGE));
                    assert!(in_range(&inst.unit_cost, UNIT_COST_RANGE));
                    assert!(in_range(&inst.setup_cost, base.setup_cost_range()));
                    assert!(in_range(&inst.capacity, base.capacity_range()));
                    assert!(inst.holding_cost.iter().all(|&h| h == HOLDING_COST));
                }
            }
        }
    }
}
