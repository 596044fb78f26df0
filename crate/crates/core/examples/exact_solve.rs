//! Solves one instance with each exact method and compares effort.

use std::time::Instant;

use clsp::exact::{bnb_solve, brute_force_solve, dp_solve, BnbOptions};
use clsp::generator::{generate_instance, GeneratorConfig};

fn main() -> clsp::Result<()> {
    let inst = generate_instance(&GeneratorConfig::new(16, 3, 10000, 1))?;

    let t = Instant::now();
    let brute = brute_force_solve(&inst)?;
    println!("brute force  {:?}  y={}  {:?}", brute.objective, brute.setup, t.elapsed());

    for pruning in [true, false] {
        let r = bnb_solve(&inst, &BnbOptions { pruning, ..BnbOptions::default() })?;
        println!(
            "bnb pruning={pruning:<5} {:?}  y={}  nodes={}  {:.4}s",
            r.solution.objective, r.solution.setup, r.nodes, r.solution.solve_time
        );
    }

    let dp = dp_solve(&inst)?;
    println!("dp           {:?}  y={}  {:.4}s", dp.objective, dp.setup, dp.solve_time);
    Ok(())
}
