//! Runs the predict, repair and fallback stages on hand-made predictions.

use clsp::exact::dp_solve;
use clsp::generator::{generate_instance, GeneratorConfig};
use clsp::instance::{Instance, SetupPlan};
use clsp::pipeline::{repair, solve_ml, RepairOptions};

fn main() -> clsp::Result<()> {
    let inst = generate_instance(&GeneratorConfig::new(12, 3, 10000, 9))?;
    let opt = dp_solve(&inst)?;
    println!("optimum y={} cost={:?}", opt.setup, opt.objective);

    let horizon = inst.horizon();
    let predictions = [
        ("label", opt.setup.clone()),
        ("last flipped", opt.setup.with_last_flipped()),
        ("all closed", SetupPlan::all(horizon, false)),
        ("all open", SetupPlan::all(horizon, true)),
    ];
    for (name, y) in &predictions {
        let out = repair(&inst, y, &RepairOptions::default())?;
        println!(
            "{name:<13} y={y}  direct={} flipped={:?}  -> {} {:?} via {}",
            out.direct_feasible, out.flipped_feasible, out.solution.setup, out.solution.objective, out.solution.provenance
        );
    }

    let no_fallback = RepairOptions {
        fallback_exact: false,
        ..RepairOptions::default()
    };
    let closed = |i: &Instance| Ok(SetupPlan::all(i.horizon(), false));
    let out = solve_ml(&inst, &closed, &no_fallback)?;
    println!("closed prediction without fallback: {:?}", out.solution.status);
    Ok(())
}
