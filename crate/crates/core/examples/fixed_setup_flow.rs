//! Fix-and-solve: fixed setups, the residual flow solution, and the bound.

use clsp::flow::{relaxation_bound, solve_fixed_setup, Fixing};
use clsp::instance::{setup_feasible, validate_plan, Instance, SetupPlan};

fn main() -> clsp::Result<()> {
    let inst = Instance::new(vec![4, 4], vec![2, 2], vec![10, 10], vec![1, 1], vec![8, 8])?;
    let bound = relaxation_bound(&inst, &Fixing::all_free(2))?;
    println!("relaxation bound: {bound:?}");

    for mask in 0..4 {
        let y = SetupPlan::from_mask(2, mask);
        match solve_fixed_setup(&inst, &y)? {
            Some(sol) => {
                let violations = validate_plan(&inst, &y, &sol.plan)?;
                println!(
                    "y={y}  x={:?} s={:?}  cost={}  violations={}",
                    sol.plan.x,
                    sol.plan.s,
                    sol.objective,
                    violations.len()
                );
            }
            None => println!("y={y}  infeasible (prefix test: {})", setup_feasible(&inst, &y)?),
        }
    }
    Ok(())
}
