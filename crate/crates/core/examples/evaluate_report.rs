//! Builds a small labelled set, evaluates label stubs and prints the table.

use clsp::exact::ExactSolver;
use clsp::generator::{GeneratorConfig, CAPACITY_RATIOS, SETUP_RATIOS};
use clsp::harness::eval::render_table;
use clsp::harness::{build_dataset, evaluate_model, BuildOptions, EvalOptions, LabelStub, StubKind};

fn main() -> clsp::Result<()> {
    let horizon = std::env::args().nth(1).map_or(30, |s| s.parse().expect("horizon"));
    let mut records = Vec::new();
    for c in CAPACITY_RATIOS {
        for f in SETUP_RATIOS {
            let options = BuildOptions {
                count: 20,
                solver: ExactSolver::InventoryDp,
                timing: true,
            };
            records.extend(build_dataset(&GeneratorConfig::new(horizon, c, f, 1), &options)?);
        }
    }
    for kind in [StubKind::Oracle, StubKind::FlipLast, StubKind::AllZeros] {
        let stub = LabelStub::new(kind, &records);
        let (metrics, _) = evaluate_model(&stub, &records, &EvalOptions::default());
        println!("{kind:?}\n{}", render_table(&metrics));
    }
    Ok(())
}
