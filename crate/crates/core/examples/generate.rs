//! Draws one instance per (c, f) configuration and prints its columns.

use clsp::generator::{generate_instance, GeneratorConfig, CAPACITY_RATIOS, SETUP_RATIOS};

fn main() -> clsp::Result<()> {
    for c in CAPACITY_RATIOS {
        for f in SETUP_RATIOS {
            let config = GeneratorConfig::new(6, c, f, 42);
            let inst = generate_instance(&config)?;
            println!("c={c} f={f}");
            for (name, column) in inst.columns() {
                println!("  {name:>3}: {column:?}");
            }
        }
    }
    Ok(())
}
