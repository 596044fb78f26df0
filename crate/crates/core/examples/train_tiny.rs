//! Trains a small model for a few hundred steps and saves a checkpoint.
//!
//! `cargo run --release --example train_tiny -- [steps] [out.ckpt]`

use clsp::encoding::fit_normalizer;
use clsp::exact::ExactSolver;
use clsp::generator::GeneratorConfig;
use clsp::harness::{build_dataset, BuildOptions, Split};
use clsp::nn::train::token_counts;
use clsp::nn::{make_example, train, ModelConfig, TrainConfig};

fn main() -> clsp::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(300, |s| s.parse().expect("steps"));
    let out = args.next().unwrap_or_else(|| "tiny.ckpt".into());

    let options = BuildOptions {
        count: 2000,
        solver: ExactSolver::InventoryDp,
        timing: false,
    };
    let records = build_dataset(&GeneratorConfig::new(10, 3, 10000, 0), &options)?;
    let part = |s: Split| records.iter().filter(move |r| r.split == s);
    let tokenizer = fit_normalizer(part(Split::Train).map(|r| &r.instance))?;
    let examples = |s: Split| -> Vec<_> { part(s).map(|r| make_example(&r.instance, &r.y, &tokenizer)).collect() };
    let (train_set, valid_set) = (examples(Split::Train), examples(Split::Valid));

    let model = ModelConfig {
        d_model: 32,
        d_ff: 64,
        max_source_len: 50,
        max_target_len: 10,
        ..ModelConfig::default()
    };
    let config = TrainConfig {
        steps,
        warmup_steps: steps / 10,
        eval_every: (steps / 5).max(1),
        ..TrainConfig::default()
    };
    let outcome = train(&model, &config, &tokenizer, &train_set, &valid_set, None)?;
    for log in outcome.history.iter().filter(|h| h.valid_accuracy.is_some()) {
        println!(
            "step {:>5}  lr {:.2e}  loss {:.4}  valid acc {:.3}",
            log.step,
            log.learning_rate,
            log.loss,
            log.valid_accuracy.unwrap_or_default()
        );
    }
    let counts = token_counts(&outcome.checkpoint.params, &model, &valid_set)?;
    println!(
        "valid accuracy {:.3} (constant baseline {:.3})",
        counts.accuracy(),
        counts.constant_baseline()
    );
    outcome.checkpoint.save(&out)?;
    println!("saved {out}");
    Ok(())
}
