//! Fits the normalizer on a sample and shows source and target tokens.

use clsp::encoding::{decode_target, encode_source, encode_target, fit_normalizer, FEATURE_NAMES, NUM_FEATURES};
use clsp::exact::dp_solve;
use clsp::generator::{generate_instance, GeneratorConfig};

fn main() -> clsp::Result<()> {
    let sample = (0..200)
        .map(|s| generate_instance(&GeneratorConfig::new(5, 5, 1000, s)))
        .collect::<clsp::Result<Vec<_>>>()?;
    let tokenizer = fit_normalizer(&sample)?;
    println!("vocabulary: {} source tokens", tokenizer.vocab_size());
    for (k, name) in FEATURE_NAMES.iter().enumerate() {
        println!("  {name}: mean {:.2} std {:.2}", tokenizer.mean[k], tokenizer.std[k]);
    }

    let inst = &sample[0];
    let source = encode_source(inst, &tokenizer);
    for (t, chunk) in source.0.chunks(NUM_FEATURES).enumerate() {
        println!("period {}: {chunk:?}", t + 1);
    }

    let y = dp_solve(inst)?.setup;
    let target = encode_target(&y);
    println!("y={y} decoder input {:?} output {:?}", target.decoder_input(), target.decoder_output());
    assert_eq!(decode_target(&target.0)?, y);
    Ok(())
}
