//! Parameter counts of the built-in model configurations.

use clsp::nn::ModelConfig;

fn main() -> clsp::Result<()> {
    for (name, config) in [
        ("tiny", ModelConfig::tiny()),
        ("desk", ModelConfig::default()),
        ("full", ModelConfig::full_scale()),
    ] {
        config.validate()?;
        println!(
            "{name:<5} d_model={:<4} d_ff={:<5} layers={}+{} heads={}  parameters={}",
            config.d_model,
            config.d_ff,
            config.encoder_layers,
            config.decoder_layers,
            config.heads,
            config.parameter_count()
        );
    }
    Ok(())
}
