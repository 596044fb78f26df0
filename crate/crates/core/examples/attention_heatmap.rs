//! Prints an ASCII heatmap of cross attention for a freshly trained model.

use clsp::encoding::fit_normalizer;
use clsp::exact::dp_solve;
use clsp::generator::{generate_instance, GeneratorConfig};
use clsp::harness::{export_attention, AttentionKind};
use clsp::nn::{make_example, train, ModelConfig, TrainConfig};

fn main() -> clsp::Result<()> {
    let instances = (0..256)
        .map(|s| generate_instance(&GeneratorConfig::new(6, 5, 10000, s)))
        .collect::<clsp::Result<Vec<_>>>()?;
    let tokenizer = fit_normalizer(&instances)?;
    let examples = instances
        .iter()
        .map(|i| Ok(make_example(i, &dp_solve(i)?.setup, &tokenizer)))
        .collect::<clsp::Result<Vec<_>>>()?;
    let model = ModelConfig {
        d_model: 16,
        d_ff: 32,
        encoder_layers: 1,
        decoder_layers: 1,
        max_source_len: 30,
        max_target_len: 6,
        ..ModelConfig::default()
    };
    let config = TrainConfig {
        steps: 150,
        warmup_steps: 15,
        ..TrainConfig::default()
    };
    let ckpt = train(&model, &config, &tokenizer, &examples, &[], None)?.checkpoint;

    let mut csv = Vec::new();
    export_attention(&ckpt, &instances[0], AttentionKind::Cross, &mut csv)?;
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    let mut reader = csv::Reader::from_reader(csv.as_slice());
    println!("layer 0 head 0: rows are target periods, columns source tokens");
    for record in reader.records() {
        let record = record.expect("csv row");
        if &record[0] != "0" || &record[1] != "0" {
            continue;
        }
        let weights: Vec<f64> = record.iter().skip(3).map(|v| v.parse().expect("weight")).collect();
        let max = weights.iter().cloned().fold(f64::MIN, f64::max);
        let line: String = weights
            .iter()
            .map(|w| shades[((w / max) * 9.0).round() as usize])
            .collect();
        println!("y{:<2} |{line}|", &record[2]);
    }
    Ok(())
}
