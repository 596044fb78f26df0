//! Finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{init_parameters, loss, loss_and_grads, Example, LossOptions, ModelConfig, Parameters};
use crate::encoding::{BOS, ONE, PAD, ZERO};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const MIN_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub samples: usize,
}

/// A random two-example batch covering a `PAD` target.
pub fn random_batch(config: &ModelConfig, rng: &mut impl Rng) -> Vec<Example> {
    (0..2)
        .map(|k| {
            let t = rng.random_range(2..=config.max_target_len);
            let s = rng.random_range(1..=config.max_source_len);
            let source = (0..s).map(|_| rng.random_range(0..config.source_vocab as u32)).collect();
            let mut decoder_input = vec![BOS];
            decoder_input.extend((1..t).map(|_| rng.random_range(ZERO..=ONE)));
            let mut target: Vec<u32> = (0..t).map(|_| rng.random_range(ZERO..=ONE)).collect();
            if k == 1 {
                target[t - 1] = PAD;
            }
            Example {
                source,
                decoder_input,
                target,
            }
        })
        .collect()
}

/// Parameters from `config` with every tensor (gains and biases included)
/// jittered so no gradient is structurally trivial.
pub fn jittered_parameters(config: &ModelConfig, rng: &mut impl Rng) -> Result<Parameters<f64>> {
    let mut params = init_parameters::<f64>(config)?;
    for (_, t) in params.named_mut() {
        for x in t.data.iter_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
    Ok(params)
}

/// Compares analytic gradients with central differences in `f64` on
/// [`MIN_SAMPLES`] parameters drawn uniformly over tensors. Embedding
/// samples are restricted to rows the batch actually uses.
pub fn gradient_check(config: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    let config = ModelConfig {
        dropout: 0.0,
        seed,
        ..config.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = jittered_parameters(&config, &mut rng)?;
    let batch = random_batch(&config, &mut rng);
    let (_, grads) = loss_and_grads(&params, &config, &batch, &LossOptions::default())?;

    let source_rows: Vec<usize> = batch.iter().flat_map(|e| e.source.iter().map(|&t| t as usize)).collect();
    let target_rows: Vec<usize> = batch
        .iter()
        .flat_map(|e| e.decoder_input.iter().map(|&t| t as usize))
        .collect();
    let names: Vec<String> = grads.named().into_iter().map(|(n, _)| n).collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        samples: 0,
    };
    while report.samples < MIN_SAMPLES {
        let k = rng.random_range(0..names.len());
        let name = &names[k];
        let (_, g) = &grads.named()[k];
        let index = match name.as_str() {
            "source_embedding" | "target_embedding" => {
                let rows = if name == "source_embedding" { &source_rows } else { &target_rows };
                let row = rows[rng.random_range(0..rows.len())];
                row * g.cols() + rng.random_range(0..g.cols())
            }
            _ => rng.random_range(0..g.len()),
        };
        let analytic = g.data[index];

        let original = params.named()[k].1.data[index];
        let mut eval_at = |v: f64| -> Result<f64> {
            params.named_mut()[k].1.data[index] = v;
            loss(&params, &config, &batch)
        };
        let plus = eval_at(original + FD_STEP)?;
        let minus = eval_at(original - FD_STEP)?;
        eval_at(original)?;
        let numeric = (plus - minus) / (2.0 * FD_STEP);

        let scale = analytic.abs().max(numeric.abs());
        let err = if scale < 1e-9 { 0.0 } else { (analytic - numeric).abs() / scale };
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_tensor = format!("{name}[{index}]");
        }
        report.samples += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{decode_logits, encode, forward};
    use crate::nn::tensor::Tensor;

    fn setup(seed: u64) -> (ModelConfig, Parameters<f64>, Vec<Example>) {
        let config = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = jittered_parameters(&config, &mut rng).unwrap();
        let batch = random_batch(&config, &mut rng);
        (config, params, batch)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let report = gradient_check(&ModelConfig::tiny(), 3).unwrap();
        assert!(report.samples >= 200);
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn unused_embedding_rows_have_zero_gradient() {
        let (config, params, batch) = setup(1);
        let (_, grads) = loss_and_grads(&params, &config, &batch, &LossOptions::default()).unwrap();
        let used: std::collections::HashSet<u32> = batch.iter().flat_map(|e| e.source.clone()).collect();
        for row in 0..config.source_vocab {
            let g = grads.source_embedding.row(row);
            if used.contains(&(row as u32)) {
                assert!(g.iter().any(|&v| v != 0.0));
            } else {
                assert!(g.iter().all(|&v| v == 0.0), "row {row}");
            }
        }
        assert!(grads.target_embedding.row(PAD as usize).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_scale_is_linear() {
        let (config, params, batch) = setup(2);
        let one = LossOptions::default();
        let two = LossOptions { loss_scale: 2.0, ..one };
        let (s1, g1) = loss_and_grads(&params, &config, &batch, &one).unwrap();
        let (s2, g2) = loss_and_grads(&params, &config, &batch, &two).unwrap();
        assert_eq!(s2.loss, 2.0 * s1.loss);
        for ((name, a), (_, b)) in g1.named().into_iter().zip(g2.named()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((2.0 * x - y).abs() <= 1e-15 * y.abs().max(1.0), "{name}");
            }
        }
    }

    #[test]
    fn duplicated_batch_has_same_loss() {
        let (config, params, batch) = setup(4);
        let mut doubled = batch.clone();
        doubled.extend(batch.clone());
        let opts = LossOptions::default();
        let (a, _) = loss_and_grads(&params, &config, &batch, &opts).unwrap();
        let (b, _) = loss_and_grads(&params, &config, &doubled, &opts).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
    }

    #[test]
    fn decoder_is_causal() {
        let (config, params, _) = setup(5);
        let source = [10, 20, 30, 40, 50];
        let base = [BOS, ONE, ZERO, ONE, ZERO, ONE];
        let reference = forward(&params, &config, &source, &base).unwrap().logits;
        for k in 1..base.len() {
            let mut changed = base;
            changed[k] = if changed[k] == ONE { ZERO } else { ONE };
            let logits = forward(&params, &config, &source, &changed).unwrap().logits;
            for i in 0..k {
                assert_eq!(logits.row(i), reference.row(i), "position {i} saw token {k}");
            }
            assert_ne!(logits.row(k), reference.row(k));
        }
    }

    #[test]
    fn without_positions_source_order_is_irrelevant() {
        let (config, mut params, _) = setup(6);
        params.source_positions = Tensor::zeros(&params.source_positions.shape);
        let source = [7u32, 3000, 6001, 9999, 42, 11];
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permuted: Vec<u32> = perm.iter().map(|&i| source[i]).collect();

        let a = encode(&params, &config, &source).unwrap();
        let b = encode(&params, &config, &permuted).unwrap();
        for (row, &i) in perm.iter().enumerate() {
            for (x, y) in b.row(row).iter().zip(a.row(i)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let dec = [BOS, ONE, ZERO];
        let la = decode_logits(&params, &config, &a, &dec).unwrap();
        let lb = decode_logits(&params, &config, &b, &dec).unwrap();
        for (x, y) in la.data.iter().zip(&lb.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_normalized_under_fuzz() {
        let config = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = init_parameters::<f32>(&config).unwrap();
        for _ in 0..1000 {
            let ex = &random_batch(&config, &mut rng)[0];
            let fwd = forward(&params, &config, &ex.source, &ex.decoder_input).unwrap();
            assert!(fwd.logits.data.iter().all(|v| v.is_finite()));
            let maps = fwd.attention;
            for m in maps.encoder.iter().chain(&maps.decoder_self).chain(&maps.cross).flatten() {
                for r in 0..m.rows {
                    let s: f64 = m.row(r).iter().map(|&v| f64::from(v)).sum();
                    assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
                }
            }
        }
    }
}
