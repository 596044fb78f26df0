//! Teacher-forced minibatch training and greedy decoding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::ModelCheckpoint;
use super::model::{
    decode_logits, encode, forward, init_parameters, loss_and_grads, mix_seed, Example, LossOptions,
    ModelConfig, Parameters,
};
use super::optim::{adam_step, AdamState, TrainConfig};
use super::tensor::Scalar;
use crate::encoding::{decode_target, encode_source, encode_target, TokenizerConfig, BOS, ONE, PAD, ZERO};
use crate::error::{contract, Error, Result};
use crate::instance::{Instance, SetupPlan};

/// Teacher-forcing pair for an instance and its label.
pub fn make_example(instance: &Instance, setup: &SetupPlan, tokenizer: &TokenizerConfig) -> Example {
    let target = encode_target(setup);
    Example {
        source: encode_source(instance, tokenizer).0,
        decoder_input: target.decoder_input().to_vec(),
        target: target.decoder_output().to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub learning_rate: f64,
    pub loss: f64,
    pub accuracy: f64,
    /// Teacher-forced accuracy on the validation set, when measured.
    pub valid_accuracy: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Final state, or the last good state when training diverged.
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<StepLog>,
    pub diverged: Option<Error>,
}

/// Deterministic sequence of minibatches: each epoch is a fresh permutation
/// seeded by `(data_seed, epoch)`.
struct Batcher {
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    seed: u64,
    shuffle: bool,
    batch_size: usize,
}

impl Batcher {
    fn new(len: usize, config: &TrainConfig) -> Self {
        let mut b = Batcher {
            order: (0..len).collect(),
            cursor: 0,
            epoch: 0,
            seed: config.data_seed,
            shuffle: config.shuffle,
            batch_size: config.batch_size.min(len),
        };
        b.reshuffle();
        b
    }

    fn reshuffle(&mut self) {
        if self.shuffle {
            self.order.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, self.epoch));
            self.order.shuffle(&mut rng);
        }
    }

    fn next(&mut self) -> Vec<usize> {
        if self.cursor + self.batch_size > self.order.len() {
            self.epoch += 1;
            self.cursor = 0;
            self.reshuffle();
        }
        let batch = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        batch
    }
}

/// Trains from `config.seed` initialization, or continues from `resume`.
pub fn train(
    model: &ModelConfig,
    config: &TrainConfig,
    tokenizer: &TokenizerConfig,
    train_set: &[Example],
    valid_set: &[Example],
    resume: Option<ModelCheckpoint>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(contract("empty training set"));
    }
    let (mut params, mut state) = match resume {
        Some(ckpt) => {
            if &ckpt.model != model {
                return Err(Error::Config("checkpoint model config differs".into()));
            }
            (ckpt.params, ckpt.optimizer)
        }
        None => (init_parameters::<f32>(model)?, AdamState::new(model)),
    };
    let mut batcher = Batcher::new(train_set.len(), config);
    let mut history = Vec::new();
    let mut diverged = None;

    while state.step < config.steps {
        let step = state.step + 1;
        let batch: Vec<Example> = batcher.next().into_iter().map(|i| train_set[i].clone()).collect();
        let options = LossOptions {
            label_smoothing: config.label_smoothing,
            dropout_seed: (model.dropout > 0.0).then(|| mix_seed(config.data_seed ^ model.seed, step)),
            loss_scale: 1.0,
        };
        let (stats, grads) = loss_and_grads(&params, model, &batch, &options)?;
        if !stats.loss.is_finite() {
            diverged = Some(Error::Diverged { step, loss: stats.loss });
            break;
        }
        if let Err(e) = adam_step(&mut params, &grads, &mut state, config) {
            diverged = Some(e);
            break;
        }
        let valid_accuracy = (config.eval_every > 0 && step % config.eval_every == 0 && !valid_set.is_empty())
            .then(|| token_accuracy(&params, model, valid_set))
            .transpose()?;
        let entry = StepLog {
            step,
            learning_rate: config.lr_at(step),
            loss: stats.loss,
            accuracy: stats.correct as f64 / stats.tokens as f64,
            valid_accuracy,
        };
        match entry.valid_accuracy {
            Some(acc) => log::info!("step {step} loss {:.4} valid acc {acc:.4}", entry.loss),
            None => log::debug!("step {step} loss {:.4}", entry.loss),
        }
        history.push(entry);
    }
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint {
            model: model.clone(),
            tokenizer: tokenizer.clone(),
            params,
            optimizer: state,
        },
        history,
        diverged,
    })
}

fn pick(zero: f64, one: f64) -> u32 {
    if one > zero {
        ONE
    } else {
        ZERO
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenCounts {
    pub correct: usize,
    pub total: usize,
    /// Non-PAD targets equal to `ONE`.
    pub ones: usize,
}

impl TokenCounts {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total.max(1) as f64
    }

    /// Accuracy of always predicting the more frequent class.
    pub fn constant_baseline(&self) -> f64 {
        self.ones.max(self.total - self.ones) as f64 / self.total.max(1) as f64
    }
}

/// Teacher-forced per-token counts in evaluation mode.
pub fn token_counts<F: Scalar>(
    params: &Parameters<F>,
    model: &ModelConfig,
    examples: &[Example],
) -> Result<TokenCounts> {
    let per: Vec<TokenCounts> = examples
        .par_iter()
        .map(|ex| {
            let fwd = forward(params, model, &ex.source, &ex.decoder_input)?;
            let mut c = TokenCounts::default();
            for (i, &target) in ex.target.iter().enumerate() {
                if target == PAD {
                    continue;
                }
                let row = fwd.logits.row(i);
                let guess = pick(row[ZERO as usize].f64(), row[ONE as usize].f64());
                c.correct += usize::from(guess == target);
                c.total += 1;
                c.ones += usize::from(target == ONE);
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(TokenCounts::default(), |a, b| TokenCounts {
        correct: a.correct + b.correct,
        total: a.total + b.total,
        ones: a.ones + b.ones,
    }))
}

pub fn token_accuracy<F: Scalar>(params: &Parameters<F>, model: &ModelConfig, examples: &[Example]) -> Result<f64> {
    Ok(token_counts(params, model, examples)?.accuracy())
}

/// Autoregressive decoding of exactly `horizon` labels. The argmax is taken
/// over `ZERO`/`ONE` only, ties going to `ZERO`.
pub fn greedy_decode<F: Scalar>(
    params: &Parameters<F>,
    model: &ModelConfig,
    source: &[u32],
    horizon: usize,
) -> Result<SetupPlan> {
    if horizon == 0 || horizon > model.max_target_len {
        return Err(contract(format!(
            "horizon {horizon} outside 1..={}",
            model.max_target_len
        )));
    }
    let memory = encode(params, model, source)?;
    let mut tokens = vec![BOS];
    for _ in 0..horizon {
        let logits = decode_logits(params, model, &memory, &tokens)?;
        let row = logits.row(tokens.len() - 1);
        tokens.push(pick(row[ZERO as usize].f64(), row[ONE as usize].f64()));
    }
    decode_target(&tokens)
}
