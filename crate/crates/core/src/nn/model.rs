//! Encoder-decoder transformer with pre-layer-norm residual blocks and
//! sinusoidal positional encodings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{
    join, module, Attention, AttentionCache, FeedForward, FeedForwardCache, LayerNorm,
    LayerNormCache, Linear, Module,
};
use super::tensor::{axpy, Mat, Scalar, Tensor};
use crate::encoding::{BOS, ONE, PAD, TARGET_VOCAB, ZERO};
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub source_vocab: usize,
    pub target_vocab: usize,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale model: 2+2 layers, 2 heads, width 64.
    fn default() -> Self {
        ModelConfig {
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 2,
            d_model: 64,
            d_ff: 256,
            source_vocab: 12000,
            target_vocab: TARGET_VOCAB,
            max_source_len: 5 * 90,
            max_target_len: 90,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Width-200, two-head configuration of roughly 6.7M parameters.
    pub fn full_scale() -> Self {
        ModelConfig {
            d_model: 200,
            d_ff: 2048,
            ..ModelConfig::default()
        }
    }

    /// Single-layer width-8 model for gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            source_vocab: 12000,
            target_vocab: TARGET_VOCAB,
            max_source_len: 40,
            max_target_len: 8,
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_model == 0 || self.heads == 0 || self.d_ff == 0 {
            return fail("model dimensions must be positive");
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.target_vocab != TARGET_VOCAB {
            return fail("target vocabulary must have 4 tokens");
        }
        if self.source_vocab == 0 || self.max_source_len == 0 || self.max_target_len == 0 {
            return fail("vocabulary and lengths must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    /// Trainable parameter count from the tensor shapes.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let ln = 2 * d;
        let attn = 4 * (d * d + d);
        let ffn = d * self.d_ff + self.d_ff + self.d_ff * d + d;
        let enc = 2 * ln + attn + ffn;
        let dec = 3 * ln + 2 * attn + ffn;
        (self.source_vocab + self.target_vocab) * d
            + self.encoder_layers * enc
            + self.decoder_layers * dec
            + 2 * ln
            + d * self.target_vocab
            + self.target_vocab
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<F> {
    pub ln1: LayerNorm<F>,
    pub attn: Attention<F>,
    pub ln2: LayerNorm<F>,
    pub ffn: FeedForward<F>,
}
module!(EncoderLayer { ln1, attn, ln2, ffn });

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer<F> {
    pub ln1: LayerNorm<F>,
    pub self_attn: Attention<F>,
    pub ln2: LayerNorm<F>,
    pub cross_attn: Attention<F>,
    pub ln3: LayerNorm<F>,
    pub ffn: FeedForward<F>,
}
module!(DecoderLayer { ln1, self_attn, ln2, cross_attn, ln3, ffn });

/// All network weights. Positional encodings are stored alongside but are
/// not trainable and are not visited by [`Module`].
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<F> {
    pub source_embedding: Tensor<F>,
    pub target_embedding: Tensor<F>,
    pub encoder: Vec<EncoderLayer<F>>,
    pub encoder_norm: LayerNorm<F>,
    pub decoder: Vec<DecoderLayer<F>>,
    pub decoder_norm: LayerNorm<F>,
    pub output: Linear<F>,
    pub source_positions: Tensor<F>,
    pub target_positions: Tensor<F>,
}
module!(Parameters {
    source_embedding,
    target_embedding,
    encoder,
    encoder_norm,
    decoder,
    decoder_norm,
    output,
});

pub fn sinusoidal_positions<F: Scalar>(len: usize, dim: usize) -> Tensor<F> {
    let mut t = Tensor::zeros(&[len, dim]);
    for pos in 0..len {
        let row = t.row_mut(pos);
        for i in 0..dim {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            row[i] = F::of(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}

impl<F: Scalar> Parameters<F> {
    /// Every trainable tensor zero, layer-norm gains included.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let encoder = (0..config.encoder_layers)
            .map(|_| EncoderLayer {
                ln1: LayerNorm::zeros(d),
                attn: Attention::zeros(d),
                ln2: LayerNorm::zeros(d),
                ffn: FeedForward::zeros(d, config.d_ff),
            })
            .collect();
        let decoder = (0..config.decoder_layers)
            .map(|_| DecoderLayer {
                ln1: LayerNorm::zeros(d),
                self_attn: Attention::zeros(d),
                ln2: LayerNorm::zeros(d),
                cross_attn: Attention::zeros(d),
                ln3: LayerNorm::zeros(d),
                ffn: FeedForward::zeros(d, config.d_ff),
            })
            .collect();
        Parameters {
            source_embedding: Tensor::zeros(&[config.source_vocab, d]),
            target_embedding: Tensor::zeros(&[config.target_vocab, d]),
            encoder,
            encoder_norm: LayerNorm::zeros(d),
            decoder,
            decoder_norm: LayerNorm::zeros(d),
            output: Linear::zeros(d, config.target_vocab),
            source_positions: sinusoidal_positions(config.max_source_len, d),
            target_positions: sinusoidal_positions(config.max_target_len, d),
        }
    }

    /// Zeroed tensors of the same shapes (positional tables included).
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.named_mut() {
            t.fill(F::zero());
        }
        out
    }

    pub fn named(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Parameters<F>) {
        for ((_, a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            a.add_assign(b);
        }
    }

    pub fn cast<G: Scalar>(&self, config: &ModelConfig) -> Parameters<G> {
        let mut out = Parameters::<G>::zeros(config);
        for ((_, dst), (_, src)) in out.named_mut().into_iter().zip(self.named()) {
            *dst = src.cast();
        }
        out.source_positions = self.source_positions.cast();
        out.target_positions = self.target_positions.cast();
        out
    }
}

/// Deterministic initialization from `config.seed`: embeddings uniform with
/// variance `1/d`, projection weights Xavier-uniform, biases zero,
/// layer-norm gains one. Values are drawn in `f64` and then converted, so
/// `f32` and `f64` models from the same seed agree up to rounding.
pub fn init_parameters<F: Scalar>(config: &ModelConfig) -> Result<Parameters<F>> {
    config.validate()?;
    let mut params = Parameters::<F>::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let embed_bound = (3.0 / config.d_model as f64).sqrt();
    for (name, t) in params.named_mut() {
        if name.ends_with("embedding") {
            for x in t.data.iter_mut() {
                *x = F::of(rng.random_range(-embed_bound..embed_bound));
            }
        } else if name.ends_with(".w") {
            let bound = (6.0 / (t.shape[0] + t.shape[1]) as f64).sqrt();
            for x in t.data.iter_mut() {
                *x = F::of(rng.random_range(-bound..bound));
            }
        } else if name.ends_with("gain") {
            t.fill(F::one());
        }
    }
    Ok(params)
}

/// Softmax attention weights of one forward pass, `[layer][head]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps<F> {
    pub encoder: Vec<Vec<Mat<F>>>,
    pub decoder_self: Vec<Vec<Mat<F>>>,
    pub cross: Vec<Vec<Mat<F>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward<F> {
    /// `[target positions × 4]`.
    pub logits: Mat<F>,
    pub encoder_output: Mat<F>,
    pub attention: AttentionMaps<F>,
}

struct Dropout<'a> {
    rate: f64,
    rng: &'a mut ChaCha8Rng,
}

/// Inverted dropout; returns the per-element scale applied.
fn dropout<F: Scalar>(x: &mut Mat<F>, drop: &mut Option<Dropout<'_>>) -> Option<Vec<F>> {
    let d = drop.as_mut()?;
    if d.rate == 0.0 {
        return None;
    }
    let keep = F::of(1.0 / (1.0 - d.rate));
    let mask: Vec<F> = (0..x.data.len())
        .map(|_| if d.rng.random::<f64>() < d.rate { F::zero() } else { keep })
        .collect();
    for (v, &m) in x.data.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

fn undo_dropout<F: Scalar>(grad: &Mat<F>, mask: &Option<Vec<F>>) -> Mat<F> {
    match mask {
        None => grad.clone(),
        Some(m) => Mat {
            rows: grad.rows,
            cols: grad.cols,
            data: grad.data.iter().zip(m).map(|(&g, &k)| g * k).collect(),
        },
    }
}

struct EncoderCache<F> {
    ln1: LayerNormCache<F>,
    attn: AttentionCache<F>,
    drop1: Option<Vec<F>>,
    ln2: LayerNormCache<F>,
    ffn: FeedForwardCache<F>,
    drop2: Option<Vec<F>>,
}

struct DecoderCache<F> {
    ln1: LayerNormCache<F>,
    self_attn: AttentionCache<F>,
    drop1: Option<Vec<F>>,
    ln2: LayerNormCache<F>,
    cross: AttentionCache<F>,
    drop2: Option<Vec<F>>,
    ln3: LayerNormCache<F>,
    ffn: FeedForwardCache<F>,
    drop3: Option<Vec<F>>,
}

struct Trace<F> {
    source_drop: Option<Vec<F>>,
    target_drop: Option<Vec<F>>,
    encoder: Vec<EncoderCache<F>>,
    encoder_norm: LayerNormCache<F>,
    encoder_output: Mat<F>,
    decoder: Vec<DecoderCache<F>>,
    decoder_norm: LayerNormCache<F>,
    decoder_output: Mat<F>,
}

fn embed<F: Scalar>(table: &Tensor<F>, positions: &Tensor<F>, tokens: &[u32]) -> Mat<F> {
    let dim = table.cols();
    let scale = F::of((dim as f64).sqrt());
    let mut x = Mat::zeros(tokens.len(), dim);
    for (i, &tok) in tokens.iter().enumerate() {
        let row = x.row_mut(i);
        row.copy_from_slice(positions.row(i));
        axpy(scale, table.row(tok as usize), row);
    }
    x
}

fn check_tokens(config: &ModelConfig, source: &[u32], decoder_input: &[u32]) -> Result<()> {
    if source.is_empty() || decoder_input.is_empty() {
        return Err(contract("empty source or decoder input"));
    }
    if source.len() > config.max_source_len || decoder_input.len() > config.max_target_len {
        return Err(contract(format!(
            "sequence lengths ({}, {}) exceed model limits ({}, {})",
            source.len(),
            decoder_input.len(),
            config.max_source_len,
            config.max_target_len
        )));
    }
    if let Some(&tok) = source.iter().find(|&&t| t as usize >= config.source_vocab) {
        return Err(contract(format!("source token {tok} out of range")));
    }
    if let Some(&tok) = decoder_input.iter().find(|&&t| t as usize >= config.target_vocab) {
        return Err(contract(format!("target token {tok} out of range")));
    }
    Ok(())
}

fn encode_trace<F: Scalar>(
    params: &Parameters<F>,
    config: &ModelConfig,
    source: &[u32],
    drop: &mut Option<Dropout<'_>>,
) -> (Mat<F>, Option<Vec<F>>, Vec<EncoderCache<F>>, LayerNormCache<F>) {
    let mut x = embed(&params.source_embedding, &params.source_positions, source);
    let source_drop = dropout(&mut x, drop);
    let mut caches = Vec::with_capacity(params.encoder.len());
    for layer in &params.encoder {
        let (a, ln1) = layer.ln1.forward(&x);
        let (mut h, attn) = layer.attn.forward(&a, &a, config.heads, false);
        let drop1 = dropout(&mut h, drop);
        x.add_assign(&h);
        let (b, ln2) = layer.ln2.forward(&x);
        let (mut f, ffn) = layer.ffn.forward(&b);
        let drop2 = dropout(&mut f, drop);
        x.add_assign(&f);
        caches.push(EncoderCache {
            ln1,
            attn,
            drop1,
            ln2,
            ffn,
            drop2,
        });
    }
    let (out, norm) = params.encoder_norm.forward(&x);
    (out, source_drop, caches, norm)
}

fn decode_trace<F: Scalar>(
    params: &Parameters<F>,
    config: &ModelConfig,
    memory: &Mat<F>,
    decoder_input: &[u32],
    drop: &mut Option<Dropout<'_>>,
) -> (Mat<F>, Option<Vec<F>>, Vec<DecoderCache<F>>, LayerNormCache<F>) {
    let mut y = embed(&params.target_embedding, &params.target_positions, decoder_input);
    let target_drop = dropout(&mut y, drop);
    let mut caches = Vec::with_capacity(params.decoder.len());
    for layer in &params.decoder {
        let (a, ln1) = layer.ln1.forward(&y);
        let (mut h, self_attn) = layer.self_attn.forward(&a, &a, config.heads, true);
        let drop1 = dropout(&mut h, drop);
        y.add_assign(&h);
        let (b, ln2) = layer.ln2.forward(&y);
        let (mut c, cross) = layer.cross_attn.forward(&b, memory, config.heads, false);
        let drop2 = dropout(&mut c, drop);
        y.add_assign(&c);
        let (e, ln3) = layer.ln3.forward(&y);
        let (mut f, ffn) = layer.ffn.forward(&e);
        let drop3 = dropout(&mut f, drop);
        y.add_assign(&f);
        caches.push(DecoderCache {
            ln1,
            self_attn,
            drop1,
            ln2,
            cross,
            drop2,
            ln3,
            ffn,
            drop3,
        });
    }
    let (out, norm) = params.decoder_norm.forward(&y);
    (out, target_drop, caches, norm)
}

fn run<F: Scalar>(
    params: &Parameters<F>,
    config: &ModelConfig,
    source: &[u32],
    decoder_input: &[u32],
    mut drop: Option<Dropout<'_>>,
) -> (Mat<F>, Trace<F>) {
    let (memory, source_drop, encoder, encoder_norm) = encode_trace(params, config, source, &mut drop);
    let (dec_out, target_drop, decoder, decoder_norm) =
        decode_trace(params, config, &memory, decoder_input, &mut drop);
    let logits = params.output.forward(&dec_out);
    let trace = Trace {
        source_drop,
        target_drop,
        encoder,
        encoder_norm,
        encoder_output: memory,
        decoder,
        decoder_norm,
        decoder_output: dec_out,
    };
    (logits, trace)
}

/// Evaluation-mode forward pass (no dropout).
pub fn forward<F: Scalar>(
    params: &Parameters<F>,
    config: &ModelConfig,
    source: &[u32],
    decoder_input: &[u32],
) -> Result<Forward<F>> {
    check_tokens(config, source, decoder_input)?;
    let (logits, trace) = run(params, config, source, decoder_input, None);
    let attention = AttentionMaps {
        encoder: trace.encoder.into_iter().map(|c| c.attn.probs).collect(),
        decoder_self: trace
            .decoder
            .iter()
            .map(|c| c.self_attn.probs.clone())
            .collect(),
        cross: trace.decoder.into_iter().map(|c| c.cross.probs).collect(),
    };
    Ok(Forward {
        logits,
        encoder_output: trace.encoder_output,
        attention,
    })
}

/// Encoder output only, for repeated decoding against the same source.
pub fn encode<F: Scalar>(params: &Parameters<F>, config: &ModelConfig, source: &[u32]) -> Result<Mat<F>> {
    check_tokens(config, source, &[BOS])?;
    Ok(encode_trace(params, config, source, &mut None).0)
}

/// Decoder logits for a given encoder output.
pub fn decode_logits<F: Scalar>(
    params: &Parameters<F>,
    config: &ModelConfig,
    memory: &Mat<F>,
    decoder_input: &[u32],
) -> Result<Mat<F>> {
    check_tokens(config, &[0], decoder_input)?;
    let (out, ..) = decode_trace(params, config, memory, decoder_input, &mut None);
    Ok(params.output.forward(&out))
}

fn backward<F: Scalar>(
    params: &Parameters<F>,
    trace: &Trace<F>,
    source: &[u32],
    decoder_input: &[u32],
    dlogits: &Mat<F>,
    grads: &mut Parameters<F>,
) {
    let d_out = params
        .output
        .backward(&trace.decoder_output, dlogits, &mut grads.output);
    let mut dy = params
        .decoder_norm
        .backward(&trace.decoder_norm, &d_out, &mut grads.decoder_norm);
    let mut d_memory = Mat::zeros(trace.encoder_output.rows, trace.encoder_output.cols);

    for ((layer, cache), grad) in params
        .decoder
        .iter()
        .zip(&trace.decoder)
        .zip(grads.decoder.iter_mut())
        .rev()
    {
        let branch = undo_dropout(&dy, &cache.drop3);
        let de = layer.ffn.backward(&cache.ffn, &branch, &mut grad.ffn);
        dy.add_assign(&layer.ln3.backward(&cache.ln3, &de, &mut grad.ln3));

        let branch = undo_dropout(&dy, &cache.drop2);
        let (dq, dkv) = layer
            .cross_attn
            .backward(&cache.cross, &branch, &mut grad.cross_attn);
        d_memory.add_assign(&dkv);
        dy.add_assign(&layer.ln2.backward(&cache.ln2, &dq, &mut grad.ln2));

        let branch = undo_dropout(&dy, &cache.drop1);
        let (mut dq, dkv) = layer
            .self_attn
            .backward(&cache.self_attn, &branch, &mut grad.self_attn);
        dq.add_assign(&dkv);
        dy.add_assign(&layer.ln1.backward(&cache.ln1, &dq, &mut grad.ln1));
    }
    let dy = undo_dropout(&dy, &trace.target_drop);
    accumulate_embedding(&mut grads.target_embedding, decoder_input, &dy);

    let mut dx = params
        .encoder_norm
        .backward(&trace.encoder_norm, &d_memory, &mut grads.encoder_norm);
    for ((layer, cache), grad) in params
        .encoder
        .iter()
        .zip(&trace.encoder)
        .zip(grads.encoder.iter_mut())
        .rev()
    {
        let branch = undo_dropout(&dx, &cache.drop2);
        let db = layer.ffn.backward(&cache.ffn, &branch, &mut grad.ffn);
        dx.add_assign(&layer.ln2.backward(&cache.ln2, &db, &mut grad.ln2));

        let branch = undo_dropout(&dx, &cache.drop1);
        let (mut dq, dkv) = layer.attn.backward(&cache.attn, &branch, &mut grad.attn);
        dq.add_assign(&dkv);
        dx.add_assign(&layer.ln1.backward(&cache.ln1, &dq, &mut grad.ln1));
    }
    let dx = undo_dropout(&dx, &trace.source_drop);
    accumulate_embedding(&mut grads.source_embedding, source, &dx);
}

fn accumulate_embedding<F: Scalar>(table: &mut Tensor<F>, tokens: &[u32], grad: &Mat<F>) {
    let scale = F::of((table.cols() as f64).sqrt());
    for (i, &tok) in tokens.iter().enumerate() {
        axpy(scale, grad.row(i), table.row_mut(tok as usize));
    }
}

/// One teacher-forced training pair. `target[i]` is the label the decoder
/// must emit after reading `decoder_input[..=i]`; `PAD` targets are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub source: Vec<u32>,
    pub decoder_input: Vec<u32>,
    pub target: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    pub label_smoothing: f64,
    /// `Some(seed)` enables dropout with per-example streams derived from it.
    pub dropout_seed: Option<u64>,
    /// Multiplies the loss (and therefore every gradient).
    pub loss_scale: f64,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            label_smoothing: 0.0,
            dropout_seed: None,
            loss_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Mean cross-entropy over non-`PAD` target positions.
    pub loss: f64,
    pub tokens: usize,
    /// Teacher-forced argmax over `{ZERO, ONE}` matching the target.
    pub correct: usize,
}

/// Examples are split into this many contiguous chunks whose gradients are
/// summed in chunk order, so results do not depend on the thread count.
const GRAD_CHUNKS: usize = 8;

pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean cross-entropy over every non-`PAD` target position of the batch and
/// its gradient with respect to every trainable tensor.
pub fn loss_and_grads<F: Scalar>(
    params: &Parameters<F>,
    config: &ModelConfig,
    batch: &[Example],
    options: &LossOptions,
) -> Result<(BatchStats, Parameters<F>)> {
    if batch.is_empty() {
        return Err(contract("empty batch"));
    }
    for ex in batch {
        check_tokens(config, &ex.source, &ex.decoder_input)?;
        if ex.target.len() != ex.decoder_input.len() {
            return Err(contract("target and decoder input lengths differ"));
        }
        if ex.target.iter().any(|&t| t as usize >= config.target_vocab) {
            return Err(contract("target token out of range"));
        }
    }
    let tokens: usize = batch
        .iter()
        .map(|ex| ex.target.iter().filter(|&&t| t != PAD).count())
        .sum();
    if tokens == 0 {
        return Err(contract("batch has no non-PAD targets"));
    }
    let norm = options.loss_scale / tokens as f64;
    let eps = options.label_smoothing;
    let vocab = config.target_vocab;

    let chunk_len = batch.len().div_ceil(GRAD_CHUNKS);
    let indexed: Vec<(usize, &[Example])> = batch.chunks(chunk_len).enumerate().collect();
    let partials: Vec<(f64, usize, Parameters<F>)> = indexed
        .into_par_iter()
        .map(|(chunk, examples)| {
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            let mut correct = 0;
            for (k, ex) in examples.iter().enumerate() {
                let index = (chunk * chunk_len + k) as u64;
                let mut rng = options
                    .dropout_seed
                    .map(|s| ChaCha8Rng::seed_from_u64(mix_seed(s, index)));
                let drop = rng.as_mut().map(|rng| Dropout {
                    rate: config.dropout,
                    rng,
                });
                let (logits, trace) = run(params, config, &ex.source, &ex.decoder_input, drop);
                let mut dlogits = Mat::zeros(logits.rows, logits.cols);
                for (i, &target) in ex.target.iter().enumerate() {
                    if target == PAD {
                        continue;
                    }
                    let row = logits.row(i);
                    let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v)).f64();
                    let exps: Vec<f64> = row.iter().map(|&v| (v.f64() - max).exp()).collect();
                    let total: f64 = exps.iter().sum();
                    let drow = dlogits.row_mut(i);
                    for c in 0..vocab {
                        let q = (1.0 - eps) * f64::from(c == target as usize) + eps / vocab as f64;
                        let logp = (row[c].f64() - max) - total.ln();
                        loss -= q * logp;
                        drow[c] = F::of((exps[c] / total - q) * norm);
                    }
                    let predicted = if row[ONE as usize] > row[ZERO as usize] { ONE } else { ZERO };
                    correct += usize::from(predicted == target);
                }
                backward(params, &trace, &ex.source, &ex.decoder_input, &dlogits, &mut grads);
            }
            (loss, correct, grads)
        })
        .collect();

    let mut iter = partials.into_iter();
    let (mut loss, mut correct, mut grads) = iter.next().expect("non-empty batch");
    for (l, c, g) in iter {
        loss += l;
        correct += c;
        grads.add_assign(&g);
    }
    Ok((
        BatchStats {
            loss: loss * options.loss_scale / tokens as f64,
            tokens,
            correct,
        },
        grads,
    ))
}

/// Loss only, in evaluation mode.
pub fn loss<F: Scalar>(params: &Parameters<F>, config: &ModelConfig, batch: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for ex in batch {
        check_tokens(config, &ex.source, &ex.decoder_input)?;
        let (logits, _) = run(params, config, &ex.source, &ex.decoder_input, None);
        for (i, &target) in ex.target.iter().enumerate() {
            if target == PAD {
                continue;
            }
            let row: Vec<f64> = logits.row(i).iter().map(|v| v.f64()).collect();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[target as usize];
            tokens += 1;
        }
    }
    if tokens == 0 {
        return Err(contract("batch has no non-PAD targets"));
    }
    Ok(total / tokens as f64)
}
