//! Token encodings for the transformer.
//!
//! Source side: every (period, feature) pair becomes one token. A raw value
//! is optionally log-scaled with `ln(1 + v)`, standardized with corpus
//! statistics, clipped to ±4 standard deviations and binned uniformly into
//! `B` bins. Feature `j` owns the id range `[j·B, (j+1)·B)`, so with the
//! default `B = 2400` the source vocabulary has 12000 ids. Tokens are laid
//! out period-major: `d, p, f, cap, h` of period 0, then period 1, ...
//!
//! Target side: `PAD=0, BOS=1, ZERO=2, ONE=3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, SetupPlan};

pub const NUM_FEATURES: usize = 5;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["d", "p", "f", "cap", "h"];
pub const DEFAULT_BINS: usize = 2400;
pub const STD_FLOOR: f64 = 1e-6;
pub const CLIP_SIGMAS: f64 = 4.0;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const ZERO: u32 = 2;
pub const ONE: u32 = 3;
pub const TARGET_VOCAB: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub bins: usize,
    pub feature_order: Vec<String>,
    pub log_scale: [bool; NUM_FEATURES],
    pub mean: [f64; NUM_FEATURES],
    pub std: [f64; NUM_FEATURES],
    pub clip_sigmas: f64,
}

impl TokenizerConfig {
    /// Unfitted config (identity statistics) with default bins and flags.
    pub fn unfitted() -> Self {
        TokenizerConfig {
            bins: DEFAULT_BINS,
            feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            log_scale: [true, false, true, true, false],
            mean: [0.0; NUM_FEATURES],
            std: [1.0; NUM_FEATURES],
            clip_sigmas: CLIP_SIGMAS,
        }
    }

    pub fn vocab_size(&self) -> usize {
        NUM_FEATURES * self.bins
    }

    fn scaled(&self, feature: usize, v: i64) -> f64 {
        let v = v as f64;
        if self.log_scale[feature] {
            v.ln_1p()
        } else {
            v
        }
    }

    /// Standardized and clipped value of a raw feature value.
    pub fn standardize(&self, feature: usize, v: i64) -> f64 {
        let z = (self.scaled(feature, v) - self.mean[feature]) / self.std[feature];
        z.clamp(-self.clip_sigmas, self.clip_sigmas)
    }

    /// Bin of a standardized value; the upper clip edge maps to the last bin.
    pub fn bin(&self, z: f64) -> usize {
        let c = self.clip_sigmas;
        let unit = (z.clamp(-c, c) + c) / (2.0 * c);
        ((unit * self.bins as f64).floor() as usize).min(self.bins - 1)
    }

    pub fn token(&self, feature: usize, v: i64) -> u32 {
        (feature * self.bins + self.bin(self.standardize(feature, v))) as u32
    }
}

/// Source token ids, `5·T` long.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSequence(pub Vec<u32>);

/// `BOS` followed by one `ZERO`/`ONE` label per period.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetSequence(pub Vec<u32>);

impl TargetSequence {
    /// Teacher-forced decoder input: `BOS, y[0], ..., y[T-2]`.
    pub fn decoder_input(&self) -> &[u32] {
        &self.0[..self.0.len() - 1]
    }

    /// Labels the decoder must emit: `y[0], ..., y[T-1]`.
    pub fn decoder_output(&self) -> &[u32] {
        &self.0[1..]
    }

    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }
}

/// Per-feature mean and standard deviation over every period of every
/// instance, after log scaling where flagged.
pub fn fit_normalizer<'a, I>(instances: I) -> Result<TokenizerConfig>
where
    I: IntoIterator<Item = &'a Instance>,
{
    let mut cfg = TokenizerConfig::unfitted();
    let mut count = 0usize;
    let mut sum = [0.0f64; NUM_FEATURES];
    let mut sum_sq = [0.0f64; NUM_FEATURES];
    let mut seen = Vec::new();

    for inst in instances {
        for (j, (_, column)) in inst.columns().iter().enumerate() {
            for &v in column.iter() {
                sum[j] += cfg.scaled(j, v);
            }
        }
        count += inst.horizon();
        seen.push(inst);
    }
    if count == 0 {
        return Err(Error::Config("cannot fit normalizer on an empty corpus".into()));
    }
    let n = count as f64;
    for j in 0..NUM_FEATURES {
        cfg.mean[j] = sum[j] / n;
    }
    // Second pass for a numerically stable variance.
    for inst in seen {
        for (j, (_, column)) in inst.columns().iter().enumerate() {
            for &v in column.iter() {
                let dev = cfg.scaled(j, v) - cfg.mean[j];
                sum_sq[j] += dev * dev;
            }
        }
    }
    for j in 0..NUM_FEATURES {
        cfg.std[j] = (sum_sq[j] / n).sqrt().max(STD_FLOOR);
    }
    Ok(cfg)
}

pub fn encode_source(instance: &Instance, config: &TokenizerConfig) -> SourceSequence {
    let columns = instance.columns();
    let mut tokens = Vec::with_capacity(NUM_FEATURES * instance.horizon());
    for t in 0..instance.horizon() {
        for (j, (_, column)) in columns.iter().enumerate() {
            tokens.push(config.token(j, column[t]));
        }
    }
    SourceSequence(tokens)
}

pub fn encode_target(setup: &SetupPlan) -> TargetSequence {
    let mut tokens = Vec::with_capacity(setup.len() + 1);
    tokens.push(BOS);
    tokens.extend(
        setup
            .as_slice()
            .iter()
            .map(|&y| if y { ONE } else { ZERO }),
    );
    TargetSequence(tokens)
}

/// Accepts either a full sequence starting with `BOS` or bare labels.
pub fn decode_target(tokens: &[u32]) -> Result<SetupPlan> {
    let labels = match tokens.first() {
        Some(&BOS) => &tokens[1..],
        _ => tokens,
    };
    labels
        .iter()
        .enumerate()
        .map(|(i, &tok)| match tok {
            ZERO => Ok(false),
            ONE => Ok(true),
            other => Err(Error::MalformedSequence(format!(
                "token {other} at label position {i}"
            ))),
        })
        .collect::<Result<Vec<_>>>()
        .map(SetupPlan::from_bools)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_instance, GeneratorConfig};

    fn constant_instance(t: usize) -> Instance {
        Instance::new(vec![7; t], vec![3; t], vec![100; t], vec![1; t], vec![50; t]).unwrap()
    }

    #[test]
    fn constant_feature_gets_floored_std() {
        let cfg = fit_normalizer([&constant_instance(4)]).unwrap();
        assert_eq!(cfg.mean[1], 3.0);
        assert_eq!(cfg.std[1], STD_FLOOR);
        assert_eq!(cfg.mean[4], 1.0);
        assert_eq!(cfg.std[4], STD_FLOOR);
    }

    #[test]
    fn two_point_demand_mean() {
        let a = Instance::new(vec![1], vec![1], vec![1], vec![1], vec![1]).unwrap();
        let b = Instance::new(vec![600], vec![1], vec![1], vec![1], vec![1]).unwrap();
        let cfg = fit_normalizer([&a, &b]).unwrap();
        let expected_mean = (2f64.ln() + 601f64.ln()) / 2.0;
        let expected_std = (601f64.ln() - 2f64.ln()) / 2.0;
        assert!((cfg.mean[0] - expected_mean).abs() < 1e-12);
        assert!((cfg.std[0] - expected_std).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(fit_normalizer(std::iter::empty::<&Instance>()).is_err());
    }

    #[test]
    fn constant_streams_encode_identically() {
        let inst = constant_instance(6);
        let cfg = fit_normalizer([&inst]).unwrap();
        let src = encode_source(&inst, &cfg);
        assert_eq!(src.0.len(), 30);
        for j in 0..NUM_FEATURES {
            let col: Vec<u32> = src.0.iter().skip(j).step_by(NUM_FEATURES).copied().collect();
            assert!(col.iter().all(|&tok| tok == col[0]));
        }
    }

    #[test]
    fn clip_boundary_maps_to_last_bin() {
        let cfg = TokenizerConfig::unfitted();
        assert_eq!(cfg.bin(CLIP_SIGMAS), DEFAULT_BINS - 1);
        assert_eq!(cfg.bin(1e9), DEFAULT_BINS - 1);
        assert_eq!(cfg.bin(-CLIP_SIGMAS), 0);
        assert_eq!(cfg.bin(0.0), DEFAULT_BINS / 2);
    }

    #[test]
    fn feature_offsets() {
        let base = GeneratorConfig::new(20, 5, 10000, 0);
        let corpus: Vec<_> = (0..10)
            .map(|s| generate_instance(&base.with_seed(s)).unwrap())
            .collect();
        let cfg = fit_normalizer(&corpus).unwrap();
        assert_eq!(cfg.vocab_size(), 12000);
        for inst in &corpus {
            let src = encode_source(inst, &cfg);
            for (i, &tok) in src.0.iter().enumerate() {
                let j = i % NUM_FEATURES;
                assert!((j * 2400..(j + 1) * 2400).contains(&(tok as usize)));
            }
            let mut f_tokens = src.0.iter().skip(2).step_by(NUM_FEATURES);
            assert!(f_tokens.all(|&tok| (4800..7200).contains(&tok)));
        }
    }

    #[test]
    fn target_definition_and_errors() {
        let y = SetupPlan::from_bools(vec![true, false, true]);
        let seq = encode_target(&y);
        assert_eq!(seq.0, vec![BOS, ONE, ZERO, ONE]);
        assert_eq!(seq.decoder_input(), &[BOS, ONE, ZERO]);
        assert_eq!(seq.decoder_output(), &[ONE, ZERO, ONE]);
        assert!(matches!(
            decode_target(&[BOS, PAD]),
            Err(Error::MalformedSequence(_))
        ));
        assert!(decode_target(&[BOS, ONE, BOS]).is_err());
    }

    #[test]
    fn target_round_trip_exhaustive() {
        for t in 1..=8 {
            for mask in 0..(1u64 << t) {
                let y = SetupPlan::from_mask(t, mask);
                assert_eq!(decode_target(&encode_target(&y).0).unwrap(), y);
            }
        }
    }
}
