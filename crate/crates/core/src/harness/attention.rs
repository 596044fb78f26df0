//! CSV export of attention weights from one forward pass.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoding::{encode_source, encode_target};
use crate::error::Result;
use crate::instance::Instance;
use crate::nn::model::forward;
use crate::nn::ModelCheckpoint;
use crate::pipeline::predict_setup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    /// Encoder self-attention over source tokens.
    #[default]
    Encoder,
    /// Causal decoder self-attention.
    Decoder,
    /// Decoder queries over encoder outputs.
    Cross,
}

/// Writes one row per `(layer, head, query)`: `layer,head,query,k0,k1,...`.
/// The decoder is fed `BOS` followed by the model's own greedy prediction.
/// Returns the number of data rows.
pub fn export_attention<W: Write>(
    checkpoint: &ModelCheckpoint,
    instance: &Instance,
    kind: AttentionKind,
    writer: W,
) -> Result<usize> {
    let predicted = predict_setup(instance, checkpoint)?;
    let source = encode_source(instance, &checkpoint.tokenizer);
    let target = encode_target(&predicted);
    let fwd = forward(
        &checkpoint.params,
        &checkpoint.model,
        &source.0,
        target.decoder_input(),
    )?;
    let maps = match kind {
        AttentionKind::Encoder => fwd.attention.encoder,
        AttentionKind::Decoder => fwd.attention.decoder_self,
        AttentionKind::Cross => fwd.attention.cross,
    };
    let keys = maps.first().and_then(|l| l.first()).map_or(0, |m| m.cols);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["layer".to_string(), "head".into(), "query".into()];
    header.extend((0..keys).map(|k| format!("k{k}")));
    w.write_record(&header)?;
    let mut rows = 0;
    for (layer, heads) in maps.iter().enumerate() {
        for (head, m) in heads.iter().enumerate() {
            for q in 0..m.rows {
                let mut record = vec![layer.to_string(), head.to_string(), q.to_string()];
                record.extend(m.row(q).iter().map(|v| v.to_string()));
                w.write_record(&record)?;
                rows += 1;
            }
        }
    }
    w.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::fit_normalizer;
    use crate::generator::{generate_instance, GeneratorConfig};
    use crate::nn::{init_parameters, AdamState, ModelConfig};

    fn checkpoint(inst: &Instance) -> ModelCheckpoint {
        let model = ModelConfig {
            max_source_len: 30,
            max_target_len: 6,
            ..ModelConfig::tiny()
        };
        ModelCheckpoint {
            params: init_parameters(&model).unwrap(),
            optimizer: AdamState::new(&model),
            tokenizer: fit_normalizer([inst]).unwrap(),
            model,
        }
    }

    #[test]
    fn rows_cover_every_query_and_sum_to_one() {
        let inst = generate_instance(&GeneratorConfig::new(6, 5, 1000, 2)).unwrap();
        let ckpt = checkpoint(&inst);
        for (kind, queries, keys) in [
            (AttentionKind::Encoder, 30, 30),
            (AttentionKind::Decoder, 6, 6),
            (AttentionKind::Cross, 6, 30),
        ] {
            let mut buf = Vec::new();
            let rows = export_attention(&ckpt, &inst, kind, &mut buf).unwrap();
            assert_eq!(rows, 2 * queries);
            let mut again = Vec::new();
            export_attention(&ckpt, &inst, kind, &mut again).unwrap();
            assert_eq!(buf, again);

            let mut reader = csv::Reader::from_reader(buf.as_slice());
            assert_eq!(reader.headers().unwrap().len(), 3 + keys);
            for rec in reader.records() {
                let rec = rec.unwrap();
                let sum: f64 = rec.iter().skip(3).map(|v| v.parse::<f64>().unwrap()).sum();
                assert!((sum - 1.0).abs() < 1e-6, "{sum}");
            }
        }
    }
}
