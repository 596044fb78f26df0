//! Dataset construction, evaluation reports and attention export.

pub mod attention;
pub mod dataset;
pub mod eval;

pub use attention::{export_attention, AttentionKind};
pub use dataset::{build_dataset, read_dataset, write_dataset, BuildOptions, DatasetRecord, Split};
pub use eval::{evaluate_model, EvalOptions, LabelStub, Metrics, StubKind};
