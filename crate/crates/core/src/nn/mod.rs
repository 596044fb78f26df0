//! A small encoder-decoder transformer with hand-written backpropagation.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use checkpoint::ModelCheckpoint;
pub use gradcheck::gradient_check;
pub use model::{forward, init_parameters, loss_and_grads, Example, ModelConfig, Parameters};
pub use optim::{adam_step, AdamState, TrainConfig};
pub use train::{greedy_decode, make_example, token_accuracy, train, TrainOutcome};
