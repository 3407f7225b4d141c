//! From-scratch LSTM language model: embeddings, stacked LSTM layers and a
//! softmax output, with gate-level instrumentation and unit ablation.
//!
//! Gate blocks are stored in the fixed order input (`i`), forget (`f`),
//! cell candidate (`g`, written C̃ in traces), output (`o`): rows
//! `[k*H, (k+1)*H)` of every gate weight matrix belong to block `k`.

mod forward;
mod model;
mod train;
mod units;

pub use forward::{
    cell_step, forward, forward_sentence, forward_stream, ActivationTrace, ForwardOutput, LayerSnapshot, State, StepRecord, Stepper,
};
pub use model::{Dims, Gate, LayerParams, LstmModel, Matrix, GATE_ORDER};
pub use train::{
    perplexity, perplexity_with, sequence_loss_and_grad, train, EpochLog, TrainConfig, TrainOutcome, TrainState,
};
pub use units::{AblationMask, AblationMode, ResolvedMask, UnitRef};
