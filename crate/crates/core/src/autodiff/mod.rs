//! Network evaluation, input-derivative jets and parameter gradients.

pub mod checkpoint;
pub mod jet;
pub mod mlp;
pub mod tape;

pub use jet::{Jet, JetLayout, MultiIndex, MAX_ORDER};
pub use mlp::{
    forward, forward_batch, forward_jet, init_network, HiddenActivation, JetBatch, JetTable,
    NetworkSpec, OutputActivation, ParameterVector,
};
pub use checkpoint::{Checkpoint, RngState};
pub use tape::{grad_params, grad_params_into, Arith, NetworkArith, Plain, PlainNet, Tape, Var};
