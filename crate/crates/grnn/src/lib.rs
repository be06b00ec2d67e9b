//! From-scratch recurrent neural network library built around seven gated
//! cell variants (sRNN, LSTM, GRU, MGU, and the simplified MGU1/MGU2/MGU3)
//! with exact backpropagation through time, RMSProp/Adam optimizers, an
//! MNIST sequence pipeline, and a deterministic training harness.

pub mod bptt;
pub mod cells;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod numkernel;
pub mod optim;

pub use error::{Error, Result};
