//! Spiking recurrent neural networks with adaptive spiking neurons, trained
//! by backpropagation through time with surrogate gradients, plus
//! operation-count based energy accounting.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod codecs;
pub mod error;
pub mod linalg;
pub mod network;
pub mod neuron;
pub mod surrogate;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
