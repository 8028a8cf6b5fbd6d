//! Explainable next-activity prediction for business-process event logs.
//!
//! A bidirectional LSTM is trained on activity prefixes of an event log and
//! each of its predictions is decomposed back onto the input events with
//! layer-wise relevance propagation (LRP).
//!
//! The numeric modules ([`tensor`], [`bilstm`], [`lrp`]) are generic over the
//! [`Scalar`] trait and work with both `f32` and `f64`. The aliases at the
//! crate root fix the scalar to `f64`, which is what the CLI uses.

pub mod bilstm;
pub mod cli;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod eventlog;
pub mod heatmap;
pub mod lrp;
pub mod scalar;
pub mod synthlog;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = tensor::Matrix<f64>;
pub type Tensor3 = tensor::Tensor3<f64>;
pub type Model = bilstm::BiLstmModel<f64>;
pub type Params = bilstm::BiLstmParams<f64>;
pub type ForwardTrace = bilstm::ForwardTrace<f64>;
pub type RelevanceTrace = lrp::RelevanceTrace<f64>;

pub type Model32 = bilstm::BiLstmModel<f32>;
pub type RelevanceTrace32 = lrp::RelevanceTrace<f32>;
