//! Bidirectional LSTM next-activity model.
//!
//! One LSTM layer per direction (no peepholes):
//!
//! ```text
//! i_t = σ(W_i x_t + U_i h_{t-1} + b_i)
//! f_t = σ(W_f x_t + U_f h_{t-1} + b_f)
//! o_t = σ(W_o x_t + U_o h_{t-1} + b_o)
//! g_t = tanh(W_g x_t + U_g h_{t-1} + b_g)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ g_t
//! h_t = o_t ⊙ tanh(c_t)
//! ```
//!
//! The forward direction reads events oldest to newest, the backward
//! direction newest to oldest. Both final hidden states are concatenated
//! and fed to a dense softmax layer with one unit per activity class.

mod forward;
mod grad;
mod io;
mod nadam;
mod params;
mod train;

pub use forward::{forward, DirectionTrace, ForwardTrace, StepRecord};
pub use grad::{backward, backward_into, loss_and_gradient};
pub use io::{load_model, load_model_file, save_model, save_model_file, FORMAT_VERSION};
pub use nadam::Nadam;
pub use params::{BiLstmParams, GateParams, LstmDirectionParams};
pub use train::{
    evaluate_dataset, sample_dropout_mask, train, EpochStats, TrainConfig, TrainHistory,
};

use crate::encoding::{ActivityVocabulary, PrefixSample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{argmax, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmModel<T> {
    pub params: BiLstmParams<T>,
    pub vocab: ActivityVocabulary,
    /// Padding length M: the longest augmented trace seen in training.
    pub max_len: usize,
    pub config: TrainConfig,
    pub trained_epochs: usize,
}

impl<T: Scalar> BiLstmModel<T> {
    pub fn new(
        params: BiLstmParams<T>,
        vocab: ActivityVocabulary,
        max_len: usize,
        config: TrainConfig,
    ) -> Result<Self> {
        if params.vocab_size() != vocab.len() {
            return Err(Error::ShapeMismatch(format!(
                "parameters expect {} classes, vocabulary has {}",
                params.vocab_size(),
                vocab.len()
            )));
        }
        Ok(Self {
            params,
            vocab,
            max_len,
            config,
            trained_epochs: 0,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.params.hidden_size()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Runs both directions over the `true_length x H` event rows.
    pub fn forward(&self, inputs: &Matrix<T>, mask: Option<&Matrix<T>>) -> Result<ForwardTrace<T>> {
        forward(&self.params, inputs, mask)
    }

    /// Runs over the last `true_length` rows of a left-padded `M x H` input.
    pub fn forward_padded(
        &self,
        padded: &Matrix<T>,
        true_length: usize,
        mask: Option<&Matrix<T>>,
    ) -> Result<ForwardTrace<T>> {
        if true_length == 0 || true_length > padded.rows() {
            return Err(Error::ShapeMismatch(format!(
                "true length {true_length} outside 1..={}",
                padded.rows()
            )));
        }
        let active = padded.slice_rows(padded.rows() - true_length, padded.rows());
        forward(&self.params, &active, mask)
    }

    pub fn forward_sample(&self, sample: &PrefixSample) -> Result<ForwardTrace<T>> {
        self.check_sample(sample)?;
        forward(&self.params, &sample.one_hot(self.vocab_size()), None)
    }

    /// Arg-max class (lowest index on ties) and the full distribution.
    pub fn predict(&self, sample: &PrefixSample) -> Result<(usize, Vec<T>)> {
        let trace = self.forward_sample(sample)?;
        Ok((argmax(&trace.probs), trace.probs))
    }

    fn check_sample(&self, sample: &PrefixSample) -> Result<()> {
        if sample.true_length() == 0 {
            return Err(Error::ShapeMismatch("empty input sequence".into()));
        }
        if sample.true_length() > self.max_len {
            return Err(Error::PrefixTooLong {
                len: sample.true_length(),
                max_len: self.max_len,
            });
        }
        if let Some(&bad) = sample.activities.iter().find(|&&a| a >= self.vocab_size()) {
            return Err(Error::ShapeMismatch(format!(
                "activity index {bad} outside vocabulary of {}",
                self.vocab_size()
            )));
        }
        Ok(())
    }
}
