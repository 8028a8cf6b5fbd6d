//! Mini-batch training with Nadam, inverted input dropout and early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{ActivityVocabulary, PrefixDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{argmax, cross_entropy, Matrix};

use super::forward::forward;
use super::grad::backward_into;
use super::nadam::Nadam;
use super::params::BiLstmParams;
use super::BiLstmModel;

/// Samples per parallel work unit; partial gradients are summed in chunk order.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Units per direction.
    pub hidden_size: usize,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_size: 100,
            dropout_rate: 0.2,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.hidden_size == 0 {
            return Err(Error::InvalidConfig(
                "hidden size must be at least 1".into(),
            ));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.epochs {
            w.serialize(e)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Bernoulli(1 - rate) keep mask scaled by `1 / (1 - rate)`, one entry per input unit and step.
pub fn sample_dropout_mask<T: Scalar, R: Rng>(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut R,
) -> Matrix<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        if rng.gen::<f64>() >= rate {
            *v = keep;
        }
    }
    m
}

/// Mean loss and accuracy without dropout.
pub fn evaluate_dataset<T: Scalar>(
    params: &BiLstmParams<T>,
    data: &PrefixDataset,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let h = params.vocab_size();
    let per_sample: Vec<(f64, bool)> = data
        .samples
        .par_iter()
        .map(|s| {
            let label = s.label.ok_or(Error::EmptyDataset)?;
            let trace = forward(params, &s.one_hot(h), None)?;
            Ok((
                cross_entropy(&trace.probs, label)?.as_f64(),
                argmax(&trace.probs) == label,
            ))
        })
        .collect::<Result<_>>()?;
    let n = per_sample.len() as f64;
    let loss = per_sample.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per_sample.iter().filter(|p| p.1).count() as f64 / n;
    Ok((loss, acc))
}

fn check_dataset(data: &PrefixDataset, vocab: &ActivityVocabulary) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.vocab_size != vocab.len() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes, vocabulary {}",
            data.vocab_size,
            vocab.len()
        )));
    }
    if data
        .samples
        .iter()
        .any(|s| s.label.is_none() || s.activities.is_empty())
    {
        return Err(Error::ShapeMismatch(
            "training samples need a label and at least one event".into(),
        ));
    }
    Ok(())
}

/// Trains a model and returns the snapshot with the lowest validation loss.
pub fn train<T: Scalar>(
    train_data: &PrefixDataset,
    val_data: &PrefixDataset,
    vocab: &ActivityVocabulary,
    config: &TrainConfig,
) -> Result<(BiLstmModel<T>, TrainHistory)> {
    config.validate()?;
    check_dataset(train_data, vocab)?;
    check_dataset(val_data, vocab)?;

    let h = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = BiLstmParams::<T>::init(h, config.hidden_size, &mut rng);
    let mut opt = Nadam::new(
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let inputs: Vec<Matrix<T>> = train_data.samples.iter().map(|s| s.one_hot(h)).collect();
    let labels = train_data.labels();

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, BiLstmParams<T>)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..inputs.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let masks: Vec<Option<Matrix<T>>> = batch
                .iter()
                .map(|&i| {
                    (config.dropout_rate > 0.0).then(|| {
                        sample_dropout_mask(inputs[i].rows(), h, config.dropout_rate, &mut rng)
                    })
                })
                .collect();
            let jobs: Vec<(usize, Option<Matrix<T>>)> = batch.iter().copied().zip(masks).collect();
            let partials: Vec<(BiLstmParams<T>, f64, usize)> = jobs
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut g = params.zeros_like();
                    let mut loss = 0.0;
                    let mut hits = 0;
                    for (i, mask) in chunk {
                        let trace = forward(&params, &inputs[*i], mask.as_ref())?;
                        loss += cross_entropy(&trace.probs, labels[*i])?.as_f64();
                        hits += usize::from(argmax(&trace.probs) == labels[*i]);
                        backward_into(&params, &trace, labels[*i], &mut g)?;
                    }
                    Ok((g, loss, hits))
                })
                .collect::<Result<_>>()?;
            let mut grads = params.zeros_like();
            for (g, loss, hits) in &partials {
                grads.add_assign(g);
                loss_sum += loss;
                correct += hits;
            }
            grads.scale(T::one() / T::of(batch.len() as f64));
            opt.step(&mut params, &grads);
        }
        let n = inputs.len() as f64;
        let train_loss = loss_sum / n;
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let (val_loss, val_accuracy) = evaluate_dataset(&params, val_data)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy,
        });
        log::debug!("epoch {epoch}: train loss {train_loss:.5}, val loss {val_loss:.5}");

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (_, best_params) = best.expect("at least one epoch ran");
    let mut model = BiLstmModel::new(
        best_params,
        vocab.clone(),
        train_data.max_len,
        config.clone(),
    )?;
    model.trained_epochs = history.epochs.len();
    Ok((model, history))
}
