//! Versioned JSON model files.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::ActivityVocabulary;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

use super::params::{BiLstmParams, GateParams, LstmDirectionParams};
use super::train::TrainConfig;
use super::BiLstmModel;

pub const FORMAT_VERSION: u64 = 1;

type Rows = Vec<Vec<f64>>;

#[derive(Serialize, Deserialize)]
struct DirectionFile {
    #[serde(rename = "W_i")]
    w_i: Rows,
    #[serde(rename = "U_i")]
    u_i: Rows,
    b_i: Vec<f64>,
    #[serde(rename = "W_f")]
    w_f: Rows,
    #[serde(rename = "U_f")]
    u_f: Rows,
    b_f: Vec<f64>,
    #[serde(rename = "W_o")]
    w_o: Rows,
    #[serde(rename = "U_o")]
    u_o: Rows,
    b_o: Vec<f64>,
    #[serde(rename = "W_g")]
    w_g: Rows,
    #[serde(rename = "U_g")]
    u_g: Rows,
    b_g: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    hidden_size: usize,
    vocab: Vec<String>,
    max_len: usize,
    hyperparams: TrainConfig,
    trained_epochs: usize,
    forward: DirectionFile,
    backward: DirectionFile,
    #[serde(rename = "W_out")]
    w_out: Rows,
    b_out: Vec<f64>,
}

fn rows_of<T: Scalar>(m: &Matrix<T>) -> Rows {
    m.to_rows()
        .into_iter()
        .map(|r| r.into_iter().map(Scalar::as_f64).collect())
        .collect()
}

fn vec_of<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn matrix_from<T: Scalar>(name: &str, rows: &Rows, shape: (usize, usize)) -> Result<Matrix<T>> {
    let m = Matrix::from_rows(rows).map_err(|e| Error::CorruptModel(format!("{name}: {e}")))?;
    // from_rows of zero rows cannot know the column count
    if m.shape() != shape && !(shape.0 == 0 && rows.is_empty()) {
        return Err(Error::CorruptModel(format!(
            "{name} has shape {:?}, expected {shape:?}",
            m.shape()
        )));
    }
    Ok(m.cast())
}

fn vector_from<T: Scalar>(name: &str, v: &[f64], len: usize) -> Result<Vec<T>> {
    if v.len() != len {
        return Err(Error::CorruptModel(format!(
            "{name} has length {}, expected {len}",
            v.len()
        )));
    }
    Ok(v.iter().map(|&x| T::of(x)).collect())
}

impl DirectionFile {
    fn from_params<T: Scalar>(p: &LstmDirectionParams<T>) -> Self {
        Self {
            w_i: rows_of(&p.input.w),
            u_i: rows_of(&p.input.u),
            b_i: vec_of(&p.input.b),
            w_f: rows_of(&p.forget.w),
            u_f: rows_of(&p.forget.u),
            b_f: vec_of(&p.forget.b),
            w_o: rows_of(&p.output.w),
            u_o: rows_of(&p.output.u),
            b_o: vec_of(&p.output.b),
            w_g: rows_of(&p.candidate.w),
            u_g: rows_of(&p.candidate.u),
            b_g: vec_of(&p.candidate.b),
        }
    }

    fn to_params<T: Scalar>(
        &self,
        dir: &str,
        h: usize,
        d: usize,
    ) -> Result<LstmDirectionParams<T>> {
        let gate = |g: &str, w: &Rows, u: &Rows, b: &[f64]| -> Result<GateParams<T>> {
            Ok(GateParams {
                w: matrix_from(&format!("{dir}.W_{g}"), w, (d, h))?,
                u: matrix_from(&format!("{dir}.U_{g}"), u, (d, d))?,
                b: vector_from(&format!("{dir}.b_{g}"), b, d)?,
            })
        };
        Ok(LstmDirectionParams {
            input: gate("i", &self.w_i, &self.u_i, &self.b_i)?,
            forget: gate("f", &self.w_f, &self.u_f, &self.b_f)?,
            output: gate("o", &self.w_o, &self.u_o, &self.b_o)?,
            candidate: gate("g", &self.w_g, &self.u_g, &self.b_g)?,
        })
    }
}

/// Writes the model as pretty-printed JSON. Numbers use the shortest decimal
/// form that parses back to the identical `f64`.
pub fn save_model<T: Scalar, W: Write>(model: &BiLstmModel<T>, mut sink: W) -> Result<()> {
    let p = &model.params;
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        hidden_size: model.hidden_size(),
        vocab: model.vocab.labels().to_vec(),
        max_len: model.max_len,
        hyperparams: model.config.clone(),
        trained_epochs: model.trained_epochs,
        forward: DirectionFile::from_params(&p.forward),
        backward: DirectionFile::from_params(&p.backward),
        w_out: rows_of(&p.w_out),
        b_out: vec_of(&p.b_out),
    };
    serde_json::to_writer_pretty(&mut sink, &file)?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn load_model<T: Scalar, R: Read>(mut source: R) -> Result<BiLstmModel<T>> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::CorruptModel(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptModel("missing format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
    let vocab = ActivityVocabulary::from_labels(file.vocab)?;
    let (h, d) = (vocab.len(), file.hidden_size);
    let params = BiLstmParams {
        forward: file.forward.to_params("forward", h, d)?,
        backward: file.backward.to_params("backward", h, d)?,
        w_out: matrix_from("W_out", &file.w_out, (h, 2 * d))?,
        b_out: vector_from("b_out", &file.b_out, h)?,
    };
    if !params.is_finite() {
        return Err(Error::CorruptModel("non-finite weight".into()));
    }
    let mut model = BiLstmModel::new(params, vocab, file.max_len, file.hyperparams)?;
    model.trained_epochs = file.trained_epochs;
    Ok(model)
}

pub fn save_model_file<T: Scalar>(model: &BiLstmModel<T>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    save_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model_file<T: Scalar>(path: &Path) -> Result<BiLstmModel<T>> {
    load_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
