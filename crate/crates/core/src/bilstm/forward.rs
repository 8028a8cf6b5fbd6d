use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{matvec_acc, sigmoid, softmax, Matrix};

use super::params::{BiLstmParams, GateParams, LstmDirectionParams};

/// Everything computed at one timestep of one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    /// Input row after dropout masking.
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    pub pre_i: Vec<T>,
    pub pre_f: Vec<T>,
    pub pre_o: Vec<T>,
    pub pre_g: Vec<T>,
    pub i: Vec<T>,
    pub f: Vec<T>,
    pub o: Vec<T>,
    pub g: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

/// Steps in the order the direction consumed them.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionTrace<T> {
    pub steps: Vec<StepRecord<T>>,
}

impl<T: Scalar> DirectionTrace<T> {
    pub fn final_hidden(&self) -> &[T] {
        &self.steps.last().expect("at least one step").h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub forward: DirectionTrace<T>,
    /// Step `s` of this direction consumed event `T - 1 - s`.
    pub backward: DirectionTrace<T>,
    /// `[h_fwd_T ; h_bwd_T]`.
    pub readout: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn true_length(&self) -> usize {
        self.forward.steps.len()
    }
}

fn pre_activation<T: Scalar>(gate: &GateParams<T>, x: &[T], h_prev: &[T]) -> Vec<T> {
    let mut z = gate.b.clone();
    matvec_acc(&gate.w, x, &mut z);
    matvec_acc(&gate.u, h_prev, &mut z);
    z
}

fn run_direction<'a, T: Scalar>(
    p: &LstmDirectionParams<T>,
    rows: impl Iterator<Item = Vec<T>> + 'a,
) -> DirectionTrace<T> {
    let d = p.hidden_size();
    let mut h = vec![T::zero(); d];
    let mut c = vec![T::zero(); d];
    let mut steps = Vec::new();
    for x in rows {
        let pre_i = pre_activation(&p.input, &x, &h);
        let pre_f = pre_activation(&p.forget, &x, &h);
        let pre_o = pre_activation(&p.output, &x, &h);
        let pre_g = pre_activation(&p.candidate, &x, &h);
        let i: Vec<T> = pre_i.iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<T> = pre_f.iter().map(|&v| sigmoid(v)).collect();
        let o: Vec<T> = pre_o.iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<T> = pre_g.iter().map(|&v| v.tanh()).collect();
        let c_new: Vec<T> = (0..d).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<T> = c_new.iter().map(|&v| v.tanh()).collect();
        let h_new: Vec<T> = (0..d).map(|k| o[k] * tanh_c[k]).collect();
        steps.push(StepRecord {
            x,
            h_prev: std::mem::replace(&mut h, h_new.clone()),
            c_prev: std::mem::replace(&mut c, c_new.clone()),
            pre_i,
            pre_f,
            pre_o,
            pre_g,
            i,
            f,
            o,
            g,
            c: c_new,
            tanh_c,
            h: h_new,
        });
    }
    DirectionTrace { steps }
}

/// Forward pass over `inputs` (one row per event, oldest first).
///
/// `mask`, when present, has the same shape and multiplies the inputs
/// element-wise (inverted dropout).
pub fn forward<T: Scalar>(
    params: &BiLstmParams<T>,
    inputs: &Matrix<T>,
    mask: Option<&Matrix<T>>,
) -> Result<ForwardTrace<T>> {
    let h = params.vocab_size();
    if inputs.rows() == 0 {
        return Err(Error::ShapeMismatch("empty input sequence".into()));
    }
    if inputs.cols() != h || params.forward.input_size() != h {
        return Err(Error::ShapeMismatch(format!(
            "input width {} does not match vocabulary size {h}",
            inputs.cols()
        )));
    }
    if let Some(m) = mask {
        if m.shape() != inputs.shape() {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} does not match inputs {:?}",
                m.shape(),
                inputs.shape()
            )));
        }
    }
    if !inputs.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let row = |t: usize| -> Vec<T> {
        match mask {
            Some(m) => inputs
                .row(t)
                .iter()
                .zip(m.row(t))
                .map(|(&a, &b)| a * b)
                .collect(),
            None => inputs.row(t).to_vec(),
        }
    };
    let n = inputs.rows();
    let fwd = run_direction(&params.forward, (0..n).map(row));
    let bwd = run_direction(&params.backward, (0..n).rev().map(row));

    let mut readout = fwd.final_hidden().to_vec();
    readout.extend_from_slice(bwd.final_hidden());
    let mut logits = params.b_out.clone();
    matvec_acc(&params.w_out, &readout, &mut logits);
    let probs = softmax(&logits)?;
    Ok(ForwardTrace {
        forward: fwd,
        backward: bwd,
        readout,
        logits,
        probs,
    })
}
