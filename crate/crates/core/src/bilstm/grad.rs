//! Backpropagation through time for the softmax cross-entropy loss.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{cross_entropy, matvec_t_acc, outer_acc, Matrix};

use super::forward::{forward, DirectionTrace, ForwardTrace};
use super::params::{BiLstmParams, LstmDirectionParams};

fn backprop_direction<T: Scalar>(
    p: &LstmDirectionParams<T>,
    trace: &DirectionTrace<T>,
    dh_final: &[T],
    grads: &mut LstmDirectionParams<T>,
) {
    let d = p.hidden_size();
    let one = T::one();
    let mut dh = dh_final.to_vec();
    let mut dc = vec![T::zero(); d];
    let mut d_pre = [
        vec![T::zero(); d],
        vec![T::zero(); d],
        vec![T::zero(); d],
        vec![T::zero(); d],
    ];
    for s in trace.steps.iter().rev() {
        let mut dc_prev = vec![T::zero(); d];
        for k in 0..d {
            let d_o = dh[k] * s.tanh_c[k];
            dc[k] += dh[k] * s.o[k] * (one - s.tanh_c[k] * s.tanh_c[k]);
            let d_i = dc[k] * s.g[k];
            let d_g = dc[k] * s.i[k];
            let d_f = dc[k] * s.c_prev[k];
            dc_prev[k] = dc[k] * s.f[k];
            d_pre[0][k] = d_i * s.i[k] * (one - s.i[k]);
            d_pre[1][k] = d_f * s.f[k] * (one - s.f[k]);
            d_pre[2][k] = d_o * s.o[k] * (one - s.o[k]);
            d_pre[3][k] = d_g * (one - s.g[k] * s.g[k]);
        }
        let mut dh_prev = vec![T::zero(); d];
        for ((gate, g_grad), dz) in p.gates().into_iter().zip(grads.gates_mut()).zip(&d_pre) {
            outer_acc(&mut g_grad.w, dz, &s.x);
            outer_acc(&mut g_grad.u, dz, &s.h_prev);
            for (b, &v) in g_grad.b.iter_mut().zip(dz) {
                *b += v;
            }
            matvec_t_acc(&gate.u, dz, &mut dh_prev);
        }
        dh = dh_prev;
        dc = dc_prev;
    }
}

/// Adds the gradient of `-ln p[label]` for a recorded forward pass into `grads`.
pub fn backward_into<T: Scalar>(
    params: &BiLstmParams<T>,
    trace: &ForwardTrace<T>,
    label: usize,
    grads: &mut BiLstmParams<T>,
) -> Result<()> {
    let h = params.vocab_size();
    if label >= h {
        return Err(Error::ShapeMismatch(format!(
            "label {label} outside {h} classes"
        )));
    }
    if grads.vocab_size() != h || grads.hidden_size() != params.hidden_size() {
        return Err(Error::ShapeMismatch(
            "gradient buffer shape differs from parameters".into(),
        ));
    }
    let d = params.hidden_size();
    let mut dz = trace.probs.clone();
    dz[label] -= T::one();
    outer_acc(&mut grads.w_out, &dz, &trace.readout);
    for (b, &v) in grads.b_out.iter_mut().zip(&dz) {
        *b += v;
    }
    let mut d_readout = vec![T::zero(); 2 * d];
    matvec_t_acc(&params.w_out, &dz, &mut d_readout);
    backprop_direction(
        &params.forward,
        &trace.forward,
        &d_readout[..d],
        &mut grads.forward,
    );
    backprop_direction(
        &params.backward,
        &trace.backward,
        &d_readout[d..],
        &mut grads.backward,
    );
    Ok(())
}

/// Analytic gradient of the per-sample loss, same shapes as `params`.
pub fn backward<T: Scalar>(
    params: &BiLstmParams<T>,
    trace: &ForwardTrace<T>,
    label: usize,
) -> Result<BiLstmParams<T>> {
    let mut grads = params.zeros_like();
    backward_into(params, trace, label, &mut grads)?;
    Ok(grads)
}

/// Forward pass, loss and gradient in one call.
pub fn loss_and_gradient<T: Scalar>(
    params: &BiLstmParams<T>,
    inputs: &Matrix<T>,
    label: usize,
    mask: Option<&Matrix<T>>,
) -> Result<(T, ForwardTrace<T>, BiLstmParams<T>)> {
    let trace = forward(params, inputs, mask)?;
    let loss = cross_entropy(&trace.probs, label)?;
    let grads = backward(params, &trace, label)?;
    Ok((loss, trace, grads))
}
