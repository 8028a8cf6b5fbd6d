//! Layer-wise relevance propagation through the Bi-LSTM.
//!
//! Two rules are used. Weighted connections `z_j = Σ_i z_i w_ij + b_j` split
//! the upper relevance with the ε-rule
//!
//! ```text
//! R_{i←j} = (z_i w_ij + (ε·sign(z_j) + δ·b_j) / N) / (z_j + ε·sign(z_j)) · R_j,   R_i = Σ_j R_{i←j}
//! ```
//!
//! where `N` counts the lower neurons feeding `z_j` and `sign(0) = +1`.
//! Multiplicative gate/source pairs `z_j = z_g · z_s` give everything to the
//! source and nothing to the sigmoid gate. Element-wise `tanh` passes
//! relevance through unchanged.
//!
//! With `δ = 1` every step conserves relevance exactly. With `δ = 0` the
//! biases absorb `Σ_j R_j b_j / (z_j + ε·sign(z_j))` at each weighted layer;
//! [`RelevanceTrace::bias_absorbed`] reports the total.

use serde::{Deserialize, Serialize};

use crate::bilstm::{BiLstmModel, DirectionTrace, ForwardTrace, LstmDirectionParams};
use crate::encoding::PrefixSample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{argmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Predicted,
    Class(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartFrom {
    /// Pre-softmax score of the target class.
    Logit,
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrpConfig {
    pub epsilon: f64,
    /// Bias factor: 1.0 conserves relevance, 0.0 lets biases absorb it.
    pub delta: f64,
    pub target: Target,
    pub start_from: StartFrom,
}

impl Default for LrpConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.001,
            delta: 0.0,
            target: Target::Predicted,
            start_from: StartFrom::Logit,
        }
    }
}

impl LrpConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidConfig("delta must be finite".into()));
        }
        Ok(())
    }
}

/// ε and δ converted to the working scalar.
#[derive(Debug, Clone, Copy)]
struct Rule<T> {
    epsilon: T,
    delta: T,
}

impl<T: Scalar> Rule<T> {
    fn of(config: &LrpConfig) -> Self {
        Self {
            epsilon: T::of(config.epsilon),
            delta: T::of(config.delta),
        }
    }

    fn stabilizer(&self, z_upper: T) -> T {
        if z_upper >= T::zero() {
            self.epsilon
        } else {
            -self.epsilon
        }
    }

    /// Denominator `z_j + ε·sign(z_j)` and the per-input share `(ε·sign + δ·b_j) / N`.
    fn terms(&self, z_upper: T, bias: T, n: usize) -> (T, T) {
        let s = self.stabilizer(z_upper);
        (z_upper + s, (s + self.delta * bias) / T::of(n as f64))
    }

    /// Relevance the bias keeps out of the lower layer for one upper neuron.
    fn absorbed(&self, z_upper: T, bias: T, r_upper: T) -> T {
        (T::one() - self.delta) * bias / (z_upper + self.stabilizer(z_upper)) * r_upper
    }
}

/// Result of one weighted-layer redistribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRelevance<T> {
    pub lower: Vec<T>,
    /// Relevance retained by the biases, `Σ_j (1-δ) b_j R_j / (z_j + ε·sign(z_j))`.
    pub bias_absorbed: T,
}

/// ε-rule over `z_upper = W z_lower + b` with `W` of shape `m x n`; `N = n`.
pub fn lrp_linear<T: Scalar>(
    z_lower: &[T],
    w: &Matrix<T>,
    b: &[T],
    z_upper: &[T],
    r_upper: &[T],
    config: &LrpConfig,
) -> Result<Vec<T>> {
    Ok(lrp_linear_detailed(z_lower, w, b, z_upper, r_upper, config)?.lower)
}

pub fn lrp_linear_detailed<T: Scalar>(
    z_lower: &[T],
    w: &Matrix<T>,
    b: &[T],
    z_upper: &[T],
    r_upper: &[T],
    config: &LrpConfig,
) -> Result<LinearRelevance<T>> {
    let (m, n) = w.shape();
    if z_lower.len() != n || b.len() != m || z_upper.len() != m || r_upper.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "lrp_linear: W {m}x{n}, z_lower {}, b {}, z_upper {}, R_upper {}",
            z_lower.len(),
            b.len(),
            z_upper.len(),
            r_upper.len()
        )));
    }
    let rule = Rule::of(config);
    let mut lower = vec![T::zero(); n];
    let mut absorbed = T::zero();
    accumulate_linear(
        &rule,
        &mut [(w, z_lower, &mut lower)],
        b,
        z_upper,
        r_upper,
        &mut absorbed,
    );
    Ok(LinearRelevance {
        lower,
        bias_absorbed: absorbed,
    })
}

/// ε-rule over a layer whose lower neurons are split across several blocks,
/// `z_upper = Σ_k W_k z_k + b`. `N` is the total lower width.
fn accumulate_linear<T: Scalar>(
    rule: &Rule<T>,
    blocks: &mut [(&Matrix<T>, &[T], &mut Vec<T>)],
    b: &[T],
    z_upper: &[T],
    r_upper: &[T],
    absorbed: &mut T,
) {
    let n: usize = blocks.iter().map(|(_, z, _)| z.len()).sum();
    for j in 0..z_upper.len() {
        let r = r_upper[j];
        if r == T::zero() {
            continue;
        }
        let (denom, share) = rule.terms(z_upper[j], b[j], n);
        let scale = r / denom;
        for (w, z_lower, out) in blocks.iter_mut() {
            for ((o, &zi), &wij) in out.iter_mut().zip(z_lower.iter()).zip(w.row(j)) {
                *o += (zi * wij + share) * scale;
            }
        }
        *absorbed += rule.absorbed(z_upper[j], b[j], r);
    }
}

/// Gate/source rule for `z = gate ⊙ source`: `(R_gate, R_source) = (0, R)`.
pub fn lrp_multiplicative<T: Scalar>(r_product: &[T]) -> (Vec<T>, Vec<T>) {
    (vec![T::zero(); r_product.len()], r_product.to_vec())
}

/// Signed per-event relevance of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceTrace<T> {
    /// One value per input event, oldest first.
    pub raw: Vec<T>,
    /// `raw` rescaled per trace to `[0, 1]` with 0.5 as neutral.
    pub display: Vec<f64>,
    pub target_class: usize,
    pub target_prob: T,
    /// Relevance placed on the target output neuron.
    pub initial_relevance: T,
    /// Total relevance kept by biases at every weighted layer (zero when δ = 1).
    pub bias_absorbed: T,
    /// Total relevance handed to gate neurons; the gate rule makes this zero.
    pub gate_relevance: T,
    /// Per-event relevance split by direction, before summation.
    pub forward_part: Vec<T>,
    pub backward_part: Vec<T>,
}

/// Per-timestep relevance of one direction, in that direction's reading order.
struct DirectionRelevance<T> {
    inputs: Vec<T>,
    bias_absorbed: T,
    gate_relevance: T,
}

fn explain_direction<T: Scalar>(
    p: &LstmDirectionParams<T>,
    trace: &DirectionTrace<T>,
    r_h_final: Vec<T>,
    rule: &Rule<T>,
) -> DirectionRelevance<T> {
    let d = p.hidden_size();
    let mut r_h = r_h_final;
    let mut r_c = vec![T::zero(); d];
    let mut absorbed = T::zero();
    let mut gate_total = T::zero();
    let mut inputs = vec![T::zero(); trace.steps.len()];
    let zero_bias = vec![T::zero(); d];

    for (t, s) in trace.steps.iter().enumerate().rev() {
        // h_t = o_t ⊙ tanh(c_t); tanh passes relevance through unchanged.
        let (r_o, r_tanh_c) = lrp_multiplicative(&r_h);
        gate_total += r_o.iter().copied().sum::<T>();
        for (rc, v) in r_c.iter_mut().zip(r_tanh_c) {
            *rc += v;
        }

        // c_t = f_t ⊙ c_{t-1} + i_t ⊙ g_t as a unit-weight, zero-bias sum.
        // At t = 0 the constant zero initial cell state is not a lower neuron.
        let mut r_fc = vec![T::zero(); d];
        let mut r_ig = vec![T::zero(); d];
        let n_sum = if t == 0 { 1 } else { 2 };
        for k in 0..d {
            let (denom, share) = rule.terms(s.c[k], zero_bias[k], n_sum);
            let scale = r_c[k] / denom;
            if t > 0 {
                r_fc[k] = (s.f[k] * s.c_prev[k] + share) * scale;
            }
            r_ig[k] = (s.i[k] * s.g[k] + share) * scale;
        }
        let (r_f, r_c_prev) = lrp_multiplicative(&r_fc);
        let (r_i, r_g) = lrp_multiplicative(&r_ig);
        gate_total += r_f.iter().copied().sum::<T>() + r_i.iter().copied().sum::<T>();

        // g_t = tanh(W_g x_t + U_g h_{t-1} + b_g) over lower neurons [x_t ; h_{t-1}].
        // At t = 0 the zero initial hidden state is excluded the same way.
        let mut r_x = vec![T::zero(); s.x.len()];
        let mut r_h_prev = vec![T::zero(); d];
        if t > 0 {
            accumulate_linear(
                rule,
                &mut [
                    (&p.candidate.w, &s.x, &mut r_x),
                    (&p.candidate.u, &s.h_prev, &mut r_h_prev),
                ],
                &p.candidate.b,
                &s.pre_g,
                &r_g,
                &mut absorbed,
            );
        } else {
            accumulate_linear(
                rule,
                &mut [(&p.candidate.w, &s.x, &mut r_x)],
                &p.candidate.b,
                &s.pre_g,
                &r_g,
                &mut absorbed,
            );
        }
        inputs[t] = r_x.iter().copied().sum();
        r_h = r_h_prev;
        r_c = r_c_prev;
    }
    DirectionRelevance {
        inputs,
        bias_absorbed: absorbed,
        gate_relevance: gate_total,
    }
}

/// Decomposes a recorded forward pass. `trace` must come from `model` without dropout.
pub fn explain_trace<T: Scalar>(
    model: &BiLstmModel<T>,
    trace: &ForwardTrace<T>,
    config: &LrpConfig,
) -> Result<RelevanceTrace<T>> {
    config.validate()?;
    let n = trace.true_length();
    if n < 2 {
        return Err(Error::TraceTooShort { len: n });
    }
    let h = model.vocab_size();
    let target = match config.target {
        Target::Predicted => argmax(&trace.probs),
        Target::Class(c) if c < h => c,
        Target::Class(c) => {
            return Err(Error::ShapeMismatch(format!(
                "target class {c} outside {h} classes"
            )))
        }
    };
    let rule = Rule::of(config);
    let r_init = match config.start_from {
        StartFrom::Logit => trace.logits[target],
        StartFrom::Probability => trace.probs[target],
    };
    let mut r_out = vec![T::zero(); h];
    r_out[target] = r_init;

    let p = &model.params;
    let d = p.hidden_size();
    let mut r_readout = vec![T::zero(); 2 * d];
    let mut absorbed = T::zero();
    accumulate_linear(
        &rule,
        &mut [(&p.w_out, &trace.readout, &mut r_readout)],
        &p.b_out,
        &trace.logits,
        &r_out,
        &mut absorbed,
    );
    let r_bwd = r_readout.split_off(d);
    let fwd = explain_direction(&p.forward, &trace.forward, r_readout, &rule);
    let bwd = explain_direction(&p.backward, &trace.backward, r_bwd, &rule);

    let backward_part: Vec<T> = bwd.inputs.iter().rev().copied().collect();
    let raw: Vec<T> = fwd
        .inputs
        .iter()
        .zip(&backward_part)
        .map(|(&a, &b)| a + b)
        .collect();
    let display = rescale_for_display(&raw.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
    Ok(RelevanceTrace {
        raw,
        display,
        target_class: target,
        target_prob: trace.probs[target],
        initial_relevance: r_init,
        bias_absorbed: absorbed + fwd.bias_absorbed + bwd.bias_absorbed,
        gate_relevance: fwd.gate_relevance + bwd.gate_relevance,
        forward_part: fwd.inputs,
        backward_part,
    })
}

/// Forward pass without dropout followed by the relevance decomposition.
pub fn explain<T: Scalar>(
    model: &BiLstmModel<T>,
    sample: &PrefixSample,
    config: &LrpConfig,
) -> Result<RelevanceTrace<T>> {
    if sample.true_length() < 2 {
        return Err(Error::TraceTooShort {
            len: sample.true_length(),
        });
    }
    let trace = model.forward_sample(sample)?;
    explain_trace(model, &trace, config)
}

/// Maps positives affinely onto `(0.5, 1.0]` (largest → 1.0) and negatives
/// onto `[0.0, 0.5)` (most negative → 0.0); zeros stay at 0.5.
pub fn rescale_for_display(raw: &[f64]) -> Vec<f64> {
    let pos_max = raw.iter().copied().filter(|&v| v > 0.0).fold(0.0, f64::max);
    let neg_max = raw
        .iter()
        .copied()
        .filter(|&v| v < 0.0)
        .map(f64::abs)
        .fold(0.0, f64::max);
    raw.iter()
        .map(|&r| {
            if r > 0.0 {
                0.5 + 0.5 * r / pos_max
            } else if r < 0.0 {
                0.5 - 0.5 * r.abs() / neg_max
            } else {
                0.5
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(epsilon: f64, delta: f64) -> LrpConfig {
        LrpConfig {
            epsilon,
            delta,
            ..LrpConfig::default()
        }
    }

    #[test]
    fn symmetric_split() {
        let w = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        // ε = 0 is outside the config contract but the rule itself is defined for it.
        let rule = LrpConfig {
            epsilon: 0.0,
            ..cfg(1.0, 0.0)
        };
        let r = lrp_linear_detailed(&[1.0, 1.0], &w, &[0.0], &[1.0], &[1.0], &rule).unwrap();
        assert_eq!(r.lower, [0.5, 0.5]);
        assert_eq!(r.bias_absorbed, 0.0);
    }

    #[test]
    fn bias_share_with_delta_one() {
        let w = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let rule = LrpConfig {
            epsilon: 0.0,
            ..cfg(1.0, 1.0)
        };
        let r = lrp_linear_detailed(&[1.0, 1.0], &w, &[1.0], &[2.0], &[1.0], &rule).unwrap();
        assert_eq!(r.lower, [0.5, 0.5]);
        assert_eq!(r.bias_absorbed, 0.0);

        let rule0 = LrpConfig {
            epsilon: 0.0,
            ..cfg(1.0, 0.0)
        };
        let r0 = lrp_linear_detailed(&[1.0, 1.0], &w, &[1.0], &[2.0], &[1.0], &rule0).unwrap();
        assert_eq!(r0.lower, [0.25, 0.25]);
        assert_eq!(r0.bias_absorbed, 0.5);
    }

    #[test]
    fn sign_of_zero_is_positive() {
        let w = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let r: Vec<f64> =
            lrp_linear(&[1.0, 1.0], &w, &[0.0], &[0.0], &[1.0], &cfg(0.1, 0.0)).unwrap();
        // denominator 0 + 0.1, shares (1 + 0.05) and (-1 + 0.05)
        assert!((r[0] - 10.5).abs() < 1e-12);
        assert!((r[1] + 9.5).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let w = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(
            lrp_linear(
                &[1.0; 2],
                &w,
                &[0.0; 2],
                &[0.0; 2],
                &[1.0; 2],
                &cfg(0.1, 0.0)
            ),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn conservation_on_random_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (m, n) = (4, 6);
            let w =
                Matrix::new(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let up = crate::tensor::affine(&w, &z, &b).unwrap();
            let r_up: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let total: f64 = r_up.iter().sum();

            let one = lrp_linear_detailed(&z, &w, &b, &up, &r_up, &cfg(0.001, 1.0)).unwrap();
            assert!((one.lower.iter().sum::<f64>() - total).abs() < 1e-6);

            let zero = lrp_linear_detailed(&z, &w, &b, &up, &r_up, &cfg(0.001, 0.0)).unwrap();
            let expected_absorbed: f64 = (0..m)
                .map(|j| b[j] * r_up[j] / (up[j] + if up[j] >= 0.0 { 0.001 } else { -0.001 }))
                .sum();
            assert!(
                (zero.bias_absorbed - expected_absorbed).abs()
                    < 1e-9 * (1.0 + expected_absorbed.abs())
            );
            let lower: f64 = zero.lower.iter().sum();
            assert!((lower + zero.bias_absorbed - total).abs() < 1e-9 * (1.0 + total.abs()));
        }
    }

    #[test]
    fn multiplicative_rule_is_literal() {
        assert_eq!(
            lrp_multiplicative(&[1.0, -2.0]),
            (vec![0.0, 0.0], vec![1.0, -2.0])
        );
        assert_eq!(lrp_multiplicative::<f64>(&[0.0]), (vec![0.0], vec![0.0]));
        let r = [0.3, -0.7, 1.1];
        let (g, s) = lrp_multiplicative(&r);
        for k in 0..3 {
            assert_eq!(g[k] + s[k], r[k]);
        }
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale_for_display(&[2.0, -1.0, 0.0]), [1.0, 0.0, 0.5]);
        assert_eq!(rescale_for_display(&[1.0, 2.0, 4.0]), [0.625, 0.75, 1.0]);
        assert_eq!(rescale_for_display(&[0.0, 0.0]), [0.5, 0.5]);
        assert_eq!(rescale_for_display(&[-3.0, -1.5]), [0.0, 0.25]);
        assert!(rescale_for_display(&[]).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.0, 0.0).validate().is_err());
        assert!(cfg(-1.0, 0.0).validate().is_err());
        assert!(cfg(1e-6, 1.0).validate().is_ok());
    }

    proptest::proptest! {
        #[test]
        fn rescale_keeps_sign_and_order(raw in proptest::collection::vec(-10.0f64..10.0, 0..12)) {
            let d = rescale_for_display(&raw);
            for (i, (&r, &v)) in raw.iter().zip(&d).enumerate() {
                proptest::prop_assert!((0.0..=1.0).contains(&v));
                proptest::prop_assert_eq!(r.partial_cmp(&0.0), v.partial_cmp(&0.5));
                for (&r2, &v2) in raw[i + 1..].iter().zip(&d[i + 1..]) {
                    if r.signum() == r2.signum() && r < r2 {
                        proptest::prop_assert!(v <= v2);
                    }
                }
            }
        }
    }
}
