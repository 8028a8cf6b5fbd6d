use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Input weights `w` (D x H), recurrent weights `u` (D x D) and bias `b` (D) of one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams<T> {
    pub w: Matrix<T>,
    pub u: Matrix<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> GateParams<T> {
    fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(hidden, inputs),
            u: Matrix::zeros(hidden, hidden),
            b: vec![T::zero(); hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirectionParams<T> {
    pub input: GateParams<T>,
    pub forget: GateParams<T>,
    pub output: GateParams<T>,
    pub candidate: GateParams<T>,
}

impl<T: Scalar> LstmDirectionParams<T> {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            input: GateParams::zeros(inputs, hidden),
            forget: GateParams::zeros(inputs, hidden),
            output: GateParams::zeros(inputs, hidden),
            candidate: GateParams::zeros(inputs, hidden),
        }
    }

    pub fn gates(&self) -> [&GateParams<T>; 4] {
        [&self.input, &self.forget, &self.output, &self.candidate]
    }

    pub fn gates_mut(&mut self) -> [&mut GateParams<T>; 4] {
        [
            &mut self.input,
            &mut self.forget,
            &mut self.output,
            &mut self.candidate,
        ]
    }

    pub fn hidden_size(&self) -> usize {
        self.input.b.len()
    }

    pub fn input_size(&self) -> usize {
        self.input.w.cols()
    }
}

/// Every trainable tensor of the model. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams<T> {
    pub forward: LstmDirectionParams<T>,
    pub backward: LstmDirectionParams<T>,
    /// H x 2D; columns `0..D` read the forward state, `D..2D` the backward state.
    pub w_out: Matrix<T>,
    pub b_out: Vec<T>,
}

fn glorot<T: Scalar, R: Rng>(m: &mut Matrix<T>, rng: &mut R) {
    let limit = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
    for v in m.as_mut_slice() {
        *v = T::of(rng.gen_range(-limit..limit));
    }
}

impl<T: Scalar> BiLstmParams<T> {
    pub fn zeros(vocab_size: usize, hidden: usize) -> Self {
        Self {
            forward: LstmDirectionParams::zeros(vocab_size, hidden),
            backward: LstmDirectionParams::zeros(vocab_size, hidden),
            w_out: Matrix::zeros(vocab_size, 2 * hidden),
            b_out: vec![T::zero(); vocab_size],
        }
    }

    /// Glorot-uniform weights, zero biases except forget gates at one.
    pub fn init<R: Rng>(vocab_size: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(vocab_size, hidden);
        for dir in [&mut p.forward, &mut p.backward] {
            for gate in dir.gates_mut() {
                glorot(&mut gate.w, rng);
                glorot(&mut gate.u, rng);
            }
            dir.forget.b.iter_mut().for_each(|b| *b = T::one());
        }
        glorot(&mut p.w_out, rng);
        p
    }

    /// Uniform(-scale, scale) in every entry, biases included.
    pub fn random<R: Rng>(vocab_size: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(vocab_size, hidden);
        for s in p.slices_mut() {
            for v in s {
                *v = T::of(rng.gen_range(-scale..scale));
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size(), self.hidden_size())
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    pub fn vocab_size(&self) -> usize {
        self.b_out.len()
    }

    /// All tensors in a fixed order.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(26);
        for dir in [&self.forward, &self.backward] {
            for g in dir.gates() {
                out.push(g.w.as_slice());
                out.push(g.u.as_slice());
                out.push(g.b.as_slice());
            }
        }
        out.push(self.w_out.as_slice());
        out.push(self.b_out.as_slice());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(26);
        for dir in [&mut self.forward, &mut self.backward] {
            for g in dir.gates_mut() {
                out.push(g.w.as_mut_slice());
                out.push(g.u.as_mut_slice());
                out.push(g.b.as_mut_slice());
            }
        }
        out.push(self.w_out.as_mut_slice());
        out.push(self.b_out.as_mut_slice());
        out
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Flat coordinate `k` in [`slices`](Self::slices) order.
    pub fn get_flat(&self, mut k: usize) -> T {
        for s in self.slices() {
            if k < s.len() {
                return s[k];
            }
            k -= s.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_flat(&mut self, mut k: usize, value: T) {
        for s in self.slices_mut() {
            if k < s.len() {
                s[k] = value;
                return;
            }
            k -= s.len();
        }
        panic!("flat index out of range")
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for s in self.slices_mut() {
            for x in s {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> T {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }
}
