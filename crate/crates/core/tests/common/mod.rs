#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xnap::bilstm::{BiLstmParams, GateParams, LstmDirectionParams};
use xnap::eventlog::{EventLog, Trace};
use xnap::Matrix;

/// Plain nested-loop LSTM, written without the crate's kernels.
pub struct NaiveOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub h_fwd: Vec<f64>,
    pub h_bwd: Vec<f64>,
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gate_pre(g: &GateParams<f64>, x: &[f64], h: &[f64], j: usize) -> f64 {
    let mut s = g.b[j];
    for (k, xv) in x.iter().enumerate() {
        s += g.w[(j, k)] * xv;
    }
    for (k, hv) in h.iter().enumerate() {
        s += g.u[(j, k)] * hv;
    }
    s
}

fn run_direction(p: &LstmDirectionParams<f64>, xs: &[Vec<f64>]) -> Vec<f64> {
    let d = p.input.b.len();
    let mut h = vec![0.0; d];
    let mut c = vec![0.0; d];
    for x in xs {
        let mut h_new = vec![0.0; d];
        let mut c_new = vec![0.0; d];
        for j in 0..d {
            let i = sig(gate_pre(&p.input, x, &h, j));
            let f = sig(gate_pre(&p.forget, x, &h, j));
            let o = sig(gate_pre(&p.output, x, &h, j));
            let g = gate_pre(&p.candidate, x, &h, j).tanh();
            c_new[j] = f * c[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        h = h_new;
        c = c_new;
    }
    h
}

pub fn naive_forward(p: &BiLstmParams<f64>, xs: &[Vec<f64>]) -> NaiveOutput {
    let h_fwd = run_direction(&p.forward, xs);
    let reversed: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
    let h_bwd = run_direction(&p.backward, &reversed);
    let readout: Vec<f64> = h_fwd.iter().chain(&h_bwd).copied().collect();
    let n = p.b_out.len();
    let logits: Vec<f64> = (0..n)
        .map(|c| {
            p.b_out[c]
                + readout
                    .iter()
                    .enumerate()
                    .map(|(k, v)| p.w_out[(c, k)] * v)
                    .sum::<f64>()
        })
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs = exps.iter().map(|e| e / z).collect();
    NaiveOutput {
        logits,
        probs,
        h_fwd,
        h_bwd,
    }
}

pub fn naive_loss(p: &BiLstmParams<f64>, xs: &[Vec<f64>], label: usize) -> f64 {
    -naive_forward(p, xs).probs[label].max(1e-12).ln()
}

pub fn random_one_hot(rng: &mut ChaCha8Rng, t: usize, h: usize) -> Vec<Vec<f64>> {
    (0..t)
        .map(|_| {
            let mut row = vec![0.0; h];
            row[rng.gen_range(0..h)] = 1.0;
            row
        })
        .collect()
}

pub fn random_dense(rng: &mut ChaCha8Rng, t: usize, h: usize) -> Vec<Vec<f64>> {
    (0..t)
        .map(|_| (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

pub fn matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

pub fn random_params(seed: u64, h: usize, d: usize, scale: f64) -> BiLstmParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BiLstmParams::random(h, d, scale, &mut rng)
}

pub fn log_of(traces: &[&[&str]]) -> EventLog {
    EventLog::new(
        traces
            .iter()
            .enumerate()
            .map(|(i, t)| Trace::from_activities(&format!("c{i:03}"), t).unwrap())
            .collect(),
    )
    .unwrap()
}
