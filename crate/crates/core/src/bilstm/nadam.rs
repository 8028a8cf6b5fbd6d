use crate::scalar::Scalar;

use super::params::BiLstmParams;

/// Nesterov-accelerated Adam with the momentum schedule used by Keras
/// (`schedule_decay = 0.004`).
#[derive(Debug, Clone)]
pub struct Nadam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    schedule_decay: T,
    m_schedule: T,
    step: usize,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Nadam<T> {
    pub const SCHEDULE_DECAY: f64 = 0.004;

    pub fn new(lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            lr: T::of(lr),
            beta1: T::of(beta1),
            beta2: T::of(beta2),
            epsilon: T::of(epsilon),
            schedule_decay: T::of(Self::SCHEDULE_DECAY),
            m_schedule: T::one(),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn step(&mut self, params: &mut BiLstmParams<T>, grads: &BiLstmParams<T>) {
        if self.m.is_empty() {
            self.m = grads
                .slices()
                .iter()
                .map(|s| vec![T::zero(); s.len()])
                .collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let one = T::one();
        let half = T::of(0.5);
        let decay_base = T::of(0.96);
        let t = T::of(self.step as f64);
        let cache_t = self.beta1 * (one - half * decay_base.powf(t * self.schedule_decay));
        let cache_next =
            self.beta1 * (one - half * decay_base.powf((t + one) * self.schedule_decay));
        let m_schedule_new = self.m_schedule * cache_t;
        let m_schedule_next = m_schedule_new * cache_next;
        self.m_schedule = m_schedule_new;
        let v_correction = one - self.beta2.powi(self.step as i32);

        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for k in 0..p.len() {
                let gk = g[k];
                let g_prime = gk / (one - m_schedule_new);
                m[k] = self.beta1 * m[k] + (one - self.beta1) * gk;
                let m_prime = m[k] / (one - m_schedule_next);
                v[k] = self.beta2 * v[k] + (one - self.beta2) * gk * gk;
                let v_prime = v[k] / v_correction;
                let m_bar = (one - cache_t) * g_prime + cache_next * m_prime;
                p[k] -= self.lr * m_bar / (v_prime.sqrt() + self.epsilon);
            }
        }
    }
}
