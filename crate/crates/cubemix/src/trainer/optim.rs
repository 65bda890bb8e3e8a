//! First-order optimizers over a parameter store.

use serde::{Deserialize, Serialize};

use crate::layers::ParamStore;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    /// Heavy-ball momentum with coefficient 0.9.
    SgdMomentum,
    /// Adam with beta1 0.9, beta2 0.999, eps 1e-8.
    Adam,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam
    }
}

const MOMENTUM: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    /// First-moment (or momentum) buffer per parameter.
    m: Vec<Vec<T>>,
    /// Second-moment buffer per parameter (Adam only).
    v: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, params: &ParamStore<T>) -> Self {
        let m = params.iter().map(|p| vec![T::ZERO; p.value.len()]).collect();
        let v = match kind {
            OptimizerKind::Adam => {
                params.iter().map(|p| vec![T::ZERO; p.value.len()]).collect()
            }
            _ => Vec::new(),
        };
        Optimizer {
            kind,
            m,
            v,
            step: 0,
        }
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, params: &mut ParamStore<T>, lr: f64) {
        self.step += 1;
        let lr = T::from_f64(lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    for (value, &g) in p.value.iter_mut().zip(&p.grad) {
                        *value -= lr * g;
                    }
                }
            }
            OptimizerKind::SgdMomentum => {
                let mu = T::from_f64(MOMENTUM);
                for (idx, p) in params.iter_mut().enumerate() {
                    let m = &mut self.m[idx];
                    for ((value, &g), mv) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()) {
                        *mv = mu * *mv + g;
                        *value -= lr * *mv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let b1 = T::from_f64(ADAM_BETA1);
                let b2 = T::from_f64(ADAM_BETA2);
                let eps = T::from_f64(ADAM_EPS);
                let bc1 = T::from_f64(1.0 - ADAM_BETA1.powi(self.step as i32));
                let bc2 = T::from_f64(1.0 - ADAM_BETA2.powi(self.step as i32));
                for (idx, p) in params.iter_mut().enumerate() {
                    let m = &mut self.m[idx];
                    let v = &mut self.v[idx];
                    for (((value, &g), mv), vv) in p
                        .value
                        .iter_mut()
                        .zip(&p.grad)
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mv = b1 * *mv + (T::ONE - b1) * g;
                        *vv = b2 * *vv + (T::ONE - b2) * g * g;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *value -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
