//! Bias-corrected Adam.

use crate::params::{Grads, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Grads,
    pub v: Grads,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        AdamState {
            m: Grads::zeros_like(store),
            v: Grads::zeros_like(store),
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPS,
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        adam_update(self, store, grads, lr)
    }
}

pub fn adam_update(state: &mut AdamState, store: &mut ParamStore, grads: &Grads, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let i = id.index();
        let g = &grads.0[i];
        let m = &mut state.m.0[i];
        let v = &mut state.v.0[i];
        assert_eq!(g.len(), m.len(), "gradient shape for {}", store.name(id));
        let p = store.get_mut(id).data_mut();
        for j in 0..g.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            p[j] -= lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
}
