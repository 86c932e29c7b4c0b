use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::models::{ParamStore, TensorData};

/// Adam with per-parameter step counts. A parameter whose shape changes
/// (the PAGAN first layer growing) restarts with fresh moments.
#[derive(Debug)]
pub struct Adam {
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    slots: BTreeMap<String, Slot>,
}

#[derive(Debug)]
struct Slot {
    m: Tensor,
    v: Tensor,
    t: u64,
}

/// Serializable optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub steps: BTreeMap<String, u64>,
    #[serde(skip)]
    pub moments: BTreeMap<String, (TensorData, TensorData)>,
}

impl Adam {
    pub fn new(lr: f64, betas: (f64, f64)) -> Self {
        Self {
            lr,
            betas,
            eps: 1e-8,
            slots: BTreeMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Applies one update. `grads` pairs parameter names with gradients;
    /// undefined gradients (unused parameters) are skipped.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor>) {
        let (b1, b2) = self.betas;
        tch::no_grad(|| {
            for (name, p) in store.params_mut() {
                let Some(g) = grads.get(name).filter(|g| g.defined()) else {
                    continue;
                };
                let slot = self
                    .slots
                    .entry(name.to_string())
                    .or_insert_with(|| fresh_slot(p));
                if slot.m.size() != p.size() {
                    *slot = fresh_slot(p);
                }
                slot.t += 1;
                slot.m = &slot.m * b1 + g * (1.0 - b1);
                slot.v = &slot.v * b2 + g.square() * (1.0 - b2);
                let m_hat = &slot.m / (1.0 - b1.powi(slot.t as i32));
                let v_hat = &slot.v / (1.0 - b2.powi(slot.t as i32));
                let update = m_hat / (v_hat.sqrt() + self.eps) * self.lr;
                let _ = p.f_sub_(&update).expect("parameter update");
            }
        });
    }

    pub fn state(&self) -> AdamState {
        AdamState {
            lr: self.lr,
            betas: self.betas,
            eps: self.eps,
            steps: self.slots.iter().map(|(k, s)| (k.clone(), s.t)).collect(),
            moments: self
                .slots
                .iter()
                .map(|(k, s)| (k.clone(), (TensorData::from_tensor(&s.m), TensorData::from_tensor(&s.v))))
                .collect(),
        }
    }

    pub fn from_state(state: &AdamState) -> Self {
        let slots = state
            .moments
            .iter()
            .map(|(k, (m, v))| {
                let t = state.steps.get(k).copied().unwrap_or(0);
                (
                    k.clone(),
                    Slot {
                        m: m.to_tensor(),
                        v: v.to_tensor(),
                        t,
                    },
                )
            })
            .collect();
        Self {
            lr: state.lr,
            betas: state.betas,
            eps: state.eps,
            slots,
        }
    }
}

fn fresh_slot(p: &Tensor) -> Slot {
    Slot {
        m: p.zeros_like(),
        v: p.zeros_like(),
        t: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::Kind;

    fn store_with(values: &[f32]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert_param("w", Tensor::from_slice(values));
        s
    }

    fn grads(store: &ParamStore, loss: impl Fn(&Tensor) -> Tensor) -> BTreeMap<String, Tensor> {
        let p = store.param("w");
        let g = Tensor::run_backward(&[loss(p)], &[p], false, false);
        BTreeMap::from([("w".to_string(), g[0].shallow_clone())])
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // With bias correction the first update is lr·g/(|g|+eps) ≈ lr·sign(g).
        let mut store = store_with(&[1.0, -2.0]);
        let mut adam = Adam::new(0.1, (0.9, 0.999));
        let g = grads(&store, |p| (p * p).sum(Kind::Float));
        adam.step(&mut store, &g);
        let w = Vec::<f32>::try_from(store.param("w")).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-6 && (w[1] + 1.9).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = store_with(&[3.0, -4.0, 0.5]);
        let mut adam = Adam::new(0.05, (0.9, 0.999));
        for _ in 0..500 {
            let g = grads(&store, |p| ((p - 1.0).square()).sum(Kind::Float));
            adam.step(&mut store, &g);
        }
        let w = Vec::<f32>::try_from(store.param("w")).unwrap();
        assert!(w.iter().all(|v| (v - 1.0).abs() < 1e-2), "{w:?}");
    }

    #[test]
    fn state_roundtrip_continues_identically() {
        let mut a = store_with(&[3.0, -4.0]);
        let mut opt = Adam::new(0.05, (0.5, 0.999));
        for _ in 0..3 {
            let g = grads(&a, |p| p.square().sum(Kind::Float));
            opt.step(&mut a, &g);
        }
        let mut b = a.deep_copy();
        let mut opt_b = Adam::from_state(&opt.state());
        for _ in 0..3 {
            let g = grads(&a, |p| p.square().sum(Kind::Float));
            opt.step(&mut a, &g);
            let g = grads(&b, |p| p.square().sum(Kind::Float));
            opt_b.step(&mut b, &g);
        }
        assert!(a.param("w").equal(b.param("w")));
    }

    #[test]
    fn reshaped_parameter_restarts() {
        let mut store = store_with(&[1.0, 1.0]);
        let mut adam = Adam::new(0.1, (0.9, 0.999));
        let g = grads(&store, |p| p.sum(Kind::Float));
        adam.step(&mut store, &g);
        store.insert_param("w", Tensor::from_slice(&[1.0f32, 1.0, 1.0]));
        let g = grads(&store, |p| p.sum(Kind::Float));
        adam.step(&mut store, &g);
        assert_eq!(adam.state().steps["w"], 1);
    }
}
