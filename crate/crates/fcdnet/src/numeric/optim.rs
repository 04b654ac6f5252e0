//! Named parameter storage and the Adam optimizer.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FcdError, Result};
use crate::numeric::tensor::Tensor;

/// All trainable parameters, keyed by name. BTreeMap keeps iteration order
/// deterministic across runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        assert!(
            self.map.insert(name.to_string(), t).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Total scalar parameter count.
    pub fn count(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }
}

/// Uniform init in ±sqrt(1/fan_in), the usual dense-layer default.
pub fn init_uniform(rng: &mut ChaCha20Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

/// Per-parameter first/second moments plus the shared step counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: BTreeMap<String, Tensor> = params
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros(&t.shape)))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with bias correction. Parameters missing from `grads`
/// are treated as zero-gradient (their moments still decay).
pub fn adam_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    assert!(lr >= 0.0, "learning rate must be nonnegative");
    for (name, g) in grads {
        let p = params.map.get(name).ok_or_else(|| {
            FcdError::Shape(format!("gradient for unknown parameter {name}"))
        })?;
        if p.shape != g.shape {
            return Err(FcdError::Shape(format!(
                "gradient shape {:?} does not match parameter {name} shape {:?}",
                g.shape, p.shape
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let zero = Tensor::scalar(0.0);
    for (name, p) in params.map.iter_mut() {
        let g = grads.get(name).unwrap_or(&zero);
        let m = state.m.get_mut(name).expect("moment for parameter");
        let v = state.v.get_mut(name).expect("moment for parameter");
        for i in 0..p.data.len() {
            let gi = if g.data.len() == p.data.len() {
                g.data[i]
            } else {
                0.0
            };
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            p.data[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) {
    let sq: f64 = grads
        .values()
        .map(|g| g.data.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.data.iter_mut() {
                *v *= scale;
            }
        }
    }
}
