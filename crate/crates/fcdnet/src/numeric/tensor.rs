//! Dense row-major f64 tensors.
//!
//! All model state and tape values are stored in this one type. 32-bit
//! storage exists only for the long-history preprocessed buffer (see
//! `ltfe::Storage`); everything that touches the tape is 64-bit.

use serde::{Deserialize, Serialize};

use crate::error::{FcdError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    /// Flat index for a multi-dimensional position.
    pub fn idx(&self, pos: &[usize]) -> usize {
        debug_assert_eq!(pos.len(), self.shape.len());
        let mut i = 0;
        for (p, s) in pos.iter().zip(&self.shape) {
            debug_assert!(p < s);
            i = i * s + p;
        }
        i
    }

    pub fn at(&self, pos: &[usize]) -> f64 {
        self.data[self.idx(pos)]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(FcdError::Numeric(format!(
                "non-finite value in {context}"
            )))
        }
    }

    /// Rearrange axes. `axes[i]` names the source axis that lands at
    /// destination axis `i`.
    pub fn permuted(&self, axes: &[usize]) -> Tensor {
        assert_eq!(axes.len(), self.shape.len());
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let mut out = Tensor::zeros(&out_shape);
        let src_strides = strides(&self.shape);
        let n = self.data.len();
        let mut pos = vec![0usize; out_shape.len()];
        for i in 0..n {
            // decode i into the destination position
            let mut rem = i;
            for (d, &s) in out_shape.iter().enumerate().rev() {
                pos[d] = rem % s;
                rem /= s;
            }
            let mut src = 0;
            for (d, &a) in axes.iter().enumerate() {
                src += pos[d] * src_strides[a];
            }
            out.data[i] = self.data[src];
        }
        out
    }
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// out[m×n] += a[m×k] · b[k×n]
pub fn matmul_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(out.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// out[m×n] += aᵀ[m×k] · b[k×n] where a is stored k×m.
pub fn matmul_at_b_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for l in 0..k {
        for i in 0..m {
            let av = a[l * m + i];
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// out[m×n] += a[m×k] · bᵀ[k×n] where b is stored n×k.
pub fn matmul_a_bt_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            let arow = &a[i * k..(i + 1) * k];
            let brow = &b[j * k..(j + 1) * k];
            for l in 0..k {
                acc += arow[l] * brow[l];
            }
            out[i * n + j] += acc;
        }
    }
}
