//! Spectral graph filters and polynomial graph convolution shared by the
//! two forecasting branches.

use crate::numeric::{Tape, Var};
use crate::numeric::tensor::Tensor;

/// Identity leak added to both filters.
pub const FILTER_EPSILON: f64 = 0.3;

/// Floor applied to node degrees before the inverse square root.
pub const DEGREE_FLOOR: f64 = 1e-6;

/// Low/high-pass filter pair derived from one adjacency matrix.
/// By construction `low + high == 2ε·I`.
#[derive(Clone, Copy)]
pub struct FilterPair {
    pub low: Var,
    pub high: Var,
}

/// Symmetric normalization D^{-1/2}·A·D^{-1/2} with degrees floored at
/// [`DEGREE_FLOOR`], then
///   low  = ε·I + Â_sym
///   high = ε·I − Â_sym.
pub fn build_filters(tape: &mut Tape, adj: Var, epsilon: f64) -> FilterPair {
    let n = tape.shape(adj)[0];
    assert_eq!(tape.shape(adj), &[n, n], "adjacency must be square");
    let deg = tape.sum_axis(adj, 1);
    // max(deg, floor) via a shifted relu; keeps the graph differentiable
    let shifted = tape.add_scalar(deg, -DEGREE_FLOOR);
    let pos = tape.relu(shifted);
    let floored = tape.add_scalar(pos, DEGREE_FLOOR);
    let d_isqrt = tape.rsqrt(floored);
    // scale rows, then columns
    let at = tape.permute(adj, &[1, 0]);
    let rows_scaled_t = tape.mul_last(at, d_isqrt);
    let rows_scaled = tape.permute(rows_scaled_t, &[1, 0]);
    let sym = tape.mul_last(rows_scaled, d_isqrt);
    let eye = {
        let mut e = Tensor::eye(n);
        for v in e.data.iter_mut() {
            *v *= epsilon;
        }
        tape.constant(e)
    };
    let low = tape.add(eye, sym);
    let neg_sym = tape.neg(sym);
    let high = tape.add(eye, neg_sym);
    FilterPair { low, high }
}

/// Convex blend γ·low + (1−γ)·high with a scalar (possibly learned) γ.
pub fn fuse_gamma(tape: &mut Tape, filters: FilterPair, gamma: Var) -> Var {
    assert!(tape.value(gamma).is_scalar(), "gamma must be scalar");
    let lo = tape.scale_by(filters.low, gamma);
    let one_minus = {
        let neg = tape.neg(gamma);
        tape.add_scalar(neg, 1.0)
    };
    let hi = tape.scale_by(filters.high, one_minus);
    tape.add(lo, hi)
}

/// Σ_{k=0}^{K} Â^k·x·W_k for x: B×N×C and weights[k]: C×C_out.
/// The polynomial order K is `weights.len() - 1`.
pub fn poly_graph_conv(
    tape: &mut Tape,
    a_hat: Var,
    x: Var,
    weights: &[Var],
    bias: Option<Var>,
) -> Var {
    assert!(!weights.is_empty(), "need at least the k=0 term");
    let mut hop = x;
    let mut acc = tape.affine_last(x, weights[0], None);
    for &w in &weights[1..] {
        hop = tape.graph_apply(a_hat, hop);
        let term = tape.affine_last(hop, w, None);
        acc = tape.add(acc, term);
    }
    if let Some(b) = bias {
        acc = tape.add_last(acc, b);
    }
    acc
}
