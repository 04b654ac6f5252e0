//! Long-term frequency extractor: a static low-frequency dependency graph
//! learned from the wavelet content of the full training history.
//!
//! The preprocessing half (diff → segment → wavelet filter → ST-Norm →
//! reshape) is parameter-free and runs once; the two convolutional branch
//! heads are trained end-to-end with the forecaster.

use rand_chacha::ChaCha20Rng;

use crate::numeric::optim::init_uniform;
use crate::numeric::tensor::Tensor;
use crate::numeric::{ParamStore, Tape, Var};
use crate::signal::{diff, segment, stnorm_axis0, wavelet_stack, ExecMode, Wavelet};
use crate::{FcdError, Result};

/// Default hidden width of the conv stem.
pub const CONV_CHANNELS: usize = 16;
/// Default width of the two hidden affine layers.
pub const FC_HIDDEN: usize = 64;
/// Initial value of the branch mixer β.
pub const BETA_INIT: f64 = 0.9;

/// Raw (pre-squash) value that makes the squashed mixer equal `p`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Fixed tensors feeding the two branch heads.
///
/// `q1`: N × (S·D·L) × P — per-segment wavelet content, normalized over
/// the segment axis. `q2`: N × (P·D·L) × S — per-phase content,
/// normalized over the within-segment time axis. The (s,d,l) and (p,d,l)
/// channel axes are merged lexicographically in that order.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct LtfePreprocessed {
    pub q1: Tensor,
    pub q2: Tensor,
}

/// Preprocess an already-segmented S×P×N×D tensor (useful when the
/// segmentation is produced elsewhere or needs to be manipulated).
pub fn ltfe_preprocess_segments(
    segments: &Tensor,
    wavelet: &Wavelet,
    levels: usize,
    mode: ExecMode,
) -> Result<LtfePreprocessed> {
    let (s, p, n, d) = (
        segments.shape[0],
        segments.shape[1],
        segments.shape[2],
        segments.shape[3],
    );
    if s < 2 {
        return Err(FcdError::Data(format!(
            "need at least 2 full periods of training history, got {s}"
        )));
    }
    let l = levels + 1;
    let gates = vec![1.0; l];
    let stacked = wavelet_stack(segments, wavelet, &gates, mode)?; // S×P×N×D×L
    let m = d * l;
    let merged = stacked.reshaped(&[s, p, n, m]);
    let ones = vec![1.0; m];
    let zeros = vec![0.0; m];

    // branch 1: normalize across segments, emit N×(S·D·L)×P
    let z1 = stnorm_axis0(&merged, &ones, &zeros);
    let q1 = z1.permuted(&[2, 0, 3, 1]).reshaped(&[n, s * m, p]);

    // branch 2: transpose the first two axes, normalize across the
    // within-segment time axis, emit N×(P·D·L)×S
    let zt = merged.permuted(&[1, 0, 2, 3]); // P×S×N×M
    let z2 = stnorm_axis0(&zt, &ones, &zeros);
    let q2 = z2.permuted(&[2, 0, 3, 1]).reshaped(&[n, p * m, s]);

    Ok(LtfePreprocessed { q1, q2 })
}

/// Full preprocessing pipeline from a raw T×N×D training series.
pub fn ltfe_preprocess(
    train: &Tensor,
    period: usize,
    wavelet: &Wavelet,
    levels: usize,
    mode: ExecMode,
) -> Result<LtfePreprocessed> {
    let differenced = diff(train);
    let segments = segment(&differenced, period)?;
    ltfe_preprocess_segments(&segments, wavelet, levels, mode)
}

/// Tape handles for one branch head's parameters.
#[derive(Clone, Copy)]
pub struct LtfeBranchVars {
    pub conv_k: Var,
    pub conv_b: Var,
    pub fc3_w: Var,
    pub fc3_b: Var,
    pub fc2_w: Var,
    pub fc2_b: Var,
    pub fc1_w: Var,
    pub fc1_b: Var,
}

/// Register one branch head's parameters (uniform ±√(1/fan_in)).
pub fn init_ltfe_branch(
    store: &mut ParamStore,
    rng: &mut ChaCha20Rng,
    prefix: &str,
    c_in: usize,
    n: usize,
    ch: usize,
    h: usize,
) {
    store.insert(
        &format!("{prefix}.conv_k"),
        init_uniform(rng, &[ch, c_in, 3], c_in * 3),
    );
    store.insert(&format!("{prefix}.conv_b"), Tensor::zeros(&[ch]));
    store.insert(&format!("{prefix}.fc3_w"), init_uniform(rng, &[ch, h], ch));
    store.insert(&format!("{prefix}.fc3_b"), Tensor::zeros(&[h]));
    store.insert(&format!("{prefix}.fc2_w"), init_uniform(rng, &[h, h], h));
    store.insert(&format!("{prefix}.fc2_b"), Tensor::zeros(&[h]));
    store.insert(&format!("{prefix}.fc1_w"), init_uniform(rng, &[h, n], h));
    store.insert(&format!("{prefix}.fc1_b"), Tensor::zeros(&[n]));
}

/// Load one branch's parameters onto the tape.
pub fn branch_vars(tape: &mut Tape, store: &ParamStore, prefix: &str) -> LtfeBranchVars {
    let mut p = |suffix: &str| {
        let name = format!("{prefix}.{suffix}");
        tape.param(&name, store.get(&name))
    };
    LtfeBranchVars {
        conv_k: p("conv_k"),
        conv_b: p("conv_b"),
        fc3_w: p("fc3_w"),
        fc3_b: p("fc3_b"),
        fc2_w: p("fc2_w"),
        fc2_b: p("fc2_b"),
        fc1_w: p("fc1_w"),
        fc1_b: p("fc1_b"),
    }
}

/// Smooth squash onto (0,1): χ(x) = σ(x/τ).
pub fn chi_squash(tape: &mut Tape, x: Var, tau: f64) -> Var {
    let scaled = tape.mul_scalar(x, 1.0 / tau);
    tape.sigmoid(scaled)
}

/// Scalar χ with τ=1 for oracle checks.
pub fn chi(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One branch head: conv(k=3, same) → ReLU → mean-pool over length →
/// ReLU(FC₃) → ReLU(FC₂) → FC₁ → χ. Input q: N × C_in × Len.
pub fn ltfe_branch(tape: &mut Tape, q: Var, v: &LtfeBranchVars, tau: f64) -> Result<Var> {
    let conv = tape.conv1d(q, v.conv_k, Some(v.conv_b), 1, 1)?;
    let act = tape.relu(conv); // N×C_h×Len
    let pooled = tape.mean_axis(act, 2); // N×C_h
    let h3 = tape.affine_last(pooled, v.fc3_w, Some(v.fc3_b));
    let h3 = tape.relu(h3);
    let h2 = tape.affine_last(h3, v.fc2_w, Some(v.fc2_b));
    let h2 = tape.relu(h2);
    let scores = tape.affine_last(h2, v.fc1_w, Some(v.fc1_b)); // N×N
    let a = chi_squash(tape, scores, tau);
    tape.value(a)
        .ensure_finite("ltfe branch produced non-finite graph")?;
    Ok(a)
}

/// A_LF = β·a1 + (1−β)·a2 with β = σ(β_raw) kept in (0,1).
pub fn fuse_beta(tape: &mut Tape, a1: Var, a2: Var, beta_raw: Var) -> Var {
    let beta = tape.sigmoid(beta_raw);
    let lhs = tape.scale_by(a1, beta);
    let one_minus = {
        let neg = tape.neg(beta);
        tape.add_scalar(neg, 1.0)
    };
    let rhs = tape.scale_by(a2, one_minus);
    tape.add(lhs, rhs)
}
