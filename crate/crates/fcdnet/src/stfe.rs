//! Short-term frequency extractor: a per-batch dynamic dependency graph
//! built from FFT features of the current input window.
//!
//! The whole batch shares one graph — the batch axis is folded into the
//! feature axis before the spectral projection, so the declared batch
//! size B is baked into the parameter shapes.

use rand_chacha::ChaCha20Rng;

use crate::ltfe::chi_squash;
use crate::numeric::optim::init_uniform;
use crate::numeric::tensor::Tensor;
use crate::numeric::{ParamStore, Tape, Var};
use crate::signal::fft_real;
use crate::{FcdError, Result};

/// Default spectral feature width.
pub const DEFAULT_FREQ_FEATURES: usize = 10;

/// Shape bookkeeping for the extractor parameters.
#[derive(Clone, Copy, Debug)]
pub struct StfeDims {
    pub batch: usize,
    pub t_in: usize,
    pub nodes: usize,
    pub features: usize,
    pub freq: usize,
}

/// Tape handles for the extractor parameters: `w_u_real`/`w_u_imag`
/// project the spectrum's parts (B·D)→F, `w_g`/`w_m`/`w_s` fuse the
/// filtered signal, amplitude, and phase F→N, and `w_t` contracts the
/// time axis. No biases anywhere.
#[derive(Clone, Copy)]
pub struct StfeVars {
    pub w_u_real: Var,
    pub w_u_imag: Var,
    pub w_g: Var,
    pub w_m: Var,
    pub w_s: Var,
    pub w_t: Var,
}

/// Register the extractor parameters under `prefix`.
pub fn init_stfe(store: &mut ParamStore, rng: &mut ChaCha20Rng, prefix: &str, dims: StfeDims) {
    let bd = dims.batch * dims.features;
    let f = dims.freq;
    store.insert(
        &format!("{prefix}.w_u_real"),
        init_uniform(rng, &[bd, f], bd),
    );
    store.insert(
        &format!("{prefix}.w_u_imag"),
        init_uniform(rng, &[bd, f], bd),
    );
    store.insert(&format!("{prefix}.w_g"), init_uniform(rng, &[f, dims.nodes], f));
    store.insert(&format!("{prefix}.w_m"), init_uniform(rng, &[f, dims.nodes], f));
    store.insert(&format!("{prefix}.w_s"), init_uniform(rng, &[f, dims.nodes], f));
    store.insert(
        &format!("{prefix}.w_t"),
        init_uniform(rng, &[dims.t_in], dims.t_in),
    );
}

/// Load the extractor parameters onto the tape.
pub fn stfe_vars(tape: &mut Tape, store: &ParamStore, prefix: &str) -> StfeVars {
    let mut p = |suffix: &str| {
        let name = format!("{prefix}.{suffix}");
        tape.param(&name, store.get(&name))
    };
    StfeVars {
        w_u_real: p("w_u_real"),
        w_u_imag: p("w_u_imag"),
        w_g: p("w_g"),
        w_m: p("w_m"),
        w_s: p("w_s"),
        w_t: p("w_t"),
    }
}

/// Dynamic graph from one input batch x: B×T_in×N×D →
/// spectrum (N×T_in×(B·D)) → V_r, V_i (N×T_in×F) → amplitude, phase,
/// filtered signal → fused T_in×N×N → time contraction → χ → N×N.
pub fn stfe_forward(
    tape: &mut Tape,
    x: &Tensor,
    vars: &StfeVars,
    dims: StfeDims,
    tau: f64,
) -> Result<Var> {
    let (b, t, n, d) = (dims.batch, dims.t_in, dims.nodes, dims.features);
    if x.shape != [b, t, n, d] {
        return Err(FcdError::Shape(format!(
            "input batch shape {:?} does not match declared B×T_in×N×D = [{b}, {t}, {n}, {d}]",
            x.shape
        )));
    }
    let bd = b * d;
    // spectrum of each (node, batch·feature) series along the time axis
    let mut re = Tensor::zeros(&[n, t, bd]);
    let mut im = Tensor::zeros(&[n, t, bd]);
    let mut series = vec![0.0; t];
    for ni in 0..n {
        for bi in 0..b {
            for di in 0..d {
                for ti in 0..t {
                    series[ti] = x.at(&[bi, ti, ni, di]);
                }
                let spec = fft_real(&series);
                let c = bi * d + di;
                for ti in 0..t {
                    re.data[(ni * t + ti) * bd + c] = spec[ti].0;
                    im.data[(ni * t + ti) * bd + c] = spec[ti].1;
                }
            }
        }
    }
    let re = tape.constant(re);
    let im = tape.constant(im);
    let v_r = tape.affine_last(re, vars.w_u_real, None); // N×T×F
    let v_i = tape.affine_last(im, vars.w_u_imag, None);
    let amp = tape.hypot(v_r, v_i);
    let phase = tape.atan_ratio(v_r, v_i);
    let filtered = tape.ifft_real(v_r, v_i); // N×T×F

    let g = tape.permute(filtered, &[1, 0, 2]); // T×N×F
    let amp_t = tape.permute(amp, &[1, 0, 2]);
    let phase_t = tape.permute(phase, &[1, 0, 2]);
    let mg = tape.affine_last(g, vars.w_g, None); // T×N×N
    let mm = tape.affine_last(amp_t, vars.w_m, None);
    let ms = tape.affine_last(phase_t, vars.w_s, None);
    let m = tape.add(mg, mm);
    let m = tape.add(m, ms);

    // contract the time axis with w_t
    let mp = tape.permute(m, &[1, 2, 0]); // N×N×T
    let weighted = tape.mul_last(mp, vars.w_t);
    let contracted = tape.sum_axis(weighted, 2); // N×N
    let a = chi_squash(tape, contracted, tau);
    tape.value(a)
        .ensure_finite("stfe produced non-finite graph")?;
    Ok(a)
}

/// Pad a short batch of window starts up to `b` by repeating the last
/// start; the validity mask flags real positions.
pub fn pad_batch(starts: &[usize], b: usize) -> Result<(Vec<usize>, Vec<bool>)> {
    if starts.is_empty() {
        return Err(FcdError::Data("cannot pad an empty batch".into()));
    }
    if starts.len() > b {
        return Err(FcdError::Data(format!(
            "batch of {} exceeds declared size {b}",
            starts.len()
        )));
    }
    let mut padded = starts.to_vec();
    let mut valid = vec![true; starts.len()];
    let last = *starts.last().unwrap();
    while padded.len() < b {
        padded.push(last);
        valid.push(false);
    }
    Ok((padded, valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::{check_gradients, max_rel_err};
    use rand::{Rng, SeedableRng};

    fn dims() -> StfeDims {
        StfeDims {
            batch: 4,
            t_in: 12,
            nodes: 8,
            features: 1,
            freq: 10,
        }
    }

    fn rand_input(d: StfeDims, seed: u64) -> Tensor {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = Tensor::zeros(&[d.batch, d.t_in, d.nodes, d.features]);
        for v in x.data.iter_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        x
    }

    fn fresh_store(d: StfeDims, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        init_stfe(&mut store, &mut rng, "stfe", d);
        store
    }

    #[test]
    fn declared_parameter_shapes() {
        let d = dims();
        let store = fresh_store(d, 0);
        assert_eq!(store.get("stfe.w_u_real").shape, vec![4, 10]);
        assert_eq!(store.get("stfe.w_u_imag").shape, vec![4, 10]);
        assert_eq!(store.get("stfe.w_g").shape, vec![10, 8]);
        assert_eq!(store.get("stfe.w_t").shape, vec![12]);
    }

    #[test]
    fn graph_shape_and_range() {
        let d = dims();
        for seed in 0..10 {
            let store = fresh_store(d, seed);
            let x = rand_input(d, 100 + seed);
            let mut tape = Tape::new();
            let vars = stfe_vars(&mut tape, &store, "stfe");
            let a = stfe_forward(&mut tape, &x, &vars, d, 1.0).unwrap();
            let out = tape.value(a);
            assert_eq!(out.shape, vec![8, 8]);
            assert!(out.all_finite());
            assert!(out.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn zero_input_gives_uniform_half_graph() {
        let d = dims();
        let store = fresh_store(d, 3);
        let x = Tensor::zeros(&[d.batch, d.t_in, d.nodes, d.features]);
        let mut tape = Tape::new();
        let vars = stfe_vars(&mut tape, &store, "stfe");
        let a = stfe_forward(&mut tape, &x, &vars, d, 1.0).unwrap();
        for &v in &tape.value(a).data {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_batch_size_is_rejected() {
        let d = dims();
        let store = fresh_store(d, 3);
        let x = Tensor::zeros(&[d.batch - 1, d.t_in, d.nodes, d.features]);
        let mut tape = Tape::new();
        let vars = stfe_vars(&mut tape, &store, "stfe");
        assert!(stfe_forward(&mut tape, &x, &vars, d, 1.0).is_err());
    }

    #[test]
    fn graph_is_batch_sensitive_and_pure() {
        let d = dims();
        let store = fresh_store(d, 7);
        let x = rand_input(d, 42);
        let eval = |x: &Tensor| {
            let mut tape = Tape::new();
            let vars = stfe_vars(&mut tape, &store, "stfe");
            let a = stfe_forward(&mut tape, x, &vars, d, 1.0).unwrap();
            tape.value(a).clone()
        };
        let base = eval(&x);
        // purity: identical batches → identical graphs, bitwise
        assert_eq!(base.data, eval(&x).data);
        // sensitivity: perturbing a single sample moves the shared graph
        let mut x2 = x.clone();
        let i = x2.idx(&[2, 5, 3, 0]);
        x2.data[i] += 1.0;
        let moved = eval(&x2);
        assert_ne!(base.data, moved.data);
    }

    #[test]
    fn gradients_reach_every_parameter() {
        let d = StfeDims {
            batch: 2,
            t_in: 6,
            nodes: 3,
            features: 1,
            freq: 4,
        };
        let mut store = fresh_store(d, 11);
        let x = rand_input(d, 12);
        let run = |s: &ParamStore| {
            let mut tape = Tape::new();
            let vars = stfe_vars(&mut tape, s, "stfe");
            let a = stfe_forward(&mut tape, &x, &vars, d, 1.0).unwrap();
            let sq = tape.mul(a, a);
            let loss = tape.sum_all(sq);
            (tape, loss)
        };
        let (tape, loss) = run(&store);
        let analytic = tape.param_grads(loss).unwrap();
        for name in ["w_u_real", "w_u_imag", "w_g", "w_m", "w_s", "w_t"] {
            let g = &analytic[&format!("stfe.{name}")];
            assert!(
                g.data.iter().any(|&v| v.abs() > 1e-12),
                "no gradient reached stfe.{name}"
            );
        }
        let reports = check_gradients(
            &mut store,
            &analytic,
            |s| {
                let (tape, loss) = run(s);
                tape.value(loss).data[0]
            },
            1e-5,
        );
        assert!(max_rel_err(&reports) < 1e-4, "{reports:?}");
    }

    #[test]
    fn pad_batch_policies() {
        let (padded, valid) = pad_batch(&[10, 20, 30], 4).unwrap();
        assert_eq!(padded, vec![10, 20, 30, 30]);
        assert_eq!(valid, vec![true, true, true, false]);

        let (padded, valid) = pad_batch(&[1, 2, 3, 4], 4).unwrap();
        assert_eq!(padded, vec![1, 2, 3, 4]);
        assert!(valid.iter().all(|&v| v));

        assert!(pad_batch(&[], 4).is_err());
        assert!(pad_batch(&[1, 2, 3, 4, 5], 4).is_err());
    }
}
