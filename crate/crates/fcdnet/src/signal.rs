//! Deterministic signal transforms: differencing, segmentation, multilevel
//! Daubechies wavelet analysis/synthesis with coefficient gating, FFT/IFFT,
//! amplitude/phase extraction, and ST-Norm.
//!
//! Everything here is a pure function; batch drivers can run data-parallel
//! across independent series.

use std::f64::consts::PI;

use crate::error::{FcdError, Result};
use crate::numeric::Tensor;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution policy for batch transforms. `Parallel` falls back to
/// sequential when the `parallel` feature is disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

// ── differencing and segmentation ────────────────────────────────────

/// First difference along time with a leading zero slice:
/// out[0] = 0, out[t] = x[t] − x[t−1].
pub fn diff(series: &Tensor) -> Tensor {
    assert_eq!(series.shape.len(), 3, "diff expects T×N×D");
    let t = series.shape[0];
    let inner: usize = series.shape[1..].iter().product();
    let mut out = Tensor::zeros(&series.shape);
    for ti in 1..t {
        for j in 0..inner {
            out.data[ti * inner + j] =
                series.data[ti * inner + j] - series.data[(ti - 1) * inner + j];
        }
    }
    out
}

/// Split T×N×D into ⌊T/P⌋ contiguous segments of length P, dropping the
/// trailing remainder. Output is S×P×N×D.
pub fn segment(series: &Tensor, period: usize) -> Result<Tensor> {
    assert_eq!(series.shape.len(), 3, "segment expects T×N×D");
    let t = series.shape[0];
    if t < period {
        return Err(FcdError::Shape(format!(
            "series length {t} shorter than period {period}"
        )));
    }
    let s = t / period;
    let inner: usize = series.shape[1..].iter().product();
    let mut out = Tensor::zeros(&[s, period, series.shape[1], series.shape[2]]);
    out.data
        .copy_from_slice(&series.data[..s * period * inner]);
    Ok(out)
}

// ── Daubechies wavelets, periodized ──────────────────────────────────

/// Orthonormal Daubechies scaling filters (2·order taps). Order 4 is the
/// default smooth choice; the synthesis bank is the exact adjoint, so
/// reconstruction is perfect for any even length under periodization.
#[derive(Debug, Clone)]
pub struct Wavelet {
    pub order: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Wavelet {
    pub fn daubechies(order: usize) -> Result<Wavelet> {
        let lo: Vec<f64> = match order {
            1 => vec![std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
            2 => vec![
                0.482962913144690,
                0.836516303737469,
                0.224143868041857,
                -0.129409522550921,
            ],
            3 => vec![
                0.332670552950957,
                0.806891509313339,
                0.459877502119331,
                -0.135011020010391,
                -0.085441273882241,
                0.035226291882101,
            ],
            4 => vec![
                0.230377813308855,
                0.714846570552542,
                0.630880767929590,
                -0.027983769416984,
                -0.187034811718881,
                0.030841381835987,
                0.032883011666983,
                -0.010597401784997,
            ],
            _ => {
                return Err(FcdError::Config(format!(
                    "unsupported Daubechies order {order} (1..=4)"
                )))
            }
        };
        let taps = lo.len();
        let hi: Vec<f64> = (0..taps)
            .map(|m| {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                sign * lo[taps - 1 - m]
            })
            .collect();
        Ok(Wavelet { order, lo, hi })
    }

    pub fn taps(&self) -> usize {
        self.lo.len()
    }

    /// One analysis step: periodized correlate-and-downsample.
    fn analyze(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = x.len();
        debug_assert!(p.is_multiple_of(2));
        let half = p / 2;
        let mut approx = vec![0.0; half];
        let mut detail = vec![0.0; half];
        for k in 0..half {
            let mut a = 0.0;
            let mut d = 0.0;
            for m in 0..self.taps() {
                let xi = x[(2 * k + m) % p];
                a += self.lo[m] * xi;
                d += self.hi[m] * xi;
            }
            approx[k] = a;
            detail[k] = d;
        }
        (approx, detail)
    }

    /// One synthesis step, the exact adjoint of `analyze`.
    fn synthesize(&self, approx: &[f64], detail: &[f64]) -> Vec<f64> {
        let half = approx.len();
        let p = 2 * half;
        let mut x = vec![0.0; p];
        for k in 0..half {
            for m in 0..self.taps() {
                let i = (2 * k + m) % p;
                x[i] += self.lo[m] * approx[k] + self.hi[m] * detail[k];
            }
        }
        x
    }
}

/// Multilevel decomposition of a length-P signal into
/// `[approx(depth), detail(depth), detail(depth−1), …, detail(1)]` with
/// `depth = levels` halvings. P must be divisible by 2^levels.
pub fn dwt_decompose(signal: &[f64], wavelet: &Wavelet, levels: usize) -> Result<Vec<Vec<f64>>> {
    let p = signal.len();
    let div = 1usize << levels;
    if levels == 0 || !p.is_multiple_of(div) {
        let suggestion = (p / div.max(1)).max(1) * div;
        return Err(FcdError::Shape(format!(
            "signal length {p} not divisible by 2^{levels}; nearest compatible length is {suggestion}"
        )));
    }
    let mut details: Vec<Vec<f64>> = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = wavelet.analyze(&current);
        details.push(d);
        current = a;
    }
    let mut coeffs = Vec::with_capacity(levels + 1);
    coeffs.push(current);
    while let Some(d) = details.pop() {
        coeffs.push(d);
    }
    Ok(coeffs)
}

/// C[i] = λ_i ⊙ coeffs[i], one scalar gate per level.
pub fn gate_coeffs(coeffs: &[Vec<f64>], gates: &[f64]) -> Vec<Vec<f64>> {
    assert_eq!(coeffs.len(), gates.len(), "one gate per coefficient level");
    coeffs
        .iter()
        .zip(gates)
        .map(|(c, &g)| c.iter().map(|&v| g * v).collect())
        .collect()
}

/// Reconstruct one sub-series per level: level i is synthesized with every
/// other level's coefficients zeroed. Returns P×L (row t, column level).
pub fn reconstruct_levels(coeffs: &[Vec<f64>], wavelet: &Wavelet) -> Tensor {
    let l = coeffs.len();
    let levels = l - 1;
    let p = coeffs[l - 1].len() * 2;
    let mut out = Tensor::zeros(&[p, l]);
    for li in 0..l {
        let mut masked: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|c| vec![0.0; c.len()])
            .collect();
        masked[li] = coeffs[li].clone();
        let mut a = masked[0].clone();
        for j in 0..levels {
            a = wavelet.synthesize(&a, &masked[1 + j]);
        }
        for t in 0..p {
            out.data[t * l + li] = a[t];
        }
    }
    out
}

/// Decompose → gate → per-level reconstruct for every (segment, node,
/// feature) series of an S×P×N×D tensor. Output is S×P×N×D×L.
pub fn wavelet_stack(
    segments: &Tensor,
    wavelet: &Wavelet,
    gates: &[f64],
    mode: ExecMode,
) -> Result<Tensor> {
    assert_eq!(segments.shape.len(), 4, "wavelet_stack expects S×P×N×D");
    let (s, p, n, d) = (
        segments.shape[0],
        segments.shape[1],
        segments.shape[2],
        segments.shape[3],
    );
    let l = gates.len();
    let levels = l - 1;
    let series_count = s * n * d;
    let extract = |idx: usize| -> Vec<f64> {
        let si = idx / (n * d);
        let ni = (idx / d) % n;
        let di = idx % d;
        (0..p)
            .map(|t| segments.at(&[si, t, ni, di]))
            .collect()
    };
    let process = |idx: usize| -> Result<Tensor> {
        let series = extract(idx);
        let coeffs = dwt_decompose(&series, wavelet, levels)?;
        let gated = gate_coeffs(&coeffs, gates);
        Ok(reconstruct_levels(&gated, wavelet))
    };
    let per_series: Vec<Tensor> = match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..series_count)
            .into_par_iter()
            .map(process)
            .collect::<Result<Vec<_>>>()?,
        _ => (0..series_count)
            .map(process)
            .collect::<Result<Vec<_>>>()?,
    };
    let mut out = Tensor::zeros(&[s, p, n, d, l]);
    for (idx, sub) in per_series.iter().enumerate() {
        let si = idx / (n * d);
        let ni = (idx / d) % n;
        let di = idx % d;
        for t in 0..p {
            for li in 0..l {
                let oi = out.idx(&[si, t, ni, di, li]);
                out.data[oi] = sub.data[t * l + li];
            }
        }
    }
    Ok(out)
}

// ── Fourier transforms ───────────────────────────────────────────────

pub type Cx = (f64, f64);

fn cx_mul(a: Cx, b: Cx) -> Cx {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// In-place radix-2 Cooley–Tukey; `len` must be a power of two.
/// `sign` is −1 for the forward transform, +1 for the inverse kernel.
fn fft_pow2(buf: &mut [Cx], sign: f64) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let wlen = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut w = (1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = cx_mul(buf[i + k + len / 2], w);
                buf[i + k] = (u.0 + v.0, u.1 + v.1);
                buf[i + k + len / 2] = (u.0 - v.0, u.1 - v.1);
                w = cx_mul(w, wlen);
            }
            i += len;
        }
        len <<= 1;
    }
}

/// Bluestein's algorithm: exact DFT of arbitrary length via a power-of-two
/// convolution. Used whenever the input length is not a power of two.
fn fft_bluestein(x: &[Cx], sign: f64) -> Vec<Cx> {
    let n = x.len();
    let m = (2 * n - 1).next_power_of_two();
    // chirp c[k] = exp(sign·iπk²/n)
    let chirp: Vec<Cx> = (0..n)
        .map(|k| {
            let ang = sign * PI * ((k as u64 * k as u64) % (2 * n as u64)) as f64 / n as f64;
            (ang.cos(), ang.sin())
        })
        .collect();
    let mut a = vec![(0.0, 0.0); m];
    for k in 0..n {
        a[k] = cx_mul(x[k], chirp[k]);
    }
    let mut b = vec![(0.0, 0.0); m];
    for k in 0..n {
        let conj = (chirp[k].0, -chirp[k].1);
        b[k] = conj;
        if k != 0 {
            b[m - k] = conj;
        }
    }
    fft_pow2(&mut a, -1.0);
    fft_pow2(&mut b, -1.0);
    for k in 0..m {
        a[k] = cx_mul(a[k], b[k]);
    }
    fft_pow2(&mut a, 1.0);
    let scale = 1.0 / m as f64;
    (0..n)
        .map(|k| {
            let v = (a[k].0 * scale, a[k].1 * scale);
            cx_mul(v, chirp[k])
        })
        .collect()
}

/// Unnormalized forward DFT of arbitrary length.
pub fn fft(x: &[Cx]) -> Vec<Cx> {
    let n = x.len();
    if n <= 1 {
        return x.to_vec();
    }
    if n.is_power_of_two() {
        let mut buf = x.to_vec();
        fft_pow2(&mut buf, -1.0);
        buf
    } else {
        fft_bluestein(x, -1.0)
    }
}

/// Inverse DFT carrying the 1/T factor, so ifft(fft(x)) = x.
pub fn ifft(x: &[Cx]) -> Vec<Cx> {
    let n = x.len();
    if n <= 1 {
        return x.to_vec();
    }
    let mut out = if n.is_power_of_two() {
        let mut buf = x.to_vec();
        fft_pow2(&mut buf, 1.0);
        buf
    } else {
        fft_bluestein(x, 1.0)
    };
    let scale = 1.0 / n as f64;
    for v in out.iter_mut() {
        v.0 *= scale;
        v.1 *= scale;
    }
    out
}

pub fn fft_real(x: &[f64]) -> Vec<Cx> {
    fft(&x.iter().map(|&v| (v, 0.0)).collect::<Vec<_>>())
}

// ── amplitude / phase ────────────────────────────────────────────────

/// Amplitude sqrt(r²+i²) and phase arctan(r/i), with i = 0 mapped to
/// sign(r)·π/2 (0 when both are 0). The phase always lies in [−π/2, π/2].
pub fn amplitude_phase(re: &Tensor, im: &Tensor) -> (Tensor, Tensor) {
    assert_eq!(re.shape, im.shape);
    let amp = Tensor::new(
        re.shape.clone(),
        re.data
            .iter()
            .zip(&im.data)
            .map(|(&r, &i)| (r * r + i * i).sqrt())
            .collect(),
    );
    let phase = Tensor::new(
        re.shape.clone(),
        re.data
            .iter()
            .zip(&im.data)
            .map(|(&r, &i)| {
                if i == 0.0 {
                    if r == 0.0 {
                        0.0
                    } else {
                        r.signum() * PI / 2.0
                    }
                } else {
                    (r / i).atan()
                }
            })
            .collect(),
    );
    (amp, phase)
}

// ── ST-Norm ──────────────────────────────────────────────────────────

pub const STNORM_EPS: f64 = 1e-5;

/// Standardize along axis 0, then apply a per-feature affine over the last
/// axis. `gain`/`bias` length must equal the last axis; pass ones/zeros
/// for the identity affine.
pub fn stnorm_axis0(x: &Tensor, gain: &[f64], bias: &[f64]) -> Tensor {
    let a = x.shape[0];
    assert!(a >= 2, "stnorm needs at least 2 entries along axis 0");
    let inner: usize = x.shape[1..].iter().product();
    let f = *x.shape.last().unwrap();
    assert_eq!(gain.len(), f);
    assert_eq!(bias.len(), f);
    let mut out = Tensor::zeros(&x.shape);
    for j in 0..inner {
        let mut mean = 0.0;
        for i in 0..a {
            mean += x.data[i * inner + j];
        }
        mean /= a as f64;
        let mut var = 0.0;
        for i in 0..a {
            let dv = x.data[i * inner + j] - mean;
            var += dv * dv;
        }
        var /= a as f64;
        let denom = var.sqrt() + STNORM_EPS;
        let fi = j % f;
        for i in 0..a {
            out.data[i * inner + j] =
                (x.data[i * inner + j] - mean) / denom * gain[fi] + bias[fi];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dft_naive(x: &[Cx]) -> Vec<Cx> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = (0.0, 0.0);
                for (j, &v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (k * j) as f64 / n as f64;
                    let w = (ang.cos(), ang.sin());
                    let p = cx_mul(v, w);
                    acc.0 += p.0;
                    acc.1 += p.1;
                }
                acc
            })
            .collect()
    }

    fn tnd(data: Vec<f64>, n: usize, d: usize) -> Tensor {
        let t = data.len() / (n * d);
        Tensor::new(vec![t, n, d], data)
    }

    #[test]
    fn diff_basics() {
        let x = tnd(vec![1.0, 3.0, 2.0], 1, 1);
        let d = diff(&x);
        assert_eq!(d.data, vec![0.0, 2.0, -1.0]);
        let c = tnd(vec![5.0; 4], 1, 1);
        assert!(diff(&c).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn segment_arithmetic() {
        let x = tnd((0..100).map(|v| v as f64).collect(), 1, 1);
        let s = segment(&x, 30).unwrap();
        assert_eq!(s.shape, vec![3, 30, 1, 1]);
        // identity case: P = T
        let s1 = segment(&x, 100).unwrap();
        assert_eq!(s1.shape, vec![1, 100, 1, 1]);
        assert_eq!(s1.data, x.data);
        assert!(segment(&x, 101).is_err());
    }

    #[test]
    fn db4_filters_orthonormal() {
        let w = Wavelet::daubechies(4).unwrap();
        let sum: f64 = w.lo.iter().sum();
        assert!((sum - 2f64.sqrt()).abs() < 1e-10);
        let energy: f64 = w.lo.iter().map(|v| v * v).sum();
        assert!((energy - 1.0).abs() < 1e-10);
        // even-shift orthogonality
        for lag in 1..4 {
            let dot: f64 = (0..w.taps() - 2 * lag)
                .map(|i| w.lo[i] * w.lo[i + 2 * lag])
                .sum();
            assert!(dot.abs() < 1e-10, "lag {lag}: {dot}");
        }
    }

    #[test]
    fn decompose_lengths_p288_l5() {
        let w = Wavelet::daubechies(4).unwrap();
        let sig: Vec<f64> = (0..288).map(|i| (i as f64 * 0.05).sin()).collect();
        let coeffs = dwt_decompose(&sig, &w, 4).unwrap();
        let lens: Vec<usize> = coeffs.iter().map(|c| c.len()).collect();
        assert_eq!(lens, vec![18, 18, 36, 72, 144]);
    }

    #[test]
    fn constant_signal_vanishing_details() {
        let w = Wavelet::daubechies(4).unwrap();
        let sig = vec![3.0; 64];
        let coeffs = dwt_decompose(&sig, &w, 3).unwrap();
        for d in &coeffs[1..] {
            for &v in d {
                assert!(v.abs() < 1e-10);
            }
        }
        // approximation is the constant scaled by 2^(levels/2)
        let expect = 3.0 * 2f64.powf(1.5);
        for &v in &coeffs[0] {
            assert!((v - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn divisibility_error_suggests_length() {
        let w = Wavelet::daubechies(4).unwrap();
        let sig = vec![0.0; 100];
        let err = dwt_decompose(&sig, &w, 4).unwrap_err();
        assert!(err.to_string().contains("96"), "{err}");
    }

    #[test]
    fn perfect_reconstruction_unit_gates() {
        let w = Wavelet::daubechies(4).unwrap();
        let sig: Vec<f64> = (0..96)
            .map(|i| ((i * 7 % 13) as f64 - 6.0) * 0.31 + (i as f64 * 0.2).cos())
            .collect();
        let coeffs = dwt_decompose(&sig, &w, 4).unwrap();
        let gates = vec![1.0; coeffs.len()];
        let gated = gate_coeffs(&coeffs, &gates);
        let levels = reconstruct_levels(&gated, &w);
        let l = coeffs.len();
        for t in 0..96 {
            let sum: f64 = (0..l).map(|li| levels.data[t * l + li]).sum();
            assert!((sum - sig[t]).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn zero_gates_zero_output() {
        let w = Wavelet::daubechies(4).unwrap();
        let sig: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let coeffs = dwt_decompose(&sig, &w, 2).unwrap();
        let gated = gate_coeffs(&coeffs, &[0.0, 0.0, 0.0]);
        let levels = reconstruct_levels(&gated, &w);
        assert!(levels.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_coefficient_gives_basis_vector() {
        // a single unit approximation coefficient reconstructs one synthesis
        // basis vector: apply the synthesis bank to that impulse directly
        let w = Wavelet::daubechies(4).unwrap();
        let p = 32;
        let mut coeffs = vec![vec![0.0; p / 4], vec![0.0; p / 4], vec![0.0; p / 2]];
        coeffs[0][1] = 1.0;
        let levels = reconstruct_levels(&coeffs, &w);
        // oracle: run synthesize twice on the impulse with zero details
        let a1 = w.synthesize(&coeffs[0], &vec![0.0; p / 4]);
        let a0 = w.synthesize(&a1, &vec![0.0; p / 2]);
        for t in 0..p {
            assert!((levels.data[t * 3] - a0[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_impulse_and_constant() {
        let out = fft(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        for v in out {
            assert!((v.0 - 1.0).abs() < 1e-12 && v.1.abs() < 1e-12);
        }
        let c = fft(&[(2.5, 0.0); 8]);
        assert!((c[0].0 - 20.0).abs() < 1e-10);
        for v in &c[1..] {
            assert!(v.0.abs() < 1e-10 && v.1.abs() < 1e-10);
        }
    }

    #[test]
    fn fft_matches_naive_dft_non_pow2() {
        for &n in &[3usize, 5, 6, 12, 20] {
            let x: Vec<Cx> = (0..n)
                .map(|i| ((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos() * 0.4))
                .collect();
            let fast = fft(&x);
            let slow = dft_naive(&x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn fft_roundtrip_length_12() {
        let x: Vec<Cx> = (0..12).map(|i| ((i as f64 * 0.9).sin(), 0.0)).collect();
        let back = ifft(&fft(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10);
        }
    }

    #[test]
    fn amplitude_phase_conventions() {
        let re = Tensor::new(vec![3], vec![3.0, 0.0, 2.0]);
        let im = Tensor::new(vec![3], vec![4.0, 7.0, 0.0]);
        let (amp, ph) = amplitude_phase(&re, &im);
        assert!((amp.data[0] - 5.0).abs() < 1e-12);
        assert!((ph.data[0] - (0.75f64).atan()).abs() < 1e-12);
        assert_eq!(ph.data[1], 0.0);
        assert!((amp.data[1] - 7.0).abs() < 1e-12);
        assert!((ph.data[2] - PI / 2.0).abs() < 1e-12);
        assert!((amp.data[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stnorm_standardizes_axis0() {
        let x = Tensor::new(vec![4, 1, 2], vec![1., 10., 2., 20., 3., 30., 4., 40.]);
        let out = stnorm_axis0(&x, &[1.0, 1.0], &[0.0, 0.0]);
        for f in 0..2 {
            let col: Vec<f64> = (0..4).map(|i| out.data[i * 2 + f]).collect();
            let mean: f64 = col.iter().sum::<f64>() / 4.0;
            let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn stnorm_constant_and_shift_invariance() {
        let c = Tensor::new(vec![3, 2], vec![5.0; 6]);
        let out = stnorm_axis0(&c, &[1.0, 1.0], &[0.0, 0.0]);
        assert!(out.data.iter().all(|&v| v == 0.0));

        let x = Tensor::new(vec![3, 1], vec![1.0, 2.0, 4.0]);
        let shifted = Tensor::new(vec![3, 1], vec![101.0, 102.0, 104.0]);
        let a = stnorm_axis0(&x, &[1.0], &[0.0]);
        let b = stnorm_axis0(&shifted, &[1.0], &[0.0]);
        for (u, v) in a.data.iter().zip(&b.data) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn wavelet_stack_shapes_and_sum() {
        let w = Wavelet::daubechies(2).unwrap();
        let (s, p, n, d) = (2usize, 16usize, 3usize, 1usize);
        let mut seg = Tensor::zeros(&[s, p, n, d]);
        for (i, v) in seg.data.iter_mut().enumerate() {
            *v = ((i * 31 % 17) as f64 - 8.0) * 0.2;
        }
        let gates = vec![1.0; 4];
        let stack = wavelet_stack(&seg, &w, &gates, ExecMode::Sequential).unwrap();
        assert_eq!(stack.shape, vec![s, p, n, d, 4]);
        for si in 0..s {
            for t in 0..p {
                for ni in 0..n {
                    let sum: f64 = (0..4).map(|li| stack.at(&[si, t, ni, 0, li])).sum();
                    assert!((sum - seg.at(&[si, t, ni, 0])).abs() < 1e-8);
                }
            }
        }
        #[cfg(feature = "parallel")]
        {
            let par = wavelet_stack(&seg, &w, &gates, ExecMode::Parallel).unwrap();
            assert_eq!(par.data, stack.data);
        }
    }

    proptest! {
        #[test]
        fn prop_perfect_reconstruction(sig in proptest::collection::vec(-10.0f64..10.0, 64)) {
            let w = Wavelet::daubechies(4).unwrap();
            let coeffs = dwt_decompose(&sig, &w, 3).unwrap();
            let levels = reconstruct_levels(&coeffs, &w);
            let l = coeffs.len();
            for t in 0..64 {
                let sum: f64 = (0..l).map(|li| levels.data[t * l + li]).sum();
                prop_assert!((sum - sig[t]).abs() < 1e-8);
            }
        }

        #[test]
        fn prop_dwt_linearity(
            x in proptest::collection::vec(-5.0f64..5.0, 32),
            y in proptest::collection::vec(-5.0f64..5.0, 32),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let w = Wavelet::daubechies(4).unwrap();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(&u, &v)| a * u + b * v).collect();
            let cx = dwt_decompose(&x, &w, 2).unwrap();
            let cy = dwt_decompose(&y, &w, 2).unwrap();
            let cc = dwt_decompose(&combo, &w, 2).unwrap();
            for (lvl, c) in cc.iter().enumerate() {
                for (i, &v) in c.iter().enumerate() {
                    let expect = a * cx[lvl][i] + b * cy[lvl][i];
                    prop_assert!((v - expect).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn prop_parseval(sig in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
            let spec = fft_real(&sig);
            let lhs: f64 = spec.iter().map(|v| v.0 * v.0 + v.1 * v.1).sum();
            let rhs: f64 = sig.len() as f64 * sig.iter().map(|v| v * v).sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0));
        }

        #[test]
        fn prop_phase_range(
            re in proptest::collection::vec(-100.0f64..100.0, 8),
            im in proptest::collection::vec(-100.0f64..100.0, 8),
        ) {
            let r = Tensor::new(vec![8], re);
            let i = Tensor::new(vec![8], im);
            let (_, ph) = amplitude_phase(&r, &i);
            for &v in &ph.data {
                prop_assert!((-PI / 2.0..=PI / 2.0).contains(&v));
            }
        }
    }
}
