//! Dataset ingestion, normalization, windowing, splitting, and synthetic
//! series generation with planted dependency graphs.
//!
//! File format: CSV with a one-line header `T,N,D` followed by T rows of
//! N·D comma-separated values in node-major column order. Non-numeric
//! cells become masked entries.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FcdError, Result};
use crate::numeric::Tensor;

/// Raw multivariate series with missing-value mask and split fractions.
#[derive(Debug, Clone)]
pub struct SeriesFrame {
    /// T × N × D values; masked-out entries hold 0.
    pub values: Tensor,
    /// T × N observation mask (true = observed).
    pub mask: Vec<bool>,
    pub sample_rate: String,
    /// (train, val, test) fractions, summing to 1.
    pub split: (f64, f64, f64),
}

impl SeriesFrame {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.values.shape[0], self.values.shape[1], self.values.shape[2])
    }

    pub fn observed(&self, t: usize, n: usize) -> bool {
        self.mask[t * self.values.shape[1] + n]
    }

    /// Contiguous temporal split boundaries: [0, a) train, [a, b) val,
    /// [b, T) test.
    pub fn split_bounds(&self) -> (usize, usize) {
        let t = self.values.shape[0] as f64;
        let a = (t * self.split.0).floor() as usize;
        let b = (t * (self.split.0 + self.split.1)).floor() as usize;
        (a, b)
    }

    pub fn summary(&self) -> String {
        let (t, n, d) = self.dims();
        format!(
            "T={t} N={n} D={d} sample_rate={} split={}:{}:{}",
            self.sample_rate, self.split.0, self.split.1, self.split.2
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(FcdError::Config(format!("unknown split {other:?}"))),
        }
    }

    /// Half-open time range of this split within the frame.
    pub fn range(self, frame: &SeriesFrame) -> (usize, usize) {
        let (a, b) = frame.split_bounds();
        let t = frame.values.shape[0];
        match self {
            Split::Train => (0, a),
            Split::Val => (a, b),
            Split::Test => (b, t),
        }
    }
}

// ── ingestion ────────────────────────────────────────────────────────

pub fn load_series(path: &Path, split: (f64, f64, f64)) -> Result<SeriesFrame> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FcdError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| FcdError::Data("empty file".into()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| FcdError::Data(format!("malformed header {header:?}, expected T,N,D")))?;
    if dims.len() != 3 {
        return Err(FcdError::Data(format!(
            "header must declare T,N,D; got {} fields",
            dims.len()
        )));
    }
    let (t, n, d) = (dims[0], dims[1], dims[2]);
    let mut values = Tensor::zeros(&[t, n, d]);
    let mut mask = vec![true; t * n];
    let mut row = 0usize;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if row >= t {
            return Err(FcdError::Data(format!(
                "line {}: more rows than the declared T={t}",
                lineno + 1
            )));
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n * d {
            return Err(FcdError::Data(format!(
                "line {}: expected {} cells, found {}",
                lineno + 1,
                n * d,
                cells.len()
            )));
        }
        for (c, cell) in cells.iter().enumerate() {
            let ni = c / d;
            let di = c % d;
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    values.data[(row * n + ni) * d + di] = v;
                }
                _ => {
                    mask[row * n + ni] = false;
                    values.data[(row * n + ni) * d + di] = 0.0;
                }
            }
        }
        row += 1;
    }
    if row != t {
        return Err(FcdError::Data(format!(
            "declared T={t} but found {row} data rows"
        )));
    }
    Ok(SeriesFrame {
        values,
        mask,
        sample_rate: "unknown".into(),
        split,
    })
}

pub fn save_series(frame: &SeriesFrame, path: &Path) -> Result<()> {
    let (t, n, d) = frame.dims();
    let mut out = String::new();
    let _ = writeln!(out, "{t},{n},{d}");
    for ti in 0..t {
        let mut cells = Vec::with_capacity(n * d);
        for ni in 0..n {
            for di in 0..d {
                if frame.observed(ti, ni) {
                    cells.push(format!("{}", frame.values.at(&[ti, ni, di])));
                } else {
                    cells.push("NaN".to_string());
                }
            }
        }
        let _ = writeln!(out, "{}", cells.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn save_matrix_csv(m: &Tensor, path: &Path) -> Result<()> {
    assert_eq!(m.shape.len(), 2);
    let (rows, cols) = (m.shape[0], m.shape[1]);
    let mut out = String::new();
    for r in 0..rows {
        let row: Vec<String> = (0..cols).map(|c| format!("{}", m.at(&[r, c]))).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_matrix_csv(path: &Path) -> Result<Tensor> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            line.split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| FcdError::Data(format!("bad matrix cell: {e}")))?,
        );
    }
    let r = rows.len();
    let c = rows.first().map(|v| v.len()).unwrap_or(0);
    Ok(Tensor::new(vec![r, c], rows.into_iter().flatten().collect()))
}

// ── normalization ────────────────────────────────────────────────────

/// Per-feature z-score statistics fitted on the training split only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn normalize(&self, v: f64, feature: usize) -> f64 {
        (v - self.mean[feature]) / self.std[feature]
    }

    pub fn denormalize(&self, v: f64, feature: usize) -> f64 {
        v * self.std[feature] + self.mean[feature]
    }
}

/// Fit on the training split and produce the normalized value tensor.
/// Masked entries are imputed with 0 (the post-normalization mean).
pub fn zscore_fit_apply(frame: &SeriesFrame) -> Result<(Tensor, NormStats)> {
    let (t, n, d) = frame.dims();
    let (train_end, _) = frame.split_bounds();
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for di in 0..d {
        let mut sum = 0.0;
        let mut count = 0usize;
        for ti in 0..train_end {
            for ni in 0..n {
                if frame.observed(ti, ni) {
                    sum += frame.values.at(&[ti, ni, di]);
                    count += 1;
                }
            }
        }
        if count < 2 {
            return Err(FcdError::Data(format!(
                "feature {di}: fewer than 2 observed training points"
            )));
        }
        let m = sum / count as f64;
        let mut var = 0.0;
        for ti in 0..train_end {
            for ni in 0..n {
                if frame.observed(ti, ni) {
                    let dv = frame.values.at(&[ti, ni, di]) - m;
                    var += dv * dv;
                }
            }
        }
        let s = (var / count as f64).sqrt();
        if s == 0.0 {
            return Err(FcdError::Data(format!(
                "feature {di} has zero variance on the training split"
            )));
        }
        mean[di] = m;
        std[di] = s;
    }
    let stats = NormStats { mean, std };
    let mut norm = Tensor::zeros(&[t, n, d]);
    for ti in 0..t {
        for ni in 0..n {
            for di in 0..d {
                norm.data[(ti * n + ni) * d + di] = if frame.observed(ti, ni) {
                    stats.normalize(frame.values.at(&[ti, ni, di]), di)
                } else {
                    0.0
                };
            }
        }
    }
    Ok((norm, stats))
}

// ── windows and batches ──────────────────────────────────────────────

/// One forecasting window: normalized inputs, raw-unit targets, and the
/// target observation mask.
#[derive(Debug, Clone)]
pub struct Window {
    /// Time index of the first input step.
    pub start: usize,
}

/// All window start positions fully inside one split (input and target
/// both; windows never straddle a split boundary).
pub fn window_starts(frame: &SeriesFrame, t_in: usize, horizon: usize, split: Split) -> Vec<usize> {
    let (lo, hi) = split.range(frame);
    let len = hi.saturating_sub(lo);
    if len < t_in + horizon {
        return Vec::new();
    }
    (lo..=hi - t_in - horizon).collect()
}

/// A materialized batch: inputs B×T_in×N×D (normalized), targets
/// B×E×N×D (raw units), target_mask B×E×N, and per-sample validity
/// (false on padded positions).
#[derive(Debug, Clone)]
pub struct ForecastBatch {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub target_mask: Vec<bool>,
    pub valid: Vec<bool>,
}

pub fn make_batch(
    frame: &SeriesFrame,
    normalized: &Tensor,
    starts: &[usize],
    t_in: usize,
    horizon: usize,
    valid: &[bool],
) -> ForecastBatch {
    let (_, n, d) = frame.dims();
    let b = starts.len();
    let mut inputs = Tensor::zeros(&[b, t_in, n, d]);
    let mut targets = Tensor::zeros(&[b, horizon, n, d]);
    let mut target_mask = vec![false; b * horizon * n];
    for (bi, &s) in starts.iter().enumerate() {
        for ti in 0..t_in {
            for ni in 0..n {
                for di in 0..d {
                    inputs.data[((bi * t_in + ti) * n + ni) * d + di] =
                        normalized.at(&[s + ti, ni, di]);
                }
            }
        }
        for e in 0..horizon {
            let t = s + t_in + e;
            for ni in 0..n {
                target_mask[(bi * horizon + e) * n + ni] = frame.observed(t, ni);
                for di in 0..d {
                    targets.data[((bi * horizon + e) * n + ni) * d + di] =
                        frame.values.at(&[t, ni, di]);
                }
            }
        }
    }
    ForecastBatch {
        inputs,
        targets,
        target_mask,
        valid: valid.to_vec(),
    }
}

/// Group window starts into batches of exactly `b`. `drop_last` discards a
/// short tail (training); otherwise the tail is returned short and the
/// caller pads it.
pub fn batch_starts(starts: &[usize], b: usize, drop_last: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + b <= starts.len() {
        out.push(starts[i..i + b].to_vec());
        i += b;
    }
    if !drop_last && i < starts.len() {
        out.push(starts[i..].to_vec());
    }
    out
}

// ── planted synthetic systems ────────────────────────────────────────

/// Synthetic generator with known static and burst coupling graphs; the
/// acceptance oracle for graph-recovery scoring.
#[derive(Debug, Clone)]
pub struct PlantedSystem {
    /// N × N support in {0,1}, diagonal fixed to 1.
    pub static_graph: Tensor,
    /// N × N support for the transient coupling.
    pub burst_graph: Tensor,
    /// Half-open (start, end) intervals during which the burst term is live.
    pub burst_schedule: Vec<(usize, usize)>,
    pub noise_std: f64,
    pub season_amp: f64,
    pub season_period: usize,
    /// Target spectral radius for the coupling weights (must be < 1).
    pub coupling_scale: f64,
}

impl PlantedSystem {
    /// Random supports at the given densities (diagonal of the static
    /// graph always 1); weights are drawn at generation time.
    pub fn random(
        n: usize,
        static_density: f64,
        burst_density: f64,
        burst_schedule: Vec<(usize, usize)>,
        noise_std: f64,
        seed: u64,
    ) -> PlantedSystem {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
        let mut static_graph = Tensor::zeros(&[n, n]);
        let mut burst_graph = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    static_graph.data[i * n + j] = 1.0;
                    continue;
                }
                if rng.gen::<f64>() < static_density {
                    static_graph.data[i * n + j] = 1.0;
                }
                if rng.gen::<f64>() < burst_density {
                    burst_graph.data[i * n + j] = 1.0;
                }
            }
        }
        PlantedSystem {
            static_graph,
            burst_graph,
            burst_schedule,
            noise_std,
            season_amp: 0.3,
            season_period: 24,
            coupling_scale: 0.85,
        }
    }

    pub fn nodes(&self) -> usize {
        self.static_graph.shape[0]
    }
}

/// Largest |eigenvalue| estimate by power iteration.
pub fn spectral_radius(m: &Tensor) -> f64 {
    let n = m.shape[0];
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..300 {
        let mut w = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                w[i] += m.data[i * n + j] * v[j];
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    lambda
}

fn weighted_coupling(
    support: &Tensor,
    target_radius: f64,
    rng: &mut ChaCha20Rng,
) -> Result<Tensor> {
    let n = support.shape[0];
    let mut w = Tensor::zeros(&[n, n]);
    // magnitude floor keeps every planted edge detectable; weights stay
    // positive so the coupling is representable by a nonnegative adjacency
    for i in 0..n * n {
        if support.data[i] != 0.0 {
            w.data[i] = rng.gen_range(0.5..1.5);
        }
    }
    let rho = spectral_radius(&w);
    if rho > 0.0 {
        let scale = target_radius / rho;
        for v in w.data.iter_mut() {
            *v *= scale;
        }
    }
    let rho = spectral_radius(&w);
    if rho >= 1.0 {
        return Err(FcdError::Data(format!(
            "unstable coupling: spectral radius {rho:.3} >= 1"
        )));
    }
    Ok(w)
}

/// Generate a T-step series from the planted system. The latent state
/// follows x_{t+1} = tanh(W_s·x_t) + [burst]·W_b·x_t + ε_t with x_0 = 0;
/// the emitted value adds a per-node daily sinusoid, so with zero noise
/// and no bursts the output is the pure seasonal component.
pub fn generate_planted(system: &PlantedSystem, t_len: usize, seed: u64) -> Result<SeriesFrame> {
    let n = system.nodes();
    if !(0.0..1.0).contains(&system.coupling_scale) {
        return Err(FcdError::Data(format!(
            "unstable coupling: target spectral radius {} >= 1",
            system.coupling_scale
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut w_static = weighted_coupling(&system.static_graph, system.coupling_scale, &mut rng)?;
    let mut w_burst = if system.burst_graph.data.iter().any(|&v| v != 0.0) {
        weighted_coupling(&system.burst_graph, system.coupling_scale * 0.5, &mut rng)?
    } else {
        Tensor::zeros(&[n, n])
    };
    // the joint dynamics must stay stable while a burst is live
    let combined = {
        let mut c = w_static.clone();
        for (a, b) in c.data.iter_mut().zip(&w_burst.data) {
            *a += b;
        }
        c
    };
    let rho = spectral_radius(&combined);
    if rho >= system.coupling_scale {
        let scale = system.coupling_scale / rho;
        for v in w_static.data.iter_mut() {
            *v *= scale;
        }
        for v in w_burst.data.iter_mut() {
            *v *= scale;
        }
    }
    let noise = Normal::new(0.0, system.noise_std.max(1e-300)).expect("valid noise std");
    let mut values = Tensor::zeros(&[t_len, n, 1]);
    let mut state = vec![0.0f64; n];
    for ti in 0..t_len {
        let burst_on = system
            .burst_schedule
            .iter()
            .any(|&(s, e)| ti >= s && ti < e);
        for ni in 0..n {
            let season = system.season_amp
                * (2.0 * std::f64::consts::PI
                    * (ti as f64 / system.season_period as f64 + ni as f64 / n as f64))
                    .sin();
            values.data[ti * n + ni] = state[ni] + season;
        }
        // advance the latent state
        let mut next = vec![0.0f64; n];
        for i in 0..n {
            let mut drive = 0.0;
            let mut burst_drive = 0.0;
            for j in 0..n {
                drive += w_static.data[i * n + j] * state[j];
                if burst_on {
                    burst_drive += w_burst.data[i * n + j] * state[j];
                }
            }
            next[i] = drive.tanh() + burst_drive;
            if system.noise_std > 0.0 {
                next[i] += noise.sample(&mut rng);
            } else {
                // keep the RNG stream aligned across noise settings
                let _ = rng.gen::<f64>();
            }
        }
        state = next;
    }
    Ok(SeriesFrame {
        values,
        mask: vec![true; t_len * n],
        sample_rate: "synthetic".into(),
        split: (0.6, 0.2, 0.2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!(
            "fcdnet_test_{}_{}.csv",
            std::process::id(),
            rand::random::<u64>()
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn load_small_csv() {
        let p = write_temp("3,2,1\n1.0,2.0\n3.0,4.0\n5.0,6.0\n");
        let frame = load_series(&p, (0.6, 0.2, 0.2)).unwrap();
        assert_eq!(frame.values.shape, vec![3, 2, 1]);
        assert_eq!(frame.values.at(&[1, 1, 0]), 4.0);
        assert!(frame.observed(0, 0));
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn nan_cell_masks_position() {
        let p = write_temp("2,2,1\n1.0,NaN\n3.0,4.0\n");
        let frame = load_series(&p, (0.5, 0.25, 0.25)).unwrap();
        assert!(!frame.observed(0, 1));
        assert!(frame.observed(1, 1));
        assert_eq!(frame.values.at(&[0, 1, 0]), 0.0);
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn ragged_row_reports_line() {
        let p = write_temp("2,2,1\n1.0,2.0\n3.0\n");
        let err = load_series(&p, (0.6, 0.2, 0.2)).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn zscore_exact_values() {
        // train values [2,4,6] → μ=4, s=sqrt(8/3)
        let mut frame = SeriesFrame {
            values: Tensor::new(vec![3, 1, 1], vec![2.0, 4.0, 6.0]),
            mask: vec![true; 3],
            sample_rate: "test".into(),
            split: (1.0, 0.0, 0.0),
        };
        let (norm, stats) = zscore_fit_apply(&frame).unwrap();
        assert!((stats.mean[0] - 4.0).abs() < 1e-12);
        assert!((stats.std[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((norm.data[0] + 1.224_744_871_391_589).abs() < 1e-10);
        assert!(norm.data[1].abs() < 1e-12);
        assert!((norm.data[2] - 1.224_744_871_391_589).abs() < 1e-10);
        // inverse of transform is the identity
        for (i, &v) in norm.data.iter().enumerate() {
            let back = stats.denormalize(v, 0);
            assert!((back - frame.values.data[i]).abs() < 1e-12);
        }
        // zero-variance feature errors
        frame.values = Tensor::new(vec![3, 1, 1], vec![5.0; 3]);
        let err = zscore_fit_apply(&frame).unwrap_err();
        assert!(err.to_string().contains("feature 0"), "{err}");
    }

    #[test]
    fn stats_ignore_non_train_splits() {
        let mut frame = SeriesFrame {
            values: Tensor::new(
                vec![10, 1, 1],
                vec![1., 2., 3., 4., 5., 6., 10., 20., 30., 40.],
            ),
            mask: vec![true; 10],
            sample_rate: "test".into(),
            split: (0.6, 0.2, 0.2),
        };
        let (_, s1) = zscore_fit_apply(&frame).unwrap();
        // perturb the test segment; stats must not move
        frame.values.data[8] = 1e6;
        let (_, s2) = zscore_fit_apply(&frame).unwrap();
        assert_eq!(s1.mean, s2.mean);
        assert_eq!(s1.std, s2.std);
    }

    #[test]
    fn window_counts() {
        let frame = SeriesFrame {
            values: Tensor::zeros(&[100, 1, 1]),
            mask: vec![true; 100],
            sample_rate: "test".into(),
            split: (1.0, 0.0, 0.0),
        };
        assert_eq!(window_starts(&frame, 12, 12, Split::Train).len(), 77);
        let short = SeriesFrame {
            values: Tensor::zeros(&[24, 1, 1]),
            mask: vec![true; 24],
            sample_rate: "test".into(),
            split: (1.0, 0.0, 0.0),
        };
        assert_eq!(window_starts(&short, 12, 12, Split::Train).len(), 1);
    }

    #[test]
    fn windows_respect_split_boundaries() {
        let frame = SeriesFrame {
            values: Tensor::zeros(&[100, 1, 1]),
            mask: vec![true; 100],
            sample_rate: "test".into(),
            split: (0.6, 0.2, 0.2),
        };
        let (a, b) = frame.split_bounds();
        for (split, lo, hi) in [
            (Split::Train, 0, a),
            (Split::Val, a, b),
            (Split::Test, b, 100),
        ] {
            for s in window_starts(&frame, 8, 4, split) {
                assert!(s >= lo && s + 12 <= hi, "window {s} escapes {lo}..{hi}");
            }
        }
    }

    #[test]
    fn generator_deterministic_and_seasonal() {
        let sys = PlantedSystem::random(4, 0.3, 0.0, vec![], 0.1, 7);
        let a = generate_planted(&sys, 100, 42).unwrap();
        let b = generate_planted(&sys, 100, 42).unwrap();
        assert_eq!(a.values.data, b.values.data);

        // zero noise, no bursts, x0 = 0 → pure seasonal output
        let mut quiet = sys.clone();
        quiet.noise_std = 0.0;
        let frame = generate_planted(&quiet, 50, 1).unwrap();
        for ti in 0..50 {
            for ni in 0..4 {
                let season = quiet.season_amp
                    * (2.0 * std::f64::consts::PI
                        * (ti as f64 / quiet.season_period as f64 + ni as f64 / 4.0))
                        .sin();
                assert!((frame.values.at(&[ti, ni, 0]) - season).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn burst_term_zero_outside_intervals() {
        let mut sys = PlantedSystem::random(4, 0.3, 0.5, vec![(10, 20)], 0.0, 3);
        sys.season_amp = 0.0;
        sys.noise_std = 0.05;
        let with_burst = generate_planted(&sys, 30, 9).unwrap();
        let mut no_burst = sys.clone();
        no_burst.burst_schedule = vec![];
        let without = generate_planted(&no_burst, 30, 9).unwrap();
        // identical before the burst window opens (burst affects t >= 11)
        for ti in 0..=10 {
            for ni in 0..4 {
                assert_eq!(
                    with_burst.values.at(&[ti, ni, 0]),
                    without.values.at(&[ti, ni, 0]),
                    "t={ti}"
                );
            }
        }
        // and different inside it
        let mut any_diff = false;
        for ti in 12..20 {
            for ni in 0..4 {
                if with_burst.values.at(&[ti, ni, 0]) != without.values.at(&[ti, ni, 0]) {
                    any_diff = true;
                }
            }
        }
        assert!(any_diff);
    }

    #[test]
    fn coupled_pairs_show_stronger_lag1_correlation() {
        let mut sys = PlantedSystem::random(8, 0.25, 0.0, vec![], 0.3, 11);
        sys.season_amp = 0.0;
        let frame = generate_planted(&sys, 4000, 5).unwrap();
        let n = 8;
        let t = 4000;
        let series = |ni: usize| -> Vec<f64> {
            (0..t).map(|ti| frame.values.at(&[ti, ni, 0])).collect()
        };
        let lag1 = |x: &[f64], y: &[f64]| -> f64 {
            // corr(x_t, y_{t+1})
            let m = x.len() - 1;
            let mx: f64 = x[..m].iter().sum::<f64>() / m as f64;
            let my: f64 = y[1..].iter().sum::<f64>() / m as f64;
            let mut num = 0.0;
            let mut dx = 0.0;
            let mut dy = 0.0;
            for i in 0..m {
                num += (x[i] - mx) * (y[i + 1] - my);
                dx += (x[i] - mx).powi(2);
                dy += (y[i + 1] - my).powi(2);
            }
            num / (dx.sqrt() * dy.sqrt())
        };
        let cols: Vec<Vec<f64>> = (0..n).map(series).collect();
        let mut coupled = Vec::new();
        let mut uncoupled = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                // support (i,j): j drives i, so corr(x_j(t), x_i(t+1))
                let c = lag1(&cols[j], &cols[i]).abs();
                if sys.static_graph.at(&[i, j]) != 0.0 {
                    coupled.push(c);
                } else {
                    uncoupled.push(c);
                }
            }
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            avg(&coupled) > avg(&uncoupled),
            "coupled {} vs uncoupled {}",
            avg(&coupled),
            avg(&uncoupled)
        );
    }

    #[test]
    fn batching_policies() {
        let starts: Vec<usize> = (0..10).collect();
        let dropped = batch_starts(&starts, 4, true);
        assert_eq!(dropped.len(), 2);
        let kept = batch_starts(&starts, 4, false);
        assert_eq!(kept.len(), 3);
        assert_eq!(kept[2], vec![8, 9]);
    }

    #[test]
    fn series_roundtrip_with_mask() {
        let frame = SeriesFrame {
            values: Tensor::new(vec![2, 2, 1], vec![1.5, 0.0, 3.25, -2.0]),
            mask: vec![true, false, true, true],
            sample_rate: "test".into(),
            split: (0.6, 0.2, 0.2),
        };
        let p = std::env::temp_dir().join(format!("fcdnet_rt_{}.csv", rand::random::<u64>()));
        save_series(&frame, &p).unwrap();
        let back = load_series(&p, frame.split).unwrap();
        assert_eq!(back.mask, frame.mask);
        assert_eq!(back.values.data, frame.values.data);
        std::fs::remove_file(p).ok();
    }
}
