//! Masked-MAE training loop with step-decayed Adam, evaluation metrics,
//! the persistence baseline, and graph-recovery scoring.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::{
    batch_starts, make_batch, window_starts, zscore_fit_apply, ForecastBatch, NormStats,
    SeriesFrame, Split,
};
use crate::ltfe::{ltfe_preprocess, LtfePreprocessed};
use crate::model::{Ablation, FcdNet, ModelConfig};
use crate::numeric::tensor::Tensor;
use crate::numeric::{adam_step, clip_global_norm, AdamState, ParamStore, Tape, Var};
use crate::signal::{ExecMode, Wavelet};
use crate::stfe::pad_batch;
use crate::{FcdError, Result};

/// Learning-rate schedule and loop bookkeeping.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub lr_min: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 250,
            lr0: 3e-3,
            decay: 0.1,
            decay_every: 10,
            lr_min: 3e-5,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// lr(epoch) = max(lr0 · decay^⌊epoch/decay_every⌋, lr_min).
///
/// The product is snapped to 10 significant decimal digits so that
/// decimal schedules land on their decimal values (0.1 has no exact
/// binary representation, so 3e-3·0.1 would otherwise miss 3e-4 by an
/// ulp).
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    let raw = cfg.lr0 * cfg.decay.powi((epoch / cfg.decay_every) as i32);
    let snapped: f64 = format!("{raw:.9e}").parse().unwrap();
    snapped.max(cfg.lr_min)
}

/// A series prepared for training: normalization statistics fitted on
/// the training split and the fixed long-history tensors.
pub struct Dataset {
    pub frame: SeriesFrame,
    pub normalized: Tensor,
    pub stats: NormStats,
    pub pre: Option<LtfePreprocessed>,
}

/// Normalize and run the long-history preprocessing over the training
/// split (skipped when the long-term extractor is ablated).
pub fn prepare(frame: SeriesFrame, cfg: &ModelConfig, mode: ExecMode) -> Result<Dataset> {
    let (normalized, stats) = zscore_fit_apply(&frame)?;
    let pre = if cfg.ablation == Ablation::NoLtfe {
        None
    } else {
        let (train_end, _) = frame.split_bounds();
        let (_, n, d) = frame.dims();
        let train_slice = Tensor {
            shape: vec![train_end, n, d],
            data: normalized.data[..train_end * n * d].to_vec(),
        };
        let wavelet = Wavelet::daubechies(cfg.wavelet_order)?;
        Some(ltfe_preprocess(
            &train_slice,
            cfg.period,
            &wavelet,
            cfg.levels,
            mode,
        )?)
    };
    Ok(Dataset {
        frame,
        normalized,
        stats,
        pre,
    })
}

// ── loss ─────────────────────────────────────────────────────────────

/// De-normalize a prediction on the tape (per-feature affine).
pub fn denormalize_var(tape: &mut Tape, pred: Var, stats: &NormStats, d_out: usize) -> Var {
    let std = tape.constant(Tensor::new(vec![d_out], stats.std[..d_out].to_vec()));
    let mean = tape.constant(Tensor::new(vec![d_out], stats.mean[..d_out].to_vec()));
    let scaled = tape.mul_last(pred, std);
    tape.add_last(scaled, mean)
}

/// Σ mask·|pred − target| / Σ mask. Errors when the mask is empty.
pub fn masked_mae(tape: &mut Tape, pred: Var, target: &Tensor, mask: &Tensor) -> Result<Var> {
    let count: f64 = mask.data.iter().sum();
    if count == 0.0 {
        return Err(FcdError::Data("all targets masked out in batch".into()));
    }
    let t = tape.constant(target.clone());
    let m = tape.constant(mask.clone());
    let diff = tape.sub(pred, t);
    let a = tape.abs(diff);
    let masked = tape.mul(a, m);
    let s = tape.sum_all(masked);
    Ok(tape.mul_scalar(s, 1.0 / count))
}

/// Effective loss mask of a batch: target observation mask ∧ sample
/// validity, broadcast over the output features. Shape B×E×N×D_out.
pub fn batch_mask(batch: &ForecastBatch, d_out: usize) -> Tensor {
    let b = batch.inputs.shape[0];
    let e = batch.targets.shape[1];
    let n = batch.targets.shape[2];
    let mut mask = Tensor::zeros(&[b, e, n, d_out]);
    for bi in 0..b {
        if !batch.valid[bi] {
            continue;
        }
        for ei in 0..e {
            for ni in 0..n {
                if batch.target_mask[(bi * e + ei) * n + ni] {
                    for di in 0..d_out {
                        mask.data[((bi * e + ei) * n + ni) * d_out + di] = 1.0;
                    }
                }
            }
        }
    }
    mask
}

/// Raw-unit targets restricted to the first `d_out` features.
pub fn batch_targets(batch: &ForecastBatch, d_out: usize) -> Tensor {
    let b = batch.inputs.shape[0];
    let e = batch.targets.shape[1];
    let n = batch.targets.shape[2];
    let d = batch.targets.shape[3];
    if d == d_out {
        return batch.targets.clone();
    }
    let mut out = Tensor::zeros(&[b, e, n, d_out]);
    for bi in 0..b {
        for ei in 0..e {
            for ni in 0..n {
                for di in 0..d_out {
                    out.data[((bi * e + ei) * n + ni) * d_out + di] =
                        batch.targets.at(&[bi, ei, ni, di]);
                }
            }
        }
    }
    out
}

// ── metrics ──────────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct HorizonMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent; absent when no target on this horizon is nonzero.
    pub mape: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MetricReport {
    pub horizons: Vec<HorizonMetrics>,
    pub mae: f64,
    pub rmse: f64,
    pub mape: Option<f64>,
    /// Count of points excluded by the observation/validity mask.
    pub masked_points: usize,
}

/// Streaming accumulator over evaluation batches.
pub struct MetricAccum {
    horizon: usize,
    abs: Vec<f64>,
    sq: Vec<f64>,
    cnt: Vec<usize>,
    ape: Vec<f64>,
    ape_cnt: Vec<usize>,
    masked: usize,
}

impl MetricAccum {
    pub fn new(horizon: usize) -> MetricAccum {
        MetricAccum {
            horizon,
            abs: vec![0.0; horizon],
            sq: vec![0.0; horizon],
            cnt: vec![0; horizon],
            ape: vec![0.0; horizon],
            ape_cnt: vec![0; horizon],
            masked: 0,
        }
    }

    /// `pred` is the de-normalized B×E×N×D_out forecast for `batch`.
    pub fn update(&mut self, pred: &Tensor, batch: &ForecastBatch, d_out: usize) {
        let targets = batch_targets(batch, d_out);
        let mask = batch_mask(batch, d_out);
        let e = self.horizon;
        let per = pred.numel() / pred.shape[0] / e;
        for bi in 0..pred.shape[0] {
            for ei in 0..e {
                for j in 0..per {
                    let idx = (bi * e + ei) * per + j;
                    if mask.data[idx] == 0.0 {
                        self.masked += 1;
                        continue;
                    }
                    let err = pred.data[idx] - targets.data[idx];
                    self.abs[ei] += err.abs();
                    self.sq[ei] += err * err;
                    self.cnt[ei] += 1;
                    let t = targets.data[idx];
                    if t.abs() > 0.0 {
                        self.ape[ei] += (err / t).abs();
                        self.ape_cnt[ei] += 1;
                    }
                }
            }
        }
    }

    pub fn report(&self) -> MetricReport {
        let mut horizons = Vec::with_capacity(self.horizon);
        for ei in 0..self.horizon {
            let c = self.cnt[ei].max(1) as f64;
            horizons.push(HorizonMetrics {
                mae: self.abs[ei] / c,
                rmse: (self.sq[ei] / c).sqrt(),
                mape: if self.ape_cnt[ei] > 0 {
                    Some(100.0 * self.ape[ei] / self.ape_cnt[ei] as f64)
                } else {
                    None
                },
            });
        }
        let total_cnt: usize = self.cnt.iter().sum();
        let c = total_cnt.max(1) as f64;
        let total_ape_cnt: usize = self.ape_cnt.iter().sum();
        MetricReport {
            horizons,
            mae: self.abs.iter().sum::<f64>() / c,
            rmse: (self.sq.iter().sum::<f64>() / c).sqrt(),
            mape: if total_ape_cnt > 0 {
                Some(100.0 * self.ape.iter().sum::<f64>() / total_ape_cnt as f64)
            } else {
                None
            },
            masked_points: self.masked,
        }
    }
}

// ── evaluation ───────────────────────────────────────────────────────

/// Metrics of the model over one split (short final batch padded).
pub fn evaluate(model: &FcdNet, data: &Dataset, split: Split) -> Result<MetricReport> {
    let cfg = &model.cfg;
    let starts = window_starts(&data.frame, cfg.t_in, cfg.horizon, split);
    if starts.is_empty() {
        return Err(FcdError::Data(format!(
            "split has no complete windows (needs {} steps)",
            cfg.t_in + cfg.horizon
        )));
    }
    let mut accum = MetricAccum::new(cfg.horizon);
    for group in batch_starts(&starts, cfg.batch, false) {
        let (padded, valid) = pad_batch(&group, cfg.batch)?;
        let batch = make_batch(
            &data.frame,
            &data.normalized,
            &padded,
            cfg.t_in,
            cfg.horizon,
            &valid,
        );
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch.inputs)?;
        let denorm = denormalize_var(&mut tape, out.prediction, &data.stats, cfg.d_out);
        accum.update(tape.value(denorm), &batch, cfg.d_out);
    }
    Ok(accum.report())
}

// ── training loop ────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_mae: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub val_mape: Option<f64>,
    pub wall_seconds: f64,
}

/// Format the per-epoch log as CSV.
/// Wall time stays out of the CSV on purpose: the log must be
/// bit-identical across reruns with the same seed.
pub fn log_to_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,lr,train_mae,val_mae,val_rmse,val_mape\n");
    for l in logs {
        let mape = l
            .val_mape
            .map(|m| format!("{m:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:e},{:.10},{:.10},{:.10},{}\n",
            l.epoch, l.lr, l.train_mae, l.val_mae, l.val_rmse, mape
        ));
    }
    out
}

/// Train in place; returns the per-epoch log. The parameters left on the
/// model are the best-validation ones (initial parameters when epochs=0).
pub fn train(model: &mut FcdNet, data: &Dataset, tcfg: &TrainConfig) -> Result<Vec<EpochLog>> {
    let cfg = model.cfg.clone();
    let starts = window_starts(&data.frame, cfg.t_in, cfg.horizon, Split::Train);
    if starts.len() < cfg.batch {
        return Err(FcdError::Data(format!(
            "training split yields {} windows, fewer than one batch of {}",
            starts.len(),
            cfg.batch
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(tcfg.seed);
    let mut adam = AdamState::new(&model.params);
    let mut logs = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(f64, ParamStore)> = None;
    for epoch in 0..tcfg.epochs {
        let started = Instant::now();
        let lr = lr_schedule(tcfg, epoch);
        let mut shuffled = starts.clone();
        shuffled.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut loss_weight = 0.0;
        for (bi, group) in batch_starts(&shuffled, cfg.batch, true).iter().enumerate() {
            let valid = vec![true; group.len()];
            let batch = make_batch(
                &data.frame,
                &data.normalized,
                group,
                cfg.t_in,
                cfg.horizon,
                &valid,
            );
            let mask = batch_mask(&batch, cfg.d_out);
            let targets = batch_targets(&batch, cfg.d_out);
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &batch.inputs)?;
            let denorm = denormalize_var(&mut tape, out.prediction, &data.stats, cfg.d_out);
            let loss = masked_mae(&mut tape, denorm, &targets, &mask)?;
            let loss_val = tape.value(loss).data[0];
            if !loss_val.is_finite() {
                return Err(FcdError::Numeric(format!(
                    "training diverged: non-finite loss at epoch {epoch}, batch {bi}"
                )));
            }
            let count: f64 = mask.data.iter().sum();
            loss_sum += loss_val * count;
            loss_weight += count;
            let mut grads = tape.param_grads(loss)?;
            clip_global_norm(&mut grads, tcfg.clip_norm);
            adam_step(&mut model.params, &grads, &mut adam, lr)?;
        }
        let val = evaluate(model, data, Split::Val)?;
        if best.as_ref().is_none_or(|(b, _)| val.mae < *b) {
            best = Some((val.mae, model.params.clone()));
        }
        logs.push(EpochLog {
            epoch,
            lr,
            train_mae: loss_sum / loss_weight.max(1.0),
            val_mae: val.mae,
            val_rmse: val.rmse,
            val_mape: val.mape,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(logs)
}

// ── baselines and graph scoring ──────────────────────────────────────

/// MAE of repeating the last input value across the horizon (raw units,
/// mask-aware), over every window of the split.
pub fn persistence_baseline(
    frame: &SeriesFrame,
    t_in: usize,
    horizon: usize,
    split: Split,
) -> Result<f64> {
    let starts = window_starts(frame, t_in, horizon, split);
    if starts.is_empty() {
        return Err(FcdError::Data("split has no complete windows".into()));
    }
    let (_, n, d) = frame.dims();
    let mut abs = 0.0;
    let mut cnt = 0usize;
    for &s in &starts {
        let last = s + t_in - 1;
        for e in 0..horizon {
            let t = s + t_in + e;
            for ni in 0..n {
                if !frame.observed(t, ni) {
                    continue;
                }
                for di in 0..d {
                    let pred = frame.values.at(&[last, ni, di]);
                    abs += (pred - frame.values.at(&[t, ni, di])).abs();
                    cnt += 1;
                }
            }
        }
    }
    if cnt == 0 {
        return Err(FcdError::Data("all targets masked in split".into()));
    }
    Ok(abs / cnt as f64)
}

/// Area under the ROC curve of graph scores against a planted support,
/// over off-diagonal entries only (the diagonal is trivially present in
/// the dynamics). Ties receive average rank. `None` when one class is
/// empty.
pub fn graph_auc(scores: &Tensor, truth: &Tensor) -> Option<f64> {
    let n = scores.shape[0];
    assert_eq!(scores.shape, vec![n, n]);
    assert_eq!(truth.shape, vec![n, n]);
    let mut entries: Vec<(f64, bool)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            entries.push((scores.at(&[i, j]), truth.at(&[i, j]) != 0.0));
        }
    }
    let pos = entries.iter().filter(|e| e.1).count();
    let neg = entries.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // average ranks across tied scores
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < entries.len() {
        let mut j = i;
        while j < entries.len() && entries[j].0 == entries[i].0 {
            j += 1;
        }
        let avg_rank = (i + j - 1) as f64 / 2.0 + 1.0;
        for e in &entries[i..j] {
            if e.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = pos as f64;
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}
