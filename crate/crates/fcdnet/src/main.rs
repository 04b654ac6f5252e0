//! Command-line interface: train, evaluate, export-graphs, synth-data,
//! and grad-check. One command per process; exit codes are 0 success,
//! 1 usage, 2 data error, 3 numeric failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fcdnet::config::{parse_config, render_config, FileConfig};
use fcdnet::data::{
    batch_starts, load_series, make_batch, save_matrix_csv, save_series, window_starts,
    NormStats, PlantedSystem, SeriesFrame, Split,
};
use fcdnet::gradsuite::{run_corrupted_fixture, run_scope, SCOPES};
use fcdnet::ltfe::ltfe_preprocess;
use fcdnet::model::{Ablation, FcdNet, ModelConfig};
use fcdnet::numeric::tensor::Tensor;
use fcdnet::signal::{ExecMode, Wavelet};
use fcdnet::stfe::pad_batch;
use fcdnet::training::{
    evaluate, log_to_csv, persistence_baseline, prepare, train, Dataset, MetricReport,
    TrainConfig,
};
use fcdnet::{FcdError, Result};

#[derive(Parser)]
#[command(
    name = "fcdnet",
    about = "Frequency-guided complementary dependency forecasting",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write checkpoint, epoch log, and resolved config.
    Train {
        /// Configuration file ([data]/[model]/[train] sections).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset CSV; overrides the config's data path.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// full | no_ltfe | no_stfe
        #[arg(long)]
        ablation: Option<String>,
        /// Output directory for model.ckpt, log.csv, resolved.cfg.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print per-horizon and average MAE/RMSE/MAPE on a split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train | val | test
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the per-horizon table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the two dependency graphs for one evaluation batch.
    ExportGraphs {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Index into the test-split batch sequence.
        #[arg(long, default_value_t = 0)]
        batch_index: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a planted synthetic system with known coupling graphs.
    SynthData {
        #[arg(long, default_value_t = 8)]
        nodes: usize,
        /// Off-diagonal density of the static coupling support.
        #[arg(long, default_value_t = 0.25)]
        density: f64,
        #[arg(long, default_value_t = 0.25)]
        burst_density: f64,
        /// Burst interval as start:end (half-open); repeatable.
        #[arg(long)]
        burst: Vec<String>,
        #[arg(long, default_value_t = 2000)]
        t_len: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Finite-difference checks over parameterized operations.
    GradCheck {
        #[arg(long, default_value = "all")]
        scope: String,
        /// Run the deliberately corrupted fixture to exercise the
        /// failure path.
        #[arg(long, default_value_t = false)]
        corrupt_fixture: bool,
    },
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    model: ModelConfig,
    train: TrainConfig,
    stats: NormStats,
    params: BTreeMap<String, Tensor>,
}

fn save_checkpoint(path: &Path, model: &FcdNet, tcfg: &TrainConfig, stats: &NormStats) -> Result<()> {
    let ckpt = Checkpoint {
        model: model.cfg.clone(),
        train: tcfg.clone(),
        stats: stats.clone(),
        params: model
            .params
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    };
    let text = serde_json::to_string(&ckpt)
        .map_err(|e| FcdError::Data(format!("cannot serialize checkpoint: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FcdError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| FcdError::Data(format!("malformed checkpoint {}: {e}", path.display())))
}

/// Rebuild a `Dataset` using the checkpoint's normalization statistics
/// instead of refitting them; the long-history tensors are recomputed
/// from the (re-normalized) training split.
fn dataset_with_stats(frame: SeriesFrame, cfg: &ModelConfig, stats: NormStats) -> Result<Dataset> {
    let (t, n, d) = frame.dims();
    let mut normalized = Tensor::zeros(&[t, n, d]);
    for ti in 0..t {
        for ni in 0..n {
            if !frame.observed(ti, ni) {
                continue;
            }
            for di in 0..d {
                let idx = (ti * n + ni) * d + di;
                normalized.data[idx] = stats.normalize(frame.values.data[idx], di);
            }
        }
    }
    let pre = if cfg.ablation == Ablation::NoLtfe {
        None
    } else {
        let (train_end, _) = frame.split_bounds();
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
            ExecMode::default(),
        )?)
    };
    Ok(Dataset {
        frame,
        normalized,
        stats,
        pre,
    })
}

/// Load the dataset named in a checkpoint and restore the model weights,
/// failing with an explicit shape diff on mismatch.
fn restore(ckpt: Checkpoint, data_path: &Path, split: (f64, f64, f64)) -> Result<(FcdNet, Dataset)> {
    let frame = load_series(data_path, split)?;
    let (t, n, d) = frame.dims();
    let m = &ckpt.model;
    if n != m.nodes || d != m.d_in {
        return Err(FcdError::Data(format!(
            "checkpoint/dataset shape mismatch: checkpoint expects N={} D={} (T_in={} horizon={}), dataset has N={n} D={d} T={t}",
            m.nodes, m.d_in, m.t_in, m.horizon
        )));
    }
    if t < m.t_in + m.horizon {
        return Err(FcdError::Data(format!(
            "dataset too short: T={t} < T_in+horizon={}",
            m.t_in + m.horizon
        )));
    }
    let data = dataset_with_stats(frame, m, ckpt.stats.clone())?;
    let mut model = FcdNet::new(ckpt.model.clone(), data.pre.clone(), 0)?;
    if ckpt.params.len() != model.params.iter().count() {
        return Err(FcdError::Data(format!(
            "checkpoint has {} parameter tensors, model expects {}",
            ckpt.params.len(),
            model.params.iter().count()
        )));
    }
    for (name, tensor) in ckpt.params {
        if !model.params.contains(&name) {
            return Err(FcdError::Data(format!(
                "checkpoint parameter '{name}' not present in model"
            )));
        }
        let want = model.params.get(&name).shape.clone();
        if tensor.shape != want {
            return Err(FcdError::Data(format!(
                "parameter '{name}': checkpoint shape {:?}, model expects {want:?}",
                tensor.shape
            )));
        }
        *model.params.get_mut(&name) = tensor;
    }
    Ok((model, data))
}

fn print_report(report: &MetricReport, split: &str) {
    println!("split={split} masked_points={}", report.masked_points);
    println!("horizon,mae,rmse,mape");
    for (i, h) in report.horizons.iter().enumerate() {
        match h.mape {
            Some(p) => println!("{},{:.6},{:.6},{:.4}", i + 1, h.mae, h.rmse, p),
            None => println!("{},{:.6},{:.6},-", i + 1, h.mae, h.rmse),
        }
    }
    match report.mape {
        Some(p) => println!("avg,{:.6},{:.6},{:.4}", report.mae, report.rmse, p),
        None => {
            println!("avg,{:.6},{:.6},-", report.mae, report.rmse);
            println!("note: MAPE omitted (no nonzero-valued targets in mask)");
        }
    }
}

fn report_csv(report: &MetricReport) -> String {
    let mut out = String::from("horizon,mae,rmse,mape\n");
    for (i, h) in report.horizons.iter().enumerate() {
        let mape = h.mape.map(|p| format!("{p}")).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", i + 1, h.mae, h.rmse, mape));
    }
    let mape = report.mape.map(|p| format!("{p}")).unwrap_or_default();
    out.push_str(&format!("avg,{},{},{}\n", report.mae, report.rmse, mape));
    out
}

fn cmd_train(
    config: Option<PathBuf>,
    data: Option<PathBuf>,
    epochs: Option<usize>,
    seed: Option<u64>,
    ablation: Option<String>,
    out: PathBuf,
) -> Result<()> {
    let mut cfg = match &config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| FcdError::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)?
        }
        None => FileConfig::default(),
    };
    if let Some(p) = data {
        cfg.data.path = Some(p);
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(a) = &ablation {
        cfg.model.ablation = Ablation::parse(a)?;
    }
    let path = cfg
        .data
        .path
        .clone()
        .ok_or_else(|| FcdError::Config("no dataset: pass --data or set path under [data]".into()))?;
    let frame = load_series(&path, cfg.data.split)?;
    let (_, n, d) = frame.dims();
    cfg.model.nodes = n;
    cfg.model.d_in = d;
    if cfg.model.d_out > d {
        return Err(FcdError::Config(format!(
            "d_out={} exceeds dataset feature count {d}",
            cfg.model.d_out
        )));
    }
    println!("dataset: {}", frame.summary());

    let dataset = prepare(frame, &cfg.model, ExecMode::default())?;
    let mut model = FcdNet::new(cfg.model.clone(), dataset.pre.clone(), cfg.train.seed)?;
    println!("parameters: {}", model.param_count());

    let logs = train(&mut model, &dataset, &cfg.train)?;
    if let Some(last) = logs.last() {
        println!(
            "epoch {}: train_mae={:.6} val_mae={:.6}",
            last.epoch, last.train_mae, last.val_mae
        );
    }
    if let Ok(base) =
        persistence_baseline(&dataset.frame, cfg.model.t_in, cfg.model.horizon, Split::Val)
    {
        println!("persistence val mae: {base:.6}");
    }

    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("log.csv"), log_to_csv(&logs))?;
    std::fs::write(out.join("resolved.cfg"), render_config(&cfg))?;
    save_checkpoint(&out.join("model.ckpt"), &model, &cfg.train, &dataset.stats)?;
    println!("wrote {}", out.join("model.ckpt").display());
    Ok(())
}

fn cmd_evaluate(checkpoint: PathBuf, data: PathBuf, split: String, out: Option<PathBuf>) -> Result<()> {
    let split = Split::parse(&split)?;
    let ckpt = load_checkpoint(&checkpoint)?;
    let (model, dataset) = restore(ckpt, &data, (0.6, 0.2, 0.2))?;
    let report = evaluate(&model, &dataset, split)?;
    let name = match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    };
    print_report(&report, name);
    if let Some(p) = out {
        std::fs::write(&p, report_csv(&report))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_export_graphs(
    checkpoint: PathBuf,
    data: PathBuf,
    batch_index: usize,
    out: PathBuf,
) -> Result<()> {
    let ckpt = load_checkpoint(&checkpoint)?;
    let (model, dataset) = restore(ckpt, &data, (0.6, 0.2, 0.2))?;
    let cfg = &model.cfg;
    let starts = window_starts(&dataset.frame, cfg.t_in, cfg.horizon, Split::Test);
    if starts.is_empty() {
        return Err(FcdError::Data("test split has no complete windows".into()));
    }
    let groups = batch_starts(&starts, cfg.batch, false);
    if batch_index >= groups.len() {
        return Err(FcdError::Config(format!(
            "batch index {batch_index} out of range (test split has {} batches)",
            groups.len()
        )));
    }
    let (padded, valid) = pad_batch(&groups[batch_index], cfg.batch)?;
    let batch = make_batch(
        &dataset.frame,
        &dataset.normalized,
        &padded,
        cfg.t_in,
        cfg.horizon,
        &valid,
    );
    let mut tape = fcdnet::numeric::tape::Tape::new();
    let fwd = model.forward(&mut tape, &batch.inputs)?;
    std::fs::create_dir_all(&out)?;
    save_matrix_csv(tape.value(fwd.a_lf), &out.join("A_LF.csv"))?;
    save_matrix_csv(tape.value(fwd.a_hf), &out.join("A_HF.csv"))?;
    println!("wrote {} and {}", out.join("A_LF.csv").display(), out.join("A_HF.csv").display());
    Ok(())
}

fn parse_interval(s: &str) -> Result<(usize, usize)> {
    let err = || FcdError::Config(format!("burst interval '{s}' is not start:end"));
    let (a, b) = s.split_once(':').ok_or_else(err)?;
    let start = a.trim().parse().map_err(|_| err())?;
    let end = b.trim().parse().map_err(|_| err())?;
    if end <= start {
        return Err(FcdError::Config(format!(
            "burst interval '{s}': end must exceed start"
        )));
    }
    Ok((start, end))
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    nodes: usize,
    density: f64,
    burst_density: f64,
    burst: Vec<String>,
    t_len: usize,
    noise: f64,
    seed: u64,
    out: PathBuf,
) -> Result<()> {
    let schedule: Vec<(usize, usize)> = burst
        .iter()
        .map(|s| parse_interval(s))
        .collect::<Result<_>>()?;
    let system = PlantedSystem::random(nodes, density, burst_density, schedule, noise, seed);
    let frame = fcdnet::data::generate_planted(&system, t_len, seed)?;
    std::fs::create_dir_all(&out)?;
    save_series(&frame, &out.join("series.csv"))?;
    save_matrix_csv(&system.static_graph, &out.join("static_graph.csv"))?;
    save_matrix_csv(&system.burst_graph, &out.join("burst_graph.csv"))?;
    let mut sched = String::from("start,end\n");
    for (s, e) in &system.burst_schedule {
        sched.push_str(&format!("{s},{e}\n"));
    }
    std::fs::write(out.join("schedule.csv"), sched)?;
    println!("wrote {} ({})", out.join("series.csv").display(), frame.summary());
    Ok(())
}

fn cmd_grad_check(scope: String, corrupt_fixture: bool) -> Result<()> {
    let mut checks = run_scope(&scope)?;
    if corrupt_fixture {
        checks.push(run_corrupted_fixture());
    }
    let mut failures = 0;
    for c in &checks {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {:<28} max_rel_err={:.3e} (threshold {:.0e})",
            c.name, c.max_rel_err, c.threshold
        );
        if !c.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(FcdError::Numeric(format!(
            "{failures} gradient check(s) exceeded threshold"
        )));
    }
    println!("all {} checks passed (scopes: {})", checks.len(), SCOPES.join(", "));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train {
            config,
            data,
            epochs,
            seed,
            ablation,
            out,
        } => cmd_train(config, data, epochs, seed, ablation, out),
        Cmd::Evaluate {
            checkpoint,
            data,
            split,
            out,
        } => cmd_evaluate(checkpoint, data, split, out),
        Cmd::ExportGraphs {
            checkpoint,
            data,
            batch_index,
            out,
        } => cmd_export_graphs(checkpoint, data, batch_index, out),
        Cmd::SynthData {
            nodes,
            density,
            burst_density,
            burst,
            t_len,
            noise,
            seed,
            out,
        } => cmd_synth(nodes, density, burst_density, burst, t_len, noise, seed, out),
        Cmd::GradCheck {
            scope,
            corrupt_fixture,
        } => cmd_grad_check(scope, corrupt_fixture),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
