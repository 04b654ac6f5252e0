//! Flat `key = value` configuration with `[data]`, `[model]`, and
//! `[train]` sections. Unknown sections or keys are rejected so typos
//! cannot silently fall back to defaults.

use std::path::PathBuf;

use crate::model::{Ablation, ModelConfig};
use crate::training::TrainConfig;
use crate::{FcdError, Result};

#[derive(Clone, Debug)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub split: (f64, f64, f64),
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            split: (0.6, 0.2, 0.2),
        }
    }
}

/// A parsed configuration file. Node and feature counts are always
/// derived from the dataset, never configured.
#[derive(Clone, Debug)]
pub struct FileConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            data: DataConfig::default(),
            model: ModelConfig::defaults(0),
            train: TrainConfig::default(),
        }
    }
}

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64> {
    value.parse().map_err(|_| {
        FcdError::Config(format!("line {line}: {key} expects a number, got '{value}'"))
    })
}

fn parse_usize(key: &str, value: &str, line: usize) -> Result<usize> {
    value.parse().map_err(|_| {
        FcdError::Config(format!(
            "line {line}: {key} expects a non-negative integer, got '{value}'"
        ))
    })
}

/// Parse configuration text. Every key is optional; omitted keys keep
/// their defaults.
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let mut cfg = FileConfig::default();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            match name {
                "data" | "model" | "train" => section = name.to_string(),
                other => {
                    return Err(FcdError::Config(format!(
                        "line {lineno}: unknown section [{other}]"
                    )))
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            FcdError::Config(format!("line {lineno}: expected 'key = value', got '{line}'"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match (section.as_str(), key) {
            ("data", "path") => cfg.data.path = Some(PathBuf::from(value)),
            ("data", "split_train") => cfg.data.split.0 = parse_f64(key, value, lineno)?,
            ("data", "split_val") => cfg.data.split.1 = parse_f64(key, value, lineno)?,
            ("data", "split_test") => cfg.data.split.2 = parse_f64(key, value, lineno)?,
            ("model", "t_in") => cfg.model.t_in = parse_usize(key, value, lineno)?,
            ("model", "horizon") => cfg.model.horizon = parse_usize(key, value, lineno)?,
            ("model", "d_out") => cfg.model.d_out = parse_usize(key, value, lineno)?,
            ("model", "batch") => cfg.model.batch = parse_usize(key, value, lineno)?,
            ("model", "period") => cfg.model.period = parse_usize(key, value, lineno)?,
            ("model", "levels") => cfg.model.levels = parse_usize(key, value, lineno)?,
            ("model", "wavelet_order") => {
                cfg.model.wavelet_order = parse_usize(key, value, lineno)?
            }
            ("model", "freq") => cfg.model.freq = parse_usize(key, value, lineno)?,
            ("model", "hidden_gru") => cfg.model.hidden_gru = parse_usize(key, value, lineno)?,
            ("model", "channels_wn") => cfg.model.channels_wn = parse_usize(key, value, lineno)?,
            ("model", "head_hidden_wn") => {
                cfg.model.head_hidden_wn = parse_usize(key, value, lineno)?
            }
            ("model", "ltfe_channels") => {
                cfg.model.ltfe_channels = parse_usize(key, value, lineno)?
            }
            ("model", "ltfe_hidden") => cfg.model.ltfe_hidden = parse_usize(key, value, lineno)?,
            ("model", "tau") => cfg.model.tau = parse_f64(key, value, lineno)?,
            ("model", "epsilon") => cfg.model.epsilon = parse_f64(key, value, lineno)?,
            ("model", "ablation") => cfg.model.ablation = Ablation::parse(value)?,
            ("model", "ablation_rank") => {
                cfg.model.ablation_rank = parse_usize(key, value, lineno)?
            }
            ("train", "epochs") => cfg.train.epochs = parse_usize(key, value, lineno)?,
            ("train", "lr0") => cfg.train.lr0 = parse_f64(key, value, lineno)?,
            ("train", "decay") => cfg.train.decay = parse_f64(key, value, lineno)?,
            ("train", "decay_every") => cfg.train.decay_every = parse_usize(key, value, lineno)?,
            ("train", "lr_min") => cfg.train.lr_min = parse_f64(key, value, lineno)?,
            ("train", "clip_norm") => cfg.train.clip_norm = parse_f64(key, value, lineno)?,
            ("train", "seed") => cfg.train.seed = parse_usize(key, value, lineno)? as u64,
            ("", _) => {
                return Err(FcdError::Config(format!(
                    "line {lineno}: key '{key}' appears before any section header"
                )))
            }
            (sec, _) => {
                return Err(FcdError::Config(format!(
                    "line {lineno}: unknown key '{key}' in section [{sec}]"
                )))
            }
        }
    }
    let s = cfg.data.split;
    if (s.0 + s.1 + s.2 - 1.0).abs() > 1e-9 {
        return Err(FcdError::Config(format!(
            "split fractions {}:{}:{} do not sum to 1",
            s.0, s.1, s.2
        )));
    }
    Ok(cfg)
}

fn ablation_name(a: Ablation) -> &'static str {
    match a {
        Ablation::Full => "full",
        Ablation::NoLtfe => "no_ltfe",
        Ablation::NoStfe => "no_stfe",
    }
}

/// Render a resolved configuration snapshot; parsing it back reproduces
/// the same settings.
pub fn render_config(cfg: &FileConfig) -> String {
    let mut out = String::new();
    out.push_str("[data]\n");
    if let Some(p) = &cfg.data.path {
        out.push_str(&format!("path = {}\n", p.display()));
    }
    out.push_str(&format!("split_train = {}\n", cfg.data.split.0));
    out.push_str(&format!("split_val = {}\n", cfg.data.split.1));
    out.push_str(&format!("split_test = {}\n", cfg.data.split.2));
    let m = &cfg.model;
    out.push_str("\n[model]\n");
    out.push_str(&format!("t_in = {}\n", m.t_in));
    out.push_str(&format!("horizon = {}\n", m.horizon));
    out.push_str(&format!("d_out = {}\n", m.d_out));
    out.push_str(&format!("batch = {}\n", m.batch));
    out.push_str(&format!("period = {}\n", m.period));
    out.push_str(&format!("levels = {}\n", m.levels));
    out.push_str(&format!("wavelet_order = {}\n", m.wavelet_order));
    out.push_str(&format!("freq = {}\n", m.freq));
    out.push_str(&format!("hidden_gru = {}\n", m.hidden_gru));
    out.push_str(&format!("channels_wn = {}\n", m.channels_wn));
    out.push_str(&format!("head_hidden_wn = {}\n", m.head_hidden_wn));
    out.push_str(&format!("ltfe_channels = {}\n", m.ltfe_channels));
    out.push_str(&format!("ltfe_hidden = {}\n", m.ltfe_hidden));
    out.push_str(&format!("tau = {}\n", m.tau));
    out.push_str(&format!("epsilon = {}\n", m.epsilon));
    out.push_str(&format!("ablation = {}\n", ablation_name(m.ablation)));
    out.push_str(&format!("ablation_rank = {}\n", m.ablation_rank));
    let t = &cfg.train;
    out.push_str("\n[train]\n");
    out.push_str(&format!("epochs = {}\n", t.epochs));
    out.push_str(&format!("lr0 = {}\n", t.lr0));
    out.push_str(&format!("decay = {}\n", t.decay));
    out.push_str(&format!("decay_every = {}\n", t.decay_every));
    out.push_str(&format!("lr_min = {}\n", t.lr_min));
    out.push_str(&format!("clip_norm = {}\n", t.clip_norm));
    out.push_str(&format!("seed = {}\n", t.seed));
    out
}
