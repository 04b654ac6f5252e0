//! Whole-model assembly: the two graph extractors, the two forecasters,
//! and every learnable mixer, owned by one parameter store.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::forecaster::{
    fagru_forward, fagru_vars, fagwn_forward, fagwn_vars, fuse_outputs, init_fagru, init_fagwn,
    softplus_inverse, FagruDims, FagwnDims, ETA_INIT,
};
use crate::graphops::{build_filters, fuse_gamma, FILTER_EPSILON};
use crate::ltfe::{
    branch_vars, chi_squash, fuse_beta, init_ltfe_branch, logit, ltfe_branch, LtfePreprocessed,
    BETA_INIT,
};
use crate::numeric::optim::init_uniform;
use crate::numeric::tensor::Tensor;
use crate::numeric::{ParamStore, Tape, Var};
use crate::stfe::{init_stfe, stfe_forward, stfe_vars, StfeDims};
use crate::{FcdError, Result};

/// Initial value of the filter mixer γ.
pub const GAMMA_INIT: f64 = 0.8;
/// Rank of the low-rank replacement graphs used by the ablations.
pub const DEFAULT_ABLATION_RANK: usize = 10;

/// Which extractor, if any, is replaced by a trainable low-rank graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoLtfe,
    NoStfe,
}

impl Ablation {
    pub fn parse(s: &str) -> Result<Ablation> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_ltfe" => Ok(Ablation::NoLtfe),
            "no_stfe" => Ok(Ablation::NoStfe),
            other => Err(FcdError::Config(format!(
                "unknown ablation mode '{other}' (expected full, no_ltfe, or no_stfe)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub nodes: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub t_in: usize,
    pub horizon: usize,
    pub batch: usize,
    /// Segmentation period of the long-history preprocessing.
    pub period: usize,
    /// DWT decomposition depth (L−1 in terms of the level count L).
    pub levels: usize,
    pub wavelet_order: usize,
    /// Spectral feature width of the short-term extractor.
    pub freq: usize,
    pub hidden_gru: usize,
    pub channels_wn: usize,
    pub head_hidden_wn: usize,
    pub ltfe_channels: usize,
    pub ltfe_hidden: usize,
    pub tau: f64,
    pub epsilon: f64,
    pub ablation: Ablation,
    pub ablation_rank: usize,
}

impl ModelConfig {
    /// Paper-style defaults for an N-node, single-feature dataset.
    pub fn defaults(nodes: usize) -> ModelConfig {
        ModelConfig {
            nodes,
            d_in: 1,
            d_out: 1,
            t_in: 12,
            horizon: 12,
            batch: 64,
            period: 288,
            levels: 4,
            wavelet_order: 4,
            freq: 10,
            hidden_gru: 64,
            channels_wn: 32,
            head_hidden_wn: crate::forecaster::FAGWN_HEAD_HIDDEN,
            ltfe_channels: crate::ltfe::CONV_CHANNELS,
            ltfe_hidden: crate::ltfe::FC_HIDDEN,
            tau: 1.0,
            epsilon: FILTER_EPSILON,
            ablation: Ablation::Full,
            ablation_rank: DEFAULT_ABLATION_RANK,
        }
    }

    pub fn stfe_dims(&self) -> StfeDims {
        StfeDims {
            batch: self.batch,
            t_in: self.t_in,
            nodes: self.nodes,
            features: self.d_in,
            freq: self.freq,
        }
    }

    pub fn fagru_dims(&self) -> FagruDims {
        FagruDims {
            d_in: self.d_in,
            hidden: self.hidden_gru,
            horizon: self.horizon,
            d_out: self.d_out,
        }
    }

    pub fn fagwn_dims(&self) -> FagwnDims {
        FagwnDims {
            d_in: self.d_in,
            channels: self.channels_wn,
            t_in: self.t_in,
            horizon: self.horizon,
            d_out: self.d_out,
            head_hidden: self.head_hidden_wn,
        }
    }
}

/// Forward-pass outputs: the forecast and both dependency graphs.
pub struct ForwardOut {
    pub prediction: Var,
    pub a_lf: Var,
    pub a_hf: Var,
}

/// Model state: configuration, parameters, and the fixed long-history
/// tensors (absent when the long-term extractor is ablated away).
pub struct FcdNet {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    pub pre: Option<LtfePreprocessed>,
}

impl FcdNet {
    pub fn new(cfg: ModelConfig, pre: Option<LtfePreprocessed>, seed: u64) -> Result<FcdNet> {
        let mut params = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = cfg.nodes;
        match cfg.ablation {
            Ablation::NoLtfe => {
                params.insert(
                    "ablf.e1",
                    init_uniform(&mut rng, &[n, cfg.ablation_rank], cfg.ablation_rank),
                );
                params.insert(
                    "ablf.e2",
                    init_uniform(&mut rng, &[n, cfg.ablation_rank], cfg.ablation_rank),
                );
            }
            _ => {
                let pre = pre.as_ref().ok_or_else(|| {
                    FcdError::Config("long-history preprocessing required unless ablated".into())
                })?;
                if pre.q1.shape[0] != n || pre.q2.shape[0] != n {
                    return Err(FcdError::Shape(format!(
                        "preprocessed node count {} does not match config {n}",
                        pre.q1.shape[0]
                    )));
                }
                let (ch, h) = (cfg.ltfe_channels, cfg.ltfe_hidden);
                init_ltfe_branch(&mut params, &mut rng, "ltfe.b1", pre.q1.shape[1], n, ch, h);
                init_ltfe_branch(&mut params, &mut rng, "ltfe.b2", pre.q2.shape[1], n, ch, h);
                params.insert("ltfe.beta_raw", Tensor::scalar(logit(BETA_INIT)));
            }
        }
        match cfg.ablation {
            Ablation::NoStfe => {
                params.insert(
                    "abhf.e1",
                    init_uniform(&mut rng, &[n, cfg.ablation_rank], cfg.ablation_rank),
                );
                params.insert(
                    "abhf.e2",
                    init_uniform(&mut rng, &[n, cfg.ablation_rank], cfg.ablation_rank),
                );
            }
            _ => init_stfe(&mut params, &mut rng, "stfe", cfg.stfe_dims()),
        }
        params.insert("mix.gamma_raw", Tensor::scalar(logit(GAMMA_INIT)));
        params.insert("fusion.eta_raw", Tensor::scalar(softplus_inverse(ETA_INIT)));
        init_fagru(&mut params, &mut rng, "fagru", cfg.fagru_dims());
        init_fagwn(&mut params, &mut rng, "fagwn", cfg.fagwn_dims());
        let pre = match cfg.ablation {
            Ablation::NoLtfe => None,
            _ => pre,
        };
        Ok(FcdNet { cfg, params, pre })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<ForwardOut> {
        forward(tape, &self.params, self.pre.as_ref(), &self.cfg, x)
    }
}

/// χ(E₁·E₂ᵀ) low-rank replacement graph.
fn lowrank_graph(tape: &mut Tape, store: &ParamStore, prefix: &str, tau: f64) -> Var {
    let e1 = tape.param(&format!("{prefix}.e1"), store.get(&format!("{prefix}.e1")));
    let e2 = tape.param(&format!("{prefix}.e2"), store.get(&format!("{prefix}.e2")));
    let e2t = tape.permute(e2, &[1, 0]);
    let scores = tape.matmul(e1, e2t);
    chi_squash(tape, scores, tau)
}

/// Full forward pass with explicit state, usable inside gradient-check
/// closures. x: B×T_in×N×D_in.
pub fn forward(
    tape: &mut Tape,
    store: &ParamStore,
    pre: Option<&LtfePreprocessed>,
    cfg: &ModelConfig,
    x: &Tensor,
) -> Result<ForwardOut> {
    // static low-frequency graph
    let a_lf = match cfg.ablation {
        Ablation::NoLtfe => lowrank_graph(tape, store, "ablf", cfg.tau),
        _ => {
            let pre = pre.ok_or_else(|| {
                FcdError::Config("long-history preprocessing missing at forward time".into())
            })?;
            let q1 = tape.constant(pre.q1.clone());
            let q2 = tape.constant(pre.q2.clone());
            let b1 = branch_vars(tape, store, "ltfe.b1");
            let b2 = branch_vars(tape, store, "ltfe.b2");
            let a1 = ltfe_branch(tape, q1, &b1, cfg.tau)?;
            let a2 = ltfe_branch(tape, q2, &b2, cfg.tau)?;
            let beta_raw = tape.param("ltfe.beta_raw", store.get("ltfe.beta_raw"));
            fuse_beta(tape, a1, a2, beta_raw)
        }
    };
    // dynamic high-frequency graph
    let a_hf = match cfg.ablation {
        Ablation::NoStfe => lowrank_graph(tape, store, "abhf", cfg.tau),
        _ => {
            let vars = stfe_vars(tape, store, "stfe");
            stfe_forward(tape, x, &vars, cfg.stfe_dims(), cfg.tau)?
        }
    };
    // recurrent branch over the γ-mixed low-frequency filters
    let lf_filters = build_filters(tape, a_lf, cfg.epsilon);
    let gamma_raw = tape.param("mix.gamma_raw", store.get("mix.gamma_raw"));
    let gamma = tape.sigmoid(gamma_raw);
    let a_hat = fuse_gamma(tape, lf_filters, gamma);
    let xv = tape.constant(x.clone());
    let gru = fagru_vars(tape, store, "fagru");
    let x1 = fagru_forward(tape, xv, a_hat, &gru, cfg.fagru_dims());
    // convolutional branch over the high-frequency filter pair
    let hf_filters = build_filters(tape, a_hf, cfg.epsilon);
    let wn = fagwn_vars(tape, store, "fagwn");
    let x2 = fagwn_forward(tape, xv, hf_filters, &wn, cfg.fagwn_dims())?;
    let eta_raw = tape.param("fusion.eta_raw", store.get("fusion.eta_raw"));
    let prediction = fuse_outputs(tape, x1, x2, eta_raw);
    tape.value(prediction)
        .ensure_finite("model forward produced non-finite forecast")?;
    Ok(ForwardOut {
        prediction,
        a_lf,
        a_hf,
    })
}
