//! Finite-difference gradient suite over every parameterized operation,
//! shared between the `grad-check` command and the acceptance harness.
//! Each check builds a small seeded fixture, computes analytic gradients
//! on the tape, and compares against central differences.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::forecaster::{
    fagcn, fagru_forward, fagru_vars, fagwn_forward, fagwn_vars, fuse_outputs, gated_tcn,
    init_fagru, init_fagwn, FagruDims, FagwnDims,
};
use crate::graphops::{build_filters, fuse_gamma, poly_graph_conv, FILTER_EPSILON};
use crate::ltfe::{
    branch_vars, chi_squash, fuse_beta, init_ltfe_branch, ltfe_branch, ltfe_preprocess,
};
use crate::model::{forward, FcdNet, ModelConfig};
use crate::numeric::gradcheck::{check_gradients, max_rel_err};
use crate::numeric::optim::ParamStore;
use crate::numeric::tape::Tape;
use crate::numeric::tensor::Tensor;
use crate::signal::{ExecMode, Wavelet};
use crate::stfe::{init_stfe, stfe_forward, stfe_vars, StfeDims};
use crate::{FcdError, Result};

#[derive(Debug, Clone)]
pub struct SuiteCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub threshold: f64,
}

impl SuiteCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < self.threshold
    }
}

fn rand_t(rng: &mut ChaCha20Rng, shape: &[usize], scale: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data.iter_mut() {
        *v = (rng.gen::<f64>() - 0.5) * scale;
    }
    t
}

fn rand_graph(rng: &mut ChaCha20Rng, n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for v in t.data.iter_mut() {
        *v = rng.gen::<f64>();
    }
    t
}

/// Run one fixture: forward closure must rebuild the tape from the store.
fn fd_check(
    name: &str,
    store: &mut ParamStore,
    run: impl Fn(&ParamStore) -> (Tape, crate::numeric::tape::Var),
    step: f64,
    threshold: f64,
) -> SuiteCheck {
    let (tape, loss) = run(store);
    let analytic: BTreeMap<String, Tensor> = tape.param_grads(loss).unwrap();
    let reports = check_gradients(
        store,
        &analytic,
        |s| {
            let (tape, loss) = run(s);
            tape.value(loss).data[0]
        },
        step,
    );
    SuiteCheck {
        name: name.to_string(),
        max_rel_err: max_rel_err(&reports),
        threshold,
    }
}

fn check_chi() -> SuiteCheck {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut store = ParamStore::new();
    store.insert("x", rand_t(&mut rng, &[3, 3], 4.0));
    fd_check(
        "chi_squash",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let x = tape.param("x", s.get("x"));
            let y = chi_squash(&mut tape, x, 1.0);
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-4,
    )
}

fn check_stnorm_affine() -> SuiteCheck {
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    let c = 4;
    let x = rand_t(&mut rng, &[5, c], 2.0);
    let mut store = ParamStore::new();
    store.insert("gain", rand_t(&mut rng, &[c], 1.0));
    store.insert("bias", rand_t(&mut rng, &[c], 1.0));
    fd_check(
        "stnorm_affine",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let gain = tape.param("gain", s.get("gain"));
            let bias = tape.param("bias", s.get("bias"));
            let scaled = tape.mul_last(xv, gain);
            let y = tape.add_last(scaled, bias);
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-4,
    )
}

fn check_ltfe_branch() -> SuiteCheck {
    let (n, c_in, len) = (3, 2, 9);
    let mut store = ParamStore::new();
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    init_ltfe_branch(&mut store, &mut rng, "b", c_in, n, 4, 8);
    // keep the relu heads clearly active so central differences see the
    // same linear region on both sides of every probe
    for name in ["b.fc3_b", "b.fc2_b", "b.conv_b"] {
        for v in store.get_mut(name).data.iter_mut() {
            *v += 0.2;
        }
    }
    let q = rand_t(&mut rng, &[n, c_in, len], 1.0);
    fd_check(
        "ltfe_branch",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let qv = tape.constant(q.clone());
            let vars = branch_vars(&mut tape, s, "b");
            let a = ltfe_branch(&mut tape, qv, &vars, 1.0).unwrap();
            let sq = tape.mul(a, a);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-4,
        1e-4,
    )
}

fn check_stfe_pipeline() -> SuiteCheck {
    let d = StfeDims {
        batch: 2,
        t_in: 6,
        nodes: 3,
        features: 1,
        freq: 4,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(104);
    let mut store = ParamStore::new();
    init_stfe(&mut store, &mut rng, "stfe", d);
    let x = rand_t(&mut rng, &[d.batch, d.t_in, d.nodes, d.features], 1.0);
    fd_check(
        "stfe_pipeline",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let vars = stfe_vars(&mut tape, s, "stfe");
            let a = stfe_forward(&mut tape, &x, &vars, d, 1.0).unwrap();
            let sq = tape.mul(a, a);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-4,
    )
}

fn check_graph_filters() -> SuiteCheck {
    let (n, c) = (4, 3);
    let mut rng = ChaCha20Rng::seed_from_u64(105);
    let mut store = ParamStore::new();
    store.insert("adj", rand_graph(&mut rng, n));
    store.insert("w0", rand_t(&mut rng, &[c, c], 1.0));
    store.insert("w1", rand_t(&mut rng, &[c, c], 1.0));
    store.insert("gamma", Tensor::scalar(0.6));
    let x = rand_t(&mut rng, &[2, n, c], 1.0);
    fd_check(
        "graph_filters_gamma",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let adj = tape.param("adj", s.get("adj"));
            let f = build_filters(&mut tape, adj, FILTER_EPSILON);
            let gamma = tape.param("gamma", s.get("gamma"));
            let a_hat = fuse_gamma(&mut tape, f, gamma);
            let xv = tape.constant(x.clone());
            let ws = [tape.param("w0", s.get("w0")), tape.param("w1", s.get("w1"))];
            let y = poly_graph_conv(&mut tape, a_hat, xv, &ws, None);
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-4,
    )
}

fn check_fagru() -> SuiteCheck {
    let mut rng = ChaCha20Rng::seed_from_u64(106);
    let dims = FagruDims {
        d_in: 1,
        hidden: 3,
        horizon: 2,
        d_out: 1,
    };
    let mut store = ParamStore::new();
    init_fagru(&mut store, &mut rng, "gru", dims);
    let (b, n, t_in) = (2, 2, 3);
    let adj = rand_graph(&mut rng, n);
    let x = rand_t(&mut rng, &[b, t_in, n, 1], 1.0);
    fd_check(
        "fagru_cell",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let a = tape.constant(adj.clone());
            let f = build_filters(&mut tape, a, FILTER_EPSILON);
            let gamma = tape.constant(Tensor::scalar(0.8));
            let a_hat = fuse_gamma(&mut tape, f, gamma);
            let v = fagru_vars(&mut tape, s, "gru");
            let xv = tape.constant(x.clone());
            let y = fagru_forward(&mut tape, xv, a_hat, &v, dims);
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-4,
    )
}

fn fagwn_fixture(seed: u64) -> (ParamStore, FagwnDims, Tensor, Tensor) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dims = FagwnDims {
        d_in: 1,
        channels: 2,
        t_in: 8,
        horizon: 2,
        d_out: 1,
        head_hidden: 8,
    };
    let mut store = ParamStore::new();
    init_fagwn(&mut store, &mut rng, "wn", dims);
    let n = 2;
    let adj = rand_graph(&mut rng, n);
    let x = rand_t(&mut rng, &[1, dims.t_in, n, 1], 1.0);
    (store, dims, adj, x)
}

fn check_gated_tcn() -> SuiteCheck {
    let (mut store, dims, _adj, _x) = fagwn_fixture(107);
    let mut rng = ChaCha20Rng::seed_from_u64(207);
    let x = rand_t(&mut rng, &[1, 6, 3, dims.channels], 1.0);
    fd_check(
        "gated_tcn",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let v = fagwn_vars(&mut tape, s, "wn");
            let xv = tape.constant(x.clone());
            let y = gated_tcn(&mut tape, xv, &v.layers[0], 1).unwrap();
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-4,
    )
}

fn check_fagcn() -> SuiteCheck {
    let (mut store, dims, adj, _x) = fagwn_fixture(108);
    let mut rng = ChaCha20Rng::seed_from_u64(208);
    let x = rand_t(&mut rng, &[1, 5, adj.shape[0], dims.channels], 1.0);
    fd_check(
        "fagcn_layer",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let a = tape.constant(adj.clone());
            let filters = build_filters(&mut tape, a, FILTER_EPSILON);
            let v = fagwn_vars(&mut tape, s, "wn");
            let xv = tape.constant(x.clone());
            let y = fagcn(&mut tape, filters, xv, &v.layers[0]);
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-4,
    )
}

fn check_fagwn() -> SuiteCheck {
    let (mut store, dims, adj, x) = fagwn_fixture(109);
    fd_check(
        "fagwn_forward",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let a = tape.constant(adj.clone());
            let filters = build_filters(&mut tape, a, FILTER_EPSILON);
            let v = fagwn_vars(&mut tape, s, "wn");
            let xv = tape.constant(x.clone());
            let y = fagwn_forward(&mut tape, xv, filters, &v, dims).unwrap();
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-4,
        1e-4,
    )
}

fn check_fuse_beta() -> SuiteCheck {
    let mut rng = ChaCha20Rng::seed_from_u64(110);
    let mut store = ParamStore::new();
    store.insert("a1", rand_t(&mut rng, &[3, 3], 1.0));
    store.insert("a2", rand_t(&mut rng, &[3, 3], 1.0));
    store.insert("beta_raw", Tensor::scalar(0.4));
    fd_check(
        "fusion_beta",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let a1 = tape.param("a1", s.get("a1"));
            let a2 = tape.param("a2", s.get("a2"));
            let raw = tape.param("beta_raw", s.get("beta_raw"));
            let y = fuse_beta(&mut tape, a1, a2, raw);
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-4,
    )
}

fn check_fuse_eta() -> SuiteCheck {
    let mut rng = ChaCha20Rng::seed_from_u64(111);
    let mut store = ParamStore::new();
    store.insert("x1", rand_t(&mut rng, &[2, 4], 2.0));
    store.insert("x2", rand_t(&mut rng, &[2, 4], 2.0));
    store.insert("eta_raw", Tensor::scalar(-0.7));
    fd_check(
        "fusion_eta",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let x1 = tape.param("x1", s.get("x1"));
            let x2 = tape.param("x2", s.get("x2"));
            let raw = tape.param("eta_raw", s.get("eta_raw"));
            let y = fuse_outputs(&mut tape, x1, x2, raw);
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-4,
    )
}

fn check_full_model() -> SuiteCheck {
    let cfg = ModelConfig {
        t_in: 8,
        horizon: 3,
        batch: 2,
        period: 16,
        levels: 2,
        wavelet_order: 2,
        freq: 4,
        hidden_gru: 4,
        channels_wn: 4,
        head_hidden_wn: 8,
        ltfe_channels: 4,
        ltfe_hidden: 8,
        ..ModelConfig::defaults(3)
    };
    let mut rng = ChaCha20Rng::seed_from_u64(112);
    let t = cfg.period * 3;
    let hist = rand_t(&mut rng, &[t, cfg.nodes, cfg.d_in], 1.0);
    let w = Wavelet::daubechies(cfg.wavelet_order).unwrap();
    let pre = ltfe_preprocess(&hist, cfg.period, &w, cfg.levels, ExecMode::Sequential).unwrap();
    let model = FcdNet::new(cfg.clone(), Some(pre.clone()), 113).unwrap();
    let x = rand_t(&mut rng, &[cfg.batch, cfg.t_in, cfg.nodes, cfg.d_in], 1.0);
    let mut store = model.params;
    fd_check(
        "full_model_n3",
        &mut store,
        |s| {
            let mut tape = Tape::new();
            let out = forward(&mut tape, s, Some(&pre), &cfg, &x).unwrap();
            let sq = tape.mul(out.prediction, out.prediction);
            let loss = tape.sum_all(sq);
            (tape, loss)
        },
        1e-5,
        1e-3,
    )
}

/// Scope names accepted by `run_scope`; "all" runs everything.
pub const SCOPES: &[&str] = &[
    "all", "chi", "stnorm", "ltfe", "stfe", "graphops", "fagru", "tcn", "fagcn", "fagwn",
    "fusion", "model",
];

pub fn run_scope(scope: &str) -> Result<Vec<SuiteCheck>> {
    let mut out = Vec::new();
    let all = scope == "all";
    let mut known = all;
    if all || scope == "chi" {
        out.push(check_chi());
        known = true;
    }
    if all || scope == "stnorm" {
        out.push(check_stnorm_affine());
        known = true;
    }
    if all || scope == "ltfe" {
        out.push(check_ltfe_branch());
        known = true;
    }
    if all || scope == "stfe" {
        out.push(check_stfe_pipeline());
        known = true;
    }
    if all || scope == "graphops" {
        out.push(check_graph_filters());
        known = true;
    }
    if all || scope == "fagru" {
        out.push(check_fagru());
        known = true;
    }
    if all || scope == "tcn" {
        out.push(check_gated_tcn());
        known = true;
    }
    if all || scope == "fagcn" {
        out.push(check_fagcn());
        known = true;
    }
    if all || scope == "fagwn" {
        out.push(check_fagwn());
        known = true;
    }
    if all || scope == "fusion" {
        out.push(check_fuse_beta());
        out.push(check_fuse_eta());
        known = true;
    }
    if all || scope == "model" {
        out.push(check_full_model());
        known = true;
    }
    if !known {
        return Err(FcdError::Config(format!(
            "unknown grad-check scope '{scope}' (expected one of {})",
            SCOPES.join(", ")
        )));
    }
    Ok(out)
}

/// Demonstrates the failure path: the chi fixture with its analytic
/// gradient deliberately corrupted before comparison.
pub fn run_corrupted_fixture() -> SuiteCheck {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut store = ParamStore::new();
    store.insert("x", rand_t(&mut rng, &[3, 3], 4.0));
    let run = |s: &ParamStore| {
        let mut tape = Tape::new();
        let x = tape.param("x", s.get("x"));
        let y = chi_squash(&mut tape, x, 1.0);
        let sq = tape.mul(y, y);
        let loss = tape.sum_all(sq);
        (tape, loss)
    };
    let (tape, loss) = run(&store);
    let mut analytic = tape.param_grads(loss).unwrap();
    for g in analytic.values_mut() {
        for v in g.data.iter_mut() {
            *v += 0.5;
        }
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
    SuiteCheck {
        name: "chi_squash (corrupted fixture)".to_string(),
        max_rel_err: max_rel_err(&reports),
        threshold: 1e-4,
    }
}
