//! Finite-difference verification of analytic gradients.
//!
//! The checker is deliberately independent of the tape's backward pass:
//! it only re-evaluates the loss closure at perturbed parameter values.

use std::collections::BTreeMap;

use crate::numeric::optim::ParamStore;
use crate::numeric::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Relative error convention: |analytic − numeric| / max(|analytic|, |numeric|, 1e-8).
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central finite differences for every coordinate of every parameter in
/// `analytic`, against the scalar loss closure. Returns one report per
/// parameter; never mutates the store (perturbations are undone).
pub fn check_gradients(
    store: &mut ParamStore,
    analytic: &BTreeMap<String, Tensor>,
    loss: impl Fn(&ParamStore) -> f64,
    step: f64,
) -> Vec<GradReport> {
    let mut reports = Vec::new();
    let names: Vec<String> = analytic.keys().cloned().collect();
    for name in names {
        let n = store.get(&name).numel();
        let mut worst = 0.0f64;
        for i in 0..n {
            let orig = store.get(&name).data[i];
            store.get_mut(&name).data[i] = orig + step;
            let up = loss(store);
            store.get_mut(&name).data[i] = orig - step;
            let dn = loss(store);
            store.get_mut(&name).data[i] = orig;
            let numeric = (up - dn) / (2.0 * step);
            let e = rel_err(analytic[&name].data[i], numeric);
            if e > worst {
                worst = e;
            }
        }
        reports.push(GradReport {
            name,
            max_rel_err: worst,
            checked: n,
        });
    }
    reports
}

/// Worst relative error across all parameters.
pub fn max_rel_err(reports: &[GradReport]) -> f64 {
    reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
}
