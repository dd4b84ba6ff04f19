use crate::error::{Error, Result};
use crate::network::{clamp_tau, Network};

use super::backward::{layer_params_mut, GradientSet, ParamKind};

/// Bias-corrected Adam moments over the flattened parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let n = net.parameter_count();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update in place. Time constants are clamped to `[dt, 1e4 dt]`
/// afterwards.
pub fn adam_step(net: &mut Network, grads: &GradientSet, state: &mut AdamState, lr: f64) -> Result<()> {
    let g = grads.flatten();
    if g.len() != state.m.len() {
        return Err(Error::shape("adam moments", state.m.len(), g.len()));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let mut k = 0;
    for layer in net.all_layers_mut() {
        let dt = layer.dt;
        for (kind, params) in layer_params_mut(layer) {
            let is_tau = matches!(kind, ParamKind::TauM | ParamKind::TauAdp);
            for p in params.iter_mut() {
                let gk = g[k];
                let m = state.beta1 * state.m[k] + (1.0 - state.beta1) * gk;
                let v = state.beta2 * state.v[k] + (1.0 - state.beta2) * gk * gk;
                state.m[k] = m;
                state.v[k] = v;
                *p -= lr * (m / bc1) / ((v / bc2).sqrt() + state.eps);
                if is_tau {
                    *p = clamp_tau(*p, dt);
                }
                k += 1;
            }
        }
    }
    Ok(())
}
