//! Reverse-time sweep through the unrolled network.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{reverse_rows, ForwardTrace, Layer, LayerCoeffs, LayerTrace, Network, NeuronKind};
use crate::neuron::LifReset;
use crate::surrogate::SurrogateKind;

use super::loss::Objective;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    TauM,
    TauAdp,
}

/// Gradients of one layer, shaped like the layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub w_in: Matrix,
    pub w_rec: Option<Matrix>,
    pub bias: Vec<f64>,
    pub tau_m: Vec<f64>,
    pub tau_adp: Option<Vec<f64>>,
}

impl LayerGrad {
    pub fn zeros_like(l: &Layer) -> Self {
        let n = l.size();
        LayerGrad {
            w_in: Matrix::zeros(l.fan_in(), n),
            w_rec: l.w_rec.as_ref().map(|_| Matrix::zeros(n, n)),
            bias: vec![0.0; n],
            tau_m: vec![0.0; n],
            tau_adp: l.tau_adp.as_ref().map(|_| vec![0.0; n]),
        }
    }

    fn slices(&self) -> Vec<(ParamKind, &[f64])> {
        let mut v = vec![(ParamKind::Weight, self.w_in.as_slice())];
        if let Some(w) = &self.w_rec {
            v.push((ParamKind::Weight, w.as_slice()));
        }
        v.push((ParamKind::Bias, &self.bias));
        v.push((ParamKind::TauM, &self.tau_m));
        if let Some(t) = &self.tau_adp {
            v.push((ParamKind::TauAdp, t));
        }
        v
    }

    fn slices_mut(&mut self) -> Vec<(ParamKind, &mut [f64])> {
        let mut v = vec![(ParamKind::Weight, self.w_in.as_mut_slice())];
        if let Some(w) = &mut self.w_rec {
            v.push((ParamKind::Weight, w.as_mut_slice()));
        }
        v.push((ParamKind::Bias, &mut self.bias));
        v.push((ParamKind::TauM, &mut self.tau_m));
        if let Some(t) = &mut self.tau_adp {
            v.push((ParamKind::TauAdp, t));
        }
        v
    }
}

/// Trainable slices of a layer, in the same order as [`LayerGrad`].
pub(crate) fn layer_params(l: &Layer) -> Vec<(ParamKind, &[f64])> {
    let mut v = vec![(ParamKind::Weight, l.w_in.as_slice())];
    if let Some(w) = &l.w_rec {
        v.push((ParamKind::Weight, w.as_slice()));
    }
    v.push((ParamKind::Bias, &l.bias));
    v.push((ParamKind::TauM, &l.tau_m));
    if let Some(t) = &l.tau_adp {
        v.push((ParamKind::TauAdp, t));
    }
    v
}

pub(crate) fn layer_params_mut(l: &mut Layer) -> Vec<(ParamKind, &mut [f64])> {
    let mut v = vec![(ParamKind::Weight, l.w_in.as_mut_slice())];
    if let Some(w) = &mut l.w_rec {
        v.push((ParamKind::Weight, w.as_mut_slice()));
    }
    v.push((ParamKind::Bias, &mut l.bias));
    v.push((ParamKind::TauM, &mut l.tau_m));
    if let Some(t) = &mut l.tau_adp {
        v.push((ParamKind::TauAdp, t));
    }
    v
}

/// All trainable parameters of a network, flattened in a fixed order.
pub fn flat_params(net: &Network) -> Vec<f64> {
    net.all_layers()
        .flat_map(layer_params)
        .flat_map(|(_, s)| s.iter().copied())
        .collect()
}

pub fn set_flat_params(net: &mut Network, values: &[f64]) -> Result<()> {
    let total: usize = net.all_layers().flat_map(layer_params).map(|(_, s)| s.len()).sum();
    if total != values.len() {
        return Err(Error::shape("flat parameters", total, values.len()));
    }
    let mut rest = values;
    for l in net.all_layers_mut() {
        for (_, s) in layer_params_mut(l) {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
    }
    Ok(())
}

/// Gradients for every parameter of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
    pub backward_layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            layers: net.layers.iter().map(LayerGrad::zeros_like).collect(),
            backward_layers: net.backward_layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    pub fn all_layers(&self) -> impl Iterator<Item = &LayerGrad> {
        self.layers.iter().chain(&self.backward_layers)
    }

    pub fn all_layers_mut(&mut self) -> impl Iterator<Item = &mut LayerGrad> {
        self.layers.iter_mut().chain(&mut self.backward_layers)
    }

    pub fn slices(&self) -> impl Iterator<Item = (ParamKind, &[f64])> {
        self.all_layers().flat_map(LayerGrad::slices)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.all_layers_mut().zip(other.all_layers()) {
            for ((_, x), (_, y)) in a.slices_mut().into_iter().zip(b.slices()) {
                x.iter_mut().zip(y).for_each(|(x, y)| *x += y);
            }
        }
    }

    pub fn scale(&mut self, f: f64) {
        for g in self.all_layers_mut() {
            for (_, s) in g.slices_mut() {
                s.iter_mut().for_each(|x| *x *= f);
            }
        }
    }

    /// Zero the time-constant gradients selected by the freeze flags.
    pub fn zero_frozen(&mut self, freeze_tau_m: bool, freeze_tau_adp: bool) {
        for g in self.all_layers_mut() {
            for (kind, s) in g.slices_mut() {
                let frozen = match kind {
                    ParamKind::TauM => freeze_tau_m,
                    ParamKind::TauAdp => freeze_tau_adp,
                    _ => false,
                };
                if frozen {
                    s.fill(0.0);
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .flat_map(|(_, s)| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_trace(layers: &[Layer], traces: &[LayerTrace], steps: usize) -> Result<()> {
    if layers.len() != traces.len() {
        return Err(Error::shape("trace layers", layers.len(), traces.len()));
    }
    for (l, tr) in layers.iter().zip(traces) {
        let n = l.size();
        let adaptive = l.kind.is_adaptive();
        if tr.size != n
            || tr.u.len() != n * steps
            || tr.out.len() != n * steps
            || tr.drive.len() != n * steps
            || tr.eta.len() != if adaptive { n * steps } else { 0 }
        {
            return Err(Error::shape("trace width", n * steps, tr.u.len()));
        }
    }
    Ok(())
}

/// Back-propagate through one layer. `d_out` is the external adjoint of the
/// layer outputs (`T x n`), `d_u` an optional adjoint of the membranes. When
/// `d_input` is given it receives the adjoint of the layer input.
#[allow(clippy::too_many_arguments)]
fn backward_layer(
    layer: &Layer,
    tr: &LayerTrace,
    input: &[f64],
    d_out: &[f64],
    d_u: Option<&[f64]>,
    surrogate: SurrogateKind,
    g: &mut LayerGrad,
    mut d_input: Option<&mut [f64]>,
) {
    let n = layer.size();
    let fan_in = layer.fan_in();
    let steps = tr.steps();
    let dt = layer.dt;
    let coeffs = layer.coeffs();
    let zeros = vec![0.0; n];

    // Adjoints flowing from step t+1 into step t.
    let mut carry_u = vec![0.0; n];
    let mut carry_eta = vec![0.0; n];
    let mut carry_s = vec![0.0; n];
    let mut next_s = vec![0.0; n];
    let mut dd = vec![0.0; n];
    // Gradients with respect to the decay factors (ALIF and ReLU).
    let mut d_alpha = vec![0.0; n];
    let mut d_rho = vec![0.0; n];

    for t in (0..steps).rev() {
        let u = tr.u_at(t);
        let drive = tr.at(&tr.drive, t);
        let (u_prev, out_prev) = if t > 0 {
            (tr.u_at(t - 1), tr.out_at(t - 1))
        } else {
            (&layer.u0[..], &zeros[..])
        };
        next_s.fill(0.0);
        for j in 0..n {
            let g_out = d_out[t * n + j] + carry_s[j];
            let ext_u = d_u.map_or(0.0, |d| d[t * n + j]);
            match &coeffs {
                LayerCoeffs::Adaptive(c) => {
                    let c = c[j];
                    let eta = tr.eta[t * n + j];
                    let psi = if layer.kind == NeuronKind::AdaptiveRelu {
                        if u[j] - c.beta * eta > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        surrogate.grad(u[j], c.b0 + c.beta * eta)
                    };
                    let du = ext_u + g_out * psi + carry_u[j];
                    let deta = -c.beta * psi * g_out + carry_eta[j];
                    dd[j] = (1.0 - c.alpha) * c.r_m * du;
                    d_alpha[j] += du * (u_prev[j] - c.r_m * drive[j]);
                    let eta_prev = if t > 0 { tr.eta[(t - 1) * n + j] } else { 0.0 };
                    d_rho[j] += deta * (eta_prev - out_prev[j]);
                    carry_u[j] = c.alpha * du;
                    carry_eta[j] = c.rho * deta;
                    next_s[j] = (1.0 - c.rho) * deta;
                }
                LayerCoeffs::Leak(c) if layer.kind == NeuronKind::Lif => {
                    let c = c[j];
                    let psi = surrogate.grad(u[j], layer.threshold);
                    let du = ext_u + g_out * psi + carry_u[j];
                    dd[j] = c.gain * du;
                    let reset = out_prev[j] != 0.0 && layer.lif_reset == LifReset::ToPotential;
                    let u_pre = if reset { layer.u_r } else { u_prev[j] };
                    let tau = layer.tau_m[j];
                    g.tau_m[j] += du * (u_pre - layer.r_m * drive[j]) * dt / (tau * tau);
                    carry_u[j] = if reset { 0.0 } else { c.keep * du };
                }
                LayerCoeffs::Leak(c) => {
                    let c = c[j];
                    let du = ext_u + g_out + carry_u[j];
                    dd[j] = c.gain * du;
                    let tau = layer.tau_m[j];
                    g.tau_m[j] += du * (u_prev[j] - layer.r_m * drive[j]) * dt / (tau * tau);
                    carry_u[j] = c.keep * du;
                }
                LayerCoeffs::Relu(alpha) => {
                    let a = alpha[j];
                    let act = if u[j] > 0.0 { 1.0 } else { 0.0 };
                    let du = ext_u + g_out * act + carry_u[j];
                    dd[j] = (1.0 - a) * layer.r_m * du;
                    d_alpha[j] += du * (u_prev[j] - layer.r_m * drive[j]);
                    carry_u[j] = a * du;
                }
            }
        }
        for (b, d) in g.bias.iter_mut().zip(&dd) {
            *b += d;
        }
        g.w_in.accumulate_outer(&input[t * fan_in..(t + 1) * fan_in], &dd);
        if let (Some(w), Some(gw)) = (&layer.w_rec, &mut g.w_rec) {
            gw.accumulate_outer(out_prev, &dd);
            w.accumulate_mul_vec(&dd, &mut next_s);
        }
        if let Some(di) = d_input.as_deref_mut() {
            layer.w_in.accumulate_mul_vec(&dd, &mut di[t * fan_in..(t + 1) * fan_in]);
        }
        std::mem::swap(&mut carry_s, &mut next_s);
    }

    match &coeffs {
        LayerCoeffs::Adaptive(c) => {
            let tau_adp = layer.tau_adp.as_deref().unwrap_or(&[]);
            let g_adp = g.tau_adp.as_mut().expect("adaptive gradient");
            for j in 0..n {
                let (tm, ta) = (layer.tau_m[j], tau_adp[j]);
                g.tau_m[j] += d_alpha[j] * c[j].alpha * dt / (tm * tm);
                g_adp[j] += d_rho[j] * c[j].rho * dt / (ta * ta);
            }
        }
        LayerCoeffs::Relu(alpha) => {
            for j in 0..n {
                let tm = layer.tau_m[j];
                g.tau_m[j] += d_alpha[j] * alpha[j] * dt / (tm * tm);
            }
        }
        LayerCoeffs::Leak(_) => {}
    }
}

/// Back-propagate a stack given the adjoint of its top-layer outputs.
#[allow(clippy::too_many_arguments)]
fn backward_stack(
    layers: &[Layer],
    traces: &[LayerTrace],
    input: &[f64],
    top_d_out: Vec<f64>,
    top_d_u: Option<&[f64]>,
    surrogate: SurrogateKind,
    grads: &mut [LayerGrad],
    want_input_adjoint: bool,
) -> Option<Vec<f64>> {
    let steps = traces.first().map_or(0, LayerTrace::steps);
    let mut d_out = top_d_out;
    let mut d_u = top_d_u;
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        let lower = if i == 0 { input } else { &traces[i - 1].out[..] };
        let need = i > 0 || want_input_adjoint;
        let mut d_in = need.then(|| vec![0.0; layer.fan_in() * steps]);
        backward_layer(
            layer,
            &traces[i],
            lower,
            &d_out,
            d_u,
            surrogate,
            &mut grads[i],
            d_in.as_deref_mut(),
        );
        d_u = None;
        match d_in {
            Some(d) if i > 0 => d_out = d,
            other => return other,
        }
    }
    None
}

/// Gradients of the objective with respect to every network parameter.
///
/// `trace` must come from a forward pass of `net`; `seeds` carries the
/// output-layer adjoints of the loss.
pub fn backward(
    net: &Network,
    trace: &ForwardTrace,
    seeds: &Objective,
    surrogate: SurrogateKind,
) -> Result<GradientSet> {
    let steps = trace.steps;
    if trace.input.len() != steps * net.input_size() {
        return Err(Error::shape("trace input", steps * net.input_size(), trace.input.len()));
    }
    check_trace(&net.layers, &trace.layers, steps)?;
    check_trace(&net.backward_layers, &trace.backward_layers, steps)?;
    let c = net.classes();
    if seeds.d_out.len() != c * steps || seeds.d_u.len() != c * steps {
        return Err(Error::shape("output adjoints", c * steps, seeds.d_out.len()));
    }
    let mut grads = GradientSet::zeros_like(net);
    if !net.is_bidirectional() {
        backward_stack(
            &net.layers,
            &trace.layers,
            &trace.input,
            seeds.d_out.clone(),
            Some(&seeds.d_u),
            surrogate,
            &mut grads.layers,
            false,
        );
        return Ok(grads);
    }

    let depth = net.layers.len() - 1;
    let width = net.layers[depth - 1].size();
    if trace.merged.len() != width * steps {
        return Err(Error::shape("merged trace", width * steps, trace.merged.len()));
    }
    let (hidden_grads, out_grad) = grads.layers.split_at_mut(depth);
    let d_merged = backward_stack(
        &net.layers[depth..],
        &trace.layers[depth..],
        &trace.merged,
        seeds.d_out.clone(),
        Some(&seeds.d_u),
        surrogate,
        out_grad,
        true,
    )
    .expect("input adjoint requested");
    let mut d_top_f = vec![0.0; width * steps];
    let mut d_top_b = vec![0.0; width * steps];
    for t in 0..steps {
        let src = &d_merged[t * width..(t + 1) * width];
        let rt = steps - 1 - t;
        for k in 0..width {
            d_top_f[t * width + k] = 0.5 * src[k];
            d_top_b[rt * width + k] = 0.5 * src[k];
        }
    }
    backward_stack(
        &net.layers[..depth],
        &trace.layers[..depth],
        &trace.input,
        d_top_f,
        None,
        surrogate,
        hidden_grads,
        false,
    );
    let reversed = reverse_rows(&trace.input, net.input_size(), steps);
    backward_stack(
        &net.backward_layers,
        &trace.backward_layers,
        &reversed,
        d_top_b,
        None,
        surrogate,
        &mut grads.backward_layers,
        false,
    );
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward_sequence, init_network, DecodeMode, LayerSpec, NetworkSpec};
    use crate::train::loss::{objective, Target};

    fn readout_net(tau: f64, w: f64) -> Network {
        let spec = NetworkSpec {
            membrane_init: crate::network::MembraneInit::Zero,
            ..NetworkSpec::new(1, vec![LayerSpec::readout(2).with_tau_m(tau, 0.0)], DecodeMode::MembraneSoftmax)
        };
        let mut net = init_network(&spec, 0).unwrap();
        net.layers[0].w_in = Matrix::from_vec(1, 2, vec![w, -w]).unwrap();
        net
    }

    #[test]
    fn single_readout_hand_chain_rule() {
        let (tau, x0) = (20.0, 0.7);
        let net = readout_net(tau, 0.4);
        let trace = forward_sequence(&net, &[x0], 1).unwrap();
        let seeds = objective(DecodeMode::MembraneSoftmax, trace.output(), &Target::Class(0)).unwrap();
        let g = backward(&net, &trace, &seeds, SurrogateKind::default()).unwrap();
        let y_hat = crate::codecs::softmax(trace.output().u_at(0));
        for (c, &p) in y_hat.iter().enumerate() {
            let y = if c == 0 { 1.0 } else { 0.0 };
            let expect = (p - y) * (1.0 / tau) * x0;
            assert!((g.layers[0].w_in[(0, c)] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn perfect_streaming_gives_zero_gradients() {
        // A readout whose softmax is exactly one-hot only exists in the
        // limit, so check the gradients vanish as the margin grows.
        let net = readout_net(1.0, 800.0);
        let x = vec![1.0; 4];
        let trace = forward_sequence(&net, &x, 4).unwrap();
        let seeds = objective(DecodeMode::MembraneSoftmax, trace.output(), &Target::Stream(vec![0; 4])).unwrap();
        assert_eq!(seeds.loss, 0.0);
        let g = backward(&net, &trace, &seeds, SurrogateKind::default()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn mismatched_trace_is_rejected() {
        let spec = NetworkSpec::new(3, vec![LayerSpec::alif(4, true), LayerSpec::readout(2)], DecodeMode::MembraneSoftmax);
        let net = init_network(&spec, 1).unwrap();
        let other = init_network(
            &NetworkSpec::new(3, vec![LayerSpec::alif(5, true), LayerSpec::readout(2)], DecodeMode::MembraneSoftmax),
            1,
        )
        .unwrap();
        let x = vec![1.0; 3 * 6];
        let trace = forward_sequence(&other, &x, 6).unwrap();
        let seeds = objective(DecodeMode::MembraneSoftmax, trace.output(), &Target::Class(1)).unwrap();
        assert!(backward(&net, &trace, &seeds, SurrogateKind::default()).is_err());
    }

    #[test]
    fn freezing_zeroes_tau_gradients() {
        let spec = NetworkSpec::new(3, vec![LayerSpec::alif(4, true), LayerSpec::readout(2)], DecodeMode::MembraneSoftmax);
        let mut net = init_network(&spec, 1).unwrap();
        net.layers[0].threshold = 0.05;
        let x: Vec<f64> = (0..30).map(|i| (i % 4) as f64).collect();
        let trace = forward_sequence(&net, &x, 10).unwrap();
        let seeds = objective(DecodeMode::MembraneSoftmax, trace.output(), &Target::Class(1)).unwrap();
        let mut g = backward(&net, &trace, &seeds, SurrogateKind::default()).unwrap();
        assert!(g.layers[0].tau_adp.as_ref().unwrap().iter().any(|&v| v != 0.0));
        g.zero_frozen(true, true);
        for (kind, s) in g.slices() {
            if matches!(kind, ParamKind::TauM | ParamKind::TauAdp) {
                assert!(s.iter().all(|&v| v == 0.0));
            }
        }
        assert!(g.layers[0].w_in.as_slice().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn flat_parameter_roundtrip() {
        let spec = NetworkSpec {
            bidirectional: true,
            ..NetworkSpec::new(
                2,
                vec![LayerSpec::alif(3, true), LayerSpec::alif(3, false), LayerSpec::readout(2)],
                DecodeMode::MembraneSoftmax,
            )
        };
        let mut net = init_network(&spec, 4).unwrap();
        let p = flat_params(&net);
        assert_eq!(p.len(), net.parameter_count());
        let bumped: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        set_flat_params(&mut net, &bumped).unwrap();
        assert_eq!(flat_params(&net), bumped);
        assert_eq!(GradientSet::zeros_like(&net).flatten().len(), p.len());
        assert!(set_flat_params(&mut net, &p[1..]).is_err());
    }
}
