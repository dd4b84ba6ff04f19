//! Gradient verification.
//!
//! Two references are available. In ReLU mode the loss is differentiable
//! almost everywhere, so the vectorized backward is compared against central
//! finite differences. In spiking mode the surrogate makes the "gradient" a
//! definition rather than a derivative; there the reference is a scalar tape
//! that records every edge of the unrolled graph and replays it in reverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{forward_sequence, reverse_rows, Layer, Network, NeuronKind};
use crate::neuron::LifReset;
use crate::surrogate::SurrogateKind;

use super::backward::{backward, flat_params, layer_params, set_flat_params};
use super::loss::{objective, Target};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradCheckMode {
    ReluExact,
    SurrogateConsistency,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub mode: GradCheckMode,
    pub surrogate: SurrogateKind,
    /// Surrogate used by the tape reference. Defaults to `surrogate`; a
    /// different kind is a deliberately broken oracle.
    pub oracle_surrogate: Option<SurrogateKind>,
    pub fd_step: f64,
    /// Finite-difference entries below this magnitude are not compared.
    pub floor: f64,
}

impl GradCheckOptions {
    pub fn new(mode: GradCheckMode) -> Self {
        GradCheckOptions {
            mode,
            surrogate: SurrogateKind::default(),
            oracle_surrogate: None,
            fd_step: 1e-5,
            floor: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub mode: GradCheckMode,
    /// Max relative error (ReLU mode) or max absolute difference.
    pub max_error: f64,
    pub worst_index: Option<usize>,
    pub compared: usize,
    pub analytic: Vec<f64>,
    pub reference: Vec<f64>,
}

impl GradCheckReport {
    /// Whether the error is within the tolerance of the mode.
    pub fn passes(&self) -> bool {
        match self.mode {
            GradCheckMode::ReluExact => self.max_error < 1e-4,
            GradCheckMode::SurrogateConsistency => self.max_error < 1e-8,
        }
    }
}

fn sample_loss(net: &Network, x: &[f64], steps: usize, target: &Target) -> Result<f64> {
    let trace = forward_sequence(net, x, steps)?;
    Ok(objective(net.spec.decode, trace.output(), target)?.loss)
}

/// Gradient of one sample's loss from the vectorized backward pass.
pub fn analytic_gradient(
    net: &Network,
    x: &[f64],
    steps: usize,
    target: &Target,
    surrogate: SurrogateKind,
) -> Result<Vec<f64>> {
    let trace = forward_sequence(net, x, steps)?;
    let seeds = objective(net.spec.decode, trace.output(), target)?;
    Ok(backward(net, &trace, &seeds, surrogate)?.flatten())
}

/// Central finite differences of the loss over every parameter. The step
/// is `h` scaled by the parameter magnitude when that exceeds one, so that
/// time constants in the hundreds are not probed below rounding noise.
pub fn finite_difference_gradient(
    net: &Network,
    x: &[f64],
    steps: usize,
    target: &Target,
    h: f64,
) -> Result<Vec<f64>> {
    let base = flat_params(net);
    let mut probe = net.clone();
    let mut p = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let hk = h * base[k].abs().max(1.0);
        p[k] = base[k] + hk;
        set_flat_params(&mut probe, &p)?;
        let lp = sample_loss(&probe, x, steps, target)?;
        p[k] = base[k] - hk;
        set_flat_params(&mut probe, &p)?;
        let lm = sample_loss(&probe, x, steps, target)?;
        p[k] = base[k];
        out.push((lp - lm) / (p[k] + hk - (p[k] - hk)));
    }
    Ok(out)
}

/// Compare the vectorized backward pass against a reference on one sample.
pub fn grad_check(
    net: &Network,
    x: &[f64],
    steps: usize,
    target: &Target,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (analytic, reference) = match opts.mode {
        GradCheckMode::ReluExact => {
            let relu = net.to_relu_mode();
            (
                analytic_gradient(&relu, x, steps, target, opts.surrogate)?,
                finite_difference_gradient(&relu, x, steps, target, opts.fd_step)?,
            )
        }
        GradCheckMode::SurrogateConsistency => (
            analytic_gradient(net, x, steps, target, opts.surrogate)?,
            tape_gradient(net, x, steps, target, opts.oracle_surrogate.unwrap_or(opts.surrogate))?,
        ),
    };
    let mut max_error = 0.0;
    let mut worst_index = None;
    let mut compared = 0;
    for (k, (&a, &r)) in analytic.iter().zip(&reference).enumerate() {
        let err = match opts.mode {
            GradCheckMode::ReluExact => {
                if r.abs() <= opts.floor && a.abs() <= opts.floor {
                    continue;
                }
                (a - r).abs() / a.abs().max(r.abs())
            }
            GradCheckMode::SurrogateConsistency => (a - r).abs(),
        };
        compared += 1;
        if !(err <= max_error) {
            max_error = err;
            worst_index = Some(k);
        }
    }
    Ok(GradCheckReport {
        mode: opts.mode,
        max_error,
        worst_index,
        compared,
        analytic,
        reference,
    })
}

/// A scalar computation graph: each node stores its value and the local
/// partial derivative towards each parent.
#[derive(Default)]
struct Tape {
    val: Vec<f64>,
    edges: Vec<Vec<(usize, f64)>>,
}

/// A value that may or may not live on the tape (inputs are constants).
#[derive(Clone, Copy, Debug)]
struct V {
    v: f64,
    id: Option<usize>,
}

impl V {
    fn constant(v: f64) -> Self {
        V { v, id: None }
    }
}

impl Tape {
    fn push(&mut self, v: f64, edges: &[(Option<usize>, f64)]) -> V {
        let id = self.val.len();
        self.val.push(v);
        self.edges
            .push(edges.iter().filter_map(|&(p, w)| p.map(|p| (p, w))).collect());
        V { v, id: Some(id) }
    }

    fn leaf(&mut self, v: f64) -> V {
        self.push(v, &[])
    }

    fn adjoints(&self, seeds: &[(usize, f64)]) -> Vec<f64> {
        let mut adj = vec![0.0; self.val.len()];
        for &(i, g) in seeds {
            adj[i] += g;
        }
        for i in (0..self.val.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(p, w) in &self.edges[i] {
                adj[p] += w * a;
            }
        }
        adj
    }
}

struct Leaves {
    w_in: Vec<V>,
    w_rec: Option<Vec<V>>,
    bias: Vec<V>,
    tau_m: Vec<V>,
    tau_adp: Option<Vec<V>>,
}

fn leaves(tape: &mut Tape, l: &Layer) -> Leaves {
    let mut vecs: Vec<Vec<V>> = layer_params(l)
        .into_iter()
        .map(|(_, s)| s.iter().map(|&v| tape.leaf(v)).collect())
        .collect();
    let tau_adp = l.tau_adp.is_some().then(|| vecs.pop().unwrap());
    let tau_m = vecs.pop().unwrap();
    let bias = vecs.pop().unwrap();
    let w_rec = l.w_rec.is_some().then(|| vecs.pop().unwrap());
    let w_in = vecs.pop().unwrap();
    Leaves {
        w_in,
        w_rec,
        bias,
        tau_m,
        tau_adp,
    }
}

/// Per-step outputs and membranes of one layer on the tape.
struct TapeLayer {
    out: Vec<Vec<V>>,
    u: Vec<Vec<V>>,
}

fn exp_decay(tape: &mut Tape, tau: V, dt: f64) -> V {
    let a = (-dt / tau.v).exp();
    tape.push(a, &[(tau.id, a * dt / (tau.v * tau.v))])
}

fn tape_layer(tape: &mut Tape, l: &Layer, p: &Leaves, input: &[Vec<V>], sg: SurrogateKind) -> TapeLayer {
    let n = l.size();
    let fan_in = l.fan_in();
    let dt = l.dt;
    let adaptive = l.kind.is_adaptive();
    // Decay factors as functions of the time constants.
    let (alpha, rho, keep, gain): (Vec<V>, Vec<V>, Vec<V>, Vec<V>) = match l.kind {
        NeuronKind::Lif | NeuronKind::Readout => {
            let keep = p
                .tau_m
                .iter()
                .map(|&t| tape.push(1.0 - dt / t.v, &[(t.id, dt / (t.v * t.v))]))
                .collect();
            let gain = p
                .tau_m
                .iter()
                .map(|&t| tape.push(l.r_m * dt / t.v, &[(t.id, -l.r_m * dt / (t.v * t.v))]))
                .collect();
            (Vec::new(), Vec::new(), keep, gain)
        }
        _ => {
            let alpha = p.tau_m.iter().map(|&t| exp_decay(tape, t, dt)).collect();
            let rho = match &p.tau_adp {
                Some(ta) => ta.iter().map(|&t| exp_decay(tape, t, dt)).collect(),
                None => Vec::new(),
            };
            (alpha, rho, Vec::new(), Vec::new())
        }
    };

    let mut u: Vec<V> = l.u0.iter().map(|&v| V::constant(v)).collect();
    let mut eta: Vec<V> = vec![V::constant(0.0); if adaptive { n } else { 0 }];
    let mut out: Vec<V> = vec![V::constant(0.0); n];
    let mut res = TapeLayer {
        out: Vec::with_capacity(input.len()),
        u: Vec::with_capacity(input.len()),
    };
    for x in input {
        let mut new_u = Vec::with_capacity(n);
        let mut new_eta = Vec::with_capacity(eta.len());
        let mut new_out = Vec::with_capacity(n);
        for j in 0..n {
            // Synaptic drive, summed in the same order as the fast path.
            let mut d = l.bias[j];
            let mut edges = vec![(p.bias[j].id, 1.0)];
            for (i, xi) in x.iter().enumerate().take(fan_in) {
                let w = p.w_in[i * n + j];
                if xi.v != 0.0 {
                    d += if xi.v == 1.0 { w.v } else { xi.v * w.v };
                }
                edges.push((w.id, xi.v));
                edges.push((xi.id, w.v));
            }
            if let Some(r) = &p.w_rec {
                for k in 0..n {
                    let w = r[k * n + j];
                    if out[k].v != 0.0 {
                        d += if out[k].v == 1.0 { w.v } else { out[k].v * w.v };
                    }
                    edges.push((w.id, out[k].v));
                    edges.push((out[k].id, w.v));
                }
            }
            let d = tape.push(d, &edges);

            let (up, sp) = (u[j], out[j]);
            match l.kind {
                NeuronKind::Alif | NeuronKind::SpikingOutput => {
                    let (a, r, e) = (alpha[j], rho[j], eta[j]);
                    let theta_prev = l.threshold + l.beta * e.v;
                    let uv = a.v * up.v + (1.0 - a.v) * l.r_m * d.v - theta_prev * sp.v;
                    let un = tape.push(
                        uv,
                        &[(a.id, up.v - l.r_m * d.v), (up.id, a.v), (d.id, (1.0 - a.v) * l.r_m)],
                    );
                    let ev = r.v * e.v + (1.0 - r.v) * sp.v;
                    let en = tape.push(ev, &[(r.id, e.v - sp.v), (e.id, r.v), (sp.id, 1.0 - r.v)]);
                    let th = tape.push(l.threshold + l.beta * ev, &[(en.id, l.beta)]);
                    let psi = sg.grad(uv, th.v);
                    let s = if uv >= th.v { 1.0 } else { 0.0 };
                    new_out.push(tape.push(s, &[(un.id, psi), (th.id, -psi)]));
                    new_u.push(un);
                    new_eta.push(en);
                }
                NeuronKind::Lif => {
                    let (k, g) = (keep[j], gain[j]);
                    let fired = sp.v != 0.0;
                    let un = match l.lif_reset {
                        LifReset::ToPotential => {
                            let pre = if fired { V::constant(l.u_r) } else { up };
                            tape.push(
                                pre.v * k.v + g.v * d.v,
                                &[(pre.id, k.v), (k.id, pre.v), (g.id, d.v), (d.id, g.v)],
                            )
                        }
                        LifReset::Subtract => {
                            let reset = if fired { l.threshold } else { 0.0 };
                            tape.push(
                                up.v * k.v + g.v * d.v - reset,
                                &[(up.id, k.v), (k.id, up.v), (g.id, d.v), (d.id, g.v)],
                            )
                        }
                    };
                    let psi = sg.grad(un.v, l.threshold);
                    let s = if un.v >= l.threshold { 1.0 } else { 0.0 };
                    new_out.push(tape.push(s, &[(un.id, psi)]));
                    new_u.push(un);
                }
                NeuronKind::AdaptiveRelu => {
                    let (a, r, e) = (alpha[j], rho[j], eta[j]);
                    let uv = a.v * up.v + (1.0 - a.v) * l.r_m * d.v;
                    let un = tape.push(
                        uv,
                        &[(a.id, up.v - l.r_m * d.v), (up.id, a.v), (d.id, (1.0 - a.v) * l.r_m)],
                    );
                    let ev = r.v * e.v + (1.0 - r.v) * sp.v;
                    let en = tape.push(ev, &[(r.id, e.v - sp.v), (e.id, r.v), (sp.id, 1.0 - r.v)]);
                    let z = uv - l.beta * ev;
                    let slope = if z > 0.0 { 1.0 } else { 0.0 };
                    new_out.push(tape.push(z.max(0.0), &[(un.id, slope), (en.id, -l.beta * slope)]));
                    new_u.push(un);
                    new_eta.push(en);
                }
                NeuronKind::Relu => {
                    let a = alpha[j];
                    let uv = a.v * up.v + (1.0 - a.v) * l.r_m * d.v;
                    let un = tape.push(
                        uv,
                        &[(a.id, up.v - l.r_m * d.v), (up.id, a.v), (d.id, (1.0 - a.v) * l.r_m)],
                    );
                    let slope = if uv > 0.0 { 1.0 } else { 0.0 };
                    new_out.push(tape.push(uv.max(0.0), &[(un.id, slope)]));
                    new_u.push(un);
                }
                NeuronKind::Readout => {
                    let (k, g) = (keep[j], gain[j]);
                    let un = tape.push(
                        up.v * k.v + g.v * d.v,
                        &[(up.id, k.v), (k.id, up.v), (g.id, d.v), (d.id, g.v)],
                    );
                    new_out.push(un);
                    new_u.push(un);
                }
            }
        }
        u = new_u;
        eta = new_eta;
        out = new_out;
        res.out.push(out.clone());
        res.u.push(u.clone());
    }
    res
}

fn tape_stack(tape: &mut Tape, layers: &[Layer], p: &[Leaves], input: Vec<Vec<V>>, sg: SurrogateKind) -> Vec<TapeLayer> {
    let mut res: Vec<TapeLayer> = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let tl = match i {
            0 => tape_layer(tape, l, &p[i], &input, sg),
            _ => tape_layer(tape, l, &p[i], &res[i - 1].out, sg),
        };
        res.push(tl);
    }
    res
}

fn rows(x: &[f64], width: usize) -> Vec<Vec<V>> {
    x.chunks_exact(width.max(1))
        .map(|r| r.iter().map(|&v| V::constant(v)).collect())
        .collect()
}

/// Gradient from the naive unrolled graph.
pub fn tape_gradient(
    net: &Network,
    x: &[f64],
    steps: usize,
    target: &Target,
    surrogate: SurrogateKind,
) -> Result<Vec<f64>> {
    let n_in = net.input_size();
    if x.len() != n_in * steps {
        return Err(Error::shape("input sequence", n_in * steps, x.len()));
    }
    let mut tape = Tape::default();
    let mut params: Vec<Leaves> = net.all_layers().map(|l| leaves(&mut tape, l)).collect();
    let back_params = params.split_off(net.layers.len());
    let input = rows(x, n_in);

    let output = if net.is_bidirectional() {
        let depth = net.layers.len() - 1;
        let f = tape_stack(&mut tape, &net.layers[..depth], &params[..depth], input, surrogate);
        let rev = rows(&reverse_rows(x, n_in, steps), n_in);
        let b = tape_stack(&mut tape, &net.backward_layers, &back_params, rev, surrogate);
        let (tf, tb) = (&f.last().unwrap().out, &b.last().unwrap().out);
        let merged: Vec<Vec<V>> = (0..steps)
            .map(|t| {
                tf[t]
                    .iter()
                    .zip(&tb[steps - 1 - t])
                    .map(|(a, b)| tape.push(0.5 * (a.v + b.v), &[(a.id, 0.5), (b.id, 0.5)]))
                    .collect()
            })
            .collect();
        tape_layer(&mut tape, &net.layers[depth], &params[depth], &merged, surrogate)
    } else {
        tape_stack(&mut tape, &net.layers, &params, input, surrogate).pop().unwrap()
    };

    // The tape must reproduce the fast forward pass exactly.
    let trace = forward_sequence(net, x, steps)?;
    let tr = trace.output();
    for t in 0..steps {
        let same_out = output.out[t].iter().zip(tr.out_at(t)).all(|(a, &b)| a.v == b);
        let same_u = output.u[t].iter().zip(tr.u_at(t)).all(|(a, &b)| a.v == b);
        if !same_out || !same_u {
            return Err(Error::Numeric(format!("tape forward diverged at step {t}")));
        }
    }
    let seeds = objective(net.spec.decode, tr, target)?;
    let c = net.classes();
    let mut root = Vec::new();
    for t in 0..steps {
        for k in 0..c {
            if let Some(id) = output.out[t][k].id {
                root.push((id, seeds.d_out[t * c + k]));
            }
            if let Some(id) = output.u[t][k].id {
                root.push((id, seeds.d_u[t * c + k]));
            }
        }
    }
    let adj = tape.adjoints(&root);
    Ok(adj[..net.parameter_count()].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_network, DecodeMode, LayerSpec, NetworkSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(steps: usize, n: usize, seed: u64, dense: bool) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..steps * n)
            .map(|_| {
                if dense {
                    rng.random_range(-0.5..2.0)
                } else if rng.random_bool(0.3) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn net(layers: Vec<LayerSpec>, n_in: usize, decode: DecodeMode, bidirectional: bool, seed: u64) -> Network {
        let spec = NetworkSpec {
            bidirectional,
            ..NetworkSpec::new(n_in, layers, decode)
        };
        init_network(&spec, seed).unwrap()
    }

    #[test]
    fn relu_mode_matches_finite_differences() {
        let n = net(
            vec![LayerSpec::alif(10, true), LayerSpec::alif(10, true), LayerSpec::readout(3)],
            4,
            DecodeMode::MembraneSoftmax,
            false,
            21,
        );
        let x = input(20, 4, 2, true);
        let r = grad_check(&n, &x, 20, &Target::Class(1), &GradCheckOptions::new(GradCheckMode::ReluExact)).unwrap();
        assert!(r.compared > 300, "compared {}", r.compared);
        assert!(r.passes(), "max rel err {} at {:?}", r.max_error, r.worst_index);

        // Both time-constant families carry gradient and are compared.
        let relu = n.to_relu_mode();
        let trace = forward_sequence(&relu, &x, 20).unwrap();
        let seeds = objective(relu.spec.decode, trace.output(), &Target::Class(1)).unwrap();
        let g = backward(&relu, &trace, &seeds, SurrogateKind::default()).unwrap();
        for l in &g.layers[..2] {
            assert!(l.tau_m.iter().any(|v| v.abs() > 1e-6));
            assert!(l.tau_adp.as_ref().unwrap().iter().any(|v| v.abs() > 1e-6));
        }
    }

    #[test]
    fn relu_mode_streaming_and_bidirectional() {
        let n = net(
            vec![LayerSpec::alif(6, true), LayerSpec::alif(5, true), LayerSpec::readout(3)],
            3,
            DecodeMode::MembraneSoftmax,
            true,
            5,
        );
        let x = input(12, 3, 8, true);
        let target = Target::Stream((0..12).map(|t| t % 3).collect());
        let r = grad_check(&n, &x, 12, &target, &GradCheckOptions::new(GradCheckMode::ReluExact)).unwrap();
        assert!(r.passes(), "max rel err {} at {:?}", r.max_error, r.worst_index);
    }

    #[test]
    fn spiking_backward_equals_tape() {
        let cases = [
            (vec![LayerSpec::alif(5, true), LayerSpec::readout(3)], DecodeMode::MembraneSoftmax, false),
            (
                vec![LayerSpec::alif(5, true), LayerSpec::new(3, NeuronKind::SpikingOutput, false)],
                DecodeMode::SpikeCount,
                false,
            ),
            (
                vec![LayerSpec::new(6, NeuronKind::Lif, true), LayerSpec::readout(3)],
                DecodeMode::MembraneSoftmax,
                false,
            ),
            (
                vec![LayerSpec::alif(4, true), LayerSpec::alif(4, false), LayerSpec::readout(3)],
                DecodeMode::MembraneSoftmax,
                true,
            ),
        ];
        for (i, (layers, decode, bi)) in cases.into_iter().enumerate() {
            let mut n = net(layers, 4, decode, bi, 40 + i as u64);
            // A low baseline threshold so that every layer spikes.
            for l in n.all_layers_mut() {
                l.threshold = 0.05;
            }
            let x = input(10, 4, i as u64, false);
            let trace = forward_sequence(&n, &x, 10).unwrap();
            assert!(trace.layers[0].spike_count() > 0, "case {i} is silent");
            for sg in SurrogateKind::defaults() {
                let opts = GradCheckOptions {
                    surrogate: sg,
                    ..GradCheckOptions::new(GradCheckMode::SurrogateConsistency)
                };
                let r = grad_check(&n, &x, 10, &Target::Class(2), &opts).unwrap();
                assert!(r.passes(), "case {i} {}: {}", sg.name(), r.max_error);
                assert!(r.analytic.iter().any(|&g| g != 0.0));
            }
        }
    }

    #[test]
    fn subtract_reset_lif_matches_tape() {
        let mut spec = LayerSpec::new(5, NeuronKind::Lif, true);
        spec.lif_reset = LifReset::Subtract;
        let mut n = net(vec![spec, LayerSpec::readout(2)], 3, DecodeMode::MembraneSoftmax, false, 3);
        n.layers[0].w_in.as_mut_slice().iter_mut().for_each(|w| *w *= 30.0);
        let x = input(15, 3, 1, false);
        let target = Target::Stream((0..15).map(|t| t % 2).collect());
        let r = grad_check(&n, &x, 15, &target, &GradCheckOptions::new(GradCheckMode::SurrogateConsistency)).unwrap();
        assert!(r.passes(), "{}", r.max_error);
    }

    #[test]
    fn corrupted_oracle_is_caught() {
        let mut n = net(vec![LayerSpec::alif(5, true), LayerSpec::readout(3)], 4, DecodeMode::MembraneSoftmax, false, 7);
        n.layers[0].threshold = 0.05;
        let x = input(10, 4, 3, false);
        let opts = GradCheckOptions {
            oracle_surrogate: Some(SurrogateKind::linear()),
            ..GradCheckOptions::new(GradCheckMode::SurrogateConsistency)
        };
        let r = grad_check(&n, &x, 10, &Target::Class(0), &opts).unwrap();
        assert!(!r.passes());
    }

    #[test]
    fn zero_weights_give_zero_gradients() {
        let spec = NetworkSpec {
            membrane_init: crate::network::MembraneInit::Zero,
            ..NetworkSpec::new(3, vec![LayerSpec::alif(5, true), LayerSpec::alif(4, true)], DecodeMode::SpikeCount)
        };
        let n = Network::zeroed(&spec).unwrap();
        let x = input(10, 3, 0, false);
        // Nothing reaches threshold and the linear surrogate has compact
        // support, so no adjoint survives the spike nonlinearity.
        let opts = GradCheckOptions {
            surrogate: SurrogateKind::linear(),
            ..GradCheckOptions::new(GradCheckMode::SurrogateConsistency)
        };
        let r = grad_check(&n, &x, 10, &Target::Class(1), &opts).unwrap();
        assert!(r.analytic.iter().all(|&g| g == 0.0));
        assert!(r.reference.iter().all(|&g| g == 0.0));
    }
}
