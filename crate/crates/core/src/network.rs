//! Network construction, initialization and the forward pass.
//!
//! Within one timestep the layers run as a synchronous cascade: layer `l`
//! sees the output of layer `l - 1` at the same step, and its own output of
//! the previous step through `w_rec`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::neuron::{
    self, adaptive_relu_update, alif_update, lif_update, readout_update, relu_update, AlifCoeffs,
    LeakCoeffs, LifReset,
};

/// Upper clamp on time constants, in units of `dt`.
pub const TAU_MAX_STEPS: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    Lif,
    Alif,
    Relu,
    /// ReLU unit that keeps the threshold adaptation of an ALIF unit.
    AdaptiveRelu,
    /// Non-spiking leaky integrator feeding the decoder.
    Readout,
    /// ALIF output layer whose membrane is also decoded.
    SpikingOutput,
}

impl NeuronKind {
    pub fn is_spiking(self) -> bool {
        matches!(self, NeuronKind::Lif | NeuronKind::Alif | NeuronKind::SpikingOutput)
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, NeuronKind::Alif | NeuronKind::SpikingOutput | NeuronKind::AdaptiveRelu)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    SpikeCount,
    MembraneSoftmax,
    SpikingMembraneSoftmax,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembraneInit {
    /// Uniform in `[0, threshold]`, drawn once at initialization.
    #[default]
    Uniform,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauInit {
    pub mean: f64,
    pub std: f64,
}

impl TauInit {
    pub const fn new(mean: f64, std: f64) -> Self {
        TauInit { mean, std }
    }
}

fn default_one() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    neuron::DEFAULT_BETA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub size: usize,
    pub neuron: NeuronKind,
    pub recurrent: bool,
    pub tau_m_init: TauInit,
    #[serde(default)]
    pub tau_adp_init: Option<TauInit>,
    /// Fixed threshold for LIF, baseline threshold `b0` for ALIF.
    #[serde(default = "default_one")]
    pub threshold: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_one")]
    pub r_m: f64,
    #[serde(default)]
    pub u_r: f64,
    #[serde(default)]
    pub lif_reset: LifReset,
}

impl LayerSpec {
    pub fn new(size: usize, neuron: NeuronKind, recurrent: bool) -> Self {
        let (tau_m_init, tau_adp_init) = match neuron {
            NeuronKind::Alif | NeuronKind::SpikingOutput => {
                (TauInit::new(20.0, 5.0), Some(TauInit::new(150.0, 10.0)))
            }
            _ => (TauInit::new(20.0, 5.0), None),
        };
        LayerSpec {
            size,
            neuron,
            recurrent,
            tau_m_init,
            tau_adp_init,
            threshold: 1.0,
            beta: neuron::DEFAULT_BETA,
            r_m: 1.0,
            u_r: 0.0,
            lif_reset: LifReset::ToPotential,
        }
    }

    pub fn alif(size: usize, recurrent: bool) -> Self {
        Self::new(size, NeuronKind::Alif, recurrent)
    }

    pub fn readout(size: usize) -> Self {
        Self::new(size, NeuronKind::Readout, false)
    }

    pub fn with_tau_m(mut self, mean: f64, std: f64) -> Self {
        self.tau_m_init = TauInit::new(mean, std);
        self
    }

    pub fn with_tau_adp(mut self, mean: f64, std: f64) -> Self {
        self.tau_adp_init = Some(TauInit::new(mean, std));
        self
    }
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
    pub decode: DecodeMode,
    #[serde(default)]
    pub bidirectional: bool,
    #[serde(default)]
    pub membrane_init: MembraneInit,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NetworkSpec {
    pub fn new(input_size: usize, layers: Vec<LayerSpec>, decode: DecodeMode) -> Self {
        NetworkSpec {
            input_size,
            layers,
            decode,
            bidirectional: false,
            membrane_init: MembraneInit::Uniform,
            dt: 1.0,
            seed: 0,
        }
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.size)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.input_size == 0 {
            return cfg("input_size must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return cfg(format!("dt must be positive, got {}", self.dt));
        }
        let Some(last) = self.layers.last() else {
            return cfg("network needs at least one layer".into());
        };
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            if l.size == 0 {
                return cfg(format!("layer {i} has size 0"));
            }
            if !(l.tau_m_init.mean > 0.0) || !(l.tau_m_init.std >= 0.0) {
                return cfg(format!("layer {i}: tau_m init needs positive mean"));
            }
            match (l.neuron.is_adaptive(), l.tau_adp_init) {
                (true, None) => return cfg(format!("layer {i}: adaptive layer needs tau_adp_init")),
                (true, Some(t)) if !(t.mean > 0.0) || !(t.std >= 0.0) => {
                    return cfg(format!("layer {i}: tau_adp init needs positive mean"))
                }
                _ => {}
            }
            if !(l.threshold > 0.0) || !(l.beta >= 0.0) {
                return cfg(format!("layer {i}: threshold must be > 0 and beta >= 0"));
            }
            if l.neuron == NeuronKind::Lif && !(l.threshold > l.u_r) {
                return cfg(format!("layer {i}: threshold must exceed u_r"));
            }
            let is_last = i + 1 == n;
            if !is_last && matches!(l.neuron, NeuronKind::Readout | NeuronKind::SpikingOutput) {
                return cfg(format!("layer {i}: {:?} is only valid as the output layer", l.neuron));
            }
            if l.neuron == NeuronKind::Readout && l.recurrent {
                return cfg(format!("layer {i}: readout layers cannot be recurrent"));
            }
        }
        let ok = match self.decode {
            DecodeMode::SpikeCount => last.neuron.is_spiking(),
            DecodeMode::MembraneSoftmax => matches!(last.neuron, NeuronKind::Readout | NeuronKind::Relu),
            DecodeMode::SpikingMembraneSoftmax => last.neuron == NeuronKind::SpikingOutput,
        };
        if !ok {
            return cfg(format!(
                "decode mode {:?} is incompatible with output neurons {:?}",
                self.decode, last.neuron
            ));
        }
        if self.bidirectional && n < 2 {
            return cfg("bidirectional networks need a hidden stack and an output layer".into());
        }
        Ok(())
    }
}

/// One layer's parameters. Weights are `fan_in x size`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: NeuronKind,
    pub w_in: Matrix,
    pub w_rec: Option<Matrix>,
    pub bias: Vec<f64>,
    pub tau_m: Vec<f64>,
    pub tau_adp: Option<Vec<f64>>,
    pub threshold: f64,
    pub beta: f64,
    pub r_m: f64,
    pub u_r: f64,
    pub lif_reset: LifReset,
    pub dt: f64,
    /// Membrane potential before the first step.
    pub u0: Vec<f64>,
}

impl Layer {
    pub fn size(&self) -> usize {
        self.bias.len()
    }

    pub fn fan_in(&self) -> usize {
        self.w_in.rows()
    }

    /// Layer with all weights zero and the mean time constants of `spec`.
    pub fn zeroed(spec: &LayerSpec, fan_in: usize, dt: f64) -> Layer {
        let n = spec.size;
        Layer {
            kind: spec.neuron,
            w_in: Matrix::zeros(fan_in, n),
            w_rec: spec.recurrent.then(|| Matrix::zeros(n, n)),
            bias: vec![0.0; n],
            tau_m: vec![clamp_tau(spec.tau_m_init.mean, dt); n],
            tau_adp: spec
                .neuron
                .is_adaptive()
                .then(|| vec![clamp_tau(spec.tau_adp_init.map_or(150.0, |t| t.mean), dt); n]),
            threshold: spec.threshold,
            beta: spec.beta,
            r_m: spec.r_m,
            u_r: spec.u_r,
            lif_reset: spec.lif_reset,
            dt,
            u0: vec![0.0; n],
        }
    }

    pub(crate) fn coeffs(&self) -> LayerCoeffs {
        let dt = self.dt;
        match self.kind {
            NeuronKind::Lif | NeuronKind::Readout => LayerCoeffs::Leak(
                self.tau_m
                    .iter()
                    .map(|&tau| LeakCoeffs::euler(tau, self.r_m, dt))
                    .collect(),
            ),
            NeuronKind::Alif | NeuronKind::SpikingOutput | NeuronKind::AdaptiveRelu => {
                let tau_adp = self.tau_adp.as_deref().unwrap_or(&[]);
                LayerCoeffs::Adaptive(
                    self.tau_m
                        .iter()
                        .zip(tau_adp)
                        .map(|(&tm, &ta)| AlifCoeffs {
                            alpha: (-dt / tm).exp(),
                            rho: (-dt / ta).exp(),
                            b0: self.threshold,
                            beta: self.beta,
                            r_m: self.r_m,
                        })
                        .collect(),
                )
            }
            NeuronKind::Relu => {
                LayerCoeffs::Relu(self.tau_m.iter().map(|&tau| (-dt / tau).exp()).collect())
            }
        }
    }

    pub fn check(&self, fan_in: usize) -> Result<()> {
        let n = self.size();
        if self.fan_in() != fan_in {
            return Err(Error::shape("layer fan-in", fan_in, self.fan_in()));
        }
        if self.w_in.cols() != n || self.tau_m.len() != n || self.u0.len() != n {
            return Err(Error::shape("layer width", n, self.w_in.cols()));
        }
        if let Some(w) = &self.w_rec {
            if w.rows() != n || w.cols() != n {
                return Err(Error::shape("recurrent weights", n, w.rows()));
            }
        }
        match (&self.tau_adp, self.kind.is_adaptive()) {
            (Some(t), true) if t.len() == n => {}
            (None, false) => {}
            _ => return Err(Error::Config("tau_adp present iff layer is adaptive".into())),
        }
        Ok(())
    }
}

pub(crate) enum LayerCoeffs {
    Leak(Vec<LeakCoeffs>),
    Adaptive(Vec<AlifCoeffs>),
    Relu(Vec<f64>),
}

pub fn clamp_tau(tau: f64, dt: f64) -> f64 {
    tau.clamp(dt, TAU_MAX_STEPS * dt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    /// Forward stack; the last entry is the output layer.
    pub layers: Vec<Layer>,
    /// Hidden stack reading the reversed sequence (bidirectional only).
    #[serde(default)]
    pub backward_layers: Vec<Layer>,
}

pub const MODEL_VERSION: &str = "srnn-model/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: String,
    #[serde(flatten)]
    network: Network,
}

impl Network {
    pub fn input_size(&self) -> usize {
        self.spec.input_size
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, Layer::size)
    }

    pub fn output(&self) -> &Layer {
        self.layers.last().expect("network has an output layer")
    }

    pub fn hidden(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn is_bidirectional(&self) -> bool {
        !self.backward_layers.is_empty()
    }

    /// Every layer, forward stack first.
    pub fn all_layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.iter().chain(&self.backward_layers)
    }

    pub fn all_layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.layers.iter_mut().chain(self.backward_layers.iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.all_layers()
            .map(|l| {
                l.w_in.as_slice().len()
                    + l.w_rec.as_ref().map_or(0, |w| w.as_slice().len())
                    + l.bias.len()
                    + l.tau_m.len()
                    + l.tau_adp.as_ref().map_or(0, Vec::len)
            })
            .sum()
    }

    /// Zero-weight network with mean time constants and zero membranes.
    pub fn zeroed(spec: &NetworkSpec) -> Result<Network> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut fan_in = spec.input_size;
        for (i, ls) in spec.layers.iter().enumerate() {
            let is_out = i + 1 == spec.layers.len();
            let layer_in = if is_out && spec.bidirectional {
                spec.layers[i - 1].size
            } else {
                fan_in
            };
            layers.push(Layer::zeroed(ls, layer_in, spec.dt));
            fan_in = ls.size;
        }
        let mut backward_layers = Vec::new();
        if spec.bidirectional {
            let mut fan_in = spec.input_size;
            for ls in &spec.layers[..spec.layers.len() - 1] {
                backward_layers.push(Layer::zeroed(ls, fan_in, spec.dt));
                fan_in = ls.size;
            }
        }
        Ok(Network {
            spec: spec.clone(),
            layers,
            backward_layers,
        })
    }

    pub fn check(&self) -> Result<()> {
        self.spec.validate()?;
        if self.layers.len() != self.spec.layers.len() {
            return Err(Error::shape("layer count", self.spec.layers.len(), self.layers.len()));
        }
        let check_stack = |stack: &[Layer], mut fan_in: usize| -> Result<usize> {
            for l in stack {
                l.check(fan_in)?;
                fan_in = l.size();
            }
            Ok(fan_in)
        };
        if self.spec.bidirectional {
            let top_f = check_stack(self.hidden(), self.spec.input_size)?;
            if self.backward_layers.len() != self.layers.len() - 1 {
                return Err(Error::shape(
                    "backward stack depth",
                    self.layers.len() - 1,
                    self.backward_layers.len(),
                ));
            }
            let top_b = check_stack(&self.backward_layers, self.spec.input_size)?;
            if top_f != top_b {
                return Err(Error::shape("backward stack width", top_f, top_b));
            }
            self.output().check(top_f)?;
        } else {
            if !self.backward_layers.is_empty() {
                return Err(Error::Config("unidirectional network with a backward stack".into()));
            }
            check_stack(&self.layers, self.spec.input_size)?;
        }
        Ok(())
    }

    /// Copy with every spiking unit replaced by its non-spiking counterpart:
    /// LIF/ALIF hidden layers become ReLU units, a spiking output layer
    /// becomes a readout, and decoding switches to membrane softmax.
    pub fn to_relu_mode(&self) -> Network {
        let mut net = self.clone();
        let n = net.layers.len();
        for (i, l) in net.all_layers_mut().enumerate() {
            let is_out = i == n - 1;
            l.kind = match l.kind {
                NeuronKind::Lif => NeuronKind::Relu,
                NeuronKind::Alif => NeuronKind::AdaptiveRelu,
                NeuronKind::SpikingOutput => NeuronKind::Readout,
                k => k,
            };
            if l.kind == NeuronKind::Readout && is_out {
                l.w_rec = None;
            }
            if !l.kind.is_adaptive() {
                l.tau_adp = None;
            }
        }
        for (i, ls) in net.spec.layers.iter_mut().enumerate() {
            ls.neuron = net.layers[i].kind;
            if !ls.neuron.is_adaptive() {
                ls.tau_adp_init = None;
            }
            ls.recurrent = net.layers[i].w_rec.is_some();
        }
        net.spec.decode = DecodeMode::MembraneSoftmax;
        net
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            version: &'a str,
            #[serde(flatten)]
            network: &'a Network,
        }
        Ok(serde_json::to_string_pretty(&Out {
            version: MODEL_VERSION,
            network: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Network> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "unsupported model version {:?}, expected {MODEL_VERSION:?}",
                file.version
            )));
        }
        file.network.check()?;
        Ok(file.network)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Network> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Network::from_json(&text)
    }
}

fn xavier_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("consistent shape")
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            m[(i, j)] = sign * q[(i, j)];
        }
    }
    m
}

fn sample_taus(rng: &mut ChaCha8Rng, init: TauInit, n: usize, dt: f64) -> Vec<f64> {
    if init.std == 0.0 {
        return vec![clamp_tau(init.mean, dt); n];
    }
    let dist = Normal::new(init.mean, init.std).expect("validated tau init");
    (0..n).map(|_| clamp_tau(dist.sample(rng), dt)).collect()
}

fn init_layer(rng: &mut ChaCha8Rng, spec: &LayerSpec, fan_in: usize, net: &NetworkSpec) -> Layer {
    let mut layer = Layer::zeroed(spec, fan_in, net.dt);
    layer.w_in = xavier_uniform(rng, fan_in, spec.size);
    if spec.recurrent {
        layer.w_rec = Some(orthogonal(rng, spec.size));
    }
    layer.tau_m = sample_taus(rng, spec.tau_m_init, spec.size, net.dt);
    if let (true, Some(init)) = (spec.neuron.is_adaptive(), spec.tau_adp_init) {
        layer.tau_adp = Some(sample_taus(rng, init, spec.size, net.dt));
    }
    if net.membrane_init == MembraneInit::Uniform && spec.neuron != NeuronKind::Readout {
        layer.u0 = (0..spec.size)
            .map(|_| rng.random::<f64>() * spec.threshold)
            .collect();
    }
    layer
}

/// Random initialization: Xavier-uniform feed-forward weights, orthogonal
/// recurrent weights, zero biases, normally distributed time constants
/// clamped to `[dt, 1e4 dt]`.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    let mut net = Network::zeroed(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fan_in = spec.input_size;
    let n = spec.layers.len();
    for (i, ls) in spec.layers.iter().enumerate() {
        let layer_in = if i + 1 == n && spec.bidirectional {
            spec.layers[i - 1].size
        } else {
            fan_in
        };
        net.layers[i] = init_layer(&mut rng, ls, layer_in, spec);
        fan_in = ls.size;
    }
    if spec.bidirectional {
        let mut fan_in = spec.input_size;
        for (i, ls) in spec.layers[..n - 1].iter().enumerate() {
            net.backward_layers[i] = init_layer(&mut rng, ls, fan_in, spec);
            fan_in = ls.size;
        }
    }
    Ok(net)
}

/// Dynamic state of one layer between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState {
    pub u: Vec<f64>,
    /// Threshold adaptation (empty for non-adaptive layers).
    pub eta: Vec<f64>,
    /// Output of the previous step: spikes, ReLU activations, or membranes.
    pub out: Vec<f64>,
}

impl LayerState {
    pub fn initial(layer: &Layer) -> Self {
        let n = layer.size();
        LayerState {
            u: layer.u0.clone(),
            eta: if layer.kind.is_adaptive() {
                vec![0.0; n]
            } else {
                Vec::new()
            },
            out: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<LayerState>,
}

impl NetworkState {
    pub fn initial(net: &Network) -> Self {
        NetworkState {
            layers: net.layers.iter().map(LayerState::initial).collect(),
        }
    }
}

/// Advance one layer by one step. `drive` receives the synaptic drive.
pub(crate) fn step_layer(
    layer: &Layer,
    coeffs: &LayerCoeffs,
    input: &[f64],
    state: &mut LayerState,
    drive: &mut [f64],
) {
    drive.copy_from_slice(&layer.bias);
    layer.w_in.accumulate_vec_mul(input, drive);
    if let Some(w) = &layer.w_rec {
        w.accumulate_vec_mul(&state.out, drive);
    }
    match coeffs {
        LayerCoeffs::Leak(c) if layer.kind == NeuronKind::Lif => {
            for j in 0..drive.len() {
                let s_prev = state.out[j] != 0.0;
                let (u, s) = lif_update(
                    state.u[j],
                    s_prev,
                    drive[j],
                    c[j],
                    layer.threshold,
                    layer.u_r,
                    layer.lif_reset,
                );
                state.u[j] = u;
                state.out[j] = if s { 1.0 } else { 0.0 };
            }
        }
        LayerCoeffs::Leak(c) => {
            for j in 0..drive.len() {
                let u = readout_update(state.u[j], drive[j], c[j]);
                state.u[j] = u;
                state.out[j] = u;
            }
        }
        LayerCoeffs::Adaptive(c) if layer.kind == NeuronKind::AdaptiveRelu => {
            for j in 0..drive.len() {
                let (u, eta, a) = adaptive_relu_update(state.u[j], state.eta[j], state.out[j], drive[j], &c[j]);
                state.u[j] = u;
                state.eta[j] = eta;
                state.out[j] = a;
            }
        }
        LayerCoeffs::Adaptive(c) => {
            for j in 0..drive.len() {
                let r = alif_update(state.u[j], state.eta[j], state.out[j] != 0.0, drive[j], &c[j]);
                state.u[j] = r.u;
                state.eta[j] = r.eta;
                state.out[j] = if r.spike { 1.0 } else { 0.0 };
            }
        }
        LayerCoeffs::Relu(alpha) => {
            for j in 0..drive.len() {
                let (u, a) = relu_update(state.u[j], drive[j], alpha[j], layer.r_m);
                state.u[j] = u;
                state.out[j] = a;
            }
        }
    }
}

/// Per-timestep record of one layer, each field flattened `T x size`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerTrace {
    pub size: usize,
    pub drive: Vec<f64>,
    pub u: Vec<f64>,
    /// Empty for non-adaptive layers.
    pub eta: Vec<f64>,
    pub out: Vec<f64>,
}

impl LayerTrace {
    fn with_capacity(size: usize, steps: usize, adaptive: bool) -> Self {
        LayerTrace {
            size,
            drive: Vec::with_capacity(size * steps),
            u: Vec::with_capacity(size * steps),
            eta: if adaptive {
                Vec::with_capacity(size * steps)
            } else {
                Vec::new()
            },
            out: Vec::with_capacity(size * steps),
        }
    }

    fn push(&mut self, drive: &[f64], state: &LayerState) {
        self.drive.extend_from_slice(drive);
        self.u.extend_from_slice(&state.u);
        self.eta.extend_from_slice(&state.eta);
        self.out.extend_from_slice(&state.out);
    }

    pub fn steps(&self) -> usize {
        self.out.len().checked_div(self.size).unwrap_or(0)
    }

    pub fn at<'a>(&self, field: &'a [f64], t: usize) -> &'a [f64] {
        &field[t * self.size..(t + 1) * self.size]
    }

    pub fn out_at(&self, t: usize) -> &[f64] {
        &self.out[t * self.size..(t + 1) * self.size]
    }

    pub fn u_at(&self, t: usize) -> &[f64] {
        &self.u[t * self.size..(t + 1) * self.size]
    }

    pub fn spike_count(&self) -> usize {
        self.out.iter().filter(|&&s| s != 0.0).count()
    }
}

/// Everything BPTT needs from a forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForwardTrace {
    pub steps: usize,
    /// The `T x input_size` sequence the trace was produced from.
    pub input: Vec<f64>,
    pub layers: Vec<LayerTrace>,
    /// Backward-direction hidden stack, indexed in its own (reversed) time.
    pub backward_layers: Vec<LayerTrace>,
    /// Input to the output layer of a bidirectional network (`T x width`).
    pub merged: Vec<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &LayerTrace {
        self.layers.last().expect("trace has an output layer")
    }

    pub fn all_layers(&self) -> impl Iterator<Item = &LayerTrace> {
        self.layers.iter().chain(&self.backward_layers)
    }
}

/// Run a stack of layers over a `T x fan_in` input.
pub(crate) fn run_stack(layers: &[Layer], input: &[f64], steps: usize) -> Vec<LayerTrace> {
    let mut traces: Vec<LayerTrace> = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let coeffs = layer.coeffs();
        let mut state = LayerState::initial(layer);
        let mut drive = vec![0.0; layer.size()];
        let mut trace = LayerTrace::with_capacity(layer.size(), steps, layer.kind.is_adaptive());
        let fan_in = layer.fan_in();
        for t in 0..steps {
            let x = match i {
                0 => &input[t * fan_in..(t + 1) * fan_in],
                _ => traces[i - 1].out_at(t),
            };
            step_layer(layer, &coeffs, x, &mut state, &mut drive);
            trace.push(&drive, &state);
        }
        traces.push(trace);
    }
    traces
}

fn check_input(net: &Network, x: &[f64], steps: usize) -> Result<()> {
    let n = net.input_size();
    if x.len() != n * steps {
        return Err(Error::shape("input sequence", n * steps, x.len()));
    }
    Ok(())
}

/// Outputs of every layer at one timestep.
pub type StepOutputs = Vec<Vec<f64>>;

/// Single-step forward pass of a unidirectional network.
pub fn forward_step(net: &Network, x_t: &[f64], state: &mut NetworkState) -> Result<StepOutputs> {
    if net.is_bidirectional() {
        return Err(Error::Config("forward_step needs a unidirectional network".into()));
    }
    if x_t.len() != net.input_size() {
        return Err(Error::shape("input vector", net.input_size(), x_t.len()));
    }
    if state.layers.len() != net.layers.len() {
        return Err(Error::shape("network state", net.layers.len(), state.layers.len()));
    }
    let mut outputs: StepOutputs = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let coeffs = layer.coeffs();
        let mut drive = vec![0.0; layer.size()];
        let input = if i == 0 { x_t } else { &outputs[i - 1] };
        step_layer(layer, &coeffs, input, &mut state.layers[i], &mut drive);
        outputs.push(state.layers[i].out.clone());
    }
    Ok(outputs)
}

/// Forward pass over a `T x input_size` row-major sequence.
pub fn forward_sequence(net: &Network, x: &[f64], steps: usize) -> Result<ForwardTrace> {
    check_input(net, x, steps)?;
    if net.is_bidirectional() {
        return forward_bidirectional_net(net, x, steps);
    }
    Ok(ForwardTrace {
        steps,
        input: x.to_vec(),
        layers: run_stack(&net.layers, x, steps),
        backward_layers: Vec::new(),
        merged: Vec::new(),
    })
}

pub(crate) fn reverse_rows(x: &[f64], width: usize, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for t in (0..steps).rev() {
        out.extend_from_slice(&x[t * width..(t + 1) * width]);
    }
    out
}

fn forward_bidirectional_net(net: &Network, x: &[f64], steps: usize) -> Result<ForwardTrace> {
    forward_bidirectional(net.hidden(), &net.backward_layers, net.output(), x, steps)
}

/// Run `forward` on `x` and `backward` on the time-reversed `x`; the mean of
/// the two top-layer outputs, aligned in time, drives the `output` layer.
pub fn forward_bidirectional(
    forward: &[Layer],
    backward: &[Layer],
    output: &Layer,
    x: &[f64],
    steps: usize,
) -> Result<ForwardTrace> {
    let (Some(top_f), Some(top_b)) = (forward.last(), backward.last()) else {
        return Err(Error::Config("bidirectional stacks must be non-empty".into()));
    };
    let width = top_f.size();
    if top_b.size() != width || output.fan_in() != width {
        return Err(Error::shape("bidirectional width", width, top_b.size()));
    }
    let fan_in = forward[0].fan_in();
    if backward[0].fan_in() != fan_in || x.len() != fan_in * steps {
        return Err(Error::shape("input sequence", fan_in * steps, x.len()));
    }
    let f = run_stack(forward, x, steps);
    let b = run_stack(backward, &reverse_rows(x, fan_in, steps), steps);
    let (tf, tb) = (f.last().unwrap(), b.last().unwrap());
    let mut merged = Vec::with_capacity(width * steps);
    for t in 0..steps {
        let bf = tb.out_at(steps - 1 - t);
        merged.extend(tf.out_at(t).iter().zip(bf).map(|(a, b)| 0.5 * (a + b)));
    }
    let out = run_stack(std::slice::from_ref(output), &merged, steps);
    let mut layers = f;
    layers.extend(out);
    Ok(ForwardTrace {
        steps,
        input: x.to_vec(),
        layers,
        backward_layers: b,
        merged,
    })
}
