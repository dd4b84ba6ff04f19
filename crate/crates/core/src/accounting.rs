//! Sparsity and operation counts, and the theoretical energy derived from
//! them.
//!
//! Costs are per timestep. A multiply-accumulate (MAC) is charged 3.1 pJ and
//! an accumulate (AC) 0.1 pJ. Spiking layers pay MACs only for their own
//! state updates; synaptic work is event driven and costs one AC per spike
//! per outgoing synapse.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ForwardTrace, Network, NeuronKind};

pub const MAC_PJ: f64 = 3.1;
pub const AC_PJ: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    VanillaRnn,
    Gru,
    Lstm,
    Lif,
    Alif,
    ReadoutLif,
}

impl LayerKind {
    pub fn is_spiking_model(self) -> bool {
        matches!(self, LayerKind::Lif | LayerKind::Alif | LayerKind::ReadoutLif)
    }

    /// MACs per neuron per step for the state update of a spiking layer.
    fn update_macs(self) -> usize {
        match self {
            // Membrane decay, threshold decay, threshold composition.
            LayerKind::Alif => 3,
            LayerKind::Lif | LayerKind::ReadoutLif => 1,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub kind: LayerKind,
    pub fan_in: usize,
    pub size: usize,
    #[serde(default)]
    pub recurrent: bool,
    /// Two independent copies, one per direction; the output is twice as wide.
    #[serde(default)]
    pub bidirectional: bool,
}

impl LayerEntry {
    pub fn new(kind: LayerKind, fan_in: usize, size: usize, recurrent: bool) -> Self {
        LayerEntry {
            kind,
            fan_in,
            size,
            recurrent,
            bidirectional: false,
        }
    }

    pub fn bidirectional(mut self) -> Self {
        self.bidirectional = true;
        self
    }

    fn copies(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn output_width(&self) -> usize {
        self.copies() * self.size
    }

    /// Synapses into this layer (input and recurrent).
    pub fn synapses(&self) -> usize {
        let rec = if self.recurrent { self.size * self.size } else { 0 };
        self.copies() * (self.fan_in * self.size + rec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDescription {
    #[serde(default)]
    pub name: String,
    pub layers: Vec<LayerEntry>,
}

impl ArchDescription {
    pub fn new(name: &str, layers: Vec<LayerEntry>) -> Result<Self> {
        let a = ArchDescription {
            name: name.to_string(),
            layers,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("architecture has no layers".into()));
        }
        for w in self.layers.windows(2) {
            // A bidirectional layer feeds either the concatenation or the
            // mean of its two directions.
            let fits = w[1].fan_in == w[0].output_width() || (w[0].bidirectional && w[1].fan_in == w[0].size);
            if !fits {
                return Err(Error::shape("layer fan-in", w[0].output_width(), w[1].fan_in));
            }
        }
        if self.layers.iter().any(|l| l.size == 0 || l.fan_in == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn synapses(&self) -> usize {
        self.layers.iter().map(LayerEntry::synapses).sum()
    }

    /// Concatenate two architectures; the junction synapses belong to the
    /// first layer of `other`.
    pub fn stack(&self, other: &ArchDescription) -> Result<ArchDescription> {
        let mut layers = self.layers.clone();
        layers.extend_from_slice(&other.layers);
        ArchDescription::new(&format!("{}+{}", self.name, other.name), layers)
    }

    /// Describe a network in cost-model terms.
    pub fn from_network(net: &Network) -> ArchDescription {
        let bi = net.is_bidirectional();
        let depth = net.layers.len();
        let layers = net
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let kind = match l.kind {
                    NeuronKind::Lif => LayerKind::Lif,
                    NeuronKind::Alif | NeuronKind::SpikingOutput => LayerKind::Alif,
                    NeuronKind::Readout => LayerKind::ReadoutLif,
                    NeuronKind::Relu | NeuronKind::AdaptiveRelu if l.w_rec.is_some() => LayerKind::VanillaRnn,
                    NeuronKind::Relu | NeuronKind::AdaptiveRelu => LayerKind::Dense,
                };
                let hidden_bi = bi && i + 1 < depth;
                // The two directions are averaged, so the output layer of a
                // bidirectional net sees a single-width input.
                LayerEntry {
                    kind,
                    fan_in: l.fan_in(),
                    size: l.size(),
                    recurrent: l.w_rec.is_some(),
                    bidirectional: hidden_bi,
                }
            })
            .collect();
        ArchDescription {
            name: String::from("model"),
            layers,
        }
    }
}

/// Per-neuron spike probabilities of the spiking layers of a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct FiringRates {
    pub per_neuron: Vec<f64>,
    pub mean: f64,
    pub spikes: usize,
}

/// Spikes per neuron per step over every spiking layer of `net`.
pub fn firing_rate(net: &Network, trace: &ForwardTrace) -> FiringRates {
    let steps = trace.steps;
    let mut per_neuron = Vec::new();
    let mut spikes = 0;
    for (layer, tr) in net.all_layers().zip(trace.layers.iter().chain(&trace.backward_layers)) {
        if !layer.kind.is_spiking() {
            continue;
        }
        let n = tr.size;
        let mut counts = vec![0usize; n];
        for row in tr.out.chunks_exact(n.max(1)) {
            for (c, &s) in counts.iter_mut().zip(row) {
                *c += (s != 0.0) as usize;
            }
        }
        spikes += counts.iter().sum::<usize>();
        per_neuron.extend(counts.iter().map(|&c| if steps == 0 { 0.0 } else { c as f64 / steps as f64 }));
    }
    let mean = if per_neuron.is_empty() || steps == 0 {
        0.0
    } else {
        spikes as f64 / (per_neuron.len() * steps) as f64
    };
    FiringRates {
        per_neuron,
        mean,
        spikes,
    }
}

/// Synaptic operations triggered by spikes: each spike costs its fan-out.
/// Returns the total and the per-step mean.
pub fn sop_count(net: &Network, trace: &ForwardTrace) -> (f64, f64) {
    let depth = net.layers.len();
    let mut total = 0.0;
    let mut add = |layer: &crate::network::Layer, next: Option<&crate::network::Layer>, tr: &crate::network::LayerTrace| {
        if !layer.kind.is_spiking() {
            return;
        }
        let fan_out = layer.w_rec.as_ref().map_or(0, |w| w.cols()) + next.map_or(0, |l| l.size());
        total += (tr.spike_count() * fan_out) as f64;
    };
    for i in 0..depth {
        let next = if i + 1 < depth { Some(&net.layers[i + 1]) } else { None };
        add(&net.layers[i], next, &trace.layers[i]);
    }
    let out = net.layers.last();
    let nb = net.backward_layers.len();
    for i in 0..nb {
        let next = if i + 1 < nb { Some(&net.backward_layers[i + 1]) } else { out };
        add(&net.backward_layers[i], next, &trace.backward_layers[i]);
    }
    let per_step = if trace.steps == 0 { 0.0 } else { total / trace.steps as f64 };
    (total, per_step)
}

/// MAC and AC per step of a spiking architecture at mean firing rate `fr`.
///
/// Non-spiking entries (Dense, RNN, GRU, LSTM) are charged their full ANN
/// MAC cost and no AC.
pub fn snn_cost_per_step(arch: &ArchDescription, fr: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&fr) {
        return Err(Error::Domain(format!("firing rate {fr} outside [0, 1]")));
    }
    let mut mac = 0.0;
    let mut syn = 0usize;
    for l in &arch.layers {
        if l.kind.is_spiking_model() {
            mac += (l.kind.update_macs() * l.copies() * l.size) as f64;
            syn += l.synapses();
        } else {
            mac += ann_layer_cost(l) as f64;
        }
    }
    Ok((mac, fr * syn as f64))
}

fn ann_layer_cost(l: &LayerEntry) -> usize {
    let (i, h) = (l.fan_in, l.size);
    let one = match l.kind {
        LayerKind::Dense => i * h,
        LayerKind::VanillaRnn => (i + h) * h,
        LayerKind::Gru => 3 * (i + h) * h + 3 * h,
        LayerKind::Lstm => 4 * (i + h) * h + 4 * h,
        // Spiking kinds run as dense rate layers in an ANN.
        LayerKind::Lif | LayerKind::Alif | LayerKind::ReadoutLif => {
            if l.recurrent {
                (i + h) * h
            } else {
                i * h
            }
        }
    };
    l.copies() * one
}

/// MACs per step of an architecture evaluated as a conventional ANN.
pub fn ann_cost_per_step(arch: &ArchDescription) -> f64 {
    arch.layers.iter().map(|l| ann_layer_cost(l) as f64).sum()
}

pub fn energy_per_step(mac: f64, ac: f64) -> f64 {
    MAC_PJ * mac + AC_PJ * ac
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub name: String,
    pub mac_per_step: f64,
    pub ac_per_step: f64,
    pub energy_per_step_pj: f64,
    pub fr_mean: f64,
    pub sops_total: f64,
    pub sops_per_step: f64,
}

impl CostReport {
    /// Report from raw counts, e.g. published table values.
    pub fn from_counts(name: &str, mac: f64, ac: f64, fr: f64) -> Self {
        CostReport {
            name: name.to_string(),
            mac_per_step: mac,
            ac_per_step: ac,
            energy_per_step_pj: energy_per_step(mac, ac),
            fr_mean: fr,
            sops_total: 0.0,
            sops_per_step: 0.0,
        }
    }

    pub fn for_snn(arch: &ArchDescription, fr: f64) -> Result<Self> {
        arch.validate()?;
        let (mac, ac) = snn_cost_per_step(arch, fr)?;
        Ok(CostReport::from_counts(&arch.name, mac, ac, fr))
    }

    pub fn for_ann(arch: &ArchDescription) -> Result<Self> {
        arch.validate()?;
        Ok(CostReport::from_counts(&arch.name, ann_cost_per_step(arch), 0.0, 0.0))
    }

    pub fn with_sops(mut self, total: f64, per_step: f64) -> Self {
        self.sops_total = total;
        self.sops_per_step = per_step;
        self
    }

    const HEADER: [&'static str; 7] = [
        "name",
        "mac_per_step",
        "ac_per_step",
        "energy_pj_per_step",
        "fr_mean",
        "sops_total",
        "sops_per_step",
    ];

    fn cells(&self) -> [String; 7] {
        [
            self.name.clone(),
            format!("{:.1}", self.mac_per_step),
            format!("{:.1}", self.ac_per_step),
            format!("{:.1}", self.energy_per_step_pj),
            format!("{:.4}", self.fr_mean),
            format!("{:.1}", self.sops_total),
            format!("{:.1}", self.sops_per_step),
        ]
    }

    pub fn to_csv(reports: &[CostReport]) -> String {
        let mut s = CostReport::HEADER.join(",");
        s.push('\n');
        for r in reports {
            s.push_str(&r.cells().join(","));
            s.push('\n');
        }
        s
    }

    /// Right-aligned text table.
    pub fn to_table(reports: &[CostReport]) -> String {
        let rows: Vec<[String; 7]> = reports.iter().map(CostReport::cells).collect();
        let mut width: Vec<usize> = CostReport::HEADER.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, cells: &[&str]| {
            for (i, (c, w)) in cells.iter().zip(&width).enumerate() {
                if i == 0 {
                    let _ = write!(s, "{c:<w$}");
                } else {
                    let _ = write!(s, "  {c:>w$}");
                }
            }
            s.push('\n');
        };
        line(&mut s, &CostReport::HEADER);
        for r in &rows {
            let cells: Vec<&str> = r.iter().map(String::as_str).collect();
            line(&mut s, &cells);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Efficiency {
    pub energy_ratio: f64,
    pub error_ratio: f64,
    /// Product of the two ratios.
    pub efficiency: f64,
}

/// How many times more energy, and more error, `a` spends than `b`.
pub fn efficiency_ratio(a: &CostReport, b: &CostReport, err_a: f64, err_b: f64) -> Result<Efficiency> {
    if b.energy_per_step_pj <= 0.0 || err_b <= 0.0 {
        return Err(Error::Domain("reference energy and error must be positive".into()));
    }
    let energy_ratio = a.energy_per_step_pj / b.energy_per_step_pj;
    let error_ratio = err_a / err_b;
    Ok(Efficiency {
        energy_ratio,
        error_ratio,
        efficiency: energy_ratio * error_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward_sequence, init_network, DecodeMode, LayerSpec, NetworkSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shd() -> ArchDescription {
        ArchDescription::new(
            "shd",
            vec![
                LayerEntry::new(LayerKind::Alif, 700, 128, true),
                LayerEntry::new(LayerKind::Alif, 128, 128, true),
                LayerEntry::new(LayerKind::ReadoutLif, 128, 20, false),
            ],
        )
        .unwrap()
    }

    #[test]
    fn published_mac_counts() {
        let (mac, ac) = snn_cost_per_step(&shd(), 0.0).unwrap();
        assert_eq!((mac, ac), (788.0, 0.0));
        let soli = ArchDescription::new(
            "soli",
            vec![
                LayerEntry::new(LayerKind::Alif, 2048, 512, false),
                LayerEntry::new(LayerKind::Alif, 512, 512, true),
                LayerEntry::new(LayerKind::ReadoutLif, 512, 12, false),
            ],
        )
        .unwrap();
        assert_eq!(snn_cost_per_step(&soli, 0.0).unwrap().0, 3084.0);
    }

    #[test]
    fn shd_energy() {
        let r = CostReport::for_snn(&shd(), 0.0757).unwrap();
        // 700*128 + 128*128 + 128*128 + 128*128 + 128*20 synapses.
        assert_eq!(shd().synapses(), 141_312);
        assert!((r.ac_per_step - 10_697.3).abs() < 0.1);
        assert!((energy_per_step(788.0, 10_700.0) - 3512.8).abs() < 1e-9);
        assert!((r.energy_per_step_pj - 3512.5).abs() < 0.1);
        assert_eq!(energy_per_step(0.0, 0.0), 0.0);
    }

    #[test]
    fn ann_formulas() {
        let dense = ArchDescription::new("d", vec![LayerEntry::new(LayerKind::Dense, 700, 128, false)]).unwrap();
        assert_eq!(ann_cost_per_step(&dense), 89_600.0);
        let lstm = ArchDescription::new("l", vec![LayerEntry::new(LayerKind::Lstm, 40, 220, true)]).unwrap();
        assert_eq!(ann_cost_per_step(&lstm), (4 * (40 + 220) * 220 + 4 * 220) as f64);
        let gru = ArchDescription::new("g", vec![LayerEntry::new(LayerKind::Gru, 10, 5, true)]).unwrap();
        assert_eq!(ann_cost_per_step(&gru), (3 * 15 * 5 + 15) as f64);
        let rnn = ArchDescription::new("r", vec![LayerEntry::new(LayerKind::VanillaRnn, 10, 5, true)]).unwrap();
        assert_eq!(ann_cost_per_step(&rnn), 75.0);
        let r = CostReport::for_ann(&dense).unwrap();
        assert_eq!(r.ac_per_step, 0.0);
    }

    #[test]
    fn bidirectional_lstm_stack() {
        let a = ArchDescription::new(
            "bilstm",
            vec![
                LayerEntry::new(LayerKind::Lstm, 700, 128, true).bidirectional(),
                LayerEntry::new(LayerKind::Lstm, 256, 128, true).bidirectional(),
                LayerEntry::new(LayerKind::Dense, 256, 100, false),
                LayerEntry::new(LayerKind::Dense, 100, 20, false),
            ],
        )
        .unwrap();
        let by_hand = 2 * (4 * (700 + 128) * 128 + 4 * 128) + 2 * (4 * (256 + 128) * 128 + 4 * 128) + 256 * 100 + 100 * 20;
        assert_eq!(ann_cost_per_step(&a), by_hand as f64);
        assert!(ArchDescription::new("bad", vec![a.layers[0], a.layers[0]]).is_err());
    }

    #[test]
    fn ac_is_linear_and_energy_monotone() {
        let a = shd();
        let (_, ac1) = snn_cost_per_step(&a, 0.1).unwrap();
        let (_, ac2) = snn_cost_per_step(&a, 0.2).unwrap();
        assert!((ac2 - 2.0 * ac1).abs() < 1e-9);
        assert!(snn_cost_per_step(&a, 1.5).is_err());
        assert!(energy_per_step(10.0, 5.0) < energy_per_step(11.0, 5.0));
        assert!(energy_per_step(10.0, 5.0) < energy_per_step(10.0, 6.0));
    }

    #[test]
    fn costs_add_over_stacking() {
        let a = ArchDescription::new("a", vec![LayerEntry::new(LayerKind::Alif, 10, 8, true)]).unwrap();
        let b = ArchDescription::new("b", vec![LayerEntry::new(LayerKind::Lif, 8, 4, false)]).unwrap();
        let ab = a.stack(&b).unwrap();
        let fr = 0.3;
        let (ma, aa) = snn_cost_per_step(&a, fr).unwrap();
        let (mb, ab_) = snn_cost_per_step(&b, fr).unwrap();
        let (m, ac) = snn_cost_per_step(&ab, fr).unwrap();
        assert_eq!(m, ma + mb);
        // The junction synapses (8 x 4) are already part of b's fan-in.
        assert!((ac - (aa + ab_)).abs() < 1e-9);
        assert!((ab_ - fr * 32.0).abs() < 1e-12);
    }

    #[test]
    fn efficiency_examples() {
        let r = CostReport::from_counts("x", 10.0, 5.0, 0.1);
        let e = efficiency_ratio(&r, &r, 0.1, 0.1).unwrap();
        assert_eq!((e.energy_ratio, e.error_ratio, e.efficiency), (1.0, 1.0, 1.0));
        let double = CostReport::from_counts("y", 20.0, 10.0, 0.1);
        let e = efficiency_ratio(&double, &r, 0.05, 0.1).unwrap();
        assert!((e.efficiency - 1.0).abs() < 1e-12);
        // Published ECG rows: ReLU 1.9k MAC, ALIF 90 MAC and 500 AC.
        let relu = CostReport::from_counts("relu", 1900.0, 0.0, 0.0);
        let alif = CostReport::from_counts("alif", 90.0, 500.0, 0.0);
        let e = efficiency_ratio(&relu, &alif, 1.0, 1.0).unwrap();
        assert!((e.energy_ratio / 17.8 - 1.0).abs() < 0.25);
    }

    fn small_net() -> Network {
        let spec = NetworkSpec::new(
            4,
            vec![LayerSpec::alif(6, true), LayerSpec::alif(5, false), LayerSpec::readout(3)],
            DecodeMode::MembraneSoftmax,
        );
        let mut n = init_network(&spec, 3).unwrap();
        n.layers[0].w_in.as_mut_slice().iter_mut().for_each(|w| *w *= 4.0);
        n.layers[1].w_in.as_mut_slice().iter_mut().for_each(|w| *w *= 4.0);
        n
    }

    #[test]
    fn firing_rate_examples() {
        let n = small_net();
        let silent = forward_sequence(&n, &vec![0.0; 40], 10).unwrap();
        // Membranes start below threshold and leak; nothing fires.
        assert_eq!(firing_rate(&n, &silent).mean, 0.0);
        assert_eq!(sop_count(&n, &silent), (0.0, 0.0));

        let mut tr = silent.clone();
        tr.layers[0].out.fill(1.0);
        tr.layers[1].out.fill(1.0);
        assert_eq!(firing_rate(&n, &tr).mean, 1.0);

        // 5 spikes over 10 neurons and 10 steps.
        let spec = NetworkSpec::new(2, vec![LayerSpec::new(10, NeuronKind::Lif, false)], DecodeMode::SpikeCount);
        let n = init_network(&spec, 0).unwrap();
        let mut tr = forward_sequence(&n, &[0.0; 20], 10).unwrap();
        tr.layers[0].out.fill(0.0);
        for t in [0, 2, 3, 7, 9] {
            tr.layers[0].out[t * 10 + 4] = 1.0;
        }
        let r = firing_rate(&n, &tr);
        assert_eq!((r.spikes, r.per_neuron.len()), (5, 10));
        assert!((r.mean - 0.05).abs() < 1e-15);
        assert!((r.per_neuron[4] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sop_matches_edge_enumeration() {
        let n = small_net();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..4 * 30).map(|_| rng.random_range(0.0..3.0)).collect();
        let tr = forward_sequence(&n, &x, 30).unwrap();
        assert!(tr.layers[0].spike_count() > 0);
        // Enumerate every (spike, nonzero-or-not synapse) pair explicitly.
        let mut edges = 0usize;
        for t in 0..30 {
            for (i, l) in n.layers.iter().enumerate() {
                if !l.kind.is_spiking() {
                    continue;
                }
                for j in 0..l.size() {
                    if tr.layers[i].out_at(t)[j] == 0.0 {
                        continue;
                    }
                    if let Some(w) = &l.w_rec {
                        edges += w.row(j).len();
                    }
                    if let Some(next) = n.layers.get(i + 1) {
                        edges += next.w_in.row(j).len();
                    }
                }
            }
        }
        let (total, per_step) = sop_count(&n, &tr);
        assert_eq!(total, edges as f64);
        assert!((per_step - edges as f64 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn from_network_counts() {
        let n = small_net();
        let a = ArchDescription::from_network(&n);
        a.validate().unwrap();
        assert_eq!(snn_cost_per_step(&a, 0.0).unwrap().0, (6 * 3 + 5 * 3 + 3) as f64);
        assert_eq!(a.synapses(), 4 * 6 + 36 + 6 * 5 + 5 * 3);
    }

    #[test]
    fn report_rendering() {
        let r = CostReport::for_snn(&shd(), 0.0757).unwrap();
        let csv = CostReport::to_csv(std::slice::from_ref(&r));
        assert!(csv.starts_with("name,mac_per_step,ac_per_step,energy_pj_per_step"));
        assert!(csv.contains("shd,788.0,10697.3,"));
        let table = CostReport::to_table(&[r]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].len(), lines[1].len());
    }
}
