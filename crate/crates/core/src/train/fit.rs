use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::sop_count;
use crate::codecs::{anytime_curve, per_step_probs};
use crate::error::{Error, Result};
use crate::network::{forward_sequence, init_network, Network, NetworkSpec};
use crate::surrogate::SurrogateKind;
use crate::tasks::{Dataset, Sample};

use super::adam::{adam_step, AdamState};
use super::backward::{backward, GradientSet};
use super::loss::{objective, LossKind, Target};
use super::schedule::{lr_at, Schedule};

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    #[serde(default)]
    pub schedule: Schedule,
    pub epochs: usize,
    #[serde(default = "one")]
    pub minibatch: usize,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub surrogate: SurrogateKind,
    /// Seeds the per-epoch shuffling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub freeze_tau_m: bool,
    #[serde(default)]
    pub freeze_tau_adp: bool,
    /// Return the network of the epoch with the best validation accuracy
    /// instead of the last one.
    #[serde(default)]
    pub keep_best: bool,
}

impl TrainingConfig {
    pub fn new(lr: f64, epochs: usize, minibatch: usize) -> Self {
        TrainingConfig {
            lr,
            schedule: Schedule::Constant,
            epochs,
            minibatch,
            loss: LossKind::Ce,
            surrogate: SurrogateKind::default(),
            seed: 0,
            freeze_tau_m: false,
            freeze_tau_adp: false,
            keep_best: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch must be at least 1".into()));
        }
        if let Schedule::Step { factor, .. } = self.schedule {
            if !(factor > 0.0) {
                return Err(Error::Config("step schedule factor must be positive".into()));
            }
        }
        self.surrogate.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub mean_firing_rate: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub const HEADER: &'static str = "epoch,split,loss,accuracy,mean_firing_rate,lr";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.split, r.loss, r.accuracy, r.mean_firing_rate, r.lr
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self, split: &str) -> Option<&MetricsRow> {
        self.rows.iter().rev().find(|r| r.split == split)
    }
}

/// Dataset-level metrics of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean loss per sample.
    pub loss: f64,
    /// Fraction of correct decisions (per sequence or per step).
    pub accuracy: f64,
    pub mean_firing_rate: f64,
    /// Synaptic operations summed over the dataset.
    pub sops_total: f64,
    /// Synaptic operations per sample per step.
    pub sops_per_step: f64,
    /// Accuracy at every step, averaged over samples.
    pub anytime: Vec<f64>,
}

struct SampleResult {
    loss: f64,
    correct: usize,
    decisions: usize,
    spikes: usize,
    neuron_steps: usize,
    sops: f64,
    probs: Vec<Vec<f64>>,
    grads: Option<GradientSet>,
}

fn spiking_units(net: &Network) -> usize {
    net.all_layers()
        .filter(|l| l.kind.is_spiking())
        .map(|l| l.size())
        .sum()
}

fn run_sample(
    net: &Network,
    sample: &Sample,
    steps: usize,
    surrogate: Option<SurrogateKind>,
) -> Result<SampleResult> {
    let trace = forward_sequence(net, &sample.input, steps)?;
    let obj = objective(net.spec.decode, trace.output(), &sample.target)?;
    let fr = crate::accounting::firing_rate(net, &trace);
    let grads = match surrogate {
        Some(sg) => Some(backward(net, &trace, &obj, sg)?),
        None => None,
    };
    let out = trace.output();
    Ok(SampleResult {
        loss: obj.loss,
        correct: obj.correct,
        decisions: obj.decisions,
        spikes: fr.spikes,
        neuron_steps: spiking_units(net) * steps,
        sops: sop_count(net, &trace).0,
        probs: if grads.is_none() {
            per_step_probs(net.spec.decode, &out.out, &out.u, out.size)
        } else {
            Vec::new()
        },
        grads,
    })
}

fn check_compatible(net: &Network, ds: &Dataset) -> Result<()> {
    ds.validate()?;
    if ds.channels != net.input_size() {
        return Err(Error::shape("dataset channels", net.input_size(), ds.channels));
    }
    if ds.classes > net.classes() {
        return Err(Error::shape("dataset classes", net.classes(), ds.classes));
    }
    Ok(())
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Metrics of `net` on every sample of `ds`. Samples run in parallel; all
/// reductions happen in sample order.
pub fn evaluate(net: &Network, ds: &Dataset) -> Result<Evaluation> {
    check_compatible(net, ds)?;
    let results: Vec<SampleResult> = ds
        .samples
        .par_iter()
        .map(|s| run_sample(net, s, ds.steps, None))
        .collect::<Result<_>>()?;
    let (mut loss, mut correct, mut decisions, mut spikes, mut units, mut sops) = (0.0, 0, 0, 0, 0, 0.0);
    for r in &results {
        loss += r.loss;
        correct += r.correct;
        decisions += r.decisions;
        spikes += r.spikes;
        units += r.neuron_steps;
        sops += r.sops;
    }
    let labels: Vec<Vec<usize>> = ds
        .samples
        .iter()
        .map(|s| match &s.target {
            Target::Class(y) => vec![*y],
            Target::Stream(ys) => ys.clone(),
        })
        .collect();
    let probs: Vec<Vec<Vec<f64>>> = results.into_iter().map(|r| r.probs).collect();
    let anytime = anytime_curve(&probs, &labels, ds.steps)?;
    let n = ds.len() as f64;
    Ok(Evaluation {
        loss: ratio(loss, n),
        accuracy: ratio(correct as f64, decisions as f64),
        mean_firing_rate: ratio(spikes as f64, units as f64),
        sops_total: sops,
        sops_per_step: ratio(sops, n * ds.steps as f64),
        anytime,
    })
}

/// Per-sample loss and counts from a minibatch pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleStats {
    pub loss: f64,
    pub correct: usize,
    pub decisions: usize,
    pub spikes: usize,
    pub neuron_steps: usize,
}

/// Mean gradient over a minibatch, summed in ascending sample order so the
/// result does not depend on how the batch was drawn or scheduled.
pub fn minibatch_gradient(
    net: &Network,
    ds: &Dataset,
    batch: &[usize],
    surrogate: SurrogateKind,
) -> Result<(GradientSet, Vec<SampleStats>)> {
    let mut idx = batch.to_vec();
    idx.sort_unstable();
    let results: Vec<SampleResult> = idx
        .par_iter()
        .map(|&i| run_sample(net, &ds.samples[i], ds.steps, Some(surrogate)))
        .collect::<Result<_>>()?;
    let mut total = GradientSet::zeros_like(net);
    let mut stats = Vec::with_capacity(results.len());
    for r in results {
        total.add_assign(r.grads.as_ref().expect("gradients requested"));
        stats.push(SampleStats {
            loss: r.loss,
            correct: r.correct,
            decisions: r.decisions,
            spikes: r.spikes,
            neuron_steps: r.neuron_steps,
        });
    }
    total.scale(1.0 / idx.len().max(1) as f64);
    Ok((total, stats))
}

/// Train an already initialized network.
pub fn fit_network(
    mut net: Network,
    train: &Dataset,
    valid: Option<&Dataset>,
    cfg: &TrainingConfig,
) -> Result<(Network, MetricsLog)> {
    cfg.validate()?;
    check_compatible(&net, train)?;
    if let Some(v) = valid {
        check_compatible(&net, v)?;
    }
    if let Some(s) = train.samples.iter().find(|s| !cfg.loss.accepts(&s.target)) {
        return Err(Error::Config(format!("loss {:?} does not accept target {:?}", cfg.loss, s.target)));
    }
    let mut log = MetricsLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, Network)> = None;
    for epoch in 0..cfg.epochs {
        let lr = lr_at(cfg.schedule, cfg.lr, epoch);
        order.shuffle(&mut rng);
        let (mut loss, mut correct, mut decisions, mut spikes, mut units) = (0.0, 0, 0, 0, 0);
        for batch in order.chunks(cfg.minibatch) {
            let (mut g, stats) = minibatch_gradient(&net, train, batch, cfg.surrogate)?;
            for s in stats {
                if !s.loss.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
                }
                loss += s.loss;
                correct += s.correct;
                decisions += s.decisions;
                spikes += s.spikes;
                units += s.neuron_steps;
            }
            if !g.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in epoch {epoch}")));
            }
            g.zero_frozen(cfg.freeze_tau_m, cfg.freeze_tau_adp);
            adam_step(&mut net, &g, &mut adam, lr)?;
        }
        log.rows.push(MetricsRow {
            epoch,
            split: "train".into(),
            loss: ratio(loss, train.len() as f64),
            accuracy: ratio(correct as f64, decisions as f64),
            mean_firing_rate: ratio(spikes as f64, units as f64),
            lr,
        });
        if let Some(v) = valid {
            let e = evaluate(&net, v)?;
            log.rows.push(MetricsRow {
                epoch,
                split: "valid".into(),
                loss: e.loss,
                accuracy: e.accuracy,
                mean_firing_rate: e.mean_firing_rate,
                lr,
            });
            if cfg.keep_best && best.as_ref().is_none_or(|(a, _)| e.accuracy > *a) {
                best = Some((e.accuracy, net.clone()));
            }
        }
    }
    Ok((best.map_or(net, |(_, n)| n), log))
}

/// Initialize a network from `spec` (seeded by `spec.seed`) and train it.
pub fn fit(
    spec: &NetworkSpec,
    train: &Dataset,
    valid: Option<&Dataset>,
    cfg: &TrainingConfig,
) -> Result<(Network, MetricsLog)> {
    let net = init_network(spec, spec.seed)?;
    fit_network(net, train, valid, cfg)
}
