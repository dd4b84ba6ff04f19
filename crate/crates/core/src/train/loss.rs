use serde::{Deserialize, Serialize};

use crate::codecs::{argmax, softmax};
use crate::error::{Error, Result};
use crate::network::{DecodeMode, LayerTrace};

/// Learning target of one sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// One label for the whole sequence.
    Class(usize),
    /// One label per timestep.
    Stream(Vec<usize>),
}

impl Target {
    /// Label at step `t`, with sequence labels applying to every step.
    pub fn label_at(&self, t: usize) -> usize {
        match self {
            Target::Class(y) => *y,
            Target::Stream(ys) => ys[t],
        }
    }

    pub fn max_label(&self) -> usize {
        match self {
            Target::Class(y) => *y,
            Target::Stream(ys) => ys.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Cross-entropy of one decision per sequence.
    #[default]
    Ce,
    /// Summed per-step cross-entropy of a streaming prediction.
    NllStreaming,
}

impl LossKind {
    pub fn accepts(self, target: &Target) -> bool {
        matches!(
            (self, target),
            (LossKind::Ce, Target::Class(_)) | (LossKind::NllStreaming, Target::Stream(_))
        )
    }
}

/// Cross-entropy `-log y_hat[y]` of a probability vector.
pub fn loss_classification(y_hat: &[f64], y: usize) -> Result<f64> {
    if y >= y_hat.len() {
        return Err(Error::Domain(format!("label {y} out of range for {} classes", y_hat.len())));
    }
    let sum: f64 = y_hat.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || y_hat.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::Domain(format!("not a probability vector (sum {sum})")));
    }
    Ok(-y_hat[y].ln())
}

/// Sum of per-step cross-entropies.
pub fn loss_streaming(y_hats: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    if y_hats.len() != ys.len() {
        return Err(Error::shape("streaming labels", y_hats.len(), ys.len()));
    }
    y_hats
        .iter()
        .zip(ys)
        .map(|(p, &y)| loss_classification(p, y))
        .sum()
}

/// Cross-entropy from logits, `logsumexp(z) - z[y]`, and its gradient
/// `softmax(z) - onehot(y)`. Stable where `-ln(softmax)` would underflow.
pub(crate) fn ce_from_logits(z: &[f64], y: usize) -> (f64, Vec<f64>, bool) {
    let p = softmax(z);
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let hit = argmax(&p) == y;
    let mut g = p;
    g[y] -= 1.0;
    (lse - z[y], g, hit)
}

/// Loss value, adjoints for the output layer, and decision statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub loss: f64,
    /// `dL/d out_t`, flattened `T x C`.
    pub d_out: Vec<f64>,
    /// `dL/d u_t` of the output membranes, flattened `T x C`.
    pub d_u: Vec<f64>,
    /// Correct decisions: 0 or 1 per sequence, or the count of correct steps.
    pub correct: usize,
    pub decisions: usize,
}

/// Evaluate the loss of an output-layer trace against a target and seed the
/// backward pass.
///
/// Sequence labels with membrane decoding are scored at the last step.
pub fn objective(mode: DecodeMode, out: &LayerTrace, target: &Target) -> Result<Objective> {
    let c = out.size;
    let steps = out.steps();
    if target.max_label() >= c {
        return Err(Error::Domain(format!("label {} out of range for {c} classes", target.max_label())));
    }
    if steps == 0 {
        return Err(Error::Domain("cannot score an empty sequence".into()));
    }
    if let Target::Stream(ys) = target {
        if ys.len() != steps {
            return Err(Error::shape("streaming labels", steps, ys.len()));
        }
    }
    let mut obj = Objective {
        loss: 0.0,
        d_out: vec![0.0; steps * c],
        d_u: vec![0.0; steps * c],
        correct: 0,
        decisions: 0,
    };
    match (mode, target) {
        (DecodeMode::SpikeCount, Target::Class(y)) => {
            let mut counts = vec![0.0; c];
            for t in 0..steps {
                counts.iter_mut().zip(out.out_at(t)).for_each(|(a, &s)| *a += s);
            }
            let (l, g, hit) = ce_from_logits(&counts, *y);
            for row in obj.d_out.chunks_exact_mut(c) {
                row.copy_from_slice(&g);
            }
            obj.loss = l;
            obj.correct = hit as usize;
            obj.decisions = 1;
        }
        (DecodeMode::SpikeCount, Target::Stream(ys)) => {
            // Step t is scored on the counts so far, so the count adjoint at
            // step t gathers every later step's gradient.
            let mut counts = vec![0.0; c];
            let mut grads = Vec::with_capacity(steps);
            for (t, &y) in ys.iter().enumerate() {
                counts.iter_mut().zip(out.out_at(t)).for_each(|(a, &s)| *a += s);
                let (l, g, hit) = ce_from_logits(&counts, y);
                obj.loss += l;
                obj.correct += hit as usize;
                grads.push(g);
            }
            let mut acc = vec![0.0; c];
            for t in (0..steps).rev() {
                acc.iter_mut().zip(&grads[t]).for_each(|(a, g)| *a += g);
                obj.d_out[t * c..(t + 1) * c].copy_from_slice(&acc);
            }
            obj.decisions = steps;
        }
        (_, Target::Class(y)) => {
            let t = steps - 1;
            let (l, g, hit) = ce_from_logits(out.u_at(t), *y);
            obj.d_u[t * c..].copy_from_slice(&g);
            obj.loss = l;
            obj.correct = hit as usize;
            obj.decisions = 1;
        }
        (_, Target::Stream(ys)) => {
            for (t, &y) in ys.iter().enumerate() {
                let (l, g, hit) = ce_from_logits(out.u_at(t), y);
                obj.d_u[t * c..(t + 1) * c].copy_from_slice(&g);
                obj.loss += l;
                obj.correct += hit as usize;
            }
            obj.decisions = steps;
        }
    }
    Ok(obj)
}
