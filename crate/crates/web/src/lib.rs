//! Browser bindings for three small views of the library: surrogate
//! gradient shapes, one ALIF neuron under a current step, and the energy
//! model applied to architecture descriptions.
//!
//! The plain functions carry the logic and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use srnn::accounting::{ArchDescription, CostReport};
use srnn::neuron::{alif_step, AlifParams, AlifState};
use srnn::surrogate::SurrogateKind;
use wasm_bindgen::prelude::*;

/// The SHD spiking network and its Bi-LSTM baseline.
pub const EXAMPLE_ARCHITECTURES: &str = include_str!("../../../configs/shd_arch.json");

/// Surrogate `kind` with up to three parameters, in the order
/// `(h, s, sigma)`, `(sigma)` or `(alpha)`.
pub fn surrogate(kind: &str, p: [f64; 3]) -> Result<SurrogateKind, String> {
    let sg = match kind {
        "multi_gaussian" => SurrogateKind::MultiGaussian {
            h: p[0],
            s: p[1],
            sigma: p[2],
        },
        "gaussian" => SurrogateKind::Gaussian { sigma: p[0] },
        "linear" => SurrogateKind::Linear { alpha: p[0] },
        "slayer" => SurrogateKind::Slayer { alpha: p[0] },
        other => return Err(format!("unknown surrogate {other:?}")),
    };
    sg.validate().map_err(|e| e.to_string())?;
    Ok(sg)
}

/// `points` samples of the pseudo-derivative over `[x_min, x_max]`, where
/// `x = u - theta`.
pub fn curve(sg: SurrogateKind, x_min: f64, x_max: f64, points: usize) -> Result<Vec<f64>, String> {
    let ordered = x_max > x_min;
    if points < 2 || !ordered {
        return Err("need at least two points on a non-empty range".into());
    }
    let dx = (x_max - x_min) / (points - 1) as f64;
    Ok((0..points).map(|i| sg.grad(x_min + dx * i as f64, 0.0)).collect())
}

#[wasm_bindgen]
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlifRun {
    u: Vec<f64>,
    theta: Vec<f64>,
    spikes: Vec<u8>,
}

#[wasm_bindgen]
impl AlifRun {
    pub fn u(&self) -> Vec<f64> {
        self.u.clone()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.theta.clone()
    }

    pub fn spikes(&self) -> Vec<u8> {
        self.spikes.clone()
    }

    pub fn spike_count(&self) -> usize {
        self.spikes.iter().filter(|&&s| s == 1).count()
    }
}

/// Neuron parameters and a rectangular input current on `[on, off)`.
#[derive(Clone, Copy, Debug)]
pub struct Stimulus {
    pub current: f64,
    pub on: usize,
    pub off: usize,
    pub steps: usize,
}

pub fn run_alif(p: &AlifParams, stim: Stimulus) -> Result<AlifRun, String> {
    p.validate().map_err(|e| e.to_string())?;
    if stim.steps == 0 || stim.steps > 100_000 {
        return Err("steps must be in 1..=100000".into());
    }
    let mut state = AlifState::default();
    let mut run = AlifRun::default();
    for t in 0..stim.steps {
        let drive = if (stim.on..stim.off).contains(&t) { stim.current } else { 0.0 };
        let (next, s) = alif_step(state, drive, p).map_err(|e| e.to_string())?;
        state = next;
        run.u.push(state.u);
        run.theta.push(state.threshold(p));
        run.spikes.push(u8::from(s));
    }
    Ok(run)
}

/// Cost table for one architecture or a JSON array of them. Spiking
/// architectures are costed at firing rate `fr`, the others as ANNs.
/// Every row after the first also gets its energy relative to the first.
pub fn energy_table(arch_json: &str, fr: f64) -> Result<String, String> {
    let value: serde_json::Value = serde_json::from_str(arch_json).map_err(|e| e.to_string())?;
    let archs: Vec<ArchDescription> = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|a| vec![a])
    }
    .map_err(|e| e.to_string())?;
    if archs.is_empty() {
        return Err("no architectures given".into());
    }
    let reports = archs
        .iter()
        .map(|a| {
            if a.layers.iter().any(|l| l.kind.is_spiking_model()) {
                CostReport::for_snn(a, fr)
            } else {
                CostReport::for_ann(a)
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let mut out = CostReport::to_table(&reports);
    let base = &reports[0];
    for r in &reports[1..] {
        if base.energy_per_step_pj > 0.0 {
            out.push_str(&format!(
                "{} uses {:.1}x the energy of {}\n",
                r.name,
                r.energy_per_step_pj / base.energy_per_step_pj,
                base.name
            ));
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn example_architectures() -> String {
    EXAMPLE_ARCHITECTURES.to_string()
}

#[wasm_bindgen]
pub fn surrogate_curve(
    kind: &str,
    p1: f64,
    p2: f64,
    p3: f64,
    x_min: f64,
    x_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    let sg = surrogate(kind, [p1, p2, p3]).map_err(|e| JsError::new(&e))?;
    curve(sg, x_min, x_max, points).map_err(|e| JsError::new(&e))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn simulate_alif(
    tau_m: f64,
    tau_adp: f64,
    b0: f64,
    beta: f64,
    current: f64,
    on: usize,
    off: usize,
    steps: usize,
) -> Result<AlifRun, JsError> {
    let p = AlifParams {
        tau_m,
        tau_adp,
        b0,
        beta,
        ..AlifParams::default()
    };
    run_alif(&p, Stimulus { current, on, off, steps }).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn energy_report(arch_json: &str, fr: f64) -> Result<String, JsError> {
    energy_table(arch_json, fr).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_gaussian_curve_peaks_at_threshold() {
        let sg = surrogate("multi_gaussian", [0.15, 6.0, 0.5]).unwrap();
        let c = curve(sg, -2.0, 2.0, 401).unwrap();
        assert!((c[200] - 0.878223).abs() < 1e-6);
        assert!(c[0] < 0.0 && c[400] < 0.0);
        assert!(surrogate("tanh", [1.0; 3]).is_err());
        assert!(surrogate("gaussian", [-1.0, 0.0, 0.0]).is_err());
        assert!(curve(sg, 1.0, 1.0, 10).is_err());
    }

    #[test]
    fn adaptation_stretches_interspike_intervals() {
        let p = AlifParams {
            b0: 0.1,
            ..AlifParams::default()
        };
        let run = run_alif(
            &p,
            Stimulus {
                current: 2.0,
                on: 10,
                off: 400,
                steps: 500,
            },
        )
        .unwrap();
        let times: Vec<usize> = (0..500).filter(|&t| run.spikes[t] == 1).collect();
        assert!(times.len() > 4, "{times:?}");
        assert!(times[0] >= 10 && *times.last().unwrap() < 400);
        let first = times[1] - times[0];
        let last = times[times.len() - 1] - times[times.len() - 2];
        assert!(last > first, "{first} vs {last}");
        assert!(run.theta[399] > run.theta[9]);

        let no_adapt = run_alif(&AlifParams { beta: 0.0, ..p }, Stimulus { current: 2.0, on: 10, off: 400, steps: 500 }).unwrap();
        assert!(no_adapt.spike_count() > run.spike_count());
    }

    #[test]
    fn energy_table_matches_the_shd_counts() {
        let t = energy_table(EXAMPLE_ARCHITECTURES, 0.0757).unwrap();
        assert!(t.contains("788.0"), "{t}");
        assert!(t.contains("10697.3"), "{t}");
        assert!(t.contains("bi-lstm-shd uses 1121."), "{t}");
        let single = r#"{"name": "d", "layers": [{"kind": "dense", "fan_in": 4, "size": 2}]}"#;
        assert!(energy_table(single, 0.5).unwrap().contains("8.0"));
        assert!(energy_table("[]", 0.1).is_err());
        assert!(energy_table(EXAMPLE_ARCHITECTURES, 1.5).is_err());
    }
}
