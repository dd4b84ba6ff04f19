//! Input encoders, output decoders and anytime-accuracy curves.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::DecodeMode;

/// Binary `T x N` spike matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeRaster {
    steps: usize,
    channels: Vec<String>,
    bits: Vec<bool>,
}

impl SpikeRaster {
    pub fn new(steps: usize, channels: Vec<String>) -> Self {
        let n = channels.len();
        SpikeRaster {
            steps,
            channels,
            bits: vec![false; steps * n],
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn width(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channels
    }

    pub fn get(&self, t: usize, c: usize) -> bool {
        self.bits[t * self.width() + c]
    }

    pub fn set(&mut self, t: usize, c: usize, v: bool) {
        let w = self.width();
        self.bits[t * w + c] = v;
    }

    pub fn channel(&self, c: usize) -> Vec<u8> {
        (0..self.steps).map(|t| self.get(t, c) as u8).collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Row-major `0.0 / 1.0` matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// `(t, channel)` pairs in time order.
    pub fn events(&self) -> Vec<(usize, usize)> {
        let w = self.width();
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / w, i % w))
            .collect()
    }

    /// Event CSV with header `t,channel`.
    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "channel"]).map_err(csv_err)?;
        for (t, c) in self.events() {
            w.write_record([t.to_string(), c.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<raster>", e))
    }

    pub fn read_events_csv(path: &Path, steps: usize, channels: Vec<String>) -> Result<Self> {
        let mut raster = SpikeRaster::new(steps, channels);
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
            if rec.len() != 2 {
                return Err(Error::parse(path, line, format!("expected 2 fields, found {}", rec.len())));
            }
            let t: usize = rec[0].trim().parse().map_err(|_| Error::parse(path, line, "bad t"))?;
            let c: usize = rec[1].trim().parse().map_err(|_| Error::parse(path, line, "bad channel"))?;
            if t >= steps || c >= raster.width() {
                return Err(Error::parse(path, line, format!("event ({t},{c}) out of range")));
            }
            raster.set(t, c, true);
        }
        Ok(raster)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e))
}

/// Up/down spike channels from signed consecutive differences.
pub fn level_crossing_encode(x: &[f64], l_plus: f64, l_minus: f64) -> Result<SpikeRaster> {
    if x.is_empty() {
        return Err(Error::Domain("level-crossing needs at least one sample".into()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite sample at index {i}")));
    }
    if !(l_plus > 0.0) || !(l_minus > 0.0) {
        return Err(Error::Domain("level-crossing thresholds must be positive".into()));
    }
    let mut r = SpikeRaster::new(x.len(), vec!["up".into(), "down".into()]);
    for t in 1..x.len() {
        if x[t] - x[t - 1] >= l_plus {
            r.set(t, 0, true);
        }
        if x[t - 1] - x[t] >= l_minus {
            r.set(t, 1, true);
        }
    }
    Ok(r)
}

/// Z-scoring fitted on one set of series and applied to others.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: f64,
    pub std: f64,
}

impl ZScore {
    pub fn fit<'a>(series: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for s in series {
            for &v in s {
                n += 1;
                sum += v;
                sq += v * v;
            }
        }
        if n == 0 {
            return ZScore { mean: 0.0, std: 1.0 };
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        ZScore { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| (v - self.mean) / self.std).collect()
    }
}

/// Overlapping frames of a 1-D series.
pub fn sliding_window(series: &[f64], size: usize, stride: usize) -> Result<Vec<Vec<f64>>> {
    if size == 0 || stride == 0 {
        return Err(Error::Domain("window size and stride must be positive".into()));
    }
    if series.len() < size {
        return Err(Error::Domain(format!(
            "series of length {} is shorter than the window {size}",
            series.len()
        )));
    }
    Ok(series
        .windows(size)
        .step_by(stride)
        .map(<[f64]>::to_vec)
        .collect())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Softmax of per-class spike counts of a `T x C` output raster.
pub fn decode_spike_count(out: &[f64], classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0; classes];
    for row in out.chunks_exact(classes) {
        for (c, &s) in counts.iter_mut().zip(row) {
            *c += s;
        }
    }
    softmax(&counts)
}

pub fn decode_membrane(u_out: &[f64]) -> Vec<f64> {
    softmax(u_out)
}

pub fn argmax(p: &[f64]) -> usize {
    // First maximum wins, so ties resolve to the lowest class index.
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Class probabilities at every timestep: for spike counting, the softmax of
/// the counts accumulated so far; for membrane decoding, the softmax of the
/// current membrane.
pub fn per_step_probs(mode: DecodeMode, out: &[f64], u: &[f64], classes: usize) -> Vec<Vec<f64>> {
    match mode {
        DecodeMode::SpikeCount => {
            let mut counts = vec![0.0; classes];
            out.chunks_exact(classes)
                .map(|row| {
                    for (c, &s) in counts.iter_mut().zip(row) {
                        *c += s;
                    }
                    softmax(&counts)
                })
                .collect()
        }
        DecodeMode::MembraneSoftmax | DecodeMode::SpikingMembraneSoftmax => {
            u.chunks_exact(classes).map(decode_membrane).collect()
        }
    }
}

/// Correct-prediction indicator at every step for one sample.
pub fn step_correctness(probs: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| if argmax(p) == y { 1.0 } else { 0.0 })
        .collect()
}

/// Accuracy as a function of elapsed time, averaged over samples.
///
/// `labels[i]` holds either one label per step or a single label that
/// applies to every step.
pub fn anytime_curve(probs: &[Vec<Vec<f64>>], labels: &[Vec<usize>], horizon: usize) -> Result<Vec<f64>> {
    if probs.len() != labels.len() {
        return Err(Error::shape("anytime labels", probs.len(), labels.len()));
    }
    let mut curve = vec![0.0; horizon];
    if probs.is_empty() {
        return Ok(curve);
    }
    for (p, y) in probs.iter().zip(labels) {
        if p.len() < horizon {
            return Err(Error::shape("anytime horizon", horizon, p.len()));
        }
        for t in 0..horizon {
            let label = if y.len() == 1 { y[0] } else { y[t] };
            if argmax(&p[t]) == label {
                curve[t] += 1.0;
            }
        }
    }
    let n = probs.len() as f64;
    curve.iter_mut().for_each(|c| *c /= n);
    Ok(curve)
}

/// Anytime curve as CSV with header `t,accuracy`.
pub fn anytime_csv(curve: &[f64]) -> String {
    let mut s = String::from("t,accuracy\n");
    for (t, a) in curve.iter().enumerate() {
        s.push_str(&format!("{t},{a}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn level_crossing_worked_example() {
        let r = level_crossing_encode(&[0.0, 0.35, 0.20, -0.20], 0.3, 0.3).unwrap();
        assert_eq!(r.channel(0), vec![0, 1, 0, 0]);
        assert_eq!(r.channel(1), vec![0, 0, 0, 1]);
    }

    #[test]
    fn level_crossing_edge_cases() {
        let r = level_crossing_encode(&[2.0; 10], 0.3, 0.3).unwrap();
        assert_eq!(r.count(), 0);
        assert!(level_crossing_encode(&[], 0.3, 0.3).is_err());
        assert!(level_crossing_encode(&[0.0, f64::NAN], 0.3, 0.3).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..500).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = level_crossing_encode(&x, 0.3, 0.3).unwrap();
        assert!((0..500).all(|t| !(r.get(t, 0) && r.get(t, 1))));
    }

    #[test]
    fn sliding_window_counts() {
        let s: Vec<f64> = (0..784).map(f64::from).collect();
        let frames = sliding_window(&s, 4, 1).unwrap();
        assert_eq!(frames.len(), 781);
        assert_eq!(frames[780], vec![780.0, 781.0, 782.0, 783.0]);
        assert_eq!(sliding_window(&s[..4], 4, 1).unwrap(), vec![s[..4].to_vec()]);
        assert!(sliding_window(&s[..3], 4, 1).is_err());
    }

    #[test]
    fn spike_count_decoding() {
        // counts [3, 1, 0]
        let out = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let p = decode_spike_count(&out, 3);
        let expect = [0.843795, 0.114195, 0.042010];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
        let p = decode_spike_count(&[1.0, 1.0, 0.0, 0.0], 2);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(decode_spike_count(&[1.0, 0.0], 1), vec![1.0]);
    }

    #[test]
    fn membrane_decoding() {
        assert_eq!(decode_membrane(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = decode_membrane(&[1.0, 0.0]);
        assert!((p[0] - 0.731059).abs() < 1e-6 && (p[1] - 0.268941).abs() < 1e-6);
    }

    #[test]
    fn anytime_constructions() {
        let right = vec![vec![0.9, 0.1]; 10];
        let wrong = vec![vec![0.1, 0.9]; 10];
        let flat = anytime_curve(std::slice::from_ref(&right), &[vec![0]], 10).unwrap();
        assert!(flat.iter().all(|&a| a == 1.0));

        let mut late = wrong[..5].to_vec();
        late.extend_from_slice(&right[5..]);
        let step = anytime_curve(&[late], &[vec![0]], 10).unwrap();
        assert_eq!(step, [vec![0.0; 5], vec![1.0; 5]].concat());
        assert!(anytime_curve(&[right], &[vec![0]], 11).is_err());
    }

    #[test]
    fn random_predictor_curve_is_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probs: Vec<Vec<Vec<f64>>> = (0..1000)
            .map(|_| {
                (0..20)
                    .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
                    .collect()
            })
            .collect();
        let labels: Vec<Vec<usize>> = (0..1000).map(|_| vec![rng.random_range(0..4)]).collect();
        let curve = anytime_curve(&probs, &labels, 20).unwrap();
        // Binomial sd at n=1000, p=0.25 is ~0.0137; allow 4 sd.
        assert!(curve.iter().all(|&a| (a - 0.25).abs() < 0.055), "{curve:?}");
    }

    #[test]
    fn raster_event_csv_roundtrip() {
        let mut r = SpikeRaster::new(5, vec!["a".into(), "b".into(), "c".into()]);
        r.set(0, 2, true);
        r.set(3, 0, true);
        r.set(4, 1, true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        r.write_events_csv(std::fs::File::create(&path).unwrap()).unwrap();
        let back = SpikeRaster::read_events_csv(&path, 5, r.channel_names().to_vec()).unwrap();
        assert_eq!(back, r);

        std::fs::write(&path, "t,channel\n0,1\n9,0\n").unwrap();
        match SpikeRaster::read_events_csv(&path, 5, r.channel_names().to_vec()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn zscore() {
        let z = ZScore::fit([[1.0, 3.0].as_slice(), [5.0, 7.0].as_slice()]);
        assert_eq!(z.mean, 4.0);
        assert!((z.std - 5.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(ZScore::fit([[2.0, 2.0].as_slice()]).std, 1.0);
    }

    proptest! {
        #[test]
        fn level_crossing_is_translation_invariant(
            x in proptest::collection::vec(-3.0f64..3.0, 1..80),
            c in -10.0f64..10.0,
        ) {
            // Shift by a dyadic constant so differences are computed exactly.
            let c = (c * 8.0).round() / 8.0;
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let a = level_crossing_encode(&x, 0.3, 0.3).unwrap();
            let b = level_crossing_encode(&shifted, 0.3, 0.3).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn decoded_probs_are_distributions(
            u in proptest::collection::vec(-50.0f64..50.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let p = decode_membrane(&u);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let q = decode_membrane(&u.iter().map(|v| v + shift).collect::<Vec<_>>());
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn spike_count_ignores_time_order(
            rows in proptest::collection::vec(proptest::collection::vec(0u8..2, 3), 1..30),
            seed in any::<u64>(),
        ) {
            let flat: Vec<f64> = rows.iter().flatten().map(|&b| f64::from(b)).collect();
            let mut perm = rows.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let pflat: Vec<f64> = perm.iter().flatten().map(|&b| f64::from(b)).collect();
            prop_assert_eq!(decode_spike_count(&flat, 3), decode_spike_count(&pflat, 3));
        }
    }
}
