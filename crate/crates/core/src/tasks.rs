//! Synthetic benchmark tasks and dataset files.
//!
//! File formats, all keyed by a `sample` column so one file holds a whole
//! dataset:
//!
//! * dense CSV: `sample,t,label,x0..x{N-1}`, one row per timestep;
//! * event CSV: `sample,label,t,channel`, one row per spike, and a row with
//!   empty `t` and `channel` for a sample without spikes (sequence labels
//!   only);
//! * IDX: the big-endian MNIST container, images flattened row-major.
//!
//! A JSON manifest (`srnn-dataset/1`) records the shape and the file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::codecs::{level_crossing_encode, ZScore};
use crate::error::{Error, Result};
use crate::train::loss::Target;

pub const MANIFEST_VERSION: &str = "srnn-dataset/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// One label per sequence.
    SequenceClassification,
    /// One label per timestep.
    Streaming,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `T x N`, row-major.
    pub input: Vec<f64>,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: TaskKind,
    pub steps: usize,
    pub channels: usize,
    pub classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let width = self.steps * self.channels;
        for s in &self.samples {
            if s.input.len() != width {
                return Err(Error::shape("sample input", width, s.input.len()));
            }
            match (&s.target, self.kind) {
                (Target::Class(_), TaskKind::SequenceClassification) => {}
                (Target::Stream(ys), TaskKind::Streaming) if ys.len() == self.steps => {}
                _ => return Err(Error::Config("target does not match the task kind".into())),
            }
            if s.target.max_label() >= self.classes {
                return Err(Error::Domain(format!(
                    "label {} out of range for {} classes",
                    s.target.max_label(),
                    self.classes
                )));
            }
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.empty_like()
        }
    }

    fn empty_like(&self) -> Dataset {
        Dataset {
            kind: self.kind,
            steps: self.steps,
            channels: self.channels,
            classes: self.classes,
            samples: Vec::new(),
        }
    }

    /// Whether every input value is 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.input.iter().all(|&v| v == 0.0 || v == 1.0))
    }
}

/// Independent stream for sample `i` of a generator seeded with `seed`.
fn sample_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i as u64 + 1);
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternParams {
    pub classes: usize,
    pub steps: usize,
    pub channels: usize,
    pub jitter_std: f64,
    pub samples: usize,
    /// Mean spikes per channel per step in a template.
    #[serde(default = "default_rate")]
    pub rate: f64,
}

fn default_rate() -> f64 {
    0.05
}

/// Spike-pattern classification.
///
/// Every class template carries the same number of spikes on each channel;
/// only the spike times differ. Spike counts alone therefore carry no
/// information, and the class must be read from timing. Samples are
/// jittered copies of the template of class `i mod C`.
pub fn gen_pattern_classification(p: &PatternParams, seed: u64) -> Result<Dataset> {
    let PatternParams {
        classes,
        steps,
        channels,
        jitter_std,
        samples,
        rate,
    } = *p;
    if classes == 0 || steps == 0 || channels == 0 {
        return Err(Error::Config("pattern task needs classes, steps and channels".into()));
    }
    if !(jitter_std >= 0.0) || !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Config("jitter must be >= 0 and rate in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(rate * steps as f64).map_err(|e| Error::Config(e.to_string()))?;
    let counts: Vec<usize> = (0..channels)
        .map(|_| (poisson.sample(&mut rng) as usize).clamp(1, steps))
        .collect();
    let times: Vec<usize> = (0..steps).collect();
    // templates[c][k] = spike times of class c on channel k.
    let templates: Vec<Vec<Vec<usize>>> = (0..classes)
        .map(|_| {
            counts
                .iter()
                .map(|&n| {
                    let mut t: Vec<usize> = times.choose_multiple(&mut rng, n).copied().collect();
                    t.sort_unstable();
                    t
                })
                .collect()
        })
        .collect();
    let jitter = Normal::new(0.0, jitter_std.max(f64::MIN_POSITIVE)).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = i % classes;
        let mut r = sample_rng(seed, i);
        let mut x = vec![0.0; steps * channels];
        for (k, ts) in templates[class].iter().enumerate() {
            for &t in ts {
                let dt = if jitter_std > 0.0 { jitter.sample(&mut r).round() as i64 } else { 0 };
                let t = (t as i64 + dt).clamp(0, steps as i64 - 1) as usize;
                x[t * channels + k] = 1.0;
            }
        }
        out.push(Sample {
            input: x,
            target: Target::Class(class),
        });
    }
    Ok(Dataset {
        kind: TaskKind::SequenceClassification,
        steps,
        channels,
        classes,
        samples: out,
    })
}

/// One period of each streaming waveform class.
pub const WAVEFORMS: [[f64; 4]; 4] = [
    [0.0, 0.5, 1.0, 1.5],
    [1.5, 1.0, 0.5, 0.0],
    [0.75, 0.75, 0.75, 0.75],
    [0.0, 0.75, 1.5, 0.75],
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamParams {
    pub classes: usize,
    pub segment_len: usize,
    pub segments_per_sample: usize,
    pub noise_std: f64,
    pub samples: usize,
}

/// Streaming waveform labelling: each sample concatenates segments of
/// periodic waveforms (rising ramp, falling ramp, plateau, triangle) with a
/// label at every step. The output is a single analog channel.
pub fn gen_streaming_waveform(p: &StreamParams, seed: u64) -> Result<Dataset> {
    let StreamParams {
        classes,
        segment_len,
        segments_per_sample,
        noise_std,
        samples,
    } = *p;
    if classes < 2 || classes > WAVEFORMS.len() {
        return Err(Error::Config(format!("streaming task supports 2..={} classes", WAVEFORMS.len())));
    }
    if segment_len == 0 || segments_per_sample == 0 || !(noise_std >= 0.0) {
        return Err(Error::Config("invalid streaming task parameters".into()));
    }
    let steps = segment_len * segments_per_sample;
    let noise = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        let mut r = sample_rng(seed, i);
        let mut x = Vec::with_capacity(steps);
        let mut ys = Vec::with_capacity(steps);
        for _ in 0..segments_per_sample {
            let c = r.random_range(0..classes);
            for t in 0..segment_len {
                let n = if noise_std > 0.0 { noise.sample(&mut r) } else { 0.0 };
                x.push(WAVEFORMS[c][t % 4] + n);
                ys.push(c);
            }
        }
        out.push(Sample {
            input: x,
            target: Target::Stream(ys),
        });
    }
    Ok(Dataset {
        kind: TaskKind::Streaming,
        steps,
        channels: 1,
        classes,
        samples: out,
    })
}

/// Normalize each channel with `zscore` and convert it to up/down spike
/// channels by level crossing. The result has `2 N` channels.
pub fn level_crossing_dataset(ds: &Dataset, zscore: &ZScore, l_plus: f64, l_minus: f64) -> Result<Dataset> {
    let (steps, n) = (ds.steps, ds.channels);
    let mut samples = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let mut x = vec![0.0; steps * 2 * n];
        for k in 0..n {
            let series: Vec<f64> = (0..steps).map(|t| s.input[t * n + k]).collect();
            let raster = level_crossing_encode(&zscore.apply(&series), l_plus, l_minus)?;
            for t in 0..steps {
                x[t * 2 * n + 2 * k] = if raster.get(t, 0) { 1.0 } else { 0.0 };
                x[t * 2 * n + 2 * k + 1] = if raster.get(t, 1) { 1.0 } else { 0.0 };
            }
        }
        samples.push(Sample {
            input: x,
            target: s.target.clone(),
        });
    }
    Ok(Dataset {
        channels: 2 * n,
        samples,
        ..ds.empty_like()
    })
}

/// Fit a z-score over every value of a dataset (the training split).
pub fn fit_zscore(ds: &Dataset) -> ZScore {
    ZScore::fit(ds.samples.iter().map(|s| s.input.as_slice()))
}

/// Index sets of a train/validation/test partition of `n` samples. Sizes
/// are rounded from the ratios; the test set takes the remainder.
pub fn split_indices(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<[Vec<usize>; 3]> {
    let (a, b, c) = ratios;
    if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be >= 0 and sum to 1")));
    }
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx.split_off(n_train + n_val);
    let mut val = idx.split_off(n_train);
    let mut train = idx;
    for v in [&mut train, &mut val, &mut test] {
        v.sort_unstable();
    }
    Ok([train, val, test])
}

pub fn split(ds: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let [a, b, c] = split_indices(ds.len(), ratios, seed)?;
    Ok((ds.subset(&a), ds.subset(&b), ds.subset(&c)))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<fs::File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn write_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

pub fn write_dense_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = write_err(path);
    let mut header = vec!["sample".to_string(), "t".into(), "label".into()];
    header.extend((0..ds.channels).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(&err)?;
    for (i, s) in ds.samples.iter().enumerate() {
        for t in 0..ds.steps {
            let mut row = vec![i.to_string(), t.to_string(), s.target.label_at(t).to_string()];
            row.extend(s.input[t * ds.channels..(t + 1) * ds.channels].iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, k: usize, name: &str) -> Result<T> {
    rec.get(k)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::parse(path, line, format!("bad or missing {name}")))
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(f))
}

/// Read a dense CSV with `steps` rows per sample and `channels` values per
/// row.
pub fn load_dense_csv(path: &Path, steps: usize, channels: usize, kind: TaskKind, classes: usize) -> Result<Dataset> {
    let mut rdr = open_csv(path)?;
    let mut samples: Vec<Sample> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut input: Vec<f64> = Vec::new();
    let mut finish = |input: &mut Vec<f64>, labels: &mut Vec<usize>, line: usize| -> Result<()> {
        let target = match kind {
            TaskKind::Streaming => Target::Stream(std::mem::take(labels)),
            TaskKind::SequenceClassification => {
                if labels.iter().any(|&l| l != labels[0]) {
                    return Err(Error::parse(path, line, "label changes within a classification sample"));
                }
                let y = labels[0];
                labels.clear();
                Target::Class(y)
            }
        };
        samples.push(Sample {
            input: std::mem::take(input),
            target,
        });
        Ok(())
    };
    let mut line = 1;
    for (i, rec) in rdr.records().enumerate() {
        line = i + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if rec.len() != 3 + channels {
            return Err(Error::parse(path, line, format!("expected {} fields, found {}", 3 + channels, rec.len())));
        }
        let s: usize = field(path, line, &rec, 0, "sample")?;
        let t: usize = field(path, line, &rec, 1, "t")?;
        let y: usize = field(path, line, &rec, 2, "label")?;
        let done = i / steps.max(1);
        if steps == 0 || s != done || t != i % steps {
            return Err(Error::parse(path, line, format!("expected sample {done} step {}", i % steps.max(1))));
        }
        if y >= classes {
            return Err(Error::parse(path, line, format!("label {y} out of range")));
        }
        labels.push(y);
        for k in 0..channels {
            let v: f64 = field(path, line, &rec, 3 + k, "value")?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, "non-finite value"));
            }
            input.push(v);
        }
        if t + 1 == steps {
            finish(&mut input, &mut labels, line)?;
        }
    }
    if !labels.is_empty() {
        return Err(Error::parse(path, line, "truncated final sample"));
    }
    let ds = Dataset {
        kind,
        steps,
        channels,
        classes,
        samples,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_event_csv(ds: &Dataset, path: &Path) -> Result<()> {
    if ds.kind != TaskKind::SequenceClassification || !ds.is_binary() {
        return Err(Error::Config("event CSV holds binary classification datasets only".into()));
    }
    let mut w = csv_writer(path)?;
    let err = write_err(path);
    w.write_record(["sample", "label", "t", "channel"]).map_err(&err)?;
    for (i, s) in ds.samples.iter().enumerate() {
        let (id, y) = (i.to_string(), s.target.label_at(0).to_string());
        let mut any = false;
        for t in 0..ds.steps {
            for k in 0..ds.channels {
                if s.input[t * ds.channels + k] != 0.0 {
                    w.write_record([id.as_str(), &y, &t.to_string(), &k.to_string()]).map_err(&err)?;
                    any = true;
                }
            }
        }
        if !any {
            w.write_record([id.as_str(), &y, "", ""]).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_event_csv(path: &Path, steps: usize, channels: usize, classes: usize) -> Result<Dataset> {
    let mut rdr = open_csv(path)?;
    let mut samples: Vec<Sample> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(Error::parse(path, line, format!("expected 4 fields, found {}", rec.len())));
        }
        let s: usize = field(path, line, &rec, 0, "sample")?;
        let y: usize = field(path, line, &rec, 1, "label")?;
        if y >= classes {
            return Err(Error::parse(path, line, format!("label {y} out of range")));
        }
        if s == samples.len() {
            samples.push(Sample {
                input: vec![0.0; steps * channels],
                target: Target::Class(y),
            });
        } else if s + 1 != samples.len() {
            return Err(Error::parse(path, line, format!("sample {s} out of order")));
        }
        let cur = samples.last_mut().unwrap();
        if cur.target != Target::Class(y) {
            return Err(Error::parse(path, line, "label changes within a sample"));
        }
        if rec[2].trim().is_empty() && rec[3].trim().is_empty() {
            continue;
        }
        let t: usize = field(path, line, &rec, 2, "t")?;
        let k: usize = field(path, line, &rec, 3, "channel")?;
        if t >= steps || k >= channels {
            return Err(Error::parse(path, line, format!("event ({t},{k}) out of range")));
        }
        cur.input[t * channels + k] = 1.0;
    }
    Ok(Dataset {
        kind: TaskKind::SequenceClassification,
        steps,
        channels,
        classes,
        samples,
    })
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(path, 0, "truncated header"))
}

/// Pixel-by-pixel sequences from an IDX image/label pair. Each image becomes
/// a `rows * cols` step sequence with one channel scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let magic = be_u32(&img, 0, images)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::parse(images, 0, format!("bad image magic {magic:#010x}")));
    }
    let magic = be_u32(&lab, 0, labels)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::parse(labels, 0, format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(&img, 4, images)? as usize;
    let rows = be_u32(&img, 8, images)? as usize;
    let cols = be_u32(&img, 12, images)? as usize;
    let steps = rows * cols;
    if be_u32(&lab, 4, labels)? as usize != n {
        return Err(Error::parse(labels, 0, "image and label counts differ"));
    }
    if img.len() != 16 + n * steps || lab.len() != 8 + n {
        return Err(Error::parse(images, 0, "file length does not match header"));
    }
    let ys = &lab[8..];
    let classes = ys.iter().copied().max().map_or(0, |m| m as usize + 1);
    let samples = (0..n)
        .map(|i| Sample {
            input: img[16 + i * steps..16 + (i + 1) * steps]
                .iter()
                .map(|&p| p as f64 / 255.0)
                .collect(),
            target: Target::Class(ys[i] as usize),
        })
        .collect();
    Ok(Dataset {
        kind: TaskKind::SequenceClassification,
        steps,
        channels: 1,
        classes,
        samples,
    })
}

/// Write an IDX pair; pixels must already be bytes.
pub fn write_idx(images: &Path, labels: &Path, rows: usize, cols: usize, pixels: &[Vec<u8>], ys: &[u8]) -> Result<()> {
    if pixels.len() != ys.len() || pixels.iter().any(|p| p.len() != rows * cols) {
        return Err(Error::Config("IDX images must all be rows x cols and match the labels".into()));
    }
    let mut w = create(images)?;
    let mut bytes = Vec::with_capacity(16 + pixels.len() * rows * cols);
    for v in [IDX_IMAGES_MAGIC, pixels.len() as u32, rows as u32, cols as u32] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    pixels.iter().for_each(|p| bytes.extend_from_slice(p));
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(images, e))?;
    let mut w = create(labels)?;
    let mut bytes = Vec::with_capacity(8 + ys.len());
    bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(ys.len() as u32).to_be_bytes());
    bytes.extend_from_slice(ys);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(labels, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    DenseCsv,
    EventCsv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub name: String,
    pub kind: TaskKind,
    pub steps: usize,
    pub channels: usize,
    pub classes: usize,
    pub samples: usize,
    pub format: FileFormat,
    /// Data file, relative to the manifest.
    pub file: String,
}

/// Write `<dir>/<name>.csv` and its manifest `<dir>/<name>.json`.
pub fn save_dataset(ds: &Dataset, dir: &Path, name: &str, format: FileFormat) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = format!("{name}.csv");
    match format {
        FileFormat::DenseCsv => write_dense_csv(ds, &dir.join(&file))?,
        FileFormat::EventCsv => write_event_csv(ds, &dir.join(&file))?,
    }
    let m = Manifest {
        version: MANIFEST_VERSION.into(),
        name: name.into(),
        kind: ds.kind,
        steps: ds.steps,
        channels: ds.channels,
        classes: ds.classes,
        samples: ds.len(),
        format,
        file,
    };
    let path = dir.join(format!("{name}.json"));
    let text = serde_json::to_string_pretty(&m)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Config(format!("unsupported dataset version {:?}", m.version)));
    }
    let file = manifest.parent().unwrap_or(Path::new(".")).join(&m.file);
    let ds = match m.format {
        FileFormat::DenseCsv => load_dense_csv(&file, m.steps, m.channels, m.kind, m.classes)?,
        FileFormat::EventCsv => load_event_csv(&file, m.steps, m.channels, m.classes)?,
    };
    if ds.len() != m.samples {
        return Err(Error::shape("dataset samples", m.samples, ds.len()));
    }
    Ok(ds)
}
