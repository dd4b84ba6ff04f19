use std::path::{Path, PathBuf};

use srnn::tasks::{
    fit_zscore, gen_pattern_classification, gen_streaming_waveform, level_crossing_dataset, load_dataset, load_idx,
    save_dataset, split, Dataset, FileFormat, TaskKind,
};

use crate::config::{Encoding, TaskConfig, TaskSource};
use crate::Failure;

/// Train, validation and test splits of a task, encoded as configured.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn named(&self) -> [(&'static str, &Dataset); 3] {
        [("train", &self.train), ("valid", &self.valid), ("test", &self.test)]
    }
}

fn source(task: &TaskConfig) -> Result<Dataset, Failure> {
    let ds = match &task.source {
        TaskSource::Pattern(p) => gen_pattern_classification(p, task.seed)?,
        TaskSource::Streaming(p) => gen_streaming_waveform(p, task.seed)?,
        TaskSource::Manifest(path) => load_dataset(path)?,
        TaskSource::Idx(i) => load_idx(&i.images, &i.labels)?,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn build(task: &TaskConfig) -> Result<Splits, Failure> {
    let ds = source(task)?;
    let [a, b, c] = task.split;
    let (train, valid, test) = split(&ds, (a, b, c), task.seed)?;
    let (train, valid, test) = match task.encoding {
        None => (train, valid, test),
        Some(Encoding::LevelCrossing { l_plus, l_minus }) => {
            let z = fit_zscore(&train);
            log::debug!("z-score from train split: mean {} std {}", z.mean, z.std);
            let enc = |d: &Dataset| level_crossing_dataset(d, &z, l_plus, l_minus);
            (enc(&train)?, enc(&valid)?, enc(&test)?)
        }
    };
    Ok(Splits { train, valid, test })
}

/// Event CSV for binary classification data, dense CSV otherwise.
pub fn format_for(ds: &Dataset) -> FileFormat {
    if ds.kind == TaskKind::SequenceClassification && ds.is_binary() {
        FileFormat::EventCsv
    } else {
        FileFormat::DenseCsv
    }
}

/// Write every split to `dir` and return the manifest paths.
pub fn save_splits(splits: &Splits, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    splits
        .named()
        .iter()
        .map(|(name, ds)| Ok(save_dataset(ds, dir, name, format_for(ds))?))
        .collect()
}
