use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srnn::accounting::{ArchDescription, CostReport};
use srnn::codecs::{anytime_csv, argmax, per_step_probs};
use srnn::network::{forward_sequence, init_network, Network};
use srnn::surrogate::SurrogateKind;
use srnn::tasks::{load_dataset, Dataset, TaskKind};
use srnn::train::{
    evaluate, fit, grad_check, lr_at, Evaluation, GradCheckMode, GradCheckOptions, LossKind, MetricsRow, Target,
};

use crate::config::{load_run_config, load_task_config};
use crate::data::{build, save_splits};
use crate::Failure;

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn print_evaluation(split: &str, e: &Evaluation) {
    println!("{split}_accuracy {:.6}", e.accuracy);
    println!("{split}_loss {:.6}", e.loss);
    println!("mean_firing_rate {:.6}", e.mean_firing_rate);
    println!("sops_total {:.1}", e.sops_total);
    println!("sops_per_step {:.3}", e.sops_per_step);
}

/// Cost of a trained network next to the same architecture run as an ANN.
fn cost_reports(net: &Network, e: &Evaluation) -> Result<Vec<CostReport>, Failure> {
    let arch = ArchDescription::from_network(net);
    let mut snn = CostReport::for_snn(&arch, e.mean_firing_rate)?.with_sops(e.sops_total, e.sops_per_step);
    snn.name = "srnn".into();
    let mut ann = CostReport::for_ann(&arch)?;
    ann.name = "ann-equivalent".into();
    Ok(vec![snn, ann])
}

pub fn train(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let mut cfg = load_run_config(config)?;
    if let Some(s) = seed {
        cfg.reseed(s);
    }
    let dir = out.map_or_else(|| cfg.outputs.dir.clone(), Path::to_path_buf);
    let splits = build(&cfg.task)?;
    info!(
        "data: {} train, {} valid, {} test samples of {} steps x {} channels",
        splits.train.len(),
        splits.valid.len(),
        splits.test.len(),
        splits.train.steps,
        splits.train.channels
    );
    let valid = (!splits.valid.is_empty()).then_some(&splits.valid);
    let (net, mut log) = fit(&cfg.network, &splits.train, valid, &cfg.training)?;
    for r in &log.rows {
        info!("epoch {} {} loss {:.4} acc {:.4} fr {:.4}", r.epoch, r.split, r.loss, r.accuracy, r.mean_firing_rate);
    }

    let (name, held_out) = [("test", &splits.test), ("valid", &splits.valid), ("train", &splits.train)]
        .into_iter()
        .find(|(_, d)| !d.is_empty())
        .ok_or_else(|| Failure::Usage("task produced no samples".into()))?;
    let e = evaluate(&net, held_out)?;
    let epochs = cfg.training.epochs;
    log.rows.push(MetricsRow {
        epoch: epochs,
        split: name.into(),
        loss: e.loss,
        accuracy: e.accuracy,
        mean_firing_rate: e.mean_firing_rate,
        lr: lr_at(cfg.training.schedule, cfg.training.lr, epochs.saturating_sub(1)),
    });
    if !e.loss.is_finite() {
        return Err(Failure::Numeric(format!("non-finite {name} loss")));
    }

    create_dir(&dir)?;
    net.save(&dir.join("model.json"))?;
    log.write_csv(&dir.join("metrics.csv"))?;
    write(&dir.join("anytime.csv"), &anytime_csv(&e.anytime))?;
    let reports = cost_reports(&net, &e)?;
    write(&dir.join("cost.csv"), &CostReport::to_csv(&reports))?;
    write(&dir.join("cost.txt"), &CostReport::to_table(&reports))?;
    save_splits(&splits, &dir.join("data"))?;

    print_evaluation(name, &e);
    println!("outputs {}", dir.display());
    Ok(())
}

/// Per-step predictions of every sample: `sample,t,label,prediction,p0..`.
fn predictions_csv(net: &Network, ds: &Dataset) -> Result<String, Failure> {
    let c = net.classes();
    let mut s = String::from("sample,t,label,prediction");
    for k in 0..c {
        let _ = write!(s, ",p{k}");
    }
    s.push('\n');
    for (i, sample) in ds.samples.iter().enumerate() {
        let trace = forward_sequence(net, &sample.input, ds.steps)?;
        let out = trace.output();
        let probs = per_step_probs(net.spec.decode, &out.out, &out.u, out.size);
        for (t, p) in probs.iter().enumerate() {
            let _ = write!(s, "{i},{t},{},{}", sample.target.label_at(t), argmax(p));
            for v in p {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn eval(model: &Path, data: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let net = Network::load(model)?;
    let ds = load_dataset(data)?;
    let e = evaluate(&net, &ds)?;
    print_evaluation("eval", &e);
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => model.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    create_dir(&dir)?;
    write(&dir.join("eval_anytime.csv"), &anytime_csv(&e.anytime))?;
    if ds.kind == TaskKind::Streaming {
        let path = dir.join("predictions.csv");
        write(&path, &predictions_csv(&net, &ds)?)?;
        println!("predictions {}", path.display());
    }
    Ok(())
}

pub struct EnergyArgs {
    pub arch: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub fr: Option<f64>,
    pub csv: Option<PathBuf>,
}

/// One architecture or a JSON array of them.
fn load_archs(path: &Path) -> Result<Vec<ArchDescription>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| Failure::Usage(format!("{}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    let archs = if value.is_array() {
        serde_json::from_value(value).map_err(bad)?
    } else {
        vec![serde_json::from_value(value).map_err(bad)?]
    };
    Ok(archs)
}

pub fn energy(args: &EnergyArgs) -> Result<(), Failure> {
    let reports = match (&args.arch, &args.model) {
        (Some(path), None) => {
            let mut reports = Vec::new();
            for arch in load_archs(path)? {
                arch.validate()?;
                let spiking = arch.layers.iter().any(|l| l.kind.is_spiking_model());
                let report = match (spiking, args.fr) {
                    (false, _) => CostReport::for_ann(&arch)?,
                    (true, Some(fr)) => CostReport::for_snn(&arch, fr)?,
                    (true, None) => {
                        return Err(Failure::Usage(format!("architecture {:?} is spiking; pass --fr", arch.name)))
                    }
                };
                reports.push(report);
            }
            reports
        }
        (None, Some(path)) => {
            let net = Network::load(path)?;
            let mut arch = ArchDescription::from_network(&net);
            arch.name = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            match (args.fr, &args.data) {
                (Some(fr), _) => vec![CostReport::for_snn(&arch, fr)?],
                (None, Some(data)) => {
                    let e = evaluate(&net, &load_dataset(data)?)?;
                    vec![CostReport::for_snn(&arch, e.mean_firing_rate)?.with_sops(e.sops_total, e.sops_per_step)]
                }
                (None, None) => return Err(Failure::Usage("a model needs --data or --fr".into())),
            }
        }
        _ => return Err(Failure::Usage("pass exactly one of --arch or --model".into())),
    };
    print!("{}", CostReport::to_table(&reports));
    if let Some(path) = &args.csv {
        write(path, &CostReport::to_csv(&reports))?;
    }
    Ok(())
}

/// Steps of the probe sequence used by `gradcheck`.
const PROBE_STEPS: usize = 16;
/// Hidden layers are shrunk to at most this many units.
const PROBE_WIDTH: usize = 8;

pub struct GradcheckArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub corrupt_surrogate: bool,
    pub zero_weights: bool,
}

/// Both gradient checks on a small net derived from the config. Returns
/// whether both passed.
pub fn gradcheck(args: &GradcheckArgs) -> Result<bool, Failure> {
    let mut cfg = load_run_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.reseed(s);
    }
    let mut spec = cfg.network.clone();
    let depth = spec.layers.len();
    for l in &mut spec.layers[..depth - 1] {
        l.size = l.size.min(PROBE_WIDTH);
    }
    let mut net = init_network(&spec, spec.seed)?;
    if args.zero_weights {
        for l in net.all_layers_mut() {
            l.w_in.as_mut_slice().fill(0.0);
            if let Some(w) = &mut l.w_rec {
                w.as_mut_slice().fill(0.0);
            }
            l.bias.fill(0.0);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x: Vec<f64> = (0..PROBE_STEPS * net.input_size())
        .map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 })
        .collect();
    let c = net.classes();
    let target = match cfg.training.loss {
        LossKind::Ce => Target::Class(rng.random_range(0..c)),
        LossKind::NllStreaming => Target::Stream((0..PROBE_STEPS).map(|_| rng.random_range(0..c)).collect()),
    };

    let surrogate = cfg.training.surrogate;
    let spikes: usize = forward_sequence(&net, &x, PROBE_STEPS)?
        .all_layers()
        .zip(net.all_layers())
        .filter(|(_, l)| l.kind.is_spiking())
        .map(|(t, _)| t.spike_count())
        .sum();
    debug!("probe net: {} parameters, {spikes} spikes", net.parameter_count());
    if spikes == 0 && net.all_layers().any(|l| l.kind.is_spiking()) {
        warn!("the probe network is silent; the surrogate check only covers non-spiking paths");
    }

    let relu = grad_check(
        &net,
        &x,
        PROBE_STEPS,
        &target,
        &GradCheckOptions {
            surrogate,
            ..GradCheckOptions::new(GradCheckMode::ReluExact)
        },
    )?;
    let oracle = args.corrupt_surrogate.then(|| {
        SurrogateKind::defaults()
            .into_iter()
            .find(|k| k.name() != surrogate.name())
            .expect("more than one surrogate kind")
    });
    let consistency = grad_check(
        &net,
        &x,
        PROBE_STEPS,
        &target,
        &GradCheckOptions {
            surrogate,
            oracle_surrogate: oracle,
            ..GradCheckOptions::new(GradCheckMode::SurrogateConsistency)
        },
    )?;
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    println!(
        "relu_exact max_rel_err {:.3e} compared {} threshold 1e-4 {}",
        relu.max_error,
        relu.compared,
        verdict(relu.passes())
    );
    println!(
        "surrogate_consistency max_abs_diff {:.3e} compared {} threshold 1e-8 {}",
        consistency.max_error,
        consistency.compared,
        verdict(consistency.passes())
    );
    Ok(relu.passes() && consistency.passes())
}

pub fn gen(config: &Path, out: &Path) -> Result<(), Failure> {
    let task = load_task_config(config)?;
    let splits = build(&task)?;
    for path in save_splits(&splits, out)? {
        println!("{}", path.display());
    }
    Ok(())
}
