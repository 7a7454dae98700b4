use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use polynet_core::net::{Checkpoint, LrSchedule, Network, TrainConfig};
use polynet_core::polyfilter::gradcheck::{check_conv, GradCheckReport, DEFAULT_TOLERANCE};
use polynet_core::polyfilter::{ConvLayerSpec, ConvVariant};
use polynet_core::tasks::{
    descriptors, ensemble_evaluate, evaluate, generate_digit_graphs, generate_toy_dataset, ingest_mesh_dataset,
    predict_logits, retrieve, train, write_predictions_csv, ClassificationReport, Dataset, EpochMetrics,
    IngestOptions, MeshManifest, Sample, Split, ToyClass,
};
use polynet_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{
    Command, EnsembleArgs, EvalArgs, GenerateDigitsArgs, GenerateToyArgs, GradcheckArgs, ProcessArgs, RetrieveArgs,
    SchemeArg, TrainArgs, ValArg, OUTPUT_SCHEMA_VERSION,
};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io(PathBuf, io::Error),
    /// A check the command exists to perform did not pass.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_environmental() => 1,
            CliError::Io(..) => 1,
            CliError::Core(_) | CliError::Failed(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
            CliError::Failed(msg) => f.write_str(msg),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command, json: bool) -> Result<()> {
    let out = Output { json };
    match command {
        Command::GenerateToy(a) => generate_toy(a, out),
        Command::GenerateDigits(a) => generate_digits(a, out),
        Command::Process(a) => process(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Ensemble(a) => ensemble(a, out),
        Command::Retrieve(a) => retrieve_cmd(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
    }
}

#[derive(Clone, Copy)]
struct Output {
    json: bool,
}

impl Output {
    /// Prints `doc` tagged with the schema version in JSON mode, `text`
    /// otherwise.
    fn emit(self, command: &str, mut doc: Value, text: impl FnOnce() -> String) {
        if self.json {
            let obj = doc.as_object_mut().expect("report is an object");
            obj.insert("schema_version".into(), json!(OUTPUT_SCHEMA_VERSION));
            obj.insert("command".into(), json!(command));
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        } else {
            print!("{}", text());
        }
    }
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn refuse_existing_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::OutputExists(path.to_path_buf()).into());
    }
    Ok(())
}

fn generate_toy(a: GenerateToyArgs, out: Output) -> Result<()> {
    let classes = a
        .classes
        .iter()
        .map(|c| c.parse::<ToyClass>())
        .collect::<polynet_core::Result<Vec<_>>>()?;
    polynet_core::tasks::prepare_output(&a.out, a.force)?;
    generate_toy_dataset(&a.out, &classes, a.train, a.test, a.seed)?;
    let names: Vec<_> = classes.iter().map(|c| c.name()).collect();
    out.emit(
        "generate-toy",
        json!({"out": a.out, "classes": names, "train_per_class": a.train, "test_per_class": a.test, "seed": a.seed}),
        || {
            format!(
                "wrote {} meshes per class for {} to {}\n",
                a.train + a.test,
                names.join(", "),
                a.out.display()
            )
        },
    );
    Ok(())
}

fn generate_digits(a: GenerateDigitsArgs, out: Output) -> Result<()> {
    let manifest = generate_digit_graphs(&a.out, a.train, a.test, a.nodes, a.seed, a.force)?;
    out.emit(
        "generate-digits",
        json!({"out": a.out, "train": manifest.train.len(), "test": manifest.test.len(), "nodes": a.nodes, "seed": a.seed}),
        || {
            format!(
                "wrote {} train and {} test graphs with {} nodes to {}\n",
                manifest.train.len(),
                manifest.test.len(),
                a.nodes,
                a.out.display()
            )
        },
    );
    Ok(())
}

fn manifest_summary(m: &MeshManifest) -> Value {
    let mean_faces: Vec<f64> = (0..=m.levels)
        .map(|k| {
            let faces: Vec<usize> = m.shapes.iter().filter_map(|s| s.levels.get(k)).map(|l| l.faces).collect();
            if faces.is_empty() {
                0.0
            } else {
                faces.iter().sum::<usize>() as f64 / faces.len() as f64
            }
        })
        .collect();
    json!({
        "scheme": m.scheme,
        "levels": m.levels,
        "coarse_target": m.coarse_target,
        "classes": m.classes,
        "shapes": m.shapes.len(),
        "failed": m.failed,
        "below_coarse_target": m.shapes.iter().filter(|s| !s.reached_coarse_target).count(),
        "mean_faces_per_level": mean_faces,
    })
}

fn process(a: ProcessArgs, out: Output) -> Result<()> {
    let schemes = a.scheme.schemes();
    let mut runs = Vec::new();
    for scheme in schemes {
        let dir = match a.scheme {
            SchemeArg::Both => a.output.join(scheme.as_str()),
            _ => a.output.clone(),
        };
        let opts = IngestOptions {
            scheme,
            levels: a.levels,
            coarse_target: a.coarse,
        };
        let manifest = ingest_mesh_dataset(&a.input, &dir, &opts, a.force)?;
        runs.push((dir, manifest));
    }
    let doc = json!({
        "runs": runs.iter().map(|(dir, m)| {
            let mut s = manifest_summary(m);
            s["out"] = json!(dir);
            s
        }).collect::<Vec<_>>(),
    });
    out.emit("process", doc, || {
        let mut s = String::new();
        for (dir, m) in &runs {
            s += &format!(
                "{}: {} shapes, {} failed ({} scheme, {} levels)\n",
                dir.display(),
                m.shapes.len(),
                m.failed.len(),
                m.scheme,
                m.levels
            );
            for f in &m.failed {
                s += &format!("  failed {}: {}\n", f.source, f.error);
            }
        }
        s
    });
    Ok(())
}

fn load_train_config(a: &TrainArgs, ds: &Dataset) -> Result<TrainConfig> {
    let base = if ds.scheme.is_some() {
        TrainConfig::mesh_default()
    } else {
        TrainConfig::graph_default()
    };
    let cfg = match &a.config {
        Some(path) => TrainConfig::load(path, &base)?,
        None => base,
    };
    let mut flags = serde_json::Map::new();
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            flags.insert(k.into(), v);
        }
    };
    set("epochs", a.epochs.map(|v| json!(v)));
    set("seed", a.seed.map(|v| json!(v)));
    set("lr", a.lr.map(|v| json!(v)));
    set("batch_size", a.batch_size.map(|v| json!(v)));
    set("schedule", a.schedule.map(|v| to_value(&LrSchedule::from(v))));
    set("variant", a.variant.map(|v| to_value(&ConvVariant::from(v))));
    set("degree", a.degree.map(|v| to_value(&v)));
    set("conv_widths", a.conv_widths.as_ref().map(|v| json!(v)));
    set("fc_widths", a.fc_widths.as_ref().map(|v| json!(v)));
    Ok(cfg.overlay(Value::Object(flags))?)
}

fn train_cmd(a: TrainArgs, out: Output) -> Result<()> {
    refuse_existing_file(&a.out, a.force)?;
    let ds = Dataset::load(&a.data)?;
    let cfg = load_train_config(&a, &ds)?;
    let val = (a.val == ValArg::Test).then_some(ds.test.as_slice());
    let mut metrics_file = match &a.metrics {
        Some(p) => Some((p, BufWriter::new(File::create(p).map_err(|e| CliError::Io(p.clone(), e))?))),
        None => None,
    };
    let mut write_error = None;
    let outcome = train(&cfg, &ds.train, val, ds.classes.len(), |m: &EpochMetrics| {
        if let Some((path, w)) = &mut metrics_file {
            let line = serde_json::to_string(m).expect("serializable");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                write_error.get_or_insert(CliError::Io(path.to_path_buf(), e));
            }
        }
        if !out.json {
            println!(
                "epoch {:>3}  loss {:.4}  train acc {:.4}{}",
                m.epoch,
                m.train_loss,
                m.train_accuracy,
                m.val_accuracy.map_or(String::new(), |v| format!("  val acc {v:.4}"))
            );
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let tag = |mut c: Checkpoint| {
        c.class_names = ds.classes.clone();
        c.scheme = ds.scheme;
        c
    };
    let best = tag(outcome.best_checkpoint);
    best.save(&a.out)?;
    if let Some(path) = &a.final_out {
        tag(outcome.final_checkpoint).save(path)?;
    }
    let last = outcome.log.last();
    let best_metrics = outcome.log.iter().find(|m| m.epoch == best.epoch);
    let doc = json!({
        "config": cfg,
        "learning_rate": cfg.learning_rate(),
        "train_samples": ds.train.len(),
        "val_samples": val.map_or(0, <[Sample]>::len),
        "checkpoint": a.out,
        "best_epoch": best.epoch,
        "best_val_accuracy": best_metrics.and_then(|m| m.val_accuracy),
        "final": last,
    });
    out.emit("train", doc, || {
        let mut s = format!("saved epoch {} checkpoint to {}\n", best.epoch, a.out.display());
        if let Some(m) = last {
            s += &format!(
                "final epoch: train acc {:.4}{}\n",
                m.train_accuracy,
                m.val_accuracy.map_or(String::new(), |v| format!(", val acc {v:.4}"))
            );
        }
        if let Some(v) = best_metrics.and_then(|m| m.val_accuracy) {
            s += &format!("best epoch:  val acc {v:.4}\n");
        }
        s
    });
    Ok(())
}

fn load_model(path: &Path, ds: &Dataset) -> Result<Network> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.config.in_channels != ds.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint expects {} input channels, dataset has {}",
            ckpt.config.in_channels,
            ds.in_channels()
        ))
        .into());
    }
    if ckpt.config.classes != ds.classes.len() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint predicts {} classes, dataset has {}",
            ckpt.config.classes,
            ds.classes.len()
        ))
        .into());
    }
    if ckpt.scheme.is_some() && ds.scheme.is_some() && ckpt.scheme != ds.scheme {
        log::warn!("checkpoint was trained on a different subdivision scheme");
    }
    Ok(ckpt.network()?)
}

fn report_text(classes: &[String], r: &ClassificationReport) -> String {
    let mut s = format!("{:<16}{:>8}{:>9}{:>10}\n", "class", "count", "correct", "accuracy");
    for c in &r.per_class {
        s += &format!(
            "{:<16}{:>8}{:>9}{:>10}\n",
            classes.get(c.class).map_or("?", String::as_str),
            c.count,
            c.correct,
            c.accuracy.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
    }
    s += &format!("accuracy {:.4} ({} / {})\n", r.accuracy, r.correct, r.total);
    s += &format!("mean class accuracy {:.4}\n", r.mean_class_accuracy);
    s
}

fn eval(a: EvalArgs, out: Output) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let net = load_model(&a.checkpoint, &ds)?;
    let split = Split::from(a.split);
    let (preds, report) = evaluate(&net, ds.split(split), ds.classes.len())?;
    if let Some(path) = &a.predictions {
        write_predictions_csv(path, &preds)?;
    }
    out.emit(
        "eval",
        json!({"split": split.as_str(), "classes": ds.classes, "report": report}),
        || report_text(&ds.classes, &report),
    );
    Ok(())
}

fn ensemble(a: EnsembleArgs, out: Output) -> Result<()> {
    let ptq_ds = Dataset::load(&a.ptq_data)?;
    let sqrt3_ds = Dataset::load(&a.sqrt3_data)?;
    let ptq = load_model(&a.ptq_checkpoint, &ptq_ds)?;
    let sqrt3 = load_model(&a.sqrt3_checkpoint, &sqrt3_ds)?;
    let split = Split::from(a.split);
    let (ps, ss) = (ptq_ds.split(split), sqrt3_ds.split(split));
    if ps.len() != ss.len() || ps.iter().zip(ss).any(|(p, s)| p.id != s.id) {
        return Err(Error::Dataset("the two datasets do not hold the same shapes".into()).into());
    }
    let (_, report) = ensemble_evaluate(&ptq, &sqrt3, ps, ss, a.head.into())?;
    let (_, ptq_report) = evaluate(&ptq, ps, ptq_ds.classes.len())?;
    let (_, sqrt3_report) = evaluate(&sqrt3, ss, sqrt3_ds.classes.len())?;
    out.emit(
        "ensemble",
        json!({
            "split": split.as_str(),
            "head": polynet_core::tasks::EnsembleHead::from(a.head),
            "ensemble": report,
            "ptq": {"accuracy": ptq_report.accuracy},
            "sqrt3": {"accuracy": sqrt3_report.accuracy},
        }),
        || {
            format!(
                "{}ptq alone {:.4}, sqrt3 alone {:.4}\n",
                report_text(&sqrt3_ds.classes, &report),
                ptq_report.accuracy,
                sqrt3_report.accuracy
            )
        },
    );
    Ok(())
}

fn retrieve_cmd(a: RetrieveArgs, out: Output) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let net = load_model(&a.checkpoint, &ds)?;
    let (qs, gs) = (ds.split(a.queries.into()), ds.split(a.gallery.into()));
    let labels = |s: &[Sample]| s.iter().map(|x| x.label).collect::<Vec<_>>();
    let result = retrieve(
        &descriptors(&predict_logits(&net, qs)?),
        &labels(qs),
        &descriptors(&predict_logits(&net, gs)?),
        &labels(gs),
    )?;
    let per_query: Vec<Value> = qs
        .iter()
        .zip(&result.queries)
        .map(|(q, r)| {
            json!({
                "sample_id": q.id,
                "label": q.label,
                "average_precision": r.average_precision,
                "top": r.ranking.iter().take(a.top).map(|x| json!({
                    "sample_id": gs[x.index].id,
                    "label": gs[x.index].label,
                    "distance": x.distance,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    out.emit(
        "retrieve",
        json!({
            "queries": Split::from(a.queries).as_str(),
            "gallery": Split::from(a.gallery).as_str(),
            "mean_average_precision": result.mean_average_precision,
            "per_query": per_query,
        }),
        || {
            format!(
                "{} queries against {} gallery shapes: mAP {:.4}\n",
                qs.len(),
                gs.len(),
                result.mean_average_precision
            )
        },
    );
    Ok(())
}

/// Vertices in each random conv instance.
const GRADCHECK_VERTICES: usize = 12;

fn gradcheck(a: GradcheckArgs, out: Output) -> Result<()> {
    let variant = ConvVariant::from(a.variant);
    let spec = ConvLayerSpec::new(variant, 3, 2, a.degree);
    let mut conv: Option<GradCheckReport> = None;
    for i in 0..a.instances {
        let r = check_conv(&spec, GRADCHECK_VERTICES, a.seed.wrapping_add(i))?;
        conv = Some(match conv {
            Some(c) => c.merge(r),
            None => r,
        });
    }
    let network = if a.network {
        Some(polynet_core::net::gradcheck::toy_network_check(variant, a.degree, a.seed)?)
    } else {
        None
    };
    let worst = conv
        .iter()
        .chain(&network)
        .map(|r| r.max_relative_error)
        .fold(0.0, f64::max);
    let passed = worst < DEFAULT_TOLERANCE;
    out.emit(
        "gradcheck",
        json!({
            "variant": variant,
            "degree": a.degree,
            "seed": a.seed,
            "tolerance": DEFAULT_TOLERANCE,
            "conv": conv,
            "network": network,
            "max_relative_error": worst,
            "passed": passed,
        }),
        || {
            let mut s = String::new();
            if let Some(c) = &conv {
                s += &format!(
                    "conv    {:>6} gradients  max rel err {:.3e}\n",
                    c.checked, c.max_relative_error
                );
            }
            if let Some(n) = &network {
                s += &format!(
                    "network {:>6} gradients  max rel err {:.3e}\n",
                    n.checked, n.max_relative_error
                );
            }
            s += &format!("max rel err {worst:.3e} ({})\n", if passed { "ok" } else { "FAILED" });
            s
        },
    );
    if passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "max relative error {worst:.3e} exceeds {DEFAULT_TOLERANCE:e}"
        )))
    }
}
