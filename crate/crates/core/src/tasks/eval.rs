//! Classification metrics, prediction dumps and the two-scheme ensemble.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use crate::error::{Error, Result};
use crate::net::{NetInput, Network};
use crate::FeatureMatrix;

/// Samples per forward pass during evaluation.
const EVAL_CHUNK: usize = 64;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub label: usize,
    pub pred: usize,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub count: usize,
    pub correct: usize,
    /// `None` when the class has no samples.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Mean over classes that have samples.
    pub mean_class_accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
}

pub fn classification_report(predictions: &[Prediction], classes: usize) -> ClassificationReport {
    let mut per_class: Vec<ClassAccuracy> = (0..classes)
        .map(|class| ClassAccuracy {
            class,
            count: 0,
            correct: 0,
            accuracy: None,
        })
        .collect();
    for p in predictions {
        let c = &mut per_class[p.label];
        c.count += 1;
        c.correct += usize::from(p.pred == p.label);
    }
    let mut sum = 0.0;
    let mut present = 0;
    for c in &mut per_class {
        if c.count > 0 {
            let a = c.correct as f64 / c.count as f64;
            c.accuracy = Some(a);
            sum += a;
            present += 1;
        }
    }
    let correct = per_class.iter().map(|c| c.correct).sum();
    let total = predictions.len();
    ClassificationReport {
        total,
        correct,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        mean_class_accuracy: if present == 0 { 0.0 } else { sum / present as f64 },
        per_class,
    }
}

fn predictions_from_logits(samples: &[Sample], logits: &FeatureMatrix) -> Vec<Prediction> {
    samples
        .iter()
        .zip(logits.rows())
        .map(|(s, row)| {
            let logits = row.to_vec();
            Prediction {
                sample_id: s.id.clone(),
                label: s.label,
                pred: argmax(&logits),
                logits,
            }
        })
        .collect()
}

/// Eval-mode logits for every sample.
pub fn predict_logits(net: &Network, samples: &[Sample]) -> Result<FeatureMatrix> {
    let mut rows = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let inputs: Vec<&NetInput> = chunk.iter().map(|s| &s.input).collect();
        rows.push(net.predict(&inputs)?);
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    Ok(ndarray::concatenate(ndarray::Axis(0), &views)
        .unwrap_or_else(|_| FeatureMatrix::zeros((0, net.config().classes))))
}

pub fn evaluate(net: &Network, samples: &[Sample], classes: usize) -> Result<(Vec<Prediction>, ClassificationReport)> {
    if net.config().classes != classes {
        return Err(Error::ShapeMismatch(format!(
            "network predicts {} classes, dataset has {classes}",
            net.config().classes
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.label >= classes) {
        return Err(Error::InvalidLabel { label: s.label, classes });
    }
    let preds = predictions_from_logits(samples, &predict_logits(net, samples)?);
    let report = classification_report(&preds, classes);
    Ok((preds, report))
}

/// Writes `sample_id,label,pred,logit_0..logit_{K-1}`.
pub fn write_predictions_csv(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let classes = predictions.first().map_or(0, |p| p.logits.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["sample_id".to_string(), "label".into(), "pred".into()];
    header.extend((0..classes).map(|k| format!("logit_{k}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for p in predictions {
        let mut rec = vec![p.sample_id.clone(), p.label.to_string(), p.pred.to_string()];
        rec.extend(p.logits.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<Prediction>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).ok_or_else(|| Error::parse(path, line, "missing field"));
        let int = |k: usize| -> Result<usize> {
            field(k)?.parse().map_err(|e| Error::parse(path, line, format!("{e}")))
        };
        let logits = (3..rec.len())
            .map(|k| field(k)?.parse::<f64>().map_err(|e| Error::parse(path, line, format!("{e}"))))
            .collect::<Result<_>>()?;
        out.push(Prediction {
            sample_id: field(0)?.to_string(),
            label: int(1)?,
            pred: int(2)?,
            logits,
        });
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked io kind"),
        }
    } else {
        Error::parse(path, line, e.to_string())
    }
}

/// Which model's FC head scores the averaged ensemble features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleHead {
    #[default]
    Sqrt3,
    Ptq,
}

/// Averages the globally pooled trunk features of both models per shape and
/// scores the average with the chosen head.
pub fn ensemble_logits(
    ptq: &Network,
    sqrt3: &Network,
    ptq_inputs: &[&NetInput],
    sqrt3_inputs: &[&NetInput],
    head: EnsembleHead,
) -> Result<FeatureMatrix> {
    let (a, b) = (ptq.config(), sqrt3.config());
    if a.conv_widths.last() != b.conv_widths.last() || a.classes != b.classes {
        return Err(Error::ShapeMismatch(
            "ensemble members need the same trunk output width and class count".into(),
        ));
    }
    if ptq_inputs.len() != sqrt3_inputs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} PTQ inputs but {} sqrt3 inputs",
            ptq_inputs.len(),
            sqrt3_inputs.len()
        )));
    }
    let mut features = ptq.embed(ptq_inputs)?;
    features += &sqrt3.embed(sqrt3_inputs)?;
    features *= 0.5;
    match head {
        EnsembleHead::Sqrt3 => sqrt3.head_eval(&features),
        EnsembleHead::Ptq => ptq.head_eval(&features),
    }
}

/// Ensemble predictions over two renderings of the same shapes, matched by
/// position.
pub fn ensemble_evaluate(
    ptq: &Network,
    sqrt3: &Network,
    ptq_samples: &[Sample],
    sqrt3_samples: &[Sample],
    head: EnsembleHead,
) -> Result<(Vec<Prediction>, ClassificationReport)> {
    if ptq_samples.iter().zip(sqrt3_samples).any(|(a, b)| a.label != b.label) {
        return Err(Error::Dataset("ensemble datasets disagree on labels".into()));
    }
    let mut rows = Vec::new();
    for (pa, sa) in ptq_samples.chunks(EVAL_CHUNK).zip(sqrt3_samples.chunks(EVAL_CHUNK)) {
        let ia: Vec<&NetInput> = pa.iter().map(|s| &s.input).collect();
        let ib: Vec<&NetInput> = sa.iter().map(|s| &s.input).collect();
        rows.push(ensemble_logits(ptq, sqrt3, &ia, &ib, head)?);
    }
    if ptq_samples.len() != sqrt3_samples.len() {
        return Err(Error::ShapeMismatch("ensemble datasets differ in size".into()));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    let logits = ndarray::concatenate(ndarray::Axis(0), &views)
        .unwrap_or_else(|_| FeatureMatrix::zeros((0, sqrt3.config().classes)));
    let preds = predictions_from_logits(sqrt3_samples, &logits);
    let report = classification_report(&preds, sqrt3.config().classes);
    Ok((preds, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use crate::net::{NetConfig, TanhPlacement};
    use crate::polyfilter::{ConvVariant, Degree};
    use crate::polyshape::{build_polyshape, Scheme};

    fn pred(label: usize, logits: Vec<f64>) -> Prediction {
        Prediction {
            sample_id: format!("s{label}"),
            label,
            pred: argmax(&logits),
            logits,
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn perfect_and_uniform_stubs() {
        let labels = [0, 1, 2, 1, 1];
        let perfect: Vec<_> = labels
            .iter()
            .map(|&l| pred(l, (0..3).map(|k| if k == l { 5.0 } else { 0.0 }).collect()))
            .collect();
        assert_eq!(classification_report(&perfect, 3).accuracy, 1.0);
        let uniform: Vec<_> = labels.iter().map(|&l| pred(l, vec![0.0; 3])).collect();
        let r = classification_report(&uniform, 3);
        assert_eq!(r.accuracy, 1.0 / 5.0);
        assert!((r.mean_class_accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[0].accuracy, Some(1.0));
    }

    #[test]
    fn csv_recount_matches() {
        let preds = vec![pred(0, vec![0.1, -3.5e-7]), pred(1, vec![1.0 / 3.0, 2.0])];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_predictions_csv(&path, &preds).unwrap();
        let back = read_predictions_csv(&path).unwrap();
        assert_eq!(back, preds);
        assert_eq!(classification_report(&back, 2), classification_report(&preds, 2));
    }

    fn net(seed: u64) -> Network {
        let cfg = NetConfig {
            in_channels: 6,
            conv_widths: vec![4, 4],
            fc_widths: vec![4],
            classes: 2,
            variant: ConvVariant::Squeezed,
            degree: Degree::TWO,
            tanh: TanhPlacement::BeforePool,
        };
        Network::new(cfg, seed).unwrap()
    }

    #[test]
    fn ensemble_of_identical_members_is_the_member() {
        let shape = build_polyshape(&primitives::icosahedron(), Scheme::Sqrt3, 1, 12).unwrap();
        let input = NetInput::from_shape(&shape);
        let m = net(3);
        let single = m.predict(&[&input]).unwrap();
        let ens = ensemble_logits(&m, &m, &[&input], &[&input], EnsembleHead::Sqrt3).unwrap();
        assert_eq!(single, ens);
    }

    #[test]
    fn ensemble_averages_features() {
        let shape = build_polyshape(&primitives::icosahedron(), Scheme::Sqrt3, 1, 12).unwrap();
        let input = NetInput::from_shape(&shape);
        let (a, b) = (net(1), net(2));
        let fa = a.embed(&[&input]).unwrap();
        let fb = b.embed(&[&input]).unwrap();
        let expected = b.head_eval(&((&fa + &fb) * 0.5)).unwrap();
        let got = ensemble_logits(&a, &b, &[&input], &[&input], EnsembleHead::Sqrt3).unwrap();
        assert_eq!(expected, got);
        let mut cfg = b.config().clone();
        cfg.conv_widths = vec![4, 5];
        let c = Network::new(cfg, 0).unwrap();
        assert!(ensemble_logits(&a, &c, &[&input], &[&input], EnsembleHead::Sqrt3).is_err());
    }
}
