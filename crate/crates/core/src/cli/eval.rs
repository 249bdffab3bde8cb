use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codecs::{self, CovidStatus, Label};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::experiment::{Experiment, Variant};
use crate::tensor::Tensor;
use crate::uncertainty::{assess, Flag, Thresholds};

/// Anything that maps preprocessed inputs to output canvases.
pub trait Predictor {
    fn experiment(&self) -> Experiment;
    fn variant(&self) -> Variant;
    /// Canvases (`n × N × N × 3`) for a batch of preprocessed inputs.
    fn predict(&self, inputs: &Tensor) -> Result<Tensor>;
}

/// Decode and uncertainty outcome for one test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub truth: Label,
    /// `None` when the canvas could not be decoded.
    pub decoded: Option<Label>,
    pub ru_energy: f64,
    pub margin: f64,
    pub sharpness: Option<f64>,
    pub flags: Vec<Flag>,
}

/// Aggregate test metrics. Fields that do not apply to an experiment are
/// `None`. Undecodable outputs count as wrong with zero margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    /// Survival and retina grade; COVID status; AD over all time points.
    pub accuracy: Option<f64>,
    pub per_timepoint: Option<Vec<f64>>,
    /// Share of decoded AD trajectories that improve at some visit.
    pub monotone_violation_rate: Option<f64>,
    pub quality_accuracy: Option<f64>,
    pub mae_days: Option<f64>,
    /// Mean |severity error| over true COVID cases (decoded normal counts as 0).
    pub severity_mae: Option<f64>,
    pub mean_ru_energy: f64,
    pub mean_margin: f64,
    pub undecodable: usize,
    pub flag_counts: BTreeMap<Flag, usize>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn share(hits: impl Iterator<Item = bool>) -> f64 {
    mean(hits.map(|h| f64::from(u8::from(h))))
}

impl EvalReport {
    pub fn from_samples(experiment: Experiment, samples: &[SampleEval]) -> Self {
        let mut flag_counts = BTreeMap::new();
        for s in samples {
            for &f in &s.flags {
                *flag_counts.entry(f).or_insert(0) += 1;
            }
        }
        let mut report = EvalReport {
            n: samples.len(),
            accuracy: None,
            per_timepoint: None,
            monotone_violation_rate: None,
            quality_accuracy: None,
            mae_days: None,
            severity_mae: None,
            mean_ru_energy: mean(samples.iter().map(|s| s.ru_energy)),
            mean_margin: mean(samples.iter().map(|s| s.margin)),
            undecodable: samples.iter().filter(|s| s.decoded.is_none()).count(),
            flag_counts,
        };
        match experiment {
            Experiment::Survival => {
                report.accuracy = Some(share(samples.iter().map(|s| s.decoded == Some(s.truth))));
            }
            Experiment::Retina => {
                let grade = |l: &Label| match *l {
                    Label::Retina { grade, .. } => grade,
                    _ => unreachable!("retina labels only"),
                };
                let quality = |l: &Label| match *l {
                    Label::Retina { quality, .. } => quality,
                    _ => unreachable!("retina labels only"),
                };
                report.accuracy =
                    Some(share(samples.iter().map(|s| {
                        s.decoded.as_ref().map(grade) == Some(grade(&s.truth))
                    })));
                if samples.first().is_some_and(|s| quality(&s.truth).is_some()) {
                    report.quality_accuracy =
                        Some(share(samples.iter().map(|s| {
                            s.decoded.as_ref().and_then(quality) == quality(&s.truth)
                        })));
                }
            }
            Experiment::Los => {
                let days = |l: &Label| match *l {
                    Label::Los { days } => f64::from(days),
                    _ => unreachable!("LOS labels only"),
                };
                report.mae_days = Some(mean(samples.iter().map(|s| {
                    s.decoded.as_ref().map_or(f64::from(codecs::MAX_DAYS), |d| {
                        (days(d) - days(&s.truth)).abs()
                    })
                })));
            }
            Experiment::Covid => {
                let status = |l: &Label| match *l {
                    Label::Covid { status, .. } => status,
                    _ => unreachable!("COVID labels only"),
                };
                let severity = |l: &Label| match *l {
                    Label::Covid { severity, .. } => severity.unwrap_or(0.0),
                    _ => unreachable!("COVID labels only"),
                };
                report.accuracy =
                    Some(share(samples.iter().map(|s| {
                        s.decoded.as_ref().map(status) == Some(status(&s.truth))
                    })));
                let sick: Vec<&SampleEval> = samples
                    .iter()
                    .filter(|s| status(&s.truth) == CovidStatus::Covid)
                    .collect();
                if !sick.is_empty() {
                    report.severity_mae = Some(mean(sick.iter().map(|s| {
                        (s.decoded.as_ref().map_or(0.0, severity) - severity(&s.truth)).abs()
                    })));
                }
            }
            Experiment::Ad => {
                let states = |l: &Label| match *l {
                    Label::Ad { states } => states,
                    _ => unreachable!("AD labels only"),
                };
                let per: Vec<f64> = (0..4)
                    .map(|t| {
                        share(samples.iter().map(|s| {
                            s.decoded.as_ref().map(|d| states(d)[t]) == Some(states(&s.truth)[t])
                        }))
                    })
                    .collect();
                report.accuracy = Some(per.iter().sum::<f64>() / 4.0);
                report.per_timepoint = Some(per);
                let decoded: Vec<[codecs::AdState; 4]> = samples
                    .iter()
                    .filter_map(|s| s.decoded.as_ref().map(states))
                    .collect();
                report.monotone_violation_rate = Some(share(
                    decoded.iter().map(|st| st.windows(2).any(|w| w[1] < w[0])),
                ));
            }
        }
        report
    }
}

/// Decode and assess one output canvas against its ground truth.
pub fn assess_sample(
    experiment: Experiment,
    variant: Variant,
    canvas: &Tensor,
    truth: Label,
    thresholds: &Thresholds,
) -> Result<SampleEval> {
    let layout = codecs::layout(experiment, variant);
    match assess(experiment, variant, canvas, thresholds) {
        Ok((decoded, report)) => Ok(SampleEval {
            truth,
            decoded: Some(decoded.label),
            ru_energy: report.ru_energy,
            margin: report.margin,
            sharpness: report.sharpness,
            flags: report.flags.into_iter().collect(),
        }),
        Err(Error::Undecodable(_)) => Ok(SampleEval {
            truth,
            decoded: None,
            ru_energy: crate::uncertainty::ru_energy(canvas, &layout)?,
            margin: 0.0,
            sharpness: None,
            flags: vec![Flag::LowMargin],
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub samples: Vec<SampleEval>,
    pub outputs: Tensor,
}

/// Forward every sample of a preprocessed dataset, decode, and compare.
/// Experiment or variant mismatches fail before any prediction runs.
pub fn evaluate(
    predictor: &dyn Predictor,
    dataset: &Dataset,
    thresholds: &Thresholds,
) -> Result<Evaluation> {
    let (exp, variant) = (dataset.experiment(), dataset.variant());
    if predictor.experiment() != exp {
        return Err(Error::Config(format!(
            "model is for experiment {}, data is for {exp}",
            predictor.experiment()
        )));
    }
    if predictor.variant() != variant {
        return Err(Error::Config(format!(
            "model variant {:?} differs from data variant {variant:?}",
            predictor.variant()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let outputs = predictor.predict(&dataset.features)?;
    let side = exp.canvas_side();
    if outputs.shape() != [dataset.len(), side, side, 3] {
        return Err(Error::Config(format!(
            "predictor produced {:?}, expected {} canvases of {side}×{side}×3",
            outputs.shape(),
            dataset.len()
        )));
    }
    let samples = dataset
        .labels
        .iter()
        .enumerate()
        .map(|(i, &truth)| assess_sample(exp, variant, &outputs.sample(i), truth, thresholds))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        report: EvalReport::from_samples(exp, &samples),
        samples,
        outputs,
    })
}
