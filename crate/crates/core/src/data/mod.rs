//! Datasets: CSV ingestion, imputation and scaling, seeded splits, and
//! synthetic generators with each pipeline's input schema.

mod io;
mod split;
mod synth;

pub use io::{load_csv, load_dir, write_csv, write_dir, DatasetManifest, MANIFEST_FILE};
pub use split::{fold_roles, kfold, split_ratio, RatioSplit, SplitPlan};
pub use synth::{gen_synth, SynthParams, AD_THRESHOLDS, AD_TIMES, COVID_LUNG_AREA, IMAGE_SIDE};

use serde::{Deserialize, Serialize};

use crate::codecs::{encode, Label};
use crate::error::{Error, Result};
use crate::experiment::{Experiment, Variant};
use crate::nn::experiments::AD_BRANCHES;
use crate::nn::Samples;
use crate::tensor::Tensor;

/// Column layout of a tabular dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub experiment: Experiment,
    pub variant: Variant,
    pub features: Vec<String>,
    pub labels: Vec<String>,
}

impl Schema {
    /// The canonical schema of a tabular experiment: survival `f0..f182`,
    /// LOS `f0..f51`, AD `mri0..6, pet0..2, csf0..2, cog0..19, rf0..2` with
    /// one label column per time point. Image experiments have no features.
    pub fn for_experiment(experiment: Experiment, variant: Variant) -> Self {
        fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
            (0..n).map(move |i| format!("{prefix}{i}"))
        }
        let (features, labels): (Vec<String>, Vec<String>) = match experiment {
            Experiment::Survival => (numbered("f", 183).collect(), vec!["fatal".into()]),
            Experiment::Los => (numbered("f", 52).collect(), vec!["days".into()]),
            Experiment::Ad => (
                AD_BRANCHES
                    .iter()
                    .flat_map(|&(name, w)| numbered(name, w))
                    .collect(),
                numbered("t", 4).collect(),
            ),
            Experiment::Retina | Experiment::Covid => (Vec::new(), vec!["label".into()]),
        };
        Self {
            experiment,
            variant,
            features,
            labels,
        }
    }

    pub fn header(&self) -> Vec<String> {
        self.features.iter().chain(&self.labels).cloned().collect()
    }

    pub fn is_tabular(&self) -> bool {
        !self.features.is_empty()
    }

    /// Label cells joined into the text form `Label::parse` accepts.
    pub(crate) fn parse_label(&self, cells: &[&str]) -> Result<Label> {
        Label::parse(self.experiment, self.variant, &cells.join(","))
    }

    pub(crate) fn label_cells(&self, label: &Label) -> Vec<String> {
        let text = label.to_string();
        if self.labels.len() == 1 {
            vec![text]
        } else {
            text.split(',').map(str::to_string).collect()
        }
    }
}

/// Per-column statistics fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
}

impl FeatureStats {
    /// Fit on `rows` of an `n × f` matrix, ignoring missing (NaN) cells.
    /// Columns with no observed training value get median 0.
    pub fn fit(features: &Tensor, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data(
                "cannot fit statistics on zero training rows".into(),
            ));
        }
        let f = features.shape()[1];
        let mut stats = Self {
            min: Vec::with_capacity(f),
            max: Vec::with_capacity(f),
            mean: Vec::with_capacity(f),
            median: Vec::with_capacity(f),
        };
        for c in 0..f {
            let mut seen: Vec<f64> = rows
                .iter()
                .map(|&r| features.at(&[r, c]))
                .filter(|v| !v.is_nan())
                .collect();
            seen.sort_by(f64::total_cmp);
            let median = match seen.len() {
                0 => 0.0,
                k if k % 2 == 1 => seen[k / 2],
                k => 0.5 * (seen[k / 2 - 1] + seen[k / 2]),
            };
            let missing = rows.len() - seen.len();
            let (lo, hi) = seen
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            // Imputed cells take the median, which lies inside [lo, hi]
            // unless nothing was observed.
            let (lo, hi) = if missing > 0 {
                (lo.min(median), hi.max(median))
            } else {
                (lo, hi)
            };
            let mean = (seen.iter().sum::<f64>() + missing as f64 * median) / rows.len() as f64;
            stats.min.push(lo);
            stats.max.push(hi);
            stats.mean.push(mean);
            stats.median.push(median);
        }
        Ok(stats)
    }

    /// Impute with the median, then min-max scale; constant columns map to 0.5.
    pub fn apply(&self, features: &Tensor) -> Result<Tensor> {
        let f = self.median.len();
        if features.rank() != 2 || features.shape()[1] != f {
            return Err(Error::Data(format!(
                "statistics cover {f} columns, features are {:?}",
                features.shape()
            )));
        }
        Ok(Tensor::from_fn(features.shape(), |i| {
            let c = i % f;
            let v = features[i];
            let v = if v.is_nan() { self.median[c] } else { v };
            let span = self.max[c] - self.min[c];
            if span > 0.0 {
                (v - self.min[c]) / span
            } else {
                0.5
            }
        }))
    }
}

/// Features and labels for one experiment. Tabular features are `n × f`
/// with NaN marking missing cells; image features are `n × h × w × 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub features: Tensor,
    pub labels: Vec<Label>,
    pub stats: Option<FeatureStats>,
}

impl Dataset {
    pub fn new(schema: Schema, features: Tensor, labels: Vec<Label>) -> Result<Self> {
        if features.shape()[0] != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.shape()[0],
                labels.len()
            )));
        }
        if schema.is_tabular() && features.shape() != [labels.len(), schema.features.len()] {
            return Err(Error::Data(format!(
                "features {:?} do not match {} schema columns",
                features.shape(),
                schema.features.len()
            )));
        }
        for label in &labels {
            label.validate(schema.experiment, schema.variant)?;
        }
        Ok(Self {
            schema,
            features,
            labels,
            stats: None,
        })
    }

    pub fn experiment(&self) -> Experiment {
        self.schema.experiment
    }

    pub fn variant(&self) -> Variant {
        self.schema.variant
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of cells awaiting imputation.
    pub fn missing_count(&self) -> usize {
        self.features.data().iter().filter(|v| v.is_nan()).count()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            features: self.features.gather(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            stats: self.stats.clone(),
        }
    }

    /// Network inputs paired with encoded target canvases.
    pub fn samples(&self) -> Result<Samples> {
        if self.missing_count() > 0 {
            return Err(Error::Data(
                "dataset has missing cells; preprocess it first".into(),
            ));
        }
        let (exp, variant) = (self.experiment(), self.variant());
        let targets: Vec<Tensor> = self
            .labels
            .iter()
            .map(|l| encode(exp, variant, l))
            .collect::<Result<_>>()?;
        Samples::new(self.features.clone(), Tensor::stack(&targets)?)
    }
}

/// Median imputation then min-max scaling, fitted on `train` rows only.
/// Image datasets are already in `[0, 1]` and pass through unchanged.
pub fn preprocess(dataset: &Dataset, train: &[usize]) -> Result<Dataset> {
    if train.is_empty() {
        return Err(Error::Data(
            "preprocess needs at least one training row".into(),
        ));
    }
    if let Some(&bad) = train.iter().find(|&&r| r >= dataset.len()) {
        return Err(Error::Data(format!("training row {bad} out of range")));
    }
    if !dataset.schema.is_tabular() {
        return Ok(dataset.clone());
    }
    let stats = FeatureStats::fit(&dataset.features, train)?;
    Ok(Dataset {
        schema: dataset.schema.clone(),
        features: stats.apply(&dataset.features)?,
        labels: dataset.labels.clone(),
        stats: Some(stats),
    })
}
