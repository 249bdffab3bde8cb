use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalReport, Evaluation, Predictor, SampleEval};
use crate::data::{preprocess, Dataset, FeatureStats, SplitPlan, SynthParams};
use crate::error::{Error, Result};
use crate::experiment::{Experiment, Variant};
use crate::nn::{
    build_experiment, train, Checkpoint, Network, StopReason, TrainConfig, TrainHistory,
};
use crate::tensor::Tensor;
use crate::uncertainty::Thresholds;

/// Published training schedule of each pipeline.
pub fn experiment_defaults(experiment: Experiment) -> TrainConfig {
    let (max_epochs, batch_size, patience_train, patience_val) = match experiment {
        Experiment::Survival => (500, 1000, 30, 50),
        Experiment::Retina => (500, 100, 30, 50),
        Experiment::Los => (300, 1000, 30, 50),
        Experiment::Covid => (300, 10, 50, 100),
        Experiment::Ad => (4000, 500, 500, 800),
    };
    TrainConfig {
        learning_rate: 0.001,
        batch_size,
        max_epochs,
        patience_train,
        patience_val,
        seed: 0,
    }
}

/// Published evaluation scheme: 80/10/10 for survival, retina and LOS,
/// 20-fold for COVID and 10-fold for AD.
pub fn default_plan(experiment: Experiment, seed: u64) -> SplitPlan {
    match experiment {
        Experiment::Covid => SplitPlan::kfold(20, seed),
        Experiment::Ad => SplitPlan::kfold(10, seed),
        _ => SplitPlan::ratio(seed),
    }
}

/// A trained network with the preprocessing it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub experiment: Experiment,
    pub variant: Variant,
    pub stats: Option<FeatureStats>,
    pub checkpoint: Checkpoint,
}

impl ModelBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read model {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn predictor(&self) -> Result<NetworkPredictor> {
        Ok(NetworkPredictor {
            experiment: self.experiment,
            variant: self.variant,
            network: self.checkpoint.restore()?,
        })
    }

    /// Apply the bundled training statistics to raw data.
    pub fn prepare(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.experiment() != self.experiment {
            return Err(Error::Config(format!(
                "model is for experiment {}, data is for {}",
                self.experiment,
                dataset.experiment()
            )));
        }
        let mut out = dataset.clone();
        if let Some(stats) = &self.stats {
            out.features = stats.apply(&dataset.features)?;
            out.stats = Some(stats.clone());
        }
        Ok(out)
    }
}

pub struct NetworkPredictor {
    pub experiment: Experiment,
    pub variant: Variant,
    pub network: Network,
}

/// Samples per eval-mode forward.
const PREDICT_CHUNK: usize = 256;

impl Predictor for NetworkPredictor {
    fn experiment(&self) -> Experiment {
        self.experiment
    }

    fn variant(&self) -> Variant {
        self.variant
    }

    fn predict(&self, inputs: &Tensor) -> Result<Tensor> {
        self.network.predict(inputs, PREDICT_CHUNK)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub variant: Variant,
    pub train: TrainConfig,
    pub plan: SplitPlan,
    /// Run only the first `folds` splits of a k-fold plan.
    pub folds: Option<usize>,
    pub thresholds: Thresholds,
}

impl RunConfig {
    /// Published defaults for an experiment with every seed set to `seed`.
    pub fn defaults(experiment: Experiment, variant: Variant, seed: u64) -> Self {
        Self {
            experiment,
            variant,
            train: TrainConfig {
                seed,
                ..experiment_defaults(experiment)
            },
            plan: default_plan(experiment, seed),
            folds: None,
            thresholds: Thresholds::default(),
        }
    }
}

/// Where the training data came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: Option<String>,
    pub n: usize,
    pub generator: Option<SynthParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub stop_reason: StopReason,
    pub stop_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test: EvalReport,
}

/// Everything needed to reproduce a run. Wall-clock time is kept out so
/// that reruns with the same seeds produce byte-identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: Experiment,
    pub experiment_id: u8,
    pub variant: Variant,
    pub config: RunConfig,
    /// Settings that differ from the experiment defaults, by name.
    #[serde(default)]
    pub overrides: Vec<String>,
    pub dataset: DatasetRef,
    pub param_count: usize,
    pub folds: Vec<FoldResult>,
    /// Test samples of every fold pooled.
    pub summary: EvalReport,
}

pub struct FoldOutcome {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
    pub evaluation: Evaluation,
    pub test_rows: Vec<usize>,
    pub seconds: f64,
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub folds: Vec<FoldOutcome>,
}

/// Train and test one network per split of `config.plan`.
pub fn run_experiment(
    dataset: &Dataset,
    source: DatasetRef,
    config: &RunConfig,
) -> Result<RunOutcome> {
    if dataset.experiment() != config.experiment || dataset.variant() != config.variant {
        return Err(Error::Config(format!(
            "data is for {} {:?}, run is configured for {} {:?}",
            dataset.experiment(),
            dataset.variant(),
            config.experiment,
            config.variant
        )));
    }
    config.train.validate()?;
    let spec = build_experiment(config.experiment, config.variant);
    let mut splits = config.plan.apply(dataset.len())?;
    if let Some(limit) = config.folds {
        if limit == 0 {
            return Err(Error::Config("at least one fold must run".into()));
        }
        splits.truncate(limit);
    }
    let mut folds = Vec::with_capacity(splits.len());
    let mut results = Vec::with_capacity(splits.len());
    let mut param_count = 0;
    for (fold, split) in splits.into_iter().enumerate() {
        let started = std::time::Instant::now();
        let prepared = preprocess(dataset, &split.train)?;
        let samples = |rows: &[usize]| prepared.subset(rows).samples();
        let fold_seed = config.train.seed.wrapping_add(fold as u64);
        let network = Network::build(&spec, fold_seed)?;
        param_count = network.param_count();
        let train_config = TrainConfig {
            seed: fold_seed,
            ..config.train.clone()
        };
        let trained = train(
            network,
            &samples(&split.train)?,
            &samples(&split.val)?,
            &train_config,
        )?;
        let bundle = ModelBundle {
            experiment: config.experiment,
            variant: config.variant,
            stats: prepared.stats.clone(),
            checkpoint: Checkpoint::capture(&trained.network, Some(&trained.optimizer)),
        };
        let predictor = NetworkPredictor {
            experiment: config.experiment,
            variant: config.variant,
            network: trained.network,
        };
        let evaluation = evaluate(
            &predictor,
            &prepared.subset(&split.test),
            &config.thresholds,
        )?;
        let history = trained.history;
        results.push(FoldResult {
            fold,
            n_train: split.train.len(),
            n_val: split.val.len(),
            n_test: split.test.len(),
            stop_reason: history.stop_reason,
            stop_epoch: history.stop_epoch,
            best_epoch: history.best_epoch,
            best_val_loss: history
                .val_loss
                .get(history.best_epoch.saturating_sub(1))
                .copied()
                .unwrap_or(f64::NAN),
            test: evaluation.report.clone(),
        });
        folds.push(FoldOutcome {
            bundle,
            history,
            evaluation,
            test_rows: split.test,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    let pooled: Vec<SampleEval> = folds
        .iter()
        .flat_map(|f| f.evaluation.samples.iter().cloned())
        .collect();
    let manifest = RunManifest {
        experiment: config.experiment,
        experiment_id: config.experiment.id(),
        variant: config.variant,
        config: config.clone(),
        overrides: Vec::new(),
        dataset: source,
        param_count,
        folds: results,
        summary: EvalReport::from_samples(config.experiment, &pooled),
    };
    Ok(RunOutcome { manifest, folds })
}

/// `epoch,train_loss,val_loss` rows, epochs 1-based.
pub fn loss_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for (i, (t, v)) in history.train_loss.iter().zip(&history.val_loss).enumerate() {
        out.push_str(&format!("{},{t},{v}\n", i + 1));
    }
    out
}
