//! The `glyphnet` command-line front end.

pub mod eval;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::codecs::{self, render_png, render_png_grid, Label};
use crate::data::{gen_synth, load_dir, write_dir, SplitPlan, SynthParams};
use crate::error::{Error, Result};
use crate::experiment::{Experiment, RetinaType, Scale, Variant};
use crate::nn::gradcheck;
use crate::nn::LayerKind;
use crate::tensor::Tensor;
use crate::uncertainty::{assess, Thresholds};
use eval::evaluate;
use run::{loss_csv, run_experiment, DatasetRef, ModelBundle, RunConfig};

pub const OUT_ENV: &str = "GLYPHNET_OUT";

/// Process exit codes.
pub mod exit {
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const GRADCHECK: i32 = 5;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Label(_) | Error::Compose { .. } => exit::CONFIG,
        Error::Data(_)
        | Error::Undecodable(_)
        | Error::Csv(_)
        | Error::Png(_)
        | Error::Shape { .. } => exit::DATA,
        Error::Diverged { .. } => exit::DIVERGED,
        Error::Io(_) | Error::Json(_) => exit::OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "glyphnet",
    version,
    about = "Train and inspect networks that answer with coded images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset directory.
    Gen(GenArgs),
    /// Train on a dataset directory and write models, manifest and loss curves.
    Train(TrainArgs),
    /// Decode a trained model's outputs on a dataset and report metrics.
    Eval(EvalArgs),
    /// Decode canvas PNGs, one JSON line per image.
    Decode(DecodeArgs),
    /// Draw the target canvas of a label.
    Render(RenderArgs),
    /// Finite-difference check of every layer type's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, Args)]
pub struct VariantArgs {
    /// Retina canvas design: I, II or III.
    #[arg(long, default_value = "I")]
    pub retina_type: RetinaType,
    /// desk (64-pixel images, narrow trunks) or paper.
    #[arg(long, default_value = "desk")]
    pub scale: Scale,
}

impl VariantArgs {
    pub fn variant(self) -> Variant {
        Variant {
            retina: self.retina_type,
            scale: self.scale,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Experiment name or id (survival, retina, los, covid, ad).
    #[arg(long)]
    pub kind: Experiment,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Output directory.
    #[arg(long, env = OUT_ENV)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `gen` (or laid out the same way).
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file with any of the training settings below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience_train: Option<usize>,
    #[arg(long)]
    pub patience_val: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use k-fold cross validation with this many folds.
    #[arg(long)]
    pub kfold: Option<usize>,
    /// Use an 80/10/10 split instead of the experiment's default plan.
    #[arg(long, conflicts_with = "kfold")]
    pub ratio: bool,
    /// Train only the first N folds.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, env = OUT_ENV)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also write a PNG grid of target/output pairs.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Samples shown in the grid.
    #[arg(long, default_value_t = 8)]
    pub grid_samples: usize,
    /// Write the report JSON here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub exp: Experiment,
    #[command(flatten)]
    pub variant: VariantArgs,
    /// A PNG file or a directory of PNGs.
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub exp: Experiment,
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Label text, e.g. `1`, `3,high`, `17`, `covid:0.4`, `CN,MCI,MCI,AD`.
    #[arg(long)]
    pub label: String,
    /// Pixel upscaling factor.
    #[arg(long, default_value_t = 8)]
    pub zoom: usize,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Consecutive seeds per layer type.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// Negate the weight gradient of one layer type (self-test of the checker).
    #[arg(long)]
    pub inject_fault: Option<LayerKind>,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Decode(a) => cmd_decode(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<i32> {
    let params = SynthParams {
        experiment: a.kind,
        variant: a.variant.variant(),
        n: a.n,
        seed: a.seed,
        noise: a.noise,
    };
    let dataset = gen_synth(params)?;
    let manifest = write_dir(&dataset, &a.out, Some(params))?;
    println!(
        "wrote {} {} samples to {}",
        manifest.n,
        a.kind,
        a.out.display()
    );
    Ok(0)
}

/// Training settings read from `--config`. Every field is optional; flags
/// win over the file and the file wins over the experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    pub variant: Option<Variant>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience_train: Option<usize>,
    pub patience_val: Option<usize>,
    pub seed: Option<u64>,
    pub kfold: Option<usize>,
    pub folds: Option<usize>,
    pub thresholds: Option<Thresholds>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Lay the flags over the file.
    fn merged(mut self, a: &TrainArgs) -> Self {
        macro_rules! flag {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    self.$field = Some(v);
                }
            };
        }
        flag!(learning_rate, a.lr);
        flag!(batch_size, a.batch_size);
        flag!(max_epochs, a.max_epochs);
        flag!(patience_train, a.patience_train);
        flag!(patience_val, a.patience_val);
        flag!(seed, a.seed);
        flag!(kfold, a.kfold);
        flag!(folds, a.folds);
        self
    }

    /// Resolve against the defaults of `experiment`, returning the config
    /// and the names of the settings that were overridden.
    pub fn resolve(
        &self,
        experiment: Experiment,
        variant: Variant,
        ratio: bool,
    ) -> Result<(RunConfig, Vec<String>)> {
        if let Some(e) = self.experiment.filter(|&e| e != experiment) {
            return Err(Error::Config(format!(
                "config is for experiment {e}, data is for {experiment}"
            )));
        }
        if let Some(v) = self.variant.filter(|&v| v != variant) {
            return Err(Error::Config(format!(
                "config variant {v:?} differs from data variant {variant:?}"
            )));
        }
        let seed = self.seed.unwrap_or(0);
        let mut config = RunConfig::defaults(experiment, variant, seed);
        let mut overrides = Vec::new();
        let mut note = |name: &str, changed: bool| {
            if changed {
                overrides.push(name.to_string());
            }
        };
        let t = &mut config.train;
        if let Some(v) = self.learning_rate {
            note("learning_rate", v != t.learning_rate);
            t.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            note("batch_size", v != t.batch_size);
            t.batch_size = v;
        }
        if let Some(v) = self.max_epochs {
            note("max_epochs", v != t.max_epochs);
            t.max_epochs = v;
        }
        if let Some(v) = self.patience_train {
            note("patience_train", v != t.patience_train);
            t.patience_train = v;
        }
        if let Some(v) = self.patience_val {
            note("patience_val", v != t.patience_val);
            t.patience_val = v;
        }
        note("seed", seed != 0);
        let default_plan = config.plan.clone();
        if ratio {
            config.plan = SplitPlan::ratio(seed);
        } else if let Some(k) = self.kfold {
            config.plan = SplitPlan::kfold(k, seed);
        }
        note("plan", config.plan != default_plan);
        if let Some(limit) = self.folds {
            note("folds", true);
            config.folds = Some(limit);
        }
        if let Some(th) = self.thresholds {
            note("thresholds", th != config.thresholds);
            config.thresholds = th;
        }
        config.train.validate()?;
        Ok((config, overrides))
    }
}

#[derive(Debug, Serialize)]
struct Timing {
    total_seconds: f64,
    fold_seconds: Vec<f64>,
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let started = Instant::now();
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let (dataset, manifest) = load_dir(&a.data)?;
    let (config, overrides) =
        file.merged(a)
            .resolve(dataset.experiment(), dataset.variant(), a.ratio)?;
    let source = DatasetRef {
        path: Some(a.data.display().to_string()),
        n: manifest.n,
        generator: manifest.generator,
    };
    let mut outcome = run_experiment(&dataset, source, &config)?;
    outcome.manifest.overrides = overrides;
    std::fs::create_dir_all(&a.out)?;
    let single = outcome.folds.len() == 1 && matches!(config.plan, SplitPlan::Ratio { .. });
    for (i, fold) in outcome.folds.iter().enumerate() {
        let (model, loss) = if single {
            ("model.json".to_string(), "loss.csv".to_string())
        } else {
            (format!("model_fold{i}.json"), format!("loss_fold{i}.csv"))
        };
        fold.bundle.save(&a.out.join(model))?;
        std::fs::write(a.out.join(loss), loss_csv(&fold.history))?;
    }
    write_json(&a.out.join("run_manifest.json"), &outcome.manifest)?;
    write_json(
        &a.out.join("timing.json"),
        &Timing {
            total_seconds: started.elapsed().as_secs_f64(),
            fold_seconds: outcome.folds.iter().map(|f| f.seconds).collect(),
        },
    )?;
    println!(
        "{}",
        serde_json::to_string_pretty(&outcome.manifest.summary)?
    );
    Ok(0)
}

fn cmd_eval(a: &EvalArgs) -> Result<i32> {
    let bundle = ModelBundle::load(&a.model)?;
    let (raw, _) = load_dir(&a.data)?;
    let dataset = bundle.prepare(&raw)?;
    let predictor = bundle.predictor()?;
    let evaluation = evaluate(&predictor, &dataset, &Thresholds::default())?;
    let text = serde_json::to_string_pretty(&evaluation.report)?;
    println!("{text}");
    if let Some(path) = &a.report {
        std::fs::write(path, text + "\n")?;
    }
    if let Some(path) = &a.grid {
        let (exp, variant) = (bundle.experiment, bundle.variant);
        let rows = dataset
            .labels
            .iter()
            .take(a.grid_samples.max(1))
            .enumerate()
            .map(|(i, label)| {
                Ok(vec![
                    codecs::encode(exp, variant, label)?,
                    evaluation.outputs.sample(i),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        std::fs::write(path, render_png_grid(&rows, 6, 1)?)?;
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct DecodeLine<'a> {
    file: String,
    label: String,
    decode: &'a codecs::DecodeResult,
    uncertainty: &'a crate::uncertainty::UncertaintyReport,
}

fn png_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
    files.sort();
    Ok(files)
}

/// Read a canvas PNG, undoing an integer upscale if the image is a
/// multiple of the canvas side.
pub fn read_canvas(path: &Path, experiment: Experiment) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let img = codecs::read_png(&bytes)?;
    let side = experiment.canvas_side();
    let (h, w) = (img.shape()[0], img.shape()[1]);
    if h != w || h % side != 0 {
        return Err(Error::Data(format!(
            "{}: {h}×{w} image is not a {side}×{side} {experiment} canvas",
            path.display()
        )));
    }
    let zoom = h / side;
    Ok(Tensor::from_fn(&[side, side, 3], |i| {
        let (y, x, c) = (i / (side * 3), (i / 3) % side, i % 3);
        img.at(&[y * zoom, x * zoom, c])
    }))
}

fn cmd_decode(a: &DecodeArgs) -> Result<i32> {
    let variant = a.variant.variant();
    let thresholds = Thresholds::default();
    for file in png_files(&a.path)? {
        let canvas = read_canvas(&file, a.exp)?;
        let (decode, report) = assess(a.exp, variant, &canvas, &thresholds)?;
        let line = DecodeLine {
            file: file.display().to_string(),
            label: decode.label.to_string(),
            decode: &decode,
            uncertainty: &report,
        };
        println!("{}", serde_json::to_string(&line)?);
    }
    Ok(0)
}

fn cmd_render(a: &RenderArgs) -> Result<i32> {
    let variant = a.variant.variant();
    let label = Label::parse(a.exp, variant, &a.label)?;
    let img = codecs::encode(a.exp, variant, &label)?;
    std::fs::write(&a.output, render_png(&img, a.zoom)?)?;
    Ok(0)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    let rows = gradcheck::run(a.seed, a.seeds, a.inject_fault)?;
    println!(
        "{:<12} {:>14} {:>8}  result",
        "layer", "max_rel_error", "checked"
    );
    for r in &rows {
        println!(
            "{:<12} {:>14.3e} {:>8}  {}",
            r.layer.to_string(),
            r.max_rel_error,
            r.checked,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(if rows.iter().all(|r| r.passed) {
        0
    } else {
        exit::GRADCHECK
    })
}
