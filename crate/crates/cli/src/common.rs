//! Loading and validation shared across subcommands, plus the mapping from
//! library errors onto the exit-code contract.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::{Parser, ValueEnum};

use hbce_core::explain::ExplainError;
use hbce_core::loss::{IndicatorMode, LossConfig, LossValue};
use hbce_core::metrics::{self, MetricsError, RocResult};
use hbce_core::nn::{load_checkpoint, Model, ModelConfig, NnError, TrainConfig};
use hbce_core::penalty::{estimate_data_driven, fixed_penalties, LabelMatrix, PenaltyTable};
use hbce_core::pgm::load_pgm;
use hbce_core::synthdata::{AugmentConfig, Dataset, Split, SynthError};
use hbce_core::taxonomy::{Taxonomy, ValidationIssue};
use hbce_core::tensor::Tensor;

use crate::CliError;

/// Images per forward chunk during bulk prediction.
pub const PREDICT_CHUNK: usize = 64;

/// Reads, parses, and validates a taxonomy file. Validation warnings go to
/// stderr; validation errors (cycles) reject the file.
pub fn load_taxonomy(path: &Path) -> Result<Taxonomy, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("reading {}: {e}", path.display())))?;
    let taxonomy = Taxonomy::parse(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let report = taxonomy.validate();
    if !report.ok() {
        let mut msg = format!("{} failed validation:", path.display());
        for issue in &report.errors {
            let _ = write!(msg, " {}", describe_issue(issue, &taxonomy));
        }
        return Err(CliError::Config(msg));
    }
    for issue in &report.warnings {
        // the derived Uncertain label is standalone by design; only
        // unexpected isolation is worth a warning
        if matches!(issue, ValidationIssue::Isolated { label }
            if Some(*label) == taxonomy.uncertain_index())
        {
            continue;
        }
        eprintln!("warning: {}", describe_issue(issue, &taxonomy));
    }
    Ok(taxonomy)
}

fn describe_issue(issue: &ValidationIssue, taxonomy: &Taxonomy) -> String {
    let name = |i: &usize| taxonomy.name(*i).to_string();
    match issue {
        ValidationIssue::Cycle { members } => format!(
            "cycle through {}",
            members.iter().map(name).collect::<Vec<_>>().join(" > ")
        ),
        ValidationIssue::MultiParent { child, parents } => format!(
            "label {:?} has multiple parents: {}",
            taxonomy.name(*child),
            parents.iter().map(name).collect::<Vec<_>>().join(", ")
        ),
        ValidationIssue::Isolated { label } => {
            format!("label {:?} has no hierarchy edges", taxonomy.name(*label))
        }
    }
}

pub fn load_dataset(dir: &Path, taxonomy: &Taxonomy) -> Result<Dataset, CliError> {
    hbce_core::synthdata::load_dataset(dir, taxonomy).map_err(synth_error)
}

/// Invalid-parameter shapes are configuration mistakes; everything else
/// (missing or corrupt files) is a runtime failure.
pub fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::InvalidProbability { .. }
        | SynthError::InvalidSignal(_)
        | SynthError::InvalidNoise(_)
        | SynthError::ZeroSamples
        | SynthError::ImageTooSmall { .. }
        | SynthError::NoPatchLabels
        | SynthError::CyclicTaxonomy
        | SynthError::InvalidAugment(_) => CliError::config(e),
        _ => CliError::runtime(e),
    }
}

pub fn nn_error(e: NnError) -> CliError {
    match e {
        NnError::InvalidConfig(_) | NnError::EmptySplit(_) | NnError::ZeroPasses => {
            CliError::config(e)
        }
        _ => CliError::runtime(e),
    }
}

pub fn explain_error(e: ExplainError) -> CliError {
    match e {
        ExplainError::TargetOutOfRange { .. }
        | ExplainError::InvalidThreshold(_)
        | ExplainError::TooFewBins(_) => CliError::config(e),
        _ => CliError::runtime(e),
    }
}

/// Loads a checkpoint and checks it against the taxonomy it will serve.
pub fn load_model(path: &Path, taxonomy: &Taxonomy) -> Result<Model, CliError> {
    let model = load_checkpoint(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    if model.config.output_labels != taxonomy.len() {
        return Err(CliError::config(format!(
            "checkpoint {} was trained for {} labels but the taxonomy declares {}",
            path.display(),
            model.config.output_labels,
            taxonomy.len()
        )));
    }
    Ok(model)
}

/// Loads a PGM into a `[h, w]` unit-range tensor and checks the model will
/// accept it.
pub fn load_image(path: &Path, model: &Model) -> Result<Tensor, CliError> {
    let image = load_pgm(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?
        .to_unit();
    let expected = [model.config.input_h, model.config.input_w];
    if image.shape() != expected {
        return Err(CliError::config(format!(
            "{} is {}x{} but the checkpoint expects {}x{}",
            path.display(),
            image.shape()[0],
            image.shape()[1],
            expected[0],
            expected[1]
        )));
    }
    Ok(image)
}

/// Penalty source selection, shared by `train`, `eval`, and `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyKind {
    /// Plain BCE: zero penalties and a forced lambda of 0.
    None,
    /// Constant `beta` on every edge.
    Fixed,
    /// Laplace-smoothed `P(child=1 | parent=0)` from the train split.
    DataDriven,
}

impl PenaltyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyKind::None => "none",
            PenaltyKind::Fixed => "fixed",
            PenaltyKind::DataDriven => "data-driven",
        }
    }
}

/// Builds the penalty table for a run. Data-driven penalties are always
/// estimated from the train split, whichever split is being consumed, so
/// evaluation reproduces the loss the trainer saw. Returns the table plus
/// the effective lambda (`--penalty none` forces 0).
pub fn build_penalties(
    kind: PenaltyKind,
    beta: f64,
    epsilon: f64,
    lambda: f64,
    dataset: &Dataset,
    taxonomy: &Taxonomy,
) -> Result<(PenaltyTable, f64), CliError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(CliError::config(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    let table = match kind {
        PenaltyKind::None => fixed_penalties(taxonomy, 0.0),
        PenaltyKind::Fixed => {
            if !(beta.is_finite() && beta >= 0.0) {
                return Err(CliError::config(format!(
                    "beta must be finite and non-negative, got {beta}"
                )));
            }
            fixed_penalties(taxonomy, beta)
        }
        PenaltyKind::DataDriven => {
            check_epsilon(epsilon)?;
            let labels = split_matrix(dataset, Split::Train)?;
            estimate_data_driven(taxonomy, &labels, epsilon)
        }
    }
    .map_err(CliError::config)?;
    let lambda = match kind {
        PenaltyKind::None => 0.0,
        _ => lambda,
    };
    Ok((table, lambda))
}

pub fn check_epsilon(epsilon: f64) -> Result<(), CliError> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "epsilon must be > 0, got {epsilon}"
        )))
    }
}

/// Label rows of one split as a matrix (for penalty estimation).
pub fn split_matrix(dataset: &Dataset, split: Split) -> Result<LabelMatrix, CliError> {
    let rows: Vec<Vec<u8>> = dataset
        .indices(split)
        .into_iter()
        .map(|i| dataset.label_row(i).to_vec())
        .collect();
    LabelMatrix::from_rows(rows, dataset.taxonomy().len()).map_err(CliError::runtime)
}

pub fn loss_config(
    lambda: f64,
    soft: bool,
    tau: f64,
    threshold: f64,
) -> Result<LossConfig, CliError> {
    let mode = if soft {
        IndicatorMode::Soft { tau }
    } else {
        IndicatorMode::Hard
    };
    let cfg = LossConfig {
        lambda,
        mode,
        threshold,
        ..LossConfig::default()
    };
    cfg.check().map_err(CliError::config)?;
    Ok(cfg)
}

/// Everything the `eval` report and a `sweep` row need.
pub struct EvalNumbers {
    /// Per label in taxonomy order; `None` marks a degenerate label.
    pub per_label: Vec<Option<RocResult>>,
    pub mean: Option<f64>,
    pub weighted: Option<f64>,
    pub violation_rate: f64,
    pub loss: LossValue,
}

/// Runs a model over one split and aggregates metrics and loss.
pub fn evaluate(
    model: &Model,
    dataset: &Dataset,
    split: Split,
    table: &PenaltyTable,
    loss_cfg: &LossConfig,
) -> Result<EvalNumbers, CliError> {
    let indices = dataset.indices(split);
    if indices.is_empty() {
        return Err(CliError::config(format!(
            "dataset has no {} samples",
            split.as_str()
        )));
    }
    let taxonomy = dataset.taxonomy();
    let labels = taxonomy.len();
    let images: Vec<&Tensor> = indices.iter().map(|&i| dataset.image(i)).collect();
    let preds = model.predict(&images, PREDICT_CHUNK).map_err(nn_error)?;

    let mut targets = Tensor::zeros(&[indices.len(), labels]);
    for (row, &i) in indices.iter().enumerate() {
        for (col, &v) in dataset.label_row(i).iter().enumerate() {
            targets.set2(row, col, v as f64);
        }
    }

    let mut per_label = Vec::with_capacity(labels);
    for col in 0..labels {
        let scores: Vec<f64> = (0..indices.len()).map(|row| preds.at2(row, col)).collect();
        let truth: Vec<u8> = indices.iter().map(|&i| dataset.label_row(i)[col]).collect();
        match metrics::auroc(&scores, &truth) {
            Ok(r) => per_label.push(Some(r)),
            Err(MetricsError::DegenerateLabels { .. }) => per_label.push(None),
            Err(e) => return Err(CliError::runtime(e)),
        }
    }
    let defined: Vec<RocResult> = per_label.iter().flatten().copied().collect();
    let mean = metrics::mean_auroc(&defined).ok();
    let weighted = metrics::weighted_auroc(&defined).ok();
    let violation_rate = metrics::violation_rate(&preds, taxonomy.edges(), loss_cfg.threshold)
        .map_err(CliError::runtime)?;
    let loss = hbce_core::loss::hbce(&targets, &preds, table, loss_cfg).map_err(CliError::runtime)?;
    Ok(EvalNumbers {
        per_label,
        mean,
        weighted,
        violation_rate,
        loss,
    })
}

/// Formats a possibly-undefined metric with six decimals.
pub fn metric_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.6}"),
        None => "undefined".to_string(),
    }
}

/// Indicator shape for the penalty term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Exact strict-inequality indicator (zero gradient a.e.)
    Hard,
    /// Logistic surrogate of width `--tau`
    Soft,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hard => "hard",
            Mode::Soft => "soft",
        }
    }
}

/// Dataset split selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Loss and penalty flags shared by `train` and `eval`.
#[derive(Debug, Clone, Parser)]
pub struct LossOpts {
    /// Penalty source for the loss
    #[arg(long, value_enum, default_value_t = PenaltyKind::None)]
    pub penalty: PenaltyKind,
    /// Constant per-edge penalty for --penalty fixed
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Scale factor on the penalty term (forced to 0 by --penalty none)
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Laplace smoothing for --penalty data-driven; must be > 0
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Indicator shape around the threshold
    #[arg(long, value_enum, default_value_t = Mode::Hard)]
    pub mode: Mode,
    /// Ramp width of the soft indicator
    #[arg(long, default_value_t = 0.05)]
    pub tau: f64,
    /// Decision threshold for triggering and violation counting
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

impl LossOpts {
    pub fn build(
        &self,
        dataset: &Dataset,
        taxonomy: &Taxonomy,
    ) -> Result<(PenaltyTable, LossConfig), CliError> {
        let (table, lambda) = build_penalties(
            self.penalty,
            self.beta,
            self.epsilon,
            self.lambda,
            dataset,
            taxonomy,
        )?;
        let cfg = loss_config(lambda, self.mode == Mode::Soft, self.tau, self.threshold)?;
        Ok((table, cfg))
    }

    pub fn record(&self, manifest: &mut crate::manifest::Manifest) {
        manifest.push("penalty", self.penalty.as_str());
        manifest.push("beta", self.beta);
        manifest.push("lambda", self.lambda);
        manifest.push("epsilon", self.epsilon);
        manifest.push("mode", self.mode.as_str());
        manifest.push("tau", self.tau);
        manifest.push("threshold", self.threshold);
    }
}

/// Optimizer, schedule, and model-shape flags shared by `train` and `sweep`.
/// Defaults are the reference configuration: Adam at 1e-4, batch 16,
/// plateau factor 0.9, early stopping after 3 flat epochs.
#[derive(Debug, Clone, Parser)]
pub struct TrainOpts {
    /// Epoch budget (early stopping may end the run sooner)
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Initial Adam learning rate
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Multiplier applied to the rate when validation loss plateaus
    #[arg(long, default_value_t = 0.9)]
    pub plateau_factor: f64,
    /// Flat epochs tolerated before each rate decay
    #[arg(long, default_value_t = 1)]
    pub plateau_patience: usize,
    /// Flat epochs before training stops
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Train on raw images (no flips, brightness, or contrast jitter)
    #[arg(long)]
    pub no_augment: bool,
    /// Conv filter count
    #[arg(long, default_value_t = 16)]
    pub filters: usize,
    /// Conv kernel size (odd)
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    /// Hidden dense width
    #[arg(long, default_value_t = 64)]
    pub dense_units: usize,
    /// Dropout rate on the hidden layer
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
}

impl TrainOpts {
    pub fn model_config(&self, dataset: &Dataset, taxonomy: &Taxonomy) -> ModelConfig {
        let shape = dataset.image(0).shape();
        ModelConfig {
            input_h: shape[0],
            input_w: shape[1],
            conv_filters: self.filters,
            conv_kernel: self.kernel,
            dense_units: self.dense_units,
            output_labels: taxonomy.len(),
            dropout_rate: self.dropout,
        }
    }

    pub fn train_config(&self, loss: LossConfig) -> TrainConfig {
        TrainConfig {
            max_epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            seed: self.seed,
            augment: if self.no_augment {
                None
            } else {
                Some(AugmentConfig::default())
            },
            loss,
            plateau_factor: self.plateau_factor,
            plateau_patience: self.plateau_patience,
            early_stop_patience: self.patience,
        }
    }

    pub fn record(&self, manifest: &mut crate::manifest::Manifest) {
        manifest.push("epochs", self.epochs);
        manifest.push("batch", self.batch);
        manifest.push("lr", self.lr);
        manifest.push("plateau_factor", self.plateau_factor);
        manifest.push("plateau_patience", self.plateau_patience);
        manifest.push("patience", self.patience);
        manifest.push("seed", self.seed);
        manifest.push("augment", if self.no_augment { "off" } else { "on" });
        manifest.push("filters", self.filters);
        manifest.push("kernel", self.kernel);
        manifest.push("dense_units", self.dense_units);
        manifest.push("dropout", self.dropout);
    }
}
