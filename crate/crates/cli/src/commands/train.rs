//! `hbce train`: fit the classifier on a dataset's train split and save the
//! best checkpoint, the epoch history, and the penalty table that was used.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;

use hbce_core::loss::LossConfig;
use hbce_core::nn::{save_checkpoint, TrainOutcome};
use hbce_core::penalty::PenaltyTable;
use hbce_core::synthdata::Dataset;
use hbce_core::taxonomy::Taxonomy;

use crate::common::{load_dataset, load_taxonomy, nn_error, LossOpts, TrainOpts};
use crate::manifest::Manifest;
use crate::CliError;

/// Train a classifier and keep the checkpoint with the best validation loss
#[derive(Debug, Parser)]
pub struct Args {
    /// Dataset directory produced by gen-data
    #[arg(long)]
    pub data: PathBuf,
    /// Taxonomy file defining labels and parent > child edges
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Output directory (checkpoint.bin, history.csv, penalties.csv)
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub loss: LossOpts,
    #[command(flatten)]
    pub opts: TrainOpts,
}

/// Trains one configuration and writes its artifacts into `out`; shared
/// with `sweep`, which calls it once per grid cell.
pub fn train_once(
    dataset: &Dataset,
    taxonomy: &Taxonomy,
    loss: &LossOpts,
    opts: &TrainOpts,
    out: &Path,
) -> Result<(TrainOutcome, PenaltyTable, LossConfig), CliError> {
    let (table, loss_cfg) = loss.build(dataset, taxonomy)?;
    let model_cfg = opts.model_config(dataset, taxonomy);
    let train_cfg = opts.train_config(loss_cfg);
    let outcome = hbce_core::nn::train(dataset, &model_cfg, &table, &train_cfg).map_err(nn_error)?;

    fs::create_dir_all(out).map_err(CliError::runtime)?;
    save_checkpoint(out.join("checkpoint.bin"), &outcome.model).map_err(CliError::runtime)?;
    fs::write(out.join("history.csv"), outcome.history.to_csv()).map_err(CliError::runtime)?;
    fs::write(out.join("penalties.csv"), table.to_csv(taxonomy)).map_err(CliError::runtime)?;
    Ok((outcome, table, loss_cfg))
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut manifest = Manifest::new("train");
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let dataset = load_dataset(&args.data, &taxonomy)?;
    let (outcome, _, _) = train_once(&dataset, &taxonomy, &args.loss, &args.opts, &args.out)?;

    manifest.push_path("data", &args.data);
    manifest.push_path("taxonomy", &args.taxonomy);
    manifest.push_path("out", &args.out);
    args.loss.record(&mut manifest);
    args.opts.record(&mut manifest);
    manifest.push("epochs_run", outcome.history.records.len());
    match outcome.best_epoch {
        Some(e) => manifest.push("best_epoch", e),
        None => manifest.push("best_epoch", "none"),
    }
    manifest.write(&args.out).map_err(CliError::runtime)
}
