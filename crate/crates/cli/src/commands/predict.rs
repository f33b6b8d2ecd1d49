//! `hbce predict`: Monte Carlo dropout prediction for one image, reported
//! as a per-label mean and standard deviation.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Parser;

use hbce_core::uncertainty::mc_predict;

use crate::common::{load_image, load_model, load_taxonomy, nn_error};
use crate::manifest::Manifest;
use crate::CliError;

/// Predict one image with Monte Carlo dropout uncertainty
#[derive(Debug, Parser)]
pub struct Args {
    /// Trained checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input PGM image
    #[arg(long)]
    pub image: PathBuf,
    /// Taxonomy file (provides the label names)
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Stochastic forward passes to average
    #[arg(long, default_value_t = 10)]
    pub passes: usize,
    /// Base seed; pass i uses seed + i
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory for predictions.csv
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut manifest = Manifest::new("predict");
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let model = load_model(&args.checkpoint, &taxonomy)?;
    let image = load_image(&args.image, &model)?;
    let summary = mc_predict(&model, &image, args.passes, args.seed).map_err(nn_error)?;

    let mut csv = String::from("label,mean,std\n");
    for (label, (mean, std)) in taxonomy
        .labels()
        .iter()
        .zip(summary.mean.iter().zip(&summary.std))
    {
        let _ = writeln!(csv, "{},{:.6},{:.6}", label.name, mean, std);
    }
    fs::create_dir_all(&args.out).map_err(CliError::runtime)?;
    fs::write(args.out.join("predictions.csv"), csv).map_err(CliError::runtime)?;

    manifest.push_path("checkpoint", &args.checkpoint);
    manifest.push_path("image", &args.image);
    manifest.push_path("taxonomy", &args.taxonomy);
    manifest.push("passes", args.passes);
    manifest.push("seed", args.seed);
    manifest.push_path("out", &args.out);
    manifest.write(&args.out).map_err(CliError::runtime)
}
