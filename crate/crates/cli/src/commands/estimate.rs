//! `hbce estimate-penalties`: data-driven per-edge penalties from a labels
//! CSV, written as `penalties.csv`.

use std::fs;
use std::path::PathBuf;

use clap::Parser;

use hbce_core::penalty::estimate_data_driven;
use hbce_core::synthdata::load_labels_csv;

use crate::common::{check_epsilon, load_taxonomy, synth_error};
use crate::manifest::Manifest;
use crate::CliError;

/// Estimate Laplace-smoothed P(child=1 | parent=0) penalties from labels
#[derive(Debug, Parser)]
pub struct Args {
    /// labels.csv with header `image,<label names...>`
    #[arg(long)]
    pub labels: PathBuf,
    /// Taxonomy file defining labels and parent > child edges
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Laplace smoothing constant; must be > 0
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Output directory for penalties.csv
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut manifest = Manifest::new("estimate-penalties");
    check_epsilon(args.epsilon)?;
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let (_, matrix) = load_labels_csv(&args.labels, &taxonomy).map_err(synth_error)?;
    let table =
        estimate_data_driven(&taxonomy, &matrix, args.epsilon).map_err(CliError::runtime)?;

    fs::create_dir_all(&args.out).map_err(CliError::runtime)?;
    fs::write(args.out.join("penalties.csv"), table.to_csv(&taxonomy))
        .map_err(CliError::runtime)?;

    manifest.push_path("labels", &args.labels);
    manifest.push_path("taxonomy", &args.taxonomy);
    manifest.push("epsilon", args.epsilon);
    manifest.push_path("out", &args.out);
    manifest.push("rows", matrix.rows());
    manifest.push("edges", table.len());
    manifest.write(&args.out).map_err(CliError::runtime)
}
