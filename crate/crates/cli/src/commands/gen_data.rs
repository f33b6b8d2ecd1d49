//! `hbce gen-data`: synthesize a labeled image dataset into a directory.

use std::path::PathBuf;

use clap::Parser;

use hbce_core::synthdata::{generate, save_dataset, GenConfig};

use crate::common::{load_taxonomy, synth_error};
use crate::manifest::Manifest;
use crate::CliError;

/// Generate a synthetic hierarchical-label dataset
#[derive(Debug, Parser)]
pub struct Args {
    /// Taxonomy file defining labels and parent > child edges
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Output dataset directory (labels.csv, images/, split.csv)
    #[arg(long)]
    pub out: PathBuf,
    /// Number of samples (split 10/13 train, 1/13 val, rest test)
    #[arg(long, default_value_t = 10400)]
    pub n: usize,
    /// Image height in pixels
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    /// Image width in pixels
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    /// Patch brightness added over the background
    #[arg(long, default_value_t = 0.7)]
    pub signal: f64,
    /// Standard deviation of the background noise
    #[arg(long, default_value_t = 0.1)]
    pub noise_std: f64,
    /// P(label = 1) for parentless labels
    #[arg(long, default_value_t = 0.45)]
    pub root_marginal: f64,
    /// P(child = 1 | some parent = 1)
    #[arg(long, default_value_t = 0.7)]
    pub p_child_pos: f64,
    /// P(child = 1 | all parents = 0); nonzero injects hierarchy violations
    #[arg(long, default_value_t = 0.05)]
    pub p_child_neg: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut manifest = Manifest::new("gen-data");
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let cfg = GenConfig {
        n_samples: args.n,
        image_h: args.height,
        image_w: args.width,
        signal: args.signal,
        noise_std: args.noise_std,
        root_marginal: args.root_marginal,
        p_child_pos: args.p_child_pos,
        p_child_neg: args.p_child_neg,
        seed: args.seed,
    };
    let dataset = generate(&taxonomy, &cfg).map_err(synth_error)?;
    save_dataset(&dataset, &args.out).map_err(synth_error)?;

    manifest.push_path("taxonomy", &args.taxonomy);
    manifest.push_path("out", &args.out);
    manifest.push("n_samples", cfg.n_samples);
    manifest.push("image_h", cfg.image_h);
    manifest.push("image_w", cfg.image_w);
    manifest.push("signal", cfg.signal);
    manifest.push("noise_std", cfg.noise_std);
    manifest.push("root_marginal", cfg.root_marginal);
    manifest.push("p_child_pos", cfg.p_child_pos);
    manifest.push("p_child_neg", cfg.p_child_neg);
    manifest.push("seed", cfg.seed);
    manifest.push("labels", taxonomy.len());
    manifest.write(&args.out).map_err(CliError::runtime)
}
