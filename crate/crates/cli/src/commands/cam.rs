//! `hbce cam`: class activation heatmap for one label on one image,
//! rendered as quantized grayscale (and optionally color) images.

use std::path::PathBuf;

use clap::Parser;

use hbce_core::explain::{export_heatmap, grad_cam};

use crate::common::{explain_error, load_image, load_model, load_taxonomy};
use crate::manifest::Manifest;
use crate::CliError;

/// Export a Grad-CAM heatmap for one label on one image
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
    /// Label whose activation map to render
    #[arg(long)]
    pub label: String,
    /// Activations below this fraction of the maximum are zeroed
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Equal-width quantization levels; at least 2
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    /// Also write a P6 PPM on the white-yellow-orange-red-black ramp
    #[arg(long)]
    pub color: bool,
    /// Output directory for heatmap.pgm and heatmap_side.pgm
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut manifest = Manifest::new("cam");
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let target = taxonomy.index_of(&args.label).ok_or_else(|| {
        CliError::config(format!(
            "label {:?} is not in the taxonomy {}",
            args.label,
            args.taxonomy.display()
        ))
    })?;
    let model = load_model(&args.checkpoint, &taxonomy)?;
    let image = load_image(&args.image, &model)?;

    let clipped = grad_cam(&model, &image, target)
        .and_then(|raw| raw.normalize_clip(args.threshold))
        .map_err(explain_error)?;
    let files = export_heatmap(
        &clipped,
        &image,
        args.bins,
        &args.out_dir,
        "heatmap",
        args.color,
    )
    .map_err(explain_error)?;

    manifest.push_path("checkpoint", &args.checkpoint);
    manifest.push_path("image", &args.image);
    manifest.push_path("taxonomy", &args.taxonomy);
    manifest.push("label", &args.label);
    manifest.push("target_index", target);
    manifest.push("threshold", args.threshold);
    manifest.push("bins", args.bins);
    manifest.push("color", args.color);
    manifest.push_path("out_dir", &args.out_dir);
    manifest.push_path("heatmap", &files.heatmap);
    manifest.push_path("side_by_side", &files.side_by_side);
    if let Some(color) = &files.color {
        manifest.push_path("color_heatmap", color);
    }
    manifest.write(&args.out_dir).map_err(CliError::runtime)
}
