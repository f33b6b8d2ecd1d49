//! Class activation maps for the pooled conv architecture, plus the
//! normalize / clip / upsample / quantize pipeline used to render them.
//!
//! The map for a target label weights each conv feature map by the spatial
//! mean of the target logit's gradient with respect to that map, sums, and
//! rectifies. Because pooling spreads a feature's gradient uniformly over
//! its map, those means have a closed form here; no stochastic pieces are
//! involved (dropout is inactive in evaluation mode).

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::nn::{Model, NnError};
use crate::pgm::{save_pgm, save_ppm, GrayImage, PgmError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapState {
    /// Non-negative, unnormalized activations straight from the map.
    Raw,
    /// Scaled into `[0, 1]` by the maximum activation.
    Normalized,
    /// Normalized, with values below the clip threshold zeroed.
    Clipped,
}

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("target label {target} out of range for {labels} outputs")]
    TargetOutOfRange { target: usize, labels: usize },
    #[error("heatmap must be {expected:?} for this step, got {got:?}")]
    WrongState {
        expected: &'static [HeatmapState],
        got: HeatmapState,
    },
    #[error("clip threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("quantization needs at least two bins, got {0}")]
    TooFewBins(usize),
    #[error("upsample target must have positive dimensions")]
    EmptyTarget,
    #[error("image value {0} lies outside [0, 1]")]
    ValueOutOfRange(f64),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single-channel activation map with an explicit processing state, so
/// the normalize -> clip -> quantize pipeline cannot be run out of order.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    state: HeatmapState,
}

impl Heatmap {
    /// Wraps precomputed non-negative activations as a raw heatmap, the
    /// state [`grad_cam`] emits. `values` is row-major `height x width`.
    pub fn from_raw(
        height: usize,
        width: usize,
        values: Vec<f64>,
    ) -> Result<Heatmap, ExplainError> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(ExplainError::ShapeMismatch {
                expected: vec![height, width],
                got: vec![values.len()],
            });
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(ExplainError::ValueOutOfRange(bad));
        }
        Ok(Heatmap {
            height,
            width,
            values,
            state: HeatmapState::Raw,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn state(&self) -> HeatmapState {
        self.state
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.height && c < self.width, "heatmap index");
        self.values[r * self.width + c]
    }

    fn expect_state(&self, expected: &'static [HeatmapState]) -> Result<(), ExplainError> {
        if expected.contains(&self.state) {
            Ok(())
        } else {
            Err(ExplainError::WrongState {
                expected,
                got: self.state,
            })
        }
    }

    /// Raw -> Normalized: divide by the maximum activation. An all-zero map
    /// stays all zero.
    pub fn normalized(&self) -> Result<Heatmap, ExplainError> {
        self.expect_state(&[HeatmapState::Raw])?;
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        let values = if max > 0.0 {
            self.values.iter().map(|v| v / max).collect()
        } else {
            vec![0.0; self.values.len()]
        };
        Ok(Heatmap {
            height: self.height,
            width: self.width,
            values,
            state: HeatmapState::Normalized,
        })
    }

    /// Normalized -> Clipped: zero everything below `threshold`, leaving
    /// values in `{0} U [threshold, 1]`.
    pub fn clipped(&self, threshold: f64) -> Result<Heatmap, ExplainError> {
        self.expect_state(&[HeatmapState::Normalized])?;
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ExplainError::InvalidThreshold(threshold));
        }
        let values = self
            .values
            .iter()
            .map(|&v| if v < threshold { 0.0 } else { v })
            .collect();
        Ok(Heatmap {
            height: self.height,
            width: self.width,
            values,
            state: HeatmapState::Clipped,
        })
    }

    /// Normalize-and-clip in one step: divide by the maximum activation,
    /// then zero everything below `threshold`. An already-clipped map passes
    /// through unchanged (its maximum is 1 unless it is all zero), which
    /// makes the operation idempotent; scaling a raw map by any positive
    /// constant does not change the result.
    pub fn normalize_clip(&self, threshold: f64) -> Result<Heatmap, ExplainError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ExplainError::InvalidThreshold(threshold));
        }
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        let values = self
            .values
            .iter()
            .map(|&v| {
                let scaled = if max > 0.0 { v / max } else { 0.0 };
                if scaled < threshold {
                    0.0
                } else {
                    scaled
                }
            })
            .collect();
        Ok(Heatmap {
            height: self.height,
            width: self.width,
            values,
            state: HeatmapState::Clipped,
        })
    }

    /// Nearest-neighbor resample to `(out_h, out_w)`; the state carries over.
    pub fn upsampled(&self, out_h: usize, out_w: usize) -> Result<Heatmap, ExplainError> {
        if out_h == 0 || out_w == 0 {
            return Err(ExplainError::EmptyTarget);
        }
        let mut values = Vec::with_capacity(out_h * out_w);
        for r in 0..out_h {
            let sr = r * self.height / out_h;
            for c in 0..out_w {
                let sc = c * self.width / out_w;
                values.push(self.values[sr * self.width + sc]);
            }
        }
        Ok(Heatmap {
            height: out_h,
            width: out_w,
            values,
            state: self.state,
        })
    }

    /// Snaps positive values up to the next of `bins` equal-width levels:
    /// `ceil(v * bins) / bins`, zero staying zero. The output takes at most
    /// `bins + 1` distinct values and a second application changes nothing.
    pub fn quantized(&self, bins: usize) -> Result<Heatmap, ExplainError> {
        self.expect_state(&[HeatmapState::Normalized, HeatmapState::Clipped])?;
        if bins < 2 {
            return Err(ExplainError::TooFewBins(bins));
        }
        let b = bins as f64;
        let values = self
            .values
            .iter()
            .map(|&v| {
                if v <= 0.0 {
                    0.0
                } else {
                    // the tiny slack keeps level values (k/bins) from being
                    // pushed to the next level by multiplication round-off
                    ((v * b - 1e-9).ceil().max(1.0)) / b
                }
            })
            .collect();
        Ok(Heatmap {
            height: self.height,
            width: self.width,
            values,
            state: self.state,
        })
    }

    /// Row-major first position of the maximum value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for r in 0..self.height {
            for c in 0..self.width {
                let v = self.values[r * self.width + c];
                if v > best_v {
                    best_v = v;
                    best = (r, c);
                }
            }
        }
        best
    }

    /// Renders to an 8-bit grayscale image with the conventional polarity:
    /// zero activation prints white (255), full activation prints black (0).
    /// Requires values already in `[0, 1]`, i.e. not a raw map.
    pub fn to_gray(&self) -> Result<GrayImage, ExplainError> {
        self.expect_state(&[HeatmapState::Normalized, HeatmapState::Clipped])?;
        let samples = self
            .values
            .iter()
            .map(|&v| 255 - (v * 255.0).round() as u16)
            .collect();
        Ok(GrayImage::new(self.width, self.height, 255, samples)?)
    }

    /// Maps each value onto the fixed five-color ramp white, yellow,
    /// orange, red, black (cold to hot), returning row-major RGB triples
    /// for a P6 pixmap. Same state requirement as [`Heatmap::to_gray`].
    pub fn to_color(&self) -> Result<Vec<[u8; 3]>, ExplainError> {
        self.expect_state(&[HeatmapState::Normalized, HeatmapState::Clipped])?;
        const RAMP: [[u8; 3]; 5] = [
            [255, 255, 255],
            [255, 255, 0],
            [255, 165, 0],
            [255, 0, 0],
            [0, 0, 0],
        ];
        Ok(self
            .values
            .iter()
            .map(|&v| {
                let bucket = if v <= 0.0 {
                    0
                } else {
                    ((v * 4.0).ceil() as usize).clamp(1, 4)
                };
                RAMP[bucket]
            })
            .collect())
    }
}

/// Computes the raw class activation map for `target` on one image.
pub fn grad_cam(model: &Model, image: &Tensor, target: usize) -> Result<Heatmap, ExplainError> {
    let cfg = &model.config;
    if target >= cfg.output_labels {
        return Err(ExplainError::TargetOutOfRange {
            target,
            labels: cfg.output_labels,
        });
    }
    let (_, cache) = model.forward(&[image], false, 0)?;
    let (h, w) = (cfg.input_h, cfg.input_w);
    let (f, u, l) = (cfg.conv_filters, cfg.dense_units, cfg.output_labels);
    let hw = h * w;

    // d logit / d fc1_pre, through the hidden ReLU (dropout is inactive)
    let mut beta = vec![0.0; u];
    for ui in 0..u {
        if cache.fc1_pre.data()[ui] > 0.0 {
            beta[ui] = model.params.fc2_w.data()[ui * l + target];
        }
    }
    // pooling makes the gradient constant over each map, so the per-map
    // spatial mean is just that constant (including the pooling scale)
    let pool_scale = 1.0 / (hw as f64).sqrt();
    let mut alpha = vec![0.0; f];
    for fi in 0..f {
        let mut acc = 0.0;
        for ui in 0..u {
            acc += model.params.fc1_w.data()[fi * u + ui] * beta[ui];
        }
        alpha[fi] = acc * pool_scale;
    }

    let maps = cache.conv_feature_maps().data();
    let mut values = vec![0.0; hw];
    for fi in 0..f {
        let base = fi * hw;
        for i in 0..hw {
            values[i] += alpha[fi] * maps[base + i];
        }
    }
    for v in &mut values {
        *v = v.max(0.0);
    }
    Ok(Heatmap {
        height: h,
        width: w,
        values,
        state: HeatmapState::Raw,
    })
}

/// Joins the input image (left) and a rendered heatmap (right) into one
/// grayscale image for quick visual checks.
pub fn side_by_side(image: &Tensor, heatmap: &Heatmap) -> Result<GrayImage, ExplainError> {
    let (h, w) = (heatmap.height, heatmap.width);
    if image.shape() != [h, w] {
        return Err(ExplainError::ShapeMismatch {
            expected: vec![h, w],
            got: image.shape().to_vec(),
        });
    }
    let right = heatmap.to_gray()?;
    let mut samples = Vec::with_capacity(h * 2 * w);
    for r in 0..h {
        for c in 0..w {
            let v = image.at2(r, c);
            if !(0.0..=1.0).contains(&v) {
                return Err(ExplainError::ValueOutOfRange(v));
            }
            samples.push((v * 255.0).round() as u16);
        }
        for c in 0..w {
            samples.push(right.samples[r * w + c]);
        }
    }
    Ok(GrayImage::new(2 * w, h, 255, samples)?)
}

/// Files written by [`export_heatmap`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedFiles {
    /// Grayscale rendering, `<stem>.pgm` (255 = no activation).
    pub heatmap: PathBuf,
    /// Input image and heatmap joined left/right, `<stem>_side.pgm`.
    pub side_by_side: PathBuf,
    /// Five-color ramp rendering, `<stem>.ppm`, when requested.
    pub color: Option<PathBuf>,
}

/// Renders a clipped heatmap next to the image it explains: upsample to the
/// image dimensions (nearest neighbor), quantize into `bins` equal-width
/// levels over `[0, 1]`, then write a grayscale PGM (white = no activation,
/// black = full activation) plus a side-by-side PGM with the input. With
/// `color` set, a P6 PPM on the fixed five-color ramp is written as well.
pub fn export_heatmap(
    heatmap: &Heatmap,
    image: &Tensor,
    bins: usize,
    out_dir: &Path,
    stem: &str,
    color: bool,
) -> Result<ExportedFiles, ExplainError> {
    heatmap.expect_state(&[HeatmapState::Clipped])?;
    if image.shape().len() != 2 {
        return Err(ExplainError::ShapeMismatch {
            expected: vec![heatmap.height, heatmap.width],
            got: image.shape().to_vec(),
        });
    }
    let quantized = heatmap
        .upsampled(image.shape()[0], image.shape()[1])?
        .quantized(bins)?;

    fs::create_dir_all(out_dir)?;
    let gray_path = out_dir.join(format!("{stem}.pgm"));
    save_pgm(&gray_path, &quantized.to_gray()?)?;
    let side_path = out_dir.join(format!("{stem}_side.pgm"));
    save_pgm(&side_path, &side_by_side(image, &quantized)?)?;
    let color_path = if color {
        let path = out_dir.join(format!("{stem}.ppm"));
        save_ppm(
            &path,
            quantized.width,
            quantized.height,
            &quantized.to_color()?,
        )?;
        Some(path)
    } else {
        None
    };
    Ok(ExportedFiles {
        heatmap: gray_path,
        side_by_side: side_path,
        color: color_path,
    })
}
