//! Seeded synthetic datasets with hierarchical labels and label-correlated
//! images, plus the augmentations used during training.
//!
//! Labels are sampled top-down through the taxonomy: parentless labels with
//! probability `root_marginal`, every other label conditioned on whether any
//! of its (already sampled) parents is positive. The derived "Uncertain"
//! column is never sampled; it is computed from the original labels.
//!
//! Each non-derived label owns a fixed 4x4 patch cell on a square grid (see
//! [`PatchLayout`]). A positive label stamps its patch with a label-specific
//! *texture* (stripes and checkerboards at two spatial frequencies, then a
//! flat fill) rather than a bare bright square: the classifier head pools
//! spatial information away, so labels must differ in local statistics, not
//! just position. Textures are chosen to survive horizontal and vertical
//! flips. After the first seven labels the texture set repeats at a lower
//! intensity tier.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::penalty::{LabelMatrix, PenaltyError};
use crate::pgm::{load_pgm, save_pgm, GrayImage, PgmError};
use crate::seeding::{derive_seed, standard_normal};
use crate::taxonomy::{Taxonomy, TaxonomyError};
use crate::tensor::Tensor;

/// Side length of every label patch, in pixels.
pub const PATCH_SIZE: usize = 4;

/// Blank border kept between a patch and its grid cell's edge.
pub const PATCH_MARGIN: usize = 1;

/// Mean background intensity before noise.
pub const BACKGROUND: f64 = 0.1;

const PATTERN_KINDS: usize = 7;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("signal strength must lie in [0, 1], got {0}")]
    InvalidSignal(f64),
    #[error("noise_std must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
    #[error("n_samples must be at least 1")]
    ZeroSamples,
    #[error(
        "image too small: {labels} patched labels need a {grid}x{grid} grid of \
         {cell}px cells, so each side must be at least {min_side}px"
    )]
    ImageTooSmall {
        labels: usize,
        grid: usize,
        cell: usize,
        min_side: usize,
    },
    #[error("taxonomy has no labels to draw patches for")]
    NoPatchLabels,
    #[error("taxonomy has a cycle; cannot sample labels top-down")]
    CyclicTaxonomy,
    #[error("expected a 2-D image tensor, got shape {0:?}")]
    NotTwoDim(Vec<usize>),
    #[error("image value {0} lies outside [0, 1]")]
    UnitOutOfRange(f64),
    #[error("invalid augmentation config: {0}")]
    InvalidAugment(String),
    #[error("{file} line {line}: {msg}")]
    Csv {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("dataset inconsistency: {0}")]
    Inconsistent(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    Labels(#[from] PenaltyError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// Which subset a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Split sizes for `n` samples at 10:1:2 proportions, assigned in index
/// order: train first, then val, then test.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = n * 10 / 13;
    let val = n / 13;
    (train, val, n - train - val)
}

/// Generation parameters. The per-edge conditionals apply uniformly to every
/// taxonomy edge; a child with several parents is conditioned on whether any
/// of them is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_samples: usize,
    pub image_h: usize,
    pub image_w: usize,
    /// Patch brightness added on top of the background for tier-0 labels.
    pub signal: f64,
    /// Standard deviation of the Gaussian background noise.
    pub noise_std: f64,
    /// P(label = 1) for parentless labels.
    pub root_marginal: f64,
    /// P(child = 1 | some parent = 1).
    pub p_child_pos: f64,
    /// P(child = 1 | all parents = 0).
    pub p_child_neg: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    /// The canonical synthetic dataset: 8,000 / 800 / 1,600 samples at
    /// 16x16, sized so the default model separates the labels within the
    /// default epoch budget at the default learning rate.
    fn default() -> Self {
        GenConfig {
            n_samples: 10400,
            image_h: 16,
            image_w: 16,
            signal: 0.7,
            noise_std: 0.1,
            root_marginal: 0.45,
            p_child_pos: 0.7,
            p_child_neg: 0.05,
            seed: 42,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n_samples == 0 {
            return Err(SynthError::ZeroSamples);
        }
        for (name, value) in [
            ("root_marginal", self.root_marginal),
            ("p_child_pos", self.p_child_pos),
            ("p_child_neg", self.p_child_neg),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::InvalidProbability { name, value });
            }
        }
        if !(0.0..=1.0).contains(&self.signal) {
            return Err(SynthError::InvalidSignal(self.signal));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(SynthError::InvalidNoise(self.noise_std));
        }
        Ok(())
    }
}

/// The fixed grid of patch cells: every label except the derived
/// "Uncertain" owns one slot, assigned in label-index order, on the
/// smallest square grid that fits them all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchLayout {
    grid: usize,
    cell_h: usize,
    cell_w: usize,
    slots: Vec<Option<usize>>,
}

impl PatchLayout {
    pub fn new(
        taxonomy: &Taxonomy,
        image_h: usize,
        image_w: usize,
    ) -> Result<Self, SynthError> {
        let uncertain = taxonomy.uncertain_index();
        let mut slots = Vec::with_capacity(taxonomy.len());
        let mut next = 0usize;
        for i in 0..taxonomy.len() {
            if Some(i) == uncertain {
                slots.push(None);
            } else {
                slots.push(Some(next));
                next += 1;
            }
        }
        if next == 0 {
            return Err(SynthError::NoPatchLabels);
        }
        let grid = (next as f64).sqrt().ceil() as usize;
        let cell = PATCH_SIZE + PATCH_MARGIN;
        let (cell_h, cell_w) = (image_h / grid, image_w / grid);
        if cell_h < cell || cell_w < cell {
            return Err(SynthError::ImageTooSmall {
                labels: next,
                grid,
                cell,
                min_side: grid * cell,
            });
        }
        Ok(PatchLayout {
            grid,
            cell_h,
            cell_w,
            slots,
        })
    }

    /// Patch slot of a label, `None` for the derived "Uncertain" label.
    pub fn slot(&self, label: usize) -> Option<usize> {
        self.slots.get(label).copied().flatten()
    }

    /// `(row, col, height, width)` of a label's patch, `None` for
    /// "Uncertain".
    pub fn rect(&self, label: usize) -> Option<(usize, usize, usize, usize)> {
        let slot = self.slot(label)?;
        let gr = slot / self.grid;
        let gc = slot % self.grid;
        Some((
            gr * self.cell_h + PATCH_MARGIN,
            gc * self.cell_w + PATCH_MARGIN,
            PATCH_SIZE,
            PATCH_SIZE,
        ))
    }

    pub fn grid(&self) -> usize {
        self.grid
    }
}

/// Whether the texture for `slot` lights the pixel at patch-local `(r, c)`.
/// The seven base patterns are flip-safe: mirroring the image maps each
/// pattern onto a (possibly phase-shifted) copy of itself. The first six
/// light exactly half their pixels and differ only in orientation and
/// spatial frequency (stripes and checkers at two scales), so brightness
/// alone distinguishes none of them and a small convolution kernel has to
/// lock onto each motif's structure; that keeps class-activation maps
/// anchored to the owning patch. Flat fill comes last, where a seven-label
/// taxonomy's derived label leaves it unused.
fn pattern_on(slot: usize, r: usize, c: usize) -> bool {
    match slot % PATTERN_KINDS {
        0 => r % 2 == 0,
        1 => c % 2 == 0,
        2 => (r + c) % 2 == 0,
        3 => (r / 2 + c / 2) % 2 == 0,
        4 => r % 4 < 2,
        5 => c % 4 < 2,
        _ => true,
    }
}

/// Intensity multiplier for a slot's tier; repeats of the seven base
/// patterns are dimmed so they stay distinguishable.
fn tier_factor(slot: usize) -> f64 {
    (1.0 - 0.35 * (slot / PATTERN_KINDS) as f64).max(0.25)
}

/// An in-memory dataset: aligned images, label rows, and split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    taxonomy: Taxonomy,
    images: Vec<Tensor>,
    labels: LabelMatrix,
    splits: Vec<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn image(&self, i: usize) -> &Tensor {
        &self.images[i]
    }

    pub fn label_row(&self, i: usize) -> &[u8] {
        self.labels.row(i)
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn split(&self, i: usize) -> Split {
        self.splits[i]
    }

    /// Sample indices belonging to one split, in index order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }
}

/// Samples a full dataset. Identical `(taxonomy, cfg)` always produce an
/// identical dataset: every sample derives its own RNG stream from the seed.
pub fn generate(taxonomy: &Taxonomy, cfg: &GenConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let order = taxonomy
        .topological_order()
        .ok_or(SynthError::CyclicTaxonomy)?;
    let layout = PatchLayout::new(taxonomy, cfg.image_h, cfg.image_w)?;
    let uncertain = taxonomy.uncertain_index();
    let originals = taxonomy.original_indices();
    let l = taxonomy.len();

    let mut images = Vec::with_capacity(cfg.n_samples);
    let mut rows = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
        let mut row = vec![0u8; l];
        for &label in &order {
            if Some(label) == uncertain {
                continue;
            }
            let parents = taxonomy.parents_of(label);
            let p = if parents.is_empty() {
                cfg.root_marginal
            } else if parents.iter().any(|&q| row[q] == 1) {
                cfg.p_child_pos
            } else {
                cfg.p_child_neg
            };
            row[label] = u8::from(rng.gen::<f64>() < p);
        }
        if let Some(u) = uncertain {
            let orig: Vec<u8> = originals.iter().map(|&j| row[j]).collect();
            row[u] = taxonomy.derive_uncertain(&orig)?;
        }

        let mut img = Tensor::zeros(&[cfg.image_h, cfg.image_w]);
        for v in img.data_mut() {
            *v = BACKGROUND + cfg.noise_std * standard_normal(&mut rng);
        }
        for (label, &on) in row.iter().enumerate() {
            if on != 1 {
                continue;
            }
            let Some(slot) = layout.slot(label) else {
                continue;
            };
            let (r0, c0, h, w) = layout.rect(label).expect("slot implies rect");
            let gain = cfg.signal * tier_factor(slot);
            for dr in 0..h {
                for dc in 0..w {
                    if pattern_on(slot, dr, dc) {
                        let v = img.at2(r0 + dr, c0 + dc) + gain;
                        img.set2(r0 + dr, c0 + dc, v);
                    }
                }
            }
        }
        for v in img.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        images.push(img);
        rows.push(row);
    }

    let labels = LabelMatrix::from_rows(rows, l)?;
    let (n_train, n_val, _) = split_counts(cfg.n_samples);
    let splits = (0..cfg.n_samples)
        .map(|i| {
            if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            }
        })
        .collect();
    Ok(Dataset {
        taxonomy: taxonomy.clone(),
        images,
        labels,
        splits,
    })
}

/// Augmentation parameters; defaults follow the training recipe (both flips,
/// brightness delta 0.1, contrast 0.9..1.1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub hflip: bool,
    pub vflip: bool,
    pub brightness_delta: f64,
    pub contrast_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            hflip: true,
            vflip: true,
            brightness_delta: 0.1,
            contrast_range: (0.9, 1.1),
        }
    }
}

impl AugmentConfig {
    /// The do-nothing configuration, handy for disabling augmentation.
    pub fn identity() -> Self {
        AugmentConfig {
            hflip: false,
            vflip: false,
            brightness_delta: 0.0,
            contrast_range: (1.0, 1.0),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..1.0).contains(&self.brightness_delta) {
            return Err(SynthError::InvalidAugment(format!(
                "brightness_delta must lie in [0, 1), got {}",
                self.brightness_delta
            )));
        }
        let (lo, hi) = self.contrast_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(SynthError::InvalidAugment(format!(
                "contrast_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Mirrors an image left-to-right.
pub fn hflip(image: &Tensor) -> Tensor {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let mut out = Tensor::zeros(&[h, w]);
    for r in 0..h {
        for c in 0..w {
            out.set2(r, c, image.at2(r, w - 1 - c));
        }
    }
    out
}

/// Mirrors an image top-to-bottom.
pub fn vflip(image: &Tensor) -> Tensor {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let mut out = Tensor::zeros(&[h, w]);
    for r in 0..h {
        for c in 0..w {
            out.set2(r, c, image.at2(h - 1 - r, c));
        }
    }
    out
}

/// Applies one random augmentation draw: each enabled flip with probability
/// 1/2, then additive brightness from `[-delta, delta]`, then contrast about
/// the image mean from the configured range, then a clamp to `[0, 1]`.
///
/// The RNG is consumed in that fixed order, so a given generator state
/// always produces the same transform.
pub fn augment<R: Rng>(
    image: &Tensor,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Tensor, SynthError> {
    cfg.validate()?;
    if image.shape().len() != 2 {
        return Err(SynthError::NotTwoDim(image.shape().to_vec()));
    }
    for &v in image.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(SynthError::UnitOutOfRange(v));
        }
    }
    let mut out = image.clone();
    if cfg.hflip && rng.gen::<bool>() {
        out = hflip(&out);
    }
    if cfg.vflip && rng.gen::<bool>() {
        out = vflip(&out);
    }
    let delta = rng.gen_range(-cfg.brightness_delta..=cfg.brightness_delta);
    let factor = rng.gen_range(cfg.contrast_range.0..=cfg.contrast_range.1);
    if delta != 0.0 {
        for v in out.data_mut() {
            *v += delta;
        }
    }
    // skipping the no-op transforms keeps a disabled augmentation bit-exact
    if factor != 1.0 {
        let mean = out.data().iter().sum::<f64>() / out.len() as f64;
        for v in out.data_mut() {
            *v = mean + factor * (*v - mean);
        }
    }
    for v in out.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

fn image_name(i: usize) -> String {
    format!("images/{i:05}.pgm")
}

/// Writes `labels.csv`, `split.csv`, and 16-bit PGMs under `images/`.
pub fn save_dataset<P: AsRef<Path>>(dataset: &Dataset, dir: P) -> Result<(), SynthError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("images"))?;

    let mut labels_csv = String::from("image");
    for label in dataset.taxonomy.labels() {
        let _ = write!(labels_csv, ",{}", label.name);
    }
    labels_csv.push('\n');
    let mut split_csv = String::from("image,split\n");

    for i in 0..dataset.len() {
        let name = image_name(i);
        let gray = GrayImage::from_unit(&dataset.images[i], 65535)?;
        save_pgm(dir.join(&name), &gray)?;
        labels_csv.push_str(&name);
        for c in 0..dataset.taxonomy.len() {
            let _ = write!(labels_csv, ",{}", dataset.labels.get(i, c));
        }
        labels_csv.push('\n');
        let _ = writeln!(split_csv, "{},{}", name, dataset.splits[i].as_str());
    }

    fs::write(dir.join("labels.csv"), labels_csv)?;
    fs::write(dir.join("split.csv"), split_csv)?;
    Ok(())
}

/// Reads the label matrix of a dataset directory's `labels.csv`, validating
/// the header against `taxonomy`. Returns rows in file order along with the
/// image paths (relative to the dataset directory).
pub fn load_labels_csv<P: AsRef<Path>>(
    path: P,
    taxonomy: &Taxonomy,
) -> Result<(Vec<String>, LabelMatrix), SynthError> {
    let path = path.as_ref();
    let file_label = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let mut expected = String::from("image");
    for label in taxonomy.labels() {
        let _ = write!(expected, ",{}", label.name);
    }
    match lines.next() {
        Some((_, header)) if header == expected => {}
        Some((i, header)) => {
            return Err(SynthError::Csv {
                file: file_label,
                line: i + 1,
                msg: format!("header {header:?} does not match the taxonomy ({expected:?})"),
            })
        }
        None => {
            return Err(SynthError::Csv {
                file: file_label,
                line: 1,
                msg: "empty file".into(),
            })
        }
    }

    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split(',');
        let name = fields.next().unwrap_or_default().to_string();
        if name.is_empty() {
            return Err(SynthError::Csv {
                file: file_label,
                line,
                msg: "missing image path".into(),
            });
        }
        let mut row = Vec::with_capacity(taxonomy.len());
        for field in fields {
            let v: u8 = field.parse().map_err(|_| SynthError::Csv {
                file: file_label.clone(),
                line,
                msg: format!("label entries must be 0 or 1, got {field:?}"),
            })?;
            row.push(v);
        }
        if row.len() != taxonomy.len() {
            return Err(SynthError::Csv {
                file: file_label,
                line,
                msg: format!(
                    "expected {} label entries, got {}",
                    taxonomy.len(),
                    row.len()
                ),
            });
        }
        names.push(name);
        rows.push(row);
    }
    let labels = LabelMatrix::from_rows(rows, taxonomy.len())?;
    Ok((names, labels))
}

/// Loads a dataset directory written by [`save_dataset`]. The taxonomy must
/// match the one the dataset was generated with (same names, same order).
pub fn load_dataset<P: AsRef<Path>>(dir: P, taxonomy: &Taxonomy) -> Result<Dataset, SynthError> {
    let dir = dir.as_ref();
    let (names, labels) = load_labels_csv(dir.join("labels.csv"), taxonomy)?;

    let split_path = dir.join("split.csv");
    let split_label = split_path.display().to_string();
    let text = fs::read_to_string(&split_path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "image,split")) => {}
        other => {
            return Err(SynthError::Csv {
                file: split_label,
                line: other.map_or(1, |(i, _)| i + 1),
                msg: "expected header `image,split`".into(),
            })
        }
    }
    let mut split_map: HashMap<String, Split> = HashMap::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let Some((name, tag)) = raw.split_once(',') else {
            return Err(SynthError::Csv {
                file: split_label,
                line,
                msg: "expected `image,split`".into(),
            });
        };
        let split = Split::parse(tag).ok_or_else(|| SynthError::Csv {
            file: split_label.clone(),
            line,
            msg: format!("unknown split tag {tag:?}"),
        })?;
        if split_map.insert(name.to_string(), split).is_some() {
            return Err(SynthError::Csv {
                file: split_label.clone(),
                line,
                msg: format!("duplicate image {name:?}"),
            });
        }
    }

    let mut images = Vec::with_capacity(names.len());
    let mut splits = Vec::with_capacity(names.len());
    for name in &names {
        let split = split_map.remove(name).ok_or_else(|| {
            SynthError::Inconsistent(format!("{name} is missing from split.csv"))
        })?;
        splits.push(split);
        images.push(load_pgm(dir.join(name))?.to_unit());
    }
    if let Some(extra) = split_map.into_keys().next() {
        return Err(SynthError::Inconsistent(format!(
            "split.csv mentions {extra} which is not in labels.csv"
        )));
    }

    Ok(Dataset {
        taxonomy: taxonomy.clone(),
        images,
        labels,
        splits,
    })
}
