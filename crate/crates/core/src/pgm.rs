//! Binary PNM image I/O: P5 graymaps (8- or 16-bit) and P6 pixmaps (8-bit).
//!
//! Headers follow the netpbm conventions (whitespace-separated tokens, `#`
//! comments). Rasters are binary; 16-bit samples are stored big-endian, most
//! significant byte first. Reading is strict: short rasters, samples above
//! the declared maxval, and trailing bytes are all errors so that corrupted
//! datasets fail loudly instead of skewing results.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: String, got: String },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("maxval must lie in 1..=65535, got {0}")]
    UnsupportedMaxval(u64),
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("raster truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("trailing data after the raster")]
    TrailingData,
    #[error("sample {value} exceeds maxval {maxval}")]
    SampleExceedsMaxval { value: u16, maxval: u16 },
    #[error("unit-range value {0} lies outside [0, 1]")]
    UnitOutOfRange(f64),
    #[error("expected 2-D (height, width) tensor, got shape {0:?}")]
    NotTwoDim(Vec<usize>),
    #[error("pixel count mismatch: {got} samples for {expected} pixels")]
    PixelCountMismatch { expected: usize, got: usize },
}

/// A grayscale raster with its declared maxval. Samples are row-major,
/// top-to-bottom, left-to-right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl GrayImage {
    pub fn new(
        width: usize,
        height: usize,
        maxval: u16,
        samples: Vec<u16>,
    ) -> Result<Self, PgmError> {
        if width == 0 || height == 0 {
            return Err(PgmError::EmptyImage);
        }
        if maxval == 0 {
            return Err(PgmError::UnsupportedMaxval(0));
        }
        if samples.len() != width * height {
            return Err(PgmError::PixelCountMismatch {
                expected: width * height,
                got: samples.len(),
            });
        }
        if let Some(&bad) = samples.iter().find(|&&s| s > maxval) {
            return Err(PgmError::SampleExceedsMaxval {
                value: bad,
                maxval,
            });
        }
        Ok(GrayImage {
            width,
            height,
            maxval,
            samples,
        })
    }

    /// Quantizes a (height, width) tensor of values in `[0, 1]`:
    /// `sample = round(v * maxval)`.
    pub fn from_unit(values: &Tensor, maxval: u16) -> Result<Self, PgmError> {
        if values.shape().len() != 2 {
            return Err(PgmError::NotTwoDim(values.shape().to_vec()));
        }
        if maxval == 0 {
            return Err(PgmError::UnsupportedMaxval(0));
        }
        let (height, width) = (values.shape()[0], values.shape()[1]);
        let mut samples = Vec::with_capacity(values.len());
        for &v in values.data() {
            if !(0.0..=1.0).contains(&v) {
                return Err(PgmError::UnitOutOfRange(v));
            }
            samples.push((v * f64::from(maxval)).round() as u16);
        }
        GrayImage::new(width, height, maxval, samples)
    }

    /// Dequantizes to a (height, width) tensor: `v = sample / maxval`.
    pub fn to_unit(&self) -> Tensor {
        let data = self
            .samples
            .iter()
            .map(|&s| f64::from(s) / f64::from(self.maxval))
            .collect();
        Tensor::from_vec(&[self.height, self.width], data).expect("sample count matches shape")
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        debug_assert!(row < self.height && col < self.width);
        self.samples[row * self.width + col]
    }
}

fn read_byte<R: Read>(r: &mut R) -> Result<Option<u8>, PgmError> {
    let mut buf = [0u8; 1];
    match r.read(&mut buf) {
        Ok(0) => Ok(None),
        Ok(_) => Ok(Some(buf[0])),
        Err(e) => Err(PgmError::Io(e)),
    }
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn read_token<R: Read>(r: &mut R) -> Result<String, PgmError> {
    let mut tok = String::new();
    loop {
        let Some(b) = read_byte(r)? else {
            if tok.is_empty() {
                return Err(PgmError::Header("unexpected end of header".into()));
            }
            return Ok(tok);
        };
        if b == b'#' && tok.is_empty() {
            loop {
                match read_byte(r)? {
                    Some(b'\n') | None => break,
                    Some(_) => {}
                }
            }
        } else if b.is_ascii_whitespace() {
            if !tok.is_empty() {
                return Ok(tok);
            }
        } else {
            tok.push(b as char);
        }
    }
}

fn parse_dim(tok: &str, what: &str) -> Result<usize, PgmError> {
    tok.parse::<usize>()
        .map_err(|_| PgmError::Header(format!("bad {what}: {tok:?}")))
}

/// Reads a binary P5 graymap. Accepts 8-bit (maxval < 256) and 16-bit
/// (maxval 256..=65535, big-endian) rasters.
pub fn read_pgm<R: Read>(r: &mut R) -> Result<GrayImage, PgmError> {
    let magic = read_token(r)?;
    if magic != "P5" {
        return Err(PgmError::BadMagic {
            expected: "P5".into(),
            got: magic,
        });
    }
    let width = parse_dim(&read_token(r)?, "width")?;
    let height = parse_dim(&read_token(r)?, "height")?;
    let maxval_raw: u64 = read_token(r)?
        .parse()
        .map_err(|_| PgmError::Header("bad maxval".into()))?;
    if maxval_raw == 0 || maxval_raw > 65535 {
        return Err(PgmError::UnsupportedMaxval(maxval_raw));
    }
    let maxval = maxval_raw as u16;
    if width == 0 || height == 0 {
        return Err(PgmError::EmptyImage);
    }
    let pixels = width
        .checked_mul(height)
        .ok_or_else(|| PgmError::Header("image dimensions overflow".into()))?;
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let expected = pixels * bytes_per_sample;
    let mut raster = vec![0u8; expected];
    let mut got = 0;
    while got < expected {
        match r.read(&mut raster[got..])? {
            0 => return Err(PgmError::Truncated { expected, got }),
            n => got += n,
        }
    }
    if read_byte(r)?.is_some() {
        return Err(PgmError::TrailingData);
    }
    let samples: Vec<u16> = if bytes_per_sample == 1 {
        raster.iter().map(|&b| u16::from(b)).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(&bad) = samples.iter().find(|&&s| s > maxval) {
        return Err(PgmError::SampleExceedsMaxval {
            value: bad,
            maxval,
        });
    }
    GrayImage::new(width, height, maxval, samples)
}

/// Writes a binary P5 graymap; sample width follows the image's maxval.
pub fn write_pgm<W: Write>(w: &mut W, image: &GrayImage) -> Result<(), PgmError> {
    write!(w, "P5\n{} {}\n{}\n", image.width, image.height, image.maxval)?;
    if image.maxval < 256 {
        for &s in &image.samples {
            w.write_all(&[s as u8])?;
        }
    } else {
        for &s in &image.samples {
            w.write_all(&s.to_be_bytes())?;
        }
    }
    Ok(())
}

/// Writes a binary P6 pixmap (8-bit RGB, maxval 255). `pixels` is row-major.
pub fn write_ppm<W: Write>(
    w: &mut W,
    width: usize,
    height: usize,
    pixels: &[[u8; 3]],
) -> Result<(), PgmError> {
    if width == 0 || height == 0 {
        return Err(PgmError::EmptyImage);
    }
    if pixels.len() != width * height {
        return Err(PgmError::PixelCountMismatch {
            expected: width * height,
            got: pixels.len(),
        });
    }
    write!(w, "P6\n{width} {height}\n255\n")?;
    for px in pixels {
        w.write_all(px)?;
    }
    Ok(())
}

pub fn load_pgm<P: AsRef<Path>>(path: P) -> Result<GrayImage, PgmError> {
    let mut reader = BufReader::new(File::open(path)?);
    read_pgm(&mut reader)
}

pub fn save_pgm<P: AsRef<Path>>(path: P, image: &GrayImage) -> Result<(), PgmError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_pgm(&mut writer, image)?;
    writer.flush()?;
    Ok(())
}

pub fn save_ppm<P: AsRef<Path>>(
    path: P,
    width: usize,
    height: usize,
    pixels: &[[u8; 3]],
) -> Result<(), PgmError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_ppm(&mut writer, width, height, pixels)?;
    writer.flush()?;
    Ok(())
}
