//! Loading, quantization, and train/test splitting.
//!
//! The cube format is deliberately plain: a band-sequential (BSQ) file of
//! 16-bit signed integers plus a sidecar text descriptor giving the
//! dimensions and byte order. Ground truth is a CSV grid or an 8-bit binary
//! PGM. Nothing here depends on scientific container libraries, so datasets
//! are bit-exact and trivially regenerated.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, LittleEndian, ReadBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Highest class label a ground-truth map may carry.
pub const MAX_LABEL: u8 = 16;

/// Byte order of the raw cube file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

/// Dimensions descriptor for a raw BSQ cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubeDims {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub byte_order: ByteOrder,
}

impl CubeDims {
    /// Parse a sidecar descriptor: `key=value` lines for `rows`, `cols`,
    /// `bands` and optional `byteorder` (`little`|`big`, default little).
    pub fn from_file(path: &Path) -> Result<CubeDims> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<CubeDims> {
        let mut rows = None;
        let mut cols = None;
        let mut bands = None;
        let mut byte_order = ByteOrder::Little;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("descriptor line without '=': {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "rows" | "cols" | "bands" => {
                    let n: usize = value.parse().map_err(|_| {
                        Error::Format(format!("descriptor {key} is not a count: {value:?}"))
                    })?;
                    if n == 0 {
                        return Err(Error::Dimension(format!("descriptor {key} must be > 0")));
                    }
                    match key {
                        "rows" => rows = Some(n),
                        "cols" => cols = Some(n),
                        _ => bands = Some(n),
                    }
                }
                "byteorder" => {
                    byte_order = match value {
                        "little" => ByteOrder::Little,
                        "big" => ByteOrder::Big,
                        other => {
                            return Err(Error::Format(format!("unknown byteorder {other:?}")))
                        }
                    };
                }
                other => return Err(Error::Format(format!("unknown descriptor key {other:?}"))),
            }
        }
        let missing = |name| Error::Format(format!("descriptor missing {name}"));
        Ok(CubeDims {
            rows: rows.ok_or_else(|| missing("rows"))?,
            cols: cols.ok_or_else(|| missing("cols"))?,
            bands: bands.ok_or_else(|| missing("bands"))?,
            byte_order,
        })
    }
}

/// Radiance cube as read from disk: one i16 plane per band, BSQ order.
#[derive(Debug, Clone)]
pub struct RawCube {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    /// `values[band * rows * cols + row * cols + col]`
    pub values: Vec<i16>,
}

impl RawCube {
    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn band(&self, b: usize) -> &[i16] {
        let n = self.pixels();
        &self.values[b * n..(b + 1) * n]
    }
}

/// Quantized cube: every band mapped to integer levels in `[0, levels-1]`.
#[derive(Debug, Clone)]
pub struct HyperCube {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    /// Quantization level count L.
    pub levels: usize,
    /// Same BSQ layout as [`RawCube::values`].
    pub data: Vec<u16>,
}

impl HyperCube {
    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn band(&self, b: usize) -> &[u16] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }
}

/// Per-pixel class labels; 0 marks pixels that carry no label.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `labels[row * cols + col]` in `[0, MAX_LABEL]`.
    pub labels: Vec<u8>,
    /// Count of distinct nonzero labels present.
    pub num_classes: usize,
}

impl GroundTruth {
    pub fn new(rows: usize, cols: usize, labels: Vec<u8>) -> Result<GroundTruth> {
        if labels.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "label grid has {} entries, expected {}",
                labels.len(),
                rows * cols
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > MAX_LABEL) {
            return Err(Error::Format(format!(
                "label {bad} out of range [0, {MAX_LABEL}]"
            )));
        }
        let mut seen = [false; MAX_LABEL as usize + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        let num_classes = seen[1..].iter().filter(|&&s| s).count();
        Ok(GroundTruth {
            rows,
            cols,
            labels,
            num_classes,
        })
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Mask selecting every labeled pixel.
    pub fn labeled_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l != 0).collect()
    }
}

/// Deterministic stratified train/test split over the labeled pixels.
#[derive(Debug, Clone)]
pub struct PixelSplit {
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub seed: u64,
    pub fraction: f64,
}

impl PixelSplit {
    pub fn train_count(&self) -> usize {
        self.train_mask.iter().filter(|&&m| m).count()
    }

    pub fn test_count(&self) -> usize {
        self.test_mask.iter().filter(|&&m| m).count()
    }

    /// Audit export: a `rows x cols` CSV grid of 0 (neither), 1 (train), 2 (test).
    pub fn export_csv<W: Write>(&self, rows: usize, cols: usize, mut w: W) -> std::io::Result<()> {
        for r in 0..rows {
            let mut line = String::with_capacity(cols * 2);
            for c in 0..cols {
                let i = r * cols + c;
                let v = if self.train_mask[i] {
                    '1'
                } else if self.test_mask[i] {
                    '2'
                } else {
                    '0'
                };
                if c > 0 {
                    line.push(',');
                }
                line.push(v);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Read a raw BSQ cube of 16-bit signed samples.
pub fn load_cube(path: &Path, dims: CubeDims) -> Result<RawCube> {
    let expected = dims
        .rows
        .checked_mul(dims.cols)
        .and_then(|n| n.checked_mul(dims.bands))
        .ok_or_else(|| Error::Dimension("cube dimensions overflow".into()))?;
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.len() != expected as u64 * 2 {
        return Err(Error::Dimension(format!(
            "cube file is {} bytes, expected {} for {}x{}x{} i16",
            meta.len(),
            expected * 2,
            dims.rows,
            dims.cols,
            dims.bands
        )));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut values = vec![0i16; expected];
    match dims.byte_order {
        ByteOrder::Little => reader
            .read_i16_into::<LittleEndian>(&mut values)
            .map_err(|e| Error::io(path, e))?,
        ByteOrder::Big => reader
            .read_i16_into::<BigEndian>(&mut values)
            .map_err(|e| Error::io(path, e))?,
    }
    Ok(RawCube {
        rows: dims.rows,
        cols: dims.cols,
        bands: dims.bands,
        values,
    })
}

/// Read a ground-truth map from CSV (rows of comma-separated labels) or
/// binary 8-bit PGM; the format is sniffed from the file content.
pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let is_pgm = match file.read_exact(&mut magic) {
        Ok(()) => &magic == b"P5",
        Err(_) => false,
    };
    drop(file);
    if is_pgm {
        load_ground_truth_pgm(path)
    } else {
        load_ground_truth_csv(path)
    }
}

fn load_ground_truth_csv(path: &Path) -> Result<GroundTruth> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut labels = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row_len = 0usize;
        for field in line.split(',') {
            let v: i64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("ground truth cell is not an integer: {field:?}"))
            })?;
            if !(0..=MAX_LABEL as i64).contains(&v) {
                return Err(Error::Format(format!(
                    "label {v} out of range [0, {MAX_LABEL}]"
                )));
            }
            labels.push(v as u8);
            row_len += 1;
        }
        match cols {
            None => cols = Some(row_len),
            Some(c) if c != row_len => {
                return Err(Error::Dimension(format!(
                    "ragged ground truth: row {rows} has {row_len} cells, expected {c}"
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty ground truth file".into()))?;
    GroundTruth::new(rows, cols, labels)
}

fn load_ground_truth_pgm(path: &Path) -> Result<GroundTruth> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    // Header: "P5" <ws> width <ws> height <ws> maxval <single ws> data,
    // with '#' comments allowed between tokens.
    let mut pos = 2usize;
    let mut tokens = Vec::with_capacity(3);
    while tokens.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::Format("non-ASCII PGM header".into()))?;
        let n: usize = tok
            .parse()
            .map_err(|_| Error::Format(format!("bad PGM header token {tok:?}")))?;
        tokens.push(n);
    }
    pos += 1; // single whitespace after maxval
    let (cols, rows, maxval) = (tokens[0], tokens[1], tokens[2]);
    if maxval > 255 {
        return Err(Error::Format(format!(
            "PGM maxval {maxval} exceeds 8-bit range"
        )));
    }
    let expected = rows * cols;
    if bytes.len() < pos + expected {
        return Err(Error::Dimension(format!(
            "PGM data has {} bytes, expected {expected}",
            bytes.len().saturating_sub(pos)
        )));
    }
    GroundTruth::new(rows, cols, bytes[pos..pos + expected].to_vec())
}

/// Quantize every band independently to `levels` discrete values with a
/// linear min-max map: `level = (v - min) * L / (max - min + 1)` in exact
/// integer arithmetic, clamped to `[0, L-1]`. A constant band maps to all
/// zeros.
pub fn quantize(raw: &RawCube, levels: usize) -> Result<HyperCube> {
    if levels < 2 {
        return Err(Error::Parameter(format!(
            "levels must be >= 2, got {levels}"
        )));
    }
    if levels > u16::MAX as usize + 1 {
        return Err(Error::Parameter(format!(
            "levels must fit 16-bit storage, got {levels}"
        )));
    }
    let n = raw.pixels();
    let mut data = vec![0u16; raw.values.len()];
    for b in 0..raw.bands {
        let band = raw.band(b);
        let min = *band.iter().min().expect("band is nonempty") as i64;
        let max = *band.iter().max().expect("band is nonempty") as i64;
        if min == max {
            continue; // constant band stays all-zero
        }
        let denom = max - min + 1;
        let l = levels as i64;
        let out = &mut data[b * n..(b + 1) * n];
        for (dst, &v) in out.iter_mut().zip(band) {
            let level = (v as i64 - min) * l / denom;
            *dst = level.clamp(0, l - 1) as u16;
        }
    }
    Ok(HyperCube {
        rows: raw.rows,
        cols: raw.cols,
        bands: raw.bands,
        levels,
        data,
    })
}

/// Stratified random split of the labeled pixels, deterministic in `seed`.
///
/// Per class, `round(fraction * class_size)` pixels go to train and the rest
/// to test; a class with fewer than 2 pixels goes entirely to train with a
/// warning. Unlabeled pixels end up in neither mask.
pub fn split_labeled(gt: &GroundTruth, fraction: f64, seed: u64) -> Result<PixelSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = gt.labels.len();
    let mut train_mask = vec![false; n];
    let mut test_mask = vec![false; n];
    for class in 1..=MAX_LABEL {
        let mut members: Vec<usize> = (0..n).filter(|&i| gt.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            log::warn!(
                "class {class} has {} pixel(s); assigning all to train",
                members.len()
            );
            for i in members {
                train_mask[i] = true;
            }
            continue;
        }
        // Per-class stream keeps the split independent of which other
        // classes exist in the map.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        members.shuffle(&mut rng);
        let n_train = (fraction * members.len() as f64).round() as usize;
        for (k, &i) in members.iter().enumerate() {
            if k < n_train {
                train_mask[i] = true;
            } else {
                test_mask[i] = true;
            }
        }
    }
    Ok(PixelSplit {
        train_mask,
        test_mask,
        seed,
        fraction,
    })
}
