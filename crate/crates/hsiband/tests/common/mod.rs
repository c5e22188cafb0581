//! Shared fixtures for integration tests: synthetic labeled scenes with
//! known informative structure, and writers for the on-disk dataset format.
//!
//! Each test binary compiles its own copy, so not every item is used
//! everywhere.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hsiband::ingest::{quantize, GroundTruth, HyperCube, RawCube};

pub struct Scene {
    pub raw: RawCube,
    pub cube: HyperCube,
    pub gt: GroundTruth,
}

/// Block-structured class map: `blocks_r x blocks_c` rectangles, labels
/// 1..=blocks_r*blocks_c, with every `unlabeled_every`-th pixel left at 0.
pub fn class_grid(
    rows: usize,
    cols: usize,
    blocks_r: usize,
    blocks_c: usize,
    unlabeled_every: usize,
) -> GroundTruth {
    let mut labels = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if unlabeled_every > 0 && i.is_multiple_of(unlabeled_every) {
                labels.push(0);
                continue;
            }
            let br = r * blocks_r / rows;
            let bc = c * blocks_c / cols;
            labels.push((br * blocks_c + bc) as u8 + 1);
        }
    }
    GroundTruth::new(rows, cols, labels).unwrap()
}

fn noise(rng: &mut ChaCha8Rng, spread: f64) -> f64 {
    (rng.gen::<f64>() - 0.5) * spread
}

/// Scene whose informative bands each encode one bit of the class index,
/// plus noisy copies and junk bands. Bands are laid out as
/// `[aspect_0..aspect_{n_bits}, noisy copies, junk...]`.
#[allow(clippy::too_many_arguments)]
fn bit_scene(
    rows: usize,
    cols: usize,
    blocks_r: usize,
    blocks_c: usize,
    n_noisy: usize,
    n_junk: usize,
    levels: usize,
    seed: u64,
) -> Scene {
    let gt = class_grid(rows, cols, blocks_r, blocks_c, 31);
    let n_bits = (blocks_r * blocks_c).next_power_of_two().trailing_zeros() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rows * cols;
    let mut values: Vec<i16> = Vec::new();
    let class_at = |i: usize| -> usize {
        // Unlabeled pixels still carry radiance; give them the underlying
        // block's signature so the image is spatially coherent.
        let r = i / cols;
        let c = i % cols;
        (r * blocks_r / rows) * blocks_c + c * blocks_c / cols
    };
    for bit in 0..n_bits {
        for i in 0..n {
            let hot = (class_at(i) >> bit) & 1 == 1;
            let mean = if hot { 900.0 } else { -900.0 };
            values.push((mean + noise(&mut rng, 120.0)) as i16);
        }
    }
    for k in 0..n_noisy {
        let bit = k % n_bits;
        for i in 0..n {
            let hot = (class_at(i) >> bit) & 1 == 1;
            let mean = if hot { 900.0 } else { -900.0 };
            values.push((mean + noise(&mut rng, 900.0)) as i16);
        }
    }
    for _ in 0..n_junk {
        for _ in 0..n {
            values.push(noise(&mut rng, 2000.0) as i16);
        }
    }
    let raw = RawCube {
        rows,
        cols,
        bands: n_bits + n_noisy + n_junk,
        values,
    };
    let cube = quantize(&raw, levels).unwrap();
    Scene { raw, cube, gt }
}

/// 12x12 scene with 4 classes: 2 clean aspect bands, 2 noisy copies, 2 junk.
///
/// Quantization is kept at 8 levels: with only ~140 labeled pixels, finer
/// histograms make any high-cardinality band look informative.
pub fn four_class_scene(seed: u64) -> Scene {
    bit_scene(12, 12, 2, 2, 2, 2, 8, seed)
}

/// 20x20 scene with 16 roughly balanced classes: 4 clean aspect bands,
/// 2 noisy copies, 2 junk.
pub fn sixteen_class_scene(seed: u64) -> Scene {
    bit_scene(20, 20, 4, 4, 2, 2, 8, seed)
}

/// Write `cube.raw`, `cube.raw.dims`, and `gt.csv` under `dir`.
pub fn write_dataset(dir: &Path, scene: &Scene) -> (PathBuf, PathBuf) {
    let cube_path = dir.join("cube.raw");
    let mut bytes = Vec::with_capacity(scene.raw.values.len() * 2);
    for v in &scene.raw.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&cube_path, bytes).unwrap();
    std::fs::write(
        dir.join("cube.raw.dims"),
        format!(
            "rows={}\ncols={}\nbands={}\nbyteorder=little\n",
            scene.raw.rows, scene.raw.cols, scene.raw.bands
        ),
    )
    .unwrap();
    let gt_path = dir.join("gt.csv");
    let mut text = String::new();
    for r in 0..scene.gt.rows {
        let row: Vec<String> = (0..scene.gt.cols)
            .map(|c| scene.gt.labels[r * scene.gt.cols + c].to_string())
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&gt_path, text).unwrap();
    (cube_path, gt_path)
}
