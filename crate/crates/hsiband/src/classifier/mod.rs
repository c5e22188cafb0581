//! One-vs-one RBF support vector machine.
//!
//! The multiclass model trains one SMO-optimized binary machine per
//! unordered class pair and predicts by majority vote. It serves two roles:
//! building the estimated ground truth inside the wrapper stage, and scoring
//! final classification accuracy.

mod smo;

use std::fmt::Write as FmtWrite;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{GroundTruth, HyperCube, PixelSplit};

pub use smo::rbf;

/// Hyperparameters shared by every pairwise machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 100.0,
            gamma: 0.5,
            tolerance: 1e-3,
            max_passes: 1000,
        }
    }
}

impl SvmParams {
    fn validate(&self) -> Result<()> {
        if self.c <= 0.0 || self.gamma <= 0.0 || self.tolerance <= 0.0 {
            return Err(Error::Parameter(format!(
                "SVM parameters must be positive: C={}, gamma={}, tolerance={}",
                self.c, self.gamma, self.tolerance
            )));
        }
        Ok(())
    }
}

/// Dense row-major feature matrix; one row per selected pixel, one column
/// per selected band, values scaled to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> FeatureMatrix {
        debug_assert_eq!(values.len(), rows * cols);
        FeatureMatrix { rows, cols, values }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }
}

/// Gather the masked pixels of the given bands into a feature matrix,
/// scaling levels by `1 / (L - 1)`. Rows follow the row-major pixel scan.
pub fn extract_features(
    cube: &HyperCube,
    band_subset: &[usize],
    mask: &[bool],
) -> Result<FeatureMatrix> {
    if band_subset.is_empty() {
        return Err(Error::Parameter("band subset is empty".into()));
    }
    let mut seen = vec![false; cube.bands];
    for &b in band_subset {
        if b >= cube.bands {
            return Err(Error::Parameter(format!(
                "band index {b} out of range (cube has {} bands)",
                cube.bands
            )));
        }
        if seen[b] {
            return Err(Error::Parameter(format!("duplicate band index {b}")));
        }
        seen[b] = true;
    }
    if mask.len() != cube.pixels() {
        return Err(Error::Parameter(format!(
            "mask length {} != pixel count {}",
            mask.len(),
            cube.pixels()
        )));
    }
    let rows = mask.iter().filter(|&&m| m).count();
    if rows == 0 {
        return Err(Error::Parameter("mask selects no pixels".into()));
    }
    let scale = 1.0 / (cube.levels - 1) as f64;
    let planes: Vec<&[u16]> = band_subset.iter().map(|&b| cube.band(b)).collect();
    let mut values = Vec::with_capacity(rows * band_subset.len());
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        for plane in &planes {
            values.push(plane[i] as f64 * scale);
        }
    }
    Ok(FeatureMatrix::new(rows, band_subset.len(), values))
}

/// One trained binary machine for an unordered class pair; the decision
/// value is positive for `class_pos` (the lower label).
#[derive(Debug, Clone, PartialEq)]
pub struct PairMachine {
    pub class_pos: u8,
    pub class_neg: u8,
    /// Flat `n_sv x dim` support vector rows.
    pub support_vectors: Vec<f64>,
    /// Signed dual coefficients `alpha_i * y_i`, one per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
}

impl PairMachine {
    pub fn n_sv(&self) -> usize {
        self.coefficients.len()
    }

    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        let dim = x.len();
        let mut f = self.bias;
        for (i, &coef) in self.coefficients.iter().enumerate() {
            f += coef * rbf(&self.support_vectors[i * dim..(i + 1) * dim], x, gamma);
        }
        f
    }
}

/// One-vs-one multiclass model.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub params: SvmParams,
    /// Distinct labels seen at training time, ascending.
    pub classes: Vec<u8>,
    pub n_features: usize,
    /// Band indices behind each feature column (provenance; defaults to
    /// 0..n_features when the caller trained on a bare matrix).
    pub band_subset: Vec<usize>,
    /// Quantization level count behind the 1/(L-1) feature scaling
    /// (0 when unknown).
    pub levels: usize,
    pub machines: Vec<PairMachine>,
    pub converged: bool,
}

impl SvmModel {
    pub fn pair_count(&self) -> usize {
        self.machines.len()
    }
}

fn pair_seed(seed: u64, a: u8, b: u8) -> u64 {
    seed ^ (1 + a as u64 * 257 + b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Train one machine per unordered class pair with SMO.
///
/// Training is deterministic for a fixed seed. A machine that hits the
/// sweep cap is kept and flagged, and the model's `converged` goes false.
pub fn svm_train(x: &FeatureMatrix, y: &[u8], params: &SvmParams, seed: u64) -> Result<SvmModel> {
    params.validate()?;
    if x.rows != y.len() {
        return Err(Error::Parameter(format!(
            "feature rows {} != label count {}",
            x.rows,
            y.len()
        )));
    }
    let mut classes: Vec<u8> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Domain(format!(
            "training needs at least 2 distinct labels, got {}",
            classes.len()
        )));
    }
    let mut pairs = Vec::new();
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            pairs.push((classes[i], classes[j]));
        }
    }
    let machines: Vec<PairMachine> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == a || y[i] == b).collect();
            let n = idx.len();
            let dim = x.cols;
            let mut sub_x = Vec::with_capacity(n * dim);
            let mut sub_y = Vec::with_capacity(n);
            for &i in &idx {
                sub_x.extend_from_slice(x.row(i));
                sub_y.push(if y[i] == a { 1.0 } else { -1.0 });
            }
            let gram = smo::Gram::new(&sub_x, n, dim, params.gamma);
            let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(seed, a, b));
            let sol = smo::solve(&gram, &sub_y, params, &mut rng);
            if !sol.converged {
                log::warn!(
                    "pair ({a},{b}) stopped at the {} sweep cap without converging",
                    sol.sweeps
                );
            }
            let mut support_vectors = Vec::new();
            let mut coefficients = Vec::new();
            for (k, &alpha) in sol.alphas.iter().enumerate() {
                if alpha > 1e-12 {
                    support_vectors.extend_from_slice(&sub_x[k * dim..(k + 1) * dim]);
                    coefficients.push(alpha * sub_y[k]);
                }
            }
            PairMachine {
                class_pos: a,
                class_neg: b,
                support_vectors,
                coefficients,
                bias: sol.bias,
                converged: sol.converged,
            }
        })
        .collect();
    let converged = machines.iter().all(|m| m.converged);
    Ok(SvmModel {
        params: *params,
        classes,
        n_features: x.cols,
        band_subset: (0..x.cols).collect(),
        levels: 0,
        machines,
        converged,
    })
}

/// Majority vote over all pairwise decisions; ties break to the lowest label.
pub fn svm_predict(model: &SvmModel, x: &FeatureMatrix) -> Result<Vec<u8>> {
    if x.cols != model.n_features {
        return Err(Error::Parameter(format!(
            "feature columns {} != model band subset size {}",
            x.cols, model.n_features
        )));
    }
    let gamma = model.params.gamma;
    let labels: Vec<u8> = (0..x.rows)
        .into_par_iter()
        .map(|r| {
            let row = x.row(r);
            let mut votes = [0u16; 256];
            for m in &model.machines {
                let winner = if m.decision(row, gamma) >= 0.0 {
                    m.class_pos
                } else {
                    m.class_neg
                };
                votes[winner as usize] += 1;
            }
            let mut best = model.classes[0];
            for &c in &model.classes {
                if votes[c as usize] > votes[best as usize] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Ok(labels)
}

/// Train on the split's train pixels and predict a label for every labeled
/// pixel, returning a full `rows x cols` field (0 where unlabeled).
pub fn build_gt_est(
    cube: &HyperCube,
    band_subset: &[usize],
    split: &PixelSplit,
    gt: &GroundTruth,
    params: &SvmParams,
    seed: u64,
) -> Result<Vec<u8>> {
    if band_subset.is_empty() {
        return Err(Error::Parameter("band subset is empty".into()));
    }
    let x_train = extract_features(cube, band_subset, &split.train_mask)?;
    let y_train: Vec<u8> = gt
        .labels
        .iter()
        .zip(&split.train_mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .collect();
    let mut model = svm_train(&x_train, &y_train, params, seed)?;
    model.band_subset = band_subset.to_vec();
    model.levels = cube.levels;
    let labeled = gt.labeled_mask();
    let x_all = extract_features(cube, band_subset, &labeled)?;
    let pred = svm_predict(&model, &x_all)?;
    let mut field = vec![0u8; gt.labels.len()];
    let mut k = 0;
    for (i, &m) in labeled.iter().enumerate() {
        if m {
            field[i] = pred[k];
            k += 1;
        }
    }
    Ok(field)
}

/// Coarse grid search with stratified k-fold cross-validation on the
/// training rows; returns the best (C, gamma) by mean fold accuracy, ties
/// resolved in grid order.
pub fn grid_search_params(
    x: &FeatureMatrix,
    y: &[u8],
    base: &SvmParams,
    c_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<SvmParams> {
    if folds < 2 {
        return Err(Error::Parameter(format!("folds must be >= 2, got {folds}")));
    }
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::Parameter("empty hyperparameter grid".into()));
    }
    // Stratified fold assignment, deterministic in the seed.
    use rand::seq::SliceRandom;
    let mut fold_of = vec![0usize; y.len()];
    let mut classes: Vec<u8> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    for &c in &classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
        members.shuffle(&mut rng);
        for (k, &i) in members.iter().enumerate() {
            fold_of[i] = k % folds;
        }
    }
    let mut best: Option<(f64, SvmParams)> = None;
    for &c in c_grid {
        for &gamma in gamma_grid {
            let candidate = SvmParams {
                c,
                gamma,
                ..*base
            };
            let mut correct = 0usize;
            let mut total = 0usize;
            for fold in 0..folds {
                let train_idx: Vec<usize> =
                    (0..y.len()).filter(|&i| fold_of[i] != fold).collect();
                let val_idx: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == fold).collect();
                if val_idx.is_empty() {
                    continue;
                }
                let gather = |idx: &[usize]| {
                    let mut v = Vec::with_capacity(idx.len() * x.cols);
                    for &i in idx {
                        v.extend_from_slice(x.row(i));
                    }
                    FeatureMatrix::new(idx.len(), x.cols, v)
                };
                let y_tr: Vec<u8> = train_idx.iter().map(|&i| y[i]).collect();
                let distinct = {
                    let mut d = y_tr.clone();
                    d.sort_unstable();
                    d.dedup();
                    d.len()
                };
                if distinct < 2 {
                    continue;
                }
                let model = svm_train(&gather(&train_idx), &y_tr, &candidate, seed)?;
                let pred = svm_predict(&model, &gather(&val_idx))?;
                for (p, &i) in pred.iter().zip(&val_idx) {
                    total += 1;
                    correct += (*p == y[i]) as usize;
                }
            }
            if total == 0 {
                continue;
            }
            let acc = correct as f64 / total as f64;
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, candidate));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Domain("grid search had no evaluable fold".into()))
}

// ---------------------------------------------------------------------------
// Flat text model format (versioned) for reproducibility audits
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &str = "hsiband-svm v1";

pub fn model_to_text(model: &SvmModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_MAGIC}");
    let _ = write!(s, "classes {}", model.classes.len());
    for &c in &model.classes {
        let _ = write!(s, " {c}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "features {}", model.n_features);
    let _ = write!(s, "bands");
    for &b in &model.band_subset {
        let _ = write!(s, " {b}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "levels {}", model.levels);
    let _ = writeln!(
        s,
        "params c {} gamma {} tolerance {} max_passes {}",
        model.params.c, model.params.gamma, model.params.tolerance, model.params.max_passes
    );
    let _ = writeln!(s, "machines {}", model.machines.len());
    for m in &model.machines {
        let _ = writeln!(
            s,
            "machine {} {} converged {} bias {} nsv {}",
            m.class_pos,
            m.class_neg,
            u8::from(m.converged),
            m.bias,
            m.n_sv()
        );
        let dim = model.n_features;
        for (i, &coef) in m.coefficients.iter().enumerate() {
            let _ = write!(s, "sv {coef}");
            for &v in &m.support_vectors[i * dim..(i + 1) * dim] {
                let _ = write!(s, " {v}");
            }
            let _ = writeln!(s);
        }
    }
    let _ = writeln!(s, "end");
    s
}

pub fn model_from_text(text: &str) -> Result<SvmModel> {
    let bad = |msg: &str| Error::Format(format!("model file: {msg}"));
    let mut lines = text.lines();
    if lines.next() != Some(MODEL_MAGIC) {
        return Err(bad("missing or unsupported version header"));
    }
    let mut next_fields = |prefix: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| bad(&format!("truncated before {prefix}")))?;
        let mut parts = line.split_whitespace().map(str::to_owned);
        if parts.next().as_deref() != Some(prefix) {
            return Err(bad(&format!("expected {prefix} line, got {line:?}")));
        }
        Ok(parts.collect())
    };
    let parse_u = |s: &str| -> Result<usize> { s.parse().map_err(|_| bad("bad integer")) };
    let parse_f = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad("bad float")) };

    let class_fields = next_fields("classes")?;
    let n_classes = parse_u(&class_fields[0])?;
    if class_fields.len() != n_classes + 1 {
        return Err(bad("class count mismatch"));
    }
    let classes: Vec<u8> = class_fields[1..]
        .iter()
        .map(|s| s.parse().map_err(|_| bad("bad class label")))
        .collect::<Result<_>>()?;
    let n_features = parse_u(&next_fields("features")?[0])?;
    let band_subset: Vec<usize> = next_fields("bands")?
        .iter()
        .map(|s| parse_u(s))
        .collect::<Result<_>>()?;
    let levels = parse_u(&next_fields("levels")?[0])?;
    let p = next_fields("params")?;
    if p.len() != 8 {
        return Err(bad("params line needs 8 fields"));
    }
    let params = SvmParams {
        c: parse_f(&p[1])?,
        gamma: parse_f(&p[3])?,
        tolerance: parse_f(&p[5])?,
        max_passes: parse_u(&p[7])?,
    };
    let n_machines = parse_u(&next_fields("machines")?[0])?;
    let mut machines = Vec::with_capacity(n_machines);
    for _ in 0..n_machines {
        let m = next_fields("machine")?;
        if m.len() != 8 {
            return Err(bad("machine line needs 8 fields"));
        }
        let class_pos: u8 = m[0].parse().map_err(|_| bad("bad class"))?;
        let class_neg: u8 = m[1].parse().map_err(|_| bad("bad class"))?;
        let converged = m[3] == "1";
        let bias = parse_f(&m[5])?;
        let n_sv = parse_u(&m[7])?;
        let mut support_vectors = Vec::with_capacity(n_sv * n_features);
        let mut coefficients = Vec::with_capacity(n_sv);
        for _ in 0..n_sv {
            let f = next_fields("sv")?;
            if f.len() != n_features + 1 {
                return Err(bad("sv row width mismatch"));
            }
            coefficients.push(parse_f(&f[0])?);
            for v in &f[1..] {
                support_vectors.push(parse_f(v)?);
            }
        }
        machines.push(PairMachine {
            class_pos,
            class_neg,
            support_vectors,
            coefficients,
            bias,
            converged,
        });
    }
    if lines.next() != Some("end") {
        return Err(bad("missing end marker"));
    }
    let converged = machines.iter().all(|m| m.converged);
    Ok(SvmModel {
        params,
        classes,
        n_features,
        band_subset,
        levels,
        machines,
        converged,
    })
}

pub fn save_model(model: &SvmModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SvmModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_text(&text)
}
