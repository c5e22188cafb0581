//! Experiment orchestration: sweep a method over a threshold grid, score
//! accuracy at band-count checkpoints, and render the results as CSV and
//! Markdown tables plus a JSON-lines run log.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::classifier::{extract_features, svm_predict, svm_train, SvmParams};
use crate::error::{Error, Result};
use crate::ingest::{split_labeled, GroundTruth, HyperCube, PixelSplit, RawCube};
use crate::selection::{
    baseline_mi_filter, fano_wrapper, mrmr_order, rank_by_ig, stage1_cut, Method, SelectionConfig,
    SelectionResult, TraceHeader,
};

/// Overall and mean per-class accuracy of one evaluation, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetAccuracy {
    pub overall_pct: f64,
    pub per_class_mean_pct: f64,
}

/// Accuracy of predictions against truth over the masked pixels.
pub fn accuracy_from_predictions(
    truth: &[u8],
    predicted: &[u8],
    mask: &[bool],
) -> Result<SubsetAccuracy> {
    if truth.len() != predicted.len() || truth.len() != mask.len() {
        return Err(Error::Domain("accuracy input lengths differ".into()));
    }
    let mut total = 0usize;
    let mut correct = 0usize;
    let mut class_total = [0usize; 256];
    let mut class_correct = [0usize; 256];
    for i in 0..truth.len() {
        if !mask[i] {
            continue;
        }
        total += 1;
        class_total[truth[i] as usize] += 1;
        if truth[i] == predicted[i] {
            correct += 1;
            class_correct[truth[i] as usize] += 1;
        }
    }
    if total == 0 {
        return Err(Error::Domain("accuracy over an empty mask".into()));
    }
    let mut class_accs = Vec::new();
    for c in 0..256 {
        if class_total[c] > 0 {
            class_accs.push(100.0 * class_correct[c] as f64 / class_total[c] as f64);
        }
    }
    Ok(SubsetAccuracy {
        overall_pct: 100.0 * correct as f64 / total as f64,
        per_class_mean_pct: class_accs.iter().sum::<f64>() / class_accs.len() as f64,
    })
}

/// Train on the split's train half over the given bands and score the test
/// half.
pub fn evaluate_subset(
    cube: &HyperCube,
    gt: &GroundTruth,
    split: &PixelSplit,
    bands: &[usize],
    svm: &SvmParams,
    seed: u64,
) -> Result<SubsetAccuracy> {
    if bands.is_empty() {
        return Err(Error::Parameter("band subset is empty".into()));
    }
    let x_train = extract_features(cube, bands, &split.train_mask)?;
    let y_train: Vec<u8> = gt
        .labels
        .iter()
        .zip(&split.train_mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .collect();
    let model = svm_train(&x_train, &y_train, svm, seed)?;
    let x_test = extract_features(cube, bands, &split.test_mask)?;
    let pred_rows = svm_predict(&model, &x_test)?;
    let mut predicted = vec![0u8; gt.labels.len()];
    let mut k = 0;
    for (i, &m) in split.test_mask.iter().enumerate() {
        if m {
            predicted[i] = pred_rows[k];
            k += 1;
        }
    }
    accuracy_from_predictions(&gt.labels, &predicted, &split.test_mask)
}

/// Experiment description: one selection method swept over thresholds and
/// scored at band-count checkpoints, averaged over repeated splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub method: Method,
    /// Threshold columns; ignored for the IG baseline (single column).
    pub thresholds: Vec<f64>,
    /// Ascending band-count checkpoints (table rows).
    pub band_counts: Vec<usize>,
    pub repeats: usize,
    pub base_seed: u64,
    pub config: SelectionConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Parameter("repeats must be >= 1".into()));
        }
        if self.band_counts.is_empty() {
            return Err(Error::Parameter("band_counts must be nonempty".into()));
        }
        if self.band_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(
                "band_counts must be strictly ascending".into(),
            ));
        }
        if self.method != Method::InfoGain && self.thresholds.is_empty() {
            return Err(Error::Parameter("thresholds must be nonempty".into()));
        }
        self.config.validate()
    }

    /// Column labels: one per threshold, or a single `ig` column.
    fn columns(&self) -> Vec<Option<f64>> {
        match self.method {
            Method::InfoGain => vec![None],
            _ => self.thresholds.iter().copied().map(Some).collect(),
        }
    }
}

/// Aggregated accuracy of one (threshold, band count) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub mean: f64,
    pub std_dev: f64,
    /// How many repeats reached this checkpoint.
    pub reached: usize,
}

/// One evaluated checkpoint, as logged to the JSON-lines run log.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunRecord {
    pub method: String,
    pub threshold: Option<f64>,
    pub repeat: usize,
    pub seed: u64,
    pub band_count: usize,
    pub retained_total: usize,
    pub overall_pct: f64,
    pub per_class_mean_pct: f64,
}

/// The filled table: `cells[row * columns + col]`, rows are band counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub columns: Vec<Option<f64>>,
    pub band_counts: Vec<usize>,
    pub cells: Vec<Option<CellStats>>,
    pub repeats: usize,
    pub base_seed: u64,
    pub levels: usize,
    pub fraction: f64,
    pub svm: SvmParams,
    pub dataset_hash: String,
    /// Largest retained count seen per column over the repeats.
    pub max_retained: Vec<usize>,
}

impl EvalReport {
    pub fn cell(&self, row: usize, col: usize) -> Option<&CellStats> {
        self.cells[row * self.columns.len() + col].as_ref()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Short provenance hash over the raw cube values and ground-truth labels.
pub fn dataset_hash(raw: &RawCube, gt: &GroundTruth) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for n in [raw.rows, raw.cols, raw.bands, gt.rows, gt.cols] {
        h.update((n as u64).to_le_bytes());
    }
    for &v in &raw.values {
        h.update(v.to_le_bytes());
    }
    h.update(&gt.labels);
    let digest = h.finalize();
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// Evaluate the prefix of one retained sequence at each checkpoint.
fn evaluate_prefixes(
    cube: &HyperCube,
    gt: &GroundTruth,
    split: &PixelSplit,
    sequence: &[usize],
    band_counts: &[usize],
    svm: &SvmParams,
    seed: u64,
) -> Result<Vec<Option<SubsetAccuracy>>> {
    band_counts
        .iter()
        .map(|&n| {
            if n == 0 || n > sequence.len() {
                Ok(None)
            } else {
                evaluate_subset(cube, gt, split, &sequence[..n], svm, seed).map(Some)
            }
        })
        .collect()
}

/// Run the experiment: per threshold column and repeat, one selection run
/// to m_max, then accuracy at every checkpoint from the retained prefix.
/// Deterministic in `base_seed`; repeat r uses split seed `base_seed + r`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    cube: &HyperCube,
    gt: &GroundTruth,
    dataset_hash: &str,
) -> Result<(EvalReport, Vec<RunRecord>)> {
    spec.validate()?;
    let columns = spec.columns();
    let mask = gt.labeled_mask();

    // Mask-based stages are split-independent; compute them once.
    let ordered_candidates = match spec.method {
        Method::Hybrid => {
            let ranked = rank_by_ig(cube, gt, &mask)?;
            let candidates = stage1_cut(&ranked, spec.config.stage1_keep)?;
            Some(mrmr_order(&candidates, cube, &mask, candidates.len())?)
        }
        Method::InfoGain => {
            let ranked = rank_by_ig(cube, gt, &mask)?;
            let want = spec
                .band_counts
                .last()
                .copied()
                .unwrap_or(0)
                .min(ranked.len());
            Some(ranked[..want].iter().map(|s| s.band).collect())
        }
        Method::MiFilter => None,
    };

    let mut records = Vec::new();
    let mut cells = vec![None; spec.band_counts.len() * columns.len()];
    let mut max_retained = vec![0usize; columns.len()];
    for (col, &threshold) in columns.iter().enumerate() {
        // Per-column accuracy samples per checkpoint row.
        let mut samples: Vec<Vec<f64>> = vec![Vec::new(); spec.band_counts.len()];
        let mut filter_result: Option<SelectionResult> = None;
        for rep in 0..spec.repeats {
            let seed = spec.base_seed.wrapping_add(rep as u64);
            let split = split_labeled(gt, spec.config.fraction, seed)?;
            let cfg = SelectionConfig {
                threshold: threshold.unwrap_or(0.0),
                seed,
                ..spec.config
            };
            let sequence: Vec<usize> = match spec.method {
                Method::Hybrid => {
                    let ordered = ordered_candidates.as_ref().expect("hybrid candidates");
                    let result = fano_wrapper(ordered, cube, gt, &split, &cfg)?;
                    if let Some(reason) = result.aborted {
                        return Err(Error::Domain(format!("selection aborted: {reason}")));
                    }
                    result.retained
                }
                Method::InfoGain => ordered_candidates.clone().expect("ig ranking"),
                Method::MiFilter => {
                    // The filter is split-independent; select once per column.
                    if filter_result.is_none() {
                        filter_result = Some(baseline_mi_filter(
                            cube,
                            gt,
                            cfg.threshold,
                            cfg.target_bands,
                        )?);
                    }
                    filter_result.as_ref().unwrap().retained.clone()
                }
            };
            max_retained[col] = max_retained[col].max(sequence.len());
            let accs = evaluate_prefixes(
                cube,
                gt,
                &split,
                &sequence,
                &spec.band_counts,
                &spec.config.svm,
                seed,
            )?;
            for (row, acc) in accs.iter().enumerate() {
                if let Some(a) = acc {
                    samples[row].push(a.overall_pct);
                    records.push(RunRecord {
                        method: spec.method.to_string(),
                        threshold,
                        repeat: rep,
                        seed,
                        band_count: spec.band_counts[row],
                        retained_total: sequence.len(),
                        overall_pct: a.overall_pct,
                        per_class_mean_pct: a.per_class_mean_pct,
                    });
                }
            }
        }
        for (row, s) in samples.iter().enumerate() {
            if !s.is_empty() {
                let (mean, std_dev) = mean_std(s);
                cells[row * columns.len() + col] = Some(CellStats {
                    mean,
                    std_dev,
                    reached: s.len(),
                });
            }
        }
    }
    Ok((
        EvalReport {
            method: spec.method,
            columns,
            band_counts: spec.band_counts.clone(),
            cells,
            repeats: spec.repeats,
            base_seed: spec.base_seed,
            levels: spec.config.levels,
            fraction: spec.config.fraction,
            svm: spec.config.svm,
            dataset_hash: dataset_hash.to_string(),
            max_retained,
        },
        records,
    ))
}

/// Re-evaluate the checkpoints of previously written selection traces; each
/// trace becomes one column, reusing its recorded seed and parameters.
pub fn replay_experiment(
    traces: &[(TraceHeader, SelectionResult)],
    band_counts: &[usize],
    cube: &HyperCube,
    gt: &GroundTruth,
    dataset_hash: &str,
) -> Result<(EvalReport, Vec<RunRecord>)> {
    if traces.is_empty() {
        return Err(Error::Parameter("no traces to replay".into()));
    }
    let method = traces[0].0.method;
    let first_cfg = traces[0].0.config;
    let mut columns = Vec::new();
    let mut cells = vec![None; band_counts.len() * traces.len()];
    let mut max_retained = vec![0usize; traces.len()];
    let mut records = Vec::new();
    for (col, (header, result)) in traces.iter().enumerate() {
        let cfg = header.config;
        columns.push(match header.method {
            Method::InfoGain => None,
            _ => Some(cfg.threshold),
        });
        let split = split_labeled(gt, cfg.fraction, cfg.seed)?;
        max_retained[col] = result.retained.len();
        let accs = evaluate_prefixes(
            cube,
            gt,
            &split,
            &result.retained,
            band_counts,
            &cfg.svm,
            cfg.seed,
        )?;
        for (row, acc) in accs.iter().enumerate() {
            if let Some(a) = acc {
                cells[row * traces.len() + col] = Some(CellStats {
                    mean: a.overall_pct,
                    std_dev: 0.0,
                    reached: 1,
                });
                records.push(RunRecord {
                    method: header.method.to_string(),
                    threshold: Some(cfg.threshold),
                    repeat: 0,
                    seed: cfg.seed,
                    band_count: band_counts[row],
                    retained_total: result.retained.len(),
                    overall_pct: a.overall_pct,
                    per_class_mean_pct: a.per_class_mean_pct,
                });
            }
        }
    }
    Ok((
        EvalReport {
            method,
            columns,
            band_counts: band_counts.to_vec(),
            cells,
            repeats: 1,
            base_seed: first_cfg.seed,
            levels: first_cfg.levels,
            fraction: first_cfg.fraction,
            svm: first_cfg.svm,
            dataset_hash: dataset_hash.to_string(),
            max_retained,
        },
        records,
    ))
}

/// Report rendering target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<ReportFormat> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(Error::Parameter(format!(
                "unknown report format {other:?} (expected csv or md)"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        })
    }
}

fn column_label(c: &Option<f64>) -> String {
    match c {
        Some(th) => th.to_string(),
        None => "ig".to_string(),
    }
}

/// Render the report; thresholds are columns and band counts are rows, with
/// stalled cells left blank. Output is byte-stable for identical reports.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut s = format!(
                "# hsiband table method={} levels={} repeats={} base_seed={} fraction={} svm_c={} svm_gamma={} dataset={}\n",
                report.method,
                report.levels,
                report.repeats,
                report.base_seed,
                report.fraction,
                report.svm.c,
                report.svm.gamma,
                report.dataset_hash
            );
            s.push_str("bands");
            for c in &report.columns {
                s.push(',');
                s.push_str(&column_label(c));
            }
            s.push('\n');
            for (row, &n) in report.band_counts.iter().enumerate() {
                s.push_str(&n.to_string());
                for col in 0..report.columns.len() {
                    s.push(',');
                    if let Some(cell) = report.cell(row, col) {
                        s.push_str(&format!("{:.2}", cell.mean));
                    }
                }
                s.push('\n');
            }
            s
        }
        ReportFormat::Markdown => {
            let mut s = String::from("# Classification accuracy (%) by retained band count\n\n");
            s.push_str(&format!(
                "method: {} — levels: {}, repeats: {}, base seed: {}, train fraction: {}, SVM C: {}, gamma: {}, dataset: {}\n\n",
                report.method,
                report.levels,
                report.repeats,
                report.base_seed,
                report.fraction,
                report.svm.c,
                report.svm.gamma,
                report.dataset_hash
            ));
            s.push_str("| bands |");
            for c in &report.columns {
                match c {
                    Some(th) => s.push_str(&format!(" Th={th} |")),
                    None => s.push_str(" ig |"),
                }
            }
            s.push('\n');
            s.push_str("|---:|");
            for _ in &report.columns {
                s.push_str("---:|");
            }
            s.push('\n');
            for (row, &n) in report.band_counts.iter().enumerate() {
                s.push_str(&format!("| {n} |"));
                for col in 0..report.columns.len() {
                    match report.cell(row, col) {
                        Some(cell) if report.repeats > 1 => s.push_str(&format!(
                            " {:.2} ± {:.2} |",
                            cell.mean, cell.std_dev
                        )),
                        Some(cell) => s.push_str(&format!(" {:.2} |", cell.mean)),
                        None => s.push_str("  |"),
                    }
                }
                s.push('\n');
            }
            s.push_str("\nmax bands retained per column: ");
            let joined: Vec<String> = report
                .columns
                .iter()
                .zip(&report.max_retained)
                .map(|(c, m)| format!("{}={}", column_label(c), m))
                .collect();
            s.push_str(&joined.join(", "));
            s.push('\n');
            s
        }
    }
}

/// Parse-and-render convenience used by the CLI `--format` flag.
pub fn emit_report_as(report: &EvalReport, format: &str) -> Result<String> {
    Ok(emit_report(report, format.parse()?))
}

pub fn write_records_jsonl(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(
            &serde_json::to_string(r)
                .map_err(|e| Error::Format(format!("run record serialization: {e}")))?,
        );
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_from_levels(rows: usize, cols: usize, planes: &[Vec<u16>], levels: usize) -> HyperCube {
        let mut data = Vec::new();
        for p in planes {
            data.extend_from_slice(p);
        }
        HyperCube {
            rows,
            cols,
            bands: planes.len(),
            levels,
            data,
        }
    }

    /// 8x8 scene, 4 classes in quadrants; two clean bands separate row and
    /// column halves, one noisy copy, one junk band.
    fn quadrant_scene() -> (HyperCube, GroundTruth) {
        let mut labels = Vec::new();
        let mut row_half = Vec::new();
        let mut col_half = Vec::new();
        let mut noisy = Vec::new();
        let mut junk = Vec::new();
        for r in 0..8u16 {
            for c in 0..8u16 {
                labels.push(1 + (r / 4) as u8 * 2 + (c / 4) as u8);
                row_half.push((r / 4) * 7);
                col_half.push((c / 4) * 7);
                noisy.push((r / 4) * 6 + (r + c) % 2);
                junk.push((r * 5 + c * 3) % 7);
            }
        }
        (
            cube_from_levels(8, 8, &[row_half, col_half, noisy, junk], 8),
            GroundTruth::new(8, 8, labels).unwrap(),
        )
    }

    #[test]
    fn accuracy_perfect_and_chance() {
        let truth: Vec<u8> = (0..32).map(|i| 1 + (i % 16) as u8).collect();
        let mask = vec![true; 32];
        let perfect = accuracy_from_predictions(&truth, &truth, &mask).unwrap();
        assert_eq!(perfect.overall_pct, 100.0);
        assert_eq!(perfect.per_class_mean_pct, 100.0);
        let constant = vec![1u8; 32];
        let chance = accuracy_from_predictions(&truth, &constant, &mask).unwrap();
        assert_eq!(chance.overall_pct, 6.25);
        assert_eq!(chance.per_class_mean_pct, 6.25);
    }

    #[test]
    fn evaluate_subset_learns_quadrants() {
        let (cube, gt) = quadrant_scene();
        let split = split_labeled(&gt, 0.5, 7).unwrap();
        let acc =
            evaluate_subset(&cube, &gt, &split, &[0, 1], &SvmParams::default(), 7).unwrap();
        assert!(acc.overall_pct > 90.0, "got {}", acc.overall_pct);
    }

    fn tiny_spec(method: Method) -> ExperimentSpec {
        ExperimentSpec {
            method,
            thresholds: vec![-0.02, 0.0],
            band_counts: vec![1, 2, 3],
            repeats: 2,
            base_seed: 11,
            config: SelectionConfig {
                stage1_keep: 4,
                target_bands: 3,
                levels: 8,
                ..Default::default()
            },
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let (cube, gt) = quadrant_scene();
        for method in [Method::Hybrid, Method::InfoGain, Method::MiFilter] {
            let spec = tiny_spec(method);
            let (r1, rec1) = run_experiment(&spec, &cube, &gt, "x").unwrap();
            let (r2, rec2) = run_experiment(&spec, &cube, &gt, "x").unwrap();
            assert_eq!(r1, r2);
            assert_eq!(rec1, rec2);
            assert_eq!(
                emit_report(&r1, ReportFormat::Csv),
                emit_report(&r2, ReportFormat::Csv)
            );
        }
    }

    #[test]
    fn unreachable_checkpoints_stay_blank() {
        let (cube, gt) = quadrant_scene();
        let mut spec = tiny_spec(Method::Hybrid);
        // An absurdly strict threshold rejects every candidate after the
        // first band, so checkpoints past 1 band stall.
        spec.thresholds = vec![10.0];
        let (report, _) = run_experiment(&spec, &cube, &gt, "x").unwrap();
        assert!(report.cell(0, 0).is_some());
        assert!(report.cell(1, 0).is_none());
        assert!(report.cell(2, 0).is_none());
        let csv = emit_report(&report, ReportFormat::Csv);
        assert!(csv.lines().nth(3).unwrap().ends_with(','));
    }

    #[test]
    fn one_by_one_report_is_three_csv_lines() {
        let report = EvalReport {
            method: Method::Hybrid,
            columns: vec![Some(-0.0035)],
            band_counts: vec![50],
            cells: vec![Some(CellStats {
                mean: 84.28,
                std_dev: 0.5,
                reached: 5,
            })],
            repeats: 5,
            base_seed: 42,
            levels: 256,
            fraction: 0.5,
            svm: SvmParams::default(),
            dataset_hash: "abc".into(),
            max_retained: vec![53],
        };
        let csv = emit_report(&report, ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with('#'));
        assert_eq!(lines[1], "bands,-0.0035");
        assert_eq!(lines[2], "50,84.28");
        let md = emit_report(&report, ReportFormat::Markdown);
        assert!(md.contains("| 50 | 84.28 ± 0.50 |"));
    }

    #[test]
    fn unknown_format_is_rejected() {
        assert!("xml".parse::<ReportFormat>().is_err());
        assert!("csv".parse::<ReportFormat>().is_ok());
        assert!("markdown".parse::<ReportFormat>().is_ok());
    }

    #[test]
    fn spec_validation_catches_bad_inputs() {
        let (_, _) = quadrant_scene();
        let mut spec = tiny_spec(Method::Hybrid);
        spec.repeats = 0;
        assert!(spec.validate().is_err());
        let mut spec = tiny_spec(Method::Hybrid);
        spec.band_counts = vec![3, 2];
        assert!(spec.validate().is_err());
        let mut spec = tiny_spec(Method::MiFilter);
        spec.thresholds.clear();
        assert!(spec.validate().is_err());
    }
}
