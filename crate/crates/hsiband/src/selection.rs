//! Band selection: information-gain ranking, mRMR forward ordering, the
//! Fano error-bound wrapper, and the two baseline filters used for
//! comparison.
//!
//! The hybrid pipeline runs three stages. Stage 1 ranks bands by mutual
//! information with the ground truth and keeps the top K. Stage 2 orders the
//! survivors greedily by relevance minus mean redundancy. Stage 3 walks that
//! order, rebuilding an SVM-estimated ground truth per candidate and keeping
//! a band only when the Fano error bound improves past the threshold.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::classifier::{build_gt_est, SvmParams};
use crate::error::{Error, Result};
use crate::infotheory::{
    conditional_entropy, entropy, fano_bounds, joint_histogram, mutual_information, Histogram,
};
use crate::ingest::{split_labeled, GroundTruth, HyperCube, PixelSplit};

/// Relevance of one band: its mutual information with the class map, in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandScore {
    pub band: usize,
    pub score: f64,
}

/// Selection method tag carried by results and traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Hybrid,
    InfoGain,
    MiFilter,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Hybrid => "hybrid",
            Method::InfoGain => "ig",
            Method::MiFilter => "mi-filter",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "hybrid" => Ok(Method::Hybrid),
            "ig" => Ok(Method::InfoGain),
            "mi-filter" => Ok(Method::MiFilter),
            other => Err(Error::Parameter(format!(
                "unknown method {other:?} (expected hybrid, ig, or mi-filter)"
            ))),
        }
    }
}

/// Knobs of the hybrid selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    /// Signed acceptance offset Th; a candidate is kept when
    /// `pe_new < pe_retained - th`, so negative values tolerate regressions.
    pub threshold: f64,
    /// Stage-1 cut K: how many top-ranked bands survive to mRMR.
    pub stage1_keep: usize,
    /// Wrapper stop size m_max.
    pub target_bands: usize,
    /// Quantization level count L.
    pub levels: usize,
    pub svm: SvmParams,
    pub seed: u64,
    /// Train proportion of the labeled pixels.
    pub fraction: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            threshold: 0.0,
            stage1_keep: 100,
            target_bands: 80,
            levels: 256,
            svm: SvmParams::default(),
            seed: 42,
            fraction: 0.5,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::Parameter("threshold must be finite".into()));
        }
        if self.stage1_keep == 0 || self.target_bands == 0 {
            return Err(Error::Parameter(
                "stage1_keep and target_bands must be >= 1".into(),
            ));
        }
        if self.target_bands > self.stage1_keep {
            return Err(Error::Parameter(format!(
                "target_bands {} exceeds stage1_keep {}",
                self.target_bands, self.stage1_keep
            )));
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Parameter(format!(
                "fraction must be in (0, 1), got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// One examined candidate in a selection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub band: usize,
    /// I(C; GT_est) of the subset including this candidate, in bits.
    pub mi: f64,
    /// Fano lower-bound error score of that subset.
    pub pe: f64,
    pub accepted: bool,
}

/// Ordered retained bands plus the per-candidate examination trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub retained: Vec<usize>,
    pub trace: Vec<TraceStep>,
    pub method: Method,
    /// Set when the run stopped early on a classifier failure; the trace up
    /// to that point is preserved.
    pub aborted: Option<String>,
}

fn band_class_mi(cube: &HyperCube, gt: &GroundTruth, mask: &[bool], band: usize) -> Result<f64> {
    let j = joint_histogram(cube.band(band), &gt.labels, mask)?;
    mutual_information(&j)
}

fn band_band_mi(cube: &HyperCube, mask: &[bool], a: usize, b: usize) -> Result<f64> {
    let j = joint_histogram(cube.band(a), cube.band(b), mask)?;
    mutual_information(&j)
}

/// Score every band by I(band; C) over the masked pixels and sort
/// descending, ties broken by the lower band index.
pub fn rank_by_ig(cube: &HyperCube, gt: &GroundTruth, mask: &[bool]) -> Result<Vec<BandScore>> {
    let scores: Vec<f64> = (0..cube.bands)
        .into_par_iter()
        .map(|b| band_class_mi(cube, gt, mask, b))
        .collect::<Result<_>>()?;
    let mut ranked: Vec<BandScore> = scores
        .into_iter()
        .enumerate()
        .map(|(band, score)| BandScore { band, score })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.band.cmp(&b.band)));
    Ok(ranked)
}

/// Keep the top K of an already-ranked list, preserving order.
pub fn stage1_cut(ranked: &[BandScore], k: usize) -> Result<Vec<BandScore>> {
    if k == 0 {
        return Err(Error::Parameter("stage-1 cut needs K >= 1".into()));
    }
    if k > ranked.len() {
        log::warn!(
            "stage-1 cut K={k} exceeds the {} ranked bands; keeping all",
            ranked.len()
        );
        return Ok(ranked.to_vec());
    }
    Ok(ranked[..k].to_vec())
}

/// Greedy minimum-redundancy maximum-relevance ordering of the candidates.
///
/// The first pick maximizes relevance alone; every later pick maximizes
/// `I(g; C) - mean_{s in S} I(s; g)` for the current selected set S. Ties
/// break to the lower band index.
pub fn mrmr_order(
    candidates: &[BandScore],
    cube: &HyperCube,
    mask: &[bool],
    m: usize,
) -> Result<Vec<usize>> {
    if m > candidates.len() {
        return Err(Error::Parameter(format!(
            "requested {m} bands from {} candidates",
            candidates.len()
        )));
    }
    let mut remaining: Vec<BandScore> = candidates.to_vec();
    let mut accumulated_redundancy = vec![0.0f64; remaining.len()];
    let mut selected = Vec::with_capacity(m);
    while selected.len() < m {
        let divisor = selected.len() as f64;
        let mut best: Option<(usize, f64)> = None; // (position in remaining, score)
        for (pos, cand) in remaining.iter().enumerate() {
            let score = if selected.is_empty() {
                cand.score
            } else {
                cand.score - accumulated_redundancy[pos] / divisor
            };
            let better = match best {
                None => true,
                Some((bpos, bscore)) => {
                    score > bscore || (score == bscore && cand.band < remaining[bpos].band)
                }
            };
            if better {
                best = Some((pos, score));
            }
        }
        let (pos, _) = best.expect("remaining is nonempty while selected < m <= candidates");
        let picked = remaining.remove(pos).band;
        accumulated_redundancy.remove(pos);
        selected.push(picked);
        if selected.len() == m {
            break;
        }
        let extra: Vec<f64> = remaining
            .par_iter()
            .map(|cand| band_band_mi(cube, mask, picked, cand.band))
            .collect::<Result<_>>()?;
        for (acc, e) in accumulated_redundancy.iter_mut().zip(extra) {
            *acc += e;
        }
    }
    Ok(selected)
}

/// Acceptance rule of the wrapper stage: strictly better than the retained
/// error score shifted by the threshold.
pub fn wrapper_accepts(pe_new: f64, pe_retained: f64, th: f64) -> bool {
    pe_new < pe_retained - th
}

/// Core wrapper loop over a fixed candidate order, generic in the subset
/// evaluator so the acceptance rule can be exercised with scripted scores.
fn wrapper_run<F>(
    ordered: &[usize],
    m_max: usize,
    th: f64,
    method: Method,
    mut eval: F,
) -> Result<SelectionResult>
where
    F: FnMut(&[usize]) -> Result<(f64, f64)>,
{
    let first = *ordered
        .first()
        .ok_or_else(|| Error::Parameter("wrapper needs a nonempty candidate order".into()))?;
    let mut retained = vec![first];
    let mut trace = Vec::new();
    let (mi0, pe0) = match eval(&retained) {
        Ok(v) => v,
        Err(e) => {
            return Ok(SelectionResult {
                retained: Vec::new(),
                trace,
                method,
                aborted: Some(e.to_string()),
            })
        }
    };
    trace.push(TraceStep {
        step: 0,
        band: first,
        mi: mi0,
        pe: pe0,
        accepted: true,
    });
    let mut pe_retained = pe0;
    let mut aborted = None;
    for (k, &candidate) in ordered[1..].iter().enumerate() {
        if retained.len() >= m_max {
            break;
        }
        let mut with_candidate = retained.clone();
        with_candidate.push(candidate);
        let (mi_new, pe_new) = match eval(&with_candidate) {
            Ok(v) => v,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        };
        let accepted = wrapper_accepts(pe_new, pe_retained, th);
        trace.push(TraceStep {
            step: k + 1,
            band: candidate,
            mi: mi_new,
            pe: pe_new,
            accepted,
        });
        if accepted {
            retained = with_candidate;
            pe_retained = pe_new;
        }
    }
    Ok(SelectionResult {
        retained,
        trace,
        method,
        aborted,
    })
}

/// Stage 3: walk the ordered candidates, rebuilding the SVM-estimated
/// ground truth per subset and keeping a band when the Fano error score
/// drops below `pe_retained - th`.
pub fn fano_wrapper(
    ordered: &[usize],
    cube: &HyperCube,
    gt: &GroundTruth,
    split: &PixelSplit,
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let nc = gt.num_classes;
    if nc < 2 {
        return Err(Error::Domain(format!(
            "wrapper needs at least 2 classes, got {nc}"
        )));
    }
    let labeled = gt.labeled_mask();
    let hc = entropy(&Histogram::from_sequence(&gt.labels, &labeled)?)?;
    let eval = |subset: &[usize]| -> Result<(f64, f64)> {
        let field = build_gt_est(cube, subset, split, gt, &cfg.svm, cfg.seed)?;
        let j = joint_histogram(&gt.labels, &field, &labeled)?;
        let mi = mutual_information(&j)?;
        let pe = fano_bounds(conditional_entropy(hc, mi), nc)?.lower;
        Ok((mi, pe))
    };
    wrapper_run(ordered, cfg.target_bands, cfg.threshold, Method::Hybrid, eval)
}

/// The full three-stage hybrid: IG ranking, stage-1 cut, mRMR ordering of
/// every survivor, then the Fano wrapper.
pub fn run_hybrid(
    cube: &HyperCube,
    gt: &GroundTruth,
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let mask = gt.labeled_mask();
    let split = split_labeled(gt, cfg.fraction, cfg.seed)?;
    let ranked = rank_by_ig(cube, gt, &mask)?;
    let candidates = stage1_cut(&ranked, cfg.stage1_keep)?;
    let ordered = mrmr_order(&candidates, cube, &mask, candidates.len())?;
    fano_wrapper(&ordered, cube, gt, &split, cfg)
}

/// Pure information-gain baseline: the top n ranked bands and their SVM
/// accuracy on the test half.
pub fn baseline_ig(
    cube: &HyperCube,
    gt: &GroundTruth,
    split: &PixelSplit,
    n: usize,
    svm: &SvmParams,
    seed: u64,
) -> Result<(Vec<usize>, f64)> {
    if n == 0 || n > cube.bands {
        return Err(Error::Parameter(format!(
            "band count {n} out of range [1, {}]",
            cube.bands
        )));
    }
    let ranked = rank_by_ig(cube, gt, &gt.labeled_mask())?;
    let bands: Vec<usize> = ranked[..n].iter().map(|s| s.band).collect();
    let acc = crate::pipeline::evaluate_subset(cube, gt, split, &bands, svm, seed)?;
    Ok((bands, acc.overall_pct))
}

/// Map a real-valued plane to `levels` integer levels with the same affine
/// floor rule the cube quantizer uses.
fn requantize_plane(values: &[f64], levels: usize) -> Vec<u16> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return vec![0; values.len()];
    }
    let scale = levels as f64 / (max - min + 1.0);
    let top = (levels - 1) as f64;
    values
        .iter()
        .map(|&v| ((v - min) * scale).floor().clamp(0.0, top) as u16)
        .collect()
}

/// Reproduced mutual-information filter with redundancy threshold.
///
/// The estimated ground truth here is not a classifier output but the
/// pixel-wise mean of the selected bands re-quantized to L levels; a
/// candidate is kept when it raises I(C; GT_est) by more than `th`.
pub fn baseline_mi_filter(
    cube: &HyperCube,
    gt: &GroundTruth,
    th: f64,
    m_max: usize,
) -> Result<SelectionResult> {
    if !th.is_finite() {
        return Err(Error::Parameter("threshold must be finite".into()));
    }
    if m_max == 0 {
        return Err(Error::Parameter("m_max must be >= 1".into()));
    }
    let labeled = gt.labeled_mask();
    let nc = gt.num_classes;
    if nc < 2 {
        return Err(Error::Domain(format!(
            "filter needs at least 2 classes, got {nc}"
        )));
    }
    let hc = entropy(&Histogram::from_sequence(&gt.labels, &labeled)?)?;
    let ranked = rank_by_ig(cube, gt, &labeled)?;
    let n_pixels = cube.pixels();
    let mut sum = vec![0.0f64; n_pixels];
    let mut retained = Vec::new();
    let mut trace = Vec::new();
    let mut current_mi = 0.0f64;
    for (step, cand) in ranked.iter().enumerate() {
        if retained.len() >= m_max {
            break;
        }
        let plane = cube.band(cand.band);
        let mean_with: Vec<f64> = sum
            .iter()
            .zip(plane)
            .map(|(&s, &v)| (s + v as f64) / (retained.len() + 1) as f64)
            .collect();
        let est = requantize_plane(&mean_with, cube.levels);
        let j = joint_histogram(&gt.labels, &est, &labeled)?;
        let mi_new = mutual_information(&j)?;
        let pe_new = fano_bounds(conditional_entropy(hc, mi_new), nc)?.lower;
        let accepted = mi_new > current_mi + th;
        trace.push(TraceStep {
            step,
            band: cand.band,
            mi: mi_new,
            pe: pe_new,
            accepted,
        });
        if accepted {
            for (s, &v) in sum.iter_mut().zip(plane) {
                *s += v as f64;
            }
            retained.push(cand.band);
            current_mi = mi_new;
        }
    }
    Ok(SelectionResult {
        retained,
        trace,
        method: Method::MiFilter,
        aborted: None,
    })
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

const TRACE_MAGIC: &str = "# hsiband-trace v1";

/// Run parameters pinned in a trace file so a table can be replayed from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceHeader {
    pub method: Method,
    pub config: SelectionConfig,
}

/// Line-oriented trace: commented key=value header, then one
/// `step,band,mi,pe,accepted` row per examined candidate.
pub fn write_trace(path: &Path, header: &TraceHeader, result: &SelectionResult) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let c = &header.config;
    let mut text = String::new();
    text.push_str(TRACE_MAGIC);
    text.push('\n');
    for (k, v) in [
        ("method", header.method.to_string()),
        ("th", c.threshold.to_string()),
        ("levels", c.levels.to_string()),
        ("stage1_keep", c.stage1_keep.to_string()),
        ("max_bands", c.target_bands.to_string()),
        ("seed", c.seed.to_string()),
        ("fraction", c.fraction.to_string()),
        ("svm_c", c.svm.c.to_string()),
        ("svm_gamma", c.svm.gamma.to_string()),
        ("svm_tolerance", c.svm.tolerance.to_string()),
        ("svm_max_passes", c.svm.max_passes.to_string()),
    ] {
        text.push_str(&format!("# {k}={v}\n"));
    }
    if let Some(reason) = &result.aborted {
        text.push_str(&format!("# aborted={}\n", reason.replace('\n', " ")));
    }
    text.push_str("step,band,mi,pe,accepted\n");
    for t in &result.trace {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            t.step,
            t.band,
            t.mi,
            t.pe,
            u8::from(t.accepted)
        ));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<(TraceHeader, SelectionResult)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .unwrap_or_default();
    if first != TRACE_MAGIC {
        return Err(Error::Format(format!(
            "not a trace file (bad magic {first:?})"
        )));
    }
    let mut kv = std::collections::HashMap::new();
    let mut aborted = None;
    let mut saw_columns = false;
    let mut trace = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once('=') {
                if k == "aborted" {
                    aborted = Some(v.to_string());
                } else {
                    kv.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        if line == "step,band,mi,pe,accepted" {
            saw_columns = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!("bad trace row: {line:?}")));
        }
        let parse_err = |what: &str| Error::Format(format!("bad {what} in trace row {line:?}"));
        trace.push(TraceStep {
            step: fields[0].parse().map_err(|_| parse_err("step"))?,
            band: fields[1].parse().map_err(|_| parse_err("band"))?,
            mi: fields[2].parse().map_err(|_| parse_err("mi"))?,
            pe: fields[3].parse().map_err(|_| parse_err("pe"))?,
            accepted: fields[4] == "1",
        });
    }
    if !saw_columns {
        return Err(Error::Format("trace file missing column header".into()));
    }
    let get = |k: &str| -> Result<&String> {
        kv.get(k)
            .ok_or_else(|| Error::Format(format!("trace header missing {k}")))
    };
    let parse = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Format(format!("bad trace header value for {k}")))
    };
    let parse_u = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Format(format!("bad trace header value for {k}")))
    };
    let header = TraceHeader {
        method: get("method")?.parse()?,
        config: SelectionConfig {
            threshold: parse("th")?,
            stage1_keep: parse_u("stage1_keep")?,
            target_bands: parse_u("max_bands")?,
            levels: parse_u("levels")?,
            svm: SvmParams {
                c: parse("svm_c")?,
                gamma: parse("svm_gamma")?,
                tolerance: parse("svm_tolerance")?,
                max_passes: parse_u("svm_max_passes")?,
            },
            seed: parse_u("seed")? as u64,
            fraction: parse("fraction")?,
        },
    };
    let retained: Vec<usize> = trace
        .iter()
        .filter(|t| t.accepted)
        .map(|t| t.band)
        .collect();
    Ok((
        header,
        SelectionResult {
            retained,
            trace,
            method: header.method,
            aborted,
        },
    ))
}

/// Write the retained bands, one index per line.
pub fn write_retained(path: &Path, retained: &[usize]) -> Result<()> {
    let mut text = String::new();
    for &b in retained {
        text.push_str(&format!("{b}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Scripted evaluator for replaying wrapper decisions from known scores.
pub fn replay_wrapper(
    ordered: &[usize],
    scores: &[(f64, f64)],
    m_max: usize,
    th: f64,
) -> Result<SelectionResult> {
    let mut queue: VecDeque<(f64, f64)> = scores.iter().copied().collect();
    wrapper_run(ordered, m_max, th, Method::Hybrid, move |_| {
        queue
            .pop_front()
            .ok_or_else(|| Error::Domain("replay ran out of scripted scores".into()))
    })
}
