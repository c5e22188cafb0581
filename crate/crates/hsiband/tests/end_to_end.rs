//! Full-pipeline integration on synthetic scenes with known structure.

mod common;

use common::{four_class_scene, sixteen_class_scene};

use hsiband::classifier::{build_gt_est, SvmParams};
use hsiband::infotheory::{joint_histogram, mutual_information};
use hsiband::ingest::split_labeled;
use hsiband::pipeline::{
    evaluate_subset, replay_experiment, run_experiment, ExperimentSpec,
};
use hsiband::selection::{
    baseline_ig, baseline_mi_filter, rank_by_ig, read_trace, run_hybrid, write_trace, Method,
    SelectionConfig, TraceHeader,
};

fn small_cfg(seed: u64) -> SelectionConfig {
    SelectionConfig {
        threshold: 0.0,
        stage1_keep: 6,
        target_bands: 4,
        levels: 8,
        svm: SvmParams::default(),
        seed,
        fraction: 0.5,
    }
}

#[test]
fn hybrid_prefers_informative_bands() {
    let scene = four_class_scene(1);
    let cfg = SelectionConfig {
        stage1_keep: 4,
        ..small_cfg(3)
    };
    let result = run_hybrid(&scene.cube, &scene.gt, &cfg).unwrap();
    assert!(result.aborted.is_none());
    assert!(!result.retained.is_empty());
    // Bands 0 and 1 are the clean aspects; junk bands are 4 and 5.
    assert!(result.retained[0] < 4, "retained {:?}", result.retained);
    let mut seen = std::collections::HashSet::new();
    for &b in &result.retained {
        assert!(seen.insert(b), "duplicate band {b}");
    }
    // Retained stays inside the stage-1 cut.
    let ranked = rank_by_ig(&scene.cube, &scene.gt, &scene.gt.labeled_mask()).unwrap();
    let candidates: Vec<usize> = ranked[..4].iter().map(|s| s.band).collect();
    assert!(
        result.retained.iter().all(|b| candidates.contains(b)),
        "retained {:?} escaped stage-1 candidates {:?}",
        result.retained,
        candidates
    );
}

#[test]
fn gt_est_with_all_bands_beats_single_band() {
    let scene = four_class_scene(2);
    let gt = &scene.gt;
    let split = split_labeled(gt, 0.5, 9).unwrap();
    let labeled = gt.labeled_mask();
    let params = SvmParams::default();
    let all: Vec<usize> = (0..scene.cube.bands).collect();
    let est_all = build_gt_est(&scene.cube, &all, &split, gt, &params, 1).unwrap();
    let ranked = rank_by_ig(&scene.cube, gt, &labeled).unwrap();
    let est_one = build_gt_est(&scene.cube, &[ranked[0].band], &split, gt, &params, 1).unwrap();
    let mi = |est: &[u8]| {
        mutual_information(&joint_histogram(&gt.labels, est, &labeled).unwrap()).unwrap()
    };
    assert!(
        mi(&est_all) >= mi(&est_one),
        "all-band GT_est lost information: {} < {}",
        mi(&est_all),
        mi(&est_one)
    );
}

#[test]
fn more_bands_help_every_method() {
    let scene = four_class_scene(3);
    let gt = &scene.gt;
    let params = SvmParams::default();
    for method in [Method::Hybrid, Method::InfoGain, Method::MiFilter] {
        let mut acc_few = 0.0;
        let mut acc_many = 0.0;
        let mut reps = 0.0;
        for seed in 0..5u64 {
            let split = split_labeled(gt, 0.5, seed).unwrap();
            let sequence = match method {
                Method::Hybrid => {
                    let cfg = SelectionConfig {
                        threshold: -0.05,
                        seed,
                        ..small_cfg(seed)
                    };
                    run_hybrid(&scene.cube, gt, &cfg).unwrap().retained
                }
                Method::InfoGain => {
                    let ranked = rank_by_ig(&scene.cube, gt, &gt.labeled_mask()).unwrap();
                    ranked[..4].iter().map(|s| s.band).collect()
                }
                Method::MiFilter => baseline_mi_filter(&scene.cube, gt, -0.05, 4)
                    .unwrap()
                    .retained,
            };
            if sequence.len() < 2 {
                continue;
            }
            acc_few += evaluate_subset(&scene.cube, gt, &split, &sequence[..1], &params, seed)
                .unwrap()
                .overall_pct;
            acc_many += evaluate_subset(&scene.cube, gt, &split, &sequence, &params, seed)
                .unwrap()
                .overall_pct;
            reps += 1.0;
        }
        assert!(reps >= 3.0, "{method}: too few runs retained 2+ bands");
        assert!(
            acc_many / reps >= acc_few / reps,
            "{method}: 4 bands ({}) worse than 1 band ({})",
            acc_many / reps,
            acc_few / reps
        );
    }
}

#[test]
fn ig_baseline_reports_test_accuracy() {
    let scene = four_class_scene(4);
    let split = split_labeled(&scene.gt, 0.5, 5).unwrap();
    let (bands, acc) = baseline_ig(
        &scene.cube,
        &scene.gt,
        &split,
        2,
        &SvmParams::default(),
        5,
    )
    .unwrap();
    assert_eq!(bands.len(), 2);
    // Two clean aspect bands fully identify the 4 classes.
    assert!(acc > 80.0, "accuracy {acc}");
}

#[test]
fn replayed_trace_reproduces_fresh_experiment() {
    let scene = sixteen_class_scene(5);
    let cfg = SelectionConfig {
        threshold: -0.02,
        stage1_keep: 8,
        target_bands: 5,
        seed: 21,
        ..small_cfg(21)
    };
    let result = run_hybrid(&scene.cube, &scene.gt, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.csv");
    let header = TraceHeader {
        method: Method::Hybrid,
        config: cfg,
    };
    write_trace(&trace_path, &header, &result).unwrap();
    let parsed = read_trace(&trace_path).unwrap();
    let band_counts = vec![1, 2, 3];
    let (replayed, _) =
        replay_experiment(&[parsed], &band_counts, &scene.cube, &scene.gt, "h").unwrap();
    let spec = ExperimentSpec {
        method: Method::Hybrid,
        thresholds: vec![-0.02],
        band_counts,
        repeats: 1,
        base_seed: 21,
        config: cfg,
    };
    let (fresh, _) = run_experiment(&spec, &scene.cube, &scene.gt, "h").unwrap();
    assert_eq!(replayed.cells, fresh.cells);
}
