//! Command-line front end: rank, select, table, and evaluate subcommands
//! over a raw BSQ cube and its ground-truth map.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{ArgAction, Args, Parser, Subcommand};

use hsiband::classifier::{
    extract_features, grid_search_params, save_model, svm_train, SvmParams,
};
use hsiband::infotheory::{conditional_entropy, entropy, fano_bounds, Histogram};
use hsiband::ingest::{
    load_cube, load_ground_truth, quantize, split_labeled, CubeDims, GroundTruth, HyperCube,
};
use hsiband::pipeline::{
    dataset_hash, emit_report, evaluate_subset, replay_experiment, run_experiment, EvalReport,
    ExperimentSpec, ReportFormat, RunRecord, write_records_jsonl,
};
use hsiband::selection::{
    baseline_mi_filter, rank_by_ig, read_trace, run_hybrid, write_retained, write_trace, Method,
    SelectionConfig, SelectionResult, TraceHeader, TraceStep,
};

#[derive(Parser)]
#[command(
    name = "hsiband",
    version,
    about = "Hyperspectral band selection and classification accuracy tables"
)]
struct Cli {
    /// Key=value defaults merged under the CLI flags (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Increase verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank every band by mutual information with the ground truth.
    Rank(RankArgs),
    /// Run a selection method; write retained bands and the decision trace.
    Select(SelectArgs),
    /// Sweep thresholds into an accuracy-by-band-count table.
    Table(TableArgs),
    /// Train and score one explicit band subset.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Raw band-sequential int16 cube file.
    #[arg(long)]
    cube: Option<PathBuf>,

    /// Dimensions descriptor [default: <cube>.dims].
    #[arg(long)]
    dims: Option<PathBuf>,

    /// Ground-truth map, CSV grid or binary 8-bit PGM.
    #[arg(long)]
    gt: Option<PathBuf>,

    /// Quantization level count [default: 256].
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Args, Clone)]
struct SvmArgs {
    /// SVM penalty C [default: 100].
    #[arg(long)]
    svm_c: Option<f64>,

    /// RBF width gamma on [0,1]-scaled features [default: 0.5].
    #[arg(long)]
    svm_gamma: Option<f64>,

    /// KKT tolerance [default: 0.001].
    #[arg(long)]
    svm_tolerance: Option<f64>,

    /// SMO sweep cap per class pair [default: 1000].
    #[arg(long)]
    svm_max_passes: Option<usize>,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    svm: SvmArgs,

    /// Selection method: hybrid, ig, or mi-filter [default: hybrid].
    #[arg(long)]
    method: Option<Method>,

    /// Acceptance threshold Th [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    th: Option<f64>,

    /// Stage-1 cut size K [default: 100].
    #[arg(long)]
    stage1_keep: Option<usize>,

    /// Retained band cap m_max [default: 80].
    #[arg(long)]
    max_bands: Option<usize>,

    /// Split RNG seed [default: 42].
    #[arg(long)]
    seed: Option<u64>,

    /// Train fraction of labeled pixels [default: 0.5].
    #[arg(long)]
    fraction: Option<f64>,

    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    svm: SvmArgs,

    /// Selection method: hybrid, ig, or mi-filter [default: hybrid].
    #[arg(long)]
    method: Option<Method>,

    /// Comma-separated threshold columns [default: -0.02,-0.005,-0.0035,0].
    #[arg(long, allow_hyphen_values = true)]
    thresholds: Option<String>,

    /// Comma-separated band-count checkpoints (table rows)
    /// [default: 2,3,4,12,14,18,20,25,35,36,40,45,50,53,60,70,75,80].
    #[arg(long)]
    band_counts: Option<String>,

    /// Split repeats averaged per cell [default: 5].
    #[arg(long)]
    repeats: Option<usize>,

    /// Base RNG seed; repeat r splits with base_seed + r [default: 42].
    #[arg(long)]
    base_seed: Option<u64>,

    /// Stage-1 cut size K [default: 100].
    #[arg(long)]
    stage1_keep: Option<usize>,

    /// Retained band cap m_max [default: 80].
    #[arg(long)]
    max_bands: Option<usize>,

    /// Train fraction of labeled pixels [default: 0.5].
    #[arg(long)]
    fraction: Option<f64>,

    /// Replay previously written trace files (one column each) instead of
    /// selecting afresh; repeatable.
    #[arg(long)]
    from_trace: Vec<PathBuf>,

    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    svm: SvmArgs,

    /// Comma-separated band indices to train on.
    #[arg(long)]
    bands: Option<String>,

    /// Split RNG seed [default: 42].
    #[arg(long)]
    seed: Option<u64>,

    /// Train fraction of labeled pixels [default: 0.5].
    #[arg(long)]
    fraction: Option<f64>,

    /// Pick C and gamma by 5-fold cross-validation on the training half
    /// over C in {1,10,100,1000}, gamma in {0.1,0.5,1,2}.
    #[arg(long)]
    grid_search: bool,

    /// Write the train/test mask grid as CSV for audit.
    #[arg(long)]
    export_split: Option<PathBuf>,

    /// Save the trained model in the flat text format.
    #[arg(long)]
    save_model: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Run(hsiband::Error),
}

impl From<hsiband::Error> for CliError {
    fn from(e: hsiband::Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Key=value defaults from --config; keys use the long flag spelling.
struct ConfigMap(HashMap<String, String>);

impl ConfigMap {
    fn load(path: Option<&Path>) -> CliResult<ConfigMap> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Run(hsiband::Error::io(path, e)))?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("config line without '=': {line:?}"))
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(ConfigMap(map))
    }

    fn parse<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config {key}={v:?}: {e}"))),
        }
    }

    fn resolve<T: FromStr>(&self, cli: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        Ok(match cli {
            Some(v) => v,
            None => self.parse(key)?.unwrap_or(default),
        })
    }

    fn resolve_opt<T: FromStr>(&self, cli: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        Ok(match cli {
            Some(v) => Some(v),
            None => self.parse(key)?,
        })
    }

    fn resolve_required<T: FromStr>(&self, cli: Option<T>, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.resolve_opt(cli, key)?
            .ok_or_else(|| CliError::Usage(format!("missing required flag --{key}")))
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|e| CliError::Usage(format!("bad {what} entry {t:?}: {e}")))
        })
        .collect()
}

struct Dataset {
    cube: HyperCube,
    gt: GroundTruth,
    hash: String,
}

fn load_dataset(data: &DataArgs, cfg: &ConfigMap) -> CliResult<Dataset> {
    let cube_path: PathBuf = cfg.resolve_required(data.cube.clone(), "cube")?;
    let gt_path: PathBuf = cfg.resolve_required(data.gt.clone(), "gt")?;
    let levels = cfg.resolve(data.levels, "levels", 256)?;
    let dims_path = match cfg.resolve_opt(data.dims.clone(), "dims")? {
        Some(p) => p,
        None => {
            let mut s = cube_path.clone().into_os_string();
            s.push(".dims");
            PathBuf::from(s)
        }
    };
    let dims = CubeDims::from_file(&dims_path)?;
    let raw = load_cube(&cube_path, dims)?;
    let gt = load_ground_truth(&gt_path)?;
    if gt.rows != raw.rows || gt.cols != raw.cols {
        return Err(CliError::Run(hsiband::Error::Dimension(format!(
            "ground truth is {}x{} but cube is {}x{}",
            gt.rows, gt.cols, raw.rows, raw.cols
        ))));
    }
    let hash = dataset_hash(&raw, &gt);
    let cube = quantize(&raw, levels)?;
    log::info!(
        "loaded {}x{}x{} cube (L={}), {} labeled pixels in {} classes, dataset {}",
        raw.rows,
        raw.cols,
        raw.bands,
        levels,
        gt.labeled_count(),
        gt.num_classes,
        hash
    );
    Ok(Dataset { cube, gt, hash })
}

fn resolve_svm(svm: &SvmArgs, cfg: &ConfigMap) -> CliResult<SvmParams> {
    let d = SvmParams::default();
    Ok(SvmParams {
        c: cfg.resolve(svm.svm_c, "svm-c", d.c)?,
        gamma: cfg.resolve(svm.svm_gamma, "svm-gamma", d.gamma)?,
        tolerance: cfg.resolve(svm.svm_tolerance, "svm-tolerance", d.tolerance)?,
        max_passes: cfg.resolve(svm.svm_max_passes, "svm-max-passes", d.max_passes)?,
    })
}

fn out_dir(cli: Option<PathBuf>, cfg: &ConfigMap) -> CliResult<PathBuf> {
    let dir: PathBuf = cfg.resolve(cli, "out", PathBuf::from("out"))?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Run(hsiband::Error::io(&dir, e)))?;
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = ConfigMap::load(cli.config.as_deref())?;
    match cli.command {
        Command::Rank(args) => cmd_rank(args, &cfg),
        Command::Select(args) => cmd_select(args, &cfg),
        Command::Table(args) => cmd_table(args, &cfg),
        Command::Evaluate(args) => cmd_evaluate(args, &cfg),
    }
}

fn cmd_rank(args: RankArgs, cfg: &ConfigMap) -> CliResult<()> {
    let out = out_dir(args.out.clone(), cfg)?;
    let data = load_dataset(&args.data, cfg)?;
    let ranked = rank_by_ig(&data.cube, &data.gt, &data.gt.labeled_mask())?;
    let mut text = String::new();
    for s in &ranked {
        text.push_str(&format!("{},{:.6}\n", s.band, s.score));
    }
    let path = out.join("rank.csv");
    std::fs::write(&path, text).map_err(|e| CliError::Run(hsiband::Error::io(&path, e)))?;
    println!("wrote {} band scores to {}", ranked.len(), path.display());
    Ok(())
}

fn selection_config(
    args: &SelectArgs,
    cfg: &ConfigMap,
    svm: SvmParams,
    levels: usize,
) -> CliResult<SelectionConfig> {
    let d = SelectionConfig::default();
    Ok(SelectionConfig {
        threshold: cfg.resolve(args.th, "th", d.threshold)?,
        stage1_keep: cfg.resolve(args.stage1_keep, "stage1-keep", d.stage1_keep)?,
        target_bands: cfg.resolve(args.max_bands, "max-bands", d.target_bands)?,
        levels,
        svm,
        seed: cfg.resolve(args.seed, "seed", d.seed)?,
        fraction: cfg.resolve(args.fraction, "fraction", d.fraction)?,
    })
}

/// Pure-IG selection shaped like the other methods' results so it shares
/// the trace format.
fn ig_selection(
    cube: &HyperCube,
    gt: &GroundTruth,
    n: usize,
) -> hsiband::Result<SelectionResult> {
    let labeled = gt.labeled_mask();
    let ranked = rank_by_ig(cube, gt, &labeled)?;
    let hc = entropy(&Histogram::from_sequence(&gt.labels, &labeled)?)?;
    let n = n.min(ranked.len());
    let mut trace = Vec::new();
    let mut retained = Vec::new();
    for (step, s) in ranked[..n].iter().enumerate() {
        let pe = fano_bounds(conditional_entropy(hc, s.score), gt.num_classes.max(2))?.lower;
        trace.push(TraceStep {
            step,
            band: s.band,
            mi: s.score,
            pe,
            accepted: true,
        });
        retained.push(s.band);
    }
    Ok(SelectionResult {
        retained,
        trace,
        method: Method::InfoGain,
        aborted: None,
    })
}

fn cmd_select(args: SelectArgs, cfg: &ConfigMap) -> CliResult<()> {
    let out = out_dir(args.out.clone(), cfg)?;
    let svm = resolve_svm(&args.svm, cfg)?;
    let method = cfg.resolve(args.method, "method", Method::Hybrid)?;
    let data = load_dataset(&args.data, cfg)?;
    let sel_cfg = selection_config(&args, cfg, svm, data.cube.levels)?;
    let result = match method {
        Method::Hybrid => run_hybrid(&data.cube, &data.gt, &sel_cfg)?,
        Method::InfoGain => ig_selection(&data.cube, &data.gt, sel_cfg.target_bands)?,
        Method::MiFilter => baseline_mi_filter(
            &data.cube,
            &data.gt,
            sel_cfg.threshold,
            sel_cfg.target_bands,
        )?,
    };
    let header = TraceHeader {
        method,
        config: sel_cfg,
    };
    let trace_path = out.join("trace.csv");
    let retained_path = out.join("retained.txt");
    write_trace(&trace_path, &header, &result)?;
    write_retained(&retained_path, &result.retained)?;
    println!(
        "retained {} bands (method={}, th={}); trace: {}, bands: {}",
        result.retained.len(),
        method,
        sel_cfg.threshold,
        trace_path.display(),
        retained_path.display()
    );
    if let Some(reason) = &result.aborted {
        return Err(CliError::Run(hsiband::Error::Domain(format!(
            "selection aborted after {} trace steps: {reason}",
            result.trace.len()
        ))));
    }
    Ok(())
}

const DEFAULT_THRESHOLDS: &str = "-0.02,-0.005,-0.0035,0";
const DEFAULT_BAND_COUNTS: &str = "2,3,4,12,14,18,20,25,35,36,40,45,50,53,60,70,75,80";

fn cmd_table(args: TableArgs, cfg: &ConfigMap) -> CliResult<()> {
    let out = out_dir(args.out.clone(), cfg)?;
    let data = load_dataset(&args.data, cfg)?;
    let band_counts: Vec<usize> = parse_list(
        &cfg.resolve(
            args.band_counts.clone(),
            "band-counts",
            DEFAULT_BAND_COUNTS.to_string(),
        )?,
        "band count",
    )?;
    let (report, records): (EvalReport, Vec<RunRecord>) = if !args.from_trace.is_empty() {
        let mut traces = Vec::new();
        for p in &args.from_trace {
            traces.push(read_trace(p)?);
        }
        replay_experiment(&traces, &band_counts, &data.cube, &data.gt, &data.hash)?
    } else {
        let svm = resolve_svm(&args.svm, cfg)?;
        let method = cfg.resolve(args.method, "method", Method::Hybrid)?;
        let thresholds: Vec<f64> = parse_list(
            &cfg.resolve(
                args.thresholds.clone(),
                "thresholds",
                DEFAULT_THRESHOLDS.to_string(),
            )?,
            "threshold",
        )?;
        let d = SelectionConfig::default();
        let spec = ExperimentSpec {
            method,
            thresholds,
            band_counts: band_counts.clone(),
            repeats: cfg.resolve(args.repeats, "repeats", 5)?,
            base_seed: cfg.resolve(args.base_seed, "base-seed", 42)?,
            config: SelectionConfig {
                stage1_keep: cfg.resolve(args.stage1_keep, "stage1-keep", d.stage1_keep)?,
                target_bands: cfg.resolve(args.max_bands, "max-bands", d.target_bands)?,
                levels: data.cube.levels,
                svm,
                fraction: cfg.resolve(args.fraction, "fraction", d.fraction)?,
                ..d
            },
        };
        run_experiment(&spec, &data.cube, &data.gt, &data.hash)?
    };
    let csv_path = out.join("table.csv");
    let md_path = out.join("table.md");
    let jsonl_path = out.join("runs.jsonl");
    std::fs::write(&csv_path, emit_report(&report, ReportFormat::Csv))
        .map_err(|e| CliError::Run(hsiband::Error::io(&csv_path, e)))?;
    std::fs::write(&md_path, emit_report(&report, ReportFormat::Markdown))
        .map_err(|e| CliError::Run(hsiband::Error::io(&md_path, e)))?;
    write_records_jsonl(&records, &jsonl_path)?;
    println!(
        "wrote {} x {} table ({} run records) to {}, {}, {}",
        report.band_counts.len(),
        report.columns.len(),
        records.len(),
        csv_path.display(),
        md_path.display(),
        jsonl_path.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, cfg: &ConfigMap) -> CliResult<()> {
    let data = load_dataset(&args.data, cfg)?;
    let bands: Vec<usize> = parse_list(
        &cfg.resolve_required(args.bands.clone(), "bands")?,
        "band index",
    )?;
    let seed = cfg.resolve(args.seed, "seed", 42)?;
    let fraction = cfg.resolve(args.fraction, "fraction", 0.5)?;
    let mut svm = resolve_svm(&args.svm, cfg)?;
    let split = split_labeled(&data.gt, fraction, seed)?;

    if args.grid_search {
        let x_train = extract_features(&data.cube, &bands, &split.train_mask)?;
        let y_train: Vec<u8> = data
            .gt
            .labels
            .iter()
            .zip(&split.train_mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .collect();
        svm = grid_search_params(
            &x_train,
            &y_train,
            &svm,
            &[1.0, 10.0, 100.0, 1000.0],
            &[0.1, 0.5, 1.0, 2.0],
            5,
            seed,
        )?;
        println!("grid search picked C={}, gamma={}", svm.c, svm.gamma);
    }

    let acc = evaluate_subset(&data.cube, &data.gt, &split, &bands, &svm, seed)?;
    println!(
        "bands={:?} overall={:.2}% per-class-mean={:.2}% (train {} / test {}, dataset {})",
        bands,
        acc.overall_pct,
        acc.per_class_mean_pct,
        split.train_count(),
        split.test_count(),
        data.hash
    );

    if let Some(path) = &args.export_split {
        let mut buf = Vec::new();
        split
            .export_csv(data.gt.rows, data.gt.cols, &mut buf)
            .map_err(|e| CliError::Run(hsiband::Error::io(path, e)))?;
        std::fs::write(path, buf).map_err(|e| CliError::Run(hsiband::Error::io(path, e)))?;
        println!("split mask written to {}", path.display());
    }
    if let Some(path) = &args.save_model {
        let x_train = extract_features(&data.cube, &bands, &split.train_mask)?;
        let y_train: Vec<u8> = data
            .gt
            .labels
            .iter()
            .zip(&split.train_mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .collect();
        let mut model = svm_train(&x_train, &y_train, &svm, seed)?;
        model.band_subset = bands.clone();
        model.levels = data.cube.levels;
        save_model(&model, path)?;
        println!("model written to {}", path.display());
    }
    Ok(())
}
