use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hccs_bench::{
    bench_mode, clb_vs_div, tile_scaling, write_scaling_csv, BenchConfig, BenchResult, SpeedRatio,
    DEFAULT_TILES,
};
use hccs_core::calibration::{
    calibrate, default_params, validate_params, Granularity, GridSpec, Validation, DEFAULT_SAMPLES,
};
use hccs_core::data::{
    gen_head, read_dataset, read_params, write_curves, write_dataset, write_json, write_params,
    write_prob_tile, CalibrationDataset, HeadSpec, LayerRecord, ParamsFile,
};
use hccs_core::fidelity::{evaluate, probability_curve};
use hccs_core::kernel::{hccs_tile, HeadParams, OutputMode};
use hccs_core::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "hccs",
    version,
    about = "Integer clipped-linear softmax surrogate toolkit"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic calibration dataset.
    Gen(GenArgs),
    /// Calibrate surrogate constants on a dataset.
    Calibrate(CalibrateArgs),
    /// Run the integer kernel over a dataset.
    Apply(ApplyArgs),
    /// Compare surrogate outputs against exact softmax.
    Eval(EvalArgs),
    /// Check constants against the integer range constraints.
    Validate(ValidateArgs),
    /// Measure host throughput per output mode.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1)]
    layers: u16,
    #[arg(long, default_value_t = 1)]
    heads: u16,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    /// One temperature per head index, shared by every layer.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    temps: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Candidate slopes, comma separated.
    #[arg(long, value_delimiter = ',')]
    s_values: Option<Vec<i16>>,
    /// Candidate clamp bounds, comma separated.
    #[arg(long, value_delimiter = ',')]
    d_values: Option<Vec<u8>>,
    /// Fixed intercept stride; by default each band is split into about 64 steps.
    #[arg(long)]
    b_step: Option<u16>,
}

impl GridArgs {
    fn grid(&self) -> GridSpec {
        let d = GridSpec::default();
        GridSpec {
            s_values: self.s_values.clone().unwrap_or(d.s_values),
            d_values: self.d_values.clone().unwrap_or(d.d_values),
            b_step: self.b_step,
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value = "per-head")]
    granularity: Granularity,
    /// Rows used per head.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// Params file.
    #[arg(short, long)]
    output: PathBuf,
    /// Full calibration report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Params file; defaults to uncalibrated constants.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value = "i16-div")]
    mode: OutputMode,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Probability tile output.
    #[arg(short, long)]
    output: PathBuf,
    /// Rank-ordered probability curves CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Heads to plot; all heads when omitted.
    #[arg(long, value_delimiter = ',')]
    curve_heads: Option<Vec<u16>>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value = "i16-div")]
    mode: OutputMode,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Validate every entry of a params file.
    #[arg(long, conflicts_with_all = ["b", "s", "d_max"])]
    params: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, short = 'B', allow_hyphen_values = true)]
    b: Option<i16>,
    #[arg(long, short = 'S', allow_hyphen_values = true)]
    s: Option<i16>,
    #[arg(long = "d-max", short = 'D')]
    d_max: Option<u8>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
    n: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "i16-div,u8-div,i16-clb,u8-clb"
    )]
    modes: Vec<OutputMode>,
    #[arg(long, default_value_t = 4096)]
    rows: usize,
    #[arg(long, default_value_t = 7)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    tiles: Option<Vec<u32>>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Tile-scaling CSV.
    #[arg(long)]
    scaling: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Validation(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_io_or_parse() {
            Failure::Io(e.to_string())
        } else if matches!(e, Error::InvalidInput(_)) {
            Failure::Usage(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn need_file(p: &Path) -> CmdResult {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Io(format!("{}: no such file", p.display())))
    }
}

fn need_parent(p: &Path) -> CmdResult {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => Err(Failure::Io(format!(
            "{}: parent directory does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn load_params(path: Option<&Path>, dataset: &CalibrationDataset) -> Result<ParamsFile, Failure> {
    match path {
        Some(p) => {
            need_file(p)?;
            Ok(read_params(p)?)
        }
        None => Ok(ParamsFile::uniform(
            dataset.n(),
            default_params(dataset.n())?,
        )),
    }
}

fn head_seed(seed: u64, head_id: u16) -> u64 {
    seed.wrapping_add(u64::from(head_id).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    if a.layers == 0 || a.heads == 0 || a.n == 0 {
        return Err(Failure::Usage(
            "--layers, --heads and --n must be positive".into(),
        ));
    }
    if a.temps.len() != usize::from(a.heads) {
        return Err(Failure::Usage(format!(
            "--temps has {} values but --heads is {}",
            a.temps.len(),
            a.heads
        )));
    }
    if a.n > usize::from(u16::MAX) || u32::try_from(a.rows).is_err() {
        return Err(Failure::Usage(
            "--n must fit in 16 bits and --rows in 32 bits".into(),
        ));
    }
    if u32::from(a.layers) * u32::from(a.heads) > u32::from(u16::MAX) + 1 {
        return Err(Failure::Usage("too many heads for 16-bit head ids".into()));
    }
    need_parent(&a.output)?;
    let mut layers = Vec::with_capacity(usize::from(a.layers));
    for l in 0..a.layers {
        let mut heads = Vec::with_capacity(usize::from(a.heads));
        for (h, &temperature) in a.temps.iter().enumerate() {
            let head_id = (u32::from(l) * u32::from(a.heads) + h as u32) as u16;
            heads.push(gen_head(&HeadSpec {
                head_id,
                temperature,
                rows: a.rows,
                n: a.n,
                seed: head_seed(a.seed, head_id),
            })?);
        }
        layers.push(LayerRecord { heads });
    }
    let ds = CalibrationDataset::new(layers)?;
    write_dataset(&a.output, &ds)?;
    eprintln!(
        "wrote {} layers x {} heads x {} rows (n={}) to {}",
        a.layers,
        a.heads,
        a.rows,
        a.n,
        a.output.display()
    );
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> CmdResult {
    need_file(&a.input)?;
    need_parent(&a.output)?;
    if let Some(r) = &a.report {
        need_parent(r)?;
    }
    let ds = read_dataset(&a.input)?;
    let report = calibrate(&ds, a.granularity, &a.grid.grid(), a.samples)?;
    write_params(&a.output, &report.to_params_file())?;
    if let Some(r) = &a.report {
        write_json(r, &report)?;
    }
    for e in &report.entries {
        println!(
            "layer {:>2} head {:>3}  {}  kl={:.6} nats  samples={}",
            e.layer, e.head, e.params, e.kl_nats, e.samples
        );
    }
    println!(
        "{} mean kl={:.6} nats",
        report.granularity, report.mean_kl_nats
    );
    Ok(())
}

fn cmd_apply(a: ApplyArgs) -> CmdResult {
    need_file(&a.input)?;
    need_parent(&a.output)?;
    if let Some(c) = &a.curves {
        need_parent(c)?;
    }
    if a.workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let ds = read_dataset(&a.input)?;
    let params = load_params(a.params.as_deref(), &ds)?;
    let table = params.table_for(&ds)?;
    let probs = hccs_tile(&ds.to_tile(), &table, a.mode, a.workers)?;
    write_prob_tile(&a.output, &probs)?;

    if let Some(path) = &a.curves {
        let mut points = Vec::new();
        for (_, head) in ds.heads() {
            if a.curve_heads
                .as_ref()
                .is_some_and(|hs| !hs.contains(&head.head_id))
                || head.row_count() == 0
            {
                continue;
            }
            points.extend(probability_curve(
                head,
                &table[&u32::from(head.head_id)],
                a.mode,
            )?);
        }
        write_curves(path, &points)?;
    }
    eprintln!("applied {} to {} rows", a.mode, probs.rows());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    need_file(&a.input)?;
    if let Some(o) = &a.output {
        need_parent(o)?;
    }
    let ds = read_dataset(&a.input)?;
    let params = load_params(a.params.as_deref(), &ds)?;
    let report = evaluate(&ds, &params, a.mode)?;
    match &a.output {
        Some(o) => write_json(o, &report)?,
        None => print_json(&report)?,
    }
    for h in &report.heads {
        let kl = h.kl_nats.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        eprintln!(
            "layer {:>2} head {:>3}  kl={kl}  entropy={:.4}  {:?}",
            h.layer, h.head_id, h.entropy_nats, h.label
        );
    }
    if let Some(v) = report.sum_bound_violations.filter(|&v| v > 0) {
        return Err(Failure::Validation(format!(
            "{v} rows break the normalization bound"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidateReport {
    ok: bool,
    results: Vec<Validation>,
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let results = if let Some(path) = &a.params {
        need_file(path)?;
        let file = read_params(path)?;
        let n = a.n.unwrap_or(file.n);
        file.entries
            .iter()
            .map(|e| validate_params(&e.params, n))
            .collect()
    } else {
        let (Some(n), Some(b), Some(s), Some(d)) = (a.n, a.b, a.s, a.d_max) else {
            return Err(Failure::Usage(
                "give --params FILE, or all of --n, --b, --s and --d-max".into(),
            ));
        };
        if n == 0 {
            return Err(Failure::Usage("--n must be positive".into()));
        }
        vec![validate_params(&HeadParams::new(b, s, d), n)]
    };
    let report = ValidateReport {
        ok: results.iter().all(Validation::is_ok),
        results,
    };
    match &a.output {
        Some(o) => {
            need_parent(o)?;
            write_json(o, &report)?;
        }
        None => print_json(&report)?,
    }
    if report.ok {
        Ok(())
    } else {
        let names: Vec<String> = report
            .results
            .iter()
            .flat_map(|v| {
                v.violations
                    .iter()
                    .map(move |x| format!("{} (n={}): {x}", v.params, v.n))
            })
            .collect();
        Err(Failure::Validation(format!(
            "violations: {}",
            names.join("; ")
        )))
    }
}

#[derive(Serialize)]
struct BenchReport {
    results: Vec<BenchResult>,
    clb_vs_div: Vec<SpeedRatio>,
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    for p in [&a.output, &a.scaling].into_iter().flatten() {
        need_parent(p)?;
    }
    let tiles = a.tiles.clone().unwrap_or_else(|| DEFAULT_TILES.to_vec());
    let mut results = Vec::new();
    let mut scaling = Vec::new();
    for &n in &a.n {
        for &mode in &a.modes {
            let cfg = BenchConfig {
                mode,
                n,
                rows: a.rows,
                repeats: a.repeats,
                workers: a.workers,
                seed: a.seed,
            };
            let r = bench_mode(&cfg)?;
            eprintln!(
                "n={:<4} {:<8} {:>12.3e} elem/s {:>9.1} ns/row  overhead {:.2}%",
                n,
                mode.to_string(),
                r.elements_per_second,
                r.ns_per_row,
                100.0 * r.harness_overhead
            );
            scaling.push((r.clone(), tile_scaling(&r, &tiles)?));
            results.push(r);
        }
    }
    let report = BenchReport {
        clb_vs_div: clb_vs_div(&results),
        results,
    };
    for r in &report.clb_vs_div {
        eprintln!(
            "n={:<4} {} / {} = {:.3}",
            r.n, r.variant, r.baseline, r.ratio
        );
    }
    match &a.output {
        Some(o) => write_json(o, &report)?,
        None => print_json(&report)?,
    }
    if let Some(path) = &a.scaling {
        write_scaling_csv(path, &scaling)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Calibrate(a) => cmd_calibrate(a),
        Cmd::Apply(a) => cmd_apply(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Validate(a) => cmd_validate(a),
        Cmd::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
