//! `qaa-lns`: table optimization, LNS training and ablations, datasets,
//! MAC cost profiling and run reports.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid input, 4 runtime failure.

mod manifest;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use qaa_lns::anneal::{self, qa_loss, table_curve_mse, AnnealConfig, SampleSet};
use qaa_lns::checkpoint::Checkpoint;
use qaa_lns::dataset::{self, DataSource, Dataset};
use qaa_lns::delta::{load_table, save_table, DeltaTable, DEFAULT_SEGMENTS};
use qaa_lns::nn::{train, LnsArith, Network, TrainConfig};
use qaa_lns::reference::float_mirror_train;
use qaa_lns::report::{self, FLOAT_METRICS_FILE, MANIFEST_FILE, METRICS_FILE};
use qaa_lns::{profile, LnsError, LnsFormat, ZeroMode};

use manifest::{unix_now, RunManifest, TableRecord};

const EXIT_USAGE: u8 = 2;
const EXIT_INVALID: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Parser)]
#[command(
    name = "qaa-lns",
    version,
    about = "Logarithmic number system training toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, optimize and inspect addition correction tables.
    #[command(subcommand)]
    Table(TableCmd),
    /// Train a network in LNS arithmetic.
    Train(TrainArgs),
    /// Generate or ingest datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Count primitive operations of one LNS MAC against an integer MAC.
    Profile(ProfileArgs),
    /// Summarize training runs.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ZeroModeArg {
    Flag,
    Smallest,
}

impl From<ZeroModeArg> for ZeroMode {
    fn from(z: ZeroModeArg) -> Self {
        match z {
            ZeroModeArg::Flag => ZeroMode::ZeroFlag,
            ZeroModeArg::Smallest => ZeroMode::SmallestValue,
        }
    }
}

#[derive(Args)]
struct FormatArgs {
    /// Width of the log-magnitude, sign and zero flag excluded.
    #[arg(long)]
    total_bits: u32,
    #[arg(long)]
    frac_bits: u32,
    #[arg(long, value_enum, default_value = "flag")]
    zero_mode: ZeroModeArg,
    /// Correction curves are zero beyond this many log2 units.
    #[arg(long, default_value_t = qaa_lns::format::DEFAULT_D_MAX)]
    d_max: u32,
}

impl FormatArgs {
    fn format(&self) -> qaa_lns::Result<LnsFormat> {
        LnsFormat::new(self.total_bits, self.frac_bits)?
            .with_zero_mode(self.zero_mode.into())
            .with_d_max(self.d_max)
    }
}

#[derive(Subcommand)]
enum TableCmd {
    /// Anneal a table for one format (or fit the uniform baseline).
    Optimize(OptimizeArgs),
    /// Quantization-aware and curve losses of a table file.
    Eval(EvalArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    format: FormatArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = anneal::DEFAULT_ITERATIONS)]
    iterations: u64,
    #[arg(long, default_value_t = anneal::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = anneal::DEFAULT_VARIANCE)]
    variance: f64,
    #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
    segments: usize,
    /// Initial temperature; defaults to a tenth of the starting loss.
    #[arg(long)]
    t0: Option<f64>,
    /// Write the uniform curve fit instead of annealing.
    #[arg(long)]
    baseline_uniform: bool,
    /// Annealing progress as JSON lines; `-` for stdout.
    #[arg(long)]
    progress: Option<String>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    table: PathBuf,
    #[arg(long, value_enum, default_value = "flag")]
    zero_mode: ZeroModeArg,
    /// Seed of the evaluation sample set.
    #[arg(long, default_value_t = 999)]
    seed: u64,
    #[arg(long, default_value_t = anneal::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = anneal::DEFAULT_VARIANCE)]
    variance: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Correction table; overrides the config's `table`.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also train the double-precision mirror.
    #[arg(long)]
    mirror_float: bool,
    /// `not-qa`, `cross-bitwidth=<table>` or `no-zero-flag`.
    #[arg(long, value_parser = parse_ablation)]
    ablation: Option<Ablation>,
    /// Replace the table by the exact correction (reference run).
    #[arg(long, conflicts_with_all = ["table", "ablation"])]
    exact: bool,
}

#[derive(Clone, Debug)]
enum Ablation {
    NotQa,
    CrossBitwidth(PathBuf),
    NoZeroFlag,
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    match s {
        "not-qa" => Ok(Ablation::NotQa),
        "no-zero-flag" => Ok(Ablation::NoZeroFlag),
        _ => match s.strip_prefix("cross-bitwidth=") {
            Some(p) if !p.is_empty() => Ok(Ablation::CrossBitwidth(p.into())),
            _ => Err(format!(
                "unknown ablation `{s}` (not-qa, cross-bitwidth=<table>, no-zero-flag)"
            )),
        },
    }
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Validate a CSV or convert IDX files to the CSV format.
    Ingest(IngestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    TwoMoons,
    Blobs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Blob count (blobs only).
    #[arg(long, default_value_t = 3)]
    centers: usize,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["csv", "idx_images"]))]
struct IngestArgs {
    /// CSV with the label in the first column.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, requires = "idx_labels")]
    idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    idx_labels: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    /// Stored operand widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = profile::DEFAULT_BITWIDTHS)]
    bitwidths: Vec<u32>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    csv: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Table(TableCmd::Optimize(a)) => table_optimize(a),
        Command::Table(TableCmd::Eval(a)) => table_eval(a),
        Command::Train(a) => train_cmd(a),
        Command::Dataset(DatasetCmd::Gen(a)) => dataset_gen(a),
        Command::Dataset(DatasetCmd::Ingest(a)) => dataset_ingest(a),
        Command::Profile(a) => profile_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<LnsError>()) {
        Some(le) if le.is_validation() => EXIT_INVALID,
        _ => EXIT_RUNTIME,
    }
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn table_optimize(a: OptimizeArgs) -> anyhow::Result<()> {
    let started = unix_now();
    let fmt = a.format.format()?;
    let mut cfg = AnnealConfig::new(fmt, a.seed);
    cfg.iterations = a.iterations;
    cfg.sample_count = a.samples;
    cfg.sample_variance = a.variance;
    cfg.segments = a.segments;
    cfg.initial_temperature = a.t0;
    cfg.validate()?;

    let (table, kind) = if a.baseline_uniform {
        (DeltaTable::uniform(&fmt, a.segments)?, "uniform")
    } else {
        let mut sink: Option<Box<dyn Write>> = match a.progress.as_deref() {
            None => None,
            Some("-") => Some(Box::new(io::stdout())),
            Some(p) => Some(Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {p}"))?,
            ))),
        };
        let mut write_err = None;
        let table = anneal::anneal_with_progress(&cfg, |p| {
            if let Some(w) = sink.as_mut() {
                let line = serde_json::to_string(p).expect("progress serializes");
                if let Err(e) = writeln!(w, "{line}") {
                    write_err.get_or_insert(e);
                }
            }
        })?;
        if let Some(mut w) = sink {
            w.flush()?;
        }
        if let Some(e) = write_err {
            return Err(e).context("writing progress");
        }
        (table, "annealed")
    };
    save_table(&table, &a.out).with_context(|| format!("writing {}", a.out.display()))?;

    let samples = cfg.sample_set()?;
    let loss = qa_loss(&table, &fmt, &samples)?;
    println!(
        "{kind} table for {fmt}: qa_loss {loss:e} -> {}",
        a.out.display()
    );

    let mut m = RunManifest::new(
        if a.baseline_uniform {
            "table optimize --baseline-uniform"
        } else {
            "table optimize"
        },
        serde_json::to_value(&cfg)?,
        started,
    );
    m.seeds.insert("anneal".into(), a.seed);
    m.tables.push(TableRecord::new("output", &table));
    m.format = Some(fmt.to_string());
    m.table_kind = Some(kind.into());
    m.write(&sibling_manifest(&a.out))
}

fn table_eval(a: EvalArgs) -> anyhow::Result<()> {
    let table = load_table(&a.table).with_context(|| format!("reading {}", a.table.display()))?;
    let fp = table.fingerprint();
    let fmt = LnsFormat::new(fp.total_bits, fp.fractional_bits)?
        .with_zero_mode(a.zero_mode.into())
        .with_d_max(fp.d_max)?;
    let samples = SampleSet::normal(&fmt, a.samples, a.variance, a.seed)?;
    let loss = qa_loss(&table, &fmt, &samples)?;
    let (plus, minus) = table_curve_mse(&table, &fmt)?;
    println!("format        {fmt}");
    println!("qa_loss       {loss:e}");
    println!("mse_plus      {plus:e}");
    println!("mse_minus     {minus:e}");
    if let Some(l) = &table.metadata.qa_loss {
        println!("stored_loss   {l}");
    }
    Ok(())
}

/// Correction source for a training run and its manifest label.
fn resolve_arith(
    args: &TrainArgs,
    cfg: &mut TrainConfig,
    config_dir: &Path,
) -> anyhow::Result<(LnsArith, &'static str, Vec<TableRecord>)> {
    if args.exact {
        return Ok((LnsArith::exact(&cfg.format)?, "exact", Vec::new()));
    }
    if let Some(Ablation::NoZeroFlag) = args.ablation {
        cfg.format = cfg.format.with_zero_mode(ZeroMode::SmallestValue);
    }
    let given = args
        .table
        .clone()
        .or_else(|| cfg.table.as_ref().map(|t| config_dir.join(t)));
    let (table, kind) = match &args.ablation {
        Some(Ablation::NotQa) => {
            if args.table.is_some() {
                return Err(LnsError::Config(
                    "--ablation not-qa builds its own table; drop --table".into(),
                )
                .into());
            }
            (
                DeltaTable::uniform(&cfg.format, DEFAULT_SEGMENTS)?,
                "uniform",
            )
        }
        Some(Ablation::CrossBitwidth(p)) => {
            let src = load_table(p).with_context(|| format!("reading {}", p.display()))?;
            (src.rescale_to(&cfg.format)?, "cross-bitwidth")
        }
        _ => {
            let Some(path) = given else {
                return Err(LnsError::Config(
                    "no correction table: pass --table or set `table` in the config".into(),
                )
                .into());
            };
            if !path.is_file() {
                return Err(LnsError::Config(format!("table {} not found", path.display())).into());
            }
            let t = load_table(&path).with_context(|| format!("reading {}", path.display()))?;
            t.check_format(&cfg.format)?;
            let kind = if t.metadata.created_by.ends_with("anneal") {
                "annealed"
            } else {
                "uniform"
            };
            (t, kind)
        }
    };
    let records = vec![TableRecord::new("delta", &table)];
    Ok((LnsArith::with_table(&cfg.format, table)?, kind, records))
}

fn jsonl_writer(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let started = unix_now();
    let mut cfg =
        TrainConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    let config_dir = a.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let (arith, kind, tables) = resolve_arith(&a, &mut cfg, &config_dir)?;
    cfg.table = None;
    let (train_set, test_set) = cfg.datasets(Some(&config_dir))?;
    let mut net = Network::new(cfg.network.clone(), arith)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut metrics_out = jsonl_writer(&a.out.join(METRICS_FILE))?;
    let mut write_err = None;
    info!(
        "training {} samples ({} test) in {} with {kind} table",
        train_set.len(),
        test_set.len(),
        cfg.format
    );
    let metrics = train(&mut net, &train_set, &test_set, &cfg, |m| {
        info!(
            "epoch {:>3}  loss {:.4}  train {:.4}  test {:.4}  lr {:.5}",
            m.epoch, m.train_loss, m.train_accuracy, m.test_accuracy, m.learning_rate
        );
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(metrics_out, "{line}").and_then(|_| metrics_out.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).context("writing metrics");
    }
    let ck = Checkpoint::from_network(&net, metrics.len() as u32);
    ck.save(a.out.join(CHECKPOINT_FILE))?;
    let last = metrics.last().expect("at least one epoch");
    println!(
        "lns    final {:.4}  median10 {:.4}",
        last.test_accuracy,
        report::median_last(&metrics)
    );

    if a.mirror_float {
        let mut out = jsonl_writer(&a.out.join(FLOAT_METRICS_FILE))?;
        let mut write_err = None;
        let (_, fm) = float_mirror_train(&cfg, Some(&config_dir), |m| {
            let line = serde_json::to_string(m).expect("metrics serialize");
            if let Err(e) = writeln!(out, "{line}") {
                write_err.get_or_insert(e);
            }
        })?;
        out.flush()?;
        if let Some(e) = write_err {
            return Err(e).context("writing float metrics");
        }
        let l = fm.last().expect("at least one epoch");
        println!(
            "float  final {:.4}  median10 {:.4}",
            l.test_accuracy,
            report::median_last(&fm)
        );
    }

    let command = match &a.ablation {
        None => "train".to_string(),
        Some(Ablation::NotQa) => "train --ablation not-qa".into(),
        Some(Ablation::CrossBitwidth(_)) => "train --ablation cross-bitwidth".into(),
        Some(Ablation::NoZeroFlag) => "train --ablation no-zero-flag".into(),
    };
    let mut m = RunManifest::new(&command, serde_json::to_value(&cfg)?, started);
    m.seeds.insert("init".into(), cfg.network.init_seed);
    m.seeds.insert("split".into(), cfg.split_seed);
    m.seeds.insert("shuffle".into(), cfg.shuffle_seed);
    if let DataSource::TwoMoons { seed, .. } | DataSource::Blobs { seed, .. } = cfg.data {
        m.seeds.insert("data".into(), seed);
    }
    m.tables = tables;
    m.format = Some(cfg.format.to_string());
    m.table_kind = Some(kind.into());
    m.write(&a.out.join(MANIFEST_FILE))
}

fn dataset_gen(a: GenArgs) -> anyhow::Result<()> {
    let started = unix_now();
    let (data, name) = match a.kind {
        GenKind::TwoMoons => (dataset::two_moons(a.n, a.noise, a.seed)?, "two-moons"),
        GenKind::Blobs => (dataset::blobs(a.n, a.centers, a.noise, a.seed)?, "blobs"),
    };
    data.write_csv(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} samples, {} classes -> {}",
        data.len(),
        data.classes(),
        a.out.display()
    );
    let mut m = RunManifest::new(
        "dataset gen",
        serde_json::json!({ "kind": name, "n": a.n, "noise": a.noise, "centers": a.centers }),
        started,
    );
    m.seeds.insert("data".into(), a.seed);
    m.write(&sibling_manifest(&a.out))
}

fn dataset_ingest(a: IngestArgs) -> anyhow::Result<()> {
    let started = unix_now();
    let (data, source): (Dataset, serde_json::Value) = match (&a.csv, &a.idx_images, &a.idx_labels)
    {
        (Some(csv), _, _) => (
            Dataset::read_csv(csv).with_context(|| format!("reading {}", csv.display()))?,
            serde_json::json!({ "csv": csv }),
        ),
        (None, Some(img), Some(lab)) => (
            dataset::ingest_idx(img, lab)?,
            serde_json::json!({ "idx_images": img, "idx_labels": lab }),
        ),
        _ => bail!("give --csv or both --idx-images and --idx-labels"),
    };
    data.write_csv(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} samples, {} features, {} classes -> {}",
        data.len(),
        data.dim(),
        data.classes(),
        a.out.display()
    );
    RunManifest::new("dataset ingest", source, started).write(&sibling_manifest(&a.out))
}

fn profile_cmd(a: ProfileArgs) -> anyhow::Result<()> {
    let r = profile::profile(&a.bitwidths, a.samples, a.seed)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else if a.csv {
        print!("{}", r.to_csv());
    } else {
        print!("{}", r.to_text());
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> anyhow::Result<()> {
    let r = report::build_report(&a.runs);
    if a.csv {
        print!("{}", r.to_csv());
    } else {
        print!("{}", r.to_text());
    }
    if r.rows.is_empty() {
        return Err(LnsError::Dataset("no readable runs".into()).into());
    }
    Ok(())
}
