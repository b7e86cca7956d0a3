use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use omnice::imaging::io::{load_rgb, save_rgb, FileFormat};
use omnice::metrics::{build_report, emit_report, parse_dice, read_predictions, render_text};
use omnice::pipeline::{augmix_compose, corrupt_dataset, derive_seed, list_images, AugmixSpec, Corruptor, DatasetJob};
use omnice::severity::{kind_listing, validate_table, CONFIG_ENV_VAR};
use omnice::{CorruptionKind, Error, SeverityTable};

#[derive(Parser)]
#[command(name = "omnice", version, about = "Histopathology image corruptions and robustness metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt every image under a directory at the chosen kinds and severities.
    Corrupt(CorruptArgs),
    /// Write one Augmix-mixed copy of every input image.
    Augmix(AugmixArgs),
    /// Print corruption ids and their parameter schemas.
    ListKinds(TableArgs),
    /// Compute mCE, rCE and dice tables from prediction files.
    Report(ReportArgs),
}

#[derive(Args)]
struct TableArgs {
    /// TOML overrides for the severity table.
    #[arg(long, env = CONFIG_ENV_VAR)]
    severity_config: Option<PathBuf>,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated ids, or `all`.
    #[arg(long, default_value = "all")]
    kinds: String,
    /// Levels as ranges or lists, e.g. `1-5` or `1,3,5`.
    #[arg(long, default_value = "1-5")]
    severities: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Process images tile by tile at this size.
    #[arg(long)]
    tile_size: Option<usize>,
    /// Also write untouched copies under `clean/0/`.
    #[arg(long)]
    include_clean: bool,
    /// Label masks mirroring the input tree.
    #[arg(long)]
    masks: Option<PathBuf>,
    #[command(flatten)]
    table: TableArgs,
}

#[derive(Args)]
struct AugmixArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 3)]
    width: usize,
    /// Ops per chain; random in 1..=3 when omitted.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value = "all")]
    pool: String,
    #[arg(long, default_value = "1-5")]
    severities: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    table: TableArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Model prediction CSV; repeatable. The file stem names the model.
    #[arg(long = "predictions", required = true)]
    predictions: Vec<PathBuf>,
    #[arg(long)]
    baseline_predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-sample dice scores: `sample_id,kind,severity,dice`.
    #[arg(long)]
    dice: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::UnknownKind { .. }
            | Error::SeverityOutOfRange { .. }
            | Error::Parse(_)
            | Error::Csv(_)
            | Error::InvalidOptics(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn parse_kinds(text: &str) -> Result<Vec<CorruptionKind>, Failure> {
    if text.trim() == "all" {
        return Ok(CorruptionKind::ALL.to_vec());
    }
    let mut kinds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k: CorruptionKind = part.parse()?;
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    if kinds.is_empty() {
        return Err(Failure::Usage("no corruption kinds given".into()));
    }
    Ok(kinds)
}

fn parse_severities(text: &str) -> Result<Vec<u8>, Failure> {
    let bad = || Failure::Usage(format!("bad severity list `{text}`; use e.g. 1-5 or 1,3,5"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim().parse::<u8>().map_err(|_| bad())?, b.trim().parse::<u8>().map_err(|_| bad())?),
            None => {
                let v = part.parse::<u8>().map_err(|_| bad())?;
                (v, v)
            }
        };
        if lo > hi {
            return Err(bad());
        }
        for s in lo..=hi {
            omnice::Severity::new(s)?;
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    out.sort_unstable();
    Ok(out)
}

fn load_table(args: &TableArgs) -> Result<SeverityTable, Failure> {
    let table = match &args.severity_config {
        Some(p) => SeverityTable::load_with_defaults(p)
            .map_err(|e| Failure::Usage(format!("severity config {}: {e}", p.display())))?,
        None => SeverityTable::builtin(),
    };
    let violations = validate_table(&table);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(Failure::Usage(format!("invalid severity table:\n{}", list.join("\n"))));
    }
    Ok(table)
}

fn run_corrupt(args: CorruptArgs) -> Result<ExitCode, Failure> {
    let corruptor = Corruptor::new(load_table(&args.table)?);
    let mut job = DatasetJob::new(&args.input, &args.output);
    job.kinds = parse_kinds(&args.kinds)?;
    job.severities = parse_severities(&args.severities)?;
    job.master_seed = args.seed;
    job.workers = args.workers;
    job.tile_size = args.tile_size;
    job.include_clean = args.include_clean;
    job.masks_dir = args.masks;
    let report = corrupt_dataset(&corruptor, &job)?;
    info!("wrote {} outputs to {}", report.manifest.len(), args.output.display());
    if report.is_complete() {
        Ok(ExitCode::SUCCESS)
    } else {
        for s in &report.skipped {
            warn!(
                "skipped {} {} {}: {}",
                s.input,
                s.kind.as_deref().unwrap_or("-"),
                s.severity.map_or_else(|| "-".to_string(), |v| v.to_string()),
                s.reason
            );
        }
        eprintln!("{} item(s) skipped", report.skipped.len());
        Ok(ExitCode::from(1))
    }
}

fn run_augmix(args: AugmixArgs) -> Result<ExitCode, Failure> {
    let corruptor = Corruptor::new(load_table(&args.table)?);
    let sev = parse_severities(&args.severities)?;
    let spec = AugmixSpec {
        width: args.width,
        depth: args.depth,
        alpha: args.alpha,
        pool: parse_kinds(&args.pool)?,
        min_severity: sev[0],
        max_severity: sev[sev.len() - 1],
    };
    spec.validate()?;
    if !args.input.is_dir() {
        return Err(Failure::Usage(format!("input {} is not a directory", args.input.display())));
    }
    let mut skipped = 0usize;
    for rel in list_images(&args.input)? {
        let seed = derive_seed(args.seed, &rel, "augmix", 0);
        let result = load_rgb(&args.input.join(&rel))
            .and_then(|img| augmix_compose(&corruptor, &img, &spec, seed))
            .and_then(|out| {
                let fmt = FileFormat::for_input(Path::new(&rel));
                let dest = args.output.join(Path::new(&rel).with_extension(fmt.extension()));
                save_rgb(&dest, &out, fmt)
            });
        if let Err(e) = result {
            warn!("skipping {rel}: {e}");
            skipped += 1;
        }
    }
    Ok(if skipped == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn model_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn run_report(args: ReportArgs) -> Result<ExitCode, Failure> {
    let read = |p: &Path| read_predictions(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())));
    let baseline = read(&args.baseline_predictions)?;
    let models = args
        .predictions
        .iter()
        .map(|p| Ok((model_name(p), read(p)?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let refs: Vec<(&str, &[omnice::metrics::PredictionRecord])> =
        models.iter().map(|(n, r)| (n.as_str(), r.as_slice())).collect();
    let mut report = build_report((&model_name(&args.baseline_predictions), &baseline), &refs)?;
    if let Some(d) = &args.dice {
        let file = std::fs::File::open(d).map_err(|e| Failure::Usage(format!("{}: {e}", d.display())))?;
        report.dice = Some(parse_dice(file)?);
    }
    emit_report(&report, &args.out)?;
    print!("{}", render_text(&report));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Corrupt(a) => run_corrupt(a),
        Command::Augmix(a) => run_augmix(a),
        Command::ListKinds(a) => load_table(&a).map(|t| {
            print!("{}", kind_listing(&t));
            ExitCode::SUCCESS
        }),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            error!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            error!("{msg}");
            ExitCode::from(1)
        }
    }
}
