//! `mmrm`: run simulation grids, fit estimators to trial CSVs, and regenerate
//! the power and type-I error figures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mmrm_core::harness::{
    self, asymptotic_check, read_results_csv, result_rows, run_grid_with_records,
    write_records_csv, write_results_csv, HarnessError, HarnessOptions,
};
use mmrm_cli::svg;
use mmrm_core::{fit, Dataset, FitError, ModelSpec, ScenarioConfig, SeKind, Variant};

#[derive(Parser)]
#[command(name = "mmrm", version, about = "Treatment-effect estimators for longitudinal trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenarios of a JSON config and write one results row per scenario and estimator.
    Simulate {
        /// JSON object or array of scenario objects.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Replace every scenario seed with one derived from this base and the scenario index.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the replication-level records here.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SeArg::Model)]
        se: SeArg,
    },
    /// Fit one estimator to a long-format CSV and print the result as JSON.
    Fit {
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::Mmrmx)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = SeArg::Model)]
        se: SeArg,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        /// Fit on the raw covariate scale.
        #[arg(long)]
        no_center: bool,
    },
    /// Power under MCAR dropout over the default grid: power.csv and power.svg.
    ReproducePower(Reproduce),
    /// Type-I error under MAR dropout over the default grid: type1.csv and type1.svg.
    ReproduceError(Reproduce),
    /// Compare large-sample fits with their sample-moment limits.
    Asymptotics {
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        #[arg(long, default_value_t = 0.6)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 2023)]
        seed: u64,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Reproduce {
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 2023)]
    seed: u64,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    #[arg(long, value_enum, default_value_t = SeArg::Model)]
    se: SeArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeArg {
    Model,
    Sandwich,
}

impl From<SeArg> for SeKind {
    fn from(s: SeArg) -> Self {
        match s {
            SeArg::Model => SeKind::ModelBased,
            SeArg::Sandwich => SeKind::Sandwich,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ancova,
    Mmrm,
    Mmrmx,
}

impl From<ModelArg> for Variant {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ancova => Variant::Ancova,
            ModelArg::Mmrm => Variant::Mmrm,
            ModelArg::Mmrmx => Variant::MmrmInteract,
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Failure classes and their exit codes.
enum Failure {
    /// Bad input: exit 2.
    Invalid(String),
    /// The fit hit its iteration cap: exit 3.
    NotConverged,
    /// Anything else: exit 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged) => {
            eprintln!("error: NotConverged: iteration cap reached");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate {
            config,
            out,
            workers,
            seed,
            records,
            se,
        } => {
            let mut grid = load_config(&config)?;
            if let Some(base) = seed {
                harness::with_derived_seeds(&mut grid, base);
            }
            let opts = HarnessOptions {
                se_kind: se.into(),
                workers,
            };
            let (results, recs) = run_grid_with_records(&grid, &opts)?;
            let mut buf = Vec::new();
            write_results_csv(&mut buf, &result_rows(&results))?;
            write_atomic(&out, &buf)?;
            if let Some(path) = records {
                let mut buf = Vec::new();
                write_records_csv(&mut buf, &recs)?;
                write_atomic(&path, &buf)?;
            }
            Ok(())
        }
        Command::Fit {
            data,
            model,
            se,
            tol,
            max_iter,
            no_center,
        } => {
            let file = fs::File::open(&data)
                .with_context(|| format!("cannot open {}", data.display()))?;
            let ds = Dataset::read_csv(file).map_err(|e| Failure::Invalid(e.to_string()))?;
            let spec = ModelSpec {
                variant: model.into(),
                centering: !no_center,
                tolerance: tol,
                max_iter,
                se_kind: se.into(),
            };
            let result = fit(&ds, &spec).map_err(|e| match e {
                FitError::InvalidSpec(_) | FitError::Data(_) | FitError::InsufficientData(_) => {
                    Failure::Invalid(e.to_string())
                }
                other => Failure::Runtime(other.into()),
            })?;
            let json = serde_json::to_string_pretty(&result).context("serializing fit")?;
            println!("{json}");
            if result.converged {
                Ok(())
            } else {
                Err(Failure::NotConverged)
            }
        }
        Command::ReproducePower(args) => reproduce(
            &args,
            harness::power_grid(args.seed, args.reps),
            "power",
            svg::POWER_CHART,
        ),
        Command::ReproduceError(args) => reproduce(
            &args,
            harness::type1_grid(args.seed, args.reps),
            "type1",
            svg::TYPE1_CHART,
        ),
        Command::Asymptotics {
            n,
            rho,
            b,
            seed,
            out,
        } => {
            let cfg = ScenarioConfig {
                rho,
                b,
                seed,
                ..ScenarioConfig::default()
            };
            cfg.validate().map_err(|e| Failure::Invalid(e.to_string()))?;
            let report = asymptotic_check(&cfg, n).map_err(|e| match e {
                HarnessError::Precondition(msg) => Failure::Invalid(msg),
                other => other.into(),
            })?;
            let json = serde_json::json!({
                "passes": report.passes(),
                "tolerance": harness::AsymptoticReport::TOLERANCE,
                "report": report,
            });
            let text = serde_json::to_string_pretty(&json).context("serializing report")? + "\n";
            match out {
                Some(path) => write_atomic(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn reproduce(
    args: &Reproduce,
    grid: Vec<ScenarioConfig>,
    stem: &str,
    chart: svg::Chart<'_>,
) -> Result<(), Failure> {
    if args.reps == 0 {
        return Err(Failure::Invalid("--reps must be at least 1".into()));
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let opts = HarnessOptions {
        se_kind: args.se.into(),
        workers: args.workers,
    };
    let (results, _) = run_grid_with_records(&grid, &opts)?;
    let mut csv_bytes = Vec::new();
    write_results_csv(&mut csv_bytes, &result_rows(&results))?;
    let csv_path = args.out.join(format!("{stem}.csv"));
    write_atomic(&csv_path, &csv_bytes)?;

    // The figure is drawn from the CSV as written, not from in-memory results.
    let rows = read_results_csv(csv_bytes.as_slice())?;
    write_atomic(&args.out.join(format!("{stem}.svg")), svg::render(&rows, &chart).as_bytes())?;
    eprintln!("wrote {} and {stem}.svg", csv_path.display());
    Ok(())
}

fn load_config(path: &Path) -> Result<Vec<ScenarioConfig>, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    if items.is_empty() {
        return Err(Failure::Invalid(format!("{}: no scenarios", path.display())));
    }
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let cfg: ScenarioConfig = serde_json::from_value(item)
                .map_err(|e| Failure::Invalid(format!("scenario {i}: {e}")))?;
            cfg.validate()
                .map_err(|e| Failure::Invalid(format!("scenario {i}: {e}")))?;
            Ok(cfg)
        })
        .collect()
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
