//! Command-line interface to the covariance-equality test engine.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or computation error,
//! 3 event detected (`detect` only, after the report is written).

use clap::{Parser, Subcommand, ValueEnum};
use covtest::detector::{detect, localize, train, DetectorModel};
use covtest::fastcompute::benchmark_scaling;
use covtest::harness::{
    emit_report, run_power_table, run_replay, sweep_q, HarnessError, ReplayConfig, ReportFormat,
    ReportPayload, SweepMode,
};
use covtest::matrixflow::{load_csv, write_matrix_csv, Orientation};
use covtest::simgen::{make_scenario, ScenarioConfig};
use covtest::ustat::{StatConfig, StatVariant, VstForm};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "covtest",
    version,
    about = "Covariance-equality testing, event detection, and localization \
             for multichannel sensor streams"
)]
struct Cli {
    /// Overrides the seed of the loaded config (simulate, power-table,
    /// sweep-q) or seeds the benchmark workload.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML config file; the expected schema depends on the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output format where the report supports a choice.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Overrides the configured statistic evaluation path.
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,

    /// Overrides the configured pair-distance form.
    #[arg(long, global = true, value_enum)]
    vst: Option<VstArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Exact,
    Principal,
}

impl From<VariantArg> for StatVariant {
    fn from(value: VariantArg) -> Self {
        match value {
            VariantArg::Exact => StatVariant::Exact,
            VariantArg::Principal => StatVariant::Principal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VstArg {
    #[value(name = "twoC")]
    TwoC,
    #[value(name = "paper-literal")]
    PaperLiteral,
}

impl From<VstArg> for VstForm {
    fn from(value: VstArg) -> Self {
        match value {
            VstArg::TwoC => VstForm::TwoC,
            VstArg::PaperLiteral => VstForm::Literal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    FixedTotal,
    FixedWindow,
}

impl From<ModeArg> for SweepMode {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::FixedTotal => SweepMode::FixedTotal,
            ModeArg::FixedWindow => SweepMode::FixedWindow,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OrientationArg {
    RowsAreSamples,
    ColumnsAreSamples,
}

impl From<OrientationArg> for Orientation {
    fn from(value: OrientationArg) -> Self {
        match value {
            OrientationArg::RowsAreSamples => Orientation::RowsAreSamples,
            OrientationArg::ColumnsAreSamples => Orientation::ColumnsAreSamples,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generates a scenario stream CSV plus a ground-truth JSON sidecar.
    Simulate {
        /// Stream CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth sidecar path (default: <out> with .truth.json).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Trains a detector model on the leading flows of a stream CSV.
    Train {
        /// Stream CSV to read.
        #[arg(long)]
        data: PathBuf,
        /// Model JSON output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tests every flow of a stream against a trained model.
    Detect {
        /// Stream CSV to read.
        #[arg(long)]
        data: PathBuf,
        /// Trained model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Per-flow results CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV layout of the stream file.
        #[arg(long, value_enum, default_value = "rows-are-samples")]
        orientation: OrientationArg,
        /// Skip the stream file's first line.
        #[arg(long)]
        header: bool,
    },
    /// Scores each channel's sensitivity around a detected onset flow.
    Localize {
        /// Stream CSV to read.
        #[arg(long)]
        data: PathBuf,
        /// Trained model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Global index of the onset flow (needs two preceding flows).
        #[arg(long)]
        onset: usize,
        /// Localization JSON output (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV layout of the stream file.
        #[arg(long, value_enum, default_value = "rows-are-samples")]
        orientation: OrientationArg,
        /// Skip the stream file's first line.
        #[arg(long)]
        header: bool,
    },
    /// Runs the Monte Carlo detection/false-alarm rate grid.
    PowerTable {
        /// Table output path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweeps the window count q at a fixed sample budget.
    SweepQ {
        /// Sample budget: whole flow (fixed-total) or one window
        /// (fixed-window).
        #[arg(long)]
        budget: usize,
        /// Budget allocation mode.
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Curve output path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Times the quadratic pooled-statistic path against the four-tuple
    /// reference loops on a deterministic workload.
    Bench {
        /// Comma-separated ascending window sizes, each at least 4.
        #[arg(long, required = true, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Channel count of the timed windows.
        #[arg(long, default_value_t = 30)]
        p: usize,
        /// Timed repetitions per size (median reported).
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Timing table output path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replays an external stream CSV: trains on its leading flows, tests
    /// the rest, and reports a detected event.
    Replay {
        /// Stream CSV to read.
        #[arg(long)]
        data: PathBuf,
        /// Event report output path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<HarnessError> for CliError {
    fn from(err: HarnessError) -> Self {
        match err {
            HarnessError::EventNeedsJson => {
                CliError::Usage("event reports have no CSV form; use --format json".to_string())
            }
            other => CliError::Data(anyhow::Error::new(other)),
        }
    }
}

impl From<covtest::simgen::SimError> for CliError {
    fn from(err: covtest::simgen::SimError) -> Self {
        HarnessError::from(err).into()
    }
}

impl From<covtest::matrixflow::FlowError> for CliError {
    fn from(err: covtest::matrixflow::FlowError) -> Self {
        HarnessError::from(err).into()
    }
}

impl From<covtest::detector::DetectorError> for CliError {
    fn from(err: covtest::detector::DetectorError) -> Self {
        HarnessError::from(err).into()
    }
}

impl From<covtest::fastcompute::ComputeError> for CliError {
    fn from(err: covtest::fastcompute::ComputeError) -> Self {
        HarnessError::from(covtest::ustat::StatError::from(err)).into()
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data_err(err: impl Into<anyhow::Error>) -> CliError {
    CliError::Data(err.into())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Data(err)) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Option<PathBuf>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Err(usage("--config <file> is required for this subcommand"));
    };
    let text = fs::read_to_string(path)
        .map_err(|e| data_err(anyhow::anyhow!("reading {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| data_err(anyhow::anyhow!("parsing {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<DetectorModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| data_err(anyhow::anyhow!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| data_err(anyhow::anyhow!("parsing {}: {e}", path.display())))
}

fn apply_stat_overrides(stat: &mut StatConfig, variant: Option<VariantArg>, vst: Option<VstArg>) {
    if let Some(v) = variant {
        stat.variant = v.into();
    }
    if let Some(v) = vst {
        stat.vst = v.into();
    }
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match out {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| data_err(anyhow::anyhow!("creating {}: {e}", path.display())))?;
            Ok(Box::new(file))
        }
        None => Ok(Box::new(std::io::stdout())),
    }
}

fn write_out(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    let mut w = open_out(out)?;
    w.write_all(content.as_bytes())
        .map_err(|e| data_err(anyhow::anyhow!("writing output: {e}")))?;
    Ok(())
}

#[derive(serde::Serialize)]
struct LocalizationReport {
    location: usize,
    scores: Vec<f64>,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let format: Option<ReportFormat> = cli.format.map(Into::into);
    match cli.command {
        Command::Simulate { out, truth } => {
            let mut config: ScenarioConfig = load_config(&cli.config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            let scenario = make_scenario(&config)?;
            write_matrix_csv(&out, &scenario.series.data, Orientation::RowsAreSamples)?;
            let truth_path = truth.unwrap_or_else(|| out.with_extension("truth.json"));
            let text = serde_json::to_string_pretty(&scenario.truth)
                .map_err(|e| data_err(anyhow::Error::new(e)))?;
            write_out(&Some(truth_path), &format!("{text}\n"))?;
            Ok(0)
        }
        Command::Train { data, out } => {
            let mut config: ReplayConfig = load_config(&cli.config)?;
            apply_stat_overrides(&mut config.stat, cli.variant, cli.vst);
            let flows = load_csv(
                &data,
                config.p,
                config.n_g,
                config.q,
                config.orientation,
                config.header,
            )?;
            if flows.len() < config.train_flow_count {
                return Err(data_err(anyhow::anyhow!(
                    "stream has {} whole flows but the config trains on {}",
                    flows.len(),
                    config.train_flow_count
                )));
            }
            let window_seconds = config.n_g as f64 / config.sample_rate_hz;
            let model = train(
                &flows[..config.train_flow_count],
                window_seconds,
                &config.stat,
            )?;
            let text = serde_json::to_string_pretty(&model)
                .map_err(|e| data_err(anyhow::Error::new(e)))?;
            write_out(&Some(out), &format!("{text}\n"))?;
            Ok(0)
        }
        Command::Detect {
            data,
            model,
            out,
            orientation,
            header,
        } => {
            let model = load_model(&model)?;
            let flows = load_csv(
                &data,
                model.config.p,
                model.config.n_g,
                model.config.q,
                orientation.into(),
                header,
            )?;
            let mut text = String::from("flow_index,statistic,flagged\n");
            let mut any = false;
            for (index, flow) in flows.iter().enumerate() {
                let (flag, statistic) = detect(&model, flow)?;
                any |= flag;
                text.push_str(&format!("{index},{statistic},{flag}\n"));
            }
            write_out(&out, &text)?;
            Ok(if any { 3 } else { 0 })
        }
        Command::Localize {
            data,
            model,
            onset,
            out,
            orientation,
            header,
        } => {
            let model = load_model(&model)?;
            let flows = load_csv(
                &data,
                model.config.p,
                model.config.n_g,
                model.config.q,
                orientation.into(),
                header,
            )?;
            if onset < 2 || onset >= flows.len() {
                return Err(usage(format!(
                    "--onset {onset} needs two preceding flows and the stream has {} flows",
                    flows.len()
                )));
            }
            let (location, scores) =
                localize(&flows[onset - 2], &flows[onset - 1], &flows[onset], &model)?;
            let text = serde_json::to_string_pretty(&LocalizationReport { location, scores })
                .map_err(|e| data_err(anyhow::Error::new(e)))?;
            write_out(&out, &format!("{text}\n"))?;
            Ok(0)
        }
        Command::PowerTable { out } => {
            let mut config: covtest::harness::ExperimentConfig = load_config(&cli.config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            apply_stat_overrides(&mut config.stat, cli.variant, cli.vst);
            let table = run_power_table(&config)?;
            let mut w = open_out(&out)?;
            emit_report(&ReportPayload::Rates(&table), format, &mut w)?;
            Ok(0)
        }
        Command::SweepQ { budget, mode, out } => {
            let mut config: covtest::harness::ExperimentConfig = load_config(&cli.config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            apply_stat_overrides(&mut config.stat, cli.variant, cli.vst);
            let curve = sweep_q(budget, mode.into(), &config)?;
            let mut w = open_out(&out)?;
            emit_report(&ReportPayload::Curve(&curve), format, &mut w)?;
            Ok(0)
        }
        Command::Bench {
            sizes,
            p,
            reps,
            out,
        } => {
            if sizes.is_empty() {
                return Err(usage("--sizes needs at least one window size"));
            }
            if sizes.windows(2).any(|w| w[1] <= w[0]) || sizes[0] < 4 {
                return Err(usage("--sizes must be strictly ascending with every size >= 4"));
            }
            if p == 0 {
                return Err(usage("--p must be at least 1"));
            }
            if reps == 0 {
                return Err(usage("--reps must be at least 1"));
            }
            let rows = benchmark_scaling(p, &sizes, reps, cli.seed.unwrap_or(0))?;
            let mut w = open_out(&out)?;
            emit_report(&ReportPayload::Bench(&rows), format, &mut w)?;
            Ok(0)
        }
        Command::Replay { data, out } => {
            let mut config: ReplayConfig = load_config(&cli.config)?;
            apply_stat_overrides(&mut config.stat, cli.variant, cli.vst);
            match run_replay(&config, &data)? {
                Some(report) => {
                    let mut w = open_out(&out)?;
                    emit_report(&ReportPayload::Event(&report), format, &mut w)?;
                }
                None => {
                    eprintln!("no event detected");
                }
            }
            Ok(0)
        }
    }
}
