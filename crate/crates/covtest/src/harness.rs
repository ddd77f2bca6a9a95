//! Experiment driver: Monte Carlo detection/false-alarm rate tables, a
//! window-count sweep at fixed sample budget, end-to-end scenario runs
//! against generated ground truth, replay of external streams, and report
//! emission in CSV or JSON.
//!
//! All Monte Carlo runs are deterministic per seed and independent of
//! worker count: replicate r of arm a in grid cell c draws from the RNG
//! stream `((c·3 + a) << 32) | r` of one seeded generator, so any
//! replicate can be regenerated in isolation and changing one arm's
//! parameters never shifts another arm's data.

use crate::classical::{clr_stat, lr_stat, ClassicalError};
use crate::detector::{
    detect, estimate_duration, localize, train, DetectorError, EventReport,
};
use crate::fastcompute::BenchRow;
use crate::matrixflow::{load_csv, FlowError, MatrixFlow, Orientation};
use crate::simgen::{
    gen_noise_with, make_scenario, BaseProfile, NoiseKind, Scenario, SimError,
};
use crate::ustat::{empirical_rates, far_threshold, standardize_with, StatConfig, StatError};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Fewest replicates accepted for rate estimation; below this the
/// empirical rates are too noisy to be meaningful at the usual levels.
pub const MIN_RATE_REPLICATES: usize = 100;

/// Errors from experiment configuration, execution, and report emission.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("rate estimation needs at least {min} replicates, got {got}")]
    BadReplicates { got: usize, min: usize },
    #[error("tau must lie strictly between 0 and 1, got {tau}")]
    BadTau { tau: f64 },
    #[error("experiment grid is empty")]
    EmptyGrid,
    #[error("no methods selected")]
    EmptyMethods,
    #[error("grid cell (p={p}, n_g={n_g}, q={q}) is invalid; need p >= 1, n_g >= 4, q >= 2")]
    BadCell { p: usize, n_g: usize, q: usize },
    #[error("{name} must be a finite positive factor, got {got}")]
    BadScale { name: &'static str, got: f64 },
    #[error("budget {budget} is not divisible by q={q}")]
    IndivisibleBudget { budget: usize, q: usize },
    #[error("budget {budget} at q={q} gives window size {n_g}, below the minimum of 4")]
    SweepWindowTooSmall { budget: usize, q: usize, n_g: usize },
    #[error("stream has {flows} flows, leaving none to test after {train} training flows")]
    NoTestFlows { flows: usize, train: usize },
    #[error("event reports have no CSV form; use JSON")]
    EventNeedsJson,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Classical(#[from] ClassicalError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// One experiment grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridCell {
    pub p: usize,
    pub n_g: usize,
    pub q: usize,
}

/// A rate-table method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Method {
    #[serde(rename = "proposed")]
    Proposed,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "CLR")]
    Clr,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Proposed => "proposed",
            Method::Lr => "LR",
            Method::Clr => "CLR",
        })
    }
}

fn default_h1_scale() -> f64 {
    2.0
}
fn default_sweep_scale() -> f64 {
    1.2
}

/// Monte Carlo experiment description, loadable from TOML.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    pub grid: Vec<GridCell>,
    pub noise: NoiseKind,
    pub replicates: usize,
    /// Nominal false-alarm rate in (0, 1).
    pub tau: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Variance factor applied to the first window in the alternative arm.
    #[serde(default = "default_h1_scale")]
    pub h1_scale: f64,
    /// Variance factor applied to the changed windows in the sweep's
    /// alternative arm.
    #[serde(default = "default_sweep_scale")]
    pub sweep_scale: f64,
    #[serde(default)]
    pub stat: StatConfig,
}

/// One rate-table row; `None` rates mark a method that is inapplicable at
/// the cell's dimensions and appear as `-` in CSV.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateRow {
    pub p: usize,
    pub n_g: usize,
    pub q: usize,
    pub method: Method,
    #[serde(rename = "DR")]
    pub dr: Option<f64>,
    #[serde(rename = "FAR")]
    pub far: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
}

/// Detection/false-alarm rates per grid cell and method.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl RateTable {
    /// Plot-ready CSV with the fixed header
    /// `p,n_g,q,method,DR,FAR,replicates,seed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,n_g,q,method,DR,FAR,replicates,seed\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.p,
                r.n_g,
                r.q,
                r.method,
                opt_cell(r.dr),
                opt_cell(r.far),
                r.replicates,
                r.seed
            ));
        }
        out
    }
}

/// One point of the window-count sweep.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub q: usize,
    #[serde(rename = "DR")]
    pub dr: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Detection rate as a function of the window count.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepCurve {
    pub rows: Vec<SweepRow>,
}

impl SweepCurve {
    /// Plot-ready CSV with the fixed header `q,DR,replicates,seed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,DR,replicates,seed\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.q, r.dr, r.replicates, r.seed));
        }
        out
    }

    /// The curve as (q, DR) points.
    pub fn points(&self) -> Vec<(usize, f64)> {
        self.rows.iter().map(|r| (r.q, r.dr)).collect()
    }
}

/// How the sweep allocates samples as q varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// The budget is the whole flow: `n_g = budget / q` (must divide).
    FixedTotal,
    /// The budget is one window: `n_g = budget` at every q.
    FixedWindow,
}

fn validate_common(config: &ExperimentConfig) -> Result<(), HarnessError> {
    if config.grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    for cell in &config.grid {
        if cell.p < 1 || cell.n_g < 4 || cell.q < 2 {
            return Err(HarnessError::BadCell {
                p: cell.p,
                n_g: cell.n_g,
                q: cell.q,
            });
        }
    }
    if config.replicates < MIN_RATE_REPLICATES {
        return Err(HarnessError::BadReplicates {
            got: config.replicates,
            min: MIN_RATE_REPLICATES,
        });
    }
    if !(config.tau > 0.0 && config.tau < 1.0) {
        return Err(HarnessError::BadTau { tau: config.tau });
    }
    for (name, got) in [
        ("h1_scale", config.h1_scale),
        ("sweep_scale", config.sweep_scale),
    ] {
        if !(got.is_finite() && got > 0.0) {
            return Err(HarnessError::BadScale { name, got });
        }
    }
    Ok(())
}

/// Per-replicate scores of one arm; vectors are empty for methods that
/// were not evaluated.
struct ArmScores {
    proposed: Vec<f64>,
    lr: Vec<f64>,
    clr: Vec<f64>,
}

/// Draws one replicate flow from its dedicated RNG stream. The alternative
/// arm scales the deviations of the first `scaled_windows` windows around
/// the flat base level 1.0 by `sqrt(factor)`, multiplying their noise
/// variance by `factor`.
fn replicate_flow(
    config: &ExperimentConfig,
    profile: &BaseProfile,
    cell: GridCell,
    cell_idx: usize,
    arm: usize,
    rep: usize,
    scaled_windows: usize,
    factor: f64,
) -> Result<MatrixFlow, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream((((cell_idx * 3 + arm) as u64) << 32) | rep as u64);
    let mut data: DMatrix<f64> =
        gen_noise_with(config.noise, profile, cell.q * cell.n_g, &mut rng)?;
    if scaled_windows > 0 && factor != 1.0 {
        let s = factor.sqrt();
        for j in 0..scaled_windows * cell.n_g {
            for i in 0..data.nrows() {
                data[(i, j)] = 1.0 + s * (data[(i, j)] - 1.0);
            }
        }
    }
    Ok(MatrixFlow::from_concatenated(&data, cell.q)?)
}

#[allow(clippy::too_many_arguments)]
fn run_arm(
    config: &ExperimentConfig,
    profile: &BaseProfile,
    cell: GridCell,
    cell_idx: usize,
    arm: usize,
    scaled_windows: usize,
    factor: f64,
    want: (bool, bool, bool),
) -> Result<ArmScores, HarnessError> {
    let (want_proposed, want_lr, want_clr) = want;
    let per_rep: Vec<(Option<f64>, Option<f64>, Option<f64>)> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| -> Result<_, HarnessError> {
            let flow = replicate_flow(
                config,
                profile,
                cell,
                cell_idx,
                arm,
                rep,
                scaled_windows,
                factor,
            )?;
            let proposed = if want_proposed {
                Some(standardize_with(&flow, &config.stat)?.score)
            } else {
                None
            };
            let lr = if want_lr {
                Some(-2.0 * lr_stat(&flow)?)
            } else {
                None
            };
            let clr = if want_clr {
                Some(clr_stat(&flow)?)
            } else {
                None
            };
            Ok((proposed, lr, clr))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut scores = ArmScores {
        proposed: Vec::new(),
        lr: Vec::new(),
        clr: Vec::new(),
    };
    for (p, l, c) in per_rep {
        if let Some(v) = p {
            scores.proposed.push(v);
        }
        if let Some(v) = l {
            scores.lr.push(v);
        }
        if let Some(v) = c {
            scores.clr.push(v);
        }
    }
    Ok(scores)
}

/// Empirical upper-tail quantile: the value such that a fraction `tau` of
/// the scores lies strictly above it, computed as the `ceil((1-tau)·R)`-th
/// smallest score.
fn empirical_upper_quantile(scores: &[f64], tau: f64) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len();
    let idx = ((1.0 - tau) * r as f64).ceil() as usize;
    sorted[idx.clamp(1, r) - 1]
}

/// Estimates detection and false-alarm rates over the configured grid.
///
/// Each cell runs a null arm (all windows identically distributed around
/// the flat base level) and an alternative arm (first window's variance
/// scaled by `h1_scale`); all requested methods score the same replicate
/// flows. The pooled-statistic threshold is the analytic
/// [`far_threshold`]; the baseline methods are thresholded at the
/// `(1-tau)` empirical quantile of a dedicated calibration arm generated
/// within the same run. Methods whose dimension requirements fail at a
/// cell get `None` rates. Deterministic per seed.
pub fn run_power_table(config: &ExperimentConfig) -> Result<RateTable, HarnessError> {
    validate_common(config)?;
    if config.methods.is_empty() {
        return Err(HarnessError::EmptyMethods);
    }
    let alpha = far_threshold(config.tau).map_err(HarnessError::from)?;
    let mut rows = Vec::with_capacity(config.grid.len() * config.methods.len());
    for (cell_idx, &cell) in config.grid.iter().enumerate() {
        let profile = BaseProfile::flat(cell.p)?;
        let want_proposed = config.methods.contains(&Method::Proposed);
        // Degrees of freedom per window is n_g - 1, so the plain
        // likelihood ratio needs p < n_g and the corrected form's spectrum
        // ratios need p < n_g - 1.
        let lr_applicable = cell.p < cell.n_g;
        let clr_applicable = cell.p < cell.n_g - 1;
        let want_lr = config.methods.contains(&Method::Lr) && lr_applicable;
        let want_clr = config.methods.contains(&Method::Clr) && clr_applicable;
        let want = (want_proposed, want_lr, want_clr);
        let h0 = run_arm(config, &profile, cell, cell_idx, 0, 0, 1.0, want)?;
        let h1 = run_arm(
            config,
            &profile,
            cell,
            cell_idx,
            1,
            1,
            config.h1_scale,
            want,
        )?;
        let calibration = if want_lr || want_clr {
            Some(run_arm(
                config,
                &profile,
                cell,
                cell_idx,
                2,
                0,
                1.0,
                (false, want_lr, want_clr),
            )?)
        } else {
            None
        };
        for &method in &config.methods {
            let (dr, far) = match method {
                Method::Proposed => {
                    let (far, dr) = empirical_rates(&h0.proposed, &h1.proposed, alpha)?;
                    (Some(dr), Some(far))
                }
                Method::Lr if want_lr => {
                    let cal = &calibration.as_ref().expect("calibration arm present").lr;
                    let threshold = empirical_upper_quantile(cal, config.tau);
                    let (far, dr) = empirical_rates(&h0.lr, &h1.lr, threshold)?;
                    (Some(dr), Some(far))
                }
                Method::Clr if want_clr => {
                    let cal = &calibration.as_ref().expect("calibration arm present").clr;
                    let threshold = empirical_upper_quantile(cal, config.tau);
                    let (far, dr) = empirical_rates(&h0.clr, &h1.clr, threshold)?;
                    (Some(dr), Some(far))
                }
                _ => (None, None),
            };
            rows.push(RateRow {
                p: cell.p,
                n_g: cell.n_g,
                q: cell.q,
                method,
                dr,
                far,
                replicates: config.replicates,
                seed: config.seed,
            });
        }
    }
    Ok(RateTable { rows })
}

/// Detection rate of the pooled test as a function of the window count q.
///
/// The q values come from the grid rows in order. `FixedTotal` splits the
/// budget into q windows of `budget/q` samples; `FixedWindow` keeps every
/// window at `budget` samples. The alternative scales the variance of the
/// first `floor(q/2)` windows by `sweep_scale`, so the covariance change
/// always splits the flow into two blocks. Deterministic per seed.
pub fn sweep_q(
    total_budget: usize,
    mode: SweepMode,
    config: &ExperimentConfig,
) -> Result<SweepCurve, HarnessError> {
    validate_common(config)?;
    let alpha = far_threshold(config.tau).map_err(HarnessError::from)?;
    let mut rows = Vec::with_capacity(config.grid.len());
    for (cell_idx, &cell) in config.grid.iter().enumerate() {
        let q = cell.q;
        let n_g = match mode {
            SweepMode::FixedTotal => {
                if total_budget % q != 0 {
                    return Err(HarnessError::IndivisibleBudget {
                        budget: total_budget,
                        q,
                    });
                }
                total_budget / q
            }
            SweepMode::FixedWindow => total_budget,
        };
        if n_g < 4 {
            return Err(HarnessError::SweepWindowTooSmall {
                budget: total_budget,
                q,
                n_g,
            });
        }
        let resolved = GridCell { p: cell.p, n_g, q };
        let profile = BaseProfile::flat(cell.p)?;
        let h1 = run_arm(
            config,
            &profile,
            resolved,
            cell_idx,
            1,
            q / 2,
            config.sweep_scale,
            (true, false, false),
        )?;
        let dr =
            h1.proposed.iter().filter(|&&s| s >= alpha).count() as f64 / config.replicates as f64;
        rows.push(SweepRow {
            q,
            dr,
            replicates: config.replicates,
            seed: config.seed,
        });
    }
    Ok(SweepCurve { rows })
}

/// How a detected event compares to a scenario's ground truth.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ScenarioScore {
    /// Detected onset flow minus the flow containing the true event start.
    pub onset_error_flows: i64,
    /// Absolute difference between estimated and true event duration.
    pub duration_error_s: f64,
    /// True when the localized channel is the scheduled target channel.
    pub localization_hit: bool,
}

/// Result of an end-to-end scenario run: the ground truth, and the event
/// report with its score when anything was flagged.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutcome {
    pub truth: crate::simgen::GroundTruth,
    pub report: Option<EventReport>,
    pub score: Option<ScenarioScore>,
}

/// Partitions the leading whole flows out of a concatenated stream.
fn stream_flows(data: &DMatrix<f64>, n_g: usize, q: usize) -> Result<Vec<MatrixFlow>, FlowError> {
    let flow_cols = q * n_g;
    let count = data.ncols() / flow_cols;
    let mut flows = Vec::with_capacity(count);
    for k in 0..count {
        let block = data.columns(k * flow_cols, flow_cols).into_owned();
        flows.push(MatrixFlow::from_concatenated(&block, q)?);
    }
    Ok(flows)
}

/// Runs the full pipeline on a generated scenario: train on the training
/// span, test every following flow, and on detection localize from the
/// onset flow and its two predecessors and score against the ground truth.
pub fn scenario_outcome(
    scenario: &Scenario,
    stat: &StatConfig,
) -> Result<ScenarioOutcome, HarnessError> {
    let config = &scenario.config;
    let (n_g, q) = (config.n_g, config.q);
    let flow_cols = q * n_g;
    let rate = config.sample_rate_hz;
    let flows = stream_flows(&scenario.series.data, n_g, q)?;
    let train_cols = (config.train_seconds * rate).round() as usize;
    let train_flows = train_cols / flow_cols;
    if train_flows == 0 || train_flows >= flows.len() {
        return Err(HarnessError::NoTestFlows {
            flows: flows.len(),
            train: train_flows,
        });
    }
    let window_seconds = n_g as f64 / rate;
    let model = train(&flows[..train_flows], window_seconds, stat)?;
    let mut flags = Vec::with_capacity(flows.len() - train_flows);
    let mut stats = Vec::with_capacity(flows.len() - train_flows);
    for flow in &flows[train_flows..] {
        let (flag, v) = detect(&model, flow)?;
        flags.push(flag);
        stats.push(v);
    }
    let truth = scenario.truth.clone();
    let Some(first) = flags.iter().position(|&f| f) else {
        return Ok(ScenarioOutcome {
            truth,
            report: None,
            score: None,
        });
    };
    // Training needs at least 30 flows, so the onset always has two
    // predecessors in the stream.
    let onset = train_flows + first;
    let (location, scores) = localize(&flows[onset - 2], &flows[onset - 1], &flows[onset], &model)?;
    let duration_s = estimate_duration(&flags, q, window_seconds)?;
    let report = EventReport {
        onset_flow_index: onset,
        magnitude: stats[first],
        duration_s,
        location,
        flags,
        scores,
    };
    let expected_onset = ((truth.event_start_tick - 1) / flow_cols as u64) as i64;
    let true_duration = (truth.event_end_tick - truth.event_start_tick + 1) as f64 / rate;
    let score = ScenarioScore {
        onset_error_flows: onset as i64 - expected_onset,
        duration_error_s: (duration_s - true_duration).abs(),
        localization_hit: location == truth.target_channel,
    };
    Ok(ScenarioOutcome {
        truth,
        report: Some(report),
        score: Some(score),
    })
}

/// Loads a scenario description from TOML, generates its stream, and runs
/// the full pipeline against the embedded ground truth.
pub fn run_scenario(path: &Path, stat: &StatConfig) -> Result<ScenarioOutcome, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let config: crate::simgen::ScenarioConfig = toml::from_str(&text)?;
    let scenario = make_scenario(&config)?;
    scenario_outcome(&scenario, stat)
}

/// Geometry and split for replaying an external CSV stream with no ground
/// truth attached.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReplayConfig {
    pub p: usize,
    pub n_g: usize,
    pub q: usize,
    pub sample_rate_hz: f64,
    /// Leading flows used for training; the rest are tested.
    pub train_flow_count: usize,
    #[serde(default)]
    pub stat: StatConfig,
    #[serde(default)]
    pub orientation: Orientation,
    /// Whether the CSV's first line is a header to skip.
    #[serde(default)]
    pub header: bool,
}

/// Replays an external stream: trains on the leading
/// `train_flow_count` flows, tests the rest, and reports the event if one
/// is flagged. Without ground truth there is nothing to score, so the
/// report stands alone; `None` means no flow was flagged.
pub fn run_replay(
    config: &ReplayConfig,
    data_path: &Path,
) -> Result<Option<EventReport>, HarnessError> {
    let flows = load_csv(
        data_path,
        config.p,
        config.n_g,
        config.q,
        config.orientation,
        config.header,
    )?;
    if flows.len() <= config.train_flow_count {
        return Err(HarnessError::NoTestFlows {
            flows: flows.len(),
            train: config.train_flow_count,
        });
    }
    let window_seconds = config.n_g as f64 / config.sample_rate_hz;
    let model = train(
        &flows[..config.train_flow_count],
        window_seconds,
        &config.stat,
    )?;
    let test_count = flows.len() - config.train_flow_count;
    let mut flags = Vec::with_capacity(test_count);
    let mut stats = Vec::with_capacity(test_count);
    for flow in &flows[config.train_flow_count..] {
        let (flag, v) = detect(&model, flow)?;
        flags.push(flag);
        stats.push(v);
    }
    let Some(first) = flags.iter().position(|&f| f) else {
        return Ok(None);
    };
    let onset = config.train_flow_count + first;
    let (location, scores) = localize(&flows[onset - 2], &flows[onset - 1], &flows[onset], &model)?;
    let duration_s = estimate_duration(&flags, config.q, window_seconds)?;
    Ok(Some(EventReport {
        onset_flow_index: onset,
        magnitude: stats[first],
        duration_s,
        location,
        flags,
        scores,
    }))
}

/// Report output format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// What to emit.
pub enum ReportPayload<'a> {
    Rates(&'a RateTable),
    Event(&'a EventReport),
    Curve(&'a SweepCurve),
    Bench(&'a [BenchRow]),
}

#[derive(serde::Serialize)]
struct VersionedRows<'a, T: serde::Serialize> {
    schema_version: u32,
    rows: &'a [T],
}

fn write_versioned<T: serde::Serialize, W: Write>(
    out: &mut W,
    rows: &[T],
) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(
        &mut *out,
        &VersionedRows {
            schema_version: 1,
            rows,
        },
    )?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes a report with a stable field order. Tables default to CSV and
/// event reports to JSON when no format is given; JSON tables are wrapped
/// as `{"schema_version": 1, "rows": [...]}` while event reports are flat
/// objects. Event reports have no CSV form: requesting one is an error.
pub fn emit_report<W: Write>(
    payload: &ReportPayload<'_>,
    format: Option<ReportFormat>,
    out: &mut W,
) -> Result<(), HarnessError> {
    let chosen = format.unwrap_or(match payload {
        ReportPayload::Event(_) => ReportFormat::Json,
        _ => ReportFormat::Csv,
    });
    match (payload, chosen) {
        (ReportPayload::Rates(table), ReportFormat::Csv) => {
            out.write_all(table.to_csv().as_bytes())?;
        }
        (ReportPayload::Rates(table), ReportFormat::Json) => {
            write_versioned(out, &table.rows)?;
        }
        (ReportPayload::Curve(curve), ReportFormat::Csv) => {
            out.write_all(curve.to_csv().as_bytes())?;
        }
        (ReportPayload::Curve(curve), ReportFormat::Json) => {
            write_versioned(out, &curve.rows)?;
        }
        (ReportPayload::Bench(rows), ReportFormat::Csv) => {
            let mut text = String::from("n_g,exact_ns,fast_ns\n");
            for r in rows.iter() {
                text.push_str(&format!("{},{},{}\n", r.n_g, r.exact_ns, r.fast_ns));
            }
            out.write_all(text.as_bytes())?;
        }
        (ReportPayload::Bench(rows), ReportFormat::Json) => {
            write_versioned(out, rows)?;
        }
        (ReportPayload::Event(report), ReportFormat::Json) => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            out.write_all(b"\n")?;
        }
        (ReportPayload::Event(_), ReportFormat::Csv) => {
            return Err(HarnessError::EventNeedsJson);
        }
    }
    Ok(())
}
