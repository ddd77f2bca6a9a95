//! Synthetic multichannel stream generation.
//!
//! Streams model per-unit voltage magnitudes: a static base profile per
//! channel plus independent per-sample noise, either Gaussian or a
//! moment-matched shifted Gamma (same mean and variance, positive skew).
//! Load events are injected as scheduled deviations on one target channel:
//! each segment shifts the channel's level in proportion to the load and
//! widens its fluctuation around the base level; other channels receive a
//! damped coupled version. The fluctuation widening matters because the
//! downstream test statistic is location invariant, so a pure mean shift
//! inside a window is invisible to it by design.
//!
//! Generation is deterministic per seed. Batch callers derive child seeds
//! by index (`ChaCha8Rng::seed_from_u64(seed)` plus `set_stream(index)`).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use thiserror::Error;

/// Variance of the per-sample noise on a channel with base level z0 is
/// `NOISE_VAR_FACTOR · z0` for the Gaussian model; the Gamma model matches
/// it to four significant digits (see [`gen_gmn`]).
pub const NOISE_VAR_FACTOR: f64 = 0.05;
/// Scale of the shifted-Gamma noise model.
pub const GMN_SCALE: f64 = 0.2236;
/// Fraction of the base level added back as the Gamma shift.
pub const GMN_SHIFT_FACTOR: f64 = 0.7764;

/// Errors from profile handling, generation, and signal injection.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown case {name:?}; known cases: flat, ieee30, ieee118, polish2383")]
    UnknownCase { name: String },
    #[error("case {case:?} has {expected} channels but p={got} was requested")]
    ProfileLengthMismatch {
        case: String,
        expected: usize,
        got: usize,
    },
    #[error("profile entry {index} is {value}; base levels must be finite and positive")]
    BadProfileEntry { index: usize, value: f64 },
    #[error("profile needs at least one channel")]
    EmptyProfile,
    #[error("need at least one sample column")]
    EmptyCount,
    #[error("target channel {rho} is outside 1..={p}")]
    BadChannel { rho: usize, p: usize },
    #[error("schedule needs at least one segment")]
    EmptySegments,
    #[error("segment {index} has start {start} after end {end}")]
    SegmentOrder { index: usize, start: u64, end: u64 },
    #[error("segment {index} starts at tick {start}, expected {expected} (contiguous segments)")]
    SegmentGap {
        index: usize,
        start: u64,
        expected: u64,
    },
    #[error("schedule ends at tick {end_tick} but the series has {columns} columns")]
    ScheduleOutOfRange { end_tick: u64, columns: usize },
    #[error("profile has {profile_p} channels but the series has {series_p}")]
    ProfileSeriesMismatch { profile_p: usize, series_p: usize },
    #[error("sample rate must be positive, got {got}")]
    BadSampleRate { got: f64 },
    #[error("scenario timeline is empty (train {train_s}s + test {test_s}s at {rate_hz} Hz)")]
    EmptyTimeline {
        train_s: f64,
        test_s: f64,
        rate_hz: f64,
    },
    #[error("flow geometry invalid: n_g={n_g} (min 4), q={q} (min 2)")]
    BadGeometry { n_g: usize, q: usize },
}

const IEEE30: &str = include_str!("../profiles/ieee30.csv");
const IEEE118: &str = include_str!("../profiles/ieee118.csv");
const POLISH2383: &str = include_str!("../profiles/polish2383.csv");

/// Static per-channel base levels (per-unit), the steady state the noise
/// fluctuates around.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseProfile {
    z0: Vec<f64>,
    case: String,
}

impl BaseProfile {
    /// Validates that every level is finite and positive.
    pub fn from_values(case: &str, z0: Vec<f64>) -> Result<Self, SimError> {
        if z0.is_empty() {
            return Err(SimError::EmptyProfile);
        }
        for (index, &value) in z0.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimError::BadProfileEntry { index, value });
            }
        }
        Ok(Self {
            z0,
            case: case.to_string(),
        })
    }

    /// All-ones profile of `p` channels.
    pub fn flat(p: usize) -> Result<Self, SimError> {
        Self::from_values("flat", vec![1.0; p])
    }

    /// Loads a shipped case profile. `"flat"` requires `p`; for data-file
    /// cases a provided `p` must match the profile length.
    pub fn from_case(case: &str, p: Option<usize>) -> Result<Self, SimError> {
        let text = match case {
            "flat" => {
                let p = p.ok_or(SimError::EmptyProfile)?;
                return Self::flat(p);
            }
            "ieee30" => IEEE30,
            "ieee118" => IEEE118,
            "polish2383" => POLISH2383,
            other => {
                return Err(SimError::UnknownCase {
                    name: other.to_string(),
                })
            }
        };
        let z0: Vec<f64> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().expect("shipped profile is numeric"))
            .collect();
        if let Some(p) = p {
            if p != z0.len() {
                return Err(SimError::ProfileLengthMismatch {
                    case: case.to_string(),
                    expected: z0.len(),
                    got: p,
                });
            }
        }
        Self::from_values(case, z0)
    }

    pub fn z0(&self) -> &[f64] {
        &self.z0
    }

    pub fn p(&self) -> usize {
        self.z0.len()
    }

    pub fn case(&self) -> &str {
        &self.case
    }
}

/// Noise model selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Gaussian: channel j ~ Normal(z0_j, var 0.05·z0_j).
    Gsn,
    /// Shifted Gamma with the same mean and (to four digits) variance,
    /// strictly positive skewness.
    Gmn,
}

impl NoiseKind {
    /// Human-readable description of the exact parameterization, recorded
    /// in ground-truth sidecars so generated data stays auditable.
    pub fn model_description(self) -> String {
        match self {
            NoiseKind::Gsn => {
                "per channel j: Normal(mean = z0_j, variance = 0.05*z0_j), i.i.d. per sample"
                    .to_string()
            }
            NoiseKind::Gmn => format!(
                "per channel j: Gamma(shape = z0_j, scale = {GMN_SCALE}) + {GMN_SHIFT_FACTOR}*z0_j, \
                 i.i.d. per sample; mean = z0_j exactly, variance = {:.8}*z0_j, skewness = 2/sqrt(z0_j) > 0",
                GMN_SCALE * GMN_SCALE
            ),
        }
    }
}

/// Draws `count` i.i.d. Gaussian sample columns from a caller-provided
/// generator, for batch callers that lay out their own RNG streams.
/// Columns are drawn in stream order (column-outer, channel-inner).
pub fn gen_gsn_with<R: rand::Rng + ?Sized>(
    z0: &BaseProfile,
    count: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, SimError> {
    if count == 0 {
        return Err(SimError::EmptyCount);
    }
    let dists: Vec<Normal<f64>> = z0
        .z0()
        .iter()
        .map(|&z| Normal::new(z, (NOISE_VAR_FACTOR * z).sqrt()).expect("validated profile"))
        .collect();
    let p = z0.p();
    let mut data = DMatrix::zeros(p, count);
    for j in 0..count {
        for (i, d) in dists.iter().enumerate() {
            data[(i, j)] = d.sample(rng);
        }
    }
    Ok(data)
}

/// Draws `count` i.i.d. Gaussian sample columns: channel j distributed
/// Normal(z0_j, var 0.05·z0_j). Deterministic per seed.
pub fn gen_gsn(z0: &BaseProfile, count: usize, seed: u64) -> Result<DMatrix<f64>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_gsn_with(z0, count, &mut rng)
}

/// Draws `count` i.i.d. shifted-Gamma sample columns from a caller-provided
/// generator. Columns are drawn in stream order (column-outer,
/// channel-inner).
pub fn gen_gmn_with<R: rand::Rng + ?Sized>(
    z0: &BaseProfile,
    count: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, SimError> {
    if count == 0 {
        return Err(SimError::EmptyCount);
    }
    let dists: Vec<(Gamma<f64>, f64)> = z0
        .z0()
        .iter()
        .map(|&z| {
            (
                Gamma::new(z, GMN_SCALE).expect("validated profile"),
                GMN_SHIFT_FACTOR * z,
            )
        })
        .collect();
    let p = z0.p();
    let mut data = DMatrix::zeros(p, count);
    for j in 0..count {
        for (i, (d, shift)) in dists.iter().enumerate() {
            data[(i, j)] = d.sample(rng) + shift;
        }
    }
    Ok(data)
}

/// Draws `count` i.i.d. shifted-Gamma sample columns: channel j is
/// `Gamma(shape = z0_j, scale = 0.2236) + 0.7764·z0_j`, giving mean exactly
/// z0_j, variance 0.2236²·z0_j ≈ 0.05·z0_j, and positive skewness.
/// Deterministic per seed.
pub fn gen_gmn(z0: &BaseProfile, count: usize, seed: u64) -> Result<DMatrix<f64>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_gmn_with(z0, count, &mut rng)
}

/// Dispatches to the selected noise model with a caller-provided generator.
pub fn gen_noise_with<R: rand::Rng + ?Sized>(
    kind: NoiseKind,
    z0: &BaseProfile,
    count: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, SimError> {
    match kind {
        NoiseKind::Gsn => gen_gsn_with(z0, count, rng),
        NoiseKind::Gmn => gen_gmn_with(z0, count, rng),
    }
}

/// A generated sample stream with its sampling rate.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSeries {
    pub data: DMatrix<f64>,
    pub sample_rate_hz: f64,
}

impl SampleSeries {
    pub fn p(&self) -> usize {
        self.data.nrows()
    }

    pub fn columns(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.columns() as f64 / self.sample_rate_hz
    }
}

/// Shape of a load event on the target channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SignalType {
    /// Staircase load increase: voltage dips deeper in each segment.
    #[serde(rename = "I")]
    Dip,
    /// Staircase load decrease: voltage swells higher in each segment.
    #[serde(rename = "II")]
    Swell,
    /// Load rises then partially recovers: dip followed by partial return.
    #[serde(rename = "III")]
    DipSwell,
}

impl std::fmt::Display for SignalType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SignalType::Dip => "I",
            SignalType::Swell => "II",
            SignalType::DipSwell => "III",
        })
    }
}

/// One schedule segment: 1-based inclusive tick range and the load level
/// in MW (positive loads depress voltage, negative loads raise it).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Segment {
    pub start_tick: u64,
    pub end_tick: u64,
    pub load_mw: f64,
}

/// A load-event schedule: contiguous ordered segments applied to one
/// 1-based target channel.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SignalSchedule {
    pub target_channel: usize,
    pub signal_type: SignalType,
    pub segments: Vec<Segment>,
}

impl SignalSchedule {
    /// Validates ordering and contiguity (each segment starts one tick
    /// after the previous ends).
    pub fn new(
        target_channel: usize,
        signal_type: SignalType,
        segments: Vec<Segment>,
    ) -> Result<Self, SimError> {
        if segments.is_empty() {
            return Err(SimError::EmptySegments);
        }
        let mut expected = segments[0].start_tick;
        for (index, seg) in segments.iter().enumerate() {
            if seg.start_tick > seg.end_tick {
                return Err(SimError::SegmentOrder {
                    index,
                    start: seg.start_tick,
                    end: seg.end_tick,
                });
            }
            if seg.start_tick != expected {
                return Err(SimError::SegmentGap {
                    index,
                    start: seg.start_tick,
                    expected,
                });
            }
            expected = seg.end_tick + 1;
        }
        Ok(Self {
            target_channel,
            signal_type,
            segments,
        })
    }

    fn from_table(rho: usize, signal_type: SignalType, table: &[(u64, u64, f64)]) -> Self {
        let segments = table
            .iter()
            .map(|&(start_tick, end_tick, load_mw)| Segment {
                start_tick,
                end_tick,
                load_mw,
            })
            .collect();
        Self::new(rho, signal_type, segments).expect("built-in tables are contiguous")
    }

    /// Three-step load increase over ticks 1..=1000.
    pub fn type_i(rho: usize) -> Self {
        Self::from_table(
            rho,
            SignalType::Dip,
            &[(1, 300, 40.0), (301, 600, 80.0), (601, 1000, 120.0)],
        )
    }

    /// Five-step load decrease over ticks 1..=1000.
    pub fn type_ii(rho: usize) -> Self {
        Self::from_table(
            rho,
            SignalType::Swell,
            &[
                (1, 300, -10.0),
                (301, 540, -25.1),
                (541, 780, -39.3),
                (781, 900, -62.7),
                (901, 1000, -75.3),
            ],
        )
    }

    /// Load rise with a final partial recovery over ticks 1..=1000.
    pub fn type_iii(rho: usize) -> Self {
        Self::from_table(
            rho,
            SignalType::DipSwell,
            &[
                (1, 300, 10.0),
                (301, 600, 60.0),
                (601, 900, 120.0),
                (901, 1000, 35.0),
            ],
        )
    }

    /// Builder for the given type.
    pub fn of_type(signal_type: SignalType, rho: usize) -> Self {
        match signal_type {
            SignalType::Dip => Self::type_i(rho),
            SignalType::Swell => Self::type_ii(rho),
            SignalType::DipSwell => Self::type_iii(rho),
        }
    }

    /// Shifts every segment later by `ticks`, placing a relative table at
    /// an absolute stream position.
    pub fn offset_by(&self, ticks: u64) -> Self {
        Self {
            target_channel: self.target_channel,
            signal_type: self.signal_type,
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    start_tick: s.start_tick + ticks,
                    end_tick: s.end_tick + ticks,
                    load_mw: s.load_mw,
                })
                .collect(),
        }
    }

    /// Last tick covered by the schedule.
    pub fn end_tick(&self) -> u64 {
        self.segments.last().map(|s| s.end_tick).unwrap_or(0)
    }

    /// First tick covered by the schedule.
    pub fn start_tick(&self) -> u64 {
        self.segments.first().map(|s| s.start_tick).unwrap_or(0)
    }
}

/// Strength parameters of the load-to-measurement mapping.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SignalParams {
    /// Level shift per MW (per-unit); a 40 MW load dips the channel 2%.
    pub sensitivity: f64,
    /// Fraction of the target's shift and widening leaked to other channels.
    pub coupling: f64,
    /// Fluctuation widening per unit of |shift|; the multiplier applied to
    /// deviations from the base level is `1 + volatility_gain·sensitivity·|MW|`.
    pub volatility_gain: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self {
            sensitivity: 5e-4,
            coupling: 0.1,
            volatility_gain: 50.0,
        }
    }
}

/// Applies a load schedule to a series.
///
/// Within each segment, sample `x` of channel `j` becomes
/// `z0_j + shift_j + mult_j·(x - z0_j)`: the target channel gets
/// `shift = -sensitivity·MW` and `mult = 1 + volatility_gain·sensitivity·|MW|`;
/// every other channel gets the coupling-damped pair. Samples whose
/// transform is the identity are left bit-identical, so a zero-sensitivity
/// schedule returns the input unchanged.
pub fn apply_signal(
    series: &SampleSeries,
    z0: &BaseProfile,
    schedule: &SignalSchedule,
    params: &SignalParams,
) -> Result<SampleSeries, SimError> {
    let p = series.p();
    if z0.p() != p {
        return Err(SimError::ProfileSeriesMismatch {
            profile_p: z0.p(),
            series_p: p,
        });
    }
    let rho = schedule.target_channel;
    if rho < 1 || rho > p {
        return Err(SimError::BadChannel { rho, p });
    }
    if schedule.end_tick() > series.columns() as u64 {
        return Err(SimError::ScheduleOutOfRange {
            end_tick: schedule.end_tick(),
            columns: series.columns(),
        });
    }
    let mut data = series.data.clone();
    for seg in &schedule.segments {
        let shift_target = -params.sensitivity * seg.load_mw;
        let mult_target = 1.0 + params.volatility_gain * params.sensitivity * seg.load_mw.abs();
        let shift_other = params.coupling * shift_target;
        let mult_other = 1.0 + params.coupling * (mult_target - 1.0);
        for tick in seg.start_tick..=seg.end_tick {
            let col = (tick - 1) as usize;
            for i in 0..p {
                let (shift, mult) = if i + 1 == rho {
                    (shift_target, mult_target)
                } else {
                    (shift_other, mult_other)
                };
                if shift == 0.0 && mult == 1.0 {
                    continue;
                }
                let z = z0.z0()[i];
                data[(i, col)] = z + shift + mult * (data[(i, col)] - z);
            }
        }
    }
    Ok(SampleSeries {
        data,
        sample_rate_hz: series.sample_rate_hz,
    })
}

fn default_sensitivity() -> f64 {
    SignalParams::default().sensitivity
}
fn default_coupling() -> f64 {
    SignalParams::default().coupling
}
fn default_volatility_gain() -> f64 {
    SignalParams::default().volatility_gain
}
fn default_sample_rate() -> f64 {
    50.0
}
fn default_train_seconds() -> f64 {
    300.0
}
fn default_test_seconds() -> f64 {
    60.0
}
fn default_event_start() -> f64 {
    320.0
}

/// Full scenario description, loadable from a TOML key-value file.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScenarioConfig {
    pub case: String,
    pub p: usize,
    pub n_g: usize,
    pub q: usize,
    pub noise: NoiseKind,
    pub signal_type: SignalType,
    /// Target channel, 1-based.
    pub rho: usize,
    pub seed: u64,
    #[serde(default = "default_sensitivity")]
    pub sensitivity: f64,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default = "default_volatility_gain")]
    pub volatility_gain: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_train_seconds")]
    pub train_seconds: f64,
    #[serde(default = "default_test_seconds")]
    pub test_seconds: f64,
    #[serde(default = "default_event_start")]
    pub event_start_s: f64,
}

impl ScenarioConfig {
    pub fn signal_params(&self) -> SignalParams {
        SignalParams {
            sensitivity: self.sensitivity,
            coupling: self.coupling,
            volatility_gain: self.volatility_gain,
        }
    }
}

/// Ground truth attached to a generated scenario, written as a JSON sidecar.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub case: String,
    pub p: usize,
    pub n_g: usize,
    pub q: usize,
    pub noise: NoiseKind,
    pub noise_model: String,
    pub signal_type: SignalType,
    pub target_channel: usize,
    pub event_start_s: f64,
    pub event_end_s: f64,
    pub event_start_tick: u64,
    pub event_end_tick: u64,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
    pub sensitivity: f64,
    pub coupling: f64,
    pub volatility_gain: f64,
    /// Absolute (stream-position) schedule segments.
    pub segments: Vec<Segment>,
}

/// A generated scenario: the stream, its profile, and the ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub profile: BaseProfile,
    pub series: SampleSeries,
    pub truth: GroundTruth,
}

/// Generates a labeled scenario stream: a training span of pure noise
/// followed by a test span containing the scheduled event.
pub fn make_scenario(config: &ScenarioConfig) -> Result<Scenario, SimError> {
    if config.n_g < 4 || config.q < 2 {
        return Err(SimError::BadGeometry {
            n_g: config.n_g,
            q: config.q,
        });
    }
    if !(config.sample_rate_hz > 0.0 && config.sample_rate_hz.is_finite()) {
        return Err(SimError::BadSampleRate {
            got: config.sample_rate_hz,
        });
    }
    let profile = BaseProfile::from_case(&config.case, Some(config.p))?;
    if config.rho < 1 || config.rho > profile.p() {
        return Err(SimError::BadChannel {
            rho: config.rho,
            p: profile.p(),
        });
    }
    let rate = config.sample_rate_hz;
    let columns = ((config.train_seconds + config.test_seconds) * rate).round() as usize;
    if columns == 0 {
        return Err(SimError::EmptyTimeline {
            train_s: config.train_seconds,
            test_s: config.test_seconds,
            rate_hz: rate,
        });
    }
    let data = match config.noise {
        NoiseKind::Gsn => gen_gsn(&profile, columns, config.seed)?,
        NoiseKind::Gmn => gen_gmn(&profile, columns, config.seed)?,
    };
    let clean = SampleSeries {
        data,
        sample_rate_hz: rate,
    };
    let offset = (config.event_start_s * rate).round() as u64;
    let schedule = SignalSchedule::of_type(config.signal_type, config.rho).offset_by(offset);
    let series = apply_signal(&clean, &profile, &schedule, &config.signal_params())?;
    let truth = GroundTruth {
        schema_version: 1,
        case: config.case.clone(),
        p: profile.p(),
        n_g: config.n_g,
        q: config.q,
        noise: config.noise,
        noise_model: config.noise.model_description(),
        signal_type: config.signal_type,
        target_channel: config.rho,
        event_start_s: schedule.start_tick().saturating_sub(1) as f64 / rate,
        event_end_s: schedule.end_tick() as f64 / rate,
        event_start_tick: schedule.start_tick(),
        event_end_tick: schedule.end_tick(),
        train_seconds: config.train_seconds,
        test_seconds: config.test_seconds,
        sample_rate_hz: rate,
        seed: config.seed,
        sensitivity: config.sensitivity,
        coupling: config.coupling,
        volatility_gain: config.volatility_gain,
        segments: schedule.segments.clone(),
    };
    Ok(Scenario {
        config: config.clone(),
        profile,
        series,
        truth,
    })
}
