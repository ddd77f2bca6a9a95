//! Multi-population covariance-equality statistics.
//!
//! For each window the squared covariance trace tr(Σ²) is estimated by a
//! three-term tuple statistic; for each window pair the cross trace
//! tr(Σ_s Σ_t) by a four-term one. Their combination per pair measures the
//! squared Frobenius distance between the two covariance matrices, is zero
//! in expectation exactly when they are equal, and needs no covariance
//! matrix estimate, so the channel count may exceed the window size. The
//! pooled statistic averages all pairs of a flow; dividing by a variance
//! estimate gives a score that is approximately standard normal under the
//! equal-covariance hypothesis, which turns a false-alarm budget into a
//! plain Gaussian threshold.
//!
//! All estimators are exactly location invariant, so per-window centering
//! (used by the standardized path for conditioning) never changes their
//! value in exact arithmetic.

use crate::fastcompute::{a_terms_fast, c_fast, gram, principal_stat, ComputeError};
use crate::matrixflow::{MatrixFlow, WindowMatrix};
use crate::numeric::NeumaierSum;
use thiserror::Error;

/// Errors from statistic evaluation and calibration helpers.
#[derive(Debug, Error)]
pub enum StatError {
    #[error("window size {got} is below the minimum 4 required by the four-tuple estimators")]
    WindowTooSmall { got: usize },
    #[error("channel counts differ: {left} vs {right}")]
    ChannelMismatch { left: usize, right: usize },
    #[error("window sizes differ: {left} vs {right}; the cross estimator pairs samples by index")]
    WindowSizeMismatch { left: usize, right: usize },
    #[error("variance estimate is zero but the statistic is {statistic}; score undefined")]
    DegenerateVariance { statistic: f64 },
    #[error("tau must lie strictly between 0 and 1, got {tau}")]
    BadTau { tau: f64 },
    #[error("empirical rates need at least one score in each arm")]
    EmptyScores,
    #[error(transparent)]
    Compute(#[from] ComputeError),
}

/// Form of the pairwise statistic: how often the cross term is subtracted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VstForm {
    /// `A_s + A_t - 2·C_st`: estimates the squared Frobenius distance
    /// tr((Σ_s - Σ_t)²) and is exactly zero for identical windows (default).
    #[default]
    #[serde(rename = "twoC")]
    TwoC,
    /// `A_s + A_t - C_st`: single cross term. Not a squared distance and
    /// not zero for identical windows; kept selectable for comparison, and
    /// noted on stderr once per process when used.
    #[serde(rename = "paper-literal")]
    Literal,
}

impl VstForm {
    fn cross_coefficient(self) -> f64 {
        match self {
            VstForm::TwoC => 2.0,
            VstForm::Literal => 1.0,
        }
    }
}

fn note_literal_form() {
    static NOTE: std::sync::Once = std::sync::Once::new();
    NOTE.call_once(|| {
        eprintln!(
            "note: pair form \"paper-literal\" in effect: V_st = A_s + A_t - C_st \
             (the default \"twoC\" subtracts 2 C_st)"
        );
    });
}

/// Which estimator evaluates the pooled statistic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatVariant {
    /// Unbiased four-tuple estimators, O(n_g²) per pair after the Gram (default).
    #[default]
    Exact,
    /// Leading-term shortcut; biased, requires strictly positive raw data
    /// and windows of at least 20 samples.
    Principal,
}

/// Which variance estimate standardizes the pooled statistic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// Pooled second and fourth moments of the centered cross-Gram entries
    /// estimate the per-pair statistic variance, combined over the shared
    /// pair ensemble (default; the only mode whose scores calibrate to a
    /// standard normal in simulation).
    #[default]
    Calibrated,
    /// Square root of twice the summed analytic pair variances, scaled by
    /// the same 1/(q(q-1)) factor applied to the statistic sum.
    ScaledPairSum,
    /// Square root of twice the summed analytic pair variances, unscaled.
    RawPairSum,
}

/// Statistic configuration shared by the detector, the harness, and the CLI.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StatConfig {
    pub vst: VstForm,
    pub variant: StatVariant,
    pub sigma: SigmaMode,
}

/// A standardized test outcome: pooled statistic, its estimated standard
/// deviation, the score `statistic / std_dev`, and the number of unordered
/// window pairs that entered the pool.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub std_dev: f64,
    pub score: f64,
    pub pair_count: u64,
}

/// Analytic per-pair variance estimate `(A_s + A_t)/n_g`, clamped at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairVariance {
    pub value: f64,
    /// True when the raw estimate was negative and clamped to zero.
    pub clamped: bool,
}

fn check_window(w: &WindowMatrix) -> Result<(), StatError> {
    if w.n_g() < 4 {
        return Err(StatError::WindowTooSmall { got: w.n_g() });
    }
    Ok(())
}

fn check_pair(ws: &WindowMatrix, wt: &WindowMatrix) -> Result<(), StatError> {
    if ws.p() != wt.p() {
        return Err(StatError::ChannelMismatch {
            left: ws.p(),
            right: wt.p(),
        });
    }
    if ws.n_g() != wt.n_g() {
        return Err(StatError::WindowSizeMismatch {
            left: ws.n_g(),
            right: wt.n_g(),
        });
    }
    check_window(ws)
}

/// Unbiased estimate of tr(Σ²) for the window's population covariance Σ.
///
/// Invariant under column permutation; needs `n_g ≥ 4`.
pub fn tr_sq_estimate(w: &WindowMatrix) -> Result<f64, StatError> {
    check_window(w)?;
    let g = gram(w, None)?;
    Ok(a_terms_fast(&g, w.n_g())?.total())
}

/// Unbiased estimate of tr(Σ_s Σ_t) for a window pair.
///
/// Symmetric in its arguments; the windows must share both the channel
/// count and the window size, each `n_g ≥ 4`.
pub fn tr_cross_estimate(ws: &WindowMatrix, wt: &WindowMatrix) -> Result<f64, StatError> {
    check_pair(ws, wt)?;
    let y = gram(ws, Some(wt))?;
    Ok(c_fast(&y, ws.n_g())?)
}

/// Pairwise covariance-distance statistic in the default form
/// `A_s + A_t - 2·C_st`; exactly zero for identical windows.
pub fn pairwise_stat(ws: &WindowMatrix, wt: &WindowMatrix) -> Result<f64, StatError> {
    pairwise_stat_with(ws, wt, VstForm::TwoC)
}

/// Pairwise statistic under an explicit form switch.
pub fn pairwise_stat_with(
    ws: &WindowMatrix,
    wt: &WindowMatrix,
    form: VstForm,
) -> Result<f64, StatError> {
    check_pair(ws, wt)?;
    if form == VstForm::Literal {
        note_literal_form();
    }
    // Bit-identical windows satisfy A_s = A_t = C_st algebraically; return
    // the exact zero of the distance form rather than accumulating rounding
    // from the two different evaluation orders.
    if form == VstForm::TwoC && ws.data() == wt.data() {
        return Ok(0.0);
    }
    let a_s = tr_sq_estimate(ws)?;
    let a_t = tr_sq_estimate(wt)?;
    let c = tr_cross_estimate(ws, wt)?;
    Ok(a_s + a_t - form.cross_coefficient() * c)
}

fn multi_stat_on(windows: &[WindowMatrix], form: VstForm) -> Result<f64, StatError> {
    let q = windows.len();
    check_window(&windows[0])?;
    if form == VstForm::Literal {
        note_literal_form();
    }
    let n_g = windows[0].n_g();
    let coeff = form.cross_coefficient();
    let mut a = Vec::with_capacity(q);
    for w in windows {
        let g = gram(w, None)?;
        a.push(a_terms_fast(&g, n_g)?.total());
    }
    let mut acc = NeumaierSum::new();
    for s in 0..q {
        for t in (s + 1)..q {
            let v_st = if form == VstForm::TwoC && windows[s].data() == windows[t].data() {
                0.0
            } else {
                let y = gram(&windows[s], Some(&windows[t]))?;
                a[s] + a[t] - coeff * c_fast(&y, n_g)?
            };
            acc.add(v_st);
        }
    }
    let qf = q as f64;
    Ok(2.0 * acc.value() / (qf * (qf - 1.0)))
}

/// Pooled statistic of a flow: the mean pairwise statistic over all ordered
/// window pairs, `(1/(q(q-1))) Σ_{s≠t} V_st`.
///
/// Equals the unordered-pair mean by symmetry and is invariant under window
/// reordering. Computed on the data as given.
pub fn multi_stat(flow: &MatrixFlow) -> Result<f64, StatError> {
    multi_stat_on(flow.windows(), VstForm::TwoC)
}

/// Pooled statistic under an explicit form switch.
pub fn multi_stat_with(flow: &MatrixFlow, form: VstForm) -> Result<f64, StatError> {
    multi_stat_on(flow.windows(), form)
}

/// Pooled statistic with each window centered first.
///
/// The value is unchanged in exact arithmetic (location invariance); the
/// centering removes the large common signal level of raw sensor data, so
/// the cancelling sums operate at fluctuation scale. This is the evaluation
/// the detector and the standardized path use on raw streams.
pub fn multi_stat_centered(flow: &MatrixFlow, form: VstForm) -> Result<f64, StatError> {
    let centered: Vec<WindowMatrix> = flow.windows().iter().map(|w| w.centered()).collect();
    multi_stat_on(&centered, form)
}

/// Pooled leading-term statistic: the positive-data shortcut averaged over
/// all ordered window pairs, on the raw data (the shortcut's positivity
/// premise concerns raw levels). Same premises as the pairwise shortcut:
/// strictly positive entries and windows of at least 20 samples.
pub fn multi_stat_principal(flow: &MatrixFlow) -> Result<f64, StatError> {
    let q = flow.q();
    let mut acc = NeumaierSum::new();
    for s in 0..q {
        for t in (s + 1)..q {
            acc.add(principal_stat(flow.window(s), flow.window(t))?);
        }
    }
    let qf = q as f64;
    Ok(2.0 * acc.value() / (qf * (qf - 1.0)))
}

/// Analytic variance estimate of the pairwise statistic, `(A_s + A_t)/n_g`.
///
/// Finite samples can drive the raw value negative; it is clamped at zero
/// with the clamp recorded on the result.
pub fn pair_variance(ws: &WindowMatrix, wt: &WindowMatrix) -> Result<PairVariance, StatError> {
    check_pair(ws, wt)?;
    let raw = (tr_sq_estimate(ws)? + tr_sq_estimate(wt)?) / ws.n_g() as f64;
    Ok(PairVariance {
        value: raw.max(0.0),
        clamped: raw < 0.0,
    })
}

/// Standardizes a flow with the default configuration; see
/// [`standardize_with`].
pub fn standardize(flow: &MatrixFlow) -> Result<TestResult, StatError> {
    standardize_with(flow, &StatConfig::default())
}

/// Computes the pooled statistic of a flow and divides it by a variance
/// estimate, yielding a score that is approximately standard normal when
/// all windows share one covariance.
///
/// The center of the score is fixed at zero (the pooled statistic is
/// unbiased for zero under equality); a trained detector learns an
/// empirical center instead. Windows are centered for evaluation. With
/// [`StatVariant::Principal`] the statistic comes from the raw windows,
/// whose strict positivity that shortcut requires; the variance estimate
/// still comes from the centered Grams.
///
/// # Errors
/// A zero variance estimate with a nonzero statistic is a degenerate-
/// variance error; a zero statistic with zero variance scores 0 by
/// convention.
pub fn standardize_with(flow: &MatrixFlow, config: &StatConfig) -> Result<TestResult, StatError> {
    let q = flow.q();
    let n_g = flow.n_g();
    if n_g < 4 {
        return Err(StatError::WindowTooSmall { got: n_g });
    }
    if config.vst == VstForm::Literal {
        note_literal_form();
    }
    let n = n_g as f64;
    let qf = q as f64;
    let coeff = config.vst.cross_coefficient();
    let centered: Vec<WindowMatrix> = flow.windows().iter().map(|w| w.centered()).collect();
    let mut a = Vec::with_capacity(q);
    for w in &centered {
        let g = gram(w, None)?;
        a.push(a_terms_fast(&g, n_g)?.total());
    }
    let mut v_acc = NeumaierSum::new();
    let mut m2_acc = NeumaierSum::new();
    let mut m4_acc = NeumaierSum::new();
    let mut pairvar_acc = NeumaierSum::new();
    let mut entry_count = 0u64;
    for s in 0..q {
        for t in (s + 1)..q {
            let y = gram(&centered[s], Some(&centered[t]))?;
            let v_st = if config.vst == VstForm::TwoC
                && flow.window(s).data() == flow.window(t).data()
            {
                0.0
            } else {
                a[s] + a[t] - coeff * c_fast(&y, n_g)?
            };
            v_acc.add(v_st);
            for &e in y.entries().iter() {
                let e2 = e * e;
                m2_acc.add(e2);
                m4_acc.add(e2 * e2);
            }
            entry_count += (n_g * n_g) as u64;
            pairvar_acc.add(((a[s] + a[t]) / n).max(0.0));
        }
    }
    let statistic = match config.variant {
        StatVariant::Exact => 2.0 * v_acc.value() / (qf * (qf - 1.0)),
        StatVariant::Principal => multi_stat_principal(flow)?,
    };
    let std_dev = match config.sigma {
        SigmaMode::Calibrated => {
            // Each centered cross-Gram entry is (up to the n/(n-1) bias of
            // centering) one draw of the kernel whose variance drives the
            // pair statistic; pooling second and fourth moments over every
            // pair gives that variance, and the pooled statistic of q
            // windows concentrates it by n²(q-1)/8.
            let corr = n / (n - 1.0);
            let m2 = corr * corr * m2_acc.value() / entry_count as f64;
            let m4 = corr.powi(4) * m4_acc.value() / entry_count as f64;
            let var_u = (m4 - m2 * m2).max(0.0);
            (8.0 * var_u / (n * n * (qf - 1.0))).sqrt()
        }
        SigmaMode::ScaledPairSum => (2.0 * pairvar_acc.value()).sqrt() / (qf * (qf - 1.0)),
        SigmaMode::RawPairSum => (2.0 * pairvar_acc.value()).sqrt(),
    };
    let score = if std_dev == 0.0 {
        if statistic == 0.0 {
            0.0
        } else {
            return Err(StatError::DegenerateVariance { statistic });
        }
    } else {
        statistic / std_dev
    };
    Ok(TestResult {
        statistic,
        std_dev,
        score,
        pair_count: (q * (q - 1) / 2) as u64,
    })
}

/// Standard normal upper-tail probability Q(x), absolute error below 1e-12.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Threshold α with `gaussian_tail(α) = tau`, for `0 < tau < 1`.
///
/// Q is strictly decreasing, so bisection on [-40, 40] converges to the
/// unique root; the interval is shrunk to 1e-13, well inside the 1e-10
/// round-trip tolerance.
pub fn far_threshold(tau: f64) -> Result<f64, StatError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(StatError::BadTau { tau });
    }
    let mut lo = -40.0f64;
    let mut hi = 40.0f64;
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if gaussian_tail(mid) > tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical false-alarm and detection rates at threshold `alpha`:
/// the fraction of null scores strictly above it and the fraction of
/// alternative scores at or above it.
pub fn empirical_rates(
    scores_h0: &[f64],
    scores_h1: &[f64],
    alpha: f64,
) -> Result<(f64, f64), StatError> {
    if scores_h0.is_empty() || scores_h1.is_empty() {
        return Err(StatError::EmptyScores);
    }
    let far = scores_h0.iter().filter(|&&s| s > alpha).count() as f64 / scores_h0.len() as f64;
    let dr = scores_h1.iter().filter(|&&s| s >= alpha).count() as f64 / scores_h1.len() as f64;
    Ok((far, dr))
}
