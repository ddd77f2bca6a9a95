//! Continuous-learning event detector.
//!
//! Training learns the mean and spread of the pooled statistic on historical
//! flows from normal operation; a new flow is flagged when its statistic
//! leaves the learned band (three standard deviations by default). The flag
//! run's length gives the event duration, the statistic at detection its
//! relative magnitude, and a factor-augmentation scan over channels locates
//! the most sensitive channel.
//!
//! Localization augments the two pre-event flows with repeated copies of a
//! candidate channel's event-period series and re-tests them. For the true
//! driving channel the injected rows reinforce the event's covariance
//! change, maximizing the augmented statistic; the channel index is 1-based
//! in all reports.

use crate::fastcompute::{a_terms_fast, c_fast, GramMatrix};
use crate::matrixflow::{centered_matrix, MatrixFlow};
use crate::numeric::{mean_and_std, NeumaierSum};
use crate::ustat::{multi_stat_centered, multi_stat_principal, StatConfig, StatError, StatVariant};
use nalgebra::DMatrix;
use thiserror::Error;

/// Fewest historical flows accepted for training; below this the learned
/// spread is too noisy to threshold against.
pub const MIN_TRAINING_FLOWS: usize = 30;
/// Singular values above this fraction of the largest count toward the
/// numerical rank used by localization.
pub const RANK_TOLERANCE_FACTOR: f64 = 1e-10;

/// Errors from training, detection, and localization.
#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("training needs at least {min} flows, got {got}")]
    TooFewFlows { got: usize, min: usize },
    #[error(
        "flow {index} has shape (p={p}, n_g={n_g}, q={q}), \
         expected (p={expected_p}, n_g={expected_n_g}, q={expected_q})"
    )]
    FlowShape {
        index: usize,
        p: usize,
        n_g: usize,
        q: usize,
        expected_p: usize,
        expected_n_g: usize,
        expected_q: usize,
    },
    #[error("flow {field} is {got}, model expects {expected}")]
    ConfigMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model variance is zero (degenerate); retrain on more varied history before detecting")]
    Degenerate,
    #[error("window duration must be positive seconds, got {got}")]
    BadWindowSeconds { got: f64 },
    #[error("previous-period data has numerical rank 0; localization is undefined on all-zero history")]
    RankZero,
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// Geometry and statistic settings a model was trained under.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorConfig {
    pub p: usize,
    pub n_g: usize,
    pub q: usize,
    /// Seconds of data per window (n_g / sample rate).
    pub window_seconds: f64,
    pub stat: StatConfig,
}

/// A trained detector: learned center and spread of the pooled statistic
/// under normal operation, and the detection threshold derived from them.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorModel {
    /// Learned mean of the pooled statistic.
    pub mu: f64,
    /// Learned standard deviation of the pooled statistic.
    pub sigma: f64,
    /// Detection threshold on |statistic - mu|; 3·sigma unless overridden.
    pub gamma: f64,
    pub config: DetectorConfig,
    pub training_flow_count: usize,
    /// True when sigma is zero; such a model cannot detect.
    pub degenerate: bool,
}

impl DetectorModel {
    /// Replaces the default 3·sigma threshold.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// One detected event, as serialized by the `detect` pipeline.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventReport {
    /// Global index of the first flagged flow (0-based over the stream).
    pub onset_flow_index: usize,
    /// Pooled statistic of the onset flow.
    pub magnitude: f64,
    /// Estimated event duration in seconds.
    pub duration_s: f64,
    /// Most sensitive channel, 1-based.
    pub location: usize,
    /// Per-flow event flags over the examined stream.
    pub flags: Vec<bool>,
    /// Per-channel localization scores (index l is channel l+1).
    pub scores: Vec<f64>,
}

/// The pooled statistic a detector evaluates per flow: the exact estimator
/// on centered windows, or the positive-data shortcut on raw windows when
/// the model was configured that way.
pub fn flow_statistic(flow: &MatrixFlow, stat: &StatConfig) -> Result<f64, StatError> {
    match stat.variant {
        StatVariant::Exact => multi_stat_centered(flow, stat.vst),
        StatVariant::Principal => multi_stat_principal(flow),
    }
}

/// Learns (mu, sigma, gamma) from historical flows of normal operation.
///
/// All flows must share one shape; at least [`MIN_TRAINING_FLOWS`] are
/// required. `gamma` defaults to `3·sigma`. A history whose statistics all
/// coincide yields `sigma = 0` and the model is flagged degenerate.
pub fn train(
    history: &[MatrixFlow],
    window_seconds: f64,
    stat: &StatConfig,
) -> Result<DetectorModel, DetectorError> {
    if history.len() < MIN_TRAINING_FLOWS {
        return Err(DetectorError::TooFewFlows {
            got: history.len(),
            min: MIN_TRAINING_FLOWS,
        });
    }
    if !(window_seconds > 0.0 && window_seconds.is_finite()) {
        return Err(DetectorError::BadWindowSeconds {
            got: window_seconds,
        });
    }
    let (p, n_g, q) = (history[0].p(), history[0].n_g(), history[0].q());
    for (index, flow) in history.iter().enumerate() {
        if flow.p() != p || flow.n_g() != n_g || flow.q() != q {
            return Err(DetectorError::FlowShape {
                index,
                p: flow.p(),
                n_g: flow.n_g(),
                q: flow.q(),
                expected_p: p,
                expected_n_g: n_g,
                expected_q: q,
            });
        }
    }
    let stats = history
        .iter()
        .map(|f| flow_statistic(f, stat))
        .collect::<Result<Vec<_>, _>>()?;
    let (mu, sigma) = mean_and_std(&stats);
    Ok(DetectorModel {
        mu,
        sigma,
        gamma: 3.0 * sigma,
        config: DetectorConfig {
            p,
            n_g,
            q,
            window_seconds,
            stat: *stat,
        },
        training_flow_count: history.len(),
        degenerate: sigma == 0.0,
    })
}

fn check_flow(model: &DetectorModel, flow: &MatrixFlow) -> Result<(), DetectorError> {
    let checks: [(&'static str, usize, usize); 3] = [
        ("channel count p", model.config.p, flow.p()),
        ("window size n_g", model.config.n_g, flow.n_g()),
        ("window count q", model.config.q, flow.q()),
    ];
    for (field, expected, got) in checks {
        if expected != got {
            return Err(DetectorError::ConfigMismatch {
                field,
                expected,
                got,
            });
        }
    }
    Ok(())
}

/// Tests one flow against the model: flagged iff `|V - mu| ≥ gamma`
/// (inclusive at the boundary). Returns the flag and the flow's statistic.
pub fn detect(model: &DetectorModel, flow: &MatrixFlow) -> Result<(bool, f64), DetectorError> {
    check_flow(model, flow)?;
    if model.sigma == 0.0 {
        return Err(DetectorError::Degenerate);
    }
    let v = flow_statistic(flow, &model.config.stat)?;
    Ok(((v - model.mu).abs() >= model.gamma, v))
}

/// Event duration: `q · window_seconds` per flagged flow, summed.
pub fn estimate_duration(
    flags: &[bool],
    q: usize,
    window_seconds: f64,
) -> Result<f64, DetectorError> {
    if !(window_seconds > 0.0 && window_seconds.is_finite()) {
        return Err(DetectorError::BadWindowSeconds {
            got: window_seconds,
        });
    }
    let flagged = flags.iter().filter(|&&f| f).count();
    Ok(flagged as f64 * q as f64 * window_seconds)
}

/// Pooled statistic evaluated from precomputed centered Gram blocks plus a
/// per-channel rank-one factor update.
///
/// `base[g][h]` (g ≤ h) is the centered Gram between windows g and h;
/// `ctilde[g]` row l is channel l's centered event segment in window g.
/// The augmented window [Z_g; C_g] with κ copies of the factor row has
/// centered Gram `base[g][h] + κ·outer(ctilde_g, ctilde_h)`, so each
/// candidate channel costs O(q²·n_g²) instead of rebuilding matrices.
fn augmented_stat(
    base: &[Vec<DMatrix<f64>>],
    ctilde: &[DMatrix<f64>],
    channel: usize,
    kappa: f64,
    n_g: usize,
    coeff: f64,
) -> Result<f64, DetectorError> {
    let q = base.len();
    let mut a = Vec::with_capacity(q);
    for (g, row) in base.iter().enumerate() {
        let mut entries = row[0].clone();
        for i in 0..n_g {
            for j in 0..n_g {
                entries[(i, j)] += kappa * ctilde[g][(channel, i)] * ctilde[g][(channel, j)];
            }
        }
        let gram = GramMatrix::new(entries, true).map_err(StatError::from)?;
        a.push(a_terms_fast(&gram, n_g).map_err(StatError::from)?.total());
    }
    let mut acc = NeumaierSum::new();
    for g in 0..q {
        for h in (g + 1)..q {
            let mut entries = base[g][h - g].clone();
            for i in 0..n_g {
                for j in 0..n_g {
                    entries[(i, j)] += kappa * ctilde[g][(channel, i)] * ctilde[h][(channel, j)];
                }
            }
            let gram = GramMatrix::new(entries, false).map_err(StatError::from)?;
            let c = c_fast(&gram, n_g).map_err(StatError::from)?;
            acc.add(a[g] + a[h] - coeff * c);
        }
    }
    let qf = q as f64;
    Ok(2.0 * acc.value() / (qf * (qf - 1.0)))
}

/// Centered per-window Gram blocks of a flow: element `[g][h-g]` holds the
/// Gram between centered windows g and h for h ≥ g.
fn centered_gram_blocks(flow: &MatrixFlow) -> Vec<Vec<DMatrix<f64>>> {
    let centered: Vec<DMatrix<f64>> = flow
        .windows()
        .iter()
        .map(|w| centered_matrix(w.data()))
        .collect();
    centered
        .iter()
        .enumerate()
        .map(|(g, wg)| centered[g..].iter().map(|wh| wg.tr_mul(wh)).collect())
        .collect()
}

/// Finds the channel most sensitive to the detected event.
///
/// For each candidate channel, its event-period series (length `q·n_g`) is
/// replicated `κ = ceil(r·ln p)` times (`r` = numerical rank of the
/// previous flow's raw data) and stacked onto each of the two pre-event
/// flows; both augmented flows are re-tested and the channel's score is the
/// mean of the two statistics. Channels driving the event reinforce its
/// covariance change and score highest. Ties take the smallest index.
/// Localization always uses the exact estimator on centered data, whatever
/// variant the model detects with.
///
/// Returns the 1-based channel and the full score vector.
pub fn localize(
    z_prev2: &MatrixFlow,
    z_prev: &MatrixFlow,
    z_event: &MatrixFlow,
    model: &DetectorModel,
) -> Result<(usize, Vec<f64>), DetectorError> {
    for flow in [z_prev2, z_prev, z_event] {
        check_flow(model, flow)?;
    }
    let p = model.config.p;
    let n_g = model.config.n_g;
    let coeff = match model.config.stat.vst {
        crate::ustat::VstForm::TwoC => 2.0,
        crate::ustat::VstForm::Literal => 1.0,
    };
    let prev_raw = z_prev.concatenated();
    let svals = prev_raw.singular_values();
    let max_sv = svals.iter().copied().fold(0.0f64, f64::max);
    if max_sv <= 0.0 {
        return Err(DetectorError::RankZero);
    }
    let rank = svals
        .iter()
        .filter(|&&s| s > RANK_TOLERANCE_FACTOR * max_sv)
        .count();
    if rank == 0 {
        return Err(DetectorError::RankZero);
    }
    let kappa = (rank as f64 * (p as f64).ln()).ceil();
    let ctilde: Vec<DMatrix<f64>> = z_event
        .windows()
        .iter()
        .map(|w| centered_matrix(w.data()))
        .collect();
    let base_prev2 = centered_gram_blocks(z_prev2);
    let base_prev = centered_gram_blocks(z_prev);
    let mut scores = Vec::with_capacity(p);
    for l in 0..p {
        let v1 = augmented_stat(&base_prev2, &ctilde, l, kappa, n_g, coeff)?;
        let v2 = augmented_stat(&base_prev, &ctilde, l, kappa, n_g, coeff)?;
        scores.push(0.5 * (v1 + v2));
    }
    let mut best = 0usize;
    for (l, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = l;
        }
    }
    Ok((best + 1, scores))
}
