//! Classical covariance-equality baselines.
//!
//! The likelihood-ratio statistic compares per-window sample covariance
//! determinants against the determinant of their sum; it requires every
//! sample covariance to be nonsingular, so it is inapplicable whenever the
//! channel count reaches the window size. A corrected variant rescales each
//! factor and subtracts a dimensional correction term, extending validity
//! toward higher channel counts but still requiring the channel count to
//! stay below the degrees of freedom. Both exist for comparison against the
//! tuple-estimator test, which has no such restriction.
//!
//! All determinant work is done in the log domain: the raw statistic is a
//! product of determinant powers that overflows for large windows, while
//! its log is a stable sum of log-determinants.

use crate::matrixflow::{centered_matrix, MatrixFlow, WindowMatrix};
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use thiserror::Error;

/// Relative asymmetry tolerated in a covariance matrix.
pub const COVARIANCE_SYMMETRY_TOL: f64 = 1e-12;
/// Most negative eigenvalue tolerated, relative to the trace.
pub const COVARIANCE_PSD_TOL: f64 = 1e-10;

/// Errors from the baseline statistics.
#[derive(Debug, Error)]
pub enum ClassicalError {
    #[error("sample covariance needs at least 2 samples, got {got}")]
    TooFewSamples { got: usize },
    #[error("covariance matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("covariance asymmetry {max_dev:e} exceeds the relative tolerance {tol:e}")]
    Asymmetric { max_dev: f64, tol: f64 },
    #[error("smallest eigenvalue {min_eigenvalue:e} is below the tolerance {tol:e}; not positive semidefinite")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tol: f64 },
    #[error(
        "channel count {p} is not below the smallest window size {min_n_g}; \
         per-window sample covariances are singular and the likelihood-ratio \
         statistic does not apply"
    )]
    Inapplicable { p: usize, min_n_g: usize },
    #[error("sample covariance of window {index} is singular")]
    SingularWindow { index: usize },
    #[error("pooled covariance sum through window {through} is singular")]
    SingularPooled { through: usize },
    #[error(
        "dimension ratios y1={y1}, y2={y2} at factor {h} are not both below 1; \
         the corrected statistic requires the channel count below every degrees-of-freedom total"
    )]
    Regime { h: usize, y1: f64, y2: f64 },
    #[error("correction arguments must lie strictly inside (0,1), got ({y1}, {y2})")]
    CorrectionDomain { y1: f64, y2: f64 },
}

/// A validated sample covariance matrix with its degrees of freedom
/// `N_g = n_g - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
    degrees: usize,
}

impl CovarianceMatrix {
    /// Validates symmetry (to [`COVARIANCE_SYMMETRY_TOL`] relative) and
    /// positive semidefiniteness (smallest eigenvalue at least
    /// `-`[`COVARIANCE_PSD_TOL`]`·trace`), then mirrors the upper triangle
    /// into the lower so downstream sums see bit-exact symmetry.
    pub fn new(mut entries: DMatrix<f64>, degrees: usize) -> Result<Self, ClassicalError> {
        if entries.nrows() != entries.ncols() {
            return Err(ClassicalError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        let scale = entries.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let tol = COVARIANCE_SYMMETRY_TOL * scale;
        let mut max_dev = 0.0f64;
        for i in 0..entries.nrows() {
            for j in (i + 1)..entries.ncols() {
                max_dev = max_dev.max((entries[(i, j)] - entries[(j, i)]).abs());
            }
        }
        if max_dev > tol {
            return Err(ClassicalError::Asymmetric { max_dev, tol });
        }
        for i in 0..entries.nrows() {
            for j in (i + 1)..entries.ncols() {
                entries[(j, i)] = entries[(i, j)];
            }
        }
        let trace = entries.trace();
        let psd_tol = -COVARIANCE_PSD_TOL * trace.abs();
        let min_eigenvalue = SymmetricEigen::new(entries.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eigenvalue < psd_tol {
            return Err(ClassicalError::NotPositiveSemidefinite {
                min_eigenvalue,
                tol: psd_tol,
            });
        }
        Ok(Self { entries, degrees })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Degrees of freedom `N_g = n_g - 1`.
    pub fn degrees(&self) -> usize {
        self.degrees
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }
}

/// Centered outer-product average with `1/(n_g - 1)` scaling.
pub fn sample_covariance(w: &WindowMatrix) -> Result<CovarianceMatrix, ClassicalError> {
    let n_g = w.n_g();
    if n_g < 2 {
        return Err(ClassicalError::TooFewSamples { got: n_g });
    }
    let centered = centered_matrix(w.data());
    let cov = &centered * centered.transpose() / (n_g - 1) as f64;
    CovarianceMatrix::new(cov, n_g - 1)
}

/// Log-determinant of a symmetric positive definite matrix, or None when
/// the factorization fails (singular or indefinite input).
fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let mut acc = 0.0f64;
    for d in chol.l_dirty().diagonal().iter() {
        acc += d.ln();
    }
    Some(2.0 * acc)
}

fn check_applicable(flow: &MatrixFlow) -> Result<(), ClassicalError> {
    if flow.p() >= flow.n_g() {
        return Err(ClassicalError::Inapplicable {
            p: flow.p(),
            min_n_g: flow.n_g(),
        });
    }
    Ok(())
}

/// Log of the likelihood-ratio covariance-equality statistic, computed
/// directly: `Σ_g (N_g/2)·logdet(Y_g) - (M/2)·logdet(Σ_g Y_g)` with
/// `M = Σ_g N_g`.
///
/// The denominator matrix is the plain sum of the per-window sample
/// covariances; this is the reading under which the telescoping factor
/// product of [`lr_stat_factored`] reproduces the statistic exactly.
///
/// # Errors
/// Inapplicable whenever `p ≥ n_g` (singular per-window covariances);
/// degenerate data can additionally make a factorization fail.
pub fn lr_stat(flow: &MatrixFlow) -> Result<f64, ClassicalError> {
    check_applicable(flow)?;
    let mut pooled = DMatrix::zeros(flow.p(), flow.p());
    let mut acc = 0.0f64;
    let mut m_total = 0usize;
    for (g, w) in flow.windows().iter().enumerate() {
        let cov = sample_covariance(w)?;
        let ld = log_det_spd(cov.entries())
            .ok_or(ClassicalError::SingularWindow { index: g })?;
        acc += cov.degrees() as f64 / 2.0 * ld;
        m_total += cov.degrees();
        pooled += cov.entries();
    }
    let ld_pooled = log_det_spd(&pooled).ok_or(ClassicalError::SingularPooled {
        through: flow.q() - 1,
    })?;
    Ok(acc - m_total as f64 / 2.0 * ld_pooled)
}

/// Per-factor pieces shared by the factored statistic and its corrected
/// variant: for each `h ≥ 2` (0-based window index `h-1`), the log of
/// `V_2h = |S_{h-1}|^{T_{h-1}/2} · |Y_h|^{N_h/2} / |S_h|^{T_h/2}`
/// where `S_h` is the running covariance sum and `T_h` the running degrees.
struct FactorTerms {
    /// (h, T_{h-1}, N_h, log V_2h) for h = 2..=q.
    terms: Vec<(usize, usize, usize, f64)>,
}

fn factor_terms(flow: &MatrixFlow) -> Result<FactorTerms, ClassicalError> {
    check_applicable(flow)?;
    let first = sample_covariance(flow.window(0))?;
    let mut running = first.entries().clone();
    let mut running_degrees = first.degrees();
    let mut ld_running =
        log_det_spd(&running).ok_or(ClassicalError::SingularWindow { index: 0 })?;
    let mut terms = Vec::with_capacity(flow.q() - 1);
    for h in 2..=flow.q() {
        let cov = sample_covariance(flow.window(h - 1))?;
        let ld_h = log_det_spd(cov.entries())
            .ok_or(ClassicalError::SingularWindow { index: h - 1 })?;
        let prev_degrees = running_degrees;
        let ld_prev = ld_running;
        running += cov.entries();
        running_degrees += cov.degrees();
        ld_running = log_det_spd(&running)
            .ok_or(ClassicalError::SingularPooled { through: h - 1 })?;
        let log_v2h = prev_degrees as f64 / 2.0 * ld_prev + cov.degrees() as f64 / 2.0 * ld_h
            - running_degrees as f64 / 2.0 * ld_running;
        terms.push((h, prev_degrees, cov.degrees(), log_v2h));
    }
    Ok(FactorTerms { terms })
}

/// Log of the likelihood-ratio statistic via the telescoping factor
/// product `Σ_h log V_2h`; agrees with [`lr_stat`] wherever both are
/// computable (the factors cancel exactly in exact arithmetic).
pub fn lr_stat_factored(flow: &MatrixFlow) -> Result<f64, ClassicalError> {
    Ok(factor_terms(flow)?.terms.iter().map(|t| t.3).sum())
}

/// Corrected likelihood-ratio statistic:
/// `Σ_{h=2}^q [ -(2/T_{h-1})·log V_2h - p·f(y_1h, y_2h) ]` with
/// `y_1h = p/T_{h-1}` and `y_2h = p/N_h`.
///
/// Valid only while every ratio stays below 1, which tightens the
/// applicability to `p < n_g - 1`.
pub fn clr_stat(flow: &MatrixFlow) -> Result<f64, ClassicalError> {
    let p = flow.p();
    // Regime check first: every correction argument must be inside (0,1).
    let mut prev_degrees = flow.n_g() - 1;
    for h in 2..=flow.q() {
        let n_h = flow.n_g() - 1;
        let y1 = p as f64 / prev_degrees as f64;
        let y2 = p as f64 / n_h as f64;
        if y1 >= 1.0 || y2 >= 1.0 {
            return Err(ClassicalError::Regime { h, y1, y2 });
        }
        prev_degrees += n_h;
    }
    let factors = factor_terms(flow)?;
    let mut total = 0.0f64;
    for &(_, t_prev, n_h, log_v2h) in &factors.terms {
        let y1 = p as f64 / t_prev as f64;
        let y2 = p as f64 / n_h as f64;
        total += -(2.0 / t_prev as f64) * log_v2h - p as f64 * f_correction(y1, y2)?;
    }
    Ok(total)
}

/// Dimensional correction term, symmetric in its arguments:
/// with `s = y1 + y2`, `m = y1·y2`, `g = s - m`,
/// `f = (g/m)·ln(s/g) + [y1²(1-y2)ln(1-y2) + y2²(1-y1)ln(1-y1)]/(m·s)
///      - (y1/s)·ln(y1/s) - (y2/s)·ln(y2/s)`.
pub fn f_correction(y1: f64, y2: f64) -> Result<f64, ClassicalError> {
    if !(y1 > 0.0 && y1 < 1.0 && y2 > 0.0 && y2 < 1.0) {
        return Err(ClassicalError::CorrectionDomain { y1, y2 });
    }
    let s = y1 + y2;
    let m = y1 * y2;
    let g = s - m;
    let t1 = g / m * (s / g).ln();
    let t2 = (y1 * y1 * (1.0 - y2) * (1.0 - y2).ln() + y2 * y2 * (1.0 - y1) * (1.0 - y1).ln())
        / (m * s);
    let t3 = -(y1 / s) * (y1 / s).ln() - (y2 / s) * (y2 / s).ln();
    Ok(t1 + t2 + t3)
}
