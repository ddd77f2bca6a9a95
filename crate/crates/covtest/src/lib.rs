//! Streaming covariance-equality test engine for multichannel sensor streams.
//!
//! The engine ingests PMU-style measurement streams, partitions them into
//! flows of window matrices, and tests whether the per-window covariance
//! matrices are equal. The core statistic pools unbiased U-statistic
//! estimates of squared and cross covariance traces over all window pairs,
//! so no sample covariance matrix is ever formed and the test stays usable
//! when the channel count exceeds the window length.
//!
//! Module map:
//!
//! - [`matrixflow`]: window/flow data model, stream cursor, CSV I/O.
//! - [`fastcompute`]: Gram-matrix reuse and O(n_g²) closed forms for the
//!   U-statistic sums, the leading-term approximation, benchmarks.
//! - [`ustat`]: trace estimators, pairwise and pooled statistics, variance
//!   calibration, standardized scores, FAR/DR helpers.
//! - [`classical`]: likelihood-ratio baselines (log-domain determinant
//!   statistic and its high-dimension correction).
//! - [`detector`]: trained threshold detector, duration estimation, and
//!   most-sensitive-channel localization.
//! - [`simgen`]: synthetic voltage-profile streams with Gaussian or Gamma
//!   measurement noise and scheduled load signals.
//! - [`harness`]: Monte Carlo rate tables, window-count sweeps, end-to-end
//!   scenario runs, and report emission.

pub mod classical;
pub mod detector;
pub mod fastcompute;
pub mod harness;
pub mod matrixflow;
pub mod numeric;
pub mod simgen;
pub mod ustat;
