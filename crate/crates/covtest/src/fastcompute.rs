//! Gram-matrix fast paths for the trace estimators.
//!
//! Every four-tuple estimator in this crate reduces to sums over a window
//! Gram matrix (all pairwise column inner products). Computing the Gram once
//! costs O(p·n_g²); the estimator sums then collapse from literal tuple
//! enumeration, O(n_g⁴), to closed forms in row sums, column sums, and
//! entry-wise power sums, O(n_g²). The literal enumeration is kept as a
//! benchmark reference. A further shortcut keeps only the leading term of
//! each estimator; it is biased and valid only for strictly positive data
//! with large windows, so both premises are checked.

use crate::matrixflow::WindowMatrix;
use crate::numeric::NeumaierSum;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use thiserror::Error;

/// Relative asymmetry tolerated in a same-window Gram matrix.
pub const GRAM_SYMMETRY_TOL: f64 = 1e-12;
/// Smallest window the leading-term shortcut accepts.
pub const PRINCIPAL_MIN_WINDOW: usize = 20;
/// Largest window the literal tuple-enumeration benchmark path runs at;
/// above this the quartic cost is prohibitive and the benchmark reports 0.
pub const LITERAL_CAP: usize = 64;

/// Errors from Gram construction and the fast estimator paths.
#[derive(Debug, Error)]
pub enum ComputeError {
    #[error("channel counts differ: {left} vs {right}")]
    ChannelMismatch { left: usize, right: usize },
    #[error("window sizes differ: {left} vs {right}")]
    WindowSizeMismatch { left: usize, right: usize },
    #[error("gram matrix asymmetry {max_dev:e} exceeds the relative tolerance {tol:e}")]
    SymmetryViolation { max_dev: f64, tol: f64 },
    #[error("symmetric gram must be square, got {rows}x{cols}")]
    SymmetricNotSquare { rows: usize, cols: usize },
    #[error("single-window terms need a gram flagged symmetric (same-window product)")]
    AsymmetricGram,
    #[error("cross-window term needs a square gram, got {rows}x{cols}")]
    NonSquareGram { rows: usize, cols: usize },
    #[error("gram is {actual}x{actual} but n_g={stated} was passed")]
    StatedSizeMismatch { stated: usize, actual: usize },
    #[error("window size {got} is below the minimum 4 required by the four-tuple estimators")]
    WindowTooSmall { got: usize },
    #[error(
        "window {window} entry at channel {channel}, sample {sample} is {value}; \
         the leading-term shortcut requires strictly positive data"
    )]
    NotPositive {
        window: usize,
        channel: usize,
        sample: usize,
        value: f64,
    },
    #[error(
        "window size {got} is below the leading-term regime minimum {min}; \
         the dropped terms are not negligible"
    )]
    RegimeTooSmall { got: usize, min: usize },
    #[error("benchmark sizes must be non-empty, each at least 4, and strictly ascending")]
    BadBenchmarkSizes,
    #[error("benchmark needs at least one repetition")]
    NoRepetitions,
}

/// Matrix of pairwise column inner products between two windows.
///
/// For a single window the matrix is `n_g × n_g` and symmetric; for a pair
/// of windows entry `(i, j)` is the inner product of sample `i` of the first
/// window with sample `j` of the second.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    symmetric: bool,
}

impl GramMatrix {
    /// Wraps a Gram matrix. A matrix flagged symmetric must be square and
    /// symmetric to [`GRAM_SYMMETRY_TOL`] relative to its largest entry; it
    /// is then mirrored (upper triangle into lower) so downstream sums see
    /// bit-exact symmetry.
    pub fn new(mut entries: DMatrix<f64>, symmetric: bool) -> Result<Self, ComputeError> {
        if symmetric {
            if entries.nrows() != entries.ncols() {
                return Err(ComputeError::SymmetricNotSquare {
                    rows: entries.nrows(),
                    cols: entries.ncols(),
                });
            }
            let scale = entries.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            let tol = GRAM_SYMMETRY_TOL * scale;
            let mut max_dev = 0.0f64;
            for i in 0..entries.nrows() {
                for j in (i + 1)..entries.ncols() {
                    max_dev = max_dev.max((entries[(i, j)] - entries[(j, i)]).abs());
                }
            }
            if max_dev > tol {
                return Err(ComputeError::SymmetryViolation { max_dev, tol });
            }
            for i in 0..entries.nrows() {
                for j in (i + 1)..entries.ncols() {
                    entries[(j, i)] = entries[(i, j)];
                }
            }
        }
        Ok(Self { entries, symmetric })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// Computes the Gram matrix of one window (`Wt` absent, symmetric result)
/// or the cross-Gram of a window pair, in one O(p·n²) matrix product.
pub fn gram(ws: &WindowMatrix, wt: Option<&WindowMatrix>) -> Result<GramMatrix, ComputeError> {
    match wt {
        None => GramMatrix::new(ws.data().tr_mul(ws.data()), true),
        Some(wt) => {
            if ws.p() != wt.p() {
                return Err(ComputeError::ChannelMismatch {
                    left: ws.p(),
                    right: wt.p(),
                });
            }
            GramMatrix::new(ws.data().tr_mul(wt.data()), false)
        }
    }
}

/// The three single-window terms; the unbiased squared-trace estimate is
/// `a1 - a2 + a3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ATerms {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl ATerms {
    /// `a1 - a2 + a3`.
    pub fn total(&self) -> f64 {
        self.a1 - self.a2 + self.a3
    }
}

fn check_square_size(g: &GramMatrix, n_g: usize) -> Result<(), ComputeError> {
    if g.nrows() != g.ncols() {
        return Err(ComputeError::NonSquareGram {
            rows: g.nrows(),
            cols: g.ncols(),
        });
    }
    if g.nrows() != n_g {
        return Err(ComputeError::StatedSizeMismatch {
            stated: n_g,
            actual: g.nrows(),
        });
    }
    if n_g < 4 {
        return Err(ComputeError::WindowTooSmall { got: n_g });
    }
    Ok(())
}

/// Off-diagonal reductions of a Gram matrix: total sum, entry-square sum,
/// transpose-product sum, and per-row/per-column sums.
struct OffDiagSums {
    s1: f64,
    s2: f64,
    s2_twist: f64,
    row: Vec<f64>,
    col: Vec<f64>,
}

fn off_diag_sums(g: &DMatrix<f64>) -> OffDiagSums {
    let n = g.nrows();
    let mut s1 = NeumaierSum::new();
    let mut s2 = NeumaierSum::new();
    let mut s2_twist = NeumaierSum::new();
    let mut col = vec![0.0f64; n];
    let mut row = vec![0.0f64; n];
    let mut col_acc: Vec<NeumaierSum> = (0..n).map(|_| NeumaierSum::new()).collect();
    for i in 0..n {
        let mut row_acc = NeumaierSum::new();
        for j in 0..n {
            if i == j {
                continue;
            }
            let x = g[(i, j)];
            s1.add(x);
            s2.add(x * x);
            s2_twist.add(x * g[(j, i)]);
            row_acc.add(x);
            col_acc[j].add(x);
        }
        row[i] = row_acc.value();
    }
    for (j, acc) in col_acc.iter().enumerate() {
        col[j] = acc.value();
    }
    OffDiagSums {
        s1: s1.value(),
        s2: s2.value(),
        s2_twist: s2_twist.value(),
        row,
        col,
    }
}

fn sum_sq(values: &[f64]) -> f64 {
    let mut acc = NeumaierSum::new();
    for &v in values {
        acc.add(v * v);
    }
    acc.value()
}

fn sum_prod(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = NeumaierSum::new();
    for (&x, &y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

/// Closed-form single-window terms over the unrepeated index ensembles.
///
/// With the diagonal zeroed, writing `S1` for the total off-diagonal sum,
/// `S2` for the off-diagonal square sum, and `T` for the sum of squared row
/// sums, the distinct-triple sum collapses to `T - S2` and the
/// distinct-quadruple sum to `S1² + 2·S2 - 4·T`, so all three terms cost
/// O(n_g²) instead of literal tuple enumeration.
///
/// # Errors
/// The Gram must be flagged symmetric, match the stated `n_g`, and have
/// `n_g ≥ 4` (the third term divides by `n_g - 3`).
pub fn a_terms_fast(g: &GramMatrix, n_g: usize) -> Result<ATerms, ComputeError> {
    if !g.is_symmetric() {
        return Err(ComputeError::AsymmetricGram);
    }
    check_square_size(g, n_g)?;
    let n = n_g as f64;
    let sums = off_diag_sums(g.entries());
    let t = sum_sq(&sums.row);
    let a1 = sums.s2 / (n * (n - 1.0));
    let a2 = 2.0 * (t - sums.s2) / (n * (n - 1.0) * (n - 2.0));
    let a3 = (sums.s1 * sums.s1 + 2.0 * sums.s2 - 4.0 * t)
        / (n * (n - 1.0) * (n - 2.0) * (n - 3.0));
    Ok(ATerms { a1, a2, a3 })
}

/// Closed-form cross-window term over the unrepeated index ensembles.
///
/// The four constituent sums (matched pair, shared column, shared row,
/// all-distinct) reduce to row sums `r`, column sums `c`, the square sum
/// `S2`, and the transpose-product sum `S2'` of the zero-diagonal cross
/// Gram: the all-distinct quadruple sum equals
/// `S1² - Σr² - Σc² - 2·Σ r_i c_i + S2 + S2'`. Cost O(n_g²).
///
/// # Errors
/// The Gram must be square of side `n_g` with `n_g ≥ 4`.
pub fn c_fast(gst: &GramMatrix, n_g: usize) -> Result<f64, ComputeError> {
    check_square_size(gst, n_g)?;
    let n = n_g as f64;
    let sums = off_diag_sums(gst.entries());
    let row_sq = sum_sq(&sums.row);
    let col_sq = sum_sq(&sums.col);
    let row_col = sum_prod(&sums.row, &sums.col);
    let c1 = sums.s2 / (n * (n - 1.0));
    let c2 = (col_sq - sums.s2) / (n * (n - 1.0) * (n - 2.0));
    let c3 = (row_sq - sums.s2) / (n * (n - 1.0) * (n - 2.0));
    let c4 = (sums.s1 * sums.s1 - row_sq - col_sq - 2.0 * row_col + sums.s2 + sums.s2_twist)
        / (n * (n - 1.0) * (n - 2.0) * (n - 3.0));
    Ok(c1 - c2 - c3 + c4)
}

/// Literal tuple-enumeration form of [`a_terms_fast`], O(n_g⁴).
///
/// Benchmark and correctness reference only; the closed form is the
/// production path.
pub fn a_terms_literal(g: &GramMatrix, n_g: usize) -> Result<ATerms, ComputeError> {
    if !g.is_symmetric() {
        return Err(ComputeError::AsymmetricGram);
    }
    check_square_size(g, n_g)?;
    let m = g.entries();
    let n = n_g as f64;
    let mut s1 = 0.0f64;
    let mut s2 = 0.0f64;
    let mut s3 = 0.0f64;
    for i in 0..n_g {
        for j in 0..n_g {
            if j == i {
                continue;
            }
            s1 += m[(i, j)] * m[(i, j)];
            for k in 0..n_g {
                if k == i || k == j {
                    continue;
                }
                s2 += m[(i, j)] * m[(j, k)];
                for h in 0..n_g {
                    if h == i || h == j || h == k {
                        continue;
                    }
                    s3 += m[(i, j)] * m[(k, h)];
                }
            }
        }
    }
    Ok(ATerms {
        a1: s1 / (n * (n - 1.0)),
        a2: 2.0 * s2 / (n * (n - 1.0) * (n - 2.0)),
        a3: s3 / (n * (n - 1.0) * (n - 2.0) * (n - 3.0)),
    })
}

/// Literal tuple-enumeration form of [`c_fast`], O(n_g⁴).
pub fn c_literal(gst: &GramMatrix, n_g: usize) -> Result<f64, ComputeError> {
    check_square_size(gst, n_g)?;
    let m = gst.entries();
    let n = n_g as f64;
    let mut c1 = 0.0f64;
    let mut c2 = 0.0f64;
    let mut c3 = 0.0f64;
    let mut c4 = 0.0f64;
    for i in 0..n_g {
        for j in 0..n_g {
            if j == i {
                continue;
            }
            c1 += m[(i, j)] * m[(i, j)];
            for h in 0..n_g {
                if h == i || h == j {
                    continue;
                }
                // Shared column j, then shared row i.
                c2 += m[(i, j)] * m[(h, j)];
                c3 += m[(i, j)] * m[(i, h)];
            }
            for k in 0..n_g {
                if k == i || k == j {
                    continue;
                }
                for h in 0..n_g {
                    if h == i || h == j || h == k {
                        continue;
                    }
                    c4 += m[(i, j)] * m[(k, h)];
                }
            }
        }
    }
    let d2 = n * (n - 1.0);
    let d3 = d2 * (n - 2.0);
    let d4 = d3 * (n - 3.0);
    Ok(c1 / d2 - c2 / d3 - c3 / d3 + c4 / d4)
}

/// Number of unordered index pairs {i, j} from n, all distinct.
pub fn unordered_pair_count(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Number of unordered index triples from n, all distinct.
pub fn unordered_triple_count(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) * n.saturating_sub(2) / 6
}

/// Number of unordered index quadruples from n, all distinct.
pub fn unordered_quad_count(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) * n.saturating_sub(2) * n.saturating_sub(3) / 24
}

/// Falling factorial n·(n-1)⋯(n-r+1): ordered r-tuples without repeats.
pub fn ordered_tuple_count(n: usize, r: usize) -> u64 {
    let n = n as u64;
    (0..r as u64).map(|k| n.saturating_sub(k)).product()
}

/// Leading terms of the window-pair statistic on strictly positive data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalTerms {
    pub a_s1: f64,
    pub a_t1: f64,
    pub c1: f64,
    pub n_g: usize,
}

impl PrincipalTerms {
    /// `a_s1 + a_t1 - 2·c1`; zero for identical windows.
    pub fn value(&self) -> f64 {
        self.a_s1 + self.a_t1 - 2.0 * self.c1
    }

    /// Worst-case magnitude of the dropped lower-order terms:
    /// `(3/(n_g-2) + 12/((n_g-2)(n_g-3))) · (a_s1 + a_t1)`.
    pub fn error_bound(&self) -> f64 {
        let n = self.n_g as f64;
        (3.0 / (n - 2.0) + 12.0 / ((n - 2.0) * (n - 3.0))) * (self.a_s1 + self.a_t1)
    }
}

fn first_terms(g: &GramMatrix, n_g: usize) -> f64 {
    let n = n_g as f64;
    let mut acc = NeumaierSum::new();
    let m = g.entries();
    for i in 0..n_g {
        for j in 0..n_g {
            if i != j {
                acc.add(m[(i, j)] * m[(i, j)]);
            }
        }
    }
    acc.value() / (n * (n - 1.0))
}

fn check_positive(w: &WindowMatrix, window: usize) -> Result<(), ComputeError> {
    let m = w.data();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] <= 0.0 {
                return Err(ComputeError::NotPositive {
                    window,
                    channel: i,
                    sample: j,
                    value: m[(i, j)],
                });
            }
        }
    }
    Ok(())
}

/// Leading terms of the window-pair statistic with their error bound.
///
/// Valid only when every raw entry of both windows is strictly positive
/// (same-sign data keeps the leading Gram-square terms dominant) and the
/// window is large enough ([`PRINCIPAL_MIN_WINDOW`]) for the dropped terms
/// to be small. Both premises are hard errors. The result is a biased
/// approximation of the exact pair statistic; [`PrincipalTerms::error_bound`]
/// bounds the gap. Cost O(p·n_g² ) for the Grams, O(n_g²) after.
pub fn principal_terms(ws: &WindowMatrix, wt: &WindowMatrix) -> Result<PrincipalTerms, ComputeError> {
    if ws.p() != wt.p() {
        return Err(ComputeError::ChannelMismatch {
            left: ws.p(),
            right: wt.p(),
        });
    }
    if ws.n_g() != wt.n_g() {
        return Err(ComputeError::WindowSizeMismatch {
            left: ws.n_g(),
            right: wt.n_g(),
        });
    }
    let n_g = ws.n_g();
    if n_g < PRINCIPAL_MIN_WINDOW {
        return Err(ComputeError::RegimeTooSmall {
            got: n_g,
            min: PRINCIPAL_MIN_WINDOW,
        });
    }
    check_positive(ws, 0)?;
    check_positive(wt, 1)?;
    let gs = gram(ws, None)?;
    let gt = gram(wt, None)?;
    let y = gram(ws, Some(wt))?;
    Ok(PrincipalTerms {
        a_s1: first_terms(&gs, n_g),
        a_t1: first_terms(&gt, n_g),
        c1: first_terms(&y, n_g),
        n_g,
    })
}

/// Value of the leading-term shortcut; see [`principal_terms`].
pub fn principal_stat(ws: &WindowMatrix, wt: &WindowMatrix) -> Result<f64, ComputeError> {
    Ok(principal_terms(ws, wt)?.value())
}

/// One benchmark measurement: median wall-clock nanoseconds for the literal
/// tuple-enumeration path and the closed-form path at one window size.
/// `exact_ns` is 0 for sizes above [`LITERAL_CAP`], where the quartic path
/// is not run.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct BenchRow {
    pub n_g: usize,
    pub exact_ns: u128,
    pub fast_ns: u128,
}

fn median_ns(mut samples: Vec<u128>) -> u128 {
    samples.sort_unstable();
    samples[samples.len() / 2]
}

/// Times the window-pair statistic over ascending window sizes.
///
/// The workload is deterministic: window entries are seeded pseudo-random
/// draws, re-generated identically per size from `seed`. Each path is run
/// `repetitions` times and the median elapsed time reported. Timing values
/// themselves are machine-dependent; only the scaling ratios are meaningful.
pub fn benchmark_scaling(
    p: usize,
    sizes: &[usize],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<BenchRow>, ComputeError> {
    if sizes.is_empty()
        || sizes.iter().any(|&n| n < 4)
        || sizes.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(ComputeError::BadBenchmarkSizes);
    }
    if repetitions == 0 {
        return Err(ComputeError::NoRepetitions);
    }
    let p = p.max(1);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n_g in sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(n_g as u64);
        let mut draw = || {
            let data = DMatrix::from_fn(p, n_g, |_, _| 1.0 + 0.05 * rng.random::<f64>());
            WindowMatrix::new(data).expect("generated entries are finite")
        };
        let ws = draw();
        let wt = draw();
        let fast_ns = median_ns(
            (0..repetitions)
                .map(|_| {
                    let start = Instant::now();
                    let gs = gram(&ws, None).unwrap();
                    let gt = gram(&wt, None).unwrap();
                    let y = gram(&ws, Some(&wt)).unwrap();
                    let a_s = a_terms_fast(&gs, n_g).unwrap();
                    let a_t = a_terms_fast(&gt, n_g).unwrap();
                    let c = c_fast(&y, n_g).unwrap();
                    std::hint::black_box(a_s.total() + a_t.total() - 2.0 * c);
                    start.elapsed().as_nanos()
                })
                .collect(),
        );
        let exact_ns = if n_g <= LITERAL_CAP {
            median_ns(
                (0..repetitions)
                    .map(|_| {
                        let start = Instant::now();
                        let gs = gram(&ws, None).unwrap();
                        let gt = gram(&wt, None).unwrap();
                        let y = gram(&ws, Some(&wt)).unwrap();
                        let a_s = a_terms_literal(&gs, n_g).unwrap();
                        let a_t = a_terms_literal(&gt, n_g).unwrap();
                        let c = c_literal(&y, n_g).unwrap();
                        std::hint::black_box(a_s.total() + a_t.total() - 2.0 * c);
                        start.elapsed().as_nanos()
                    })
                    .collect(),
            )
        } else {
            0
        };
        rows.push(BenchRow {
            n_g,
            exact_ns,
            fast_ns,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn window(p: usize, n: usize, f: impl Fn(usize, usize) -> f64) -> WindowMatrix {
        WindowMatrix::new(DMatrix::from_fn(p, n, f)).unwrap()
    }

    #[test]
    fn gram_of_orthonormal_columns_is_identity() {
        // Columns e1, e2 of R².
        let w = window(2, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let g = gram(&w, None).unwrap();
        assert!(g.is_symmetric());
        assert_eq!(g.entries(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn gram_matches_direct_double_loop() {
        let w = window(3, 5, |i, j| ((2 * i + 3 * j) % 7) as f64 - 3.0);
        let g = gram(&w, None).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let direct: f64 = (0..3).map(|k| w.data()[(k, i)] * w.data()[(k, j)]).sum();
                assert_eq!(g.entries()[(i, j)], direct);
            }
        }
    }

    #[test]
    fn zero_window_gives_zero_gram_and_zero_terms() {
        let w = window(2, 5, |_, _| 0.0);
        let g = gram(&w, None).unwrap();
        assert!(g.entries().iter().all(|&x| x == 0.0));
        let a = a_terms_fast(&g, 5).unwrap();
        assert_eq!((a.a1, a.a2, a.a3), (0.0, 0.0, 0.0));
        let y = gram(&w, Some(&w)).unwrap();
        assert_eq!(c_fast(&y, 5).unwrap(), 0.0);
    }

    #[test]
    fn cross_gram_requires_shared_channel_count() {
        let ws = window(2, 4, |_, _| 1.0);
        let wt = window(3, 4, |_, _| 1.0);
        assert!(matches!(
            gram(&ws, Some(&wt)),
            Err(ComputeError::ChannelMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn symmetric_flag_is_validated_and_mirrored() {
        let mut m = DMatrix::from_element(3, 3, 1.0);
        m[(0, 1)] = 1.0 + 1e-5;
        assert!(matches!(
            GramMatrix::new(m, true),
            Err(ComputeError::SymmetryViolation { .. })
        ));
        let mut m = DMatrix::from_element(3, 3, 1.0);
        m[(1, 0)] = 1.0 + 1e-14;
        let g = GramMatrix::new(m, true).unwrap();
        assert_eq!(g.entries()[(1, 0)], g.entries()[(0, 1)]);
    }

    #[test]
    fn fast_terms_match_literal_enumeration() {
        let ws = window(3, 6, |i, j| ((5 * i + 2 * j) % 11) as f64 - 5.0);
        let wt = window(3, 6, |i, j| ((3 * i + 7 * j) % 13) as f64 - 6.0);
        let gs = gram(&ws, None).unwrap();
        let fast = a_terms_fast(&gs, 6).unwrap();
        let lit = a_terms_literal(&gs, 6).unwrap();
        // Integer-valued data keeps both paths exact.
        assert_eq!(fast.a1, lit.a1);
        assert_eq!(fast.a2, lit.a2);
        assert_eq!(fast.a3, lit.a3);
        let y = gram(&ws, Some(&wt)).unwrap();
        assert_eq!(c_fast(&y, 6).unwrap(), c_literal(&y, 6).unwrap());
    }

    #[test]
    fn single_window_terms_reject_cross_grams() {
        let ws = window(2, 4, |i, j| (i + j) as f64);
        let wt = window(2, 4, |i, j| (i * j) as f64 + 1.0);
        let y = gram(&ws, Some(&wt)).unwrap();
        assert!(matches!(
            a_terms_fast(&y, 4),
            Err(ComputeError::AsymmetricGram)
        ));
    }

    #[test]
    fn cross_term_rejects_non_square_and_small_windows() {
        let ws = window(2, 4, |i, j| (i + j) as f64);
        let wt = window(2, 5, |i, j| (i + j) as f64);
        let y = gram(&ws, Some(&wt)).unwrap();
        assert!(matches!(
            c_fast(&y, 4),
            Err(ComputeError::NonSquareGram { rows: 4, cols: 5 })
        ));
        let w3 = window(2, 3, |i, j| (i + j) as f64);
        let g3 = gram(&w3, None).unwrap();
        assert!(matches!(
            a_terms_fast(&g3, 3),
            Err(ComputeError::WindowTooSmall { got: 3 })
        ));
    }

    #[test]
    fn stated_size_must_match_gram() {
        let w = window(2, 4, |i, j| (i + j) as f64);
        let g = gram(&w, None).unwrap();
        assert!(matches!(
            a_terms_fast(&g, 5),
            Err(ComputeError::StatedSizeMismatch {
                stated: 5,
                actual: 4
            })
        ));
    }

    #[test]
    fn tuple_counts_match_enumeration() {
        for n in 4..=12usize {
            let mut pairs = 0u64;
            let mut triples = 0u64;
            let mut quads = 0u64;
            for i in 0..n {
                for j in (i + 1)..n {
                    pairs += 1;
                    for k in (j + 1)..n {
                        triples += 1;
                        for h in (k + 1)..n {
                            quads += 1;
                            let _ = h;
                        }
                    }
                }
            }
            assert_eq!(unordered_pair_count(n), pairs);
            assert_eq!(unordered_triple_count(n), triples);
            assert_eq!(unordered_quad_count(n), quads);
        }
        assert_eq!(ordered_tuple_count(5, 4), 120);
        assert_eq!(ordered_tuple_count(5, 3), 60);
        assert_eq!(ordered_tuple_count(5, 2), 20);
    }

    #[test]
    fn principal_is_zero_for_identical_windows() {
        let w = window(3, 24, |i, j| 1.0 + 0.01 * ((i * 31 + j * 7) % 10) as f64);
        let t = principal_terms(&w, &w).unwrap();
        assert_eq!(t.value(), 0.0);
        assert!(t.error_bound() > 0.0);
    }

    #[test]
    fn principal_enforces_positivity_and_regime() {
        let mut data = DMatrix::from_element(2, 24, 1.0);
        data[(1, 3)] = 0.0;
        let bad = WindowMatrix::new(data).unwrap();
        let good = window(2, 24, |_, _| 1.0);
        match principal_stat(&bad, &good) {
            Err(ComputeError::NotPositive {
                window: 0,
                channel: 1,
                sample: 3,
                value,
            }) => assert_eq!(value, 0.0),
            other => panic!("expected NotPositive, got {other:?}"),
        }
        let small = window(2, 10, |_, _| 1.0);
        assert!(matches!(
            principal_stat(&small, &small),
            Err(ComputeError::RegimeTooSmall { got: 10, min: 20 })
        ));
    }

    #[test]
    fn benchmark_validates_inputs_and_caps_literal_path() {
        assert!(matches!(
            benchmark_scaling(2, &[8, 8], 3, 0),
            Err(ComputeError::BadBenchmarkSizes)
        ));
        assert!(matches!(
            benchmark_scaling(2, &[8], 0, 0),
            Err(ComputeError::NoRepetitions)
        ));
        let rows = benchmark_scaling(2, &[8, 80], 3, 7).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].exact_ns > 0);
        assert!(rows[0].fast_ns > 0);
        assert_eq!(rows[1].exact_ns, 0);
    }
}
