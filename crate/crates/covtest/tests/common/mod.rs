//! Shared test support: brute-force tuple-enumeration oracles for the trace
//! estimators, plus data generators and distribution checks.
//!
//! The oracles mirror the estimator definitions term by term, summing over
//! explicitly enumerated index tuples with mutually distinct labels. They
//! are O(n^4) and independent of the production closed forms, so agreement
//! is evidence the algebraic reductions are right.

#![allow(dead_code)]

use covtest::matrixflow::{MatrixFlow, WindowMatrix};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::ContinuousCDF;

// ===== oracles =====

/// Cross-Gram by explicit dot products: entry (i, j) is column i of `ws`
/// dotted with column j of `wt`.
pub fn oracle_gram(ws: &DMatrix<f64>, wt: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let p = ws.nrows();
    let n = ws.ncols();
    assert_eq!(wt.nrows(), p, "oracle windows must share channel count");
    assert_eq!(wt.ncols(), n, "oracle windows must share sample count");
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..p).map(|ch| ws[(ch, i)] * wt[(ch, j)]).sum())
                .collect()
        })
        .collect()
}

/// Three terms of the squared-trace estimator by literal tuple sums:
///
/// A1 = 1/(n(n-1))           sum over i != j of G_ij^2
/// A2 = 2/(n(n-1)(n-2))      sum over distinct (i, j, k) of G_ij G_jk
/// A3 = 1/(n(n-1)(n-2)(n-3)) sum over distinct (i, j, k, h) of G_ij G_kh
pub fn oracle_a_terms(w: &DMatrix<f64>) -> (f64, f64, f64) {
    let g = oracle_gram(w, w);
    let n = w.ncols();
    assert!(n >= 4, "oracle needs at least four samples");
    let mut a1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a1 += g[i][j] * g[i][j];
            }
        }
    }
    let mut a2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i != j && j != k && k != i {
                    a2 += g[i][j] * g[j][k];
                }
            }
        }
    }
    let mut a3 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                for h in 0..n {
                    if h == i || h == j || h == k {
                        continue;
                    }
                    a3 += g[i][j] * g[k][h];
                }
            }
        }
    }
    let nn = n as f64;
    (
        a1 / (nn * (nn - 1.0)),
        2.0 * a2 / (nn * (nn - 1.0) * (nn - 2.0)),
        a3 / (nn * (nn - 1.0) * (nn - 2.0) * (nn - 3.0)),
    )
}

/// Unbiased squared-trace estimate A = A1 - A2 + A3.
pub fn oracle_a(w: &DMatrix<f64>) -> f64 {
    let (a1, a2, a3) = oracle_a_terms(w);
    a1 - a2 + a3
}

/// Distinct-label cross-trace estimator over Y_ij = x_i' y_j:
///
/// C1 = 1/(n(n-1))           sum over i != j of Y_ij^2
/// C2 = 1/(n(n-1)(n-2))      sum over distinct (i, h, j) of Y_ij Y_hj
/// C3 = 1/(n(n-1)(n-2))      sum over distinct (i, h, j) of Y_ji Y_jh
/// C4 = 1/(n(n-1)(n-2)(n-3)) sum over distinct (i, j, k, h) of Y_ij Y_kh
/// C  = C1 - C2 - C3 + C4
pub fn oracle_c(ws: &DMatrix<f64>, wt: &DMatrix<f64>) -> f64 {
    let y = oracle_gram(ws, wt);
    let n = ws.ncols();
    assert!(n >= 4, "oracle needs at least four samples");
    let mut c1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                c1 += y[i][j] * y[i][j];
            }
        }
    }
    let mut c2 = 0.0;
    let mut c3 = 0.0;
    for i in 0..n {
        for h in 0..n {
            if h == i {
                continue;
            }
            for j in 0..n {
                if j == i || j == h {
                    continue;
                }
                c2 += y[i][j] * y[h][j];
                c3 += y[j][i] * y[j][h];
            }
        }
    }
    let mut c4 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                for h in 0..n {
                    if h == i || h == j || h == k {
                        continue;
                    }
                    c4 += y[i][j] * y[k][h];
                }
            }
        }
    }
    let nn = n as f64;
    let d2 = nn * (nn - 1.0);
    let d3 = d2 * (nn - 2.0);
    let d4 = d3 * (nn - 3.0);
    c1 / d2 - c2 / d3 - c3 / d3 + c4 / d4
}

/// Pair statistic from the oracles: A_s + A_t minus twice (or once) the
/// cross term.
pub fn oracle_vst(ws: &DMatrix<f64>, wt: &DMatrix<f64>, two_c: bool) -> f64 {
    let c = oracle_c(ws, wt);
    oracle_a(ws) + oracle_a(wt) - if two_c { 2.0 * c } else { c }
}

/// Pooled flow statistic from the oracles: mean pair statistic scaled by
/// 2/(q(q-1)).
pub fn oracle_multi(windows: &[DMatrix<f64>], two_c: bool) -> f64 {
    let q = windows.len();
    assert!(q >= 2, "oracle pooling needs at least two windows");
    let mut sum = 0.0;
    for s in 0..q {
        for t in (s + 1)..q {
            sum += oracle_vst(&windows[s], &windows[t], two_c);
        }
    }
    let qq = q as f64;
    2.0 * sum / (qq * (qq - 1.0))
}

/// Subtracts each channel's sample mean, computed independently of the
/// production centering.
pub fn oracle_center(w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = w.clone();
    for i in 0..w.nrows() {
        let mean: f64 = (0..w.ncols()).map(|j| w[(i, j)]).sum::<f64>() / w.ncols() as f64;
        for j in 0..w.ncols() {
            out[(i, j)] -= mean;
        }
    }
    out
}

// ===== data generators =====

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Window of small integers, exact in f64 so oracle comparisons are sharp.
pub fn int_window(p: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(p, n, |_, _| rng.random_range(-4..=4) as f64)
}

/// Standard normal entries via Box-Muller on the generator's uniforms,
/// avoiding the production sampling path.
pub fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn gaussian_window(p: usize, n: usize, sds: &[f64], rng: &mut ChaCha8Rng) -> WindowMatrix {
    assert_eq!(sds.len(), p);
    let data = DMatrix::from_fn(p, n, |i, _| sds[i] * normal_draw(rng));
    WindowMatrix::new(data).expect("gaussian window entries are finite")
}

pub fn gaussian_flow(p: usize, n_g: usize, q: usize, sds: &[f64], rng: &mut ChaCha8Rng) -> MatrixFlow {
    let windows = (0..q).map(|_| gaussian_window(p, n_g, sds, rng)).collect();
    MatrixFlow::new(windows).expect("gaussian windows share one shape")
}

pub fn std_normal_flow(p: usize, n_g: usize, q: usize, rng: &mut ChaCha8Rng) -> MatrixFlow {
    gaussian_flow(p, n_g, q, &vec![1.0; p], rng)
}

/// Null flow with the leading `scaled` windows inflated by `sqrt(factor)`,
/// giving them covariance `factor` times the rest.
pub fn scaled_flow(
    p: usize,
    n_g: usize,
    q: usize,
    scaled: usize,
    factor: f64,
    rng: &mut ChaCha8Rng,
) -> MatrixFlow {
    let root = factor.sqrt();
    let windows = (0..q)
        .map(|g| {
            let data = DMatrix::from_fn(p, n_g, |_, _| {
                let x = normal_draw(rng);
                if g < scaled {
                    root * x
                } else {
                    x
                }
            });
            WindowMatrix::new(data).expect("scaled window entries are finite")
        })
        .collect();
    MatrixFlow::new(windows).expect("scaled windows share one shape")
}

pub fn window_of(data: DMatrix<f64>) -> WindowMatrix {
    WindowMatrix::new(data).expect("test window entries are finite")
}

pub fn flow_of(windows: Vec<WindowMatrix>) -> MatrixFlow {
    MatrixFlow::new(windows).expect("test windows share one shape")
}

// ===== distribution checks =====

pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn skewness(xs: &[f64]) -> f64 {
    let (mean, sd) = mean_and_sd(xs);
    let n = xs.len() as f64;
    xs.iter().map(|x| ((x - mean) / sd).powi(3)).sum::<f64>() / n
}

pub fn normal_cdf(x: f64) -> f64 {
    statrs::distribution::Normal::new(0.0, 1.0)
        .expect("unit normal parameters are valid")
        .cdf(x)
}

/// Two-sided Kolmogorov-Smirnov distance between the sample and the
/// standard normal.
pub fn ks_distance(scores: &[f64]) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let cdf = normal_cdf(*x);
        let lo = (cdf - i as f64 / n).abs();
        let hi = ((i + 1) as f64 / n - cdf).abs();
        sup = sup.max(lo).max(hi);
    }
    sup
}

/// Relative agreement with a floor of one, so near-zero references demand
/// absolute agreement instead of exploding.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!(
        close(a, b, tol),
        "{what}: {a} vs {b} (diff {})",
        (a - b).abs()
    );
}
