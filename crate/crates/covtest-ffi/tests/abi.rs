//! Exercises the C ABI from Rust (status codes, error messages, handle
//! lifecycles) and compiles a C client against the generated header.

use covtest_ffi::covtest_status::*;
use covtest_ffi::*;
use std::ffi::CStr;
use std::path::PathBuf;

/// Deterministic pseudo-random doubles in [-1, 1) for test buffers.
struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn buffer(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.next_f64()).collect()
    }
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(covtest_last_error())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn null_pointers_come_back_as_null_pointer_status() {
    let mut out = 0.0f64;
    let mut result = covtest_test_result {
        statistic: 0.0,
        std_dev: 0.0,
        score: 0.0,
        pair_count: 0,
    };
    let data = [0.0f64; 16];
    unsafe {
        assert_eq!(
            covtest_multi_stat(std::ptr::null(), 2, 4, 2, &mut out),
            COVTEST_NULL_POINTER
        );
        assert_eq!(
            covtest_multi_stat(data.as_ptr(), 2, 4, 2, std::ptr::null_mut()),
            COVTEST_NULL_POINTER
        );
        assert_eq!(
            covtest_standardize(std::ptr::null(), 2, 4, 2, &mut result),
            COVTEST_NULL_POINTER
        );
        assert_eq!(
            covtest_far_threshold(0.05, std::ptr::null_mut()),
            COVTEST_NULL_POINTER
        );
        assert_eq!(
            covtest_cursor_push(std::ptr::null_mut(), data.as_ptr(), 2),
            COVTEST_NULL_POINTER
        );
        assert_eq!(
            covtest_cursor_next_stat(std::ptr::null_mut(), &mut result),
            COVTEST_NULL_POINTER
        );
        assert_eq!(covtest_cursor_flows_ready(std::ptr::null()), 0);
        let mut model = std::ptr::null_mut();
        assert_eq!(
            covtest_train(std::ptr::null(), 2, 4, 2, 30, 1.0, &mut model),
            COVTEST_NULL_POINTER
        );
        let mut flag = false;
        assert_eq!(
            covtest_detect(std::ptr::null(), data.as_ptr(), &mut flag, &mut out),
            COVTEST_NULL_POINTER
        );
        assert!(!last_error().is_empty());
        // Destructors must tolerate null handles.
        covtest_cursor_free(std::ptr::null_mut());
        covtest_model_free(std::ptr::null_mut());
    }
}

#[test]
fn invalid_geometry_yields_a_null_cursor_and_a_message() {
    unsafe {
        for (p, n_g, q) in [(0, 8, 2), (2, 3, 2), (2, 8, 1)] {
            let cursor = covtest_cursor_new(p, n_g, q);
            assert!(
                cursor.is_null(),
                "cursor for (p={p}, n_g={n_g}, q={q}) should be rejected"
            );
            assert!(!last_error().is_empty());
        }
        let cursor = covtest_cursor_new(2, 4, 2);
        assert!(!cursor.is_null());
        covtest_cursor_free(cursor);
    }
}

#[test]
fn argument_violations_are_invalid_argument() {
    let mut out = 0.0f64;
    let data = [1.0f64; 64];
    unsafe {
        assert_eq!(
            covtest_multi_stat(data.as_ptr(), 2, 4, 0, &mut out),
            COVTEST_INVALID_ARGUMENT
        );
        assert_eq!(
            covtest_multi_stat(data.as_ptr(), 2, 3, 2, &mut out),
            COVTEST_INVALID_ARGUMENT
        );
        assert_eq!(covtest_far_threshold(0.0, &mut out), COVTEST_INVALID_ARGUMENT);
        assert_eq!(covtest_far_threshold(1.0, &mut out), COVTEST_INVALID_ARGUMENT);
        let mut model = std::ptr::null_mut();
        let short = Lcg(7).buffer(2 * 4 * 2 * 5);
        assert_eq!(
            covtest_train(short.as_ptr(), 2, 4, 2, 5, 1.0, &mut model),
            COVTEST_INVALID_ARGUMENT,
            "five flows are below the training minimum"
        );
        assert!(last_error().contains("30"));
    }
}

#[test]
fn non_finite_samples_are_data_errors() {
    let mut out = 0.0f64;
    let mut data = Lcg(11).buffer(2 * 4 * 2);
    data[5] = f64::NAN;
    unsafe {
        assert_eq!(
            covtest_multi_stat(data.as_ptr(), 2, 4, 2, &mut out),
            COVTEST_DATA_ERROR
        );
        assert!(!last_error().is_empty());
        let cursor = covtest_cursor_new(2, 4, 2);
        assert!(!cursor.is_null());
        assert_eq!(
            covtest_cursor_push(cursor, data.as_ptr(), 8),
            COVTEST_DATA_ERROR
        );
        // The rejected batch must not advance the stream.
        let clean = Lcg(13).buffer(2 * 4 * 2);
        assert_eq!(covtest_cursor_push(cursor, clean.as_ptr(), 8), COVTEST_OK);
        assert_eq!(covtest_cursor_flows_ready(cursor), 1);
        covtest_cursor_free(cursor);
    }
}

#[test]
fn the_cursor_streams_flows_in_arrival_order() {
    let mut lcg = Lcg(17);
    unsafe {
        let cursor = covtest_cursor_new(3, 4, 2);
        assert!(!cursor.is_null());
        assert_eq!(covtest_cursor_flows_ready(cursor), 0);

        // A flow needs q * n_g = 8 columns; five leave it incomplete.
        let five = lcg.buffer(3 * 5);
        assert_eq!(covtest_cursor_push(cursor, five.as_ptr(), 5), COVTEST_OK);
        assert_eq!(covtest_cursor_flows_ready(cursor), 0);

        let three = lcg.buffer(3 * 3);
        assert_eq!(covtest_cursor_push(cursor, three.as_ptr(), 3), COVTEST_OK);
        assert_eq!(covtest_cursor_flows_ready(cursor), 1);

        let sixteen = lcg.buffer(3 * 16);
        assert_eq!(covtest_cursor_push(cursor, sixteen.as_ptr(), 16), COVTEST_OK);
        assert_eq!(covtest_cursor_flows_ready(cursor), 3);

        let mut result = covtest_test_result {
            statistic: 0.0,
            std_dev: 0.0,
            score: 0.0,
            pair_count: 0,
        };
        for _ in 0..3 {
            assert_eq!(covtest_cursor_next_stat(cursor, &mut result), COVTEST_OK);
            assert!(result.statistic.is_finite());
            assert!(result.std_dev >= 0.0);
            assert!(result.score.is_finite());
            assert_eq!(result.pair_count, 1);
        }
        assert_eq!(
            covtest_cursor_next_stat(cursor, &mut result),
            COVTEST_INVALID_ARGUMENT
        );
        assert_eq!(covtest_cursor_flows_ready(cursor), 0);
        covtest_cursor_free(cursor);
    }
}

#[test]
fn scalar_helpers_match_their_analytic_values() {
    let mut thr = 0.0f64;
    unsafe {
        assert!((covtest_gaussian_tail(0.0) - 0.5).abs() < 1e-12);
        assert_eq!(covtest_far_threshold(0.05, &mut thr), COVTEST_OK);
        assert!((thr - 1.6448536269514722).abs() < 1e-9);
        let version = CStr::from_ptr(covtest_version()).to_string_lossy();
        assert!(!version.is_empty());
    }
}

#[test]
fn training_and_detection_roundtrip() {
    let (p, n_g, q, flows) = (3usize, 8usize, 2usize, 30usize);
    let flow_len = p * n_g * q;
    let mut lcg = Lcg(23);
    let history = lcg.buffer(flow_len * flows);
    unsafe {
        let mut model = std::ptr::null_mut();
        assert_eq!(
            covtest_train(history.as_ptr(), p, n_g, q, flows, 0.5, &mut model),
            COVTEST_OK
        );
        assert!(!model.is_null());

        let mut flag = true;
        let mut magnitude = f64::NAN;
        let quiet = lcg.buffer(flow_len);
        assert_eq!(
            covtest_detect(model, quiet.as_ptr(), &mut flag, &mut magnitude),
            COVTEST_OK
        );
        assert!(!flag, "an in-distribution flow must stay unflagged");
        assert!(magnitude.is_finite());

        // Rescaling the second window breaks within-flow homogeneity.
        let mut event = lcg.buffer(flow_len);
        for value in event[p * n_g..].iter_mut() {
            *value *= 4.0;
        }
        assert_eq!(
            covtest_detect(model, event.as_ptr(), &mut flag, &mut magnitude),
            COVTEST_OK
        );
        assert!(flag, "a covariance break must be flagged");
        covtest_model_free(model);
    }
}

#[test]
fn a_constant_history_trains_but_cannot_score() {
    let (p, n_g, q, flows) = (3usize, 8usize, 2usize, 30usize);
    let flow_len = p * n_g * q;
    let one_flow = Lcg(29).buffer(flow_len);
    let history: Vec<f64> = std::iter::repeat(one_flow.iter().copied())
        .take(flows)
        .flatten()
        .collect();
    unsafe {
        let mut model = std::ptr::null_mut();
        assert_eq!(
            covtest_train(history.as_ptr(), p, n_g, q, flows, 1.0, &mut model),
            COVTEST_OK
        );
        assert!(!model.is_null());
        let mut flag = false;
        let mut magnitude = 0.0;
        assert_eq!(
            covtest_detect(model, one_flow.as_ptr(), &mut flag, &mut magnitude),
            COVTEST_DEGENERATE
        );
        assert!(!last_error().is_empty());
        covtest_model_free(model);
    }
}

/// Compiles and runs a small C client against the generated header and the
/// shared library, proving the ABI is consumable outside Rust.
#[test]
fn a_c_client_compiles_links_and_runs() {
    let header = PathBuf::from(env!("COVTEST_HEADER"));
    assert!(header.is_file(), "generated header at {header:?}");
    let header_dir = header.parent().unwrap();

    let exe = std::env::current_exe().unwrap();
    let deps_dir = exe.parent().unwrap().to_path_buf();
    let lib_dir = [deps_dir.parent().unwrap().to_path_buf(), deps_dir]
        .into_iter()
        .find(|d| d.join("libcovtest_ffi.so").is_file())
        .expect("libcovtest_ffi.so next to the test binary");

    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("smoke.c");
    std::fs::write(
        &source,
        r#"
#include "covtest.h"
#include <math.h>
#include <string.h>

static double lcg_next(unsigned long long *state) {
    *state = *state * 6364136223846793005ULL + 1442695040888963407ULL;
    return ((double)(*state >> 11) / 9007199254740992.0) * 2.0 - 1.0;
}

int main(void) {
    if (covtest_version() == NULL) return 1;
    if (fabs(covtest_gaussian_tail(0.0) - 0.5) > 1e-12) return 2;

    double threshold = 0.0;
    if (covtest_far_threshold(0.05, &threshold) != COVTEST_OK) return 3;
    if (fabs(threshold - 1.6448536269514722) > 1e-9) return 4;

    covtest_cursor *cursor = covtest_cursor_new(2, 4, 2);
    if (cursor == NULL) return 5;

    unsigned long long state = 42;
    double block[2 * 8];
    for (int i = 0; i < 16; i++) block[i] = lcg_next(&state);
    if (covtest_cursor_push(cursor, block, 8) != COVTEST_OK) return 6;
    if (covtest_cursor_flows_ready(cursor) != 1) return 7;

    covtest_test_result result;
    if (covtest_cursor_next_stat(cursor, &result) != COVTEST_OK) return 8;
    if (!isfinite(result.statistic) || !isfinite(result.score)) return 9;
    if (result.pair_count != 1) return 10;
    covtest_cursor_free(cursor);

    if (covtest_multi_stat(NULL, 2, 4, 2, &threshold) != COVTEST_NULL_POINTER) return 11;
    if (strlen(covtest_last_error()) == 0) return 12;
    return 0;
}
"#,
    )
    .unwrap();

    let binary = dir.path().join("smoke");
    let compile = std::process::Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(&source)
        .arg("-I")
        .arg(header_dir)
        .arg("-L")
        .arg(&lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lcovtest_ffi")
        .arg("-lm")
        .arg("-o")
        .arg(&binary)
        .output()
        .expect("cc is available");
    assert!(
        compile.status.success(),
        "compiling the C client failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = std::process::Command::new(&binary).output().unwrap();
    assert_eq!(
        run.status.code(),
        Some(0),
        "the C client exited nonzero: {:?}",
        run.status.code()
    );
}
