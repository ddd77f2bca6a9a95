//! Compensated summation primitives.
//!
//! Every U-statistic reduction in this crate accumulates n_g² to n_g⁴ terms
//! whose partial sums can exceed the final value by many orders of magnitude
//! (the three estimator terms cancel almost exactly on raw sensor data).
//! All such reductions therefore run through [`NeumaierSum`], which tracks a
//! running error compensation and is immune to the `sum >> term` swamping
//! that plain `+=` suffers.

/// Neumaier's improved Kahan accumulator.
///
/// Maintains `sum` plus a compensation term holding the rounding error of
/// every addition so far; [`NeumaierSum::value`] returns their sum. The
/// result is exact whenever the true sum and all partial sums are exactly
/// representable, and otherwise carries an error independent of the number
/// of terms (second-order in the unit roundoff).
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one term.
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Current compensated total.
    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator of terms.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut acc = NeumaierSum::new();
    for x in terms {
        acc.add(x);
    }
    acc.value()
}

/// Mean and unbiased (n−1) standard deviation of a sample, both compensated.
///
/// Returns `(0.0, 0.0)` for an empty sample and `(mean, 0.0)` for a single
/// observation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = neumaier_sum(values.iter().copied()) / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let var = (ss / (values.len() - 1) as f64).max(0.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_exactly_on_integers() {
        let mut acc = NeumaierSum::new();
        for i in 0..1000 {
            acc.add(i as f64);
        }
        assert_eq!(acc.value(), 499_500.0);
    }

    #[test]
    fn recovers_small_terms_swamped_by_large_ones() {
        // 1e16 + 1 + ... + 1 - 1e16 loses every unit term in naive f64.
        let mut acc = NeumaierSum::new();
        acc.add(1e16);
        for _ in 0..100 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 100.0);
    }

    #[test]
    fn classic_neumaier_counterexample_to_kahan() {
        // Kahan's original scheme returns 0 here; Neumaier returns 2.
        let terms = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(terms.iter().copied()), 2.0);
    }

    #[test]
    fn mean_and_std_matches_hand_values() {
        let (m, s) = mean_and_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let expected = (5.0f64 / 3.0).sqrt();
        assert!((s - expected).abs() < 1e-15);
    }

    #[test]
    fn mean_and_std_degenerate_inputs() {
        assert_eq!(mean_and_std(&[]), (0.0, 0.0));
        assert_eq!(mean_and_std(&[7.0]), (7.0, 0.0));
        let (m, s) = mean_and_std(&[3.0, 3.0, 3.0]);
        assert_eq!(m, 3.0);
        assert_eq!(s, 0.0);
    }
}
