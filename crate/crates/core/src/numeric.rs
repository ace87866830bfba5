//! Small floating-point helpers shared across modules.

/// Streaming correctly rounded summation (Shewchuk's non-overlapping partials).
///
/// The result does not depend on the order of the inputs, which is what makes
/// U-statistic values exactly invariant under sample permutation.
#[derive(Clone, Debug, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
    special: f64,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        if !x.is_finite() {
            self.special += x;
            return;
        }
        let partials = &mut self.partials;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }

    /// The sum rounded once to the nearest double.
    pub fn value(&self) -> f64 {
        if self.special != 0.0 || self.special.is_nan() {
            return self.special;
        }
        let partials = &self.partials;
        let mut n = partials.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = partials[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = partials[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // half-way correction
        if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

/// Correctly rounded sum of `values`.
pub fn exact_sum<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut acc = ExactSum::new();
    for x in values {
        acc.add(x);
    }
    acc.value()
}

/// `ln Σ exp(x_i)` computed with the max shift.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// `ln( (1/N) Σ exp(x_i) )`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// `ln Σ w_i exp(x_i)` for nonnegative weights, zero weights skipped.
pub fn log_weighted_sum_exp(values: &[f64], weights: &[f64]) -> f64 {
    let shifted: Vec<f64> = values
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&v, &w)| v + w.ln())
        .collect();
    log_sum_exp(&shifted)
}

/// `ln cosh(x)` without overflow.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Smallest `t` in `[lo, hi]` with `pred(t)` true, assuming `pred` is monotone
/// (false then true) and `pred(hi)` holds. Iterates until the bracket cannot
/// shrink further in floating point.
pub fn bisect_leftmost<F>(mut lo: f64, mut hi: f64, mut pred: F) -> f64
where
    F: FnMut(f64) -> bool,
{
    if pred(lo) {
        return lo;
    }
    for _ in 0..4096 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Format with `digits` significant digits, then print the shortest
/// representation of the rounded value (so `4.4999999999` at 9 digits prints `4.5`).
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    let rounded: f64 = s.parse().unwrap_or(x);
    format!("{rounded}")
}
