//! Small numeric utilities: compensated summation and percentiles.

use alloc::vec::Vec;

/// Neumaier-compensated accumulator.
///
/// Weather aggregation sums tens of thousands of weighted hourly terms per
/// regressor; plain f64 summation would make results depend on iteration
/// order at the 1e-12 level. Compensation keeps order effects below 1e-9
/// even for year-long triple loops.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Accumulator::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// Arithmetic mean; returns `None` on an empty iterator.
pub fn mean<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let mut acc = Accumulator::new();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    (n > 0).then(|| acc.total() / n as f64)
}

/// Sorts in place by total order (NaNs would sort last; inputs are validated
/// finite upstream).
pub fn sort(values: &mut [f64]) {
    values.sort_unstable_by(f64::total_cmp);
}

/// Linear-interpolation percentile (Hyndman–Fan type 7) on a sorted slice.
///
/// `p` is a fraction in [0, 1]. Panics on an empty slice; callers guarantee
/// at least one value.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h as usize; // floor, h >= 0
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Median via [`percentile`] on an unsorted buffer.
pub fn median(values: &mut Vec<f64>) -> f64 {
    sort(values);
    percentile(values, 0.5)
}
