//! Small numerical helpers shared by the filter and the estimators.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Largest finite-or-infinite entry, ignoring NaN; `-inf` for an empty slice.
pub fn max_log(log_values: &[f64]) -> f64 {
    log_values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Normalised linear weights from log-weights, written into `out`.
///
/// Returns `false` (leaving `out` unspecified) when every weight is zero.
pub fn normalise_log_weights(log_weights: &[f64], out: &mut Vec<f64>) -> bool {
    out.clear();
    let shift = max_log(log_weights);
    if shift == f64::NEG_INFINITY {
        return false;
    }
    out.extend(log_weights.iter().map(|&lw| (lw - shift).exp()));
    let total: CompensatedSum = out.iter().copied().collect();
    let total = total.value();
    for w in out.iter_mut() {
        *w /= total;
    }
    true
}

/// Weighted mean `sum_i w_i v_i` for normalised weights, computed about the
/// first value so that constant values come back exactly.
pub fn weighted_mean(weights: &[f64], values: &[f64]) -> f64 {
    let Some(&shift) = values.first() else {
        return f64::NAN;
    };
    shift
        + weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * (v - shift))
            .collect::<CompensatedSum>()
            .value()
}

/// Sample mean and unbiased sample variance; `None` for fewer than two values.
pub fn mean_and_variance(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    let ss = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value();
    Some((mean, ss / (n - 1.0)))
}

/// Linear-interpolation quantile (type 7) of an unsorted slice.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Ordinary least squares fit `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x, y)`; `None` with fewer than two distinct x.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}
