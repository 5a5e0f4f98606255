//! Order-fixed reductions. Results depend only on the input order, never on how
//! the inputs were produced, so parallel producers give bit-identical sums.

const LEAF: usize = 8;

/// Pairwise (tree) summation over the slice in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error of the mean (sample standard deviation / sqrt(n)).
///
/// Returns `(mean, 0.0)` for a single value.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(values: &[f64]) -> f64 {
    let (_, se) = mean_and_stderr(values);
    se * (values.len() as f64).sqrt()
}
