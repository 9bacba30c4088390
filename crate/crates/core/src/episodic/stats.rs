/// Arithmetic mean, summed in slice order. Empty input gives 0.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard deviation with the population (1/n) normalization.
///
/// Welford update; identical inputs give exactly zero.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (mut m, mut m2) = (0.0f64, 0.0f64);
    for (i, &v) in values.iter().enumerate() {
        let delta = v - m;
        m += delta / (i + 1) as f64;
        m2 += delta * (v - m);
    }
    (m2 / values.len() as f64).sqrt()
}

/// Half-width of the normal-approximation 95% interval of the mean:
/// `1.96 * std / sqrt(n)`.
pub fn ci95(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    1.96 * population_std(values) / (values.len() as f64).sqrt()
}
