//! Small summary-statistics helpers used by reports and tests.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// At most `max_points` indices evenly spread over `0..len`, always keeping
/// the first and last index.
pub fn downsample_indices(len: usize, max_points: usize) -> Vec<usize> {
    if len == 0 || max_points == 0 {
        return Vec::new();
    }
    if len <= max_points {
        return (0..len).collect();
    }
    if max_points == 1 {
        return vec![len - 1];
    }
    let last = (len - 1) as f64;
    let mut out: Vec<usize> = (0..max_points)
        .map(|i| (i as f64 * last / (max_points - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}
