//! Small summary statistics over replication samples.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;
/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator). NaN below two samples.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// `z * sd / sqrt(n)`; zero for a single sample.
pub fn ci_half_width(xs: &[f64], z: f64) -> f64 {
    match xs.len() {
        0 => f64::NAN,
        1 => 0.0,
        n => z * sample_sd(xs) / (n as f64).sqrt(),
    }
}
