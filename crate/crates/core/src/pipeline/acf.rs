use crate::error::{Error, Result};
use crate::roadnet::SpeedSeries;

/// Sample autocorrelation at lags `0..=max_lag`, normalised by the lag-0 sum
/// so that every value lies in [-1, 1].
pub fn autocorrelation(series: &SpeedSeries, max_lag: usize) -> Result<Vec<f64>> {
    acf(&series.values, max_lag)
}

pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag >= x.len() {
        return Err(Error::Validation(format!(
            "max_lag {max_lag} must be below the series length {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "series must be fully filled before computing the ACF".into(),
        ));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = centred.iter().map(|v| v * v).sum();
    if denom <= f64::EPSILON * n * mean.abs().max(1.0) {
        return Err(Error::Degenerate(
            "constant series has no autocorrelation".into(),
        ));
    }
    Ok((0..=max_lag)
        .map(|k| {
            centred
                .iter()
                .zip(&centred[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn cosine_period_96() {
        let x: Vec<f64> = (0..96 * 200)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 96.0).cos())
            .collect();
        let r = acf(&x, 96).unwrap();
        assert_eq!(r[0], 1.0);
        assert!((r[96] - 1.0).abs() < 0.01, "{}", r[96]);
        assert!((r[48] + 1.0).abs() < 0.01, "{}", r[48]);
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let r = acf(&x, 200).unwrap();
        assert!(r[1..].iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn constant_series_errors() {
        assert!(matches!(acf(&[3.0; 50], 5), Err(Error::Degenerate(_))));
        assert!(acf(&[1.0, 2.0], 2).is_err());
    }
}
