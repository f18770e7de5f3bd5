//! Autoregressive model fit by least squares, forecast recursively.

use crate::error::{Error, Result};
use crate::nn::least_squares;

#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub intercept: f64,
    /// Lag coefficients, lag 1 first.
    pub coef: Vec<f64>,
}

/// Fits `x_t = c + Σ_j φ_j x_{t-j}` on `values`. The regression is solved on
/// centred columns, which leaves the estimate unchanged and makes a constant
/// series an exactly solvable (ridge) case.
pub fn fit_ar(values: &[f64], p: usize, ridge: f64) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::Config("AR order must be positive".into()));
    }
    if values.len() <= p + 1 {
        return Err(Error::InsufficientHistory(format!(
            "AR({p}) needs more than {} values, got {}",
            p + 1,
            values.len()
        )));
    }
    let rows = values.len() - p;
    let mut means = vec![0.0; p + 1];
    for i in p..values.len() {
        means[0] += values[i];
        for j in 1..=p {
            means[j] += values[i - j];
        }
    }
    for m in &mut means {
        *m /= rows as f64;
    }
    let mut x = Vec::with_capacity(rows * p);
    let mut y = Vec::with_capacity(rows);
    for i in p..values.len() {
        y.push(values[i] - means[0]);
        for j in 1..=p {
            x.push(values[i - j] - means[j]);
        }
    }
    let (coef, ridged) = least_squares(&x, &y, rows, p, ridge)?;
    if ridged {
        log::warn!("AR({p}) design matrix is singular; used ridge {ridge:e}");
    }
    let intercept = means[0]
        - coef
            .iter()
            .zip(&means[1..])
            .map(|(c, m)| c * m)
            .sum::<f64>();
    ArModel::new(intercept, coef)
}

impl ArModel {
    pub fn new(intercept: f64, coef: Vec<f64>) -> Result<Self> {
        if coef.is_empty() || !intercept.is_finite() || coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation(
                "AR coefficients must be finite and nonempty".into(),
            ));
        }
        Ok(Self { intercept, coef })
    }

    pub fn order(&self) -> usize {
        self.coef.len()
    }

    /// `h` recursive forecasts from the last `p` observations (oldest first).
    pub fn predict(&self, recent: &[f64], h: usize) -> Result<Vec<f64>> {
        let p = self.order();
        if recent.len() != p {
            return Err(Error::Shape(format!(
                "AR({p}) needs {p} recent values, got {}",
                recent.len()
            )));
        }
        let mut buf = recent.to_vec();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let n = buf.len();
            let v = self.intercept
                + self
                    .coef
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * buf[n - 1 - j])
                    .sum::<f64>();
            out.push(v);
            buf.push(v);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn ar3_series(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut x = vec![0.0; n + 200];
        for t in 3..x.len() {
            x[t] = 0.6 * x[t - 1] + 0.25 * x[t - 2] + 0.1 * x[t - 3] + noise.sample(&mut rng);
        }
        x.split_off(200)
    }

    #[test]
    fn recovers_ar3() {
        let x = ar3_series(1, 5000);
        let m = fit_ar(&x, 3, 1e-6).unwrap();
        for (c, want) in m.coef.iter().zip([0.6, 0.25, 0.1]) {
            assert!((c - want).abs() < 0.05, "{:?}", m.coef);
        }
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let m = fit_ar(&[42.5; 200], 28, 1e-6).unwrap();
        let p = m.predict(&[42.5; 28], 12).unwrap();
        assert!(p.iter().all(|v| (v - 42.5).abs() < 1e-9), "{p:?}");
    }

    #[test]
    fn forecast_is_recursive() {
        let m = ArModel::new(1.0, vec![0.5]).unwrap();
        assert_eq!(m.predict(&[4.0], 3).unwrap(), vec![3.0, 2.5, 2.25]);
        assert!(fit_ar(&[1.0, 2.0, 3.0], 2, 1e-6).is_err());
    }
}
