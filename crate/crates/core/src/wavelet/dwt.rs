use crate::error::{Error, Result};

/// Daubechies wavelet with 6 vanishing moments (12 taps), decomposition low-pass.
pub const DB6_LOW: [f64; 12] = [
    -0.00107730108499558,
    0.004777257511010651,
    0.0005538422009938016,
    -0.031582039318031156,
    0.02752286553001629,
    0.09750160558707936,
    -0.12976686756709563,
    -0.22626469396516913,
    0.3152503517092432,
    0.7511339080215775,
    0.4946238903983854,
    0.11154074335008017,
];

/// Quadrature mirror high-pass: `g[n] = (-1)^n h[L-1-n]`.
pub fn db6_high() -> [f64; 12] {
    let mut g = [0.0; 12];
    for (n, v) in g.iter_mut().enumerate() {
        let s = if n % 2 == 0 { 1.0 } else { -1.0 };
        *v = s * DB6_LOW[11 - n];
    }
    g
}

/// Multi-level decomposition. `details[0]` is the coarsest scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub details: Vec<Vec<f64>>,
    pub approximation: Vec<f64>,
}

impl Pyramid {
    pub fn energy(&self) -> f64 {
        self.details
            .iter()
            .flatten()
            .chain(&self.approximation)
            .map(|v| v * v)
            .sum()
    }

    /// All coefficients, approximation first, then details coarsest to finest.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.approximation.clone();
        for d in &self.details {
            v.extend_from_slice(d);
        }
        v
    }
}

/// One analysis step with periodic extension: returns (approximation, detail).
pub fn analysis_step(x: &[f64], low: &[f64], high: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for m in 0..low.len() {
            let v = x[(2 * k + m) % n];
            sa += low[m] * v;
            sd += high[m] * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

/// Periodic orthonormal db6 transform over `levels` levels. The input length
/// must be a power of two with `2^levels` dividing it.
pub fn dwt_db6(values: &[f64], levels: usize) -> Result<Pyramid> {
    let n = values.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Validation(format!(
            "wavelet input length {n} is not a power of two >= 2"
        )));
    }
    let max_levels = n.trailing_zeros() as usize;
    if levels == 0 || levels > max_levels {
        return Err(Error::Validation(format!(
            "{levels} levels requested, length {n} allows 1..={max_levels}"
        )));
    }
    let high = db6_high();
    let mut approx = values.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis_step(&approx, &DB6_LOW, &high);
        details.push(d);
        approx = a;
    }
    details.reverse();
    Ok(Pyramid {
        details,
        approximation: approx,
    })
}
