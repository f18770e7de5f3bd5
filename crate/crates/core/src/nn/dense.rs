use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::linalg::gemm;
use crate::nn::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::Tanh,
            3 => Activation::Sigmoid,
            t => return Err(Error::Format(format!("unknown activation tag {t}"))),
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform Glorot initialisation bound.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn glorot<R: Rng>(rng: &mut R, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let a = glorot_bound(fan_in, fan_out);
    (0..n).map(|_| rng.random_range(-a..=a)).collect()
}

/// Fully connected layer `y = act(x W + b)` on a batch of row vectors.
/// `w` is `d_in x d_out`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub w: Param,
    pub b: Param,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub dx: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl DenseLayer {
    pub fn new<R: Rng>(rng: &mut R, d_in: usize, d_out: usize, activation: Activation) -> Self {
        Self {
            d_in,
            d_out,
            w: Param::new(glorot(rng, d_in * d_out, d_in, d_out)),
            b: Param::zeros(d_out),
            activation,
        }
    }

    pub fn from_parts(
        d_in: usize,
        d_out: usize,
        w: Vec<f64>,
        b: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if w.len() != d_in * d_out || b.len() != d_out {
            return Err(Error::Shape(format!(
                "dense {d_in}x{d_out} got {} weights and {} biases",
                w.len(),
                b.len()
            )));
        }
        Ok(Self {
            d_in,
            d_out,
            w: Param::new(w),
            b: Param::new(b),
            activation,
        })
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.d_in {
            return Err(Error::Shape(format!(
                "dense input has {} values, expected {batch} x {}",
                x.len(),
                self.d_in
            )));
        }
        let mut y = Vec::with_capacity(batch * self.d_out);
        for _ in 0..batch {
            y.extend_from_slice(&self.b.value);
        }
        gemm(
            batch,
            self.d_in,
            self.d_out,
            x,
            false,
            &self.w.value,
            false,
            1.0,
            &mut y,
        );
        for v in &mut y {
            *v = self.activation.apply(*v);
        }
        Ok(y)
    }

    /// Gradients for input `x`, forward output `y` and upstream gradient `dy`.
    pub fn gradients(&self, x: &[f64], y: &[f64], dy: &[f64], batch: usize) -> Result<DenseGrads> {
        if x.len() != batch * self.d_in || y.len() != batch * self.d_out || dy.len() != y.len() {
            return Err(Error::Shape("dense backward operand sizes".into()));
        }
        let dpre: Vec<f64> = y
            .iter()
            .zip(dy)
            .map(|(&yv, &g)| g * self.activation.derivative_from_output(yv))
            .collect();
        let mut dw = vec![0.0; self.d_in * self.d_out];
        gemm(
            self.d_in, batch, self.d_out, x, true, &dpre, false, 0.0, &mut dw,
        );
        let mut db = vec![0.0; self.d_out];
        for row in dpre.chunks_exact(self.d_out) {
            for (a, b) in db.iter_mut().zip(row) {
                *a += b;
            }
        }
        let mut dx = vec![0.0; batch * self.d_in];
        gemm(
            batch,
            self.d_out,
            self.d_in,
            &dpre,
            false,
            &self.w.value,
            true,
            0.0,
            &mut dx,
        );
        Ok(DenseGrads { dx, dw, db })
    }

    /// Accumulates parameter gradients and returns `dx`.
    pub fn backward(&mut self, x: &[f64], y: &[f64], dy: &[f64], batch: usize) -> Result<Vec<f64>> {
        let g = self.gradients(x, y, dy, batch)?;
        for (a, b) in self.w.grad.iter_mut().zip(&g.dw) {
            *a += b;
        }
        for (a, b) in self.b.grad.iter_mut().zip(&g.db) {
            *a += b;
        }
        Ok(g.dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }
}
