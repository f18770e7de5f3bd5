use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{mse_loss, Activation, DenseLayer, Param};
use crate::predictors::train::Network;

/// Stack of dense layers: ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// `n_layers` dense layers (the last one is the output layer).
    pub fn new<R: Rng>(
        rng: &mut R,
        d_in: usize,
        hidden: usize,
        n_layers: usize,
        d_out: usize,
    ) -> Result<Self> {
        if n_layers == 0 || d_in == 0 || d_out == 0 || hidden == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        let mut width = d_in;
        for i in 0..n_layers {
            let last = i + 1 == n_layers;
            let out = if last { d_out } else { hidden };
            let act = if last {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(DenseLayer::new(rng, width, out, act));
            width = out;
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() || layers.windows(2).any(|w| w[0].d_out != w[1].d_in) {
            return Err(Error::Shape("dense layers do not chain".into()));
        }
        Ok(Self { layers })
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    fn activations(&self, x: &[f64], batch: usize) -> Result<Vec<Vec<f64>>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for l in &self.layers {
            let next = l.forward(acts.last().expect("nonempty"), batch)?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Backward pass from an output gradient; returns the input gradient.
    pub fn backward_from(&mut self, x: &[f64], dy: &[f64], batch: usize) -> Result<Vec<f64>> {
        let acts = self.activations(x, batch)?;
        let mut g = dy.to_vec();
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            g = l.backward(&acts[i], &acts[i + 1], &g, batch)?;
        }
        Ok(g)
    }
}

impl Network for Mlp {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.activations(x, batch)?.pop().expect("nonempty"))
    }

    fn accumulate(&mut self, x: &[f64], y: &[f64], batch: usize) -> Result<f64> {
        let acts = self.activations(x, batch)?;
        let (loss, mut g) = mse_loss(acts.last().expect("nonempty"), y)?;
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            g = l.backward(&acts[i], &acts[i + 1], &g, batch)?;
        }
        Ok(loss)
    }
}
