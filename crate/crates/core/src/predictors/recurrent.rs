use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{mse_loss, Activation, DenseLayer, LstmCache, LstmLayer, Param};
use crate::predictors::train::Network;

/// Stacked LSTM over a sequence; the last hidden state of the top layer feeds a dense output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmNet {
    pub seq_len: usize,
    pub input: usize,
    pub layers: Vec<LstmLayer>,
    pub head: DenseLayer,
}

impl LstmNet {
    pub fn new<R: Rng>(
        rng: &mut R,
        seq_len: usize,
        input: usize,
        hidden: usize,
        n_layers: usize,
        d_out: usize,
    ) -> Result<Self> {
        if seq_len == 0 || n_layers == 0 || hidden == 0 {
            return Err(Error::Config("lstm dimensions must be positive".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            layers.push(LstmLayer::new(
                rng,
                if i == 0 { input } else { hidden },
                hidden,
            ));
        }
        let head = DenseLayer::new(rng, hidden, d_out, Activation::Identity);
        Ok(Self {
            seq_len,
            input,
            layers,
            head,
        })
    }

    pub fn from_parts(
        seq_len: usize,
        input: usize,
        layers: Vec<LstmLayer>,
        head: DenseLayer,
    ) -> Result<Self> {
        let ok = !layers.is_empty()
            && layers[0].input == input
            && layers.windows(2).all(|w| w[1].input == w[0].hidden)
            && head.d_in == layers[layers.len() - 1].hidden;
        if !ok || seq_len == 0 {
            return Err(Error::Shape("lstm stack dimensions do not chain".into()));
        }
        Ok(Self {
            seq_len,
            input,
            layers,
            head,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum::<usize>() + self.head.param_count()
    }

    fn time_major(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let (s, d) = (self.seq_len, self.input);
        if x.len() != batch * s * d {
            return Err(Error::Shape(format!(
                "sequence batch has {} values, expected {batch} x {s} x {d}",
                x.len()
            )));
        }
        let mut out = vec![0.0; x.len()];
        for b in 0..batch {
            for t in 0..s {
                out[(t * batch + b) * d..(t * batch + b + 1) * d]
                    .copy_from_slice(&x[(b * s + t) * d..(b * s + t + 1) * d]);
            }
        }
        Ok(out)
    }

    fn run(&self, x: &[f64], batch: usize) -> Result<(Vec<LstmCache>, Vec<f64>)> {
        let mut input = self.time_major(x, batch)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let c = l.forward(&input, self.seq_len, batch)?;
            input = c.h.clone();
            caches.push(c);
        }
        let top = caches.last().expect("at least one layer");
        let hs = self.layers[self.layers.len() - 1].hidden;
        let last = top.h[(self.seq_len - 1) * batch * hs..].to_vec();
        Ok((caches, last))
    }
}

impl Network for LstmNet {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect();
        v.extend(self.head.params_mut());
        v
    }

    fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let (_, last) = self.run(x, batch)?;
        self.head.forward(&last, batch)
    }

    fn accumulate(&mut self, x: &[f64], y: &[f64], batch: usize) -> Result<f64> {
        let (caches, last) = self.run(x, batch)?;
        let out = self.head.forward(&last, batch)?;
        let (loss, dout) = mse_loss(&out, y)?;
        let dlast = self.head.backward(&last, &out, &dout, batch)?;
        let top_hidden = self.layers[self.layers.len() - 1].hidden;
        let mut dh = vec![0.0; self.seq_len * batch * top_hidden];
        dh[(self.seq_len - 1) * batch * top_hidden..].copy_from_slice(&dlast);
        for (l, cache) in self.layers.iter_mut().zip(&caches).rev() {
            dh = l.backward(cache, &dh);
        }
        Ok(loss)
    }
}
