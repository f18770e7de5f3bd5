use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; `None` trains all epochs.
    pub patience: Option<usize>,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 150,
            learning_rate: 5e-4,
            weight_decay: 2e-4,
            epochs: 200,
            patience: Some(10),
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sample order for one epoch; depends only on `(seed, epoch)`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// SGD or Adam with decoupled weight decay. Moment buffers follow the order
/// in which parameters are passed to [`Optimizer::step`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![],
            v: vec![],
        }
    }

    pub fn from_config(c: &TrainConfig) -> Self {
        Self::new(c.optimizer, c.learning_rate, c.weight_decay)
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update using the accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    for (w, g) in p.value.iter_mut().zip(&p.grad) {
                        *w -= self.lr * (g + self.weight_decay * *w);
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
                    self.v = self.m.clone();
                }
                let c1 = 1.0 - self.beta1.powi(self.t as i32);
                let c2 = 1.0 - self.beta2.powi(self.t as i32);
                for (k, p) in params.iter_mut().enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for j in 0..p.value.len() {
                        let g = p.grad[j];
                        m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                        v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                        let step = (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
                        p.value[j] -= self.lr * (step + self.weight_decay * p.value[j]);
                    }
                }
            }
        }
        for p in params.iter_mut() {
            p.zero_grad();
        }
    }
}

/// Tracks the best validation score and signals when patience runs out.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: Option<usize>,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: Option<usize>) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records a score; returns true if it is a new best.
    pub fn record(&mut self, epoch: usize, score: f64) -> bool {
        if score < self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience.is_some_and(|p| self.since_best >= p)
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut p = Param::new(vec![1.0, -2.0]);
            Optimizer::new(kind, 0.1, 0.0).step(&mut [&mut p]);
            assert_eq!(p.value, vec![1.0, -2.0]);
        }
    }

    #[test]
    fn sgd_single_step() {
        let mut p = Param::new(vec![0.0]);
        p.grad[0] = 1.0;
        Optimizer::new(OptimizerKind::Sgd, 1.0, 0.0).step(&mut [&mut p]);
        assert_eq!(p.value, vec![-1.0]);
        assert_eq!(p.grad, vec![0.0]);
    }

    #[test]
    fn adam_finds_quadratic_minimum() {
        // f(x) = sum a_i (x_i - c_i)^2 has its minimum at c.
        let a = [1.0, 4.0, 0.25];
        let c = [3.0, -1.5, 0.7];
        let mut p = Param::new(vec![0.0; 3]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, 0.0);
        for _ in 0..5000 {
            for i in 0..3 {
                p.grad[i] = 2.0 * a[i] * (p.value[i] - c[i]);
            }
            opt.step(&mut [&mut p]);
        }
        for i in 0..3 {
            assert!((p.value[i] - c[i]).abs() < 1e-4, "{:?}", p.value);
        }
    }

    #[test]
    fn permutation_is_pure() {
        let a = epoch_permutation(100, 9, 3);
        assert_eq!(a, epoch_permutation(100, 9, 3));
        assert_ne!(a, epoch_permutation(100, 9, 4));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn early_stopping_patience() {
        let mut es = EarlyStopping::new(Some(2));
        assert!(es.record(0, 1.0));
        assert!(!es.record(1, 1.5));
        assert!(!es.should_stop());
        assert!(!es.record(2, 1.0));
        assert!(es.should_stop());
        assert_eq!(es.best_epoch(), 0);
        assert!(TrainConfig {
            patience: Some(0),
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}
