//! Mini-batch training loop shared by the neural predictors.

use crate::error::{Error, Result};
use crate::nn::{epoch_permutation, EarlyStopping, Optimizer, Param, TrainConfig};

/// Affine standardisation of speeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    /// Mean and population standard deviation; a constant input gets `std = 1`.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for &v in values {
            n += 1;
            sum += v;
            sq += v * v;
        }
        if n == 0 {
            return Err(Error::Validation(
                "no training values to standardise".into(),
            ));
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let std = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        if !mean.is_finite() || !std.is_finite() {
            return Err(Error::Validation("training values are not finite".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// Indexed training examples, produced on demand.
pub trait Samples: Sync {
    fn len(&self) -> usize;
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    /// Appends the input and target of example `i`.
    fn fill(&self, i: usize, x: &mut Vec<f64>, y: &mut Vec<f64>);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A differentiable model trained with mean squared error.
pub trait Network: Clone {
    fn params_mut(&mut self) -> Vec<&mut Param>;
    /// Predictions for `batch` rows of input.
    fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>>;
    /// Accumulates gradients of the batch mean squared error; returns the loss.
    fn accumulate(&mut self, x: &[f64], y: &[f64], batch: usize) -> Result<f64>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    /// Validation RMSE (in the caller's units) per epoch, averaged over output columns.
    pub val_rmse: Vec<f64>,
}

/// RMSE per output column, pooled over rows, then averaged over the last
/// `h` positions of each row group (`out_dim` must be a multiple of `h`).
pub fn mean_step_rmse<N: Network, S: Samples>(
    net: &N,
    data: &S,
    h: usize,
    unit: f64,
) -> Result<f64> {
    let out = data.out_dim();
    let mut sq = vec![0.0; h];
    let mut count = 0usize;
    let chunk = 256;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let mut start = 0;
    while start < data.len() {
        let end = (start + chunk).min(data.len());
        x.clear();
        y.clear();
        for i in start..end {
            data.fill(i, &mut x, &mut y);
        }
        let p = net.forward(&x, end - start)?;
        for (j, (a, b)) in p.iter().zip(&y).enumerate() {
            let d = (a - b) * unit;
            sq[(j % out) % h] += d * d;
        }
        count += (end - start) * (out / h);
        start = end;
    }
    if count == 0 {
        return Err(Error::Validation("empty validation set".into()));
    }
    Ok(sq.iter().map(|s| (s / count as f64).sqrt()).sum::<f64>() / h as f64)
}

/// Trains `net` in place. With early stopping configured and validation data
/// present, the parameters of the best validation epoch are restored.
pub fn fit_network<N: Network, S: Samples>(
    net: &mut N,
    train: &S,
    val: Option<&S>,
    cfg: &TrainConfig,
    h: usize,
    unit: f64,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Validation("no training samples".into()));
    }
    let mut opt = Optimizer::from_config(cfg);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: Option<N> = None;
    let mut report = TrainReport::default();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for epoch in 0..cfg.epochs {
        let order = epoch_permutation(train.len(), cfg.seed, epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            x.clear();
            y.clear();
            for &i in batch {
                train.fill(i, &mut x, &mut y);
            }
            let loss = net.accumulate(&x, &y, batch.len())?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss became {loss} in epoch {epoch}"
                )));
            }
            total += loss * batch.len() as f64;
            opt.step(&mut net.params_mut());
        }
        report.train_loss.push(total / train.len() as f64);
        report.epochs_run = epoch + 1;
        if let Some(v) = val {
            let score = mean_step_rmse(net, v, h, unit)?;
            if !score.is_finite() {
                return Err(Error::Diverged(format!(
                    "validation RMSE became {score} in epoch {epoch}"
                )));
            }
            report.val_rmse.push(score);
            log::trace!(
                "epoch {epoch}: train loss {:.5}, validation RMSE {score:.4}",
                total / train.len() as f64
            );
            if stopper.record(epoch, score) && cfg.patience.is_some() {
                best = Some(net.clone());
            }
            if stopper.should_stop() {
                break;
            }
        }
    }
    if let Some(b) = best {
        *net = b;
        report.best_epoch = stopper.best_epoch();
    } else {
        report.best_epoch = report.epochs_run - 1;
    }
    log::debug!(
        "trained {} epochs, best {} (train loss {:.5})",
        report.epochs_run,
        report.best_epoch,
        report.train_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(report)
}
