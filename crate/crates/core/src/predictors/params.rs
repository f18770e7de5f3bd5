use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::WindowParams;
use crate::nn::{OptimizerKind, TrainConfig};

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(())
}

fn positive_f(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Optimisation settings shared by the neural methods.
#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub train_stride: usize,
}

impl Training {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            patience: (self.patience > 0).then_some(self.patience),
            optimizer: OptimizerKind::Adam,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("train_stride", self.train_stride)?;
        self.to_config(0).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArParams {
    /// Number of lagged observations.
    pub p: usize,
    /// Ridge term used only when the normal equations are singular.
    pub ridge: f64,
}

impl Default for ArParams {
    fn default() -> Self {
        Self { p: 28, ridge: 1e-6 }
    }
}

impl ArParams {
    pub fn validate(&self) -> Result<()> {
        positive("ar.p", self.p)?;
        positive_f("ar.ridge", self.ridge)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbParams {
    pub lags: usize,
    pub max_depth: usize,
    pub n_trees: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub train_stride: usize,
}

impl Default for GbParams {
    fn default() -> Self {
        Self {
            lags: 16,
            max_depth: 5,
            n_trees: 200,
            learning_rate: 0.1,
            min_samples_leaf: 2,
            train_stride: 1,
        }
    }
}

impl GbParams {
    pub fn validate(&self) -> Result<()> {
        positive("gb.lags", self.lags)?;
        positive("gb.min_samples_leaf", self.min_samples_leaf)?;
        positive("gb.train_stride", self.train_stride)?;
        positive_f("gb.learning_rate", self.learning_rate)
    }
}

/// Dense network settings, used by the link, pooled and cluster MLPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpParams {
    pub w_n: usize,
    pub w_d: usize,
    pub w_w: usize,
    /// Dense layers including the output layer.
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Keep every n-th training origin.
    pub train_stride: usize,
}

impl MlpParams {
    pub fn training(&self) -> Training {
        Training {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            patience: self.patience,
            train_stride: self.train_stride,
        }
    }

    pub fn link_default() -> Self {
        Self {
            w_n: 24,
            w_d: 8,
            w_w: 4,
            layers: 5,
            hidden: 64,
            epochs: 200,
            batch_size: 150,
            learning_rate: 5e-4,
            weight_decay: 2e-4,
            patience: 10,
            train_stride: 1,
        }
    }

    pub fn pooled_default() -> Self {
        Self {
            layers: 10,
            ..Self::link_default()
        }
    }

    pub fn cluster_default() -> Self {
        Self {
            w_n: 16,
            epochs: 80,
            batch_size: 100,
            patience: 0,
            ..Self::link_default()
        }
    }

    pub fn windows(&self) -> Result<WindowParams> {
        WindowParams::new(self.w_n, self.w_d, self.w_w)
    }

    pub fn validate(&self) -> Result<()> {
        self.windows()?;
        positive("layers", self.layers)?;
        positive("hidden", self.hidden)?;
        self.training().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmParams {
    pub seq_len: usize,
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Keep every n-th training origin.
    pub train_stride: usize,
}

impl Default for LstmParams {
    fn default() -> Self {
        Self {
            seq_len: 24,
            layers: 2,
            hidden: 192,
            epochs: 40,
            batch_size: 50,
            learning_rate: 0.002,
            weight_decay: 0.0,
            patience: 0,
            train_stride: 1,
        }
    }
}

impl LstmParams {
    pub fn training(&self) -> Training {
        Training {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            patience: self.patience,
            train_stride: self.train_stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("lstm.seq_len", self.seq_len)?;
        positive("lstm.layers", self.layers)?;
        positive("lstm.hidden", self.hidden)?;
        self.training().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcnnParams {
    pub w_n: usize,
    pub w_d: usize,
    pub w_w: usize,
    /// Neighbours per direction.
    pub k: usize,
    /// Kernel widths of the separate convolutions on each branch.
    pub schedule_n: Vec<usize>,
    pub schedule_d: Vec<usize>,
    pub schedule_w: Vec<usize>,
    /// Kernel widths of the common convolutions after the branches are joined.
    pub schedule_common: Vec<usize>,
    /// Distinct kernels per link in the first convolution of each branch.
    pub per_link_first: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Keep every n-th training origin.
    pub train_stride: usize,
}

impl Default for GcnnParams {
    fn default() -> Self {
        Self {
            w_n: 24,
            w_d: 8,
            w_w: 4,
            k: 5,
            schedule_n: vec![5, 4, 3, 2, 2],
            schedule_d: vec![3, 2, 2, 2, 2],
            schedule_w: vec![2, 2, 2, 2, 2],
            schedule_common: vec![5, 4, 3, 2],
            per_link_first: true,
            epochs: 70,
            batch_size: 150,
            learning_rate: 1e-3,
            weight_decay: 2e-4,
            patience: 0,
            train_stride: 1,
        }
    }
}

impl GcnnParams {
    pub fn training(&self) -> Training {
        Training {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            patience: self.patience,
            train_stride: self.train_stride,
        }
    }

    pub fn windows(&self) -> Result<WindowParams> {
        WindowParams::new(self.w_n, self.w_d, self.w_w)
    }

    pub fn validate(&self) -> Result<()> {
        self.windows()?;
        self.training().validate()?;
        if self.schedule_common.is_empty() {
            return Err(Error::Config(
                "gcnn.schedule_common must have at least one layer".into(),
            ));
        }
        let b = self.schedule_n.len();
        if b == 0 || self.schedule_d.len() != b || self.schedule_w.len() != b {
            return Err(Error::Config(
                "gcnn branch schedules must be nonempty and equally long".into(),
            ));
        }
        Ok(())
    }
}

/// Hyperparameters of every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodParams {
    pub h: usize,
    pub ar: ArParams,
    pub gb: GbParams,
    pub mlp: MlpParams,
    pub lstm: LstmParams,
    pub bmlp: MlpParams,
    pub cmlp: MlpParams,
    pub gcnn: GcnnParams,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            h: 12,
            ar: ArParams::default(),
            gb: GbParams::default(),
            mlp: MlpParams::link_default(),
            lstm: LstmParams::default(),
            bmlp: MlpParams::pooled_default(),
            cmlp: MlpParams::cluster_default(),
            gcnn: GcnnParams::default(),
        }
    }
}

impl MethodParams {
    pub fn validate(&self) -> Result<()> {
        positive("h", self.h)?;
        self.ar.validate()?;
        self.gb.validate()?;
        self.mlp.validate()?;
        self.lstm.validate()?;
        self.bmlp.validate()?;
        self.cmlp.validate()?;
        self.gcnn.validate()
    }
}
