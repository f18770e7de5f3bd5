//! Deterministic numerical kernel: dense, time-convolution and LSTM layers
//! with hand-written backward passes, losses, optimisers and a
//! finite-difference gradient checker.

pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod tensor;

pub use conv::{conv_time_backward, conv_time_forward, conv_time_pre, Conv1DLayer};
pub use dense::{glorot, glorot_bound, sigmoid, Activation, DenseGrads, DenseLayer};
pub use gradcheck::{grad_check, relative_error};
pub use linalg::{gemm, least_squares, solve_spd};
pub use loss::mse_loss;
pub use lstm::{LstmCache, LstmLayer};
pub use optim::{epoch_permutation, EarlyStopping, Optimizer, OptimizerKind, TrainConfig};
pub use tensor::{Param, Tensor};
