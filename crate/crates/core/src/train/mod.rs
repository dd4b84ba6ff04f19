//! Losses, backpropagation through time, optimization and gradient checks.

pub mod adam;
pub mod backward;
pub mod fit;
pub mod gradcheck;
pub mod loss;
pub mod schedule;

pub use adam::{adam_step, AdamState};
pub use backward::{backward, GradientSet, LayerGrad};
pub use fit::{evaluate, fit, fit_network, Evaluation, MetricsLog, MetricsRow, TrainingConfig};
pub use gradcheck::{grad_check, GradCheckMode, GradCheckOptions, GradCheckReport};
pub use loss::{loss_classification, loss_streaming, objective, LossKind, Objective, Target};
pub use schedule::{lr_at, Schedule};
