//! The unlearning objective and its masked optimisation loop.

mod engine;
pub mod loss;

pub use engine::{
    erwp_epoch, erwp_run, loss_history_csv, objective_gradients, EpochRecord, UnlearnConfig, UnlearnOutcome,
};
pub use loss::{
    classification_loss, erwp_objective, kd_loss, KdDirection, LossBreakdown, LossComponents, ObjectiveSpec,
};
