//! Loss, optimiser and training loop for dense per-pixel classification.

mod gradcheck;
mod loss;
mod sgd;
mod train;

pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{softmax_xent_loss, xent_prob_grad, LossOutput};
pub use sgd::{sgd_step, SgdState};
pub use train::{batch_loss, train_loop, with_dropout_ratio, TrainConfig, TrainOutcome, TrainTile, REFERENCE_ITERATIONS};
