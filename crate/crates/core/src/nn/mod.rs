//! Dense classifier with exact softmax cross-entropy gradients, and the local
//! optimizers run by clients.

mod model;
mod train;

pub use model::{bias_grad_closed_form, ce_loss, softmax, ForwardPass, MlpModel, PROB_FLOOR};
pub use train::{
    batch_gradient, epoch_order, full_gradient, local_update, mean_loss, LocalUpdate, Optimizer, TrainConfig,
};
