//! Training mathematics: the contrastive loss with late-interaction
//! similarity, its gradients, and checkpoint merging.

pub mod loss;
pub mod merge;

pub use loss::{info_nce_gradient, info_nce_loss, LossGradients, LossInput};
pub use merge::{merge_models, MergeSpec, ParamSet, Tensor};
