//! Policy network, score-function gradients and the optimizer.

pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod reinforce;
pub mod rmsprop;

pub use checkpoint::Checkpoint;
pub use mlp::{argmax, sample_action, softmax, Activation, DenseLayer, ForwardCache, MlpParams};
pub use reinforce::{policy_gradient, ScoreAccumulator, Step, Trajectory};
pub use rmsprop::RmsProp;
