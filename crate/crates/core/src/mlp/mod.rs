//! A small fully connected perceptron with a single output node, trained by
//! gradient descent on squared error.

mod activation;
mod gradcheck;
mod network;
mod train;

pub use activation::{activate, activate_derivative, ActivationKind};
pub use gradcheck::{check_gradients, check_gradients_with, GradCheckConfig, GradCheckReport};
pub use network::{
    backprop_gradient, backprop_gradient_with, fit_scaling, scale_inputs, FeatureScale, Gradient,
    Layer, MlpConfig, MlpModel, TargetCoding, UpdateRule,
};
pub use train::{initial_model, train, TrainReport, INIT_BOUND};
