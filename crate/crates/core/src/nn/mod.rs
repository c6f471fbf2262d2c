//! Dense tensors, reverse-mode autodiff and the graph networks built on them.

mod adam;
mod gradcheck;
mod layers;
mod loss;
mod model;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use gradcheck::{grad_check, relative_error, GradCheckReport, FD_STEP, REL_FLOOR};
pub use layers::{gcn_coefficients, mean_coefficients, GatLayer, GcnLayer, GgnnLayer, LEAKY_SLOPE};
pub use loss::{cross_entropy_loss, mean_cross_entropy};
pub use model::{ForwardPass, GnnConfig, GnnModel, GnnOutput, Layer, Network, NetworkConfig, TaskHead, Targets, Variant};
pub use params::{xavier_uniform, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
