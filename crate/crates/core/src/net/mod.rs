//! Steerable networks: layers, forward/backward passes, verification and training.

mod conv;
mod forward;
mod gcnn;
mod grad;
mod nonlin;
mod spec;
mod train;
mod verify;

pub use conv::{correlate, correlate_backward};
pub use forward::{
    forward, global_pool, invariant_readout, residual_add, Activation, AssembledLayer, AssembledNet,
    Readout,
};
pub use gcnn::gcnn_oracle;
pub use grad::{
    argmax, batch_loss, finite_difference_check, grad_assembled, grad_params, softmax_cross_entropy,
    GradCheckReport, Gradient,
};
pub use nonlin::{apply_nonlinearity, nonlinearity_backward};
pub use spec::{ActivationType, LayerParams, LayerSpec, Network, NetworkSpec, ParamSet};
pub use train::{default_network, synthetic_dataset, train_demo, DemoConfig, DemoMetrics, PATTERNS};
pub use verify::{
    verify_assembled, verify_equivariance, VerificationReport, VERIFY_PRODUCTS, VERIFY_TRANSLATIONS,
};
