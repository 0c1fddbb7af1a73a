pub mod autodiff;
pub mod kernels;
pub mod rng;
pub mod tensor;
pub mod entropy;
pub mod model;
pub mod regularizers;
pub mod data;
pub mod metrics;
pub mod checkpoint;
pub mod optim;
pub mod harness;
