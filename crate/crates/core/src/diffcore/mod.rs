pub mod activation;
pub mod batch;
pub mod gemm;
pub mod loss;
pub mod mlp;
pub mod real;

pub use activation::{activations, Activation};
pub use batch::{BatchInput, Channels, HiddenTape};
pub use mlp::{Jet2, Mlp, MlpSpec, ParamVector};
pub use real::{Precision, Real};
