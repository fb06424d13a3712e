//! Payoff oracles used to exercise the estimator and the allocator: a
//! closed-form quadratic loss model and a small fake-quantized network.

mod generate;
mod net;
mod quadratic;
pub mod quantize;

pub use generate::{generate_instance, Instance, InstanceDocument, InstanceKind, InstanceSpec, SURROGATE_LAYER_PARAMS};
pub use net::{mean_nll_of_logits, LayerState, LayeredNet, NetOracle, SyntheticCorpus};
pub use quadratic::QuadraticSurrogate;
pub use quantize::fake_quantize;

/// Default precision of coalition members.
pub const DEFAULT_B_HIGH: u32 = 4;
/// Default precision of demoted layers.
pub const DEFAULT_B_LOW: u32 = 2;
