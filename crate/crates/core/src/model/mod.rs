//! The deraining network: configuration, layer inventory, parameters and
//! the forward graph.

mod arch;
mod config;
mod net;
mod params;

pub use arch::{block_specs, param_count, param_specs, BlockKind, BlockSpec, ParamSpec, IMAGE_CHANNELS};
pub use config::{Ablation, ModelConfig};
pub use net::{forward, loss_on_tape, rse_block, se_block, ParamVars, Prediction, RsenModel, SIZE_MULTIPLE};
pub use params::{init_params, ParamGroup, ParameterStore};

/// Parameter count reported for the full-size network in the original
/// publication; the layer list behind it is not fully recoverable.
pub const PUBLISHED_PARAM_COUNT: usize = 4_851_373;
