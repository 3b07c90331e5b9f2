//! Adam training of the deraining network on random aligned patches.

mod adam;
mod config;
mod sampler;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use config::{lr_schedule, TrainConfig};
pub use sampler::{crop_window, sample_patch, PatchPair};
pub use trainer::{optimizer_path, LogRow, TrainReport, Trainer, CHECKPOINT_FILE, LOG_FILE, LOG_HEADER};
