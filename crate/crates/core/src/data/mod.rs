//! Image pairs, synthetic rain and checkpoint persistence.

mod checkpoint;
mod image;
mod pairs;
mod synth;

pub use checkpoint::{
    decode_checkpoint, decode_checkpoint_for, decode_container, encode_checkpoint, encode_container, load_checkpoint, load_checkpoint_for,
    save_checkpoint, Checkpoint, CHECKPOINT_VERSION, MAGIC,
};
pub use image::{normalize_for_display, quantize, read_png, write_png};
pub use pairs::{list_pngs, load_pair_dir, ImagePair};
pub use synth::{rain_layer, synthesize_rain, synthetic_background, StreakParams, ANGLE_JITTER_DEG};
