//! State/action encoding, frame filtering, image preprocessing and the two
//! on-disk dataset formats.
//!
//! Vocabulary: a *frame* is one timestep and a *demonstration* is one
//! recorded trajectory (some tools call a timestep an "episode").

mod demo;
mod format;
mod preprocess;
mod vectors;

pub use crate::angle::wrap_angle;
pub use demo::{filter_noop_frames, Demonstration, FilterTolerance, Frame, DEFAULT_CAPTURE_HZ, FRAME_IMAGE_SIZE, RECOMMENDED_FRAMES};
pub use format::{
    convert_dataset, detect_format, export_demos, import_demos, DatasetFormat, DatasetReader, DatasetWriter, ExportSummary,
    FORMAT_VERSION,
};
pub use preprocess::{flip_horizontal_image, preprocess_image, CropRect};
pub use vectors::{apply_action, encode_action, encode_state, ActionVector, StateVector};
