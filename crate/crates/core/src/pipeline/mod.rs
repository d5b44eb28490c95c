//! CSI datasets and preprocessing: file I/O, amplitude extraction, denoising
//! filters, chronological splitting and augmentation.

mod amplitude;
mod augment;
pub mod filter;
pub mod format;
mod frame;

pub use amplitude::{
    amplitude, export_instances_csv, import_instances_csv, read_instances_csv, write_instances_csv, AmplitudeSeries,
    Instance,
};
pub use augment::{augment, augment_plan, augmented_len, split_train_test, AUGMENT_KS};
pub use filter::{butterworth_lowpass, denoise, mean_filter, median_filter};
pub use format::{read_dataset, write_dataset};
pub use frame::{CsiFrame, CsiSequence, CsiShape, Label, DEFAULT_SAMPLE_RATE, DEFAULT_SUBCARRIERS};
