//! File formats, synthetic data, training and inference.

mod dataset;
mod features;
mod infer;
mod labels;
mod synth;
mod train;

pub use dataset::{load_dataset, write_dataset};
pub use features::{
    decode_features, encode_features, load_features, save_features, FeatureSequence,
};
pub use infer::{infer, parse_boundaries, InferOptions, Inference};
pub use labels::{format_labels, load_labels, parse_labels, save_labels};
pub use synth::{synth_dataset, ClassDuration, SynthSequence, SynthSpec, SAR_RARP_DURATIONS};
pub use train::{train, train_with, EpochLog, RunConfig, TrainOutcome, TrainSample, TrainState};
