//! Command implementations behind the `tsvad` binary.

mod commands;
mod config;
mod features;

pub use commands::{
    build_kb, check_shapes, emit_arch, fuse_eval, score_cr, score_kr, select_window_cmd, simulate,
    synth, train_hash,
};
pub use config::{
    apply_override, extract_overrides, HashParams, MleParams, Paths, PipelineConfig, Rates,
    Smoothing, SynthParams,
};
pub use features::{decode_matrix, encode_features, index_path, read_features, write_features};
