//! Hash encoder: parallel hash layers and the binarization of their codes.

mod encoder;
mod key;

pub(crate) use encoder::LayerTrace;
pub use encoder::{HashCodeSet, HashEncoder, HashLayer, DEFAULT_LN_EPSILON};
pub use key::{binarize, packed_len, BinaryKey};

/// One event's embedding, tagged with its source video and the 1-based index
/// of the snippet's last frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub video_id: String,
    pub frame_index: u64,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(video_id: impl Into<String>, frame_index: u64, values: Vec<f64>) -> Self {
        Self {
            video_id: video_id.into(),
            frame_index,
            values,
        }
    }
}
