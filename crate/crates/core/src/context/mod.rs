//! Context-recovery stream: error maps, maximum local error, pseudo-anomaly
//! simulation and window-size selection, plus a shape checker for the frame
//! prediction network.

pub mod arch;
mod error_map;
mod frame;
pub mod frame_io;
pub mod mle;
mod predictor;
mod simulate;
mod window;

pub use error_map::{error_map, fle, ErrorMap};
pub use frame::Frame;
pub use mle::{mle, mle_multi, mle_with_mode, LocalErrorMode};
pub use predictor::{
    persistence_predict, score_video, stride_for, ExternalPredictions, FramePredictor,
    PersistencePredictor, ScoringOptions, VideoScores,
};
pub use simulate::{augment, simulate_anomalous_video, SimulationConfig};
pub use window::{choose_window, select_window, window_curve, WindowSelection};
