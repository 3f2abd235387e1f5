use super::mle::{default_stride, mle_multi, LocalErrorMode};
use super::{error_map, Frame};
use crate::error::{Error, Result};
use crate::eval::{align_to_frames, ScoreSeries};

/// Produces the predicted frame for one position of a video.
pub trait FramePredictor {
    /// First 0-based frame index this predictor can forecast in a video of `n` frames.
    fn first_target(&self, n: usize) -> usize;

    /// Prediction for `frames[t]`, given the whole video.
    fn predict(&self, frames: &[Frame], t: usize) -> Result<Frame>;
}

/// Returns the most recent frame of `history` unchanged.
pub fn persistence_predict(history: &[Frame]) -> Result<Frame> {
    history
        .last()
        .cloned()
        .ok_or_else(|| Error::invalid("persistence prediction needs at least one previous frame"))
}

/// Stand-in predictor: frame `t` is forecast as frame `t - 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PersistencePredictor;

impl FramePredictor for PersistencePredictor {
    fn first_target(&self, _n: usize) -> usize {
        1
    }

    fn predict(&self, frames: &[Frame], t: usize) -> Result<Frame> {
        persistence_predict(&frames[..t])
    }
}

/// Predictions computed elsewhere. They cover the last `len` frames of the video.
#[derive(Debug, Clone)]
pub struct ExternalPredictions {
    frames: Vec<Frame>,
}

impl ExternalPredictions {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("external prediction set is empty"));
        }
        Ok(Self { frames })
    }
}

impl FramePredictor for ExternalPredictions {
    fn first_target(&self, n: usize) -> usize {
        n.saturating_sub(self.frames.len())
    }

    fn predict(&self, frames: &[Frame], t: usize) -> Result<Frame> {
        if self.frames.len() > frames.len() {
            return Err(Error::invalid(format!(
                "{} predictions for a video of {} frames",
                self.frames.len(),
                frames.len()
            )));
        }
        Ok(self.frames[t - self.first_target(frames.len())].clone())
    }
}

/// Settings of the context-recovery scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringOptions {
    pub windows: Vec<usize>,
    pub lambda_l1: f64,
    pub mode: LocalErrorMode,
    /// Score every `rate`-th predictable frame and hold in between.
    pub rate: usize,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            windows: vec![16, 32, 64, 128, 256],
            lambda_l1: 1.0,
            mode: LocalErrorMode::WindowMean,
            rate: 1,
        }
    }
}

/// Per-frame scores of one video.
#[derive(Debug, Clone)]
pub struct VideoScores {
    /// One series per window size, in the order of `ScoringOptions::windows`.
    pub mle: Vec<ScoreSeries>,
    /// Frame-level error divided by the pixel count.
    pub fle_mean: ScoreSeries,
}

/// Scores every frame of a video; frames that cannot be predicted (or are
/// skipped by the sampling rate) hold the previous computed score.
pub fn score_video(
    video_id: &str,
    frames: &[Frame],
    predictor: &dyn FramePredictor,
    opts: &ScoringOptions,
) -> Result<VideoScores> {
    if opts.rate == 0 {
        return Err(Error::invalid("sampling rate must be at least 1"));
    }
    if opts.windows.is_empty() {
        return Err(Error::invalid("no window sizes given"));
    }
    let n = frames.len();
    let first = predictor.first_target(n);
    if first >= n {
        return Err(Error::invalid(format!(
            "video {video_id}: {n} frames leave nothing to predict"
        )));
    }
    let mut per_k: Vec<Vec<(u64, f64)>> = vec![Vec::new(); opts.windows.len()];
    let mut fle = Vec::new();
    for t in (first..n).step_by(opts.rate) {
        let pred = predictor.predict(frames, t)?;
        let map = error_map(&frames[t], &pred, opts.lambda_l1)?;
        let anchor = t as u64 + 1;
        for (acc, v) in per_k
            .iter_mut()
            .zip(mle_multi(&map, &opts.windows, opts.mode)?)
        {
            acc.push((anchor, v));
        }
        fle.push((anchor, map.mean()));
    }
    let mle = per_k
        .iter()
        .map(|anchors| align_to_frames(video_id, anchors, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoScores {
        mle,
        fle_mean: align_to_frames(video_id, &fle, n)?,
    })
}

/// Stride used for window size `k`.
pub fn stride_for(k: usize) -> usize {
    default_stride(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_video(n: usize, size: usize) -> Vec<Frame> {
        (0..n)
            .map(|i| {
                let mut f = Frame::filled(16, 16, 1, 0.1).unwrap();
                for y in 4..4 + size {
                    for x in i..i + size {
                        f.set(y, x, 0, 0.9);
                    }
                }
                f
            })
            .collect()
    }

    fn opts(windows: Vec<usize>) -> ScoringOptions {
        ScoringOptions {
            windows,
            ..Default::default()
        }
    }

    #[test]
    fn persistence_examples() {
        assert!(persistence_predict(&[]).is_err());
        let a = Frame::filled(3, 3, 1, 0.2).unwrap();
        let mut b = a.clone();
        b.set(1, 1, 0, 0.6);
        assert_eq!(persistence_predict(&[a.clone(), b.clone()]).unwrap(), b);
        let m = error_map(&b, &persistence_predict(&[a]).unwrap(), 1.0).unwrap();
        assert_eq!(m.values().iter().filter(|&&v| v > 0.0).count(), 1);
        assert!(m.at(1, 1) > 0.0);
    }

    #[test]
    fn static_video_scores_zero() {
        let frames = vec![Frame::filled(8, 8, 3, 0.4).unwrap(); 6];
        let s = score_video("v", &frames, &PersistencePredictor, &opts(vec![2, 4, 8])).unwrap();
        for series in s.mle.iter().chain([&s.fle_mean]) {
            assert_eq!(series.scores, vec![0.0; 6]);
        }
    }

    #[test]
    fn motion_error_support_is_changed_pixels() {
        let frames = blob_video(6, 3);
        for t in 1..frames.len() {
            let pred = persistence_predict(&frames[..t]).unwrap();
            let m = error_map(&frames[t], &pred, 1.0).unwrap();
            assert!(m.total() > 0.0);
            for y in 0..16 {
                for x in 0..16 {
                    if m.at(y, x) > 0.0 {
                        assert_ne!(frames[t].get(y, x, 0), frames[t - 1].get(y, x, 0));
                    }
                }
            }
        }
        let s = score_video("v", &frames, &PersistencePredictor, &opts(vec![4])).unwrap();
        assert!(s.mle[0].scores.iter().all(|&v| v > 0.0));
        // frame 1 has no history and takes frame 2's score
        assert_eq!(s.mle[0].scores[0], s.mle[0].scores[1]);
    }

    #[test]
    fn external_identical_predictions_score_zero() {
        let frames = blob_video(5, 2);
        let ext = ExternalPredictions::new(frames[2..].to_vec()).unwrap();
        assert_eq!(ext.first_target(5), 2);
        let s = score_video("v", &frames, &ext, &opts(vec![4])).unwrap();
        assert_eq!(s.mle[0].scores, vec![0.0; 5]);
        let too_many = ExternalPredictions::new(blob_video(6, 2)).unwrap();
        assert!(score_video("v", &frames, &too_many, &opts(vec![4])).is_err());
    }

    #[test]
    fn sampling_rate_holds_scores() {
        let frames = blob_video(8, 2);
        let dense = score_video("v", &frames, &PersistencePredictor, &opts(vec![4])).unwrap();
        let sparse = score_video(
            "v",
            &frames,
            &PersistencePredictor,
            &ScoringOptions {
                rate: 2,
                ..opts(vec![4])
            },
        )
        .unwrap();
        let d = &dense.mle[0].scores;
        let s = &sparse.mle[0].scores;
        // computed at 0-based 1, 3, 5, 7
        assert_eq!(s[1], d[1]);
        assert_eq!(s[2], d[1]);
        assert_eq!(s[3], d[3]);
        assert_eq!(s[0], d[1]);
    }

    #[test]
    fn window_larger_than_frame_is_rejected() {
        let frames = blob_video(3, 2);
        assert!(score_video("v", &frames, &PersistencePredictor, &opts(vec![32])).is_err());
    }
}
