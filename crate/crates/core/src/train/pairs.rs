use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hash::FeatureVector;

/// Two temporally close snippets of the same video.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivePair<'a> {
    pub anchor: &'a FeatureVector,
    pub partner: &'a FeatureVector,
    pub delta_t: usize,
}

/// Features of one video, in snippet order.
#[derive(Debug, Clone)]
pub struct VideoFeatures<'a> {
    pub video_id: &'a str,
    pub snippets: Vec<&'a FeatureVector>,
}

/// Groups features by video, sorted by `video_id` then `frame_index`.
pub fn group_by_video(features: &[FeatureVector]) -> Vec<VideoFeatures<'_>> {
    let mut sorted: Vec<&FeatureVector> = features.iter().collect();
    sorted.sort_by(|a, b| (&a.video_id, a.frame_index).cmp(&(&b.video_id, b.frame_index)));
    let mut out: Vec<VideoFeatures<'_>> = Vec::new();
    for f in sorted {
        match out.last_mut() {
            Some(v) if v.video_id == f.video_id => v.snippets.push(f),
            _ => out.push(VideoFeatures {
                video_id: &f.video_id,
                snippets: vec![f],
            }),
        }
    }
    out
}

/// One pair per anchor snippet; the offset is uniform on
/// `1..=min(delta_max, last - t)`. Single-snippet videos are skipped.
pub fn sample_positive_pairs<'a>(
    videos: &[VideoFeatures<'a>],
    delta_max: usize,
    seed: u64,
) -> Vec<PositivePair<'a>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for video in videos {
        let n = video.snippets.len();
        if n < 2 {
            log::warn!(
                "video {} has a single snippet; skipped for pair sampling",
                video.video_id
            );
            continue;
        }
        for t in 0..n - 1 {
            let hi = delta_max.max(1).min(n - 1 - t);
            let dt = rng.random_range(1..=hi);
            pairs.push(PositivePair {
                anchor: video.snippets[t],
                partner: video.snippets[t + dt],
                delta_t: dt,
            });
        }
    }
    pairs
}
