//! Score post-processing, late fusion and AUC evaluation.

mod auc;
mod csvio;

pub use auc::{macro_auc, micro_auc, roc_auc, score_gap, series_score_gap, MacroAuc};
pub use csvio::{
    read_label_csv, read_score_csv, write_label_csv, write_report_csv, write_score_csv, ReportRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-frame anomaly scores of one video, with optional 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub video_id: String,
    pub scores: Vec<f64>,
    pub labels: Option<Vec<u8>>,
}

impl ScoreSeries {
    pub fn new(
        video_id: impl Into<String>,
        scores: Vec<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let video_id = video_id.into();
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::numeric(format!(
                "video {video_id}: non-finite score at frame {}",
                i + 1
            )));
        }
        if let Some(l) = &labels {
            if l.len() != scores.len() {
                return Err(Error::invalid(format!(
                    "video {video_id}: {} labels for {} scores",
                    l.len(),
                    scores.len()
                )));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::invalid(format!(
                    "video {video_id}: labels must be 0 or 1"
                )));
            }
        }
        Ok(Self {
            video_id,
            scores,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub(crate) fn require_labels(&self) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::UndefinedMetric(format!("video {} has no labels", self.video_id)))
    }

    fn with_scores(&self, scores: Vec<f64>) -> Self {
        Self {
            video_id: self.video_id.clone(),
            scores,
            labels: self.labels.clone(),
        }
    }
}

/// Expands snippet scores to one score per frame.
///
/// `anchors` are `(frame, score)` with 1-based, strictly increasing frames.
/// Each frame takes the score of the latest anchor at or before it; frames
/// before the first anchor take the first score.
pub fn align_to_frames(
    video_id: &str,
    anchors: &[(u64, f64)],
    video_len: usize,
) -> Result<ScoreSeries> {
    if anchors.is_empty() {
        return Err(Error::invalid(format!(
            "video {video_id}: no snippet scores to align"
        )));
    }
    if anchors.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::invalid(format!(
            "video {video_id}: anchors must be strictly increasing"
        )));
    }
    if anchors[0].0 == 0 || anchors[anchors.len() - 1].0 as usize > video_len {
        return Err(Error::invalid(format!(
            "video {video_id}: anchors must lie in 1..={video_len}"
        )));
    }
    let mut scores = Vec::with_capacity(video_len);
    let mut next = 0;
    let mut current = anchors[0].1;
    for frame in 1..=video_len as u64 {
        while next < anchors.len() && anchors[next].0 <= frame {
            current = anchors[next].1;
            next += 1;
        }
        scores.push(current);
    }
    ScoreSeries::new(video_id, scores, None)
}

/// Per-video min-max scaling to `[0, 1]`; a constant series maps to zeros.
pub fn minmax_normalize(series: &ScoreSeries) -> ScoreSeries {
    let min = series.scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series
        .scores
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let scores = if series.is_empty() || range == 0.0 {
        vec![0.0; series.len()]
    } else {
        series.scores.iter().map(|x| (x - min) / range).collect()
    };
    series.with_scores(scores)
}

/// Normalized Gaussian kernel with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Maps an out-of-range index onto `0..n` by half-sample symmetric reflection
/// (`d c b a | a b c d | d c b a`).
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// 1-D Gaussian smoothing with reflect-padded boundaries.
pub fn gaussian_smooth(series: &ScoreSeries, sigma: f64) -> Result<ScoreSeries> {
    let kernel = gaussian_kernel(sigma)?;
    let radius = (kernel.len() / 2) as i64;
    let n = series.len() as i64;
    if n == 0 {
        return Ok(series.clone());
    }
    let scores = (0..n)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * series.scores[reflect(t + k as i64 - radius, n)])
                .sum()
        })
        .collect();
    Ok(series.with_scores(scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionWeights {
    pub lambda_cr: f64,
    pub lambda_kr: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            lambda_cr: 1.0,
            lambda_kr: 1.0,
        }
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cr > 0.0 && self.lambda_kr > 0.0)
            || !self.lambda_cr.is_finite()
            || !self.lambda_kr.is_finite()
        {
            return Err(Error::invalid("fusion weights must both be positive"));
        }
        Ok(())
    }
}

/// Late fusion `lambda_cr * cr + lambda_kr * kr`. Labels carry over from
/// whichever input has them.
pub fn fuse(cr: &ScoreSeries, kr: &ScoreSeries, w: FusionWeights) -> Result<ScoreSeries> {
    w.validate()?;
    if cr.video_id != kr.video_id {
        return Err(Error::invalid(format!(
            "cannot fuse video {} with video {}",
            cr.video_id, kr.video_id
        )));
    }
    if cr.len() != kr.len() {
        return Err(Error::invalid(format!(
            "video {}: stream lengths differ ({} vs {})",
            cr.video_id,
            cr.len(),
            kr.len()
        )));
    }
    let scores = cr
        .scores
        .iter()
        .zip(&kr.scores)
        .map(|(c, k)| w.lambda_cr * c + w.lambda_kr * k)
        .collect();
    ScoreSeries::new(
        cr.video_id.clone(),
        scores,
        cr.labels.clone().or_else(|| kr.labels.clone()),
    )
}

/// Normalize then smooth one stream (`sigma = None` skips smoothing).
pub fn postprocess(series: &ScoreSeries, sigma: Option<f64>) -> Result<ScoreSeries> {
    let normalized = minmax_normalize(series);
    match sigma {
        Some(s) => gaussian_smooth(&normalized, s),
        None => Ok(normalized),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plain(scores: &[f64]) -> ScoreSeries {
        ScoreSeries::new("v", scores.to_vec(), None).unwrap()
    }

    #[test]
    fn align_examples() {
        let s = align_to_frames("v", &[(4, 0.2), (8, 0.6)], 10).unwrap();
        assert_eq!(s.scores, [0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.6, 0.6, 0.6]);
        let s = align_to_frames("v", &[(3, 0.4)], 5).unwrap();
        assert_eq!(s.scores, [0.4; 5]);
        let every: Vec<(u64, f64)> = (1..=4).map(|i| (i, i as f64 * 0.1)).collect();
        assert_eq!(
            align_to_frames("v", &every, 4).unwrap().scores,
            [0.1, 0.2, 0.30000000000000004, 0.4]
        );
        assert!(align_to_frames("v", &[], 4).is_err());
        assert!(align_to_frames("v", &[(2, 0.1), (2, 0.3)], 4).is_err());
        assert!(align_to_frames("v", &[(5, 0.1)], 4).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            minmax_normalize(&plain(&[2.0, 4.0, 6.0])).scores,
            [0.0, 0.5, 1.0]
        );
        assert_eq!(minmax_normalize(&plain(&[3.0, 3.0])).scores, [0.0, 0.0]);
        let unit = [0.0, 0.25, 1.0, 0.5];
        assert_eq!(minmax_normalize(&plain(&unit)).scores, unit);
    }

    #[test]
    fn kernel_sums_to_one() {
        for sigma in [0.3, 1.0, 3.0, 7.5] {
            let k = gaussian_kernel(sigma).unwrap();
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(gaussian_kernel(0.0).is_err());
    }

    #[test]
    fn smoothing_examples() {
        let c = gaussian_smooth(&plain(&[0.7; 9]), 3.0).unwrap();
        assert!(c.scores.iter().all(|v| (v - 0.7).abs() < 1e-12));

        let mut impulse = vec![0.0; 21];
        impulse[10] = 1.0;
        let s = gaussian_smooth(&plain(&impulse), 1.0).unwrap();
        // discrete normal density on -3..=3, normalized independently
        let pdf = |i: f64| (-i * i / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let z: f64 = (-3..=3).map(|i| pdf(i as f64)).sum();
        assert!((s.scores[10] - pdf(0.0) / z).abs() < 1e-12);
        assert!((s.scores[10] - 0.399050).abs() < 1e-6);
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, [3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
    }

    #[test]
    fn fuse_examples() {
        let w = FusionWeights::default();
        assert_eq!(
            fuse(&plain(&[0.2]), &plain(&[0.3]), w).unwrap().scores,
            [0.5]
        );
        let w21 = FusionWeights {
            lambda_cr: 2.0,
            lambda_kr: 1.0,
        };
        assert!((fuse(&plain(&[0.1]), &plain(&[0.4]), w21).unwrap().scores[0] - 0.6).abs() < 1e-15);
        let zero = FusionWeights {
            lambda_cr: 1.0,
            lambda_kr: 0.0,
        };
        assert!(matches!(
            fuse(&plain(&[0.1]), &plain(&[0.4]), zero),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            fuse(&plain(&[0.1]), &plain(&[0.4, 0.1]), w),
            Err(Error::InvalidArgument(_))
        ));
    }

    proptest! {
        #[test]
        fn smoothing_reduces_total_variation(xs in proptest::collection::vec(-5.0f64..5.0, 1..80), sigma in 0.2f64..6.0) {
            let tv = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
            let s = gaussian_smooth(&plain(&xs), sigma).unwrap();
            prop_assert!(tv(&s.scores) <= tv(&xs) + 1e-9);
        }

        #[test]
        fn normalization_preserves_order(xs in proptest::collection::vec(-5.0f64..5.0, 2..60),
                                          labels in proptest::collection::vec(0u8..2, 60)) {
            let labels = &labels[..xs.len()];
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let s = ScoreSeries::new("v", xs.clone(), Some(labels.to_vec())).unwrap();
            let n = minmax_normalize(&s);
            prop_assert_eq!(roc_auc(&xs, labels).unwrap(), roc_auc(&n.scores, labels).unwrap());
        }

        #[test]
        fn fused_range_after_normalization(a in proptest::collection::vec(-5.0f64..5.0, 1..40),
                                           b in proptest::collection::vec(-5.0f64..5.0, 40),
                                           lc in 0.1f64..3.0, lk in 0.1f64..3.0) {
            let b = &b[..a.len()];
            let w = FusionWeights { lambda_cr: lc, lambda_kr: lk };
            let cr = postprocess(&plain(&a), Some(2.0)).unwrap();
            let kr = postprocess(&plain(b), Some(2.0)).unwrap();
            let f = fuse(&cr, &kr, w).unwrap();
            for v in f.scores {
                prop_assert!(v >= -1e-12 && v <= lc + lk + 1e-12);
            }
        }
    }
}
