use std::cmp::Ordering;

use super::ScoreSeries;
use crate::error::{Error, Result};

/// ROC AUC as the Mann-Whitney statistic: `P(pos > neg) + 0.5 P(tie)`.
///
/// Ties get mid-ranks; the rank sum is accumulated in doubled integer units so
/// the result is exact up to the final division.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::numeric(format!("non-finite score at position {i}")));
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(Error::invalid(format!("label at position {i} is not 0/1")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // twice the positive rank sum, ranks 1-based
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let positives = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        // mid-rank of positions i..j (0-based) is (i + 1 + j) / 2
        rank_sum2 += positives * (i as u64 + 1 + j as u64);
        i = j;
    }
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// AUC over all frames of all videos concatenated.
pub fn micro_auc(series: &[ScoreSeries]) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for s in series {
        let l = s.require_labels()?;
        scores.extend_from_slice(&s.scores);
        labels.extend_from_slice(l);
    }
    roc_auc(&scores, &labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroAuc {
    pub value: f64,
    /// Per-video AUC, `None` for videos lacking one of the classes.
    pub per_video: Vec<(String, Option<f64>)>,
}

impl MacroAuc {
    pub fn excluded(&self) -> impl Iterator<Item = &str> {
        self.per_video
            .iter()
            .filter(|(_, a)| a.is_none())
            .map(|(v, _)| v.as_str())
    }
}

/// Unweighted mean of per-video AUCs over videos containing both classes.
pub fn macro_auc(series: &[ScoreSeries]) -> Result<MacroAuc> {
    let mut per_video = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in series {
        let labels = s.require_labels()?;
        match roc_auc(&s.scores, labels) {
            Ok(a) => {
                sum += a;
                n += 1;
                per_video.push((s.video_id.clone(), Some(a)));
            }
            Err(Error::UndefinedMetric(_)) => {
                log::warn!(
                    "video {} lacks one class; excluded from macro AUC",
                    s.video_id
                );
                per_video.push((s.video_id.clone(), None));
            }
            Err(e) => return Err(e),
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric(
            "no video contains both classes".into(),
        ));
    }
    Ok(MacroAuc {
        value: sum / n as f64,
        per_video,
    })
}

/// Mean anomalous score minus mean normal score.
pub fn score_gap(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        if l == 1 {
            s1 += s;
            n1 += 1;
        } else {
            s0 += s;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::UndefinedMetric(
            "score gap needs both classes".into(),
        ));
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

/// Score gap over the concatenation of labeled series.
pub fn series_score_gap(series: &[ScoreSeries]) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for s in series {
        scores.extend_from_slice(&s.scores);
        labels.extend_from_slice(s.require_labels()?);
    }
    score_gap(&scores, &labels)
}
