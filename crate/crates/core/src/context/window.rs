use super::predictor::{score_video, FramePredictor, ScoringOptions};
use super::simulate::{simulate_anomalous_video, SimulationConfig};
use super::Frame;
use crate::error::{Error, Result};
use crate::eval::{micro_auc, minmax_normalize, ScoreSeries};
use crate::seed;

/// Micro-AUC of each candidate window size and the chosen size.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSelection {
    pub chosen: usize,
    pub curve: Vec<(usize, f64)>,
}

/// Largest AUC wins; ties go to the smallest window.
pub fn choose_window(curve: &[(usize, f64)]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(k, auc) in curve {
        best = match best {
            Some((bk, ba)) if ba > auc || (ba == auc && bk < k) => Some((bk, ba)),
            _ => Some((k, auc)),
        };
    }
    best.map(|b| b.0)
        .ok_or_else(|| Error::invalid("no window candidates"))
}

/// Per-window micro-AUC of labelled videos, each series min-max normalized per video.
pub fn window_curve(
    videos: &[(String, Vec<Frame>, Vec<u8>)],
    predictor: &dyn FramePredictor,
    opts: &ScoringOptions,
) -> Result<Vec<(usize, f64)>> {
    if opts.windows.is_empty() {
        return Err(Error::invalid("candidate window set is empty"));
    }
    let mut per_k: Vec<Vec<ScoreSeries>> = vec![Vec::new(); opts.windows.len()];
    for (id, frames, labels) in videos {
        let scores = score_video(id, frames, predictor, opts)?;
        for (acc, s) in per_k.iter_mut().zip(scores.mle) {
            acc.push(ScoreSeries::new(
                id.clone(),
                minmax_normalize(&s).scores,
                Some(labels.clone()),
            )?);
        }
    }
    opts.windows
        .iter()
        .zip(per_k)
        .map(|(&k, series)| Ok((k, micro_auc(&series)?)))
        .collect()
}

/// Picks the window size that best separates simulated pseudo-anomalies in
/// normal training videos. Video `i` is simulated with seed `derive(cfg.seed, i)`.
pub fn select_window(
    videos: &[(String, Vec<Frame>)],
    predictor: &dyn FramePredictor,
    opts: &ScoringOptions,
    cfg: &SimulationConfig,
) -> Result<WindowSelection> {
    if opts.windows.is_empty() {
        return Err(Error::invalid("candidate window set is empty"));
    }
    let simulated = videos
        .iter()
        .enumerate()
        .map(|(i, (id, frames))| {
            let vcfg = SimulationConfig {
                seed: seed::derive(cfg.seed, i as u64),
                ..cfg.clone()
            };
            let (frames, labels) = simulate_anomalous_video(frames, &vcfg)?;
            Ok((id.clone(), frames, labels))
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = window_curve(&simulated, predictor, opts)?;
    Ok(WindowSelection {
        chosen: choose_window(&curve)?,
        curve,
    })
}
