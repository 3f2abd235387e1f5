use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::{objective_gradient, GradientSet};
use super::loss::LossBreakdown;
use super::pairs::{group_by_video, sample_positive_pairs, PositivePair, VideoFeatures};
use crate::error::{Error, Result};
use crate::hash::{FeatureVector, HashEncoder};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_m: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub delta_max: usize,
    pub seed: u64,
    pub use_negative_pairs: bool,
    pub lambda_neg: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_m: 0.64,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 64,
            delta_max: 16,
            seed: 0,
            use_negative_pairs: false,
            lambda_neg: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_m >= 0.0 && self.lambda_m.is_finite()) {
            return Err(Error::invalid("lambda_m must be nonnegative"));
        }
        // zero learning rate is allowed: it leaves the encoder untouched
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be nonnegative"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.delta_max == 0 {
            return Err(Error::invalid(
                "epochs, batch_size and delta_max must be positive",
            ));
        }
        if !(self.lambda_neg >= 0.0 && self.lambda_neg.is_finite()) {
            return Err(Error::invalid("lambda_neg must be nonnegative"));
        }
        Ok(())
    }
}

/// Mean losses over the fixed evaluation pairs; epoch 0 is the initial encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_cosine: f64,
    pub mean_mutual: f64,
    pub mean_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: HashEncoder,
    pub trace: Vec<EpochLoss>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: GradientSet,
    v: GradientSet,
    step: i32,
}

impl Adam {
    fn new(encoder: &HashEncoder) -> Self {
        Self {
            m: GradientSet::zeros(encoder),
            v: GradientSet::zeros(encoder),
            step: 0,
        }
    }

    fn apply(&mut self, encoder: &mut HashEncoder, grad: &GradientSet, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        for (((layer, g), m), v) in encoder
            .layers_mut()
            .iter_mut()
            .zip(&grad.layers)
            .zip(self.m.layers.iter_mut())
            .zip(self.v.layers.iter_mut())
        {
            let params = layer.params_mut();
            let grads = g.parts();
            let ms = [&mut m.weight, &mut m.bias, &mut m.ln_gain, &mut m.ln_bias];
            let vs = [&mut v.weight, &mut v.bias, &mut v.ln_gain, &mut v.ln_bias];
            for (((p, g), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
                for i in 0..p.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                    let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                    p[i] -= step;
                }
            }
        }
    }
}

struct Sample<'a> {
    pair: PositivePair<'a>,
    negative: Option<&'a FeatureVector>,
}

fn attach_negatives<'a>(
    pairs: Vec<PositivePair<'a>>,
    videos: &[VideoFeatures<'a>],
    enabled: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Sample<'a>>> {
    if !enabled {
        return Ok(pairs
            .into_iter()
            .map(|pair| Sample {
                pair,
                negative: None,
            })
            .collect());
    }
    if videos.len() < 2 {
        return Err(Error::invalid("negative pairs need at least two videos"));
    }
    let total: usize = videos.iter().map(|v| v.snippets.len()).sum();
    pairs
        .into_iter()
        .map(|pair| {
            let own = videos
                .iter()
                .find(|v| v.video_id == pair.anchor.video_id)
                .map_or(0, |v| v.snippets.len());
            let mut idx = rng.random_range(0..total - own);
            for v in videos {
                if v.video_id == pair.anchor.video_id {
                    continue;
                }
                if idx < v.snippets.len() {
                    return Ok(Sample {
                        pair,
                        negative: Some(v.snippets[idx]),
                    });
                }
                idx -= v.snippets.len();
            }
            unreachable!("negative index within range")
        })
        .collect()
}

fn sample_terms(
    encoder: &HashEncoder,
    s: &Sample<'_>,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, GradientSet)> {
    objective_gradient(
        encoder,
        s.pair.anchor,
        s.pair.partner,
        s.negative.map(|n| (n, cfg.lambda_neg)),
        cfg.lambda_m,
    )
}

fn evaluate(
    encoder: &HashEncoder,
    samples: &[Sample<'_>],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochLoss> {
    let mut acc = LossBreakdown::default();
    for s in samples {
        let (t, _) = sample_terms(encoder, s, cfg)?;
        acc.cosine += t.cosine;
        acc.mutual += t.mutual;
        acc.total += t.total;
    }
    let n = samples.len() as f64;
    Ok(EpochLoss {
        epoch,
        mean_cosine: acc.cosine / n,
        mean_mutual: acc.mutual / n,
        mean_total: acc.total / n,
    })
}

/// Trains the hash layers with Adam on mean batch loss over positive pairs.
///
/// Pairs are resampled every epoch from a seed-derived stream; the loss trace
/// is measured on a fixed pair set drawn once from the same seed.
pub fn train(
    encoder: &HashEncoder,
    features: &[FeatureVector],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let videos = group_by_video(features);
    let mut neg_rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, 3));
    let eval_pairs = sample_positive_pairs(&videos, cfg.delta_max, seed::derive(cfg.seed, 1));
    if eval_pairs.is_empty() {
        return Err(Error::invalid("no video has two or more snippets"));
    }
    let eval_samples = attach_negatives(eval_pairs, &videos, cfg.use_negative_pairs, &mut neg_rng)?;

    let mut enc = encoder.clone();
    let mut adam = Adam::new(&enc);
    let mut trace = vec![evaluate(&enc, &eval_samples, cfg, 0)?];
    for epoch in 1..=cfg.epochs {
        let epoch_seed = seed::derive(cfg.seed, 100 + epoch as u64);
        let pairs = sample_positive_pairs(&videos, cfg.delta_max, epoch_seed);
        let mut samples = attach_negatives(pairs, &videos, cfg.use_negative_pairs, &mut neg_rng)?;
        samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(epoch_seed, 2)));
        for batch in samples.chunks(cfg.batch_size) {
            let mut grad = GradientSet::zeros(&enc);
            for s in batch {
                let (_, g) = sample_terms(&enc, s, cfg)?;
                grad.add_scaled(&g, 1.0 / batch.len() as f64);
            }
            adam.apply(&mut enc, &grad, cfg.learning_rate);
        }
        let row = evaluate(&enc, &eval_samples, cfg, epoch)?;
        log::info!("epoch {epoch}: mean total loss {:.6}", row.mean_total);
        trace.push(row);
    }
    Ok(TrainOutcome {
        encoder: enc,
        trace,
    })
}

/// Writes `epoch,mean_L_c,mean_L_m,mean_total`.
pub fn write_trace_csv<W: Write>(trace: &[EpochLoss], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::invalid(format!("writing loss trace: {e}"));
    w.write_record(["epoch", "mean_L_c", "mean_L_m", "mean_total"])
        .map_err(wrap)?;
    for row in trace {
        w.write_record([
            row.epoch.to_string(),
            row.mean_cosine.to_string(),
            row.mean_mutual.to_string(),
            row.mean_total.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush()
        .map_err(|e| Error::invalid(format!("writing loss trace: {e}")))?;
    Ok(())
}
