//! Seeded synthetic data: clustered snippet features and videos with moving
//! squares, used by the `synth` command and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::context::Frame;
use crate::hash::FeatureVector;
use crate::seed;

/// Gaussian clusters whose identity lives in a few signal dimensions while
/// the remaining dimensions carry per-snippet nuisance noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub dim: usize,
    pub signal_dims: usize,
    /// Normal clusters; one extra cluster is reserved for anomalies.
    pub normal_clusters: usize,
    /// Norm of each cluster centre.
    pub separation: f64,
    pub signal_std: f64,
    pub nuisance_std: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            signal_dims: 8,
            normal_clusters: 3,
            separation: 1.0,
            signal_std: 0.15,
            nuisance_std: 1.0,
        }
    }
}

/// Sampler for [`ClusterConfig`]; the last centre is the anomaly cluster.
#[derive(Debug, Clone)]
pub struct ClusterWorld {
    cfg: ClusterConfig,
    centers: Vec<Vec<f64>>,
}

impl ClusterWorld {
    pub fn new(cfg: ClusterConfig, seed: u64) -> Self {
        assert!(cfg.signal_dims >= 1 && cfg.signal_dims <= cfg.dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = Normal::new(0.0, 1.0).unwrap();
        let centers = (0..=cfg.normal_clusters)
            .map(|_| {
                let v: Vec<f64> = (0..cfg.signal_dims).map(|_| std.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / norm * cfg.separation).collect()
            })
            .collect();
        Self { cfg, centers }
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn anomaly_cluster(&self) -> usize {
        self.cfg.normal_clusters
    }

    pub fn sample(&self, cluster: usize, rng: &mut impl Rng) -> Vec<f64> {
        let signal = Normal::new(0.0, self.cfg.signal_std).unwrap();
        let nuisance = Normal::new(0.0, self.cfg.nuisance_std).unwrap();
        let mut v: Vec<f64> = self.centers[cluster]
            .iter()
            .map(|c| c + signal.sample(rng))
            .collect();
        v.extend((self.cfg.signal_dims..self.cfg.dim).map(|_| nuisance.sample(rng)));
        v
    }

    /// Snippet features of one video at the given anchors; anchors whose
    /// label is 1 are drawn from the anomaly cluster.
    pub fn video_features(
        &self,
        video_id: &str,
        cluster: usize,
        anchors: &[u64],
        labels: &[u8],
        seed: u64,
    ) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        anchors
            .iter()
            .zip(labels)
            .map(|(&a, &l)| {
                let c = if l == 1 {
                    self.anomaly_cluster()
                } else {
                    cluster
                };
                FeatureVector::new(video_id, a, self.sample(c, &mut rng))
            })
            .collect()
    }

    /// `videos` normal videos of `snippets` snippets each; video `i` uses
    /// cluster `i % normal_clusters` and anchors `stride, 2*stride, ...`.
    pub fn normal_set(
        &self,
        prefix: &str,
        videos: usize,
        snippets: usize,
        stride: u64,
        seed: u64,
    ) -> Vec<FeatureVector> {
        let anchors: Vec<u64> = (1..=snippets as u64).map(|j| j * stride).collect();
        let labels = vec![0; snippets];
        (0..videos)
            .flat_map(|i| {
                self.video_features(
                    &format!("{prefix}{i:03}"),
                    i % self.cfg.normal_clusters,
                    &anchors,
                    &labels,
                    seed::derive(seed, i as u64),
                )
            })
            .collect()
    }
}

/// Videos of a textured static background with squares sliding across it
/// and per-frame pixel noise. In anomalous videos the first square moves
/// much faster for a centred stretch of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobVideoConfig {
    pub size: usize,
    pub frames: usize,
    pub movers: usize,
    pub mover_size: usize,
    pub mover_speed: usize,
    pub mover_value: f64,
    /// Speed of the anomalous square inside the anomaly window.
    pub anomaly_speed: usize,
    /// Fraction of frames, centred in the video, that are anomalous.
    pub anomaly_ratio: f64,
    /// Per-frame noise amplitude is drawn uniformly from this range.
    pub noise_min: f64,
    pub noise_max: f64,
}

impl Default for BlobVideoConfig {
    fn default() -> Self {
        Self {
            size: 256,
            frames: 36,
            movers: 3,
            mover_size: 16,
            mover_speed: 4,
            mover_value: 0.8,
            anomaly_speed: 16,
            anomaly_ratio: 0.3,
            noise_min: 0.0,
            noise_max: 0.1,
        }
    }
}

fn paint(frame: &mut Frame, y0: usize, x0: usize, side: usize, value: f32) {
    let (h, w) = (frame.height(), frame.width());
    for y in y0..(y0 + side).min(h) {
        for x in x0..(x0 + side).min(w) {
            for c in 0..frame.channels() {
                frame.set(y, x, c, value);
            }
        }
    }
}

/// One grey-scale video and its per-frame labels (all zero when `anomalous` is false).
pub fn blob_video(cfg: &BlobVideoConfig, anomalous: bool, seed: u64) -> (Vec<Frame>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.size;
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let background: Vec<f32> = (0..n * n)
        .map(|p| {
            let (y, x) = ((p / n) as f64, (p % n) as f64);
            (0.3 + 0.06 * (x * 0.09 + phase).sin() + 0.06 * (y * 0.07 - phase).cos()) as f32
        })
        .collect();
    let span = n.saturating_sub(cfg.mover_size).max(1);
    let movers: Vec<(usize, usize, bool)> = (0..cfg.movers)
        .map(|_| {
            (
                rng.random_range(0..span),
                rng.random_range(0..span),
                rng.random_bool(0.5),
            )
        })
        .collect();
    let width = (cfg.frames as f64 * cfg.anomaly_ratio).round() as usize;
    let start = (cfg.frames - width) / 2;
    let labels: Vec<u8> = (0..cfg.frames)
        .map(|t| u8::from(anomalous && t >= start && t < start + width))
        .collect();

    // cumulative displacement of every square
    let mut offsets = vec![0usize; cfg.movers];
    let frames = (0..cfg.frames)
        .map(|t| {
            let mut f = Frame::new(n, n, 1, background.clone()).unwrap();
            for (i, &(y, x, horizontal)) in movers.iter().enumerate() {
                let shift = offsets[i];
                let (yy, xx) = if horizontal {
                    (y, (x + shift) % span)
                } else {
                    ((y + shift) % span, x)
                };
                paint(&mut f, yy, xx, cfg.mover_size, cfg.mover_value as f32);
            }
            for (i, off) in offsets.iter_mut().enumerate() {
                let fast = i == 0 && t + 1 < cfg.frames && labels[t + 1] == 1;
                *off += if fast {
                    cfg.anomaly_speed
                } else {
                    cfg.mover_speed
                };
            }
            let amp = rng.random_range(cfg.noise_min..=cfg.noise_max) as f32;
            let data: Vec<f32> = f
                .data()
                .iter()
                .map(|&v| (v + amp * rng.random_range(-1.0f32..=1.0)).clamp(0.0, 1.0))
                .collect();
            Frame::new(n, n, 1, data).unwrap()
        })
        .collect();
    (frames, labels)
}
