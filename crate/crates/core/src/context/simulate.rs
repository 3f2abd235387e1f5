use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Frame;
use crate::error::{Error, Result};

/// Parameters of the pseudo-anomaly generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub nseg: usize,
    pub ratio: f64,
    pub offset: usize,
    pub angle_min: f64,
    pub angle_max: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            nseg: 1,
            ratio: 0.5,
            offset: 2,
            angle_min: 2.0,
            angle_max: 5.0,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nseg == 0 {
            return Err(Error::invalid("nseg must be positive"));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::invalid(format!(
                "ratio must lie in (0, 1), got {}",
                self.ratio
            )));
        }
        if self.offset == 0 {
            return Err(Error::invalid("offset must be at least 1"));
        }
        if !(self.angle_min.is_finite()
            && self.angle_max.is_finite()
            && self.angle_min <= self.angle_max)
        {
            return Err(Error::invalid("angle range must be finite with min <= max"));
        }
        Ok(())
    }

    /// Per-frame labels for a video of `n` frames, without touching pixels.
    pub fn labels(&self, n: usize) -> Result<Vec<u8>> {
        self.validate()?;
        if n < 2 * self.nseg {
            return Err(Error::invalid(format!(
                "video of {n} frames is too short for {} segments",
                self.nseg
            )));
        }
        let m = n / self.nseg;
        if self.offset >= m {
            return Err(Error::invalid(format!(
                "offset {} must be smaller than the segment length {m}",
                self.offset
            )));
        }
        let width = (m as f64 * self.ratio).floor() as usize;
        let labels = (1..=n)
            .map(|i| {
                let j = ((i - 1) / m).min(self.nseg - 1);
                let start = (m as f64 * (j as f64 + 0.5 - 0.5 * self.ratio)).floor() as usize + 1;
                let end = start + width;
                u8::from(start <= i && i < end && i + self.offset <= n)
            })
            .collect();
        Ok(labels)
    }
}

/// Horizontal flip followed by a rotation of `angle` degrees.
pub fn augment(frame: &Frame, angle: f64) -> Frame {
    frame.flip_horizontal().rotate(angle)
}

/// Turns a normal video into one with labelled pseudo-anomalies.
///
/// Every frame is augmented with a single per-video angle; frames inside the
/// anomaly window are blended with the frame `offset` steps ahead.
pub fn simulate_anomalous_video(
    frames: &[Frame],
    cfg: &SimulationConfig,
) -> Result<(Vec<Frame>, Vec<u8>)> {
    let labels = cfg.labels(frames.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let angle = if cfg.angle_min == cfg.angle_max {
        cfg.angle_min
    } else {
        rng.random_range(cfg.angle_min..=cfg.angle_max)
    };
    let augmented: Vec<Frame> = frames.iter().map(|f| augment(f, angle)).collect();
    let out = augmented
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if labels[i] == 1 {
                f.average(&augmented[i + cfg.offset])
            } else {
                Ok(f.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(n: usize) -> Vec<Frame> {
        (0..n)
            .map(|i| {
                let data = (0..36)
                    .map(|p| ((p * 7 + i * 3) % 11) as f32 / 10.0)
                    .collect();
                Frame::new(6, 6, 1, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_segment_example() {
        let labels = SimulationConfig::default().labels(10).unwrap();
        assert_eq!(labels, [0, 0, 1, 1, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn tiny_ratio_labels_nothing() {
        let cfg = SimulationConfig {
            ratio: 0.05,
            ..Default::default()
        };
        assert!(cfg.labels(10).unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn conservation_over_segments() {
        for (n, nseg, ratio) in [(40, 4, 0.5), (37, 3, 0.3), (100, 5, 0.7), (20, 2, 0.5)] {
            let cfg = SimulationConfig {
                nseg,
                ratio,
                offset: 1,
                ..Default::default()
            };
            let m = n / nseg;
            let ones = cfg.labels(n).unwrap().iter().filter(|&&l| l == 1).count();
            assert_eq!(
                ones,
                nseg * (m as f64 * ratio).floor() as usize,
                "n={n} nseg={nseg}"
            );
        }
    }

    #[test]
    fn offset_past_the_end_is_unlabelled() {
        let cfg = SimulationConfig {
            ratio: 0.9,
            offset: 3,
            ..Default::default()
        };
        // start = floor(10*0.05)+1 = 1, end = 10; frames 8 and 9 would need 11 and 12
        let labels = cfg.labels(10).unwrap();
        assert_eq!(labels, [1, 1, 1, 1, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(SimulationConfig::default().labels(1).is_err());
        let cfg = SimulationConfig {
            offset: 5,
            nseg: 2,
            ..Default::default()
        };
        assert!(matches!(cfg.labels(10), Err(Error::InvalidArgument(_))));
        let cfg = SimulationConfig {
            ratio: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn blending_and_determinism() {
        let frames = video(10);
        let cfg = SimulationConfig {
            seed: 9,
            ..Default::default()
        };
        let (a, labels) = simulate_anomalous_video(&frames, &cfg).unwrap();
        let (b, _) = simulate_anomalous_video(&frames, &cfg).unwrap();
        assert_eq!(a, b);
        let other = simulate_anomalous_video(
            &frames,
            &SimulationConfig {
                seed: 10,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(a, other.0);

        let fixed = SimulationConfig {
            angle_min: 3.0,
            angle_max: 3.0,
            ..cfg
        };
        let (c, _) = simulate_anomalous_video(&frames, &fixed).unwrap();
        assert_eq!(c[0], augment(&frames[0], 3.0));
        assert_eq!(labels[2], 1);
        assert_eq!(
            c[2],
            augment(&frames[2], 3.0)
                .average(&augment(&frames[4], 3.0))
                .unwrap()
        );
    }
}
