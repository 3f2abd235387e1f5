//! Maximum local error over square sliding windows of an error map.

use serde::{Deserialize, Serialize};

use super::ErrorMap;
use crate::error::{Error, Result};

/// How one window's local error is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalErrorMode {
    /// Mean of the window's entries.
    #[default]
    WindowMean,
    /// Largest entry of the window (literal max pooling).
    WindowMax,
}

/// Window start offsets along one axis; the last window is clamped to the
/// border so that every position is covered.
pub fn window_starts(len: usize, k: usize, stride: usize) -> Vec<usize> {
    debug_assert!(k >= 1 && k <= len && stride >= 1);
    let mut starts: Vec<usize> = (0..=len - k).step_by(stride).collect();
    if *starts.last().unwrap() + k < len {
        starts.push(len - k);
    }
    starts
}

/// Default stride for window size `k`: `ceil(k / 2)`.
pub fn default_stride(k: usize) -> usize {
    k.div_ceil(2)
}

fn check(map: &ErrorMap, k: usize, stride: usize) -> Result<()> {
    if k == 0 || stride == 0 {
        return Err(Error::invalid("window size and stride must be positive"));
    }
    if k > map.height().min(map.width()) {
        return Err(Error::invalid(format!(
            "window {k} exceeds the {}x{} error map",
            map.height(),
            map.width()
        )));
    }
    Ok(())
}

/// Summed-area table of an error map; answers window sums in O(1).
pub struct IntegralImage {
    height: usize,
    width: usize,
    /// `(height + 1) x (width + 1)`, zero first row and column.
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn new(map: &ErrorMap) -> Self {
        let (h, w) = (map.height(), map.width());
        let stride = w + 1;
        let mut sums = vec![0.0; (h + 1) * stride];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += map.at(y, x);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            height: h,
            width: w,
            sums,
        }
    }

    pub fn window_sum(&self, y: usize, x: usize, k: usize) -> f64 {
        let s = self.width + 1;
        let a = self.sums[(y + k) * s + x + k];
        let b = self.sums[y * s + x + k];
        let c = self.sums[(y + k) * s + x];
        let d = self.sums[y * s + x];
        // clamp rounding noise on near-zero windows
        ((a - b) - (c - d)).max(0.0)
    }

    /// Largest window mean for window size `k` and stride `stride`.
    pub fn max_window_mean(&self, k: usize, stride: usize) -> f64 {
        let area = (k * k) as f64;
        let rows = window_starts(self.height, k, stride);
        let cols = window_starts(self.width, k, stride);
        let mut best = f64::NEG_INFINITY;
        for &y in &rows {
            for &x in &cols {
                best = best.max(self.window_sum(y, x, k) / area);
            }
        }
        best
    }
}

fn max_window_max(map: &ErrorMap, k: usize, stride: usize) -> f64 {
    let rows = window_starts(map.height(), k, stride);
    let cols = window_starts(map.width(), k, stride);
    let mut best = f64::NEG_INFINITY;
    for &y in &rows {
        for &x in &cols {
            for yy in y..y + k {
                for xx in x..x + k {
                    best = best.max(map.at(yy, xx));
                }
            }
        }
    }
    best
}

/// Maximum local error with the default windowed-mean local error.
pub fn mle(map: &ErrorMap, k: usize, stride: usize) -> Result<f64> {
    mle_with_mode(map, k, stride, LocalErrorMode::WindowMean)
}

pub fn mle_with_mode(map: &ErrorMap, k: usize, stride: usize, mode: LocalErrorMode) -> Result<f64> {
    check(map, k, stride)?;
    Ok(match mode {
        LocalErrorMode::WindowMean => IntegralImage::new(map).max_window_mean(k, stride),
        LocalErrorMode::WindowMax => max_window_max(map, k, stride),
    })
}

/// Scores one map for several window sizes with stride `ceil(k/2)`, sharing one integral image.
pub fn mle_multi(map: &ErrorMap, ks: &[usize], mode: LocalErrorMode) -> Result<Vec<f64>> {
    for &k in ks {
        check(map, k, default_stride(k))?;
    }
    match mode {
        LocalErrorMode::WindowMean => {
            let integral = IntegralImage::new(map);
            Ok(ks
                .iter()
                .map(|&k| integral.max_window_mean(k, default_stride(k)))
                .collect())
        }
        LocalErrorMode::WindowMax => Ok(ks
            .iter()
            .map(|&k| max_window_max(map, k, default_stride(k)))
            .collect()),
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Enumerates every window start along each axis directly and sums entries.
    pub fn brute_force_mle(map: &ErrorMap, k: usize, s: usize) -> f64 {
        let starts = |len: usize| {
            let mut v = Vec::new();
            let mut p = 0;
            while p + k <= len {
                v.push(p);
                p += s;
            }
            if v.last().is_none_or(|&l| l + k != len) {
                v.push(len - k);
            }
            v
        };
        let mut best = f64::NEG_INFINITY;
        for y in starts(map.height()) {
            for x in starts(map.width()) {
                let mut sum = 0.0;
                for yy in y..y + k {
                    for xx in x..x + k {
                        sum += map.at(yy, xx);
                    }
                }
                best = best.max(sum / (k * k) as f64);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::brute_force_mle;
    use super::*;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, values: Vec<f64>) -> ErrorMap {
        ErrorMap::from_values(h, w, values, 1.0).unwrap()
    }

    #[test]
    fn quadrant_example() {
        let means = [[0.1, 0.2], [0.3, 0.9]];
        let mut v = vec![0.0; 16];
        for y in 0..4 {
            for x in 0..4 {
                v[y * 4 + x] = means[y / 2][x / 2];
            }
        }
        let m = map(4, 4, v);
        assert_eq!(brute_force_mle(&m, 2, 2), 0.9);
        assert!((mle(&m, 2, 2).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn whole_map_window_is_mean() {
        let v: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let m = map(5, 5, v);
        assert!((mle(&m, 5, 1).unwrap() - m.total() / 25.0).abs() < 1e-12);
    }

    #[test]
    fn constant_map() {
        let m = map(6, 9, vec![0.3; 54]);
        for k in 1..=6 {
            for s in 1..=k {
                assert!((mle(&m, k, s).unwrap() - 0.3).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn window_too_large() {
        let m = map(3, 5, vec![0.0; 15]);
        assert!(matches!(mle(&m, 4, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(mle(&m, 2, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn starts_cover_border() {
        assert_eq!(window_starts(10, 4, 4), [0, 4, 6]);
        assert_eq!(window_starts(8, 4, 2), [0, 2, 4]);
        assert_eq!(window_starts(5, 5, 3), [0]);
        assert_eq!(default_stride(16), 8);
        assert_eq!(default_stride(3), 2);
    }

    #[test]
    fn max_mode_is_global_max() {
        let v: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let m = map(5, 6, v);
        assert_eq!(
            mle_with_mode(&m, 3, 2, LocalErrorMode::WindowMax).unwrap(),
            10.0
        );
    }

    #[test]
    fn multi_matches_single() {
        let v: Vec<f64> = (0..64 * 48)
            .map(|i| ((i * 31) % 97) as f64 / 97.0)
            .collect();
        let m = map(48, 64, v);
        let ks = [4, 8, 16, 32];
        let multi = mle_multi(&m, &ks, LocalErrorMode::WindowMean).unwrap();
        for (k, got) in ks.iter().zip(multi) {
            assert_eq!(got, mle(&m, *k, default_stride(*k)).unwrap());
        }
    }

    #[test]
    fn localized_block_raises_mle_over_mean() {
        let (n, r, k) = (32, 4, 8);
        let (hi, lo) = (1.0, 0.05);
        let mut v = vec![lo; n * n];
        for y in 10..10 + r {
            for x in 17..17 + r {
                v[y * n + x] = hi;
            }
        }
        let m = map(n, n, v);
        let gap = mle(&m, k, default_stride(k)).unwrap() - m.mean();
        let bound = (hi - lo) * (r * r) as f64 / (k * k) as f64
            - (hi - lo) * (r * r) as f64 / (n * n) as f64;
        assert!(gap >= bound - 1e-12, "{gap} < {bound}");
    }

    fn random_map() -> impl Strategy<Value = ErrorMap> {
        (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
            proptest::collection::vec(0.0f64..5.0, h * w).prop_map(move |v| map(h, w, v))
        })
    }

    proptest! {
        #[test]
        fn bounded_by_mean_and_max(m in random_map(), kf in 0.0f64..1.0, sf in 0.0f64..1.0) {
            let kmax = m.height().min(m.width());
            let k = 1 + (kf * (kmax - 1) as f64) as usize;
            let s = 1 + (sf * (k - 1) as f64) as usize;
            let v = mle(&m, k, s).unwrap();
            let max = m.values().iter().copied().fold(0.0, f64::max);
            prop_assert!(v <= max + 1e-12);
            // overlapping windows weight pixels unevenly, so the lower bound
            // is the coverage-weighted mean
            let (rows, cols) = (window_starts(m.height(), k, s), window_starts(m.width(), k, s));
            let mut weighted = 0.0;
            for &y in &rows {
                for &x in &cols {
                    for yy in y..y + k {
                        for xx in x..x + k {
                            weighted += m.at(yy, xx);
                        }
                    }
                }
            }
            weighted /= (rows.len() * cols.len() * k * k) as f64;
            prop_assert!(v >= weighted - 1e-12);
        }

        #[test]
        fn tiling_windows_bound_global_mean(bh in 1usize..5, bw in 1usize..5, k in 1usize..5, seed in 0u64..1000) {
            let (h, w) = (bh * k, bw * k);
            let values = (0..h * w).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 100.0).collect();
            let m = map(h, w, values);
            prop_assert!(mle(&m, k, k).unwrap() >= m.mean() - 1e-12);
        }

        #[test]
        fn matches_enumeration(m in random_map()) {
            let kmax = m.height().min(m.width());
            for k in 1..=kmax {
                for s in 1..=k {
                    let a = mle(&m, k, s).unwrap();
                    let b = brute_force_mle(&m, k, s);
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }
    }
}
