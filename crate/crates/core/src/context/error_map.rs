use super::Frame;
use crate::error::{Error, Result};

/// Per-pixel recovery error of one frame, summed over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    lambda_l1: f64,
}

impl ErrorMap {
    /// Wraps precomputed nonnegative values (row-major).
    pub fn from_values(
        height: usize,
        width: usize,
        values: Vec<f64>,
        lambda_l1: f64,
    ) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::invalid("error map shape does not match its values"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(
                "error map entries must be finite and nonnegative",
            ));
        }
        Ok(Self {
            height,
            width,
            values,
            lambda_l1,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda_l1(&self) -> f64 {
        self.lambda_l1
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() / self.values.len() as f64
    }
}

/// `e(p) = sum_c (gt - pred)^2 + lambda_l1 * |gt - pred|`.
pub fn error_map(gt: &Frame, pred: &Frame, lambda_l1: f64) -> Result<ErrorMap> {
    if !gt.same_shape(pred) {
        return Err(Error::invalid(format!(
            "frame shapes differ: {}x{}x{} vs {}x{}x{}",
            gt.height(),
            gt.width(),
            gt.channels(),
            pred.height(),
            pred.width(),
            pred.channels()
        )));
    }
    if !(lambda_l1 >= 0.0 && lambda_l1.is_finite()) {
        return Err(Error::invalid("lambda_l1 must be nonnegative"));
    }
    let c = gt.channels();
    let values = gt
        .data()
        .chunks_exact(c)
        .zip(pred.data().chunks_exact(c))
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d + lambda_l1 * d.abs()
                })
                .sum()
        })
        .collect();
    Ok(ErrorMap {
        height: gt.height(),
        width: gt.width(),
        values,
        lambda_l1,
    })
}

/// Frame-level error: the sum of the error map.
pub fn fle(gt: &Frame, pred: &Frame, lambda_l1: f64) -> Result<f64> {
    Ok(error_map(gt, pred, lambda_l1)?.total())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let gt = Frame::filled(3, 4, 1, 0.2).unwrap();
        assert!(error_map(&gt, &gt, 1.0)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(fle(&gt, &gt, 1.0).unwrap(), 0.0);

        let mut pred = gt.clone();
        pred.set(1, 2, 0, 0.7);
        let m = error_map(&gt, &pred, 1.0).unwrap();
        let expect = 0.5f64 * 0.5 + 0.5;
        let d = 0.7f32 as f64 - 0.2f32 as f64;
        assert!((m.at(1, 2) - (d * d + d.abs())).abs() < 1e-15);
        assert!((m.at(1, 2) - expect).abs() < 1e-6);
        assert_eq!(m.values().iter().filter(|&&v| v != 0.0).count(), 1);
        assert!((fle(&gt, &pred, 1.0).unwrap() - 0.75).abs() < 1e-6);

        let sq = error_map(&gt, &pred, 0.0).unwrap();
        assert!((sq.at(1, 2) - d * d).abs() < 1e-15);
    }

    #[test]
    fn linear_in_lambda_and_channel_sum() {
        let a = Frame::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let b = Frame::new(1, 2, 3, vec![0.3, 0.2, 0.0, 0.9, 0.5, 0.1]).unwrap();
        let l1: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (*x as f64 - *y as f64).abs())
            .sum();
        let f1 = fle(&a, &b, 1.0).unwrap();
        let f2 = fle(&a, &b, 2.0).unwrap();
        assert!((f2 - f1 - l1).abs() < 1e-12);
        assert_eq!(error_map(&a, &b, 1.0).unwrap().values().len(), 2);
    }

    #[test]
    fn shape_mismatch() {
        let a = Frame::filled(2, 2, 1, 0.0).unwrap();
        let b = Frame::filled(2, 3, 1, 0.0).unwrap();
        assert!(matches!(
            error_map(&a, &b, 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }
}
