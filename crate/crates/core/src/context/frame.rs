use crate::error::{Error, Result};

/// An `H x W x C` image with interleaved channels and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("frame must be at least 1x1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "frames have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "frame {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("frame contains non-finite pixels"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Frame {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(y, x, c, self.get(y, self.width - 1 - x, c));
                }
            }
        }
        out
    }

    /// Rotates counter-clockwise by `degrees` about the frame centre with
    /// bilinear sampling; samples falling outside are clamped to the border.
    pub fn rotate(&self, degrees: f64) -> Frame {
        let (sin, cos) = degrees.to_radians().sin_cos();
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let sx = (cos * dx - sin * dy + cx).clamp(0.0, max_x);
                let sy = (sin * dx + cos * dy + cy).clamp(0.0, max_y);
                let x0 = sx.floor() as usize;
                let y0 = sy.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let y1 = (y0 + 1).min(self.height - 1);
                let fx = sx - x0 as f64;
                let fy = sy - y0 as f64;
                for c in 0..self.channels {
                    let top =
                        self.get(y0, x0, c) as f64 * (1.0 - fx) + self.get(y0, x1, c) as f64 * fx;
                    let bottom =
                        self.get(y1, x0, c) as f64 * (1.0 - fx) + self.get(y1, x1, c) as f64 * fx;
                    out.set(y, x, c, (top * (1.0 - fy) + bottom * fy) as f32);
                }
            }
        }
        out
    }

    /// Pixelwise `0.5 * (self + other)`.
    pub fn average(&self, other: &Frame) -> Result<Frame> {
        if !self.same_shape(other) {
            return Err(Error::invalid("cannot average frames of different shapes"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        Frame::new(self.height, self.width, self.channels, data)
    }
}
