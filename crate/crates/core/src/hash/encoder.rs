use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::FeatureVector;
use crate::binio::{self, Reader};
use crate::error::{Error, Result};

pub const DEFAULT_LN_EPSILON: f64 = 1e-5;
const ENCODER_MAGIC: &[u8] = b"ILSH-ENC\0";
const ENCODER_VERSION: u16 = 1;

/// Linear map, layer normalization and sigmoid producing one `R`-bit code.
///
/// `weight` is stored row-major as a `D x R` matrix: entry `(d, r)` is at `d * R + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashLayer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
}

impl HashLayer {
    fn zeros(input_dim: usize, code_len: usize) -> Self {
        Self {
            weight: vec![0.0; input_dim * code_len],
            bias: vec![0.0; code_len],
            ln_gain: vec![1.0; code_len],
            ln_bias: vec![0.0; code_len],
        }
    }

    pub(crate) fn params(&self) -> [&Vec<f64>; 4] {
        [&self.weight, &self.bias, &self.ln_gain, &self.ln_bias]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.weight,
            &mut self.bias,
            &mut self.ln_gain,
            &mut self.ln_bias,
        ]
    }
}

/// Intermediate values of one layer's forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    /// Normalized pre-activations `(z - mean) / sqrt(var + eps)`.
    pub normalized: Vec<f64>,
    pub inv_std: f64,
    pub code: Vec<f64>,
}

/// A group of parallel hash layers sharing input and code dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct HashEncoder {
    layers: Vec<HashLayer>,
    input_dim: usize,
    code_len: usize,
    ln_epsilon: f64,
}

/// `B` real-valued codes from one encoder pass, each of length `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashCodeSet {
    pub codes: Vec<Vec<f64>>,
}

impl HashCodeSet {
    pub fn new(codes: Vec<Vec<f64>>) -> Result<Self> {
        let r = codes.first().map(Vec::len).unwrap_or(0);
        if r == 0 || codes.iter().any(|c| c.len() != r) {
            return Err(Error::invalid(
                "code set must be nonempty with equal code lengths",
            ));
        }
        Ok(Self { codes })
    }

    pub fn num_codes(&self) -> usize {
        self.codes.len()
    }

    pub fn code_len(&self) -> usize {
        self.codes.first().map(Vec::len).unwrap_or(0)
    }

    /// Concatenates the codes in layer order into one long code of length `B * R`.
    pub fn concat(&self) -> Vec<f64> {
        self.codes.iter().flatten().copied().collect()
    }
}

impl HashEncoder {
    /// Fan-in uniform initialization on `[-1/sqrt(D), 1/sqrt(D)]`, identity layer norm.
    pub fn init(input_dim: usize, num_layers: usize, code_len: usize, seed: u64) -> Result<Self> {
        check_dims(input_dim, num_layers, code_len)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (input_dim as f64).sqrt();
        let layers = (0..num_layers)
            .map(|_| {
                let mut layer = HashLayer::zeros(input_dim, code_len);
                for w in layer.weight.iter_mut() {
                    *w = rng.random_range(-bound..=bound);
                }
                layer
            })
            .collect();
        Ok(Self {
            layers,
            input_dim,
            code_len,
            ln_epsilon: DEFAULT_LN_EPSILON,
        })
    }

    /// Builds an encoder from explicit layers.
    pub fn from_layers(layers: Vec<HashLayer>, input_dim: usize, ln_epsilon: f64) -> Result<Self> {
        let code_len = layers.first().map(|l| l.bias.len()).unwrap_or(0);
        check_dims(input_dim, layers.len(), code_len)?;
        if !(ln_epsilon > 0.0 && ln_epsilon.is_finite()) {
            return Err(Error::invalid(
                "layer-norm epsilon must be positive and finite",
            ));
        }
        for (b, l) in layers.iter().enumerate() {
            if l.weight.len() != input_dim * code_len
                || l.bias.len() != code_len
                || l.ln_gain.len() != code_len
                || l.ln_bias.len() != code_len
            {
                return Err(Error::invalid(format!("layer {b} has inconsistent shapes")));
            }
            if l.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(Error::numeric(format!(
                    "layer {b} has non-finite parameters"
                )));
            }
        }
        Ok(Self {
            layers,
            input_dim,
            code_len,
            ln_epsilon,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn ln_epsilon(&self) -> f64 {
        self.ln_epsilon
    }

    pub fn layers(&self) -> &[HashLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [HashLayer] {
        &mut self.layers
    }

    pub fn encode(&self, feature: &FeatureVector) -> Result<HashCodeSet> {
        self.encode_values(&feature.values)
    }

    pub fn encode_values(&self, x: &[f64]) -> Result<HashCodeSet> {
        let codes = self
            .forward_traced(x)?
            .into_iter()
            .map(|t| t.code)
            .collect();
        Ok(HashCodeSet { codes })
    }

    pub(crate) fn forward_traced(&self, x: &[f64]) -> Result<Vec<LayerTrace>> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "feature has length {}, encoder expects {}",
                x.len(),
                self.input_dim
            )));
        }
        self.layers
            .iter()
            .enumerate()
            .map(|(b, layer)| {
                let trace = self.forward_layer(layer, x);
                if trace.code.iter().any(|v| !v.is_finite()) || !trace.inv_std.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite output in hash layer {b}"
                    )));
                }
                Ok(trace)
            })
            .collect()
    }

    fn forward_layer(&self, layer: &HashLayer, x: &[f64]) -> LayerTrace {
        let r_len = self.code_len;
        let mut z = layer.bias.clone();
        for (d, &xd) in x.iter().enumerate() {
            if xd == 0.0 {
                continue;
            }
            let row = &layer.weight[d * r_len..(d + 1) * r_len];
            for (zr, &w) in z.iter_mut().zip(row) {
                *zr += w * xd;
            }
        }
        let n = r_len as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + self.ln_epsilon).sqrt();
        let normalized: Vec<f64> = z.iter().map(|v| (v - mean) * inv_std).collect();
        let code = normalized
            .iter()
            .zip(&layer.ln_gain)
            .zip(&layer.ln_bias)
            .map(|((&u, &g), &beta)| sigmoid(u * g + beta))
            .collect();
        LayerTrace {
            normalized,
            inv_std,
            code,
        }
    }

    /// Serializes to the `ILSH-ENC` format; parameters are written at single precision.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ENCODER_MAGIC);
        binio::put_u16(&mut out, ENCODER_VERSION);
        binio::put_u32(&mut out, self.input_dim as u32);
        binio::put_u32(&mut out, self.layers.len() as u32);
        binio::put_u32(&mut out, self.code_len as u32);
        out.extend_from_slice(&self.ln_epsilon.to_le_bytes());
        for layer in &self.layers {
            for p in layer.params() {
                binio::put_f32s(&mut out, p.iter().map(|&v| v as f32));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes);
        rd.expect_magic(ENCODER_MAGIC, "encoder header")?;
        rd.version(ENCODER_VERSION, "encoder header")?;
        let at = rd.offset();
        let d = rd.u32("encoder header")? as usize;
        let b = rd.u32("encoder header")? as usize;
        let r = rd.u32("encoder header")? as usize;
        if d == 0 || b == 0 || r == 0 {
            return Err(Error::format("encoder header", at, "zero dimension"));
        }
        let eps = rd.f64("encoder header")?;
        let mut layers = Vec::with_capacity(b);
        for i in 0..b {
            let section = format!("encoder layer {i}");
            let read = |rd: &mut Reader, n: usize| -> Result<Vec<f64>> {
                Ok(rd
                    .f32_vec(n, &section)?
                    .into_iter()
                    .map(f64::from)
                    .collect())
            };
            let weight = read(&mut rd, d * r)?;
            let bias = read(&mut rd, r)?;
            let ln_gain = read(&mut rd, r)?;
            let ln_bias = read(&mut rd, r)?;
            layers.push(HashLayer {
                weight,
                bias,
                ln_gain,
                ln_bias,
            });
        }
        rd.finish("encoder trailer")?;
        Self::from_layers(layers, d, eps)
    }

    /// Rounds every parameter to single precision, matching what `to_bytes` persists.
    pub fn round_to_f32(&mut self) {
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                for v in p.iter_mut() {
                    *v = *v as f32 as f64;
                }
            }
        }
    }

    /// SHA-256 of the serialized encoder.
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&binio::read_file(path)?)
    }
}

fn check_dims(d: usize, b: usize, r: usize) -> Result<()> {
    if d == 0 || b == 0 || r == 0 {
        return Err(Error::invalid(format!(
            "encoder dimensions must be positive (D={d}, B={b}, R={r})"
        )));
    }
    Ok(())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector::new("v", 1, values)
    }

    #[test]
    fn init_shapes_and_determinism() {
        let enc = HashEncoder::init(2048, 8, 32, 7).unwrap();
        assert_eq!(enc.num_layers(), 8);
        assert!(enc.layers().iter().all(|l| l.weight.len() == 2048 * 32));
        let bound = 1.0 / 2048f64.sqrt();
        assert!(enc.layers()[3].weight.iter().all(|w| w.abs() <= bound));
        assert!(enc.layers()[0].bias.iter().all(|&b| b == 0.0));
        assert!(enc.layers()[0].ln_gain.iter().all(|&g| g == 1.0));

        let a = HashEncoder::init(4, 1, 2, 0).unwrap();
        let b = HashEncoder::init(4, 1, 2, 0).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a, b);
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(matches!(
            HashEncoder::init(0, 8, 32, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            HashEncoder::init(8, 0, 32, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            HashEncoder::init(8, 8, 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_weights_give_half() {
        let layers = vec![HashLayer::zeros(3, 4), HashLayer::zeros(3, 4)];
        let enc = HashEncoder::from_layers(layers, 3, DEFAULT_LN_EPSILON).unwrap();
        let codes = enc.encode(&fv(vec![0.3, -2.0, 5.0])).unwrap();
        assert!(codes.codes.iter().flatten().all(|&h| h == 0.5));
    }

    #[test]
    fn sigmoid_of_unit_post_ln() {
        // bias [1,-1] with zero weights normalizes to [1,-1] (up to epsilon)
        let mut layer = HashLayer::zeros(1, 2);
        layer.bias = vec![1.0, -1.0];
        let enc = HashEncoder::from_layers(vec![layer], 1, 1e-12).unwrap();
        let h = &enc.encode(&fv(vec![0.0])).unwrap().codes[0];
        assert_abs_diff_eq!(h[0], 0.731059, epsilon = 1e-6);
        assert_abs_diff_eq!(h[1], 0.268941, epsilon = 1e-6);
    }

    #[test]
    fn default_dims_produce_eight_codes_of_32() {
        let enc = HashEncoder::init(2048, 8, 32, 7).unwrap();
        let x: Vec<f64> = (0..2048).map(|i| (i as f64 * 0.01).sin()).collect();
        let set = enc.encode(&fv(x)).unwrap();
        assert_eq!(set.num_codes(), 8);
        assert!(set.codes.iter().all(|c| c.len() == 32));
        assert_eq!(set.concat().len(), 256);
    }

    #[test]
    fn concat_in_layer_order() {
        let set = HashCodeSet::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        assert_eq!(set.concat(), vec![0.1, 0.2, 0.3, 0.4]);
        let single = HashCodeSet::new(vec![vec![0.6, 0.7]]).unwrap();
        assert_eq!(single.concat(), vec![0.6, 0.7]);
    }

    #[test]
    fn dimension_mismatch() {
        let enc = HashEncoder::init(4, 2, 3, 1).unwrap();
        assert!(matches!(
            enc.encode(&fv(vec![1.0; 5])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn persistence_round_trip_and_errors() {
        let mut enc = HashEncoder::init(5, 3, 7, 11).unwrap();
        enc.round_to_f32();
        let bytes = enc.to_bytes();
        assert_eq!(bytes.len(), 9 + 2 + 12 + 8 + 3 * 4 * (5 * 7 + 3 * 7));
        let back = HashEncoder::from_bytes(&bytes).unwrap();
        assert_eq!(back, enc);
        assert_eq!(back.to_bytes(), bytes);

        let err = HashEncoder::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { ref section, .. } if section == "encoder layer 2"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            HashEncoder::from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad_version = bytes;
        bad_version[9] = 2;
        assert!(matches!(
            HashEncoder::from_bytes(&bad_version),
            Err(Error::Format { offset: 9, .. })
        ));
    }

    proptest! {
        #[test]
        fn codes_in_open_unit_interval(seed in 0u64..1000, x in proptest::collection::vec(-50.0f64..50.0, 6)) {
            let enc = HashEncoder::init(6, 3, 5, seed).unwrap();
            let set = enc.encode_values(&x).unwrap();
            for h in set.codes.iter().flatten() {
                prop_assert!(*h > 0.0 && *h < 1.0);
            }
        }

        #[test]
        fn uniform_bias_shift_is_removed(seed in 0u64..1000, shift in -10.0f64..10.0,
                                        x in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let enc = HashEncoder::init(6, 2, 5, seed).unwrap();
            let mut shifted = enc.clone();
            for v in shifted.layers_mut()[1].bias.iter_mut() {
                *v += shift;
            }
            let a = enc.encode_values(&x).unwrap();
            let b = shifted.encode_values(&x).unwrap();
            for (p, q) in a.concat().iter().zip(b.concat()) {
                prop_assert!((p - q).abs() < 1e-6);
            }
        }

        #[test]
        fn same_seed_same_codes(seed in any::<u64>()) {
            let x = vec![0.5, -1.0, 2.0];
            let a = HashEncoder::init(3, 2, 4, seed).unwrap().encode_values(&x).unwrap();
            let b = HashEncoder::init(3, 2, 4, seed).unwrap().encode_values(&x).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
