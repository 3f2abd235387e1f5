//! Analytic gradients of the Siamese objective through sigmoid, layer
//! normalization and the linear map.

use super::loss::{dot, norm, LossBreakdown};
use super::pairs::PositivePair;
use crate::error::{Error, Result};
use crate::hash::{FeatureVector, HashEncoder, HashLayer, LayerTrace};

/// Gradient of one hash layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
}

impl LayerGradient {
    fn zeros_like(layer: &HashLayer) -> Self {
        Self {
            weight: vec![0.0; layer.weight.len()],
            bias: vec![0.0; layer.bias.len()],
            ln_gain: vec![0.0; layer.ln_gain.len()],
            ln_bias: vec![0.0; layer.ln_bias.len()],
        }
    }

    pub(crate) fn parts(&self) -> [&Vec<f64>; 4] {
        [&self.weight, &self.bias, &self.ln_gain, &self.ln_bias]
    }

    fn parts_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.weight,
            &mut self.bias,
            &mut self.ln_gain,
            &mut self.ln_bias,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros(encoder: &HashEncoder) -> Self {
        Self {
            layers: encoder
                .layers()
                .iter()
                .map(LayerGradient::zeros_like)
                .collect(),
        }
    }

    /// `self += scale * other`, in a fixed element order.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (pa, pb) in a.parts_mut().into_iter().zip(b.parts()) {
                for (x, y) in pa.iter_mut().zip(pb) {
                    *x += scale * y;
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.parts().into_iter().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.parts().into_iter().flatten())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.parts().into_iter().flatten())
            .all(|v| v.is_finite())
    }
}

/// Gradient of `1 - cos(a, b)` with respect to `a`.
fn cosine_loss_grad(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::numeric("zero-norm code in cosine gradient"));
    }
    let cos = dot(a, b) / (na * nb);
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| -(y / nb - cos * x / na) / na)
        .collect())
}

/// Mutual difference loss of one branch and its gradient per code.
fn mutual_loss_and_grad(codes: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let b = codes.len();
    let r = codes[0].len();
    let norms: Vec<f64> = codes.iter().map(|c| norm(c)).collect();
    if norms.contains(&0.0) {
        return Err(Error::numeric(
            "zero-norm code in mutual difference gradient",
        ));
    }
    let unit: Vec<Vec<f64>> = codes
        .iter()
        .zip(&norms)
        .map(|(c, n)| c.iter().map(|v| v / n).collect())
        .collect();
    let scale = 2.0 / (r as f64 * b as f64 * (b as f64 - 1.0));
    let mut sum_unit = vec![0.0; r];
    for u in &unit {
        for (s, v) in sum_unit.iter_mut().zip(u) {
            *s += v;
        }
    }
    let mut loss = 0.0;
    for j in 0..b {
        for i in j + 1..b {
            loss += dot(&unit[i], &unit[j]);
        }
    }
    let grads = unit
        .iter()
        .zip(&norms)
        .map(|(u, &n)| {
            let others: Vec<f64> = sum_unit.iter().zip(u).map(|(s, v)| s - v).collect();
            let proj = dot(u, &others);
            others
                .iter()
                .zip(u)
                .map(|(o, v)| scale * (o - proj * v) / n)
                .collect()
        })
        .collect();
    Ok((scale * loss, grads))
}

/// Backpropagates `d_code` (one layer's code gradient) into `grad`.
fn backward_layer(
    layer: &HashLayer,
    trace: &LayerTrace,
    x: &[f64],
    d_code: &[f64],
    grad: &mut LayerGradient,
) {
    let r = d_code.len();
    let mut d_norm = vec![0.0; r];
    for k in 0..r {
        let h = trace.code[k];
        let dy = d_code[k] * h * (1.0 - h);
        grad.ln_gain[k] += dy * trace.normalized[k];
        grad.ln_bias[k] += dy;
        d_norm[k] = dy * layer.ln_gain[k];
    }
    let n = r as f64;
    let mean_d = d_norm.iter().sum::<f64>() / n;
    let mean_dn = dot(&d_norm, &trace.normalized) / n;
    let d_pre: Vec<f64> = d_norm
        .iter()
        .zip(&trace.normalized)
        .map(|(&dn, &u)| trace.inv_std * (dn - mean_d - u * mean_dn))
        .collect();
    for (gb, dz) in grad.bias.iter_mut().zip(&d_pre) {
        *gb += dz;
    }
    for (d, &xd) in x.iter().enumerate() {
        if xd == 0.0 {
            continue;
        }
        let row = &mut grad.weight[d * r..(d + 1) * r];
        for (g, dz) in row.iter_mut().zip(&d_pre) {
            *g += xd * dz;
        }
    }
}

struct Branch {
    traces: Vec<LayerTrace>,
}

impl Branch {
    fn forward(encoder: &HashEncoder, x: &[f64]) -> Result<Self> {
        Ok(Self {
            traces: encoder.forward_traced(x)?,
        })
    }

    fn codes(&self) -> Vec<Vec<f64>> {
        self.traces.iter().map(|t| t.code.clone()).collect()
    }

    fn long_code(&self) -> Vec<f64> {
        self.traces
            .iter()
            .flat_map(|t| t.code.iter().copied())
            .collect()
    }

    /// Adds the mutual-difference gradient (scaled) to `d_codes`, returns the loss.
    fn add_mutual(&self, d_codes: &mut [Vec<f64>], lambda_m: f64) -> Result<f64> {
        if self.traces.len() < 2 {
            if lambda_m != 0.0 {
                return Err(Error::invalid(
                    "mutual difference loss needs at least two hash layers",
                ));
            }
            return Ok(0.0);
        }
        let (loss, grads) = mutual_loss_and_grad(&self.codes())?;
        for (dc, g) in d_codes.iter_mut().zip(grads) {
            for (a, b) in dc.iter_mut().zip(g) {
                *a += 0.5 * lambda_m * b;
            }
        }
        Ok(loss)
    }

    fn backward(
        &self,
        encoder: &HashEncoder,
        x: &[f64],
        d_codes: &[Vec<f64>],
        grad: &mut GradientSet,
    ) {
        for (((layer, trace), dc), g) in encoder
            .layers()
            .iter()
            .zip(&self.traces)
            .zip(d_codes)
            .zip(grad.layers.iter_mut())
        {
            backward_layer(layer, trace, x, dc, g);
        }
    }
}

fn split_long(long: &[f64], r: usize) -> Vec<Vec<f64>> {
    long.chunks(r).map(<[f64]>::to_vec).collect()
}

/// Loss terms and the exact gradient for one positive pair, optionally with a
/// negative partner weighted by `lambda_neg`. Both branches share parameters,
/// so their gradients are summed.
pub fn objective_gradient(
    encoder: &HashEncoder,
    anchor: &FeatureVector,
    partner: &FeatureVector,
    negative: Option<(&FeatureVector, f64)>,
    lambda_m: f64,
) -> Result<(LossBreakdown, GradientSet)> {
    let r = encoder.code_len();
    let first = Branch::forward(encoder, &anchor.values)?;
    let second = Branch::forward(encoder, &partner.values)?;
    let l1 = first.long_code();
    let l2 = second.long_code();

    let cosine = 1.0 - dot(&l1, &l2) / (norm(&l1) * norm(&l2));
    let mut d1 = split_long(&cosine_loss_grad(&l1, &l2)?, r);
    let mut d2 = split_long(&cosine_loss_grad(&l2, &l1)?, r);
    let m1 = first.add_mutual(&mut d1, lambda_m)?;
    let m2 = second.add_mutual(&mut d2, lambda_m)?;

    let mut grad = GradientSet::zeros(encoder);
    let mut neg_loss = 0.0;
    let mut neg_weight = 0.0;
    if let Some((neg, weight)) = negative {
        let third = Branch::forward(encoder, &neg.values)?;
        let ln = third.long_code();
        neg_loss = dot(&l1, &ln) / (norm(&l1) * norm(&ln)) - 1.0;
        neg_weight = weight;
        // d(-L_c)/da = -d(L_c)/da
        let da = cosine_loss_grad(&l1, &ln)?;
        for (dc, chunk) in d1.iter_mut().zip(da.chunks(r)) {
            for (a, b) in dc.iter_mut().zip(chunk) {
                *a -= weight * b;
            }
        }
        let dn: Vec<Vec<f64>> = split_long(&cosine_loss_grad(&ln, &l1)?, r)
            .into_iter()
            .map(|c| c.into_iter().map(|v| -weight * v).collect())
            .collect();
        third.backward(encoder, &neg.values, &dn, &mut grad);
    }

    first.backward(encoder, &anchor.values, &d1, &mut grad);
    second.backward(encoder, &partner.values, &d2, &mut grad);
    if !grad.is_finite() {
        return Err(Error::numeric("non-finite gradient"));
    }
    let total = cosine + 0.5 * lambda_m * (m1 + m2) + neg_weight * neg_loss;
    Ok((
        LossBreakdown {
            cosine,
            mutual: 0.5 * (m1 + m2),
            negative: neg_loss,
            total,
        },
        grad,
    ))
}

/// Exact gradient of the total loss of `pair` with respect to every trainable parameter.
pub fn loss_gradient(
    encoder: &HashEncoder,
    pair: &PositivePair<'_>,
    lambda_m: f64,
) -> Result<GradientSet> {
    Ok(objective_gradient(encoder, pair.anchor, pair.partner, None, lambda_m)?.1)
}
