//! Symbolic shape propagation for 3-D convolutional encoder-decoders.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature map shape `(C, T, H, W)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct Shape {
    pub c: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(c: usize, t: usize, h: usize, w: usize) -> Self {
        Self { c, t, h, w }
    }

    /// Square spatial extent, as written in `(C, T, HW^2)` notation.
    pub const fn square(c: usize, t: usize, s: usize) -> Self {
        Self::new(c, t, s, s)
    }
}

impl From<[usize; 4]> for Shape {
    fn from(v: [usize; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Shape> for [usize; 4] {
    fn from(s: Shape) -> Self {
        [s.c, s.t, s.h, s.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.h == self.w {
            write!(f, "({},{},{}^2)", self.c, self.t, self.h)
        } else {
            write!(f, "({},{},{}x{})", self.c, self.t, self.h, self.w)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv3d,
    TransposedConv3d,
    Maxpool,
    Avgpool,
    TemporalSqueeze,
    ConcatSkip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Output side `ceil(in / stride)` (times `stride` for transposed convolutions).
    Same,
    /// Output side `floor((in - kernel) / stride) + 1`.
    Valid,
}

/// `(C_out, k_t, k_s^2)`; pools leave `channels` unset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kernel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    pub t: usize,
    pub s: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stride {
    pub t: usize,
    pub s: usize,
}

impl Default for Stride {
    fn default() -> Self {
        Self { t: 1, s: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
    #[serde(default)]
    pub stride: Stride,
    /// Defaults: `same` for convolutions and max pooling, `valid` for
    /// average pooling and temporal squeezing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<Padding>,
    /// Names this layer's output so later skips can refer to it and reports show it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// `concat-skip` only: label of the tensor to concatenate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    /// `concat-skip` only: layers applied to the skipped tensor first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub through: Vec<LayerSpec>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        Self {
            kind,
            kernel: None,
            stride: Stride::default(),
            padding: None,
            label: None,
            from: None,
            through: Vec::new(),
        }
    }

    pub fn conv(channels: usize, t: usize, s: usize) -> Self {
        Self::new(LayerKind::Conv3d).kernel(Some(channels), t, s)
    }

    pub fn transposed(channels: usize, t: usize, s: usize) -> Self {
        Self::new(LayerKind::TransposedConv3d).kernel(Some(channels), t, s)
    }

    pub fn pool(kind: LayerKind, t: usize, s: usize) -> Self {
        Self::new(kind).kernel(None, t, s)
    }

    fn kernel(mut self, channels: Option<usize>, t: usize, s: usize) -> Self {
        self.kernel = Some(Kernel { channels, t, s });
        self
    }

    pub fn stride(mut self, t: usize, s: usize) -> Self {
        self.stride = Stride { t, s };
        self
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    fn padding(&self) -> Padding {
        self.padding.unwrap_or(match self.kind {
            LayerKind::Avgpool | LayerKind::TemporalSqueeze => Padding::Valid,
            _ => Padding::Same,
        })
    }
}

/// An ordered layer list applied to an input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub name: String,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

/// Output shape of one layer of the main path.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerShape {
    pub name: String,
    pub kind: LayerKind,
    pub label: Option<String>,
    pub output: Shape,
}

fn spec_err(layer: &str, msg: impl Into<String>) -> Error {
    Error::Spec {
        layer: layer.to_string(),
        message: msg.into(),
    }
}

fn out_dim(
    name: &str,
    axis: &str,
    input: usize,
    k: usize,
    s: usize,
    pad: Padding,
    transposed: bool,
) -> Result<usize> {
    let out = match (transposed, pad) {
        (true, Padding::Same) => input * s,
        (true, Padding::Valid) => (input - 1) * s + k,
        (false, Padding::Same) => input.div_ceil(s),
        (false, Padding::Valid) => {
            if input < k {
                0
            } else {
                (input - k) / s + 1
            }
        }
    };
    if out == 0 {
        return Err(spec_err(
            name,
            format!("{axis} dimension {input} with kernel {k} and stride {s} leaves nothing"),
        ));
    }
    Ok(out)
}

fn apply(layer: &LayerSpec, name: &str, x: Shape, saved: &HashMap<String, Shape>) -> Result<Shape> {
    if layer.stride.t == 0 || layer.stride.s == 0 {
        return Err(spec_err(name, "stride must be positive"));
    }
    if layer.kind == LayerKind::ConcatSkip {
        let from = layer
            .from
            .as_deref()
            .ok_or_else(|| spec_err(name, "concat-skip needs a `from` label"))?;
        let mut skip = *saved
            .get(from)
            .ok_or_else(|| spec_err(name, format!("unknown skip source `{from}`")))?;
        for (i, inner) in layer.through.iter().enumerate() {
            skip = apply(inner, &format!("{name}/through[{i}]"), skip, saved)?;
        }
        if (skip.t, skip.h, skip.w) != (x.t, x.h, x.w) {
            return Err(spec_err(
                name,
                format!("cannot concatenate {x} with {skip} from `{from}`"),
            ));
        }
        return Ok(Shape {
            c: x.c + skip.c,
            ..x
        });
    }
    let kernel = layer
        .kernel
        .ok_or_else(|| spec_err(name, "kernel is required"))?;
    if kernel.t == 0 || kernel.s == 0 || kernel.channels == Some(0) {
        return Err(spec_err(name, "kernel sizes must be positive"));
    }
    let channels = match layer.kind {
        LayerKind::Maxpool | LayerKind::Avgpool => x.c,
        _ => kernel
            .channels
            .ok_or_else(|| spec_err(name, "kernel needs an output channel count"))?,
    };
    let transposed = layer.kind == LayerKind::TransposedConv3d;
    let pad = layer.padding();
    let t = out_dim(
        name,
        "temporal",
        x.t,
        kernel.t,
        layer.stride.t,
        pad,
        transposed,
    )?;
    if layer.kind == LayerKind::TemporalSqueeze && t != 1 {
        return Err(spec_err(
            name,
            format!("temporal squeeze leaves T = {t}, expected 1"),
        ));
    }
    Ok(Shape {
        c: channels,
        t,
        h: out_dim(
            name,
            "height",
            x.h,
            kernel.s,
            layer.stride.s,
            pad,
            transposed,
        )?,
        w: out_dim(
            name,
            "width",
            x.w,
            kernel.s,
            layer.stride.s,
            pad,
            transposed,
        )?,
    })
}

/// Propagates `spec.input` through every layer and returns each layer's output shape.
pub fn propagate_shapes(spec: &ArchSpec) -> Result<Vec<LayerShape>> {
    let input = spec.input;
    if input.c == 0 || input.t == 0 || input.h == 0 || input.w == 0 {
        return Err(spec_err(
            "input",
            format!("nonpositive input shape {input}"),
        ));
    }
    let mut saved = HashMap::new();
    saved.insert("input".to_string(), input);
    let mut x = input;
    let mut out = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let name = match &layer.label {
            Some(l) => format!("#{i} {l}"),
            None => format!("#{i}"),
        };
        x = apply(layer, &name, x, &saved)?;
        if let Some(l) = &layer.label {
            saved.insert(l.clone(), x);
        }
        out.push(LayerShape {
            name,
            kind: layer.kind,
            label: layer.label.clone(),
            output: x,
        });
    }
    Ok(out)
}

fn fn1(n: usize, spatial_stride: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(n, 3, 1),
        LayerSpec::conv(n, 1, 3).stride(1, spatial_stride),
        LayerSpec::conv(4 * n, 1, 1),
    ]
}

fn fn2(n: usize, spatial_stride: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(n, 1, 1),
        LayerSpec::conv(n, 1, 3).stride(1, spatial_stride),
        LayerSpec::conv(4 * n, 1, 1),
    ]
}

fn fn3(n: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(n, 1, 3),
        LayerSpec::conv(n, 1, 3),
        LayerSpec::conv(4 * n, 1, 3),
        LayerSpec::transposed(2 * n, 1, 2).stride(1, 2),
    ]
}

fn labelled_last(mut block: Vec<LayerSpec>, label: &str) -> Vec<LayerSpec> {
    let last = block.pop().unwrap().label(label);
    block.push(last);
    block
}

fn skip(from: &str, channels: usize) -> LayerSpec {
    let mut s = LayerSpec::new(LayerKind::ConcatSkip);
    s.from = Some(from.to_string());
    s.through = vec![LayerSpec::new(LayerKind::TemporalSqueeze).kernel(Some(channels), 4, 1)];
    s
}

/// The spatiotemporal U-Net: an I3D ResNet-50 style encoder, a decoder of
/// transposed convolutions, and temporal-squeeze shortcuts between them.
pub fn stu_net() -> ArchSpec {
    let mut layers = vec![
        LayerSpec::conv(64, 5, 7).stride(1, 2).label("enc.L1.conv"),
        LayerSpec::pool(LayerKind::Maxpool, 1, 3)
            .stride(1, 2)
            .label("enc.L1.max1"),
    ];
    for i in 0..3 {
        let block = fn1(64, 1);
        layers.extend(if i == 2 {
            labelled_last(block, "enc.L1.fn1")
        } else {
            block
        });
    }
    layers.push(
        LayerSpec::pool(LayerKind::Maxpool, 2, 1)
            .stride(2, 1)
            .label("enc.L1"),
    );

    for (level, n, repeats) in [("enc.L2", 128, 2), ("enc.L3", 256, 3)] {
        for r in 0..repeats {
            layers.extend(fn1(n, if r == 0 { 2 } else { 1 }));
            let block = fn2(n, 1);
            layers.extend(if r == repeats - 1 {
                labelled_last(block, level)
            } else {
                block
            });
        }
    }
    layers.extend(fn2(512, 1));
    layers.extend(fn1(512, 2));
    layers.extend(labelled_last(fn2(512, 1), "enc.L4"));
    layers.push(LayerSpec::pool(LayerKind::Avgpool, 4, 7).label("enc.L5"));

    layers.push(LayerSpec::conv(512, 1, 1));
    layers.push(
        LayerSpec::transposed(512, 1, 2)
            .stride(1, 2)
            .label("dec.L5.up1"),
    );
    layers.push(LayerSpec::conv(512, 1, 1));
    layers.push(
        LayerSpec::transposed(2048, 1, 1)
            .stride(1, 2)
            .label("dec.L5"),
    );
    layers.push(skip("enc.L4", 2048));
    layers.extend(labelled_last(fn3(512), "dec.L4"));
    layers.push(skip("enc.L3", 1024));
    layers.extend(labelled_last(fn3(256), "dec.L3"));
    layers.push(skip("enc.L2", 512));
    layers.extend(labelled_last(fn3(128), "dec.L2"));
    layers.push(skip("enc.L1", 256));
    layers.extend(labelled_last(fn3(64), "dec.L1.fn3a"));
    layers.extend(labelled_last(fn3(32), "dec.L1"));
    layers.push(LayerSpec::conv(64, 1, 3));
    layers.push(LayerSpec::conv(3, 1, 3));
    layers.push(LayerSpec::conv(3, 1, 3).label("output"));

    ArchSpec {
        name: "stu-net".to_string(),
        input: Shape::square(3, 8, 256),
        layers,
    }
}

/// Expected output shape of every labelled level of [`stu_net`].
pub fn stu_net_reference() -> Vec<(&'static str, Shape)> {
    vec![
        ("enc.L1.conv", Shape::square(64, 8, 128)),
        ("enc.L1.max1", Shape::square(64, 8, 64)),
        ("enc.L1.fn1", Shape::square(256, 8, 64)),
        ("enc.L1", Shape::square(256, 4, 64)),
        ("enc.L2", Shape::square(512, 4, 32)),
        ("enc.L3", Shape::square(1024, 4, 16)),
        ("enc.L4", Shape::square(2048, 4, 8)),
        ("enc.L5", Shape::square(2048, 1, 2)),
        ("dec.L5.up1", Shape::square(512, 1, 4)),
        ("dec.L5", Shape::square(2048, 1, 8)),
        ("dec.L4", Shape::square(1024, 1, 16)),
        ("dec.L3", Shape::square(512, 1, 32)),
        ("dec.L2", Shape::square(256, 1, 64)),
        ("dec.L1.fn3a", Shape::square(128, 1, 128)),
        ("dec.L1", Shape::square(64, 1, 256)),
        ("output", Shape::square(3, 1, 256)),
    ]
}

/// Labelled levels whose propagated shape differs from `expected`, as
/// `(label, expected, actual)`; a missing label reports `None`.
pub fn compare_levels(
    shapes: &[LayerShape],
    expected: &[(&str, Shape)],
) -> Vec<(String, Shape, Option<Shape>)> {
    expected
        .iter()
        .filter_map(|(label, want)| {
            let got = shapes
                .iter()
                .find(|s| s.label.as_deref() == Some(*label))
                .map(|s| s.output);
            (got != Some(*want)).then(|| (label.to_string(), *want, got))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_reference_cells() {
        let shapes = propagate_shapes(&stu_net()).unwrap();
        let mismatches = compare_levels(&shapes, &stu_net_reference());
        assert!(mismatches.is_empty(), "{mismatches:?}");
        assert_eq!(shapes.last().unwrap().output, Shape::square(3, 1, 256));
    }

    #[test]
    fn json_round_trip() {
        let spec = stu_net();
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: ArchSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert!(text.contains("\"temporal-squeeze\""));
    }

    #[test]
    fn temporal_squeeze_collapses_time() {
        let spec = ArchSpec {
            name: "tsl".into(),
            input: Shape::square(32, 4, 8),
            layers: vec![LayerSpec::new(LayerKind::TemporalSqueeze).kernel(Some(32), 4, 1)],
        };
        assert_eq!(
            propagate_shapes(&spec).unwrap()[0].output,
            Shape::square(32, 1, 8)
        );
    }

    #[test]
    fn identity_layer_echoes_input() {
        let spec = ArchSpec {
            name: "id".into(),
            input: Shape::new(3, 8, 20, 30),
            layers: vec![LayerSpec::conv(3, 1, 1)],
        };
        assert_eq!(propagate_shapes(&spec).unwrap()[0].output, spec.input);
    }

    #[test]
    fn corrupted_stride_is_a_spec_error() {
        let mut spec = stu_net();
        spec.layers[1].stride = Stride { t: 1, s: 0 };
        let err = propagate_shapes(&spec).unwrap_err();
        assert!(matches!(err, Error::Spec { ref layer, .. } if layer.contains("enc.L1.max1")));

        let mut spec = stu_net();
        spec.layers[0].stride = Stride { t: 1, s: 4 };
        assert!(matches!(propagate_shapes(&spec), Err(Error::Spec { .. })));
    }

    #[test]
    fn nonpositive_dimension_names_layer() {
        let spec = ArchSpec {
            name: "tiny".into(),
            input: Shape::square(1, 2, 4),
            layers: vec![LayerSpec::pool(LayerKind::Avgpool, 3, 2).label("pool")],
        };
        let err = propagate_shapes(&spec).unwrap_err();
        assert!(matches!(err, Error::Spec { ref layer, .. } if layer == "#0 pool"));
    }

    #[test]
    fn unknown_skip_source() {
        let mut s = LayerSpec::new(LayerKind::ConcatSkip);
        s.from = Some("nowhere".into());
        let spec = ArchSpec {
            name: "x".into(),
            input: Shape::square(1, 1, 4),
            layers: vec![s],
        };
        assert!(matches!(propagate_shapes(&spec), Err(Error::Spec { .. })));
    }
}
