//! Seeded random models and frames.
//!
//! Shape strings read left to right: an input size `HxW` or `HxWxC`, then
//! `<n>C3` / `<n>C1` convolutions, `P3` to pool the preceding convolution,
//! and a final `F<n>` classifier, e.g. `28x28-8C3-P3-4C3-F10`.

use std::fmt;
use std::ops::RangeInclusive;

use aeqsim_core::{Classifier, FmapDims, Frame, KernelSize, LayerSpec, NetworkSpec, ThresholdSchedule, Width};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeError {
    pub token: String,
    pub reason: &'static str,
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "shape token `{}`: {}", self.token, self.reason)
    }
}

impl std::error::Error for ShapeError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub out_channels: usize,
    pub kernel: KernelSize,
    pub maxpool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub input: FmapDims,
    pub layers: Vec<ConvShape>,
    pub classes: usize,
}

fn positive(tok: &str, s: &str) -> Result<usize, ShapeError> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 && n <= u16::MAX as usize => Ok(n),
        _ => Err(ShapeError { token: tok.into(), reason: "expected a positive integer" }),
    }
}

pub fn parse_shape(spec: &str) -> Result<Shape, ShapeError> {
    let mut tokens = spec.split('-');
    let head = tokens.next().unwrap_or_default();
    let dims: Vec<&str> = head.split('x').collect();
    let (height, width, channels) = match dims.as_slice() {
        [h, w] => (positive(head, h)?, positive(head, w)?, 1),
        [h, w, c] => (positive(head, h)?, positive(head, w)?, positive(head, c)?),
        _ => return Err(ShapeError { token: head.into(), reason: "expected HxW or HxWxC" }),
    };
    let mut layers: Vec<ConvShape> = Vec::new();
    let mut classes = None;
    for tok in tokens {
        if classes.is_some() {
            return Err(ShapeError { token: tok.into(), reason: "nothing may follow the classifier" });
        }
        if tok == "P3" {
            match layers.last_mut() {
                Some(l) if !l.maxpool => l.maxpool = true,
                Some(_) => return Err(ShapeError { token: tok.into(), reason: "layer is already pooled" }),
                None => return Err(ShapeError { token: tok.into(), reason: "pooling needs a preceding convolution" }),
            }
        } else if let Some(n) = tok.strip_prefix('F') {
            classes = Some(positive(tok, n)?);
        } else if let Some(n) = tok.strip_suffix("C3") {
            layers.push(ConvShape { out_channels: positive(tok, n)?, kernel: KernelSize::Three, maxpool: false });
        } else if let Some(n) = tok.strip_suffix("C1") {
            layers.push(ConvShape { out_channels: positive(tok, n)?, kernel: KernelSize::One, maxpool: false });
        } else {
            return Err(ShapeError { token: tok.into(), reason: "expected <n>C3, <n>C1, P3 or F<n>" });
        }
    }
    if layers.is_empty() {
        return Err(ShapeError { token: spec.into(), reason: "needs at least one convolution" });
    }
    let classes = classes.ok_or(ShapeError { token: spec.into(), reason: "must end with F<n>" })?;
    Ok(Shape { channels, input: FmapDims::new(height, width), layers, classes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomConfig {
    pub width: Width,
    pub timesteps: usize,
    pub max_pixel: u16,
    pub weights: RangeInclusive<i16>,
    pub bias: RangeInclusive<i16>,
    pub threshold: RangeInclusive<i16>,
    pub classifier_weights: RangeInclusive<i16>,
}

impl Default for RandomConfig {
    fn default() -> RandomConfig {
        RandomConfig {
            width: Width::W8,
            timesteps: 4,
            max_pixel: 255,
            weights: -32..=40,
            bias: -4..=6,
            threshold: 24..=96,
            classifier_weights: -3..=3,
        }
    }
}

fn clamp_range(r: &RangeInclusive<i16>, w: Width) -> RangeInclusive<i16> {
    (*r.start()).clamp(w.min(), w.max())..=(*r.end()).clamp(w.min(), w.max())
}

fn sample(rng: &mut ChaCha8Rng, r: &RangeInclusive<i16>, n: usize) -> Vec<i16> {
    (0..n).map(|_| rng.gen_range(r.clone())).collect()
}

/// Deterministic in `(seed, shape, cfg)`. Ranges are clipped to the width.
pub fn random_model(seed: u64, shape: &str, cfg: &RandomConfig) -> Result<NetworkSpec, ShapeError> {
    let shape = parse_shape(shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = cfg.width;
    let (wr, br, tr, cr) =
        (clamp_range(&cfg.weights, w), clamp_range(&cfg.bias, w), clamp_range(&cfg.threshold, w), clamp_range(&cfg.classifier_weights, w));
    let mut channels = shape.channels;
    let mut dims = shape.input;
    let mut layers = Vec::with_capacity(shape.layers.len());
    for l in &shape.layers {
        let n = l.out_channels * channels * l.kernel.taps();
        let layer = LayerSpec {
            kernel: l.kernel,
            in_channels: channels,
            out_channels: l.out_channels,
            input: dims,
            kernels: sample(&mut rng, &wr, n),
            bias: sample(&mut rng, &br, l.out_channels),
            threshold: rng.gen_range(tr.clone()),
            maxpool: l.maxpool,
        };
        channels = layer.out_channels;
        dims = layer.output_dims();
        layers.push(layer);
    }
    let inputs = channels * dims.neurons();
    let classifier = Classifier {
        classes: shape.classes,
        inputs,
        weights: sample(&mut rng, &cr, shape.classes * inputs),
        bias: sample(&mut rng, &cr, shape.classes),
    };
    let schedule = ThresholdSchedule::evenly_spaced(cfg.timesteps, cfg.max_pixel)
        .map_err(|_| ShapeError { token: format!("T={}", cfg.timesteps), reason: "cannot space thresholds over pixel range" })?;
    Ok(NetworkSpec { width: w, input_channels: shape.channels, input: shape.input, schedule, layers, classifier })
}

/// Uniform pixels, with roughly `dark` of them forced to zero.
pub fn random_frame(rng: &mut impl Rng, net: &NetworkSpec, max_pixel: u16, dark: f64) -> Frame {
    let n = net.input_channels * net.input.neurons();
    let pixels = (0..n).map(|_| if rng.gen_bool(dark) { 0 } else { rng.gen_range(0..=max_pixel) }).collect();
    Frame::new(net.input_channels, net.input, pixels).expect("sized from net")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_topology() {
        let s = parse_shape("28x28-32C3-32C3-P3-10C3-F10").unwrap();
        assert_eq!(s.input, FmapDims::new(28, 28));
        assert_eq!(s.channels, 1);
        let outs: Vec<_> = s.layers.iter().map(|l| (l.out_channels, l.maxpool)).collect();
        assert_eq!(outs, vec![(32, false), (32, true), (10, false)]);
        assert_eq!(s.classes, 10);
        let net = random_model(1, "28x28-32C3-32C3-P3-10C3-F10", &RandomConfig::default()).unwrap();
        assert_eq!(net.layers[2].input, FmapDims::new(10, 10));
        assert_eq!(net.classifier.inputs, 10 * 100);
        net.validate().unwrap();
    }

    #[test]
    fn shape_errors() {
        for bad in [
            "",
            "28",
            "28x28",
            "28x28-F10",
            "28x28-P3-4C3-F10",
            "28x28-4C3-P3-P3-F10",
            "28x28-4C3-F10-2C3",
            "28x28-4C5-F2",
            "0x28-4C3-F2",
            "28x28-0C3-F2",
        ] {
            assert!(parse_shape(bad).is_err(), "{bad}");
        }
        let s = parse_shape("12x10x3-4C1-F2").unwrap();
        assert_eq!((s.channels, s.layers[0].kernel), (3, KernelSize::One));
    }

    #[test]
    fn same_seed_same_model() {
        let cfg = RandomConfig::default();
        let a = random_model(42, "16x16-4C3-P3-2C3-F5", &cfg).unwrap();
        let b = random_model(42, "16x16-4C3-P3-2C3-F5", &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_model(43, "16x16-4C3-P3-2C3-F5", &cfg).unwrap());
    }

    #[test]
    fn zero_range_gives_silent_net() {
        let cfg = RandomConfig { weights: 0..=0, bias: 0..=0, threshold: 0..=0, classifier_weights: 0..=0, ..RandomConfig::default() };
        let net = random_model(3, "9x9-2C3-F3", &cfg).unwrap();
        assert!(net.layers[0].kernels.iter().all(|&k| k == 0));
        let frame = Frame::new(1, net.input, vec![255; 81]).unwrap();
        let run = aeqsim_core::dense_run(&net, &frame).unwrap();
        assert!(run.outputs[0].iter().all(|m| m.count() == 0));
    }
}
