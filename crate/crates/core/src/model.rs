//! Network description and the dense, frame-based reference engine.
//!
//! The dense engine defines the ground-truth semantics every event-driven
//! unit is checked against. Saturating addition is not associative, so the
//! engine fixes the accumulation order per neuron: input channels ascending,
//! and within a channel the contributing neighbours ordered by their
//! interlace column. That is the order in which the queues deliver them.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::encoder::{encode, ScheduleError, ThresholdSchedule};
use crate::fixed::Width;
use crate::interlace::{column_of, FmapDims};
use crate::spikes::{Frame, SpikeMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum KernelSize {
    One,
    Three,
}

impl KernelSize {
    pub const fn side(self) -> usize {
        match self {
            KernelSize::One => 1,
            KernelSize::Three => 3,
        }
    }

    pub const fn taps(self) -> usize {
        self.side() * self.side()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kernel: KernelSize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub input: FmapDims,
    /// `[c_out][c_in][row][col]`, natural (un-rotated) orientation.
    pub kernels: Vec<i16>,
    pub bias: Vec<i16>,
    pub threshold: i16,
    pub maxpool: bool,
}

impl LayerSpec {
    pub fn kernel_for(&self, c_out: usize, c_in: usize) -> &[i16] {
        let taps = self.kernel.taps();
        let k = (c_out * self.in_channels + c_in) * taps;
        &self.kernels[k..k + taps]
    }

    /// Spatial size of the layer's emitted events (after pooling, if any).
    pub fn output_dims(&self) -> FmapDims {
        if self.maxpool {
            self.input.pooled()
        } else {
            self.input
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Classifier {
    pub classes: usize,
    pub inputs: usize,
    /// `[class][input]`, inputs flattened as `(channel, row, col)`.
    pub weights: Vec<i16>,
    pub bias: Vec<i16>,
}

impl Classifier {
    pub fn weight(&self, class: usize, input: usize) -> i16 {
        self.weights[class * self.inputs + input]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub width: Width,
    pub input_channels: usize,
    pub input: FmapDims,
    pub schedule: ThresholdSchedule,
    pub layers: Vec<LayerSpec>,
    pub classifier: Classifier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    NoLayers,
    EmptyDims { layer: usize },
    ChannelMismatch { layer: usize, expected: usize, got: usize },
    DimsMismatch { layer: usize, expected: FmapDims, got: FmapDims },
    KernelLength { layer: usize, expected: usize, got: usize },
    BiasLength { layer: usize, expected: usize, got: usize },
    ValueOutOfRange { layer: Option<usize>, what: &'static str, index: usize, value: i16, width: Width },
    ClassifierShape { expected_inputs: usize, inputs: usize, weights: usize, bias: usize },
    Schedule(ScheduleError),
    FrameShape { expected_channels: usize, expected: FmapDims, channels: usize, got: FmapDims },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::NoLayers => f.write_str("network has no convolutional layers"),
            ModelError::EmptyDims { layer } => write!(f, "layer {layer}: zero-sized feature map"),
            ModelError::ChannelMismatch { layer, expected, got } => {
                write!(f, "layer {layer}: expects {expected} input channels, previous stage has {got}")
            }
            ModelError::DimsMismatch { layer, expected, got } => {
                write!(f, "layer {layer}: input is {got}, previous stage produces {expected}")
            }
            ModelError::KernelLength { layer, expected, got } => {
                write!(f, "layer {layer}: kernel array has {got} weights, expected {expected}")
            }
            ModelError::BiasLength { layer, expected, got } => {
                write!(f, "layer {layer}: bias array has {got} entries, expected {expected}")
            }
            ModelError::ValueOutOfRange { layer, what, index, value, width } => match layer {
                Some(l) => write!(f, "layer {l}: {what}[{index}] = {value} does not fit {width}"),
                None => write!(f, "classifier: {what}[{index}] = {value} does not fit {width}"),
            },
            ModelError::ClassifierShape { expected_inputs, inputs, weights, bias } => {
                write!(f, "classifier expects {expected_inputs} inputs but declares {inputs} ({weights} weights, {bias} biases)")
            }
            ModelError::Schedule(e) => write!(f, "{e}"),
            ModelError::FrameShape { expected_channels, expected, channels, got } => {
                write!(f, "frame is {channels}x{got}, network expects {expected_channels}x{expected}")
            }
        }
    }
}

impl From<ScheduleError> for ModelError {
    fn from(e: ScheduleError) -> ModelError {
        ModelError::Schedule(e)
    }
}

fn check_range(values: &[i16], width: Width, layer: Option<usize>, what: &'static str) -> Result<(), ModelError> {
    match values.iter().position(|&v| !width.contains(v as i64)) {
        Some(index) => Err(ModelError::ValueOutOfRange { layer, what, index, value: values[index], width }),
        None => Ok(()),
    }
}

impl NetworkSpec {
    pub fn timesteps(&self) -> usize {
        self.schedule.timesteps()
    }

    pub fn final_dims(&self) -> (usize, FmapDims) {
        match self.layers.last() {
            Some(l) => (l.out_channels, l.output_dims()),
            None => (self.input_channels, self.input),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::NoLayers);
        }
        let mut channels = self.input_channels;
        let mut dims = self.input;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.input.neurons() == 0 || layer.out_channels == 0 || layer.in_channels == 0 {
                return Err(ModelError::EmptyDims { layer: l });
            }
            if layer.in_channels != channels {
                return Err(ModelError::ChannelMismatch { layer: l, expected: layer.in_channels, got: channels });
            }
            if layer.input != dims {
                return Err(ModelError::DimsMismatch { layer: l, expected: dims, got: layer.input });
            }
            let want = layer.out_channels * layer.in_channels * layer.kernel.taps();
            if layer.kernels.len() != want {
                return Err(ModelError::KernelLength { layer: l, expected: want, got: layer.kernels.len() });
            }
            if layer.bias.len() != layer.out_channels {
                return Err(ModelError::BiasLength { layer: l, expected: layer.out_channels, got: layer.bias.len() });
            }
            check_range(&layer.kernels, self.width, Some(l), "kernel")?;
            check_range(&layer.bias, self.width, Some(l), "bias")?;
            check_range(core::slice::from_ref(&layer.threshold), self.width, Some(l), "threshold")?;
            channels = layer.out_channels;
            dims = layer.output_dims();
        }
        let expected_inputs = channels * dims.neurons();
        let c = &self.classifier;
        if c.inputs != expected_inputs || c.weights.len() != c.classes * c.inputs || c.bias.len() != c.classes || c.classes == 0 {
            return Err(ModelError::ClassifierShape { expected_inputs, inputs: c.inputs, weights: c.weights.len(), bias: c.bias.len() });
        }
        check_range(&c.weights, self.width, None, "weight")?;
        check_range(&c.bias, self.width, None, "bias")?;
        Ok(())
    }

    pub fn check_frame(&self, frame: &Frame) -> Result<(), ModelError> {
        if frame.channels() != self.input_channels || frame.dims() != self.input {
            return Err(ModelError::FrameShape {
                expected_channels: self.input_channels,
                expected: self.input,
                channels: frame.channels(),
                got: frame.dims(),
            });
        }
        Ok(())
    }
}

/// Per-layer membrane state of the dense engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseLayerState {
    pub channels: usize,
    pub dims: FmapDims,
    pub potentials: Vec<i16>,
    pub spiked: Vec<bool>,
}

impl DenseLayerState {
    pub fn new(channels: usize, dims: FmapDims) -> DenseLayerState {
        let n = channels * dims.neurons();
        DenseLayerState { channels, dims, potentials: vec![0; n], spiked: vec![false; n] }
    }

    pub fn potential(&self, c: usize, r: usize, col: usize) -> i16 {
        self.potentials[(c * self.dims.height + r) * self.dims.width + col]
    }

    pub fn reset(&mut self) {
        self.potentials.iter_mut().for_each(|v| *v = 0);
        self.spiked.iter_mut().for_each(|v| *v = false);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseState {
    pub layers: Vec<DenseLayerState>,
    pub class_potentials: Vec<i16>,
}

impl DenseState {
    pub fn new(net: &NetworkSpec) -> DenseState {
        DenseState {
            layers: net.layers.iter().map(|l| DenseLayerState::new(l.out_channels, l.input)).collect(),
            class_potentials: vec![0; net.classifier.classes],
        }
    }

    pub fn reset(&mut self) {
        self.layers.iter_mut().for_each(DenseLayerState::reset);
        self.class_potentials.iter_mut().for_each(|v| *v = 0);
    }
}

/// Kernel-window offsets `(dr, dc)` ordered by the interlace column of the
/// source cell, one ordering per `(row % 3, col % 3)` residue of the target.
fn gather_orders() -> [[(i8, i8); 9]; 9] {
    let mut table = [[(0i8, 0i8); 9]; 9];
    for rr in 0..3usize {
        for cr in 0..3usize {
            let mut offs = [(0i8, 0i8); 9];
            let mut k = 0;
            for dr in -1i8..=1 {
                for dc in -1i8..=1 {
                    offs[k] = (dr, dc);
                    k += 1;
                }
            }
            offs.sort_by_key(|&(dr, dc)| column_of((rr as isize + 3 + dr as isize) as usize, (cr as isize + 3 + dc as isize) as usize));
            table[rr * 3 + cr] = offs;
        }
    }
    table
}

/// One timestep of one layer: same-padded convolution of every input
/// channel, bias, thresholding with persistent spike indicators, and
/// optional 3x3 OR pooling.
pub fn dense_step(layer: &LayerSpec, width: Width, input: &SpikeMap, state: &mut DenseLayerState) -> Result<SpikeMap, ModelError> {
    if input.channels() != layer.in_channels {
        return Err(ModelError::ChannelMismatch { layer: 0, expected: layer.in_channels, got: input.channels() });
    }
    if input.dims() != layer.input || state.dims != layer.input || state.channels != layer.out_channels {
        return Err(ModelError::DimsMismatch { layer: 0, expected: layer.input, got: input.dims() });
    }
    let dims = layer.input;
    let (h, w) = (dims.height as isize, dims.width as isize);
    let orders = gather_orders();
    let mut out = SpikeMap::new(layer.out_channels, dims);
    for c_out in 0..layer.out_channels {
        for r in 0..dims.height {
            for col in 0..dims.width {
                let n = (c_out * dims.height + r) * dims.width + col;
                let mut v = state.potentials[n];
                for c_in in 0..layer.in_channels {
                    let k = layer.kernel_for(c_out, c_in);
                    match layer.kernel {
                        KernelSize::One => {
                            if input.get(c_in, r, col) {
                                v = width.add(v, k[0]).0;
                            }
                        }
                        KernelSize::Three => {
                            for &(dr, dc) in &orders[(r % 3) * 3 + col % 3] {
                                let sr = r as isize + dr as isize;
                                let sc = col as isize + dc as isize;
                                if sr < 0 || sc < 0 || sr >= h || sc >= w {
                                    continue;
                                }
                                if input.get(c_in, sr as usize, sc as usize) {
                                    let tap = ((dr + 1) * 3 + (dc + 1)) as usize;
                                    v = width.add(v, k[tap]).0;
                                }
                            }
                        }
                    }
                }
                v = width.add(v, layer.bias[c_out]).0;
                state.potentials[n] = v;
                let fire = v > layer.threshold || state.spiked[n];
                state.spiked[n] = fire;
                if fire {
                    out.set(c_out, r, col, true);
                }
            }
        }
    }
    Ok(if layer.maxpool { out.or_pool3() } else { out })
}

/// Adds one timestep of classifier input. Per class, the weights of all
/// spiking inputs plus the bias are summed exactly and the sum is
/// saturated into the class potential.
pub fn classifier_step(classifier: &Classifier, width: Width, spikes: &SpikeMap, acc: &mut [i16]) {
    for (class, a) in acc.iter_mut().enumerate() {
        let mut sum = classifier.bias[class] as i64;
        for (idx, &b) in spikes.bits().iter().enumerate() {
            if b {
                sum += classifier.weight(class, idx) as i64;
            }
        }
        let step = width.clamp_wide(sum).0;
        *a = width.add(*a, step).0;
    }
}

/// Index of the largest potential; ties go to the lowest class.
pub fn argmax(potentials: &[i16]) -> usize {
    let mut best = 0;
    for (k, &v) in potentials.iter().enumerate() {
        if v > potentials[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseRun {
    pub label: usize,
    pub class_potentials: Vec<i16>,
    /// Encoded input maps, one per timestep.
    pub inputs: Vec<SpikeMap>,
    /// `outputs[layer][t]`: what each layer emits (pooled where enabled).
    pub outputs: Vec<Vec<SpikeMap>>,
}

pub fn dense_run(net: &NetworkSpec, frame: &Frame) -> Result<DenseRun, ModelError> {
    let mut state = DenseState::new(net);
    dense_run_with(net, frame, &mut state)
}

/// Runs one sample from a reset state.
pub fn dense_run_with(net: &NetworkSpec, frame: &Frame, state: &mut DenseState) -> Result<DenseRun, ModelError> {
    net.check_frame(frame)?;
    state.reset();
    let inputs = encode(frame, &net.schedule);
    let mut outputs: Vec<Vec<SpikeMap>> = net.layers.iter().map(|_| Vec::with_capacity(inputs.len())).collect();
    for x in &inputs {
        let mut current = x.clone();
        for (l, layer) in net.layers.iter().enumerate() {
            current = dense_step(layer, net.width, &current, &mut state.layers[l]).map_err(|e| relabel(e, l))?;
            outputs[l].push(current.clone());
        }
        classifier_step(&net.classifier, net.width, &current, &mut state.class_potentials);
    }
    Ok(DenseRun { label: argmax(&state.class_potentials), class_potentials: state.class_potentials.clone(), inputs, outputs })
}

fn relabel(e: ModelError, l: usize) -> ModelError {
    match e {
        ModelError::ChannelMismatch { expected, got, .. } => ModelError::ChannelMismatch { layer: l, expected, got },
        ModelError::DimsMismatch { expected, got, .. } => ModelError::DimsMismatch { layer: l, expected, got },
        other => other,
    }
}
