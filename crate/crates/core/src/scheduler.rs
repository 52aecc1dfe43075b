//! Layer-by-layer orchestration of the event engine.
//!
//! Output channels are dealt round-robin to `P` units. Each unit owns one
//! potential memory, which it clears and reuses per output channel: for every
//! timestep it drains the input queues of all input channels, then runs the
//! thresholding scan that fills the output queue.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::aeq::{AeqBank, AeqError, AeqStore};
use crate::conv::{ConvStats, ConvTrace, ConvUnit, InterlacedMemory, NoTrace, PipelineMode, PreparedKernel, TraceRow};
use crate::encoder::encode;
use crate::fixed::Width;
use crate::interlace::{build_neighbor_plans, NeighborPlans};
use crate::metrics::{LayerStats, NetworkStats};
use crate::model::{argmax, Classifier, LayerSpec, ModelError, NetworkSpec};
use crate::spikes::Frame;
use crate::thresh::{threshold_channel, ThreshParams, ThreshStats};

pub const ALLOWED_PARALLELISM: [usize; 5] = [1, 2, 4, 8, 16];

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Parallelism(usize),
    Model(ModelError),
    Aeq { layer: usize, error: AeqError },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Parallelism(p) => write!(f, "parallelism {p} not in {:?}", ALLOWED_PARALLELISM),
            SimError::Model(e) => write!(f, "{e}"),
            SimError::Aeq { layer, error } => write!(f, "layer {layer}: {error}"),
        }
    }
}

impl From<ModelError> for SimError {
    fn from(e: ModelError) -> SimError {
        SimError::Model(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    parallelism: usize,
    pub clock_mhz: Option<f64>,
    pub mode: PipelineMode,
    /// Overrides the per-column queue depth (default: one slot per tile).
    pub queue_capacity: Option<usize>,
}

impl Default for RunPlan {
    fn default() -> RunPlan {
        RunPlan { parallelism: 1, clock_mhz: None, mode: PipelineMode::Protected, queue_capacity: None }
    }
}

impl RunPlan {
    pub fn new(parallelism: usize) -> Result<RunPlan, SimError> {
        if !ALLOWED_PARALLELISM.contains(&parallelism) {
            return Err(SimError::Parallelism(parallelism));
        }
        Ok(RunPlan { parallelism, ..RunPlan::default() })
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub fn with_clock(mut self, mhz: f64) -> RunPlan {
        self.clock_mhz = Some(mhz);
        self
    }

    pub fn with_mode(mut self, mode: PipelineMode) -> RunPlan {
        self.mode = mode;
        self
    }

    /// Output channels handled by each unit; units without work are omitted.
    pub fn assignment(&self, channels: usize) -> Vec<Vec<usize>> {
        let mut units = vec![Vec::new(); self.parallelism.min(channels)];
        for c in 0..channels {
            units[c % self.parallelism].push(c);
        }
        units
    }
}

/// Where a stretch of trace rows came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Activation {
    pub layer: usize,
    pub unit: usize,
    pub c_out: usize,
    pub t: usize,
    pub c_in: usize,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "# layer={} unit={} c_out={} t={} c_in={}", self.layer, self.unit, self.c_out, self.t, self.c_in)
    }
}

pub trait RunTracer: ConvTrace {
    fn begin(&mut self, activation: &Activation);
}

impl RunTracer for NoTrace {
    fn begin(&mut self, _: &Activation) {}
}

/// Collects rows with their activation header, for tests and small dumps.
#[derive(Debug, Default, Clone)]
pub struct TraceLog {
    pub entries: Vec<(Activation, Vec<TraceRow>)>,
}

impl ConvTrace for TraceLog {
    fn row(&mut self, row: &TraceRow) {
        if let Some((_, rows)) = self.entries.last_mut() {
            rows.push(*row);
        }
    }
}

impl RunTracer for TraceLog {
    fn begin(&mut self, activation: &Activation) {
        self.entries.push((*activation, Vec::new()));
    }
}

/// Everything one unit needs to process its share of a layer.
pub struct UnitJob<'a> {
    pub layer_index: usize,
    pub unit: usize,
    pub layer: &'a LayerSpec,
    pub width: Width,
    pub input: &'a AeqStore,
    pub channels: &'a [usize],
    pub plans: &'a NeighborPlans,
    pub mode: PipelineMode,
    pub out_capacity: usize,
}

#[derive(Debug, Clone)]
pub struct UnitOutput {
    pub unit: usize,
    pub banks: Vec<(usize, Vec<AeqBank>)>,
    pub conv: ConvStats,
    pub thresh: ThreshStats,
    pub mempot_cells: u64,
}

impl UnitOutput {
    pub fn cycles(&self) -> u64 {
        self.conv.cycles + self.thresh.cycles
    }
}

impl UnitJob<'_> {
    pub fn run<R: RunTracer + ?Sized>(&self, tracer: &mut R) -> Result<UnitOutput, AeqError> {
        let layer = self.layer;
        let timesteps = self.input.timesteps();
        let unit = ConvUnit::new(self.plans, self.mode);
        let mut mem = InterlacedMemory::new(layer.input, self.width);
        let mut out = UnitOutput {
            unit: self.unit,
            banks: Vec::with_capacity(self.channels.len()),
            conv: ConvStats::default(),
            thresh: ThreshStats::default(),
            mempot_cells: mem.cells() as u64,
        };
        let params_for = |c_out: usize| ThreshParams { bias: layer.bias[c_out], threshold: layer.threshold, maxpool: layer.maxpool };
        for &c_out in self.channels {
            let kernels: Vec<PreparedKernel> =
                (0..layer.in_channels).map(|c_in| PreparedKernel::new(layer.kernel, layer.kernel_for(c_out, c_in), self.plans)).collect();
            mem.reset();
            let mut banks = Vec::with_capacity(timesteps);
            for t in 0..timesteps {
                for (c_in, kernel) in kernels.iter().enumerate() {
                    tracer.begin(&Activation { layer: self.layer_index, unit: self.unit, c_out, t, c_in });
                    let reads = self.input.bank(c_in, t).reader()?;
                    out.conv.merge(&unit.run(&mut mem, reads, kernel, tracer));
                }
                let mut bank = AeqBank::new(self.out_capacity);
                out.thresh.merge(&threshold_channel(&mut mem, params_for(c_out), &mut bank)?);
                bank.finalize()?;
                banks.push(bank);
            }
            out.banks.push((c_out, banks));
        }
        Ok(out)
    }
}

/// Runs a layer's unit jobs. Implementations may use threads but must return
/// outputs in job order.
pub trait UnitExecutor {
    fn execute(&self, jobs: &[UnitJob<'_>]) -> Vec<Result<UnitOutput, AeqError>>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Sequential;

impl UnitExecutor for Sequential {
    fn execute(&self, jobs: &[UnitJob<'_>]) -> Vec<Result<UnitOutput, AeqError>> {
        jobs.iter().map(|j| j.run(&mut NoTrace)).collect()
    }
}

/// Fills the input queues from the encoded frame.
pub fn encode_input(net: &NetworkSpec, frame: &Frame) -> Result<AeqStore, SimError> {
    net.check_frame(frame)?;
    let maps = encode(frame, &net.schedule);
    let mut store = AeqStore::new(net.input_channels, maps.len(), net.input);
    for (t, map) in maps.iter().enumerate() {
        for c in 0..net.input_channels {
            let bank = store.bank_mut(c, t);
            map.write_channel(c, bank).map_err(|error| SimError::Aeq { layer: 0, error })?;
            bank.finalize().map_err(|error| SimError::Aeq { layer: 0, error })?;
        }
    }
    Ok(store)
}

#[allow(clippy::too_many_arguments)]
pub fn run_layer(
    layer_index: usize,
    layer: &LayerSpec,
    width: Width,
    input: &AeqStore,
    plan: &RunPlan,
    plans: &NeighborPlans,
    exec: &dyn UnitExecutor,
    tracer: Option<&mut dyn RunTracer>,
) -> Result<(AeqStore, LayerStats), SimError> {
    let out_dims = layer.output_dims();
    let out_capacity = plan.queue_capacity.unwrap_or(out_dims.tiles());
    let assignment = plan.assignment(layer.out_channels);
    let jobs: Vec<UnitJob<'_>> = assignment
        .iter()
        .enumerate()
        .map(|(unit, channels)| UnitJob { layer_index, unit, layer, width, input, channels, plans, mode: plan.mode, out_capacity })
        .collect();
    let results = match tracer {
        Some(tr) => jobs.iter().map(|j| j.run(&mut *tr)).collect(),
        None => exec.execute(&jobs),
    };

    let timesteps = input.timesteps();
    let mut store = AeqStore::with_capacity(layer.out_channels, timesteps, out_dims, out_capacity);
    let mut stats = LayerStats {
        layer: layer_index,
        input_events: input.total_events() as u64,
        input_neurons: (layer.in_channels * layer.input.neurons()) as u64,
        timesteps: timesteps as u64,
        ..LayerStats::default()
    };
    for r in results {
        let u = r.map_err(|error| SimError::Aeq { layer: layer_index, error })?;
        stats.conv.merge(&u.conv);
        stats.thresh.merge(&u.thresh);
        stats.unit_cycles.push(u.cycles());
        stats.mempot_cells += u.mempot_cells;
        for (c_out, banks) in u.banks {
            store.replace_channel(c_out, banks);
        }
    }
    stats.output_events = store.total_events() as u64;
    stats.finish();
    Ok((store, stats))
}

/// Event-driven classifier: each input event adds its weight column to the
/// per-class sums of its timestep.
pub fn classify_events(classifier: &Classifier, width: Width, store: &AeqStore, potentials: &mut [i16], t: usize) {
    let dims = store.dims();
    let mut sums: Vec<i64> = classifier.bias.iter().map(|&b| b as i64).collect();
    for c in 0..store.channels() {
        for addr in store.bank(c, t).events() {
            let (r, col) = addr.global();
            let flat = (c * dims.height + r) * dims.width + col;
            for (class, sum) in sums.iter_mut().enumerate() {
                *sum += classifier.weight(class, flat) as i64;
            }
        }
    }
    for (p, &sum) in potentials.iter_mut().zip(&sums) {
        *p = width.add(*p, width.clamp_wide(sum).0).0;
    }
}

#[derive(Debug, Clone)]
pub struct EventRun {
    pub label: usize,
    pub class_potentials: Vec<i16>,
    pub input: AeqStore,
    pub outputs: Vec<AeqStore>,
    pub stats: NetworkStats,
}

pub fn run_network(net: &NetworkSpec, frame: &Frame, plan: &RunPlan) -> Result<EventRun, SimError> {
    run_network_with(net, frame, plan, &Sequential, None)
}

/// With a tracer, units always run sequentially so rows arrive in order.
pub fn run_network_with(
    net: &NetworkSpec,
    frame: &Frame,
    plan: &RunPlan,
    exec: &dyn UnitExecutor,
    mut tracer: Option<&mut dyn RunTracer>,
) -> Result<EventRun, SimError> {
    net.validate()?;
    let plans = build_neighbor_plans();
    let input = encode_input(net, frame)?;
    let mut outputs: Vec<AeqStore> = Vec::with_capacity(net.layers.len());
    let mut layer_stats = Vec::with_capacity(net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let src = outputs.last().unwrap_or(&input);
        let tr = tracer.as_mut().map(|t| &mut **t as &mut dyn RunTracer);
        let (store, stats) = run_layer(l, layer, net.width, src, plan, &plans, exec, tr)?;
        outputs.push(store);
        layer_stats.push(stats);
    }
    let last = outputs.last().expect("validated network has layers");
    let mut class_potentials = vec![0i16; net.classifier.classes];
    for t in 0..last.timesteps() {
        classify_events(&net.classifier, net.width, last, &mut class_potentials, t);
    }
    Ok(EventRun {
        label: argmax(&class_potentials),
        class_potentials,
        input,
        outputs,
        stats: NetworkStats::from_layers(plan.parallelism, layer_stats, plan.clock_mhz),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallelism_is_checked() {
        for p in ALLOWED_PARALLELISM {
            assert!(RunPlan::new(p).is_ok());
        }
        assert_eq!(RunPlan::new(3), Err(SimError::Parallelism(3)));
        assert!(RunPlan::new(0).is_err());
    }

    #[test]
    fn round_robin_assignment() {
        let p = RunPlan::new(4).unwrap();
        assert_eq!(p.assignment(6), vec![vec![0, 4], vec![1, 5], vec![2], vec![3]]);
        assert_eq!(p.assignment(2), vec![vec![0], vec![1]]);
        let all: usize = RunPlan::new(16).unwrap().assignment(40).iter().map(Vec::len).sum();
        assert_eq!(all, 40);
    }
}
