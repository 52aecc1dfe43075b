//! Sparsity, cycle and utilization accounting.
//!
//! PE utilization counts only convolution-unit cycles: the nine adders are
//! busy exactly in the cycles a valid event is read. Thresholding cycles are
//! reported separately.

use alloc::vec::Vec;
use core::fmt;

use crate::conv::ConvStats;
use crate::thresh::ThreshStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsError {
    NoNeurons,
    NoCycles,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::NoNeurons => f.write_str("sparsity of an empty feature map is undefined"),
            MetricsError::NoCycles => f.write_str("utilization of a zero-cycle run is undefined"),
        }
    }
}

/// `1 - events / (neurons * timesteps)`.
pub fn sparsity(events: u64, neurons: u64, timesteps: u64) -> Result<f64, MetricsError> {
    let total = neurons * timesteps;
    if total == 0 {
        return Err(MetricsError::NoNeurons);
    }
    Ok(1.0 - events as f64 / total as f64)
}

/// Fraction of convolution cycles that processed a valid event.
pub fn pe_utilization(conv: &ConvStats) -> Result<f64, MetricsError> {
    if conv.cycles == 0 {
        return Err(MetricsError::NoCycles);
    }
    Ok(conv.valid_events as f64 / conv.cycles as f64)
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerStats {
    pub layer: usize,
    pub input_events: u64,
    pub input_neurons: u64,
    pub timesteps: u64,
    pub input_sparsity: f64,
    pub output_events: u64,
    pub conv: ConvStats,
    pub thresh: ThreshStats,
    /// Convolution plus thresholding cycles of each unit.
    pub unit_cycles: Vec<u64>,
    /// Slowest unit; the layer's simulated time.
    pub makespan_cycles: u64,
    pub pe_utilization: f64,
    /// Potential cells allocated across all units of this layer.
    pub mempot_cells: u64,
}

impl LayerStats {
    pub fn finish(&mut self) {
        self.input_sparsity = sparsity(self.input_events, self.input_neurons, self.timesteps).unwrap_or(1.0);
        self.pe_utilization = pe_utilization(&self.conv).unwrap_or(0.0);
        self.makespan_cycles = self.unit_cycles.iter().copied().max().unwrap_or(0);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkStats {
    pub parallelism: usize,
    pub layers: Vec<LayerStats>,
    pub conv_cycles: u64,
    pub thresh_cycles: u64,
    pub stalls: u64,
    pub wasted_reads: u64,
    pub events: u64,
    /// Sum of per-layer makespans: the simulated latency of one frame.
    pub total_cycles: u64,
    pub peak_mempot_cells: u64,
    pub estimated_fps: Option<f64>,
}

impl NetworkStats {
    pub fn from_layers(parallelism: usize, layers: Vec<LayerStats>, clock_mhz: Option<f64>) -> NetworkStats {
        let mut s = NetworkStats { parallelism, ..NetworkStats::default() };
        for l in &layers {
            s.conv_cycles += l.conv.cycles;
            s.thresh_cycles += l.thresh.cycles;
            s.stalls += l.conv.stalls;
            s.wasted_reads += l.conv.wasted_reads;
            s.events += l.input_events;
            s.total_cycles += l.makespan_cycles;
            s.peak_mempot_cells = s.peak_mempot_cells.max(l.mempot_cells);
        }
        s.layers = layers;
        s.estimated_fps = clock_mhz.filter(|_| s.total_cycles > 0).map(|mhz| mhz * 1e6 / s.total_cycles as f64);
        s
    }
}
