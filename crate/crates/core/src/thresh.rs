//! The five-stage thresholding unit: a stride-3 window scan that adds the
//! bias, fires neurons above threshold (or already spiking), writes them
//! back and emits their events, optionally OR-pooled to one event per tile.

use crate::aeq::{AeqBank, AeqError};
use crate::conv::InterlacedMemory;
use crate::fixed::Width;
use crate::interlace::{InterlacedAddress, MaxPoolCounters, COLUMNS};

/// Stage count of the unit; every scan costs `tiles + THRESH_PIPELINE_DEPTH`.
pub const THRESH_PIPELINE_DEPTH: u64 = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThreshStats {
    pub cycles: u64,
    pub tiles: u64,
    pub events: u64,
    pub saturations: u64,
}

impl ThreshStats {
    pub fn merge(&mut self, o: &ThreshStats) {
        self.cycles += o.cycles;
        self.tiles += o.tiles;
        self.events += o.events;
        self.saturations += o.saturations;
    }
}

pub fn apply_bias_saturating(window: &[i16; COLUMNS], bias: i16, width: Width) -> [i16; COLUMNS] {
    core::array::from_fn(|s| width.add(window[s], bias).0)
}

/// Spike indicators only ever get set within a sample.
#[inline]
pub fn spike_indicator_update(spiked: bool, fired: bool) -> bool {
    spiked || fired
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreshParams {
    pub bias: i16,
    pub threshold: i16,
    pub maxpool: bool,
}

/// Scans `mem` once. `bank` must be sized for the emitted map (pooled when
/// `maxpool` is set); it is left unfinalized.
pub fn threshold_channel(mem: &mut InterlacedMemory, params: ThreshParams, bank: &mut AeqBank) -> Result<ThreshStats, AeqError> {
    let dims = mem.dims();
    let width = mem.width();
    let mut stats = ThreshStats::default();
    for step in MaxPoolCounters::new(&dims) {
        let mut fired = [false; COLUMNS];
        for (s, fire) in fired.iter_mut().enumerate() {
            let addr = InterlacedAddress::new(step.i_mem, step.j_mem, s as u8);
            let cell = addr.cell_index(&dims);
            let (v, spiked) = mem.read_cell(s, cell);
            if !mem.is_real(&addr) {
                mem.write_cell(s, cell, v, spiked);
                continue;
            }
            let (v, clamp) = width.add(v, params.bias);
            stats.saturations += clamp.is_clamped() as u64;
            *fire = spike_indicator_update(spiked, v > params.threshold);
            mem.write_cell(s, cell, v, *fire);
        }
        let mut window = [None; COLUMNS];
        if params.maxpool {
            if fired.iter().any(|&f| f) {
                window[step.pooled.s as usize] = Some((step.pooled.i, step.pooled.j));
            }
        } else {
            for s in 0..COLUMNS {
                if fired[s] {
                    window[s] = Some((step.i_mem, step.j_mem));
                }
            }
        }
        stats.events += window.iter().flatten().count() as u64;
        bank.write_parallel(&window)?;
        stats.tiles += 1;
    }
    stats.cycles = stats.tiles + THRESH_PIPELINE_DEPTH;
    Ok(stats)
}
