//! The four-stage convolution unit.
//!
//! S1 computes the nine target addresses of an event, S2 reads MemPot and
//! selects the kernel permutation, S3 adds the weights with saturation, S4
//! writes back. Reads issued in S2 see memory as it was before the S4 write
//! of the same cycle, so an S2/S4 address match is served by forwarding and
//! an S2/S3 match stalls S1, S2 and the queue for one cycle.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::iter::Peekable;

use crate::aeq::ReadOut;
use crate::fixed::Width;
use crate::interlace::{FmapDims, InterlacedAddress, NeighborPlan, NeighborPlans, COLUMNS};
use crate::model::KernelSize;

/// Cycles from the last queue read until its write-back completes, plus the
/// read itself: one per pipeline stage.
pub const CONV_PIPELINE_DEPTH: u64 = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessCounters {
    pub reads: u64,
    pub writes: u64,
}

/// One output channel's membrane potentials and spike indicators spread over
/// nine column memories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterlacedMemory {
    dims: FmapDims,
    width: Width,
    potentials: [Vec<i16>; COLUMNS],
    spiked: [Vec<bool>; COLUMNS],
    pub access: AccessCounters,
}

impl InterlacedMemory {
    pub fn new(dims: FmapDims, width: Width) -> InterlacedMemory {
        let cells = dims.tiles();
        InterlacedMemory {
            dims,
            width,
            potentials: core::array::from_fn(|_| vec![0; cells]),
            spiked: core::array::from_fn(|_| vec![false; cells]),
            access: AccessCounters::default(),
        }
    }

    pub fn dims(&self) -> FmapDims {
        self.dims
    }

    pub fn width(&self) -> Width {
        self.width
    }

    /// Cells held across all nine columns, padding included.
    pub fn cells(&self) -> usize {
        COLUMNS * self.dims.tiles()
    }

    /// Start of a new output channel or sample.
    pub fn reset(&mut self) {
        for c in 0..COLUMNS {
            self.potentials[c].iter_mut().for_each(|v| *v = 0);
            self.spiked[c].iter_mut().for_each(|v| *v = false);
        }
    }

    /// `false` for the padding cells that complete partial border tiles.
    pub fn is_real(&self, addr: &InterlacedAddress) -> bool {
        let (r, c) = addr.global();
        self.dims.contains(r, c)
    }

    #[inline]
    pub fn potential(&self, addr: &InterlacedAddress) -> i16 {
        self.potentials[addr.s as usize][addr.cell_index(&self.dims)]
    }

    #[inline]
    pub fn spiked(&self, addr: &InterlacedAddress) -> bool {
        self.spiked[addr.s as usize][addr.cell_index(&self.dims)]
    }

    #[inline]
    pub(crate) fn read_cell(&mut self, s: usize, cell: usize) -> (i16, bool) {
        self.access.reads += 1;
        (self.potentials[s][cell], self.spiked[s][cell])
    }

    #[inline]
    pub(crate) fn write_cell(&mut self, s: usize, cell: usize, v: i16, spiked: bool) {
        self.access.writes += 1;
        self.potentials[s][cell] = v;
        self.spiked[s][cell] = spiked;
    }

    #[inline]
    fn read_potential(&mut self, s: usize, cell: usize) -> i16 {
        self.access.reads += 1;
        self.potentials[s][cell]
    }

    #[inline]
    fn write_potential(&mut self, s: usize, cell: usize, v: i16) {
        self.access.writes += 1;
        self.potentials[s][cell] = v;
    }

    /// Potentials of the real neurons in row-major global order.
    pub fn to_grid(&self) -> Vec<i16> {
        let mut out = Vec::with_capacity(self.dims.neurons());
        for r in 0..self.dims.height {
            for c in 0..self.dims.width {
                let a = crate::interlace::to_interlaced(r, c, &self.dims).expect("in map");
                out.push(self.potential(&a));
            }
        }
        out
    }

    /// Loads row-major potentials for the real neurons.
    pub fn load_grid(&mut self, grid: &[i16]) {
        assert_eq!(grid.len(), self.dims.neurons());
        for r in 0..self.dims.height {
            for c in 0..self.dims.width {
                let a = crate::interlace::to_interlaced(r, c, &self.dims).expect("in map");
                let cell = a.cell_index(&self.dims);
                self.potentials[a.s as usize][cell] = grid[r * self.dims.width + c];
            }
        }
    }
}

/// Nine weights aligned to memory columns `0..9` for events of one input
/// column: column `s_mem` receives the rotated-kernel element named by the
/// plan.
pub fn permute_kernel(kernel: &[i16], plan: &NeighborPlan) -> [i16; COLUMNS] {
    debug_assert_eq!(kernel.len(), 9);
    // rotating a row-major 3x3 kernel by 180 degrees reverses it
    core::array::from_fn(|s_mem| kernel[8 - plan.entries[s_mem].kernel_slot as usize])
}

/// A kernel prepared for the unit: every input column's permutation, or the
/// single weight of a pointwise layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PreparedKernel {
    Pointwise(i16),
    Window([[i16; COLUMNS]; COLUMNS]),
}

impl PreparedKernel {
    pub fn new(size: KernelSize, kernel: &[i16], plans: &NeighborPlans) -> PreparedKernel {
        match size {
            KernelSize::One => PreparedKernel::Pointwise(kernel[0]),
            KernelSize::Three => PreparedKernel::Window(core::array::from_fn(|s| permute_kernel(kernel, plans.plan(s as u8)))),
        }
    }
}

type Targets = [Option<u32>; COLUMNS];

/// Address calculation (S1): per memory column, the cell index of the
/// target, or `None` when the target is out of bounds or not touched.
fn calc_targets(ev: &InterlacedAddress, kernel: &PreparedKernel, plans: &NeighborPlans, dims: &FmapDims) -> (Targets, [i16; COLUMNS]) {
    let mut targets = [None; COLUMNS];
    match kernel {
        PreparedKernel::Pointwise(w) => {
            let (r, c) = ev.global();
            if dims.contains(r, c) {
                targets[ev.s as usize] = Some(ev.cell_index(dims) as u32);
            }
            let mut weights = [0; COLUMNS];
            weights[ev.s as usize] = *w;
            (targets, weights)
        }
        PreparedKernel::Window(perms) => {
            for (s_mem, t) in plans.targets(ev, dims).iter().enumerate() {
                targets[s_mem] = t.map(|a| a.cell_index(dims) as u32);
            }
            (targets, perms[ev.s as usize])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hazard {
    None,
    /// Bit `s` set: column `s` takes S4's result instead of the memory read.
    Forward(u16),
    /// Bit `s` set: column `s` is still being computed in S3.
    Stall(u16),
}

/// Compares the read addresses in S2 against S3 and S4, column by column.
pub fn detect_hazards(s2: &[Option<u32>; COLUMNS], s3: Option<&[Option<u32>; COLUMNS]>, s4: Option<&[Option<u32>; COLUMNS]>) -> Hazard {
    let mut stall = 0u16;
    let mut forward = 0u16;
    for s in 0..COLUMNS {
        let Some(addr) = s2[s] else { continue };
        if s3.is_some_and(|t| t[s] == Some(addr)) {
            stall |= 1 << s;
        } else if s4.is_some_and(|t| t[s] == Some(addr)) {
            forward |= 1 << s;
        }
    }
    if stall != 0 {
        Hazard::Stall(stall)
    } else if forward != 0 {
        Hazard::Forward(forward)
    } else {
        Hazard::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PipelineMode {
    /// Hazard detection with forwarding and stalls.
    #[default]
    Protected,
    /// No detection: S2 may read stale potentials.
    Unprotected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvStats {
    pub cycles: u64,
    pub valid_events: u64,
    pub wasted_reads: u64,
    pub stalls: u64,
    pub wind_up: u64,
    pub forwards: u64,
    pub saturations: u64,
    pub activations: u64,
}

impl ConvStats {
    pub fn merge(&mut self, o: &ConvStats) {
        self.cycles += o.cycles;
        self.valid_events += o.valid_events;
        self.wasted_reads += o.wasted_reads;
        self.stalls += o.stalls;
        self.wind_up += o.wind_up;
        self.forwards += o.forwards;
        self.saturations += o.saturations;
        self.activations += o.activations;
    }

    /// `cycles == valid + wasted + stalls + wind_up`.
    pub fn is_closed(&self) -> bool {
        self.cycles == self.valid_events + self.wasted_reads + self.stalls + self.wind_up
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageView {
    Empty,
    Invalid,
    Event(InterlacedAddress),
}

impl fmt::Display for StageView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageView::Empty => f.write_str("-"),
            StageView::Invalid => f.write_str("inv"),
            StageView::Event(a) => write!(f, "{a}"),
        }
    }
}

/// Pipeline occupancy during one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub cycle: u64,
    pub stages: [StageView; 4],
    pub stall: bool,
}

impl fmt::Display for TraceRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cyc={} S1={} S2={} S3={} S4={} stall={}",
            self.cycle, self.stages[0], self.stages[1], self.stages[2], self.stages[3], self.stall as u8
        )
    }
}

pub trait ConvTrace {
    fn row(&mut self, row: &TraceRow);
}

pub struct NoTrace;

impl ConvTrace for NoTrace {
    #[inline]
    fn row(&mut self, _row: &TraceRow) {}
}

impl ConvTrace for Vec<TraceRow> {
    fn row(&mut self, row: &TraceRow) {
        self.push(*row);
    }
}

#[derive(Debug, Clone, Copy)]
struct Token {
    event: Option<InterlacedAddress>,
    targets: Targets,
    weights: [i16; COLUMNS],
    operands: [i16; COLUMNS],
}

impl Token {
    fn view(slot: &Option<Token>) -> StageView {
        match slot {
            None => StageView::Empty,
            Some(Token { event: None, .. }) => StageView::Invalid,
            Some(Token { event: Some(a), .. }) => StageView::Event(*a),
        }
    }

    fn live_targets(slot: &Option<Token>) -> Option<&Targets> {
        slot.as_ref().filter(|t| t.event.is_some()).map(|t| &t.targets)
    }
}

/// Cycle-level convolution unit for one queue activation.
pub struct ConvUnit<'p> {
    plans: &'p NeighborPlans,
    mode: PipelineMode,
}

impl<'p> ConvUnit<'p> {
    pub fn new(plans: &'p NeighborPlans, mode: PipelineMode) -> ConvUnit<'p> {
        ConvUnit { plans, mode }
    }

    /// Drains `reads` through the pipeline, updating `mem`.
    pub fn run<I, T>(&self, mem: &mut InterlacedMemory, reads: I, kernel: &PreparedKernel, trace: &mut T) -> ConvStats
    where
        I: IntoIterator<Item = ReadOut>,
        T: ConvTrace + ?Sized,
    {
        let mut source: Peekable<I::IntoIter> = reads.into_iter().peekable();
        let mut stats = ConvStats::default();
        if source.peek().is_none() {
            return stats;
        }
        stats.activations = 1;
        stats.wind_up = CONV_PIPELINE_DEPTH;
        let dims = mem.dims();
        let width = mem.width();
        // s[0] = S1 .. s[3] = S4
        let mut s: [Option<Token>; 4] = [None; 4];
        // results computed by S3 last cycle, now held by S4
        let mut s4_results = [0i16; COLUMNS];
        loop {
            if source.peek().is_none() && s.iter().all(Option::is_none) {
                break;
            }
            let hazard = match Token::live_targets(&s[1]) {
                Some(t2) if self.mode == PipelineMode::Protected => {
                    detect_hazards(t2, Token::live_targets(&s[2]), Token::live_targets(&s[3]))
                }
                _ => Hazard::None,
            };
            let stall = matches!(hazard, Hazard::Stall(_));
            trace.row(&TraceRow {
                cycle: stats.cycles,
                stages: [Token::view(&s[0]), Token::view(&s[1]), Token::view(&s[2]), Token::view(&s[3])],
                stall,
            });

            // S3: add weights to the operands fetched last cycle
            let mut s3_results = [0i16; COLUMNS];
            if let Some(tok) = &s[2] {
                if tok.event.is_some() {
                    for (c, out) in s3_results.iter_mut().enumerate() {
                        if tok.targets[c].is_some() {
                            let (v, clamp) = width.add(tok.operands[c], tok.weights[c]);
                            *out = v;
                            stats.saturations += clamp.is_clamped() as u64;
                        }
                    }
                }
            }

            // S2: fetch operands, bypassing from S4 where it is writing the same cell
            if !stall {
                if let Some(tok) = &mut s[1] {
                    if tok.event.is_some() {
                        let fwd = match hazard {
                            Hazard::Forward(mask) => mask,
                            _ => 0,
                        };
                        for (c, (op, target)) in tok.operands.iter_mut().zip(tok.targets).enumerate() {
                            if let Some(cell) = target {
                                *op = if fwd & (1 << c) != 0 {
                                    stats.forwards += 1;
                                    s4_results[c]
                                } else {
                                    mem.read_potential(c, cell as usize)
                                };
                            }
                        }
                    }
                }
            }

            // S4: write back
            if let Some(tok) = &s[3] {
                if tok.event.is_some() {
                    for (c, (target, &v)) in tok.targets.iter().zip(&s4_results).enumerate() {
                        if let Some(cell) = target {
                            mem.write_potential(c, *cell as usize, v);
                        }
                    }
                }
            }

            s[3] = s[2].take();
            s4_results = s3_results;
            if stall {
                stats.stalls += 1;
            } else {
                s[2] = s[1].take();
                s[1] = s[0].take();
                s[0] = source.next().map(|read| {
                    let event = read.event();
                    match &event {
                        Some(ev) => {
                            stats.valid_events += 1;
                            let (targets, weights) = calc_targets(ev, kernel, self.plans, &dims);
                            Token { event, targets, weights, operands: [0; COLUMNS] }
                        }
                        None => {
                            stats.wasted_reads += 1;
                            Token { event, targets: [None; COLUMNS], weights: [0; COLUMNS], operands: [0; COLUMNS] }
                        }
                    }
                });
            }
            stats.cycles += 1;
        }
        stats
    }
}

/// Non-pipelined reference: every event applied to completion before the
/// next is read. Cycle fields are left at zero.
pub fn conv_functional<I>(mem: &mut InterlacedMemory, reads: I, kernel: &PreparedKernel, plans: &NeighborPlans) -> ConvStats
where
    I: IntoIterator<Item = ReadOut>,
{
    let dims = mem.dims();
    let width = mem.width();
    let mut stats = ConvStats::default();
    for read in reads {
        let Some(ev) = read.event() else {
            stats.wasted_reads += 1;
            continue;
        };
        stats.valid_events += 1;
        let (targets, weights) = calc_targets(&ev, kernel, plans, &dims);
        for c in 0..COLUMNS {
            if let Some(cell) = targets[c] {
                let old = mem.read_potential(c, cell as usize);
                let (v, clamp) = width.add(old, weights[c]);
                stats.saturations += clamp.is_clamped() as u64;
                mem.write_potential(c, cell as usize, v);
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aeq::{AeqBank, QueueEntry};
    use crate::interlace::{build_neighbor_plans, to_interlaced};

    fn read(a: InterlacedAddress) -> ReadOut {
        ReadOut { column: a.s, entry: QueueEntry { i: a.i, j: a.j, valid: true, end_of_queue: false } }
    }

    fn global_event(r: usize, c: usize, d: &FmapDims) -> ReadOut {
        read(to_interlaced(r, c, d).unwrap())
    }

    #[test]
    fn empty_bank_costs_nine_wasted_reads_plus_depth() {
        let plans = build_neighbor_plans();
        let d = FmapDims::new(9, 9);
        let mut mem = InterlacedMemory::new(d, Width::W8);
        let mut bank = AeqBank::for_fmap(&d);
        bank.finalize().unwrap();
        let k = PreparedKernel::new(KernelSize::Three, &[1; 9], &plans);
        let st = ConvUnit::new(&plans, PipelineMode::Protected).run(&mut mem, bank.reader().unwrap(), &k, &mut NoTrace);
        assert_eq!(st.wasted_reads, 9);
        assert_eq!(st.cycles, 9 + CONV_PIPELINE_DEPTH);
        assert!(mem.to_grid().iter().all(|&v| v == 0));
    }

    #[test]
    fn column_switch_overlap_stalls_once() {
        let plans = build_neighbor_plans();
        let d = FmapDims::new(6, 6);
        let stream = [read(InterlacedAddress::new(0, 0, 5)), read(InterlacedAddress::new(0, 1, 1))];
        let t2 = calc_targets(&stream[1].event().unwrap(), &PreparedKernel::new(KernelSize::Three, &[1; 9], &plans), &plans, &d).0;
        let t3 = calc_targets(&stream[0].event().unwrap(), &PreparedKernel::new(KernelSize::Three, &[1; 9], &plans), &plans, &d).0;
        assert_eq!(detect_hazards(&t2, Some(&t3), None), Hazard::Stall((1 << 7) | (1 << 8)));
        assert_eq!(detect_hazards(&t2, None, Some(&t3)), Hazard::Forward((1 << 7) | (1 << 8)));

        let mut mem = InterlacedMemory::new(d, Width::W16);
        let k = PreparedKernel::new(KernelSize::Three, &[1; 9], &plans);
        let mut rows: Vec<TraceRow> = Vec::new();
        let st = ConvUnit::new(&plans, PipelineMode::Protected).run(&mut mem, stream, &k, &mut rows);
        assert_eq!(st.stalls, 1);
        assert_eq!(st.forwards, 2);
        assert_eq!(st.cycles, 2 + 1 + CONV_PIPELINE_DEPTH);
        assert_eq!(rows.iter().filter(|r| r.stall).count(), 1);
        // overlapping cells (1,2) and (2,2) received both updates
        let g = mem.to_grid();
        assert_eq!(g[6 + 2], 2);
        assert_eq!(g[2 * 6 + 2], 2);
    }

    #[test]
    fn unprotected_pipeline_loses_updates_on_overlap() {
        let plans = build_neighbor_plans();
        let d = FmapDims::new(6, 6);
        let stream = [read(InterlacedAddress::new(0, 0, 5)), read(InterlacedAddress::new(0, 1, 1))];
        let k = PreparedKernel::new(KernelSize::Three, &[1; 9], &plans);
        let mut mem = InterlacedMemory::new(d, Width::W16);
        ConvUnit::new(&plans, PipelineMode::Unprotected).run(&mut mem, stream, &k, &mut NoTrace);
        let g = mem.to_grid();
        assert_eq!(g[6 + 2], 1);
    }

    #[test]
    fn same_column_stream_never_stalls() {
        let plans = build_neighbor_plans();
        let d = FmapDims::new(12, 12);
        for s in 0..9u8 {
            let stream: Vec<_> = (0..4u16).flat_map(|j| (0..4u16).map(move |i| read(InterlacedAddress::new(i, j, s)))).collect();
            let k = PreparedKernel::new(KernelSize::Three, &[3; 9], &plans);
            let mut mem = InterlacedMemory::new(d, Width::W16);
            let st = ConvUnit::new(&plans, PipelineMode::Protected).run(&mut mem, stream.clone(), &k, &mut NoTrace);
            assert_eq!(st.stalls, 0);
            let mut plain = InterlacedMemory::new(d, Width::W16);
            ConvUnit::new(&plans, PipelineMode::Unprotected).run(&mut plain, stream, &k, &mut NoTrace);
            assert_eq!(mem.to_grid(), plain.to_grid());
        }
    }

    #[test]
    fn permutations_are_bijective_and_distinct() {
        let plans = build_neighbor_plans();
        let kernel: Vec<i16> = (10..19).collect();
        let mut perms = Vec::new();
        for p in plans.iter() {
            let perm = permute_kernel(&kernel, p);
            let mut sorted = perm;
            sorted.sort_unstable();
            assert_eq!(sorted.to_vec(), kernel);
            perms.push(perm);
        }
        for a in 0..9 {
            for b in a + 1..9 {
                assert_ne!(perms[a], perms[b]);
            }
        }
        let flat = permute_kernel(&[7; 9], plans.plan(3));
        assert_eq!(flat, [7; 9]);
    }

    #[test]
    fn single_event_in_center_writes_rotated_kernel() {
        let plans = build_neighbor_plans();
        let d = FmapDims::new(3, 3);
        let kernel: Vec<i16> = (1..=9).collect();
        let k = PreparedKernel::new(KernelSize::Three, &kernel, &plans);
        let mut mem = InterlacedMemory::new(d, Width::W16);
        ConvUnit::new(&plans, PipelineMode::Protected).run(&mut mem, [global_event(1, 1, &d)], &k, &mut NoTrace);
        assert_eq!(mem.to_grid(), vec![9, 8, 7, 6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn pointwise_kernel_touches_only_the_event() {
        let plans = build_neighbor_plans();
        let d = FmapDims::new(4, 5);
        let k = PreparedKernel::new(KernelSize::One, &[-3], &plans);
        let mut mem = InterlacedMemory::new(d, Width::W8);
        let stream = [global_event(3, 4, &d), global_event(0, 0, &d), global_event(3, 4, &d)];
        let st = ConvUnit::new(&plans, PipelineMode::Protected).run(&mut mem, stream, &k, &mut NoTrace);
        let g = mem.to_grid();
        assert_eq!(g[3 * 5 + 4], -6);
        assert_eq!(g[0], -3);
        assert_eq!(g.iter().filter(|&&v| v != 0).count(), 2);
        assert!(st.is_closed());
    }

    #[test]
    fn trace_line_format() {
        let row = TraceRow {
            cycle: 3,
            stages: [StageView::Event(InterlacedAddress::new(1, 2, 4)), StageView::Invalid, StageView::Empty, StageView::Empty],
            stall: true,
        };
        assert_eq!(alloc::format!("{row}"), "cyc=3 S1=(1,2)[4] S2=inv S3=- S4=- stall=1");
    }
}
