//! Memory interlacing: the mapping of a 2D feature map onto nine column
//! memories such that every 3x3 window touches each column exactly once.
//!
//! A cell at global `(row, col)` lives in tile `(row / 3, col / 3)` of column
//! `s = 3 * (col % 3) + (row % 3)`. Tiles are addressed `(i, j)[s]`.

use core::fmt;

pub const COLUMNS: usize = 9;

/// Unpadded spatial size of a feature map, in neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FmapDims {
    pub height: usize,
    pub width: usize,
}

impl FmapDims {
    pub const fn new(height: usize, width: usize) -> FmapDims {
        FmapDims { height, width }
    }

    /// Tile rows, i.e. the height rounded up to a whole number of tiles.
    pub const fn tile_rows(&self) -> usize {
        self.height.div_ceil(3)
    }

    pub const fn tile_cols(&self) -> usize {
        self.width.div_ceil(3)
    }

    pub const fn tiles(&self) -> usize {
        self.tile_rows() * self.tile_cols()
    }

    pub const fn padded_height(&self) -> usize {
        self.tile_rows() * 3
    }

    pub const fn padded_width(&self) -> usize {
        self.tile_cols() * 3
    }

    pub const fn neurons(&self) -> usize {
        self.height * self.width
    }

    /// Dimensions after non-overlapping 3x3 pooling.
    pub const fn pooled(&self) -> FmapDims {
        FmapDims { height: self.tile_rows(), width: self.tile_cols() }
    }

    pub const fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width
    }
}

impl fmt::Display for FmapDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// `(i, j)[s]`: tile row, tile column and interlace column of one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterlacedAddress {
    pub i: u16,
    pub j: u16,
    pub s: u8,
}

impl InterlacedAddress {
    pub const fn new(i: u16, j: u16, s: u8) -> InterlacedAddress {
        InterlacedAddress { i, j, s }
    }

    /// Global `(row, col)` of this address in the padded map.
    pub const fn global(&self) -> (usize, usize) {
        let s = self.s as usize;
        (3 * self.i as usize + s % 3, 3 * self.j as usize + s / 3)
    }

    /// Index of the addressed cell inside its column memory.
    pub const fn cell_index(&self, dims: &FmapDims) -> usize {
        self.j as usize * dims.tile_rows() + self.i as usize
    }
}

impl fmt::Display for InterlacedAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})[{}]", self.i, self.j, self.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutsideFmap {
    pub row: usize,
    pub col: usize,
    pub dims: FmapDims,
}

impl fmt::Display for OutsideFmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}) lies outside the padded {} map", self.row, self.col, self.dims)
    }
}

pub const fn column_of(row: usize, col: usize) -> u8 {
    (3 * (col % 3) + row % 3) as u8
}

/// Maps a global coordinate of the padded map to its interlaced address.
pub fn to_interlaced(row: usize, col: usize, dims: &FmapDims) -> Result<InterlacedAddress, OutsideFmap> {
    if row >= dims.padded_height() || col >= dims.padded_width() {
        return Err(OutsideFmap { row, col, dims: *dims });
    }
    Ok(InterlacedAddress { i: (row / 3) as u16, j: (col / 3) as u16, s: column_of(row, col) })
}

pub const fn from_interlaced(addr: &InterlacedAddress) -> (usize, usize) {
    addr.global()
}

/// Where one memory column's operand comes from for a given input column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanEntry {
    pub di: i8,
    pub dj: i8,
    /// Row-major position inside the 180-degree rotated kernel.
    pub kernel_slot: u8,
}

/// Address calculation and kernel permutation for events of one input column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborPlan {
    pub s_in: u8,
    pub entries: [PlanEntry; COLUMNS],
}

/// The nine plans, indexed by input column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborPlans {
    plans: [NeighborPlan; COLUMNS],
}

/// Derives all nine plans by placing a center of each input column inside an
/// interior tile and reading off where every window element lands.
pub fn build_neighbor_plans() -> NeighborPlans {
    let empty = PlanEntry { di: 0, dj: 0, kernel_slot: u8::MAX };
    let mut plans = [NeighborPlan { s_in: 0, entries: [empty; COLUMNS] }; COLUMNS];
    for (s_in, plan) in plans.iter_mut().enumerate() {
        plan.s_in = s_in as u8;
        let row = 3 + s_in % 3;
        let col = 3 + s_in / 3;
        for dr in 0..3usize {
            for dc in 0..3usize {
                let tr = row + dr - 1;
                let tc = col + dc - 1;
                let s_mem = column_of(tr, tc) as usize;
                let entry = &mut plan.entries[s_mem];
                assert_eq!(entry.kernel_slot, u8::MAX, "window hits column {s_mem} twice");
                *entry = PlanEntry { di: (tr / 3) as i8 - 1, dj: (tc / 3) as i8 - 1, kernel_slot: (dr * 3 + dc) as u8 };
            }
        }
    }
    NeighborPlans { plans }
}

impl NeighborPlans {
    pub fn plan(&self, s_in: u8) -> &NeighborPlan {
        &self.plans[s_in as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeighborPlan> {
        self.plans.iter()
    }

    /// Per memory column, the in-bounds target of an event at `addr`.
    pub fn targets(&self, addr: &InterlacedAddress, dims: &FmapDims) -> [Option<InterlacedAddress>; COLUMNS] {
        let plan = self.plan(addr.s);
        let mut out = [None; COLUMNS];
        for (s_mem, entry) in plan.entries.iter().enumerate() {
            out[s_mem] = resolve(addr, s_mem as u8, entry, dims);
        }
        out
    }
}

/// Applies a plan entry, returning `None` when the target underflows the
/// tile grid or lands outside the unpadded map.
pub fn resolve(addr: &InterlacedAddress, s_mem: u8, entry: &PlanEntry, dims: &FmapDims) -> Option<InterlacedAddress> {
    let i = addr.i.checked_add_signed(entry.di as i16)?;
    let j = addr.j.checked_add_signed(entry.dj as i16)?;
    let target = InterlacedAddress { i, j, s: s_mem };
    let (row, col) = target.global();
    dims.contains(row, col).then_some(target)
}

pub fn check_bounds(addr: &InterlacedAddress, s_mem: u8, entry: &PlanEntry, dims: &FmapDims) -> bool {
    resolve(addr, s_mem, entry, dims).is_some()
}

/// One step of the thresholding scan: the MemPot tile being visited and the
/// address its pooled event would carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PooledStep {
    pub i_mem: u16,
    pub j_mem: u16,
    pub pooled: InterlacedAddress,
}

/// Visits every tile (tile row inner, tile column outer) and tracks the
/// pooled address with four wrap-around counters instead of divisions.
#[derive(Debug, Clone)]
pub struct MaxPoolCounters {
    i_max: u16,
    j_max: u16,
    i_mem: u16,
    j_mem: u16,
    s_out_i: u8,
    s_out_j: u8,
    i_out: u16,
    j_out: u16,
    done: bool,
}

impl MaxPoolCounters {
    pub fn new(dims: &FmapDims) -> MaxPoolCounters {
        let done = dims.tiles() == 0;
        MaxPoolCounters {
            i_max: dims.tile_rows().saturating_sub(1) as u16,
            j_max: dims.tile_cols().saturating_sub(1) as u16,
            i_mem: 0,
            j_mem: 0,
            s_out_i: 0,
            s_out_j: 0,
            i_out: 0,
            j_out: 0,
            done,
        }
    }
}

impl Iterator for MaxPoolCounters {
    type Item = PooledStep;

    fn next(&mut self) -> Option<PooledStep> {
        if self.done {
            return None;
        }
        let step = PooledStep {
            i_mem: self.i_mem,
            j_mem: self.j_mem,
            pooled: InterlacedAddress { i: self.i_out, j: self.j_out, s: self.s_out_i + self.s_out_j },
        };
        if self.i_mem == self.i_max {
            self.s_out_i = 0;
            self.i_out = 0;
            if self.s_out_j == 6 {
                self.s_out_j = 0;
                self.j_out += 1;
            } else {
                self.s_out_j += 3;
            }
            self.i_mem = 0;
            if self.j_mem == self.j_max {
                self.done = true;
            } else {
                self.j_mem += 1;
            }
        } else {
            if self.s_out_i == 2 {
                self.s_out_i = 0;
                self.i_out += 1;
            } else {
                self.s_out_i += 1;
            }
            self.i_mem += 1;
        }
        Some(step)
    }
}
