//! Dense containers: integer input frames and binary spike maps.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::aeq::AeqBank;
use crate::interlace::{to_interlaced, FmapDims, MaxPoolCounters, COLUMNS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameShapeError {
    pub expected: usize,
    pub got: usize,
}

impl fmt::Display for FrameShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "frame needs {} pixels, got {}", self.expected, self.got)
    }
}

/// Channel-major integer image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    channels: usize,
    dims: FmapDims,
    pixels: Vec<u16>,
}

impl Frame {
    pub fn new(channels: usize, dims: FmapDims, pixels: Vec<u16>) -> Result<Frame, FrameShapeError> {
        let expected = channels * dims.neurons();
        if pixels.len() != expected {
            return Err(FrameShapeError { expected, got: pixels.len() });
        }
        Ok(Frame { channels, dims, pixels })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> FmapDims {
        self.dims
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, c: usize, r: usize, col: usize) -> u16 {
        self.pixels[(c * self.dims.height + r) * self.dims.width + col]
    }
}

/// Binary feature map, channel-major then row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeMap {
    channels: usize,
    dims: FmapDims,
    bits: Vec<bool>,
}

impl SpikeMap {
    pub fn new(channels: usize, dims: FmapDims) -> SpikeMap {
        SpikeMap { channels, dims, bits: vec![false; channels * dims.neurons()] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> FmapDims {
        self.dims
    }

    #[inline]
    fn index(&self, c: usize, r: usize, col: usize) -> usize {
        (c * self.dims.height + r) * self.dims.width + col
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, col: usize) -> bool {
        self.bits[self.index(c, r, col)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, r: usize, col: usize, v: bool) {
        let k = self.index(c, r, col);
        self.bits[k] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn channel_count(&self, c: usize) -> usize {
        let n = self.dims.neurons();
        self.bits[c * n..(c + 1) * n].iter().filter(|&&b| b).count()
    }

    /// Row-major spike positions of one channel.
    pub fn positions(&self, c: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.dims.height {
            for col in 0..self.dims.width {
                if self.get(c, r, col) {
                    out.push((r, col));
                }
            }
        }
        out
    }

    /// OR over non-overlapping 3x3 windows; partial border windows only see
    /// their in-map cells.
    pub fn or_pool3(&self) -> SpikeMap {
        let pd = self.dims.pooled();
        let mut out = SpikeMap::new(self.channels, pd);
        for c in 0..self.channels {
            for r in 0..self.dims.height {
                for col in 0..self.dims.width {
                    if self.get(c, r, col) {
                        out.set(c, r / 3, col / 3, true);
                    }
                }
            }
        }
        out
    }

    /// `true` iff every spike present in `earlier` is also present here.
    pub fn contains_all(&self, earlier: &SpikeMap) -> bool {
        self.bits.len() == earlier.bits.len() && self.bits.iter().zip(&earlier.bits).all(|(&now, &then)| now || !then)
    }

    /// Writes one channel into an AEQ bank tile by tile in the thresholding
    /// scan order, one parallel write per tile.
    pub fn write_channel(&self, c: usize, bank: &mut AeqBank) -> Result<(), crate::aeq::AeqError> {
        for step in MaxPoolCounters::new(&self.dims) {
            let mut window = [None; COLUMNS];
            for dc in 0..3 {
                for dr in 0..3 {
                    let r = 3 * step.i_mem as usize + dr;
                    let col = 3 * step.j_mem as usize + dc;
                    if self.dims.contains(r, col) && self.get(c, r, col) {
                        let a = to_interlaced(r, col, &self.dims).expect("inside padded map");
                        window[a.s as usize] = Some((a.i, a.j));
                    }
                }
            }
            bank.write_parallel(&window)?;
        }
        Ok(())
    }
}
