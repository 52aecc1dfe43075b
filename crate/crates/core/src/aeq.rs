//! Address event queues.
//!
//! One [`AeqBank`] holds the events of a single (channel, timestep) pair in
//! nine interlaced columns. Writes happen in parallel, up to one event per
//! column per call; reads drain column 0 through 8 one entry per cycle.

use alloc::vec::Vec;
use core::fmt;

use crate::interlace::{FmapDims, InterlacedAddress, COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueEntry {
    pub i: u16,
    pub j: u16,
    pub valid: bool,
    pub end_of_queue: bool,
}

impl QueueEntry {
    const TERMINATOR: QueueEntry = QueueEntry { i: 0, j: 0, valid: false, end_of_queue: true };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AeqError {
    CapacityExceeded { column: u8, capacity: usize },
    AlreadyFinalized,
    NotFinalized,
}

impl fmt::Display for AeqError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AeqError::CapacityExceeded { column, capacity } => {
                write!(f, "AEQ column {column} exceeded its capacity of {capacity} entries")
            }
            AeqError::AlreadyFinalized => f.write_str("AEQ bank was already finalized"),
            AeqError::NotFinalized => f.write_str("AEQ bank read before it was finalized"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AeqBank {
    columns: [Vec<QueueEntry>; COLUMNS],
    capacity: usize,
    finalized: bool,
}

impl AeqBank {
    pub fn new(capacity: usize) -> AeqBank {
        AeqBank { columns: Default::default(), capacity, finalized: false }
    }

    /// Default capacity: one entry per tile, the worst case of a fully
    /// spiking channel.
    pub fn for_fmap(dims: &FmapDims) -> AeqBank {
        AeqBank::new(dims.tiles())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Appends `events[s]` (a tile address) to column `s` for every present entry.
    pub fn write_parallel(&mut self, events: &[Option<(u16, u16)>; COLUMNS]) -> Result<(), AeqError> {
        if self.finalized {
            return Err(AeqError::AlreadyFinalized);
        }
        for (s, ev) in events.iter().enumerate() {
            if ev.is_some() && self.columns[s].len() >= self.capacity {
                return Err(AeqError::CapacityExceeded { column: s as u8, capacity: self.capacity });
            }
        }
        for (s, ev) in events.iter().enumerate() {
            if let Some((i, j)) = *ev {
                self.columns[s].push(QueueEntry { i, j, valid: true, end_of_queue: false });
            }
        }
        Ok(())
    }

    pub fn push(&mut self, addr: InterlacedAddress) -> Result<(), AeqError> {
        let mut events = [None; COLUMNS];
        events[addr.s as usize] = Some((addr.i, addr.j));
        self.write_parallel(&events)
    }

    /// Marks the end of every column; empty columns receive a single invalid
    /// terminator entry.
    pub fn finalize(&mut self) -> Result<(), AeqError> {
        if self.finalized {
            return Err(AeqError::AlreadyFinalized);
        }
        for col in self.columns.iter_mut() {
            match col.last_mut() {
                Some(last) => last.end_of_queue = true,
                None => col.push(QueueEntry::TERMINATOR),
            }
        }
        self.finalized = true;
        Ok(())
    }

    pub fn column(&self, s: u8) -> &[QueueEntry] {
        &self.columns[s as usize]
    }

    /// Number of valid events per column.
    pub fn write_counts(&self) -> [usize; COLUMNS] {
        core::array::from_fn(|s| self.columns[s].iter().filter(|e| e.valid).count())
    }

    pub fn event_count(&self) -> usize {
        self.write_counts().iter().sum()
    }

    pub fn empty_columns(&self) -> usize {
        self.write_counts().iter().filter(|&&n| n == 0).count()
    }

    /// Valid events in read order.
    pub fn events(&self) -> impl Iterator<Item = InterlacedAddress> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(s, col)| col.iter().filter(|e| e.valid).map(move |e| InterlacedAddress::new(e.i, e.j, s as u8)))
    }

    pub fn reader(&self) -> Result<AeqReader<'_>, AeqError> {
        if !self.finalized {
            return Err(AeqError::NotFinalized);
        }
        Ok(AeqReader { bank: self, column: 0, pos: 0 })
    }
}

/// One read cycle of the queue logic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadOut {
    pub column: u8,
    pub entry: QueueEntry,
}

impl ReadOut {
    pub fn event(&self) -> Option<InterlacedAddress> {
        self.entry.valid.then(|| InterlacedAddress::new(self.entry.i, self.entry.j, self.column))
    }
}

/// Sequential read logic: a column-select counter plus one read counter.
/// Every call to `next` costs one cycle; `None` means column 8 is drained.
#[derive(Debug, Clone)]
pub struct AeqReader<'a> {
    bank: &'a AeqBank,
    column: u8,
    pos: usize,
}

impl AeqReader<'_> {
    pub fn column_select(&self) -> u8 {
        self.column
    }
}

impl Iterator for AeqReader<'_> {
    type Item = ReadOut;

    fn next(&mut self) -> Option<ReadOut> {
        if self.column as usize >= COLUMNS {
            return None;
        }
        let entry = self.bank.columns[self.column as usize][self.pos];
        let out = ReadOut { column: self.column, entry };
        if entry.end_of_queue {
            self.column += 1;
            self.pos = 0;
        } else {
            self.pos += 1;
        }
        Some(out)
    }
}

/// All banks of one layer output, keyed by (channel, timestep).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AeqStore {
    channels: usize,
    timesteps: usize,
    dims: FmapDims,
    banks: Vec<AeqBank>,
}

impl AeqStore {
    pub fn new(channels: usize, timesteps: usize, dims: FmapDims) -> AeqStore {
        let banks = (0..channels * timesteps).map(|_| AeqBank::for_fmap(&dims)).collect();
        AeqStore { channels, timesteps, dims, banks }
    }

    pub fn with_capacity(channels: usize, timesteps: usize, dims: FmapDims, capacity: usize) -> AeqStore {
        let banks = (0..channels * timesteps).map(|_| AeqBank::new(capacity)).collect();
        AeqStore { channels, timesteps, dims, banks }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn dims(&self) -> FmapDims {
        self.dims
    }

    pub fn bank(&self, channel: usize, t: usize) -> &AeqBank {
        &self.banks[channel * self.timesteps + t]
    }

    pub fn bank_mut(&mut self, channel: usize, t: usize) -> &mut AeqBank {
        &mut self.banks[channel * self.timesteps + t]
    }

    pub(crate) fn replace_channel(&mut self, channel: usize, banks: Vec<AeqBank>) {
        debug_assert_eq!(banks.len(), self.timesteps);
        for (t, bank) in banks.into_iter().enumerate() {
            self.banks[channel * self.timesteps + t] = bank;
        }
    }

    pub fn total_events(&self) -> usize {
        self.banks.iter().map(AeqBank::event_count).sum()
    }

    /// Global `(row, col)` spike positions of one bank, ordered row-major.
    pub fn spike_positions(&self, channel: usize, t: usize) -> Vec<(usize, usize)> {
        let mut pos: Vec<_> = self.bank(channel, t).events().map(|a| a.global()).collect();
        pos.sort_unstable();
        pos
    }

    /// Text dump, one line per queue entry:
    /// `c=<channel> t=<t> s=<col> i=<i> j=<j> valid=<0|1> eoq=<0|1>`.
    pub fn dump<W: fmt::Write>(&self, out: &mut W) -> fmt::Result {
        for c in 0..self.channels {
            for t in 0..self.timesteps {
                let bank = self.bank(c, t);
                for s in 0..COLUMNS as u8 {
                    for e in bank.column(s) {
                        writeln!(out, "c={c} t={t} s={s} i={} j={} valid={} eoq={}", e.i, e.j, e.valid as u8, e.end_of_queue as u8)?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn bank_with(counts: [usize; 9]) -> AeqBank {
        let mut b = AeqBank::new(64);
        for (s, &n) in counts.iter().enumerate() {
            for k in 0..n {
                b.push(InterlacedAddress::new(k as u16, 0, s as u8)).unwrap();
            }
        }
        b.finalize().unwrap();
        b
    }

    #[test]
    fn full_window_fills_every_column() {
        let mut b = AeqBank::new(4);
        b.write_parallel(&[Some((1, 2)); 9]).unwrap();
        assert_eq!(b.write_counts(), [1; 9]);
        b.write_parallel(&[None; 9]).unwrap();
        assert_eq!(b.event_count(), 9);
    }

    #[test]
    fn read_order_and_wasted_cycles() {
        let b = bank_with([2, 0, 1, 0, 0, 0, 0, 0, 0]);
        let reads: alloc::vec::Vec<_> = b.reader().unwrap().collect();
        let pattern: alloc::vec::Vec<(u8, bool)> = reads.iter().map(|r| (r.column, r.entry.valid)).collect();
        assert_eq!(&pattern[..4], &[(0, true), (0, true), (1, false), (2, true)]);
        assert!(pattern[4..].iter().all(|&(_, v)| !v));
        assert_eq!(reads.len(), 2 + 1 + 1 + 6);
    }

    #[test]
    fn empty_bank_costs_nine_reads() {
        let b = bank_with([0; 9]);
        assert_eq!(b.reader().unwrap().count(), 9);
        assert_eq!(b.empty_columns(), 9);
    }

    #[test]
    fn single_full_column() {
        let b = bank_with([0, 0, 0, 5, 0, 0, 0, 0, 0]);
        let reads: alloc::vec::Vec<_> = b.reader().unwrap().collect();
        assert_eq!(reads.iter().filter(|r| r.entry.valid).count(), 5);
        assert_eq!(reads.len(), 5 + 8);
    }

    #[test]
    fn finalize_marks_one_end_per_column() {
        let b = bank_with([3, 0, 1, 7, 0, 2, 0, 0, 1]);
        for s in 0..9 {
            let col = b.column(s);
            assert_eq!(col.iter().filter(|e| e.end_of_queue).count(), 1);
            assert!(col.last().unwrap().end_of_queue);
        }
        let mut one = AeqBank::new(4);
        one.push(InterlacedAddress::new(0, 0, 4)).unwrap();
        one.finalize().unwrap();
        assert!(one.column(4)[0].valid && one.column(4)[0].end_of_queue);
    }

    #[test]
    fn double_finalize_and_late_write_rejected() {
        let mut b = AeqBank::new(4);
        b.finalize().unwrap();
        assert_eq!(b.finalize(), Err(AeqError::AlreadyFinalized));
        assert_eq!(b.push(InterlacedAddress::new(0, 0, 0)), Err(AeqError::AlreadyFinalized));
        assert_eq!(AeqBank::new(1).reader().err(), Some(AeqError::NotFinalized));
    }

    #[test]
    fn capacity_is_enforced() {
        let mut b = AeqBank::new(1);
        b.push(InterlacedAddress::new(0, 0, 3)).unwrap();
        assert_eq!(b.push(InterlacedAddress::new(1, 0, 3)), Err(AeqError::CapacityExceeded { column: 3, capacity: 1 }));
    }

    #[test]
    fn fifo_order_within_column() {
        let mut b = AeqBank::new(16);
        let seq = [(3u16, 1u16), (0, 0), (2, 2)];
        for &(i, j) in &seq {
            let mut w = [None; 9];
            w[6] = Some((i, j));
            b.write_parallel(&w).unwrap();
        }
        b.finalize().unwrap();
        let got: alloc::vec::Vec<_> = b.column(6).iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(got, seq);
    }

    #[test]
    fn dump_format() {
        let mut store = AeqStore::new(1, 1, FmapDims::new(3, 3));
        store.bank_mut(0, 0).push(InterlacedAddress::new(0, 0, 1)).unwrap();
        store.bank_mut(0, 0).finalize().unwrap();
        let mut s = String::new();
        store.dump(&mut s).unwrap();
        let lines: alloc::vec::Vec<_> = s.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "c=0 t=0 s=0 i=0 j=0 valid=0 eoq=1");
        assert_eq!(lines[1], "c=0 t=0 s=1 i=0 j=0 valid=1 eoq=1");
    }
}
