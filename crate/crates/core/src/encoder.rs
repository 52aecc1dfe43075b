//! Multi-threshold input encoding.
//!
//! A frame is binarised once per timestep against a strictly increasing set
//! of `T - 1` thresholds. The highest threshold is used first, so bright
//! pixels spike early and, once spiking, keep spiking in every later step.

use alloc::vec::Vec;
use core::fmt;

use crate::interlace::FmapDims;
use crate::spikes::{Frame, SpikeMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    NotIncreasing { index: usize, prev: u16, next: u16 },
    WrongLength { thresholds: usize, timesteps: usize },
}

impl fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleError::NotIncreasing { index, prev, next } => {
                write!(f, "input thresholds must be strictly increasing (p[{}]={prev}, p[{index}]={next})", index - 1)
            }
            ScheduleError::WrongLength { thresholds, timesteps } => {
                write!(f, "{thresholds} input thresholds given for {timesteps} timesteps (need timesteps - 1)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdSchedule {
    thresholds: Vec<u16>,
}

impl ThresholdSchedule {
    pub fn new(thresholds: Vec<u16>) -> Result<ThresholdSchedule, ScheduleError> {
        for k in 1..thresholds.len() {
            if thresholds[k] <= thresholds[k - 1] {
                return Err(ScheduleError::NotIncreasing { index: k, prev: thresholds[k - 1], next: thresholds[k] });
            }
        }
        Ok(ThresholdSchedule { thresholds })
    }

    /// `T - 1` thresholds at `k * max_pixel / T`; for 8-bit pixels and
    /// `T = 5` this is (51, 102, 153, 204).
    pub fn evenly_spaced(timesteps: usize, max_pixel: u16) -> Result<ThresholdSchedule, ScheduleError> {
        let t = timesteps.max(1) as u32;
        let p = (1..t).map(|k| (k * max_pixel as u32 / t) as u16).collect();
        ThresholdSchedule::new(p)
    }

    pub fn thresholds(&self) -> &[u16] {
        &self.thresholds
    }

    pub fn timesteps(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// Threshold applied at timestep `t`. Step 0 uses the largest threshold;
    /// the last two steps both use the smallest. With an empty schedule
    /// (`T = 1`) every non-zero pixel spikes.
    pub fn threshold_at(&self, t: usize) -> u16 {
        let n = self.thresholds.len();
        if n == 0 {
            return 0;
        }
        let idx = n.saturating_sub(1 + t);
        self.thresholds[idx]
    }
}

/// Produces the `T` binary maps of one frame.
pub fn encode(frame: &Frame, schedule: &ThresholdSchedule) -> Vec<SpikeMap> {
    (0..schedule.timesteps()).map(|t| encode_step(frame, schedule.threshold_at(t))).collect()
}

pub fn encode_step(frame: &Frame, threshold: u16) -> SpikeMap {
    let dims: FmapDims = frame.dims();
    let mut map = SpikeMap::new(frame.channels(), dims);
    for c in 0..frame.channels() {
        for r in 0..dims.height {
            for col in 0..dims.width {
                if frame.get(c, r, col) > threshold {
                    map.set(c, r, col, true);
                }
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn schedule() -> ThresholdSchedule {
        ThresholdSchedule::new(vec![50, 100, 150, 200]).unwrap()
    }

    fn pixel_train(p: u16) -> Vec<bool> {
        let f = Frame::new(1, FmapDims::new(1, 1), vec![p]).unwrap();
        encode(&f, &schedule()).iter().map(|m| m.get(0, 0, 0)).collect()
    }

    #[test]
    fn bright_pixel_spikes_throughout() {
        assert_eq!(pixel_train(255), vec![true; 5]);
        assert_eq!(pixel_train(0), vec![false; 5]);
    }

    #[test]
    fn first_spike_at_matching_threshold() {
        // thresholds by step: 200, 150, 100, 50, 50
        assert_eq!(pixel_train(120), vec![false, false, true, true, true]);
        assert_eq!(pixel_train(100), vec![false, false, false, true, true]);
        assert_eq!(pixel_train(51), vec![false, false, false, true, true]);
        assert_eq!(pixel_train(50), vec![false; 5]);
    }

    #[test]
    fn rejects_non_increasing() {
        assert!(ThresholdSchedule::new(vec![10, 10]).is_err());
        assert!(ThresholdSchedule::new(vec![10, 5]).is_err());
        assert!(ThresholdSchedule::new(vec![]).is_ok());
    }

    #[test]
    fn default_quartiles() {
        let s = ThresholdSchedule::evenly_spaced(5, 255).unwrap();
        assert_eq!(s.thresholds(), &[51, 102, 153, 204]);
        assert_eq!(ThresholdSchedule::evenly_spaced(1, 255).unwrap().timesteps(), 1);
    }

    #[test]
    fn last_step_equals_minimum_threshold() {
        let s = schedule();
        assert_eq!(s.threshold_at(4), 50);
        assert_eq!(s.threshold_at(0), 200);
        let single = ThresholdSchedule::new(vec![]).unwrap();
        assert_eq!(single.threshold_at(0), 0);
    }

    proptest::proptest! {
        #[test]
        fn persistent_and_monotone_in_intensity(
            mut p in proptest::collection::btree_set(0u16..=255, 0..6),
            a in 0u16..=255, b in 0u16..=255,
        ) {
            let th: Vec<u16> = core::mem::take(&mut p).into_iter().collect();
            let s = ThresholdSchedule::new(th).unwrap();
            let f = Frame::new(1, FmapDims::new(1, 2), vec![a, b]).unwrap();
            let maps = encode(&f, &s);
            proptest::prop_assert_eq!(maps.len(), s.timesteps());
            for t in 1..maps.len() {
                for c in 0..2 {
                    proptest::prop_assert!(!maps[t - 1].get(0, 0, c) || maps[t].get(0, 0, c));
                }
            }
            let first = |c: usize| maps.iter().position(|m| m.get(0, 0, c)).unwrap_or(usize::MAX);
            if a >= b {
                proptest::prop_assert!(first(0) <= first(1));
            }
        }
    }
}
