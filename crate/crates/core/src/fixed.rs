//! Saturating two's-complement arithmetic for potentials, weights and biases.
//!
//! All values of one model share a single [`Width`]. Storage throughout the
//! crate is a raw `i16`; [`SatFixed`] pairs a raw value with its width for the
//! public arithmetic API, while the hot loops call [`Width::add`] directly.

use core::fmt;

/// Datapath width of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Width {
    W8,
    W16,
}

/// Which rail, if any, an addition was clamped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clamp {
    #[default]
    None,
    High,
    Low,
}

impl Clamp {
    pub fn is_clamped(self) -> bool {
        self != Clamp::None
    }
}

impl Width {
    pub fn from_bits(bits: u32) -> Option<Width> {
        match bits {
            8 => Some(Width::W8),
            16 => Some(Width::W16),
            _ => None,
        }
    }

    pub const fn bits(self) -> u32 {
        match self {
            Width::W8 => 8,
            Width::W16 => 16,
        }
    }

    pub const fn max(self) -> i16 {
        match self {
            Width::W8 => i8::MAX as i16,
            Width::W16 => i16::MAX,
        }
    }

    pub const fn min(self) -> i16 {
        match self {
            Width::W8 => i8::MIN as i16,
            Width::W16 => i16::MIN,
        }
    }

    pub fn contains(self, v: i64) -> bool {
        v >= self.min() as i64 && v <= self.max() as i64
    }

    /// Clamps a wide value onto the rails of this width.
    #[inline]
    pub fn clamp_wide(self, v: i64) -> (i16, Clamp) {
        if v > self.max() as i64 {
            (self.max(), Clamp::High)
        } else if v < self.min() as i64 {
            (self.min(), Clamp::Low)
        } else {
            (v as i16, Clamp::None)
        }
    }

    /// Saturating addition of two raw values already in range for this width.
    #[inline]
    pub fn add(self, a: i16, b: i16) -> (i16, Clamp) {
        debug_assert!(self.contains(a as i64) && self.contains(b as i64));
        self.clamp_wide(a as i32 as i64 + b as i32 as i64)
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-bit", self.bits())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FixedError {
    WidthMismatch { lhs: Width, rhs: Width },
    OutOfRange { value: i64, width: Width },
}

impl fmt::Display for FixedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixedError::WidthMismatch { lhs, rhs } => {
                write!(f, "operand widths differ ({lhs} vs {rhs})")
            }
            FixedError::OutOfRange { value, width } => {
                write!(f, "{value} is not representable in {width}")
            }
        }
    }
}

/// A signed value constrained to the range of its width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SatFixed {
    raw: i16,
    width: Width,
}

/// Result of a saturating addition; `clamp` feeds overflow statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SatSum {
    pub value: SatFixed,
    pub clamp: Clamp,
}

impl SatFixed {
    pub fn new(value: i64, width: Width) -> Result<SatFixed, FixedError> {
        if width.contains(value) {
            Ok(SatFixed { raw: value as i16, width })
        } else {
            Err(FixedError::OutOfRange { value, width })
        }
    }

    pub fn saturating(value: i64, width: Width) -> SatFixed {
        SatFixed { raw: width.clamp_wide(value).0, width }
    }

    pub fn zero(width: Width) -> SatFixed {
        SatFixed { raw: 0, width }
    }

    pub fn max_value(width: Width) -> SatFixed {
        SatFixed { raw: width.max(), width }
    }

    pub fn min_value(width: Width) -> SatFixed {
        SatFixed { raw: width.min(), width }
    }

    pub fn raw(self) -> i16 {
        self.raw
    }

    pub fn width(self) -> Width {
        self.width
    }

    fn same_width(self, rhs: SatFixed) -> Result<Width, FixedError> {
        if self.width == rhs.width {
            Ok(self.width)
        } else {
            Err(FixedError::WidthMismatch { lhs: self.width, rhs: rhs.width })
        }
    }

    pub fn sat_add(self, rhs: SatFixed) -> Result<SatSum, FixedError> {
        let width = self.same_width(rhs)?;
        let (raw, clamp) = width.add(self.raw, rhs.raw);
        Ok(SatSum { value: SatFixed { raw, width }, clamp })
    }

    /// Strict signed comparison, `self > rhs`.
    pub fn compare_gt(self, rhs: SatFixed) -> Result<bool, FixedError> {
        self.same_width(rhs)?;
        Ok(self.raw > rhs.raw)
    }
}

impl fmt::Display for SatFixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s8(v: i64) -> SatFixed {
        SatFixed::new(v, Width::W8).unwrap()
    }

    #[test]
    fn clamps_at_rails() {
        assert_eq!(s8(120).sat_add(s8(20)).unwrap().value.raw(), 127);
        assert_eq!(s8(120).sat_add(s8(20)).unwrap().clamp, Clamp::High);
        assert_eq!(s8(-120).sat_add(s8(-20)).unwrap().value.raw(), -128);
        assert_eq!(s8(-120).sat_add(s8(-20)).unwrap().clamp, Clamp::Low);
        let ok = s8(5).sat_add(s8(3)).unwrap();
        assert_eq!((ok.value.raw(), ok.clamp), (8, Clamp::None));
    }

    #[test]
    fn strict_greater_than() {
        assert!(s8(1).compare_gt(s8(0)).unwrap());
        assert!(!s8(0).compare_gt(s8(0)).unwrap());
        assert!(!s8(-128).compare_gt(s8(127)).unwrap());
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let wide = SatFixed::new(3, Width::W16).unwrap();
        assert_eq!(s8(1).sat_add(wide), Err(FixedError::WidthMismatch { lhs: Width::W8, rhs: Width::W16 }));
        assert!(s8(1).compare_gt(wide).is_err());
    }

    #[test]
    fn construction_checks_range() {
        assert!(SatFixed::new(128, Width::W8).is_err());
        assert!(SatFixed::new(-129, Width::W8).is_err());
        assert!(SatFixed::new(32767, Width::W16).is_ok());
        assert_eq!(SatFixed::saturating(1000, Width::W8).raw(), 127);
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_left_operand(a in -32768i64..=32767, d in 0i64..=200, b in -32768i64..=32767) {
            let w = Width::W16;
            let a2 = (a + d).min(32767);
            let lo = SatFixed::new(a, w).unwrap().sat_add(SatFixed::new(b, w).unwrap()).unwrap();
            let hi = SatFixed::new(a2, w).unwrap().sat_add(SatFixed::new(b, w).unwrap()).unwrap();
            proptest::prop_assert!(lo.value.raw() <= hi.value.raw());
        }

        #[test]
        fn rails_absorb(x in 0i64..=127, y in -128i64..=0) {
            let max = SatFixed::max_value(Width::W8);
            let min = SatFixed::min_value(Width::W8);
            proptest::prop_assert_eq!(max.sat_add(s8(x)).unwrap().value, max);
            proptest::prop_assert_eq!(min.sat_add(s8(y)).unwrap().value, min);
        }
    }
}
