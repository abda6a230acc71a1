//! Fixed-point LNS format descriptions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LnsError, Result};

/// Largest arithmetic width the simulation supports; every intermediate
/// value must fit comfortably in an `i32`/`i64`.
pub const MAX_TOTAL_BITS: u32 = 30;

/// Default range of the addition correction curves, in log2 units.
pub const DEFAULT_D_MAX: u32 = 12;

/// How exact zero is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZeroMode {
    /// A dedicated flag bit marks zero (two overhead bits: sign and zero).
    #[default]
    ZeroFlag,
    /// Zero is the smallest positive magnitude (one overhead bit: sign).
    SmallestValue,
}

/// Bitwidth configuration of a fixed-point LNS representation.
///
/// `total_bits` is the arithmetic width of the log-magnitude, of which
/// `frac_bits` sit after the binary point. The sign bit and the optional
/// zero flag are overhead on top of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LnsFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
    #[serde(default)]
    pub zero_mode: ZeroMode,
    #[serde(default = "default_d_max")]
    pub d_max: u32,
}

fn default_d_max() -> u32 {
    DEFAULT_D_MAX
}

impl LnsFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        let fmt = LnsFormat {
            total_bits,
            frac_bits,
            zero_mode: ZeroMode::ZeroFlag,
            d_max: DEFAULT_D_MAX,
        };
        fmt.validate()?;
        Ok(fmt)
    }

    pub fn with_zero_mode(mut self, mode: ZeroMode) -> Self {
        self.zero_mode = mode;
        self
    }

    pub fn with_d_max(mut self, d_max: u32) -> Result<Self> {
        self.d_max = d_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, f) = (self.total_bits, self.frac_bits);
        if !(2..=MAX_TOTAL_BITS).contains(&t) {
            return Err(LnsError::InvalidFormat(format!(
                "total bits {t} outside [2, {MAX_TOTAL_BITS}]"
            )));
        }
        if f < 1 || f >= t {
            return Err(LnsError::InvalidFormat(format!(
                "fractional bits {f} must satisfy 1 <= F < T = {t}"
            )));
        }
        if self.d_max == 0 || self.d_max > 64 {
            return Err(LnsError::InvalidFormat(format!(
                "d_max {} outside [1, 64]",
                self.d_max
            )));
        }
        Ok(())
    }

    pub fn int_bits(&self) -> u32 {
        self.total_bits - self.frac_bits
    }

    /// Sign bit plus, in zero-flag mode, the zero flag.
    pub fn overhead_bits(&self) -> u32 {
        match self.zero_mode {
            ZeroMode::ZeroFlag => 2,
            ZeroMode::SmallestValue => 1,
        }
    }

    /// Width of an encoded scalar.
    pub fn encoded_bits(&self) -> u32 {
        self.total_bits + self.overhead_bits()
    }

    /// Upper clip bound of the scaled log-magnitude, `2^(T-1) - 1`.
    #[inline]
    pub fn mag_max(&self) -> i32 {
        (1i32 << (self.total_bits - 1)) - 1
    }

    /// Lower clip bound, `-(2^(T-1) - 1)`. The pattern `-2^(T-1)` is reserved.
    #[inline]
    pub fn mag_min(&self) -> i32 {
        -self.mag_max()
    }

    /// `2^F` as a float.
    #[inline]
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Largest correction-curve input, `d_max * 2^F`, in scaled units.
    #[inline]
    pub fn d_limit(&self) -> i64 {
        (self.d_max as i64) << self.frac_bits
    }

    #[inline]
    pub(crate) fn saturate(&self, mag: i64) -> i32 {
        let (lo, hi) = (self.mag_min() as i64, self.mag_max() as i64);
        if mag > hi {
            crate::stats::note_saturation();
            hi as i32
        } else if mag < lo {
            crate::stats::note_saturation();
            lo as i32
        } else {
            mag as i32
        }
    }

    /// The `(T, F, d_max)` triple a correction table is built for.
    pub fn fingerprint(&self) -> TableFingerprint {
        TableFingerprint {
            total_bits: self.total_bits,
            fractional_bits: self.frac_bits,
            d_max: self.d_max,
        }
    }
}

impl fmt::Display for LnsFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-bit (F={}, o={})",
            self.total_bits,
            self.frac_bits,
            self.overhead_bits()
        )
    }
}

/// Identity of the format a correction table was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TableFingerprint {
    pub total_bits: u32,
    pub fractional_bits: u32,
    pub d_max: u32,
}

impl fmt::Display for TableFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "T={} F={} d_max={}",
            self.total_bits, self.fractional_bits, self.d_max
        )
    }
}
