//! Piecewise-linear approximations of the LNS addition corrections
//! `Δ+(d) = log2(1 + 2^-d)` and `Δ-(d) = log2(1 - 2^-d)`.
//!
//! Every segment evaluates `±(d << k)` or `±(d >> -k)` plus an integer offset,
//! so the datapath needs one shifter and one adder per lookup. Bins, offsets
//! and inputs share the format's fixed-point scaling; lookup is a pure integer
//! binary search over the bin starts.

mod fit;
mod io;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub(crate) use fit::{fit_segment, SlopeModel};
pub use fit::{fit_uniform, fit_uniform_with, SlopeRange, TargetCurve};
pub use io::{load_table, load_table_for, save_table, table_from_json, table_to_json};

use crate::error::{LnsError, Result};
use crate::format::{LnsFormat, TableFingerprint};
use crate::scalar::{shift_right_half_even, DeltaEval};

/// Default number of segments per correction curve.
pub const DEFAULT_SEGMENTS: usize = 16;

/// One linear piece, `slope_sign * 2^slope_exponent * d + offset`, valid from
/// `bin_start` up to the next segment's start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PwlSegment {
    pub bin_start: i32,
    pub slope_sign: i8,
    pub slope_exponent: i32,
    pub offset: i32,
}

impl PwlSegment {
    pub fn constant(bin_start: i32, offset: i32) -> Self {
        PwlSegment {
            bin_start,
            slope_sign: 0,
            slope_exponent: 0,
            offset,
        }
    }

    /// Shift-and-add evaluation; right shifts round half to even.
    #[inline]
    pub fn apply(&self, d: i64) -> i64 {
        let slope_term = match self.slope_sign {
            0 => 0,
            s => {
                let k = self.slope_exponent;
                let mag = if k >= 0 {
                    d << k
                } else {
                    shift_right_half_even(d, (-k) as u32)
                };
                if s < 0 {
                    -mag
                } else {
                    mag
                }
            }
        };
        slope_term + self.offset as i64
    }

    /// The real slope this segment encodes.
    pub fn slope(&self) -> f64 {
        self.slope_sign as f64 * (self.slope_exponent as f64).exp2()
    }
}

/// Which side of zero a curve's outputs are clamped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CurveSign {
    NonNegative,
    NonPositive,
}

impl CurveSign {
    #[inline]
    pub fn clamp(self, v: i64) -> i64 {
        match self {
            CurveSign::NonNegative => v.max(0),
            CurveSign::NonPositive => v.min(0),
        }
    }
}

/// A piecewise-linear curve over `[0, domain_end]`; inputs past the end
/// evaluate to zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PwlCurve {
    segments: Vec<PwlSegment>,
    domain_end: i64,
    sign: CurveSign,
}

impl PwlCurve {
    pub fn new(segments: Vec<PwlSegment>, domain_end: i64, sign: CurveSign) -> Result<Self> {
        let curve = PwlCurve {
            segments,
            domain_end,
            sign,
        };
        curve.validate_bins()?;
        Ok(curve)
    }

    fn validate_bins(&self) -> Result<()> {
        let Some(first) = self.segments.first() else {
            return Err(LnsError::TableInvariant("curve has no segments".into()));
        };
        if first.bin_start != 0 {
            return Err(LnsError::TableInvariant(format!(
                "first bin starts at {} instead of 0",
                first.bin_start
            )));
        }
        for w in self.segments.windows(2) {
            if w[1].bin_start <= w[0].bin_start {
                return Err(LnsError::TableInvariant(format!(
                    "bins not strictly increasing: {} then {}",
                    w[0].bin_start, w[1].bin_start
                )));
            }
        }
        let last = self.segments.last().unwrap().bin_start as i64;
        if last > self.domain_end {
            return Err(LnsError::TableInvariant(format!(
                "bin {last} starts past the domain end {}",
                self.domain_end
            )));
        }
        for s in &self.segments {
            if !(-1..=1).contains(&s.slope_sign) {
                return Err(LnsError::TableInvariant(format!(
                    "slope sign {} not in {{-1, 0, 1}}",
                    s.slope_sign
                )));
            }
            if !(-40..=30).contains(&s.slope_exponent) {
                return Err(LnsError::TableInvariant(format!(
                    "slope exponent {} out of range",
                    s.slope_exponent
                )));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> &[PwlSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn domain_end(&self) -> i64 {
        self.domain_end
    }

    pub fn sign(&self) -> CurveSign {
        self.sign
    }

    /// Inclusive input range `[start, end]` covered by segment `i`.
    pub fn segment_range(&self, i: usize) -> (i64, i64) {
        let start = self.segments[i].bin_start as i64;
        let end = match self.segments.get(i + 1) {
            Some(next) => next.bin_start as i64 - 1,
            None => self.domain_end,
        };
        (start, end)
    }

    /// Index of the segment containing `d` (binary search).
    #[inline]
    pub fn segment_index(&self, d: i64) -> usize {
        self.segments
            .partition_point(|s| s.bin_start as i64 <= d)
            .saturating_sub(1)
    }

    /// Evaluates the curve at `d >= 0`.
    pub fn eval(&self, d: i64) -> Result<i64> {
        if d < 0 {
            return Err(LnsError::NegativeDelta(d));
        }
        Ok(self.eval_nonneg(d))
    }

    #[inline]
    pub(crate) fn eval_nonneg(&self, d: i64) -> i64 {
        debug_assert!(d >= 0);
        if d > self.domain_end {
            return 0;
        }
        let seg = &self.segments[self.segment_index(d)];
        self.sign.clamp(seg.apply(d))
    }

    pub(crate) fn set_segment(&mut self, i: usize, seg: PwlSegment) {
        self.segments[i] = seg;
    }

    /// Number of comparisons the bin search performs for `d`; used by the
    /// datapath profiler.
    pub(crate) fn search_comparisons(&self, d: i64) -> u32 {
        let (mut lo, mut hi, mut n) = (0usize, self.segments.len(), 0u32);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            n += 1;
            if self.segments[mid].bin_start as i64 <= d {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        n
    }

    /// Rescales bins and offsets by `2^(to - from)` fractional bits. Slopes
    /// are dimensionless and carry over unchanged.
    fn rescaled(&self, from: u32, to: u32, domain_end: i64, fmt: &LnsFormat) -> Result<Self> {
        let conv = |v: i64| -> i64 {
            if to >= from {
                v << (to - from)
            } else {
                shift_right_half_even(v, from - to)
            }
        };
        let mut segments: Vec<PwlSegment> = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            let bin = conv(s.bin_start as i64);
            if segments.last().is_some_and(|p| p.bin_start as i64 >= bin) {
                continue;
            }
            segments.push(PwlSegment {
                bin_start: bin as i32,
                offset: conv(s.offset as i64).clamp(fmt.mag_min() as i64, fmt.mag_max() as i64)
                    as i32,
                ..*s
            });
        }
        PwlCurve::new(segments, domain_end, self.sign)
    }
}

/// Provenance of a table.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TableMetadata {
    #[serde(default)]
    pub seed: Option<u64>,
    /// Achieved quantization-aware loss, as a decimal string.
    #[serde(default)]
    pub qa_loss: Option<String>,
    #[serde(default)]
    pub created_by: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

/// Pair of correction curves built for one format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaTable {
    fingerprint: TableFingerprint,
    plus: PwlCurve,
    minus: PwlCurve,
    pub metadata: TableMetadata,
}

impl DeltaTable {
    pub fn new(
        fmt: &LnsFormat,
        plus: Vec<PwlSegment>,
        minus: Vec<PwlSegment>,
        metadata: TableMetadata,
    ) -> Result<Self> {
        let table = DeltaTable {
            fingerprint: fmt.fingerprint(),
            plus: PwlCurve::new(plus, fmt.d_limit(), CurveSign::NonNegative)?,
            minus: PwlCurve::new(minus, fmt.d_limit(), CurveSign::NonPositive)?,
            metadata,
        };
        table.validate_offsets(fmt)?;
        Ok(table)
    }

    pub(crate) fn from_curves(
        fmt: &LnsFormat,
        plus: PwlCurve,
        minus: PwlCurve,
        metadata: TableMetadata,
    ) -> Result<Self> {
        DeltaTable::new(fmt, plus.segments, minus.segments, metadata)
    }

    fn validate_offsets(&self, fmt: &LnsFormat) -> Result<()> {
        let range = fmt.mag_min()..=fmt.mag_max();
        for s in self.plus.segments.iter().chain(&self.minus.segments) {
            if !range.contains(&s.offset) {
                return Err(LnsError::TableInvariant(format!(
                    "offset {} outside [{}, {}]",
                    s.offset,
                    fmt.mag_min(),
                    fmt.mag_max()
                )));
            }
        }
        Ok(())
    }

    /// Uniform-bin table fit directly to the real curves, without regard to
    /// the quantization of the adder's operands and result.
    pub fn uniform(fmt: &LnsFormat, segments: usize) -> Result<Self> {
        let slopes = SlopeRange::for_format(fmt);
        let plus = fit_uniform(TargetCurve::DeltaPlus, segments, fmt.d_limit(), fmt, slopes)?;
        let minus = fit_uniform(
            TargetCurve::DeltaMinus,
            segments,
            fmt.d_limit(),
            fmt,
            slopes,
        )?;
        let metadata = TableMetadata {
            created_by: format!("qaa-lns {} uniform", env!("CARGO_PKG_VERSION")),
            params: BTreeMap::from([("segments".to_string(), segments.to_string())]),
            ..Default::default()
        };
        DeltaTable::from_curves(fmt, plus, minus, metadata)
    }

    pub fn fingerprint(&self) -> TableFingerprint {
        self.fingerprint
    }

    pub fn plus(&self) -> &PwlCurve {
        &self.plus
    }

    pub fn minus(&self) -> &PwlCurve {
        &self.minus
    }

    pub(crate) fn curves_mut(&mut self) -> (&mut PwlCurve, &mut PwlCurve) {
        (&mut self.plus, &mut self.minus)
    }

    pub fn check_format(&self, fmt: &LnsFormat) -> Result<()> {
        if self.fingerprint != fmt.fingerprint() {
            return Err(LnsError::FormatMismatch {
                expected: fmt.fingerprint().to_string(),
                found: self.fingerprint.to_string(),
            });
        }
        Ok(())
    }

    /// The same curves re-expressed in another format's fixed-point scaling
    /// (bins and offsets shifted by the difference in fractional bits).
    /// Used to run a table tuned for one bitwidth at another.
    pub fn rescale_to(&self, fmt: &LnsFormat) -> Result<Self> {
        if self.fingerprint.d_max != fmt.d_max {
            return Err(LnsError::FormatMismatch {
                expected: fmt.fingerprint().to_string(),
                found: self.fingerprint.to_string(),
            });
        }
        let from = self.fingerprint.fractional_bits;
        let to = fmt.frac_bits;
        let mut metadata = self.metadata.clone();
        metadata
            .params
            .insert("rescaled_from".into(), self.fingerprint.to_string());
        Ok(DeltaTable {
            fingerprint: fmt.fingerprint(),
            plus: self.plus.rescaled(from, to, fmt.d_limit(), fmt)?,
            minus: self.minus.rescaled(from, to, fmt.d_limit(), fmt)?,
            metadata,
        })
    }
}

impl DeltaEval for DeltaTable {
    #[inline]
    fn delta_plus(&self, d: i64) -> i64 {
        self.plus.eval_nonneg(d)
    }

    #[inline]
    fn delta_minus(&self, d: i64) -> i64 {
        self.minus.eval_nonneg(d)
    }
}

/// Reference lookup by linear scan, kept for cross-checking the binary search.
pub fn eval_linear_scan(curve: &PwlCurve, d: i64) -> i64 {
    if d > curve.domain_end() {
        return 0;
    }
    let mut idx = 0;
    for (i, s) in curve.segments().iter().enumerate() {
        if s.bin_start as i64 <= d {
            idx = i;
        }
    }
    curve.sign().clamp(curve.segments()[idx].apply(d))
}
