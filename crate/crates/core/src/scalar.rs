//! Scalar LNS values and their bit-true arithmetic.
//!
//! A value is `(-1)^sign * 2^(log_mag / 2^F)`. Multiplication, division and
//! square root act on the integer log-magnitude exactly (up to saturation);
//! addition needs a correction term supplied by a [`DeltaEval`].

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::delta::DeltaTable;
use crate::error::{LnsError, Result};
use crate::format::{LnsFormat, ZeroMode};
use crate::stats;

/// One LNS value.
///
/// In [`ZeroMode::ZeroFlag`] zero carries `zero = true`, `log_mag = mag_min`
/// and a clear sign. In [`ZeroMode::SmallestValue`] the flag is never set and
/// the positive value with `log_mag = mag_min` stands in for zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LnsScalar {
    log_mag: i32,
    negative: bool,
    zero: bool,
}

impl LnsScalar {
    /// A non-zero value. `log_mag` is saturated into the format's range.
    pub fn new(log_mag: i32, negative: bool, fmt: &LnsFormat) -> Self {
        LnsScalar {
            log_mag: fmt.saturate(log_mag as i64),
            negative,
            zero: false,
        }
    }

    /// A non-zero value whose magnitude is already known to be in range.
    #[inline]
    pub(crate) fn raw(log_mag: i32, negative: bool) -> Self {
        LnsScalar {
            log_mag,
            negative,
            zero: false,
        }
    }

    /// The canonical zero of `fmt`.
    #[inline]
    pub fn zero(fmt: &LnsFormat) -> Self {
        LnsScalar {
            log_mag: fmt.mag_min(),
            negative: false,
            zero: fmt.zero_mode == ZeroMode::ZeroFlag,
        }
    }

    /// `1.0`, whose log-magnitude is 0.
    #[inline]
    pub fn one() -> Self {
        LnsScalar {
            log_mag: 0,
            negative: false,
            zero: false,
        }
    }

    #[inline]
    pub fn log_mag(&self) -> i32 {
        self.log_mag
    }

    #[inline]
    pub fn is_negative(&self) -> bool {
        self.negative
    }

    /// State of the zero flag bit (always false in smallest-value mode).
    #[inline]
    pub fn zero_flag(&self) -> bool {
        self.zero
    }

    /// Whether this value represents zero under `fmt`.
    #[inline]
    pub fn is_zero(&self, fmt: &LnsFormat) -> bool {
        match fmt.zero_mode {
            ZeroMode::ZeroFlag => self.zero,
            ZeroMode::SmallestValue => self.log_mag == fmt.mag_min() && !self.negative,
        }
    }

    #[inline]
    pub fn negate(self, fmt: &LnsFormat) -> Self {
        if self.is_zero(fmt) {
            self
        } else {
            LnsScalar {
                negative: !self.negative,
                ..self
            }
        }
    }

    #[inline]
    pub fn abs(self) -> Self {
        LnsScalar {
            negative: false,
            ..self
        }
    }

    /// Checks the representation invariants for `fmt`.
    pub fn is_valid(&self, fmt: &LnsFormat) -> bool {
        let in_range = (fmt.mag_min()..=fmt.mag_max()).contains(&self.log_mag);
        match fmt.zero_mode {
            ZeroMode::ZeroFlag => {
                in_range && (!self.zero || (self.log_mag == fmt.mag_min() && !self.negative))
            }
            ZeroMode::SmallestValue => in_range && !self.zero,
        }
    }
}

impl Ord for LnsScalar {
    fn cmp(&self, other: &Self) -> Ordering {
        lns_compare(self, other)
    }
}

impl PartialOrd for LnsScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Source of the addition correction terms `Δ+(d)` and `Δ-(d)`, in scaled
/// integer units, for `0 <= d <= d_limit`.
pub trait DeltaEval {
    fn delta_plus(&self, d: i64) -> i64;
    /// Only called with `d >= 1`; exact cancellation is handled by the adder.
    fn delta_minus(&self, d: i64) -> i64;
}

/// `clip(round_half_even(log2|x| * 2^F))` with the sign of `x`.
pub fn quantize(x: f64, fmt: &LnsFormat) -> Result<LnsScalar> {
    if !x.is_finite() {
        return Err(LnsError::NonFinite(x));
    }
    if x == 0.0 {
        return Ok(LnsScalar::zero(fmt));
    }
    let scaled = (x.abs().log2() * fmt.scale()).round_ties_even();
    let lo = fmt.mag_min() as f64;
    let hi = fmt.mag_max() as f64;
    Ok(LnsScalar {
        log_mag: scaled.clamp(lo, hi) as i32,
        negative: x < 0.0,
        zero: false,
    })
}

/// Double-precision reading of a scalar; zero maps to `0.0`.
pub fn dequantize(v: LnsScalar, fmt: &LnsFormat) -> f64 {
    if v.is_zero(fmt) {
        return 0.0;
    }
    let mag = (v.log_mag as f64 / fmt.scale()).exp2();
    if v.negative {
        -mag
    } else {
        mag
    }
}

/// Product: add logs, XOR signs, saturate.
#[inline]
pub fn lns_mul(a: LnsScalar, b: LnsScalar, fmt: &LnsFormat) -> LnsScalar {
    if fmt.zero_mode == ZeroMode::ZeroFlag && (a.zero || b.zero) {
        return LnsScalar::zero(fmt);
    }
    LnsScalar {
        log_mag: fmt.saturate(a.log_mag as i64 + b.log_mag as i64),
        negative: a.negative ^ b.negative,
        zero: false,
    }
}

/// Quotient: subtract logs, XOR signs, saturate.
pub fn lns_div(a: LnsScalar, b: LnsScalar, fmt: &LnsFormat) -> Result<LnsScalar> {
    if b.is_zero(fmt) {
        return Err(LnsError::DivisionByZero);
    }
    if fmt.zero_mode == ZeroMode::ZeroFlag && a.zero {
        return Ok(a);
    }
    Ok(LnsScalar {
        log_mag: fmt.saturate(a.log_mag as i64 - b.log_mag as i64),
        negative: a.negative ^ b.negative,
        zero: false,
    })
}

/// Square root: halve the log with round-half-even.
pub fn lns_sqrt(a: LnsScalar, fmt: &LnsFormat) -> Result<LnsScalar> {
    if a.is_zero(fmt) {
        return Ok(a);
    }
    if a.negative {
        return Err(LnsError::NegativeSqrt);
    }
    Ok(LnsScalar {
        log_mag: shift_right_half_even(a.log_mag as i64, 1) as i32,
        negative: false,
        zero: false,
    })
}

/// `v / 2^shift` rounded half-to-even, for any sign of `v`.
#[inline]
pub(crate) fn shift_right_half_even(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let q = v >> shift;
    let rem = v - (q << shift);
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

/// Total order consistent with the represented reals.
pub fn lns_compare(a: &LnsScalar, b: &LnsScalar) -> Ordering {
    fn class(v: &LnsScalar) -> i8 {
        if v.zero {
            0
        } else if v.negative {
            -1
        } else {
            1
        }
    }
    match class(a).cmp(&class(b)) {
        Ordering::Equal => match class(a) {
            1 => a.log_mag.cmp(&b.log_mag),
            -1 => b.log_mag.cmp(&a.log_mag),
            _ => Ordering::Equal,
        },
        other => other,
    }
}

/// Sum with corrections from `delta`.
///
/// The larger-magnitude operand sets the sign; the correction for
/// `d = |la - lb|` is added to its log. Opposite signs with `d = 0` cancel
/// exactly, and `d` past `fmt.d_limit()` contributes no correction.
#[inline]
pub fn lns_add_with<D: DeltaEval + ?Sized>(
    a: LnsScalar,
    b: LnsScalar,
    fmt: &LnsFormat,
    delta: &D,
) -> LnsScalar {
    if fmt.zero_mode == ZeroMode::ZeroFlag {
        if a.zero {
            return b;
        }
        if b.zero {
            return a;
        }
    }
    let (big, small) = if a.log_mag >= b.log_mag {
        (a, b)
    } else {
        (b, a)
    };
    let d = big.log_mag as i64 - small.log_mag as i64;
    let correction = if a.negative == b.negative {
        if d > fmt.d_limit() {
            0
        } else {
            delta.delta_plus(d)
        }
    } else if d == 0 {
        return LnsScalar::zero(fmt);
    } else if d > fmt.d_limit() {
        0
    } else {
        delta.delta_minus(d)
    };
    LnsScalar {
        log_mag: fmt.saturate(big.log_mag as i64 + correction),
        negative: big.negative,
        zero: false,
    }
}

/// Sum using a piecewise-linear correction table built for `fmt`.
pub fn lns_add(
    a: LnsScalar,
    b: LnsScalar,
    fmt: &LnsFormat,
    table: &DeltaTable,
) -> Result<LnsScalar> {
    table.check_format(fmt)?;
    Ok(lns_add_with(a, b, fmt, table))
}

/// Strict left-to-right fold with [`lns_add_with`]. Empty input sums to zero.
pub fn accumulate_with<D, I>(values: I, fmt: &LnsFormat, delta: &D) -> LnsScalar
where
    D: DeltaEval + ?Sized,
    I: IntoIterator<Item = LnsScalar>,
{
    let mut it = values.into_iter();
    let Some(first) = it.next() else {
        return LnsScalar::zero(fmt);
    };
    it.fold(first, |acc, v| lns_add_with(acc, v, fmt, delta))
}

pub fn accumulate(values: &[LnsScalar], fmt: &LnsFormat, table: &DeltaTable) -> Result<LnsScalar> {
    table.check_format(fmt)?;
    Ok(accumulate_with(values.iter().copied(), fmt, table))
}

/// Packs a scalar into `T + o` bits: zero flag at bit `T + 1` (zero-flag mode
/// only), sign at bit `T`, two's-complement log-magnitude in bits `[T-1..0]`.
pub fn encode(v: LnsScalar, fmt: &LnsFormat) -> u32 {
    let t = fmt.total_bits;
    let mut bits = (v.log_mag as u32) & ((1u32 << t) - 1);
    if v.negative {
        bits |= 1 << t;
    }
    if fmt.zero_mode == ZeroMode::ZeroFlag && v.zero {
        bits |= 1 << (t + 1);
    }
    bits
}

/// Inverse of [`encode`]. Patterns that are not canonical (the reserved
/// most-negative magnitude, a flagged zero with payload, stray high bits)
/// are normalized and counted in [`stats`].
pub fn decode(bits: u32, fmt: &LnsFormat) -> LnsScalar {
    let t = fmt.total_bits;
    let width = fmt.encoded_bits();
    let mut fixed = false;
    if width < 32 && bits >> width != 0 {
        fixed = true;
    }
    let raw = bits & ((1u32 << t) - 1);
    // sign-extend the T-bit field
    let mut log_mag = ((raw << (32 - t)) as i32) >> (32 - t);
    if log_mag < fmt.mag_min() {
        log_mag = fmt.mag_min();
        fixed = true;
    }
    let negative = bits >> t & 1 == 1;
    let zero = fmt.zero_mode == ZeroMode::ZeroFlag && bits >> (t + 1) & 1 == 1;
    let v = if zero {
        if log_mag != fmt.mag_min() || negative {
            fixed = true;
        }
        LnsScalar::zero(fmt)
    } else {
        LnsScalar {
            log_mag,
            negative,
            zero: false,
        }
    };
    if fixed {
        stats::note_decode_fixup();
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::ExactDelta;

    fn f6() -> LnsFormat {
        LnsFormat::new(12, 6).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let f = f6();
        let two = quantize(2.0, &f).unwrap();
        assert_eq!((two.log_mag(), two.is_negative()), (64, false));
        let half = quantize(-0.5, &f).unwrap();
        assert_eq!((half.log_mag(), half.is_negative()), (-64, true));
        assert!(quantize(0.0, &f).unwrap().is_zero(&f));
        assert!(matches!(
            quantize(f64::NAN, &f),
            Err(LnsError::NonFinite(_))
        ));
        assert!(quantize(f64::INFINITY, &f).is_err());
    }

    #[test]
    fn quantize_three_matches_high_precision_log() {
        // log2(3) = 1.584962500721156181453738943947816508759814407692481060455...
        // times 64 = 101.437600046154; nearest integer is 101.
        let f = f6();
        assert_eq!(quantize(3.0, &f).unwrap().log_mag(), 101);
    }

    #[test]
    fn quantize_rounds_half_to_even() {
        let f = LnsFormat::new(12, 1).unwrap();
        // log2(2^0.25) * 2 = 0.5 -> 0, log2(2^1.25) * 2 = 2.5 -> 2
        assert_eq!(quantize(0.25f64.exp2(), &f).unwrap().log_mag(), 0);
        assert_eq!(quantize(1.25f64.exp2(), &f).unwrap().log_mag(), 2);
    }

    #[test]
    fn quantize_clips() {
        let f = LnsFormat::new(8, 4).unwrap();
        assert_eq!(quantize(1e30, &f).unwrap().log_mag(), 127);
        let tiny = quantize(1e-30, &f).unwrap();
        assert_eq!(tiny.log_mag(), -127);
        assert!(!tiny.is_zero(&f));
    }

    #[test]
    fn dequantize_examples() {
        let f = f6();
        assert_eq!(dequantize(LnsScalar::new(64, false, &f), &f), 2.0);
        assert_eq!(dequantize(LnsScalar::zero(&f), &f), 0.0);
        let v = dequantize(LnsScalar::new(101, true, &f), &f);
        assert_eq!(v, -(101.0f64 / 64.0).exp2());
        assert!((v + 2.98582).abs() < 1e-4);
    }

    #[test]
    fn mul_examples() {
        let f = f6();
        let two = quantize(2.0, &f).unwrap();
        assert_eq!(lns_mul(two, two, &f).log_mag(), 128);
        let x = quantize(0.37, &f).unwrap();
        assert_eq!(lns_mul(x, LnsScalar::one(), &f), x);
        let p = lns_mul(quantize(-2.0, &f).unwrap(), quantize(3.0, &f).unwrap(), &f);
        assert_eq!((p.log_mag(), p.is_negative()), (165, true));
        let da = dequantize(quantize(-2.0, &f).unwrap(), &f);
        let db = dequantize(quantize(3.0, &f).unwrap(), &f);
        assert_eq!(dequantize(p, &f), da * db);
        assert!(lns_mul(x, LnsScalar::zero(&f), &f).is_zero(&f));
    }

    #[test]
    fn mul_saturates_and_counts() {
        let f = LnsFormat::new(8, 4).unwrap();
        stats::reset();
        let big = LnsScalar::new(100, false, &f);
        assert_eq!(lns_mul(big, big, &f).log_mag(), 127);
        assert_eq!(stats::snapshot().saturations, 1);
    }

    #[test]
    fn div_examples() {
        let f = f6();
        let q = lns_div(quantize(4.0, &f).unwrap(), quantize(2.0, &f).unwrap(), &f).unwrap();
        assert_eq!(q.log_mag(), 64);
        let x = quantize(-5.5, &f).unwrap();
        assert_eq!(lns_div(x, x, &f).unwrap(), LnsScalar::one());
        let third = lns_div(LnsScalar::one(), quantize(3.0, &f).unwrap(), &f).unwrap();
        assert_eq!(third.log_mag(), -101);
        assert!(matches!(
            lns_div(x, LnsScalar::zero(&f), &f),
            Err(LnsError::DivisionByZero)
        ));
    }

    #[test]
    fn sqrt_examples() {
        let f = f6();
        assert_eq!(
            lns_sqrt(quantize(4.0, &f).unwrap(), &f).unwrap().log_mag(),
            64
        );
        assert_eq!(lns_sqrt(LnsScalar::one(), &f).unwrap(), LnsScalar::one());
        let r = lns_sqrt(quantize(2.0, &f).unwrap(), &f).unwrap();
        assert_eq!(r.log_mag(), 32);
        assert_eq!(dequantize(r, &f), 2f64.sqrt());
        assert!(lns_sqrt(quantize(-1.0, &f).unwrap(), &f).is_err());
        // odd logs round half to even: 3/2 -> 2, 5/2 -> 2, -3/2 -> -2
        assert_eq!(
            lns_sqrt(LnsScalar::new(3, false, &f), &f)
                .unwrap()
                .log_mag(),
            2
        );
        assert_eq!(
            lns_sqrt(LnsScalar::new(5, false, &f), &f)
                .unwrap()
                .log_mag(),
            2
        );
        assert_eq!(
            lns_sqrt(LnsScalar::new(-3, false, &f), &f)
                .unwrap()
                .log_mag(),
            -2
        );
    }

    #[test]
    fn compare_examples() {
        let f = f6();
        let q = |x| quantize(x, &f).unwrap();
        assert_eq!(lns_compare(&q(2.0), &q(3.0)), Ordering::Less);
        assert_eq!(lns_compare(&q(-2.0), &q(-3.0)), Ordering::Greater);
        assert_eq!(lns_compare(&q(0.0), &q(-0.001)), Ordering::Greater);
        assert_eq!(lns_compare(&q(0.0), &q(0.001)), Ordering::Less);
    }

    #[test]
    fn add_examples_with_exact_delta() {
        let f = f6();
        let ex = ExactDelta::new(&f);
        let two = quantize(2.0, &f).unwrap();
        let four = lns_add_with(two, two, &f, &ex);
        assert_eq!(four.log_mag(), 128);

        let a = quantize(3.7, &f).unwrap();
        let b = quantize(-3.7, &f).unwrap();
        assert!(lns_add_with(a, b, &f, &ex).is_zero(&f));

        let a = LnsScalar::new(0, false, &f);
        let b = LnsScalar::new(-13 * 64, false, &f);
        assert_eq!(lns_add_with(a, b, &f, &ex), a);
        assert_eq!(lns_add_with(b, a, &f, &ex), a);

        let z = LnsScalar::zero(&f);
        assert_eq!(lns_add_with(z, two, &f, &ex), two);
        assert_eq!(lns_add_with(two, z, &f, &ex), two);
    }

    #[test]
    fn add_sign_follows_larger_operand() {
        let f = f6();
        let ex = ExactDelta::new(&f);
        let r = lns_add_with(
            quantize(-3.0, &f).unwrap(),
            quantize(1.0, &f).unwrap(),
            &f,
            &ex,
        );
        assert!(r.is_negative());
        assert!((dequantize(r, &f) + 2.0).abs() < 0.03);
    }

    #[test]
    fn accumulate_examples() {
        let f = f6();
        let ex = ExactDelta::new(&f);
        let x = quantize(1.3, &f).unwrap();
        assert_eq!(accumulate_with([x], &f, &ex), x);
        let y = quantize(0.2, &f).unwrap();
        assert_eq!(accumulate_with([x, x.negate(&f), y], &f, &ex), y);
        let ones = [LnsScalar::one(); 8];
        assert_eq!(accumulate_with(ones, &f, &ex).log_mag(), 192);
    }

    #[test]
    fn encode_examples() {
        let f = f6();
        let z = encode(LnsScalar::zero(&f), &f);
        assert_eq!(z >> 13 & 1, 1);
        assert_eq!(encode(LnsScalar::one(), &f), 0);
        let v = LnsScalar::new(-5, true, &f);
        assert_eq!(decode(encode(v, &f), &f), v);
    }

    #[test]
    fn decode_normalizes_reserved_pattern() {
        let f = LnsFormat::new(8, 4).unwrap();
        stats::reset();
        let v = decode(0x80, &f);
        assert_eq!(v.log_mag(), -127);
        assert!(v.is_valid(&f));
        // zero flag with payload
        let v = decode((1 << 9) | (1 << 8) | 5, &f);
        assert_eq!(v, LnsScalar::zero(&f));
        assert_eq!(stats::snapshot().decode_fixups, 2);
    }

    #[test]
    fn smallest_value_zero() {
        let f = LnsFormat::new(8, 4)
            .unwrap()
            .with_zero_mode(ZeroMode::SmallestValue);
        let z = quantize(0.0, &f).unwrap();
        assert!(z.is_zero(&f));
        assert!(!z.zero_flag());
        assert_eq!(z.log_mag(), -127);
        assert_eq!(dequantize(z, &f), 0.0);
        assert_eq!(encode(z, &f) >> 9, 0);
        // behaves as the smallest magnitude in sums
        let one = LnsScalar::one();
        assert_eq!(lns_add_with(one, z, &f, &ExactDelta::new(&f)), one);
    }

    #[test]
    fn shift_rounding() {
        assert_eq!(shift_right_half_even(5, 1), 2);
        assert_eq!(shift_right_half_even(7, 1), 4);
        assert_eq!(shift_right_half_even(6, 2), 2);
        assert_eq!(shift_right_half_even(10, 2), 2);
        assert_eq!(shift_right_half_even(11, 2), 3);
        assert_eq!(shift_right_half_even(-6, 2), -2);
        assert_eq!(shift_right_half_even(-5, 1), -2);
    }
}
