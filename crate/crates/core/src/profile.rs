//! Primitive-operation counts for one multiply-accumulate, LNS versus a
//! linear fixed-point integer datapath.
//!
//! The counts come from instrumented MAC routines that produce the same
//! results as the library arithmetic. They model datapath operations only
//! (no wiring, registers or control), so they are a qualitative proxy for
//! hardware cost, not an area estimate.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::delta::{DeltaTable, PwlCurve, DEFAULT_SEGMENTS};
use crate::error::Result;
use crate::format::{LnsFormat, ZeroMode};
use crate::scalar::{shift_right_half_even, LnsScalar};

/// Storage widths profiled by default (sign and zero flag included).
pub const DEFAULT_BITWIDTHS: [u32; 5] = [14, 16, 18, 20, 22];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    /// Integer additions and subtractions.
    pub adds: u32,
    pub multiplies: u32,
    pub shifts: u32,
    pub comparisons: u32,
    /// Single-bit logic (sign XOR, flag tests).
    pub logic: u32,
    /// Comparisons spent in the correction-table bin search.
    pub table_compares: u32,
}

impl OpCounts {
    fn max(self, o: OpCounts) -> OpCounts {
        OpCounts {
            adds: self.adds.max(o.adds),
            multiplies: self.multiplies.max(o.multiplies),
            shifts: self.shifts.max(o.shifts),
            comparisons: self.comparisons.max(o.comparisons),
            logic: self.logic.max(o.logic),
            table_compares: self.table_compares.max(o.table_compares),
        }
    }
}

fn saturate_counted(fmt: &LnsFormat, v: i64, c: &mut OpCounts) -> i32 {
    c.comparisons += 2;
    v.clamp(fmt.mag_min() as i64, fmt.mag_max() as i64) as i32
}

fn curve_counted(curve: &PwlCurve, d: i64, c: &mut OpCounts) -> i64 {
    c.table_compares += curve.search_comparisons(d);
    let seg = curve.segments()[curve.segment_index(d)];
    let mut v = seg.offset as i64;
    if seg.slope_sign != 0 {
        c.shifts += 1;
        let k = seg.slope_exponent;
        let mag = if k >= 0 {
            d << k
        } else {
            // rounding correction is one more add
            c.adds += 1;
            shift_right_half_even(d, (-k) as u32)
        };
        c.adds += 1;
        v += if seg.slope_sign < 0 { -mag } else { mag };
    }
    c.comparisons += 1;
    curve.sign().clamp(v)
}

/// `acc + a * b` in LNS, counting primitive operations.
pub fn lns_mac_counted(
    acc: LnsScalar,
    a: LnsScalar,
    b: LnsScalar,
    fmt: &LnsFormat,
    table: &DeltaTable,
    c: &mut OpCounts,
) -> LnsScalar {
    let flag = fmt.zero_mode == ZeroMode::ZeroFlag;
    // multiply: add logs, XOR signs
    if flag {
        c.logic += 1;
    }
    let prod = if flag && (a.zero_flag() || b.zero_flag()) {
        LnsScalar::zero(fmt)
    } else {
        c.adds += 1;
        c.logic += 1;
        let mag = saturate_counted(fmt, a.log_mag() as i64 + b.log_mag() as i64, c);
        LnsScalar::new(mag, a.is_negative() != b.is_negative(), fmt)
    };
    // add
    if flag {
        c.logic += 1;
        if acc.zero_flag() {
            return prod;
        }
        if prod.zero_flag() {
            return acc;
        }
    }
    c.comparisons += 1;
    let (big, small) = if acc.log_mag() >= prod.log_mag() {
        (acc, prod)
    } else {
        (prod, acc)
    };
    c.adds += 1;
    let d = big.log_mag() as i64 - small.log_mag() as i64;
    c.logic += 1;
    let same = acc.is_negative() == prod.is_negative();
    if !same {
        c.comparisons += 1;
        if d == 0 {
            return LnsScalar::zero(fmt);
        }
    }
    c.comparisons += 1;
    let corr = if d > fmt.d_limit() {
        0
    } else if same {
        curve_counted(table.plus(), d, c)
    } else {
        curve_counted(table.minus(), d, c)
    };
    c.adds += 1;
    let mag = saturate_counted(fmt, big.log_mag() as i64 + corr, c);
    LnsScalar::new(mag, big.is_negative(), fmt)
}

/// `acc + a * b` on a linear integer datapath: one multiply producing a
/// double-width product, one double-width add.
pub fn int_mac_counted(acc: i64, a: i64, b: i64, c: &mut OpCounts) -> i64 {
    c.multiplies += 1;
    let p = a * b;
    c.adds += 1;
    acc.wrapping_add(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    /// Stored word width of one operand.
    pub bitwidth: u32,
    pub lns_format: String,
    pub lns: OpCounts,
    pub int: OpCounts,
    /// Width of the integer multiplier's product.
    pub int_multiply_width: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub samples: usize,
}

/// LNS format stored in `bitwidth` bits: two overhead bits (sign, zero
/// flag) and the log-magnitude split evenly between integer and fraction.
pub fn lns_format_for(bitwidth: u32) -> Result<LnsFormat> {
    let t = bitwidth.saturating_sub(2);
    LnsFormat::new(t, t / 2)
}

/// Worst-case counts over `samples` random operand triples per bitwidth.
pub fn profile(bitwidths: &[u32], samples: usize, seed: u64) -> Result<CostReport> {
    let mut rows = Vec::new();
    for &w in bitwidths {
        let fmt = lns_format_for(w)?;
        let table = DeltaTable::uniform(&fmt, DEFAULT_SEGMENTS)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = 4i32 << fmt.frac_bits;
        let mut lns = OpCounts::default();
        let mut int = OpCounts::default();
        let half = 1i64 << (w - 1);
        for _ in 0..samples {
            let mut draw =
                || LnsScalar::new(rng.random_range(-span..=span), rng.random_bool(0.5), &fmt);
            let (acc, a, b) = (draw(), draw(), draw());
            let mut c = OpCounts::default();
            lns_mac_counted(acc, a, b, &fmt, &table, &mut c);
            lns = lns.max(c);
            let mut c = OpCounts::default();
            int_mac_counted(
                rng.random_range(-half * half..half * half),
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                &mut c,
            );
            int = int.max(c);
        }
        rows.push(CostRow {
            bitwidth: w,
            lns_format: fmt.to_string(),
            lns,
            int,
            int_multiply_width: 2 * w,
        });
    }
    Ok(CostReport { rows, samples })
}

impl CostReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:>5}  {:<5} {:>4} {:>4} {:>5} {:>4} {:>5} {:>6}  {:<5} {:>4} {:>8} {:>4}",
            "bits",
            "kind",
            "mul",
            "add",
            "shift",
            "cmp",
            "logic",
            "lookup",
            "kind",
            "mul",
            "mulwidth",
            "add"
        )
        .unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{:>5}  {:<5} {:>4} {:>4} {:>5} {:>4} {:>5} {:>6}  {:<5} {:>4} {:>8} {:>4}",
                r.bitwidth,
                "lns",
                r.lns.multiplies,
                r.lns.adds,
                r.lns.shifts,
                r.lns.comparisons,
                r.lns.logic,
                r.lns.table_compares,
                "int",
                r.int.multiplies,
                r.int_multiply_width,
                r.int.adds
            )
            .unwrap();
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "bitwidth,lns_format,lns_multiplies,lns_adds,lns_shifts,lns_comparisons,lns_logic,lns_table_compares,int_multiplies,int_multiply_width,int_adds\n",
        );
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.bitwidth,
                r.lns_format.replace(',', ";"),
                r.lns.multiplies,
                r.lns.adds,
                r.lns.shifts,
                r.lns.comparisons,
                r.lns.logic,
                r.lns.table_compares,
                r.int.multiplies,
                r.int_multiply_width,
                r.int.adds
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{lns_add_with, lns_mul};

    #[test]
    fn counted_mac_matches_library() {
        let fmt = LnsFormat::new(12, 6).unwrap();
        let table = DeltaTable::uniform(&fmt, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let mut draw = || {
                if rng.random_bool(0.1) {
                    LnsScalar::zero(&fmt)
                } else {
                    LnsScalar::new(rng.random_range(-300..300), rng.random_bool(0.5), &fmt)
                }
            };
            let (acc, a, b) = (draw(), draw(), draw());
            let want = lns_add_with(acc, lns_mul(a, b, &fmt), &fmt, &table);
            let mut c = OpCounts::default();
            assert_eq!(lns_mac_counted(acc, a, b, &fmt, &table, &mut c), want);
            assert_eq!(c.multiplies, 0);
        }
    }

    #[test]
    fn report_covers_bitwidths() {
        let r = profile(&DEFAULT_BITWIDTHS, 200, 3).unwrap();
        assert_eq!(r.rows.len(), 5);
        for row in &r.rows {
            assert_eq!(row.lns.multiplies, 0);
            assert_eq!(row.int.multiplies, 1);
            assert!(row.lns.table_compares <= 5);
        }
        assert!(r.to_text().contains("22"));
    }
}
