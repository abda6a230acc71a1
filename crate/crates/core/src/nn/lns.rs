use std::cmp::Ordering;

use crate::delta::{fit_uniform, DeltaTable, PwlCurve, SlopeRange, TargetCurve};
use crate::error::Result;
use crate::format::LnsFormat;
use crate::nn::arith::Arith;
use crate::reference::ExactDelta;
use crate::scalar::{
    dequantize, lns_add_with, lns_compare, lns_div, lns_mul, lns_sqrt, quantize, DeltaEval,
    LnsScalar,
};

/// Segments in the softmax exponential table.
pub const POW2_SEGMENTS: usize = 256;
/// Input range of the exponential table, in log2 units of the exponent's log.
pub const POW2_RANGE: i64 = 16;

/// Piecewise-linear exponential used by the softmax.
///
/// Input is `v = (I - 1) * 2^F - l` where `l` is the LNS log of a
/// non-negative exponent `u`; the output approximates `u * 2^F`, i.e. the
/// scaled log-magnitude of `2^-u`. Past the domain `u` is below `2^(I-1-R)`
/// and the output is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Pow2Table {
    curve: PwlCurve,
}

impl Pow2Table {
    pub fn new(fmt: &LnsFormat) -> Result<Self> {
        Self::with_segments(fmt, POW2_SEGMENTS)
    }

    pub fn with_segments(fmt: &LnsFormat, segments: usize) -> Result<Self> {
        let domain = Self::domain_end(fmt);
        let n = segments.min(domain as usize + 1);
        let slopes = SlopeRange {
            min: -(fmt.frac_bits as i32 + 2),
            max: fmt.int_bits() as i32,
        };
        let curve = fit_uniform(Self::target(fmt), n, domain, fmt, slopes)?;
        Ok(Pow2Table { curve })
    }

    fn target(fmt: &LnsFormat) -> TargetCurve {
        TargetCurve::Pow2 {
            scale_log2: (fmt.int_bits() - 1 + fmt.frac_bits) as i32,
        }
    }

    pub fn domain_end(fmt: &LnsFormat) -> i64 {
        POW2_RANGE << fmt.frac_bits
    }

    pub fn curve(&self) -> &PwlCurve {
        &self.curve
    }

    #[inline]
    pub fn eval(&self, v: i64) -> i64 {
        self.curve.eval_nonneg(v)
    }
}

/// Where addition corrections come from.
#[derive(Debug, Clone)]
pub enum DeltaSource {
    Table(DeltaTable),
    Exact(ExactDelta),
}

impl DeltaEval for DeltaSource {
    #[inline]
    fn delta_plus(&self, d: i64) -> i64 {
        match self {
            DeltaSource::Table(t) => t.delta_plus(d),
            DeltaSource::Exact(e) => e.delta_plus(d),
        }
    }

    #[inline]
    fn delta_minus(&self, d: i64) -> i64 {
        match self {
            DeltaSource::Table(t) => t.delta_minus(d),
            DeltaSource::Exact(e) => e.delta_minus(d),
        }
    }
}

#[derive(Debug, Clone)]
enum Pow2Source {
    Table(Pow2Table),
    Exact,
}

/// Bit-true LNS arithmetic with a fixed correction source.
#[derive(Debug, Clone)]
pub struct LnsArith {
    fmt: LnsFormat,
    delta: DeltaSource,
    pow2: Pow2Source,
    log2e: LnsScalar,
}

impl LnsArith {
    /// Table-driven addition and a table-driven softmax exponential.
    pub fn with_table(fmt: &LnsFormat, table: DeltaTable) -> Result<Self> {
        table.check_format(fmt)?;
        Ok(LnsArith {
            fmt: *fmt,
            delta: DeltaSource::Table(table),
            pow2: Pow2Source::Table(Pow2Table::new(fmt)?),
            log2e: quantize(std::f64::consts::LOG2_E, fmt)?,
        })
    }

    /// Exact corrections and exponential; only quantization error remains.
    pub fn exact(fmt: &LnsFormat) -> Result<Self> {
        Ok(LnsArith {
            fmt: *fmt,
            delta: DeltaSource::Exact(ExactDelta::new(fmt)),
            pow2: Pow2Source::Exact,
            log2e: quantize(std::f64::consts::LOG2_E, fmt)?,
        })
    }

    pub fn format(&self) -> &LnsFormat {
        &self.fmt
    }

    pub fn delta(&self) -> &DeltaSource {
        &self.delta
    }

    /// `e^y` for `y <= 0`.
    fn exp_nonpositive(&self, y: LnsScalar) -> LnsScalar {
        let fmt = &self.fmt;
        if y.is_zero(fmt) {
            return LnsScalar::one();
        }
        // log of u = |y| * log2(e), so that e^y = 2^-u
        let w = lns_mul(y.abs(), self.log2e, fmt);
        let v = ((fmt.int_bits() as i64 - 1) << fmt.frac_bits) - w.log_mag() as i64;
        if v < 0 {
            return LnsScalar::zero(fmt);
        }
        let scaled_u = match &self.pow2 {
            Pow2Source::Table(t) => t.eval(v),
            Pow2Source::Exact => {
                let u = (w.log_mag() as f64 / fmt.scale()).exp2();
                (u * fmt.scale()).round_ties_even() as i64
            }
        };
        LnsScalar::new((-scaled_u).max(fmt.mag_min() as i64) as i32, false, fmt)
    }
}

impl Arith for LnsArith {
    type Scalar = LnsScalar;

    #[inline]
    fn zero(&self) -> LnsScalar {
        LnsScalar::zero(&self.fmt)
    }

    #[inline]
    fn one(&self) -> LnsScalar {
        LnsScalar::one()
    }

    fn from_f64(&self, x: f64) -> Result<LnsScalar> {
        quantize(x, &self.fmt)
    }

    fn to_f64(&self, v: LnsScalar) -> f64 {
        dequantize(v, &self.fmt)
    }

    #[inline]
    fn mul(&self, a: LnsScalar, b: LnsScalar) -> LnsScalar {
        lns_mul(a, b, &self.fmt)
    }

    #[inline]
    fn add(&self, a: LnsScalar, b: LnsScalar) -> LnsScalar {
        lns_add_with(a, b, &self.fmt, &self.delta)
    }

    #[inline]
    fn neg(&self, a: LnsScalar) -> LnsScalar {
        a.negate(&self.fmt)
    }

    fn div(&self, a: LnsScalar, b: LnsScalar) -> Result<LnsScalar> {
        lns_div(a, b, &self.fmt)
    }

    fn sqrt(&self, a: LnsScalar) -> Result<LnsScalar> {
        lns_sqrt(a, &self.fmt)
    }

    #[inline]
    fn cmp(&self, a: LnsScalar, b: LnsScalar) -> Ordering {
        lns_compare(&a, &b)
    }

    #[inline]
    fn is_zero(&self, a: LnsScalar) -> bool {
        a.is_zero(&self.fmt)
    }

    #[inline]
    fn is_negative(&self, a: LnsScalar) -> bool {
        a.is_negative()
    }

    /// `2^(2 - F)`, exactly representable.
    fn bn_epsilon(&self) -> f64 {
        (2.0 - self.fmt.frac_bits as f64).exp2()
    }

    fn softmax(&self, logits: &[LnsScalar]) -> Vec<LnsScalar> {
        if logits.is_empty() {
            return Vec::new();
        }
        let top = logits[self.argmax(logits)];
        let neg_top = self.neg(top);
        let p: Vec<LnsScalar> = logits
            .iter()
            .map(|&x| self.exp_nonpositive(self.add(x, neg_top)))
            .collect();
        let total = self.sum(p.iter().copied());
        // total >= 1 because the top logit contributes exactly one
        p.into_iter()
            .map(|v| lns_div(v, total, &self.fmt).expect("softmax denominator is non-zero"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmt12() -> LnsFormat {
        LnsFormat::new(12, 6).unwrap()
    }

    #[test]
    fn pow2_table_tracks_target() {
        let f = fmt12();
        let t = Pow2Table::new(&f).unwrap();
        assert_eq!(t.curve().len(), POW2_SEGMENTS);
        let target = Pow2Table::target(&f);
        let mut worst: f64 = 0.0;
        for v in 0..=Pow2Table::domain_end(&f) {
            let e = (t.eval(v) as f64 - target.value(v as f64, &f)).abs();
            worst = worst.max(e);
        }
        // four grid steps per segment at a slope near -22 fit by -16
        assert!(worst < 40.0, "{worst}");
        assert_eq!(t.eval(Pow2Table::domain_end(&f) + 1), 0);
    }

    #[test]
    fn uniform_logits_share_probability() {
        let f = fmt12();
        let a = LnsArith::with_table(&f, DeltaTable::uniform(&f, 16).unwrap()).unwrap();
        for c in [2usize, 4, 8] {
            let x = vec![a.from_f64(0.7).unwrap(); c];
            for p in a.softmax(&x) {
                let v = a.to_f64(p);
                assert!((v - 1.0 / c as f64).abs() < 0.02 / c as f64, "{c}: {v}");
            }
        }
    }

    #[test]
    fn dominant_logit_takes_everything() {
        let f = fmt12();
        let a = LnsArith::with_table(&f, DeltaTable::uniform(&f, 16).unwrap()).unwrap();
        let x: Vec<_> = [40.0, 1.0, -3.0]
            .iter()
            .map(|&v| a.from_f64(v).unwrap())
            .collect();
        let p = a.softmax(&x);
        assert_eq!(p[0], LnsScalar::one());
        assert!(a.is_zero(p[1]) && a.is_zero(p[2]));
    }

    #[test]
    fn exact_softmax_is_close_to_real() {
        let f = LnsFormat::new(20, 12).unwrap();
        let a = LnsArith::exact(&f).unwrap();
        let xs = [0.3, -1.2, 2.2, 0.0];
        let x: Vec<_> = xs.iter().map(|&v| a.from_f64(v).unwrap()).collect();
        let p = a.softmax(&x);
        let z: f64 = xs.iter().map(|v| v.exp()).sum();
        for (pi, xi) in p.iter().zip(xs) {
            let r = xi.exp() / z;
            assert!((a.to_f64(*pi) / r - 1.0).abs() < 5e-3);
        }
    }
}
