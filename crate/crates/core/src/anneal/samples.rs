//! Operand samples and the losses the annealer minimizes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::delta::{DeltaTable, PwlCurve, TargetCurve};
use crate::error::{LnsError, Result};
use crate::format::{LnsFormat, ZeroMode};
use crate::scalar::{dequantize, lns_add_with, quantize, LnsScalar};

/// How a sample's table-dependent part decomposes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SampleCase {
    /// Result does not depend on the table (zero operand, exact
    /// cancellation, or `d` past the curve domain).
    Fixed(f64),
    /// `big + curve(d)` with the sign of the larger operand.
    Curve {
        minus: bool,
        d: i64,
        big_mag: i32,
        negative: bool,
    },
}

/// Pairs of real operands `x`, `y` with their quantized forms and the ideal
/// results `quantize(x + y)` read back in double precision.
#[derive(Debug, Clone)]
pub struct SampleSet {
    fmt: LnsFormat,
    x: Vec<f64>,
    y: Vec<f64>,
    qx: Vec<LnsScalar>,
    qy: Vec<LnsScalar>,
    ideal: Vec<f64>,
    cases: Vec<SampleCase>,
}

impl SampleSet {
    /// `n` pairs drawn from a zero-mean normal with the given variance.
    pub fn normal(fmt: &LnsFormat, n: usize, variance: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(LnsError::Config("sample count must be at least 1".into()));
        }
        let dist = Normal::new(0.0, variance.sqrt())
            .map_err(|e| LnsError::Config(format!("sample distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            x.push(dist.sample(&mut rng));
            y.push(dist.sample(&mut rng));
        }
        Self::from_pairs(fmt, x, y)
    }

    pub fn from_pairs(fmt: &LnsFormat, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(LnsError::Config(
                "sample vectors must be non-empty and equally long".into(),
            ));
        }
        let mut qx = Vec::with_capacity(x.len());
        let mut qy = Vec::with_capacity(x.len());
        let mut ideal = Vec::with_capacity(x.len());
        let mut cases = Vec::with_capacity(x.len());
        for (&a, &b) in x.iter().zip(&y) {
            let (qa, qb) = (quantize(a, fmt)?, quantize(b, fmt)?);
            qx.push(qa);
            qy.push(qb);
            ideal.push(dequantize(quantize(a + b, fmt)?, fmt));
            cases.push(classify(qa, qb, fmt));
        }
        Ok(SampleSet {
            fmt: *fmt,
            x,
            y,
            qx,
            qy,
            ideal,
            cases,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn format(&self) -> &LnsFormat {
        &self.fmt
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn ideal(&self) -> &[f64] {
        &self.ideal
    }

    pub(crate) fn cases(&self) -> &[SampleCase] {
        &self.cases
    }
}

fn classify(a: LnsScalar, b: LnsScalar, fmt: &LnsFormat) -> SampleCase {
    if fmt.zero_mode == ZeroMode::ZeroFlag && (a.zero_flag() || b.zero_flag()) {
        let other = if a.zero_flag() { b } else { a };
        return SampleCase::Fixed(dequantize(other, fmt));
    }
    let (big, small) = if a.log_mag() >= b.log_mag() {
        (a, b)
    } else {
        (b, a)
    };
    let d = big.log_mag() as i64 - small.log_mag() as i64;
    let minus = a.is_negative() != b.is_negative();
    if minus && d == 0 {
        return SampleCase::Fixed(0.0);
    }
    if d > fmt.d_limit() {
        return SampleCase::Fixed(dequantize(big, fmt));
    }
    SampleCase::Curve {
        minus,
        d,
        big_mag: big.log_mag(),
        negative: big.is_negative(),
    }
}

/// Result of a table-dependent sample, mirroring `lns_add_with`.
#[inline]
pub(crate) fn curve_result(
    fmt: &LnsFormat,
    curve: &PwlCurve,
    d: i64,
    big_mag: i32,
    negative: bool,
) -> f64 {
    let mag = fmt.saturate(big_mag as i64 + curve.eval_nonneg(d));
    dequantize(LnsScalar::raw(mag, negative), fmt)
}

/// Mean squared linear-domain error between the table adder's results and
/// the ideal quantized sums. Summation runs in sample order.
pub fn qa_loss(table: &DeltaTable, fmt: &LnsFormat, samples: &SampleSet) -> Result<f64> {
    table.check_format(fmt)?;
    if samples.fmt != *fmt {
        return Err(LnsError::FormatMismatch {
            expected: fmt.to_string(),
            found: samples.fmt.to_string(),
        });
    }
    let mut sum = 0.0;
    for i in 0..samples.len() {
        let z = dequantize(lns_add_with(samples.qx[i], samples.qy[i], fmt, table), fmt);
        let e = samples.ideal[i] - z;
        sum += e * e;
    }
    Ok(sum / samples.len() as f64)
}

/// Mean squared error, in log2 units, between a curve and its real-valued
/// target on a grid of scaled inputs.
pub fn curve_mse_loss(curve: &PwlCurve, target: TargetCurve, grid: &[i64], fmt: &LnsFormat) -> f64 {
    if grid.is_empty() {
        return 0.0;
    }
    let s = fmt.scale();
    let sum: f64 = grid
        .iter()
        .map(|&d| {
            let e = (target.value(d as f64, fmt) - curve.eval_nonneg(d) as f64) / s;
            e * e
        })
        .sum();
    sum / grid.len() as f64
}

/// [`curve_mse_loss`] over both curves of a table on the integer grid
/// `[0, d_limit]` (the `Δ-` singularity at 0 excluded).
pub fn table_curve_mse(table: &DeltaTable, fmt: &LnsFormat) -> Result<(f64, f64)> {
    table.check_format(fmt)?;
    let grid: Vec<i64> = (0..=fmt.d_limit()).collect();
    Ok((
        curve_mse_loss(table.plus(), TargetCurve::DeltaPlus, &grid, fmt),
        curve_mse_loss(table.minus(), TargetCurve::DeltaMinus, &grid[1..], fmt),
    ))
}
