//! Least-squares fitting of power-of-two-slope segments.

use crate::delta::{CurveSign, PwlCurve, PwlSegment};
use crate::error::{LnsError, Result};
use crate::format::LnsFormat;
use crate::scalar::shift_right_half_even;

/// A real-valued curve to approximate, in scaled-integer units on both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetCurve {
    /// `log2(1 + 2^-d)`
    DeltaPlus,
    /// `log2(1 - 2^-d)`, clamped below at the format's `mag_min`.
    DeltaMinus,
    /// `2^(scale_log2 - d)`, the exponential used by the softmax.
    Pow2 { scale_log2: i32 },
}

impl TargetCurve {
    /// True value at scaled input `d`, in scaled output units, clamped to the
    /// format's magnitude range.
    pub fn value(&self, d: f64, fmt: &LnsFormat) -> f64 {
        let s = fmt.scale();
        let x = d / s;
        let v = match self {
            TargetCurve::DeltaPlus => (-x).exp2().ln_1p() / std::f64::consts::LN_2 * s,
            TargetCurve::DeltaMinus => (-(-x).exp2()).ln_1p() / std::f64::consts::LN_2 * s,
            TargetCurve::Pow2 { scale_log2 } => (*scale_log2 as f64 - x).exp2(),
        };
        v.clamp(fmt.mag_min() as f64, fmt.mag_max() as f64)
    }

    pub fn sign(&self) -> CurveSign {
        match self {
            TargetCurve::DeltaMinus => CurveSign::NonPositive,
            _ => CurveSign::NonNegative,
        }
    }
}

/// Inclusive range of candidate slope exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SlopeRange {
    pub min: i32,
    pub max: i32,
}

impl SlopeRange {
    /// `[-(F + 2), 1]`: slopes finer than the offset grid are invisible and
    /// the correction curves never get steeper than 2 past the first bin.
    pub fn for_format(fmt: &LnsFormat) -> Self {
        SlopeRange {
            min: -(fmt.frac_bits as i32 + 2),
            max: 1,
        }
    }

    /// Candidate `(slope_sign, exponent)` pairs, the flat slope first.
    pub fn candidates(&self) -> Vec<(i8, i32)> {
        let mut out = vec![(0i8, 0i32)];
        for k in self.min..=self.max {
            out.push((-1, k));
            out.push((1, k));
        }
        out
    }
}

/// How the slope term is evaluated while fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SlopeModel {
    /// Real product `a * d` at real sample points.
    Real,
    /// Bit-true shift with round-half-even at integer sample points.
    BitTrue,
}

fn slope_term(model: SlopeModel, sign: i8, k: i32, d: f64) -> f64 {
    if sign == 0 {
        return 0.0;
    }
    let mag = match model {
        SlopeModel::Real => d * (k as f64).exp2(),
        SlopeModel::BitTrue => {
            let di = d as i64;
            (if k >= 0 {
                di << k
            } else {
                shift_right_half_even(di, (-k) as u32)
            }) as f64
        }
    };
    sign as f64 * mag
}

/// Best `(slope, offset)` for one segment over `samples` of `(d, target)`.
///
/// For each candidate slope the offset is the mean residual rounded to the
/// integer grid; the candidate with the lowest squared error of the clamped
/// output wins, ties going to smaller `|k|` and then to the flat slope.
pub(crate) fn fit_segment(
    bin_start: i32,
    samples: &[(f64, f64)],
    model: SlopeModel,
    slopes: SlopeRange,
    sign: CurveSign,
    fmt: &LnsFormat,
) -> PwlSegment {
    if samples.is_empty() {
        return PwlSegment::constant(bin_start, 0);
    }
    let n = samples.len() as f64;
    let lo = fmt.mag_min() as f64;
    let hi = fmt.mag_max() as f64;
    let mut best: Option<(f64, u32, bool, PwlSegment)> = None;
    for (s, k) in slopes.candidates() {
        let mean_res = samples
            .iter()
            .map(|&(d, t)| t - slope_term(model, s, k, d))
            .sum::<f64>()
            / n;
        let offset = mean_res.round_ties_even().clamp(lo, hi);
        let mse = samples
            .iter()
            .map(|&(d, t)| {
                let raw = slope_term(model, s, k, d) + offset;
                let y = match sign {
                    CurveSign::NonNegative => raw.max(0.0),
                    CurveSign::NonPositive => raw.min(0.0),
                };
                (t - y) * (t - y)
            })
            .sum::<f64>()
            / n;
        let seg = PwlSegment {
            bin_start,
            slope_sign: s,
            slope_exponent: k,
            offset: offset as i32,
        };
        let key = (mse, if s == 0 { 0 } else { k.unsigned_abs() }, s != 0);
        let better = match &best {
            None => true,
            Some((bm, bk, bs, _)) => key.0 < *bm || (key.0 == *bm && (key.1, key.2) < (*bk, *bs)),
        };
        if better {
            best = Some((key.0, key.1, key.2, seg));
        }
    }
    best.unwrap().3
}

/// Uniform bin starts for `n` segments over `[0, domain_end]`.
pub(crate) fn uniform_bins(n: usize, domain_end: i64) -> Result<Vec<i32>> {
    if n == 0 || domain_end < 0 || (n as i64) > domain_end + 1 {
        return Err(LnsError::EmptyDomain);
    }
    let span = domain_end + 1;
    Ok((0..n)
        .map(|i| ((i as i64 * span) / n as i64) as i32)
        .collect())
}

/// Fits `n_segments` uniform bins to a real-valued target by least squares on
/// densely sampled real inputs, then rounds offsets to the fixed-point grid.
///
/// This ignores how the adder quantizes operands and results: it is the
/// curve-matching construction used for baseline tables and for the softmax
/// exponential.
pub fn fit_uniform(
    target: TargetCurve,
    n_segments: usize,
    domain_end: i64,
    fmt: &LnsFormat,
    slopes: SlopeRange,
) -> Result<PwlCurve> {
    fit_uniform_with(
        |d| target.value(d, fmt),
        target.sign(),
        n_segments,
        domain_end,
        fmt,
        slopes,
    )
}

/// [`fit_uniform`] for an arbitrary target function of the scaled input.
pub fn fit_uniform_with<T: Fn(f64) -> f64>(
    target: T,
    sign: CurveSign,
    n_segments: usize,
    domain_end: i64,
    fmt: &LnsFormat,
    slopes: SlopeRange,
) -> Result<PwlCurve> {
    let bins = uniform_bins(n_segments, domain_end)?;
    let mut segments = Vec::with_capacity(n_segments);
    for (i, &start) in bins.iter().enumerate() {
        let end = bins.get(i + 1).map_or(domain_end, |&b| b as i64 - 1);
        let samples = dense_samples(start as i64, end, &target);
        segments.push(fit_segment(
            start,
            &samples,
            SlopeModel::Real,
            slopes,
            sign,
            fmt,
        ));
    }
    PwlCurve::new(segments, domain_end, sign)
}

/// Four samples per integer step over `[start, end]`, endpoints included,
/// capped at 4097 points per segment.
fn dense_samples<T: Fn(f64) -> f64>(start: i64, end: i64, target: &T) -> Vec<(f64, f64)> {
    let width = (end - start) as f64;
    let count = ((end - start) * 4 + 1).min(4097) as usize;
    (0..count)
        .map(|j| {
            let d = if count == 1 {
                start as f64
            } else {
                start as f64 + width * j as f64 / (count - 1) as f64
            };
            (d, target(d))
        })
        .filter(|(_, t)| t.is_finite())
        .collect()
}
