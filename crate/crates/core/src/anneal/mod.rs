//! Per-bitwidth optimization of correction tables by simulated annealing.
//!
//! The chain starts from the uniform curve fit. Each step moves one interior
//! bin boundary of one curve to a uniformly drawn position between its
//! neighbours and refits the two touched segments on the integer grid. The
//! proposal is scored by the quantization-aware loss [`qa_loss`] and accepted
//! with the Metropolis rule under a half-cosine temperature schedule. The best
//! table seen is returned.

mod samples;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use samples::{curve_mse_loss, qa_loss, table_curve_mse, SampleSet};
use samples::{curve_result, SampleCase};

use crate::delta::{
    fit_segment, DeltaTable, PwlCurve, PwlSegment, SlopeModel, SlopeRange, TargetCurve,
    DEFAULT_SEGMENTS,
};
use crate::error::{LnsError, Result};
use crate::format::LnsFormat;

pub const DEFAULT_ITERATIONS: u64 = 20_000;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_VARIANCE: f64 = 3.0;
/// Initial temperature as a fraction of the starting loss, when unset.
pub const DEFAULT_T0_FRACTION: f64 = 0.1;
/// Progress records are emitted every this many iterations.
pub const PROGRESS_EVERY: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub format: LnsFormat,
    pub iterations: u64,
    /// `None` picks `0.1 *` the initial loss.
    pub initial_temperature: Option<f64>,
    pub sample_count: usize,
    /// Variance of the zero-mean normal operand distribution.
    pub sample_variance: f64,
    pub slopes: SlopeRange,
    pub seed: u64,
    pub segments: usize,
}

impl AnnealConfig {
    pub fn new(format: LnsFormat, seed: u64) -> Self {
        AnnealConfig {
            format,
            iterations: DEFAULT_ITERATIONS,
            initial_temperature: None,
            sample_count: DEFAULT_SAMPLES,
            sample_variance: DEFAULT_VARIANCE,
            slopes: SlopeRange::for_format(&format),
            seed,
            segments: DEFAULT_SEGMENTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.format.validate()?;
        if self.iterations == 0 {
            return Err(LnsError::Config("iterations must be at least 1".into()));
        }
        if self.sample_count == 0 {
            return Err(LnsError::Config("sample count must be at least 1".into()));
        }
        if let Some(t0) = self.initial_temperature {
            if !(t0 > 0.0 && t0.is_finite()) {
                return Err(LnsError::Config(format!(
                    "initial temperature {t0} must be > 0"
                )));
            }
        }
        if !(self.sample_variance > 0.0 && self.sample_variance.is_finite()) {
            return Err(LnsError::Config("sample variance must be > 0".into()));
        }
        if self.segments == 0 {
            return Err(LnsError::Config("segment count must be at least 1".into()));
        }
        if self.slopes.min > self.slopes.max {
            return Err(LnsError::Config("empty slope exponent range".into()));
        }
        Ok(())
    }

    /// The chain's training samples. Drawn from a seed derived from, but not
    /// equal to, the chain seed.
    pub fn sample_set(&self) -> Result<SampleSet> {
        SampleSet::normal(
            &self.format,
            self.sample_count,
            self.sample_variance,
            self.seed ^ 0x5eed_5a3b_1e5e_7000,
        )
    }
}

/// Half-cosine cooling: `t0` at `t = 0`, zero at `t = t_max`.
pub fn temperature(t0: f64, t: u64, t_max: u64) -> f64 {
    if t >= t_max {
        return 0.0;
    }
    t0 * 0.5 * (1.0 + (PI * t as f64 / t_max as f64).cos())
}

/// Metropolis acceptance. Never accepts an uphill move at zero temperature.
pub fn accept(delta_loss: f64, temp: f64, u: f64) -> bool {
    if delta_loss <= 0.0 {
        return true;
    }
    temp > 0.0 && u < (-delta_loss / temp).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub iteration: u64,
    pub temperature: f64,
    pub current_loss: f64,
    pub best_loss: f64,
}

/// Refits one segment covering `[lo, hi]` to the true curve on the integer
/// grid, with bit-true shifts. `Δ-` skips `d = 0`, which never reaches a
/// table.
pub fn refit_segment(
    target: TargetCurve,
    lo: i64,
    hi: i64,
    fmt: &LnsFormat,
    slopes: SlopeRange,
) -> Result<PwlSegment> {
    if hi < lo || lo < 0 {
        return Err(LnsError::EmptyDomain);
    }
    let samples: Vec<(f64, f64)> = (lo..=hi)
        .filter(|&d| !(target == TargetCurve::DeltaMinus && d == 0))
        .map(|d| (d as f64, target.value(d as f64, fmt)))
        .collect();
    Ok(refit_from_samples(lo, &samples, target, fmt, slopes))
}

fn refit_from_samples(
    lo: i64,
    samples: &[(f64, f64)],
    target: TargetCurve,
    fmt: &LnsFormat,
    slopes: SlopeRange,
) -> PwlSegment {
    if samples.is_empty() {
        // only the excluded point d = 0 of the minus curve
        let v = target.value(lo as f64, fmt).round_ties_even() as i32;
        return PwlSegment::constant(lo as i32, v);
    }
    fit_segment(
        lo as i32,
        samples,
        SlopeModel::BitTrue,
        slopes,
        target.sign(),
        fmt,
    )
}

/// Cached true-curve values on the integer grid, one vector per curve.
struct TargetCache {
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl TargetCache {
    fn new(fmt: &LnsFormat) -> Self {
        let grid = 0..=fmt.d_limit();
        TargetCache {
            plus: grid
                .clone()
                .map(|d| TargetCurve::DeltaPlus.value(d as f64, fmt))
                .collect(),
            minus: grid
                .map(|d| TargetCurve::DeltaMinus.value(d as f64, fmt))
                .collect(),
        }
    }

    fn samples(&self, minus: bool, lo: i64, hi: i64) -> Vec<(f64, f64)> {
        let v = if minus { &self.minus } else { &self.plus };
        (lo..=hi)
            .filter(|&d| !(minus && d == 0))
            .map(|d| (d as f64, v[d as usize]))
            .collect()
    }
}

fn curve_of(table: &DeltaTable, minus: bool) -> &PwlCurve {
    if minus {
        table.minus()
    } else {
        table.plus()
    }
}

/// Which bin a proposal moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Move {
    minus: bool,
    bin: usize,
}

fn propose(
    table: &DeltaTable,
    rng: &mut ChaCha8Rng,
    fmt: &LnsFormat,
    slopes: SlopeRange,
    cache: &TargetCache,
) -> Option<(DeltaTable, Move)> {
    let movable = |c: &PwlCurve| c.len() >= 2;
    if !movable(table.plus()) && !movable(table.minus()) {
        return None;
    }
    for _ in 0..256 {
        let minus = rng.random_bool(0.5);
        let curve = curve_of(table, minus);
        let n = curve.len();
        if n < 2 {
            continue;
        }
        let i = rng.random_range(1..n);
        let prev = curve.segments()[i - 1].bin_start as i64;
        let next = curve
            .segments()
            .get(i + 1)
            .map_or(curve.domain_end() + 1, |s| s.bin_start as i64);
        if next - prev < 2 {
            continue;
        }
        let new_start = rng.random_range(prev + 1..next);
        let mut out = table.clone();
        let (plus_c, minus_c) = out.curves_mut();
        let c = if minus { minus_c } else { plus_c };
        let target = if minus {
            TargetCurve::DeltaMinus
        } else {
            TargetCurve::DeltaPlus
        };
        let left = refit_from_samples(
            prev,
            &cache.samples(minus, prev, new_start - 1),
            target,
            fmt,
            slopes,
        );
        let right = refit_from_samples(
            new_start,
            &cache.samples(minus, new_start, next - 1),
            target,
            fmt,
            slopes,
        );
        c.set_segment(i - 1, left);
        c.set_segment(i, right);
        return Some((out, Move { minus, bin: i }));
    }
    None
}

/// One annealing proposal: move a random interior bin of a random curve and
/// refit its two segments. The input table is left untouched. If no bin can
/// move, the table is returned unchanged.
pub fn neighbor(
    table: &DeltaTable,
    rng: &mut ChaCha8Rng,
    slopes: SlopeRange,
) -> Result<DeltaTable> {
    let fp = table.fingerprint();
    let fmt = LnsFormat::new(fp.total_bits, fp.fractional_bits)?.with_d_max(fp.d_max)?;
    let cache = TargetCache::new(&fmt);
    Ok(propose(table, rng, &fmt, slopes, &cache)
        .map(|(t, _)| t)
        .unwrap_or_else(|| table.clone()))
}

/// Incremental evaluator of [`qa_loss`]: keeps per-sample squared errors and
/// recomputes only the samples whose `d` falls in a changed range. The total
/// is always re-summed in sample order, so it matches [`qa_loss`] bit for bit.
struct LossTracker<'a> {
    fmt: LnsFormat,
    samples: &'a SampleSet,
    errors: Vec<f64>,
    /// Sample indices per curve, sorted by `d`.
    by_d: [Vec<(i64, usize)>; 2],
    saved: Vec<(usize, f64)>,
}

impl<'a> LossTracker<'a> {
    fn new(fmt: &LnsFormat, samples: &'a SampleSet, table: &DeltaTable) -> Self {
        let mut by_d: [Vec<(i64, usize)>; 2] = [Vec::new(), Vec::new()];
        for (i, c) in samples.cases().iter().enumerate() {
            if let SampleCase::Curve { minus, d, .. } = *c {
                by_d[minus as usize].push((d, i));
            }
        }
        by_d[0].sort_unstable();
        by_d[1].sort_unstable();
        let mut t = LossTracker {
            fmt: *fmt,
            samples,
            errors: vec![0.0; samples.len()],
            by_d,
            saved: Vec::new(),
        };
        for i in 0..samples.len() {
            t.errors[i] = t.sample_error(table, i);
        }
        t
    }

    fn sample_error(&self, table: &DeltaTable, i: usize) -> f64 {
        let z = match self.samples.cases()[i] {
            SampleCase::Fixed(z) => z,
            SampleCase::Curve {
                minus,
                d,
                big_mag,
                negative,
            } => curve_result(&self.fmt, curve_of(table, minus), d, big_mag, negative),
        };
        let e = self.samples.ideal()[i] - z;
        e * e
    }

    fn total(&self) -> f64 {
        let mut sum = 0.0;
        for e in &self.errors {
            sum += e;
        }
        sum / self.errors.len() as f64
    }

    /// Updates errors for samples of one curve with `d` in `[lo, hi]`,
    /// remembering the old values for [`Self::revert`].
    fn update(&mut self, table: &DeltaTable, minus: bool, lo: i64, hi: i64) {
        self.saved.clear();
        let list = &self.by_d[minus as usize];
        let start = list.partition_point(|&(d, _)| d < lo);
        let end = list.partition_point(|&(d, _)| d <= hi);
        for &(_, i) in &list[start..end] {
            self.saved.push((i, self.errors[i]));
        }
        for k in 0..self.saved.len() {
            let i = self.saved[k].0;
            self.errors[i] = self.sample_error(table, i);
        }
    }

    fn revert(&mut self) {
        for &(i, e) in &self.saved {
            self.errors[i] = e;
        }
        self.saved.clear();
    }
}

/// Runs the annealing chain and returns the best table found.
pub fn anneal(config: &AnnealConfig) -> Result<DeltaTable> {
    anneal_with_progress(config, |_| {})
}

/// [`anneal`], reporting a [`Progress`] record every [`PROGRESS_EVERY`]
/// iterations and after the last one.
pub fn anneal_with_progress<P: FnMut(&Progress)>(
    config: &AnnealConfig,
    mut progress: P,
) -> Result<DeltaTable> {
    config.validate()?;
    let fmt = config.format;
    let samples = config.sample_set()?;
    let slopes = config.slopes;
    let cache = TargetCache::new(&fmt);

    let mut current = DeltaTable::uniform(&fmt, config.segments)?;
    let mut tracker = LossTracker::new(&fmt, &samples, &current);
    let mut current_loss = tracker.total();
    let initial_loss = current_loss;
    let t0 = config
        .initial_temperature
        .unwrap_or(DEFAULT_T0_FRACTION * initial_loss)
        .max(f64::MIN_POSITIVE);
    let mut best = current.clone();
    let mut best_loss = current_loss;
    let mut accepted = 0u64;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let t_max = config.iterations;
    for t in 0..t_max {
        let temp = temperature(t0, t, t_max);
        if let Some((candidate, mv)) = propose(&current, &mut rng, &fmt, slopes, &cache) {
            let curve = curve_of(&candidate, mv.minus);
            let lo = curve.segment_range(mv.bin - 1).0;
            let hi = curve.segment_range(mv.bin).1;
            tracker.update(&candidate, mv.minus, lo, hi);
            let loss = tracker.total();
            let delta = loss - current_loss;
            let u = if delta > 0.0 && temp > 0.0 {
                rng.random::<f64>()
            } else {
                0.0
            };
            if accept(delta, temp, u) {
                current = candidate;
                current_loss = loss;
                accepted += 1;
                if loss < best_loss {
                    best_loss = loss;
                    best = current.clone();
                }
            } else {
                tracker.revert();
            }
        }
        if (t + 1) % PROGRESS_EVERY == 0 || t + 1 == t_max {
            progress(&Progress {
                iteration: t + 1,
                temperature: temp,
                current_loss,
                best_loss,
            });
        }
    }
    log::debug!(
        "anneal {fmt}: initial loss {initial_loss:e}, best {best_loss:e}, accepted {accepted}/{t_max}"
    );

    best.metadata.seed = Some(config.seed);
    best.metadata.qa_loss = Some(format!("{best_loss:e}"));
    best.metadata.created_by = format!("qaa-lns {} anneal", env!("CARGO_PKG_VERSION"));
    best.metadata.params = BTreeMap::from([
        ("iterations".to_string(), config.iterations.to_string()),
        ("initial_temperature".to_string(), format!("{t0:e}")),
        ("initial_qa_loss".to_string(), format!("{initial_loss:e}")),
        ("sample_count".to_string(), config.sample_count.to_string()),
        (
            "sample_variance".to_string(),
            format!("{}", config.sample_variance),
        ),
        ("segments".to_string(), config.segments.to_string()),
        (
            "slope_exponents".to_string(),
            format!("{}..={}", slopes.min, slopes.max),
        ),
    ]);
    Ok(best)
}
