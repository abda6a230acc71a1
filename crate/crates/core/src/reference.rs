//! Oracles: exact-correction addition and the double-precision mirror.

use std::cmp::Ordering;
use std::path::Path;

use crate::error::{LnsError, Result};
use crate::format::LnsFormat;
use crate::nn::{train, Arith, EpochMetrics, Network, TrainConfig};
use crate::scalar::{lns_add_with, DeltaEval, LnsScalar};

/// `Δ±(d)` computed in double precision and rounded half-to-even to the
/// fixed-point grid. Removes table error, leaving only quantization error.
#[derive(Debug, Clone, Copy)]
pub struct ExactDelta {
    scale: f64,
}

impl ExactDelta {
    pub fn new(fmt: &LnsFormat) -> Self {
        ExactDelta { scale: fmt.scale() }
    }
}

impl DeltaEval for ExactDelta {
    #[inline]
    fn delta_plus(&self, d: i64) -> i64 {
        let x = d as f64 / self.scale;
        ((-x).exp2().ln_1p() / std::f64::consts::LN_2 * self.scale).round_ties_even() as i64
    }

    #[inline]
    fn delta_minus(&self, d: i64) -> i64 {
        let x = d as f64 / self.scale;
        let v = (-(-x).exp2()).ln_1p() / std::f64::consts::LN_2 * self.scale;
        // d >= 1 keeps this finite; clamp anyway so saturation does the rest
        v.round_ties_even().max(i32::MIN as f64) as i64
    }
}

/// [`crate::scalar::lns_add`] with exact corrections.
pub fn exact_add(a: LnsScalar, b: LnsScalar, fmt: &LnsFormat) -> LnsScalar {
    lns_add_with(a, b, fmt, &ExactDelta::new(fmt))
}

/// Plain double-precision arithmetic, the mirror backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F64Arith {
    bn_epsilon: f64,
}

impl F64Arith {
    /// Batch-norm epsilon `2^-10` unless the layer sets one.
    pub fn new() -> Self {
        F64Arith {
            bn_epsilon: (-10f64).exp2(),
        }
    }

    /// Mirror of an LNS run at `fmt`: same default batch-norm epsilon.
    pub fn mirroring(fmt: &LnsFormat) -> Self {
        F64Arith {
            bn_epsilon: (2.0 - fmt.frac_bits as f64).exp2(),
        }
    }
}

impl Default for F64Arith {
    fn default() -> Self {
        Self::new()
    }
}

impl Arith for F64Arith {
    type Scalar = f64;

    fn zero(&self) -> f64 {
        0.0
    }

    fn one(&self) -> f64 {
        1.0
    }

    fn from_f64(&self, x: f64) -> Result<f64> {
        if x.is_finite() {
            Ok(x)
        } else {
            Err(LnsError::NonFinite(x))
        }
    }

    fn to_f64(&self, v: f64) -> f64 {
        v
    }

    #[inline]
    fn mul(&self, a: f64, b: f64) -> f64 {
        a * b
    }

    #[inline]
    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }

    #[inline]
    fn neg(&self, a: f64) -> f64 {
        -a
    }

    fn div(&self, a: f64, b: f64) -> Result<f64> {
        if b == 0.0 {
            return Err(LnsError::DivisionByZero);
        }
        Ok(a / b)
    }

    fn sqrt(&self, a: f64) -> Result<f64> {
        if a < 0.0 {
            return Err(LnsError::NegativeSqrt);
        }
        Ok(a.sqrt())
    }

    fn cmp(&self, a: f64, b: f64) -> Ordering {
        a.total_cmp(&b)
    }

    fn is_zero(&self, a: f64) -> bool {
        a == 0.0
    }

    fn is_negative(&self, a: f64) -> bool {
        a < 0.0
    }

    fn bn_epsilon(&self) -> f64 {
        self.bn_epsilon
    }

    fn softmax(&self, logits: &[f64]) -> Vec<f64> {
        if logits.is_empty() {
            return Vec::new();
        }
        let top = logits[self.argmax(logits)];
        let e: Vec<f64> = logits.iter().map(|&x| (x - top).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|v| v / total).collect()
    }
}

/// Trains `cfg` in double precision with the same initialization, split,
/// sample order and schedule as the LNS run.
pub fn float_mirror_train(
    cfg: &TrainConfig,
    base: Option<&Path>,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(Network<F64Arith>, Vec<EpochMetrics>)> {
    cfg.validate()?;
    let (train_set, test_set) = cfg.datasets(base)?;
    let mut net = Network::new(cfg.network.clone(), F64Arith::mirroring(&cfg.format))?;
    let metrics = train(&mut net, &train_set, &test_set, cfg, on_epoch)?;
    Ok((net, metrics))
}
