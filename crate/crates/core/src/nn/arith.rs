use std::cmp::Ordering;
use std::fmt::Debug;

use crate::error::Result;

/// Scalar arithmetic a network is written against. The LNS backend and the
/// double-precision mirror both implement it, so one set of layer routines
/// drives both with identical operation order.
pub trait Arith {
    type Scalar: Copy + PartialEq + Debug;

    fn zero(&self) -> Self::Scalar;
    fn one(&self) -> Self::Scalar;
    #[allow(clippy::wrong_self_convention)]
    fn from_f64(&self, x: f64) -> Result<Self::Scalar>;
    fn to_f64(&self, v: Self::Scalar) -> f64;

    fn mul(&self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar;
    fn add(&self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar;
    fn neg(&self, a: Self::Scalar) -> Self::Scalar;
    fn div(&self, a: Self::Scalar, b: Self::Scalar) -> Result<Self::Scalar>;
    fn sqrt(&self, a: Self::Scalar) -> Result<Self::Scalar>;
    fn cmp(&self, a: Self::Scalar, b: Self::Scalar) -> Ordering;
    fn is_zero(&self, a: Self::Scalar) -> bool;
    /// Strictly below zero.
    fn is_negative(&self, a: Self::Scalar) -> bool;

    /// Batch-norm epsilon when the layer leaves it unset.
    fn bn_epsilon(&self) -> f64;

    /// Softmax of one row of logits.
    fn softmax(&self, logits: &[Self::Scalar]) -> Vec<Self::Scalar>;

    #[inline]
    fn sub(&self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar {
        self.add(a, self.neg(b))
    }

    /// Left-to-right sum starting from zero.
    fn sum<I: IntoIterator<Item = Self::Scalar>>(&self, values: I) -> Self::Scalar {
        values
            .into_iter()
            .fold(self.zero(), |acc, v| self.add(acc, v))
    }

    /// Strictly positive, used for ReLU masks.
    #[inline]
    fn is_positive(&self, a: Self::Scalar) -> bool {
        !self.is_zero(a) && !self.is_negative(a)
    }

    /// Index of the largest element, ties to the lowest index.
    fn argmax(&self, values: &[Self::Scalar]) -> usize {
        let mut best = 0;
        for (i, &v) in values.iter().enumerate().skip(1) {
            if self.cmp(v, values[best]) == Ordering::Greater {
                best = i;
            }
        }
        best
    }
}
