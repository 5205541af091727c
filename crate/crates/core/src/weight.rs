//! Scalar weights: binary floating point or exact rationals.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

use crate::current::TAU_W;

/// Ordered field operations needed by the decomposition engine and the oracle.
pub trait Weight: Clone + Debug + PartialEq + PartialOrd + Send + Sync + 'static {
    const EXACT: bool;

    fn zero() -> Self;
    /// Exact conversion (every finite binary float is a rational).
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn half(&self) -> Self;
    fn magnitude(&self) -> Self;

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }

    /// Residual left after subtracting from a capacity `scale`; floating
    /// point residues at rounding level are flushed to zero.
    fn settle(self, scale: &Self) -> Self;

    /// Comparison tolerance of identities.
    fn tolerance() -> Self;

    /// `p/q` text of an exact weight; `None` for floats.
    fn exact_text(&self) -> Option<String> {
        None
    }

    /// Parses the output of [`Weight::exact_text`].
    fn parse_exact(_text: &str) -> Option<Self> {
        None
    }

    fn min_of(&self, o: &Self) -> Self {
        if o < self { o.clone() } else { self.clone() }
    }
}

impl Weight for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn half(&self) -> Self {
        0.5 * self
    }
    fn magnitude(&self) -> Self {
        self.abs()
    }
    fn settle(self, scale: &Self) -> Self {
        if self.abs() <= 1e-12 * scale.abs().max(1.0) { 0.0 } else { self }
    }
    fn tolerance() -> Self {
        TAU_W
    }
}

impl Weight for BigRational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(|| BigRational::from_integer(BigInt::from(0)))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn half(&self) -> Self {
        self / BigRational::from_u8(2).expect("2")
    }
    fn magnitude(&self) -> Self {
        self.abs()
    }
    fn settle(self, _scale: &Self) -> Self {
        self
    }
    fn tolerance() -> Self {
        Zero::zero()
    }
    fn exact_text(&self) -> Option<String> {
        Some(self.to_string())
    }
    fn parse_exact(text: &str) -> Option<Self> {
        text.parse().ok()
    }
}
