//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `n` log-spaced points on `[lo, hi]`, endpoints included.
pub fn logspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    assert!(n >= 2 && lo > T::zero() && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    let last = T::from_usize_lossy(n - 1);
    (0..n)
        .map(|k| {
            let x = (a + (b - a) * T::from_usize_lossy(k) / last).exp();
            // pin the endpoints exactly
            if k == 0 {
                lo
            } else if k == n - 1 {
                hi
            } else {
                x
            }
        })
        .collect()
}

/// Quintic smoothstep `6x⁵ − 15x⁴ + 10x³` clamped to `[0, 1]`, with its first two derivatives.
#[inline]
pub fn smoothstep5<T: Real>(x: T) -> (T, T, T) {
    let zero = T::zero();
    let one = T::one();
    if x <= zero {
        return (zero, zero, zero);
    }
    if x >= one {
        return (one, zero, zero);
    }
    let x2 = x * x;
    let x3 = x2 * x;
    let s = x3 * (T::lit(10.0) + x * (T::lit(-15.0) + T::lit(6.0) * x));
    let om = one - x;
    let ds = T::lit(30.0) * x2 * om * om;
    let dds = T::lit(60.0) * x * om * (one - T::lit(2.0) * x);
    (s, ds, dds)
}
