//! Numeric traits shared by plain floats, tape variables and jets.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Commutative ring operations plus embedding of `f64` constants.
pub trait Ring:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }
}

/// A ring with the closed set of transcendental primitives used by the engine.
pub trait Scalar: Ring + Div<Output = Self> {
    /// Primal value, discarding any derivative information.
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn recip(self) -> Self;
}

impl Ring for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

impl Scalar for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
}

/// 3-vector helpers over any ring.
pub mod vec3 {
    use super::{Ring, Scalar};

    #[inline]
    pub fn add<T: Ring>(a: [T; 3], b: [T; 3]) -> [T; 3] {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    #[inline]
    pub fn sub<T: Ring>(a: [T; 3], b: [T; 3]) -> [T; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    #[inline]
    pub fn mul<T: Ring>(a: [T; 3], s: T) -> [T; 3] {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    #[inline]
    pub fn dot<T: Ring>(a: [T; 3], b: [T; 3]) -> T {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[inline]
    pub fn cross<T: Ring>(a: [T; 3], b: [T; 3]) -> [T; 3] {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    #[inline]
    pub fn norm<T: Scalar>(a: [T; 3]) -> T {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn normalize<T: Scalar>(a: [T; 3]) -> [T; 3] {
        let inv = norm(a).recip();
        mul(a, inv)
    }

    pub fn lift<T: Ring>(a: [f64; 3]) -> [T; 3] {
        [T::from_f64(a[0]), T::from_f64(a[1]), T::from_f64(a[2])]
    }
}
