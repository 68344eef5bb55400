//! Scalar abstraction: every numeric module is generic over `Real`.

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};
use rand::distributions::uniform::SampleUniform;

/// Floating-point scalar usable throughout the toolkit (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumCast
    + SampleUniform
    + Default
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + NumCast
        + SampleUniform
        + Default
        + std::fmt::Debug
        + std::fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Shorthand for lossy conversion from `f64` literals into the working scalar.
#[inline]
pub fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 value representable in scalar type")
}

/// Lossy conversion back to `f64` (used for diagnostics and file formats).
#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().expect("scalar value representable as f64")
}
