use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Real scalar used for derived metrics (IPC, intensities, throughputs).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion of an event count. Never fails for `f32`/`f64`.
    fn from_count(count: u64) -> Self {
        <Self as NumCast>::from(count).expect("u64 always converts to a float")
    }

    /// Conversion of an `f64` literal or configuration value.
    fn lit(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("f64 always converts to a float")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
