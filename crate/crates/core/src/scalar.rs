//! Floating point scalar used for probabilities and perplexities.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Float type the language model and scorer are generic over.
///
/// Counts are always exact integers; only estimated quantities
/// (log10 probabilities, back-off weights, perplexities) use this type.
pub trait Prob:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts from `f64`, panicking only for values the type cannot hold,
    /// which never happens for the finite magnitudes used here.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to Prob")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Prob converts to f64")
    }

    /// Ratio of two counts.
    fn ratio(num: u64, den: u64) -> Self {
        Self::of(num as f64) / Self::of(den as f64)
    }
}

impl Prob for f32 {}
impl Prob for f64 {}

/// log10 value standing in for probability zero.
pub const LOG_FLOOR: f64 = -99.0;

pub(crate) fn floor<F: Prob>() -> F {
    F::of(LOG_FLOOR)
}

/// log10 of `p`, with non-positive probabilities mapped to the floor.
pub(crate) fn log10_or_floor<F: Prob>(p: F) -> F {
    if p > F::zero() {
        p.log10().max(floor())
    } else {
        floor()
    }
}

/// `10^x`, treating the floor as exactly zero.
pub(crate) fn exp10<F: Prob>(x: F) -> F {
    if x <= floor() {
        F::zero()
    } else {
        F::of(10.0).powf(x)
    }
}
