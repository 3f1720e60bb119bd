use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Scalar type for all numeric routines in this crate: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from any primitive number.
    fn cast<U: ToPrimitive>(x: U) -> Self {
        NumCast::from(x).expect("primitive cast to Real scalar")
    }

    /// Tolerance on probability-mass sums. The contract value is 1e-9; for
    /// narrower scalars the achievable accuracy is bounded by the epsilon.
    fn mass_tolerance() -> Self {
        Self::cast(1e-9).max(Self::epsilon() * Self::cast(1024.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}
