//! Scalar abstraction shared by the numeric modules.
//!
//! Training and gradient checks run at `f64`; the compression front-end and
//! the frozen extractors also run at `f32` for the timing harness.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Real scalar usable by the tensor core, the FFT front-end and extractors.
pub trait Scalar: Float + FftNum + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync {
    /// Lossy conversion from `f64`; exact for `f64` itself.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Tolerance used for internal consistency checks (imaginary residue etc).
    fn consistency_tol() -> Self;
}

impl Scalar for f64 {
    fn consistency_tol() -> Self {
        1e-6
    }
}

impl Scalar for f32 {
    fn consistency_tol() -> Self {
        1e-3
    }
}
