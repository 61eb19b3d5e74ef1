//! Scalar abstraction shared by the state algebra, tomography and link formulas.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the generic numerics in this crate.
///
/// The validation tolerances are per-type so the same invariants can be
/// checked in single and double precision.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Max elementwise deviation from Hermiticity accepted for a density matrix.
    const HERMITIAN_TOL: f64;
    /// Max deviation of the trace from one.
    const TRACE_TOL: f64;
    /// Smallest eigenvalue accepted before a matrix is called non-PSD.
    const PSD_FLOOR: f64;

    /// Converts an `f64` literal. Panics only if the target type cannot hold
    /// any finite value, which does not happen for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const HERMITIAN_TOL: f64 = 1e-12;
    const TRACE_TOL: f64 = 1e-12;
    const PSD_FLOOR: f64 = -1e-10;
}

impl Real for f32 {
    const HERMITIAN_TOL: f64 = 1e-5;
    const TRACE_TOL: f64 = 1e-5;
    const PSD_FLOOR: f64 = -1e-5;
}
