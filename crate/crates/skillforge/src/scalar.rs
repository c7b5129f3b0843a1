//! Scalar abstraction shared by the geometry, sensing and reward code.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type usable by the generic parts of the crate.
///
/// The associated tolerances are picked per precision so that the same
/// algorithms behave sensibly for `f32` and `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Allowed deviation of a "unit" vector norm from 1.
    const UNIT_TOL: f64;
    /// Angle below which two normals are treated as identical.
    const ANGLE_TOL: f64;
    /// Slack used for sign and rank decisions on unit-scale quantities.
    const FEAS_TOL: f64;

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const UNIT_TOL: f64 = 1e-9;
    const ANGLE_TOL: f64 = 1e-6;
    const FEAS_TOL: f64 = 1e-9;
}

impl Real for f32 {
    const UNIT_TOL: f64 = 1e-5;
    const ANGLE_TOL: f64 = 1e-3;
    const FEAS_TOL: f64 = 1e-5;
}
