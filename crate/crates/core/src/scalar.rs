//! Scalar abstraction shared by every numerical module.
//!
//! All solvers are written against [`Real`] and operate on `Complex<T>`
//! fields, so the same code runs in `f64` (the default everywhere) and `f32`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar usable by the solver stack.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used for physical constants and tolerances.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex field sample.
pub type Cplx<T> = Complex<T>;

/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_8128e-12;
/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;

/// Free-space wavenumber for an angular frequency.
pub fn wavenumber<T: Real>(omega: T) -> T {
    omega / T::of(C0)
}

/// `Σ conj(a)·b`.
pub fn dot<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(Cplx::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

/// Squared Euclidean norm.
pub fn norm_sqr<T: Real>(a: &[Cplx<T>]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr())
}

pub fn zeros<T: Real>(n: usize) -> Vec<Cplx<T>> {
    vec![Cplx::new(T::zero(), T::zero()); n]
}

/// `y += a·x`.
pub fn axpy<T: Real>(a: Cplx<T>, x: &[Cplx<T>], y: &mut [Cplx<T>]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Converts a slice of `f64` complex values into another scalar type.
pub fn cast_complex<T: Real>(v: &[Complex<f64>]) -> Vec<Cplx<T>> {
    v.iter().map(|z| Cplx::new(T::of(z.re), T::of(z.im))).collect()
}
