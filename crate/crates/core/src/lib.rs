//! Desk-scale simulator for studying how diffusion-style image edits erase
//! additive spread-spectrum watermarks.
//!
//! The crate is organised around a single experiment loop:
//!
//! 1. [`watermark`] embeds a payload into an image as a low-amplitude
//!    spread-spectrum residual.
//! 2. [`edit`] pushes the image through a parameterised synthetic edit kernel
//!    (forward noising followed by a contractive linear "denoiser", optionally
//!    with high-band resynthesis or a local mask).
//! 3. [`metrics`] and [`spectral`] quantify what survived, and [`bounds`]
//!    checks the measurements against closed-form signal-to-noise,
//!    mutual-information, and contraction limits.
//! 4. [`harness`] wires the above into a reproducible stress protocol with
//!    CSV/JSON reporting, and [`tune`] searches embedding band profiles that
//!    survive a given edit suite.
//!
//! All numeric kernels are generic over the scalar type through [`Scalar`];
//! `f64` is the default precision used by the harness (see [`Real`]).

pub mod bounds;
pub mod edit;
pub mod error;
pub(crate) mod fft;
pub mod harness;
pub mod metrics;
pub mod schedule;
pub mod spectral;
pub mod stream;
pub mod tensor;
pub mod tune;
pub mod watermark;

pub use error::{Error, Result};
pub use tensor::ImageTensor;

/// Floating-point scalar the numeric kernels are generic over.
///
/// Covers everything the crate needs from a real scalar: arithmetic,
/// transcendentals, conversions from `f64` config values, and FFT support.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + rustfft::FftNum
    + std::iter::Sum
    + std::fmt::Display
    + Default
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Default scalar precision for analysis runs.
pub type Real = f64;

/// Image tensor at the default precision.
pub type Image = ImageTensor<Real>;

/// Single-precision image tensor, matching the on-disk raw format width.
pub type Image32 = ImageTensor<f32>;

/// Converts an `f64` configuration value into the working scalar type.
///
/// Infallible for `f32`/`f64`; the unwrap documents that `Scalar` types must
/// admit every finite `f64` (possibly with rounding).
#[inline]
pub(crate) fn sc<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("scalar type must convert from f64")
}
