//! Unitary 2-D DFT helpers on row-major planes.
//!
//! Both directions are scaled by `1/sqrt(h*w)`, so `forward` preserves the
//! squared norm (Parseval holds bin-for-bin) and `inverse(forward(x)) == x`
//! up to rounding. Plans are cached per thread and per scalar type; rustfft
//! itself is deterministic for a fixed length on a fixed machine.

use std::any::Any;
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::Scalar;

thread_local! {
    // One planner per concrete scalar type, keyed by TypeId through Any.
    static PLANNERS: RefCell<HashMap<std::any::TypeId, Box<dyn Any>>> = RefCell::new(HashMap::new());
}

fn plan<T: Scalar>(len: usize, inverse: bool) -> Arc<dyn Fft<T>> {
    PLANNERS.with(|cell| {
        let mut map = cell.borrow_mut();
        let planner = map
            .entry(std::any::TypeId::of::<T>())
            .or_insert_with(|| Box::new(FftPlanner::<T>::new()) as Box<dyn Any>)
            .downcast_mut::<FftPlanner<T>>()
            .expect("planner type keyed by TypeId");
        if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        }
    })
}

fn transform<T: Scalar>(spec: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    assert_eq!(spec.len(), h * w);
    let row_fft = plan::<T>(w, inverse);
    for row in spec.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = plan::<T>(h, inverse);
    let mut column = vec![Complex::default(); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = spec[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            spec[y * w + x] = column[y];
        }
    }
    let scale = crate::sc::<T>(1.0 / (h as f64 * w as f64).sqrt());
    for v in spec.iter_mut() {
        *v = v.scale(scale);
    }
}

/// Forward unitary DFT of a real plane.
pub(crate) fn forward<T: Scalar>(plane: &[T], h: usize, w: usize) -> Vec<Complex<T>> {
    let mut spec: Vec<Complex<T>> = plane.iter().map(|&v| Complex::new(v, T::zero())).collect();
    transform(&mut spec, h, w, false);
    spec
}

/// Inverse unitary DFT, returning the real part.
///
/// Callers are expected to hand in conjugate-symmetric spectra; the imaginary
/// residue is rounding noise and is dropped.
pub(crate) fn inverse_real<T: Scalar>(mut spec: Vec<Complex<T>>, h: usize, w: usize) -> Vec<T> {
    transform(&mut spec, h, w, true);
    spec.into_iter().map(|v| v.re).collect()
}

/// Radial frequency of DFT bin `(ky, kx)` in cycles per pixel.
///
/// Axis frequencies are mapped to `[-1/2, 1/2)`, so the radius spans
/// `[0, sqrt(2)/2]` with DC at zero.
pub(crate) fn radial_frequency(ky: usize, kx: usize, h: usize, w: usize) -> f64 {
    let fy = signed_frequency(ky, h);
    let fx = signed_frequency(kx, w);
    (fy * fy + fx * fx).sqrt()
}

fn signed_frequency(k: usize, n: usize) -> f64 {
    let k = k as f64;
    let n = n as f64;
    if k <= n / 2.0 {
        k / n
    } else {
        (k - n) / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let h = 12;
        let w = 20;
        let mut rng = crate::stream::derive_stream(3, &[0]);
        let mut plane = vec![0.0f64; h * w];
        rng.fill_normal(&mut plane);
        let spec = forward(&plane, h, w);
        let back = inverse_real(spec, h, w);
        for (a, b) in plane.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_holds() {
        let h = 16;
        let w = 16;
        let mut rng = crate::stream::derive_stream(4, &[0]);
        let mut plane = vec![0.0f64; h * w];
        rng.fill_normal(&mut plane);
        let spatial: f64 = plane.iter().map(|v| v * v).sum();
        let spectral: f64 = forward(&plane, h, w).iter().map(|c| c.norm_sqr()).sum();
        assert!((spatial - spectral).abs() < 1e-9 * spatial.max(1.0));
    }

    #[test]
    fn single_tone_lands_on_its_bin() {
        let h = 8;
        let w = 8;
        let (ky, kx) = (2, 3);
        let plane: Vec<f64> = (0..h * w)
            .map(|i| {
                let (y, x) = (i / w, i % w);
                (2.0 * std::f64::consts::PI
                    * (ky as f64 * y as f64 / h as f64 + kx as f64 * x as f64 / w as f64))
                    .cos()
            })
            .collect();
        let spec = forward(&plane, h, w);
        // A real cosine splits evenly between (ky,kx) and its conjugate bin.
        let main = spec[ky * w + kx].norm_sqr();
        let mirror = spec[(h - ky) * w + (w - kx)].norm_sqr();
        let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
        assert!((main + mirror) / total > 0.999);
        assert!((main - mirror).abs() < 1e-9);
    }

    #[test]
    fn radial_frequency_corners() {
        assert_eq!(radial_frequency(0, 0, 8, 8), 0.0);
        // Nyquist corner sits at sqrt(2)/2.
        let corner = radial_frequency(4, 4, 8, 8);
        assert!((corner - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn f32_plane_round_trips() {
        let h = 8;
        let w = 6;
        let mut rng = crate::stream::derive_stream(5, &[0]);
        let mut plane = vec![0.0f32; h * w];
        rng.fill_normal(&mut plane);
        let back = inverse_real(forward(&plane, h, w), h, w);
        for (a, b) in plane.iter().zip(&back) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
