//! FFT plumbing shared by the semigroup, Duhamel and transform code.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::model::Grid;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// In-place unnormalized forward DFT, `X_k = Σ x_j e^{−2πijk/n}`.
pub fn fft(buf: &mut [Complex64]) {
    plan_forward(buf.len()).process(buf);
}

/// In-place unnormalized inverse DFT, `x_j = Σ X_k e^{2πijk/n}`.
pub fn ifft(buf: &mut [Complex64]) {
    plan_inverse(buf.len()).process(buf);
}

/// Signed angular frequency of DFT bin `k` for `p` samples at spacing `dy`.
#[inline]
pub fn angular_frequency(k: usize, p: usize, dy: f64) -> f64 {
    let signed = if k < p.div_ceil(2) {
        k as f64
    } else {
        k as f64 - p as f64
    };
    2.0 * PI * signed / (p as f64 * dy)
}

/// Fourier symbol of `e^{−τ H_a}`, `e^{−τ(k + ia)²}`.
#[inline]
pub fn semigroup_symbol(tau: f64, a: f64, k: f64) -> Complex64 {
    let z = Complex64::new(k, a);
    (-(z * z) * tau).exp()
}

/// Fourier symbol of `H_a`, `(k + ia)²`.
#[inline]
pub fn generator_symbol(a: f64, k: f64) -> Complex64 {
    let z = Complex64::new(k, a);
    z * z
}

/// Zero-padded periodic embedding of a grid, used to apply Fourier
/// multipliers as linear (non-wrapping) convolutions.
#[derive(Clone)]
pub struct PaddedSpectrum {
    pub n: usize,
    pub padded: usize,
    pub dy: f64,
    pub freqs: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PaddedSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PaddedSpectrum")
            .field("n", &self.n)
            .field("padded", &self.padded)
            .field("dy", &self.dy)
            .finish()
    }
}

/// Distance the heat kernel `K_a(τ, ·)` needs on either side of the data.
pub fn kernel_margin(tau: f64, a: f64) -> f64 {
    10.0 * (2.0 * tau.max(0.0)).sqrt() + 2.0 * a.abs() * tau.max(0.0)
}

impl PaddedSpectrum {
    /// Padded length is a power of two, at least twice the grid, and large
    /// enough that `margin` fits into the zero tail.
    pub fn new(grid: &Grid, margin: f64) -> Self {
        let mut padded = (2 * grid.n).next_power_of_two();
        while ((padded - grid.n) as f64) * grid.dy < margin {
            padded *= 2;
        }
        Self::with_length(grid, padded)
    }

    pub fn with_length(grid: &Grid, padded: usize) -> Self {
        let freqs = (0..padded)
            .map(|k| angular_frequency(k, padded, grid.dy))
            .collect();
        Self {
            n: grid.n,
            padded,
            dy: grid.dy,
            freqs,
            forward: plan_forward(padded),
            inverse: plan_inverse(padded),
        }
    }

    pub fn transform(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded];
        buf[..values.len()].copy_from_slice(values);
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform, normalized, cropped back to the grid.
    pub fn restore(&self, mut spectrum: Vec<Complex64>) -> Vec<Complex64> {
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.padded as f64;
        spectrum.truncate(self.n);
        spectrum.iter_mut().for_each(|v| *v *= scale);
        spectrum
    }

    /// Applies the multiplier `m(k)` to `values`.
    pub fn apply(&self, values: &[Complex64], m: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
        let mut s = self.transform(values);
        for (v, &k) in s.iter_mut().zip(&self.freqs) {
            *v *= m(k);
        }
        self.restore(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_are_signed() {
        let dy = 0.5;
        assert_eq!(angular_frequency(0, 8, dy), 0.0);
        assert!((angular_frequency(1, 8, dy) - 2.0 * PI / 4.0).abs() < 1e-15);
        assert!((angular_frequency(7, 8, dy) + 2.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn identity_multiplier_round_trips() {
        let g = Grid::new(-1.0, 1.0, 50).unwrap();
        let sp = PaddedSpectrum::new(&g, 0.0);
        let vals: Vec<Complex64> = (0..50).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let out = sp.apply(&vals, |_| Complex64::new(1.0, 0.0));
        for (a, b) in out.iter().zip(&vals) {
            assert!((a - b).norm() < 1e-11);
        }
    }
}
