//! Heat kernel, semigroup and the error-function weight.
//!
//! ```text
//! K_a(τ, y) = (4πτ)^{−1/2} exp(−y²/4τ + a y)
//! (U_a(τ)φ)(y) = ∫ K_a(τ, y − x) φ(x) dx            (= e^{−τ H_a} φ)
//! w(τ, z) = (U_a(τ) 1_{[0,∞)})(z) = ½ e^{a²τ} erfc(−(z − 2aτ)/(2√τ))
//! ```
//!
//! `w` is entire in `z`; complex arguments go through the Faddeeva-based
//! complementary error function.

use std::f64::consts::PI;

use errorfunctions::{ComplexErrorFunctions, RealErrorFunctions};
use num_complex::Complex64;

use crate::error::{domain, Result};
use crate::model::Field;
use crate::quadrature::integrate_adaptive_real;
use crate::spectral::{kernel_margin, semigroup_symbol, PaddedSpectrum};

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        domain(format!("kernel time must be positive, got {tau}"))
    }
}

/// `K_a(τ, y)`; strictly positive for `τ > 0`.
pub fn heat_kernel(tau: f64, y: f64, a: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(heat_kernel_unchecked(tau, y, a))
}

#[inline]
pub(crate) fn heat_kernel_unchecked(tau: f64, y: f64, a: f64) -> f64 {
    (-y * y / (4.0 * tau) + a * y).exp() / (4.0 * PI * tau).sqrt()
}

/// Holomorphic extension of `K_a(τ, ·)`.
#[inline]
pub fn heat_kernel_complex(tau: f64, z: Complex64, a: f64) -> Complex64 {
    (-z * z / (4.0 * tau) + a * z).exp() / (4.0 * PI * tau).sqrt()
}

/// The weight `w(τ, z)` for complex `z`.
pub fn weight_w(tau: f64, z: Complex64, a: f64) -> Result<Complex64> {
    check_tau(tau)?;
    Ok(weight_w_unchecked(tau, z, a))
}

#[inline]
pub(crate) fn weight_w_unchecked(tau: f64, z: Complex64, a: f64) -> Complex64 {
    if z.im == 0.0 {
        return Complex64::new(weight_w_real_unchecked(tau, z.re, a), 0.0);
    }
    let zeta = -(z - 2.0 * a * tau) / (2.0 * tau.sqrt());
    0.5 * (a * a * tau).exp() * ComplexErrorFunctions::erfc(zeta)
}

/// Real-argument fast path of [`weight_w`].
pub fn weight_w_real(tau: f64, y: f64, a: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(weight_w_real_unchecked(tau, y, a))
}

#[inline]
pub(crate) fn weight_w_real_unchecked(tau: f64, y: f64, a: f64) -> f64 {
    let zeta = -(y - 2.0 * a * tau) / (2.0 * tau.sqrt());
    0.5 * (a * a * tau).exp() * RealErrorFunctions::erfc(zeta)
}

/// `∂τ w(τ, z) = a² w − K_a(τ, z)(z + 2aτ)/(2τ)`, which equals `−H_a w`.
pub fn weight_w_dtau(tau: f64, z: Complex64, a: f64) -> Result<Complex64> {
    check_tau(tau)?;
    Ok(weight_w_dtau_unchecked(tau, z, a))
}

#[inline]
pub(crate) fn weight_w_dtau_unchecked(tau: f64, z: Complex64, a: f64) -> Complex64 {
    a * a * weight_w_unchecked(tau, z, a)
        - heat_kernel_complex(tau, z, a) * (z + 2.0 * a * tau) / (2.0 * tau)
}

/// `∂z w = K_a`.
pub fn weight_w_dz(tau: f64, z: Complex64, a: f64) -> Result<Complex64> {
    check_tau(tau)?;
    Ok(heat_kernel_complex(tau, z, a))
}

/// Largest zero-padding factor tried before falling back to direct quadrature.
const MAX_PAD_FACTOR: usize = 16;

/// `U_a(τ) φ`.
///
/// Uses the spectral multiplier `e^{−τ(ξ + ia)²}` on a zero-padded grid, and
/// direct trapezoid quadrature against `K_a` when the kernel margin would
/// need more padding than [`MAX_PAD_FACTOR`] allows.
pub fn apply_semigroup(tau: f64, phi: &Field, a: f64) -> Result<Field> {
    if tau < 0.0 || !tau.is_finite() {
        return domain(format!("semigroup time must be nonnegative, got {tau}"));
    }
    if tau == 0.0 {
        return Ok(phi.clone());
    }
    let sp = PaddedSpectrum::new(&phi.grid, kernel_margin(tau, a));
    if sp.padded > MAX_PAD_FACTOR * phi.grid.n.next_power_of_two() {
        return apply_semigroup_direct(tau, phi, a);
    }
    let values = sp.apply(&phi.values, |k| semigroup_symbol(tau, a, k));
    Field::new(phi.grid, values)
}

/// Spectral path of [`apply_semigroup`], regardless of the margin.
pub fn apply_semigroup_spectral(tau: f64, phi: &Field, a: f64) -> Result<Field> {
    check_tau(tau)?;
    let sp = PaddedSpectrum::new(&phi.grid, kernel_margin(tau, a));
    Field::new(phi.grid, sp.apply(&phi.values, |k| semigroup_symbol(tau, a, k)))
}

/// Direct-quadrature path of [`apply_semigroup`].
pub fn apply_semigroup_direct(tau: f64, phi: &Field, a: f64) -> Result<Field> {
    check_tau(tau)?;
    let g = phi.grid;
    let n = g.n;
    // kernel depends only on the node offset
    let taps: Vec<f64> = (0..2 * n - 1)
        .map(|m| heat_kernel_unchecked(tau, (m as f64 - (n - 1) as f64) * g.dy, a) * g.dy)
        .collect();
    let values = (0..n)
        .map(|i| {
            phi.values
                .iter()
                .enumerate()
                .map(|(j, v)| v * taps[i + n - 1 - j])
                .sum()
        })
        .collect();
    Field::new(g, values)
}

/// Smallest sampled value of `w` on `[tau_lo, tau_hi] × [y_lo, y_hi]`.
///
/// `w` is increasing in `y`, so the minimum over `y` sits at `y_lo`; the
/// `y` samples are kept anyway as a consistency check.
pub fn weight_minimum(
    tau_lo: f64,
    tau_hi: f64,
    y_lo: f64,
    y_hi: f64,
    a: f64,
    samples: usize,
) -> Result<f64> {
    check_tau(tau_lo)?;
    let samples = samples.max(2);
    let mut min = f64::INFINITY;
    for i in 0..samples {
        let tau = tau_lo + (tau_hi - tau_lo) * i as f64 / (samples - 1) as f64;
        for j in 0..samples {
            let y = y_lo + (y_hi - y_lo) * j as f64 / (samples - 1) as f64;
            min = min.min(weight_w_real_unchecked(tau, y, a));
        }
    }
    Ok(min)
}

/// Sampled supremum of `|∂τ^α ∂z^α w(τ, z)|` over
/// `[tau_lo, tau_hi] × {x + iη : x ∈ [x_lo, x_hi], |η| ≤ rho0}`, `α ≤ 2`.
pub fn weight_strip_sup(
    tau_lo: f64,
    tau_hi: f64,
    x_lo: f64,
    x_hi: f64,
    rho0: f64,
    a: f64,
    alpha: u32,
    samples: usize,
) -> Result<f64> {
    check_tau(tau_lo)?;
    if alpha > 2 {
        return domain("strip derivative bound implemented for alpha <= 2");
    }
    let deriv = |tau: f64, z: Complex64| -> Complex64 {
        match alpha {
            0 => weight_w_unchecked(tau, z, a),
            1 => {
                let k = heat_kernel_complex(tau, z, a);
                k * (z * z / (4.0 * tau * tau) - 1.0 / (2.0 * tau))
            }
            _ => {
                // ∂z² w = K_a (a − z/2τ), differentiated twice in τ numerically
                let d2 = |t: f64| heat_kernel_complex(t, z, a) * (a - z / (2.0 * t));
                let h = 1e-4 * tau;
                (d2(tau + h) - 2.0 * d2(tau) + d2(tau - h)) / (h * h)
            }
        }
    };
    let mut sup: f64 = 0.0;
    for i in 0..samples {
        let tau = tau_lo + (tau_hi - tau_lo) * i as f64 / (samples - 1) as f64;
        for j in 0..samples {
            let x = x_lo + (x_hi - x_lo) * j as f64 / (samples - 1) as f64;
            for k in 0..5 {
                let eta = rho0 * (k as f64 / 2.0 - 1.0);
                sup = sup.max(deriv(tau, Complex64::new(x, eta)).norm());
            }
        }
    }
    Ok(sup)
}

/// Relative defect of `∫K_a(τ, ·) = e^{a²τ}` by adaptive quadrature.
pub fn kernel_mass_defect(tau: f64, a: f64) -> Result<f64> {
    check_tau(tau)?;
    let c = 2.0 * a * tau;
    let r = 12.0 * tau.sqrt();
    let v = integrate_adaptive_real(|y| heat_kernel_unchecked(tau, y, a), c - r, c + r, 1e-15, 1e-14)?;
    let exact = (a * a * tau).exp();
    Ok((v - exact).abs() / exact)
}

/// `‖U(t₁)U(t₂)φ − U(t₁+t₂)φ‖ / ‖φ‖`.
pub fn semigroup_law_defect(t1: f64, t2: f64, phi: &Field, a: f64) -> Result<f64> {
    let two = apply_semigroup(t1, &apply_semigroup(t2, phi, a)?, a)?;
    let one = apply_semigroup(t1 + t2, phi, a)?;
    Ok(two.sub(&one)?.l2_norm() / phi.l2_norm())
}

/// Relative gap between the closed form of `w` and `∫₀^∞ K_a(τ, y − x) dx`.
pub fn weight_quadrature_defect(tau: f64, y: f64, a: f64) -> Result<f64> {
    check_tau(tau)?;
    let r = 12.0 * tau.sqrt() + 2.0 * a.abs() * tau;
    let lo = (y - 2.0 * a * tau - r).max(0.0);
    let hi = (y - 2.0 * a * tau + r).max(lo + r);
    let q = integrate_adaptive_real(|x| heat_kernel_unchecked(tau, y - x, a), lo, hi, 1e-300, 1e-13)?;
    let w = weight_w_real_unchecked(tau, y, a);
    Ok((w - q).abs() / q.abs().max(f64::MIN_POSITIVE))
}

/// `max |∂τ w + H_a w|` over `|y| ≤ y_max`, with `H_a` applied spectrally to
/// `w − e^{a²τ} S` for a smooth erf step `S` whose derivatives are exact.
pub fn weight_pde_residual(tau: f64, a: f64, y_max: f64) -> Result<f64> {
    check_tau(tau)?;
    let half = (2.0 * y_max).max(12.0);
    let grid = crate::model::Grid::new(-half, half, 2048)?;
    let c: f64 = 0.5;
    let mass = (a * a * tau).exp();
    let step = |y: f64| 0.5 * (1.0 + RealErrorFunctions::erf(y / (2.0 * c.sqrt())));
    let d1 = |y: f64| (-y * y / (4.0 * c)).exp() / (4.0 * PI * c).sqrt();
    let d2 = |y: f64| -y / (2.0 * c) * d1(y);
    let g = Field::from_real_fn(grid, |y| weight_w_real_unchecked(tau, y, a) - mass * step(y));
    let sp = PaddedSpectrum::new(&grid, 0.0);
    let hg = sp.apply(&g.values, |k| crate::spectral::generator_symbol(a, k));
    let mut worst: f64 = 0.0;
    for (i, y) in grid.nodes().enumerate() {
        if y.abs() > y_max {
            continue;
        }
        let h_step = -(d2(y) - 2.0 * a * d1(y) + a * a * step(y)) * mass;
        let dt = weight_w_dtau_unchecked(tau, Complex64::new(y, 0.0), a).re;
        worst = worst.max((dt + hg[i].re + h_step).abs());
    }
    Ok(worst)
}

/// `max w(τ, y) e^{−a²τ}` over a `samples × samples` grid; at most 1.
pub fn weight_bound_ratio(tau_lo: f64, tau_hi: f64, y_lo: f64, y_hi: f64, a: f64, samples: usize) -> Result<f64> {
    check_tau(tau_lo)?;
    let samples = samples.max(2);
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let tau = tau_lo + (tau_hi - tau_lo) * i as f64 / (samples - 1) as f64;
        for j in 0..samples {
            let y = y_lo + (y_hi - y_lo) * j as f64 / (samples - 1) as f64;
            worst = worst.max(weight_w_real_unchecked(tau, y, a) * (-a * a * tau).exp());
        }
    }
    Ok(worst)
}
