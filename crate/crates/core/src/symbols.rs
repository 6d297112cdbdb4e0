//! The symbol `p`, its semiclassical cutoffs and their quantization.
//!
//! With `κ = (ξ + ia)²`, `Δ = τ* − τ₀`:
//!
//! ```text
//! p(y, ξ) = κ ∫_{τ₀}^{τ*} e^{−(τ*−s)κ} w(s, y) ds
//!         = w(τ*, y) − e^{−Δκ} w(τ₀, y) − ∫_{τ₀}^{τ*} e^{−(τ*−s)κ} ∂_s w(s, y) ds
//! p_j(x, ξ; h) = p(x, ξ/h) χ_j(ξ),   χ₂ = 1 − χ₁
//! Op_h¹(q) u(x) = (2πh)^{−1} ∬ e^{i(x−y)ξ/h} q(y, ξ) u(y) dy dξ
//! ```
//!
//! `Op_h¹(p(·, ·/h))` does not depend on `h` and equals `H_a I₂`, so
//! `Op_h¹(p_j) = χ_j(hD) ∘ Op_h¹(p(·, ·/h))`; the fast path uses this.
//! Both times are normalized.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LipdError, Result};
use crate::fbi::{
    fbi_transform_with, fit_decay_above_floor, fit_grid, semiclassical_fourier, Boundary, DecayFit, FbiOptions, PhaseBox,
    PhaseField, PhaseGrid,
};
use crate::forward::{duhamel_integral, WeightMode};
use crate::kernels::{heat_kernel_complex, weight_w_dtau_unchecked, weight_w_unchecked};
use crate::model::{derive_transformed, Field, Grid, ModelParams};
use crate::quadrature::{integrate_adaptive, Rule};
use crate::spectral::{generator_symbol, kernel_margin, semigroup_symbol, PaddedSpectrum};

const ORDER: usize = 16;

/// Composite rule in `t = τ* − s` on `[0, delta]` with panels halving
/// towards `t = 0`, fine enough for `e^{−tκ}` with `|κ| ≤ lambda`.
pub fn layer_rule(delta: f64, lambda: f64) -> Rule {
    let levels = ((delta * lambda.max(1.0)).log2().ceil().max(0.0) as usize + 2).min(60);
    let mut breaks: Vec<f64> = (0..=levels).map(|j| delta * 0.5f64.powi((levels - j) as i32)).collect();
    breaks.insert(0, 0.0);
    Rule::from_breakpoints(&breaks, ORDER)
}

/// Evaluator of `p(y, ξ)` for complex `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolFn {
    pub a: f64,
    pub tau0: f64,
    pub tau_star: f64,
    /// Half-width of the strip `|Im y| < ρ₀`.
    pub rho0: f64,
    /// `Frozen` replaces `w` by 1, a diagnostic reduction.
    #[serde(skip)]
    pub weight: WeightMode,
}

impl SymbolFn {
    pub fn new(a: f64, tau0: f64, tau_star: f64, rho0: f64) -> Result<Self> {
        if !(tau0 > 0.0 && tau0 < tau_star) {
            return domain(format!("need 0 < tau0 < tau_star, got {tau0}, {tau_star}"));
        }
        if !(rho0 > 0.0) {
            return domain(format!("strip half-width must be positive, got {rho0}"));
        }
        Ok(Self {
            a,
            tau0,
            tau_star,
            rho0,
            weight: WeightMode::Heaviside,
        })
    }

    /// From calendar `tau0`, converted to normalized time.
    pub fn from_params(params: &ModelParams, tau0: f64, rho0: f64) -> Result<Self> {
        let tp = derive_transformed(params)?;
        if !(tau0 > 0.0 && tau0 < params.tau_star) {
            return domain(format!("tau0 must lie in (0, tau_star), got {tau0}"));
        }
        Self::new(tp.a, params.time_scale() * tau0, tp.tau_norm, rho0)
    }

    pub fn delta(&self) -> f64 {
        self.tau_star - self.tau0
    }

    pub fn kappa(&self, xi: f64) -> Complex64 {
        generator_symbol(self.a, xi)
    }

    fn w(&self, s: f64, y: Complex64) -> Complex64 {
        match self.weight {
            WeightMode::Heaviside => weight_w_unchecked(s, y, self.a),
            WeightMode::Frozen => Complex64::new(1.0, 0.0),
        }
    }

    fn dw(&self, s: f64, y: Complex64) -> Complex64 {
        match self.weight {
            WeightMode::Heaviside => weight_w_dtau_unchecked(s, y, self.a),
            WeightMode::Frozen => Complex64::new(0.0, 0.0),
        }
    }

    /// `w(τ*, y)`, the high-frequency limit of `p`.
    pub fn limit(&self, y: Complex64) -> Complex64 {
        self.w(self.tau_star, y)
    }

    /// Integrated-by-parts form.
    pub fn p(&self, y: Complex64, xi: f64) -> Complex64 {
        let kappa = self.kappa(xi);
        let rule = layer_rule(self.delta(), kappa.norm());
        self.p_with_rule(y, kappa, &rule)
    }

    pub(crate) fn p_with_rule(&self, y: Complex64, kappa: Complex64, rule: &Rule) -> Complex64 {
        let d = self.delta();
        let tail: Complex64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &om)| (-t * kappa).exp() * self.dw(self.tau_star - t, y) * om)
            .sum();
        self.w(self.tau_star, y) - (-d * kappa).exp() * self.w(self.tau0, y) - tail
    }

    /// Direct form by adaptive quadrature, split at the boundary layer.
    pub fn p_direct(&self, y: Complex64, xi: f64) -> Result<Complex64> {
        let kappa = self.kappa(xi);
        let d = self.delta();
        let lam = kappa.norm().max(1.0);
        let mut breaks = vec![0.0];
        let mut t = 1.0 / lam;
        while t < d {
            breaks.push(t);
            t *= 4.0;
        }
        breaks.push(d);
        let mut total = Complex64::new(0.0, 0.0);
        for p in breaks.windows(2) {
            total += integrate_adaptive(
                |t| (-t * kappa).exp() * self.w(self.tau_star - t, y),
                p[0],
                p[1],
                1e-15,
                1e-13,
            )?;
        }
        Ok(kappa * total)
    }
}

/// Shape of the `χ₁` transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffShape {
    /// `e^{−1/t}` bridge from `1/4` to `1/2`.
    #[default]
    Smooth,
    /// `min(|ξ|, 1)`: a deliberately defective cutoff for negative controls.
    Ramp,
}

/// `C^∞` transition from 0 (t ≤ 0) to 1 (t ≥ 1).
pub fn bridge(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (1.0 / t - 1.0 / (1.0 - t)).exp())
    }
}

pub fn bridge_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let g = 1.0 / t - 1.0 / (1.0 - t);
    if g.abs() > 700.0 {
        return 0.0;
    }
    let e = g.exp();
    e * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / ((1.0 + e) * (1.0 + e))
}

/// `χ₁`, `χ₂ = 1 − χ₁`, the weight `ψ` and the amplitude bound `ε₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub rho0: f64,
    pub shape: CutoffShape,
    pub psi_deriv_sup: f64,
    pub eps0: f64,
}

pub fn build_cutoffs(rho0: f64) -> Result<Cutoffs> {
    build_cutoffs_shaped(rho0, CutoffShape::Smooth)
}

pub fn build_cutoffs_shaped(rho0: f64, shape: CutoffShape) -> Result<Cutoffs> {
    if !(rho0 > 0.0) {
        return domain(format!("rho0 must be positive, got {rho0}"));
    }
    let sup = (0..=20_000)
        .map(|i| bridge_deriv(i as f64 / 20_000.0))
        .fold(0.0, f64::max);
    Ok(Cutoffs {
        rho0,
        shape,
        psi_deriv_sup: sup,
        eps0: 0.9 * rho0 / sup,
    })
}

impl Cutoffs {
    pub fn chi1(&self, xi: f64) -> f64 {
        match self.shape {
            CutoffShape::Smooth => bridge(4.0 * (xi.abs() - 0.25)),
            CutoffShape::Ramp => xi.abs().min(1.0),
        }
    }

    pub fn chi2(&self, xi: f64) -> f64 {
        1.0 - self.chi1(xi)
    }

    pub fn psi(&self, xi: f64) -> f64 {
        bridge(xi.abs() - 1.0)
    }

    pub fn dpsi(&self, xi: f64) -> f64 {
        xi.signum() * bridge_deriv(xi.abs() - 1.0)
    }
}

/// Which semiclassical symbol to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    /// `p(x, ξ/h)`.
    Full,
    P1,
    P2,
}

/// `p_j(x, ξ; h)` as an evaluator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemiclassicalSymbol {
    pub p: SymbolFn,
    pub cutoffs: Cutoffs,
    pub h: f64,
    pub part: Part,
}

impl SemiclassicalSymbol {
    pub fn cutoff(&self, xi: f64) -> f64 {
        match self.part {
            Part::Full => 1.0,
            Part::P1 => self.cutoffs.chi1(xi),
            Part::P2 => self.cutoffs.chi2(xi),
        }
    }

    pub fn eval(&self, x: Complex64, xi: f64) -> Complex64 {
        let c = self.cutoff(xi);
        if c == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.p.p(x, xi / self.h) * c
    }
}

/// `(p₁, p₂)` at this `h`.
pub fn semiclassical_symbols(
    p: &SymbolFn,
    cutoffs: &Cutoffs,
    h: f64,
) -> Result<(SemiclassicalSymbol, SemiclassicalSymbol)> {
    if !(h > 0.0 && h <= 1.0) {
        return domain(format!("h must lie in (0, 1], got {h}"));
    }
    let make = |part| SemiclassicalSymbol {
        p: *p,
        cutoffs: *cutoffs,
        h,
        part,
    };
    Ok((make(Part::P1), make(Part::P2)))
}

/// Generic `Op_h¹(q) u` for an arbitrary symbol `q(y, ξ)`: one direct DFT
/// per frequency of `q(·, ξ) u`, then an inverse FFT in `ξ`.
pub fn quantize_apply(q: impl Fn(f64, f64) -> Complex64, u: &Field, h: f64) -> Result<Field> {
    if !(h > 0.0) {
        return domain(format!("h must be positive, got {h}"));
    }
    let grid = u.grid;
    let sp = PaddedSpectrum::new(&grid, 0.0);
    check_resolved(&sp.transform(&u.values))?;
    let p = sp.padded;
    let ys: Vec<f64> = grid.nodes().collect();
    let spectrum: Vec<Complex64> = sp
        .freqs
        .iter()
        .enumerate()
        .map(|(m, &k)| {
            let xi = h * k;
            ys.iter()
                .zip(&u.values)
                .enumerate()
                .map(|(j, (&y, v))| {
                    let phase = -2.0 * PI * ((j * m) % p) as f64 / p as f64;
                    q(y, xi) * v * Complex64::from_polar(1.0, phase)
                })
                .sum()
        })
        .collect();
    Field::new(grid, sp.restore(spectrum))
}

/// Rejects inputs with spectral energy near the Nyquist frequency.
fn check_resolved(spectrum: &[Complex64]) -> Result<()> {
    let p = spectrum.len();
    let total: f64 = spectrum.iter().map(|v| v.norm_sqr()).sum();
    let band = p / 20;
    let high: f64 = spectrum[p / 2 - band..p / 2 + band].iter().map(|v| v.norm_sqr()).sum();
    if total > 0.0 && high > 1e-16 * total {
        return Err(LipdError::Accuracy(format!(
            "input not resolved: {:.3e} of its energy lies near the Nyquist frequency",
            high / total
        )));
    }
    Ok(())
}

/// Fast path: `Op_h¹(p_part) f` as Fourier data on a zero-padded grid.
pub fn op_spectrum(p: &SymbolFn, cutoffs: &Cutoffs, part: Part, h: f64, f: &Field) -> Result<(PaddedSpectrum, Vec<Complex64>)> {
    let grid = f.grid;
    let sp = PaddedSpectrum::new(&grid, kernel_margin(p.delta(), p.a));
    let ys: Vec<f64> = grid.nodes().collect();
    let weighted = |g: &dyn Fn(f64) -> Complex64| -> Vec<Complex64> {
        ys.iter().zip(&f.values).map(|(&y, v)| v * g(y)).collect()
    };
    let kmax = PI / grid.dy;
    let lambda = kmax * kmax + p.a * p.a;
    let rule = layer_rule(p.delta(), lambda);
    let real = |y: f64| Complex64::new(y, 0.0);
    let mut acc = sp.transform(&weighted(&|y| p.w(p.tau_star, real(y))));
    let start = sp.transform(&weighted(&|y| p.w(p.tau0, real(y))));
    for ((a, s), &k) in acc.iter_mut().zip(&start).zip(&sp.freqs) {
        *a -= s * semigroup_symbol(p.delta(), p.a, k);
    }
    if p.weight == WeightMode::Heaviside {
        for (&t, &om) in rule.nodes.iter().zip(&rule.weights) {
            let s_spec = sp.transform(&weighted(&|y| p.dw(p.tau_star - t, real(y))));
            for ((a, s), &k) in acc.iter_mut().zip(&s_spec).zip(&sp.freqs) {
                *a -= s * semigroup_symbol(t, p.a, k) * om;
            }
        }
    }
    if part != Part::Full {
        for (a, &k) in acc.iter_mut().zip(&sp.freqs) {
            let c = match part {
                Part::P1 => cutoffs.chi1(h * k),
                _ => cutoffs.chi2(h * k),
            };
            *a *= c;
        }
    }
    Ok((sp, acc))
}

/// `Op_h¹(p_part) f` on the grid of `f`.
pub fn op_apply(p: &SymbolFn, cutoffs: &Cutoffs, part: Part, h: f64, f: &Field) -> Result<Field> {
    let (sp, acc) = op_spectrum(p, cutoffs, part, h, f)?;
    Field::new(f.grid, sp.restore(acc))
}

/// `Op_h¹(p_part) f` on the whole padded period, where it is exactly
/// band-limited.
pub fn op_apply_periodic(p: &SymbolFn, cutoffs: &Cutoffs, part: Part, h: f64, f: &Field) -> Result<Field> {
    let (sp, mut acc) = op_spectrum(p, cutoffs, part, h, f)?;
    crate::spectral::ifft(&mut acc);
    let scale = 1.0 / sp.padded as f64;
    acc.iter_mut().for_each(|v| *v *= scale);
    Field::new(Grid::from_spacing(f.grid.y_min, f.grid.dy, sp.padded)?, acc)
}

/// Lemma-style report for `Op_h¹(p₂) f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P2SupportReport {
    pub h_list: Vec<f64>,
    /// `‖F_h g‖` on `|ξ| > 1/4` over `‖F_h g‖`, per `h`.
    pub mass_outside_quarter: Vec<f64>,
    /// The same on `|ξ| > 1/2`, the support of `χ₂`.
    pub mass_outside_half: Vec<f64>,
    /// `ln(‖Tg‖_{L²(ℝ×{|ξ|≥3/4})} / ‖Tf‖)` per `h`.
    pub log_ratio: Vec<f64>,
    pub fit: DecayFit,
}

/// Support of `F_h[Op_h¹(p₂) f]` and the decay of `T[Op_h¹(p₂) f]` on
/// `{|ξ| ≥ 3/4}`, integrated over `|ξ| ≤ xi_max`.
pub fn verify_p2_support(p: &SymbolFn, cutoffs: &Cutoffs, f: &Field, h_list: &[f64], xi_max: f64) -> Result<P2SupportReport> {
    let f_norm = f.l2_norm();
    let mut rep = P2SupportReport {
        h_list: h_list.to_vec(),
        mass_outside_quarter: Vec::new(),
        mass_outside_half: Vec::new(),
        log_ratio: Vec::new(),
        fit: DecayFit {
            h_list: h_list.to_vec(),
            log_norms: vec![],
            delta: f64::NAN,
            log_prefactor: f64::NAN,
            r2: f64::NAN,
            status: crate::fbi::FitStatus::Inconclusive,
        },
    };
    let mut floors = Vec::new();
    for &h in h_list {
        let g = op_apply_periodic(p, cutoffs, Part::P2, h, f)?;
        let fg = semiclassical_fourier(&g, h)?;
        let total = fg.l2_norm();
        let outside = |c: f64| {
            let m: f64 = fg
                .grid
                .nodes()
                .zip(&fg.values)
                .filter(|(xi, _)| xi.abs() > c)
                .map(|(_, v)| v.norm_sqr())
                .sum::<f64>()
                * fg.grid.dy;
            if total == 0.0 {
                0.0
            } else {
                m.sqrt() / total
            }
        };
        rep.mass_outside_quarter.push(outside(0.25));
        rep.mass_outside_half.push(outside(0.5));
        let t = p2_region_transform(&g, h, xi_max)?;
        let region = |_x: f64, xi: f64| xi.abs() >= 0.75;
        rep.log_ratio.push(0.5 * t.log_norm_sq_on(region) - f_norm.ln());
        floors.push(t.log_floor_on(region) - f_norm.ln());
    }
    if f_norm > 0.0 {
        rep.fit = fit_decay_above_floor(h_list, &rep.log_ratio, &floors)?;
    }
    Ok(rep)
}

fn p2_region_transform(g: &Field, h: f64, xi_max: f64) -> Result<PhaseField> {
    let bbox = PhaseBox {
        x_lo: g.grid.y_min,
        x_hi: g.grid.y_max,
        xi_lo: -xi_max,
        xi_hi: xi_max,
    };
    let pg = fit_grid(&bbox, h, g.grid.dy)?;
    fbi_transform_with(g, &pg, &FbiOptions::exhaustive(Boundary::Periodic))
}

/// Per-`h` terms of the weighted inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub h: f64,
    /// `‖e^{εψ/h} T Op_h¹(p₁) u‖²`.
    pub lhs: f64,
    /// `‖p₁(x − iεψ', ξ − εψ'; h) e^{εψ/h} Tu‖²`.
    pub rhs: f64,
    /// `‖e^{εψ/h} Tu‖²`.
    pub base: f64,
    /// `|lhs − rhs| / (h · base)`.
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedReport {
    pub eps: f64,
    pub terms: Vec<WeightedTerm>,
    /// Largest over smallest admissible constant.
    pub spread: f64,
}

/// Evaluates both sides of the weighted estimate for `u = family(h)` on the
/// phase box `bbox`; `ψ` is scaled by `eps`.
pub fn verify_weighted_inequality(
    p: &SymbolFn,
    cutoffs: &Cutoffs,
    family: impl Fn(f64) -> Result<Field>,
    bbox: &PhaseBox,
    eps: f64,
    h_list: &[f64],
) -> Result<WeightedReport> {
    if !(eps >= 0.0) || eps * cutoffs.psi_deriv_sup >= p.rho0 {
        return domain(format!("eps = {eps} leaves the strip of half-width {}", p.rho0));
    }
    let mut terms = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let u = family(h)?;
        let pu = op_apply_periodic(p, cutoffs, Part::P1, h, &u)?;
        let pg = fit_grid(bbox, h, u.grid.dy)?;
        let tu = fbi_transform_with(&u, &pg, &FbiOptions::exhaustive(Boundary::Zero))?;
        let tpu = fbi_transform_with(&pu, &pg, &FbiOptions::exhaustive(Boundary::Periodic))?;
        let (mut lhs, mut rhs, mut base) = (0.0, 0.0, 0.0);
        let cell = pg.dx * pg.dxi;
        for ik in 0..pg.nxi {
            let xi = pg.xi(ik);
            if !(xi >= bbox.xi_lo && xi <= bbox.xi_hi) {
                continue;
            }
            let weight = (2.0 * eps * cutoffs.psi(xi) / h).exp();
            let shift = eps * cutoffs.dpsi(xi);
            let xs = xi - shift;
            let chi = cutoffs.chi1(xs);
            let kappa = p.kappa(xs / h);
            let rule = layer_rule(p.delta(), kappa.norm());
            for ix in 0..pg.nx {
                let x = pg.x(ix);
                if !(x >= bbox.x_lo && x <= bbox.x_hi) {
                    continue;
                }
                let t2 = tu.get(ix, ik).norm_sqr() * weight * cell;
                let sym = if chi == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    p.p_with_rule(Complex64::new(x, -shift), kappa, &rule) * chi
                };
                lhs += tpu.get(ix, ik).norm_sqr() * weight * cell;
                rhs += sym.norm_sqr() * t2;
                base += t2;
            }
        }
        terms.push(WeightedTerm {
            h,
            lhs,
            rhs,
            base,
            constant: (lhs - rhs).abs() / (h * base),
        });
    }
    let cmax = terms.iter().map(|t| t.constant).fold(0.0, f64::max);
    let cmin = terms.iter().map(|t| t.constant).fold(f64::INFINITY, f64::min);
    Ok(WeightedReport {
        eps,
        terms,
        spread: if cmin > 0.0 { cmax / cmin } else { f64::INFINITY },
    })
}

/// Result of the early-time smallness check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyPartReport {
    pub fit: DecayFit,
    /// `‖f₁‖₂`.
    pub f1_norm: f64,
    /// `τ₀ e^{a²τ₀} ‖f‖₂`.
    pub f1_bound: f64,
}

/// `H_a I₁ = H_a U_a(τ* − τ₀) f₁` with `f₁ = ∫₀^{τ₀} U_a(τ₀ − s)[w(s) f] ds`,
/// and the decay of its transform on `{|ξ| ≥ xi_lo}` (normalized `f`).
pub fn verify_i1_smallness(p: &SymbolFn, f: &Field, h_list: &[f64], xi_lo: f64, xi_max: f64) -> Result<EarlyPartReport> {
    let f1 = duhamel_integral(f, p.a, 0.0, p.tau0, p.tau0, 16, 8, WeightMode::Heaviside)?;
    let sp = PaddedSpectrum::new(&f.grid, kernel_margin(p.delta(), p.a));
    let d = p.delta();
    let hi1 = Field::new(
        f.grid,
        sp.apply(&f1.values, |k| generator_symbol(p.a, k) * semigroup_symbol(d, p.a, k)),
    )?;
    let region = move |_x: f64, xi: f64| xi.abs() >= xi_lo;
    let opts = FbiOptions::exhaustive(Boundary::Zero);
    let mut logs = Vec::new();
    let mut floors = Vec::new();
    for &h in h_list {
        let step = (0.25 * h.sqrt()).min(0.05);
        let margin = 5.0 * h.sqrt();
        let pg = PhaseGrid::aligned(
            (f.grid.y_min + margin, f.grid.y_max - margin),
            step,
            xi_max,
            step,
            h,
            f.grid.dy,
        )?;
        let t = fbi_transform_with(&hi1, &pg, &opts)?;
        logs.push(0.5 * t.log_norm_sq_on(region));
        floors.push(t.log_floor_on(region));
    }
    Ok(EarlyPartReport {
        fit: fit_decay_above_floor(h_list, &logs, &floors)?,
        f1_norm: f1.l2_norm(),
        f1_bound: p.tau0 * (p.a * p.a * p.tau0).exp() * f.l2_norm(),
    })
}

/// `sup ⟨ξ⟩² |p(y, ξ) − w(τ*, y)|` over `ys`, per dyadic `ξ = 2^k`.
pub fn high_frequency_residuals(p: &SymbolFn, ys: &[f64], k_max: u32) -> Vec<(f64, f64)> {
    (0..=k_max)
        .map(|k| {
            let xi = 2f64.powi(k as i32);
            let jp = 1.0 + xi * xi;
            let sup = ys
                .iter()
                .flat_map(|&y| [xi, -xi].map(|x| (y, x)))
                .map(|(y, x)| {
                    let z = Complex64::new(y, 0.0);
                    jp * (p.p(z, x) - p.limit(z)).norm()
                })
                .fold(0.0, f64::max);
            (xi, sup)
        })
        .collect()
}

/// `sup |p₁(x, ξ; h) − w(τ*, x) χ₁(ξ)|` over the sample grid.
pub fn p1_limit_defect(p: &SymbolFn, cutoffs: &Cutoffs, h: f64, xs: &[f64], xis: &[f64]) -> f64 {
    let mut sup: f64 = 0.0;
    for &xi in xis {
        let c = cutoffs.chi1(xi);
        if c == 0.0 {
            continue;
        }
        let kappa = p.kappa(xi / h);
        let rule = layer_rule(p.delta(), kappa.norm());
        for &x in xs {
            let z = Complex64::new(x, 0.0);
            let v = (p.p_with_rule(z, kappa, &rule) - p.limit(z)) * c;
            sup = sup.max(v.norm());
        }
    }
    sup
}

/// Sampled `⟨ξ⟩^β |∂_y^α ∂_ξ^β p|` on the strip, by central differences,
/// per dyadic `ξ`; the maxima should not grow with `ξ`.
pub fn symbol_derivative_profile(p: &SymbolFn, alpha: u32, beta: u32, ys: &[f64], k_max: u32) -> Vec<(f64, f64)> {
    let deriv = |y: Complex64, xi: f64| -> Complex64 {
        let hy = 1e-3;
        let hx = 1e-3 * (1.0 + xi.abs());
        let dy = |xi: f64| -> Complex64 {
            match alpha {
                0 => p.p(y, xi),
                1 => (p.p(y + hy, xi) - p.p(y - hy, xi)) / (2.0 * hy),
                _ => (p.p(y + hy, xi) - 2.0 * p.p(y, xi) + p.p(y - hy, xi)) / (hy * hy),
            }
        };
        match beta {
            0 => dy(xi),
            1 => (dy(xi + hx) - dy(xi - hx)) / (2.0 * hx),
            _ => (dy(xi + hx) - 2.0 * dy(xi) + dy(xi - hx)) / (hx * hx),
        }
    };
    (0..=k_max)
        .map(|k| {
            let xi = 2f64.powi(k as i32);
            let scale = (1.0 + xi * xi).sqrt().powi(beta as i32);
            let sup = ys
                .iter()
                .flat_map(|&y| [-0.9, 0.0, 0.9].map(|e| Complex64::new(y, e * p.rho0)))
                .map(|z| scale * deriv(z, xi).norm())
                .fold(0.0, f64::max);
            (xi, sup)
        })
        .collect()
}

/// `max |∂p/∂z̄|` by central differences on the strip; zero for a
/// holomorphic symbol.
pub fn cauchy_riemann_residual(p: &SymbolFn, ys: &[f64], xis: &[f64]) -> f64 {
    let e = 1e-4;
    let mut worst: f64 = 0.0;
    for &xi in xis {
        for &y in ys {
            for eta in [-0.5 * p.rho0, 0.0, 0.5 * p.rho0] {
                let z = Complex64::new(y, eta);
                let dx = (p.p(z + e, xi) - p.p(z - e, xi)) / (2.0 * e);
                let dn = (p.p(z + Complex64::new(0.0, e), xi) - p.p(z - Complex64::new(0.0, e), xi)) / (2.0 * e);
                worst = worst.max((0.5 * (dx + Complex64::i() * dn)).norm());
            }
        }
    }
    worst
}

/// `K_a(τ, ·)` on complex arguments, re-exported for strip checks.
pub fn strip_kernel(tau: f64, z: Complex64, a: f64) -> Complex64 {
    heat_kernel_complex(tau, z, a)
}
