//! Forward solvers.
//!
//! Base price in heat coordinates, from `∂y U₀ = e^{y − b₀τ} w(τ̃, y)`:
//!
//! ```text
//! U₀(τ, y) = e^{−b₀τ} [ e^y w_a(τ̃, y) − w_{a₀}(τ̃, y) ],   τ̃ = (σ₀²/2) τ
//! ```
//!
//! Linearized perturbation, in normalized time with `f̃ = (2/σ₀²) f`:
//!
//! ```text
//! v(τ̃*, ·) = ∫₀^{τ̃*} U_a(τ̃* − s)[w(s, ·) f̃] ds,   V = e^{y − b₀τ*} v
//! ```
//!
//! The full problem `∂τU = ½σ₀² U_yy − (½σ₀² − μ(y)) U_y − rU` is solved by
//! Crank–Nicolson with a short implicit Euler start.

use num_complex::Complex64;

use crate::error::{domain, LipdError, Result};
use crate::kernels::weight_w_real_unchecked;
use crate::model::{derive_transformed, Field, Grid, ModelParams};
use crate::quadrature::Rule;
use crate::spectral::{kernel_margin, semigroup_symbol, PaddedSpectrum};

/// Perturbation `f` of the drift, supported in `[−L, ∞)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftPerturbation {
    pub f: Field,
    pub support_left: f64,
}

impl DriftPerturbation {
    pub fn new(f: Field, support_left: f64) -> Result<Self> {
        if !(support_left >= 0.0) {
            return domain(format!("support bound L must be nonnegative, got {support_left}"));
        }
        for (y, v) in f.grid.nodes().zip(&f.values) {
            if y < -support_left && v.norm() > 1e-14 {
                return domain(format!("perturbation is {} at y = {y}, left of -L", v.norm()));
            }
        }
        Ok(Self { f, support_left })
    }

    /// Uses the leftmost node where `f` is nonzero as `−L` (or `L = 0`).
    pub fn from_field(f: Field) -> Self {
        let left = f
            .grid
            .nodes()
            .zip(&f.values)
            .find(|(_, v)| v.norm() > 1e-14)
            .map(|(y, _)| y)
            .unwrap_or(0.0);
        Self {
            f,
            support_left: (-left).max(0.0),
        }
    }
}

/// Weight multiplying `f` inside the Duhamel integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// The error-function weight `w(s, y)`.
    #[default]
    Heaviside,
    /// `w ≡ 1`, a pure convolution used for translation checks.
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DuhamelConfig {
    pub panels: usize,
    pub order: usize,
    pub weight: WeightMode,
}

impl Default for DuhamelConfig {
    fn default() -> Self {
        Self {
            panels: 16,
            order: 8,
            weight: WeightMode::Heaviside,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardResult {
    /// `v(τ*, ·)` in the gauged variable.
    pub v_final: Field,
    /// `(τ, v(τ, ·))` pairs, calendar time.
    pub snapshots: Vec<(f64, Field)>,
}

/// Closed-form `U₀(τ, ·)` for calendar time `tau`.
pub fn solve_base_u0(params: &ModelParams, tau: f64, grid: &Grid) -> Result<Field> {
    if tau < 0.0 || !tau.is_finite() {
        return domain(format!("time must be nonnegative, got {tau}"));
    }
    let tp = derive_transformed(params)?;
    if tau == 0.0 {
        return Ok(Field::from_real_fn(*grid, |y| (y.exp() - 1.0).max(0.0)));
    }
    let tn = params.time_scale() * tau;
    let disc = (-tp.b0 * tau).exp();
    Ok(Field::from_real_fn(*grid, |y| {
        disc * (y.exp() * weight_w_real_unchecked(tn, y, tp.a) - weight_w_real_unchecked(tn, y, tp.a0))
    }))
}

/// Node count at each grid edge on which a source must vanish.
const EDGE_NODES: usize = 8;

fn check_interior(f: &Field) -> Result<()> {
    let peak = f.max_abs();
    let n = f.len();
    let k = EDGE_NODES.min(n / 2);
    let edge = f.values[..k]
        .iter()
        .chain(&f.values[n - k..])
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    if edge > 1e-10 * peak {
        return Err(LipdError::Truncation(format!(
            "source reaches the grid boundary ({edge:e} against peak {peak:e})"
        )));
    }
    Ok(())
}

/// `∫_{s0}^{s1} U_a(t_end − s)[w(s, ·) g] ds` in normalized time.
///
/// Composite Gauss–Legendre in `s`; each node contributes
/// `ω_q e^{−(t_end − s_q)(k + ia)²} F[w(s_q) g]` and a single inverse FFT
/// returns to the grid.
pub fn duhamel_integral(
    g: &Field,
    a: f64,
    s0: f64,
    s1: f64,
    t_end: f64,
    panels: usize,
    order: usize,
    mode: WeightMode,
) -> Result<Field> {
    if !(0.0 <= s0 && s0 <= s1 && s1 <= t_end) {
        return domain(format!("need 0 <= s0 <= s1 <= t_end, got {s0}, {s1}, {t_end}"));
    }
    if s1 == s0 {
        return Ok(Field::zeros(g.grid));
    }
    let rule = Rule::composite(s0, s1, panels, order);
    duhamel_with_rule(g, a, &rule, t_end, mode)
}

pub(crate) fn duhamel_with_rule(
    g: &Field,
    a: f64,
    rule: &Rule,
    t_end: f64,
    mode: WeightMode,
) -> Result<Field> {
    let grid = g.grid;
    let s_min = rule.nodes.iter().cloned().fold(f64::INFINITY, f64::min);
    let sp = PaddedSpectrum::new(&grid, kernel_margin(t_end - s_min.min(t_end), a));
    let mut acc = vec![Complex64::new(0.0, 0.0); sp.padded];
    let ys: Vec<f64> = grid.nodes().collect();
    let mut weighted = vec![Complex64::new(0.0, 0.0); grid.n];
    for (&s, &om) in rule.nodes.iter().zip(&rule.weights) {
        match mode {
            WeightMode::Heaviside => {
                for ((out, &y), v) in weighted.iter_mut().zip(&ys).zip(&g.values) {
                    *out = v * weight_w_real_unchecked(s, y, a);
                }
            }
            WeightMode::Frozen => weighted.copy_from_slice(&g.values),
        }
        let spec = sp.transform(&weighted);
        let dt = t_end - s;
        for ((acc, sv), &k) in acc.iter_mut().zip(&spec).zip(&sp.freqs) {
            *acc += sv * semigroup_symbol(dt, a, k) * om;
        }
    }
    Field::new(grid, sp.restore(acc))
}

fn normalized_source(f: &DriftPerturbation, params: &ModelParams) -> Result<(f64, f64, Field)> {
    let tp = derive_transformed(params)?;
    check_interior(&f.f)?;
    Ok((tp.a, tp.tau_norm, f.f.scale(1.0 / params.time_scale())))
}

/// `v(τ*, ·)` for the perturbation `f` (calendar units), plus optional
/// snapshots at the calendar times in `snapshot_times`.
pub fn duhamel_forward(
    f: &DriftPerturbation,
    params: &ModelParams,
    cfg: &DuhamelConfig,
    snapshot_times: &[f64],
) -> Result<ForwardResult> {
    let (a, t_end, g) = normalized_source(f, params)?;
    let v_final = duhamel_integral(&g, a, 0.0, t_end, t_end, cfg.panels, cfg.order, cfg.weight)?;
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        if !(0.0..=params.tau_star).contains(&t) {
            return domain(format!("snapshot time {t} outside [0, tau_star]"));
        }
        let tn = params.time_scale() * t;
        let v = duhamel_integral(&g, a, 0.0, tn, tn, cfg.panels, cfg.order, cfg.weight)?;
        snapshots.push((t, v));
    }
    Ok(ForwardResult { v_final, snapshots })
}

/// Panel counts for `[0, τ₀]` and `[τ₀, τ*]`, proportional to their lengths.
pub(crate) fn split_panels(panels: usize, tau0: f64, tau_star: f64) -> (usize, usize) {
    let p1 = ((panels as f64 * tau0 / tau_star).round() as usize).clamp(1, panels.max(2) - 1);
    (p1, panels.max(2) - p1)
}

/// `(I₁, I₂)`: the Duhamel integral over `[0, τ₀]` and `[τ₀, τ*]`
/// (calendar `tau0`).
pub fn split_i1_i2(
    f: &DriftPerturbation,
    params: &ModelParams,
    tau0: f64,
    cfg: &DuhamelConfig,
) -> Result<(Field, Field)> {
    if !(tau0 > 0.0 && tau0 < params.tau_star) {
        return domain(format!("tau0 must lie in (0, tau_star), got {tau0}"));
    }
    let (a, t_end, g) = normalized_source(f, params)?;
    let t0 = params.time_scale() * tau0;
    let (p1, p2) = split_panels(cfg.panels, tau0, params.tau_star);
    let i1 = duhamel_integral(&g, a, 0.0, t0, t_end, p1, cfg.order, cfg.weight)?;
    let i2 = duhamel_integral(&g, a, t0, t_end, t_end, p2, cfg.order, cfg.weight)?;
    Ok((i1, i2))
}

/// `V = e^{y − b₀τ*} v`.
pub fn price_perturbation(v: &Field, params: &ModelParams) -> Result<Field> {
    let tp = derive_transformed(params)?;
    Ok(v.map(|y, x| x * (y - tp.b0 * params.tau_star).exp()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonlinearConfig {
    pub nt: usize,
    /// Implicit Euler half-steps before switching to Crank–Nicolson.
    pub startup_steps: usize,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            nt: 200,
            startup_steps: 4,
        }
    }
}

/// Payoff `max(e^y − 1, 0)`, averaged over the cell containing the kink.
fn smoothed_payoff(grid: &Grid) -> Vec<f64> {
    let h = grid.dy;
    grid.nodes()
        .map(|y| {
            let (lo, hi) = (y - 0.5 * h, y + 0.5 * h);
            if lo < 0.0 && hi > 0.0 {
                // (1/h) ∫_0^{hi} (e^x − 1) dx
                (hi.exp() - 1.0 - hi) / h
            } else {
                (y.exp() - 1.0).max(0.0)
            }
        })
        .collect()
}

/// Thomas algorithm for `l_i x_{i−1} + d_i x_i + u_i x_{i+1} = b_i`.
fn solve_tridiagonal(l: &[f64], d: &[f64], u: &[f64], b: &mut [f64]) -> Result<()> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut piv = d[0];
    if piv == 0.0 {
        return Err(LipdError::Singular("zero pivot in tridiagonal solve".into()));
    }
    c[0] = u[0] / piv;
    b[0] /= piv;
    for i in 1..n {
        piv = d[i] - l[i] * c[i - 1];
        if piv == 0.0 {
            return Err(LipdError::Singular("zero pivot in tridiagonal solve".into()));
        }
        c[i] = u[i] / piv;
        b[i] = (b[i] - l[i] * b[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        b[i] -= c[i] * b[i + 1];
    }
    Ok(())
}

/// `U(τ*, ·)` for the full drift `mu` (calendar units).
///
/// Dirichlet data at both ends are the closed-form prices for the constant
/// drift equal to `mu` at that end.
pub fn solve_nonlinear(mu: &Field, params: &ModelParams, cfg: &NonlinearConfig) -> Result<Field> {
    params.validate()?;
    if cfg.nt < 2 {
        return domain(format!("need at least 2 time steps, got {}", cfg.nt));
    }
    let grid = mu.grid;
    let n = grid.n;
    if n < 3 {
        return domain("nonlinear solver needs at least 3 nodes");
    }
    let (dy, s2) = (grid.dy, params.sigma0 * params.sigma0);
    // spatial operator L U = lo U_{i−1} + di U_i + up U_{i+1}
    let mut lo = vec![0.0; n];
    let mut up = vec![0.0; n];
    let di = -s2 / (dy * dy) - params.r;
    for i in 0..n {
        let c = 0.5 * s2 - mu.values[i].re;
        lo[i] = 0.5 * s2 / (dy * dy) + c / (2.0 * dy);
        up[i] = 0.5 * s2 / (dy * dy) - c / (2.0 * dy);
    }
    let edge_params = |m: f64| ModelParams { mu0: m, ..*params };
    let (p_left, p_right) = (edge_params(mu.values[0].re), edge_params(mu.values[n - 1].re));
    let edge = |t: f64| -> Result<(f64, f64)> {
        let g = Grid::from_spacing(grid.y_min, grid.length(), 2)?;
        let left = solve_base_u0(&p_left, t, &g)?.values[0].re;
        let right = solve_base_u0(&p_right, t, &g)?.values[1].re;
        Ok((left, right))
    };

    let mut u = smoothed_payoff(&grid);
    let dt = params.tau_star / cfg.nt as f64;
    // implicit Euler half-steps, then Crank–Nicolson
    let mut steps: Vec<(f64, f64)> = Vec::new();
    let startup = cfg.startup_steps.min(2 * cfg.nt);
    let half = startup.div_ceil(2);
    for _ in 0..2 * half {
        steps.push((0.5 * dt, 1.0));
    }
    for _ in half..cfg.nt {
        steps.push((dt, 0.5));
    }

    let m = n - 2;
    let mut t = 0.0;
    let (mut l_sys, mut d_sys, mut u_sys, mut rhs) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for &(h, theta) in &steps {
        let t_new = t + h;
        let (bl, br) = edge(t_new)?;
        for k in 0..m {
            let i = k + 1;
            let lu = lo[i] * u[i - 1] + di * u[i] + up[i] * u[i + 1];
            rhs[k] = u[i] + (1.0 - theta) * h * lu;
            l_sys[k] = -theta * h * lo[i];
            d_sys[k] = 1.0 - theta * h * di;
            u_sys[k] = -theta * h * up[i];
        }
        rhs[0] -= l_sys[0] * bl;
        rhs[m - 1] -= u_sys[m - 1] * br;
        solve_tridiagonal(&l_sys, &d_sys, &u_sys, &mut rhs)?;
        u[0] = bl;
        u[n - 1] = br;
        u[1..n - 1].copy_from_slice(&rhs);
        t = t_new;
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(LipdError::Stability("nonlinear solve produced non-finite values".into()));
    }
    Field::from_real(grid, &u)
}

/// Norms of the linearization remainder on a reporting window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearizationReport {
    pub norm_nu: f64,
    pub norm_f: f64,
    pub norm_v: f64,
}

/// `ν = U(μ₀ + f) − U(μ₀) − V` with both `U` from [`solve_nonlinear`], so the
/// time and space discretization error of the base solution cancels.
pub fn linearization_residual(
    f: &DriftPerturbation,
    params: &ModelParams,
    nl: &NonlinearConfig,
    cfg: &DuhamelConfig,
    window: (f64, f64),
) -> Result<LinearizationReport> {
    let grid = f.f.grid;
    let base_mu = Field::from_real_fn(grid, |_| params.mu0);
    let full_mu = base_mu.add(&f.f.map(|_, v| Complex64::new(v.re, 0.0)))?;
    let u_full = solve_nonlinear(&full_mu, params, nl)?;
    let u_base = solve_nonlinear(&base_mu, params, nl)?;
    let v = duhamel_forward(f, params, cfg, &[])?.v_final;
    let big_v = price_perturbation(&v, params)?;
    let nu = u_full.sub(&u_base)?.sub(&big_v)?;
    Ok(LinearizationReport {
        norm_nu: nu.l2_norm_on(window.0, window.1),
        norm_f: f.f.l2_norm_on(window.0, window.1),
        norm_v: big_v.l2_norm_on(window.0, window.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::heat_kernel_unchecked;
    use crate::quadrature::integrate_adaptive_real;

    fn bump(grid: Grid, c: f64, width: f64, amp: f64) -> Field {
        Field::from_real_fn(grid, |y| amp * (-(y - c).powi(2) / (2.0 * width * width)).exp())
    }

    /// Brute-force value of `∫_{s0}^{s1} U_a(T − s)[w(s) g](y) ds` for a
    /// Gaussian `g`, with `s = T − t²` removing the kernel singularity.
    fn brute_force(y: f64, a: f64, s0: f64, s1: f64, t_end: f64, g: impl Fn(f64) -> f64 + Copy) -> f64 {
        let inner = |s: f64| -> f64 {
            let tau = t_end - s;
            let f = |x: f64| heat_kernel_unchecked(tau, y - x, a) * weight_w_real_unchecked(s.max(1e-300), x, a) * g(x);
            let w = 12.0 * tau.sqrt();
            let mut pts: Vec<f64> = [y, 0.0, y - w, y + w]
                .into_iter()
                .filter(|p| p.abs() < 7.0)
                .chain([-7.0, 7.0])
                .collect();
            pts.sort_by(f64::total_cmp);
            pts.windows(2)
                .map(|p| integrate_adaptive_real(f, p[0], p[1], 1e-13, 1e-11).unwrap())
                .sum()
        };
        let (t_lo, t_hi) = ((t_end - s1).sqrt(), (t_end - s0).sqrt());
        integrate_adaptive_real(|t| 2.0 * t * inner(t_end - t * t), t_lo, t_hi, 1e-12, 1e-10).unwrap()
    }

    #[test]
    fn base_price_at_zero_is_payoff_and_monotone_later() {
        let p = ModelParams::default();
        let g = Grid::default_computational();
        let u = solve_base_u0(&p, 0.0, &g).unwrap();
        for (y, v) in g.nodes().zip(&u.values) {
            assert_eq!(v.re, (y.exp() - 1.0).max(0.0));
        }
        let u = solve_base_u0(&p, 1.0, &g).unwrap();
        assert!(u.values.windows(2).all(|w| w[1].re >= w[0].re));
        assert!(solve_base_u0(&p, -0.1, &g).is_err());
    }

    /// `U₀` equals the firm-value call formula with drift `μ₀`.
    #[test]
    fn base_price_matches_lognormal_expectation() {
        use errorfunctions::RealErrorFunctions;
        let p = ModelParams::default();
        let tau: f64 = 1.0;
        let s = p.sigma0 * tau.sqrt();
        let phi = |x: f64| 0.5 * RealErrorFunctions::erfc(-x / std::f64::consts::SQRT_2);
        let g = Grid::new(-2.0, 2.0, 41).unwrap();
        let u = solve_base_u0(&p, tau, &g).unwrap();
        for (y, v) in g.nodes().zip(&u.values) {
            let d1 = (y + (p.mu0 + 0.5 * p.sigma0 * p.sigma0) * tau) / s;
            let d2 = d1 - s;
            let expect = ((p.mu0 - p.r) * tau).exp() * y.exp() * phi(d1) - (-p.r * tau).exp() * phi(d2);
            assert!((v.re - expect).abs() < 1e-13, "y={y}");
        }
    }

    #[test]
    fn base_price_grid_refinement() {
        let p = ModelParams::default();
        let g1 = Grid::new(-8.0, 8.0, 1025).unwrap();
        let g2 = Grid::new(-8.0, 8.0, 2049).unwrap();
        let u1 = solve_base_u0(&p, 1.0, &g1).unwrap();
        let u2 = solve_base_u0(&p, 1.0, &g2).unwrap();
        let coarse = Field::from_real_fn(g1, |y| u2.values[g2.nearest(y)].re);
        let err = u1.sub(&coarse).unwrap().l2_norm_on(-4.0, 4.0) / u1.l2_norm_on(-4.0, 4.0);
        assert!(err < 1e-6);
    }

    #[test]
    fn duhamel_zero_and_homogeneity() {
        let p = ModelParams::default();
        let g = Grid::default_computational();
        let cfg = DuhamelConfig::default();
        let zero = DriftPerturbation::from_field(Field::zeros(g));
        let r = duhamel_forward(&zero, &p, &cfg, &[0.0]).unwrap();
        assert_eq!(r.v_final.max_abs(), 0.0);
        assert_eq!(r.snapshots[0].1.max_abs(), 0.0);
        let f = DriftPerturbation::from_field(bump(g, 0.5, 0.4, 0.05));
        let v = duhamel_forward(&f, &p, &cfg, &[]).unwrap().v_final;
        let f3 = DriftPerturbation::from_field(f.f.scale(-3.0));
        let v3 = duhamel_forward(&f3, &p, &cfg, &[]).unwrap().v_final;
        let err = v3.sub(&v.scale(-3.0)).unwrap().max_abs() / v3.max_abs();
        assert!(err < 1e-12);
    }

    #[test]
    fn duhamel_rejects_boundary_support() {
        let p = ModelParams::default();
        let g = Grid::new(-4.0, 4.0, 256).unwrap();
        let f = DriftPerturbation::from_field(Field::from_real_fn(g, |_| 0.01));
        assert!(matches!(
            duhamel_forward(&f, &p, &DuhamelConfig::default(), &[]),
            Err(LipdError::Truncation(_))
        ));
    }

    #[test]
    fn duhamel_matches_brute_force_quadrature() {
        let p = ModelParams::default();
        let tp = derive_transformed(&p).unwrap();
        let g = Grid::default_computational();
        let src = |y: f64| 0.05 * (-(y - 0.5f64).powi(2) / (2.0 * 0.16)).exp();
        let f = DriftPerturbation::from_field(Field::from_real_fn(g, src));
        let v = duhamel_forward(&f, &p, &DuhamelConfig::default(), &[]).unwrap().v_final;
        let scale = 1.0 / p.time_scale();
        let t = tp.tau_norm;
        let ys = [-1.5, -0.6, 0.0, 0.3, 0.9, 1.6, 2.5];
        let mut num = 0.0;
        let mut den = 0.0;
        for &y in &ys {
            let i = g.nearest(y);
            let yi = g.node(i);
            let exact = brute_force(yi, tp.a, 0.0, t, t, move |x| scale * src(x));
            num += (v.values[i].re - exact).powi(2);
            den += exact * exact;
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 1e-6, "relative error {rel}");
    }

    #[test]
    fn split_parts_add_up_and_match_quadrature() {
        let p = ModelParams::default();
        let tp = derive_transformed(&p).unwrap();
        let g = Grid::default_computational();
        let src = |y: f64| 0.05 * (-(y - 0.5f64).powi(2) / (2.0 * 0.16)).exp();
        let f = DriftPerturbation::from_field(Field::from_real_fn(g, src));
        let cfg = DuhamelConfig::default();
        let v = duhamel_forward(&f, &p, &cfg, &[]).unwrap().v_final;
        let (i1, i2) = split_i1_i2(&f, &p, 0.5 * p.tau_star, &cfg).unwrap();
        let err = i1.add(&i2).unwrap().sub(&v).unwrap().l2_norm() / v.l2_norm();
        assert!(err <= 1e-10, "additivity error {err}");
        let scale = 1.0 / p.time_scale();
        let (t, t0) = (tp.tau_norm, 0.5 * tp.tau_norm);
        for &y in &[-0.5, 0.4, 1.2] {
            let i = g.nearest(y);
            let e1 = brute_force(g.node(i), tp.a, 0.0, t0, t, move |x| scale * src(x));
            let e2 = brute_force(g.node(i), tp.a, t0, t, t, move |x| scale * src(x));
            assert!((i1.values[i].re - e1).abs() <= 1e-6 * e1.abs(), "I1 at {y}");
            assert!((i2.values[i].re - e2).abs() <= 1e-6 * e2.abs(), "I2 at {y}");
        }
        let (small, _) = split_i1_i2(&f, &p, 1e-6, &cfg).unwrap();
        assert!(small.l2_norm() < 1e-3 * v.l2_norm());
        assert!(split_i1_i2(&f, &p, 0.0, &cfg).is_err());
        assert!(split_i1_i2(&f, &p, p.tau_star, &cfg).is_err());
    }

    #[test]
    fn frozen_weight_is_translation_equivariant() {
        let p = ModelParams::default();
        let g = Grid::new(-8.0, 8.0, 1024).unwrap();
        let cfg = DuhamelConfig {
            weight: WeightMode::Frozen,
            ..Default::default()
        };
        let shift = 40;
        let sh = shift as f64 * g.dy;
        let f1 = DriftPerturbation::from_field(bump(g, -1.0, 0.3, 0.05));
        let f2 = DriftPerturbation::from_field(bump(g, -1.0 + sh, 0.3, 0.05));
        let v1 = duhamel_forward(&f1, &p, &cfg, &[]).unwrap().v_final;
        let v2 = duhamel_forward(&f2, &p, &cfg, &[]).unwrap().v_final;
        let mut worst: f64 = 0.0;
        for i in 100..g.n - 100 - shift {
            worst = worst.max((v2.values[i + shift] - v1.values[i]).norm());
        }
        assert!(worst <= 1e-8 * v1.max_abs(), "equivariance error {worst}");
    }

    #[test]
    fn nonlinear_base_matches_closed_form() {
        let p = ModelParams::default();
        let g = Grid::default_computational();
        let mu = Field::from_real_fn(g, |_| p.mu0);
        let u = solve_nonlinear(&mu, &p, &NonlinearConfig::default()).unwrap();
        let exact = solve_base_u0(&p, p.tau_star, &g).unwrap();
        let err = u.sub(&exact).unwrap().l2_norm() / exact.l2_norm();
        assert!(err <= 2e-4, "relative error {err}");
    }

    #[test]
    fn nonlinear_solver_is_second_order_in_time() {
        let p = ModelParams::default();
        let g = Grid::new(-6.0, 6.0, 601).unwrap();
        let mu = Field::from_real_fn(g, |y| p.mu0 + 0.05 * (-(y - 0.3f64).powi(2)).exp());
        let run = |nt| solve_nonlinear(&mu, &p, &NonlinearConfig { nt, startup_steps: 4 }).unwrap();
        let reference = run(3200);
        let errs: Vec<f64> = [20, 40, 80]
            .iter()
            .map(|&nt| run(nt).sub(&reference).unwrap().l2_norm())
            .collect();
        let slope = ((errs[0] / errs[2]).ln()) / (4f64).ln();
        assert!((1.7..=2.3).contains(&slope), "order {slope}, errors {errs:?}");
    }

    #[test]
    fn nonlinear_solver_reduces_to_heat_flow() {
        let p = ModelParams {
            sigma0: std::f64::consts::SQRT_2,
            mu0: 0.0,
            r: 0.0,
            tau_star: 0.5,
            debt: 1.0,
        };
        let g = Grid::default_computational();
        let mu = Field::zeros(g);
        let u = solve_nonlinear(&mu, &p, &NonlinearConfig { nt: 400, startup_steps: 4 }).unwrap();
        let exact = solve_base_u0(&p, p.tau_star, &g).unwrap();
        let err = u.sub(&exact).unwrap().l2_norm_on(-4.0, 4.0) / exact.l2_norm_on(-4.0, 4.0);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn linearization_remainder_is_quadratic() {
        let p = ModelParams::default();
        let g = Grid::new(-8.0, 8.0, 1024).unwrap();
        let nl = NonlinearConfig::default();
        let cfg = DuhamelConfig::default();
        let zero = DriftPerturbation::from_field(Field::zeros(g));
        let r0 = linearization_residual(&zero, &p, &nl, &cfg, (-4.0, 4.0)).unwrap();
        assert_eq!(r0.norm_nu, 0.0);
        let f = DriftPerturbation::from_field(bump(g, 0.5, 0.4, 0.05));
        let r1 = linearization_residual(&f, &p, &nl, &cfg, (-4.0, 4.0)).unwrap();
        let half = DriftPerturbation::from_field(f.f.scale(0.5));
        let r2 = linearization_residual(&half, &p, &nl, &cfg, (-4.0, 4.0)).unwrap();
        let slope = (r1.norm_nu / r2.norm_nu).log2();
        assert!((1.7..=2.3).contains(&slope), "scaling exponent {slope}");
        assert!(r1.norm_nu <= 0.1 * r1.norm_v, "{r1:?}");
    }
}
