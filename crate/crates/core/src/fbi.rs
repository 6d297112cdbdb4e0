//! FBI transform, semiclassical Fourier transform and decay fits.
//!
//! ```text
//! Tu(x, ξ; h) = (2πh)^{−1/2} (πh)^{−1/4} ∫ e^{i(x−y)ξ/h − (x−y)²/2h} u(y) dy
//! F_h u(ξ)    = (2πh)^{−1/2} ∫ e^{−ixξ/h} u(x) dx
//! ```
//!
//! Both are isometries. A point `(x₀, ξ₀)` is outside the analytic wave
//! front set when `‖Tu‖_{L²(V)} = O(e^{−δ/h})` on a neighbourhood `V`; the
//! rate `δ` is estimated by regressing `ln ‖Tu‖` on `−1/h`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LipdError, Result};
use crate::model::{Field, Grid};
use crate::spectral::fft;

/// Uniform `(x, ξ)` grid at semiclassical parameter `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub dx: f64,
    pub nx: usize,
    pub xi_min: f64,
    pub dxi: f64,
    pub nxi: usize,
    pub h: f64,
}

impl PhaseGrid {
    pub fn new(x: (f64, f64), nx: usize, xi: (f64, f64), nxi: usize, h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return domain(format!("h must lie in (0, 1], got {h}"));
        }
        if nx == 0 || nxi == 0 || !(x.1 >= x.0) || !(xi.1 >= xi.0) {
            return domain("phase grid needs nonempty increasing ranges");
        }
        let step = |r: (f64, f64), n: usize| if n > 1 { (r.1 - r.0) / (n - 1) as f64 } else { 1.0 };
        Ok(Self {
            x_min: x.0,
            dx: step(x, nx),
            nx,
            xi_min: xi.0,
            dxi: step(xi, nxi),
            nxi,
            h,
        })
    }

    /// Grid whose ξ spacing divides `2πh/dy` for the given spatial step, so
    /// that [`fbi_transform`] can use the FFT path.
    pub fn aligned(x: (f64, f64), dx_target: f64, xi_max: f64, dxi_target: f64, h: f64, dy: f64) -> Result<Self> {
        let nx = ((x.1 - x.0) / dx_target).ceil().max(1.0) as usize + 1;
        let base = 2.0 * PI * h / dy;
        let fold = (base / dxi_target).ceil().max(1.0);
        let dxi = base / fold;
        let m = (xi_max / dxi).ceil();
        let nxi = 2 * m as usize + 1;
        Self::new(x, nx, (-m * dxi, m * dxi), nxi, h)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn xi(&self, k: usize) -> f64 {
        self.xi_min + k as f64 * self.dxi
    }

    pub fn len(&self) -> usize {
        self.nx * self.nxi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Transform values on a [`PhaseGrid`], stored `x`-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField {
    pub grid: PhaseGrid,
    pub values: Vec<Complex64>,
    /// Bound on the relative error from cutting the Gaussian window.
    pub truncation_estimate: f64,
    /// Pointwise rounding-error level of the computed values.
    pub roundoff_floor: f64,
}

impl PhaseField {
    pub fn get(&self, ix: usize, ik: usize) -> Complex64 {
        self.values[ix * self.grid.nxi + ik]
    }

    /// `ln ‖·‖²` over the nodes satisfying `region`, trapezoid weights,
    /// accumulated in log space. `−∞` when the region is empty or zero.
    pub fn log_norm_sq_on(&self, region: impl Fn(f64, f64) -> bool) -> f64 {
        let g = &self.grid;
        let edge = |i: usize, n: usize| if n > 1 && (i == 0 || i == n - 1) { 0.5 } else { 1.0 };
        let mut terms = Vec::new();
        for ix in 0..g.nx {
            let x = g.x(ix);
            for ik in 0..g.nxi {
                let xi = g.xi(ik);
                if !region(x, xi) {
                    continue;
                }
                let v = self.get(ix, ik).norm();
                if v > 0.0 {
                    let w = g.dx * g.dxi * edge(ix, g.nx) * edge(ik, g.nxi);
                    terms.push(w.ln() + 2.0 * v.ln());
                }
            }
        }
        log_sum_exp(&terms)
    }

    /// `ln` of the rounding-error level of the region norm.
    pub fn log_floor_on(&self, region: impl Fn(f64, f64) -> bool) -> f64 {
        let g = &self.grid;
        let edge = |i: usize, n: usize| if n > 1 && (i == 0 || i == n - 1) { 0.5 } else { 1.0 };
        let mut area = 0.0;
        for ix in 0..g.nx {
            for ik in 0..g.nxi {
                if region(g.x(ix), g.xi(ik)) {
                    area += g.dx * g.dxi * edge(ix, g.nx) * edge(ik, g.nxi);
                }
            }
        }
        self.roundoff_floor.ln() + 0.5 * area.ln()
    }

    pub fn norm_sq(&self) -> f64 {
        self.log_norm_sq_on(|_, _| true).exp()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// How the sampled input is continued beyond its grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Zero outside the grid.
    #[default]
    Zero,
    /// Periodic with period `n·dy`.
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FbiOptions {
    /// Window radius in units of `√h`.
    pub radius_factor: f64,
    pub boundary: Boundary,
}

impl Default for FbiOptions {
    fn default() -> Self {
        Self {
            radius_factor: 8.0,
            boundary: Boundary::Zero,
        }
    }
}

impl FbiOptions {
    /// Window kept until the Gaussian underflows; used by the decay fits,
    /// where the transform itself is exponentially small.
    pub fn exhaustive(boundary: Boundary) -> Self {
        Self {
            radius_factor: (2.0 * 745.0f64).sqrt(),
            boundary,
        }
    }
}

/// Rounding-error growth assumed for the window sums.
const ROUNDOFF_FACTOR: f64 = 64.0;

pub fn fbi_normalization(h: f64) -> f64 {
    (2.0 * PI * h).powf(-0.5) * (PI * h).powf(-0.25)
}

/// `Tu` on `pg` with the default 8√h window.
pub fn fbi_transform(u: &Field, pg: &PhaseGrid) -> Result<PhaseField> {
    fbi_transform_with(u, pg, &FbiOptions::default())
}

pub fn fbi_transform_with(u: &Field, pg: &PhaseGrid, opts: &FbiOptions) -> Result<PhaseField> {
    let grid = u.grid;
    let h = pg.h;
    let radius = opts.radius_factor * h.sqrt();
    if opts.boundary == Boundary::Zero {
        let guard = 5.0 * h.sqrt();
        let peak = u.max_abs();
        let near_edge = grid
            .nodes()
            .zip(&u.values)
            .filter(|(y, _)| *y - grid.y_min < guard || grid.y_max - *y < guard)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        if near_edge > 1e-8 * peak {
            return Err(LipdError::Truncation(format!(
                "input is {near_edge:e} within 5*sqrt(h) of the grid edge (peak {peak:e})"
            )));
        }
    }
    let c = fbi_normalization(h);
    let dy = grid.dy;
    let half = (radius / dy).ceil() as i64;
    let n = grid.n as i64;
    let period = n as f64 * dy;

    // FFT path: ξ_k = m_k Δξ with Δξ = 2πh/(N dy) for an integer N
    let ratio = 2.0 * PI * h / (dy * pg.dxi);
    let fold = ratio.round();
    let m0 = pg.xi_min / pg.dxi;
    let aligned = pg.nxi > 1
        && fold >= 1.0
        && (ratio - fold).abs() < 1e-9 * ratio
        && (m0 - m0.round()).abs() < 1e-9 * m0.abs().max(1.0)
        && pg.nxi as f64 > 8.0 * (1.0 + (pg.nxi as f64).log2());
    let fold = fold as usize;
    let m0 = m0.round() as i64;

    let mut values = Vec::with_capacity(pg.len());
    let mut local: Vec<(f64, Complex64)> = Vec::with_capacity(2 * half as usize + 1);
    let mut bins = vec![Complex64::new(0.0, 0.0); fold.max(1)];
    let mut abs_mass: f64 = 0.0;
    for ix in 0..pg.nx {
        let x = pg.x(ix);
        // window samples (y, dy·e^{−(x−y)²/2h} u(y))
        local.clear();
        let centre = ((x - grid.y_min) / dy).round() as i64;
        for j in centre - half..=centre + half {
            let (idx, shift) = match opts.boundary {
                Boundary::Zero => {
                    if j < 0 || j >= n {
                        continue;
                    }
                    (j, 0.0)
                }
                Boundary::Periodic => (j.rem_euclid(n), j.div_euclid(n) as f64 * period),
            };
            let y = grid.y_min + idx as f64 * dy + shift;
            let d = x - y;
            if d.abs() > radius {
                continue;
            }
            let v = u.values[idx as usize];
            if v.norm() == 0.0 {
                continue;
            }
            local.push((y, v * (dy * (-d * d / (2.0 * h)).exp())));
        }
        abs_mass = abs_mass.max(local.iter().map(|(_, g)| g.norm()).sum::<f64>());
        if aligned && !local.is_empty() {
            let j0 = local[0].0;
            bins.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for &(y, g) in &local {
                let j = ((y - j0) / dy).round() as usize;
                bins[j % fold] += g;
            }
            fft(&mut bins);
            for ik in 0..pg.nxi {
                let xi = pg.xi(ik);
                let m = (m0 + ik as i64).rem_euclid(fold as i64) as usize;
                let phase = Complex64::from_polar(c, (x - j0) * xi / h);
                values.push(phase * bins[m]);
            }
        } else {
            for ik in 0..pg.nxi {
                let xi = pg.xi(ik);
                let s: Complex64 = local
                    .iter()
                    .map(|&(y, g)| g * Complex64::from_polar(1.0, (x - y) * xi / h))
                    .sum();
                values.push(s * c);
            }
        }
    }
    Ok(PhaseField {
        grid: *pg,
        values,
        truncation_estimate: (-opts.radius_factor * opts.radius_factor / 2.0).exp(),
        roundoff_floor: (ROUNDOFF_FACTOR * f64::EPSILON * c * abs_mass).max(f64::MIN_POSITIVE),
    })
}

/// `F_h u` on the grid `ξ_k = ξ_min + k·2πh/(n dy)`, `ξ_min = −⌊n/2⌋ Δξ`.
pub fn semiclassical_fourier(u: &Field, h: f64) -> Result<Field> {
    let dxi = 2.0 * PI * h / (u.grid.n as f64 * u.grid.dy);
    semiclassical_fourier_from(u, h, -((u.grid.n / 2) as f64) * dxi)
}

/// `F_h u` on `ξ_k = xi_min + k·2πh/(n dy)`, using pre- and post-twiddles
/// around one FFT.
pub fn semiclassical_fourier_from(u: &Field, h: f64, xi_min: f64) -> Result<Field> {
    if !(h > 0.0) {
        return domain(format!("h must be positive, got {h}"));
    }
    let g = u.grid;
    let n = g.n;
    let dxi = 2.0 * PI * h / (n as f64 * g.dy);
    let mut buf: Vec<Complex64> = u
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| v * Complex64::from_polar(1.0, -(j as f64) * g.dy * xi_min / h))
        .collect();
    fft(&mut buf);
    let c = g.dy / (2.0 * PI * h).sqrt();
    for (k, v) in buf.iter_mut().enumerate() {
        let xi = xi_min + k as f64 * dxi;
        *v *= Complex64::from_polar(c, -g.y_min * xi / h);
    }
    Field::new(Grid::from_spacing(xi_min, dxi, n)?, buf)
}

/// Inverse of [`semiclassical_fourier_from`], returning to the grid that
/// starts at `y_min`.
pub fn inverse_semiclassical_fourier(v: &Field, h: f64, y_min: f64) -> Result<Field> {
    if !(h > 0.0) {
        return domain(format!("h must be positive, got {h}"));
    }
    let g = v.grid;
    let n = g.n;
    let dy = 2.0 * PI * h / (n as f64 * g.dy);
    let mut buf: Vec<Complex64> = v
        .values
        .iter()
        .enumerate()
        .map(|(k, x)| x * Complex64::from_polar(1.0, y_min * (g.y_min + k as f64 * g.dy) / h))
        .collect();
    crate::spectral::ifft(&mut buf);
    let c = g.dy / (2.0 * PI * h).sqrt();
    for (j, x) in buf.iter_mut().enumerate() {
        *x *= Complex64::from_polar(c, j as f64 * dy * g.y_min / h);
    }
    Field::new(Grid::from_spacing(y_min, dy, n)?, buf)
}

/// `max |Tu(x,ξ) − e^{ixξ/h} T(F_h u)(ξ, −x)|` over `pg`; the right side is
/// evaluated by direct summation on the `ξ` grid of `F_h u`.
pub fn fbi_fourier_identity_check(u: &Field, pg: &PhaseGrid) -> Result<f64> {
    let opts = FbiOptions::exhaustive(Boundary::Zero);
    let tu = fbi_transform_with(u, pg, &opts)?;
    let fu = semiclassical_fourier(u, pg.h)?;
    let h = pg.h;
    let c = fbi_normalization(h);
    let mut worst: f64 = 0.0;
    for ix in 0..pg.nx {
        let x = pg.x(ix);
        for ik in 0..pg.nxi {
            let xi = pg.xi(ik);
            // T(F_h u)(ξ, −x) = c Σ e^{−i(ξ−η)x/h − (ξ−η)²/2h} F_h u(η) dη
            let s: Complex64 = fu
                .grid
                .nodes()
                .zip(&fu.values)
                .filter(|(eta, _)| (xi - eta).abs() < 40.0 * h.sqrt())
                .map(|(eta, v)| {
                    let d = xi - eta;
                    v * Complex64::from_polar((-d * d / (2.0 * h)).exp(), -d * x / h)
                })
                .sum();
            let rhs = Complex64::from_polar(1.0, x * xi / h) * s * (c * fu.grid.dy);
            worst = worst.max((tu.get(ix, ik) - rhs).norm());
        }
    }
    Ok(worst)
}

/// `|‖Tu‖ − ‖u‖| / ‖u‖` with `‖Tu‖` integrated over `bbox`.
pub fn fbi_parseval_defect(u: &Field, bbox: &PhaseBox, h: f64) -> Result<f64> {
    let t = fbi_transform(u, &fit_grid(bbox, h, u.grid.dy)?)?;
    let n = u.l2_norm();
    Ok((t.norm_sq().sqrt() - n).abs() / n)
}

/// `T^ε u = e^{εψ(ξ)/h} Tu`.
pub fn weighted_transform(u: &Field, pg: &PhaseGrid, psi: impl Fn(f64) -> f64, eps: f64) -> Result<PhaseField> {
    if !(eps >= 0.0) {
        return domain(format!("eps must be nonnegative, got {eps}"));
    }
    let mut t = fbi_transform(u, pg)?;
    apply_weight(&mut t, psi, eps)?;
    Ok(t)
}

pub(crate) fn apply_weight(t: &mut PhaseField, psi: impl Fn(f64) -> f64, eps: f64) -> Result<()> {
    let g = t.grid;
    let factors: Vec<f64> = (0..g.nxi)
        .map(|k| {
            let e = eps * psi(g.xi(k)) / g.h;
            if e > 700.0 {
                Err(LipdError::Overflow(format!("weight exponent {e} exceeds 700")))
            } else {
                Ok(e.exp())
            }
        })
        .collect::<Result<_>>()?;
    for (i, v) in t.values.iter_mut().enumerate() {
        *v *= factors[i % g.nxi];
    }
    Ok(())
}

/// Outcome of a decay regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    /// `r²` below the acceptance threshold.
    Inconclusive,
    /// Some norm fell below the floor; `delta` is `+∞`.
    Underflow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub h_list: Vec<f64>,
    /// `ln ‖Tu‖_{L²(V)}` per `h`.
    pub log_norms: Vec<f64>,
    pub delta: f64,
    pub log_prefactor: f64,
    pub r2: f64,
    pub status: FitStatus,
}

pub const DEFAULT_H_LIST: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const MIN_R2: f64 = 0.98;
const LOG_FLOOR: f64 = -690.8; // ln 1e-300

/// [`fit_decay`] after dropping the `h` values whose norm is within a
/// factor ten of its rounding-error level; with fewer than three left the
/// decay is faster than resolvable and reported as underflow.
pub fn fit_decay_above_floor(h_list: &[f64], log_norms: &[f64], log_floors: &[f64]) -> Result<DecayFit> {
    if h_list.len() != log_floors.len() {
        return domain("decay fit received mismatched floors");
    }
    let keep: Vec<usize> = (0..h_list.len())
        .filter(|&i| log_norms[i] > log_floors[i] + 10f64.ln())
        .collect();
    if keep.len() == h_list.len() || h_list.len() < 3 {
        return fit_decay(h_list, log_norms);
    }
    if keep.len() < 3 {
        return Ok(DecayFit {
            h_list: h_list.to_vec(),
            log_norms: log_norms.to_vec(),
            delta: f64::INFINITY,
            log_prefactor: f64::NAN,
            r2: f64::NAN,
            status: FitStatus::Underflow,
        });
    }
    let hs: Vec<f64> = keep.iter().map(|&i| h_list[i]).collect();
    let ls: Vec<f64> = keep.iter().map(|&i| log_norms[i]).collect();
    fit_decay(&hs, &ls)
}

/// Least-squares fit of `ln N(h) = ln C − δ/h`.
pub fn fit_decay(h_list: &[f64], log_norms: &[f64]) -> Result<DecayFit> {
    if h_list.len() < 3 || h_list.len() != log_norms.len() {
        return domain("decay fit needs at least three matching (h, norm) pairs");
    }
    if log_norms.iter().any(|l| l.is_nan()) {
        return domain("decay fit received NaN norms");
    }
    if log_norms.iter().any(|&l| l < LOG_FLOOR) {
        return Ok(DecayFit {
            h_list: h_list.to_vec(),
            log_norms: log_norms.to_vec(),
            delta: f64::INFINITY,
            log_prefactor: f64::NAN,
            r2: f64::NAN,
            status: FitStatus::Underflow,
        });
    }
    let xs: Vec<f64> = h_list.iter().map(|h| -1.0 / h).collect();
    let (slope, intercept, r2) = linear_fit(&xs, log_norms);
    Ok(DecayFit {
        h_list: h_list.to_vec(),
        log_norms: log_norms.to_vec(),
        delta: slope,
        log_prefactor: intercept,
        r2,
        status: if r2 >= MIN_R2 { FitStatus::Ok } else { FitStatus::Inconclusive },
    })
}

/// Slope, intercept and `r²` of an ordinary least-squares line.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, my - slope * mx, r2)
}

/// Fits the decay of `‖T u_h‖_{L²(region)}` where `family(h)` returns the
/// transform at each `h`.
pub fn decay_fit(
    family: impl Fn(f64) -> Result<PhaseField>,
    region: impl Fn(f64, f64) -> bool + Copy,
    h_list: &[f64],
) -> Result<DecayFit> {
    let mut logs = Vec::with_capacity(h_list.len());
    let mut floors = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let t = family(h)?;
        logs.push(0.5 * t.log_norm_sq_on(region));
        floors.push(t.log_floor_on(region));
    }
    fit_decay_above_floor(h_list, &logs, &floors)
}

/// Rectangle `[x_lo, x_hi] × [xi_lo, xi_hi]` in phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub x_lo: f64,
    pub x_hi: f64,
    pub xi_lo: f64,
    pub xi_hi: f64,
}

impl PhaseBox {
    pub fn contains(&self, x: f64, xi: f64) -> bool {
        x >= self.x_lo - 1e-12 && x <= self.x_hi + 1e-12 && xi >= self.xi_lo - 1e-12 && xi <= self.xi_hi + 1e-12
    }
}

/// Phase-grid resolution used by the fits: `√h/4` in both variables.
pub fn fit_grid(bbox: &PhaseBox, h: f64, dy: f64) -> Result<PhaseGrid> {
    let step = 0.25 * h.sqrt();
    let xi_max = bbox.xi_lo.abs().max(bbox.xi_hi.abs());
    PhaseGrid::aligned((bbox.x_lo, bbox.x_hi), step.min(0.05), xi_max, step.min(0.05), h, dy)
}

/// Decay rate of a fixed input on a box.
pub fn decay_fit_box(u: &Field, bbox: &PhaseBox, h_list: &[f64], boundary: Boundary) -> Result<DecayFit> {
    let opts = FbiOptions::exhaustive(boundary);
    decay_fit(
        |h| fbi_transform_with(u, &fit_grid(bbox, h, u.grid.dy)?, &opts),
        |x, xi| bbox.contains(x, xi),
        h_list,
    )
}

/// One row of a wave front scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanTile {
    pub tile: PhaseBox,
    pub delta: f64,
    pub r2: f64,
    pub status: FitStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanConfig {
    pub x_range: (f64, f64),
    pub xi_min: f64,
    pub xi_max: f64,
    pub tile: f64,
    pub h_list: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            x_range: (-2.0, 2.0),
            xi_min: 0.5,
            xi_max: 3.0,
            tile: 0.5,
            h_list: DEFAULT_H_LIST.to_vec(),
        }
    }
}

/// Tiles `x_range × {xi_min ≤ |ξ| ≤ xi_max}` and fits a rate per tile.
/// One transform per `h` covers all tiles.
pub fn wavefront_scan(u: &Field, cfg: &ScanConfig) -> Result<Vec<ScanTile>> {
    if !(cfg.tile > 0.0) || !(cfg.xi_max > cfg.xi_min) || !(cfg.xi_min >= 0.0) {
        return domain("invalid scan configuration");
    }
    let nxt = ((cfg.x_range.1 - cfg.x_range.0) / cfg.tile).round().max(1.0) as usize;
    let nkt = ((cfg.xi_max - cfg.xi_min) / cfg.tile).round().max(1.0) as usize;
    let mut tiles = Vec::new();
    for i in 0..nxt {
        let x_lo = cfg.x_range.0 + i as f64 * cfg.tile;
        for sign in [-1.0, 1.0] {
            for k in 0..nkt {
                let a = cfg.xi_min + k as f64 * cfg.tile;
                let b = a + cfg.tile;
                let (xi_lo, xi_hi) = if sign > 0.0 { (a, b) } else { (-b, -a) };
                tiles.push(PhaseBox {
                    x_lo,
                    x_hi: x_lo + cfg.tile,
                    xi_lo,
                    xi_hi,
                });
            }
        }
    }
    let bbox = PhaseBox {
        x_lo: cfg.x_range.0,
        x_hi: cfg.x_range.0 + nxt as f64 * cfg.tile,
        xi_lo: -cfg.xi_max,
        xi_hi: cfg.xi_max,
    };
    let opts = FbiOptions::exhaustive(Boundary::Zero);
    let mut logs = vec![Vec::with_capacity(cfg.h_list.len()); tiles.len()];
    let mut floors = logs.clone();
    for &h in &cfg.h_list {
        let t = fbi_transform_with(u, &fit_grid(&bbox, h, u.grid.dy)?, &opts)?;
        for ((tile, l), f) in tiles.iter().zip(logs.iter_mut()).zip(floors.iter_mut()) {
            l.push(0.5 * t.log_norm_sq_on(|x, xi| tile.contains(x, xi)));
            f.push(t.log_floor_on(|x, xi| tile.contains(x, xi)));
        }
    }
    tiles
        .into_iter()
        .zip(logs.into_iter().zip(floors))
        .map(|(tile, (l, f))| {
            let fit = fit_decay_above_floor(&cfg.h_list, &l, &f)?;
            Ok(ScanTile {
                tile,
                delta: fit.delta,
                r2: fit.r2,
                status: fit.status,
            })
        })
        .collect()
}

/// Result of an exponential-smallness check across `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub sigma: f64,
    pub h_list: Vec<f64>,
    /// `‖Tu‖²` on the separated region, per `h`.
    pub norms_sq: Vec<f64>,
    pub u_norm_sq: f64,
    /// Smallest `C` with `‖Tu‖² ≤ C e^{−σ²/2h} ‖u‖²` at every `h`.
    pub constant: f64,
    /// Rate fitted to the unsquared region norm.
    pub fit: DecayFit,
}

/// Distance from the support of `u` (nodes with `|u| > 1e-14`) to the set
/// `{x : region_x(x)}` sampled on `xs`.
fn support_distance(u: &Field, xs: &[f64], region_x: impl Fn(f64) -> bool) -> f64 {
    let supp: Vec<f64> = u
        .grid
        .nodes()
        .zip(&u.values)
        .filter(|(_, v)| v.norm() > 1e-14)
        .map(|(y, _)| y)
        .collect();
    let mut d = f64::INFINITY;
    for &x in xs.iter().filter(|&&x| region_x(x)) {
        for &y in &supp {
            d = d.min((x - y).abs());
        }
    }
    d
}

fn bound_report(sigma: f64, h_list: &[f64], logs_sq: Vec<f64>, u_norm_sq: f64) -> Result<BoundReport> {
    let norms_sq: Vec<f64> = logs_sq.iter().map(|l| l.exp()).collect();
    let constant = if u_norm_sq == 0.0 {
        0.0
    } else {
        h_list
            .iter()
            .zip(&logs_sq)
            .map(|(h, l)| (l + sigma * sigma / (2.0 * h) - u_norm_sq.ln()).exp())
            .fold(0.0, f64::max)
    };
    let fit = if u_norm_sq == 0.0 {
        fit_decay(h_list, &vec![f64::NEG_INFINITY; h_list.len()])?
    } else {
        fit_decay(h_list, &logs_sq.iter().map(|l| 0.5 * l).collect::<Vec<_>>())?
    };
    Ok(BoundReport {
        sigma,
        h_list: h_list.to_vec(),
        norms_sq,
        u_norm_sq,
        constant,
        fit,
    })
}

/// Checks `‖Tu‖²_{L²(F₂×ℝ)} ≤ C e^{−σ₁²/2h} ‖u‖²` for `F₂ = [f2.0, f2.1]`,
/// `σ₁ = dist(supp u, F₂)`; `ξ` is integrated over `[−xi_max, xi_max]`.
pub fn support_separation_check(u: &Field, f2: (f64, f64), xi_max: f64, h_list: &[f64]) -> Result<BoundReport> {
    let bbox = PhaseBox {
        x_lo: f2.0,
        x_hi: f2.1,
        xi_lo: -xi_max,
        xi_hi: xi_max,
    };
    let xs: Vec<f64> = (0..=400).map(|i| f2.0 + (f2.1 - f2.0) * i as f64 / 400.0).collect();
    let sigma = support_distance(u, &xs, |_| true);
    let u_norm_sq = u.l2_norm().powi(2);
    let mut logs = Vec::with_capacity(h_list.len());
    for &h in h_list {
        logs.push(box_log_norm_sq(u, &bbox, h)?);
    }
    bound_report(if u_norm_sq == 0.0 { f64::NAN } else { sigma }, h_list, logs, u_norm_sq)
}

fn box_log_norm_sq(u: &Field, bbox: &PhaseBox, h: f64) -> Result<f64> {
    let pg = fit_grid(bbox, h, u.grid.dy)?;
    let opts = FbiOptions::exhaustive(Boundary::Zero);
    Ok(fbi_transform_with(u, &pg, &opts)?.log_norm_sq_on(|x, xi| bbox.contains(x, xi)))
}

/// The same bound with `x` and `ξ` exchanged: for each `h`, `u_h` is the
/// inverse semiclassical transform of `bump` (sampled on a `ξ` grid) and the
/// region is `{ξ ∈ F₂}`. Uses `|Tu(x, ξ)| = |T(F_h u)(ξ, −x)|`.
pub fn fourier_support_separation_check(
    bump: impl Fn(f64) -> f64,
    f2: (f64, f64),
    x_max: f64,
    h_list: &[f64],
    y_grid: &Grid,
) -> Result<BoundReport> {
    let mut logs = Vec::with_capacity(h_list.len());
    let mut u_norm_sq = 0.0;
    let mut sigma = f64::NAN;
    let bbox = PhaseBox {
        x_lo: f2.0,
        x_hi: f2.1,
        xi_lo: -x_max,
        xi_hi: x_max,
    };
    for &h in h_list {
        let fu = bump_spectrum(&bump, h, y_grid)?;
        logs.push(box_log_norm_sq(&fu, &bbox, h)?);
        u_norm_sq = fu.l2_norm().powi(2);
        let xs: Vec<f64> = (0..=400).map(|i| f2.0 + (f2.1 - f2.0) * i as f64 / 400.0).collect();
        sigma = support_distance(&fu, &xs, |_| true);
    }
    bound_report(sigma, h_list, logs, u_norm_sq)
}

/// `bump` sampled on the `ξ` grid that [`semiclassical_fourier`] assigns to
/// `y_grid` at this `h`.
pub fn bump_spectrum(bump: impl Fn(f64) -> f64, h: f64, y_grid: &Grid) -> Result<Field> {
    let dxi = 2.0 * PI * h / (y_grid.n as f64 * y_grid.dy);
    let g = Grid::from_spacing(-((y_grid.n / 2) as f64) * dxi, dxi, y_grid.n)?;
    Ok(Field::from_real_fn(g, bump))
}

/// Direct route for [`fourier_support_separation_check`]: transforms
/// `u_h = F_h^{−1} bump` itself (periodic continuation) on
/// `[−x_max, x_max] × F₂`.
pub fn fourier_support_separation_direct(
    bump: impl Fn(f64) -> f64,
    f2: (f64, f64),
    x_max: f64,
    h_list: &[f64],
    y_grid: &Grid,
) -> Result<DecayFit> {
    let opts = FbiOptions::exhaustive(Boundary::Periodic);
    let mut logs = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let fu = bump_spectrum(&bump, h, y_grid)?;
        let u = inverse_semiclassical_fourier(&fu, h, y_grid.y_min)?;
        let step = (0.25 * h.sqrt()).min(0.05);
        let nx = (2.0 * x_max / step).ceil() as usize + 1;
        let nxi = ((f2.1 - f2.0) / step).ceil() as usize + 1;
        let pg = PhaseGrid::new((-x_max, x_max), nx, f2, nxi, h)?;
        let t = fbi_transform_with(&u, &pg, &opts)?;
        logs.push(0.5 * t.log_norm_sq_on(|_, _| true));
    }
    fit_decay(h_list, &logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_adaptive;

    fn coherent(grid: Grid, h: f64) -> Field {
        Field::from_real_fn(grid, |y| (PI * h).powf(-0.25) * (-y * y / (2.0 * h)).exp())
    }

    #[test]
    fn zero_input_gives_zero_transform() {
        let g = Grid::new(-5.0, 5.0, 501).unwrap();
        let pg = PhaseGrid::new((-1.0, 1.0), 11, (-2.0, 2.0), 21, 0.1).unwrap();
        let t = fbi_transform(&Field::zeros(g), &pg).unwrap();
        assert!(t.values.iter().all(|v| v.norm() == 0.0));
        assert_eq!(fbi_fourier_identity_check(&Field::zeros(g), &pg).unwrap(), 0.0);
    }

    #[test]
    fn coherent_state_has_gaussian_transform() {
        let h = 0.1;
        let g = Grid::new(-6.0, 6.0, 1201).unwrap();
        let u = coherent(g, h);
        let pg = PhaseGrid::new((-1.0, 1.0), 21, (-1.0, 1.0), 21, h).unwrap();
        let t = fbi_transform(&u, &pg).unwrap();
        for ix in 0..pg.nx {
            for ik in 0..pg.nxi {
                let (x, xi) = (pg.x(ix), pg.xi(ik));
                let expect = (2.0 * PI * h).powf(-0.5) * (-(x * x + xi * xi) / (4.0 * h)).exp();
                assert!((t.get(ix, ik).norm() - expect).abs() < 1e-10, "({x}, {xi})");
            }
        }
        let origin = fbi_transform(&u, &PhaseGrid::new((0.0, 0.0), 1, (0.0, 0.0), 1, h).unwrap()).unwrap();
        assert!((origin.values[0].norm() - (2.0 * PI * h).powf(-0.5)).abs() < 1e-12);
    }

    /// Independent quadrature of the defining integral at a few points.
    #[test]
    fn transform_matches_direct_quadrature() {
        let h = 0.05;
        let g = Grid::new(-7.0, 7.0, 3501).unwrap();
        let f = |y: f64| (-(y - 0.3f64).powi(2)).exp() * (1.0 + 0.5 * (3.0 * y).sin());
        let u = Field::from_real_fn(g, f);
        let pg = PhaseGrid::aligned((-1.0, 1.0), 0.5, 2.0, 0.05, h, g.dy).unwrap();
        let t = fbi_transform(&u, &pg).unwrap();
        let c = fbi_normalization(h);
        for &(ix, ik) in &[(0, 0), (2, pg.nxi / 2), (4, pg.nxi - 1), (3, 7)] {
            let (x, xi) = (pg.x(ix), pg.xi(ik));
            let q = integrate_adaptive(
                |y| Complex64::from_polar(c * f(y) * (-(x - y).powi(2) / (2.0 * h)).exp(), (x - y) * xi / h),
                x - 3.0,
                x + 3.0,
                1e-15,
                1e-13,
            )
            .unwrap();
            assert!((t.get(ix, ik) - q).norm() < 1e-10, "({x}, {xi}) {} vs {q}", t.get(ix, ik));
        }
    }

    #[test]
    fn fft_and_direct_paths_agree() {
        let h = 0.1;
        let g = Grid::new(-7.0, 7.0, 1121).unwrap();
        let u = Field::from_real_fn(g, |y| (-(y * y)).exp() * (2.0 * y).cos());
        let pg = PhaseGrid::aligned((-1.0, 1.0), 0.1, 3.0, 0.05, h, g.dy).unwrap();
        let fast = fbi_transform(&u, &pg).unwrap();
        // nudging ξ_min breaks the alignment and forces direct sums
        let shifted = PhaseGrid {
            xi_min: pg.xi_min * (1.0 + 1e-15) + 1e-13,
            ..pg
        };
        let slow = fbi_transform(&u, &shifted).unwrap();
        let diff = fast
            .values
            .iter()
            .zip(&slow.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn parseval_for_band_limited_input() {
        for &h in &[0.2, 0.1, 0.05] {
            let g = Grid::new(-10.0, 10.0, 2001).unwrap();
            let u = Field::from_real_fn(g, |y| {
                (-(y * y) / 2.0).exp() * (1.0 + 0.4 * (1.3 * y).cos() - 0.2 * (0.7 * y).sin())
            });
            let bbox = PhaseBox {
                x_lo: -7.0,
                x_hi: 7.0,
                xi_lo: -6.0,
                xi_hi: 6.0,
            };
            let pg = PhaseGrid::aligned((bbox.x_lo, bbox.x_hi), 0.05, 6.0, 0.05, h, g.dy).unwrap();
            let t = fbi_transform(&u, &pg).unwrap();
            let rel = (t.norm_sq().sqrt() - u.l2_norm()).abs() / u.l2_norm();
            assert!(rel < 1e-6, "h={h} rel={rel}");
        }
    }

    #[test]
    fn semiclassical_fourier_properties() {
        let h = 0.1;
        let g = Grid::new(-8.0, 8.0, 1024).unwrap();
        let u = Field::from_real_fn(g, |x| (-x * x / (2.0 * h)).exp());
        let fu = semiclassical_fourier(&u, h).unwrap();
        for (xi, v) in fu.grid.nodes().zip(&fu.values) {
            assert!((v - Complex64::new((-xi * xi / (2.0 * h)).exp(), 0.0)).norm() < 1e-12, "xi={xi}");
        }
        let w = Field::from_real_fn(g, |x| (-(x - 0.5).powi(2)).exp() * (1.0 + x.sin()));
        let fw = semiclassical_fourier(&w, h).unwrap();
        assert!((fw.l2_norm() - w.l2_norm()).abs() < 1e-10 * w.l2_norm());
        let back = inverse_semiclassical_fourier(&fw, h, g.y_min).unwrap();
        assert!(back.sub(&w).unwrap().max_abs() < 1e-12);
        // shift theorem, exact for a whole-node shift
        let m = 37;
        let c = m as f64 * g.dy;
        let ws = Field::from_real_fn(g, |x| {
            let x = x - c;
            (-(x - 0.5).powi(2)).exp() * (1.0 + x.sin())
        });
        let fws = semiclassical_fourier(&ws, h).unwrap();
        let err = fws
            .grid
            .nodes()
            .zip(fws.values.iter().zip(&fw.values))
            .map(|(xi, (a, b))| (a - b * Complex64::from_polar(1.0, -c * xi / h)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn semiclassical_fourier_with_offset_window() {
        let h = 0.2;
        let g = Grid::new(-6.0, 6.0, 600).unwrap();
        let u = Field::from_real_fn(g, |x| (-x * x).exp() * (4.0 * x).cos());
        let a = semiclassical_fourier(&u, h).unwrap();
        let b = semiclassical_fourier_from(&u, h, a.grid.y_min + 3.0 * a.grid.dy).unwrap();
        for k in 0..100 {
            assert!((a.values[k + 3] - b.values[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_check_on_gaussian_and_refinement() {
        let h = 0.1;
        let g = Grid::new(-8.0, 8.0, 1601).unwrap();
        let u = coherent(g, h);
        let pg = PhaseGrid::new((-1.0, 1.0), 9, (-1.0, 1.0), 9, h).unwrap();
        assert!(fbi_fourier_identity_check(&u, &pg).unwrap() <= 1e-8);

        let bump = |y: f64| if y.abs() < 1.0 { (1.0 - y * y) * (1.0 + 0.3 * (2.0 * y).sin()) } else { 0.0 };
        let errs: Vec<f64> = [200usize, 400, 800]
            .iter()
            .map(|&n| {
                let g = Grid::new(-8.0, 8.0, n + 1).unwrap();
                fbi_fourier_identity_check(&Field::from_real_fn(g, bump), &pg).unwrap()
            })
            .collect();
        // sampled transforms satisfy the identity exactly up to rounding
        assert!(errs.iter().all(|&e| e <= 1e-11), "errors {errs:?}");
    }

    #[test]
    fn weighted_transform_scales_exactly() {
        let h = 0.1;
        let g = Grid::new(-6.0, 6.0, 601).unwrap();
        let u = Field::from_real_fn(g, |y| (-(y * y)).exp());
        let pg = PhaseGrid::new((-1.0, 1.0), 11, (-3.0, 3.0), 31, h).unwrap();
        let t = fbi_transform(&u, &pg).unwrap();
        assert_eq!(weighted_transform(&u, &pg, |_| 1.0, 0.0).unwrap(), t);
        assert_eq!(weighted_transform(&u, &pg, |_| 0.0, 0.3).unwrap(), t);
        let psi = |xi: f64| if xi.abs() >= 2.0 { 1.0 } else { 0.0 };
        let tw = weighted_transform(&u, &pg, psi, 0.1).unwrap();
        let region = |_x: f64, xi: f64| xi.abs() >= 2.0;
        let ratio = (0.5 * (tw.log_norm_sq_on(region) - t.log_norm_sq_on(region))).exp();
        assert!((ratio / (0.1f64 / h).exp() - 1.0).abs() < 1e-12);
        assert!(matches!(weighted_transform(&u, &pg, |_| 1.0, 100.0), Err(LipdError::Overflow(_))));
    }

    #[test]
    fn decay_fit_underflow_and_scaling() {
        let fit = fit_decay(&[0.2, 0.1, 0.05], &[-1.0, -800.0, -1600.0]).unwrap();
        assert_eq!(fit.status, FitStatus::Underflow);
        assert_eq!(fit.delta, f64::INFINITY);
        assert!(fit_decay(&[0.2, 0.1], &[0.0, 0.0]).is_err());
        let g = Grid::new(-8.0, 8.0, 1601).unwrap();
        let u = Field::from_real_fn(g, |y| (-(y * y)).exp());
        let bbox = PhaseBox {
            x_lo: 1.5,
            x_hi: 2.5,
            xi_lo: -1.0,
            xi_hi: 1.0,
        };
        let a = decay_fit_box(&u, &bbox, &DEFAULT_H_LIST, Boundary::Zero).unwrap();
        let b = decay_fit_box(&u.scale(-7.5), &bbox, &DEFAULT_H_LIST, Boundary::Zero).unwrap();
        assert!((a.delta - b.delta).abs() <= 1e-10);
        assert!(a.delta > 0.0);
    }

    #[test]
    fn coherent_family_reproduces_quarter_rate() {
        let g = Grid::new(-10.0, 10.0, 4001).unwrap();
        let bbox = PhaseBox {
            x_lo: 2.0,
            x_hi: 4.0,
            xi_lo: -2.0,
            xi_hi: 2.0,
        };
        let opts = FbiOptions::exhaustive(Boundary::Zero);
        let fit = decay_fit(
            |h| fbi_transform_with(&coherent(g, h), &fit_grid(&bbox, h, g.dy)?, &opts),
            |x, xi| bbox.contains(x, xi),
            &DEFAULT_H_LIST,
        )
        .unwrap();
        assert!((fit.delta - 1.0).abs() <= 0.2, "{fit:?}");
    }

    #[test]
    fn doubling_the_separation_quadruples_the_rate() {
        let g = Grid::new(-8.0, 8.0, 1601).unwrap();
        let u = Field::from_real_fn(g, |y| if y.abs() <= 1.0 + 1e-12 { 1.0 } else { 0.0 });
        let hs = [0.2, 0.15, 0.1, 0.075];
        let near = support_separation_check(&u, (2.0, 3.0), 6.0, &hs).unwrap();
        let far = support_separation_check(&u, (3.0, 4.0), 6.0, &hs).unwrap();
        assert_eq!((near.sigma, far.sigma), (1.0, 2.0));
        let ratio = far.fit.delta / near.fit.delta;
        assert!((ratio / 4.0 - 1.0).abs() <= 0.15, "{ratio}");
    }
}
