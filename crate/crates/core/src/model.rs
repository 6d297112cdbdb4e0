//! Model parameters, coordinates and the gauge transform.
//!
//! Firm-value coordinates `(t, A, u)` map to heat coordinates by
//! `τ = T − t`, `y = ln(A/D)`, `U = u/D`. The linearized price perturbation
//! `V` is gauged to `v = e^{−y + b₀τ} V`, which turns the pricing operator
//! into `∂τ + (σ₀²/2) H_a` with `H_a = −(∂_y − a)²`. Rescaling time by
//! `τ̃ = (σ₀²/2) τ` and the source by `f̃ = (2/σ₀²) f` gives unit diffusion.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LipdError, Result};

/// Financial inputs of the pricing model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Volatility per √year.
    pub sigma0: f64,
    /// Baseline real drift per year.
    pub mu0: f64,
    /// Interest rate per year.
    pub r: f64,
    /// Time to maturity `T − t*` in years.
    pub tau_star: f64,
    /// Face value of the debt.
    pub debt: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            sigma0: 0.4,
            mu0: 0.05,
            r: 0.03,
            tau_star: 1.0,
            debt: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.sigma0, self.mu0, self.r, self.tau_star, self.debt]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return domain("model parameters must be finite");
        }
        if self.sigma0 <= 0.0 {
            return domain(format!("sigma0 must be positive, got {}", self.sigma0));
        }
        if self.tau_star <= 0.0 {
            return domain(format!("tau_star must be positive, got {}", self.tau_star));
        }
        if self.debt <= 0.0 {
            return domain(format!("debt must be positive, got {}", self.debt));
        }
        if self.r < 0.0 {
            return domain(format!("interest rate must be nonnegative, got {}", self.r));
        }
        Ok(())
    }

    /// Factor `σ₀²/2` converting calendar time to normalized time.
    pub fn time_scale(&self) -> f64 {
        0.5 * self.sigma0 * self.sigma0
    }
}

/// Gauge constants derived from [`ModelParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformedParams {
    pub a0: f64,
    pub b0: f64,
    /// Drift of the gauged heat operator, `a₀ − 1`.
    pub a: f64,
    /// Normalized final time `(σ₀²/2) τ*`.
    pub tau_norm: f64,
}

pub fn derive_transformed(params: &ModelParams) -> Result<TransformedParams> {
    params.validate()?;
    let s2 = params.sigma0 * params.sigma0;
    let a0 = (s2 - 2.0 * params.mu0) / (2.0 * s2);
    let b0 = params.r + 0.5 * s2 * a0 * a0;
    Ok(TransformedParams {
        a0,
        b0,
        a: a0 - 1.0,
        tau_norm: params.time_scale() * params.tau_star,
    })
}

/// A point in heat coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatPoint {
    pub tau: f64,
    pub y: f64,
    pub price: f64,
}

/// `(t, A, u) ↦ (T − t, ln(A/D), u/D)`.
pub fn to_heat_coords(
    t: f64,
    asset: f64,
    price: f64,
    maturity: f64,
    debt: f64,
) -> Result<HeatPoint> {
    if !(asset > 0.0) {
        return domain(format!("asset value must be positive, got {asset}"));
    }
    if !(debt > 0.0) {
        return domain(format!("debt must be positive, got {debt}"));
    }
    Ok(HeatPoint {
        tau: maturity - t,
        y: (asset / debt).ln(),
        price: price / debt,
    })
}

/// Inverse of [`to_heat_coords`]; returns `(t, A, u)`.
pub fn from_heat_coords(p: HeatPoint, maturity: f64, debt: f64) -> (f64, f64, f64) {
    (maturity - p.tau, debt * p.y.exp(), debt * p.price)
}

/// Uniform one-dimensional grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub y_min: f64,
    pub y_max: f64,
    pub n: usize,
    pub dy: f64,
}

impl Grid {
    pub fn new(y_min: f64, y_max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return domain(format!("a grid needs at least 2 nodes, got {n}"));
        }
        if !(y_min.is_finite() && y_max.is_finite() && y_max > y_min) {
            return domain(format!("invalid grid bounds [{y_min}, {y_max}]"));
        }
        Ok(Self {
            y_min,
            y_max,
            n,
            dy: (y_max - y_min) / (n - 1) as f64,
        })
    }

    /// Grid with given origin and spacing.
    pub fn from_spacing(y_min: f64, dy: f64, n: usize) -> Result<Self> {
        if !(dy > 0.0) || n < 2 {
            return domain("grid spacing must be positive with at least 2 nodes");
        }
        Ok(Self {
            y_min,
            y_max: y_min + dy * (n - 1) as f64,
            n,
            dy,
        })
    }

    /// The default computational grid `[−8, 8]` with 2048 nodes.
    pub fn default_computational() -> Self {
        Self::new(-8.0, 8.0, 2048).expect("static grid")
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.y_min + self.dy * i as f64
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    pub fn length(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Index of the node closest to `y`, clamped to the grid.
    pub fn nearest(&self, y: f64) -> usize {
        let i = ((y - self.y_min) / self.dy).round();
        i.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dy; self.n];
        w[0] *= 0.5;
        w[self.n - 1] *= 0.5;
        w
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n
            && (self.y_min - other.y_min).abs() <= 1e-12 * (1.0 + self.y_min.abs())
            && (self.dy - other.dy).abs() <= 1e-12 * self.dy
    }
}

/// Complex samples of a function on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(LipdError::Shape(format!(
                "field has {} values on a {}-node grid",
                values.len(),
                grid.n
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n],
        }
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(|y| Complex64::new(f(y), 0.0)).collect();
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(self.grid.node(i), v))
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|_, v| v * c)
    }

    pub fn add(&self, other: &Field) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    pub fn sub(&self, other: &Field) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(LipdError::Shape("fields live on different grids".into()))
        }
    }

    /// Discrete L² norm `(dy Σ|v|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.dy * pairwise_sum(self.values.iter().map(|v| v.norm_sqr()))).sqrt()
    }

    /// L² norm restricted to nodes in `[lo, hi]`.
    pub fn l2_norm_on(&self, lo: f64, hi: f64) -> f64 {
        let terms = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let y = self.grid.node(*i);
                y >= lo && y <= hi
            })
            .map(|(_, v)| v.norm_sqr());
        (self.grid.dy * pairwise_sum(terms)).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Discrete inner product `dy Σ a conj(b)`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.check_same_grid(other)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s * self.grid.dy)
    }
}

/// Pairwise summation, so reductions are reproducible and accurate.
pub fn pairwise_sum(iter: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = iter.collect();
    fn rec(v: &[f64]) -> f64 {
        if v.len() <= 32 {
            v.iter().sum()
        } else {
            let (a, b) = v.split_at(v.len() / 2);
            rec(a) + rec(b)
        }
    }
    rec(&v)
}

/// `v = e^{−y + b₀τ} V` nodewise.
pub fn gauge_v_from_price(price: &Field, tau: f64, tp: &TransformedParams) -> Field {
    price.map(|y, v| v * (-y + tp.b0 * tau).exp())
}

/// Inverse of [`gauge_v_from_price`].
pub fn gauge_price_from_v(v: &Field, tau: f64, tp: &TransformedParams) -> Field {
    v.map(|y, x| x * (y - tp.b0 * tau).exp())
}

/// Maps calendar time and a calendar-time source to normalized time and
/// source: `τ̃ = (σ₀²/2) τ`, `f̃ = (2/σ₀²) f`.
pub fn rescale_time(tau: f64, f: &Field, params: &ModelParams) -> (f64, Field) {
    let s = params.time_scale();
    (s * tau, f.scale(1.0 / s))
}
