//! Discretized forward operator, Tikhonov reconstruction and singular value
//! diagnostics.
//!
//! With time nodes `(s_q, ω_q)` and the periodic kernel `c_q` of
//! `U_a(τ̃* − s_q)` on the zero-padded grid,
//!
//! ```text
//! A_ij = (2/σ₀²) Σ_q ω_q c_q[(i − j) mod P] w(s_q, y_j)
//! ```
//!
//! so that `A f` reproduces the Duhamel forward map node for node. Norms
//! use trapezoid weights `W_o` on the observation mask and `W_p` on the
//! parameter nodes; the adjoint is `A* = W_p⁻¹ Aᵀ W_o`. Reconstruction
//! minimizes `‖A f − v‖²_{W_o} + λ‖f‖²_{W_p}` through the SVD of
//! `B = W_o^{1/2} A W_p^{−1/2}`:
//!
//! ```text
//! W_p^{1/2} f_λ = Σ_i s_i / (s_i² + λ) ⟨u_i, W_o^{1/2} v⟩ v_i
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LipdError, Result};
use crate::forward::DuhamelConfig;
use crate::kernels::weight_w_real_unchecked;
use crate::model::{derive_transformed, Field, Grid, ModelParams};
use crate::quadrature::Rule;
use crate::spectral::{kernel_margin, semigroup_symbol, PaddedSpectrum};

/// Largest admissible grid.
pub const MAX_NODES: usize = 8192;

/// Observation mask `ω` over the grid nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask(pub Vec<bool>);

impl Mask {
    pub fn full(grid: &Grid) -> Self {
        Self(vec![true; grid.n])
    }

    /// Nodes in `[lo, hi]`.
    pub fn interval(grid: &Grid, lo: f64, hi: f64) -> Self {
        Self(grid.nodes().map(|y| y >= lo && y <= hi).collect())
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&m| m).count()
    }

    /// Trapezoid weights per contiguous run of observed nodes.
    pub fn weights(&self, dy: f64) -> Vec<f64> {
        let m = &self.0;
        (0..m.len())
            .filter(|&i| m[i])
            .map(|i| {
                let left = i > 0 && m[i - 1];
                let right = i + 1 < m.len() && m[i + 1];
                if left && right {
                    dy
                } else {
                    0.5 * dy
                }
            })
            .collect()
    }
}

/// Dense forward matrix with its grids and weights.
#[derive(Clone, Debug)]
pub struct ForwardMatrix {
    pub a: DMatrix<f64>,
    pub grid: Grid,
    pub mask: Mask,
    /// Grid indices of the rows.
    pub rows: Vec<usize>,
    /// Grid indices of the columns (parameter nodes `y ≥ −L`).
    pub cols: Vec<usize>,
    pub obs_weights: Vec<f64>,
    pub par_weights: Vec<f64>,
}

/// Assembles `A` for parameters on the nodes `y ≥ param_lo`.
pub fn assemble_forward_matrix(
    params: &ModelParams,
    grid: &Grid,
    mask: &Mask,
    param_lo: f64,
    cfg: &DuhamelConfig,
) -> Result<ForwardMatrix> {
    if grid.n > MAX_NODES {
        return Err(LipdError::Size(format!("{} nodes exceed the limit of {MAX_NODES}", grid.n)));
    }
    if mask.0.len() != grid.n {
        return Err(LipdError::Shape(format!("mask has {} entries for {} nodes", mask.0.len(), grid.n)));
    }
    let rows = mask.indices();
    let cols: Vec<usize> = (0..grid.n).filter(|&j| grid.node(j) >= param_lo).collect();
    if rows.is_empty() || cols.is_empty() {
        return domain("empty observation mask or parameter range");
    }
    let tp = derive_transformed(params)?;
    let (a, t_end) = (tp.a, tp.tau_norm);
    let rule = Rule::composite(0.0, t_end, cfg.panels, cfg.order);
    let sp = PaddedSpectrum::new(grid, kernel_margin(t_end, a));
    let p = sp.padded;
    let kernels: Vec<Vec<f64>> = rule
        .nodes
        .iter()
        .map(|&s| {
            let mut c: Vec<Complex64> = sp.freqs.iter().map(|&k| semigroup_symbol(t_end - s, a, k)).collect();
            crate::spectral::ifft(&mut c);
            c.iter().map(|v| v.re / p as f64).collect()
        })
        .collect();
    let scale = 1.0 / params.time_scale();
    let columns: Vec<Vec<f64>> = cols
        .par_iter()
        .map(|&j| {
            let y = grid.node(j);
            let coef: Vec<f64> = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&s, &om)| match cfg.weight {
                    crate::forward::WeightMode::Heaviside => om * weight_w_real_unchecked(s, y, a) * scale,
                    crate::forward::WeightMode::Frozen => om * scale,
                })
                .collect();
            rows.iter()
                .map(|&i| {
                    let m = (i + p - j) % p;
                    kernels.iter().zip(&coef).map(|(c, w)| c[m] * w).sum()
                })
                .collect()
        })
        .collect();
    let amat = DMatrix::from_fn(rows.len(), cols.len(), |r, c| columns[c][r]);
    let obs_weights = mask.weights(grid.dy);
    let par_weights = Mask((0..grid.n).map(|j| grid.node(j) >= param_lo).collect()).weights(grid.dy);
    Ok(ForwardMatrix {
        a: amat,
        grid: *grid,
        mask: mask.clone(),
        rows,
        cols,
        obs_weights,
        par_weights,
    })
}

impl ForwardMatrix {
    fn params_of(&self, f: &Field) -> Result<DVector<f64>> {
        if !f.grid.same_as(&self.grid) {
            return Err(LipdError::Shape("field is not on the matrix grid".into()));
        }
        Ok(DVector::from_iterator(self.cols.len(), self.cols.iter().map(|&j| f.values[j].re)))
    }

    fn obs_of(&self, v: &Field) -> Result<DVector<f64>> {
        if !v.grid.same_as(&self.grid) {
            return Err(LipdError::Shape("field is not on the matrix grid".into()));
        }
        Ok(DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&i| v.values[i].re)))
    }

    fn scatter(&self, idx: &[usize], x: &DVector<f64>) -> Field {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.n];
        for (&i, &v) in idx.iter().zip(x.iter()) {
            out[i] = Complex64::new(v, 0.0);
        }
        Field::new(self.grid, out).expect("grid length")
    }

    /// `A f`, zero off the mask.
    pub fn apply(&self, f: &Field) -> Result<Field> {
        Ok(self.scatter(&self.rows, &(&self.a * self.params_of(f)?)))
    }

    /// `A* g = W_p⁻¹ Aᵀ W_o g`, zero off the parameter nodes.
    pub fn adjoint_apply(&self, g: &Field) -> Result<Field> {
        let mut x = self.obs_of(g)?;
        x.iter_mut().zip(&self.obs_weights).for_each(|(v, w)| *v *= w);
        let mut y = self.a.tr_mul(&x);
        y.iter_mut().zip(&self.par_weights).for_each(|(v, w)| *v /= w);
        Ok(self.scatter(&self.cols, &y))
    }

    /// `⟨a, b⟩_{W_o}` over the mask.
    pub fn obs_inner(&self, a: &Field, b: &Field) -> Result<f64> {
        let (x, y) = (self.obs_of(a)?, self.obs_of(b)?);
        Ok(x.iter().zip(y.iter()).zip(&self.obs_weights).map(|((p, q), w)| p * q * w).sum())
    }

    /// `⟨a, b⟩_{W_p}` over the parameter nodes.
    pub fn par_inner(&self, a: &Field, b: &Field) -> Result<f64> {
        let (x, y) = (self.params_of(a)?, self.params_of(b)?);
        Ok(x.iter().zip(y.iter()).zip(&self.par_weights).map(|((p, q), w)| p * q * w).sum())
    }

    pub fn obs_norm(&self, v: &Field) -> Result<f64> {
        Ok(self.obs_inner(v, v)?.sqrt())
    }

    pub fn par_norm(&self, f: &Field) -> Result<f64> {
        Ok(self.par_inner(f, f)?.sqrt())
    }

    /// `B = W_o^{1/2} A W_p^{−1/2}`.
    pub fn weighted(&self) -> DMatrix<f64> {
        let mut b = self.a.clone();
        for (r, w) in self.obs_weights.iter().enumerate() {
            b.row_mut(r).scale_mut(w.sqrt());
        }
        for (c, w) in self.par_weights.iter().enumerate() {
            b.column_mut(c).scale_mut(1.0 / w.sqrt());
        }
        b
    }
}

/// Rule for choosing `λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    /// `λ = c σ₁²`.
    Relative(f64),
    /// Morozov with the given noise norm `‖η‖_{W_o}`.
    Discrepancy { noise_norm: f64 },
}

/// Outcome of the discrepancy search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyInfo {
    pub target: f64,
    pub achieved: f64,
    pub reached: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InversionReport {
    #[serde(skip)]
    pub f_hat: Option<Field>,
    pub lambda: f64,
    /// `‖A f̂ − v‖_{W_o}`.
    pub residual: f64,
    pub singular_values: Vec<f64>,
    pub condition: f64,
    pub discrepancy: Option<DiscrepancyInfo>,
    pub seed: Option<u64>,
}

impl InversionReport {
    pub fn f_hat(&self) -> &Field {
        self.f_hat.as_ref().expect("reconstruction present")
    }
}

/// SVD of the weighted matrix, reusable across data and `λ`.
pub struct TikhonovSolver<'a> {
    pub fm: &'a ForwardMatrix,
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl<'a> TikhonovSolver<'a> {
    pub fn new(fm: &'a ForwardMatrix) -> Result<Self> {
        let svd = nalgebra::SVD::try_new(fm.weighted(), true, true, f64::EPSILON, 0)
            .ok_or_else(|| LipdError::Singular("SVD did not converge".into()))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let u = svd.u.expect("requested");
        let v_t = svd.v_t.expect("requested");
        let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
        let v_t = DMatrix::from_fn(order.len(), v_t.ncols(), |r, c| v_t[(order[r], c)]);
        let singular_values = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
        Ok(Self { fm, u, v_t, singular_values })
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    fn weighted_data(&self, v_obs: &Field) -> Result<DVector<f64>> {
        let mut b = self.fm.obs_of(v_obs)?;
        b.iter_mut().zip(&self.fm.obs_weights).for_each(|(x, w)| *x *= w.sqrt());
        Ok(b)
    }

    /// `(coefficients ⟨u_i, b⟩, ‖b − U Uᵀ b‖²)`.
    fn project(&self, b: &DVector<f64>) -> (DVector<f64>, f64) {
        let beta = self.u.tr_mul(b);
        let perp = (b.norm_squared() - beta.norm_squared()).max(0.0);
        (beta, perp)
    }

    fn residual_at(&self, beta: &DVector<f64>, perp: f64, lambda: f64) -> f64 {
        let r: f64 = self
            .singular_values
            .iter()
            .zip(beta.iter())
            .map(|(s, b)| {
                let f = lambda / (s * s + lambda);
                f * f * b * b
            })
            .sum();
        (r + perp).sqrt()
    }

    fn solution_at(&self, beta: &DVector<f64>, lambda: f64) -> Field {
        let coef = DVector::from_iterator(
            beta.len(),
            self.singular_values
                .iter()
                .zip(beta.iter())
                .map(|(s, b)| if *s > 0.0 { s / (s * s + lambda) * b } else { 0.0 }),
        );
        let mut g = self.v_t.tr_mul(&coef);
        g.iter_mut().zip(&self.fm.par_weights).for_each(|(x, w)| *x /= w.sqrt());
        self.fm.scatter(&self.fm.cols, &g)
    }

    pub fn solve(&self, v_obs: &Field, choice: LambdaChoice) -> Result<InversionReport> {
        let b = self.weighted_data(v_obs)?;
        let (beta, perp) = self.project(&b);
        let s1 = self.sigma_max();
        let mut discrepancy = None;
        let lambda = match choice {
            LambdaChoice::Fixed(l) => l,
            LambdaChoice::Relative(c) => c * s1 * s1,
            LambdaChoice::Discrepancy { noise_norm } => {
                let target = 1.1 * noise_norm;
                let (mut lo, mut hi) = ((1e-14 * s1 * s1).ln(), (1e2 * s1 * s1).ln());
                let res = |ll: f64| self.residual_at(&beta, perp, ll.exp());
                let reached = res(lo) <= target && res(hi) >= target;
                if reached {
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if res(mid) > target {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                        if hi - lo < 1e-10 {
                            break;
                        }
                    }
                } else if res(hi) < target {
                    lo = hi;
                }
                let l = lo.exp();
                discrepancy = Some(DiscrepancyInfo {
                    target,
                    achieved: self.residual_at(&beta, perp, l),
                    reached,
                });
                l
            }
        };
        if !(lambda > 0.0 && lambda.is_finite()) {
            return domain(format!("lambda must be positive, got {lambda}"));
        }
        let smin = self.singular_values.last().copied().unwrap_or(0.0);
        Ok(InversionReport {
            f_hat: Some(self.solution_at(&beta, lambda)),
            lambda,
            residual: self.residual_at(&beta, perp, lambda),
            singular_values: self.singular_values.clone(),
            condition: if smin > 0.0 { s1 / smin } else { f64::INFINITY },
            discrepancy,
            seed: None,
        })
    }
}

/// One-shot Tikhonov solve.
pub fn tikhonov_solve(fm: &ForwardMatrix, v_obs: &Field, choice: LambdaChoice) -> Result<InversionReport> {
    TikhonovSolver::new(fm)?.solve(v_obs, choice)
}

/// Adds i.i.d. Gaussian noise of standard deviation `level · ‖v‖∞`.
pub fn add_noise(v: &Field, level: f64, seed: u64) -> Result<Field> {
    if !(level >= 0.0 && level.is_finite()) {
        return domain(format!("noise level must be nonnegative, got {level}"));
    }
    let sd = level * v.max_abs();
    if sd == 0.0 {
        return Ok(v.clone());
    }
    let normal = Normal::new(0.0, sd).map_err(|e| LipdError::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = v.values.iter().map(|x| x + normal.sample(&mut rng)).collect();
    Field::new(v.grid, values)
}

/// Expected `‖η‖_{W_o}` for [`add_noise`] at this level.
pub fn expected_noise_norm(fm: &ForwardMatrix, v: &Field, level: f64) -> f64 {
    level * v.max_abs() * fm.obs_weights.iter().sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub n: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub rank_1e8: usize,
    pub rank_1e12: usize,
    /// Slope of `log₁₀ s_i` against `log₁₀ i` over the resolved tail.
    pub tail_slope: f64,
    pub singular_values: Vec<f64>,
}

pub fn injectivity_certificate(fm: &ForwardMatrix) -> Result<InjectivityReport> {
    let solver = TikhonovSolver::new(fm)?;
    let mut sv = solver.singular_values.clone();
    // fewer observations than unknowns: the missing values are zero
    sv.resize(fm.cols.len(), 0.0);
    Ok(injectivity_from_spectrum(&sv))
}

pub fn injectivity_from_spectrum(sv: &[f64]) -> InjectivityReport {
    let s1 = sv.first().copied().unwrap_or(0.0);
    let rank = |t: f64| sv.iter().filter(|&&s| s > t * s1).count();
    let resolved = rank(1e-12);
    let lo = (resolved / 2).max(1);
    let tail_slope = if resolved >= lo + 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..resolved)
            .map(|i| (((i + 1) as f64).log10(), (sv[i] / s1).log10()))
            .unzip();
        crate::fbi::linear_fit(&xs, &ys).0
    } else {
        f64::NAN
    };
    InjectivityReport {
        n: sv.len(),
        sigma_max: s1,
        sigma_min: sv.last().copied().unwrap_or(0.0),
        rank_1e8: rank(1e-8),
        rank_1e12: resolved,
        tail_slope,
        singular_values: sv.to_vec(),
    }
}

/// Smooth bump `amp · e^{−(y−c)²/(2s²)}`, cut to zero left of `−support_left`.
pub fn synthetic_bump(grid: &Grid, center: f64, width: f64, amp: f64, support_left: f64) -> Field {
    Field::from_real_fn(*grid, |y| {
        if y < -support_left {
            0.0
        } else {
            amp * (-(y - center).powi(2) / (2.0 * width * width)).exp()
        }
    })
}

/// `‖a − b‖_{W_p} / ‖b‖_{W_p}`.
pub fn relative_error(fm: &ForwardMatrix, estimate: &Field, truth: &Field) -> Result<f64> {
    Ok(fm.par_norm(&estimate.sub(truth)?)? / fm.par_norm(truth)?)
}
