//! File formats and market-data ingestion.
//!
//! * Field CSV: `y,value_re,value_im`, one row per grid node.
//! * Phase-field CSV: `x,xi,re,im,h`, `x`-major.
//! * Rate-map CSV: `x_lo,x_hi,xi_lo,xi_hi,delta,r2,status`.
//! * Reports: JSON object `{schema_version, kind, data}`.
//! * Market CSV: `asset_value,price` at the observation date.
//! * Config: `key = value` lines, `#` starts a comment.
//!
//! Floats are written in shortest round-trip form (`{:?}`), so every reader returns
//! the values that were written, bit for bit.
//!
//! Market rows map to `y = ln(A/D)` and `U* = u/D`, and are interpolated
//! onto the computation grid by the monotone piecewise cubic of
//! Fritsch–Carlson: slopes are the weighted harmonic mean
//! `(w₁ + w₂)/(w₁/d₋ + w₂/d₊)`, `w₁ = 2h₊ + h₋`, `w₂ = h₊ + 2h₋`, zero where
//! the secants change sign.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LipdError, Result};
use crate::fbi::{FitStatus, PhaseBox, PhaseField, PhaseGrid, ScanTile};
use crate::forward::solve_base_u0;
use crate::inversion::Mask;
use crate::model::{Field, Grid, ModelParams};
use crate::Complex64;

pub const SCHEMA_VERSION: u32 = 1;

fn parse_err(row: usize, msg: impl Into<String>) -> LipdError {
    LipdError::Parse { row, msg: msg.into() }
}

fn csv_err(e: csv::Error) -> LipdError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LipdError::Io(io),
        kind => parse_err(row, format!("{kind:?}")),
    }
}

/// Reads all records after the header, checking the header and field count.
/// Rows are numbered from 1 at the header line.
fn read_table(r: impl Read, header: &[&str]) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let got: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(parse_err(1, format!("expected header {}, found {}", header.join(","), got.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_err(row, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(row, format!("not a number: {s:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((row, vals));
    }
    Ok(rows)
}

/// Grid whose nodes reproduce `ys` bit for bit when some spacing does;
/// otherwise the uniform grid through the end points.
fn grid_from_nodes(ys: &[f64], first_row: usize) -> Result<Grid> {
    let n = ys.len();
    if n < 2 {
        return Err(parse_err(first_row, "a field needs at least 2 rows"));
    }
    let g = Grid::from_spacing(ys[0], exact_step(ys, ys[1] - ys[0]), n)
        .map_err(|e| parse_err(first_row + 1, e.to_string()))?;
    for (i, &y) in ys.iter().enumerate() {
        if (g.node(i) - y).abs() > 1e-9 * g.dy {
            return Err(parse_err(first_row + 1 + i, "y column is not uniformly spaced"));
        }
    }
    Ok(g)
}

pub fn write_field_csv(mut w: impl Write, f: &Field) -> Result<()> {
    writeln!(w, "y,value_re,value_im")?;
    for (y, v) in f.grid.nodes().zip(&f.values) {
        writeln!(w, "{y:?},{:?},{:?}", v.re, v.im)?;
    }
    Ok(())
}

pub fn read_field_csv(r: impl Read) -> Result<Field> {
    let rows = read_table(r, &["y", "value_re", "value_im"])?;
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    let ys: Vec<f64> = rows.iter().map(|r| r.1[0]).collect();
    let grid = grid_from_nodes(&ys, 1)?;
    Field::new(grid, rows.iter().map(|r| Complex64::new(r.1[1], r.1[2])).collect())
}

/// Truncation and round-off estimates are not part of the format and read
/// back as zero.
pub fn write_phase_csv(mut w: impl Write, t: &PhaseField) -> Result<()> {
    writeln!(w, "x,xi,re,im,h")?;
    let g = &t.grid;
    for ix in 0..g.nx {
        for ik in 0..g.nxi {
            let v = t.get(ix, ik);
            writeln!(w, "{:?},{:?},{:?},{:?},{:?}", g.x(ix), g.xi(ik), v.re, v.im, g.h)?;
        }
    }
    Ok(())
}

pub fn read_phase_csv(r: impl Read) -> Result<PhaseField> {
    let rows = read_table(r, &["x", "xi", "re", "im", "h"])?;
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    let h = rows[0].1[4];
    let nxi = rows.iter().take_while(|r| r.1[0] == rows[0].1[0]).count();
    if rows.len() % nxi != 0 {
        return Err(parse_err(rows[rows.len() - 1].0, "rows do not form an x-major rectangle"));
    }
    let nx = rows.len() / nxi;
    let step = |a: f64, b: f64, n: usize| if n > 1 { b - a } else { 1.0 };
    let mut grid = PhaseGrid {
        x_min: rows[0].1[0],
        dx: step(rows[0].1[0], rows[nxi.min(rows.len() - 1)].1[0], nx),
        nx,
        xi_min: rows[0].1[1],
        dxi: step(rows[0].1[1], rows[1.min(rows.len() - 1)].1[1], nxi),
        nxi,
        h,
    };
    // prefer the spacing that reproduces every node exactly
    let xs: Vec<f64> = (0..nx).map(|i| rows[i * nxi].1[0]).collect();
    let xis: Vec<f64> = (0..nxi).map(|k| rows[k].1[1]).collect();
    grid.dx = exact_step(&xs, grid.dx);
    grid.dxi = exact_step(&xis, grid.dxi);
    for (i, (row, v)) in rows.iter().enumerate() {
        let (ix, ik) = (i / nxi, i % nxi);
        let close = |a: f64, b: f64, d: f64| (a - b).abs() <= 1e-9 * d.abs().max(f64::MIN_POSITIVE);
        if !close(v[0], grid.x(ix), grid.dx) || !close(v[1], grid.xi(ik), grid.dxi) || v[4] != h {
            return Err(parse_err(*row, "rows do not form a uniform x-major phase grid"));
        }
    }
    Ok(PhaseField {
        grid,
        values: rows.iter().map(|r| Complex64::new(r.1[2], r.1[3])).collect(),
        truncation_estimate: 0.0,
        roundoff_floor: 0.0,
    })
}

/// Spacing `d` with `nodes[0] + i·d == nodes[i]` for all `i`, searched a
/// few hundred ulps around the two natural estimates.
fn exact_step(nodes: &[f64], guess: f64) -> f64 {
    let n = nodes.len();
    if n < 2 {
        return guess;
    }
    let hits = |d: f64| nodes.iter().enumerate().all(|(i, &x)| nodes[0] + i as f64 * d == x);
    let spread = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    let near = |d: f64, k: u64| [f64::from_bits(d.to_bits() + k), f64::from_bits(d.to_bits().saturating_sub(k))];
    if !(spread > 0.0 && guess > 0.0) {
        return spread;
    }
    [spread, guess]
        .into_iter()
        .chain((1..=256u64).flat_map(|k| near(spread, k).into_iter().chain(near(guess, k))))
        .find(|&d| hits(d))
        .unwrap_or(spread)
}

fn status_name(s: FitStatus) -> &'static str {
    match s {
        FitStatus::Ok => "ok",
        FitStatus::Inconclusive => "inconclusive",
        FitStatus::Underflow => "underflow",
    }
}

pub fn write_scan_csv(mut w: impl Write, tiles: &[ScanTile]) -> Result<()> {
    writeln!(w, "x_lo,x_hi,xi_lo,xi_hi,delta,r2,status")?;
    for t in tiles {
        let b = &t.tile;
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?},{:?},{}",
            b.x_lo,
            b.x_hi,
            b.xi_lo,
            b.xi_hi,
            t.delta,
            t.r2,
            status_name(t.status)
        )?;
    }
    Ok(())
}

pub fn read_scan_csv(r: impl Read) -> Result<Vec<ScanTile>> {
    let header = ["x_lo", "x_hi", "xi_lo", "xi_hi", "delta", "r2", "status"];
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let got: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(parse_err(1, format!("expected header {}", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_err(row, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| parse_err(row, format!("not a number: {:?}", &rec[i])));
        let status = match &rec[6] {
            "ok" => FitStatus::Ok,
            "inconclusive" => FitStatus::Inconclusive,
            "underflow" => FitStatus::Underflow,
            other => return Err(parse_err(row, format!("unknown status {other:?}"))),
        };
        out.push(ScanTile {
            tile: PhaseBox {
                x_lo: num(0)?,
                x_hi: num(1)?,
                xi_lo: num(2)?,
                xi_hi: num(3)?,
            },
            delta: num(4)?,
            r2: num(5)?,
            status,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    kind: String,
    data: T,
}

pub fn write_json_report<T: Serialize>(mut w: impl Write, kind: &str, data: &T) -> Result<()> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        kind: kind.into(),
        data,
    };
    serde_json::to_writer_pretty(&mut w, &env).map_err(|e| LipdError::Format(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

/// Returns the report kind and payload.
pub fn read_json_report<T: DeserializeOwned>(r: impl Read) -> Result<(String, T)> {
    let env: Envelope<T> = serde_json::from_reader(r).map_err(|e| LipdError::Format(format!("report: {e}")))?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(LipdError::Format(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            env.schema_version
        )));
    }
    Ok((env.kind, env.data))
}

/// Rows `(A, u)` observed at one date.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketObservation {
    pub asset_value: Vec<f64>,
    pub price: Vec<f64>,
}

pub const MIN_MARKET_ROWS: usize = 4;

impl MarketObservation {
    pub fn new(asset_value: Vec<f64>, price: Vec<f64>) -> Result<Self> {
        if asset_value.len() != price.len() {
            return Err(LipdError::Shape("asset and price columns differ in length".into()));
        }
        let obs = Self { asset_value, price };
        obs.validate(2)?;
        Ok(obs)
    }

    /// Row numbers start at `first_row`.
    fn validate(&self, first_row: usize) -> Result<()> {
        if self.asset_value.len() < MIN_MARKET_ROWS {
            return Err(parse_err(
                first_row + self.asset_value.len().saturating_sub(1),
                format!("at least {MIN_MARKET_ROWS} rows are required, found {}", self.asset_value.len()),
            ));
        }
        for (i, (&a, &u)) in self.asset_value.iter().zip(&self.price).enumerate() {
            if !(a > 0.0 && a.is_finite()) {
                return Err(parse_err(first_row + i, format!("asset value must be positive, got {a}")));
            }
            if !(u >= 0.0 && u.is_finite()) {
                return Err(parse_err(first_row + i, format!("price must be finite and nonnegative, got {u}")));
            }
            if i > 0 && a <= self.asset_value[i - 1] {
                return Err(parse_err(first_row + i, "asset values must be strictly increasing"));
            }
        }
        Ok(())
    }
}

pub fn read_market_csv(r: impl Read) -> Result<MarketObservation> {
    let rows = read_table(r, &["asset_value", "price"])?;
    let obs = MarketObservation {
        asset_value: rows.iter().map(|r| r.1[0]).collect(),
        price: rows.iter().map(|r| r.1[1]).collect(),
    };
    let first = rows.first().map(|r| r.0).unwrap_or(2);
    if rows.is_empty() {
        return Err(parse_err(1, format!("at least {MIN_MARKET_ROWS} rows are required, found 0")));
    }
    obs.validate(first)?;
    Ok(obs)
}

pub fn write_market_csv(mut w: impl Write, obs: &MarketObservation) -> Result<()> {
    writeln!(w, "asset_value,price")?;
    for (a, u) in obs.asset_value.iter().zip(&obs.price) {
        writeln!(w, "{a:?},{u:?}")?;
    }
    Ok(())
}

/// Monotone piecewise cubic through `(xs, ys)`, evaluated at `x` inside
/// `[xs₀, xs_last]`.
#[derive(Clone, Debug)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(LipdError::Shape("interpolation needs at least 2 matching points".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LipdError::Domain("interpolation nodes must increase".into()));
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut m = vec![0.0; n];
        if n == 2 {
            m = vec![d[0]; 2];
        } else {
            for i in 1..n - 1 {
                if d[i - 1] * d[i] > 0.0 {
                    let (w1, w2) = (2.0 * h[i] + h[i - 1], h[i] + 2.0 * h[i - 1]);
                    m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
                }
            }
            m[0] = end_slope(h[0], h[1], d[0], d[1]);
            m[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
        }
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            slopes: m,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1]
    }
}

/// Three-point end slope with the shape-preserving limits.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// `U*(y)` on the grid nodes inside the observed interval `ω`, zero outside.
pub fn ingest_market(obs: &MarketObservation, params: &ModelParams, grid: &Grid) -> Result<(Field, Mask)> {
    obs.validate(2)?;
    params.validate()?;
    let ys: Vec<f64> = obs.asset_value.iter().map(|a| (a / params.debt).ln()).collect();
    let us: Vec<f64> = obs.price.iter().map(|u| u / params.debt).collect();
    let p = Pchip::new(&ys, &us)?;
    let (lo, hi) = (ys[0], ys[ys.len() - 1]);
    let mask = Mask(grid.nodes().map(|y| y >= lo && y <= hi).collect());
    if mask.count() == 0 {
        return Err(LipdError::Domain(format!("observed interval [{lo}, {hi}] contains no grid node")));
    }
    let vals: Vec<f64> = grid.nodes().zip(&mask.0).map(|(y, &m)| if m { p.eval(y) } else { 0.0 }).collect();
    Ok((Field::from_real(*grid, &vals)?, mask))
}

pub fn ingest_market_csv(path: &std::path::Path, params: &ModelParams, grid: &Grid) -> Result<(Field, Mask)> {
    let file = std::fs::File::open(path)?;
    ingest_market(&read_market_csv(file)?, params, grid)
}

/// `V* = U* − U₀(τ*)` on the mask, zero elsewhere.
pub fn price_perturbation_from_market(u_star: &Field, mask: &Mask, params: &ModelParams) -> Result<Field> {
    let base = solve_base_u0(params, params.tau_star, &u_star.grid)?;
    if mask.0.len() != u_star.len() {
        return Err(LipdError::Shape("mask length differs from the grid".into()));
    }
    let vals: Vec<f64> = (0..u_star.len())
        .map(|i| if mask.0[i] { u_star.values[i].re - base.values[i].re } else { 0.0 })
        .collect();
    Field::from_real(u_star.grid, &vals)
}

/// Market rows `A = D e^y`, `u = D U(y)` at the masked grid nodes.
pub fn market_from_price(u: &Field, mask: &Mask, params: &ModelParams) -> Result<MarketObservation> {
    let (mut a, mut p) = (Vec::new(), Vec::new());
    for (i, y) in u.grid.nodes().enumerate() {
        if mask.0.get(i).copied().unwrap_or(false) {
            a.push(params.debt * y.exp());
            p.push(params.debt * u.values[i].re);
        }
    }
    MarketObservation::new(a, p)
}

/// `key = value` pairs; later lines override earlier ones.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(i + 1, format!("expected key = value, found {line:?}")))?;
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            return Err(parse_err(i + 1, "empty key"));
        }
        out.insert(k.to_owned(), v.trim().to_owned());
    }
    Ok(out)
}
