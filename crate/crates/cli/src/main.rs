//! `lipd`: command-line front end.
//!
//! Every subcommand reads the model flags, writes its main product (CSV or
//! JSON) to `--out` or standard output, and exits with
//!
//! * 0 on success,
//! * 1 on a numerical failure, with a JSON diagnostic on standard error,
//! * 2 on a usage error.
//!
//! A `--config` file of `key = value` lines supplies any flag not given on
//! the command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use lipd::experiments::{
    compact_bump, run_lemma_suite, uniqueness_pipeline_demo, PipelineConfig, SuiteConfig,
};
use lipd::fbi::{fbi_transform, wavefront_scan, PhaseGrid, ScanConfig, DEFAULT_H_LIST};
use lipd::forward::{duhamel_forward, linearization_residual, price_perturbation, solve_base_u0, solve_nonlinear, DriftPerturbation, DuhamelConfig, NonlinearConfig};
use lipd::inversion::{
    add_noise, assemble_forward_matrix, expected_noise_norm, injectivity_certificate, LambdaChoice, Mask, TikhonovSolver,
};
use lipd::io as lio;
use lipd::kernels::weight_w_real;
use lipd::model::{derive_transformed, gauge_v_from_price};
use lipd::{Field, Grid, LipdError, ModelParams};

#[derive(Parser, Debug)]
#[command(name = "lipd", version, about = "Linearized real-drift inverse problem toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// Volatility σ₀.
    #[arg(long, global = true, default_value_t = 0.4)]
    sigma0: f64,
    /// Baseline drift μ₀.
    #[arg(long, global = true, default_value_t = 0.05)]
    mu0: f64,
    /// Interest rate.
    #[arg(long, global = true, default_value_t = 0.03)]
    r: f64,
    /// Time to maturity τ* (years).
    #[arg(long, global = true, default_value_t = 1.0)]
    tau_star: f64,
    /// Face value of the debt D.
    #[arg(long, global = true, default_value_t = 1.0)]
    debt: f64,
    #[arg(long, global = true, default_value_t = -8.0, allow_negative_numbers = true)]
    grid_min: f64,
    #[arg(long, global = true, default_value_t = 8.0, allow_negative_numbers = true)]
    grid_max: f64,
    #[arg(long, global = true, default_value_t = 1024)]
    grid_n: usize,
    /// Split time τ₀* (years); default τ*/2.
    #[arg(long, global = true)]
    tau0: Option<f64>,
    /// Comma-separated semiclassical parameters.
    #[arg(long, global = true, value_delimiter = ',')]
    h_list: Option<Vec<f64>>,
    /// A number (fixed λ), `rel:<c>` (λ = c σ₁²) or `discrepancy`.
    #[arg(long, global = true)]
    lambda: Option<String>,
    /// Relative noise level (sd = level · ‖v‖∞).
    #[arg(long, global = true, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Observation interval `lo:hi` in y.
    #[arg(long, global = true, allow_hyphen_values = true)]
    mask: Option<String>,
    /// Output file; standard output if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key = value` file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `L` in supp f ⊂ [−L, ∞).
    #[arg(long, global = true, default_value_t = 1.0)]
    support_left: f64,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the gauge constants.
    Params,
    /// Tabulate the weight w(τ, y) on the grid.
    W {
        /// Calendar time; default τ*.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Linearized forward map f ↦ v(τ*).
    Forward {
        /// Field CSV of f.
        #[arg(long)]
        f: PathBuf,
        /// Emit the price perturbation V instead of the gauged v.
        #[arg(long)]
        price: bool,
    },
    /// Market data from the full nonlinear model, with optional noise.
    Synth {
        /// Field CSV of f; default a smooth bump on [−L, 3].
        #[arg(long)]
        f: Option<PathBuf>,
        /// Also write the linearization report as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tikhonov reconstruction of f.
    Invert {
        /// Field CSV of the gauged data v.
        #[arg(long, conflicts_with = "market")]
        data: Option<PathBuf>,
        /// Market CSV `asset_value,price`.
        #[arg(long)]
        market: Option<PathBuf>,
        /// Also write the inversion report as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// FBI transform, or a rate map with `--scan`.
    Fbi {
        /// Field CSV of the input.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        scan: bool,
        #[arg(long, default_value_t = 3.0)]
        xi_max: f64,
    },
    /// Run the lemma verification suite.
    VerifyLemmas,
    /// Quantify the uniqueness argument for a perturbation.
    DemoUniqueness {
        /// Field CSV of f; default a smooth bump on [−L, 3].
        #[arg(long)]
        f: Option<PathBuf>,
    },
}

/// Failure classes of a run.
enum Failure {
    Usage(String),
    Numeric(LipdError),
}

impl From<LipdError> for Failure {
    fn from(e: LipdError) -> Self {
        Failure::Numeric(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Numeric(LipdError::Io(e))
    }
}

type Run<T> = std::result::Result<T, Failure>;

fn error_kind(e: &LipdError) -> &'static str {
    match e {
        LipdError::Domain(_) => "domain",
        LipdError::Truncation(_) => "truncation",
        LipdError::Accuracy(_) => "accuracy",
        LipdError::Stability(_) => "stability",
        LipdError::Shape(_) => "shape",
        LipdError::Size(_) => "size",
        LipdError::Overflow(_) => "overflow",
        LipdError::Singular(_) => "singular",
        LipdError::Parse { .. } => "parse",
        LipdError::Format(_) => "format",
        LipdError::Io(_) => "io",
    }
}

/// Appends config-file entries for flags absent from `argv`.
fn merge_config(argv: Vec<String>) -> Run<Vec<String>> {
    let path = argv.iter().enumerate().find_map(|(i, a)| {
        a.strip_prefix("--config=")
            .map(str::to_owned)
            .or_else(|| (a == "--config").then(|| argv.get(i + 1).cloned()).flatten())
    });
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("cannot read config {path}: {e}")))?;
    let entries = lio::parse_config(&text).map_err(|e| Failure::Usage(format!("config {path}: {e}")))?;
    let mut out = argv.clone();
    for (k, v) in entries {
        let flag = format!("--{k}");
        let given = argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if !given {
            out.push(format!("{flag}={v}"));
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
        Err(Failure::Numeric(e)) => return diagnostic(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => diagnostic(&e),
    }
}

fn diagnostic(e: &LipdError) -> ExitCode {
    let row = match e {
        LipdError::Parse { row, .. } => Some(*row),
        _ => None,
    };
    eprintln!("{}", json!({ "error": error_kind(e), "message": e.to_string(), "row": row }));
    ExitCode::from(1)
}

fn output(path: &Option<PathBuf>) -> Run<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

impl Common {
    fn params(&self) -> Run<ModelParams> {
        let p = ModelParams {
            sigma0: self.sigma0,
            mu0: self.mu0,
            r: self.r,
            tau_star: self.tau_star,
            debt: self.debt,
        };
        p.validate()?;
        Ok(p)
    }

    fn grid(&self) -> Run<Grid> {
        Ok(Grid::new(self.grid_min, self.grid_max, self.grid_n)?)
    }

    fn h_list(&self) -> Vec<f64> {
        self.h_list.clone().unwrap_or_else(|| DEFAULT_H_LIST.to_vec())
    }

    fn mask(&self, grid: &Grid) -> Run<Mask> {
        match &self.mask {
            None => Ok(Mask::full(grid)),
            Some(s) => {
                let (lo, hi) = s
                    .split_once(':')
                    .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)))
                    .ok_or_else(|| Failure::Usage(format!("--mask expects lo:hi, got {s:?}")))?;
                if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                    return Err(Failure::Usage(format!("--mask needs lo < hi, got {s:?}")));
                }
                Ok(Mask::interval(grid, lo, hi))
            }
        }
    }

    fn lambda(&self) -> Run<Option<LambdaRule>> {
        let Some(s) = self.lambda.as_deref() else { return Ok(None) };
        let bad = || Failure::Usage(format!("--lambda expects a number, rel:<c> or discrepancy, got {s:?}"));
        Ok(Some(if s == "discrepancy" {
            LambdaRule::Discrepancy
        } else if let Some(c) = s.strip_prefix("rel:") {
            LambdaRule::Relative(c.parse().map_err(|_| bad())?)
        } else {
            LambdaRule::Fixed(s.parse().map_err(|_| bad())?)
        }))
    }
}

enum LambdaRule {
    Fixed(f64),
    Relative(f64),
    Discrepancy,
}

fn read_field(path: &Path, grid: &Grid) -> Run<Field> {
    let f = lio::read_field_csv(File::open(path)?)?;
    if !f.grid.same_as(grid) {
        return Err(Failure::Numeric(LipdError::Shape(format!(
            "{} is on [{}, {}] with {} nodes, expected [{}, {}] with {}",
            path.display(),
            f.grid.y_min,
            f.grid.y_max,
            f.grid.n,
            grid.y_min,
            grid.y_max,
            grid.n
        ))));
    }
    Ok(Field { grid: *grid, values: f.values })
}

fn perturbation(path: &Option<PathBuf>, c: &Common, grid: &Grid) -> Run<DriftPerturbation> {
    let f = match path {
        Some(p) => read_field(p, grid)?,
        None => compact_bump(*grid, -c.support_left, 3.0, 0.05),
    };
    Ok(DriftPerturbation::new(f, c.support_left)?)
}

fn run(cli: Cli) -> Run<ExitCode> {
    let c = &cli.common;
    let params = c.params()?;
    match &cli.cmd {
        Cmd::Params => {
            let tp = derive_transformed(&params)?;
            let mut w = output(&c.out)?;
            let fmt = |x: f64| if x == 0.0 { 0.0 } else { x };
            writeln!(w, "a0={}", fmt(tp.a0))?;
            writeln!(w, "b0={}", fmt(tp.b0))?;
            writeln!(w, "a={}", fmt(tp.a))?;
            writeln!(w, "tau_norm={}", fmt(tp.tau_norm))?;
            w.flush()?;
        }
        Cmd::W { tau } => {
            let grid = c.grid()?;
            let tp = derive_transformed(&params)?;
            let t = params.time_scale() * tau.unwrap_or(params.tau_star);
            let vals = grid.nodes().map(|y| weight_w_real(t, y, tp.a)).collect::<lipd::Result<Vec<f64>>>()?;
            let mut w = output(&c.out)?;
            lio::write_field_csv(&mut w, &Field::from_real(grid, &vals)?)?;
            w.flush()?;
        }
        Cmd::Forward { f, price } => {
            let grid = c.grid()?;
            let f = perturbation(&Some(f.clone()), c, &grid)?;
            let v = duhamel_forward(&f, &params, &DuhamelConfig::default(), &[])?.v_final;
            let v = if *price { price_perturbation(&v, &params)? } else { v };
            let v = add_noise(&v, c.noise, c.seed)?;
            let mut w = output(&c.out)?;
            lio::write_field_csv(&mut w, &v)?;
            w.flush()?;
        }
        Cmd::Synth { f, report } => {
            let grid = c.grid()?;
            let f = perturbation(f, c, &grid)?;
            let nl = NonlinearConfig::default();
            let base_mu = Field::from_real_fn(grid, |_| params.mu0);
            let u_full = solve_nonlinear(&base_mu.add(&f.f)?, &params, &nl)?;
            let u_base = solve_nonlinear(&base_mu, &params, &nl)?;
            // solver error cancels in the difference; the base is closed form
            let tp = derive_transformed(&params)?;
            let v = gauge_v_from_price(&u_full.sub(&u_base)?, params.tau_star, &tp);
            let big_v = price_perturbation(&add_noise(&v, c.noise, c.seed)?, &params)?;
            let u = solve_base_u0(&params, params.tau_star, &grid)?.add(&big_v)?;
            let mask = c.mask(&grid)?;
            // quotes cannot be negative
            let clamped = u.values.iter().zip(&mask.0).filter(|(x, &m)| m && x.re < 0.0).count();
            let u = u.map(|_, x| lipd::Complex64::new(x.re.max(0.0), 0.0));
            let obs = lio::market_from_price(&u, &mask, &params)?;
            let mut w = output(&c.out)?;
            lio::write_market_csv(&mut w, &obs)?;
            w.flush()?;
            if let Some(path) = report {
                let lin = linearization_residual(&f, &params, &nl, &DuhamelConfig::default(), (grid.y_min, grid.y_max))?;
                let data = json!({
                    "norm_nu": lin.norm_nu,
                    "norm_f": lin.norm_f,
                    "norm_v": lin.norm_v,
                    "noise": c.noise,
                    "seed": c.seed,
                    "clamped_rows": clamped,
                });
                lio::write_json_report(File::create(path)?, "synth", &data)?;
            }
        }
        Cmd::Invert { data, market, report } => {
            let grid = c.grid()?;
            let (v, mask) = match (data, market) {
                (Some(p), None) => (read_field(p, &grid)?, c.mask(&grid)?),
                (None, Some(p)) => {
                    let (u_star, mask) = lio::ingest_market_csv(p, &params, &grid)?;
                    let big_v = lio::price_perturbation_from_market(&u_star, &mask, &params)?;
                    let tp = derive_transformed(&params)?;
                    (gauge_v_from_price(&big_v, params.tau_star, &tp), mask)
                }
                _ => return Err(Failure::Usage("invert needs exactly one of --data or --market".into())),
            };
            let fm = assemble_forward_matrix(&params, &grid, &mask, -c.support_left, &DuhamelConfig::default())?;
            let solver = TikhonovSolver::new(&fm)?;
            let rule = c.lambda()?.unwrap_or(if c.noise > 0.0 { LambdaRule::Discrepancy } else { LambdaRule::Relative(1e-8) });
            let choice = match rule {
                LambdaRule::Fixed(l) => LambdaChoice::Fixed(l),
                LambdaRule::Relative(k) => LambdaChoice::Relative(k),
                LambdaRule::Discrepancy => {
                    if c.noise.is_nan() || c.noise <= 0.0 {
                        return Err(Failure::Usage("--lambda discrepancy needs --noise > 0".into()));
                    }
                    LambdaChoice::Discrepancy { noise_norm: expected_noise_norm(&fm, &v, c.noise) }
                }
            };
            let mut rep = solver.solve(&v, choice)?;
            rep.seed = Some(c.seed);
            let mut w = output(&c.out)?;
            lio::write_field_csv(&mut w, rep.f_hat())?;
            w.flush()?;
            if let Some(path) = report {
                let cert = injectivity_certificate(&fm)?;
                let data = json!({
                    "lambda": rep.lambda,
                    "residual": rep.residual,
                    "condition": rep.condition,
                    "discrepancy": rep.discrepancy,
                    "seed": rep.seed,
                    "sigma_max": cert.sigma_max,
                    "sigma_min": cert.sigma_min,
                    "rank_1e8": cert.rank_1e8,
                    "rank_1e12": cert.rank_1e12,
                });
                lio::write_json_report(File::create(path)?, "inversion", &data)?;
            }
        }
        Cmd::Fbi { input, scan, xi_max } => {
            let u = lio::read_field_csv(File::open(input)?)?;
            let g = u.grid;
            let mut w = output(&c.out)?;
            if *scan {
                let cfg = ScanConfig {
                    xi_max: *xi_max,
                    h_list: c.h_list(),
                    ..ScanConfig::default()
                };
                lio::write_scan_csv(&mut w, &wavefront_scan(&u, &cfg)?)?;
            } else {
                let h = c.h_list()[0];
                let margin = 10.0 * h.sqrt();
                let pg = PhaseGrid::aligned((g.y_min + margin, g.y_max - margin), 0.05, *xi_max, 0.05, h, g.dy)?;
                lio::write_phase_csv(&mut w, &fbi_transform(&u, &pg)?)?;
            }
            w.flush()?;
        }
        Cmd::VerifyLemmas => {
            let cfg = SuiteConfig {
                tau0: c.tau0,
                support_left: c.support_left,
                h_list: c.h_list(),
                seed: c.seed,
                ..SuiteConfig::default()
            };
            let reports = run_lemma_suite(&params, &cfg)?;
            let mut w = output(&c.out)?;
            lio::write_json_report(&mut w, "lemma_ledger", &reports)?;
            w.flush()?;
            let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.lemma_id.as_str()).collect();
            if !failed.is_empty() {
                eprintln!("{}", json!({ "error": "verification", "failed": failed }));
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::DemoUniqueness { f } => {
            let grid = c.grid()?;
            let f = perturbation(f, c, &grid)?;
            let mut cfg = PipelineConfig::for_params(&params);
            if let Some(t) = c.tau0 {
                cfg.tau0 = t;
            }
            if let Some(h) = &c.h_list {
                cfg.h_list = h.clone();
            }
            let rep = uniqueness_pipeline_demo(&f, &params, &cfg)?;
            let mut w = output(&c.out)?;
            lio::write_json_report(&mut w, "uniqueness_pipeline", &rep)?;
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
