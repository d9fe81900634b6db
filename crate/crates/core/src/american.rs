//! American puts under the extended Kou model.
//!
//! The lattice solver steps backward in Fourier space on a uniform log-price
//! grid, projecting onto the exercise payoff after every step, and convolves
//! the value slice with the announcement-jump density at `T_e`. The
//! Barone-Adesi approximation covers the two closed-form regimes
//! `T_e ≈ T` and `T_e ≈ t⁺`.

use crate::error::{PricingError, Result};
use crate::kou_analytic::{KouPricer, SeriesOptions};
use crate::model_core::{base_log_cf, density_ea, kou_m, validate, BaseModel, EaJump, MarketFrame, OptionKind, OptionSpec};
use crate::numerics::{brent, integrate};
use crate::par::{self, Execution};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

/// Lattice resolution and solver switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// Minimum number of log-price nodes; rounded up to a power of two.
    pub n_points: usize,
    /// Time steps over `[t, T]`.
    pub time_steps: usize,
    /// Half-width of the grid in aggregate standard deviations.
    pub span_sd: f64,
    /// Extrapolate the Bermudan prices at `n` and `n/2` steps.
    pub richardson: bool,
    /// Early-exercise projection. Off gives the European value.
    pub projection: bool,
    /// Keep every `k`-th value slice for export.
    pub slice_stride: Option<usize>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            n_points: 1 << 12,
            time_steps: 1000,
            span_sd: 10.0,
            richardson: true,
            projection: true,
            slice_stride: None,
        }
    }
}

/// One stored time slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSlice {
    pub time: f64,
    pub values: Vec<f64>,
}

/// Solved lattice. Spots are `K·e^{y}` on the log-moneyness nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceLattice {
    pub strike: f64,
    pub log_moneyness: Vec<f64>,
    /// Index of the valuation spot.
    pub spot_index: usize,
    /// Step times, from `t` to `T`.
    pub times: Vec<f64>,
    /// Exercise index per entry of `times`: largest node with value at intrinsic.
    pub exercise_index: Vec<Option<usize>>,
    /// Value slice at the valuation time.
    pub initial: Vec<f64>,
    pub slices: Vec<ValueSlice>,
    /// Announcement time when it falls inside `(t, T]`.
    pub ea_time: Option<f64>,
}

impl PriceLattice {
    pub fn spot(&self, j: usize) -> f64 {
        self.strike * self.log_moneyness[j].exp()
    }

    /// Writes `time,spot,value` rows for every stored slice.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| PricingError::Input(e.to_string()))?;
        w.write_record(["time", "spot", "value"]).map_err(|e| PricingError::Input(e.to_string()))?;
        for s in &self.slices {
            for (j, v) in s.values.iter().enumerate() {
                w.write_record(&[s.time.to_string(), self.spot(j).to_string(), v.to_string()])
                    .map_err(|e| PricingError::Input(e.to_string()))?;
            }
        }
        w.flush().map_err(|e| PricingError::Input(e.to_string()))
    }
}

/// Lattice price with its Bermudan step-halving spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmericanPrice {
    pub price: f64,
    /// `|P(n) − P(n/2)|`, a grid tolerance for comparisons.
    pub grid_error: f64,
    pub lattice: PriceLattice,
}

/// Critical spot per time; `None` where no node is exercised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseBoundary {
    pub times: Vec<f64>,
    pub levels: Vec<Option<f64>>,
}

impl ExerciseBoundary {
    /// Writes `time,boundary` rows, skipping empty slices.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| PricingError::Input(e.to_string()))?;
        w.write_record(["time", "boundary"]).map_err(|e| PricingError::Input(e.to_string()))?;
        for (t, b) in self.times.iter().zip(&self.levels) {
            if let Some(b) = b {
                w.write_record(&[t.to_string(), b.to_string()]).map_err(|e| PricingError::Input(e.to_string()))?;
            }
        }
        w.flush().map_err(|e| PricingError::Input(e.to_string()))
    }

    /// Level at the stored time closest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        self.levels[i]
    }
}

fn base_variance_rate(model: &BaseModel) -> Result<(f64, f64)> {
    match *model {
        BaseModel::BlackScholes { sigma } => Ok((sigma * sigma, f64::INFINITY)),
        BaseModel::Kou { sigma, kappa, p, lambda1, lambda2 } => {
            let jumps = kappa * (2.0 * p / (lambda1 * lambda1) + 2.0 * (1.0 - p) / (lambda2 * lambda2));
            let rate = if kappa > 0.0 { lambda1.min(lambda2) } else { f64::INFINITY };
            Ok((sigma * sigma + jumps, rate))
        }
        BaseModel::Heston { .. } => Err(PricingError::UnsupportedModel(
            "the lattice solver supports Black-Scholes and Kou bases".into(),
        )),
    }
}

struct Grid {
    n: usize,
    dx: f64,
    /// Node of `y = 0`.
    center: usize,
    spot_index: usize,
}

impl Grid {
    fn y(&self, j: usize) -> f64 {
        (j as f64 - self.center as f64) * self.dx
    }

    fn omega(&self, k: usize) -> f64 {
        let signed = if k <= self.n / 2 { k as f64 } else { k as f64 - self.n as f64 };
        2.0 * PI * signed / (self.n as f64 * self.dx)
    }
}

fn build_grid(spec: &OptionSpec, frame: &MarketFrame, model: &BaseModel, jump: &EaJump, cfg: &LatticeConfig) -> Result<Grid> {
    let tau = spec.expiry - frame.valuation_time;
    let (var_rate, min_rate) = base_variance_rate(model)?;
    let mut var = var_rate * tau;
    let mut tail_rate = min_rate;
    if frame.jump_active(spec.expiry) {
        var += jump.variance();
        if let EaJump::De { eta1, eta2, .. } = *jump {
            tail_rate = tail_rate.min(eta1).min(eta2);
        }
    }
    let y0 = (frame.spot / spec.strike).ln();
    let tails = if tail_rate.is_finite() { 30.0 / tail_rate } else { 0.0 };
    let half = (cfg.span_sd * var.sqrt()).max(tails).max(0.25) + 0.5 * y0.abs();
    let n = cfg.n_points.max(64).next_power_of_two();
    let mut dx = 2.0 * half / n as f64;
    let mut offset = 0isize;
    if y0 != 0.0 {
        let steps = (y0.abs() / dx).ceil().max(1.0);
        dx = y0.abs() / steps;
        offset = steps as isize * y0.signum() as isize;
    }
    let center = (n as isize / 2 - offset / 2) as usize;
    let spot_index = (center as isize + offset) as usize;
    Ok(Grid { n, dx, center, spot_index })
}

struct Stepper {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Stepper { fwd, inv, buf: vec![Complex64::new(0.0, 0.0); n], scratch: vec![Complex64::new(0.0, 0.0); len] }
    }

    /// `values ← F⁻¹[F[values]·mult]`.
    fn apply(&mut self, values: &mut [f64], mult: &[Complex64]) {
        let n = values.len() as f64;
        for (b, v) in self.buf.iter_mut().zip(values.iter()) {
            *b = Complex64::new(*v, 0.0);
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (b, m) in self.buf.iter_mut().zip(mult) {
            *b *= m;
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (v, b) in values.iter_mut().zip(&self.buf) {
            *v = b.re / n;
        }
    }
}

fn step_multiplier(grid: &Grid, model: &BaseModel, rate: f64, dt: f64) -> Vec<Complex64> {
    (0..grid.n)
        .map(|k| (base_log_cf(model, rate, dt, Complex64::new(grid.omega(k), 0.0)) - rate * dt).exp())
        .collect()
}

struct Run {
    price: f64,
    times: Vec<f64>,
    exercise: Vec<Option<usize>>,
    initial: Vec<f64>,
    slices: Vec<ValueSlice>,
}

fn solve(
    spec: &OptionSpec,
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    grid: &Grid,
    steps: usize,
    cfg: &LatticeConfig,
) -> Run {
    let t0 = frame.valuation_time;
    let tau = spec.expiry - t0;
    let strike = spec.strike;
    let payoff: Vec<f64> = (0..grid.n).map(|j| spec.intrinsic(strike * grid.y(j).exp())).collect();
    let active = frame.jump_active(spec.expiry);
    let ea_mult: Option<Vec<Complex64>> =
        active.then(|| (0..grid.n).map(|k| jump.cf(Complex64::new(grid.omega(k), 0.0))).collect());

    // Steps on [t, T_e] and [T_e, T]; both segments are uniform so T_e is a node.
    let (n_pre, n_post) = if active {
        let share = (frame.ea_time - t0) / tau;
        let pre = ((steps as f64 * share).round() as usize).clamp(usize::from(share > 0.0), steps);
        (pre, steps - pre)
    } else {
        (steps, 0)
    };
    let (dt_pre, dt_post) = if active {
        let te = frame.ea_time - t0;
        (if n_pre > 0 { te / n_pre as f64 } else { 0.0 }, if n_post > 0 { (tau - te) / n_post as f64 } else { 0.0 })
    } else {
        (tau / steps as f64, 0.0)
    };
    let mult_pre = step_multiplier(grid, model, frame.rate, dt_pre);
    let mult_post = (n_post > 0).then(|| step_multiplier(grid, model, frame.rate, dt_post));

    let mut stepper = Stepper::new(grid.n);
    let mut v = payoff.clone();
    let mut times = vec![spec.expiry];
    let mut exercise = vec![None];
    let mut slices = Vec::new();
    let stride = cfg.slice_stride.unwrap_or(usize::MAX).max(1);
    if cfg.slice_stride.is_some() {
        slices.push(ValueSlice { time: spec.expiry, values: v.clone() });
    }

    let project = |v: &mut [f64]| -> Option<usize> {
        if !cfg.projection {
            return None;
        }
        let mut edge = None;
        for j in (0..=grid.center).rev() {
            if v[j] <= payoff[j] && payoff[j] > 0.0 && edge.is_none() {
                edge = Some(j);
            }
            if v[j] < payoff[j] {
                v[j] = payoff[j];
            }
        }
        for j in grid.center + 1..grid.n {
            if v[j] < payoff[j] {
                v[j] = payoff[j];
            }
        }
        edge
    };

    let mut counter = 0usize;
    let mut record = |v: &[f64], t: f64, ex: Option<usize>, force: bool, times: &mut Vec<f64>, exercise: &mut Vec<Option<usize>>, slices: &mut Vec<ValueSlice>| {
        times.push(t);
        exercise.push(ex);
        counter += 1;
        if cfg.slice_stride.is_some() && (force || counter.is_multiple_of(stride)) {
            slices.push(ValueSlice { time: t, values: v.to_vec() });
        }
    };

    if let Some(m) = &mult_post {
        for i in 0..n_post {
            stepper.apply(&mut v, m);
            let ex = project(&mut v);
            let t = spec.expiry - (i + 1) as f64 * dt_post;
            record(&v, t, ex, false, &mut times, &mut exercise, &mut slices);
        }
    }
    if let Some(m) = &ea_mult {
        // Post-announcement slice at T_e is already projected; now average over the jump.
        stepper.apply(&mut v, m);
        let ex = project(&mut v);
        record(&v, frame.ea_time, ex, true, &mut times, &mut exercise, &mut slices);
    }
    for i in 0..n_pre {
        stepper.apply(&mut v, &mult_pre);
        let ex = project(&mut v);
        let end = if active { frame.ea_time } else { spec.expiry };
        let t = end - (i + 1) as f64 * dt_pre;
        record(&v, t, ex, i + 1 == n_pre, &mut times, &mut exercise, &mut slices);
    }
    times.reverse();
    exercise.reverse();
    slices.reverse();
    Run { price: v[grid.spot_index], times, exercise, initial: v, slices }
}

/// Prices an American (or, with projection off, European) put on the lattice.
pub fn price_american(
    spec: &OptionSpec,
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    cfg: &LatticeConfig,
) -> Result<AmericanPrice> {
    validate(model, jump, frame)?;
    spec.validate()?;
    spec.tau(frame)?;
    if spec.kind != OptionKind::Put {
        return Err(PricingError::Input("the lattice solver prices puts".into()));
    }
    if cfg.time_steps < 2 || cfg.n_points < 16 || !(cfg.span_sd > 0.0) {
        return Err(PricingError::GridUnstable(format!(
            "need time_steps >= 2, n_points >= 16 and span_sd > 0, got {}, {}, {}",
            cfg.time_steps, cfg.n_points, cfg.span_sd
        )));
    }
    let grid = build_grid(spec, frame, model, jump, cfg)?;
    let fine = solve(spec, frame, model, jump, &grid, cfg.time_steps, cfg);
    let coarse_cfg = LatticeConfig { slice_stride: None, ..*cfg };
    let coarse = solve(spec, frame, model, jump, &grid, cfg.time_steps / 2, &coarse_cfg);
    let grid_error = (fine.price - coarse.price).abs();
    let price = if cfg.richardson && cfg.projection { 2.0 * fine.price - coarse.price } else { fine.price };
    if !price.is_finite() {
        return Err(PricingError::GridUnstable("non-finite lattice value".into()));
    }
    let lattice = PriceLattice {
        strike: spec.strike,
        log_moneyness: (0..grid.n).map(|j| grid.y(j)).collect(),
        spot_index: grid.spot_index,
        times: fine.times,
        exercise_index: fine.exercise,
        initial: fine.initial,
        slices: fine.slices,
        ea_time: frame.jump_active(spec.expiry).then_some(frame.ea_time),
    };
    let price = if cfg.projection { price.max(spec.intrinsic(frame.spot)) } else { price };
    Ok(AmericanPrice { price, grid_error, lattice })
}

/// Exercise boundary of a solved put lattice.
pub fn exercise_boundary(lattice: &PriceLattice) -> ExerciseBoundary {
    ExerciseBoundary {
        times: lattice.times.clone(),
        levels: lattice.exercise_index.iter().map(|e| e.map(|j| lattice.spot(j))).collect(),
    }
}

/// Prices per announcement date and the detected monotonicity violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub ea_times: Vec<f64>,
    pub prices: Vec<f64>,
    pub grid_errors: Vec<f64>,
    /// Indices `i` with `price[i+1] > price[i] + 2·tolerance`.
    pub violations: Vec<usize>,
}

/// Lattice prices for each `T_e` in ascending `te_list`.
pub fn monotonicity_scan(
    spec: &OptionSpec,
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    te_list: &[f64],
    cfg: &LatticeConfig,
    exec: Execution,
) -> Result<MonotonicityReport> {
    if te_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(PricingError::Input("announcement dates must be ascending".into()));
    }
    let cfg = LatticeConfig { slice_stride: None, ..*cfg };
    let runs = par::map(exec, te_list, |&te| {
        let f = MarketFrame { ea_time: te, ..*frame };
        price_american(spec, &f, model, jump, &cfg)
    });
    let mut prices = Vec::with_capacity(runs.len());
    let mut errs = Vec::with_capacity(runs.len());
    for r in runs {
        let r = r?;
        prices.push(r.price);
        errs.push(r.grid_error);
    }
    let violations = (0..prices.len().saturating_sub(1))
        .filter(|&i| {
            let tol = errs[i].max(errs[i + 1]).max(1e-6);
            prices[i + 1] > prices[i] + 2.0 * tol
        })
        .collect();
    Ok(MonotonicityReport { ea_times: te_list.to_vec(), prices, grid_errors: errs, violations })
}

/// Roots of the quadratic-approximation characteristic equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaBetas {
    pub beta1: f64,
    pub beta2: f64,
}

fn kou_params(model: &BaseModel) -> Result<(f64, f64, f64, f64, f64)> {
    match *model {
        BaseModel::Kou { sigma, kappa, p, lambda1, lambda2 } if kappa > 0.0 => Ok((sigma, kappa, p, lambda1, lambda2)),
        _ => Err(PricingError::UnsupportedModel(
            "the quadratic approximation needs a Kou base with positive intensity".into(),
        )),
    }
}

/// The two positive roots `0 < β₁ < λ₂ < β₂` of the characteristic equation
/// with the time factor `r / (1 − e^{−rτ})`.
pub fn ba_betas(model: &BaseModel, r: f64, tau: f64) -> Result<BaBetas> {
    let (sigma, kappa, p, l1, l2) = kou_params(model)?;
    if !(r > 0.0) || !(tau > 0.0) {
        return Err(PricingError::Input(format!("need r > 0 and τ > 0, got r={r}, τ={tau}")));
    }
    let m = kou_m(p, l1, l2);
    let lhs = r / (1.0 - (-r * tau).exp());
    let v = sigma * sigma;
    let g = |b: f64| {
        b * (m * kappa - 0.5 * v - r) + 0.5 * v * b * b + kappa * (p * l1 / (l1 + b) + (1.0 - p) * l2 / (l2 - b) - 1.0) - lhs
    };
    let eps = 1e-12 * l2;
    let beta1 = brent(g, 0.0, l2 - eps, 1e-14, 300)
        .ok_or_else(|| PricingError::RootNotBracketed(format!("β₁ in (0, {l2})")))?;
    let mut hi = 2.0 * l2 + 10.0;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(PricingError::RootNotBracketed(format!("β₂ above {l2}")));
        }
    }
    let beta2 = brent(g, l2 + eps, hi, 1e-12, 300)
        .ok_or_else(|| PricingError::RootNotBracketed(format!("β₂ in ({l2}, {hi})")))?;
    Ok(BaBetas { beta1, beta2 })
}

/// Residual of the characteristic equation, for checking roots.
pub fn ba_beta_residual(model: &BaseModel, r: f64, tau: f64, beta: f64) -> Result<f64> {
    let (sigma, kappa, p, l1, l2) = kou_params(model)?;
    let m = kou_m(p, l1, l2);
    let v = sigma * sigma;
    Ok(beta * (m * kappa - 0.5 * v - r) + 0.5 * v * beta * beta
        + kappa * (p * l1 / (l1 + beta) + (1.0 - p) * l2 / (l2 - beta) - 1.0)
        - r / (1.0 - (-r * tau).exp()))
}

/// Which coefficients feed the imminent-announcement average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImminentCoefficients {
    /// `α, γ₁, γ₂` from the system with the jump at expiry.
    Reuse,
    /// `α, γ₁, γ₂` re-solved for the post-announcement model.
    #[default]
    Resolve,
}

/// Closed-form regime selected from the announcement date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaRegime {
    AtExpiry,
    Imminent,
    NoAnnouncement,
}

/// Announcement dates within this share of `T − t` of either end count as
/// that end.
pub const REGIME_BAND: f64 = 0.05;

/// Quadratic-approximation output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaResult {
    pub price: f64,
    pub regime: BaRegime,
    pub betas: BaBetas,
    /// Critical spot of the at-expiry system; `0` when no root was found.
    pub alpha: f64,
    pub alpha_found: bool,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Exercise boundary and correction coefficients for one European pricer.
#[derive(Debug, Clone, Copy)]
struct BaSystem {
    betas: BaBetas,
    alpha: f64,
    alpha_found: bool,
    /// `γ₁α^{−β₁}` and `γ₂α^{−β₂}`.
    g1: f64,
    g2: f64,
}

impl BaSystem {
    fn solve(pricer: &KouPricer, strike: f64, r: f64, tau: f64, l2: f64, betas: BaBetas) -> Self {
        let (b1, b2) = (betas.beta1, betas.beta2);
        let c1 = b1 * b2 * (1.0 + l2);
        let c2 = l2 * (1.0 + b1) * (1.0 + b2);
        let df = (-r * tau).exp();
        let put = |a: f64| pricer.price(OptionKind::Put, a, strike);
        let q = |a: f64| 1.0 - pricer.prob_exceed(a, strike);
        let h = |a: f64| c1 * strike - c2 * (a + put(a)) - (c1 - c2) * strike * df * q(a);
        let root = brent(h, 1e-10 * strike, strike, 1e-12 * strike, 300);
        let (alpha, alpha_found) = match root {
            Some(a) => (a, true),
            None => (0.0, false),
        };
        if !alpha_found {
            return BaSystem { betas, alpha, alpha_found, g1: 0.0, g2: 0.0 };
        }
        let core = alpha + put(alpha);
        let tail = strike * df * q(alpha);
        let g1 = (b2 * strike - (1.0 + b2) * core + tail) / (b2 - b1);
        let g2 = (b1 * strike - (1.0 + b1) * core + tail) / (b1 - b2);
        BaSystem { betas, alpha, alpha_found, g1, g2 }
    }

    fn value(&self, pricer: &KouPricer, strike: f64, s: f64) -> f64 {
        if self.alpha_found && s <= self.alpha {
            return (strike - s).max(0.0);
        }
        let mut v = pricer.price(OptionKind::Put, s, strike);
        if self.alpha_found {
            let ratio = self.alpha / s;
            v += self.g1 * ratio.powf(self.betas.beta1) + self.g2 * ratio.powf(self.betas.beta2);
        }
        v
    }
}

/// Quadratic approximation of an American put, regime picked from `T_e`.
pub fn ba_price(spec: &OptionSpec, frame: &MarketFrame, model: &BaseModel, jump: &EaJump) -> Result<f64> {
    ba_price_with(spec, frame, model, jump, ImminentCoefficients::default()).map(|r| r.price)
}

/// [`ba_price`] with the full diagnostics and a choice of imminent coefficients.
pub fn ba_price_with(
    spec: &OptionSpec,
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    coeffs: ImminentCoefficients,
) -> Result<BaResult> {
    validate(model, jump, frame)?;
    if spec.kind != OptionKind::Put {
        return Err(PricingError::Input("the quadratic approximation prices puts".into()));
    }
    let (_, _, _, _, l2) = kou_params(model)?;
    let t = frame.valuation_time;
    let tau = spec.tau(frame)?;
    let r = frame.rate;
    let strike = spec.strike;
    let s = frame.spot;
    let betas = ba_betas(model, r, tau)?;
    let opts = SeriesOptions { tolerance: 1e-12, scale: strike.max(s), ..Default::default() };

    let active = frame.jump_active(spec.expiry);
    let regime = if !active {
        BaRegime::NoAnnouncement
    } else if spec.expiry - frame.ea_time <= REGIME_BAND * tau {
        BaRegime::AtExpiry
    } else if frame.ea_time - t <= REGIME_BAND * tau {
        BaRegime::Imminent
    } else {
        return Err(PricingError::UnsupportedRegime(format!(
            "announcement at {} is not close to valuation {t} or expiry {}",
            frame.ea_time, spec.expiry
        )));
    };

    // Jump inside the horizon: P_E and q carry Z_e.
    let with_jump = KouPricer::new(model, jump, frame, spec.expiry, opts)?;
    let sys_jump = BaSystem::solve(&with_jump, strike, r, tau, l2, betas);
    if regime != BaRegime::Imminent {
        let price = sys_jump.value(&with_jump, strike, s).max((strike - s).max(0.0));
        return Ok(BaResult {
            price,
            regime,
            betas,
            alpha: sys_jump.alpha,
            alpha_found: sys_jump.alpha_found,
            gamma1: sys_jump.g1 * sys_jump.alpha.powf(betas.beta1),
            gamma2: sys_jump.g2 * sys_jump.alpha.powf(betas.beta2),
        });
    }

    let post_frame = MarketFrame { ea_time: t, ..*frame };
    let post = KouPricer::new(model, jump, &post_frame, spec.expiry, opts)?;
    let sys = match coeffs {
        ImminentCoefficients::Reuse => sys_jump,
        ImminentCoefficients::Resolve => BaSystem::solve(&post, strike, r, tau, l2, betas),
    };
    let integrand = |z: f64| sys.value(&post, strike, s * z.exp()) * density_ea(jump, z);
    let comp = jump.compensator();
    let (lo, hi, kinks) = match *jump {
        EaJump::Gaussian { sigma_e } => {
            let mean = -0.5 * sigma_e * sigma_e;
            (mean - 12.0 * sigma_e, mean + 12.0 * sigma_e, vec![mean])
        }
        EaJump::De { eta1, eta2, .. } => (-comp - 40.0 / eta2, -comp + 40.0 / eta1, vec![-comp]),
    };
    let price = if lo >= hi {
        sys.value(&post, strike, s)
    } else {
        let mut cuts = vec![lo, hi];
        cuts.extend(kinks);
        if sys.alpha_found {
            cuts.push((sys.alpha / s).ln());
        }
        cuts.retain(|c| *c >= lo && *c <= hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2).map(|w| integrate(integrand, w[0], w[1], 1e-11 * strike)).sum()
    };
    Ok(BaResult {
        price: price.max((strike - s).max(0.0)),
        regime,
        betas,
        alpha: sys.alpha,
        alpha_found: sys.alpha_found,
        gamma1: sys.g1 * sys.alpha.powf(betas.beta1),
        gamma2: sys.g2 * sys.alpha.powf(betas.beta2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_puts_spot_and_strike_on_nodes() {
        let m = BaseModel::BlackScholes { sigma: 0.2 };
        let f = MarketFrame::new(100.0, 0.02, 0.0, 0.0);
        let spec = OptionSpec::american_put(107.0, 0.25);
        let g = build_grid(&spec, &f, &m, &EaJump::none(), &LatticeConfig::default()).unwrap();
        assert!(g.y(g.center).abs() < 1e-15);
        assert!((g.y(g.spot_index) - (100f64 / 107.0).ln()).abs() < 1e-12);
    }
}
