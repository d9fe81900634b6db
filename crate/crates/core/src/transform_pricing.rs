//! European pricing from the characteristic function of the log return,
//! using a dampened call payoff and one FFT per expiry.

use crate::error::{PricingError, Result};
use crate::model_core::{cf_unchecked, moment_strip, validate, BaseModel, EaJump, MarketFrame, OptionKind, OptionSpec};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default number of transform points.
pub const DEFAULT_POINTS: usize = 1 << 14;

/// Largest grid tried when refining.
pub const MAX_POINTS: usize = 1 << 20;

/// Transform grid settings. `None` fields are chosen automatically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftGrid {
    pub n_points: usize,
    /// Half-width of the log-strike window.
    pub half_width: Option<f64>,
    /// Dampening exponent `γ`.
    pub gamma: Option<f64>,
    /// Absolute tolerance on interpolated prices, per unit of spot.
    pub tolerance: f64,
}

impl Default for FftGrid {
    fn default() -> Self {
        FftGrid { n_points: DEFAULT_POINTS, half_width: None, gamma: None, tolerance: 1e-9 }
    }
}

impl FftGrid {
    pub fn with_points(n_points: usize) -> Self {
        FftGrid { n_points, ..Default::default() }
    }
}

/// Price with grid diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftPrice {
    pub price: f64,
    pub gamma: f64,
    pub n_points: usize,
    pub half_width: f64,
    /// Interpolation error estimate (0 for on-node strikes).
    pub interp_residual: f64,
    /// Size of the discarded frequency tail, relative to spot.
    pub truncation_estimate: f64,
}

/// Option prices (per unit spot) on a uniform log-moneyness grid. The values
/// are calls for `γ > 0` and puts for `γ < −1`.
#[derive(Debug, Clone)]
pub struct CallCurve {
    pub kind: OptionKind,
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    pub gamma: f64,
    pub half_width: f64,
    pub truncation_estimate: f64,
}

impl CallCurve {
    /// 4-point Lagrange interpolation with an error estimate from the
    /// neighbouring stencil.
    pub fn interpolate(&self, x: f64) -> (f64, f64) {
        let n = self.values.len();
        let pos = (x - self.x0) / self.dx;
        let j = pos.floor() as isize;
        let frac = pos - j as f64;
        if frac.abs() < 1e-12 && j >= 0 && (j as usize) < n {
            return (self.values[j as usize], 0.0);
        }
        let lagrange = |start: isize| -> f64 {
            let mut acc = 0.0;
            for a in 0..4 {
                let xa = (start + a) as f64;
                let mut l = 1.0;
                for b in 0..4 {
                    if a != b {
                        let xb = (start + b) as f64;
                        l *= (pos - xb) / (xa - xb);
                    }
                }
                let idx = (start + a).clamp(0, n as isize - 1) as usize;
                acc += l * self.values[idx];
            }
            acc
        };
        let main = lagrange(j - 1);
        let alt = if frac < 0.5 { lagrange(j - 2) } else { lagrange(j) };
        (main, (main - alt).abs())
    }
}

/// Default dampening: `min(1.5, (upper − 1)/2)`, with `upper` the right end of the moment strip.
pub fn default_gamma(upper: f64) -> f64 {
    if upper.is_finite() {
        1.5f64.min(0.5 * (upper - 1.0))
    } else {
        1.5
    }
}

fn log_return_sd(model: &BaseModel, jump: &EaJump, frame: &MarketFrame, expiry: f64) -> f64 {
    let h = 1e-3;
    let lm = |s: f64| cf_unchecked(model, jump, frame, expiry, Complex64::new(0.0, -s)).re.ln();
    let var = (lm(h) - 2.0 * lm(0.0) + lm(-h)) / (h * h);
    var.max(1e-12).sqrt()
}

/// Dampened payoff transform `ψ(v) = e^{−rτ}Ψ(v − (γ+1)i)/(γ² + γ − v² + i(2γ+1)v)`.
#[inline]
fn psi(model: &BaseModel, jump: &EaJump, frame: &MarketFrame, expiry: f64, gamma: f64, disc: f64, v: f64) -> Complex64 {
    let w = Complex64::new(v, -(gamma + 1.0));
    let denom = Complex64::new(gamma * gamma + gamma - v * v, (2.0 * gamma + 1.0) * v);
    disc * cf_unchecked(model, jump, frame, expiry, w) / denom
}

/// Computes the call curve for one expiry, centred at log-moneyness `center`.
pub fn call_curve(
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    expiry: f64,
    center: f64,
    reach: f64,
    grid: &FftGrid,
) -> Result<CallCurve> {
    validate(model, jump, frame)?;
    let tau = expiry - frame.valuation_time;
    if tau <= 0.0 {
        return Err(PricingError::ExpiredOption { valuation: frame.valuation_time, expiry });
    }
    if !grid.n_points.is_power_of_two() || grid.n_points < 16 {
        return Err(PricingError::InvalidParameter {
            name: "n_points",
            reason: format!("{} is not a power of two >= 16", grid.n_points),
        });
    }
    let (lower, upper) = moment_strip(model, jump, frame, expiry)?;
    let strip_max = upper - 1.0;
    let gamma = grid.gamma.unwrap_or_else(|| default_gamma(upper));
    let order = gamma + 1.0;
    let kind = if gamma > 0.0 { OptionKind::Call } else { OptionKind::Put };
    if !(order > lower && order < upper) || (-1.0..=0.0).contains(&gamma) {
        return Err(PricingError::DampeningOutsideStrip { gamma, upper: strip_max });
    }
    let sd = log_return_sd(model, jump, frame, expiry);
    // Exponential decay rates of the dampened price as x → −∞ and x → +∞.
    let (left_decay, right_decay) = match kind {
        OptionKind::Call => (gamma, upper - order),
        OptionKind::Put => (order - lower, -order),
    };
    let half_width = grid.half_width.unwrap_or_else(|| {
        let decay = left_decay.min(right_decay);
        (18.0 / decay).max(10.0 * sd).max(1.5 * reach + 1.0)
    });
    let disc = (-frame.rate * tau).exp();
    let mut n = grid.n_points;
    loop {
        let dx = 2.0 * half_width / n as f64;
        let eta = PI / half_width;
        let v_max = eta * n as f64;
        let tail = psi(model, jump, frame, expiry, gamma, disc, v_max).norm() * v_max;
        if tail > grid.tolerance && n < MAX_POINTS {
            n *= 2;
            continue;
        }
        let start = center - half_width;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|m| {
                let v = m as f64 * eta;
                let weight = if m == 0 { 0.5 } else { 1.0 };
                let phase = Complex64::from_polar(1.0, -v * start);
                phase * psi(model, jump, frame, expiry, gamma, disc, v) * (eta * weight)
            })
            .collect();
        let mut planner = FftPlanner::<f64>::new();
        planner.plan_fft_forward(n).process(&mut buf);
        let values = buf
            .iter()
            .enumerate()
            .map(|(j, z)| {
                let x = start + j as f64 * dx;
                (-gamma * x).exp() / PI * z.re
            })
            .collect();
        return Ok(CallCurve { kind, x0: start, dx, values, gamma, half_width, truncation_estimate: tail });
    }
}

fn finish(kind: OptionKind, curve_kind: OptionKind, per_spot: f64, frame: &MarketFrame, strike: f64, tau: f64) -> f64 {
    let s = frame.spot;
    let kd = strike * (-frame.rate * tau).exp();
    let raw = s * per_spot;
    match (kind, curve_kind) {
        (OptionKind::Call, OptionKind::Call) => raw.clamp((s - kd).max(0.0), s),
        (OptionKind::Put, OptionKind::Put) => raw.clamp((kd - s).max(0.0), kd),
        (OptionKind::Put, OptionKind::Call) => (raw.clamp((s - kd).max(0.0), s) - s + kd).max(0.0),
        (OptionKind::Call, OptionKind::Put) => (raw.clamp((kd - s).max(0.0), kd) + s - kd).max(0.0),
    }
}

/// European price of one contract.
pub fn price_fft(spec: &OptionSpec, frame: &MarketFrame, model: &BaseModel, jump: &EaJump, grid: &FftGrid) -> Result<FftPrice> {
    spec.validate()?;
    let tau = spec.tau(frame)?;
    let x = (spec.strike / frame.spot).ln();
    let curve = call_curve(frame, model, jump, spec.expiry, x, 0.0, grid)?;
    let mid = curve.values.len() / 2;
    let price = finish(spec.kind, curve.kind, curve.values[mid], frame, spec.strike, tau);
    Ok(FftPrice {
        price,
        gamma: curve.gamma,
        n_points: curve.values.len(),
        half_width: curve.half_width,
        interp_residual: 0.0,
        truncation_estimate: curve.truncation_estimate,
    })
}

/// European prices for several strikes sharing one expiry, from one transform.
pub fn price_strip(
    specs: &[OptionSpec],
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    grid: &FftGrid,
) -> Result<Vec<f64>> {
    let Some(first) = specs.first() else {
        return Ok(Vec::new());
    };
    let expiry = first.expiry;
    if specs.iter().any(|s| s.expiry != expiry) {
        return Err(PricingError::InvalidParameter {
            name: "expiry",
            reason: "a strip must share one expiry".into(),
        });
    }
    for s in specs {
        s.validate()?;
    }
    let tau = first.tau(frame)?;
    if specs.len() == 1 {
        return Ok(vec![price_fft(first, frame, model, jump, grid)?.price]);
    }
    let xs: Vec<f64> = specs.iter().map(|s| (s.strike / frame.spot).ln()).collect();
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (lo + hi);
    let reach = 0.5 * (hi - lo);
    let mut g = *grid;
    loop {
        let curve = call_curve(frame, model, jump, expiry, center, reach, &g)?;
        let mut worst = 0.0f64;
        let prices: Vec<f64> = specs
            .iter()
            .zip(&xs)
            .map(|(s, &x)| {
                let (v, err) = curve.interpolate(x);
                worst = worst.max(err);
                finish(s.kind, curve.kind, v, frame, s.strike, tau)
            })
            .collect();
        if worst <= g.tolerance {
            return Ok(prices);
        }
        if curve.values.len() >= MAX_POINTS {
            return Err(PricingError::GridTooCoarse(format!(
                "interpolation residual {worst:e} above {:e} at {} points",
                g.tolerance,
                curve.values.len()
            )));
        }
        g.n_points = curve.values.len() * 2;
    }
}
