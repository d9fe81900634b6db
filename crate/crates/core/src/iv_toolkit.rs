//! Implied volatility: inversion, surfaces, mixture bounds and wing asymptotics.

use crate::bs_ea::{self, bs_price, bs_vega};
use crate::error::{PricingError, Result};
use crate::kou_analytic::{KouPricer, SeriesOptions};
use crate::model_core::{
    analytic_eligibility, heston_critical_moments, AnalyticEligibility, BaseModel, EaJump, MarketFrame, OptionKind,
    OptionSpec,
};
use crate::par::{self, Execution};
use crate::transform_pricing::{price_strip, FftGrid};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Inversion bracket.
pub const IV_MIN: f64 = 1e-6;
pub const IV_MAX: f64 = 20.0;

/// Where an IV came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IvSource {
    Model,
    Market,
}

/// One implied-volatility observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvPoint {
    pub t: f64,
    #[serde(rename = "K")]
    pub strike: f64,
    #[serde(rename = "T")]
    pub expiry: f64,
    pub iv: f64,
    pub source: IvSource,
}

/// A set of IV points kept in `(t, T, K)` order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IvSurface {
    pub points: Vec<IvPoint>,
}

impl IvSurface {
    pub fn new(mut points: Vec<IvPoint>) -> Self {
        points.sort_by(|a, b| {
            a.t.total_cmp(&b.t).then(a.expiry.total_cmp(&b.expiry)).then(a.strike.total_cmp(&b.strike))
        });
        IvSurface { points }
    }

    /// IV at an exact `(t, K, T)` node.
    pub fn get(&self, t: f64, strike: f64, expiry: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.t == t && p.strike == strike && p.expiry == expiry)
            .map(|p| p.iv)
    }

    /// Points of one `(t, T)` slice, in strike order.
    pub fn slice(&self, t: f64, expiry: f64) -> Vec<IvPoint> {
        self.points.iter().filter(|p| p.t == t && p.expiry == expiry).copied().collect()
    }

    /// Writes CSV with header `t,K,T,iv,source`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.points {
            wr.serialize(p).map_err(|e| PricingError::Input(e.to_string()))?;
        }
        wr.flush().map_err(|e| PricingError::Input(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let points = rd
            .deserialize()
            .collect::<std::result::Result<Vec<IvPoint>, _>>()
            .map_err(|e| PricingError::Input(e.to_string()))?;
        Ok(IvSurface::new(points))
    }
}

/// Black-Scholes implied volatility of a European price.
pub fn implied_vol(price: f64, spec: &OptionSpec, frame: &MarketFrame) -> Result<f64> {
    let tau = spec.tau(frame)?;
    implied_vol_raw(price, spec.kind, frame.spot, spec.strike, frame.rate, tau)
}

/// Inversion on raw inputs: bracketed Newton with bisection fallback.
pub fn implied_vol_raw(price: f64, kind: OptionKind, s: f64, k: f64, r: f64, tau: f64) -> Result<f64> {
    if !price.is_finite() {
        return Err(PricingError::ArbitrageViolation(format!("price {price} is not finite")));
    }
    let kd = k * (-r * tau).exp();
    let (lower, upper) = match kind {
        OptionKind::Call => ((s - kd).max(0.0), s),
        OptionKind::Put => ((kd - s).max(0.0), kd),
    };
    let slack = 1e-12 * upper.max(1.0);
    if price < lower - slack || price > upper + slack {
        return Err(PricingError::ArbitrageViolation(format!(
            "price {price} outside ({lower}, {upper})"
        )));
    }
    let f = |v: f64| bs_price(kind, s, k, r, tau, v) - price;
    let (mut lo, mut hi) = (IV_MIN, IV_MAX);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(PricingError::NoConvergence(format!(
            "price {price} not attained for vol in [{IV_MIN}, {IV_MAX}]"
        )));
    }
    // Brenner-Subrahmanyam seed.
    let mut v = ((2.0 * std::f64::consts::PI / tau).sqrt() * (price - 0.5 * (lower)) / s).clamp(0.05, 3.0);
    let target = 1e-10 * price.max(1.0);
    for _ in 0..200 {
        let fv = f(v);
        if fv == 0.0 {
            return Ok(v);
        }
        if fv > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let vega = bs_vega(s, k, r, tau, v);
        let mut next = if vega > 0.0 { v - fv / vega } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - v).abs();
        v = next;
        if (step < 1e-15 * v.max(1e-3) || hi - lo < 1e-15 * hi) && f(v).abs() <= target {
            return Ok(v);
        }
    }
    if f(v).abs() <= target {
        Ok(v)
    } else {
        Err(PricingError::NoConvergence(format!("inversion stalled at vol {v}")))
    }
}

/// Pricing route for surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Closed form where available, FFT otherwise.
    #[default]
    Auto,
    Analytic,
    Fft,
}

/// Frame seen from valuation time `t`; after the announcement the jump is spent.
pub fn frame_at(frame: &MarketFrame, t: f64) -> MarketFrame {
    MarketFrame { valuation_time: t, ea_time: frame.ea_time.max(t), ..*frame }
}

/// European prices for one expiry with the requested engine.
pub fn price_slice(
    specs: &[OptionSpec],
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    engine: Engine,
    grid: &FftGrid,
) -> Result<Vec<f64>> {
    let Some(first) = specs.first() else {
        return Ok(Vec::new());
    };
    let closed_bs = matches!((model, jump), (BaseModel::BlackScholes { .. }, EaJump::Gaussian { .. }));
    let kou_ok = !matches!(model, BaseModel::Heston { .. })
        && analytic_eligibility(model, jump) == AnalyticEligibility::Eligible;
    match engine {
        Engine::Auto | Engine::Analytic if closed_bs => {
            let (BaseModel::BlackScholes { sigma }, EaJump::Gaussian { sigma_e }) = (model, jump) else {
                unreachable!()
            };
            specs.iter().map(|s| bs_ea::price(s, frame, *sigma, *sigma_e)).collect()
        }
        Engine::Auto | Engine::Analytic if kou_ok => {
            let scale = specs.iter().fold(frame.spot, |m, s| m.max(s.strike));
            let opts = SeriesOptions { scale, ..Default::default() };
            match KouPricer::new(model, jump, frame, first.expiry, opts) {
                Ok(pricer) => Ok(specs.iter().map(|s| pricer.price(s.kind, frame.spot, s.strike)).collect()),
                // Jump intensity beyond the series cap: the transform route still works.
                Err(PricingError::OrderOverflow { .. }) if engine == Engine::Auto => {
                    price_strip(specs, frame, model, jump, grid)
                }
                Err(e) => Err(e),
            }
        }
        Engine::Analytic => Err(PricingError::UnsupportedModel(format!(
            "no closed form for {} with this announcement jump",
            model.name()
        ))),
        _ => price_strip(specs, frame, model, jump, grid),
    }
}

/// Model IV surface over valuation times, expiries and strikes. Out-of-the-money
/// options (relative to the forward) are inverted.
#[allow(clippy::too_many_arguments)]
pub fn model_surface(
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    times: &[f64],
    expiries: &[f64],
    strikes: &[f64],
    engine: Engine,
    exec: Execution,
) -> Result<IvSurface> {
    if strikes.is_empty() || expiries.is_empty() || times.is_empty() {
        return Err(PricingError::Input("surface needs at least one time, expiry and strike".into()));
    }
    let cells: Vec<(f64, f64)> = times
        .iter()
        .flat_map(|&t| expiries.iter().filter(move |&&e| e > t).map(move |&e| (t, e)))
        .collect();
    let grid = FftGrid::default();
    let slices = par::map(exec, &cells, |&(t, expiry)| -> Result<Vec<IvPoint>> {
        let f = frame_at(frame, t);
        let tau = expiry - t;
        let fwd = f.spot * (f.rate * tau).exp();
        let specs: Vec<OptionSpec> = strikes
            .iter()
            .map(|&k| {
                let kind = if k >= fwd { OptionKind::Call } else { OptionKind::Put };
                OptionSpec::european(kind, k, expiry)
            })
            .collect();
        let prices = price_slice(&specs, &f, model, jump, engine, &grid)?;
        specs
            .iter()
            .zip(prices)
            .map(|(s, p)| {
                Ok(IvPoint { t, strike: s.strike, expiry, iv: implied_vol(p, s, &f)?, source: IvSource::Model })
            })
            .collect()
    });
    let mut points = Vec::new();
    for s in slices {
        points.extend(s?);
    }
    Ok(IvSurface::new(points))
}

/// Summary statistics of the Gaussian-mixture representation
/// `log(S_T/S_t) = X + Z_e`, with `X` mixing total variances `σ̃²` under `H`
/// and `Z_e` mixing `σ̂²` under `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureBoundInputs {
    pub sigma_hat_min: f64,
    pub sigma_tilde_min: f64,
    /// `∫σ̃² H(dσ̃)` (total variance of the base part).
    pub second_moment_h: f64,
    /// `∫σ̂² G(dσ̂)` (total variance of the jump part).
    pub second_moment_g: f64,
}

/// Lower IV bound `√((σ̃²_min + σ̂²_min)/(T−t))`.
pub fn bound_lower(stats: &MixtureBoundInputs, t: f64, expiry: f64) -> f64 {
    let tau = expiry - t;
    ((stats.sigma_tilde_min.powi(2) + stats.sigma_hat_min.powi(2)) / tau).sqrt()
}

/// ATM-forward upper IV bound `√((∫σ̃²dH + ∫σ̂²dG)/(T−t))`.
pub fn bound_upper(stats: &MixtureBoundInputs, t: f64, expiry: f64) -> f64 {
    ((stats.second_moment_h + stats.second_moment_g) / (expiry - t)).sqrt()
}

/// An upper bound with a flag for cases outside the bound's hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    /// True when the hypotheses do not hold (correlated Heston, asymmetric DE
    /// jump, Kou base); the number is then indicative only.
    pub advisory: bool,
}

/// Mixture statistics for a model/jump pair seen from `t` with the announcement in `(t, T]`.
pub fn mixture_stats(model: &BaseModel, jump: &EaJump, frame: &MarketFrame, t: f64, expiry: f64) -> (MixtureBoundInputs, bool) {
    let tau = expiry - t;
    let mut advisory = false;
    let (tilde_min, m_h) = match *model {
        BaseModel::BlackScholes { sigma } => (sigma * tau.sqrt(), sigma * sigma * tau),
        BaseModel::Heston { nu, vartheta, rho, sigma0_sq, .. } => {
            advisory |= rho != 0.0;
            (0.0, vartheta * tau + (sigma0_sq - vartheta) * (1.0 - (-nu * tau).exp()) / nu)
        }
        BaseModel::Kou { sigma, kappa, p, lambda1, lambda2 } => {
            advisory |= kappa > 0.0;
            let jump_var = kappa * tau * (2.0 * p / (lambda1 * lambda1) + 2.0 * (1.0 - p) / (lambda2 * lambda2));
            (sigma * tau.sqrt(), sigma * sigma * tau + jump_var)
        }
    };
    let active = t < frame.ea_time && frame.ea_time <= expiry;
    let (hat_min, m_g) = if !active {
        (0.0, 0.0)
    } else {
        match *jump {
            EaJump::Gaussian { sigma_e } => (sigma_e, sigma_e * sigma_e),
            EaJump::De { u, eta1, eta2 } => {
                advisory |= u != 0.5 || eta1 != eta2;
                (0.0, jump.variance())
            }
        }
    };
    (
        MixtureBoundInputs {
            sigma_hat_min: hat_min,
            sigma_tilde_min: tilde_min,
            second_moment_h: m_h,
            second_moment_g: m_g,
        },
        advisory,
    )
}

/// Closed-form ATM-forward upper bound for a Heston (or Black-Scholes) base with
/// a Gaussian or symmetric double-exponential announcement jump.
pub fn bound_upper_atm(model: &BaseModel, jump: &EaJump, frame: &MarketFrame, t: f64, expiry: f64) -> Result<BoundValue> {
    if expiry <= t {
        return Err(PricingError::ExpiredOption { valuation: t, expiry });
    }
    let (stats, advisory) = mixture_stats(model, jump, frame, t, expiry);
    Ok(BoundValue { value: bound_upper(&stats, t, expiry), advisory })
}

/// `ξ(x) = 2 − 4(√(x² + x) − x)`, with `ξ(∞) = 0`.
pub fn xi(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    if x == 0.0 {
        return 2.0;
    }
    2.0 - 4.0 * x / ((x * x + x).sqrt() + x)
}

/// Target wing slopes and the critical moments behind them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSlopes {
    pub xi_left: f64,
    pub xi_right: f64,
    pub q_star: f64,
    pub r_star: f64,
}

/// Left and right wing targets `ξ(q*)`, `ξ(r* − 1)`.
pub fn asymptotic_slopes(model: &BaseModel, jump: &EaJump, t: f64, expiry: f64) -> Result<AsymptoticSlopes> {
    let tau = expiry - t;
    if tau <= 0.0 {
        return Err(PricingError::ExpiredOption { valuation: t, expiry });
    }
    let (mut q, mut r) = match *model {
        BaseModel::BlackScholes { .. } => (f64::INFINITY, f64::INFINITY),
        BaseModel::Kou { kappa, lambda1, lambda2, .. } => {
            if kappa > 0.0 {
                (lambda2, lambda1)
            } else {
                (f64::INFINITY, f64::INFINITY)
            }
        }
        BaseModel::Heston { nu, zeta, rho, .. } => heston_critical_moments(nu, zeta, rho, tau)
            .map_err(|e| PricingError::CriticalMomentNotFound(e.to_string()))?,
    };
    if let EaJump::De { eta1, eta2, .. } = *jump {
        q = q.min(eta2);
        r = r.min(eta1);
    }
    if r <= 1.0 {
        return Err(PricingError::WingOrderViolation(format!("r* = {r} must exceed 1")));
    }
    Ok(AsymptoticSlopes { xi_left: xi(q), xi_right: xi(r - 1.0), q_star: q, r_star: r })
}

/// Fitted wing slopes against their targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WingReport {
    pub left_slope: f64,
    pub right_slope: f64,
    pub left_target: f64,
    pub right_target: f64,
    pub left_rel_dev: f64,
    pub right_rel_dev: f64,
    /// False when a target or fitted slope vanishes, so no wing regime is visible.
    pub wing_regime: bool,
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Least-squares slope of `I²(T−t)` against `|log(K/S)|` in each wing.
pub fn asymptote_check(points: &[IvPoint], spot: f64, slopes: &AsymptoticSlopes) -> Result<WingReport> {
    let mut left = (Vec::new(), Vec::new());
    let mut right = (Vec::new(), Vec::new());
    for p in points {
        let x = (p.strike / spot).ln();
        let w = p.iv * p.iv * (p.expiry - p.t);
        if x < 0.0 {
            left.0.push(-x);
            left.1.push(w);
        } else if x > 0.0 {
            right.0.push(x);
            right.1.push(w);
        }
    }
    if left.0.len() < 10 || right.0.len() < 10 {
        return Err(PricingError::InsufficientWingData(format!(
            "need 10 points per wing, got {} left and {} right",
            left.0.len(),
            right.0.len()
        )));
    }
    let ls = fit_slope(&left.0, &left.1);
    let rs = fit_slope(&right.0, &right.1);
    let dev = |fit: f64, target: f64| if target > 0.0 { (fit - target).abs() / target } else { fit.abs() };
    let tiny = 1e-8;
    Ok(WingReport {
        left_slope: ls,
        right_slope: rs,
        left_target: slopes.xi_left,
        right_target: slopes.xi_right,
        left_rel_dev: dev(ls, slopes.xi_left),
        right_rel_dev: dev(rs, slopes.xi_right),
        wing_regime: slopes.xi_left > tiny && slopes.xi_right > tiny && ls.abs() > tiny && rs.abs() > tiny,
    })
}

/// Wing IVs at log-moneyness points `xs`, priced with dampening close to the
/// moment strip edge so that far out-of-the-money prices keep relative accuracy.
pub fn wing_points(
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    expiry: f64,
    xs: &[f64],
) -> Result<Vec<IvPoint>> {
    let (lo, hi) = crate::model_core::moment_strip(model, jump, frame, expiry)?;
    let tau = expiry - frame.valuation_time;
    let mut out = Vec::with_capacity(xs.len());
    // Shrinks the dampening until the moment of order γ + 1 stays representable.
    let tame = |mut gamma: f64, floor: f64| {
        for _ in 0..60 {
            let order = gamma + 1.0;
            let lm = crate::model_core::cf_unchecked(model, jump, frame, expiry, num_complex::Complex64::new(0.0, -order))
                .re
                .ln();
            if lm.is_finite() && lm < 30.0 {
                break;
            }
            gamma = floor + 0.8 * (gamma - floor);
        }
        gamma
    };
    let left = tame(lo.max(-60.0) * 0.85 - 1.0, -2.0);
    let right = tame((hi.min(60.0) - 1.0) * 0.85, 1.0);
    for (side, gamma) in [(-1.0, left), (1.0, right)] {
        let sel: Vec<f64> = xs.iter().copied().filter(|x| x * side > 0.0).collect();
        if sel.is_empty() {
            continue;
        }
        let kind = if side > 0.0 { OptionKind::Call } else { OptionKind::Put };
        let specs: Vec<OptionSpec> = sel
            .iter()
            .map(|x| OptionSpec::european(kind, frame.spot * x.exp(), expiry))
            .collect();
        let grid = FftGrid { gamma: Some(gamma), n_points: 1 << 16, tolerance: 1e-12, ..Default::default() };
        let prices = price_strip(&specs, frame, model, jump, &grid)?;
        for (s, p) in specs.iter().zip(prices) {
            let iv = implied_vol_raw(p, s.kind, frame.spot, s.strike, frame.rate, tau)?;
            out.push(IvPoint { t: frame.valuation_time, strike: s.strike, expiry, iv, source: IvSource::Model });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_values() {
        assert_eq!(xi(0.0), 2.0);
        assert!((xi(1.0) - (2.0 - 4.0 * (2f64.sqrt() - 1.0))).abs() < 1e-15);
        assert_eq!(xi(f64::INFINITY), 0.0);
    }

    #[test]
    fn inversion_round_trip() {
        let p = bs_price(OptionKind::Call, 100.0, 110.0, 0.01, 0.5, 0.3);
        let v = implied_vol_raw(p, OptionKind::Call, 100.0, 110.0, 0.01, 0.5).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
    }
}
