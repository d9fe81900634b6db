//! Domain types, validation, EA-jump densities and characteristic functions.

use crate::error::{PricingError, Result};
use crate::numerics::SQRT_2PI;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Relative guard band applied at moment-strip endpoints.
pub const STRIP_GUARD: f64 = 1e-8;

/// Relative distance below which a jump rate and an EA rate count as equal.
pub const RATE_COLLISION_BAND: f64 = 1e-6;

/// Distribution of the earnings-announcement jump `Z_e`.
///
/// The Gaussian variant stores a raw jump with mean `-sigma_e^2/2`, so its
/// compensator is zero. The double-exponential variant stores the raw jump and
/// is shifted by [`EaJump::compensator`] when applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EaJump {
    Gaussian {
        sigma_e: f64,
    },
    #[serde(alias = "double_exponential")]
    De {
        u: f64,
        eta1: f64,
        eta2: f64,
    },
}

/// Dynamics of the stock away from the announcement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaseModel {
    #[serde(alias = "bs")]
    BlackScholes { sigma: f64 },
    Kou {
        sigma: f64,
        kappa: f64,
        p: f64,
        lambda1: f64,
        lambda2: f64,
    },
    Heston {
        nu: f64,
        vartheta: f64,
        zeta: f64,
        rho: f64,
        sigma0_sq: f64,
    },
}

/// Market state at valuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketFrame {
    pub spot: f64,
    pub rate: f64,
    pub valuation_time: f64,
    pub ea_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExerciseStyle {
    European,
    American,
}

/// Contract terms. `expiry` is on the same year-fraction clock as the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub strike: f64,
    pub expiry: f64,
    pub kind: OptionKind,
    pub style: ExerciseStyle,
}

impl OptionSpec {
    pub fn european(kind: OptionKind, strike: f64, expiry: f64) -> Self {
        OptionSpec { strike, expiry, kind, style: ExerciseStyle::European }
    }

    pub fn call(strike: f64, expiry: f64) -> Self {
        Self::european(OptionKind::Call, strike, expiry)
    }

    pub fn put(strike: f64, expiry: f64) -> Self {
        Self::european(OptionKind::Put, strike, expiry)
    }

    pub fn american_put(strike: f64, expiry: f64) -> Self {
        OptionSpec { strike, expiry, kind: OptionKind::Put, style: ExerciseStyle::American }
    }

    /// Payoff at exercise for spot `s`.
    pub fn intrinsic(&self, s: f64) -> f64 {
        match self.kind {
            OptionKind::Call => (s - self.strike).max(0.0),
            OptionKind::Put => (self.strike - s).max(0.0),
        }
    }

    /// Time to expiry from the frame's valuation time, erroring when expired.
    pub fn tau(&self, frame: &MarketFrame) -> Result<f64> {
        let tau = self.expiry - frame.valuation_time;
        if tau <= 0.0 {
            return Err(PricingError::ExpiredOption {
                valuation: frame.valuation_time,
                expiry: self.expiry,
            });
        }
        Ok(tau)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(invalid("strike", format!("must be positive, got {}", self.strike)));
        }
        if !self.expiry.is_finite() {
            return Err(invalid("expiry", "must be finite".into()));
        }
        Ok(())
    }
}

impl FromStr for OptionKind {
    type Err = PricingError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c" | "call" => Ok(OptionKind::Call),
            "p" | "put" => Ok(OptionKind::Put),
            other => Err(PricingError::Input(format!("unknown option kind `{other}`"))),
        }
    }
}

impl FromStr for ExerciseStyle {
    type Err = PricingError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "e" | "european" => Ok(ExerciseStyle::European),
            "a" | "american" => Ok(ExerciseStyle::American),
            other => Err(PricingError::Input(format!("unknown exercise style `{other}`"))),
        }
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "C",
            OptionKind::Put => "P",
        })
    }
}

impl fmt::Display for ExerciseStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExerciseStyle::European => "E",
            ExerciseStyle::American => "A",
        })
    }
}

/// The JSON parameter document: `{"model": …, "ea_jump": …, "frame": …}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model: BaseModel,
    pub ea_jump: EaJump,
    pub frame: MarketFrame,
}

impl ModelParams {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PricingError::Input(format!("parameter JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameter set serializes")
    }

    pub fn validate(&self) -> Result<ValidatedModel> {
        validate(&self.model, &self.ea_jump, &self.frame)
    }
}

fn invalid(name: &'static str, reason: String) -> PricingError {
    PricingError::InvalidParameter { name, reason }
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {v}")))
    }
}

fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v < 0.0 {
        return Err(invalid(name, format!("must be non-negative, got {v}")));
    }
    Ok(())
}

fn check_positive_rate(name: &'static str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v <= 0.0 {
        return Err(PricingError::NonPositiveRate { name, value: v });
    }
    Ok(())
}

fn check_probability(name: &'static str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(name, format!("must lie in [0, 1], got {v}")));
    }
    Ok(())
}

impl EaJump {
    /// A jump that never moves the price.
    pub fn none() -> Self {
        EaJump::Gaussian { sigma_e: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EaJump::Gaussian { sigma_e } => check_nonneg("sigma_e", sigma_e),
            EaJump::De { u, eta1, eta2 } => {
                check_probability("u", u)?;
                check_positive_rate("eta1", eta1)?;
                check_positive_rate("eta2", eta2)?;
                if eta1 <= 1.0 {
                    return Err(PricingError::MartingaleViolation { name: "eta1", value: eta1 });
                }
                Ok(())
            }
        }
    }

    /// `log E[e^{Z_e}]` of the raw jump.
    pub fn compensator(&self) -> f64 {
        match *self {
            EaJump::Gaussian { .. } => 0.0,
            EaJump::De { u, eta1, eta2 } => {
                (u * eta1 / (eta1 - 1.0) + (1.0 - u) * eta2 / (eta2 + 1.0)).ln()
            }
        }
    }

    /// Variance of the jump.
    pub fn variance(&self) -> f64 {
        match *self {
            EaJump::Gaussian { sigma_e } => sigma_e * sigma_e,
            EaJump::De { u, eta1, eta2 } => {
                let w = 1.0 - u;
                let m1 = u / eta1 - w / eta2;
                let m2 = 2.0 * u / (eta1 * eta1) + 2.0 * w / (eta2 * eta2);
                m2 - m1 * m1
            }
        }
    }

    /// Real moment strip `(lower, upper)` of the raw jump.
    pub fn moment_strip(&self) -> (f64, f64) {
        match *self {
            EaJump::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            EaJump::De { eta1, eta2, .. } => (-eta2, eta1),
        }
    }

    /// Characteristic function `E[e^{iω(Z_e − compensator)}]`.
    pub fn cf(&self, omega: Complex64) -> Complex64 {
        let i = Complex64::i();
        match *self {
            EaJump::Gaussian { sigma_e } => {
                let v = sigma_e * sigma_e;
                (-0.5 * v * (i * omega + omega * omega)).exp()
            }
            EaJump::De { u, eta1, eta2 } => {
                let io = i * omega;
                let raw = u * eta1 / (eta1 - io) + (1.0 - u) * eta2 / (eta2 + io);
                raw * (-io * self.compensator()).exp()
            }
        }
    }

    /// Density of the compensated jump `Z_e − log E[e^{Z_e}]`.
    ///
    /// A zero-variance Gaussian jump is a point mass at zero; its density is
    /// reported as `+∞` there and `0` elsewhere.
    pub fn density(&self, z: f64) -> f64 {
        density_ea(self, z)
    }
}

/// Density of the compensated EA jump.
pub fn density_ea(jump: &EaJump, z: f64) -> f64 {
    match *jump {
        EaJump::Gaussian { sigma_e } => {
            let mean = -0.5 * sigma_e * sigma_e;
            if sigma_e == 0.0 {
                return if z == mean { f64::INFINITY } else { 0.0 };
            }
            let x = (z - mean) / sigma_e;
            (-0.5 * x * x).exp() / (sigma_e * SQRT_2PI)
        }
        EaJump::De { u, eta1, eta2 } => {
            let y = z + jump.compensator();
            if y >= 0.0 {
                u * eta1 * (-eta1 * y).exp()
            } else {
                (1.0 - u) * eta2 * (eta2 * y).exp()
            }
        }
    }
}

impl BaseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseModel::BlackScholes { sigma } => check_nonneg("sigma", sigma),
            BaseModel::Kou { sigma, kappa, p, lambda1, lambda2 } => {
                check_nonneg("sigma", sigma)?;
                check_nonneg("kappa", kappa)?;
                check_probability("p", p)?;
                check_positive_rate("lambda1", lambda1)?;
                check_positive_rate("lambda2", lambda2)?;
                if lambda1 <= 1.0 {
                    return Err(PricingError::MartingaleViolation { name: "lambda1", value: lambda1 });
                }
                Ok(())
            }
            BaseModel::Heston { nu, vartheta, zeta, rho, sigma0_sq } => {
                check_positive_rate("nu", nu)?;
                check_positive_rate("vartheta", vartheta)?;
                check_positive_rate("zeta", zeta)?;
                check_finite("rho", rho)?;
                if !(-1.0..=1.0).contains(&rho) {
                    return Err(invalid("rho", format!("must lie in [-1, 1], got {rho}")));
                }
                check_positive_rate("sigma0_sq", sigma0_sq)
            }
        }
    }

    /// Kou jump compensator `m = E[e^J] − 1`; zero for models without jumps.
    pub fn kou_m(&self) -> f64 {
        match *self {
            BaseModel::Kou { p, lambda1, lambda2, .. } => kou_m(p, lambda1, lambda2),
            _ => 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseModel::BlackScholes { .. } => "black_scholes",
            BaseModel::Kou { .. } => "kou",
            BaseModel::Heston { .. } => "heston",
        }
    }
}

/// `p·λ₁/(λ₁−1) + (1−p)·λ₂/(λ₂+1) − 1`.
pub fn kou_m(p: f64, lambda1: f64, lambda2: f64) -> f64 {
    p * lambda1 / (lambda1 - 1.0) + (1.0 - p) * lambda2 / (lambda2 + 1.0) - 1.0
}

impl MarketFrame {
    pub fn new(spot: f64, rate: f64, valuation_time: f64, ea_time: f64) -> Self {
        MarketFrame { spot, rate, valuation_time, ea_time }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(invalid("spot", format!("must be positive, got {}", self.spot)));
        }
        check_nonneg("rate", self.rate)?;
        check_finite("valuation_time", self.valuation_time)?;
        check_finite("ea_time", self.ea_time)?;
        if self.ea_time < self.valuation_time {
            return Err(invalid(
                "ea_time",
                format!("must not precede valuation_time ({} < {})", self.ea_time, self.valuation_time),
            ));
        }
        Ok(())
    }

    /// Whether the announcement falls inside `(valuation_time, expiry]`.
    ///
    /// At `valuation_time == ea_time` the announcement counts as past.
    pub fn jump_active(&self, expiry: f64) -> bool {
        self.valuation_time < self.ea_time && self.ea_time <= expiry
    }

    /// Copy with a different spot.
    pub fn with_spot(&self, spot: f64) -> Self {
        MarketFrame { spot, ..*self }
    }
}

/// Whether the closed-form Kou route applies to a validated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticEligibility {
    Eligible,
    Degenerate(String),
    NotKou,
}

/// Composite returned by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    pub model: BaseModel,
    pub jump: EaJump,
    pub frame: MarketFrame,
    pub analytic: AnalyticEligibility,
}

impl ValidatedModel {
    /// Errors with `DegenerateAnalyticCase` unless the Kou closed form applies.
    pub fn require_analytic(&self) -> Result<()> {
        match &self.analytic {
            AnalyticEligibility::Eligible => Ok(()),
            AnalyticEligibility::Degenerate(why) => Err(PricingError::DegenerateAnalyticCase(why.clone())),
            AnalyticEligibility::NotKou => Err(PricingError::UnsupportedModel(
                "closed-form route needs a Kou or Black-Scholes base".into(),
            )),
        }
    }
}

/// Checks rate collisions between the Kou jump rates and the DE announcement rates.
pub fn analytic_eligibility(model: &BaseModel, jump: &EaJump) -> AnalyticEligibility {
    let (kappa, lambda1, lambda2) = match *model {
        BaseModel::Kou { kappa, lambda1, lambda2, .. } => (kappa, lambda1, lambda2),
        BaseModel::BlackScholes { .. } => return AnalyticEligibility::Eligible,
        BaseModel::Heston { .. } => return AnalyticEligibility::NotKou,
    };
    if let EaJump::De { eta1, eta2, .. } = *jump {
        if kappa > 0.0 {
            if (eta1 - lambda1).abs() < RATE_COLLISION_BAND * lambda1 {
                return AnalyticEligibility::Degenerate(format!("eta1 = lambda1 = {lambda1}"));
            }
            if (eta2 - lambda2).abs() < RATE_COLLISION_BAND * lambda2 {
                return AnalyticEligibility::Degenerate(format!("eta2 = lambda2 = {lambda2}"));
            }
        }
    }
    AnalyticEligibility::Eligible
}

/// Validates a model/jump/frame triple.
pub fn validate(model: &BaseModel, jump: &EaJump, frame: &MarketFrame) -> Result<ValidatedModel> {
    model.validate()?;
    jump.validate()?;
    frame.validate()?;
    Ok(ValidatedModel {
        model: *model,
        jump: *jump,
        frame: *frame,
        analytic: analytic_eligibility(model, jump),
    })
}

/// Real moment strip of `log(S_T/S_t)`: `E[(S_T/S_t)^s] < ∞` for `lower < s < upper`.
pub fn moment_strip(model: &BaseModel, jump: &EaJump, frame: &MarketFrame, expiry: f64) -> Result<(f64, f64)> {
    let tau = expiry - frame.valuation_time;
    let (mut lo, mut hi) = match *model {
        BaseModel::BlackScholes { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        BaseModel::Kou { kappa, lambda1, lambda2, .. } => {
            if kappa > 0.0 {
                (-lambda2, lambda1)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
        }
        BaseModel::Heston { nu, zeta, rho, .. } => {
            // Moments that survive the whole scan are finite for any usable order.
            let capped = |r: Result<f64>| match r {
                Err(PricingError::CriticalMomentNotFound(_)) => Ok(MOMENT_SCAN_MAX),
                other => other,
            };
            let qp = capped(heston_moment_root(nu, zeta, rho, tau, true))?;
            let qm = capped(heston_moment_root(nu, zeta, rho, tau, false))?;
            (-qm, qp)
        }
    };
    if frame.jump_active(expiry) {
        let (jl, jh) = jump.moment_strip();
        lo = lo.max(jl);
        hi = hi.min(jh);
    }
    Ok((lo, hi))
}

fn inside_strip(s: f64, lo: f64, hi: f64) -> bool {
    let guard_lo = if lo.is_finite() { lo + STRIP_GUARD * lo.abs().max(1.0) } else { lo };
    let guard_hi = if hi.is_finite() { hi - STRIP_GUARD * hi.abs().max(1.0) } else { hi };
    s > guard_lo && s < guard_hi
}

/// Log characteristic function of the base model over `tau`, without strip checks.
pub fn base_log_cf(model: &BaseModel, rate: f64, tau: f64, omega: Complex64) -> Complex64 {
    let i = Complex64::i();
    let io = i * omega;
    match *model {
        BaseModel::BlackScholes { sigma } => {
            let v = sigma * sigma;
            tau * (io * (rate - 0.5 * v) - 0.5 * v * omega * omega)
        }
        BaseModel::Kou { sigma, kappa, p, lambda1, lambda2 } => {
            let v = sigma * sigma;
            let m = kou_m(p, lambda1, lambda2);
            let jumps = p * lambda1 / (lambda1 - io) + (1.0 - p) * lambda2 / (lambda2 + io) - 1.0;
            tau * (io * (rate - 0.5 * v - m * kappa) - 0.5 * v * omega * omega + kappa * jumps)
        }
        BaseModel::Heston { nu, vartheta, zeta, rho, sigma0_sq } => {
            heston_log_cf(nu, vartheta, zeta, rho, sigma0_sq, rate, tau, omega)
        }
    }
}

/// Heston log characteristic function in the branch-stable form.
#[allow(clippy::too_many_arguments)]
pub fn heston_log_cf(
    nu: f64,
    vartheta: f64,
    zeta: f64,
    rho: f64,
    v0: f64,
    rate: f64,
    tau: f64,
    omega: Complex64,
) -> Complex64 {
    let i = Complex64::i();
    let io = i * omega;
    if zeta < 1e-10 {
        let integrated = vartheta * tau + (v0 - vartheta) * (1.0 - (-nu * tau).exp()) / nu;
        return io * rate * tau - 0.5 * (io + omega * omega) * integrated;
    }
    let z2 = zeta * zeta;
    let b = nu - rho * zeta * io;
    let mut d = (b * b + z2 * (io + omega * omega)).sqrt();
    // The expression is even in d; flip the root when b + d cancels.
    if (b + d).norm() < 1e-10 * (1.0 + b.norm()) {
        d = -d;
    }
    let g = (b - d) / (b + d);
    let e = (-d * tau).exp();
    let one = Complex64::new(1.0, 0.0);
    let c = io * rate * tau + nu * vartheta / z2 * ((b - d) * tau - 2.0 * ((one - g * e) / (one - g)).ln());
    let dd = (b - d) / z2 * (one - e) / (one - g * e);
    c + dd * v0
}

/// `Ψ(ω) = E[e^{iω log(S_T/S_t)}]`, including the EA factor iff the announcement
/// falls in `(t, T]`. Errors with `MomentExplosion` outside the moment strip.
pub fn cf_log_return(
    model: &BaseModel,
    jump: &EaJump,
    frame: &MarketFrame,
    expiry: f64,
    omega: Complex64,
) -> Result<Complex64> {
    let tau = expiry - frame.valuation_time;
    if tau < 0.0 {
        return Err(PricingError::ExpiredOption { valuation: frame.valuation_time, expiry });
    }
    let s = -omega.im;
    if omega.im != 0.0 {
        let (lo, hi) = match model {
            BaseModel::Heston { .. } => {
                let mut strip = (f64::NEG_INFINITY, f64::INFINITY);
                if frame.jump_active(expiry) {
                    strip = jump.moment_strip();
                }
                strip
            }
            _ => moment_strip(model, jump, frame, expiry)?,
        };
        if !inside_strip(s, lo, hi) {
            return Err(PricingError::MomentExplosion(format!(
                "moment order {s} outside ({lo}, {hi})"
            )));
        }
    }
    let value = cf_unchecked(model, jump, frame, expiry, omega);
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(PricingError::MomentExplosion(format!("non-finite value at omega = {omega}")));
    }
    Ok(value)
}

/// [`cf_log_return`] without strip checks, for inner loops.
#[inline]
pub fn cf_unchecked(model: &BaseModel, jump: &EaJump, frame: &MarketFrame, expiry: f64, omega: Complex64) -> Complex64 {
    let tau = expiry - frame.valuation_time;
    let base = base_log_cf(model, frame.rate, tau, omega).exp();
    if frame.jump_active(expiry) {
        base * jump.cf(omega)
    } else {
        base
    }
}

/// Moment generating function `E[(S_T/S_t)^s]` for real `s`.
pub fn mgf_log_return(model: &BaseModel, jump: &EaJump, frame: &MarketFrame, expiry: f64, s: f64) -> Result<f64> {
    cf_log_return(model, jump, frame, expiry, Complex64::new(0.0, -s)).map(|c| c.re)
}

fn heston_explosion_fn(a: f64, d2: f64, tau: f64) -> f64 {
    if d2 > 1e-14 {
        let d = d2.sqrt();
        a + d / (0.5 * tau * d).tanh()
    } else if d2 < -1e-14 {
        let y = (-d2).sqrt();
        let half = 0.5 * tau * y;
        if half >= std::f64::consts::PI {
            return f64::NEG_INFINITY;
        }
        a + y / half.tan()
    } else {
        a + 2.0 / tau
    }
}

/// Critical moments `(p₋, p₊)` of the Heston log return over `tau`.
///
/// `p₊` is the smallest `p > 1` with `E[(S_T/S_t)^p] = ∞`; `p₋` is the smallest
/// `q > 0` with `E[(S_T/S_t)^{-q}] = ∞`. Each root solves
/// `ν ∓ ρζp + D coth(τD/2) = 0`, continued through `coth(ix) = −i cot(x)`.
pub fn heston_critical_moments(nu: f64, zeta: f64, rho: f64, tau: f64) -> Result<(f64, f64)> {
    if tau <= 0.0 {
        return Err(PricingError::CriticalMomentNotFound("non-positive horizon".into()));
    }
    let p_plus = heston_moment_root(nu, zeta, rho, tau, true)?;
    let p_minus = heston_moment_root(nu, zeta, rho, tau, false)?;
    Ok((p_minus, p_plus))
}

/// Largest moment order searched for an explosion.
pub const MOMENT_SCAN_MAX: f64 = 2000.0;

fn heston_moment_root(nu: f64, zeta: f64, rho: f64, tau: f64, upper: bool) -> Result<f64> {
    if upper {
        let plus = |p: f64| {
            let a = nu - rho * zeta * p;
            heston_explosion_fn(a, a * a + zeta * zeta * (p - p * p), tau)
        };
        scan_root(plus, 1.0, "p+")
    } else {
        let minus = |p: f64| {
            let a = nu + rho * zeta * p;
            heston_explosion_fn(a, a * a + zeta * zeta * (-p - p * p), tau)
        };
        scan_root(minus, 0.0, "p-")
    }
}

fn scan_root<F: Fn(f64) -> f64>(f: F, start: f64, label: &str) -> Result<f64> {
    const STEP: f64 = 0.25;
    const P_MAX: f64 = MOMENT_SCAN_MAX;
    let mut lo = start;
    let mut f_lo = f(lo);
    if f_lo <= 0.0 {
        return Err(PricingError::CriticalMomentNotFound(format!("{label}: no positive start value")));
    }
    while lo < P_MAX {
        let hi = lo + STEP;
        let f_hi = f(hi);
        if f_hi <= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if f(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
                if b - a <= 1e-15 * b {
                    break;
                }
            }
            return Ok(0.5 * (a + b));
        }
        lo = hi;
        f_lo = f_hi;
    }
    let _ = f_lo;
    Err(PricingError::CriticalMomentNotFound(format!("{label}: no sign change below {P_MAX}")))
}
