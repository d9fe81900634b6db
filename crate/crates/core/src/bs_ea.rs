//! Extended Black-Scholes: Gaussian announcement jump on top of a constant
//! diffusive volatility.

use crate::error::{PricingError, Result};
use crate::model_core::{MarketFrame, OptionKind, OptionSpec};
use crate::numerics::{norm_cdf, norm_pdf};
use serde::{Deserialize, Serialize};

/// Black-Scholes call and put on a non-dividend stock.
pub fn bs_price(kind: OptionKind, s: f64, k: f64, r: f64, tau: f64, vol: f64) -> f64 {
    let df = (-r * tau).exp();
    if tau <= 0.0 {
        return match kind {
            OptionKind::Call => (s - k).max(0.0),
            OptionKind::Put => (k - s).max(0.0),
        };
    }
    let sd = vol * tau.sqrt();
    if sd <= 0.0 {
        return match kind {
            OptionKind::Call => (s - k * df).max(0.0),
            OptionKind::Put => (k * df - s).max(0.0),
        };
    }
    let d1 = ((s / k).ln() + r * tau) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    match kind {
        OptionKind::Call => s * norm_cdf(d1) - k * df * norm_cdf(d2),
        OptionKind::Put => k * df * norm_cdf(-d2) - s * norm_cdf(-d1),
    }
}

/// Black-Scholes vega `∂C/∂σ`.
pub fn bs_vega(s: f64, k: f64, r: f64, tau: f64, vol: f64) -> f64 {
    let sd = vol * tau.sqrt();
    if sd <= 0.0 {
        return 0.0;
    }
    let d1 = ((s / k).ln() + r * tau) / sd + 0.5 * sd;
    s * norm_pdf(d1) * tau.sqrt()
}

/// Calendar-time Black-Scholes theta `∂C/∂t`.
pub fn bs_theta(kind: OptionKind, s: f64, k: f64, r: f64, tau: f64, vol: f64) -> f64 {
    let df = (-r * tau).exp();
    let sd = vol * tau.sqrt();
    if sd <= 0.0 {
        let itm = match kind {
            OptionKind::Call => s > k * df,
            OptionKind::Put => k * df > s,
        };
        return match (kind, itm) {
            (OptionKind::Call, true) => -r * k * df,
            (OptionKind::Put, true) => r * k * df,
            _ => 0.0,
        };
    }
    let d1 = ((s / k).ln() + r * tau) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    let decay = -s * vol * norm_pdf(d1) / (2.0 * tau.sqrt());
    match kind {
        OptionKind::Call => decay - r * k * df * norm_cdf(d2),
        OptionKind::Put => decay + r * k * df * norm_cdf(-d2),
    }
}

/// Greeks of the extended model, in Black-Scholes units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsEaGreeks {
    pub delta: f64,
    pub gamma: f64,
    pub vega_bs: f64,
    pub vega_ea: f64,
    pub theta: f64,
}

/// Implied volatility of the extended model: `√(σ² + σ_e²/(T−t))` while the
/// announcement is pending, `σ` afterwards.
pub fn iv_function(t: f64, _strike: f64, expiry: f64, frame: &MarketFrame, sigma: f64, sigma_e: f64) -> Result<f64> {
    if t >= expiry {
        return Err(PricingError::ExpiredOption { valuation: t, expiry });
    }
    let tau = expiry - t;
    if t < frame.ea_time && frame.ea_time <= expiry {
        Ok((sigma * sigma + sigma_e * sigma_e / tau).sqrt())
    } else {
        Ok(sigma)
    }
}

fn effective_vol(spec: &OptionSpec, frame: &MarketFrame, sigma: f64, sigma_e: f64) -> Result<f64> {
    iv_function(frame.valuation_time, spec.strike, spec.expiry, frame, sigma, sigma_e)
}

/// European price. Returns intrinsic value at `t = T`.
pub fn price(spec: &OptionSpec, frame: &MarketFrame, sigma: f64, sigma_e: f64) -> Result<f64> {
    let t = frame.valuation_time;
    if t > spec.expiry {
        return Err(PricingError::ExpiredOption { valuation: t, expiry: spec.expiry });
    }
    if t == spec.expiry {
        return Ok(spec.intrinsic(frame.spot));
    }
    let tau = spec.expiry - t;
    let vol = effective_vol(spec, frame, sigma, sigma_e)?;
    let call = bs_price(OptionKind::Call, frame.spot, spec.strike, frame.rate, tau, vol);
    Ok(match spec.kind {
        OptionKind::Call => call,
        OptionKind::Put => call - frame.spot + spec.strike * (-frame.rate * tau).exp(),
    })
}

/// Delta, gamma, the two vegas and theta.
pub fn greeks(spec: &OptionSpec, frame: &MarketFrame, sigma: f64, sigma_e: f64) -> Result<BsEaGreeks> {
    let tau = spec.tau(frame)?;
    let (s, k, r) = (frame.spot, spec.strike, frame.rate);
    let vol = effective_vol(spec, frame, sigma, sigma_e)?;
    let active = frame.jump_active(spec.expiry);
    let sd = vol * tau.sqrt();
    let df = (-r * tau).exp();
    let (delta_call, gamma) = if sd > 0.0 {
        let d1 = ((s / k).ln() + r * tau) / sd + 0.5 * sd;
        (norm_cdf(d1), norm_pdf(d1) / (s * sd))
    } else {
        (if s > k * df { 1.0 } else { 0.0 }, 0.0)
    };
    let delta = match spec.kind {
        OptionKind::Call => delta_call,
        OptionKind::Put => delta_call - 1.0,
    };
    let vega_bs = bs_vega(s, k, r, tau, vol);
    let theta_bs = bs_theta(spec.kind, s, k, r, tau, vol);
    let (vega_ea, theta) = if active && vol > 0.0 {
        let ratio = sigma_e / tau;
        (vega_bs * sigma_e / (tau * vol), theta_bs + ratio * ratio * vega_bs / (2.0 * vol))
    } else {
        (0.0, theta_bs)
    };
    Ok(BsEaGreeks { delta, gamma, vega_bs, vega_ea, theta })
}

/// Output of the two-expiry estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermStructureEstimate {
    pub sigma_ts: f64,
    pub sigma_e_ts: f64,
}

/// Output of the two-date estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesEstimate {
    pub sigma_ts: f64,
    pub sigma_e_ts: f64,
}

fn nonneg_sqrt(x: f64, what: &str) -> Result<f64> {
    if x >= 0.0 {
        Ok(x.sqrt())
    } else if x > -1e-14 {
        Ok(0.0)
    } else {
        Err(PricingError::InfeasibleInputs(format!("{what} estimate is negative ({x})")))
    }
}

/// Recovers `(σ, σ_e)` from the IVs of two expiries `T1 < T2` observed at `t`,
/// both straddling the announcement. Requires `iv_T1 > iv_T2`.
pub fn estimate_term_structure(iv_t1: f64, iv_t2: f64, t: f64, t1: f64, t2: f64) -> Result<TermStructureEstimate> {
    if !(t < t1 && t1 < t2) {
        return Err(PricingError::InfeasibleInputs(format!(
            "need t < T1 < T2, got t={t}, T1={t1}, T2={t2}"
        )));
    }
    if !(iv_t1 > 0.0 && iv_t2 > 0.0) {
        return Err(PricingError::InfeasibleInputs("implied vols must be positive".into()));
    }
    if iv_t1 <= iv_t2 {
        return Err(PricingError::InfeasibleInputs(format!(
            "near-expiry IV {iv_t1} must exceed far-expiry IV {iv_t2}"
        )));
    }
    let (tau1, tau2) = (t1 - t, t2 - t);
    let (v1, v2) = (iv_t1 * iv_t1, iv_t2 * iv_t2);
    let sigma_sq = (tau1 * v1 - tau2 * v2) / (t1 - t2);
    let sigma_e_sq = (v1 - v2) / (1.0 / tau1 - 1.0 / tau2);
    Ok(TermStructureEstimate {
        sigma_ts: nonneg_sqrt(sigma_sq, "sigma")?,
        sigma_e_ts: nonneg_sqrt(sigma_e_sq, "sigma_e")?,
    })
}

/// Recovers `(σ, σ_e)` from IVs of one expiry `T` seen at two dates
/// `t1 < t2`, both before the announcement. Requires `iv_t2 >= iv_t1`; equal
/// IVs give `σ_e = 0`.
pub fn estimate_time_series(iv_t1: f64, iv_t2: f64, t1: f64, t2: f64, expiry: f64) -> Result<TimeSeriesEstimate> {
    if !(t1 < t2 && t2 < expiry) {
        return Err(PricingError::InfeasibleInputs(format!(
            "need t1 < t2 < T, got t1={t1}, t2={t2}, T={expiry}"
        )));
    }
    if !(iv_t1 > 0.0 && iv_t2 > 0.0) {
        return Err(PricingError::InfeasibleInputs("implied vols must be positive".into()));
    }
    if iv_t2 < iv_t1 {
        return Err(PricingError::InfeasibleInputs(format!(
            "later IV {iv_t2} is below earlier IV {iv_t1}"
        )));
    }
    let (tau1, tau2) = (expiry - t1, expiry - t2);
    let (v1, v2) = (iv_t1 * iv_t1, iv_t2 * iv_t2);
    let sigma_sq = (tau1 * v1 - tau2 * v2) / (t2 - t1);
    let sigma_e_sq = (v1 - v2) / (1.0 / tau1 - 1.0 / tau2);
    Ok(TimeSeriesEstimate {
        sigma_ts: nonneg_sqrt(sigma_sq, "sigma")?,
        sigma_e_ts: nonneg_sqrt(sigma_e_sq, "sigma_e")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iv_function_arithmetic() {
        let f = MarketFrame::new(100.0, 0.02, 0.0, 0.5 / 252.0);
        let iv = iv_function(0.0, 100.0, 1.0 / 252.0, &f, 0.2, 0.04).unwrap();
        assert!((iv - 0.4432f64.sqrt()).abs() < 1e-12);
        let post = iv_function(f.ea_time, 100.0, 1.0 / 252.0, &f, 0.2, 0.04).unwrap();
        assert_eq!(post, 0.2);
    }

    #[test]
    fn expiry_instant_returns_intrinsic() {
        let f = MarketFrame::new(105.0, 0.02, 1.0, 1.0);
        let p = price(&OptionSpec::call(100.0, 1.0), &f, 0.2, 0.05).unwrap();
        assert_eq!(p, 5.0);
    }

    #[test]
    fn term_structure_rejects_flat_curve() {
        assert!(estimate_term_structure(0.3, 0.3, 0.0, 0.1, 0.2).is_err());
    }
}
