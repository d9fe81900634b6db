//! Least-squares calibration to an option chain, de-Americanization of
//! American quotes, and the historical-versus-implied jump volatility report.

use crate::american::{price_american, LatticeConfig};
use crate::bs_ea::bs_price;
use crate::error::{PricingError, Result};
use crate::iv_toolkit::{price_slice, Engine};
use crate::model_core::{validate, BaseModel, EaJump, ExerciseStyle, MarketFrame, OptionKind, OptionSpec};
use crate::numerics::brent;
use crate::par::{self, Execution};
use crate::transform_pricing::FftGrid;
use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

/// Trading days per year.
pub const TRADING_DAYS: f64 = 252.0;

/// One chain quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteRecord {
    pub spec: OptionSpec,
    pub bid: f64,
    pub ask: f64,
    pub mid: f64,
    pub underlying: f64,
    pub rate: f64,
    pub quote_time: f64,
    pub ea_time: f64,
}

impl QuoteRecord {
    pub fn new(spec: OptionSpec, bid: f64, ask: f64, underlying: f64, rate: f64, quote_time: f64, ea_time: f64) -> Self {
        QuoteRecord { spec, bid, ask, mid: 0.5 * (bid + ask), underlying, rate, quote_time, ea_time }
    }

    /// Noiseless quote with zero spread.
    pub fn at_mid(spec: OptionSpec, mid: f64, frame: &MarketFrame) -> Self {
        QuoteRecord::new(spec, mid, mid, frame.spot, frame.rate, frame.valuation_time, frame.ea_time)
    }

    /// Market frame of the quote. An announcement dated before the quote is spent.
    pub fn frame(&self) -> MarketFrame {
        MarketFrame::new(self.underlying, self.rate, self.quote_time, self.ea_time.max(self.quote_time))
    }

    fn sort_key(&self) -> [f64; 7] {
        let kind = match self.spec.kind {
            OptionKind::Call => 0.0,
            OptionKind::Put => 1.0,
        };
        [self.quote_time, self.underlying, self.rate, self.ea_time, self.spec.expiry, self.spec.strike, kind]
    }

    fn same_slice(&self, other: &QuoteRecord) -> bool {
        self.sort_key()[..5] == other.sort_key()[..5]
    }
}

fn cmp_quotes(a: &QuoteRecord, b: &QuoteRecord) -> Ordering {
    a.sort_key()
        .iter()
        .zip(b.sort_key().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Weekdays in `(from, to]`, negative when `to < from`.
pub fn weekdays_between(from: NaiveDate, to: NaiveDate) -> i64 {
    let (a, b, sign) = if to >= from { (from, to, 1) } else { (to, from, -1) };
    let days = (b - a).num_days();
    let full_weeks = days / 7;
    let mut count = full_weeks * 5;
    let mut d = a + chrono::TimeDelta::days(full_weeks * 7);
    while d < b {
        d = d.succ_opt().expect("date overflow");
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            count += 1;
        }
    }
    sign * count
}

#[derive(Debug, Deserialize, Serialize)]
struct ChainRow {
    quote_date: NaiveDate,
    expiry_date: NaiveDate,
    strike: f64,
    option_type: String,
    style: String,
    bid: f64,
    ask: f64,
    underlying: f64,
    rate: f64,
    ea_date: NaiveDate,
}

fn input(e: impl fmt::Display) -> PricingError {
    PricingError::Input(e.to_string())
}

/// Parses a chain CSV. Times are weekday counts over 252 from the earliest quote date.
pub fn parse_chain<R: Read>(reader: R) -> Result<Vec<QuoteRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let rows: Vec<ChainRow> = rdr
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| PricingError::Input(format!("row {}: {e}", i + 1))))
        .collect::<Result<_>>()?;
    let Some(origin) = rows.iter().map(|r| r.quote_date).min() else {
        return Ok(Vec::new());
    };
    let years = |d: NaiveDate| weekdays_between(origin, d) as f64 / TRADING_DAYS;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let kind = match r.option_type.to_ascii_uppercase().as_str() {
                "C" | "CALL" => OptionKind::Call,
                "P" | "PUT" => OptionKind::Put,
                other => return Err(PricingError::Input(format!("row {}: option_type `{other}`", i + 1))),
            };
            let style = match r.style.to_ascii_uppercase().as_str() {
                "E" => ExerciseStyle::European,
                "A" => ExerciseStyle::American,
                other => return Err(PricingError::Input(format!("row {}: style `{other}`", i + 1))),
            };
            if !(r.bid >= 0.0 && r.ask >= r.bid) {
                return Err(PricingError::Input(format!("row {}: need 0 <= bid <= ask", i + 1)));
            }
            let spec = OptionSpec { strike: r.strike, expiry: years(r.expiry_date), kind, style };
            spec.validate()?;
            let t = years(r.quote_date);
            Ok(QuoteRecord::new(spec, r.bid, r.ask, r.underlying, r.rate, t, years(r.ea_date)))
        })
        .collect()
}

pub fn read_chain(path: &Path) -> Result<Vec<QuoteRecord>> {
    let file = std::fs::File::open(path).map_err(|e| PricingError::Input(format!("{}: {e}", path.display())))?;
    parse_chain(file)
}

/// Writes quotes as a chain CSV dated from `origin`, mapping year fractions back to weekdays.
pub fn write_chain(path: &Path, quotes: &[QuoteRecord], origin: NaiveDate) -> Result<()> {
    let date = |t: f64| -> NaiveDate {
        let mut days = (t * TRADING_DAYS).round() as i64;
        let mut d = origin;
        while days > 0 {
            d = d.succ_opt().expect("date overflow");
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                days -= 1;
            }
        }
        d
    };
    let mut w = csv::Writer::from_path(path).map_err(input)?;
    for q in quotes {
        w.serialize(ChainRow {
            quote_date: date(q.quote_time),
            expiry_date: date(q.spec.expiry),
            strike: q.spec.strike,
            option_type: if q.spec.kind == OptionKind::Call { "C" } else { "P" }.into(),
            style: if q.spec.style == ExerciseStyle::American { "A" } else { "E" }.into(),
            bid: q.bid,
            ask: q.ask,
            underlying: q.underlying,
            rate: q.rate,
            ea_date: date(q.ea_time),
        })
        .map_err(input)?;
    }
    w.flush().map_err(input)
}

/// A quote removed during preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedQuote {
    pub index: usize,
    pub reason: String,
}

/// Preprocessed quotes and the ones that could not be used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeAmericanized {
    pub quotes: Vec<QuoteRecord>,
    pub dropped: Vec<DroppedQuote>,
}

/// Lattice used for Black-Scholes American puts during preprocessing.
pub fn bs_american_config() -> LatticeConfig {
    LatticeConfig { n_points: 2048, time_steps: 400, ..Default::default() }
}

/// Black-Scholes American put on the preprocessing lattice.
pub fn bs_american_put(spot: f64, strike: f64, rate: f64, tau: f64, vol: f64) -> Result<f64> {
    let frame = MarketFrame::new(spot, rate, 0.0, 0.0);
    let spec = OptionSpec::american_put(strike, tau);
    price_american(&spec, &frame, &BaseModel::BlackScholes { sigma: vol }, &EaJump::none(), &bs_american_config())
        .map(|a| a.price)
}

fn de_americanize_one(q: &QuoteRecord) -> Result<QuoteRecord> {
    let tau = q.spec.tau(&q.frame())?;
    let (s, k, r) = (q.underlying, q.spec.strike, q.rate);
    let european = |vol: f64| bs_price(q.spec.kind, s, k, r, tau, vol);
    let vol = match q.spec.kind {
        // No dividends: early exercise of a call is never optimal.
        OptionKind::Call => crate::iv_toolkit::implied_vol_raw(q.mid, OptionKind::Call, s, k, r, tau)
            .map_err(|e| PricingError::InversionFailure(e.to_string()))?,
        OptionKind::Put => {
            let intrinsic = (k - s).max(0.0);
            if q.mid <= intrinsic + 1e-10 * k || q.mid >= k {
                return Err(PricingError::InversionFailure(format!(
                    "American put mid {} carries no volatility information (intrinsic {intrinsic})",
                    q.mid
                )));
            }
            let f = |v: f64| bs_american_put(s, k, r, tau, v).unwrap_or(f64::NAN) - q.mid;
            brent(f, 1e-3, 5.0, 1e-10, 100).ok_or_else(|| {
                PricingError::InversionFailure(format!("no volatility in [0.001, 5] reproduces mid {}", q.mid))
            })?
        }
    };
    let mid = european(vol);
    let spec = OptionSpec { style: ExerciseStyle::European, ..q.spec };
    Ok(QuoteRecord { spec, mid, bid: mid, ask: mid, ..*q })
}

/// Replaces each American mid by the European Black-Scholes price at its
/// American-implied volatility. European quotes pass through.
pub fn de_americanize(quotes: &[QuoteRecord], exec: Execution) -> DeAmericanized {
    let out = par::map(exec, quotes, |q| match q.spec.style {
        ExerciseStyle::European => Ok(*q),
        ExerciseStyle::American => de_americanize_one(q),
    });
    let mut kept = Vec::with_capacity(quotes.len());
    let mut dropped = Vec::new();
    for (index, r) in out.into_iter().enumerate() {
        match r {
            Ok(q) => kept.push(q),
            Err(e) => dropped.push(DroppedQuote { index, reason: e.to_string() }),
        }
    }
    DeAmericanized { quotes: kept, dropped }
}

/// Base-model family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Bs,
    Kou,
    Heston,
}

/// Announcement-jump family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpFamily {
    Gaussian,
    De,
}

impl FromStr for ModelFamily {
    type Err = PricingError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bs" | "black_scholes" => Ok(ModelFamily::Bs),
            "kou" => Ok(ModelFamily::Kou),
            "heston" => Ok(ModelFamily::Heston),
            other => Err(PricingError::Input(format!("unknown model family `{other}`"))),
        }
    }
}

impl FromStr for JumpFamily {
    type Err = PricingError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(JumpFamily::Gaussian),
            "de" | "double_exponential" => Ok(JumpFamily::De),
            other => Err(PricingError::Input(format!("unknown jump family `{other}`"))),
        }
    }
}

/// Parameter names in vector order.
pub fn param_names(model: ModelFamily, jump: JumpFamily) -> Vec<&'static str> {
    let mut v = match model {
        ModelFamily::Bs => vec!["sigma"],
        ModelFamily::Kou => vec!["sigma", "kappa", "p", "lambda1", "lambda2"],
        ModelFamily::Heston => vec!["nu", "vartheta", "zeta", "rho", "sigma0_sq"],
    };
    v.extend(match jump {
        JumpFamily::Gaussian => vec!["sigma_e"],
        JumpFamily::De => vec!["u", "eta1", "eta2"],
    });
    v
}

/// Default box `(lower, upper)` per parameter.
pub fn default_bounds(model: ModelFamily, jump: JumpFamily) -> Vec<(f64, f64)> {
    let mut v = match model {
        ModelFamily::Bs => vec![(0.01, 2.0)],
        ModelFamily::Kou => vec![(0.01, 2.0), (0.1, 50.0), (0.01, 0.99), (3.0, 200.0), (2.0, 200.0)],
        ModelFamily::Heston => vec![(0.1, 20.0), (0.001, 1.0), (0.01, 3.0), (-0.99, 0.99), (0.001, 1.0)],
    };
    v.extend(match jump {
        JumpFamily::Gaussian => vec![(0.0, 0.5)],
        JumpFamily::De => vec![(0.01, 0.99), (3.0, 100.0), (2.0, 100.0)],
    });
    v
}

/// Builds the model pair from a parameter vector.
pub fn assemble(model: ModelFamily, jump: JumpFamily, theta: &[f64]) -> Result<(BaseModel, EaJump)> {
    let need = param_names(model, jump).len();
    if theta.len() != need {
        return Err(PricingError::Input(format!("expected {need} parameters, got {}", theta.len())));
    }
    let (base, rest) = match model {
        ModelFamily::Bs => (BaseModel::BlackScholes { sigma: theta[0] }, &theta[1..]),
        ModelFamily::Kou => (
            BaseModel::Kou { sigma: theta[0], kappa: theta[1], p: theta[2], lambda1: theta[3], lambda2: theta[4] },
            &theta[5..],
        ),
        ModelFamily::Heston => (
            BaseModel::Heston { nu: theta[0], vartheta: theta[1], zeta: theta[2], rho: theta[3], sigma0_sq: theta[4] },
            &theta[5..],
        ),
    };
    let ea = match jump {
        JumpFamily::Gaussian => EaJump::Gaussian { sigma_e: rest[0] },
        JumpFamily::De => EaJump::De { u: rest[0], eta1: rest[1], eta2: rest[2] },
    };
    Ok((base, ea))
}

/// Parameter vector of a model pair, inverse of [`assemble`].
pub fn flatten(model: &BaseModel, jump: &EaJump) -> (ModelFamily, JumpFamily, Vec<f64>) {
    let (mf, mut v) = match *model {
        BaseModel::BlackScholes { sigma } => (ModelFamily::Bs, vec![sigma]),
        BaseModel::Kou { sigma, kappa, p, lambda1, lambda2 } => (ModelFamily::Kou, vec![sigma, kappa, p, lambda1, lambda2]),
        BaseModel::Heston { nu, vartheta, zeta, rho, sigma0_sq } => {
            (ModelFamily::Heston, vec![nu, vartheta, zeta, rho, sigma0_sq])
        }
    };
    let jf = match *jump {
        EaJump::Gaussian { sigma_e } => {
            v.push(sigma_e);
            JumpFamily::Gaussian
        }
        EaJump::De { u, eta1, eta2 } => {
            v.extend([u, eta1, eta2]);
            JumpFamily::De
        }
    };
    (mf, jf, v)
}

/// Model prices for quotes, grouped by slice. Analytic where eligible, FFT otherwise.
pub fn model_prices(model: &BaseModel, jump: &EaJump, quotes: &[QuoteRecord]) -> Result<Vec<f64>> {
    let grid = FftGrid::default();
    let mut out = vec![0.0; quotes.len()];
    let mut order: Vec<usize> = (0..quotes.len()).collect();
    order.sort_by(|&a, &b| cmp_quotes(&quotes[a], &quotes[b]));
    let mut start = 0;
    while start < order.len() {
        let head = &quotes[order[start]];
        let mut end = start + 1;
        while end < order.len() && head.same_slice(&quotes[order[end]]) {
            end += 1;
        }
        let specs: Vec<OptionSpec> = order[start..end]
            .iter()
            .map(|&i| OptionSpec { style: ExerciseStyle::European, ..quotes[i].spec })
            .collect();
        let prices = price_slice(&specs, &head.frame(), model, jump, Engine::Auto, &grid)?;
        for (&i, p) in order[start..end].iter().zip(prices) {
            out[i] = p;
        }
        start = end;
    }
    Ok(out)
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub starts: usize,
    pub max_iter: usize,
    /// Box per parameter; `None` uses [`default_bounds`].
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Offset into the low-discrepancy start sequence.
    pub seed: u64,
    /// Extra start tried before the sequence.
    pub initial: Option<Vec<f64>>,
    pub execution: Execution,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { starts: 8, max_iter: 200, bounds: None, seed: 0, initial: None, execution: Execution::Parallel }
    }
}

/// Fitted parameters and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub model: BaseModel,
    pub jump: EaJump,
    /// Sum of squared price errors.
    pub objective: f64,
    /// `model − mid` per quote, in input order.
    pub residuals: Vec<f64>,
    pub start_index: usize,
    pub converged: bool,
    pub iterations: usize,
}

fn halton(index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Map between the box and the unit cube. Positive ranges spanning more than
/// two decades are scaled logarithmically.
struct BoxMap<'a> {
    bounds: &'a [(f64, f64)],
}

fn log_scaled(lo: f64, hi: f64) -> bool {
    lo > 0.0 && hi > 100.0 * lo
}

impl BoxMap<'_> {
    fn to_theta(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.bounds)
            .map(|(&x, &(lo, hi))| {
                let x = x.clamp(0.0, 1.0);
                if log_scaled(lo, hi) {
                    (lo.ln() + (hi / lo).ln() * x).exp().clamp(lo, hi)
                } else {
                    lo + (hi - lo) * x
                }
            })
            .collect()
    }

    fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.bounds)
            .map(|(&t, &(lo, hi))| {
                let x = if log_scaled(lo, hi) {
                    (t / lo).ln() / (hi / lo).ln()
                } else if hi > lo {
                    (t - lo) / (hi - lo)
                } else {
                    0.0
                };
                x.clamp(0.0, 1.0)
            })
            .collect()
    }
}

/// Relative finite-difference step. Central differences keep the Jacobian
/// well above the ~1e-11 pricing noise.
const FD_STEP: f64 = 1e-5;

struct LmOutcome {
    u: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
}

/// Projected Levenberg-Marquardt on the unit cube. Coordinates pinned at a
/// face with the gradient pointing outward are frozen for the step.
fn levenberg_marquardt<F: Fn(&[f64]) -> Option<Vec<f64>>>(resid: F, u0: Vec<f64>, max_iter: usize) -> Option<LmOutcome> {
    let n = u0.len();
    let mut u = u0;
    let mut r = resid(&u)?;
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut mu = 1e-2;
    let mut converged = false;
    let mut it = 0;
    let mut stalls = 0;
    while it < max_iter {
        it += 1;
        let m = r.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let h = FD_STEP * u[j].abs().max(1e-2);
            let (lo, hi) = ((u[j] - h).max(0.0), (u[j] + h).min(1.0));
            let mut p = u.clone();
            p[j] = hi;
            let rp = if hi > u[j] { resid(&p)? } else { r.clone() };
            p[j] = lo;
            let rm = if lo < u[j] { resid(&p)? } else { r.clone() };
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (hi - lo);
            }
        }
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;
        let free: Vec<usize> = (0..n)
            .filter(|&j| !((u[j] <= 0.0 && g[j] > 0.0) || (u[j] >= 1.0 && g[j] < 0.0)))
            .collect();
        let gmax = free.iter().fold(0.0f64, |a, &j| a.max(g[j].abs()));
        if free.is_empty() || gmax < 1e-18 || cost < 1e-26 {
            converged = true;
            break;
        }
        let jf = jac.select_columns(free.iter());
        let jtj = jf.transpose() * &jf;
        let gf = jf.transpose() * &rv;
        let mut accepted = false;
        while mu < 1e16 {
            let mut a = jtj.clone();
            for d in 0..free.len() {
                a[(d, d)] += mu * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&gf))) else {
                mu *= 10.0;
                continue;
            };
            let mut trial = u.clone();
            for (k, &j) in free.iter().enumerate() {
                trial[j] = (u[j] + step[k]).clamp(0.0, 1.0);
            }
            let moved = trial.iter().zip(&u).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if let Some(rt) = resid(&trial) {
                let ct: f64 = rt.iter().map(|x| x * x).sum();
                if ct < cost {
                    let rel = (cost - ct) / cost;
                    u = trial;
                    r = rt;
                    cost = ct;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    stalls = if rel < 1e-12 || moved < 1e-13 { stalls + 1 } else { 0 };
                    break;
                }
            }
            mu *= 4.0;
        }
        if !accepted || stalls >= 3 {
            converged = true;
            break;
        }
    }
    Some(LmOutcome { u, cost, converged, iterations: it })
}

/// Multi-start bounded least squares of model prices against quote mids.
pub fn calibrate(
    quotes: &[QuoteRecord],
    model: ModelFamily,
    jump: JumpFamily,
    config: &CalibrationConfig,
) -> Result<CalibrationResult> {
    let names = param_names(model, jump);
    let k = names.len();
    if quotes.len() < k {
        return Err(PricingError::TooFewQuotes { needed: k, got: quotes.len() });
    }
    let bounds = config.bounds.clone().unwrap_or_else(|| default_bounds(model, jump));
    if bounds.len() != k || bounds.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
        return Err(PricingError::Input(format!("need {k} finite (lower <= upper) bounds")));
    }
    for q in quotes {
        q.frame().validate()?;
        q.spec.tau(&q.frame())?;
    }
    // Canonical order makes the objective independent of input order.
    let mut order: Vec<usize> = (0..quotes.len()).collect();
    order.sort_by(|&a, &b| cmp_quotes(&quotes[a], &quotes[b]));
    let sorted: Vec<QuoteRecord> = order.iter().map(|&i| quotes[i]).collect();
    let map = BoxMap { bounds: &bounds };

    let residuals = |theta: &[f64]| -> Option<Vec<f64>> {
        let (m, j) = assemble(model, jump, theta).ok()?;
        validate(&m, &j, &sorted[0].frame()).ok()?;
        let prices = model_prices(&m, &j, &sorted).ok()?;
        let r: Vec<f64> = prices.iter().zip(&sorted).map(|(p, q)| p - q.mid).collect();
        r.iter().all(|x| x.is_finite()).then_some(r)
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(init) = &config.initial {
        if init.len() != k {
            return Err(PricingError::Input(format!("initial guess needs {k} values")));
        }
        starts.push(map.to_unit(init));
    }
    for s in 0..config.starts.max(1) {
        let idx = config.seed + s as u64 + 1;
        starts.push((0..k).map(|d| 0.05 + 0.9 * halton(idx, PRIMES[d % PRIMES.len()])).collect());
    }

    let runs = par::map(config.execution, &starts, |u0| {
        levenberg_marquardt(|u| residuals(&map.to_theta(u)), u0.clone(), config.max_iter)
    });
    let best = runs
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)))
        .ok_or_else(|| PricingError::AllStartsFailed(format!("{} starts produced no finite objective", starts.len())))?;
    let (start_index, out) = best;
    let params = map.to_theta(&out.u);
    let r_sorted = residuals(&params).ok_or_else(|| PricingError::AllStartsFailed("best point not priceable".into()))?;
    let mut resid = vec![0.0; quotes.len()];
    for (pos, &i) in order.iter().enumerate() {
        resid[i] = r_sorted[pos];
    }
    let (m, j) = assemble(model, jump, &params)?;
    Ok(CalibrationResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        params,
        model: m,
        jump: j,
        objective: r_sorted.iter().map(|x| x * x).sum(),
        residuals: resid,
        start_index,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// Historical versus implied announcement-jump volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPremiumReport {
    pub sigma_e_p: f64,
    pub sigma_e_q: f64,
    /// `σ_e^P / σ_e^Q`.
    pub ratio: f64,
    pub n_returns: usize,
    /// Large-sample standard error of `σ_e^P`.
    pub std_error: f64,
}

/// Minimum number of historical announcement returns.
pub const MIN_HISTORY: usize = 8;

/// Sample standard deviation of demeaned announcement-day log returns against
/// the implied jump volatility.
pub fn risk_premium_report(implied_sigma_e: f64, ea_returns: &[f64]) -> Result<RiskPremiumReport> {
    if ea_returns.len() < MIN_HISTORY {
        return Err(PricingError::InsufficientHistory { needed: MIN_HISTORY, got: ea_returns.len() });
    }
    if !(implied_sigma_e >= 0.0) || ea_returns.iter().any(|x| !x.is_finite()) {
        return Err(PricingError::Input("need a non-negative implied sigma_e and finite returns".into()));
    }
    let n = ea_returns.len() as f64;
    let mean = ea_returns.iter().sum::<f64>() / n;
    let var = ea_returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let ratio = if sd == 0.0 {
        0.0
    } else if implied_sigma_e > 0.0 {
        sd / implied_sigma_e
    } else {
        f64::INFINITY
    };
    Ok(RiskPremiumReport {
        sigma_e_p: sd,
        sigma_e_q: implied_sigma_e,
        ratio,
        n_returns: ea_returns.len(),
        std_error: sd / (2.0 * (n - 1.0)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weekday_count() {
        let fri = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
        let mon = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        assert_eq!(weekdays_between(fri, mon), 1);
        assert_eq!(weekdays_between(mon, fri), -1);
        assert_eq!(weekdays_between(fri, fri + chrono::TimeDelta::days(28)), 20);
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 3), 2.0 / 3.0);
        assert_eq!(halton(4, 2), 0.125);
    }

    #[test]
    fn box_map_round_trip() {
        let b = [(0.0, 1.0), (-2.0, 3.0)];
        let m = BoxMap { bounds: &b };
        let th = m.to_theta(&m.to_unit(&[0.25, 1.5]));
        assert!((th[0] - 0.25).abs() < 1e-12 && (th[1] - 1.5).abs() < 1e-12);
    }
}
