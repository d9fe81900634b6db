//! Closed-form European pricing under the Kou model with an announcement jump.
//!
//! The price is `e^{−α}·S·Υ̂ − K·e^{−rτ}·Υ`, where each `Υ` is a Poisson
//! mixture of tail probabilities of a Gaussian plus sums of exponentials.
//! Tail probabilities are evaluated through the `Hh` special functions in
//! log space so that large jump rates do not overflow.

use crate::error::{PricingError, Result};
use crate::model_core::{
    kou_m, validate, AnalyticEligibility, BaseModel, EaJump, MarketFrame, OptionKind, OptionSpec,
    RATE_COLLISION_BAND,
};
use crate::numerics::{integrate, ln_binomial, ln_factorial, ln_norm_cdf, norm_cdf, LN_SQRT_2PI, SQRT_2PI};
use serde::{Deserialize, Serialize};

/// Largest `Hh` order accepted by [`hh`].
pub const HH_MAX_ORDER: usize = 2000;

/// Cap on the Poisson truncation order.
pub const MAX_SERIES_ORDER: usize = 250;

/// Default certified tolerance for a single price.
pub const DEFAULT_TOLERANCE: f64 = 1e-11;

/// Log of `Hh_i(x)` for `i = 0..=nmax`, optionally scaled by `e^{x²/2}`.
struct LnHhTable {
    values: Vec<f64>,
    /// When true `values[i] = ln(e^{x²/2} Hh_i(x))`.
    scaled: bool,
}

fn ln_hh_table(nmax: usize, x: f64) -> LnHhTable {
    let forward = x <= 0.0 || x * (2.0 * (nmax as f64 + 1.0)).sqrt() < 3.5;
    if forward {
        if let Some(values) = ln_hh_forward(nmax, x) {
            return LnHhTable { values, scaled: false };
        }
    }
    LnHhTable { values: ln_hh_backward(nmax, x), scaled: true }
}

/// Forward three-term recursion with running rescaling. Stable for `x ≤ 0`.
fn ln_hh_forward(nmax: usize, x: f64) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(nmax + 1);
    let l_m1 = -0.5 * x * x;
    let l_0 = LN_SQRT_2PI + ln_norm_cdf(-x);
    out.push(l_0);
    let mut scale = l_0;
    let mut prev = (l_m1 - l_0).exp();
    let mut cur = 1.0f64;
    for n in 1..=nmax {
        let next = (prev - x * cur) / n as f64;
        if !(next > 0.0) || !next.is_finite() {
            return None;
        }
        prev = cur;
        cur = next;
        if !(1e-200..=1e200).contains(&cur) {
            let l = cur.ln();
            scale += l;
            prev /= cur;
            cur = 1.0;
        }
        out.push(scale + cur.ln());
    }
    Some(out)
}

/// Backward recursion on the ratios `ρ_n = Hh_n/Hh_{n−1}` (the minimal
/// solution for `x > 0`); returns `ln(e^{x²/2} Hh_n(x))`.
fn ln_hh_backward(nmax: usize, x: f64) -> Vec<f64> {
    let root = (2.0 * (nmax as f64 + 1.0)).sqrt() + 20.0 / x;
    let start = ((0.5 * root * root).ceil() as usize).max(nmax + 2) + 10;
    let mut rho = vec![0.0; nmax + 1];
    let mut r = 0.0f64;
    for n in (1..=start).rev() {
        r = 1.0 / (x + n as f64 * r);
        if n - 1 <= nmax {
            rho[n - 1] = r;
        }
    }
    let mut out = Vec::with_capacity(nmax + 1);
    let mut acc = 0.0;
    for v in rho {
        acc += v.ln();
        out.push(acc);
    }
    out
}

/// `Hh_n(x)` for `n ≥ −1`.
pub fn hh(n: i32, x: f64) -> Result<f64> {
    if n < -1 {
        return Err(PricingError::IndexError(format!("Hh order {n} below -1")));
    }
    if n as usize > HH_MAX_ORDER && n >= 0 {
        return Err(PricingError::OrderOverflow { order: n as usize, max: HH_MAX_ORDER });
    }
    if n == -1 {
        return Ok((-0.5 * x * x).exp());
    }
    let n = n as usize;
    let table = ln_hh_table(n, x);
    let v = table.values[n];
    Ok(if table.scaled { (v - 0.5 * x * x).exp() } else { v.exp() })
}

/// `ln Hh_n(x)`, finite even where `Hh_n(x)` underflows.
pub fn ln_hh(n: usize, x: f64) -> Result<f64> {
    if n > HH_MAX_ORDER {
        return Err(PricingError::OrderOverflow { order: n, max: HH_MAX_ORDER });
    }
    let table = ln_hh_table(n, x);
    let v = table.values[n];
    Ok(if table.scaled { v - 0.5 * x * x } else { v })
}

/// `I_n(k; α, β, δ) = ∫_k^∞ e^{αx} Hh_n(βx − δ) dx` in closed form.
///
/// Supported sign patterns: `β > 0, α ≠ 0` and `β < 0, α < 0`.
pub fn i_integral(n: i32, k: f64, alpha: f64, beta: f64, delta: f64) -> Result<f64> {
    let positive = beta > 0.0 && alpha != 0.0;
    let negative = beta < 0.0 && alpha < 0.0;
    if !(positive || negative) {
        return Err(PricingError::UnsupportedSignPattern(format!(
            "alpha = {alpha}, beta = {beta}"
        )));
    }
    if n < -1 {
        return Err(PricingError::IndexError(format!("I_n order {n} below -1")));
    }
    let ratio = beta / alpha;
    let arg = beta * k - delta;
    let mut sum = 0.0;
    for i in 0..=n {
        sum += ratio.powi(n - i) * hh(i, arg)?;
    }
    let lead = -(alpha * k).exp() / alpha * sum;
    let expo = (alpha * delta / beta + alpha * alpha / (2.0 * beta * beta)).exp();
    let tail = if positive {
        ratio.powi(n + 1) * SQRT_2PI / beta * expo * norm_cdf(-beta * k + delta + alpha / beta)
    } else {
        -ratio.powi(n + 1) * SQRT_2PI / beta * expo * norm_cdf(beta * k - delta - alpha / beta)
    };
    Ok(lead + tail)
}

/// `I_n` built by the one-step recursion from `I_{−1}`.
pub fn i_integral_recursive(n: i32, k: f64, alpha: f64, beta: f64, delta: f64) -> Result<f64> {
    let mut value = i_integral(-1, k, alpha, beta, delta)?;
    let arg = beta * k - delta;
    for i in 0..=n {
        value = -(alpha * k).exp() / alpha * hh(i, arg)? + beta / alpha * value;
    }
    Ok(value)
}

fn ln_pow(base: f64, e: usize) -> f64 {
    if e == 0 {
        0.0
    } else {
        e as f64 * base.ln()
    }
}

/// Weights `(P_{n,m}, Q_{n,m})` from the binomial-sum formulas.
pub fn pq_weights(n: usize, m: usize, p: f64, lambda1: f64, lambda2: f64) -> Result<(f64, f64)> {
    if m > n {
        return Err(PricingError::IndexError(format!("m = {m} exceeds n = {n}")));
    }
    if n == 0 {
        return Ok((1.0, 0.0));
    }
    if m == 0 {
        return Ok((0.0, 0.0));
    }
    let q = 1.0 - p;
    if m == n {
        return Ok((p.powi(n as i32), q.powi(n as i32)));
    }
    let a = lambda1 / (lambda1 + lambda2);
    let b = lambda2 / (lambda1 + lambda2);
    let (mut pw, mut qw) = (0.0, 0.0);
    for i in m..n {
        let lb = ln_binomial(n - m - 1, i - m) + ln_binomial(n, i);
        pw += (lb + ln_pow(a, i - m) + ln_pow(b, n - i) + ln_pow(p, i) + ln_pow(q, n - i)).exp();
        qw += (lb + ln_pow(a, n - i) + ln_pow(b, i - m) + ln_pow(p, n - i) + ln_pow(q, i)).exp();
    }
    Ok((pw, qw))
}

/// `P_{n,·}` and `Q_{n,·}` for `n = 0..=nmax`, by forward propagation of the
/// reduced exponential-sum state. Row `n` has entries for `m = 0..=n`.
pub fn pq_table(nmax: usize, p: f64, lambda1: f64, lambda2: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let q = 1.0 - p;
    let a = lambda1 / (lambda1 + lambda2);
    let b = lambda2 / (lambda1 + lambda2);
    let mut ps = vec![vec![1.0]];
    let mut qs = vec![vec![0.0]];
    if nmax == 0 {
        return (ps, qs);
    }
    ps.push(vec![0.0, p]);
    qs.push(vec![0.0, q]);
    for n in 2..=nmax {
        let (pp, qq) = (&ps[n - 1], &qs[n - 1]);
        let mut sp = vec![0.0; n + 1];
        let mut sq = vec![0.0; n + 1];
        for m in (1..n).rev() {
            sp[m] = pp[m] + a * sp[m + 1];
            sq[m] = qq[m] + b * sq[m + 1];
        }
        let mut np = vec![0.0; n + 1];
        let mut nq = vec![0.0; n + 1];
        for m in 1..=n {
            let up_shift = if m >= 2 { pp[m - 1] } else { 0.0 };
            let down_shift = if m >= 2 { qq[m - 1] } else { 0.0 };
            np[m] = p * up_shift + q * b * sp[m];
            nq[m] = q * down_shift + p * a * sq[m];
        }
        np[1] += p * b * sq[1];
        nq[1] += q * a * sp[1];
        ps.push(np);
        qs.push(nq);
    }
    (ps, qs)
}

/// `P(G + Γ(j, a) > k)` for `j = 0..=nmax`, with `G ~ N(0, s²)`.
pub fn gamma_tail_table(a: f64, s: f64, k: f64, nmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax + 1);
    if s <= 0.0 {
        if k < 0.0 {
            out.resize(nmax + 1, 1.0);
            return out;
        }
        out.push(0.0);
        let ak = a * k;
        let mut acc = 0.0;
        for i in 0..nmax {
            let lt = if i == 0 { -ak } else { i as f64 * ak.ln() - ln_factorial(i) - ak };
            acc += lt.exp();
            out.push(acc.min(1.0));
        }
        return out;
    }
    let base = norm_cdf(-k / s);
    out.push(base);
    if nmax == 0 {
        return out;
    }
    let x = a * s - k / s;
    let table = ln_hh_table(nmax - 1, x);
    let lead = if table.scaled { -0.5 * (k / s) * (k / s) } else { 0.5 * a * a * s * s - a * k };
    let ln_as = (a * s).ln();
    let mut acc = base;
    for i in 0..nmax {
        let lt = i as f64 * ln_as + lead + table.values[i] - LN_SQRT_2PI;
        acc += lt.exp();
        out.push(acc.min(1.0));
    }
    out
}

/// `P(G + E > k)` with `E ~ Exp(eta)`; `eta = ∞` means no exponential.
fn exp_tail_pos(eta: f64, s: f64, k: f64) -> f64 {
    if eta.is_infinite() {
        return if s > 0.0 { norm_cdf(-k / s) } else if k < 0.0 { 1.0 } else { 0.0 };
    }
    if s <= 0.0 {
        return if k < 0.0 { 1.0 } else { (-eta * k).exp() };
    }
    let lt = 0.5 * eta * eta * s * s - eta * k + ln_norm_cdf(k / s - eta * s);
    (norm_cdf(-k / s) + lt.exp()).min(1.0)
}

fn exp_tail_neg(eta: f64, s: f64, k: f64) -> f64 {
    1.0 - exp_tail_pos(eta, s, -k)
}

/// The 13-component parameter vector consumed by [`upsilon`], plus the
/// drift compensation `mκT + α` of the original model, which is shared by
/// both `Υ` terms of the price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpsilonParams {
    pub spot: f64,
    pub strike: f64,
    pub drift: f64,
    pub maturity: f64,
    pub sigma: f64,
    pub intensity: f64,
    pub p: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub u: f64,
    pub w: f64,
    /// EA rate read by the tail functions (`θ₁₂`); `∞` disables the EA jump.
    pub eta1: f64,
    /// Downward EA rate (`θ₁₃`), moved into the `θ₁₂` slot for the `w` branch.
    pub eta2: f64,
    pub compensation: f64,
}

impl UpsilonParams {
    pub fn theta(&self) -> [f64; 13] {
        [
            self.spot,
            self.strike,
            self.drift,
            self.maturity,
            self.sigma,
            self.intensity,
            self.p,
            self.lambda1,
            self.lambda2,
            self.u,
            self.w,
            self.eta1,
            self.eta2,
        ]
    }

    /// `Θ̃`: the 8th and 9th components exchanged.
    pub fn swapped(&self) -> Self {
        UpsilonParams { lambda1: self.lambda2, lambda2: self.lambda1, ..*self }
    }

    /// Exceedance threshold `k` for `log(S_T/S) > log(K/S)`.
    pub fn threshold(&self) -> f64 {
        (self.strike / self.spot).ln() - (self.drift - 0.5 * self.sigma * self.sigma) * self.maturity
            + self.compensation
    }

    fn gaussian_sd(&self) -> f64 {
        self.sigma * self.maturity.sqrt()
    }
}

/// The four tail probabilities entering `Z_n`, at threshold `z`:
/// `T1 = P(G + Γ(n,λ₁) + E > z)`, `T2 = P(G − Γ(n,λ₂) + E > z)`,
/// `T3 = P(G + Γ(n,λ₁) − E > z)`, `T4 = P(G − Γ(n,λ₂) − E > z)`,
/// with `G ~ N(0, σ²T)` and `E ~ Exp(θ₁₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCdfs {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

fn collision(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() < RATE_COLLISION_BAND * a.abs().max(b.abs())
}

/// Branch probabilities `B_i(m)` for `m = 0..=nmax` from the partial-fraction
/// recursions.
struct Branches {
    b1: Vec<f64>,
    b2: Vec<f64>,
    b3: Vec<f64>,
    b4: Vec<f64>,
}

fn branches(s: f64, l1: f64, l2: f64, e1: f64, e2: f64, k: f64, nmax: usize) -> Branches {
    let pos = gamma_tail_table(l1, s, k, nmax);
    let neg: Vec<f64> = gamma_tail_table(l2, s, -k, nmax).into_iter().map(|v| 1.0 - v).collect();
    let up = exp_tail_pos(e1, s, k);
    let down = exp_tail_neg(e2, s, k);
    let r1 = if e1.is_infinite() { 0.0 } else { l1 / (l1 - e1) };
    let r2 = if e1.is_infinite() { 0.0 } else { l2 / (l2 + e1) };
    let r3 = if e2.is_infinite() { 0.0 } else { l1 / (l1 + e2) };
    let r4 = if e2.is_infinite() { 0.0 } else { l2 / (l2 - e2) };
    let run = |r: f64, start: f64, table: &[f64]| {
        let mut v = Vec::with_capacity(nmax + 1);
        v.push(start);
        for m in 1..=nmax {
            let next = r * v[m - 1] + (1.0 - r) * table[m];
            v.push(next);
        }
        v
    };
    Branches {
        b1: run(r1, up, &pos),
        b2: run(r2, up, &neg),
        b3: run(r3, down, &pos),
        b4: run(r4, down, &neg),
    }
}

/// Tail probabilities for order `n` at threshold `z`.
pub fn tail_cdfs(n: usize, z: f64, params: &UpsilonParams) -> Result<TailCdfs> {
    let eta = params.eta1;
    if collision(eta, params.lambda1) || collision(eta, params.lambda2) {
        return Err(PricingError::DegenerateAnalyticCase(format!(
            "EA rate {eta} collides with a jump rate"
        )));
    }
    let b = branches(params.gaussian_sd(), params.lambda1, params.lambda2, eta, eta, z, n);
    Ok(TailCdfs { t1: b.b1[n], t2: b.b2[n], t3: b.b3[n], t4: b.b4[n] })
}

/// Poisson mixture `Σ_n π_n Z_n(k)` for one measure.
#[derive(Debug, Clone)]
pub struct KouSeries {
    s: f64,
    lambda1: f64,
    lambda2: f64,
    u: f64,
    w: f64,
    eta1: f64,
    eta2: f64,
    order: usize,
    pi: Vec<f64>,
    p_rows: Vec<Vec<f64>>,
    q_rows: Vec<Vec<f64>>,
    wp: Vec<f64>,
    wq: Vec<f64>,
    quad_b1: bool,
    quad_b4: bool,
    tail: f64,
}

fn poisson_tail(mean: f64, order: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let lm = mean.ln();
    let mut n = order + 1;
    let mut term = (n as f64 * lm - mean - ln_factorial(n)).exp();
    let mut sum = 0.0;
    loop {
        sum += term;
        n += 1;
        term *= mean / n as f64;
        if (n as f64 > mean && term < 1e-18 * sum.max(1e-300)) || n > order + 100_000 {
            break;
        }
        if term == 0.0 && n as f64 > mean {
            break;
        }
    }
    sum
}

/// `ε(x, M) = 2 − 2·Σ_{n≤M} Poisson(x; n)`, evaluated as twice the upper tail.
pub fn truncation_epsilon(mean: f64, order: usize) -> f64 {
    2.0 * poisson_tail(mean, order)
}

/// Smallest `M ≤ cap` with `w_share·ε(x_share, M) + w_normal·ε(x_normal, M) < tol`.
pub fn truncation_order(w_share: f64, x_share: f64, w_normal: f64, x_normal: f64, tol: f64, cap: usize) -> usize {
    for m in 0..=cap {
        let bound = w_share * truncation_epsilon(x_share, m) + w_normal * truncation_epsilon(x_normal, m);
        if bound < tol {
            return m;
        }
    }
    cap
}

fn amplification_ok(r: f64, weights: &[f64]) -> bool {
    if r.abs() <= 1.0 {
        return true;
    }
    let lr = r.abs().ln();
    let mut total = 0.0;
    for (m, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            total += (w.ln() + m as f64 * lr).exp();
        }
    }
    total < 1e3
}

impl KouSeries {
    /// Builds the series. `eta1 = ∞` disables the EA jump (then `u + w` must be 1).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s: f64,
        mean_jumps: f64,
        p: f64,
        lambda1: f64,
        lambda2: f64,
        u: f64,
        w: f64,
        eta1: f64,
        eta2: f64,
        order: usize,
    ) -> Result<Self> {
        if mean_jumps > 0.0 && (collision(eta1, lambda1) || collision(eta2, lambda2)) {
            return Err(PricingError::DegenerateAnalyticCase(format!(
                "EA rates ({eta1}, {eta2}) collide with jump rates ({lambda1}, {lambda2})"
            )));
        }
        let order = if mean_jumps > 0.0 { order } else { 0 };
        let pi = crate::numerics::poisson_pmf(mean_jumps, order);
        let (p_rows, q_rows) = pq_table(order, p, lambda1, lambda2);
        let mut wp = vec![0.0; order + 1];
        let mut wq = vec![0.0; order + 1];
        for n in 1..=order {
            for m in 1..=n {
                wp[m] += pi[n] * p_rows[n][m];
                wq[m] += pi[n] * q_rows[n][m];
            }
        }
        let r1 = if eta1.is_infinite() { 0.0 } else { lambda1 / (lambda1 - eta1) };
        let r4 = if eta2.is_infinite() { 0.0 } else { lambda2 / (lambda2 - eta2) };
        let quad_b1 = u > 0.0 && !amplification_ok(r1, &wp);
        let quad_b4 = w > 0.0 && !amplification_ok(r4, &wq);
        let tail = poisson_tail(mean_jumps, order);
        Ok(KouSeries {
            s,
            lambda1,
            lambda2,
            u,
            w,
            eta1,
            eta2,
            order,
            pi,
            p_rows,
            q_rows,
            wp,
            wq,
            quad_b1,
            quad_b4,
            tail,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `max(2, u + w)·P(N > M)`: bound on the discarded part of the series.
    pub fn truncation_bound(&self) -> f64 {
        2f64.max(self.u + self.w) * self.tail
    }

    fn has_ea(&self) -> bool {
        self.eta1.is_finite()
    }

    /// `Σ_{n≤M} π_n Z_n(k)`.
    pub fn exceed(&self, k: f64) -> f64 {
        let (s, m) = (self.s, self.order);
        if !self.has_ea() {
            let pos = gamma_tail_table(self.lambda1, s, k, m);
            let neg = gamma_tail_table(self.lambda2, s, -k, m);
            let mut v = self.pi[0] * pos[0];
            for j in 1..=m {
                v += self.wp[j] * pos[j] + self.wq[j] * (1.0 - neg[j]);
            }
            return v;
        }
        let b = branches(s, self.lambda1, self.lambda2, self.eta1, self.eta2, k, m);
        let mut v = self.pi[0] * (self.u * b.b1[0] + self.w * b.b4[0]);
        for j in 1..=m {
            if !self.quad_b1 {
                v += self.u * self.wp[j] * b.b1[j];
            }
            v += self.w * self.wp[j] * b.b3[j];
            v += self.u * self.wq[j] * b.b2[j];
            if !self.quad_b4 {
                v += self.w * self.wq[j] * b.b4[j];
            }
        }
        if self.quad_b1 {
            v += self.u * self.same_sign_quadrature(k, true);
        }
        if self.quad_b4 {
            v += self.w * self.same_sign_quadrature(k, false);
        }
        v
    }

    /// `Σ_m W_m B(m)` for a same-sign branch, by integrating the gamma tails
    /// against the exponential density instead of the partial fractions.
    fn same_sign_quadrature(&self, k: f64, up: bool) -> f64 {
        let (eta, weights) = if up { (self.eta1, &self.wp) } else { (self.eta2, &self.wq) };
        let (s, m) = (self.s, self.order);
        let integrand = |y: f64| {
            let dens = eta * (-eta * y).exp();
            let agg: f64 = if up {
                let t = gamma_tail_table(self.lambda1, s, k - y, m);
                (1..=m).map(|j| weights[j] * t[j]).sum()
            } else {
                let t = gamma_tail_table(self.lambda2, s, -(k + y), m);
                (1..=m).map(|j| weights[j] * (1.0 - t[j])).sum()
            };
            dens * agg
        };
        let upper = 45.0 / eta;
        let mut total = 0.0;
        let panels = 16;
        for i in 0..panels {
            let a = upper * i as f64 / panels as f64;
            let b = upper * (i + 1) as f64 / panels as f64;
            total += integrate(integrand, a, b, 1e-15);
        }
        total
    }

    /// Individual `Z_n(k)` for `n = 0..=M`.
    pub fn z_terms(&self, k: f64) -> Vec<f64> {
        let m = self.order;
        let b = branches(self.s, self.lambda1, self.lambda2, self.eta1, self.eta2, k, m);
        let (u, w) = if self.has_ea() { (self.u, self.w) } else { (1.0, 0.0) };
        let mut z = Vec::with_capacity(m + 1);
        z.push(if self.has_ea() { u * b.b1[0] + w * b.b4[0] } else { b.b1[0] });
        for n in 1..=m {
            let mut acc = 0.0;
            for j in 1..=n {
                acc += self.p_rows[n][j] * (u * b.b1[j] + w * b.b3[j]);
                acc += self.q_rows[n][j] * (u * b.b2[j] + w * b.b4[j]);
            }
            z.push(acc);
        }
        z
    }
}

/// Truncated `Υ(Θ)` with its certified truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpsilonValue {
    pub value: f64,
    pub bound: f64,
    pub order: usize,
}

/// `Υ(Θ) ≈ Σ_{n≤M} Poisson(θ₆θ₄; n)·Z_n(Θ)`.
pub fn upsilon(params: &UpsilonParams, max_order: usize) -> Result<UpsilonValue> {
    let series = series_from_params(params, max_order)?;
    let value = series.exceed(params.threshold());
    Ok(UpsilonValue { value, bound: series.truncation_bound(), order: series.order })
}

fn series_from_params(params: &UpsilonParams, max_order: usize) -> Result<KouSeries> {
    KouSeries::new(
        params.gaussian_sd(),
        params.intensity * params.maturity,
        params.p,
        params.lambda1,
        params.lambda2,
        params.u,
        params.w,
        params.eta1,
        params.eta2,
        max_order,
    )
}

/// `Z_n(Θ)` for `n = 0..=M`.
pub fn z_terms(params: &UpsilonParams, max_order: usize) -> Result<Vec<f64>> {
    let series = series_from_params(params, max_order)?;
    Ok(series.z_terms(params.threshold()))
}

/// Kou model parameters as a plain struct.
#[derive(Debug, Clone, Copy, PartialEq)]
struct KouParts {
    sigma: f64,
    kappa: f64,
    p: f64,
    lambda1: f64,
    lambda2: f64,
}

fn kou_parts(model: &BaseModel) -> Result<KouParts> {
    match *model {
        BaseModel::Kou { sigma, kappa, p, lambda1, lambda2 } => Ok(KouParts { sigma, kappa, p, lambda1, lambda2 }),
        BaseModel::BlackScholes { sigma } => Ok(KouParts { sigma, kappa: 0.0, p: 0.5, lambda1: 2.0, lambda2: 2.0 }),
        BaseModel::Heston { .. } => Err(PricingError::UnsupportedModel(
            "closed-form route needs a Kou or Black-Scholes base".into(),
        )),
    }
}

/// The two `Υ` parameter sets of the price formula for a given contract.
pub fn price_upsilon_params(
    spec: &OptionSpec,
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
) -> Result<(UpsilonParams, UpsilonParams)> {
    let tau = spec.tau(frame)?;
    let kp = kou_parts(model)?;
    let active = frame.jump_active(spec.expiry);
    let m = kou_m(kp.p, kp.lambda1, kp.lambda2);
    let (sigma, u, w, eta1, eta2, alpha) = match (*jump, active) {
        (EaJump::De { u, eta1, eta2 }, true) => (kp.sigma, u, 1.0 - u, eta1, eta2, jump.compensator()),
        (EaJump::Gaussian { sigma_e }, true) => {
            ((kp.sigma * kp.sigma + sigma_e * sigma_e / tau).sqrt(), 1.0, 0.0, f64::INFINITY, f64::INFINITY, 0.0)
        }
        _ => (kp.sigma, 1.0, 0.0, f64::INFINITY, f64::INFINITY, 0.0),
    };
    let compensation = m * kp.kappa * tau + alpha;
    let normal = UpsilonParams {
        spot: frame.spot,
        strike: spec.strike,
        drift: frame.rate,
        maturity: tau,
        sigma,
        intensity: kp.kappa,
        p: kp.p,
        lambda1: kp.lambda1,
        lambda2: kp.lambda2,
        u,
        w,
        eta1,
        eta2,
        compensation,
    };
    let (u_hat, w_hat, eta1_hat, eta2_hat) = if eta1.is_finite() {
        (u * eta1 / (eta1 - 1.0), w * eta2 / (eta2 + 1.0), eta1 - 1.0, eta2 + 1.0)
    } else {
        (1.0, 0.0, f64::INFINITY, f64::INFINITY)
    };
    let share = UpsilonParams {
        drift: frame.rate + sigma * sigma,
        intensity: (m + 1.0) * kp.kappa,
        p: kp.lambda1 * kp.p / ((kp.lambda1 - 1.0) * (m + 1.0)),
        lambda1: kp.lambda1 - 1.0,
        lambda2: kp.lambda2 + 1.0,
        u: u_hat,
        w: w_hat,
        eta1: eta1_hat,
        eta2: eta2_hat,
        ..normal
    };
    Ok((share, normal))
}

/// Reusable pricer for one model, frame and expiry; strikes and spots vary.
#[derive(Debug, Clone)]
pub struct KouPricer {
    rate: f64,
    tau: f64,
    alpha: f64,
    sigma: f64,
    offset: f64,
    share: KouSeries,
    normal: KouSeries,
}

/// Options controlling series truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    /// Target certified error on a price.
    pub tolerance: f64,
    /// Price scale used to convert the tolerance into a truncation order,
    /// typically `max(S, K)`.
    pub scale: f64,
    pub max_order: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions { tolerance: DEFAULT_TOLERANCE, scale: 100.0, max_order: MAX_SERIES_ORDER }
    }
}

impl KouPricer {
    pub fn new(
        model: &BaseModel,
        jump: &EaJump,
        frame: &MarketFrame,
        expiry: f64,
        opts: SeriesOptions,
    ) -> Result<Self> {
        let v = validate(model, jump, frame)?;
        if let AnalyticEligibility::Degenerate(_) | AnalyticEligibility::NotKou = v.analytic {
            v.require_analytic()?;
        }
        let spec = OptionSpec::call(frame.spot, expiry);
        let (share_p, normal_p) = price_upsilon_params(&spec, frame, model, jump)?;
        let tau = normal_p.maturity;
        let alpha = if normal_p.eta1.is_finite() { jump.compensator() } else { 0.0 };
        let w_share = opts.scale * (-alpha).exp() * 1f64.max(0.5 * (share_p.u + share_p.w));
        let w_normal = opts.scale * (-frame.rate * tau).exp();
        let order = truncation_order(
            w_share,
            share_p.intensity * tau,
            w_normal,
            normal_p.intensity * tau,
            opts.tolerance,
            opts.max_order,
        );
        let reached = w_share * truncation_epsilon(share_p.intensity * tau, order)
            + w_normal * truncation_epsilon(normal_p.intensity * tau, order);
        if reached > (1e4 * opts.tolerance).max(1e-8) {
            return Err(PricingError::OrderOverflow { order: order + 1, max: opts.max_order });
        }
        let share = series_from_params(&share_p, order)?;
        let normal = series_from_params(&normal_p, order)?;
        let offset = normal_p.threshold() - (normal_p.strike / normal_p.spot).ln();
        Ok(KouPricer { rate: frame.rate, tau, alpha, sigma: normal_p.sigma, offset, share, normal })
    }

    fn threshold(&self, spot: f64, strike: f64) -> f64 {
        (strike / spot).ln() + self.offset
    }

    /// `Q(S_T > K)` under the pricing measure.
    pub fn prob_exceed(&self, spot: f64, strike: f64) -> f64 {
        self.normal.exceed(self.threshold(spot, strike)).clamp(0.0, 1.0)
    }

    /// `e^{−α}Υ̂`: exercise probability under the share measure, equal to the call delta.
    pub fn call_delta(&self, spot: f64, strike: f64) -> f64 {
        let k = self.threshold(spot, strike) - self.sigma * self.sigma * self.tau;
        ((-self.alpha).exp() * self.share.exceed(k)).clamp(0.0, 1.0)
    }

    pub fn call(&self, spot: f64, strike: f64) -> f64 {
        let c = spot * self.call_delta(spot, strike) - strike * (-self.rate * self.tau).exp() * self.prob_exceed(spot, strike);
        c.max((spot - strike * (-self.rate * self.tau).exp()).max(0.0))
    }

    pub fn price(&self, kind: OptionKind, spot: f64, strike: f64) -> f64 {
        let call = self.call(spot, strike);
        match kind {
            OptionKind::Call => call,
            OptionKind::Put => (call - spot + strike * (-self.rate * self.tau).exp()).max(0.0),
        }
    }

    /// Certified truncation error of a price at `(spot, strike)`.
    pub fn error_bound(&self, spot: f64, strike: f64) -> f64 {
        spot * (-self.alpha).exp() * self.share.truncation_bound()
            + strike * (-self.rate * self.tau).exp() * self.normal.truncation_bound()
    }

    pub fn order(&self) -> usize {
        self.normal.order()
    }
}

/// Price with its certified truncation bound and delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KouPrice {
    pub price: f64,
    pub error_bound: f64,
    pub delta: f64,
    pub order: usize,
}

/// European price under Kou (or Black-Scholes) dynamics with the EA jump.
pub fn price_european(spec: &OptionSpec, frame: &MarketFrame, model: &BaseModel, jump: &EaJump) -> Result<KouPrice> {
    price_european_with(spec, frame, model, jump, DEFAULT_TOLERANCE)
}

/// [`price_european`] with an explicit certified tolerance.
pub fn price_european_with(
    spec: &OptionSpec,
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    tolerance: f64,
) -> Result<KouPrice> {
    spec.validate()?;
    spec.tau(frame)?;
    let opts = SeriesOptions { tolerance, scale: frame.spot.max(spec.strike), max_order: MAX_SERIES_ORDER };
    let pricer = KouPricer::new(model, jump, frame, spec.expiry, opts)?;
    let (s, k) = (frame.spot, spec.strike);
    let call_delta = pricer.call_delta(s, k);
    let delta = match spec.kind {
        OptionKind::Call => call_delta,
        OptionKind::Put => call_delta - 1.0,
    };
    Ok(KouPrice {
        price: pricer.price(spec.kind, s, k),
        error_bound: pricer.error_bound(s, k),
        delta,
        order: pricer.order(),
    })
}

/// `Q(S_T ≤ K | S_t = s)`.
pub fn tail_prob_q(spec: &OptionSpec, frame: &MarketFrame, model: &BaseModel, jump: &EaJump, s: f64) -> Result<f64> {
    let f = frame.with_spot(s);
    let opts = SeriesOptions { tolerance: 1e-13, scale: 1.0, max_order: MAX_SERIES_ORDER };
    let pricer = KouPricer::new(model, jump, &f, spec.expiry, opts)?;
    Ok(1.0 - pricer.prob_exceed(s, spec.strike))
}
