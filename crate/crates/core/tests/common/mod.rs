//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use ea_pricing::{BaseModel, EaJump, MarketFrame, OptionKind};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Textbook Black-Scholes, written out independently of the library.
pub fn black_scholes(kind: OptionKind, s: f64, k: f64, r: f64, tau: f64, vol: f64) -> f64 {
    let sd = vol * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * vol * vol) * tau) / sd;
    let d2 = d1 - sd;
    let df = (-r * tau).exp();
    match kind {
        OptionKind::Call => s * phi(d1) - k * df * phi(d2),
        OptionKind::Put => k * df * phi(-d2) - s * phi(-d1),
    }
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + h * i as f64;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

/// Trading-day conventions used by the tables.
pub const WEEK: f64 = 5.0 / 252.0;
pub const MONTH: f64 = 21.0 / 252.0;
pub const QUARTER: f64 = 63.0 / 252.0;
pub const YEAR: f64 = 1.0;

pub fn table1_model() -> BaseModel {
    BaseModel::Kou { sigma: 0.2, kappa: 10.0, p: 0.6, lambda1: 60.0, lambda2: 50.0 }
}

pub fn table1_jump() -> EaJump {
    EaJump::De { u: 0.55, eta1: 15.0, eta2: 12.0 }
}

/// Announcement before every Table-1 expiry.
pub fn table1_frame() -> MarketFrame {
    MarketFrame::new(100.0, 0.02, 0.0, 0.5 / 252.0)
}

pub const TABLE1_STRIKES: [f64; 9] = [90.0, 92.5, 95.0, 97.5, 100.0, 102.5, 105.0, 107.5, 110.0];
pub const TABLE1_EXPIRIES: [f64; 4] = [WEEK, MONTH, QUARTER, YEAR];

/// Printed call prices, rows by strike, columns 1w/1m/3m/1y.
pub const TABLE1_PRICES: [[f64; 4]; 9] = [
    [11.031, 11.380, 12.348, 16.050],
    [8.958, 9.400, 10.529, 14.485],
    [7.048, 7.598, 8.871, 13.027],
    [5.357, 6.007, 7.384, 11.675],
    [3.945, 4.651, 6.075, 10.428],
    [2.849, 3.536, 4.942, 9.284],
    [2.047, 2.651, 3.979, 8.240],
    [1.475, 1.968, 3.173, 7.292],
    [1.069, 1.455, 2.509, 6.434],
];

/// Printed implied vols matching [`TABLE1_PRICES`].
pub const TABLE1_IVS: [[f64; 4]; 9] = [
    [0.799, 0.425, 0.300, 0.239],
    [0.767, 0.415, 0.297, 0.239],
    [0.738, 0.407, 0.295, 0.239],
    [0.714, 0.401, 0.294, 0.239],
    [0.699, 0.397, 0.293, 0.239],
    [0.696, 0.396, 0.292, 0.239],
    [0.704, 0.396, 0.292, 0.238],
    [0.719, 0.399, 0.292, 0.238],
    [0.738, 0.403, 0.293, 0.238],
];

/// Parameter set of the American put table: base model and jump.
pub fn table3_set(set: usize) -> (BaseModel, EaJump) {
    match set {
        1 => (
            BaseModel::Kou { sigma: 0.2, kappa: 252.0, p: 0.5, lambda1: 300.0, lambda2: 300.0 },
            EaJump::De { u: 0.5, eta1: 30.0, eta2: 30.0 },
        ),
        _ => (
            BaseModel::Kou { sigma: 0.07, kappa: 200.0, p: 0.5, lambda1: 350.0, lambda2: 350.0 },
            EaJump::De { u: 0.5, eta1: 25.0, eta2: 25.0 },
        ),
    }
}

pub const TABLE3_STRIKES: [f64; 9] = [80.0, 85.0, 90.0, 95.0, 100.0, 105.0, 110.0, 115.0, 120.0];

/// Announcement dates of the three lattice columns, with `T` = 3 months.
pub const TABLE3_EA_TIMES: [f64; 3] = [QUARTER - 2.0 / 252.0, 31.5 / 252.0, 3.0 / 252.0];

/// Printed columns per set: lattice at the three dates, BA with `T_e = T`,
/// BA with an imminent announcement, European.
pub const TABLE3: [[[f64; 6]; 9]; 2] = [
    [
        [0.10, 0.10, 0.10, 0.10, 0.11, 0.10],
        [0.37, 0.37, 0.37, 0.37, 0.37, 0.37],
        [1.02, 1.02, 1.02, 1.02, 1.02, 1.02],
        [2.30, 2.31, 2.31, 2.30, 2.31, 2.29],
        [4.40, 4.42, 4.43, 4.40, 4.42, 4.38],
        [7.35, 7.39, 7.40, 7.36, 7.38, 7.32],
        [11.07, 11.11, 11.14, 11.06, 11.11, 10.98],
        [15.36, 15.40, 15.45, 15.35, 15.42, 15.20],
        [20.06, 20.07, 20.14, 20.04, 20.13, 19.77],
    ],
    [
        [0.01, 0.01, 0.01, 0.01, 0.01, 0.01],
        [0.05, 0.05, 0.05, 0.05, 0.05, 0.05],
        [0.22, 0.22, 0.23, 0.22, 0.23, 0.22],
        [0.84, 0.86, 0.87, 0.84, 0.87, 0.84],
        [2.54, 2.60, 2.63, 2.54, 2.62, 2.53],
        [5.68, 5.81, 5.91, 5.70, 5.91, 5.66],
        [10.01, 10.10, 10.28, 10.03, 10.30, 9.87],
        [15.00, 15.00, 15.08, 15.00, 15.10, 14.57],
        [20.00, 20.00, 20.01, 20.00, 20.04, 19.45],
    ],
];

/// Explosion time of the Heston moment of order `p`: the time for the Riccati
/// solution `B' = ζ²B²/2 − aB + c`, `B(0) = 0`, to reach infinity, written as
/// an integral over `θ` with `B = tan θ`.
pub fn heston_explosion_time(nu: f64, zeta: f64, rho: f64, p: f64) -> f64 {
    let a = nu - rho * zeta * p;
    let c = 0.5 * (p * p - p);
    // A positive root of the quadratic stops the blow-up.
    if c <= 0.0 || (a > 0.0 && a * a >= 2.0 * zeta * zeta * c) {
        return f64::INFINITY;
    }
    let g = |th: f64| 1.0 / (0.5 * zeta * zeta * th.sin().powi(2) - a * th.sin() * th.cos() + c * th.cos().powi(2));
    simpson(g, 0.0, std::f64::consts::FRAC_PI_2, 20_000)
}

/// Smallest order beyond `start` in direction `dir` whose moment explodes by `tau`.
pub fn oracle_critical(nu: f64, zeta: f64, rho: f64, tau: f64, start: f64, dir: f64) -> f64 {
    let t = |q: f64| heston_explosion_time(nu, zeta, rho, start + dir * q);
    let (mut lo, mut hi) = (1e-9, 1e-9);
    while t(hi) > tau {
        lo = hi;
        hi += 0.25;
        assert!(hi < 2000.0, "no explosion found");
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if t(mid) > tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
