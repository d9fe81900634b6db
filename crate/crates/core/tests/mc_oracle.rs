mod common;

use common::*;
use ea_pricing::kou_analytic::{KouPricer, SeriesOptions};
use ea_pricing::mc_oracle::*;
use ea_pricing::transform_pricing::{price_fft, FftGrid};
use ea_pricing::{bs_ea, BaseModel, EaJump, Execution, MarketFrame, OptionKind, OptionSpec};

fn heston() -> (BaseModel, EaJump) {
    (
        BaseModel::Heston { nu: 2.0, vartheta: 0.05, zeta: 0.4, rho: -0.5, sigma0_sq: 0.04 },
        EaJump::Gaussian { sigma_e: 0.05 },
    )
}

#[test]
fn discounted_spot_is_a_martingale() {
    let f = MarketFrame::new(100.0, 0.03, 0.0, 0.1);
    let (hm, hj) = heston();
    let cases = [
        (BaseModel::BlackScholes { sigma: 0.3 }, EaJump::Gaussian { sigma_e: 0.08 }, 400_000),
        (table1_model(), table1_jump(), 400_000),
        (hm, hj, 40_000),
    ];
    for (m, j, n) in cases {
        let cfg = McConfig { heston_steps: 100, ..McConfig::new(n, 11) };
        let e = estimate(&m, &j, &f, 0.5, &cfg, 1, |x, out| out[0] = x.exp()).unwrap()[0];
        let want = (0.03f64 * 0.5).exp();
        assert!((e.mean - want).abs() < 3.0 * e.std_error, "{m:?}: {} ± {} vs {want}", e.mean, e.std_error);
    }
}

#[test]
fn extended_bs_prices_match_the_closed_form() {
    let f = MarketFrame::new(100.0, 0.02, 0.0, 0.01);
    let m = BaseModel::BlackScholes { sigma: 0.25 };
    let j = EaJump::Gaussian { sigma_e: 0.06 };
    let specs: Vec<OptionSpec> = [85.0, 100.0, 115.0].iter().map(|&k| OptionSpec::call(k, MONTH)).collect();
    let got = mc_price_strip(&specs, &f, &m, &j, &McConfig::new(1_000_000, 5)).unwrap();
    for (s, p) in specs.iter().zip(&got) {
        let want = bs_ea::price(s, &f, 0.25, 0.06).unwrap();
        assert!((p.price - want).abs() < 3.0 * p.std_error, "K={}: {} ± {} vs {want}", s.strike, p.price, p.std_error);
    }
}

#[test]
fn table1_month_at_the_money() {
    let spec = OptionSpec::call(100.0, MONTH);
    let p = mc_price(&spec, &table1_frame(), &table1_model(), &table1_jump(), 2_000_000, 17).unwrap();
    let want = KouPricer::new(&table1_model(), &table1_jump(), &table1_frame(), MONTH, SeriesOptions::default())
        .unwrap()
        .price(OptionKind::Call, 100.0, 100.0);
    assert!((want - 4.651).abs() < 5e-4);
    assert!((p.price - want).abs() < 3.0 * p.std_error, "{} ± {} vs {want}", p.price, p.std_error);
}

#[test]
fn heston_euler_prices_match_the_transform() {
    let (m, j) = heston();
    let f = MarketFrame::new(100.0, 0.02, 0.0, 0.1);
    let spec = OptionSpec::put(95.0, 0.5);
    let want = price_fft(&spec, &f, &m, &j, &FftGrid::default()).unwrap().price;
    let coarse = mc_price_strip(&[spec], &f, &m, &j, &McConfig { heston_steps: 100, ..McConfig::new(200_000, 8) }).unwrap()[0];
    let fine = mc_price_strip(&[spec], &f, &m, &j, &McConfig { heston_steps: 200, ..McConfig::new(200_000, 8) }).unwrap()[0];
    // Step halving bounds the discretisation bias.
    let bias = (fine.price - coarse.price).abs();
    assert!((fine.price - want).abs() < 3.0 * fine.std_error + bias, "{} ± {} vs {want}", fine.price, fine.std_error);
}

#[test]
fn degenerate_paths_are_deterministic() {
    let f = MarketFrame::new(100.0, 0.04, 0.0, 0.1);
    let m = BaseModel::BlackScholes { sigma: 0.0 };
    let j = EaJump::Gaussian { sigma_e: 0.0 };
    let xs = simulate_terminal(&m, &j, &f, 0.5, 1000, 1).unwrap();
    assert!(xs.iter().all(|&x| x == 0.04 * 0.5));
    let p = mc_price(&OptionSpec::call(95.0, 0.5), &f, &m, &j, 1000, 1).unwrap();
    let want = ((100.0 * 0.02f64.exp() - 95.0) * (-0.02f64).exp()).max(0.0);
    assert!((p.price - want).abs() < 1e-12 && p.std_error < 1e-12, "{p:?} vs {want}");
}

#[test]
fn seeds_fix_the_paths() {
    let f = table1_frame();
    let a = simulate_terminal(&table1_model(), &table1_jump(), &f, MONTH, 50_000, 9).unwrap();
    let b = simulate_terminal(&table1_model(), &table1_jump(), &f, MONTH, 50_000, 9).unwrap();
    let c = simulate_terminal(&table1_model(), &table1_jump(), &f, MONTH, 50_000, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let seq = McConfig { execution: Execution::Sequential, ..McConfig::new(50_000, 9) };
    assert_eq!(simulate_terminal_with(&table1_model(), &table1_jump(), &f, MONTH, &seq).unwrap(), a);
    let spec = [OptionSpec::put(97.0, MONTH)];
    let par = mc_price_strip(&spec, &f, &table1_model(), &table1_jump(), &McConfig::new(100_000, 2)).unwrap();
    let seq = mc_price_strip(&spec, &f, &table1_model(), &table1_jump(), &McConfig { execution: Execution::Sequential, ..McConfig::new(100_000, 2) }).unwrap();
    assert_eq!(par, seq);
}

#[test]
fn strips_share_one_expiry() {
    let f = table1_frame();
    let specs = [OptionSpec::call(100.0, MONTH), OptionSpec::call(100.0, QUARTER)];
    assert!(mc_price_strip(&specs, &f, &table1_model(), &table1_jump(), &McConfig::new(10, 1)).is_err());
    assert!(mc_price_strip(&[], &f, &table1_model(), &table1_jump(), &McConfig::new(10, 1)).unwrap().is_empty());
}

/// Cumulants one to four from raw moments.
fn cumulants(m: [f64; 4]) -> [f64; 4] {
    let [m1, m2, m3, m4] = m;
    [
        m1,
        m2 - m1 * m1,
        m3 - 3.0 * m2 * m1 + 2.0 * m1.powi(3),
        m4 - 4.0 * m3 * m1 - 3.0 * m2 * m2 + 12.0 * m2 * m1 * m1 - 6.0 * m1.powi(4),
    ]
}

fn factorial(n: i32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Raw moments of a double exponential with up-probability `p`.
fn de_moments(p: f64, up: f64, down: f64) -> [f64; 4] {
    std::array::from_fn(|i| {
        let n = i as i32 + 1;
        factorial(n) * (p / up.powi(n) + (1.0 - p) * (-1.0f64).powi(n) / down.powi(n))
    })
}

#[test]
fn kou_samples_have_the_analytic_cumulants() {
    let (sigma, kappa, p, l1, l2) = (0.2, 40.0, 0.3, 25.0, 15.0);
    let (u, e1, e2) = (0.6, 20.0, 12.0);
    let (r, tau) = (0.02, 0.25);
    let m = BaseModel::Kou { sigma, kappa, p, lambda1: l1, lambda2: l2 };
    let j = EaJump::De { u, eta1: e1, eta2: e2 };
    let f = MarketFrame::new(100.0, r, 0.0, 0.1);

    // Independent parts: Brownian drift, compound Poisson, shifted EA jump.
    let y = de_moments(p, l1, l2);
    let zr = de_moments(u, e1, e2);
    let comp = (u * e1 / (e1 - 1.0) + (1.0 - u) * e2 / (e2 + 1.0)).ln();
    let mkou = p * l1 / (l1 - 1.0) + (1.0 - p) * l2 / (l2 + 1.0) - 1.0;
    let z = cumulants(zr);
    let mut want = [0.0; 4];
    for n in 0..4 {
        want[n] = kappa * tau * y[n] + z[n];
    }
    want[0] += (r - 0.5 * sigma * sigma - mkou * kappa) * tau - comp;
    want[1] += sigma * sigma * tau;

    let batches = 25;
    let per = 100_000;
    let cfg = McConfig::new(batches * per, 21);
    let xs = simulate_terminal_iid(&m, &j, &f, tau, &cfg).unwrap();
    let stats: Vec<[f64; 4]> = xs
        .chunks(per)
        .map(|c| {
            let n = c.len() as f64;
            cumulants(std::array::from_fn(|k| c.iter().map(|x| x.powi(k as i32 + 1)).sum::<f64>() / n))
        })
        .collect();
    for k in 0..4 {
        let vals: Vec<f64> = stats.iter().map(|s| s[k]).collect();
        let mean = vals.iter().sum::<f64>() / batches as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
        let se = sd / (batches as f64).sqrt();
        assert!((mean - want[k]).abs() < 4.0 * se, "cumulant {}: {mean} ± {se} vs {}", k + 1, want[k]);
    }
}
