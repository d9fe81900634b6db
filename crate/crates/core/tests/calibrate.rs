mod common;

use chrono::NaiveDate;
use common::*;
use ea_pricing::american::{price_american, LatticeConfig};
use ea_pricing::calibrate::*;
use ea_pricing::{bs_ea, BaseModel, EaJump, Execution, MarketFrame, OptionKind, OptionSpec, PricingError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const CHAIN: &str = "\
quote_date,expiry_date,strike,option_type,style,bid,ask,underlying,rate,ea_date
2024-01-08,2024-01-12,100,C,E,2.10,2.30,100,0.02,2024-01-10
2024-01-08,2024-02-05,95,P,A,1.00,1.10,100,0.02,2024-01-10
";

#[test]
fn chain_parsing_uses_weekday_years() {
    let q = parse_chain(CHAIN.as_bytes()).unwrap();
    assert_eq!(q.len(), 2);
    assert_eq!(q[0].quote_time, 0.0);
    assert!((q[0].spec.expiry - 4.0 / 252.0).abs() < 1e-15);
    assert!((q[0].ea_time - 2.0 / 252.0).abs() < 1e-15);
    assert!((q[0].mid - 2.2).abs() < 1e-15);
    assert!((q[1].spec.expiry - 20.0 / 252.0).abs() < 1e-15);
    assert_eq!((q[1].spec.kind, q[1].spec.style), (OptionKind::Put, ea_pricing::ExerciseStyle::American));
}

#[test]
fn malformed_chains_are_input_errors() {
    for bad in [
        "quote_date,expiry_date\n2024-01-08,2024-01-12\n",
        "quote_date,expiry_date,strike,option_type,style,bid,ask,underlying,rate,ea_date\n2024-01-08,2024-01-12,100,X,E,1,2,100,0.02,2024-01-10\n",
        "quote_date,expiry_date,strike,option_type,style,bid,ask,underlying,rate,ea_date\n2024-01-08,2024-01-12,100,C,E,3,2,100,0.02,2024-01-10\n",
    ] {
        assert!(matches!(parse_chain(bad.as_bytes()), Err(PricingError::Input(_))));
    }
}

#[test]
fn chain_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.csv");
    let q = parse_chain(CHAIN.as_bytes()).unwrap();
    write_chain(&path, &q, NaiveDate::from_ymd_opt(2024, 1, 8).unwrap()).unwrap();
    assert_eq!(read_chain(&path).unwrap(), q);
}

fn chain(model: &BaseModel, jump: &EaJump, expiries: &[f64], strikes: &[f64], te: f64) -> Vec<QuoteRecord> {
    let f = MarketFrame::new(100.0, 0.02, 0.0, te);
    let mut out = Vec::new();
    for &t in expiries {
        for &k in strikes {
            let spec = if k >= 100.0 { OptionSpec::call(k, t) } else { OptionSpec::put(k, t) };
            let p = model_prices(model, jump, &[QuoteRecord::at_mid(spec, 0.0, &f)]).unwrap()[0];
            out.push(QuoteRecord::at_mid(spec, p, &f));
        }
    }
    out
}

fn bs_chain() -> Vec<QuoteRecord> {
    chain(&BaseModel::BlackScholes { sigma: 0.22 }, &EaJump::Gaussian { sigma_e: 0.045 }, &[WEEK, MONTH, QUARTER], &[90.0, 95.0, 100.0, 105.0, 110.0], 2.0 / 252.0)
}

#[test]
fn too_few_quotes() {
    let cfg = CalibrationConfig::default();
    assert!(matches!(
        calibrate(&[], ModelFamily::Bs, JumpFamily::Gaussian, &cfg),
        Err(PricingError::TooFewQuotes { needed: 2, got: 0 })
    ));
    let q = bs_chain();
    assert!(matches!(calibrate(&q[..3], ModelFamily::Kou, JumpFamily::De, &cfg), Err(PricingError::TooFewQuotes { .. })));
}

#[test]
fn extended_bs_round_trip() {
    let r = calibrate(&bs_chain(), ModelFamily::Bs, JumpFamily::Gaussian, &CalibrationConfig::default()).unwrap();
    assert_eq!(r.names, ["sigma", "sigma_e"]);
    assert!((r.params[0] - 0.22).abs() < 1e-6 && (r.params[1] - 0.045).abs() < 1e-6, "{:?}", r.params);
    assert!(r.objective < 1e-12);
    let sum: f64 = r.residuals.iter().map(|x| x * x).sum();
    assert!((sum - r.objective).abs() <= 1e-15 * (1.0 + sum));
}

#[test]
fn calibration_ignores_quote_order_and_is_deterministic() {
    let q = bs_chain();
    let cfg = CalibrationConfig { starts: 3, ..Default::default() };
    let a = calibrate(&q, ModelFamily::Bs, JumpFamily::Gaussian, &cfg).unwrap();
    let mut rev = q.clone();
    rev.reverse();
    let b = calibrate(&rev, ModelFamily::Bs, JumpFamily::Gaussian, &cfg).unwrap();
    assert!((a.objective - b.objective).abs() < 1e-12);
    assert_eq!(a.params, b.params);
    let mut back = b.residuals.clone();
    back.reverse();
    assert_eq!(a.residuals, back);
    let seq = CalibrationConfig { execution: Execution::Sequential, ..cfg };
    assert_eq!(calibrate(&q, ModelFamily::Bs, JumpFamily::Gaussian, &seq).unwrap(), a);
}

#[test]
fn bounds_must_match_the_family() {
    let cfg = CalibrationConfig { bounds: Some(vec![(0.1, 0.5)]), ..Default::default() };
    assert!(calibrate(&bs_chain(), ModelFamily::Bs, JumpFamily::Gaussian, &cfg).is_err());
}

#[test]
fn parameter_vectors_round_trip() {
    let (mf, jf, theta) = flatten(&table1_model(), &table1_jump());
    assert_eq!((mf, jf), (ModelFamily::Kou, JumpFamily::De));
    assert_eq!(param_names(mf, jf).len(), theta.len());
    assert_eq!(assemble(mf, jf, &theta).unwrap(), (table1_model(), table1_jump()));
    assert_eq!(default_bounds(mf, jf).len(), theta.len());
}

fn american_quote(k: f64, t: f64, vol: f64) -> QuoteRecord {
    let f = MarketFrame::new(100.0, 0.03, 0.0, 0.0);
    let spec = OptionSpec::american_put(k, t);
    let cfg = LatticeConfig { n_points: 4096, time_steps: 1000, ..Default::default() };
    let p = price_american(&spec, &f, &BaseModel::BlackScholes { sigma: vol }, &EaJump::none(), &cfg).unwrap().price;
    QuoteRecord::at_mid(spec, p, &f)
}

#[test]
fn de_americanization_recovers_the_european_price() {
    let quotes: Vec<QuoteRecord> = [(90.0, 0.25), (100.0, 0.25), (110.0, 0.5)].iter().map(|&(k, t)| american_quote(k, t, 0.3)).collect();
    let out = de_americanize(&quotes, Execution::default());
    assert!(out.dropped.is_empty());
    for (q, e) in quotes.iter().zip(&out.quotes) {
        let want = black_scholes(OptionKind::Put, 100.0, q.spec.strike, 0.03, q.spec.expiry, 0.3);
        assert!((e.mid - want).abs() < 2e-3, "K={}: {} vs {want}", q.spec.strike, e.mid);
        assert_eq!(e.spec.style, ea_pricing::ExerciseStyle::European);
    }
    // A second pass finds only European quotes.
    assert_eq!(de_americanize(&out.quotes, Execution::default()).quotes, out.quotes);
}

#[test]
fn european_quotes_pass_through_and_saturated_puts_drop() {
    let f = MarketFrame::new(100.0, 0.03, 0.0, 0.0);
    let euro = QuoteRecord::at_mid(OptionSpec::call(100.0, 0.25), 5.0, &f);
    let deep = QuoteRecord::at_mid(OptionSpec::american_put(160.0, 0.25), 60.0, &f);
    let out = de_americanize(&[euro, deep], Execution::Sequential);
    assert_eq!(out.quotes, vec![euro]);
    assert_eq!(out.dropped.len(), 1);
    assert_eq!(out.dropped[0].index, 1);
}

#[test]
fn bs_american_put_exceeds_european() {
    for k in [80.0, 100.0, 120.0] {
        let a = bs_american_put(100.0, k, 0.05, 0.5, 0.25).unwrap();
        assert!(a >= bs_ea::bs_price(OptionKind::Put, 100.0, k, 0.05, 0.5, 0.25) - 1e-6 && a >= k - 100.0);
    }
}

#[test]
fn risk_premium_from_simulated_history() {
    let sigma_e = 0.0463;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = Normal::new(-0.5 * sigma_e * sigma_e, sigma_e).unwrap();
    let returns: Vec<f64> = (0..75).map(|_| n.sample(&mut rng)).collect();
    let r = risk_premium_report(sigma_e, &returns).unwrap();
    let se = sigma_e / (2.0 * 74.0f64).sqrt();
    assert!((r.sigma_e_p - sigma_e).abs() < 2.0 * se, "{r:?}");
    assert!((r.ratio - 1.0).abs() < 2.0 * se / sigma_e);
    assert_eq!(r.n_returns, 75);
}

#[test]
fn risk_premium_edge_cases() {
    let flat = risk_premium_report(0.05, &[0.01; 10]).unwrap();
    assert!(flat.sigma_e_p < 1e-15 && flat.ratio < 1e-12, "{flat:?}");
    assert!(matches!(risk_premium_report(0.05, &[0.01; 5]), Err(PricingError::InsufficientHistory { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn extended_bs_recovers_generating_parameters(sigma in 0.1..0.6f64, sigma_e in 0.01..0.1f64) {
        let q = chain(&BaseModel::BlackScholes { sigma }, &EaJump::Gaussian { sigma_e }, &[WEEK, QUARTER], &[95.0, 100.0, 105.0], 1.0 / 252.0);
        let cfg = CalibrationConfig { starts: 2, ..Default::default() };
        let r = calibrate(&q, ModelFamily::Bs, JumpFamily::Gaussian, &cfg).unwrap();
        prop_assert!((r.params[0] - sigma).abs() < 1e-6 && (r.params[1] - sigma_e).abs() < 1e-6, "{:?}", r.params);
    }
}
