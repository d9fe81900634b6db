//! `eaprice`: pricing, surfaces, calibration and diagnostics for options
//! written on a stock with a scheduled earnings-announcement jump.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ea_pricing::american::{self, ImminentCoefficients, LatticeConfig};
use ea_pricing::calibrate::{self, CalibrationConfig, JumpFamily, ModelFamily};
use ea_pricing::iv_toolkit::{self, Engine, IvPoint, IvSurface};
use ea_pricing::mc_oracle::{mc_price_strip, McConfig};
use ea_pricing::transform_pricing::{price_fft, FftGrid};
use ea_pricing::{bs_ea, kou_analytic, ExerciseStyle, Execution, ModelParams, OptionKind, OptionSpec, PricingError};
use serde_json::json;

const TIME_HELP: &str = "Year fraction, or shorthand: 1w = 5/252, 1m = 21/252, 3m = 63/252, 1y = 1, Nd = N/252";

#[derive(Parser)]
#[command(name = "eaprice", version, about = "Option pricing around a scheduled earnings announcement")]
struct Cli {
    /// Run sequentially instead of on the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price one option; prints JSON.
    Price(PriceArgs),
    /// Write a model implied-volatility surface as CSV (t,K,T,iv,source).
    Surface(SurfaceArgs),
    /// Fit a model family to an option chain CSV; writes the result as JSON.
    Calibrate(CalibrateArgs),
    /// American put by lattice and/or quadratic approximation; prints JSON.
    American(AmericanArgs),
    /// ATM implied-volatility bounds next to the model ATM IV; prints JSON.
    Bounds(BoundsArgs),
    /// Wing slope targets, optionally checked against FFT wing IVs; prints JSON.
    Asymptotics(AsymptoticsArgs),
    /// Recover (sigma, sigma_e) from two implied vols, or compare jump vols; prints JSON.
    Estimate(EstimateArgs),
    /// Turn a surface CSV into per-slice plotting columns.
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct ParamsArg {
    /// Parameter JSON ({"model":…,"ea_jump":…,"frame":…}) given inline or as a file path.
    #[arg(long)]
    params: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Auto,
    Analytic,
    Fft,
    Mc,
}

#[derive(Args)]
struct PriceArgs {
    #[command(flatten)]
    params: ParamsArg,
    #[arg(long)]
    strike: f64,
    #[arg(long, help = TIME_HELP)]
    expiry: String,
    /// call or put.
    #[arg(long, default_value = "call")]
    kind: String,
    /// european or american (american puts use the lattice).
    #[arg(long, default_value = "european")]
    style: String,
    #[arg(long, value_enum, default_value = "auto")]
    engine: EngineArg,
    /// Monte Carlo paths.
    #[arg(long, default_value_t = 1_000_000)]
    paths: usize,
    /// Monte Carlo seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    params: ParamsArg,
    /// Strike list `80,90,100` or range `lo:hi:step`.
    #[arg(long)]
    strikes: String,
    /// Comma-separated expiries; each accepts the time shorthand.
    #[arg(long)]
    expiries: String,
    /// Comma-separated valuation times.
    #[arg(long, default_value = "0")]
    times: String,
    #[arg(long, value_enum, default_value = "auto")]
    engine: EngineArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Chain CSV with columns quote_date, expiry_date, strike, option_type, style, bid, ask, underlying, rate, ea_date.
    #[arg(long)]
    chain: PathBuf,
    /// bs, kou or heston.
    #[arg(long)]
    family: String,
    /// gaussian or de.
    #[arg(long, default_value = "gaussian")]
    jump: String,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Offset into the start sequence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AmericanMethod {
    Lattice,
    Ba,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImminentArg {
    Reuse,
    Resolve,
}

#[derive(Args)]
struct AmericanArgs {
    #[command(flatten)]
    params: ParamsArg,
    #[arg(long)]
    strike: f64,
    #[arg(long, help = TIME_HELP)]
    expiry: String,
    #[arg(long, value_enum, default_value = "both")]
    method: AmericanMethod,
    /// Coefficients of the quadratic approximation when the announcement is imminent.
    #[arg(long, value_enum, default_value = "resolve")]
    imminent: ImminentArg,
    /// Log-price nodes of the lattice.
    #[arg(long, default_value_t = 4096)]
    n_points: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Write the exercise boundary CSV (time,boundary) here.
    #[arg(long)]
    boundary_out: Option<PathBuf>,
    /// Write lattice value slices CSV (time,spot,value) here, keeping every k-th step.
    #[arg(long)]
    lattice_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    lattice_stride: usize,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    params: ParamsArg,
    /// Valuation time; defaults to the frame's.
    #[arg(long, help = TIME_HELP)]
    t: Option<String>,
    #[arg(long, help = TIME_HELP)]
    expiry: String,
}

#[derive(Args)]
struct AsymptoticsArgs {
    #[command(flatten)]
    params: ParamsArg,
    #[arg(long, help = TIME_HELP)]
    expiry: String,
    /// Largest |log(K/S)| for the wing check; omitted skips the check.
    #[arg(long)]
    wing: Option<f64>,
    /// Points per wing.
    #[arg(long, default_value_t = 20)]
    points: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateMethod {
    /// Two expiries seen at one date: needs --t, --t1, --t2 (expiries).
    TermStructure,
    /// One expiry seen at two dates: needs --t1, --t2 (dates), --expiry.
    TimeSeries,
    /// Historical against implied jump vol: needs --sigma-e, --returns.
    RiskPremium,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, value_enum)]
    method: EstimateMethod,
    #[arg(long)]
    iv1: Option<f64>,
    #[arg(long)]
    iv2: Option<f64>,
    #[arg(long, help = TIME_HELP)]
    t: Option<String>,
    #[arg(long, help = TIME_HELP)]
    t1: Option<String>,
    #[arg(long, help = TIME_HELP)]
    t2: Option<String>,
    #[arg(long, help = TIME_HELP)]
    expiry: Option<String>,
    /// Implied announcement-jump vol.
    #[arg(long)]
    sigma_e: Option<f64>,
    /// File of announcement-day log returns, one per line.
    #[arg(long)]
    returns: Option<PathBuf>,
}

#[derive(Args)]
struct PlotDataArgs {
    /// Surface CSV written by `surface`.
    #[arg(long)]
    surface: PathBuf,
    /// Spot used for log-moneyness.
    #[arg(long, default_value_t = 100.0)]
    spot: f64,
    /// Output CSV (t,T,K,log_moneyness,iv,total_variance).
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit code: 2 for bad input, 3 for numerical trouble.
#[derive(Debug)]
enum CliError {
    Input(String),
    Numeric(String),
}

impl From<PricingError> for CliError {
    fn from(e: PricingError) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn input<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{what}: {e}"))
}

/// Parses a year fraction or the `1w`/`1m`/`3m`/`1y`/`Nd` shorthand.
fn parse_time(s: &str) -> CliResult<f64> {
    let s = s.trim().to_ascii_lowercase();
    let days = |n: &str, per: f64| -> CliResult<f64> {
        let n: f64 = n.parse().map_err(input(&format!("time `{s}`")))?;
        Ok(n * per / 252.0)
    };
    let v = if let Some(n) = s.strip_suffix('w') {
        days(n, 5.0)?
    } else if let Some(n) = s.strip_suffix('m') {
        days(n, 21.0)?
    } else if let Some(n) = s.strip_suffix('y') {
        days(n, 252.0)?
    } else if let Some(n) = s.strip_suffix('d') {
        days(n, 1.0)?
    } else {
        s.parse().map_err(input(&format!("time `{s}`")))?
    };
    if !v.is_finite() {
        return Err(CliError::Input(format!("time `{s}` is not finite")));
    }
    Ok(v)
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_time).collect()
}

/// `a,b,c` or `lo:hi:step`.
fn parse_strikes(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let v = if parts.len() == 3 {
        let p: Vec<f64> = parts
            .iter()
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(input("strike range"))?;
        let (lo, hi, step) = (p[0], p[1], p[2]);
        if !(step > 0.0 && hi >= lo) {
            return Err(CliError::Input("strike range needs lo <= hi and step > 0".into()));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| lo + step * i as f64).collect()
    } else {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(input("strike list"))?
    };
    if v.is_empty() {
        return Err(CliError::Input("strike list is empty".into()));
    }
    Ok(v)
}

fn load_params(arg: &ParamsArg) -> CliResult<ModelParams> {
    let text = if arg.params.trim_start().starts_with('{') {
        arg.params.clone()
    } else {
        std::fs::read_to_string(&arg.params).map_err(input(&format!("reading {}", arg.params)))?
    };
    let p = ModelParams::from_json(&text)?;
    p.validate()?;
    Ok(p)
}

fn exec(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn print_json(v: &serde_json::Value) {
    // A closed pipe (e.g. `| head`) is not an error worth a panic.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("JSON value serializes"));
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(input(&format!("creating {}", path.display())))
}

fn cmd_price(a: &PriceArgs, execution: Execution) -> CliResult<()> {
    let p = load_params(&a.params)?;
    let kind: OptionKind = a.kind.parse()?;
    let style: ExerciseStyle = a.style.parse()?;
    let spec = OptionSpec { strike: a.strike, expiry: parse_time(&a.expiry)?, kind, style };
    spec.validate()?;
    spec.tau(&p.frame)?;
    if style == ExerciseStyle::American {
        let r = american::price_american(&spec, &p.frame, &p.model, &p.ea_jump, &LatticeConfig::default())?;
        print_json(&json!({"price": r.price, "engine": "lattice", "grid_error": r.grid_error}));
        return Ok(());
    }
    let out = match a.engine {
        EngineArg::Mc => {
            let cfg = McConfig { execution, ..McConfig::new(a.paths, a.seed) };
            let r = mc_price_strip(&[spec], &p.frame, &p.model, &p.ea_jump, &cfg)?[0];
            json!({"price": r.price, "engine": "mc", "std_error": r.std_error, "paths": a.paths, "seed": a.seed})
        }
        EngineArg::Fft => {
            let r = price_fft(&spec, &p.frame, &p.model, &p.ea_jump, &FftGrid::default())?;
            json!({"price": r.price, "engine": "fft", "error_bound": r.truncation_estimate * p.frame.spot,
                   "gamma": r.gamma, "n_points": r.n_points})
        }
        EngineArg::Analytic | EngineArg::Auto => {
            let analytic = kou_analytic::price_european(&spec, &p.frame, &p.model, &p.ea_jump);
            match analytic {
                Ok(r) => json!({"price": r.price, "engine": "analytic", "error_bound": r.error_bound,
                                "delta": r.delta, "order": r.order}),
                Err(e) if matches!(a.engine, EngineArg::Analytic) => return Err(e.into()),
                Err(_) => {
                    let r = price_fft(&spec, &p.frame, &p.model, &p.ea_jump, &FftGrid::default())?;
                    json!({"price": r.price, "engine": "fft", "error_bound": r.truncation_estimate * p.frame.spot})
                }
            }
        }
    };
    print_json(&out);
    Ok(())
}

fn engine_of(e: EngineArg) -> CliResult<Engine> {
    match e {
        EngineArg::Auto => Ok(Engine::Auto),
        EngineArg::Analytic => Ok(Engine::Analytic),
        EngineArg::Fft => Ok(Engine::Fft),
        EngineArg::Mc => Err(CliError::Input("surfaces support the analytic, fft and auto engines".into())),
    }
}

fn cmd_surface(a: &SurfaceArgs, execution: Execution) -> CliResult<()> {
    let p = load_params(&a.params)?;
    let strikes = parse_strikes(&a.strikes)?;
    let expiries = parse_list(&a.expiries)?;
    let times = parse_list(&a.times)?;
    if expiries.is_empty() || times.is_empty() {
        return Err(CliError::Input("need at least one expiry and one time".into()));
    }
    let surface = iv_toolkit::model_surface(
        &p.frame,
        &p.model,
        &p.ea_jump,
        &times,
        &expiries,
        &strikes,
        engine_of(a.engine)?,
        execution,
    )?;
    surface.write_csv(create(&a.out)?)?;
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs, execution: Execution) -> CliResult<()> {
    let family: ModelFamily = a.family.parse()?;
    let jump: JumpFamily = a.jump.parse()?;
    let quotes = calibrate::read_chain(&a.chain)?;
    let pre = calibrate::de_americanize(&quotes, execution);
    for d in &pre.dropped {
        eprintln!("dropped quote {}: {}", d.index, d.reason);
    }
    let config = CalibrationConfig {
        starts: a.starts,
        max_iter: a.max_iter,
        seed: a.seed,
        execution,
        ..Default::default()
    };
    let result = calibrate::calibrate(&pre.quotes, family, jump, &config)?;
    let doc = json!({"result": result, "dropped": pre.dropped});
    let mut w = create(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Input(e.to_string()))?;
    w.flush().map_err(input("writing result"))?;
    Ok(())
}

fn cmd_american(a: &AmericanArgs) -> CliResult<()> {
    let p = load_params(&a.params)?;
    let spec = OptionSpec::american_put(a.strike, parse_time(&a.expiry)?);
    let mut out = serde_json::Map::new();
    if matches!(a.method, AmericanMethod::Lattice | AmericanMethod::Both) {
        let stride = a.lattice_out.as_ref().map(|_| a.lattice_stride.max(1));
        let cfg = LatticeConfig { n_points: a.n_points, time_steps: a.steps, slice_stride: stride, ..Default::default() };
        let r = american::price_american(&spec, &p.frame, &p.model, &p.ea_jump, &cfg)?;
        let european = american::price_american(
            &spec,
            &p.frame,
            &p.model,
            &p.ea_jump,
            &LatticeConfig { projection: false, slice_stride: None, ..cfg },
        )?;
        if let Some(path) = &a.boundary_out {
            american::exercise_boundary(&r.lattice).write_csv(path)?;
        }
        if let Some(path) = &a.lattice_out {
            r.lattice.write_csv(path)?;
        }
        out.insert("lattice".into(), json!({"price": r.price, "grid_error": r.grid_error}));
        out.insert("european".into(), json!(european.price));
    }
    if matches!(a.method, AmericanMethod::Ba | AmericanMethod::Both) {
        let coeffs = match a.imminent {
            ImminentArg::Reuse => ImminentCoefficients::Reuse,
            ImminentArg::Resolve => ImminentCoefficients::Resolve,
        };
        let r = american::ba_price_with(&spec, &p.frame, &p.model, &p.ea_jump, coeffs)?;
        out.insert("ba".into(), serde_json::to_value(r).expect("result serializes"));
    }
    print_json(&serde_json::Value::Object(out));
    Ok(())
}

fn cmd_bounds(a: &BoundsArgs) -> CliResult<()> {
    let p = load_params(&a.params)?;
    let t = match &a.t {
        Some(s) => parse_time(s)?,
        None => p.frame.valuation_time,
    };
    let expiry = parse_time(&a.expiry)?;
    if t >= expiry {
        return Err(PricingError::ExpiredOption { valuation: t, expiry }.into());
    }
    let frame = iv_toolkit::frame_at(&p.frame, t);
    let (stats, _) = iv_toolkit::mixture_stats(&p.model, &p.ea_jump, &frame, t, expiry);
    let lower = iv_toolkit::bound_lower(&stats, t, expiry);
    let upper = iv_toolkit::bound_upper_atm(&p.model, &p.ea_jump, &frame, t, expiry)?;
    let fwd = frame.spot * (frame.rate * (expiry - t)).exp();
    let spec = OptionSpec::call(fwd, expiry);
    let price = iv_toolkit::price_slice(&[spec], &frame, &p.model, &p.ea_jump, Engine::Auto, &FftGrid::default())?[0];
    let atm = iv_toolkit::implied_vol(price, &spec, &frame)?;
    print_json(&json!({
        "t": t, "expiry": expiry, "atm_forward_strike": fwd, "atm_iv": atm,
        "lower": lower, "upper": upper.value, "advisory": upper.advisory,
        "within": lower <= atm + 1e-9 && atm <= upper.value + 1e-9,
    }));
    Ok(())
}

fn cmd_asymptotics(a: &AsymptoticsArgs) -> CliResult<()> {
    let p = load_params(&a.params)?;
    let expiry = parse_time(&a.expiry)?;
    let t = p.frame.valuation_time;
    let slopes = iv_toolkit::asymptotic_slopes(&p.model, &p.ea_jump, t, expiry)?;
    let mut out = json!({"slopes": slopes});
    if let Some(w) = a.wing {
        if !(w > 0.0) || a.points < 10 {
            return Err(CliError::Input("--wing must be positive and --points at least 10".into()));
        }
        let n = a.points;
        let xs: Vec<f64> = (0..n)
            .flat_map(|i| {
                let x = w * (0.5 + 0.5 * i as f64 / (n - 1) as f64);
                [-x, x]
            })
            .collect();
        let pts = iv_toolkit::wing_points(&p.frame, &p.model, &p.ea_jump, expiry, &xs)?;
        let report = iv_toolkit::asymptote_check(&pts, p.frame.spot, &slopes)?;
        out["wing"] = json!(report);
    }
    print_json(&out);
    Ok(())
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Input(format!("missing --{flag}")))
}

fn need_time(v: &Option<String>, flag: &str) -> CliResult<f64> {
    parse_time(v.as_deref().ok_or_else(|| CliError::Input(format!("missing --{flag}")))?)
}

fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    let out = match a.method {
        EstimateMethod::TermStructure => {
            let e = bs_ea::estimate_term_structure(
                need(a.iv1, "iv1")?,
                need(a.iv2, "iv2")?,
                need_time(&a.t, "t")?,
                need_time(&a.t1, "t1")?,
                need_time(&a.t2, "t2")?,
            )?;
            json!({"sigma": e.sigma_ts, "sigma_e": e.sigma_e_ts})
        }
        EstimateMethod::TimeSeries => {
            let e = bs_ea::estimate_time_series(
                need(a.iv1, "iv1")?,
                need(a.iv2, "iv2")?,
                need_time(&a.t1, "t1")?,
                need_time(&a.t2, "t2")?,
                need_time(&a.expiry, "expiry")?,
            )?;
            json!({"sigma": e.sigma_ts, "sigma_e": e.sigma_e_ts})
        }
        EstimateMethod::RiskPremium => {
            let path = a.returns.as_ref().ok_or_else(|| CliError::Input("missing --returns".into()))?;
            let text = std::fs::read_to_string(path).map_err(input(&format!("reading {}", path.display())))?;
            let returns: Vec<f64> = text
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(input("returns"))?;
            let r = calibrate::risk_premium_report(need(a.sigma_e, "sigma-e")?, &returns)?;
            json!(r)
        }
    };
    print_json(&out);
    Ok(())
}

fn cmd_plot_data(a: &PlotDataArgs) -> CliResult<()> {
    if !(a.spot > 0.0) {
        return Err(CliError::Input("--spot must be positive".into()));
    }
    let file = File::open(&a.surface).map_err(input(&format!("opening {}", a.surface.display())))?;
    let surface = IvSurface::read_csv(file)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["t", "T", "K", "log_moneyness", "iv", "total_variance"]).map_err(input("writing"))?;
    for IvPoint { t, strike, expiry, iv, .. } in &surface.points {
        let row = [*t, *expiry, *strike, (strike / a.spot).ln(), *iv, iv * iv * (expiry - t)];
        w.write_record(row.iter().map(|v| v.to_string())).map_err(input("writing"))?;
    }
    w.flush().map_err(input("writing"))?;
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    let execution = exec(cli);
    match &cli.command {
        Command::Price(a) => cmd_price(a, execution),
        Command::Surface(a) => cmd_surface(a, execution),
        Command::Calibrate(a) => cmd_calibrate(a, execution),
        Command::American(a) => cmd_american(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Asymptotics(a) => cmd_asymptotics(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::PlotData(a) => cmd_plot_data(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("numeric failure: {m}");
            ExitCode::from(3)
        }
    }
}
