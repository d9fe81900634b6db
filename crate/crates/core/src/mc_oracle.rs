//! Monte Carlo reference sampler and pricer.
//!
//! Paths are generated in fixed-size batches. Batch `b` draws from a ChaCha8
//! stream selected by `b`, so results do not depend on scheduling.

use crate::error::Result;
use crate::model_core::{kou_m, validate, BaseModel, EaJump, MarketFrame, OptionSpec};
use crate::par::{self, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

/// Paths per batch (an even number, so antithetic pairs never straddle batches).
pub const BATCH: usize = 16_384;

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Euler steps for Heston paths.
    pub heston_steps: usize,
    pub execution: Execution,
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        McConfig { n_paths, seed, heston_steps: 500, execution: Execution::default() }
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Discounted-payoff price with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McPrice {
    pub price: f64,
    pub std_error: f64,
}

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

struct Sampler {
    model: BaseModel,
    jump: Option<EaJump>,
    tau: f64,
    rate: f64,
    steps: usize,
    poisson: Option<Poisson<f64>>,
}

impl Sampler {
    fn new(model: &BaseModel, jump: &EaJump, frame: &MarketFrame, expiry: f64, steps: usize) -> Result<Self> {
        validate(model, jump, frame)?;
        let tau = expiry - frame.valuation_time;
        let poisson = match *model {
            BaseModel::Kou { kappa, .. } if kappa * tau > 0.0 => Some(Poisson::new(kappa * tau).expect("positive mean")),
            _ => None,
        };
        Ok(Sampler {
            model: *model,
            jump: frame.jump_active(expiry).then_some(*jump),
            tau,
            rate: frame.rate,
            steps: steps.max(1),
            poisson,
        })
    }

    fn ea_jump<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.jump {
            None => 0.0,
            Some(EaJump::Gaussian { sigma_e }) => {
                let z: f64 = StandardNormal.sample(rng);
                -0.5 * sigma_e * sigma_e + sigma_e * z
            }
            Some(j @ EaJump::De { u, eta1, eta2 }) => {
                let e: f64 = Exp1.sample(rng);
                let raw = if rng.random::<f64>() < u { e / eta1 } else { -e / eta2 };
                raw - j.compensator()
            }
        }
    }

    fn compound_jumps<R: Rng>(&self, rng: &mut R, p: f64, lambda1: f64, lambda2: f64) -> f64 {
        let Some(poisson) = &self.poisson else {
            return 0.0;
        };
        let n = poisson.sample(rng) as u64;
        let mut sum = 0.0;
        for _ in 0..n {
            let e: f64 = Exp1.sample(rng);
            sum += if rng.random::<f64>() < p { e / lambda1 } else { -e / lambda2 };
        }
        sum
    }

    /// Antithetic pair of terminal log returns; the two share jumps and differ
    /// in the sign of every Brownian increment.
    fn pair<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let tau = self.tau;
        match self.model {
            BaseModel::BlackScholes { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                let c = (self.rate - 0.5 * sigma * sigma) * tau + self.ea_jump(rng);
                let d = sigma * tau.sqrt() * z;
                [c + d, c - d]
            }
            BaseModel::Kou { sigma, kappa, p, lambda1, lambda2 } => {
                let z: f64 = StandardNormal.sample(rng);
                let m = kou_m(p, lambda1, lambda2);
                let c = (self.rate - 0.5 * sigma * sigma - m * kappa) * tau
                    + self.compound_jumps(rng, p, lambda1, lambda2)
                    + self.ea_jump(rng);
                let d = sigma * tau.sqrt() * z;
                [c + d, c - d]
            }
            BaseModel::Heston { nu, vartheta, zeta, rho, sigma0_sq } => {
                let dt = tau / self.steps as f64;
                let sq = dt.sqrt();
                let rho_c = (1.0 - rho * rho).max(0.0).sqrt();
                let mut x = [0.0f64; 2];
                let mut v = [sigma0_sq; 2];
                for _ in 0..self.steps {
                    let z1: f64 = StandardNormal.sample(rng);
                    let z2: f64 = StandardNormal.sample(rng);
                    let zv = rho * z1 + rho_c * z2;
                    for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                        let vp = v[k].max(0.0);
                        let root = vp.sqrt();
                        x[k] += (self.rate - 0.5 * vp) * dt + root * sq * sign * z1;
                        v[k] += nu * (vartheta - vp) * dt + zeta * root * sq * sign * zv;
                    }
                }
                let e = self.ea_jump(rng);
                [x[0] + e, x[1] + e]
            }
        }
    }
}

/// Terminal log returns `log(S_T/S_t)`, in path order. Consecutive samples
/// form antithetic pairs.
pub fn simulate_terminal(
    model: &BaseModel,
    jump: &EaJump,
    frame: &MarketFrame,
    expiry: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    simulate_terminal_with(model, jump, frame, expiry, &McConfig::new(n_paths, seed))
}

/// Independent terminal log returns (no antithetic pairing).
pub fn simulate_terminal_iid(
    model: &BaseModel,
    jump: &EaJump,
    frame: &MarketFrame,
    expiry: f64,
    config: &McConfig,
) -> Result<Vec<f64>> {
    let sampler = Sampler::new(model, jump, frame, expiry, config.heston_steps)?;
    let n_batches = config.n_paths.div_ceil(BATCH);
    let batches = par::map_range(config.execution, n_batches, |b| {
        let mut rng = batch_rng(config.seed, b);
        let len = BATCH.min(config.n_paths - b * BATCH);
        (0..len).map(|_| sampler.pair(&mut rng)[0]).collect::<Vec<_>>()
    });
    Ok(batches.concat())
}

/// [`simulate_terminal`] with explicit settings.
pub fn simulate_terminal_with(
    model: &BaseModel,
    jump: &EaJump,
    frame: &MarketFrame,
    expiry: f64,
    config: &McConfig,
) -> Result<Vec<f64>> {
    let sampler = Sampler::new(model, jump, frame, expiry, config.heston_steps)?;
    let n_batches = config.n_paths.div_ceil(BATCH);
    let batches = par::map_range(config.execution, n_batches, |b| {
        let mut rng = batch_rng(config.seed, b);
        let len = BATCH.min(config.n_paths - b * BATCH);
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let pr = sampler.pair(&mut rng);
            out.push(pr[0]);
            if out.len() < len {
                out.push(pr[1]);
            }
        }
        out
    });
    Ok(batches.concat())
}

/// Estimates `E[f_j(X)]` for `j = 0..n_out` from antithetic pairs, where `f`
/// writes all outputs for one sample into its slice.
pub fn estimate<F>(
    model: &BaseModel,
    jump: &EaJump,
    frame: &MarketFrame,
    expiry: f64,
    config: &McConfig,
    n_out: usize,
    f: F,
) -> Result<Vec<McEstimate>>
where
    F: Fn(f64, &mut [f64]) + Sync + Send,
{
    let sampler = Sampler::new(model, jump, frame, expiry, config.heston_steps)?;
    let n_pairs = config.n_paths.div_ceil(2).max(1);
    let pairs_per_batch = BATCH / 2;
    let n_batches = n_pairs.div_ceil(pairs_per_batch);
    let partial = par::map_range(config.execution, n_batches, |b| {
        let mut rng = batch_rng(config.seed, b);
        let len = pairs_per_batch.min(n_pairs - b * pairs_per_batch);
        // Welford accumulation per batch, merged below with Chan's update.
        let mut mean = vec![0.0; n_out];
        let mut m2 = vec![0.0; n_out];
        let mut a = vec![0.0; n_out];
        let mut c = vec![0.0; n_out];
        for i in 0..len {
            let [x1, x2] = sampler.pair(&mut rng);
            f(x1, &mut a);
            f(x2, &mut c);
            for j in 0..n_out {
                let y = 0.5 * (a[j] + c[j]);
                let d = y - mean[j];
                mean[j] += d / (i + 1) as f64;
                m2[j] += d * (y - mean[j]);
            }
        }
        (len as f64, mean, m2)
    });
    let mut count = 0.0;
    let mut mean = vec![0.0; n_out];
    let mut m2 = vec![0.0; n_out];
    for (nb, mb, qb) in partial {
        let total = count + nb;
        for j in 0..n_out {
            let d = mb[j] - mean[j];
            mean[j] += d * nb / total;
            m2[j] += qb[j] + d * d * count * nb / total;
        }
        count = total;
    }
    Ok((0..n_out)
        .map(|j| {
            let var = if n_pairs > 1 { m2[j] / (count - 1.0) } else { 0.0 };
            McEstimate { mean: mean[j], std_error: (var / count).sqrt() }
        })
        .collect())
}

/// European price by discounted payoff averaging.
pub fn mc_price(
    spec: &OptionSpec,
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    n_paths: usize,
    seed: u64,
) -> Result<McPrice> {
    Ok(mc_price_strip(std::slice::from_ref(spec), frame, model, jump, &McConfig::new(n_paths, seed))?[0])
}

/// Prices for several contracts of one expiry from the same paths.
pub fn mc_price_strip(
    specs: &[OptionSpec],
    frame: &MarketFrame,
    model: &BaseModel,
    jump: &EaJump,
    config: &McConfig,
) -> Result<Vec<McPrice>> {
    let Some(first) = specs.first() else {
        return Ok(Vec::new());
    };
    for s in specs {
        s.validate()?;
        s.tau(frame)?;
        if s.expiry != first.expiry {
            return Err(crate::error::PricingError::InvalidParameter {
                name: "expiry",
                reason: "a strip must share one expiry".into(),
            });
        }
    }
    let tau = first.tau(frame)?;
    let disc = (-frame.rate * tau).exp();
    let spot = frame.spot;
    let est = estimate(model, jump, frame, first.expiry, config, specs.len(), |x, out| {
        let st = spot * x.exp();
        for (o, s) in out.iter_mut().zip(specs) {
            *o = s.intrinsic(st);
        }
    })?;
    Ok(est
        .into_iter()
        .map(|e| McPrice { price: disc * e.mean, std_error: disc * e.std_error })
        .collect())
}
