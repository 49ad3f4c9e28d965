//! Convergence sweeps against model oracles and the Erlang limit-law diagnostic.

use crate::error::{domain, Error, Result};
use crate::estimators::{
    entropy_estimate_with, kl_estimate_with, pairwise_sum, EntropyOrders, EstimateOptions,
    OrderSpec,
};
use crate::models::{kl_closed_form, kl_numeric_oracle, DensityModel, NormalSource, SeededStream};
use crate::special::{erlang_cdf, unit_ball_volume};
use rayon::prelude::*;
use serde::Serialize;

/// Offset between the stream ids of consecutive sizes in a sweep.
pub const SIZE_STREAM_STRIDE: u64 = 1_000_000;
/// Stream id used by the numeric KL oracle.
const ORACLE_STREAM: u64 = u64::MAX;

/// Substream of replicate `trial` at position `size_index` of a sweep.
pub fn replicate_stream(master_seed: u64, size_index: usize, trial: usize) -> SeededStream {
    SeededStream::new(
        master_seed,
        trial as u64 + SIZE_STREAM_STRIDE * size_index as u64,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// D(P‖Q) from X ~ p, Y ~ q.
    Divergence,
    /// H(P) from X ~ p; `model_q` and `m` are ignored.
    Entropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model_p: DensityModel,
    pub model_q: DensityModel,
    pub target: Target,
    /// (n, m) pairs, strictly ascending in n.
    pub sizes: Vec<(usize, usize)>,
    pub k: usize,
    pub l: usize,
    pub trials: usize,
    pub master_seed: u64,
    /// Draws for the Monte-Carlo KL oracle when no closed form exists.
    pub oracle_budget: Option<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(domain("at least one sample size is required"));
        }
        if self.sizes.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(domain("sizes must be strictly ascending in n"));
        }
        if self.trials == 0 {
            return Err(domain("trials must be >= 1"));
        }
        if self.k == 0 || self.l == 0 {
            return Err(domain("orders must be >= 1"));
        }
        if self.target == Target::Divergence && self.model_p.dim() != self.model_q.dim() {
            return Err(Error::DimensionMismatch(
                self.model_p.dim(),
                self.model_q.dim(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub m: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Population variance (divisor = number of usable trials).
    pub variance: f64,
    pub mse: f64,
    pub trials: usize,
    /// Standard error of the mse as a mean of squared errors.
    pub mse_std_error: f64,
    /// Replicates dropped because a neighbor distance was zero.
    pub degenerate_trials: usize,
}

impl ConvergenceRow {
    /// Summarises one size from its per-trial estimates (`None` = degenerate).
    pub fn from_estimates(n: usize, m: usize, oracle: f64, estimates: &[Option<f64>]) -> Self {
        let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
        let t = ok.len() as f64;
        let mean = pairwise_sum(&ok) / t;
        let centered: Vec<f64> = ok.iter().map(|v| (v - mean) * (v - mean)).collect();
        let variance = pairwise_sum(&centered) / t;
        let bias = mean - oracle;
        let sq_err: Vec<f64> = ok.iter().map(|v| (v - oracle) * (v - oracle)).collect();
        let mse = pairwise_sum(&sq_err) / t;
        let mse_std_error = if ok.len() > 1 {
            let dev: Vec<f64> = sq_err.iter().map(|s| (s - mse) * (s - mse)).collect();
            (pairwise_sum(&dev) / (t - 1.0) / t).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            m,
            mean_estimate: mean,
            bias,
            variance,
            mse,
            trials: ok.len(),
            mse_std_error,
            degenerate_trials: estimates.len() - ok.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceResult {
    pub oracle: f64,
    pub oracle_source: String,
    pub rows: Vec<ConvergenceRow>,
    /// Per size, per trial estimate; `None` marks a degenerate replicate.
    #[serde(skip)]
    pub estimates: Vec<Vec<Option<f64>>>,
}

impl ConvergenceResult {
    pub fn low_trials(&self) -> bool {
        self.rows.iter().any(|r| r.trials < 2)
    }
}

fn oracle_value(cfg: &ExperimentConfig) -> Result<(f64, String)> {
    match cfg.target {
        Target::Entropy => Ok((
            cfg.model_p.entropy_closed_form(),
            "closed-form entropy".into(),
        )),
        Target::Divergence => {
            if cfg.model_p.is_gaussian() && cfg.model_q.is_gaussian() {
                return Ok((
                    kl_closed_form(&cfg.model_p, &cfg.model_q)?,
                    "closed-form gaussian kl".into(),
                ));
            }
            let budget = cfg.oracle_budget.ok_or_else(|| {
                Error::UnsupportedPair(
                    "no closed-form KL for this pair; supply an oracle budget".into(),
                )
            })?;
            let est = kl_numeric_oracle(
                &cfg.model_p,
                &cfg.model_q,
                budget,
                SeededStream::new(cfg.master_seed, ORACLE_STREAM),
            )?;
            Ok((
                est.value,
                format!("monte-carlo kl ({budget} draws, se {})", est.std_error),
            ))
        }
    }
}

/// One replicate: draws X (then Y) from the replicate's stream and estimates.
/// Degenerate samples yield `Ok(None)`.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    n: usize,
    m: usize,
    stream: SeededStream,
) -> Result<Option<f64>> {
    let mut src = NormalSource::new(stream.rng());
    let x = cfg.model_p.sample_from(n, &mut src)?;
    let opts = EstimateOptions {
        keep_terms: false,
        ..Default::default()
    };
    let result = match cfg.target {
        Target::Divergence => {
            let y = cfg.model_q.sample_from(m, &mut src)?;
            kl_estimate_with(&x, &y, &OrderSpec::uniform(cfg.k, cfg.l), opts)
        }
        Target::Entropy => entropy_estimate_with(&x, &EntropyOrders::Uniform { k: cfg.k }, opts),
    };
    match result {
        Ok(rep) => Ok(Some(rep.value)),
        Err(Error::DegenerateSample { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs `trials` replicates per size and summarises them against the oracle.
pub fn convergence_sweep(cfg: &ExperimentConfig) -> Result<ConvergenceResult> {
    cfg.validate()?;
    let (oracle, oracle_source) = oracle_value(cfg)?;
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    let mut estimates = Vec::with_capacity(cfg.sizes.len());
    for (size_index, &(n, m)) in cfg.sizes.iter().enumerate() {
        let ests = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                run_replicate(
                    cfg,
                    n,
                    m,
                    replicate_stream(cfg.master_seed, size_index, trial),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ConvergenceRow::from_estimates(n, m, oracle, &ests));
        estimates.push(ests);
    }
    Ok(ConvergenceResult {
        oracle,
        oracle_source,
        rows,
        estimates,
    })
}

/// Kolmogorov–Smirnov statistic sup |F_n − F| of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0_f64, |acc, (i, &x)| {
        let f = cdf(x);
        acc.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

const KOLMOGOROV_TERMS: u32 = 100;

/// Asymptotic p-value P(K > √n·D) of the Kolmogorov distribution.
pub fn kolmogorov_p_value(n: usize, statistic: f64) -> f64 {
    let lambda = (n as f64).sqrt() * statistic;
    // The alternating series is unreliable this close to zero, where the p-value is 1.
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=KOLMOGOROV_TERMS {
        let jf = f64::from(j);
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitLawReport {
    pub statistic: f64,
    pub p_value: f64,
    pub replicates: usize,
    /// Erlang rate V_d·q(x).
    pub rate: f64,
    /// Erlang shape l.
    pub shape: usize,
    pub m: usize,
    pub x: Vec<f64>,
    pub seed: u64,
}

/// Draws `replicates` copies of ξ = m·‖x − Y_(l)(x, 𝕐ₘ)‖^d with 𝕐ₘ ~ q and
/// compares them with the Erlang law of rate V_d·q(x) and shape l.
pub fn diagnose_limit_law(
    q: &DensityModel,
    x: &[f64],
    l: usize,
    m: usize,
    replicates: usize,
    seed: u64,
) -> Result<LimitLawReport> {
    if l == 0 || replicates == 0 {
        return Err(domain("order and replicate count must be >= 1"));
    }
    if m < l {
        return Err(Error::Capacity {
            needed: l,
            available: m,
        });
    }
    let density = q.pdf(x)?;
    if density <= 0.0 {
        return Err(domain("q(x) = 0: the limit law is degenerate"));
    }
    let d = q.dim();
    let rate = unit_ball_volume(d)? * density;
    let shape = u32::try_from(l).map_err(|_| domain("order too large"))?;
    let xis: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut src = NormalSource::new(SeededStream::new(seed, r as u64).rng());
            let mut point = vec![0.0; d];
            let mut best: Vec<f64> = Vec::with_capacity(l + 1);
            for _ in 0..m {
                q.draw_into(&mut src, &mut point);
                let d2 = crate::knn::sq_dist(x, &point);
                if best.len() == l {
                    if d2 >= best[l - 1] {
                        continue;
                    }
                    best.pop();
                }
                let pos = best.partition_point(|&b| b <= d2);
                best.insert(pos, d2);
            }
            m as f64 * best[l - 1].sqrt().powi(d as i32)
        })
        .collect();
    let statistic = ks_statistic(&xis, |u| erlang_cdf(rate, shape, u));
    Ok(LimitLawReport {
        statistic,
        p_value: kolmogorov_p_value(replicates, statistic),
        replicates,
        rate,
        shape: l,
        m,
        x: x.to_vec(),
        seed,
    })
}
