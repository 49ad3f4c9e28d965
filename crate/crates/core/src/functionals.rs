//! Monte-Carlo evaluation of the integral regularity functionals.
//!
//! - `I_f(x, r)`: mean of `f` over the ball `B(x, r)`.
//! - `M_f(x, R)`, `m_f(x, R)`: sup / inf of `I_f(x, r)` over `r ∈ (0, R]`.
//! - `K_{p,q}(ν, N, t) = ∬_{‖x−y‖>t} G_N(|log‖x−y‖|^ν) p(x) q(y)`.
//! - `Q_{p,q}(ε, R) = ∫ M_q(x, R)^ε p(x)`, `T_{p,q}(ε, R) = ∫ m_q(x, R)^(−ε) p(x)`.
//! - `L_{p,q}(ν) = ∬ |log‖x−y‖|^ν p(x) q(y)`.
//!
//! The sup/inf over radii is taken on a log-spaced grid in `(R·1e-4, R]`
//! plus the `r → 0+` limit of the ball average. Ball averages reuse one set
//! of unit-ball offsets for every radius around a given centre.
//!
//! Finiteness of an integral cannot be decided from samples. The verdicts in
//! [`ConditionReport`] are a heuristic: finite estimate and standard error,
//! and agreement between the two half-samples.

use crate::error::{domain, Result};
use crate::estimators::pairwise_sum;
use crate::knn::sq_dist;
use crate::models::{mean_and_se, DensityModel, NormalSource, SeededStream};
use crate::special::{g_n, iter_exp, IterLevel};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

/// Stream ids below this are reserved for the outer point draws.
const BALL_STREAM_BASE: u64 = 16;
const MIN_RADIUS_FRACTION: f64 = 1e-4;

pub const DEFAULT_RADII_GRID: usize = 64;
pub const DEFAULT_QUAD_BUDGET: usize = 128;

fn serialize_level<S: Serializer>(level: &IterLevel, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u32(level.get())
}

/// Parameters shared by the K, Q, T and L functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalParams {
    pub nu: f64,
    #[serde(serialize_with = "serialize_level")]
    pub level: IterLevel,
    /// Distance threshold of K; defaults to e_[N].
    pub threshold: f64,
    pub epsilon: f64,
    pub radius: f64,
    pub radii_grid: usize,
    pub quad_budget: usize,
}

impl FunctionalParams {
    pub fn new(nu: f64, level: IterLevel, epsilon: f64, radius: f64) -> Result<Self> {
        let threshold = iter_exp(level.get())?;
        let params = Self {
            nu,
            level,
            threshold,
            epsilon,
            radius,
            radii_grid: DEFAULT_RADII_GRID,
            quad_budget: DEFAULT_QUAD_BUDGET,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.threshold = threshold;
        self.validate()?;
        Ok(self)
    }

    pub fn with_grid(mut self, radii_grid: usize, quad_budget: usize) -> Result<Self> {
        self.radii_grid = radii_grid;
        self.quad_budget = quad_budget;
        self.validate()?;
        Ok(self)
    }

    pub fn with_level(mut self, level: IterLevel) -> Result<Self> {
        self.level = level;
        self.threshold = iter_exp(level.get())?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.nu) || !nonneg(self.epsilon) {
            return Err(domain("nu and epsilon must be finite and >= 0"));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(domain("threshold must be positive"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(domain("radius must be positive"));
        }
        if self.radii_grid < 2 || self.quad_budget == 0 {
            return Err(domain(
                "radii grid needs >= 2 radii and a positive quadrature budget",
            ));
        }
        Ok(())
    }
}

/// A functional estimate with its Monte-Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalReport {
    pub functional: String,
    pub estimate: f64,
    pub std_error: f64,
    /// Set when a sampled integrand value is infinite.
    pub diverging: bool,
    pub samples_used: usize,
    /// Estimates on the first and second half of the samples.
    pub half_estimates: [f64; 2],
    pub half_std_errors: [f64; 2],
    pub params: FunctionalParams,
    pub seed: u64,
}

impl FunctionalReport {
    fn from_terms(functional: String, terms: &[f64], params: FunctionalParams, seed: u64) -> Self {
        let diverging = terms.iter().any(|t| t.is_infinite());
        let (estimate, std_error) = if diverging {
            (f64::INFINITY, f64::INFINITY)
        } else {
            mean_and_se(terms)
        };
        let mid = terms.len() / 2;
        let halves = if mid == 0 || diverging {
            [(estimate, std_error); 2]
        } else {
            [mean_and_se(&terms[..mid]), mean_and_se(&terms[mid..])]
        };
        Self {
            functional,
            estimate,
            std_error,
            diverging,
            samples_used: terms.len(),
            half_estimates: [halves[0].0, halves[1].0],
            half_std_errors: [halves[0].1, halves[1].1],
            params,
            seed,
        }
    }
}

/// Uniform draws in the unit ball of ℝᵈ.
fn unit_ball_offsets(d: usize, count: usize, stream: SeededStream) -> Vec<f64> {
    let mut src = NormalSource::new(stream.rng());
    let mut out = vec![0.0; d * count];
    for chunk in out.chunks_exact_mut(d) {
        if d == 1 {
            chunk[0] = 2.0 * src.uniform() - 1.0;
            continue;
        }
        let mut norm2 = 0.0;
        while norm2 == 0.0 {
            for c in chunk.iter_mut() {
                *c = src.normal();
            }
            norm2 = chunk.iter().map(|c| c * c).sum::<f64>();
        }
        let scale = src.uniform().powf(1.0 / d as f64) / norm2.sqrt();
        chunk.iter_mut().for_each(|c| *c *= scale);
    }
    out
}

fn ball_average(
    f: &DensityModel,
    x: &[f64],
    r: f64,
    offsets: &[f64],
    buf: &mut [f64],
) -> Result<f64> {
    let d = x.len();
    let mut vals = Vec::with_capacity(offsets.len() / d);
    for u in offsets.chunks_exact(d) {
        for j in 0..d {
            buf[j] = x[j] + r * u[j];
        }
        vals.push(f.pdf(buf)?);
    }
    Ok(pairwise_sum(&vals) / vals.len() as f64)
}

/// Monte-Carlo estimate of I_f(x, r) from `quad_budget` uniform points in B(x, r).
pub fn ball_mass_ratio(
    f: &DensityModel,
    x: &[f64],
    r: f64,
    quad_budget: usize,
    stream: SeededStream,
) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(domain(format!("ball radius must be positive, got {r}")));
    }
    if quad_budget == 0 {
        return Err(domain("quadrature budget must be >= 1"));
    }
    f.pdf(x)?;
    let offsets = unit_ball_offsets(x.len(), quad_budget, stream);
    ball_average(f, x, r, &offsets, &mut vec![0.0; x.len()])
}

/// Log-spaced radii in (R·1e-4, R], ascending, ending at R.
pub fn radii_grid(radius: f64, count: usize) -> Vec<f64> {
    let g = count as f64;
    (0..count)
        .map(|j| radius * MIN_RADIUS_FRACTION.powf((count - 1 - j) as f64 / g))
        .collect()
}

/// (M_f(x, R), m_f(x, R)) over the radii grid plus the r → 0+ limit.
pub fn max_min_ball_ratio(
    f: &DensityModel,
    x: &[f64],
    radius: f64,
    radii: usize,
    quad_budget: usize,
    stream: SeededStream,
) -> Result<(f64, f64)> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(domain(format!("radius must be positive, got {radius}")));
    }
    if radii < 2 || quad_budget == 0 {
        return Err(domain(
            "radii grid needs >= 2 radii and a positive quadrature budget",
        ));
    }
    let limit = f.lebesgue_limit(x)?;
    let offsets = unit_ball_offsets(x.len(), quad_budget, stream);
    let mut buf = vec![0.0; x.len()];
    let (mut hi, mut lo) = (limit, limit);
    for r in radii_grid(radius, radii) {
        let v = ball_average(f, x, r, &offsets, &mut buf)?;
        hi = hi.max(v);
        lo = lo.min(v);
    }
    Ok((hi, lo))
}

/// Pair distances ‖X_i − Y_i‖ with X_i ~ p, Y_i ~ q drawn from the seed's streams 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistances {
    pub distances: Vec<f64>,
    pub seed: u64,
}

impl PairDistances {
    pub fn draw(p: &DensityModel, q: &DensityModel, pairs: usize, seed: u64) -> Result<Self> {
        if p.dim() != q.dim() {
            return Err(crate::error::Error::DimensionMismatch(p.dim(), q.dim()));
        }
        let xs = p.sample(pairs, SeededStream::new(seed, 0))?;
        let ys = q.sample(pairs, SeededStream::new(seed, 1))?;
        let distances = xs
            .points()
            .zip(ys.points())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .collect();
        Ok(Self { distances, seed })
    }

    /// Integrand values 1{‖x−y‖ > t}·G_N(|log‖x−y‖|^ν).
    pub fn k_terms(&self, nu: f64, level: IterLevel, threshold: f64) -> Result<Vec<f64>> {
        self.distances
            .iter()
            .map(|&dist| {
                if dist > threshold {
                    g_n(level, dist.ln().abs().powf(nu))
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    }

    pub fn k_estimate(&self, nu: f64, level: IterLevel, threshold: f64) -> Result<f64> {
        let terms = self.k_terms(nu, level, threshold)?;
        Ok(pairwise_sum(&terms) / terms.len() as f64)
    }

    /// Integrand values |log‖x−y‖|^ν; coincident pairs give +∞.
    pub fn l_terms(&self, nu: f64) -> Vec<f64> {
        self.distances
            .iter()
            .map(|&dist| {
                if dist == 0.0 {
                    f64::INFINITY
                } else {
                    dist.ln().abs().powf(nu)
                }
            })
            .collect()
    }
}

/// Per-point (M_q, m_q) for X_i ~ p, shared by the Q and T functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct BallRatioProfile {
    pub maxima: Vec<f64>,
    pub minima: Vec<f64>,
    pub seed: u64,
}

impl BallRatioProfile {
    pub fn draw(
        p: &DensityModel,
        q: &DensityModel,
        radius: f64,
        radii: usize,
        quad_budget: usize,
        points: usize,
        seed: u64,
    ) -> Result<Self> {
        if p.dim() != q.dim() {
            return Err(crate::error::Error::DimensionMismatch(p.dim(), q.dim()));
        }
        let xs = p.sample(points, SeededStream::new(seed, 0))?;
        let pairs = (0..points)
            .into_par_iter()
            .map(|i| {
                let stream = SeededStream::new(seed, BALL_STREAM_BASE + i as u64);
                max_min_ball_ratio(q, xs.point(i), radius, radii, quad_budget, stream)
            })
            .collect::<Result<Vec<_>>>()?;
        let (maxima, minima) = pairs.into_iter().unzip();
        Ok(Self {
            maxima,
            minima,
            seed,
        })
    }

    pub fn q_terms(&self, epsilon: f64) -> Vec<f64> {
        self.maxima.iter().map(|m| m.powf(epsilon)).collect()
    }

    /// m^(−ε), with m = 0 mapped to +∞.
    pub fn t_terms(&self, epsilon: f64) -> Vec<f64> {
        self.minima
            .iter()
            .map(|&m| {
                if m == 0.0 {
                    f64::INFINITY
                } else {
                    m.powf(-epsilon)
                }
            })
            .collect()
    }

    pub fn q_estimate(&self, epsilon: f64) -> f64 {
        let t = self.q_terms(epsilon);
        pairwise_sum(&t) / t.len() as f64
    }

    pub fn t_estimate(&self, epsilon: f64) -> f64 {
        let t = self.t_terms(epsilon);
        if t.iter().any(|v| v.is_infinite()) {
            return f64::INFINITY;
        }
        pairwise_sum(&t) / t.len() as f64
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn k_functional(
    p: &DensityModel,
    q: &DensityModel,
    params: &FunctionalParams,
    pairs: usize,
    seed: u64,
) -> Result<FunctionalReport> {
    let sample = PairDistances::draw(p, q, pairs, seed)?;
    let terms = sample.k_terms(params.nu, params.level, params.threshold)?;
    let name = format!("K({},{})", fmt_num(params.nu), params.level.get());
    Ok(FunctionalReport::from_terms(name, &terms, *params, seed))
}

pub fn q_functional(
    p: &DensityModel,
    q: &DensityModel,
    params: &FunctionalParams,
    points: usize,
    seed: u64,
) -> Result<FunctionalReport> {
    let profile = BallRatioProfile::draw(
        p,
        q,
        params.radius,
        params.radii_grid,
        params.quad_budget,
        points,
        seed,
    )?;
    Ok(q_report(&profile, params))
}

pub fn t_functional(
    p: &DensityModel,
    q: &DensityModel,
    params: &FunctionalParams,
    points: usize,
    seed: u64,
) -> Result<FunctionalReport> {
    let profile = BallRatioProfile::draw(
        p,
        q,
        params.radius,
        params.radii_grid,
        params.quad_budget,
        points,
        seed,
    )?;
    Ok(t_report(&profile, params))
}

fn q_report(profile: &BallRatioProfile, params: &FunctionalParams) -> FunctionalReport {
    let name = format!("Q({},{})", fmt_num(params.epsilon), fmt_num(params.radius));
    FunctionalReport::from_terms(
        name,
        &profile.q_terms(params.epsilon),
        *params,
        profile.seed,
    )
}

fn t_report(profile: &BallRatioProfile, params: &FunctionalParams) -> FunctionalReport {
    let name = format!("T({},{})", fmt_num(params.epsilon), fmt_num(params.radius));
    FunctionalReport::from_terms(
        name,
        &profile.t_terms(params.epsilon),
        *params,
        profile.seed,
    )
}

/// L_{p,q}(ν). Uses `params.nu` when called through [`condition_report`].
pub fn l_functional(
    p: &DensityModel,
    q: &DensityModel,
    nu: f64,
    pairs: usize,
    seed: u64,
) -> Result<FunctionalReport> {
    let params = FunctionalParams::new(nu, IterLevel::new(1)?, 0.0, 1.0)?;
    let sample = PairDistances::draw(p, q, pairs, seed)?;
    Ok(FunctionalReport::from_terms(
        format!("L({})", fmt_num(nu)),
        &sample.l_terms(nu),
        params,
        seed,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StableFinite,
    SuspectDiverging,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::StableFinite => "stable-finite",
            Verdict::SuspectDiverging => "suspect-diverging",
        })
    }
}

/// Half-sample agreement tolerance, in combined standard errors.
const SPLIT_HALF_Z: f64 = 4.0;

/// Heuristic finiteness verdict for one functional report.
pub fn verdict(report: &FunctionalReport) -> Verdict {
    if report.diverging || !report.estimate.is_finite() || !report.std_error.is_finite() {
        return Verdict::SuspectDiverging;
    }
    let [a, b] = report.half_estimates;
    let [sa, sb] = report.half_std_errors;
    let slack = SPLIT_HALF_Z * (sa * sa + sb * sb).sqrt() + 1e-9 * (1.0 + a.abs() + b.abs());
    if (a - b).abs() <= slack {
        Verdict::StableFinite
    } else {
        Verdict::SuspectDiverging
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEntry {
    /// "p,q" or "p,p".
    pub pair: String,
    pub report: FunctionalReport,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub model_p: String,
    pub model_q: String,
    pub budget: usize,
    pub seed: u64,
    pub heuristic: &'static str,
    pub entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn all_stable(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.verdict == Verdict::StableFinite)
    }

    pub fn find(&self, pair: &str, prefix: &str) -> Option<&ConditionEntry> {
        self.entries
            .iter()
            .find(|e| e.pair == pair && e.report.functional.starts_with(prefix))
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "# p = {}\n# q = {}\n# budget = {}, seed = {}\n# verdicts are heuristic: {}\n",
            self.model_p, self.model_q, self.budget, self.seed, self.heuristic
        );
        out.push_str(&format!(
            "{:<5} {:<14} {:>22} {:>22} {:<18}\n",
            "pair", "functional", "estimate", "std_error", "verdict"
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "{:<5} {:<14} {:>22.15e} {:>22.15e} {:<18}\n",
                e.pair, e.report.functional, e.report.estimate, e.report.std_error, e.verdict
            ));
        }
        out
    }
}

/// Evaluates K(1,N), K(2,N), Q(ε,R), T(ε,R) and L(ν) for (p,q) and (p,p).
///
/// Both blocks use the same seed, so p = q yields identical blocks.
pub fn condition_report(
    p: &DensityModel,
    q: &DensityModel,
    params: &FunctionalParams,
    budget: usize,
    seed: u64,
) -> Result<ConditionReport> {
    if budget == 0 {
        return Err(domain("budget must be >= 1"));
    }
    let mut entries = Vec::new();
    for (label, other) in [("p,q", q), ("p,p", p)] {
        let pairs = PairDistances::draw(p, other, budget, seed)?;
        let profile = BallRatioProfile::draw(
            p,
            other,
            params.radius,
            params.radii_grid,
            params.quad_budget,
            budget,
            seed,
        )?;
        let mut reports = Vec::with_capacity(5);
        for nu in [1.0, 2.0] {
            let terms = pairs.k_terms(nu, params.level, params.threshold)?;
            let name = format!("K({},{})", fmt_num(nu), params.level.get());
            reports.push(FunctionalReport::from_terms(
                name,
                &terms,
                FunctionalParams { nu, ..*params },
                seed,
            ));
        }
        reports.push(q_report(&profile, params));
        reports.push(t_report(&profile, params));
        reports.push(FunctionalReport::from_terms(
            format!("L({})", fmt_num(params.nu)),
            &pairs.l_terms(params.nu),
            *params,
            seed,
        ));
        entries.extend(reports.into_iter().map(|report| ConditionEntry {
            pair: label.to_string(),
            verdict: verdict(&report),
            report,
        }));
    }
    Ok(ConditionReport {
        model_p: p.spec_string(),
        model_q: q.spec_string(),
        budget,
        seed,
        heuristic: "finite estimate and standard error, half-sample estimates within 4 combined standard errors",
        entries,
    })
}
