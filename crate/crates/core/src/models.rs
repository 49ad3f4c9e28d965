//! Analytic density families with seeded sampling and closed-form oracles.
//!
//! Models are described by a small text language:
//!
//! ```text
//! gauss:d=2;mu=0,0;cov=1,0,0,1     # covariance row-major
//! uniform:d=1;a=0;b=1
//! ```
//!
//! Whitespace anywhere is ignored.

use crate::error::{domain, Error, Result};
use crate::sample::PointSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::{E, PI};
use std::fmt;

/// A reproducible random stream: `(master_seed, stream_id)` fixes every draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SeededStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeededStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Box–Muller standard-normal source over any uniform generator.
#[derive(Debug)]
pub struct NormalSource<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> NormalSource<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<f64>,
        /// Lower Cholesky factor, row-major.
        chol: Vec<f64>,
        log_det: f64,
    },
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

/// An analytic density on ℝᵈ. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    family: Family,
    dim: usize,
}

fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s.is_nan() || s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Solves L y = b for lower-triangular L.
fn forward_solve(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    y
}

impl DensityModel {
    /// Gaussian N(mean, cov) with `cov` given row-major.
    pub fn gaussian(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::ModelConstruction("dimension must be >= 1".into()));
        }
        if cov.len() != d * d {
            return Err(Error::ModelConstruction(format!(
                "covariance has {} entries, expected {}",
                cov.len(),
                d * d
            )));
        }
        if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(Error::ModelConstruction("non-finite parameter".into()));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (cov[i * d + j], cov[j * d + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::ModelConstruction(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let chol = cholesky(&cov, d).ok_or_else(|| {
            Error::ModelConstruction("covariance is not positive definite".into())
        })?;
        let log_det = 2.0 * (0..d).map(|i| chol[i * d + i].ln()).sum::<f64>();
        Ok(Self {
            family: Family::Gaussian {
                mean,
                cov,
                chol,
                log_det,
            },
            dim: d,
        })
    }

    /// Isotropic Gaussian N(mean, variance·I).
    pub fn isotropic_gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = variance;
        }
        Self::gaussian(mean, cov)
    }

    /// Uniform density on the box Π [lower_j, upper_j].
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || upper.len() != d {
            return Err(Error::ModelConstruction(
                "box bounds must have equal, positive length".into(),
            ));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
        {
            return Err(Error::ModelConstruction(
                "box needs finite bounds with a < b".into(),
            ));
        }
        Ok(Self {
            family: Family::UniformBox { lower, upper },
            dim: d,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.family, Family::Gaussian { .. })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(x.len(), self.dim));
        }
        Ok(())
    }

    /// Natural log of the density; −∞ outside the support.
    pub fn ln_pdf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match &self.family {
            Family::Gaussian {
                mean,
                chol,
                log_det,
                ..
            } => {
                let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
                let z = forward_solve(chol, self.dim, &diff);
                let maha: f64 = z.iter().map(|v| v * v).sum();
                -0.5 * (self.dim as f64 * (2.0 * PI).ln() + log_det + maha)
            }
            Family::UniformBox { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(v, (a, b))| a <= v && v <= b);
                if inside {
                    -lower
                        .iter()
                        .zip(upper)
                        .map(|(a, b)| (b - a).ln())
                        .sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
        })
    }

    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        match &self.family {
            Family::Gaussian { .. } => Ok(self.ln_pdf(x)?.exp()),
            Family::UniformBox { lower, upper } => {
                self.check_dim(x)?;
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(v, (a, b))| a <= v && v <= b);
                let vol: f64 = lower.iter().zip(upper).map(|(a, b)| b - a).product();
                Ok(if inside { 1.0 / vol } else { 0.0 })
            }
        }
    }

    /// lim_{r→0+} of the ball average of the density around `x`.
    ///
    /// Equals the pdf at continuity points. On a box face the ball is cut by
    /// each active face in half, so the limit is pdf·2^(−faces).
    pub fn lebesgue_limit(&self, x: &[f64]) -> Result<f64> {
        match &self.family {
            Family::Gaussian { .. } => self.pdf(x),
            Family::UniformBox { lower, upper } => {
                self.check_dim(x)?;
                let mut frac = 1.0;
                for (v, (a, b)) in x.iter().zip(lower.iter().zip(upper)) {
                    if v < a || v > b {
                        return Ok(0.0);
                    }
                    if v == a || v == b {
                        frac *= 0.5;
                    }
                }
                let vol: f64 = lower.iter().zip(upper).map(|(a, b)| b - a).product();
                Ok(frac / vol)
            }
        }
    }

    /// Writes one draw into `out`.
    pub fn draw_into<R: Rng>(&self, src: &mut NormalSource<R>, out: &mut [f64]) {
        match &self.family {
            Family::Gaussian { mean, chol, .. } => {
                let d = self.dim;
                for z in out.iter_mut() {
                    *z = src.normal();
                }
                // Row i of L only reads z_0..z_i, so rewrite from the last row up.
                for i in (0..d).rev() {
                    let mut s = mean[i];
                    for k in 0..=i {
                        s += chol[i * d + k] * out[k];
                    }
                    out[i] = s;
                }
            }
            Family::UniformBox { lower, upper } => {
                for (o, (a, b)) in out.iter_mut().zip(lower.iter().zip(upper)) {
                    *o = a + (b - a) * src.uniform();
                }
            }
        }
    }

    /// `n` i.i.d. draws from an explicit source.
    pub fn sample_from<R: Rng>(&self, n: usize, src: &mut NormalSource<R>) -> Result<PointSample> {
        if n == 0 {
            return Err(domain("sample size must be >= 1"));
        }
        let mut coords = vec![0.0; n * self.dim];
        for chunk in coords.chunks_exact_mut(self.dim) {
            self.draw_into(src, chunk);
        }
        PointSample::from_flat(self.dim, coords)
    }

    /// `n` i.i.d. draws, fully determined by `stream`.
    pub fn sample(&self, n: usize, stream: SeededStream) -> Result<PointSample> {
        self.sample_from(n, &mut NormalSource::new(stream.rng()))
    }

    /// Closed-form Shannon differential entropy (nats).
    pub fn entropy_closed_form(&self) -> f64 {
        match &self.family {
            Family::Gaussian { log_det, .. } => {
                0.5 * self.dim as f64 * (2.0 * PI * E).ln() + 0.5 * log_det
            }
            Family::UniformBox { lower, upper } => {
                lower.iter().zip(upper).map(|(a, b)| (b - a).ln()).sum()
            }
        }
    }

    /// Canonical text form accepted by [`DensityModel::parse`].
    pub fn spec_string(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_model(text)
    }
}

impl fmt::Display for DensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        match &self.family {
            Family::Gaussian { mean, cov, .. } => {
                write!(
                    f,
                    "gauss:d={};mu={};cov={}",
                    self.dim,
                    join(mean),
                    join(cov)
                )
            }
            Family::UniformBox { lower, upper } => {
                write!(
                    f,
                    "uniform:d={};a={};b={}",
                    self.dim,
                    join(lower),
                    join(upper)
                )
            }
        }
    }
}

impl std::str::FromStr for DensityModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_model(s)
    }
}

/// KL divergence between two Gaussians:
/// ½(tr(Σ_q⁻¹Σ_p) + (μ_q−μ_p)ᵀΣ_q⁻¹(μ_q−μ_p) − d + log(detΣ_q/detΣ_p)).
pub fn kl_closed_form(p: &DensityModel, q: &DensityModel) -> Result<f64> {
    let (
        Family::Gaussian {
            mean: mp,
            chol: lp,
            log_det: ldp,
            ..
        },
        Family::Gaussian {
            mean: mq,
            chol: lq,
            log_det: ldq,
            ..
        },
    ) = (&p.family, &q.family)
    else {
        return Err(Error::UnsupportedPair(
            "closed-form KL needs two Gaussian models".into(),
        ));
    };
    if p.dim != q.dim {
        return Err(Error::DimensionMismatch(p.dim, q.dim));
    }
    if p == q {
        return Ok(0.0);
    }
    let d = p.dim;
    // tr(Σ_q⁻¹ Σ_p) = ‖L_q⁻¹ L_p‖²_F
    let mut trace = 0.0;
    for col in 0..d {
        let column: Vec<f64> = (0..d).map(|row| lp[row * d + col]).collect();
        trace += forward_solve(lq, d, &column)
            .iter()
            .map(|v| v * v)
            .sum::<f64>();
    }
    let diff: Vec<f64> = mq.iter().zip(mp).map(|(a, b)| a - b).collect();
    let maha: f64 = forward_solve(lq, d, &diff).iter().map(|v| v * v).sum();
    Ok(0.5 * (trace + maha - d as f64 + ldq - ldp))
}

/// A Monte-Carlo estimate with its standard error. `value` is +∞ when the
/// integrand is infinite with positive probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
}

impl MonteCarloEstimate {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

/// Mean and standard error of a slice using a fixed-order pairwise sum.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = crate::estimators::pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = crate::estimators::pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo estimate of ∫ p log(p/q) over draws x ~ p.
pub fn kl_numeric_oracle(
    p: &DensityModel,
    q: &DensityModel,
    budget: usize,
    stream: SeededStream,
) -> Result<MonteCarloEstimate> {
    if p.dim != q.dim {
        return Err(Error::DimensionMismatch(p.dim, q.dim));
    }
    let xs = p.sample(budget, stream)?;
    let mut terms = Vec::with_capacity(budget);
    for x in xs.points() {
        let lq = q.ln_pdf(x)?;
        if lq == f64::NEG_INFINITY {
            return Ok(MonteCarloEstimate {
                value: f64::INFINITY,
                std_error: f64::INFINITY,
                draws: budget,
            });
        }
        terms.push(p.ln_pdf(x)? - lq);
    }
    let (value, std_error) = mean_and_se(&terms);
    Ok(MonteCarloEstimate {
        value,
        std_error,
        draws: budget,
    })
}

// ---- model text parser ----

struct Cursor<'a> {
    /// Non-whitespace characters with their byte offsets in the source.
    chars: Vec<(usize, char)>,
    pos: usize,
    src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src
                .char_indices()
                .filter(|(_, c)| !c.is_whitespace())
                .collect(),
            pos: 0,
            src,
        }
    }

    fn offset(&self) -> usize {
        self.chars
            .get(self.pos)
            .map(|&(o, _)| o)
            .unwrap_or(self.src.len())
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.offset(),
            reason: reason.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            s.push(c);
            self.pos += 1;
        }
        s
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn number(&mut self) -> Result<f64> {
        let at = self.offset();
        let tok = self.take_while(|c| c != ',' && c != ';');
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Parse {
                offset: at,
                reason: format!("invalid number {tok:?}"),
            })
    }

    fn list(&mut self) -> Result<Vec<f64>> {
        let mut v = vec![self.number()?];
        while self.peek() == Some(',') {
            self.pos += 1;
            v.push(self.number()?);
        }
        Ok(v)
    }
}

fn parse_model(text: &str) -> Result<DensityModel> {
    let mut cur = Cursor::new(text);
    let family_at = cur.offset();
    let family = cur.take_while(|c| c != ':').to_ascii_lowercase();
    cur.expect(':')?;
    let mut dim: Option<(usize, usize)> = None;
    let mut fields: Vec<(String, usize, Vec<f64>)> = Vec::new();
    loop {
        let key_at = cur.offset();
        let key = cur
            .take_while(|c| c != '=' && c != ';')
            .to_ascii_lowercase();
        if key.is_empty() {
            return Err(cur.err("expected a key"));
        }
        cur.expect('=')?;
        if key == "d" {
            if dim.is_some() {
                return Err(Error::Parse {
                    offset: key_at,
                    reason: "duplicate key 'd'".into(),
                });
            }
            let at = cur.offset();
            let tok = cur.take_while(|c| c != ';');
            let d = tok
                .parse::<usize>()
                .ok()
                .filter(|&d| d >= 1)
                .ok_or_else(|| Error::Parse {
                    offset: at,
                    reason: format!("invalid dimension {tok:?}"),
                })?;
            dim = Some((d, at));
        } else {
            if fields.iter().any(|(k, _, _)| *k == key) {
                return Err(Error::Parse {
                    offset: key_at,
                    reason: format!("duplicate key '{key}'"),
                });
            }
            let values = cur.list()?;
            fields.push((key, key_at, values));
        }
        match cur.peek() {
            None => break,
            Some(';') => {
                cur.pos += 1;
                if cur.peek().is_none() {
                    break;
                }
            }
            Some(c) => return Err(cur.err(format!("unexpected character '{c}'"))),
        }
    }
    let end = text.len();
    let (d, d_at) = dim.ok_or(Error::Parse {
        offset: end,
        reason: "missing key 'd'".into(),
    })?;
    let mut take = |name: &str, len: usize| -> Result<Vec<f64>> {
        let idx = fields
            .iter()
            .position(|(k, _, _)| k == name)
            .ok_or_else(|| Error::Parse {
                offset: end,
                reason: format!("missing key '{name}'"),
            })?;
        let (_, at, values) = fields.remove(idx);
        if values.len() != len {
            return Err(Error::Parse {
                offset: at,
                reason: format!(
                    "'{name}' needs {len} values for d={d}, got {}",
                    values.len()
                ),
            });
        }
        Ok(values)
    };
    let model = match family.as_str() {
        "gauss" | "gaussian" => {
            let mu = take("mu", d)?;
            let cov = take("cov", d * d)?;
            DensityModel::gaussian(mu, cov)
        }
        "uniform" => {
            let a = take("a", d)?;
            let b = take("b", d)?;
            DensityModel::uniform_box(a, b)
        }
        other => {
            return Err(Error::Parse {
                offset: family_at,
                reason: format!("unknown family {other:?}"),
            });
        }
    };
    if let Some((key, at, _)) = fields.first() {
        return Err(Error::Parse {
            offset: *at,
            reason: format!("unknown key '{key}'"),
        });
    }
    model.map_err(|e| Error::Parse {
        offset: d_at,
        reason: e.to_string(),
    })
}
