//! k-NN estimators of Kullback–Leibler divergence and Shannon entropy.
//!
//! With R_{n,k}(i) the leave-one-out k-th neighbor distance of X_i inside
//! 𝕏ₙ and V_{m,l}(i) its l-th neighbor distance in 𝕐ₘ, the divergence
//! estimate is
//!
//! ```text
//! D̂(k, l) = ψ(k) − ψ(l) + (1/n) Σᵢ log( m·V_{m,l}(i)^d / ((n−1)·R_{n,k}(i)^d) )
//! ```
//!
//! and the entropy estimate is
//!
//! ```text
//! Ĥ(k) = (1/n) Σᵢ log( R_{n,k}(i)^d · V_d · (n−1) / e^{ψ(k)} )
//! ```
//!
//! Per-point orders replace ψ(k) − ψ(l) by its average over points.
//! All reductions use a fixed-order pairwise sum, so results do not depend on
//! how the per-point work was scheduled.

use crate::error::{domain, Error, Result};
use crate::knn::{cross_radii_with_orders, loo_radii_with_orders, SearchMethod};
use crate::models::SeededStream;
use crate::sample::PointSample;
use crate::special::{digamma, unit_ball_volume};
use rand::Rng;
use serde::Serialize;

const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Neighbor orders for the divergence estimator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OrderSpec {
    /// One order `k` inside 𝕏ₙ and one order `l` into 𝕐ₘ for every point.
    Uniform { k: usize, l: usize },
    /// Orders `ks[i]`, `ls[i]` for point i.
    PerSample { ks: Vec<usize>, ls: Vec<usize> },
}

impl OrderSpec {
    pub fn uniform(k: usize, l: usize) -> Self {
        Self::Uniform { k, l }
    }

    /// The bound r on every order in use.
    pub fn bound(&self) -> usize {
        match self {
            Self::Uniform { k, l } => (*k).max(*l),
            Self::PerSample { ks, ls } => ks.iter().chain(ls).copied().max().unwrap_or(0),
        }
    }

    fn expand(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        match self {
            Self::Uniform { k, l } => {
                if *k == 0 || *l == 0 {
                    return Err(domain("orders must be >= 1"));
                }
                Ok((vec![*k; n], vec![*l; n]))
            }
            Self::PerSample { ks, ls } => {
                if ks.len() != n || ls.len() != n {
                    return Err(domain(format!(
                        "per-sample orders need {n} entries, got {} and {}",
                        ks.len(),
                        ls.len()
                    )));
                }
                if ks.iter().chain(ls).any(|&o| o == 0) {
                    return Err(domain("orders must be >= 1"));
                }
                Ok((ks.clone(), ls.clone()))
            }
        }
    }
}

/// Neighbor orders for the entropy estimator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EntropyOrders {
    Uniform { k: usize },
    PerSample { ks: Vec<usize> },
}

impl EntropyOrders {
    fn expand(&self, n: usize) -> Result<Vec<usize>> {
        match self {
            Self::Uniform { k } if *k == 0 => Err(domain("orders must be >= 1")),
            Self::Uniform { k } => Ok(vec![*k; n]),
            Self::PerSample { ks } => {
                if ks.len() != n {
                    return Err(domain(format!(
                        "per-sample orders need {n} entries, got {}",
                        ks.len()
                    )));
                }
                if ks.contains(&0) {
                    return Err(domain("orders must be >= 1"));
                }
                Ok(ks.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum OrdersEcho {
    Divergence(OrderSpec),
    Entropy(EntropyOrders),
}

/// Estimator output with the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub value: f64,
    pub n: usize,
    /// Size of the second sample; absent for entropy.
    pub m: Option<usize>,
    pub d: usize,
    pub orders: OrdersEcho,
    /// (1/n) Σ of the digamma part of each summand.
    pub digamma_offset: f64,
    /// The i-th logarithmic summand, without its digamma part.
    /// `value == digamma_offset + mean(per_point_terms)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_point_terms: Option<Vec<f64>>,
    pub zero_distance_count: usize,
}

impl EstimateReport {
    /// Recombines the stored per-point terms into the estimate.
    pub fn recombine(&self) -> Option<f64> {
        let terms = self.per_point_terms.as_ref()?;
        Some(self.digamma_offset + pairwise_sum(terms) / terms.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimateOptions {
    pub method: SearchMethod,
    pub keep_terms: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            method: SearchMethod::KdTree,
            keep_terms: true,
        }
    }
}

fn degenerate(r: &[usize], v: &[usize]) -> Error {
    let mut indices: Vec<usize> = r.iter().chain(v).copied().collect();
    indices.sort_unstable();
    indices.dedup();
    Error::DegenerateSample { indices }
}

fn mean_digamma_gap(ks: &[usize], ls: Option<&[usize]>) -> Result<f64> {
    let mut gaps = Vec::with_capacity(ks.len());
    for (i, &k) in ks.iter().enumerate() {
        let mut g = digamma(k as f64)?;
        if let Some(ls) = ls {
            g -= digamma(ls[i] as f64)?;
        }
        gaps.push(g);
    }
    Ok(pairwise_sum(&gaps) / ks.len() as f64)
}

/// Divergence estimate D̂ₙ,ₘ(k, l), or its per-point generalization.
pub fn kl_estimate_with(
    x: &PointSample,
    y: &PointSample,
    orders: &OrderSpec,
    opts: EstimateOptions,
) -> Result<EstimateReport> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    let (n, m, d) = (x.len(), y.len(), x.dim());
    let (ks, ls) = orders.expand(n)?;
    let r = loo_radii_with_orders(x, &ks, opts.method)?;
    let v = cross_radii_with_orders(x, y, &ls, opts.method)?;
    if r.has_zero() || v.has_zero() {
        return Err(degenerate(&r.zero_indices, &v.zero_indices));
    }
    let log_size_ratio = (m as f64 / (n - 1) as f64).ln();
    let terms: Vec<f64> = r
        .values
        .iter()
        .zip(&v.values)
        .map(|(ri, vi)| log_size_ratio + d as f64 * (vi.ln() - ri.ln()))
        .collect();
    let digamma_offset = match orders {
        OrderSpec::Uniform { k, l } => digamma(*k as f64)? - digamma(*l as f64)?,
        OrderSpec::PerSample { .. } => mean_digamma_gap(&ks, Some(&ls))?,
    };
    let value = digamma_offset + pairwise_sum(&terms) / n as f64;
    Ok(EstimateReport {
        value,
        n,
        m: Some(m),
        d,
        orders: OrdersEcho::Divergence(orders.clone()),
        digamma_offset,
        per_point_terms: opts.keep_terms.then_some(terms),
        zero_distance_count: 0,
    })
}

pub fn kl_estimate(x: &PointSample, y: &PointSample, orders: &OrderSpec) -> Result<EstimateReport> {
    kl_estimate_with(x, y, orders, EstimateOptions::default())
}

/// Equal-order form: (d/n) Σ log(V_{m,k}(i)/R_{n,k}(i)) + log(m/(n−1)).
///
/// The digamma terms cancel, so this path never evaluates ψ.
pub fn kl_estimate_equal_orders(
    x: &PointSample,
    y: &PointSample,
    k: usize,
) -> Result<EstimateReport> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    if k == 0 {
        return Err(domain("orders must be >= 1"));
    }
    let (n, m, d) = (x.len(), y.len(), x.dim());
    let method = SearchMethod::KdTree;
    let r = crate::knn::loo_radii(x, k, method)?;
    let v = crate::knn::cross_radii(x, y, k, method)?;
    if r.has_zero() || v.has_zero() {
        return Err(degenerate(&r.zero_indices, &v.zero_indices));
    }
    let log_ratios: Vec<f64> = r
        .values
        .iter()
        .zip(&v.values)
        .map(|(ri, vi)| (vi / ri).ln())
        .collect();
    let log_size_ratio = (m as f64 / (n - 1) as f64).ln();
    let value = d as f64 * pairwise_sum(&log_ratios) / n as f64 + log_size_ratio;
    let terms = log_ratios
        .iter()
        .map(|lr| log_size_ratio + d as f64 * lr)
        .collect();
    Ok(EstimateReport {
        value,
        n,
        m: Some(m),
        d,
        orders: OrdersEcho::Divergence(OrderSpec::uniform(k, k)),
        digamma_offset: 0.0,
        per_point_terms: Some(terms),
        zero_distance_count: 0,
    })
}

/// Kozachenko–Leonenko entropy estimate Ĥₙ(k), or its per-point generalization.
pub fn entropy_estimate_with(
    x: &PointSample,
    orders: &EntropyOrders,
    opts: EstimateOptions,
) -> Result<EstimateReport> {
    let (n, d) = (x.len(), x.dim());
    let ks = orders.expand(n)?;
    let r = loo_radii_with_orders(x, &ks, opts.method)?;
    if r.has_zero() {
        return Err(degenerate(&r.zero_indices, &[]));
    }
    let log_scale = unit_ball_volume(d)?.ln() + ((n - 1) as f64).ln();
    let terms: Vec<f64> = r
        .values
        .iter()
        .map(|ri| d as f64 * ri.ln() + log_scale)
        .collect();
    let digamma_offset = match orders {
        EntropyOrders::Uniform { k } => -digamma(*k as f64)?,
        EntropyOrders::PerSample { .. } => -mean_digamma_gap(&ks, None)?,
    };
    let value = digamma_offset + pairwise_sum(&terms) / n as f64;
    Ok(EstimateReport {
        value,
        n,
        m: None,
        d,
        orders: OrdersEcho::Entropy(orders.clone()),
        digamma_offset,
        per_point_terms: opts.keep_terms.then_some(terms),
        zero_distance_count: 0,
    })
}

pub fn entropy_estimate(x: &PointSample, orders: &EntropyOrders) -> Result<EstimateReport> {
    entropy_estimate_with(x, orders, EstimateOptions::default())
}

/// Adds independent Uniform[−magnitude, magnitude] noise to every coordinate.
pub fn jitter(x: &PointSample, magnitude: f64, stream: SeededStream) -> Result<PointSample> {
    if !(magnitude.is_finite() && magnitude >= 0.0) {
        return Err(domain(format!(
            "jitter magnitude must be finite and >= 0, got {magnitude}"
        )));
    }
    let mut rng = stream.rng();
    x.map_points(x.dim(), |src, dst| {
        for (o, c) in dst.iter_mut().zip(src) {
            *o = c + magnitude * (2.0 * rng.gen::<f64>() - 1.0);
        }
    })
}
