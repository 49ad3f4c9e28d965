//! Analytic building blocks: digamma/trigamma, unit-ball volume, iterated
//! exponential and logarithm, the `G_N` gauge family, and Gamma log-moments.

use crate::error::{domain, Error, Result};
use std::f64::consts::PI;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this argument the recurrences shift upward before the asymptotic series is used.
const ASYMPTOTIC_CUTOFF: f64 = 10.0;

/// Bernoulli numbers B_2, B_4, ..., B_14.
const BERNOULLI_EVEN: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

fn check_positive(t: f64, what: &str) -> Result<()> {
    if !t.is_finite() || t <= 0.0 {
        return Err(domain(format!(
            "{what} requires a finite positive argument, got {t}"
        )));
    }
    Ok(())
}

/// Digamma function ψ(t) = Γ'(t)/Γ(t) for t > 0.
pub fn digamma(t: f64) -> Result<f64> {
    check_positive(t, "digamma")?;
    let mut x = t;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_CUTOFF {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut pow = inv2;
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        series += b / (2.0 * (j as f64 + 1.0)) * pow;
        pow *= inv2;
    }
    Ok(shift + x.ln() - 0.5 * inv - series)
}

/// Trigamma function ψ'(t) for t > 0.
pub fn trigamma(t: f64) -> Result<f64> {
    check_positive(t, "trigamma")?;
    let mut x = t;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_CUTOFF {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ψ'(x) ~ 1/x + 1/(2x²) + Σ B_2k / x^(2k+1)
    let mut series = 0.0;
    let mut pow = inv2 * inv;
    for b in BERNOULLI_EVEN {
        series += b * pow;
        pow *= inv2;
    }
    Ok(shift + inv + 0.5 * inv2 + series)
}

/// Lebesgue volume of the Euclidean unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(domain("unit ball volume requires d >= 1"));
    }
    // V_d = V_{d-2} * 2π / d, seeded by V_0 = 1 and V_1 = 2.
    let mut v = if d.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut j = if d.is_multiple_of(2) { 2 } else { 3 };
    while j <= d {
        v *= 2.0 * PI / j as f64;
        j += 2;
    }
    Ok(v)
}

/// Depth of an iterated logarithm, always at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IterLevel(u32);

impl IterLevel {
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 {
            return Err(domain("iteration level must be >= 1"));
        }
        Ok(Self(level))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for IterLevel {
    type Error = Error;

    fn try_from(level: u32) -> Result<Self> {
        Self::new(level)
    }
}

/// Iterated exponential: e_[0] = 1, e_[N] = exp(e_[N-1]).
///
/// e_[3] ≈ 3.8e6 is the last level representable in double precision.
pub fn iter_exp(level: u32) -> Result<f64> {
    let mut v = 1.0_f64;
    for _ in 0..level {
        v = v.exp();
        if !v.is_finite() {
            return Err(Error::Overflow(format!(
                "e_[{level}] exceeds double precision"
            )));
        }
    }
    Ok(v)
}

/// `level`-fold natural logarithm. Defined for t > e_[level-2] (t > 0 at level 1).
pub fn iter_log(level: IterLevel, t: f64) -> Result<f64> {
    if t.is_nan() {
        return Err(domain("iterated log of NaN"));
    }
    let mut v = t;
    for step in 0..level.get() {
        if v <= 0.0 {
            return Err(domain(format!(
                "log_[{}]({t}) undefined: argument of log #{} is {v}",
                level.get(),
                step + 1
            )));
        }
        v = v.ln();
    }
    Ok(v)
}

/// The gauge G_N: zero on [0, e_[N-1]], t·log_[N](t) above the knot.
pub fn g_n(level: IterLevel, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(domain(format!("G_N requires t >= 0, got {t}")));
    }
    // An unrepresentable knot means G_N vanishes on every finite argument.
    let knot = iter_exp(level.get() - 1).unwrap_or(f64::INFINITY);
    if t <= knot {
        return Ok(0.0);
    }
    if t.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(t * iter_log(level, t)?)
}

/// Rate/shape pair of the Gamma law Γ(α, λ) with density α^λ u^(λ-1) e^(-αu) / Γ(λ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    alpha: f64,
    lambda: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(domain(format!("gamma rate must be positive, got {alpha}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(domain(format!(
                "gamma shape must be positive, got {lambda}"
            )));
        }
        Ok(Self { alpha, lambda })
    }

    /// Rate α.
    pub fn rate(&self) -> f64 {
        self.alpha
    }

    /// Shape λ.
    pub fn shape(&self) -> f64 {
        self.lambda
    }
}

/// E[log η] = ψ(λ) − log α for η ~ Γ(α, λ).
pub fn erlang_log_moment(p: GammaParams) -> f64 {
    digamma(p.lambda).expect("shape validated positive") - p.alpha.ln()
}

/// E[log² η] = Γ''(λ)/Γ(λ) − 2ψ(λ)·log α + log²α, with Γ''/Γ = ψ' + ψ².
pub fn erlang_log2_moment(p: GammaParams) -> f64 {
    let psi = digamma(p.lambda).expect("shape validated positive");
    let psi1 = trigamma(p.lambda).expect("shape validated positive");
    let la = p.alpha.ln();
    psi1 + psi * psi - 2.0 * psi * la + la * la
}

/// CDF of the Erlang law with the given rate and integer shape:
/// 1 − Σ_{s<shape} (rate·u)^s e^(−rate·u) / s!.
pub fn erlang_cdf(rate: f64, shape: u32, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let z = rate * u;
    let mut term = (-z).exp();
    let mut tail = 0.0;
    for s in 0..shape {
        if s > 0 {
            term *= z / s as f64;
        }
        tail += term;
    }
    (1.0 - tail).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn lvl(n: u32) -> IterLevel {
        IterLevel::new(n).unwrap()
    }

    #[test]
    fn digamma_known_values() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-12);
        assert!((digamma(1.0).unwrap() - -0.5772156649015329).abs() < 1e-12);
        assert!((digamma(2.0).unwrap() - (digamma(1.0).unwrap() + 1.0)).abs() < 1e-12);
        let half = -EULER_GAMMA - 2.0 * LN_2;
        assert!((digamma(0.5).unwrap() - half).abs() < 1e-12);
        assert!((digamma(0.5).unwrap() - -1.9635100260214235).abs() < 1e-12);
    }

    #[test]
    fn digamma_recurrence_residual() {
        for t in [0.5, 1.0, 2.0, 10.0, 100.0] {
            let r = digamma(t + 1.0).unwrap() - digamma(t).unwrap() - 1.0 / t;
            assert!(r.abs() <= 1e-12, "t={t} residual={r}");
        }
    }

    #[test]
    fn digamma_range_ends() {
        // Small arguments go through the upward recurrence.
        let t = 1e-3;
        let expected = digamma(1.0 + t).unwrap() - 1.0 / t;
        assert!((digamma(t).unwrap() - expected).abs() < 1e-12);
        // ψ(x) ≈ ln x − 1/(2x) − 1/(12x²) at large x.
        let x = 1e6_f64;
        let approx = x.ln() - 0.5 / x - 1.0 / (12.0 * x * x);
        assert!((digamma(x).unwrap() - approx).abs() < 1e-12);
    }

    #[test]
    fn digamma_rejects_bad_input() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.0).is_err());
        assert!(digamma(f64::NAN).is_err());
        assert!(digamma(f64::INFINITY).is_err());
    }

    #[test]
    fn trigamma_known_values() {
        assert!((trigamma(1.0).unwrap() - PI * PI / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5).unwrap() - PI * PI / 2.0).abs() < 1e-12);
        for t in [0.5, 1.0, 3.0, 25.0] {
            let r = trigamma(t).unwrap() - trigamma(t + 1.0).unwrap() - 1.0 / (t * t);
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn ball_volumes() {
        assert_eq!(unit_ball_volume(1).unwrap(), 2.0);
        assert!((unit_ball_volume(2).unwrap() - PI).abs() < 1e-15);
        // π^{3/2} / Γ(5/2) with Γ(5/2) = (3/4)√π
        let v3 = PI.powf(1.5) / (0.75 * PI.sqrt());
        assert!((unit_ball_volume(3).unwrap() - v3).abs() < 1e-14);
        assert!((unit_ball_volume(3).unwrap() - 4.188790204786391).abs() < 1e-14);
        assert!(unit_ball_volume(0).is_err());
    }

    #[test]
    fn iterated_exp_values() {
        assert_eq!(iter_exp(0).unwrap(), 1.0);
        assert_eq!(iter_exp(1).unwrap(), std::f64::consts::E);
        assert!((iter_exp(2).unwrap() - 15.154262241479262).abs() < 1e-12);
        assert!(iter_exp(3).unwrap() > 3.8e6);
        assert!(matches!(iter_exp(4), Err(Error::Overflow(_))));
    }

    #[test]
    fn iterated_log_values() {
        let e = std::f64::consts::E;
        assert!((iter_log(lvl(1), e).unwrap() - 1.0).abs() < 1e-15);
        assert!((iter_log(lvl(2), e.exp()).unwrap() - 1.0).abs() < 1e-15);
        assert!(iter_log(lvl(2), 1.0).is_err());
        assert!(iter_log(lvl(1), 0.0).is_err());
        assert!(IterLevel::new(0).is_err());
    }

    #[test]
    fn g_n_values() {
        let e = std::f64::consts::E;
        assert_eq!(g_n(lvl(1), 1.0).unwrap(), 0.0);
        assert_eq!(g_n(lvl(1), 0.0).unwrap(), 0.0);
        assert!((g_n(lvl(1), e * e).unwrap() - 2.0 * e * e).abs() < 1e-12);
        assert_eq!(g_n(lvl(2), e).unwrap(), 0.0);
        assert!(g_n(lvl(1), -0.1).is_err());
        // Levels whose knot overflows vanish on finite input.
        assert_eq!(g_n(lvl(5), 1e300).unwrap(), 0.0);
    }

    #[test]
    fn g_n_continuous_at_knot() {
        for n in 1..=3 {
            let knot = iter_exp(n - 1).unwrap();
            let right = g_n(lvl(n), knot * (1.0 + 1e-12)).unwrap();
            assert!(right.abs() < 1e-6, "N={n} right limit {right}");
        }
    }

    #[test]
    fn erlang_log_moment_values() {
        let m = |a, l| erlang_log_moment(GammaParams::new(a, l).unwrap());
        assert!((m(1.0, 1.0) - -0.5772156649).abs() < 1e-10);
        assert!((m(2.0, 1.0) - -1.2703628455).abs() < 1e-10);
        assert!((m(1.0, 2.0) - 0.4227843351).abs() < 1e-10);
    }

    #[test]
    fn erlang_log2_moment_values() {
        let m = |a, l| erlang_log2_moment(GammaParams::new(a, l).unwrap());
        assert!((m(1.0, 1.0) - 1.9781119907).abs() < 1e-9);
        assert!((m(std::f64::consts::E, 1.0) - 4.1325433205).abs() < 1e-9);
        // ∫ log²u · u² e^{-u}/2 du by adaptive quadrature: 1.2464649959509
        assert!((m(1.0, 3.0) - 1.2464649960).abs() < 1e-9);
    }

    #[test]
    fn gamma_params_validation() {
        assert!(GammaParams::new(0.0, 1.0).is_err());
        assert!(GammaParams::new(1.0, -2.0).is_err());
        assert!(GammaParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn erlang_cdf_matches_exponential() {
        for u in [0.1_f64, 0.5, 1.0, 3.0] {
            let expected = 1.0 - (-2.0 * u).exp();
            assert!((erlang_cdf(2.0, 1, u) - expected).abs() < 1e-15);
            let expected2 = 1.0 - (-2.0 * u).exp() * (1.0 + 2.0 * u);
            assert!((erlang_cdf(2.0, 2, u) - expected2).abs() < 1e-15);
        }
        assert_eq!(erlang_cdf(1.0, 3, -1.0), 0.0);
    }
}
