use knn_kl::special::{
    digamma, erlang_cdf, erlang_log2_moment, erlang_log_moment, g_n, iter_exp, iter_log, trigamma,
    GammaParams, IterLevel,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn level(n: u32) -> IterLevel {
    IterLevel::new(n).unwrap()
}

/// Arguments spread over many scales, with extra mass around the knots.
fn spread(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..3) {
        0 => rng.gen_range(0.0..20.0),
        1 => 10f64.powf(rng.gen_range(-3.0..8.0)),
        _ => rng.gen_range(0.0..1e4),
    }
}

#[test]
fn gauge_is_convex_on_random_triples() {
    for n in 1..=3 {
        let lv = level(n);
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(n));
        for _ in 0..10_000 {
            let (a, b) = (spread(&mut rng), spread(&mut rng));
            let w: f64 = rng.gen();
            let mid = w * a + (1.0 - w) * b;
            let lhs = g_n(lv, mid).unwrap();
            let rhs = w * g_n(lv, a).unwrap() + (1.0 - w) * g_n(lv, b).unwrap();
            assert!(
                lhs <= rhs + 1e-9 * rhs.abs().max(1.0),
                "N={n} a={a} b={b} w={w}: {lhs} > {rhs}"
            );
        }
    }
}

#[test]
fn gauge_is_nondecreasing() {
    for n in 1..=3 {
        let lv = level(n);
        let mut prev = 0.0;
        let mut t = 0.0;
        while t < 1e5 {
            let g = g_n(lv, t).unwrap();
            assert!(g >= prev, "N={n} t={t}");
            prev = g;
            t = t * 1.01 + 1e-3;
        }
    }
}

/// For τ > 0 there are a, b with G_N(τc) ≤ a·G_N(c) + b for every c ≥ 0:
/// a = 2τ, b = G_N(τc₀), where c₀ is the point past which log_[N](τc) ≤ 2·log_[N](c).
#[test]
fn gauge_scaling_bound() {
    let grid: Vec<f64> = (0..=4000)
        .map(|i| 10f64.powf(-3.0 + 15.0 * f64::from(i) / 4000.0))
        .collect();
    for n in 1..=3 {
        let lv = level(n);
        for d in [1usize, 2, 3, 5, 8] {
            for nu in [0.5, 1.0, 2.0] {
                let tau = (d as f64).powf(nu);
                // Scan downward; c₀ is the last grid point before the ratio condition fails.
                let mut c0 = *grid.last().unwrap();
                for &c in grid.iter().rev() {
                    let ok = match (iter_log(lv, tau * c), iter_log(lv, c)) {
                        (Ok(num), Ok(den)) if den > 0.0 => num <= 2.0 * den,
                        _ => false,
                    };
                    if !ok {
                        break;
                    }
                    c0 = c;
                }
                let (a, b) = (2.0 * tau, g_n(lv, tau * c0).unwrap());
                let mut rng = ChaCha8Rng::seed_from_u64(d as u64 * 31 + u64::from(n));
                let probes = grid
                    .iter()
                    .copied()
                    .chain((0..2000).map(|_| spread(&mut rng)));
                for c in probes {
                    let lhs = g_n(lv, tau * c).unwrap();
                    let rhs = a * g_n(lv, c).unwrap() + b;
                    assert!(
                        lhs <= rhs * (1.0 + 1e-9),
                        "N={n} tau={tau} c={c}: {lhs} > {rhs}"
                    );
                }
            }
        }
    }
}

#[test]
fn iterated_exp_and_log_are_inverse() {
    for n in 1..=3 {
        let e = iter_exp(n).unwrap();
        assert!((iter_log(level(n), e).unwrap() - 1.0).abs() < 1e-12);
        let knot = iter_exp(n - 1).unwrap();
        assert!(iter_log(level(n), knot).unwrap().abs() < 1e-12);
    }
}

/// Gamma(λ, α) draws for integer λ as a sum of λ exponentials, written independently of the library.
fn erlang_draws(rng: &mut ChaCha8Rng, alpha: f64, shape: u32, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| {
            (0..shape)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .sum::<f64>()
                / alpha
        })
        .collect()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn erlang_log_moments_match_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (alpha, shape) in [(1.0, 1u32), (1.0, 3), (2.5, 2), (0.3, 5)] {
        let draws = erlang_draws(&mut rng, alpha, shape, 1_000_000);
        let logs: Vec<f64> = draws.iter().map(|u| u.ln()).collect();
        let sq: Vec<f64> = logs.iter().map(|l| l * l).collect();
        let p = GammaParams::new(alpha, f64::from(shape)).unwrap();
        let (m1, se1) = mean_se(&logs);
        let (m2, se2) = mean_se(&sq);
        assert!(
            (m1 - erlang_log_moment(p)).abs() <= 4.0 * se1,
            "E log, alpha={alpha} shape={shape}"
        );
        assert!(
            (m2 - erlang_log2_moment(p)).abs() <= 4.0 * se2,
            "E log², alpha={alpha} shape={shape}"
        );
    }
}

#[test]
fn erlang_cdf_matches_empirical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (alpha, shape) in [(1.0, 1u32), (0.7, 2), (3.0, 4)] {
        let draws = erlang_draws(&mut rng, alpha, shape, 200_000);
        for u in [0.2, 0.5, 1.0, 2.0, 5.0] {
            let p = erlang_cdf(alpha, shape, u);
            let emp = draws.iter().filter(|&&x| x <= u).count() as f64 / draws.len() as f64;
            let se = (p * (1.0 - p) / draws.len() as f64).sqrt().max(1e-6);
            assert!(
                (emp - p).abs() <= 4.0 * se,
                "alpha={alpha} shape={shape} u={u}: {emp} vs {p}"
            );
        }
    }
}

proptest! {
    #[test]
    fn digamma_recurrence(t in 1e-3f64..1e6) {
        let lhs = digamma(t + 1.0).unwrap() - digamma(t).unwrap();
        prop_assert!((lhs - 1.0 / t).abs() <= 1e-12 * (1.0 / t).max(1.0));
    }

    #[test]
    fn trigamma_recurrence(t in 1e-2f64..1e6) {
        let lhs = trigamma(t).unwrap() - trigamma(t + 1.0).unwrap();
        let rhs = 1.0 / (t * t);
        prop_assert!((lhs - rhs).abs() <= 1e-11 * rhs.max(1.0));
    }

    #[test]
    fn gauge_vanishes_below_knot(n in 1u32..=3, frac in 0.0f64..=1.0) {
        let knot = iter_exp(n - 1).unwrap();
        prop_assert_eq!(g_n(level(n), frac * knot).unwrap(), 0.0);
    }
}
