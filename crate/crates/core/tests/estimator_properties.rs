use knn_kl::estimators::{entropy_estimate_with, kl_estimate_with, EstimateOptions};
use knn_kl::knn::SearchMethod;
use knn_kl::models::SeededStream;
use knn_kl::special::{digamma, unit_ball_volume};
use knn_kl::{
    entropy_estimate, kl_estimate, kl_estimate_equal_orders, DensityModel, EntropyOrders,
    OrderSpec, PointSample,
};
use proptest::prelude::*;

fn kth_distance(set: &PointSample, q: &[f64], k: usize, skip: Option<usize>) -> f64 {
    let mut d: Vec<f64> = (0..set.len())
        .filter(|&j| Some(j) != skip)
        .map(|j| {
            set.point(j)
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d[k - 1]
}

/// The divergence estimator straight from its definition, with naive neighbor search.
fn naive_kl(x: &PointSample, y: &PointSample, k: usize, l: usize) -> f64 {
    let (n, m, d) = (x.len() as f64, y.len() as f64, x.dim() as i32);
    let mut sum = 0.0;
    for i in 0..x.len() {
        let r = kth_distance(x, x.point(i), k, Some(i));
        let v = kth_distance(y, x.point(i), l, None);
        sum += (m * v.powi(d) / ((n - 1.0) * r.powi(d))).ln();
    }
    digamma(k as f64).unwrap() - digamma(l as f64).unwrap() + sum / n
}

fn naive_entropy(x: &PointSample, k: usize) -> f64 {
    let (n, d) = (x.len() as f64, x.dim());
    let vol = unit_ball_volume(d).unwrap();
    let mut sum = 0.0;
    for i in 0..x.len() {
        let r = kth_distance(x, x.point(i), k, Some(i));
        sum += (r.powi(d as i32) * vol * (n - 1.0) / digamma(k as f64).unwrap().exp()).ln();
    }
    sum / n
}

fn gaussian_sample(dim: usize, n: usize, shift: f64, seed: u64, stream: u64) -> PointSample {
    let model = DensityModel::isotropic_gaussian(vec![shift; dim], 1.0).unwrap();
    model.sample(n, SeededStream::new(seed, stream)).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn pair_strategy() -> impl Strategy<Value = (PointSample, PointSample, u64)> {
    (1usize..4, 8usize..80, 8usize..80, any::<u64>()).prop_map(|(d, n, m, seed)| {
        (
            gaussian_sample(d, n, 0.0, seed, 0),
            gaussian_sample(d, m, 0.7, seed, 1),
            seed,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_naive_definition((x, y, _) in pair_strategy(), k in 1usize..4, l in 1usize..4) {
        let est = kl_estimate(&x, &y, &OrderSpec::uniform(k, l)).unwrap();
        prop_assert!(close(est.value, naive_kl(&x, &y, k, l), 1e-10));
        let h = entropy_estimate(&x, &EntropyOrders::Uniform { k }).unwrap();
        prop_assert!(close(h.value, naive_entropy(&x, k), 1e-10));
    }

    #[test]
    fn per_sample_constant_orders_agree((x, y, _) in pair_strategy(), k in 1usize..4, l in 1usize..4) {
        let n = x.len();
        let uni = kl_estimate(&x, &y, &OrderSpec::uniform(k, l)).unwrap();
        let per = kl_estimate(&x, &y, &OrderSpec::PerSample { ks: vec![k; n], ls: vec![l; n] }).unwrap();
        prop_assert!(close(uni.value, per.value, 1e-12));
        let hu = entropy_estimate(&x, &EntropyOrders::Uniform { k }).unwrap();
        let hp = entropy_estimate(&x, &EntropyOrders::PerSample { ks: vec![k; n] }).unwrap();
        prop_assert!(close(hu.value, hp.value, 1e-12));
    }

    #[test]
    fn equal_orders_form_agrees((x, y, _) in pair_strategy(), k in 1usize..5) {
        let general = kl_estimate(&x, &y, &OrderSpec::uniform(k, k)).unwrap();
        let equal = kl_estimate_equal_orders(&x, &y, k).unwrap();
        prop_assert!(close(general.value, equal.value, 1e-12));
    }

    #[test]
    fn search_methods_agree((x, y, _) in pair_strategy()) {
        let orders = OrderSpec::uniform(2, 3);
        let opts = |method| EstimateOptions { method, keep_terms: false };
        let a = kl_estimate_with(&x, &y, &orders, opts(SearchMethod::KdTree)).unwrap();
        let b = kl_estimate_with(&x, &y, &orders, opts(SearchMethod::BruteForce)).unwrap();
        prop_assert_eq!(a.value, b.value);
        let ea = entropy_estimate_with(&x, &EntropyOrders::Uniform { k: 2 }, opts(SearchMethod::KdTree)).unwrap();
        let eb = entropy_estimate_with(&x, &EntropyOrders::Uniform { k: 2 }, opts(SearchMethod::BruteForce)).unwrap();
        prop_assert_eq!(ea.value, eb.value);
    }

    #[test]
    fn recombined_terms_reproduce_value((x, y, _) in pair_strategy()) {
        let est = kl_estimate(&x, &y, &OrderSpec::uniform(1, 2)).unwrap();
        prop_assert!(close(est.recombine().unwrap(), est.value, 1e-12));
        let h = entropy_estimate(&x, &EntropyOrders::Uniform { k: 3 }).unwrap();
        prop_assert!(close(h.recombine().unwrap(), h.value, 1e-12));
    }

    #[test]
    fn invariant_under_rigid_motion((x, y, seed) in pair_strategy()) {
        // Rotation in the first coordinate plane plus a translation.
        let angle = (seed % 628) as f64 / 100.0;
        let (c, s) = (angle.cos(), angle.sin());
        let motion = |p: &[f64], o: &mut [f64]| {
            o.copy_from_slice(p);
            if p.len() >= 2 {
                o[0] = c * p[0] - s * p[1];
                o[1] = s * p[0] + c * p[1];
            }
            o.iter_mut().for_each(|v| *v += 3.5);
        };
        let mx = x.map_points(x.dim(), motion).unwrap();
        let my = y.map_points(y.dim(), motion).unwrap();
        let orders = OrderSpec::uniform(1, 1);
        let a = kl_estimate(&x, &y, &orders).unwrap().value;
        let b = kl_estimate(&mx, &my, &orders).unwrap().value;
        prop_assert!(close(a, b, 1e-9));
        let ha = entropy_estimate(&x, &EntropyOrders::Uniform { k: 1 }).unwrap().value;
        let hb = entropy_estimate(&mx, &EntropyOrders::Uniform { k: 1 }).unwrap().value;
        prop_assert!(close(ha, hb, 1e-9));
    }

    #[test]
    fn scaling_shifts_entropy_and_cancels_in_divergence((x, y, _) in pair_strategy(), c in 0.01f64..100.0) {
        let scale = |p: &[f64], o: &mut [f64]| o.iter_mut().zip(p).for_each(|(o, v)| *o = c * v);
        let sx = x.map_points(x.dim(), scale).unwrap();
        let sy = y.map_points(y.dim(), scale).unwrap();
        let h = entropy_estimate(&x, &EntropyOrders::Uniform { k: 2 }).unwrap().value;
        let hs = entropy_estimate(&sx, &EntropyOrders::Uniform { k: 2 }).unwrap().value;
        prop_assert!(close(hs, h + x.dim() as f64 * c.ln(), 1e-9));
        let orders = OrderSpec::uniform(2, 1);
        let kl = kl_estimate(&x, &y, &orders).unwrap().value;
        let kls = kl_estimate(&sx, &sy, &orders).unwrap().value;
        prop_assert!(close(kl, kls, 1e-9));
    }
}

#[test]
fn same_generator_divergence_is_near_zero() {
    let x = gaussian_sample(1, 5000, 0.0, 11, 0);
    let y = gaussian_sample(1, 5000, 0.0, 11, 1);
    let est = kl_estimate(&x, &y, &OrderSpec::uniform(1, 1)).unwrap();
    assert!(est.value.abs() <= 0.1, "estimate {}", est.value);
}

#[test]
fn mixed_orders_report_orders_and_sizes() {
    let x = gaussian_sample(2, 30, 0.0, 3, 0);
    let y = gaussian_sample(2, 40, 1.0, 3, 1);
    let ks: Vec<usize> = (0..30).map(|i| 1 + i % 3).collect();
    let ls: Vec<usize> = (0..30).map(|i| 1 + i % 4).collect();
    let est = kl_estimate(
        &x,
        &y,
        &OrderSpec::PerSample {
            ks: ks.clone(),
            ls: ls.clone(),
        },
    )
    .unwrap();
    assert_eq!((est.n, est.m, est.d), (30, Some(40), 2));
    let expected_offset = ks
        .iter()
        .zip(&ls)
        .map(|(&k, &l)| digamma(k as f64).unwrap() - digamma(l as f64).unwrap())
        .sum::<f64>()
        / 30.0;
    assert!((est.digamma_offset - expected_offset).abs() < 1e-12);
    assert!(close(est.recombine().unwrap(), est.value, 1e-12));
}
