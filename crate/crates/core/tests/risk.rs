use adalb::density_lab::*;
use adalb::risk_sim::*;
use adalb::ClassParams;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn pair() -> (ClassParams, ClassParams) {
    (
        ClassParams::isotropic(1, 0.4, 2.0, f64::INFINITY, 1.0, 1.0).unwrap(),
        ClassParams::isotropic(1, 0.45, 2.0, f64::INFINITY, 1.0, 1.0).unwrap(),
    )
}

fn small() -> &'static PerturbationFamily {
    static F: OnceLock<PerturbationFamily> = OnceLock::new();
    F.get_or_init(|| {
        let (t, tp) = pair();
        build_family_i(&t, &tp, 1000, &FamilyOptions::default()).unwrap()
    })
}

fn biweight(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        15.0 / 16.0 * (1.0 - u * u).powi(2)
    }
}

fn uniform_sample(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Sample {
    Sample { d, points: (0..n * d).map(|_| rng.gen::<f64>()).collect() }
}

/// `(n(n−1))⁻¹ Σ_{i≠j} Π h⁻¹K(Δ/h)` over all ordered pairs.
fn brute_force(s: &Sample, h: &[f64]) -> f64 {
    let n = s.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += (0..s.d).map(|l| biweight((s.row(i)[l] - s.row(j)[l]) / h[l]) / h[l]).product::<f64>();
            }
        }
    }
    acc / (n * (n - 1)) as f64
}

prop_compose! {
    fn sample_and_h()(d in 1usize..=3, n in 2usize..80)(
        pts in prop::collection::vec(-1.0f64..1.0, n * d),
        h in prop::collection::vec(0.01f64..2.0, d),
        d in Just(d),
    ) -> (Sample, Vec<f64>) {
        (Sample { d, points: pts }, h)
    }
}

proptest! {
    #[test]
    fn estimate_invariant_under_relabeling((s, h) in sample_and_h(), seed in any::<u64>()) {
        let spec = EstimatorSpec::biweight(h.clone()).unwrap();
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = Sample { d: s.d, points: idx.iter().flat_map(|&i| s.row(i).to_vec()).collect() };
        let a = estimate_l2_squared(&s, &spec).unwrap();
        let b = estimate_l2_squared(&permuted, &spec).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{} vs {}", a, b);
        let brute = brute_force(&s, &h);
        prop_assert!((a - brute).abs() <= 1e-10 * brute.abs().max(1e-12), "{} vs {}", a, brute);
        prop_assert!(a >= 0.0);
        prop_assert_eq!(estimate_l2(&s, &spec).unwrap(), a.sqrt());
    }
}

#[test]
fn two_points_single_pair() {
    let s = Sample { d: 2, points: vec![0.1, 0.5, 0.35, 0.2] };
    let h = [0.5, 0.4];
    let spec = EstimatorSpec::biweight(h.to_vec()).unwrap();
    let expect = biweight(-0.25 / 0.5) / 0.5 * biweight(0.3 / 0.4) / 0.4;
    assert!((estimate_l2_squared(&s, &spec).unwrap() - expect).abs() < 1e-15);
    assert!(estimate_l2(&Sample { d: 1, points: vec![0.3] }, &EstimatorSpec::biweight(vec![0.1]).unwrap()).is_err());
    assert!(EstimatorSpec::biweight(vec![0.0]).is_err());
    assert!(EstimatorSpec::biweight(vec![f64::NAN]).is_err());
}

#[test]
fn distant_points_estimate_zero() {
    let s = Sample { d: 1, points: vec![0.0, 1.0, 2.0, 3.0] };
    for clamp in [true, false] {
        let spec = EstimatorSpec { clamp, ..EstimatorSpec::biweight(vec![0.5]).unwrap() };
        assert_eq!(estimate_l2(&s, &spec).unwrap(), 0.0);
    }
}

#[test]
fn uniform_density_mean_approaches_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (n, reps) = (2000, 200);
    let mut last_gap = f64::INFINITY;
    for h in [0.1, 0.01, 0.001] {
        let spec = EstimatorSpec::biweight(vec![h]).unwrap();
        let vals: Vec<f64> = (0..reps).map(|_| estimate_l2_squared(&uniform_sample(n, 1, &mut rng), &spec).unwrap()).collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        // ∫ K_h(t)(1 − |t|) dt = 1 − h ∫|u|K(u) du = 1 − 5h/16
        assert!((mean - (1.0 - 5.0 * h / 16.0)).abs() < 3.0 * se + 1e-4, "h {h}: {mean} ± {se}");
        let gap = (mean - 1.0).abs();
        if h == 0.001 {
            assert!(gap < 3.0 * se + 2e-4, "{mean} ± {se}");
        }
        assert!(gap < last_gap + 3.0 * se);
        last_gap = gap;
    }
}

#[test]
fn huge_bandwidth_risk_is_the_squared_norm() {
    let f = small();
    let spec = EstimatorSpec::biweight(vec![1e9]).unwrap();
    let r = empirical_risk(f, None, 200, 8, &spec, 1).unwrap();
    assert!((r.mse / (r.truth * r.truth) - 1.0).abs() < 1e-3, "{} vs {}", r.mse, r.truth * r.truth);
}

#[test]
fn single_replication_has_no_stderr_and_runs_repeat() {
    let f = small();
    let spec = EstimatorSpec::biweight(vec![0.5]).unwrap();
    let one = empirical_risk(f, None, 300, 1, &spec, 9).unwrap();
    assert!(one.stderr.is_none());
    let a = empirical_risk(f, None, 300, 12, &spec, 9).unwrap();
    let b = empirical_risk(f, None, 300, 12, &spec, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.stderr.is_some() && a.mse >= 0.0);
    assert_ne!(a, empirical_risk(f, None, 300, 12, &spec, 10).unwrap());
}

#[test]
fn risk_symmetric_under_sign_flip() {
    let f = small();
    let y = f.prior.draw(&mut ChaCha8Rng::seed_from_u64(4), f.m as usize);
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    let specs = bandwidth_grid(1, 1e-2, 1.0, 3).unwrap();
    let a = empirical_risk_many(f, Some(&y), 1000, 100, &specs, 1).unwrap();
    let b = empirical_risk_many(f, Some(&neg), 1000, 100, &specs, 2).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.truth, q.truth);
        let se = p.stderr.unwrap().hypot(q.stderr.unwrap());
        assert!((p.mse - q.mse).abs() <= 4.0 * se, "{} vs {} (se {se})", p.mse, q.mse);
    }
}

#[test]
fn negative_densities_are_refused() {
    let f = small();
    let y = vec![-1e6; f.m as usize];
    assert!(empirical_risk(f, Some(&y), 10, 2, &EstimatorSpec::biweight(vec![0.5]).unwrap(), 0).is_err());
}

#[test]
fn two_class_table_invariants() {
    let (t, tp) = pair();
    let specs = bandwidth_grid(1, 1e-3, 1.0, 4).unwrap();
    let opts = ExperimentOptions::default();
    let tab = two_class_experiment(&t, &tp, &[1000], 20, &specs, &opts, 5).unwrap();
    let again = two_class_experiment(&t, &tp, &[1000], 20, &specs, &opts, 5).unwrap();
    assert_eq!(serde_json::to_string(&tab).unwrap(), serde_json::to_string(&again).unwrap());
    assert_eq!(tab.label, "estimator-specific upper evidence");
    assert_eq!(tab.rows.len(), specs.len() * (1 + opts.y_draws));
    assert!(tab.rows.iter().all(|r| r.mse >= 0.0));
    for c in &tab.combined_rows {
        assert!((c.combined - (c.term_prime + c.term_theta)).abs() <= 1e-12 * c.combined);
        assert!((c.combined_display - (c.term_prime + c.term_theta_display)).abs() <= 1e-12 * c.combined_display);
    }
    assert!(tab.all_above_certificate());
    assert!(!tab.any_both_terms_small());
    let csv = tab.to_csv();
    assert!(csv.starts_with("density_id,n,reps,mse,stderr"));
    assert_eq!(csv.lines().count(), 1 + tab.rows.len());
    assert!(two_class_experiment(&t, &tp, &[1000, 1000], 2, &specs, &opts, 5).is_err());
}

#[test]
fn derived_seeds_differ() {
    let mut seen = std::collections::HashSet::new();
    for a in 0..20u64 {
        for b in 0..20u64 {
            assert!(seen.insert(derive_seed(7, &[a, b])));
        }
    }
    assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
}
