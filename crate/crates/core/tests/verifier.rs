use adalb::density_lab::*;
use adalb::lb_verifier::binomial::ln_dbinom;
use adalb::lb_verifier::*;
use adalb::ClassParams;
use proptest::prelude::*;
use std::f64::consts::E;
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

fn nonneg() -> PerturbationFamily {
    build_family_nonneg(1, 100, 10, 0.5, 0.9).unwrap()
}

/// `ln C(m, k) + k ln p + (m − k) ln(1 − p)` by summing logarithms.
fn ln_binom_direct(k: u64, m: u64, p: f64) -> f64 {
    let lc: f64 = (1..=k).map(|i| ((m - k + i) as f64).ln() - (i as f64).ln()).sum();
    lc + k as f64 * p.ln() + (m - k) as f64 * (1.0 - p).ln()
}

prop_compose! {
    fn s_vector()(m in 1usize..=12)(s in prop::collection::vec(0.0f64..1.0, m), total in 0.0f64..0.95) -> Vec<f64> {
        let sum: f64 = s.iter().sum::<f64>().max(1e-300);
        s.iter().map(|v| v / sum * total).collect()
    }
}

proptest! {
    #[test]
    fn exact_second_moment_below_cosh_product(s in s_vector(), n in 1u64..300) {
        let exact = exact_enum_log(&s, n).unwrap();
        prop_assert!(exact <= cosh_product_log(&s, n, 1) + 1e-12);
        prop_assert!(exact >= -1e-12);
    }

    #[test]
    fn exact_second_moment_symmetries(s in s_vector(), n in 1u64..100, rot in 0usize..12) {
        let base = exact_enum_log(&s, n).unwrap();
        let mut p = s.clone();
        let len = p.len();
        p.rotate_left(rot % len);
        p.reverse();
        let flipped: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((exact_enum_log(&p, n).unwrap() - base).abs() <= 1e-12 * (1.0 + base.abs()));
        prop_assert!((exact_enum_log(&flipped, n).unwrap() - base).abs() <= 1e-12 * (1.0 + base.abs()));
    }

    #[test]
    fn collapse_matches_enumeration(m in 1u64..=20, frac in 0.0f64..0.9, n in 1u64..2000) {
        let s = frac / m as f64;
        let e = exact_enum_log(&vec![s; m as usize], n).unwrap();
        let c = exact_equal_log(s, m, n).unwrap();
        // equal logs to 1e-10 is equal values to 1e-10 relative
        prop_assert!((e - c).abs() < 1e-10, "{} vs {}", e, c);
    }

    #[test]
    fn certificate_monotone(kappa in 0.2f64..1.0, a in 1.0f64..10.0, d1 in 0.0f64..5.0, d2 in 0.0f64..5.0, da in 0.0f64..5.0) {
        let ez2 = kappa * kappa * (1.0 + d1);
        let lo = certificate_from_parts(kappa, ez2, a, R_ZERO_LAMBDA).unwrap();
        let more_ez2 = certificate_from_parts(kappa, ez2 + d2, a, R_ZERO_LAMBDA).unwrap();
        let more_alpha = certificate_from_parts(kappa, ez2, a + da, R_ZERO_LAMBDA).unwrap();
        prop_assert!(more_ez2.final_bound <= lo.final_bound + 1e-15);
        prop_assert!(more_alpha.final_bound >= lo.final_bound - 1e-15);
        prop_assert!(lo.final_bound <= ((kappa - R_ZERO_LAMBDA) / E).max(0.0) + 1e-15);
    }

    #[test]
    fn certificate_identity_at_minimal_second_moment(kappa in 0.13f64..1.0, a in 1.0f64..100.0) {
        let c = certificate_from_parts(kappa, kappa * kappa, a, R_ZERO_LAMBDA).unwrap();
        prop_assert!((c.final_bound - (kappa - 0.125) / E).abs() <= 1e-15);
    }

    #[test]
    fn binomial_log_pmf(m in 1u64..2000, kf in 0.0f64..1.0, p in 0.01f64..0.99) {
        let k = (kf * m as f64) as u64;
        let direct = ln_binom_direct(k, m, p);
        prop_assert!((ln_dbinom(k, m, p) - direct).abs() <= 1e-11 * (1.0 + direct.abs()));
    }
}

#[test]
fn second_moment_below_kappa_squared_is_rejected() {
    assert!(certificate_from_parts(0.5, 0.2, 4.0, R_ZERO_LAMBDA).is_err());
    assert!(certificate_from_parts(0.0, 1.0, 4.0, R_ZERO_LAMBDA).is_err());
}

#[test]
fn named_constants_carry_anchors() {
    let c = certificate_from_parts(1.0, 1.0, 2.0, R_ZERO_LAMBDA).unwrap();
    let find = |n: &str| c.constants.iter().find(|k| k.name == n).unwrap().clone();
    assert_eq!(find("class_mass").value, 230.0 / 231.0);
    assert!(find("class_mass").anchor.contains("230/231"));
    assert_eq!(find("kappa_general").value, 143.0 / 144.0);
    assert_eq!(find("bad_event_mass").value, 1.0 / 64.0);
    assert_eq!(find("asymptotic_certificate").value, 107.0 / (144.0 * E));
    assert!((c.asymptote - 0.27336).abs() < 1e-5);
    // the excluded masses fit in 1/64
    assert!(1.0 / 144.0 + 2.0 / 231.0 <= 1.0 / 64.0);
}

#[test]
fn plateau_family_assumptions_and_budget() {
    let f = small();
    let check = verify_assumptions(f, 1000, 100, 11).unwrap();
    assert!(check.all_pass, "{check:?}");
    assert_eq!(check.a5_branch, BranchKind::ZeroLambda);
    assert!(check.a3_class_mass.threshold == 230.0 / 231.0 && check.a4_separation_mass.threshold == 230.0 / 231.0);
    let exact = chi_budget(f, 1000, ChiMode::ExactEnum, &ChiOptions::default()).unwrap();
    let cosh = chi_budget(f, 1000, ChiMode::CoshProduct, &ChiOptions::default()).unwrap();
    assert!(exact.exact && !cosh.exact);
    assert!(exact.value <= cosh.value);
    assert!(exact.value >= 1.0);
    let cert = certificate(f, &exact).unwrap();
    assert!(cert.ez2 >= cert.kappa * cert.kappa);
    assert!(cert.final_bound <= (cert.kappa - cert.r_term) / E);
    assert!(cert.final_bound > 0.3, "{}", cert.final_bound);
    assert!(chi_budget(f, 1000, ChiMode::GeneralBranchBound, &ChiOptions::default()).is_err());
}

#[test]
fn nonnegative_family_general_branch() {
    let f = nonneg();
    let check = verify_assumptions(&f, 100, 200, 5).unwrap();
    assert!(check.all_pass, "{check:?}");
    assert_eq!(check.a5_branch, BranchKind::NonnegUnit);
    assert!(check.a5_sigma_m.value <= 0.25 && check.a5_frak_s.value <= 1.0);
    let opts = ChiOptions { alpha_sq: Some(100.0), mc_reps: 50_000, seed: 3, ..ChiOptions::default() };
    let chi = chi_budget(&f, 100, ChiMode::GeneralBranchBound, &opts).unwrap();
    assert_eq!(chi.moment_premise, Some(true));
    assert!(chi.value >= 1.0 && chi.moment_exact.unwrap() >= 1.0);
    let se = chi.mc_stderr.unwrap();
    let cert = certificate(&f, &chi).unwrap();
    assert!(cert.kappa >= 143.0 / 144.0, "{}", cert.kappa);
    assert!(cert.final_bound > 0.3, "{}", cert.final_bound);
    assert!(se < 1e-3);
    // without α² there is nothing to compare against
    assert!(chi_budget(&f, 100, ChiMode::GeneralBranchBound, &ChiOptions::default()).is_err());
}

#[test]
fn sandwich_on_both_branches() {
    let zero = check_lemma_sandwich(small(), 20, 2000, 1).unwrap();
    assert!(zero.zero_lambda && zero.pass);
    assert_eq!(zero.max_abs_diff, 0.0);
    let nn = check_lemma_sandwich(&nonneg(), 100, 10_000, 2).unwrap();
    assert!(!nn.zero_lambda && nn.pass, "{nn:?}");
    assert_eq!(nn.filtered, 100);
    assert!(nn.worst_upper_margin >= 0.0 && nn.worst_lower_margin >= 0.0);
}

#[test]
fn moment_bound_cases() {
    let cases = draw_wjk_cases(20, 77);
    assert_eq!(cases, draw_wjk_cases(20, 77));
    for (i, c) in cases.iter().enumerate() {
        let r = check_lemma_wjk(c.j, &c.a, c.b, c.t, 20_000, i as u64).unwrap();
        assert!(r.premise <= 1.0 + 1e-12);
        assert!(r.pass, "{r:?}");
        if let Some(ex) = r.exact {
            assert!((r.w_hat - ex).abs() <= 5.0 * r.stderr + 1e-12, "{r:?}");
        }
    }
    let edge = check_lemma_wjk(1, &[1.0], 0.1, 1.0, 1000, 0).unwrap();
    assert!((edge.exact.unwrap() - 1.1).abs() < 1e-12);
    assert!(check_lemma_wjk(1, &[1.0], 0.2, 1.0, 1000, 0).is_err());
}
