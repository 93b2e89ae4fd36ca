//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use adalb::density_lab::*;
use adalb::lb_verifier::*;
use adalb::nikolskii::{membership_check, BumpSum, MembershipOptions};
use adalb::numerics::quadrature::{gl_panels, merge_breaks};
use adalb::param_space::*;
use adalb::risk_sim::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn theta() -> ClassParams {
    ClassParams::isotropic(1, 0.4, 2.0, f64::INFINITY, 1.0, 1.0).unwrap()
}

fn theta_prime() -> ClassParams {
    ClassParams::isotropic(1, 0.45, 2.0, f64::INFINITY, 1.0, 1.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn random_theta(rng: &mut ChaCha8Rng) -> ClassParams {
    let d = rng.gen_range(1..=4usize);
    let r_draw = |rng: &mut ChaCha8Rng| if rng.gen::<f64>() < 0.2 { f64::INFINITY } else { rng.gen_range(1.0..8.0) };
    if rng.gen::<bool>() {
        let (b, r) = (rng.gen_range(0.05..4.0), r_draw(rng));
        ClassParams::isotropic(d, b, r, f64::INFINITY, 1.0, 1.0).unwrap()
    } else {
        let beta = (0..d).map(|_| rng.gen_range(0.05..4.0)).collect();
        let r = (0..d).map(|_| r_draw(rng)).collect();
        let q = if rng.gen::<f64>() < 0.3 { f64::INFINITY } else { rng.gen_range(2.0..12.0) };
        ClassParams::new(beta, r, q, vec![1.0; d], 1.0).unwrap()
    }
}

fn rate_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_q, mut worst_iso, mut iso_count, mut label_bad) = (0.0f64, 0.0f64, 0usize, 0usize);
    for _ in 0..10_000 {
        let t = random_theta(&mut rng);
        let s = smoothness_diagnostics(&t);
        let holds = [s.tau_2 >= 1.0, s.tau_2 < 1.0 && s.tau_q < 0.0, s.tau_2 < 1.0 && s.tau_q >= 0.0];
        if holds.iter().filter(|h| **h).count() != 1 {
            label_bad += 1;
        }
        let mut inf = t.clone();
        inf.q = f64::INFINITY;
        let si = smoothness_diagnostics(&inf);
        worst_q = worst_q.max(rel(exponent_general(&si), exponent_q_infinity(&si)));
        if t.is_isotropic() {
            iso_count += 1;
            worst_iso = worst_iso.max(rel(exponent_q_infinity(&si), exponent_isotropic(t.d, t.beta[0], t.r[0])));
        }
    }
    Outcome {
        pass: worst_q <= 1e-12 && worst_iso <= 1e-12 && label_bad == 0,
        detail: format!("max rel diff general vs q=inf {worst_q:.1e}, q=inf vs isotropic {worst_iso:.1e} ({iso_count} isotropic), label violations {label_bad}"),
    }
}

fn pointwise_mass(f: &PerturbationFamily, y: &[f64]) -> f64 {
    let shape = f.shape.factor_breaks(0);
    let mut breaks = f.base.breaks(0);
    let mut c = [0.0];
    for m in 0..f.m {
        f.lattice.center(m, &mut c);
        breaks.extend(shape.iter().map(|t| c[0] + t * f.sigma[0]));
    }
    gl_panels(&merge_breaks(breaks), 2, |x| f.eval(y, &[x]).unwrap())
}

fn construction_check() -> Outcome {
    let f = build_family_i(&theta(), &theta_prime(), 10_000, &FamilyOptions::default()).unwrap();
    let check = verify_assumptions(&f, 10_000, 200, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ys: Vec<Vec<f64>> = (0..200).map(|_| f.prior.draw(&mut rng, f.m as usize)).collect();
    let worst_mass = ys.iter().map(|y| (f.integral(y).unwrap() - 1.0).abs()).fold(0.0, f64::max);
    let quad_mass = (pointwise_mass(&f, &ys[0]) - 1.0).abs();
    let (lo, hi) = (f.base.breaks(0)[0], *f.base.breaks(0).last().unwrap());
    let grid = 100_000;
    let mut min_val = f64::INFINITY;
    for y in ys.iter().take(5) {
        for i in 0..grid {
            let x = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
            min_val = min_val.min(f.eval(y, &[x]).unwrap());
        }
    }
    // f_y = f₀ + F_y with both halves in the half-radius balls
    let opts = MembershipOptions::default();
    let base_half = [theta(), theta_prime()].iter().all(|t| membership_check(&f.base, t, 0.5, &opts).unwrap().verdict);
    let bumps_half = ys.iter().take(3).all(|y| membership_check(&BumpSum::new(&f, y).unwrap(), &theta(), 0.5, &opts).unwrap().verdict);
    let pass = check.all_pass && worst_mass <= 1e-6 && quad_mass <= 1e-6 && min_val >= 0.0 && base_half && bumps_half;
    Outcome {
        pass,
        detail: format!(
            "M = {}, kappa = {:.4e}; assumptions {}; max |int f_y - 1| {worst_mass:.1e} (pointwise quadrature {quad_mass:.1e}); min f_y on 1e5 grid {min_val:.3e}; f0 and F_y in half balls {} {}",
            f.m,
            f.constants.kappa,
            if check.all_pass { "all pass" } else { "FAIL" },
            base_half,
            bumps_half
        ),
    }
}

fn chi_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_enum = 0.0f64;
    for m in 1..=20u64 {
        let s = rng.gen_range(0.0..0.9) / m as f64;
        let n = rng.gen_range(1..5000u64);
        let e = exact_enum_log(&vec![s; m as usize], n).unwrap();
        let c = exact_equal_log(s, m, n).unwrap();
        worst_enum = worst_enum.max((e - c).abs());
    }
    let mut worst_ref = 0.0f64;
    for &m in &[50u64, 1_000, 100_000, 1_000_000] {
        for &n in &[1_000u64, 1_000_000] {
            let s = rng.gen_range(0.0..0.95) / m as f64;
            worst_ref = worst_ref.max((exact_equal_log(s, m, n).unwrap() - exact_equal_reference_log(s, m, n).unwrap()).abs());
        }
    }
    let mut cosh_bad = 0;
    for _ in 0..100 {
        let m = rng.gen_range(1..=16usize);
        let total = rng.gen_range(0.0..0.95);
        let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let sum: f64 = raw.iter().sum();
        let s: Vec<f64> = raw.iter().map(|v| v / sum * total).collect();
        let n = rng.gen_range(1..500u64);
        if exact_enum_log(&s, n).unwrap() > cosh_product_log(&s, n, 1) + 1e-12 {
            cosh_bad += 1;
        }
    }
    let ns = [1_000u64, 10_000, 100_000, 1_000_000];
    let ratios: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let f = build_family_i(&theta(), &theta_prime(), n, &FamilyOptions::default()).unwrap();
            chi_budget(&f, n, ChiMode::ExactEnum, &ChiOptions::default()).unwrap().ratio
        })
        .collect();
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    Outcome {
        pass: worst_enum <= 1e-10 && worst_ref <= 1e-10 && cosh_bad == 0 && decreasing,
        detail: format!(
            "enumeration vs collapse {worst_enum:.1e} (log), collapse vs reference up to M = 1e6 {worst_ref:.1e} (log); ExactEnum > CoshProduct in {cosh_bad}/100; ratio along n {:?}",
            ratios.iter().map(|r| format!("{r:.5}")).collect::<Vec<_>>()
        ),
    }
}

fn certificate_check() -> Outcome {
    let n = 1_000_000;
    let f = build_family_i(&theta(), &theta_prime(), n, &FamilyOptions::default()).unwrap();
    let chi = chi_budget(&f, n, ChiMode::ExactEnum, &ChiOptions::default()).unwrap();
    let cert = certificate(&f, &chi).unwrap();
    let forced = certificate_from_parts(cert.kappa, cert.kappa * cert.kappa, cert.alpha_sq, cert.r_term).unwrap();
    let identity = (forced.final_bound - (cert.kappa - 0.125) / std::f64::consts::E).abs();
    Outcome {
        pass: cert.final_bound >= 0.3 && identity <= 1e-15 && cert.r_term == 0.125 && cert.kappa == 1.0,
        detail: format!(
            "final {:.5} (asymptote {:.4}), ez2 {:.5}, alpha^2 {:.5}; forced ez2 = kappa^2 gives {:.15} vs (kappa - 1/8)/e, diff {identity:.1e}",
            cert.final_bound, cert.asymptote, cert.ez2, cert.alpha_sq, forced.final_bound
        ),
    }
}

fn moment_lemma() -> Outcome {
    let cases = draw_wjk_cases(20, 2024);
    let mut worst: f64 = 0.0;
    let mut fails = 0;
    for (i, c) in cases.iter().enumerate() {
        let r = check_lemma_wjk(c.j, &c.a, c.b, c.t, 100_000, 1000 + i as u64).unwrap();
        worst = worst.max(r.w_hat + 3.0 * r.stderr);
        if !r.pass || r.premise > 1.0 + 1e-12 {
            fails += 1;
        }
    }
    let edge = check_lemma_wjk(1, &[1.0], 0.1, 1.0, 100_000, 1).unwrap();
    let edge_err = (edge.w_hat - 1.1).abs();
    Outcome {
        pass: fails == 0 && edge_err <= 1e-3,
        detail: format!("max W + 3 stderr over 20 cases {worst:.5} (bound 2), failures {fails}; boundary case W = {:.6}", edge.w_hat),
    }
}

fn sandwich_lemma() -> Outcome {
    let zero_family = build_family_i(&theta(), &theta_prime(), 1_000, &FamilyOptions::default()).unwrap();
    let zero = check_lemma_sandwich(&zero_family, 100, 10_000, 1).unwrap();
    let nn_family = build_family_nonneg(1, 100, 10, 0.5, 0.9).unwrap();
    let a5 = verify_assumptions(&nn_family, 100, 200, 2).unwrap();
    let nn = check_lemma_sandwich(&nn_family, 100, 10_000, 3).unwrap();
    Outcome {
        pass: zero.pass && zero.max_abs_diff <= f64::EPSILON && a5.all_pass && nn.pass && nn.filtered == 100,
        detail: format!(
            "zero-mean max |f*_y - f_y| {:.1e}; nonnegative family assumptions {}, {} filtered draws, margins upper {:.3e} lower {:.3e}",
            zero.max_abs_diff, a5.all_pass, nn.filtered, nn.worst_upper_margin, nn.worst_lower_margin
        ),
    }
}

fn risk_simulation() -> Outcome {
    let specs = bandwidth_grid(1, 1e-3, 1.0, 6).unwrap();
    let tab = two_class_experiment(&theta(), &theta_prime(), &[1_000, 10_000], 100, &specs, &ExperimentOptions::default(), 42).unwrap();
    let mut lines = Vec::new();
    for s in &tab.per_n {
        let rows: Vec<&CombinedRow> = tab.combined_rows.iter().filter(|r| r.n == s.n).collect();
        let slack = rows.iter().map(|r| r.combined - (s.certificate.final_bound - 3.0 * r.combined_stderr)).fold(f64::INFINITY, f64::min);
        let disp = rows.iter().map(|r| r.combined_display).fold(f64::INFINITY, f64::min);
        lines.push(format!(
            "n = {}: certificate {:.4}, min combined {:.3e} (margin {:.3e}), min with the display weight {:.3e}",
            s.n, s.certificate.final_bound, s.min_combined, slack, disp
        ));
    }
    Outcome {
        pass: tab.all_above_certificate() && !tab.any_both_terms_small(),
        detail: format!("{}; {}", lines.join("; "), tab.label),
    }
}

fn determinism() -> Outcome {
    let specs = bandwidth_grid(1, 1e-2, 1.0, 3).unwrap();
    let run = || {
        let tab = two_class_experiment(&theta(), &theta_prime(), &[1_000], 10, &specs, &ExperimentOptions::default(), 9).unwrap();
        let fam = build_family_i(&theta(), &theta_prime(), 1_000, &FamilyOptions::default()).unwrap();
        let check = verify_assumptions(&fam, 1_000, 100, 9).unwrap();
        let nn = build_family_nonneg(1, 100, 10, 0.5, 0.9).unwrap();
        let opts = ChiOptions { alpha_sq: Some(100.0), mc_reps: 10_000, seed: 9, ..ChiOptions::default() };
        let chi = chi_budget(&nn, 100, ChiMode::GeneralBranchBound, &opts).unwrap();
        let sandwich = check_lemma_sandwich(&nn, 20, 1000, 9).unwrap();
        let wjk: Vec<WjkReport> = draw_wjk_cases(4, 9).iter().map(|c| check_lemma_wjk(c.j, &c.a, c.b, c.t, 2000, 9).unwrap()).collect();
        [
            tab.to_csv(),
            serde_json::to_string(&tab).unwrap(),
            serde_json::to_string(&check).unwrap(),
            serde_json::to_string(&chi).unwrap(),
            serde_json::to_string(&sandwich).unwrap(),
            serde_json::to_string(&wjk).unwrap(),
        ]
    };
    let (a, b) = (run(), run());
    let same = a.iter().zip(&b).filter(|(x, y)| x.as_bytes() == y.as_bytes()).count();
    Outcome { pass: same == a.len(), detail: format!("{same}/{} stochastic outputs byte-identical across repeated runs", a.len()) }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("1 rate-calculus consistency", rate_consistency, Duration::from_secs(10)),
        ("2 plateau-lattice construction", construction_check, Duration::from_secs(120)),
        ("3 chi-square budget exactness", chi_exactness, Duration::from_secs(600)),
        ("4 certificate", certificate_check, Duration::from_secs(10)),
        ("5 moment lemma", moment_lemma, Duration::from_secs(60)),
        ("6 sandwich lemma", sandwich_lemma, Duration::from_secs(60)),
        ("7 risk simulation", risk_simulation, Duration::from_secs(1800)),
        ("8 determinism", determinism, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let t = Instant::now();
        let out = f();
        let el = t.elapsed();
        let pass = out.pass && el <= budget;
        if !pass {
            failed += 1;
        }
        println!("{} [{name}] {} ({:.2} s, budget {} s)", if pass { "PASS" } else { "FAIL" }, out.detail, el.as_secs_f64(), budget.as_secs());
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
