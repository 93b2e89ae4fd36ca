//! One function per subcommand. Each returns the report, its tables and the
//! provenance rules that classify every number in them.

use adalb::density_lab::{build_family_nonneg, PerturbationFamily, PriorSpec};
use adalb::lb_verifier::{
    certificate, chi_budget, check_lemma_sandwich, check_lemma_wjk, draw_wjk_cases, verify_assumptions, ChiMode, ChiOptions,
    WjkCase,
};
use adalb::param_space::{check_conditions_a, rate_exponent, rates_at_n, LogPriceFamily};
use adalb::risk_sim::{bandwidth_grid, certificate_for, derive_seed, family_for_pair, two_class_experiment, ExperimentOptions};
use adalb::serde_ext::Ext;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ChiModeArg, Command, FamilyKind, RunConfig};
use crate::CliError;

pub const CLOSED_FORM: &str = "closed-form";
pub const QUADRATURE: &str = "quadrature";
pub const MONTE_CARLO: &str = "monte-carlo";
pub const ESTIMATED: &str = "estimated-constant";

/// A CSV table with one provenance category per column.
pub struct Table {
    pub suffix: &'static str,
    pub columns: Vec<(&'static str, &'static str)>,
    pub rows: Vec<Vec<String>>,
}

pub struct Output {
    pub report: Value,
    /// Estimated constants of the family involved, if any.
    pub constants: Value,
    /// `(path prefix, category)`; the longest matching prefix wins, `""` is the default.
    pub provenance: Vec<(String, &'static str)>,
    pub tables: Vec<Table>,
    pub pass: bool,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

/// Shortest round-trip decimal; `inf` for infinity.
fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:?}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn run(cfg: &RunConfig) -> Result<Output, CliError> {
    match cfg.command() {
        Command::Rate => rate(cfg),
        Command::Regimes => regimes(cfg),
        Command::Construct => construct(cfg),
        Command::Verify => verify(cfg),
        Command::Certify => certify(cfg),
        Command::Simulate => simulate(cfg),
        Command::Sweep => sweep(cfg),
        Command::Lemmas => lemmas(cfg),
    }
}

fn rate(cfg: &RunConfig) -> Result<Output, CliError> {
    let theta = cfg.theta.as_ref().expect("required");
    let rep = match cfg.n {
        Some(n) => rates_at_n(theta, n)?,
        None => rate_exponent(theta),
    };
    let table = Table {
        suffix: "",
        columns: vec![
            ("z", CLOSED_FORM),
            ("regime", CLOSED_FORM),
            ("n", CLOSED_FORM),
            ("psi_n", CLOSED_FORM),
            ("phi_n", CLOSED_FORM),
            ("price", CLOSED_FORM),
        ],
        rows: vec![vec![
            num(rep.z),
            format!("{:?}", rep.regime),
            rep.n.map(|n| n.to_string()).unwrap_or_default(),
            opt(rep.psi_n),
            opt(rep.phi_n),
            opt(rep.price),
        ]],
    };
    Ok(Output { report: to_value(&rep), constants: Value::Null, provenance: rules(&[("", CLOSED_FORM)]), tables: vec![table], pass: true })
}

fn regimes(cfg: &RunConfig) -> Result<Output, CliError> {
    let grid = cfg.grid.as_ref().expect("required");
    let pts = grid.points()?;
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    let mut rows = Vec::with_capacity(pts.len());
    let mut points = Vec::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let r = rate_exponent(p);
        let label = format!("{:?}", r.regime);
        *counts.entry(label.clone()).or_default() += 1;
        let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";");
        rows.push(vec![i.to_string(), join(&p.beta), join(&p.r), num(r.z), label.clone()]);
        points.push(json!({ "beta": p.beta, "r": p.r.iter().map(|v| Ext(*v)).collect::<Vec<_>>(), "z": r.z, "regime": label }));
    }
    let cond = check_conditions_a(grid, &LogPriceFamily)?;
    let pass = cond.a1_pass && cond.a2_pass && cond.a3_pass;
    let report = json!({ "grid": to_value(grid), "counts": counts, "points": points, "conditions": to_value(&cond) });
    let table = Table {
        suffix: "",
        columns: vec![("index", CLOSED_FORM), ("beta", CLOSED_FORM), ("r", CLOSED_FORM), ("z", CLOSED_FORM), ("regime", CLOSED_FORM)],
        rows,
    };
    Ok(Output { report, constants: Value::Null, provenance: rules(&[("", CLOSED_FORM)]), tables: vec![table], pass })
}

fn build(cfg: &RunConfig) -> Result<PerturbationFamily, CliError> {
    let n = cfg.n.expect("required");
    Ok(match cfg.family_kind() {
        FamilyKind::Pair => {
            let opts = ExperimentOptions { kappa: cfg.kappa, delta: cfg.delta, alpha: cfg.alpha, ..ExperimentOptions::default() };
            family_for_pair(cfg.theta.as_ref().expect("required"), cfg.theta_prime.as_ref().expect("required"), n, &opts)?
        }
        FamilyKind::Nonneg => {
            let p = cfg.nonneg.clone().unwrap_or_default();
            build_family_nonneg(p.d, n, p.m, p.p, p.fill)?
        }
    })
}

fn rules(list: &[(&str, &'static str)]) -> Vec<(String, &'static str)> {
    list.iter().map(|(p, c)| (p.to_string(), *c)).collect()
}

/// Provenance of the fields of a serialized family under `prefix`.
fn family_rules(prefix: &str) -> Vec<(String, &'static str)> {
    let list = [
        ("", CLOSED_FORM),
        ("constants", ESTIMATED),
        ("psi_n", ESTIMATED),
        ("psi_n_kappa_free", ESTIMATED),
        ("derived.lambda_m_quadrature", QUADRATURE),
        ("shape.l2_norm", QUADRATURE),
        ("shape.integral", QUADRATURE),
    ];
    list.iter()
        .map(|(p, c)| {
            let full = match (prefix.is_empty(), p.is_empty()) {
                (true, _) => p.to_string(),
                (false, true) => prefix.to_string(),
                (false, false) => format!("{prefix}.{p}"),
            };
            (full, *c)
        })
        .collect()
}

fn construct(cfg: &RunConfig) -> Result<Output, CliError> {
    let f = build(cfg)?;
    let zero = vec![0.0; f.m as usize];
    let report = json!({ "family": to_value(&f), "integral_f0": f.integral(&zero)? });
    let mut provenance = family_rules("family");
    provenance.push(("integral_f0".into(), QUADRATURE));
    Ok(Output { report, constants: to_value(&f.constants), provenance, tables: vec![], pass: true })
}

fn verify(cfg: &RunConfig) -> Result<Output, CliError> {
    let f = build(cfg)?;
    let n = cfg.n.expect("required");
    let rep = verify_assumptions(&f, n, cfg.y_mc.unwrap_or(200), cfg.seed.expect("required"))?;
    let pass = rep.all_pass;
    let provenance = rules(&[
        ("", CLOSED_FORM),
        ("checklist.a3_class_mass", MONTE_CARLO),
        ("checklist.a4_separation_mass", MONTE_CARLO),
        ("checklist.base_half_ball", QUADRATURE),
        ("checklist.a3_class_mass.threshold", CLOSED_FORM),
        ("checklist.a4_separation_mass.threshold", CLOSED_FORM),
        ("m", CLOSED_FORM),
        ("psi_n", ESTIMATED),
    ]);
    let report = json!({ "checklist": to_value(&rep), "m": f.m, "psi_n": f.psi_n });
    Ok(Output { report, constants: to_value(&f.constants), provenance, tables: vec![], pass })
}

fn chi_mode_for(cfg: &RunConfig, f: &PerturbationFamily) -> ChiMode {
    match cfg.chi_mode {
        Some(ChiModeArg::Cosh) => ChiMode::CoshProduct,
        Some(ChiModeArg::Exact) => ChiMode::ExactEnum,
        Some(ChiModeArg::General) => ChiMode::GeneralBranchBound,
        None if f.prior == PriorSpec::Rademacher && f.derived.lambda_m == 0.0 => ChiMode::ExactEnum,
        None => ChiMode::GeneralBranchBound,
    }
}

fn certify(cfg: &RunConfig) -> Result<Output, CliError> {
    let f = build(cfg)?;
    let n = cfg.n.expect("required");
    let mode = chi_mode_for(cfg, &f);
    let opts = ChiOptions { alpha: cfg.alpha, alpha_sq: cfg.alpha_sq, seed: cfg.seed.unwrap_or(0), ..ChiOptions::default() };
    let chi = chi_budget(&f, n, mode, &opts)?;
    let cert = certificate(&f, &chi)?;
    let pass = cert.final_bound > 0.0;
    let chi_category = if chi.mc_stderr.is_some() { MONTE_CARLO } else { CLOSED_FORM };
    let provenance = rules(&[
        ("", CLOSED_FORM),
        ("chi", chi_category),
        ("chi.s_m.quadrature", QUADRATURE),
        ("chi.s_m.max_rel_diff", QUADRATURE),
        ("chi.moment_exact", CLOSED_FORM),
        ("certificate.ez2", chi_category),
        ("certificate.final_bound", chi_category),
        ("certificate.ez_min_bound", chi_category),
        ("certificate.constants", CLOSED_FORM),
    ]);
    let report = json!({ "chi": to_value(&chi), "certificate": to_value(&cert) });
    Ok(Output { report, constants: to_value(&f.constants), provenance, tables: vec![], pass })
}

fn simulate(cfg: &RunConfig) -> Result<Output, CliError> {
    let theta = cfg.theta.as_ref().expect("required");
    let tp = cfg.theta_prime.as_ref().expect("required");
    let bw = cfg.bandwidth.clone().unwrap_or_default();
    let specs = bandwidth_grid(theta.d, bw.lo, bw.hi, bw.count)?;
    let opts = ExperimentOptions {
        kappa: cfg.kappa,
        delta: cfg.delta,
        alpha: cfg.alpha,
        y_draws: cfg.y_draws.unwrap_or(ExperimentOptions::default().y_draws),
    };
    let grid = cfg.n_grid.as_ref().expect("required");
    let table = two_class_experiment(theta, tp, grid, cfg.reps.expect("required"), &specs, &opts, cfg.seed.expect("required"))?;
    let pass = table.all_above_certificate() && !table.any_both_terms_small();
    let risk = Table {
        suffix: "risk",
        columns: vec![
            ("density_id", CLOSED_FORM),
            ("n", CLOSED_FORM),
            ("reps", CLOSED_FORM),
            ("mse", MONTE_CARLO),
            ("stderr", MONTE_CARLO),
            ("estimator_id", CLOSED_FORM),
        ],
        rows: table
            .rows
            .iter()
            .map(|r| vec![r.density_id.clone(), r.n.to_string(), r.reps.to_string(), num(r.mse), opt(r.stderr), r.estimator_id.clone()])
            .collect(),
    };
    let combined = Table {
        suffix: "combined",
        columns: vec![
            ("n", CLOSED_FORM),
            ("bandwidth", CLOSED_FORM),
            ("term_prime", MONTE_CARLO),
            ("term_theta", MONTE_CARLO),
            ("combined", MONTE_CARLO),
            ("combined_stderr", MONTE_CARLO),
            ("combined_display", MONTE_CARLO),
            ("certificate", CLOSED_FORM),
        ],
        rows: table
            .combined_rows
            .iter()
            .map(|r| {
                let cert = table.per_n.iter().find(|p| p.n == r.n).map(|p| p.certificate.final_bound).unwrap_or(f64::NAN);
                vec![
                    r.n.to_string(),
                    num(r.bandwidth[0]),
                    num(r.term_prime),
                    num(r.term_theta),
                    num(r.combined),
                    num(r.combined_stderr),
                    num(r.combined_display),
                    num(cert),
                ]
            })
            .collect(),
    };
    let constants = Value::Array(table.per_n.iter().map(|p| json!({ "n": p.n, "m": p.m, "psi_n": p.psi_n })).collect());
    let provenance = rules(&[
        ("", CLOSED_FORM),
        ("rows[].mse", MONTE_CARLO),
        ("rows[].stderr", MONTE_CARLO),
        ("rows[].truth", QUADRATURE),
        ("combined_rows[]", MONTE_CARLO),
        ("combined_rows[].n", CLOSED_FORM),
        ("combined_rows[].bandwidth", CLOSED_FORM),
        ("combined", MONTE_CARLO),
        ("per_n[].min_combined", MONTE_CARLO),
        ("per_n[].psi_n", ESTIMATED),
    ]);
    Ok(Output { report: to_value(&table), constants, provenance, tables: vec![risk, combined], pass })
}

fn sweep(cfg: &RunConfig) -> Result<Output, CliError> {
    let theta = cfg.theta.as_ref().expect("required");
    let grid = cfg.n_grid.as_ref().expect("required");
    let mut rate_rows = Vec::new();
    let mut ratio_rows = Vec::new();
    let mut entries = Vec::new();
    let mut constants = Vec::new();
    let mut ratios = Vec::new();
    for &n in grid {
        let r = rates_at_n(theta, n)?;
        rate_rows.push(vec![n.to_string(), num(r.z), opt(r.psi_n), opt(r.phi_n), opt(r.price)]);
        let mut entry = json!({ "n": n, "z": r.z, "psi_n": r.psi_n, "phi_n": r.phi_n, "price": r.price });
        if let Some(tp) = &cfg.theta_prime {
            let opts = ExperimentOptions { kappa: cfg.kappa, delta: cfg.delta, alpha: cfg.alpha, ..ExperimentOptions::default() };
            let f = family_for_pair(theta, tp, n, &opts)?;
            let mode = chi_mode_for(cfg, &f);
            let chi = chi_budget(&f, n, mode, &ChiOptions { alpha: cfg.alpha, ..ChiOptions::default() })?;
            let cert = certificate_for(&f, n)?;
            ratios.push(chi.ratio);
            ratio_rows.push(vec![n.to_string(), f.m.to_string(), num(chi.value), num(chi.alpha_sq), num(chi.ratio), num(cert.final_bound)]);
            entry["m"] = json!(f.m);
            entry["ez2"] = json!(chi.value);
            entry["alpha_sq"] = json!(chi.alpha_sq);
            entry["ratio"] = json!(chi.ratio);
            entry["certificate"] = json!(cert.final_bound);
            constants.push(json!({ "n": n, "constants": to_value(&f.constants) }));
        }
        entries.push(entry);
    }
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    let mut tables = vec![Table {
        suffix: "rate",
        columns: vec![("n", CLOSED_FORM), ("z", CLOSED_FORM), ("psi_n", CLOSED_FORM), ("phi_n", CLOSED_FORM), ("price", CLOSED_FORM)],
        rows: rate_rows,
    }];
    if !ratio_rows.is_empty() {
        tables.push(Table {
            suffix: "ratio",
            columns: vec![
                ("n", CLOSED_FORM),
                ("m", CLOSED_FORM),
                ("ez2", CLOSED_FORM),
                ("alpha_sq", CLOSED_FORM),
                ("ratio", CLOSED_FORM),
                ("certificate", CLOSED_FORM),
            ],
            rows: ratio_rows,
        });
    }
    let report = json!({ "rows": entries, "ratio_strictly_decreasing": (!ratios.is_empty()).then_some(decreasing) });
    Ok(Output {
        report,
        constants: Value::Array(constants),
        provenance: rules(&[("", CLOSED_FORM)]),
        tables,
        pass: ratios.is_empty() || decreasing,
    })
}

fn lemmas(cfg: &RunConfig) -> Result<Output, CliError> {
    let seed = cfg.seed.expect("required");
    let lp = cfg.lemmas.clone().unwrap_or_default();
    let nn = cfg.nonneg.clone().unwrap_or_default();
    let n = cfg.n.unwrap_or(100);
    let fam = build_family_nonneg(nn.d, n, nn.m, nn.p, nn.fill)?;
    let general = check_lemma_sandwich(&fam, lp.sandwich_draws, lp.sandwich_grid, derive_seed(seed, &[1]))?;
    let zero = match (&cfg.theta, &cfg.theta_prime, cfg.n) {
        (Some(_), Some(_), Some(_)) => {
            let f = build(&RunConfig { family: Some(FamilyKind::Pair), ..cfg.clone() })?;
            Some(check_lemma_sandwich(&f, lp.sandwich_draws, lp.sandwich_grid, derive_seed(seed, &[2]))?)
        }
        _ => None,
    };
    let mut cases = vec![WjkCase { j: 1, a: vec![1.0], b: 0.1, t: 1.0 }];
    cases.extend(draw_wjk_cases(lp.wjk_cases, derive_seed(seed, &[3])));
    let wjk = cases
        .iter()
        .enumerate()
        .map(|(i, c)| check_lemma_wjk(c.j, &c.a, c.b, c.t, lp.wjk_reps, derive_seed(seed, &[4, i as u64])))
        .collect::<Result<Vec<_>, _>>()?;
    let boundary_error = (wjk[0].w_hat - 1.1).abs();
    let pass = general.pass && zero.as_ref().map_or(true, |z| z.pass) && wjk.iter().all(|w| w.pass) && boundary_error <= 1e-3;
    let report = json!({
        "sandwich_nonnegative": to_value(&general),
        "sandwich_zero_mean": zero.as_ref().map(to_value),
        "wjk": to_value(&wjk),
        "wjk_boundary_abs_error": boundary_error,
    });
    let provenance = rules(&[
        ("", CLOSED_FORM),
        ("wjk[].w_hat", MONTE_CARLO),
        ("wjk[].stderr", MONTE_CARLO),
        ("wjk_boundary_abs_error", MONTE_CARLO),
    ]);
    Ok(Output { report, constants: to_value(&fam.constants), provenance, tables: vec![], pass })
}
