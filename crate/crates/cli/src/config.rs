//! Run configuration: a JSON file (optional) overridden field by field by flags.

use adalb::param_space::{ClassParams, ParamGrid};
use adalb::serde_ext::parse_ext;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ADALB_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "adalb-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Rate,
    Regimes,
    Construct,
    Verify,
    Certify,
    Simulate,
    Sweep,
    Lemmas,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rate => "rate",
            Command::Regimes => "regimes",
            Command::Construct => "construct",
            Command::Verify => "verify",
            Command::Certify => "certify",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Lemmas => "lemmas",
        }
    }

    /// Commands whose output depends on random draws.
    pub fn is_stochastic(self, cfg: &RunConfig) -> bool {
        match self {
            Command::Verify | Command::Simulate | Command::Lemmas => true,
            Command::Certify => cfg.chi_mode == Some(ChiModeArg::General) || cfg.family == Some(FamilyKind::Nonneg),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Which perturbation family a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// The two-class construction chosen by the regime of `theta`.
    Pair,
    /// The synthetic nonnegative-bump family.
    Nonneg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ChiModeArg {
    Cosh,
    Exact,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonnegParams {
    pub d: usize,
    pub m: u64,
    pub p: f64,
    pub fill: f64,
}

impl Default for NonnegParams {
    fn default() -> Self {
        NonnegParams { d: 1, m: 10, p: 0.5, fill: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for BandwidthGrid {
    fn default() -> Self {
        BandwidthGrid { lo: 1e-3, hi: 1.0, count: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaParams {
    /// Random `(J, K, b, a⃗)` cases for the moment bound; the boundary case is always added.
    pub wjk_cases: usize,
    pub wjk_reps: usize,
    /// Filtered prior draws for the sandwich check.
    pub sandwich_draws: usize,
    pub sandwich_grid: usize,
}

impl Default for LemmaParams {
    fn default() -> Self {
        LemmaParams { wjk_cases: 20, wjk_reps: 100_000, sandwich_draws: 100, sandwich_grid: 10_000 }
    }
}

/// Every field is optional here; [`RunConfig::require`] enforces what a command needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<ClassParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_prime: Option<ClassParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// `α²_n` for families without a class pair (the nonnegative family).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Not part of the configuration hash: moving the output does not change the run.
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonneg: Option<NonnegParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_mc: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi_mode: Option<ChiModeArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<BandwidthGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<ParamGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<LemmaParams>,
}

/// Flags shared by every command. Numbers are taken as text so that errors can
/// name the flag and the offending list entry.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dimension d.
    #[arg(long)]
    pub d: Option<String>,
    /// Smoothness beta (comma list, or one value for every direction).
    #[arg(long)]
    pub beta: Option<String>,
    /// Integrability r >= 1 (comma list; "inf" allowed).
    #[arg(long)]
    pub r: Option<String>,
    /// Index q ("inf" allowed).
    #[arg(long)]
    pub q: Option<String>,
    /// Radii L (comma list).
    #[arg(long = "l")]
    pub l: Option<String>,
    /// Ball radius Q.
    #[arg(long = "big-q")]
    pub big_q: Option<String>,
    #[arg(long)]
    pub beta_prime: Option<String>,
    #[arg(long)]
    pub r_prime: Option<String>,
    #[arg(long)]
    pub q_prime: Option<String>,
    #[arg(long = "l-prime")]
    pub l_prime: Option<String>,
    #[arg(long = "big-q-prime")]
    pub big_q_prime: Option<String>,
    /// Sample size.
    #[arg(long)]
    pub n: Option<String>,
    /// Increasing sample sizes (comma list).
    #[arg(long)]
    pub n_grid: Option<String>,
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long)]
    pub delta: Option<String>,
    /// alpha in (z(theta), z(theta')); the midpoint by default.
    #[arg(long)]
    pub alpha: Option<String>,
    /// alpha_n^2 for the nonnegative family, which has no class pair.
    #[arg(long)]
    pub alpha_sq: Option<String>,
    /// 64-bit seed; mandatory for stochastic commands.
    #[arg(long)]
    pub seed: Option<String>,
    /// Output directory (default: $ADALB_OUT_DIR, then ./adalb-out).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyKind>,
    /// Bumps of the nonnegative family.
    #[arg(long)]
    pub m: Option<String>,
    /// Bernoulli weight of the nonnegative family.
    #[arg(long)]
    pub p: Option<String>,
    /// Plateau fill fraction of the nonnegative family.
    #[arg(long)]
    pub fill: Option<String>,
    /// Prior draws for the Monte-Carlo assumption checks.
    #[arg(long)]
    pub y_mc: Option<String>,
    #[arg(long, value_enum)]
    pub chi_mode: Option<ChiModeArg>,
    /// Replications per risk estimate.
    #[arg(long)]
    pub reps: Option<String>,
    #[arg(long)]
    pub h_lo: Option<String>,
    #[arg(long)]
    pub h_hi: Option<String>,
    #[arg(long)]
    pub h_count: Option<String>,
    /// Prior draws standing for the class of f_y in `simulate`.
    #[arg(long)]
    pub y_draws: Option<String>,
    /// Beta axis of the `regimes` grid (comma list).
    #[arg(long)]
    pub beta_axis: Option<String>,
    /// r axis of the `regimes` grid (comma list; "inf" allowed).
    #[arg(long)]
    pub r_axis: Option<String>,
    /// One beta and one r axis per direction instead of shared axes.
    #[arg(long)]
    pub anisotropic: bool,
    #[arg(long)]
    pub wjk_cases: Option<String>,
    #[arg(long)]
    pub wjk_reps: Option<String>,
    #[arg(long)]
    pub sandwich_draws: Option<String>,
    #[arg(long)]
    pub sandwich_grid: Option<String>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn parse_real(flag: &str, s: &str) -> Result<f64, CliError> {
    parse_ext(s).map_err(|e| usage(format!("--{flag}: {e}")))
}

pub fn parse_int<T: std::str::FromStr>(flag: &str, s: &str) -> Result<T, CliError> {
    s.trim().parse::<T>().map_err(|_| usage(format!("--{flag}: malformed integer {:?}", s.trim())))
}

pub fn parse_real_list(flag: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .enumerate()
        .map(|(i, t)| parse_ext(t).map_err(|e| usage(format!("--{flag}: entry {} of {s:?}: {e}", i + 1))))
        .collect()
}

pub fn parse_int_list(flag: &str, s: &str) -> Result<Vec<u64>, CliError> {
    s.split(',')
        .enumerate()
        .map(|(i, t)| {
            t.trim().parse::<u64>().map_err(|_| usage(format!("--{flag}: entry {} of {s:?}: malformed integer {:?}", i + 1, t.trim())))
        })
        .collect()
}

/// Reads the file (if any) and applies flag overrides.
pub fn parse_config(command: Command, flags: &Flags) -> Result<RunConfig, CliError> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(c) = cfg.command {
        if c != command {
            return Err(usage(format!("config file is for `{}`, command line asks for `{}`", c.name(), command.name())));
        }
    }
    cfg.command = Some(command);

    let d = flags.d.as_deref().map(|s| parse_int::<usize>("d", s)).transpose()?;
    // For `regimes`, --d and --q describe the grid, not a class.
    let q_theta = if command == Command::Regimes { &None } else { &flags.q };
    cfg.theta = merge_theta(cfg.theta.take(), d, [&flags.beta, &flags.r, q_theta, &flags.l, &flags.big_q], "")?;
    let prime = [&flags.beta_prime, &flags.r_prime, &flags.q_prime, &flags.l_prime, &flags.big_q_prime];
    if cfg.theta_prime.is_none() && prime.iter().any(|f| f.is_some()) {
        // Unset fields of θ′ default to those of θ.
        cfg.theta_prime = cfg.theta.clone();
    }
    cfg.theta_prime = merge_theta(cfg.theta_prime.take(), d, prime, "-prime")?;

    if let Some(s) = &flags.n {
        cfg.n = Some(parse_int("n", s)?);
    }
    if let Some(s) = &flags.n_grid {
        cfg.n_grid = Some(parse_int_list("n-grid", s)?);
    }
    if let Some(s) = &flags.kappa {
        cfg.kappa = Some(parse_real("kappa", s)?);
    }
    if let Some(s) = &flags.delta {
        cfg.delta = Some(parse_real("delta", s)?);
    }
    if let Some(s) = &flags.alpha {
        cfg.alpha = Some(parse_real("alpha", s)?);
    }
    if let Some(s) = &flags.alpha_sq {
        cfg.alpha_sq = Some(parse_real("alpha-sq", s)?);
    }
    if let Some(s) = &flags.seed {
        cfg.seed = Some(parse_int("seed", s)?);
    }
    if flags.out_dir.is_some() {
        cfg.out_dir = flags.out_dir.clone();
    }
    if flags.format.is_some() {
        cfg.format = flags.format;
    }
    if flags.family.is_some() {
        cfg.family = flags.family;
    }
    if flags.m.is_some() || flags.p.is_some() || flags.fill.is_some() {
        let mut nn = cfg.nonneg.take().unwrap_or_default();
        if let Some(s) = &flags.m {
            nn.m = parse_int("m", s)?;
        }
        if let Some(s) = &flags.p {
            nn.p = parse_real("p", s)?;
        }
        if let Some(s) = &flags.fill {
            nn.fill = parse_real("fill", s)?;
        }
        if let Some(d) = d {
            nn.d = d;
        }
        cfg.nonneg = Some(nn);
    }
    if let Some(s) = &flags.y_mc {
        cfg.y_mc = Some(parse_int("y-mc", s)?);
    }
    if flags.chi_mode.is_some() {
        cfg.chi_mode = flags.chi_mode;
    }
    if let Some(s) = &flags.reps {
        cfg.reps = Some(parse_int("reps", s)?);
    }
    if flags.h_lo.is_some() || flags.h_hi.is_some() || flags.h_count.is_some() {
        let mut g = cfg.bandwidth.take().unwrap_or_default();
        if let Some(s) = &flags.h_lo {
            g.lo = parse_real("h-lo", s)?;
        }
        if let Some(s) = &flags.h_hi {
            g.hi = parse_real("h-hi", s)?;
        }
        if let Some(s) = &flags.h_count {
            g.count = parse_int("h-count", s)?;
        }
        cfg.bandwidth = Some(g);
    }
    if let Some(s) = &flags.y_draws {
        cfg.y_draws = Some(parse_int("y-draws", s)?);
    }
    if flags.beta_axis.is_some() || flags.r_axis.is_some() {
        let base = cfg.grid.take();
        let dd = d.or(base.as_ref().map(|g| g.d)).or(cfg.theta.as_ref().map(|t| t.d)).unwrap_or(1);
        let q = match &flags.q {
            Some(s) => parse_real("q", s)?,
            None => base.as_ref().map(|g| g.q).unwrap_or(f64::INFINITY),
        };
        cfg.grid = Some(ParamGrid {
            d: dd,
            q,
            l: base.as_ref().map(|g| g.l).unwrap_or(1.0),
            big_q: base.as_ref().map(|g| g.big_q).unwrap_or(1.0),
            isotropic: !flags.anisotropic && base.as_ref().map(|g| g.isotropic).unwrap_or(true),
            beta_axis: match &flags.beta_axis {
                Some(s) => parse_real_list("beta-axis", s)?,
                None => base.as_ref().map(|g| g.beta_axis.clone()).unwrap_or_default(),
            },
            r_axis: match &flags.r_axis {
                Some(s) => parse_real_list("r-axis", s)?,
                None => base.as_ref().map(|g| g.r_axis.clone()).unwrap_or_default(),
            },
        });
    }
    if flags.wjk_cases.is_some() || flags.wjk_reps.is_some() || flags.sandwich_draws.is_some() || flags.sandwich_grid.is_some() {
        let mut lp = cfg.lemmas.take().unwrap_or_default();
        if let Some(s) = &flags.wjk_cases {
            lp.wjk_cases = parse_int("wjk-cases", s)?;
        }
        if let Some(s) = &flags.wjk_reps {
            lp.wjk_reps = parse_int("wjk-reps", s)?;
        }
        if let Some(s) = &flags.sandwich_draws {
            lp.sandwich_draws = parse_int("sandwich-draws", s)?;
        }
        if let Some(s) = &flags.sandwich_grid {
            lp.sandwich_grid = parse_int("sandwich-grid", s)?;
        }
        cfg.lemmas = Some(lp);
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)));
    }
    cfg.require()?;
    Ok(cfg)
}

/// Applies `[beta, r, q, L, Q]` flags to `base`. A single list entry is repeated `d` times.
/// Without a base, `L` and `Q` default to 1.
fn merge_theta(
    base: Option<ClassParams>,
    d: Option<usize>,
    flags: [&Option<String>; 5],
    suffix: &str,
) -> Result<Option<ClassParams>, CliError> {
    let [beta, r, q, l, big_q] = flags;
    if base.is_none() && flags.iter().all(|f| f.is_none()) {
        return Ok(None);
    }
    let name = |n: &str| format!("{n}{suffix}");
    let dd = match (d, &base) {
        (Some(d), _) => d,
        (None, Some(b)) => b.d,
        (None, None) => {
            let guess = beta.as_deref().map(|s| s.split(',').count()).unwrap_or(1);
            guess.max(1)
        }
    };
    let widen = |flag: &str, v: Vec<f64>| -> Result<Vec<f64>, CliError> {
        match v.len() {
            1 => Ok(vec![v[0]; dd]),
            k if k == dd => Ok(v),
            k => Err(usage(format!("--{flag}: {k} entries given but d = {dd}"))),
        }
    };
    let list = |flag: &Option<String>, n: &str, old: Option<Vec<f64>>, default: Option<f64>| -> Result<Vec<f64>, CliError> {
        match flag {
            Some(s) => widen(&name(n), parse_real_list(&name(n), s)?),
            None => match old {
                Some(v) => widen(&name(n), v),
                None => match default {
                    Some(x) => Ok(vec![x; dd]),
                    None => Err(usage(format!("missing required field `{n}{}` (flag --{})", if suffix.is_empty() { "" } else { "_prime" }, name(n)))),
                },
            },
        }
    };
    let scalar = |flag: &Option<String>, n: &str, old: Option<f64>, default: Option<f64>| -> Result<f64, CliError> {
        match flag {
            Some(s) => parse_real(&name(n), s),
            None => old.or(default).ok_or_else(|| usage(format!("missing required field `{n}` (flag --{})", name(n)))),
        }
    };
    let b = base.as_ref();
    let theta = ClassParams {
        d: dd,
        beta: list(beta, "beta", b.map(|t| t.beta.clone()), None)?,
        r: list(r, "r", b.map(|t| t.r.clone()), None)?,
        q: scalar(q, "q", b.map(|t| t.q), None)?,
        l: list(l, "l", b.map(|t| t.l.clone()), Some(1.0))?,
        big_q: scalar(big_q, "big-q", b.map(|t| t.big_q), Some(1.0))?,
    };
    theta.validate().map_err(|e| usage(format!("theta{}: {e}", if suffix.is_empty() { "" } else { "_prime" })))?;
    Ok(Some(theta))
}

impl RunConfig {
    pub fn command(&self) -> Command {
        self.command.expect("set by parse_config")
    }

    pub fn family_kind(&self) -> FamilyKind {
        self.family.unwrap_or(FamilyKind::Pair)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn missing(&self, field: &str, hint: &str) -> CliError {
        usage(format!("missing required field `{field}` for command `{}` ({hint})", self.command().name()))
    }

    /// Checks that the fields `command` needs are present, before any computation.
    pub fn require(&self) -> Result<(), CliError> {
        let c = self.command();
        let need_theta = || self.theta.as_ref().map(|_| ()).ok_or_else(|| self.missing("theta", "--d --beta --r --q"));
        let need_pair = || -> Result<(), CliError> {
            need_theta()?;
            self.theta_prime.as_ref().map(|_| ()).ok_or_else(|| self.missing("theta_prime", "--beta-prime and friends"))
        };
        let need_n = || self.n.map(|_| ()).ok_or_else(|| self.missing("n", "--n"));
        let need_grid = || match &self.n_grid {
            Some(g) if !g.is_empty() => {
                if g.windows(2).any(|w| w[0] >= w[1]) {
                    Err(usage(format!("n_grid must be increasing, got {g:?}")))
                } else {
                    Ok(())
                }
            }
            _ => Err(self.missing("n_grid", "--n-grid")),
        };
        let need_family = || -> Result<(), CliError> {
            match self.family_kind() {
                FamilyKind::Pair => {
                    need_pair()?;
                    need_n()
                }
                FamilyKind::Nonneg => need_n(),
            }
        };
        match c {
            Command::Rate => need_theta()?,
            Command::Regimes => {
                let g = self.grid.as_ref().ok_or_else(|| self.missing("grid", "--beta-axis --r-axis"))?;
                if g.beta_axis.is_empty() || g.r_axis.is_empty() {
                    return Err(usage("grid needs non-empty beta and r axes".to_string()));
                }
            }
            Command::Construct | Command::Verify => need_family()?,
            Command::Certify => {
                need_family()?;
                if self.family_kind() == FamilyKind::Nonneg && self.alpha_sq.is_none() {
                    return Err(self.missing("alpha_sq", "--alpha-sq; the nonnegative family has no class pair"));
                }
            }
            Command::Simulate => {
                need_pair()?;
                need_grid()?;
                if self.reps.is_none() {
                    return Err(self.missing("reps", "--reps"));
                }
            }
            Command::Sweep => {
                need_theta()?;
                need_grid()?;
            }
            Command::Lemmas => {}
        }
        if c.is_stochastic(self) && self.seed.is_none() {
            return Err(self.missing("seed", "--seed; stochastic commands need an explicit seed"));
        }
        if self.format == Some(Format::Csv) && matches!(c, Command::Construct | Command::Verify | Command::Certify | Command::Lemmas) {
            return Err(usage(format!("`{}` has no tabular output; use --format json", c.name())));
        }
        Ok(())
    }
}
