//! `yamabe`: runs the certification suites and experiments and writes JSON or CSV reports.
//!
//! Every run is determined by a [`RunConfig`], read from a TOML file and overridden by
//! flags. The resolved config, with all defaults filled in, is echoed into each output.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use yamabe_blowup::battery::Battery;
use yamabe_blowup::bubbles::MultiBubble;
use yamabe_blowup::energy::{
    energy_breakdown, exponent_report, sweep_csv, volume_scan, EnergyOptions,
};
use yamabe_blowup::exec::{self, Backend};
use yamabe_blowup::fmt17;
use yamabe_blowup::perturbation::{CutoffProfile, Lattice};
use yamabe_blowup::reduced::{
    g_hat_hessian, g_hat_mc, tune_tau0, HessianOptions, McOptions, RadialModel,
};
use yamabe_blowup::weighted::{certify_interaction, certify_step_lemma, RatioCertificate};
use yamabe_blowup::weyl::{canonical_weyl, h_identity_residuals, HField, WeylForm};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Residual tolerance for the Weyl identities.
const WEYL_TOL: f64 = 1e-12;
/// Relative tolerance for the `Ĥ` identities.
const H_TOL: f64 = 1e-6;
/// Largest allowed drift of a fitted lemma constant across the grid.
const BAND_DRIFT: f64 = 2.0;

#[derive(Parser)]
#[command(
    name = "yamabe",
    version,
    about = "Certification suites for the Yamabe blow-up construction"
)]
struct Cli {
    /// TOML file with run parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base RNG seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for report files; reports go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Use the sequential backend instead of the worker pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Weyl-form identities and the Ĥ trace, transversality and divergence checks.
    VerifyWeyl,
    /// Step-function and interaction ratio certificates over the (k, r) grid.
    CertifyNorms,
    /// Tune τ₀ so that (0, 1) is a nondegenerate minimum of Ĝ.
    TuneTau0,
    /// Ĝ(0, λ) profile, Monte Carlo cross-check and Hessian at λ = 1.
    ReducedEnergy,
    /// Energy breakdown sweep over the lattice grid.
    Energy,
    /// Volume ∫u^{2n/(n−2)} over a list of k.
    VolumeScan,
    /// The full acceptance battery.
    CertifyAll,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifyWeyl => "verify-weyl",
            Command::CertifyNorms => "certify-norms",
            Command::TuneTau0 => "tune-tau0",
            Command::ReducedEnergy => "reduced-energy",
            Command::Energy => "energy",
            Command::VolumeScan => "volume-scan",
            Command::CertifyAll => "certify-all",
        }
    }
}

/// How the ring radius is chosen for each `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RRule {
    /// Every `r` in the `r` list.
    List,
    /// `r = r_over_k · k`.
    Ratio,
    /// `t = e^{−k}`, `r = e^k/k`.
    Paper,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    n: usize,
    k: Vec<usize>,
    r: Vec<f64>,
    r_rule: RRule,
    r_over_k: f64,
    c0: f64,
    eps: f64,
    seed: u64,
    /// Fixed τ₀; tuned when absent and `n ≥ 19`.
    tau0: Option<f64>,
    /// Weyl form in text format; the canonical form when absent.
    weyl: Option<PathBuf>,
    /// Step-lemma decay exponent; `n/2` when absent.
    s: Option<f64>,
    tau: f64,
    extra: usize,
    samples: usize,
    per_piece: usize,
    hessian_samples: usize,
    ghat_samples: usize,
    lams: Vec<f64>,
    /// Criterion ids for `certify-all`; all when empty.
    only: Vec<usize>,
    out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 25,
            k: vec![4, 8, 16],
            r: vec![8.0, 32.0],
            r_rule: RRule::List,
            r_over_k: 8.0,
            c0: 1.0,
            eps: 0.1,
            seed: 1,
            tau0: None,
            weyl: None,
            s: None,
            tau: 1.0,
            extra: 4,
            samples: 1024,
            per_piece: 16,
            hessian_samples: 8192,
            ghat_samples: 4096,
            lams: vec![0.8, 0.9, 1.0, 1.1, 1.25],
            only: Vec::new(),
            out: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("{context}: {source}")]
    Core {
        context: &'static str,
        source: yamabe_blowup::Error,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

trait Context<T> {
    fn ctx(self, context: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for yamabe_blowup::Result<T> {
    fn ctx(self, context: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { context, source })
    }
}

/// One output file: a name suffix and its JSON or CSV body.
struct Report {
    suffix: &'static str,
    json: serde_json::Value,
    csv: String,
}

/// Reports plus the names of failed certificates.
struct Outcome {
    reports: Vec<Report>,
    failed: Vec<String>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    toml::from_str(&text).map_err(|e: toml::de::Error| CliError::Config {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

fn weyl_form(cfg: &RunConfig) -> Result<WeylForm, CliError> {
    let w = match &cfg.weyl {
        Some(p) => WeylForm::from_text(&std::fs::read_to_string(p)?).ctx("weyl file")?,
        None => canonical_weyl(cfg.n).ctx("weyl_forms")?,
    };
    if w.n() != cfg.n {
        return Err(CliError::Usage(format!(
            "weyl file has n = {}, config has n = {}",
            w.n(),
            cfg.n
        )));
    }
    Ok(w)
}

fn hessian_options(cfg: &RunConfig) -> HessianOptions {
    HessianOptions {
        samples: cfg.hessian_samples,
        seed: cfg.seed,
    }
}

/// `τ₀` from the config, or tuned when `n ≥ 19`.
fn resolve_tau0(cfg: &RunConfig, w: &WeylForm) -> Result<f64, CliError> {
    match cfg.tau0 {
        Some(t) => Ok(t),
        None if cfg.n >= 19 => Ok(tune_tau0(w, &hessian_options(cfg))
            .ctx("reduced_energy")?
            .tau0_star),
        None => Err(CliError::Usage(format!(
            "tau0 must be set for n = {} (tuning needs n >= 19)",
            cfg.n
        ))),
    }
}

fn grid(cfg: &RunConfig) -> Result<Vec<(usize, f64)>, CliError> {
    if cfg.k.is_empty() {
        return Err(CliError::Usage("k list is empty".into()));
    }
    Ok(match cfg.r_rule {
        RRule::List => cfg
            .k
            .iter()
            .flat_map(|&k| cfg.r.iter().map(move |&r| (k, r)))
            .collect(),
        RRule::Ratio => cfg
            .k
            .iter()
            .map(|&k| (k, cfg.r_over_k * k as f64))
            .collect(),
        RRule::Paper => cfg
            .k
            .iter()
            .map(|&k| (k, (k as f64).exp() / k as f64))
            .collect(),
    })
}

fn verify_weyl(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let w = weyl_form(cfg)?;
    let res = w.residuals();
    let nontriviality = w.nontriviality();
    let h = HField::new(cfg.tau0.unwrap_or(0.0), w);
    let hid = h_identity_residuals(&h, 100, cfg.seed, 1e-4);
    let mut failed = Vec::new();
    for (name, v) in [
        ("pair", res.pair),
        ("antisymmetry", res.antisymmetry),
        ("bianchi", res.bianchi),
        ("trace", res.trace),
    ] {
        if !(v < WEYL_TOL) {
            failed.push(format!("weyl_{name}"));
        }
    }
    if !(nontriviality > 0.0) {
        failed.push("weyl_nontriviality".into());
    }
    for (name, v) in [
        ("trace", hid.trace),
        ("transverse", hid.transverse),
        ("divergence", hid.divergence),
        ("divergence_fd", hid.divergence_fd),
    ] {
        if !(v < H_TOL) {
            failed.push(format!("h_{name}"));
        }
    }
    let mut csv = String::from("check,residual,tolerance\n");
    for (name, v, tol) in [
        ("pair", res.pair, WEYL_TOL),
        ("antisymmetry", res.antisymmetry, WEYL_TOL),
        ("bianchi", res.bianchi, WEYL_TOL),
        ("trace", res.trace, WEYL_TOL),
        ("h_trace", hid.trace, H_TOL),
        ("h_transverse", hid.transverse, H_TOL),
        ("h_divergence", hid.divergence, H_TOL),
        ("h_divergence_fd", hid.divergence_fd, H_TOL),
    ] {
        let _ = writeln!(csv, "{name},{},{}", fmt17(v), fmt17(tol));
    }
    let _ = writeln!(csv, "nontriviality,{},0", fmt17(nontriviality));
    Ok(Outcome {
        reports: vec![Report {
            suffix: "",
            json: json!({
                "n": cfg.n,
                "residuals": res,
                "tolerance": WEYL_TOL,
                "nontriviality": nontriviality,
                "h_identities": hid,
                "h_tolerance": H_TOL,
                "passed": failed.is_empty(),
            }),
            csv,
        }],
        failed,
    })
}

fn certify_norms(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = cfg.s.unwrap_or(cfg.n as f64 / 2.0);
    let grid = grid(cfg)?;
    let step =
        certify_step_lemma(cfg.n, &grid, s, cfg.tau, cfg.extra, cfg.seed).ctx("weighted_spaces")?;
    let mut eqn1 = Vec::new();
    let mut eqn2 = Vec::new();
    for &(k, r) in &grid {
        let c = certify_interaction(cfg.n, k, r, s, s, cfg.tau, cfg.extra, cfg.seed)
            .ctx("weighted_spaces")?;
        eqn1.push(c.eqn1);
        eqn2.push(c.eqn2);
    }
    let mut csv = String::from("lemma,k,r,s,min_ratio,max_ratio,n_probes,seed\n");
    let mut drift = serde_json::Map::new();
    let mut failed = Vec::new();
    // only the two-sided step lemma has a band; the interaction bounds are one-sided
    for (certs, constant, flagged) in [
        (
            &step,
            RatioCertificate::band as fn(&RatioCertificate) -> f64,
            true,
        ),
        (&eqn1, |c: &RatioCertificate| c.max_ratio, false),
        (&eqn2, |c: &RatioCertificate| c.max_ratio, false),
    ] {
        for c in certs.iter() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                c.lemma,
                c.params["k"],
                fmt17(c.params["r"]),
                fmt17(s),
                fmt17(c.min_ratio),
                fmt17(c.max_ratio),
                c.n_probes,
                c.seed
            );
        }
        let v: Vec<f64> = certs.iter().map(constant).collect();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(0.0, f64::max);
        let d = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        let lemma = certs[0].lemma.clone();
        if flagged && !(d <= BAND_DRIFT) {
            failed.push(format!("{lemma}_band_drift"));
        }
        drift.insert(lemma, json!(if d.is_finite() { Some(d) } else { None }));
    }
    Ok(Outcome {
        reports: vec![Report {
            suffix: "",
            json: json!({
                "s": s,
                "drift_limit": BAND_DRIFT,
                "constant_drift": drift,
                "step_function": step,
                "interaction_eqn1": eqn1,
                "interaction_eqn2": eqn2,
            }),
            csv,
        }],
        failed,
    })
}

fn tune(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let w = weyl_form(cfg)?;
    let t = tune_tau0(&w, &hessian_options(cfg)).ctx("reduced_energy")?;
    let mut csv = String::from("tau0,ghat,d_lam,h_lam_lam,min_eigenvalue,admissible,selected\n");
    for r in &t.roots {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt17(r.tau0),
            fmt17(r.ghat),
            fmt17(r.d_lam),
            fmt17(r.h_lam_lam),
            r.min_eigenvalue.map(fmt17).unwrap_or_default(),
            r.admissible,
            r.tau0 == t.tau0_star
        );
    }
    Ok(Outcome {
        reports: vec![Report {
            suffix: "",
            json: serde_json::to_value(&t).expect("tuning result serializes"),
            csv,
        }],
        failed: Vec::new(),
    })
}

fn reduced_energy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let w = weyl_form(cfg)?;
    let tau0 = resolve_tau0(cfg, &w)?;
    let h = HField::new(tau0, w);
    let model = RadialModel::new(&h).ctx("reduced_energy")?;
    let mc_opts = McOptions {
        samples: cfg.ghat_samples,
        seed: cfg.seed,
        ..Default::default()
    };
    let zero = vec![0.0; cfg.n];
    let mut csv = String::from("lam,ghat,ghat_mc,stderr,seed\n");
    let mut profile = Vec::new();
    for &lam in &cfg.lams {
        let exact = model.value(lam);
        let mc = g_hat_mc(&h, &zero, lam, &mc_opts).ctx("reduced_energy")?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt17(lam),
            fmt17(exact),
            fmt17(mc.value),
            fmt17(mc.stderr),
            cfg.seed
        );
        profile.push(json!({"lam": lam, "ghat": exact, "ghat_mc": mc.value, "stderr": mc.stderr}));
    }
    let hess = g_hat_hessian(&h, 1.0, &hessian_options(cfg)).ctx("reduced_energy")?;
    let mut hcsv = String::from("index,eigenvalue,diagonal,diagonal_stderr,seed\n");
    for i in 0..hess.eigenvalues.len() {
        let _ = writeln!(
            hcsv,
            "{i},{},{},{},{}",
            fmt17(hess.eigenvalues[i]),
            fmt17(hess.matrix[i][i]),
            fmt17(hess.stderr[i][i]),
            cfg.seed
        );
    }
    Ok(Outcome {
        reports: vec![
            Report {
                suffix: "",
                json: json!({"tau0": tau0, "profile": profile, "hessian": hess}),
                csv,
            },
            Report {
                suffix: "-hessian",
                json: serde_json::Value::Null,
                csv: hcsv,
            },
        ],
        failed: Vec::new(),
    })
}

fn energy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let w = weyl_form(cfg)?;
    let tau0 = resolve_tau0(cfg, &w)?;
    let h = HField::new(tau0, w);
    let opts = EnergyOptions {
        samples: cfg.samples,
        seed: cfg.seed,
        per_piece: cfg.per_piece,
    };
    let mut rows = Vec::new();
    for (k, r) in grid(cfg)? {
        let lat = match cfg.r_rule {
            RRule::Paper => Lattice::paper(cfg.n, k, cfg.eps, cfg.c0),
            _ => Lattice::with_ln_t(cfg.n, k, r, -(k as f64 * r).ln(), cfg.eps, cfg.c0),
        }
        .ctx("perturbation")?;
        let mb = MultiBubble::centered(lat);
        rows.push(energy_breakdown(&mb, &h, CutoffProfile::Smooth, &opts).ctx("energy_expansion")?);
    }
    Ok(Outcome {
        reports: vec![Report {
            suffix: "",
            json: json!({
                "tau0": tau0,
                "exponents": exponent_report(cfg.n, cfg.c0),
                "rows": rows,
            }),
            csv: sweep_csv(&rows),
        }],
        failed: Vec::new(),
    })
}

fn volume(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let scan = volume_scan(cfg.n, &cfg.k, cfg.r_over_k).ctx("energy_expansion")?;
    let csv = format!(
        "# slope = {}\n# v1 = {}\n# slope_rel_err = {}\n{}",
        fmt17(scan.slope),
        fmt17(scan.v1),
        fmt17(scan.slope_rel_err),
        scan.to_csv()
    );
    Ok(Outcome {
        reports: vec![Report {
            suffix: "",
            json: serde_json::to_value(&scan).expect("volume scan serializes"),
            csv,
        }],
        failed: Vec::new(),
    })
}

fn certify_all(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ids: Vec<usize> = if cfg.only.is_empty() {
        (1..=13).collect()
    } else {
        cfg.only.clone()
    };
    if let Some(bad) = ids.iter().find(|i| !(1..=13).contains(*i)) {
        return Err(CliError::Usage(format!(
            "criterion ids are 1..=13, got {bad}"
        )));
    }
    let battery = Battery::new(cfg.seed);
    let mut results = Vec::new();
    let mut failed = Vec::new();
    let mut csv = String::from("id,name,passed,detail\n");
    for id in ids {
        let r = battery.run(id);
        eprintln!("{}", r.line());
        if !r.passed {
            failed.push(r.name.clone());
        }
        let _ = writeln!(
            csv,
            "{},{},{},\"{}\"",
            r.id,
            r.name,
            r.passed,
            r.detail.replace('"', "'")
        );
        // timings stay on stderr so reports are reproducible
        results.push(json!({"id": r.id, "name": r.name, "passed": r.passed, "detail": r.detail}));
    }
    Ok(Outcome {
        reports: vec![Report {
            suffix: "",
            json: json!({"criteria": results}),
            csv,
        }],
        failed,
    })
}

fn render(report: &Report, format: Format, command: &str, cfg: &RunConfig) -> String {
    match format {
        Format::Json => {
            let v = json!({
                "command": command,
                "version": VERSION,
                "config": cfg,
                "result": report.json,
            });
            let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = format!("# command = \"{command}\"\n# version = \"{VERSION}\"\n");
            let echo = toml::to_string(cfg).expect("config serializes");
            for line in echo.lines() {
                let _ = writeln!(s, "# {line}");
            }
            s.push_str(&report.csv);
            s
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if cfg.n < 4 {
        return Err(CliError::Usage(format!(
            "n >= 4 required, got n = {}",
            cfg.n
        )));
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if cli.sequential {
        exec::set_backend(Backend::Sequential);
    }
    let outcome = match cli.command {
        Command::VerifyWeyl => verify_weyl(&cfg),
        Command::CertifyNorms => certify_norms(&cfg),
        Command::TuneTau0 => tune(&cfg),
        Command::ReducedEnergy => reduced_energy(&cfg),
        Command::Energy => energy(&cfg),
        Command::VolumeScan => volume(&cfg),
        Command::CertifyAll => certify_all(&cfg),
    }?;
    let name = cli.command.name();
    let ext = match cli.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
    }
    let mut first = true;
    for report in &outcome.reports {
        if cli.format == Format::Json && report.json.is_null() {
            continue;
        }
        let body = render(report, cli.format, name, &cfg);
        match &cfg.out {
            Some(dir) => {
                let path = dir.join(format!("{name}{}.{ext}", report.suffix));
                std::fs::write(&path, body)?;
                eprintln!("wrote {}", path.display());
            }
            None => {
                if !first {
                    println!();
                }
                print!("{body}");
            }
        }
        first = false;
    }
    Ok(outcome.failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(failed) if failed.is_empty() => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("failed certificates: {}", failed.join(", "));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
