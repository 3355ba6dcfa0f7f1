mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use torwave::dispersive::{build_cutoffs, supnorm_scan};
use torwave::geometry::{FieldGrid, GridSpec, TorusGeometry};
use torwave::mehler_fock::{class_a_check, forward, read_profile, write_density, LibraryProfile, RadialProfile};
use torwave::oracle::{fdtd_cross_check, roundtrip_error};
use torwave::specfun::{conical_p, conical_p_weighted, trace, ConicalParams};
use torwave::wave_kernel::{eps_margin, synthesize, InitialData};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "torwave", version, about = "Wave propagation outside a torus: kernels, transforms, checks")]
struct Cli {
    /// TOML or JSON run configuration; unspecified keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "TORWAVE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Validate the configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Write special-function route decisions to specfun_trace.jsonl.
    #[arg(long, global = true)]
    trace_specfun: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate special functions.
    #[command(subcommand)]
    Specfun(SpecfunCommand),
    /// Mehler-Fock roundtrip of a radial profile.
    Mf(MfArgs),
    /// Synthesise the solution at time t.
    Solve(SolveArgs),
    /// Sup-norm scan of the filtered kernel against time.
    DispersiveScan(ScanArgs),
}

#[derive(Subcommand)]
enum SpecfunCommand {
    /// P^mu_{ik-1/2}(cosh x) for every combination of the given values.
    Conical {
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<u32>,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
    },
}

#[derive(Args)]
struct MfArgs {
    /// Library profile name, or `zero`.
    #[arg(long, conflicts_with = "input")]
    profile: Option<String>,
    /// Profile CSV with tau, weight, value columns.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    mu: u32,
    #[arg(long)]
    k_max: Option<f64>,
    /// Largest accepted relative sup-norm roundtrip error.
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Reference,
    Zero,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    #[arg(long, value_enum, default_value_t = DataKind::Reference)]
    data: DataKind,
    /// Also run the finite-difference solver and write a comparison report.
    #[arg(long)]
    compare_fdtd: bool,
    /// Largest accepted relative L2 difference against the finite-difference solution.
    #[arg(long, default_value_t = 5e-2)]
    tolerance: f64,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Start of the fit window.
    #[arg(long, requires = "tmax")]
    tmin: Option<f64>,
    /// End of the fit window.
    #[arg(long, requires = "tmin")]
    tmax: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

enum Failure {
    /// Configuration or precondition problem.
    Usage(String),
    /// The computation ran but missed its tolerance.
    Check(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn write_json(dir: &Path, name: &str, mut body: Value, start: Instant) -> std::io::Result<()> {
    body["runtime_ms"] = json!(start.elapsed().as_millis() as u64);
    fs::write(dir.join(name), serde_json::to_string_pretty(&body)? + "\n")
}

fn write_field(path: &Path, f: &FieldGrid) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["phi1", "phi2", "tau", "u"])?;
    let (n1, n2, n3) = f.shape();
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..n3 {
                w.write_record([f.phi1[i], f.phi2[j], f.tau[l], f.get(i, j, l)].map(|v| format!("{v:.17e}")))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn specfun(cmd: &SpecfunCommand, dir: &Path, dry_run: bool) -> Outcome {
    let SpecfunCommand::Conical { mu, k, x } = cmd;
    let mut params = Vec::new();
    for &m in mu {
        for &kk in k {
            for &xx in x {
                params.push(ConicalParams::new(m, kk, xx)?);
            }
        }
    }
    if dry_run {
        return Ok(());
    }
    let mut w = csv::Writer::from_path(dir.join("conical.csv"))?;
    w.write_record(["mu", "k", "x", "value", "weighted", "abs_err", "regime"])?;
    for p in params {
        let v = conical_p(p)?;
        let wv = conical_p_weighted(p)?;
        let regime = serde_json::to_value(v.regime)?;
        w.write_record([
            p.mu.to_string(),
            format!("{:.17e}", p.k),
            format!("{:.17e}", p.x),
            format!("{:.17e}", v.value),
            format!("{:.17e}", wv.value),
            format!("{:.3e}", v.abs_err),
            regime.as_str().unwrap_or_default().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn mf(args: &MfArgs, cfg: &RunConfig, dir: &Path, dry_run: bool) -> Outcome {
    let mut policy = cfg.mehler_fock;
    if let Some(k) = args.k_max {
        policy.k_max = k;
    }
    if !(policy.k_max > 0.0 && args.tolerance > 0.0) {
        return Err(Failure::Usage("k_max and tolerance must be positive".into()));
    }
    let grid = policy.tau_grid();
    let (name, profile) = match (&args.profile, &args.input) {
        (_, Some(path)) => (path.display().to_string(), read_profile(path)?),
        (Some(n), None) if n == "zero" => (n.clone(), RadialProfile::zeros(&grid)),
        (Some(n), None) => match LibraryProfile::from_name(n) {
            Some(p) => (n.clone(), p.sample(&grid)),
            None => {
                let known: Vec<&str> = LibraryProfile::ALL.iter().map(|p| p.name()).collect();
                return Err(Failure::Usage(format!("unknown profile `{n}`; known: zero, {}", known.join(", "))));
            }
        },
        (None, None) => return Err(Failure::Usage("give --profile or --input".into())),
    };
    if dry_run {
        return Ok(());
    }
    let start = Instant::now();
    let class = class_a_check(&profile);
    let err = roundtrip_error(&profile, args.mu, &policy)?;
    if profile.sup_norm() > 0.0 {
        let density = forward(&profile, args.mu, &policy.k_grid(), &policy)?;
        write_density(&dir.join("mf_density.csv"), &density)?;
    }
    let pass = err.linf_rel <= args.tolerance;
    let report = json!({
        "profile": name, "mu": args.mu, "policy": policy, "class": class,
        "roundtrip": err, "tolerance": args.tolerance, "pass": pass,
    });
    write_json(dir, "mf_report.json", report, start)?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("roundtrip error {:.3e} exceeds {:.1e}", err.linf_rel, args.tolerance)))
    }
}

fn solve_grid(cfg: &RunConfig, g: &TorusGeometry) -> GridSpec {
    cfg.grid.unwrap_or_else(|| {
        let m = eps_margin(g);
        GridSpec { n_phi1: 32, n_phi2: 32, n_tau: 24, tau_min: m, tau_max: g.tau1 - m }
    })
}

fn solve(args: &SolveArgs, cfg: &RunConfig, g: &TorusGeometry, dir: &Path, dry_run: bool) -> Outcome {
    if !args.t.is_finite() {
        return Err(Failure::Usage(format!("t must be finite, got {}", args.t)));
    }
    let data = match args.data {
        DataKind::Reference => InitialData::reference(g),
        DataKind::Zero => InitialData::zero(g),
    };
    data.check_support(g)?;
    let spec = solve_grid(cfg, g);
    if dry_run {
        return Ok(());
    }
    let start = Instant::now();
    let s = synthesize(&data, args.t, &spec, g, &cfg.truncation)?;
    write_field(&dir.join("field.csv"), &s.field)?;
    let mut report = json!({
        "t": args.t, "grid": spec, "policy": cfg.truncation, "modes_used": s.modes_used,
        "k_nodes": s.k_nodes, "mode_tail": s.mode_tail, "k_tail": s.k_tail, "max_abs": s.field.max_abs(),
    });
    if args.t == 0.0 {
        // Distance to the data, relative to their size on the grid.
        let f = &s.field;
        let (mut err, mut peak) = (0.0f64, 0.0f64);
        let (n1, n2, n3) = f.shape();
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..n3 {
                    let q = data.eval(f.phi1[i], f.phi2[j], f.tau[l]);
                    err = err.max((f.get(i, j, l) - q).abs());
                    peak = peak.max(q.abs());
                }
            }
        }
        report["data_error"] = json!(if peak > 0.0 { err / peak } else { err });
    }
    write_json(dir, "solve.json", report, start)?;
    if !args.compare_fdtd {
        return Ok(());
    }
    let start = Instant::now();
    let c = fdtd_cross_check(&data, args.t, &cfg.fdtd, &cfg.truncation, &cfg.cross_check, g)?;
    let pass = c.rel_l2 <= args.tolerance;
    let mut body = serde_json::to_value(&c)?;
    body["tolerance"] = json!(args.tolerance);
    body["pass"] = json!(pass);
    write_json(dir, "compare_fdtd.json", body, start)?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("relative L2 difference {:.3e} exceeds {:.1e}", c.rel_l2, args.tolerance)))
    }
}

fn dispersive_scan(args: &ScanArgs, cfg: &RunConfig, g: &TorusGeometry, dir: &Path, dry_run: bool) -> Outcome {
    let mut cfg = cfg.clone();
    cfg.cutoff.h = args.h.unwrap_or(cfg.cutoff.h);
    cfg.cutoff.b = args.b.unwrap_or(cfg.cutoff.b);
    if let (Some(lo), Some(hi)) = (args.tmin, args.tmax) {
        cfg.scan.fit_window = Some((lo, hi));
    }
    if let Some(n) = args.samples {
        cfg.scan.n_samples = n;
    }
    let scan = cfg.scan_config();
    scan.validate(g)?;
    let cut = build_cutoffs(scan.b, scan.h)?;
    if dry_run {
        return Ok(());
    }
    let start = Instant::now();
    let report = supnorm_scan(&scan, &cut, g)?;
    report.write_csv(&dir.join("decay.csv"))?;
    report.write_gnuplot(&dir.join("decay.dat"))?;
    let body = json!({ "config": report.config, "eta": report.eta, "table_nodes": report.table_nodes, "fit": report.fit });
    write_json(dir, "fit.json", body, start)?;
    let f = &report.fit;
    if f.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "fit failed: slope {:.3} (pass {}), envelope {}, plateau {}",
            f.slope, f.slope_pass, f.envelope_pass, f.plateau_pass
        )))
    }
}

fn run(cli: &Cli) -> Outcome {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(Failure::Usage)?;
    let g = cfg.geometry().map_err(Failure::Usage)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let dir = cli.output_dir.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("torwave-out"));
    if !cli.dry_run {
        fs::create_dir_all(&dir)?;
    }
    if cli.trace_specfun {
        trace::enable();
    }
    let out = match &cli.command {
        Command::Specfun(c) => specfun(c, &dir, cli.dry_run),
        Command::Mf(a) => mf(a, &cfg, &dir, cli.dry_run),
        Command::Solve(a) => solve(a, &cfg, &g, &dir, cli.dry_run),
        Command::DispersiveScan(a) => dispersive_scan(a, &cfg, &g, &dir, cli.dry_run),
    };
    if cli.trace_specfun && !cli.dry_run {
        fs::write(dir.join("specfun_trace.jsonl"), trace::to_json_lines(&trace::take()))?;
    }
    if cli.dry_run && out.is_ok() {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("torwave: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("torwave: {msg}");
            ExitCode::from(2)
        }
    }
}
