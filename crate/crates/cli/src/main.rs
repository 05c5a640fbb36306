//! `zerolab` — batch experiment driver.
//!
//! Loads a spectral measure from JSON, dispatches a subcommand and writes CSV
//! artifacts plus a JSON run-manifest next to each output. All randomness
//! derives from `--seed`; reruns with the same arguments are byte-identical.
//!
//! Exit codes: 0 success, 2 validation error (bad flags, malformed or
//! non-normalized measure, unwritable output), 3 numeric failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use zerolab_core::analytic::jensen_upper_bound;
use zerolab_core::coupling::{couple, verify_coupling};
use zerolab_core::measure::SpectralMeasure;
use zerolab_core::sampler::{
    default_n_freq, sample_path, stream_rng, PathReplay, WaveExpansion,
};
use zerolab_core::stats::mean_and_se;
use zerolab_core::tails::{
    naive_tail, tilted_tail, EstimatorKind, Side, TailEstimate, TiltConfig,
};
use zerolab_core::zeros::{count_zeros, default_grid_step, kac_rice_density};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
enum CliError {
    Validation(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation: {m}"),
            CliError::Numeric(m) => write!(f, "numeric: {m}"),
        }
    }
}

type CliResult = Result<(), CliError>;

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn numeric<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numeric(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "zerolab", version, about = "Zero statistics of stationary Gaussian processes")]
struct Cli {
    /// Worker threads (also settable via SGP_ZEROLAB_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print analytic functionals of a measure (support, Kac-Rice density, markers).
    Spec(SpecArgs),
    /// Sample paths and write their values on a grid.
    Sample(SampleArgs),
    /// Count zeros per path and summarize the empirical density.
    Zeros(ZerosArgs),
    /// Jensen averaging scheme: certified upper bound per path vs exact count.
    Jensen(JensenArgs),
    /// Build coupled (F, G, H) triples and verify the identities.
    Couple(CoupleArgs),
    /// Estimate tail probabilities (naive or tilted).
    Tails(TailsArgs),
    /// Sweep eta over a grid and emit the phase-transition curve data.
    Scan(ScanArgs),
    /// Re-run the command recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug)]
struct SpecArgs {
    #[arg(long)]
    measure: PathBuf,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, short = 'T')]
    t: f64,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_freq: Option<usize>,
    #[arg(long)]
    grid_step: Option<f64>,
    /// Also dump coefficient vectors (frame hash + coefficients) as JSON.
    #[arg(long)]
    coeffs_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ZerosArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, short = 'T')]
    t: f64,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_freq: Option<usize>,
}

#[derive(Args, Debug)]
struct JensenArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, short = 'T')]
    t: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    paths: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_freq: Option<usize>,
}

#[derive(Args, Debug)]
struct CoupleArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, short = 'T')]
    t: f64,
    #[arg(long)]
    triples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_freq: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Over,
    Under,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Over => Side::Over,
            SideArg::Under => Side::Under,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Naive,
    Tilted,
}

#[derive(Args, Debug)]
struct TailsArgs {
    #[arg(long)]
    measure: PathBuf,
    /// Comma-separated list of horizons, e.g. "10,20,30,40".
    #[arg(long, short = 'T')]
    t: String,
    /// Threshold density (zeros per unit time); ignored by the tilted
    /// estimator, whose event is the pure-wave window around --tilt-x.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_enum, default_value = "over")]
    side: SideArg,
    #[arg(long, value_enum, default_value = "naive")]
    estimator: EstimatorArg,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Tilt target frequency X (default: the support edge A).
    #[arg(long)]
    tilt_x: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    tilt_eps: f64,
    /// Override the tilt scale L = kappa^(-1/3).
    #[arg(long)]
    l_override: Option<f64>,
    #[arg(long)]
    n_freq: Option<usize>,
    /// Evaluate the pure-wave certificate on every tilted sample.
    #[arg(long)]
    certificates: bool,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, short = 'T')]
    t: f64,
    /// Either "lo:hi:count" or a comma-separated list of eta values.
    #[arg(long)]
    eta_grid: String,
    #[arg(long, value_enum, default_value = "over")]
    side: SideArg,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_freq: Option<usize>,
}

#[derive(Args, Debug)]
struct RerunArgs {
    /// Manifest file produced by a previous run.
    manifest: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    argv: Vec<String>,
    seed: Option<u64>,
    workers: Option<usize>,
    wall_time_secs: f64,
    outputs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers(cli.workers);
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(cli.command, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn init_workers(flag: Option<usize>) {
    let from_env = std::env::var("SGP_ZEROLAB_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        // ignore AlreadyInitialized on reruns within one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(command: Command, argv: &[String]) -> CliResult {
    let started = Instant::now();
    let (outputs, seed) = match command {
        Command::Spec(a) => return run_spec(a),
        Command::Sample(a) => {
            let seed = a.seed;
            (run_sample(a)?, Some(seed))
        }
        Command::Zeros(a) => {
            let seed = a.seed;
            (run_zeros(a)?, Some(seed))
        }
        Command::Jensen(a) => {
            let seed = a.seed;
            (run_jensen(a)?, Some(seed))
        }
        Command::Couple(a) => {
            let seed = a.seed;
            (run_couple(a)?, Some(seed))
        }
        Command::Tails(a) => {
            let seed = a.seed;
            (run_tails(a)?, Some(seed))
        }
        Command::Scan(a) => {
            let seed = a.seed;
            (run_scan(a)?, Some(seed))
        }
        Command::Rerun(a) => return run_rerun(a),
    };
    if let Some(primary) = outputs.first() {
        let manifest = RunManifest {
            tool: "zerolab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            argv: argv.to_vec(),
            seed,
            workers: rayon::current_num_threads().into(),
            wall_time_secs: started.elapsed().as_secs_f64(),
            outputs: outputs.clone(),
        };
        let path = manifest_path(primary);
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, body).map_err(|e| validation(format!("writing {path:?}: {e}")))?;
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn load_measure(path: &Path) -> Result<SpectralMeasure, CliError> {
    let body =
        fs::read_to_string(path).map_err(|e| validation(format!("reading {path:?}: {e}")))?;
    SpectralMeasure::from_json_str(&body).map_err(validation)
}

fn write_output(path: &Path, body: &str) -> CliResult {
    fs::write(path, body).map_err(|e| validation(format!("writing {path:?}: {e}")))
}

fn fmt_f64(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn run_spec(args: SpecArgs) -> CliResult {
    let mu = load_measure(&args.measure)?;
    let (b, a) = mu.support_bounds();
    let gamma = mu.moment(2).sqrt();
    let summary = serde_json::json!({
        "support": {"b": b, "a": a},
        "gamma": gamma,
        "kac_rice_density": kac_rice_density(&mu),
        "markers": {
            "b_over_pi": b / std::f64::consts::PI,
            "gamma_over_pi": gamma / std::f64::consts::PI,
            "a_over_pi": a / std::f64::consts::PI,
        },
        "total_mass": mu.total_mass(),
        "moment2": mu.moment(2),
        "moment4": mu.moment(4),
        "zero_atom": mu.zero_atom(),
        "n_atoms": mu.atoms().len(),
        "n_pieces": mu.pieces().len(),
    });
    let body = serde_json::to_string_pretty(&summary).expect("summary serializes");
    match args.out {
        Some(path) => write_output(&path, &body),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn run_sample(args: SampleArgs) -> Result<Vec<PathBuf>, CliError> {
    let mu = load_measure(&args.measure)?;
    if args.t <= 0.0 || args.samples == 0 {
        return Err(CliError::Validation("need T > 0 and samples >= 1".into()));
    }
    let frame = Arc::new(WaveExpansion::discretize(
        &mu,
        args.n_freq.unwrap_or_else(|| default_n_freq(&mu, args.t)),
    ));
    let step = args.grid_step.unwrap_or_else(|| default_grid_step(&frame));
    let n_points = ((args.t / step).floor() as usize) + 1;
    let mut csv = String::from("seed,t,value\n");
    let mut replays: Vec<PathReplay> = Vec::new();
    for i in 0..args.samples {
        let path = sample_path(&frame, &mut stream_rng(args.seed, i as u64));
        for k in 0..n_points {
            let t = k as f64 * step;
            let _ = writeln!(csv, "{i},{},{}", fmt_f64(t), fmt_f64(path.value(t)));
        }
        if args.coeffs_out.is_some() {
            replays.push(path.replay());
        }
    }
    write_output(&args.out, &csv)?;
    let mut outputs = vec![args.out.clone()];
    if let Some(coeffs) = &args.coeffs_out {
        let body = serde_json::to_string_pretty(&replays).expect("replays serialize");
        write_output(coeffs, &body)?;
        outputs.push(coeffs.clone());
    }
    Ok(outputs)
}

fn run_zeros(args: ZerosArgs) -> Result<Vec<PathBuf>, CliError> {
    let mu = load_measure(&args.measure)?;
    if args.t <= 0.0 || args.samples == 0 {
        return Err(CliError::Validation("need T > 0 and samples >= 1".into()));
    }
    let frame = Arc::new(WaveExpansion::discretize(
        &mu,
        args.n_freq.unwrap_or_else(|| default_n_freq(&mu, args.t)),
    ));
    let step = default_grid_step(&frame);
    use rayon::prelude::*;
    let counts: Vec<usize> = (0..args.samples)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(&frame, &mut stream_rng(args.seed, i as u64));
            count_zeros(&path, args.t, step).expect("default step is admissible").count
        })
        .collect();

    let mut csv = String::from("seed,T,N,density\n");
    for (i, n) in counts.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{n},{}",
            fmt_f64(args.t),
            fmt_f64(*n as f64 / args.t)
        );
    }
    write_output(&args.out, &csv)?;

    let densities: Vec<f64> = counts.iter().map(|&n| n as f64 / args.t).collect();
    let (mean, se) = mean_and_se(&densities);
    let min = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let max = densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut summary =
        String::from("T,n_samples,mean_density,std_err,min_density,max_density,kac_rice_density\n");
    let _ = writeln!(
        summary,
        "{},{},{},{},{},{},{}",
        fmt_f64(args.t),
        args.samples,
        fmt_f64(mean),
        fmt_f64(se),
        fmt_f64(min),
        fmt_f64(max),
        fmt_f64(kac_rice_density(&mu))
    );
    let summary_path = summary_path(&args.out);
    write_output(&summary_path, &summary)?;
    Ok(vec![args.out, summary_path])
}

fn summary_path(out: &Path) -> PathBuf {
    match out.extension() {
        Some(ext) => {
            let mut stem = out.file_stem().unwrap_or_default().to_os_string();
            stem.push(".summary.");
            stem.push(ext);
            out.with_file_name(stem)
        }
        None => out.with_extension("summary"),
    }
}

fn run_jensen(args: JensenArgs) -> Result<Vec<PathBuf>, CliError> {
    let mu = load_measure(&args.measure)?;
    if args.paths == 0 {
        return Err(CliError::Validation("need paths >= 1".into()));
    }
    let frame = Arc::new(WaveExpansion::discretize(
        &mu,
        args.n_freq.unwrap_or_else(|| default_n_freq(&mu, args.t)),
    ));
    let (_, a_edge) = mu.support_bounds();
    use rayon::prelude::*;
    let rows: Vec<Result<String, CliError>> = (0..args.paths)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(&frame, &mut stream_rng(args.seed, i as u64));
            let outcome = jensen_upper_bound(&path, args.t, args.eps).map_err(numeric)?;
            let growth_cap = a_edge / std::f64::consts::PI * 2.0 * outcome.scheme.radius
                + 6.0 * args.t.ln();
            let worst_margin = outcome
                .circle_averages
                .iter()
                .map(|avg| growth_cap - avg)
                .fold(f64::INFINITY, f64::min);
            Ok(format!(
                "{i},{},{},{},{},{},{}\n",
                fmt_f64(args.t),
                fmt_f64(args.eps),
                outcome.exact,
                fmt_f64(outcome.bound),
                fmt_f64(outcome.slack()),
                fmt_f64(worst_margin)
            ))
        })
        .collect();
    let mut csv = String::from("seed,T,eps,exact,bound,slack,worst_circle_margin\n");
    for row in rows {
        csv.push_str(&row?);
    }
    write_output(&args.out, &csv)?;
    Ok(vec![args.out])
}

fn run_couple(args: CoupleArgs) -> Result<Vec<PathBuf>, CliError> {
    let mu = load_measure(&args.measure)?;
    if args.triples == 0 {
        return Err(CliError::Validation("need triples >= 1".into()));
    }
    let frame = Arc::new(WaveExpansion::discretize(
        &mu,
        args.n_freq.unwrap_or_else(|| default_n_freq(&mu, args.t)),
    ));
    use rayon::prelude::*;
    let rows: Vec<Result<String, CliError>> = (0..args.triples)
        .into_par_iter()
        .map(|i| {
            let f = sample_path(&frame, &mut stream_rng(args.seed, i as u64));
            let triple = couple(&f).map_err(numeric)?;
            let report = verify_coupling(&triple, args.t);
            Ok(format!(
                "{i},{},{},{},{},{}\n",
                fmt_f64(report.identity_residual),
                fmt_f64(report.lattice_residual),
                report.n_f,
                report.n_g,
                report.inequality_slack()
            ))
        })
        .collect();
    let mut csv = String::from("index,identity_residual,lattice_residual,n_f,n_g,slack\n");
    for row in rows {
        csv.push_str(&row?);
    }
    write_output(&args.out, &csv)?;
    Ok(vec![args.out])
}

fn tails_row(est: &TailEstimate) -> String {
    let hits_or_ess = match est.estimator {
        EstimatorKind::Naive => format!("{}", est.hits),
        EstimatorKind::Tilted => fmt_f64(est.ess.unwrap_or(f64::NAN)),
    };
    let (theta, l, kappa) = match &est.tilt {
        Some(t) => (fmt_f64(t.theta), fmt_f64(t.l_param), fmt_f64(t.kappa)),
        None => (String::new(), String::new(), String::new()),
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}\n",
        fmt_f64(est.t_horizon),
        fmt_f64(est.eta),
        est.estimator.as_str(),
        est.n_samples,
        hits_or_ess,
        fmt_f64(est.p_hat),
        fmt_f64(est.ci.0),
        fmt_f64(est.ci.1),
        fmt_f64(est.log_p),
        theta,
        l,
        kappa
    )
}

const TAILS_HEADER: &str = "T,eta,estimator,n,hits_or_ess,p_hat,ci_lo,ci_hi,log_p,theta,L,kappa\n";

fn run_tails(args: TailsArgs) -> Result<Vec<PathBuf>, CliError> {
    let mu = load_measure(&args.measure)?;
    let horizons = parse_list(&args.t)?;
    if horizons.is_empty() {
        return Err(CliError::Validation("empty horizon list".into()));
    }
    let mut csv = String::from(TAILS_HEADER);
    for (idx, &t) in horizons.iter().enumerate() {
        let seed = per_run_seed(args.seed, idx);
        let est = match args.estimator {
            EstimatorArg::Naive => {
                let eta = args.eta.ok_or_else(|| {
                    CliError::Validation("--eta is required for the naive estimator".into())
                })?;
                naive_tail(&mu, t, eta, args.side.into(), args.samples, seed, args.n_freq)
            }
            EstimatorArg::Tilted => {
                let (_, a_edge) = mu.support_bounds();
                let mut cfg = TiltConfig::new(
                    t,
                    args.tilt_x.unwrap_or(a_edge),
                    args.tilt_eps,
                    args.samples,
                    seed,
                );
                cfg.l_override = args.l_override;
                cfg.n_freq = args.n_freq;
                cfg.check_certificates = args.certificates;
                let run = tilted_tail(&mu, &cfg).map_err(numeric)?;
                if let Some(cert) = &run.certificates {
                    eprintln!(
                        "T={t}: certificates fired {}/{} (contradictions {})",
                        cert.n_fired, cert.n_checked, cert.n_contradictions
                    );
                }
                run.estimate
            }
        };
        csv.push_str(&tails_row(&est));
    }
    write_output(&args.out, &csv)?;
    Ok(vec![args.out])
}

fn run_scan(args: ScanArgs) -> Result<Vec<PathBuf>, CliError> {
    let mu = load_measure(&args.measure)?;
    let etas = parse_grid(&args.eta_grid)?;
    let (b, a) = mu.support_bounds();
    if etas.is_empty() {
        return Err(CliError::Validation("empty eta grid".into()));
    }
    let cap = 2.0 * a / std::f64::consts::PI;
    for &eta in &etas {
        if !(eta > 0.0 && eta <= cap) {
            return Err(CliError::Validation(format!(
                "eta {eta} outside (0, 2A/pi] = (0, {cap}]"
            )));
        }
    }
    let gamma = mu.moment(2).sqrt();
    let mut csv = String::new();
    let _ = writeln!(
        csv,
        "# markers: B_over_pi={} gamma_over_pi={} A_over_pi={}",
        fmt_f64(b / std::f64::consts::PI),
        fmt_f64(gamma / std::f64::consts::PI),
        fmt_f64(a / std::f64::consts::PI)
    );
    csv.push_str(TAILS_HEADER);
    for (idx, &eta) in etas.iter().enumerate() {
        let est = naive_tail(
            &mu,
            args.t,
            eta,
            args.side.into(),
            args.samples,
            per_run_seed(args.seed, idx),
            args.n_freq,
        );
        csv.push_str(&tails_row(&est));
    }
    write_output(&args.out, &csv)?;
    Ok(vec![args.out])
}

fn run_rerun(args: RerunArgs) -> CliResult {
    let body = fs::read_to_string(&args.manifest)
        .map_err(|e| validation(format!("reading {:?}: {e}", args.manifest)))?;
    let manifest: RunManifest = serde_json::from_str(&body).map_err(validation)?;
    let argv = manifest.argv.clone();
    let full: Vec<String> = std::iter::once("zerolab".to_string()).chain(argv.clone()).collect();
    let cli = Cli::try_parse_from(&full).map_err(validation)?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(CliError::Validation("manifest records a rerun; refusing to recurse".into()));
    }
    dispatch(cli.command, &argv)
}

fn per_run_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn parse_list(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Validation(format!("bad number {s:?}: {e}")))
        })
        .collect()
}

/// "lo:hi:count" or a comma list.
fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Validation(format!("grid {spec:?} is not lo:hi:count")));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|e| CliError::Validation(format!("bad grid lo: {e}")))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|e| CliError::Validation(format!("bad grid hi: {e}")))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|e| CliError::Validation(format!("bad grid count: {e}")))?;
        if count < 2 || !(hi > lo) {
            return Err(CliError::Validation("grid needs hi > lo and count >= 2".into()));
        }
        Ok((0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect())
    } else {
        parse_list(spec)
    }
}
