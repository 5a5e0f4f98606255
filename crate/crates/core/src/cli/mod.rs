//! Command-line front end: `sweep`, `fit`, `verify` and `collapse`.
//!
//! Every command writes its human-readable output to caller-supplied streams and
//! returns a process exit code, so the binary is a thin wrapper around [`run`].

pub mod config;
pub mod report;
pub mod store;
pub mod verify;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::ensemble::{sweep, worker_pool, DiffusionCurve};
use crate::model::w_matrix;
use crate::scaling::{bootstrap_errors, collapse_export, select_kmax, FitConfig, K_MAX_LIMIT};
use crate::{Error, Result};
use config::{env_out, parse_list, parse_pair, resolve_out, ConfigFile, ListValue, RunConfig};
use report::{write_collapse, FitReport};
use store::{dataset_from_rows, read_csv, rows_for, write_csv, DirStore, FitVariable};
use verify::{run_verify, HoppingFn, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNIDENTIFIABLE: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;
pub const EXIT_VERIFY_FAILED: i32 = 5;

pub const SWEEP_CSV: &str = "sweep.csv";
pub const FIT_REPORT: &str = "fit_report.json";
pub const COLLAPSE_CSV: &str = "collapse.csv";
/// Scaling argument `t/N²` of the default final time.
pub const FIT_X: f64 = 0.25;
pub const DEFAULT_BOOT: usize = 200;
pub const DEFAULT_KMAX_RANGE: (usize, usize) = (1, 4);

#[derive(Debug, Parser)]
#[command(name = "qkr", version, about = "Spin-1/2 quantum kicked rotor: diffusion sweeps and finite-size scaling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ensemble diffusion curves over a (u, N) grid.
    Sweep(SweepArgs),
    /// Finite-size scaling fit of a sweep CSV.
    Fit(FitArgs),
    /// Numerical check of the kick identities and the Anderson mapping.
    Verify(VerifyArgs),
    /// Re-export the scaling collapse of a sweep under a saved fit.
    Collapse(CollapseArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Flat JSON file; keys are the long flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub u_min: Option<f64>,
    #[arg(long)]
    pub u_max: Option<f64>,
    #[arg(long)]
    pub u_step: Option<f64>,
    /// Comma separated truncations, e.g. 64,128,256.
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory (default: $QKR_OUT, else ./qkr-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub dz_factor: Option<f64>,
    /// Initial state: delta or gaussian.
    #[arg(long)]
    pub init: Option<String>,
    /// Final time (default N²/4).
    #[arg(long)]
    pub t_final: Option<u64>,
}

impl SweepArgs {
    fn as_config(&self) -> ConfigFile {
        ConfigFile {
            u_min: self.u_min,
            u_max: self.u_max,
            u_step: self.u_step,
            sizes: self.sizes.clone().map(ListValue::Text),
            samples: self.samples,
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            mu: self.mu,
            omega: self.omega,
            dz_factor: self.dz_factor,
            init: self.init.clone(),
            t_final: self.t_final,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Sweep CSV.
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fit window in u, LO,HI (required, here or in the config file).
    #[arg(long)]
    pub window: Option<String>,
    /// Polynomial orders to scan, LO,HI.
    #[arg(long)]
    pub kmax_range: Option<String>,
    /// Bootstrap replicas.
    #[arg(long)]
    pub boot: Option<usize>,
    /// Fit variable: u (= 1/h_e, default) or h_e.
    #[arg(long)]
    pub variable: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "4,8,16")]
    pub sizes: String,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CollapseArgs {
    /// Sweep CSV.
    pub input: PathBuf,
    /// Fit report written by `fit`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit code for a command error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_) | Error::InvalidState(_) | Error::DenseTooLarge { .. } => EXIT_USAGE,
        Error::Unidentifiable(_) | Error::RankDeficient | Error::TooFewPoints { .. } => EXIT_UNIDENTIFIABLE,
        Error::NoConvergence(_) => EXIT_NO_CONVERGENCE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, out, err, w_matrix)
}

/// As [`run`], with the hopping used by `verify` replaced.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write, hopping: HoppingFn) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Sweep(a) => load_file(a.config.as_deref())
            .and_then(|file| RunConfig::resolve(&a.as_config(), &file, env_out()))
            .and_then(|cfg| cmd_sweep(&cfg, out, err)),
        Command::Fit(a) => cmd_fit_args(a, out),
        Command::Verify(a) => parse_list(&a.sizes, "sizes").and_then(|sizes| {
            cmd_verify(&VerifyOptions { sizes, trials: a.trials, seed: a.seed }, hopping, out, err)
        }),
        Command::Collapse(a) => {
            let dir = resolve_out(a.out.as_ref(), None, env_out());
            cmd_collapse(&a.input, &a.report, &dir, out)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn load_file(path: Option<&Path>) -> Result<ConfigFile> {
    path.map_or_else(|| Ok(ConfigFile::default()), ConfigFile::load)
}

fn write_sweep_csv(dir: &Path, curves: &[(f64, &DiffusionCurve)]) -> Result<PathBuf> {
    let rows: Vec<_> = curves.iter().flat_map(|(u, c)| rows_for(*u, c)).collect();
    let path = dir.join(SWEEP_CSV);
    write_csv(&path, &rows)?;
    Ok(path)
}

/// Runs (or resumes) the sweep and writes `sweep.csv` plus one sidecar per curve.
///
/// Returns [`EXIT_FAILURE`] after printing a failure table if any `(u, N)` pair failed.
pub fn cmd_sweep(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let store = DirStore::new(&cfg.out_dir)?;
    let pool = worker_pool(cfg.workers)?;
    let outcomes = sweep(&cfg.template, &cfg.u_grid, &cfg.sizes, &cfg.spec, &pool, Some(&store));

    writeln!(out, "{:>5} {:>10} {:>8} {:>12} {:>12} {:>8}  source", "N", "u", "t", "D", "stderr", "flagged")?;
    let mut done = Vec::new();
    let mut failed = Vec::new();
    for o in &outcomes {
        match &o.result {
            Ok(c) => {
                let (t, d, se) = c.final_point().unwrap_or((0, f64::NAN, f64::NAN));
                let source = if o.resumed { "resumed" } else { "computed" };
                writeln!(out, "{:>5} {:>10.6} {:>8} {:>12.6} {:>12.6} {:>8}  {source}", o.key.n_trunc, o.key.u, t, d, se, c.truncation_flagged)?;
                done.push((o.key.u, c));
            }
            Err(e) => failed.push((o.key, e)),
        }
    }
    let path = write_sweep_csv(&cfg.out_dir, &done)?;
    writeln!(out, "wrote {} ({} curves)", path.display(), done.len())?;
    let flagged: usize = done.iter().map(|(_, c)| c.truncation_flagged).sum();
    if flagged > 0 {
        writeln!(out, "note: {flagged} members exceeded the truncation edge-weight guard")?;
    }
    if failed.is_empty() {
        return Ok(EXIT_OK);
    }
    writeln!(err, "{} of {} sweep points failed:", failed.len(), outcomes.len())?;
    writeln!(err, "{:>5} {:>10}  reason", "N", "u")?;
    for (key, e) in failed {
        writeln!(err, "{:>5} {:>10.6}  {e}", key.n_trunc, key.u)?;
    }
    Ok(EXIT_FAILURE)
}

/// Resolved arguments of `fit`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub variable: FitVariable,
    pub window: (f64, f64),
    pub k_range: (usize, usize),
    pub n_boot: usize,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
}

fn cmd_fit_args(a: &FitArgs, out: &mut dyn Write) -> Result<i32> {
    let file = load_file(a.config.as_deref())?;
    let window = match (&a.window, &file.window) {
        (Some(text), _) => parse_pair(text, "window")?,
        (None, Some(v)) => match v.items("window")?.as_slice() {
            &[lo, hi] if lo <= hi => (lo, hi),
            _ => return Err(Error::InvalidParams("window expects [LO, HI]".into())),
        },
        (None, None) => return Err(Error::InvalidParams("--window LO,HI is required".into())),
    };
    let k_range = match (&a.kmax_range, &file.kmax_range) {
        (Some(text), _) => parse_pair(text, "kmax-range")?,
        (None, Some(v)) => match v.items("kmax-range")?.as_slice() {
            &[lo, hi] if lo <= hi => (lo, hi),
            _ => return Err(Error::InvalidParams("kmax-range expects [LO, HI]".into())),
        },
        (None, None) => DEFAULT_KMAX_RANGE,
    };
    let opts = FitOptions {
        variable: FitVariable::parse(a.variable.as_deref().or(file.variable.as_deref()).unwrap_or("u"))?,
        window,
        k_range,
        n_boot: a.boot.or(file.boot).unwrap_or(DEFAULT_BOOT),
        seed: a.seed.or(file.seed).unwrap_or(0),
        workers: a.workers.or(file.workers).unwrap_or_else(config::default_workers),
        out_dir: resolve_out(a.out.as_ref(), file.out.as_ref(), env_out()),
    };
    cmd_fit(&a.input, &opts, out)
}

/// Fits the `t = N²/4` rows of `input` inside the window and writes the report
/// and collapse CSV into `opts.out_dir`.
pub fn cmd_fit(input: &Path, opts: &FitOptions, out: &mut dyn Write) -> Result<i32> {
    if opts.k_range.0 < 1 || opts.k_range.1 > K_MAX_LIMIT {
        return Err(Error::InvalidParams(format!("--kmax-range must lie within 1,{K_MAX_LIMIT}")));
    }
    let rows = read_csv(input)?;
    let dataset = dataset_from_rows(&rows, FIT_X, opts.window, opts.variable)?;
    dataset.check_identifiable()?;
    let pool = worker_pool(opts.workers)?;
    let (selection, boot) = pool.install(|| -> Result<_> {
        let base = FitConfig::for_dataset(&dataset, opts.k_range.0);
        let selection = select_kmax(&dataset, opts.k_range, &base)?;
        let boot = bootstrap_errors(&dataset, &selection.fit, opts.n_boot, opts.seed)?;
        Ok((selection, boot))
    })?;
    let report = FitReport::new(&selection, &boot, opts.variable, opts.window, FIT_X);

    fs::create_dir_all(&opts.out_dir)?;
    report.save(&opts.out_dir.join(FIT_REPORT))?;
    write_collapse(&opts.out_dir.join(COLLAPSE_CSV), &collapse_export(&dataset, &selection.fit))?;
    report.write_summary(out)?;
    writeln!(out, "wrote {} and {}", opts.out_dir.join(FIT_REPORT).display(), opts.out_dir.join(COLLAPSE_CSV).display())?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(opts: &VerifyOptions, hopping: HoppingFn, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let report = run_verify(opts, hopping)?;
    report.write_table(out)?;
    if report.passed() {
        writeln!(out, "all checks passed")?;
        return Ok(EXIT_OK);
    }
    let failures = report.failures();
    writeln!(err, "{} checks failed:", failures.len())?;
    for f in failures {
        writeln!(err, "  {} N={} residual {:.3e} > {:.1e}", f.check, f.n_trunc.map_or("-".into(), |n| n.to_string()), f.residual, f.tolerance)?;
    }
    Ok(EXIT_VERIFY_FAILED)
}

/// Recomputes the collapse of `input` under a saved fit report.
pub fn cmd_collapse(input: &Path, report: &Path, out_dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let report = FitReport::load(report)?;
    let rows = read_csv(input)?;
    let dataset = dataset_from_rows(&rows, report.x, (report.window[0], report.window[1]), report.variable)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(COLLAPSE_CSV);
    write_collapse(&path, &collapse_export(&dataset, &report.to_fit()))?;
    writeln!(out, "wrote {} ({} points)", path.display(), dataset.len())?;
    Ok(EXIT_OK)
}
