//! The `xdiff` command line: `run`, `sweep`, `certify` and `oracle`.
//!
//! Outputs go under `$XDIFF_OUTPUT_DIR` (default `./out`), one directory
//! per config file stem. Exit codes: 0 success, 1 I/O failure, 2 config
//! error, 3 solver failure, 4 failed `--check`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{parse_config, ConfigFile, SweepPlan};
use crate::continuation::{run_continuation, DistanceNorm};
use crate::diagnostics::{entropy_series, entropy_violations, weak_residual_with};
use crate::entropy::{certify, CertifyRanges};
use crate::error::Error;
use crate::grid::integrate_raw;
use crate::oracle::{explicit_reference, OracleConfig};
use crate::output::{
    certify_csv, checkpoint_csv, continuation_csv, diagnostics_csv, real, table_csv, unix_time, write_atomic,
    RunManifest,
};
use crate::scheme::{initial_state, march, MarchError, SchemeConfig, Trajectory};

pub const OUTPUT_DIR_ENV: &str = "XDIFF_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Io = 1,
    Config = 2,
    Solver = 3,
    CheckFailed = 4,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "xdiff",
    version,
    about = "Entropy-variable implicit solver for a regularized cross-diffusion system"
)]
pub struct Cli {
    /// Output root (overrides $XDIFF_OUTPUT_DIR).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// March one config; write diagnostics.csv, checkpoint.csv and manifest.txt.
    Run {
        config: PathBuf,
        /// Exit 4 unless entropy is monotone and densities stay positive.
        #[arg(long)]
        check: bool,
    },
    /// Run the σ-refinement, mesh-refinement and ε-continuation studies of a plan.
    Sweep {
        plan: PathBuf,
        /// Exit 4 unless drift ratios lie in [1.5, 2.5], residuals halve per level and d_n decreases.
        #[arg(long)]
        check: bool,
    },
    /// Sample the convexity and Lyapunov conditions on a grid of densities.
    Certify(CertifyArgs),
    /// Compare the implicit march with the explicit fine-step oracle.
    Oracle {
        config: PathBuf,
        /// Exit 4 when the sup-norm discrepancy exceeds --tol.
        #[arg(long)]
        check: bool,
        #[arg(long, default_value_t = 5e-3)]
        tol: f64,
    },
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, default_value_t = 10.0)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 10.0)]
    pub mu_max: f64,
    /// Samples per axis.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Comma-separated ε values.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 0.1, 0.01])]
    pub eps: Vec<f64>,
    /// CSV path (default: <output root>/certify.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit 4 if min ms1 slack < −1e−12 or a lyp2 slack has the wrong sign.
    #[arg(long)]
    pub check: bool,
}

pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned())
}

fn classify(e: &Error) -> Status {
    match e {
        Error::Parse { .. } | Error::InvalidConfig(_) | Error::UnknownTestFunction(_) => Status::Config,
        Error::Io { .. } => Status::Io,
        _ => Status::Solver,
    }
}

fn report(e: &Error) -> Status {
    eprintln!("xdiff: {e}");
    classify(e)
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Status::Config.into()
            } else {
                Status::Success.into()
            };
        }
    };
    execute(&cli).into()
}

pub fn execute(cli: &Cli) -> Status {
    let root = output_root(cli.output_dir.as_deref());
    match &cli.command {
        Command::Run { config, check } => run_command(config, &root, *check),
        Command::Sweep { plan, check } => sweep_command(plan, &root, *check),
        Command::Certify(args) => certify_command(args, &root),
        Command::Oracle { config, check, tol } => oracle_command(config, &root, *check, *tol),
    }
}

fn load_scheme(path: &Path) -> Result<SchemeConfig, Status> {
    match parse_config(path) {
        Ok(ConfigFile::Run(c)) => Ok(c),
        Ok(ConfigFile::Sweep(p)) => Ok(p.base),
        Err(e) => Err(report(&e)),
    }
}

/// Outcome of one march written to its own directory.
struct RunOutcome {
    traj: Option<Trajectory>,
    failed: bool,
    check_ok: bool,
}

fn execute_run(config: &SchemeConfig, dir: &Path) -> Result<RunOutcome, Error> {
    let mut manifest = RunManifest::new(config, unix_time());
    let (traj, failure) = match march(config) {
        Ok(t) => (t, None),
        Err(MarchError::Step { partial, failure }) => (*partial, Some(failure)),
        Err(MarchError::Setup(e)) => return Err(e),
    };
    let records = entropy_series(&traj)?;
    write_atomic(&dir.join("diagnostics.csv"), diagnostics_csv(&records).as_bytes())?;
    write_atomic(&dir.join("checkpoint.csv"), checkpoint_csv(&traj).as_bytes())?;
    manifest.record_trajectory(&traj);
    let failed = failure.is_some();
    if let Some(f) = failure {
        eprintln!("xdiff: {}: {f}", dir.display());
        manifest.failures.push(f);
    }
    manifest.end_unix = unix_time();
    write_atomic(&dir.join("manifest.txt"), manifest.render().as_bytes())?;

    let positive = records.iter().all(|r| r.min_rho > 0.0 && r.min_mu > 0.0);
    let violations = entropy_violations(&records);
    if !violations.is_empty() {
        eprintln!("xdiff: entropy increased beyond tolerance at steps {violations:?}");
    }
    Ok(RunOutcome {
        check_ok: positive && violations.is_empty(),
        traj: (!failed).then_some(traj),
        failed,
    })
}

pub fn run_command(config_path: &Path, root: &Path, check: bool) -> Status {
    let config = match load_scheme(config_path) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let dir = root.join(stem(config_path));
    match execute_run(&config, &dir) {
        Err(e) => report(&e),
        Ok(o) if o.failed => Status::Solver,
        Ok(o) if check && !o.check_ok => Status::CheckFailed,
        Ok(_) => {
            println!("wrote {}", dir.display());
            Status::Success
        }
    }
}

fn in_pool<R: Send>(parallelism: usize, f: impl FnOnce() -> R + Send) -> Result<R, Error> {
    if parallelism == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn total_mass(traj: &Trajectory, k: usize) -> f64 {
    let s = &traj.states[k];
    integrate_raw(&s.rho(), &traj.grid) + integrate_raw(&s.mu(), &traj.grid)
}

struct SweepChecks {
    failures: usize,
    check_ok: bool,
}

type Study = fn(&SweepPlan, &Path, &mut SweepChecks) -> Result<(), Error>;

fn sigma_study(plan: &SweepPlan, dir: &Path, checks: &mut SweepChecks) -> Result<(), Error> {
    if plan.sigmas.is_empty() {
        return Ok(());
    }
    let runs: Vec<Result<RunOutcome, Error>> = in_pool(plan.parallelism, || {
        plan.sigmas
            .par_iter()
            .enumerate()
            .map(|(i, &s)| {
                let cfg = plan.base.with_sigma(s)?;
                execute_run(&cfg, &dir.join("runs").join(format!("sigma_{i}")))
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    let mut prev_drift: Option<f64> = None;
    for (i, run) in runs.into_iter().enumerate() {
        let sigma = plan.sigmas[i];
        let run = run?;
        let Some(traj) = run.traj else {
            checks.failures += 1;
            rows.push(vec![
                real(sigma),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "failed".into(),
            ]);
            prev_drift = None;
            continue;
        };
        let last = traj.states.len() - 1;
        let drift = (total_mass(&traj, last) - total_mass(&traj, 0)).abs();
        let ratio = prev_drift.map(|p| p / drift);
        if let Some(r) = ratio {
            checks.check_ok &= (1.5..=2.5).contains(&r);
        }
        rows.push(vec![
            real(sigma),
            traj.config.steps.to_string(),
            real(drift),
            ratio.map(real).unwrap_or_default(),
            real(crate::scheme::entropy(traj.final_state(), &traj.grid)),
            "ok".into(),
        ]);
        prev_drift = Some(drift);
    }
    let header = ["sigma", "steps", "mass_drift", "drift_ratio", "final_entropy", "status"];
    write_atomic(&dir.join("sigma_refinement.csv"), table_csv(&header, &rows).as_bytes())
}

fn mesh_study(plan: &SweepPlan, dir: &Path, checks: &mut SweepChecks) -> Result<(), Error> {
    if plan.cells.is_empty() {
        return Ok(());
    }
    let runs: Vec<Result<(f64, RunOutcome), Error>> = in_pool(plan.parallelism, || {
        plan.cells
            .par_iter()
            .map(|&m| {
                let sigma = plan.sigma_per_h.map_or(plan.base.sigma, |c| c / m as f64);
                let cfg = SchemeConfig {
                    grid_cells: m,
                    ..plan.base.clone()
                }
                .with_sigma(sigma)?;
                Ok((sigma, execute_run(&cfg, &dir.join("runs").join(format!("cells_{m}")))?))
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    let mut prev: Option<f64> = None;
    for (i, run) in runs.into_iter().enumerate() {
        let (sigma, run) = run?;
        let cells = plan.cells[i];
        let Some(traj) = run.traj else {
            checks.failures += 1;
            rows.push(vec![
                cells.to_string(),
                real(sigma),
                String::new(),
                String::new(),
                String::new(),
                "failed".into(),
            ]);
            prev = None;
            continue;
        };
        let res = weak_residual_with(&traj, traj.config.eps, plan.test_function)?;
        let ratio = prev.map(|p| p / res.max_abs());
        if let Some(r) = ratio {
            checks.check_ok &= r >= 2.0;
        }
        rows.push(vec![
            cells.to_string(),
            real(sigma),
            real(res.rho),
            real(res.mu),
            ratio.map(real).unwrap_or_default(),
            "ok".into(),
        ]);
        prev = Some(res.max_abs());
    }
    let header = ["cells", "sigma", "residual_rho", "residual_mu", "decay_ratio", "status"];
    let name = format!("mesh_refinement_{}.csv", plan.test_function);
    write_atomic(&dir.join(name), table_csv(&header, &rows).as_bytes())
}

fn continuation_study(plan: &SweepPlan, dir: &Path, checks: &mut SweepChecks) -> Result<(), Error> {
    let Some(cont) = &plan.continuation else {
        return Ok(());
    };
    let report = run_continuation(cont)?;
    for run in &report.runs {
        if let Err(e) = &run.outcome {
            checks.failures += 1;
            eprintln!("xdiff: continuation entry n = {} (eps = {}): {e}", run.n, run.eps);
        }
    }
    let d: Vec<Option<f64>> = report.rows.iter().skip(1).map(|r| r.d_n).collect();
    checks.check_ok &= d.iter().all(Option::is_some) && d.windows(2).all(|p| p[1].unwrap() < p[0].unwrap());
    let with_sup = cont.norms.contains(&DistanceNorm::Sup);
    write_atomic(
        &dir.join("continuation.csv"),
        continuation_csv(&report.rows, with_sup).as_bytes(),
    )
}

pub fn sweep_command(plan_path: &Path, root: &Path, check: bool) -> Status {
    let plan = match parse_config(plan_path) {
        Ok(ConfigFile::Sweep(p)) => p,
        Ok(ConfigFile::Run(c)) => SweepPlan::single(c),
        Err(e) => return report(&e),
    };
    let dir = root.join(stem(plan_path));
    let mut checks = SweepChecks {
        failures: 0,
        check_ok: true,
    };
    let studies: [Study; 3] = [sigma_study, mesh_study, continuation_study];
    for study in studies {
        if let Err(e) = study(&plan, &dir, &mut checks) {
            return report(&e);
        }
    }
    println!("wrote {}", dir.display());
    if checks.failures > 0 {
        eprintln!("xdiff: {} run(s) failed", checks.failures);
        Status::Solver
    } else if check && !checks.check_ok {
        eprintln!("xdiff: sweep checks failed");
        Status::CheckFailed
    } else {
        Status::Success
    }
}

pub fn certify_command(args: &CertifyArgs, root: &Path) -> Status {
    let ranges = CertifyRanges {
        rho_max: args.rho_max,
        mu_max: args.mu_max,
        samples_per_axis: args.samples,
        eps_values: args.eps.clone(),
    };
    if !(ranges.rho_max > 0.0 && ranges.mu_max > 0.0) {
        eprintln!("xdiff: --rho-max and --mu-max must be positive");
        return Status::Config;
    }
    let (rows, summary) = match certify(&ranges) {
        Ok(r) => r,
        Err(e) => return report(&e),
    };
    let path = args.out.clone().unwrap_or_else(|| root.join("certify.csv"));
    if let Err(e) = write_atomic(&path, certify_csv(&rows, &summary).as_bytes()) {
        return report(&e);
    }
    println!("{summary}");
    let ok = summary.samples == 0 || (summary.min_ms1 >= -1e-12 && summary.lyp2_sign_mismatches == 0);
    if args.check && !ok {
        Status::CheckFailed
    } else {
        Status::Success
    }
}

pub fn oracle_command(config_path: &Path, root: &Path, check: bool, tol: f64) -> Status {
    let config = match load_scheme(config_path) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let result = (|| -> Result<f64, Error> {
        let traj = march(&config)?;
        let ocfg = OracleConfig::at_cfl(config.grid_cells, config.eps, config.horizon)?;
        let (orho, omu) = explicit_reference(&ocfg, &initial_state(&config)?)?;
        let (rho, mu) = traj.final_state().densities();
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        for (i, x) in traj.grid.nodes().enumerate() {
            worst = worst.max((rho[i] - orho[i]).abs()).max((mu[i] - omu[i]).abs());
            rows.push(vec![real(x), real(rho[i]), real(mu[i]), real(orho[i]), real(omu[i])]);
        }
        let header = ["x", "rho_march", "mu_march", "rho_oracle", "mu_oracle"];
        let dir = root.join(stem(config_path));
        write_atomic(&dir.join("oracle.csv"), table_csv(&header, &rows).as_bytes())?;
        Ok(worst)
    })();
    match result {
        Err(e) => report(&e),
        Ok(d) => {
            println!("sup-norm discrepancy {d:e} (tolerance {tol:e})");
            if check && !(d <= tol) {
                Status::CheckFailed
            } else {
                Status::Success
            }
        }
    }
}
