//! CSV, checkpoint and manifest writers. Reals are printed with 17
//! significant digits; every file is written to a sibling temporary and
//! renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::format_scheme_section;
use crate::continuation::ContinuationRow;
use crate::diagnostics::DiagnosticsRecord;
use crate::entropy::{CertifySummary, ConvexitySample};
use crate::error::{Error, Result};
use crate::scheme::{HalvingEvent, SchemeConfig, StateField, StepFailure, Trajectory};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Round-trip decimal with 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = DiagnosticsRecord::COLUMNS.join(",");
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            real(r.time),
            real(r.entropy),
            real(r.mass_rho),
            real(r.mass_mu),
            real(r.diss_u),
            real(r.diss_v),
            real(r.diss_rho),
            real(r.diss_mu),
            real(r.degeneracy_measure),
            real(r.min_rho),
            real(r.max_rho),
            real(r.min_mu),
            real(r.max_mu),
            r.newton_iters
        );
    }
    s
}

/// Header `step,time,w1_0,w2_0,...,w1_M,w2_M`, one row per stored state.
pub fn checkpoint_csv(traj: &Trajectory) -> String {
    let mut s = String::from("step,time");
    for i in 0..traj.grid.node_count() {
        let _ = write!(s, ",w1_{i},w2_{i}");
    }
    s.push('\n');
    for (k, state) in traj.states.iter().enumerate() {
        let _ = write!(s, "{k},{}", real(traj.times[k]));
        for (a, b) in state.w1.iter().zip(state.w2.iter()) {
            let _ = write!(s, ",{},{}", real(*a), real(*b));
        }
        s.push('\n');
    }
    s
}

/// Parse a checkpoint back into `(step, time, state)` records.
pub fn parse_checkpoint(text: &str) -> Result<Vec<(usize, f64, StateField)>> {
    let bad = |line: usize, m: String| Error::Parse {
        path: "checkpoint".into(),
        line,
        message: m,
    };
    let mut out = Vec::new();
    for (idx, row) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() < 4 || !fields.len().is_multiple_of(2) {
            return Err(bad(
                idx + 1,
                format!("expected step, time and value pairs, got {} fields", fields.len()),
            ));
        }
        let step = fields[0]
            .parse::<usize>()
            .map_err(|_| bad(idx + 1, format!("bad step {:?}", fields[0])))?;
        let nums = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(idx + 1, format!("bad number {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let w1: Vec<f64> = nums[1..].iter().step_by(2).copied().collect();
        let w2: Vec<f64> = nums[2..].iter().step_by(2).copied().collect();
        out.push((step, nums[0], StateField::new(w1.into(), w2.into())?));
    }
    Ok(out)
}

pub fn certify_csv(rows: &[ConvexitySample], summary: &CertifySummary) -> String {
    let mut s = String::from("rho,mu,eps,slack_ms1,slack_lyp2,slack_lyp3\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            real(r.rho),
            real(r.mu),
            real(r.eps),
            real(r.slack_ms1),
            real(r.slack_lyp2),
            real(r.slack_lyp3)
        );
    }
    let _ = writeln!(s, "# summary: {summary}");
    s
}

pub fn continuation_csv(rows: &[ContinuationRow], with_sup: bool) -> String {
    let mut s = String::from("n,eps,final_entropy,degeneracy_measure_max,d_n");
    if with_sup {
        s.push_str(",d_sup");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{}",
            r.n,
            real(r.eps),
            opt_real(r.final_entropy),
            opt_real(r.degeneracy_measure_max),
            opt_real(r.d_n)
        );
        if with_sup {
            let _ = write!(s, ",{}", opt_real(r.d_sup));
        }
        s.push('\n');
    }
    s
}

/// Generic CSV with a header and optional cells.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn unix_time() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Run manifest: config echo plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: SchemeConfig,
    pub version: String,
    pub start_unix: f64,
    pub end_unix: f64,
    pub newton_iters: Vec<usize>,
    pub halvings: Vec<HalvingEvent>,
    pub failures: Vec<StepFailure>,
}

impl RunManifest {
    pub fn new(config: &SchemeConfig, start_unix: f64) -> Self {
        Self {
            config: config.clone(),
            version: VERSION.to_string(),
            start_unix,
            end_unix: start_unix,
            newton_iters: Vec::new(),
            halvings: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn record_trajectory(&mut self, traj: &Trajectory) {
        self.newton_iters = traj.newton_iters.clone();
        self.halvings = traj.halvings.clone();
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# xdiff run manifest; the [scheme] section reproduces the run\n");
        s.push_str(&format_scheme_section(&self.config));
        s.push_str("\n[manifest]\n");
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "start_unix = {:.3}", self.start_unix);
        let _ = writeln!(s, "end_unix = {:.3}", self.end_unix);
        let _ = writeln!(s, "status = {}", if self.failures.is_empty() { "ok" } else { "failed" });
        let _ = writeln!(s, "steps_completed = {}", self.newton_iters.len());
        let total: usize = self.newton_iters.iter().sum();
        let _ = writeln!(s, "newton_iters_total = {total}");
        let _ = writeln!(
            s,
            "newton_iters_max = {}",
            self.newton_iters.iter().max().copied().unwrap_or(0)
        );
        if !self.newton_iters.is_empty() {
            let _ = writeln!(
                s,
                "newton_iters_mean = {:?}",
                total as f64 / self.newton_iters.len() as f64
            );
        }
        for h in &self.halvings {
            let _ = writeln!(
                s,
                "sigma_halving = step {} at t = {:?}, new sigma = {:?}",
                h.step, h.time, h.new_sigma
            );
        }
        for f in &self.failures {
            let trace: Vec<String> = f.trace.iter().map(|r| format!("{r:e}")).collect();
            let _ = writeln!(s, "failure_step = {}", f.step);
            let _ = writeln!(s, "failure_reason = {}", f.reason);
            let _ = writeln!(s, "failure_residual_trace = {}", trace.join(" "));
        }
        s
    }
}
