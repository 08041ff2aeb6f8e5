//! ε → 0 continuation on a fixed mesh: one march per ε, Cauchy distances
//! between consecutive runs, and the uniform-integrability tail table.

use rayon::prelude::*;

use crate::diagnostics::{degeneracy_mask, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{integrate_raw, Grid};
use crate::scheme::{entropy, march, MarchError, SchemeConfig, StateField, Trajectory};

/// Smallest ε a plan may contain.
pub const MIN_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceNorm {
    /// Space-time `L¹` distance of the piecewise-constant reconstructions.
    L1,
    /// Maximum nodal difference over all shared step times.
    Sup,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationPlan {
    pub eps_sequence: Vec<f64>,
    /// Grid, σ, horizon, solver settings and initial data; its `eps` is replaced per run.
    pub shared: SchemeConfig,
    pub norms: Vec<DistanceNorm>,
    /// Maximum number of concurrent marches (0 = rayon default).
    pub parallelism: usize,
}

impl ContinuationPlan {
    pub fn new(eps_sequence: Vec<f64>, shared: SchemeConfig) -> Result<Self> {
        let plan = Self {
            eps_sequence,
            shared,
            norms: vec![DistanceNorm::L1],
            parallelism: 0,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// `ε_n = 2^{−n}` for `n = 1..=count`.
    pub fn dyadic(count: u32, shared: SchemeConfig) -> Result<Self> {
        Self::new((1..=count as i32).map(|n| 0.5f64.powi(n)).collect(), shared)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_sequence.is_empty() {
            return Err(Error::InvalidConfig("eps_sequence must not be empty".into()));
        }
        for &e in &self.eps_sequence {
            if !(MIN_EPS..1.0).contains(&e) {
                return Err(Error::InvalidConfig(format!(
                    "eps_sequence entries must lie in [{MIN_EPS}, 1), got {e}"
                )));
            }
        }
        if self.eps_sequence.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::InvalidConfig("eps_sequence must be strictly decreasing".into()));
        }
        if !self.norms.contains(&DistanceNorm::L1) {
            return Err(Error::InvalidConfig("norms must include l1".into()));
        }
        self.shared.validate()
    }

    pub fn config_for(&self, eps: f64) -> SchemeConfig {
        SchemeConfig {
            eps,
            ..self.shared.clone()
        }
    }
}

#[derive(Debug)]
pub struct ContinuationRun {
    /// 1-based position in the ε sequence.
    pub n: usize,
    pub eps: f64,
    pub outcome: std::result::Result<Trajectory, MarchError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationRow {
    pub n: usize,
    pub eps: f64,
    pub final_entropy: Option<f64>,
    pub degeneracy_measure_max: Option<f64>,
    /// Distance to the previous run; `None` for the first entry or when either run failed.
    pub d_n: Option<f64>,
    pub d_sup: Option<f64>,
}

#[derive(Debug)]
pub struct ContinuationReport {
    pub runs: Vec<ContinuationRun>,
    pub rows: Vec<ContinuationRow>,
}

impl ContinuationReport {
    pub fn failures(&self) -> impl Iterator<Item = &ContinuationRun> {
        self.runs.iter().filter(|r| r.outcome.is_err())
    }
}

fn max_degeneracy(traj: &Trajectory) -> Result<f64> {
    traj.states
        .iter()
        .map(|s| degeneracy_mask(s, &traj.grid).map(|(_, m)| m))
        .try_fold(0.0f64, |acc, m| m.map(|m| acc.max(m)))
}

/// Merged breakpoints of both trajectories.
fn merged_times(a: &Trajectory, b: &Trajectory) -> Vec<f64> {
    let mut t: Vec<f64> = a.times.iter().chain(b.times.iter()).copied().collect();
    t.sort_by(f64::total_cmp);
    let tol = 1e-12 * a.horizon().max(1.0);
    t.dedup_by(|x, y| (*x - *y).abs() <= tol);
    t
}

fn check_compatible(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::InvalidConfig("trajectories live on different grids".into()));
    }
    if (a.horizon() - b.horizon()).abs() > 1e-12 * a.horizon() {
        return Err(Error::InvalidConfig(format!(
            "trajectories have different horizons {} and {}",
            a.horizon(),
            b.horizon()
        )));
    }
    Ok(())
}

/// `∫₀ᵀ ∫ |ρ̄_a − ρ̄_b| + |μ̄_a − μ̄_b|` of the piecewise-constant reconstructions.
pub fn l1_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_compatible(a, b)?;
    let times = merged_times(a, b);
    let mut total = 0.0;
    for p in times.windows(2) {
        let (ia, ib) = (a.interpolants(p[1])?, b.interpolants(p[1])?);
        let diff: Vec<f64> = (0..a.grid.node_count())
            .map(|i| (ia.bar.0[i] - ib.bar.0[i]).abs() + (ia.bar.1[i] - ib.bar.1[i]).abs())
            .collect();
        total += (p[1] - p[0]) * integrate_raw(&diff, &a.grid);
    }
    Ok(total)
}

/// `max` over shared breakpoints and nodes of `max(|ρ_a − ρ_b|, |μ_a − μ_b|)`.
pub fn sup_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_compatible(a, b)?;
    let mut worst = 0.0f64;
    for &t in &merged_times(a, b) {
        let (ia, ib) = (a.interpolants(t)?, b.interpolants(t)?);
        for i in 0..a.grid.node_count() {
            worst = worst
                .max((ia.bar.0[i] - ib.bar.0[i]).abs())
                .max((ia.bar.1[i] - ib.bar.1[i]).abs());
        }
    }
    Ok(worst)
}

/// March every ε of the plan (concurrently) and tabulate the distances.
pub fn run_continuation(plan: &ContinuationPlan) -> Result<ContinuationReport> {
    plan.validate()?;
    let jobs: Vec<(usize, f64)> = plan
        .eps_sequence
        .iter()
        .copied()
        .enumerate()
        .map(|(i, e)| (i + 1, e))
        .collect();
    let work = || -> Vec<ContinuationRun> {
        jobs.par_iter()
            .map(|&(n, eps)| ContinuationRun {
                n,
                eps,
                outcome: march(&plan.config_for(eps)),
            })
            .collect()
    };
    let runs = if plan.parallelism == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(plan.parallelism)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?
            .install(work)
    };

    let mut rows = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let traj = run.outcome.as_ref().ok();
        let prev = if i == 0 {
            None
        } else {
            runs[i - 1].outcome.as_ref().ok()
        };
        let (d_n, d_sup) = match (traj, prev) {
            (Some(t), Some(p)) => (
                Some(l1_distance(t, p)?),
                if plan.norms.contains(&DistanceNorm::Sup) {
                    Some(sup_distance(t, p)?)
                } else {
                    None
                },
            ),
            _ => (None, None),
        };
        rows.push(ContinuationRow {
            n: run.n,
            eps: run.eps,
            final_entropy: traj.map(|t| entropy(t.final_state(), &t.grid)),
            degeneracy_measure_max: traj.map(max_degeneracy).transpose()?,
            d_n,
            d_sup,
        });
    }
    Ok(ContinuationReport { runs, rows })
}

/// One row of the uniform-integrability table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub step: usize,
    pub threshold: f64,
    /// 0 for `ρ`, 1 for `μ`.
    pub species: usize,
    /// `∫_{ρ>s} ρ` (trapezoid weights over nodes with `ρ_i > s`).
    pub tail: f64,
    /// `(∫ρ ln ρ + |Ω|/e)/ln s`, valid for every nonnegative profile.
    pub bound: f64,
    /// `(1/ln s)∫ρ ln ρ`, which drops the negative part of `ρ ln ρ`.
    pub entropy_only_bound: f64,
}

impl TailRow {
    pub fn holds(&self) -> bool {
        self.tail <= self.bound + 1e-12
    }
}

pub const DEFAULT_THRESHOLDS: [f64; 4] = [2.0, 4.0, 8.0, 16.0];

fn tail_rows(state: &StateField, step: usize, grid: &Grid, thresholds: &[f64]) -> Vec<TailRow> {
    let (rho, mu) = state.densities();
    let mut out = Vec::with_capacity(2 * thresholds.len());
    for (species, f) in [rho, mu].iter().enumerate() {
        let psi: Vec<f64> = f.iter().map(|&x| x * x.ln()).collect();
        let ent = integrate_raw(&psi, grid);
        for &s in thresholds {
            let tail: f64 = (0..f.len()).filter(|&i| f[i] > s).map(|i| grid.weight(i) * f[i]).sum();
            out.push(TailRow {
                step,
                threshold: s,
                species,
                tail,
                bound: (ent + std::f64::consts::E.recip()) / s.ln(),
                entropy_only_bound: ent / s.ln(),
            });
        }
    }
    out
}

/// Tail integrals against the entropy bound for every state and threshold (each `> 1`).
pub fn uniform_integrability_report(traj: &Trajectory, thresholds: &[f64]) -> Result<Vec<TailRow>> {
    if let Some(&s) = thresholds.iter().find(|&&s| !(s > 1.0 && s.is_finite())) {
        return Err(Error::domain(
            "uniform_integrability_report",
            "thresholds must exceed 1",
            s,
        ));
    }
    Ok(traj
        .states
        .iter()
        .enumerate()
        .flat_map(|(k, s)| tail_rows(s, k, &traj.grid, thresholds))
        .collect())
}

/// Final-state diagnostics of each successful run.
pub fn final_records(report: &ContinuationReport) -> Result<Vec<(usize, DiagnosticsRecord)>> {
    report
        .runs
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|t| (r.n, t)))
        .map(|(n, t)| {
            let mut rec = DiagnosticsRecord::of_state(t.final_state(), t.config.eps, &t.grid)?;
            rec.step = t.states.len() - 1;
            rec.time = t.horizon();
            rec.newton_iters = t.newton_iters.last().copied().unwrap_or(0);
            Ok((n, rec))
        })
        .collect()
}
