//! Derived quantities along a trajectory: entropy, masses, the four
//! dissipation integrals, the degenerate set `{√(ρμ) ≥ 1}`, the split
//! fluxes of the `u = √ρ + √μ` form, and weak-formulation residuals.

use std::fmt;
use std::str::FromStr;

use crate::entropy::x_ln_x;
use crate::error::{Error, Result};
use crate::grid::{gradient_raw, integrate_raw, EdgeField, Grid, NodalField};
use crate::nonlinearity::{s_eps_kernel, theta};
use crate::scheme::{flux_dissipation, regularization_norm, StateField, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub entropy: f64,
    pub mass_rho: f64,
    pub mass_mu: f64,
    pub diss_u: f64,
    pub diss_v: f64,
    pub diss_rho: f64,
    pub diss_mu: f64,
    pub degeneracy_measure: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub min_mu: f64,
    pub max_mu: f64,
    pub newton_iters: usize,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 15] = [
        "step",
        "time",
        "entropy",
        "mass_rho",
        "mass_mu",
        "diss_u",
        "diss_v",
        "diss_rho",
        "diss_mu",
        "degeneracy_measure",
        "min_rho",
        "max_rho",
        "min_mu",
        "max_mu",
        "newton_iters",
    ];

    /// Record for one state; `step`, `time` and `newton_iters` are filled by the caller.
    pub fn of_state(state: &StateField, eps: f64, grid: &Grid) -> Result<Self> {
        check_len(state, grid)?;
        let (rho, mu) = state.densities();
        let psi: Vec<f64> = rho
            .iter()
            .zip(mu.iter())
            .map(|(&r, &m)| x_ln_x(r) + x_ln_x(m))
            .collect();
        let (diss_u, diss_v, diss_rho, diss_mu) = dissipation_terms(state, eps, grid)?;
        let (_, degeneracy_measure) = degeneracy_mask(state, grid)?;
        Ok(Self {
            step: 0,
            time: 0.0,
            entropy: integrate_raw(&psi, grid),
            mass_rho: integrate_raw(&rho, grid),
            mass_mu: integrate_raw(&mu, grid),
            diss_u,
            diss_v,
            diss_rho,
            diss_mu,
            degeneracy_measure,
            min_rho: rho.min(),
            max_rho: rho.max(),
            min_mu: mu.min(),
            max_mu: mu.max(),
            newton_iters: 0,
        })
    }
}

fn check_len(state: &StateField, grid: &Grid) -> Result<()> {
    if state.len() != grid.node_count() {
        return Err(Error::SizeMismatch {
            expected: grid.node_count(),
            found: state.len(),
        });
    }
    Ok(())
}

/// `u = √ρ + √μ`, `v = √ρ − √μ`.
pub fn uv_fields(state: &StateField) -> (NodalField, NodalField) {
    let (rho, mu) = state.densities();
    let u = rho
        .iter()
        .zip(mu.iter())
        .map(|(r, m)| r.sqrt() + m.sqrt())
        .collect::<Vec<_>>();
    let v = rho
        .iter()
        .zip(mu.iter())
        .map(|(r, m)| r.sqrt() - m.sqrt())
        .collect::<Vec<_>>();
    (u.into(), v.into())
}

fn edge_mean(f: &[f64]) -> Vec<f64> {
    f.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

fn weighted_square_sum(coef: &[f64], grad: &[f64], h: f64) -> f64 {
    coef.iter().zip(grad).map(|(c, g)| h * c * g * g).sum()
}

/// `(∫|∇u|², ∫(1+ε−θ₁)²|∇v|², ∫[4(1+ε)² − S_ε²θ₁²]|∇√ρ|², same for √μ)`.
pub fn dissipation_terms(state: &StateField, eps: f64, grid: &Grid) -> Result<(f64, f64, f64, f64)> {
    check_len(state, grid)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain("dissipation_terms", "eps must be positive", eps));
    }
    let h = grid.spacing();
    let ceiling = 1.0 / eps;
    let (rho, mu) = state.densities();
    let (u, v) = uv_fields(state);
    let sr: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let sm: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let t1: Vec<f64> = rho
        .iter()
        .zip(mu.iter())
        .map(|(r, m)| theta((r * m).sqrt(), 1.0))
        .collect();

    let v_coef: Vec<f64> = t1.iter().map(|t| (1.0 + eps - t).powi(2)).collect();
    let bracket: Vec<f64> = rho
        .iter()
        .zip(mu.iter())
        .zip(&t1)
        .map(|((&r, &m), &t)| 4.0 * (1.0 + eps).powi(2) - (s_eps_kernel(r, m, ceiling) * t).powi(2))
        .collect();
    let bracket_e = edge_mean(&bracket);

    let diss_u = weighted_square_sum(&vec![1.0; grid.cells()], &gradient_raw(&u, h), h);
    let diss_v = weighted_square_sum(&edge_mean(&v_coef), &gradient_raw(&v, h), h);
    let diss_rho = weighted_square_sum(&bracket_e, &gradient_raw(&sr, h), h);
    let diss_mu = weighted_square_sum(&bracket_e, &gradient_raw(&sm, h), h);
    Ok((diss_u, diss_v, diss_rho, diss_mu))
}

/// Nodes with `√(ρμ) ≥ 1` and the trapezoid measure of that set.
pub fn degeneracy_mask(state: &StateField, grid: &Grid) -> Result<(Vec<bool>, f64)> {
    check_len(state, grid)?;
    let (rho, mu) = state.densities();
    let mask: Vec<bool> = rho.iter().zip(mu.iter()).map(|(r, m)| (r * m).sqrt() >= 1.0).collect();
    let measure = mask
        .iter()
        .enumerate()
        .filter(|(_, &d)| d)
        .map(|(i, _)| grid.weight(i))
        .sum();
    Ok((mask, measure))
}

/// Split fluxes of the `u`-substituted form of the ε-system:
/// `∂ₜρ = 2 div(g₁ + f₁)` with `g₁ = ((1+ε)√ρ − θ_{1/ε}(√ρ)θ₁)∇√ρ` and
/// `f₁ = θ_{1/ε}(√ρ)θ₁ ∇u`; likewise for `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxFields {
    pub f1: EdgeField,
    pub f2: EdgeField,
    pub g1: EdgeField,
    pub g2: EdgeField,
    /// An edge is degenerate when either endpoint has `√(ρμ) ≥ 1`.
    pub degenerate: Vec<bool>,
}

impl FluxFields {
    /// Total edge flux of the first species, `2(g₁ + f₁)`.
    pub fn total_rho(&self) -> EdgeField {
        self.g1
            .iter()
            .zip(self.f1.iter())
            .map(|(g, f)| 2.0 * (g + f))
            .collect::<Vec<_>>()
            .into()
    }

    pub fn total_mu(&self) -> EdgeField {
        self.g2
            .iter()
            .zip(self.f2.iter())
            .map(|(g, f)| 2.0 * (g + f))
            .collect::<Vec<_>>()
            .into()
    }
}

/// ε-level split fluxes with edge-averaged coefficients.
pub fn eps_level_fluxes(state: &StateField, eps: f64, grid: &Grid) -> Result<FluxFields> {
    check_len(state, grid)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain("eps_level_fluxes", "eps must be positive", eps));
    }
    let h = grid.spacing();
    let ceiling = 1.0 / eps;
    let (rho, mu) = state.densities();
    let (u, _) = uv_fields(state);
    let sr: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let sm: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let t1: Vec<f64> = sr.iter().zip(&sm).map(|(a, b)| theta(a * b, 1.0)).collect();
    let cross_r: Vec<f64> = sr.iter().zip(&t1).map(|(s, t)| theta(*s, ceiling) * t).collect();
    let cross_m: Vec<f64> = sm.iter().zip(&t1).map(|(s, t)| theta(*s, ceiling) * t).collect();
    let lead_r: Vec<f64> = sr.iter().zip(&cross_r).map(|(s, c)| (1.0 + eps) * s - c).collect();
    let lead_m: Vec<f64> = sm.iter().zip(&cross_m).map(|(s, c)| (1.0 + eps) * s - c).collect();

    let (gu, gsr, gsm) = (gradient_raw(&u, h), gradient_raw(&sr, h), gradient_raw(&sm, h));
    let prod = |c: &[f64], g: &[f64]| -> EdgeField {
        edge_mean(c)
            .iter()
            .zip(g)
            .map(|(a, b)| a * b)
            .collect::<Vec<_>>()
            .into()
    };
    let (mask, _) = degeneracy_mask(state, grid)?;
    Ok(FluxFields {
        f1: prod(&cross_r, &gu),
        f2: prod(&cross_m, &gu),
        g1: prod(&lead_r, &gsr),
        g2: prod(&lead_m, &gsm),
        degenerate: mask.windows(2).map(|p| p[0] || p[1]).collect(),
    })
}

/// Limit form of the split fluxes: as [`eps_level_fluxes`], with `g₁, g₂`
/// set to zero on degenerate edges.
pub fn limit_fluxes(state: &StateField, eps: f64, grid: &Grid) -> Result<FluxFields> {
    let mut ff = eps_level_fluxes(state, eps, grid)?;
    for (e, &d) in ff.degenerate.iter().enumerate() {
        if d {
            ff.g1[e] = 0.0;
            ff.g2[e] = 0.0;
        }
    }
    Ok(ff)
}

/// Density-form total fluxes `2(1+ε)√ρ∇√ρ + 2θ_{1/ε}(√ρ)θ₁∇√μ` and the
/// mirror for `μ`, edge-averaged; the reference for the regrouping identity.
pub fn total_fluxes(state: &StateField, eps: f64, grid: &Grid) -> Result<(EdgeField, EdgeField)> {
    check_len(state, grid)?;
    let h = grid.spacing();
    let ceiling = 1.0 / eps;
    let (rho, mu) = state.densities();
    let sr: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let sm: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let t1: Vec<f64> = sr.iter().zip(&sm).map(|(a, b)| theta(a * b, 1.0)).collect();
    let (gsr, gsm) = (gradient_raw(&sr, h), gradient_raw(&sm, h));
    let diag_r = edge_mean(&sr.iter().map(|s| 2.0 * (1.0 + eps) * s).collect::<Vec<_>>());
    let diag_m = edge_mean(&sm.iter().map(|s| 2.0 * (1.0 + eps) * s).collect::<Vec<_>>());
    let off_r = edge_mean(
        &sr.iter()
            .zip(&t1)
            .map(|(s, t)| 2.0 * theta(*s, ceiling) * t)
            .collect::<Vec<_>>(),
    );
    let off_m = edge_mean(
        &sm.iter()
            .zip(&t1)
            .map(|(s, t)| 2.0 * theta(*s, ceiling) * t)
            .collect::<Vec<_>>(),
    );
    let fr: Vec<f64> = (0..grid.cells())
        .map(|e| diag_r[e] * gsr[e] + off_r[e] * gsm[e])
        .collect();
    let fm: Vec<f64> = (0..grid.cells())
        .map(|e| diag_m[e] * gsm[e] + off_m[e] * gsr[e])
        .collect();
    Ok((fr.into(), fm.into()))
}

/// Test function `φ(x, t) = cos(kπx)(1 − t/T)^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestFunction {
    pub k: u32,
    pub p: u32,
}

impl TestFunction {
    pub const BANK: [TestFunction; 6] = [
        TestFunction { k: 0, p: 1 },
        TestFunction { k: 0, p: 2 },
        TestFunction { k: 1, p: 1 },
        TestFunction { k: 1, p: 2 },
        TestFunction { k: 2, p: 1 },
        TestFunction { k: 2, p: 2 },
    ];

    fn space(&self, x: f64) -> f64 {
        (self.k as f64 * std::f64::consts::PI * x).cos()
    }

    fn time(&self, t: f64, horizon: f64) -> f64 {
        (1.0 - t / horizon).powi(self.p as i32)
    }

    fn time_derivative(&self, t: f64, horizon: f64) -> f64 {
        -(self.p as f64) / horizon * (1.0 - t / horizon).powi(self.p as i32 - 1)
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}p{}", self.k, self.p)
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::BANK
            .iter()
            .find(|tf| tf.to_string() == s.trim())
            .copied()
            .ok_or_else(|| Error::UnknownTestFunction(s.to_string()))
    }
}

/// Weak-formulation residuals of both species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakResidual {
    pub rho: f64,
    pub mu: f64,
}

impl WeakResidual {
    pub fn max_abs(&self) -> f64 {
        self.rho.abs().max(self.mu.abs())
    }
}

/// `∫∫ρ̃ ∂ₜφ − ∫∫ 2(g₁ + f₁)·∇φ + ∫ρ(0)φ(0)` and its `μ` counterpart.
///
/// The `∂ₜφ` term is integrated exactly in time against the piecewise-linear
/// reconstruction (two-point Gauss per step); the flux term uses the
/// piecewise-constant state with `∇φ` at the step midpoint.
pub fn weak_residual(traj: &Trajectory, eps: f64, test_id: &str) -> Result<WeakResidual> {
    let tf: TestFunction = test_id.parse()?;
    weak_residual_with(traj, eps, tf)
}

pub fn weak_residual_with(traj: &Trajectory, eps: f64, tf: TestFunction) -> Result<WeakResidual> {
    let grid = &traj.grid;
    let horizon = traj.horizon();
    let h = grid.spacing();
    let phi_x: Vec<f64> = grid.nodes().map(|x| tf.space(x)).collect();
    let grad_phi_x = gradient_raw(&phi_x, h);
    let gauss = 0.5 / 3f64.sqrt();

    let (r0, m0) = traj.states[0].densities();
    let weighted = |f: &[f64]| -> f64 {
        let prod: Vec<f64> = f.iter().zip(&phi_x).map(|(a, b)| a * b).collect();
        integrate_raw(&prod, grid)
    };
    let mut res_r = weighted(&r0) * tf.time(0.0, horizon);
    let mut res_m = weighted(&m0) * tf.time(0.0, horizon);

    let mut prev = (weighted(&r0), weighted(&m0));
    for k in 1..traj.states.len() {
        let (t0, t1) = (traj.times[k - 1], traj.times[k]);
        let dt = t1 - t0;
        let state = &traj.states[k];
        let (rk, mk) = state.densities();
        let cur = (weighted(&rk), weighted(&mk));
        // ∫ρ̃φ_x is linear in t on the interval; ∂ₜφ has degree ≤ 1
        for &s in &[0.5 - gauss, 0.5 + gauss] {
            let w = 0.5 * dt * tf.time_derivative(t0 + s * dt, horizon);
            res_r += w * ((1.0 - s) * prev.0 + s * cur.0);
            res_m += w * ((1.0 - s) * prev.1 + s * cur.1);
        }
        if tf.k != 0 {
            let ff = eps_level_fluxes(state, eps, grid)?;
            let (fr, fm) = (ff.total_rho(), ff.total_mu());
            let phi_t = tf.time(0.5 * (t0 + t1), horizon);
            let pair = |f: &[f64]| -> f64 { f.iter().zip(&grad_phi_x).map(|(a, b)| h * a * b).sum() };
            res_r -= dt * phi_t * pair(&fr);
            res_m -= dt * phi_t * pair(&fm);
        }
        prev = cur;
    }
    Ok(WeakResidual { rho: res_r, mu: res_m })
}

/// One record per stored state.
pub fn entropy_series(traj: &Trajectory) -> Result<Vec<DiagnosticsRecord>> {
    let eps = traj.config.eps;
    traj.states
        .iter()
        .enumerate()
        .map(|(k, state)| {
            let mut rec = DiagnosticsRecord::of_state(state, eps, &traj.grid)?;
            rec.step = k;
            rec.time = traj.times[k];
            rec.newton_iters = if k == 0 { 0 } else { traj.newton_iters[k - 1] };
            Ok(rec)
        })
        .collect()
}

/// Per-step entropy tolerance `1e−8·(1 + |E_{k−1}|)`.
pub fn entropy_tolerance(previous: f64) -> f64 {
    1e-8 * (1.0 + previous.abs())
}

/// Steps `k` at which `E_k > E_{k−1} + tol`.
pub fn entropy_violations(records: &[DiagnosticsRecord]) -> Vec<usize> {
    records
        .windows(2)
        .filter(|p| p[1].entropy - p[0].entropy > entropy_tolerance(p[0].entropy))
        .map(|p| p[1].step)
        .collect()
}

/// Summed entropy inequality: for every `j`,
/// `E_j + Σ_{k≤j} (σ_k D_k + σ_k² Reg_k) ≤ E_0`, where `D_k` is the flux
/// dissipation and `Reg_k = ∫|D²w|² + |w|²` at step `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummedEntropy {
    pub initial: f64,
    /// `max_j` of the left-hand side.
    pub max_lhs: f64,
    pub dissipation: f64,
    pub regularization: f64,
}

impl SummedEntropy {
    pub fn of(traj: &Trajectory) -> Result<Self> {
        let grid = &traj.grid;
        let eps = traj.config.eps;
        let initial = crate::scheme::entropy(&traj.states[0], grid);
        let mut max_lhs = initial;
        let mut dissipation = 0.0;
        let mut regularization = 0.0;
        for (k, dt) in traj.step_sizes().into_iter().enumerate() {
            let s = &traj.states[k + 1];
            dissipation += dt * flux_dissipation(s, eps, grid)?;
            regularization += dt * dt * regularization_norm(s, grid)?;
            let lhs = crate::scheme::entropy(s, grid) + dissipation + regularization;
            max_lhs = max_lhs.max(lhs);
        }
        Ok(Self {
            initial,
            max_lhs,
            dissipation,
            regularization,
        })
    }

    /// `max_j lhs_j − E_0`; nonpositive up to rounding when the scheme dissipates entropy.
    pub fn excess(&self) -> f64 {
        self.max_lhs - self.initial
    }
}
