//! Implicit time stepping in entropy variables.
//!
//! Each step solves, for `w = (w₁, w₂)` with `ρ = e^{w₁−1}`, `μ = e^{w₂−1}`,
//!
//! ```text
//! (ρ − ρ_prev)/σ − div F₁ + σ(D²D²w₁ + w₁) = 0
//! (μ − μ_prev)/σ − div F₂ + σ(D²D²w₂ + w₂) = 0
//! F₁ = (1+ε)ρ ∇w₁ + θ_{1/ε}(√ρ)√μ θ₁(√(ρμ)) ∇w₂
//! F₂ = (1+ε)μ ∇w₂ + θ_{1/ε}(√μ)√ρ θ₁(√(ρμ)) ∇w₁
//! ```
//!
//! at every node, with edge coefficients taken as arithmetic means of the
//! nodal values and the half-cell divergence of [`crate::grid`]. The nodal
//! equations are the lumped-mass form of testing against each nodal basis
//! function, so pairing the residual with `w` under the trapezoid weights
//! reproduces the discrete entropy identity.
//!
//! Unknowns are interleaved `(w₁₀, w₂₀, w₁₁, w₂₁, ...)`; the fourth-order
//! regularization couples nodes two apart, giving a band of 5 on each side.

use std::fmt;

use thiserror::Error;

use crate::banded::BandMatrix;
use crate::entropy::{density_of, x_ln_x, W_CLAMP};
use crate::error::{Error, Result};
use crate::grid::{integrate_raw, second_difference_raw, Grid, NodalField};
use crate::initial::InitialData;
use crate::nonlinearity::{theta, theta_slope};

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
pub const MAX_HALVINGS: u32 = 30;
/// `2^-30`: thirty backtracking halvings.
pub const DEFAULT_DAMPING_MIN: f64 = 1.0 / (1u64 << MAX_HALVINGS) as f64;
/// Bound on automatic σ-halvings within one march.
pub const MAX_SIGMA_HALVINGS: u32 = 10;

const BAND: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub eps: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub steps: usize,
    pub reg_order: u32,
    pub grid_cells: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub damping_min: f64,
    pub initial_data: InitialData,
    pub auto_halving: bool,
}

impl SchemeConfig {
    /// Config with documented defaults; `steps` is derived from `horizon / sigma`.
    pub fn new(eps: f64, sigma: f64, horizon: f64, grid_cells: usize, initial_data: InitialData) -> Result<Self> {
        let steps = derive_steps(sigma, horizon)?;
        let cfg = Self {
            eps,
            sigma,
            horizon,
            steps,
            reg_order: 2,
            grid_cells,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            damping_min: DEFAULT_DAMPING_MIN,
            initial_data,
            auto_halving: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same config with `sigma` replaced and `steps` re-derived.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        let mut c = self.clone();
        c.sigma = sigma;
        c.steps = derive_steps(sigma, self.horizon)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0,1), got {}", self.eps));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        let product = self.sigma * self.steps as f64;
        if (product - self.horizon).abs() > 1e-12 * self.horizon {
            return bad(format!(
                "sigma*steps must equal horizon: sigma = {:?}, steps = {}, sigma*steps = {:?}, horizon = {:?}",
                self.sigma, self.steps, product, self.horizon
            ));
        }
        if self.reg_order != 2 {
            return bad(format!("reg_order must be 2 on a 1-D mesh, got {}", self.reg_order));
        }
        Grid::new(self.grid_cells)?;
        if !(self.newton_tol.is_finite() && self.newton_tol > 0.0) {
            return bad(format!("newton_tol must be positive, got {}", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be positive".into());
        }
        if !(self.damping_min > 0.0 && self.damping_min <= 1.0) {
            return bad(format!("damping_min must lie in (0,1], got {}", self.damping_min));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_cells)
    }
}

fn derive_steps(sigma: f64, horizon: f64) -> Result<usize> {
    if !(sigma.is_finite() && sigma > 0.0 && horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sigma and horizon must be positive: sigma = {sigma:?}, horizon = {horizon:?}"
        )));
    }
    let steps = (horizon / sigma).round();
    if steps < 1.0 || (steps * sigma - horizon).abs() > 1e-12 * horizon {
        return Err(Error::InvalidConfig(format!(
            "horizon must be an integer multiple of sigma: sigma = {sigma:?}, horizon = {horizon:?}"
        )));
    }
    Ok(steps as usize)
}

/// Nodal entropy variables of both species.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub w1: NodalField,
    pub w2: NodalField,
}

impl StateField {
    pub fn new(w1: NodalField, w2: NodalField) -> Result<Self> {
        if w1.len() != w2.len() {
            return Err(Error::SizeMismatch {
                expected: w1.len(),
                found: w2.len(),
            });
        }
        for &w in w1.iter().chain(w2.iter()) {
            if !w.is_finite() || w.abs() > W_CLAMP {
                return Err(Error::Divergence {
                    value: w,
                    bound: W_CLAMP,
                });
            }
        }
        Ok(Self { w1, w2 })
    }

    pub fn from_densities(rho: &[f64], mu: &[f64]) -> Result<Self> {
        let to_w = |x: f64| -> Result<f64> {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::domain(
                    "StateField::from_densities",
                    "density must be positive",
                    x,
                ));
            }
            Ok(x.ln() + 1.0)
        };
        let w1 = rho.iter().map(|&x| to_w(x)).collect::<Result<Vec<_>>>()?;
        let w2 = mu.iter().map(|&x| to_w(x)).collect::<Result<Vec<_>>>()?;
        Self::new(w1.into(), w2.into())
    }

    pub fn len(&self) -> usize {
        self.w1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w1.is_empty()
    }

    pub fn rho(&self) -> NodalField {
        self.w1.map(|w| (w - 1.0).exp())
    }

    pub fn mu(&self) -> NodalField {
        self.w2.map(|w| (w - 1.0).exp())
    }

    pub fn densities(&self) -> (NodalField, NodalField) {
        (self.rho(), self.mu())
    }

    /// Exchange the two species.
    pub fn swapped(&self) -> Self {
        Self {
            w1: self.w2.clone(),
            w2: self.w1.clone(),
        }
    }

    fn interleaved(&self) -> Vec<f64> {
        self.w1.iter().zip(self.w2.iter()).flat_map(|(&a, &b)| [a, b]).collect()
    }

    fn from_interleaved(x: &[f64]) -> Self {
        Self {
            w1: x.iter().step_by(2).copied().collect::<Vec<_>>().into(),
            w2: x.iter().skip(1).step_by(2).copied().collect::<Vec<_>>().into(),
        }
    }
}

/// Discrete entropy `∫ ρ ln ρ + μ ln μ`.
pub fn entropy(state: &StateField, grid: &Grid) -> f64 {
    let (rho, mu) = state.densities();
    let psi: Vec<f64> = rho
        .iter()
        .zip(mu.iter())
        .map(|(&r, &m)| x_ln_x(r) + x_ln_x(m))
        .collect();
    integrate_raw(&psi, grid)
}

/// Nodal state `θ_{1/ε}(ρ₀) + ε`, `θ_{1/ε}(μ₀) + ε`.
pub fn initial_state(config: &SchemeConfig) -> Result<StateField> {
    let grid = config.grid()?;
    let ceiling = 1.0 / config.eps;
    let mut rho = Vec::with_capacity(grid.node_count());
    let mut mu = Vec::with_capacity(grid.node_count());
    for x in grid.nodes() {
        let (r0, m0) = config.initial_data.evaluate(x);
        for v in [r0, m0] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "initial data {} is negative or non-finite at x = {x}: {v}",
                    config.initial_data
                )));
            }
        }
        rho.push(theta(r0, ceiling) + config.eps);
        mu.push(theta(m0, ceiling) + config.eps);
    }
    StateField::from_densities(&rho, &mu)
}

/// Nodal flux coefficients and their derivatives with respect to the
/// entropy variables at the same node.
#[derive(Debug, Clone, Copy)]
struct NodeCoeffs {
    rho: f64,
    mu: f64,
    /// `(1+ε)ρ`, coefficient of `∇w₁` in `F₁` (its `w₁`-derivative equals itself).
    a1: f64,
    a2: f64,
    /// `θ(√ρ)√μ θ₁(√(ρμ))`, coefficient of `∇w₂` in `F₁`.
    c1: f64,
    c2: f64,
    dc1_dw1: f64,
    dc1_dw2: f64,
    dc2_dw1: f64,
    dc2_dw2: f64,
}

impl NodeCoeffs {
    fn at(w1: f64, w2: f64, eps: f64) -> Result<Self> {
        let rho = density_of(w1)?;
        let mu = density_of(w2)?;
        let ceiling = 1.0 / eps;
        let sr = (0.5 * (w1 - 1.0)).exp();
        let sm = (0.5 * (w2 - 1.0)).exp();
        let s = (0.5 * (w1 + w2) - 1.0).exp();
        let t1 = theta(s, 1.0);
        let t1p = theta_slope(s, 1.0) * 0.5 * s;
        let (tr, tm) = (theta(sr, ceiling), theta(sm, ceiling));
        let trp = theta_slope(sr, ceiling) * 0.5 * sr;
        let tmp = theta_slope(sm, ceiling) * 0.5 * sm;
        Ok(Self {
            rho,
            mu,
            a1: (1.0 + eps) * rho,
            a2: (1.0 + eps) * mu,
            c1: tr * sm * t1,
            c2: tm * sr * t1,
            dc1_dw1: trp * sm * t1 + tr * sm * t1p,
            dc1_dw2: tr * 0.5 * sm * t1 + tr * sm * t1p,
            dc2_dw2: tmp * sr * t1 + tm * sr * t1p,
            dc2_dw1: tm * 0.5 * sr * t1 + tm * sr * t1p,
        })
    }
}

/// Fourth-difference operator `D²D²` as sparse rows.
#[derive(Debug, Clone)]
struct Regularizer {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Regularizer {
    fn new(grid: &Grid) -> Self {
        let m = grid.cells();
        let h2 = grid.spacing().powi(2);
        let d2_row = |i: usize| -> Vec<(usize, f64)> {
            if i == 0 {
                vec![(0, -2.0 / h2), (1, 2.0 / h2)]
            } else if i == m {
                vec![(m - 1, 2.0 / h2), (m, -2.0 / h2)]
            } else {
                vec![(i - 1, 1.0 / h2), (i, -2.0 / h2), (i + 1, 1.0 / h2)]
            }
        };
        let rows = (0..=m)
            .map(|i| {
                let mut acc = [0.0f64; 5];
                for (k, a) in d2_row(i) {
                    for (j, b) in d2_row(k) {
                        acc[j + 2 - i] += a * b;
                    }
                }
                acc.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(o, &v)| (i + o - 2, v))
                    .collect()
            })
            .collect();
        Self { rows }
    }
}

/// Everything needed to evaluate the step residual and its Jacobian.
#[derive(Debug, Clone)]
pub struct StepProblem {
    grid: Grid,
    eps: f64,
    sigma: f64,
    rho_prev: Vec<f64>,
    mu_prev: Vec<f64>,
    reg: Regularizer,
}

impl StepProblem {
    pub fn new(prev: &StateField, grid: Grid, eps: f64, sigma: f64) -> Result<Self> {
        if prev.len() != grid.node_count() {
            return Err(Error::SizeMismatch {
                expected: grid.node_count(),
                found: prev.len(),
            });
        }
        let rho_prev = prev.w1.iter().map(|&w| density_of(w)).collect::<Result<Vec<_>>>()?;
        let mu_prev = prev.w2.iter().map(|&w| density_of(w)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            eps,
            sigma,
            rho_prev,
            mu_prev,
            reg: Regularizer::new(&grid),
        })
    }

    fn coeffs(&self, x: &[f64]) -> Result<Vec<NodeCoeffs>> {
        x.chunks_exact(2)
            .map(|p| NodeCoeffs::at(p[0], p[1], self.eps))
            .collect()
    }

    /// Edge fluxes `(F₁, F₂)`.
    fn fluxes(&self, x: &[f64], c: &[NodeCoeffs]) -> (Vec<f64>, Vec<f64>) {
        let h = self.grid.spacing();
        let m = self.grid.cells();
        let mut f1 = Vec::with_capacity(m);
        let mut f2 = Vec::with_capacity(m);
        for e in 0..m {
            let (l, r) = (&c[e], &c[e + 1]);
            let g1 = (x[2 * e + 2] - x[2 * e]) / h;
            let g2 = (x[2 * e + 3] - x[2 * e + 1]) / h;
            f1.push(0.5 * (l.a1 + r.a1) * g1 + 0.5 * (l.c1 + r.c1) * g2);
            f2.push(0.5 * (l.a2 + r.a2) * g2 + 0.5 * (l.c2 + r.c2) * g1);
        }
        (f1, f2)
    }

    /// Interleaved nodal residual.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.node_count();
        if x.len() != 2 * n {
            return Err(Error::SizeMismatch {
                expected: 2 * n,
                found: x.len(),
            });
        }
        let c = self.coeffs(x)?;
        let (f1, f2) = self.fluxes(x, &c);
        let m = self.grid.cells();
        let mut r = vec![0.0; 2 * n];
        for i in 0..n {
            let q = self.grid.weight(i);
            let (fr1, fl1) = (if i < m { f1[i] } else { 0.0 }, if i > 0 { f1[i - 1] } else { 0.0 });
            let (fr2, fl2) = (if i < m { f2[i] } else { 0.0 }, if i > 0 { f2[i - 1] } else { 0.0 });
            let (mut d4w1, mut d4w2) = (0.0, 0.0);
            for &(j, v) in &self.reg.rows[i] {
                d4w1 += v * x[2 * j];
                d4w2 += v * x[2 * j + 1];
            }
            r[2 * i] = (c[i].rho - self.rho_prev[i]) / self.sigma - (fr1 - fl1) / q + self.sigma * (d4w1 + x[2 * i]);
            r[2 * i + 1] =
                (c[i].mu - self.mu_prev[i]) / self.sigma - (fr2 - fl2) / q + self.sigma * (d4w2 + x[2 * i + 1]);
        }
        Ok(r)
    }

    /// Size of the residual that rounding alone produces at `x`:
    /// `4·ε_mach·max_i (Σ_j |J_ij x_j| + (ρ_i + ρ_prev,i)/σ)`, species alike.
    pub fn rounding_floor(&self, x: &[f64], jac: &BandMatrix) -> f64 {
        let row = jac.abs_mul_vec(x);
        let mut worst = 0.0f64;
        for (i, r) in row.iter().enumerate() {
            let prev = if i % 2 == 0 {
                self.rho_prev[i / 2]
            } else {
                self.mu_prev[i / 2]
            };
            worst = worst.max(r + ((x[i] - 1.0).exp() + prev) / self.sigma);
        }
        4.0 * f64::EPSILON * worst
    }

    /// Analytic Jacobian of [`Self::residual`] in band storage.
    pub fn jacobian(&self, x: &[f64]) -> Result<BandMatrix> {
        let n = self.grid.node_count();
        let m = self.grid.cells();
        let h = self.grid.spacing();
        let c = self.coeffs(x)?;
        let mut jac = BandMatrix::zeros(2 * n, BAND, BAND);

        for i in 0..n {
            jac.add(2 * i, 2 * i, c[i].rho / self.sigma);
            jac.add(2 * i + 1, 2 * i + 1, c[i].mu / self.sigma);
            for &(j, v) in &self.reg.rows[i] {
                let d = self.sigma * (v + if i == j { 1.0 } else { 0.0 });
                jac.add(2 * i, 2 * j, d);
                jac.add(2 * i + 1, 2 * j + 1, d);
            }
        }

        for e in 0..m {
            let (l, r) = (&c[e], &c[e + 1]);
            let g1 = (x[2 * e + 2] - x[2 * e]) / h;
            let g2 = (x[2 * e + 3] - x[2 * e + 1]) / h;
            let abar1 = 0.5 * (l.a1 + r.a1);
            let abar2 = 0.5 * (l.a2 + r.a2);
            let cbar1 = 0.5 * (l.c1 + r.c1);
            let cbar2 = 0.5 * (l.c2 + r.c2);

            // d F_s / d (w1, w2) at the left and right nodes; unknown index = 2*node + species
            let df1 = [
                (2 * e, 0.5 * l.a1 * g1 - abar1 / h + 0.5 * l.dc1_dw1 * g2),
                (2 * e + 1, 0.5 * l.dc1_dw2 * g2 - cbar1 / h),
                (2 * e + 2, 0.5 * r.a1 * g1 + abar1 / h + 0.5 * r.dc1_dw1 * g2),
                (2 * e + 3, 0.5 * r.dc1_dw2 * g2 + cbar1 / h),
            ];
            let df2 = [
                (2 * e, 0.5 * l.dc2_dw1 * g1 - cbar2 / h),
                (2 * e + 1, 0.5 * l.a2 * g2 - abar2 / h + 0.5 * l.dc2_dw2 * g1),
                (2 * e + 2, 0.5 * r.dc2_dw1 * g1 + cbar2 / h),
                (2 * e + 3, 0.5 * r.a2 * g2 + abar2 / h + 0.5 * r.dc2_dw2 * g1),
            ];
            // edge e enters node e with sign −1/q and node e+1 with sign +1/q
            for (node, sign) in [(e, -1.0), (e + 1, 1.0)] {
                let q = self.grid.weight(node);
                for &(col, v) in &df1 {
                    jac.add(2 * node, col, sign * v / q);
                }
                for &(col, v) in &df2 {
                    jac.add(2 * node + 1, col, sign * v / q);
                }
            }
        }
        Ok(jac)
    }
}

/// Outcome of a converged step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub state: StateField,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Rounding floor of the residual at the solution; convergence is
    /// accepted below `max(newton_tol, floor)`.
    pub floor: f64,
}

/// Newton failure, with the sup-norm residual after every iteration.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct StepFailure {
    /// 1-based index of the step that failed (0 when unknown).
    pub step: usize,
    pub reason: String,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

impl fmt::Display for StepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {} failed after {} Newton iterations: {}",
            self.step, self.iterations, self.reason
        )?;
        if let Some(last) = self.trace.last() {
            write!(f, " (last residual {last:e})")?;
        }
        Ok(())
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter()
        .fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Solve one implicit step from `prev` with time step `sigma`.
pub fn step_with_sigma(
    prev: &StateField,
    config: &SchemeConfig,
    sigma: f64,
) -> std::result::Result<StepReport, StepFailure> {
    let fail = |reason: String, iterations: usize, trace: &[f64]| StepFailure {
        step: 0,
        reason,
        iterations,
        trace: trace.to_vec(),
    };
    let grid = config.grid().map_err(|e| fail(e.to_string(), 0, &[]))?;
    let problem = StepProblem::new(prev, grid, config.eps, sigma).map_err(|e| fail(e.to_string(), 0, &[]))?;

    let mut x = prev.interleaved();
    let mut r = problem.residual(&x).map_err(|e| fail(e.to_string(), 0, &[]))?;
    let mut norm = sup_norm(&r);
    let mut trace = vec![norm];
    let mut floor = 0.0;
    let done = |x: &[f64], iterations: usize, norm: f64, floor: f64| StepReport {
        state: StateField::from_interleaved(x),
        iterations,
        residual_norm: norm,
        floor,
    };

    for iter in 0..config.newton_max_iter {
        if norm <= config.newton_tol {
            return Ok(done(&x, iter, norm, floor));
        }
        let jac = problem.jacobian(&x).map_err(|e| fail(e.to_string(), iter, &trace))?;
        floor = problem.rounding_floor(&x, &jac);
        if norm <= floor {
            return Ok(done(&x, iter, norm, floor));
        }
        let lu = jac.factor().map_err(|e| fail(e.to_string(), iter, &trace))?;
        let mut delta: Vec<f64> = r.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut delta);

        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            if let Ok(rt) = problem.residual(&trial) {
                let nt = sup_norm(&rt);
                if nt < norm {
                    x = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < config.damping_min {
                trace.push(norm);
                return Err(fail(
                    format!("line search stalled at damping {lambda:e}"),
                    iter + 1,
                    &trace,
                ));
            }
        }
        trace.push(norm);
    }
    if norm <= config.newton_tol.max(floor) {
        return Ok(done(&x, config.newton_max_iter, norm, floor));
    }
    Err(fail(
        format!(
            "no convergence to {:e} within {} iterations",
            config.newton_tol, config.newton_max_iter
        ),
        config.newton_max_iter,
        &trace,
    ))
}

/// One step at the configured σ.
pub fn step(prev: &StateField, config: &SchemeConfig) -> std::result::Result<StepReport, StepFailure> {
    step_with_sigma(prev, config, config.sigma)
}

/// Residual of the step equations at `next` given `prev`, species-major
/// (`w₁` block then `w₂` block).
pub fn step_residual(next: &StateField, prev: &StateField, config: &SchemeConfig) -> Result<Vec<f64>> {
    let grid = config.grid()?;
    if next.len() != grid.node_count() {
        return Err(Error::SizeMismatch {
            expected: grid.node_count(),
            found: next.len(),
        });
    }
    let problem = StepProblem::new(prev, grid, config.eps, config.sigma)?;
    let r = problem.residual(&next.interleaved())?;
    let mut out: Vec<f64> = r.iter().step_by(2).copied().collect();
    out.extend(r.iter().skip(1).step_by(2));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalvingEvent {
    /// Index of the step that was retried.
    pub step: usize,
    pub time: f64,
    pub new_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: SchemeConfig,
    pub grid: Grid,
    pub states: Vec<StateField>,
    pub times: Vec<f64>,
    /// Newton iterations of step `k` at index `k − 1`.
    pub newton_iters: Vec<usize>,
    pub halvings: Vec<HalvingEvent>,
}

#[derive(Debug, Error)]
pub enum MarchError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error("{failure}")]
    Step {
        partial: Box<Trajectory>,
        failure: StepFailure,
    },
}

impl MarchError {
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            MarchError::Step { partial, .. } => Some(partial),
            MarchError::Setup(_) => None,
        }
    }
}

impl From<MarchError> for Error {
    fn from(e: MarchError) -> Self {
        match e {
            MarchError::Setup(e) => e,
            MarchError::Step { failure, .. } => Error::Step(Box::new(failure)),
        }
    }
}

/// Run the scheme from the configured initial data to the horizon.
pub fn march(config: &SchemeConfig) -> std::result::Result<Trajectory, MarchError> {
    config.validate()?;
    let grid = config.grid()?;
    let init = initial_state(config)?;

    let mut traj = Trajectory {
        config: config.clone(),
        grid,
        states: vec![init],
        times: vec![0.0],
        newton_iters: Vec::with_capacity(config.steps),
        halvings: Vec::new(),
    };

    let mut sigma = config.sigma;
    let mut remaining = config.steps;
    let mut base_time = 0.0;
    let mut done_at_sigma = 0usize;
    let mut halvings = 0;
    while remaining > 0 {
        let k = traj.states.len();
        let prev = traj.states.last().expect("trajectory is never empty");
        match step_with_sigma(prev, config, sigma) {
            Ok(report) => {
                done_at_sigma += 1;
                remaining -= 1;
                let t = if remaining == 0 {
                    config.horizon
                } else {
                    base_time + done_at_sigma as f64 * sigma
                };
                traj.states.push(report.state);
                traj.times.push(t);
                traj.newton_iters.push(report.iterations);
            }
            Err(mut failure) => {
                failure.step = k;
                if config.auto_halving && halvings < MAX_SIGMA_HALVINGS {
                    halvings += 1;
                    base_time = *traj.times.last().unwrap();
                    done_at_sigma = 0;
                    sigma *= 0.5;
                    remaining *= 2;
                    traj.halvings.push(HalvingEvent {
                        step: k,
                        time: base_time,
                        new_sigma: sigma,
                    });
                    continue;
                }
                return Err(MarchError::Step {
                    partial: Box::new(traj),
                    failure,
                });
            }
        }
    }
    Ok(traj)
}

/// Densities of the two reconstructions at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolants {
    /// Piecewise linear in time.
    pub tilde: (NodalField, NodalField),
    /// Right-continuous piecewise constant (the state at the right end of the interval).
    pub bar: (NodalField, NodalField),
    /// Entropy variables of the piecewise-constant reconstruction.
    pub w_bar: (NodalField, NodalField),
}

impl Trajectory {
    pub fn final_state(&self) -> &StateField {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    /// Step lengths `t_k − t_{k−1}`.
    pub fn step_sizes(&self) -> Vec<f64> {
        self.times.windows(2).map(|p| p[1] - p[0]).collect()
    }

    /// Index `k ≥ 1` with `t ∈ (t_{k−1}, t_k]`, or 0 for `t = 0`.
    fn interval_of(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        let slack = 1e-12 * horizon.max(1.0);
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        if t <= 0.0 {
            return Ok(0);
        }
        let k = self.times.partition_point(|&tk| tk < t - slack);
        Ok(k.clamp(1, self.times.len() - 1))
    }

    pub fn interpolants(&self, t: f64) -> Result<Interpolants> {
        let k = self.interval_of(t)?;
        let cur = &self.states[k];
        let (r1, m1) = cur.densities();
        let bar = (r1.clone(), m1.clone());
        let w_bar = (cur.w1.clone(), cur.w2.clone());
        if k == 0 {
            return Ok(Interpolants {
                tilde: (r1, m1),
                bar,
                w_bar,
            });
        }
        let (r0, m0) = self.states[k - 1].densities();
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let lam = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let blend = |a: &NodalField, b: &NodalField| -> NodalField {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| lam * y + (1.0 - lam) * x)
                .collect::<Vec<_>>()
                .into()
        };
        Ok(Interpolants {
            tilde: (blend(&r0, &r1), blend(&m0, &m1)),
            bar,
            w_bar,
        })
    }
}

/// `∫ F₁·∇w₁ + F₂·∇w₂`, the flux part of the discrete entropy production.
pub fn flux_dissipation(state: &StateField, eps: f64, grid: &Grid) -> Result<f64> {
    let x = state.interleaved();
    let problem = StepProblem::new(state, *grid, eps, 1.0)?;
    let c = problem.coeffs(&x)?;
    let (f1, f2) = problem.fluxes(&x, &c);
    let h = grid.spacing();
    Ok((0..grid.cells())
        .map(|e| {
            let g1 = (x[2 * e + 2] - x[2 * e]) / h;
            let g2 = (x[2 * e + 3] - x[2 * e + 1]) / h;
            h * (f1[e] * g1 + f2[e] * g2)
        })
        .sum())
}

/// `Σ_species ∫ |D²w|² + |w|²`.
pub fn regularization_norm(state: &StateField, grid: &Grid) -> Result<f64> {
    let mut total = 0.0;
    for w in [&state.w1, &state.w2] {
        if w.len() != grid.node_count() {
            return Err(Error::SizeMismatch {
                expected: grid.node_count(),
                found: w.len(),
            });
        }
        let d2 = second_difference_raw(w, grid.spacing());
        total += (0..w.len())
            .map(|i| grid.weight(i) * (d2[i] * d2[i] + w[i] * w[i]))
            .sum::<f64>();
    }
    Ok(total)
}
