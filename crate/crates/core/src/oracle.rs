//! Reference computations independent of the implicit solver: an explicit
//! fine-step integrator in density form, its one-species reduction for
//! symmetric data, and the scalar root-finder for constant states.

use crate::error::{Error, Result};
use crate::grid::{gradient_raw, Grid, NodalField};
use crate::nonlinearity::theta;
use crate::scheme::StateField;

/// CFL constant of the explicit oracle.
pub const CFL: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub dt: f64,
    pub cells: usize,
    pub eps: f64,
    pub horizon: f64,
}

impl OracleConfig {
    /// Config with the largest admissible micro-step.
    pub fn at_cfl(cells: usize, eps: f64, horizon: f64) -> Result<Self> {
        let grid = Grid::new(cells)?;
        let cfg = Self {
            dt: stable_dt(&grid, eps),
            cells,
            eps,
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = Grid::new(self.cells)?;
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Oracle(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Oracle(format!("horizon must be positive, got {}", self.horizon)));
        }
        let bound = stable_dt(&grid, self.eps);
        if !(self.dt > 0.0 && self.dt <= bound) {
            return Err(Error::Oracle(format!(
                "dt = {:e} violates the stability bound {bound:e} = {CFL}·h²/(2+ε)",
                self.dt
            )));
        }
        Ok(())
    }

    /// Number of micro-steps and their common length (at most `dt`).
    fn schedule(&self) -> (usize, f64) {
        let n = (self.horizon / self.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        (n, self.horizon / n as f64)
    }
}

/// `CFL·h²/(2+ε)`; the diffusion matrix has eigenvalues at most `2 + ε`.
pub fn stable_dt(grid: &Grid, eps: f64) -> f64 {
    CFL * grid.spacing().powi(2) / (2.0 + eps)
}

fn edge_mean(f: &[f64]) -> Vec<f64> {
    f.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// `div` with half-cell boundaries; zero flux through both ends.
fn divergence_into(flux: &[f64], grid: &Grid, out: &mut [f64]) {
    let m = grid.cells();
    for (i, o) in out.iter_mut().enumerate() {
        let right = if i < m { flux[i] } else { 0.0 };
        let left = if i > 0 { flux[i - 1] } else { 0.0 };
        *o = (right - left) / grid.weight(i);
    }
}

fn check_nonnegative(values: &[f64], what: &str, step: usize) -> Result<()> {
    if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Oracle(format!(
            "{what} became non-positive ({v:e}) at node {i} after micro-step {step}"
        )));
    }
    Ok(())
}

/// Explicit Euler in the densities for
/// `∂ₜρ = div[(1+ε)∇ρ + θ_{1/ε}(√ρ)θ₁(√(ρμ))/√μ ∇μ]` and its mirror.
pub fn explicit_reference(config: &OracleConfig, initial: &StateField) -> Result<(NodalField, NodalField)> {
    config.validate()?;
    let grid = Grid::new(config.cells)?;
    if initial.len() != grid.node_count() {
        return Err(Error::SizeMismatch {
            expected: grid.node_count(),
            found: initial.len(),
        });
    }
    let (eps, ceiling, h) = (config.eps, 1.0 / config.eps, grid.spacing());
    let (n, dt) = config.schedule();
    let (mut rho, mut mu) = initial.densities();
    let mut div = vec![0.0; grid.node_count()];
    for step in 1..=n {
        let t1: Vec<f64> = rho
            .iter()
            .zip(mu.iter())
            .map(|(r, m)| theta((r * m).sqrt(), 1.0))
            .collect();
        let b12: Vec<f64> = (0..rho.len())
            .map(|i| theta(rho[i].sqrt(), ceiling) * t1[i] / mu[i].sqrt())
            .collect();
        let b21: Vec<f64> = (0..rho.len())
            .map(|i| theta(mu[i].sqrt(), ceiling) * t1[i] / rho[i].sqrt())
            .collect();
        let (gr, gm) = (gradient_raw(&rho, h), gradient_raw(&mu, h));
        let (c12, c21) = (edge_mean(&b12), edge_mean(&b21));
        let f1: Vec<f64> = (0..grid.cells())
            .map(|e| (1.0 + eps) * gr[e] + c12[e] * gm[e])
            .collect();
        let f2: Vec<f64> = (0..grid.cells())
            .map(|e| (1.0 + eps) * gm[e] + c21[e] * gr[e])
            .collect();

        divergence_into(&f1, &grid, &mut div);
        let next_rho: Vec<f64> = rho.iter().zip(&div).map(|(r, d)| r + dt * d).collect();
        divergence_into(&f2, &grid, &mut div);
        let next_mu: Vec<f64> = mu.iter().zip(&div).map(|(m, d)| m + dt * d).collect();
        check_nonnegative(&next_rho, "rho", step)?;
        check_nonnegative(&next_mu, "mu", step)?;
        rho = next_rho.into();
        mu = next_mu.into();
    }
    Ok((rho, mu))
}

/// Explicit Euler for the one-species reduction
/// `∂ₜρ = div[((1+ε) + θ_{1/ε}(√ρ)θ₁(ρ)/√ρ)∇ρ]` of symmetric data.
pub fn symmetric_scalar_reference(initial: &NodalField, eps: f64, config: &OracleConfig) -> Result<NodalField> {
    config.validate()?;
    if eps != config.eps {
        return Err(Error::Oracle(format!(
            "eps {eps} disagrees with the oracle config eps {}",
            config.eps
        )));
    }
    let grid = Grid::new(config.cells)?;
    if initial.len() != grid.node_count() {
        return Err(Error::SizeMismatch {
            expected: grid.node_count(),
            found: initial.len(),
        });
    }
    check_nonnegative(initial, "rho", 0)?;
    let (ceiling, h) = (1.0 / eps, grid.spacing());
    let (n, dt) = config.schedule();
    let mut rho = initial.clone();
    let mut div = vec![0.0; grid.node_count()];
    for step in 1..=n {
        let coef: Vec<f64> = rho
            .iter()
            .map(|&r| (1.0 + eps) + theta(r.sqrt(), ceiling) * theta(r, 1.0) / r.sqrt())
            .collect();
        let c = edge_mean(&coef);
        let g = gradient_raw(&rho, h);
        let flux: Vec<f64> = c.iter().zip(&g).map(|(a, b)| a * b).collect();
        divergence_into(&flux, &grid, &mut div);
        let next: Vec<f64> = rho.iter().zip(&div).map(|(r, d)| r + dt * d).collect();
        check_nonnegative(&next, "rho", step)?;
        rho = next.into();
    }
    Ok(rho)
}

/// Next constant density of the implicit step from the constant state `c`:
/// the root `w` of `e^{w−1} − c + σ²w = 0`, returned as `e^{w−1}`.
pub fn constant_drift(c: f64, sigma: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::domain("constant_drift", "density must be positive", c));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::domain("constant_drift", "sigma must be positive", sigma));
    }
    let s2 = sigma * sigma;
    let f = |w: f64| (w - 1.0).exp() - c + s2 * w;
    let w_prev = c.ln() + 1.0;
    // f is increasing, and f(w_prev) = σ²w_prev fixes the side of the root
    let (mut lo, mut hi) = (w_prev, w_prev);
    let mut step = 1.0;
    while f(lo) > 0.0 {
        lo -= step;
        step *= 2.0;
        if step > 1e6 {
            return Err(Error::Oracle(format!(
                "constant_drift: no lower bracket for c = {c}, sigma = {sigma}"
            )));
        }
    }
    step = 1.0;
    while f(hi) < 0.0 {
        hi += step;
        step *= 2.0;
        if step > 1e6 {
            return Err(Error::Oracle(format!(
                "constant_drift: no upper bracket for c = {c}, sigma = {sigma}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi) - 1.0).exp())
}

/// `j`-fold composition of [`constant_drift`] starting from `c`, including `c` itself.
pub fn constant_drift_series(c: f64, sigma: f64, steps: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(c);
    for _ in 0..steps {
        let next = constant_drift(*out.last().unwrap(), sigma)?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cfl_is_enforced() {
        let g = Grid::new(32).unwrap();
        let ok = OracleConfig::at_cfl(32, 0.1, 0.01).unwrap();
        assert_eq!(ok.dt, 0.25 * g.spacing().powi(2) / 2.1);
        let bad = OracleConfig { dt: 2.0 * ok.dt, ..ok };
        assert!(bad.validate().is_err());
        let s = StateField::from_densities(&[1.0; 33], &[1.0; 33]).unwrap();
        assert!(explicit_reference(&bad, &s).is_err());
    }

    #[test]
    fn constants_are_exactly_stationary() {
        let cfg = OracleConfig::at_cfl(16, 0.1, 0.01).unwrap();
        let s = StateField::from_densities(&[0.7; 17], &[1.9; 17]).unwrap();
        let (r, m) = explicit_reference(&cfg, &s).unwrap();
        assert!(r.iter().all(|&x| x == s.rho()[0]));
        assert!(m.iter().all(|&x| x == s.mu()[0]));
        let one = symmetric_scalar_reference(&NodalField(vec![0.4; 17]), 0.1, &cfg).unwrap();
        assert!(one.iter().all(|&x| x == 0.4));
    }

    #[test]
    fn symmetric_data_stays_symmetric_and_matches_scalar_reduction() {
        let g = Grid::new(32).unwrap();
        let cfg = OracleConfig::at_cfl(32, 0.1, 0.02).unwrap();
        let r0: Vec<f64> = g
            .nodes()
            .map(|x| 0.3 + 0.8 * (-(x - 0.4f64).powi(2) / 0.02).exp())
            .collect();
        let s = StateField::from_densities(&r0, &r0).unwrap();
        let (r, m) = explicit_reference(&cfg, &s).unwrap();
        assert_eq!(r, m);
        let scalar = symmetric_scalar_reference(&s.rho(), 0.1, &cfg).unwrap();
        for i in 0..r.len() {
            assert_relative_eq!(scalar[i], r[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn explicit_oracle_conserves_mass() {
        let g = Grid::new(32).unwrap();
        let cfg = OracleConfig::at_cfl(32, 0.1, 0.02).unwrap();
        let r0: Vec<f64> = g.nodes().map(|x| 1.0 + (3.0 * x).cos()).collect();
        let m0: Vec<f64> = g.nodes().map(|x| 0.2 + x).collect();
        let s = StateField::from_densities(&r0, &m0).unwrap();
        let (r, m) = explicit_reference(&cfg, &s).unwrap();
        let mass = |f: &[f64]| crate::grid::integrate_raw(f, &g);
        assert_relative_eq!(mass(&r), mass(&s.rho()), max_relative = 1e-12);
        assert_relative_eq!(mass(&m), mass(&s.mu()), max_relative = 1e-12);
    }

    #[test]
    fn small_density_coefficient_reduces_to_linear() {
        // θ₁(ρ) = ρ and θ_{1/ε}(√ρ) = √ρ below 1, so the coefficient is (1+ε) + ρ
        let r = 0.01f64;
        let coef = (1.1) + theta(r.sqrt(), 10.0) * theta(r, 1.0) / r.sqrt();
        assert_relative_eq!(coef, 1.1 + r, max_relative = 1e-15);
    }

    #[test]
    fn constant_drift_examples() {
        let next = constant_drift(1.0, 0.1).unwrap();
        let w = next.ln() + 1.0;
        assert!(((w - 1.0).exp() - 1.0 + 0.01 * w).abs() < 1e-14);
        assert!(next < 1.0);
        assert!((constant_drift(2.0, 1e-8).unwrap() - 2.0).abs() < 1e-14);
        // w < 0 drifts upward
        assert!(constant_drift(0.1, 0.1).unwrap() > 0.1);
        // larger σ, larger drift
        let d = |s: f64| (constant_drift(3.0, s).unwrap() - 3.0).abs();
        assert!(d(0.2) > d(0.1) && d(0.1) > d(0.05));
        assert!(constant_drift(0.0, 0.1).is_err());
    }
}
