//! Scalar nonlinearities of the regularized system.
//!
//! Everything here is a pure function of `f64` inputs. The checked entry
//! points (`cutoff`, `s_epsilon`, ...) validate their arguments; the
//! `pub(crate)` kernels skip validation and are used inside the assembly
//! loops where inputs are exponentials of finite entropy variables.

use crate::error::{Error, Result};

/// Densities below this are rejected rather than flushed to zero.
pub const MIN_DENSITY: f64 = 1e-300;

/// Ceiling of the clamp `θ_ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffParams {
    ell: f64,
}

impl CutoffParams {
    pub fn new(ell: f64) -> Result<Self> {
        if !(ell.is_finite() && ell > 0.0) {
            return Err(Error::domain(
                "CutoffParams",
                "ceiling must be positive and finite",
                ell,
            ));
        }
        Ok(Self { ell })
    }

    /// The `1/ε` ceiling used for density factors.
    pub fn from_eps(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::domain("CutoffParams::from_eps", "eps must be positive", eps));
        }
        Self::new(1.0 / eps)
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn apply(&self, s: f64) -> Result<f64> {
        cutoff(s, self.ell)
    }
}

/// Clamp of `s` to `[0, ell]`.
pub fn cutoff(s: f64, ell: f64) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::domain("cutoff", "argument must be finite", s));
    }
    if !(ell.is_finite() && ell > 0.0) {
        return Err(Error::domain("cutoff", "ceiling must be positive and finite", ell));
    }
    Ok(theta(s, ell))
}

#[inline]
pub(crate) fn theta(s: f64, ell: f64) -> f64 {
    if s >= ell {
        ell
    } else if s > 0.0 {
        s
    } else {
        0.0
    }
}

/// Left derivative of `θ_ℓ`: 1 on `(0, ℓ]`, 0 elsewhere.
#[inline]
pub(crate) fn theta_slope(s: f64, ell: f64) -> f64 {
    if s > 0.0 && s <= ell {
        1.0
    } else {
        0.0
    }
}

fn check_density(op: &'static str, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::domain(op, "density must be finite", x));
    }
    if x < MIN_DENSITY {
        return Err(Error::domain(op, "density must be positive", x));
    }
    Ok(())
}

fn check_eps(op: &'static str, eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::domain(op, "eps must be positive", eps));
    }
    Ok(())
}

/// `S_ε = θ_{1/ε}(√ρ)/√ρ + θ_{1/ε}(√μ)/√μ`, which never exceeds 2.
pub fn s_epsilon(rho: f64, mu: f64, eps: f64) -> Result<f64> {
    check_density("s_epsilon", rho)?;
    check_density("s_epsilon", mu)?;
    check_eps("s_epsilon", eps)?;
    Ok(s_eps_kernel(rho, mu, 1.0 / eps))
}

#[inline]
pub(crate) fn s_eps_kernel(rho: f64, mu: f64, ceiling: f64) -> f64 {
    let (sr, sm) = (rho.sqrt(), mu.sqrt());
    theta(sr, ceiling) / sr + theta(sm, ceiling) / sm
}

/// The 2×2 diffusion matrix of the regularized system in density form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffMatrix {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl CoeffMatrix {
    /// The unmodified matrix `[[1, ρ], [μ, 1]]` (no ε, no cutoffs).
    pub fn unmodified(rho: f64, mu: f64) -> Self {
        Self {
            a11: 1.0,
            a12: rho,
            a21: mu,
            a22: 1.0,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }
}

pub fn coeff_matrix(rho: f64, mu: f64, eps: f64) -> Result<CoeffMatrix> {
    check_density("coeff_matrix", rho)?;
    check_density("coeff_matrix", mu)?;
    check_eps("coeff_matrix", eps)?;
    let ceiling = 1.0 / eps;
    let (sr, sm) = (rho.sqrt(), mu.sqrt());
    let t1 = theta((rho * mu).sqrt(), 1.0);
    Ok(CoeffMatrix {
        a11: 1.0 + eps,
        a12: theta(sr, ceiling) * t1 / sm,
        a21: theta(sm, ceiling) * t1 / sr,
        a22: 1.0 + eps,
    })
}

/// Determinant of [`coeff_matrix`], evaluated in the grouped form
/// `(1+ε)² − θ(√ρ)θ(√μ)/√(ρμ) · θ₁²(√(ρμ))`.
pub fn coeff_determinant(rho: f64, mu: f64, eps: f64) -> Result<f64> {
    check_density("coeff_determinant", rho)?;
    check_density("coeff_determinant", mu)?;
    check_eps("coeff_determinant", eps)?;
    let ceiling = 1.0 / eps;
    let (sr, sm) = (rho.sqrt(), mu.sqrt());
    let s = (rho * mu).sqrt();
    let t1 = theta(s, 1.0);
    let value = (1.0 + eps).powi(2) - theta(sr, ceiling) * theta(sm, ceiling) / (sr * sm) * t1 * t1;
    if value <= 0.0 {
        return Err(Error::NonPositiveDeterminant { value });
    }
    Ok(value)
}

/// Diffusion coefficients `(1 + θ₁(√(ρμ)), 1 − θ₁(√(ρμ)))` of the `u`/`v` system.
pub fn uv_coefficients(rho: f64, mu: f64) -> Result<(f64, f64)> {
    for x in [rho, mu] {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::domain(
                "uv_coefficients",
                "density must be finite and nonnegative",
                x,
            ));
        }
    }
    let t1 = theta((rho * mu).sqrt(), 1.0);
    Ok((1.0 + t1, 1.0 - t1))
}
