//! Entropy density `ψ(ρ, μ) = ρ ln ρ + μ ln μ`, the entropy-variable map,
//! and numerical certificates for the convexity conditions that make the
//! integral of `ψ` a Lyapunov functional.
//!
//! Slack convention: every `*_slack` function returns `rhs − lhs` of its
//! inequality, so a nonnegative slack means the inequality holds.

use crate::error::{Error, Result};
use crate::nonlinearity::{coeff_matrix, theta, CoeffMatrix, MIN_DENSITY};

/// Entropy variables are clamped to this magnitude; `e^{700}` is close to
/// the largest finite double.
pub const W_CLAMP: f64 = 700.0;

pub fn entropy_density(rho: f64, mu: f64) -> Result<f64> {
    for x in [rho, mu] {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::domain(
                "entropy_density",
                "density must be finite and nonnegative",
                x,
            ));
        }
    }
    Ok(x_ln_x(rho) + x_ln_x(mu))
}

/// `x ln x` with the `0 ln 0 = 0` convention.
#[inline]
pub(crate) fn x_ln_x(x: f64) -> f64 {
    if x < MIN_DENSITY {
        0.0
    } else {
        x * x.ln()
    }
}

pub fn to_entropy_vars(rho: f64, mu: f64) -> Result<(f64, f64)> {
    for x in [rho, mu] {
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::domain(
                "to_entropy_vars",
                "density must be positive and finite",
                x,
            ));
        }
    }
    Ok((rho.ln() + 1.0, mu.ln() + 1.0))
}

pub fn from_entropy_vars(w1: f64, w2: f64) -> Result<(f64, f64)> {
    Ok((density_of(w1)?, density_of(w2)?))
}

/// `e^{w−1}`, refusing entropy variables beyond [`W_CLAMP`].
#[inline]
pub fn density_of(w: f64) -> Result<f64> {
    if !w.is_finite() || w.abs() > W_CLAMP {
        return Err(Error::Divergence {
            value: w,
            bound: W_CLAMP,
        });
    }
    Ok((w - 1.0).exp())
}

/// Hessian entries `(ψ_ρρ, ψ_ρμ, ψ_μμ)` of an entropy density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hessian {
    pub rr: f64,
    pub rm: f64,
    pub mm: f64,
}

impl Hessian {
    /// Analytic Hessian of `ρ ln ρ + μ ln μ`.
    pub fn of_entropy(rho: f64, mu: f64) -> Self {
        Self {
            rr: 1.0 / rho,
            rm: 0.0,
            mm: 1.0 / mu,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.rr * self.mm - self.rm * self.rm
    }
}

/// The three Lyapunov conditions for a general matrix and Hessian:
/// `a11ψ_ρρ + a21ψ_ρμ`, `a12ψ_ρμ + a22ψ_μμ`, and the discriminant
/// `4·first·second − (a12ψ_ρρ + (a11+a22)ψ_ρμ + a21ψ_μμ)²`.
pub fn lyapunov_slacks(a: &CoeffMatrix, h: &Hessian) -> [f64; 3] {
    let first = a.a11 * h.rr + a.a21 * h.rm;
    let second = a.a12 * h.rm + a.a22 * h.mm;
    let cross = a.a12 * h.rr + (a.a11 + a.a22) * h.rm + a.a21 * h.mm;
    [first, second, 4.0 * first * second - cross * cross]
}

/// [`lyapunov_slacks`] with the regularized coefficient matrix and `ψ = ρ ln ρ + μ ln μ`.
pub fn lyapunov_condition_slacks(rho: f64, mu: f64, eps: f64) -> Result<[f64; 3]> {
    let a = coeff_matrix(rho, mu, eps)?;
    Ok(lyapunov_slacks(&a, &Hessian::of_entropy(rho, mu)))
}

fn check_positive(op: &'static str, rho: f64, mu: f64) -> Result<()> {
    for x in [rho, mu] {
        if !x.is_finite() || x < MIN_DENSITY {
            return Err(Error::domain(op, "density must be positive and finite", x));
        }
    }
    Ok(())
}

/// Discriminant form of the regularized convexity condition for
/// `ψ = ρ ln ρ + μ ln μ`. `eps = 0` means no `1/ε` ceiling.
pub fn ms1_slack(rho: f64, mu: f64, eps: f64) -> Result<f64> {
    check_positive("ms1_slack", rho, mu)?;
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::domain("ms1_slack", "eps must be nonnegative", eps));
    }
    let ceiling = if eps == 0.0 { f64::INFINITY } else { 1.0 / eps };
    let h = Hessian::of_entropy(rho, mu);
    let (sr, sm) = (rho.sqrt(), mu.sqrt());
    let t1 = theta((rho * mu).sqrt(), 1.0);
    let (tr, tm) = (theta(sr, ceiling), theta(sm, ceiling));
    let det_factor = (1.0 + eps).powi(2) - tr * tm / (sr * sm) * t1 * t1;
    let diff = tr * t1 * h.rr / sm - tm * t1 * h.mm / sr;
    Ok(4.0 * det_factor * h.determinant() - diff * diff)
}

/// `4(1 − ρμ)·det∇²ψ − (ρψ_ρρ − μψ_μμ)²` for an arbitrary Hessian.
pub fn lyp2_slack_general(rho: f64, mu: f64, h: &Hessian) -> f64 {
    let diff = rho * h.rr - mu * h.mm;
    4.0 * (1.0 - rho * mu) * h.determinant() - diff * diff
}

/// Expanded polynomial form of the same condition:
/// `−[4(1 − ρμ)ψ_ρμ² + ρ²ψ_ρρ² + μ²ψ_μμ² + 2(ρμ − 2)ψ_ρρψ_μμ]`.
pub fn lyp3_slack_general(rho: f64, mu: f64, h: &Hessian) -> f64 {
    -(4.0 * (1.0 - mu * rho) * h.rm * h.rm
        + rho * rho * h.rr * h.rr
        + mu * mu * h.mm * h.mm
        + 2.0 * (rho * mu - 2.0) * h.rr * h.mm)
}

pub fn lyp2_slack(rho: f64, mu: f64) -> Result<f64> {
    check_positive("lyp2_slack", rho, mu)?;
    Ok(lyp2_slack_general(rho, mu, &Hessian::of_entropy(rho, mu)))
}

pub fn lyp3_slack(rho: f64, mu: f64) -> Result<f64> {
    check_positive("lyp3_slack", rho, mu)?;
    Ok(lyp3_slack_general(rho, mu, &Hessian::of_entropy(rho, mu)))
}

/// One certificate row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexitySample {
    pub rho: f64,
    pub mu: f64,
    pub eps: f64,
    pub slack_ms1: f64,
    pub slack_lyp2: f64,
    pub slack_lyp3: f64,
}

impl ConvexitySample {
    pub fn evaluate(rho: f64, mu: f64, eps: f64) -> Result<Self> {
        Ok(Self {
            rho,
            mu,
            eps,
            slack_ms1: ms1_slack(rho, mu, eps)?,
            slack_lyp2: lyp2_slack(rho, mu)?,
            slack_lyp3: lyp3_slack(rho, mu)?,
        })
    }

    /// `lyp2` slack has the sign of `1 − ρμ`; samples within `1e−10` of the
    /// threshold are not classified.
    pub fn lyp2_sign_matches(&self) -> bool {
        let d = 1.0 - self.rho * self.mu;
        d.abs() <= 1e-10 || (self.slack_lyp2 > 0.0) == (d > 0.0) && self.slack_lyp2 != 0.0
    }

    /// The two forms of the unregularized condition disagree in sign.
    pub fn lyp_forms_disagree(&self) -> bool {
        (self.slack_lyp2 >= 0.0) != (self.slack_lyp3 >= 0.0)
    }
}

/// Sampling box for the certificate driver: `(ρ, μ) = (i·ρ_max/n, j·μ_max/n)`
/// for `i, j = 1..=n`, at each listed ε.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifyRanges {
    pub rho_max: f64,
    pub mu_max: f64,
    pub samples_per_axis: usize,
    pub eps_values: Vec<f64>,
}

impl Default for CertifyRanges {
    fn default() -> Self {
        Self {
            rho_max: 10.0,
            mu_max: 10.0,
            samples_per_axis: 100,
            eps_values: vec![1.0, 0.1, 0.01],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifySummary {
    pub samples: usize,
    pub min_ms1: f64,
    pub min_lyp2: f64,
    pub min_lyp3: f64,
    pub form_disagreements: usize,
    pub lyp2_sign_mismatches: usize,
}

impl std::fmt::Display for CertifySummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.samples == 0 {
            return write!(f, "no samples");
        }
        write!(
            f,
            "samples={} min_ms1={:e} min_lyp2={:e} min_lyp3={:e} lyp2_sign_mismatches={} form_disagreements={}",
            self.samples,
            self.min_ms1,
            self.min_lyp2,
            self.min_lyp3,
            self.lyp2_sign_mismatches,
            self.form_disagreements
        )
    }
}

pub fn certify(ranges: &CertifyRanges) -> Result<(Vec<ConvexitySample>, CertifySummary)> {
    let n = ranges.samples_per_axis;
    let mut rows = Vec::with_capacity(n * n * ranges.eps_values.len());
    for &eps in &ranges.eps_values {
        for i in 1..=n {
            let rho = ranges.rho_max * i as f64 / n as f64;
            for j in 1..=n {
                let mu = ranges.mu_max * j as f64 / n as f64;
                rows.push(ConvexitySample::evaluate(rho, mu, eps)?);
            }
        }
    }
    let summary = CertifySummary {
        samples: rows.len(),
        min_ms1: rows.iter().map(|r| r.slack_ms1).fold(f64::INFINITY, f64::min),
        min_lyp2: rows.iter().map(|r| r.slack_lyp2).fold(f64::INFINITY, f64::min),
        min_lyp3: rows.iter().map(|r| r.slack_lyp3).fold(f64::INFINITY, f64::min),
        form_disagreements: rows.iter().filter(|r| r.lyp_forms_disagree()).count(),
        lyp2_sign_mismatches: rows.iter().filter(|r| !r.lyp2_sign_matches()).count(),
    };
    Ok((rows, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn density_examples() {
        assert_eq!(entropy_density(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(entropy_density(0.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(entropy_density(E, E).unwrap(), 2.0 * E, epsilon = 1e-14);
        assert!(entropy_density(-1e-3, 1.0).is_err());
        // lower bound -2/e at ρ = μ = 1/e
        assert_relative_eq!(entropy_density(1.0 / E, 1.0 / E).unwrap(), -2.0 / E, epsilon = 1e-15);
    }

    #[test]
    fn entropy_variable_examples() {
        assert_eq!(to_entropy_vars(1.0, 1.0).unwrap(), (1.0, 1.0));
        let (w1, w2) = to_entropy_vars(E, 1.0).unwrap();
        assert_relative_eq!(w1, 2.0, epsilon = 1e-15);
        assert_eq!(w2, 1.0);
        assert!(to_entropy_vars(0.0, 1.0).is_err());

        assert_eq!(from_entropy_vars(1.0, 1.0).unwrap(), (1.0, 1.0));
        let (rho, mu) = from_entropy_vars(1.0 + 4f64.ln(), 1.0).unwrap();
        assert_relative_eq!(rho, 4.0, epsilon = 1e-14);
        assert_eq!(mu, 1.0);
        let (rho, _) = from_entropy_vars(-40.0, 1.0).unwrap();
        assert!(rho > 0.0);
        assert_relative_eq!(rho, (-41f64).exp());
    }

    #[test]
    fn clamp_is_reported_as_divergence() {
        assert!(matches!(from_entropy_vars(701.0, 1.0), Err(Error::Divergence { .. })));
        assert!(matches!(from_entropy_vars(1.0, -800.0), Err(Error::Divergence { .. })));
        assert!(matches!(
            from_entropy_vars(f64::NAN, 1.0),
            Err(Error::Divergence { .. })
        ));
        assert!(from_entropy_vars(700.0, -700.0).is_ok());
    }

    #[test]
    fn lyapunov_slack_examples() {
        let [a, b, c] = lyapunov_condition_slacks(1.0, 1.0, 0.1).unwrap();
        assert_relative_eq!(a, 1.1, epsilon = 1e-14);
        assert_relative_eq!(b, 1.1, epsilon = 1e-14);
        assert_relative_eq!(c, 0.84, epsilon = 1e-13);
    }

    #[test]
    fn discriminant_matches_ms1_form() {
        // With ψ_ρμ = 0 the discriminant and the ms1 form coincide (det∇²ψ is
        // already inside ms1).
        for &(rho, mu, eps) in &[(1.0, 1.0, 0.1), (0.3, 7.0, 0.5), (40.0, 0.02, 0.01), (3.0, 3.0, 0.2)] {
            let third = lyapunov_condition_slacks(rho, mu, eps).unwrap()[2];
            let ms1 = ms1_slack(rho, mu, eps).unwrap();
            assert_relative_eq!(third, ms1, max_relative = 1e-11, epsilon = 1e-12);
        }
    }

    #[test]
    fn unmodified_matrix_fails_on_supercritical_set() {
        // brute-force scan: with A = [[1, ρ], [μ, 1]] the discriminant is
        // negative wherever ρμ > 1
        for i in 1..=60 {
            for j in 1..=60 {
                let (rho, mu) = (0.1 * i as f64, 0.1 * j as f64);
                let [_, _, third] = lyapunov_slacks(&CoeffMatrix::unmodified(rho, mu), &Hessian::of_entropy(rho, mu));
                if rho * mu > 1.0 + 1e-9 {
                    assert!(third < 0.0, "rho={rho} mu={mu} third={third}");
                } else if rho * mu < 1.0 - 1e-9 {
                    assert!(third > 0.0);
                }
            }
        }
    }

    #[test]
    fn ms1_examples() {
        assert_relative_eq!(ms1_slack(1.0, 1.0, 0.1).unwrap(), 0.84, epsilon = 1e-13);
        for &rho in &[0.01, 0.5, 2.0, 30.0, 200.0] {
            let expected = 4.0 * coeff_determinant_unchecked(rho, rho, 0.1) / (rho * rho);
            assert_relative_eq!(ms1_slack(rho, rho, 0.1).unwrap(), expected, max_relative = 1e-12);
        }
        assert!(ms1_slack(1.0, 1.0, -0.1).is_err());
    }

    fn coeff_determinant_unchecked(rho: f64, mu: f64, eps: f64) -> f64 {
        crate::nonlinearity::coeff_determinant(rho, mu, eps).unwrap()
    }

    #[test]
    fn ms1_nonnegative_on_grid() {
        let (_, summary) = certify(&CertifyRanges::default()).unwrap();
        assert_eq!(summary.samples, 30_000);
        assert!(summary.min_ms1 >= -1e-12, "{summary:?}");
        assert_eq!(summary.form_disagreements, 0);
    }

    #[test]
    fn lyp2_examples() {
        assert_eq!(lyp2_slack(1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(lyp2_slack(0.5, 0.5).unwrap(), 12.0, epsilon = 1e-13);
        assert_relative_eq!(lyp2_slack(2.0, 2.0).unwrap(), -3.0, epsilon = 1e-13);
    }

    #[test]
    fn empty_range_gives_no_rows() {
        let ranges = CertifyRanges {
            samples_per_axis: 0,
            ..Default::default()
        };
        let (rows, summary) = certify(&ranges).unwrap();
        assert!(rows.is_empty());
        assert_eq!(summary.samples, 0);
    }

    #[test]
    fn hessian_agrees_with_finite_differences() {
        let psi = |r: f64, m: f64| entropy_density(r, m).unwrap();
        for &(r, m) in &[(0.7, 1.3), (2.0, 0.2), (5.0, 5.0)] {
            let h = 1e-4;
            let rr = (psi(r + h, m) - 2.0 * psi(r, m) + psi(r - h, m)) / (h * h);
            let mm = (psi(r, m + h) - 2.0 * psi(r, m) + psi(r, m - h)) / (h * h);
            let rm = (psi(r + h, m + h) - psi(r + h, m - h) - psi(r - h, m + h) + psi(r - h, m - h)) / (4.0 * h * h);
            let exact = Hessian::of_entropy(r, m);
            assert_relative_eq!(rr, exact.rr, max_relative = 1e-5);
            assert_relative_eq!(mm, exact.mm, max_relative = 1e-5);
            assert!(rm.abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn entropy_variables_round_trip(lr in -6.0f64..6.0, lm in -6.0f64..6.0) {
            let (rho, mu) = (10f64.powf(lr), 10f64.powf(lm));
            let (w1, w2) = to_entropy_vars(rho, mu).unwrap();
            let (r, m) = from_entropy_vars(w1, w2).unwrap();
            prop_assert!(((r - rho) / rho).abs() <= 1e-14);
            prop_assert!(((m - mu) / mu).abs() <= 1e-14);
        }

        #[test]
        fn lyp2_sign_tracks_product(rho in 1e-3f64..10.0, mu in 1e-3f64..10.0) {
            let s = lyp2_slack(rho, mu).unwrap();
            let p = rho * mu;
            if (p - 1.0).abs() > 1e-10 {
                prop_assert_eq!(s >= 0.0, p <= 1.0);
            }
            let s3 = lyp3_slack(rho, mu).unwrap();
            prop_assert!((s - s3).abs() <= 1e-9 * (1.0 + s.abs()));
        }

        #[test]
        fn ms1_nonnegative_for_positive_eps(rho in 1e-4f64..1e3, mu in 1e-4f64..1e3, eps in 1e-3f64..1.0) {
            let s = ms1_slack(rho, mu, eps).unwrap();
            let scale = 4.0 * (1.0 + eps).powi(2) / (rho * mu);
            prop_assert!(s >= -1e-12 * scale.max(1.0));
        }

        #[test]
        fn entropy_midpoint_convex_in_subcritical_region(
            r0 in 0.01f64..1.0, m0 in 0.01f64..1.0, r1 in 0.01f64..1.0, m1 in 0.01f64..1.0
        ) {
            // both endpoints (and hence the segment) lie in the unit box ⊂ {ρμ ≤ 1}
            let mid = entropy_density(0.5 * (r0 + r1), 0.5 * (m0 + m1)).unwrap();
            let avg = 0.5 * (entropy_density(r0, m0).unwrap() + entropy_density(r1, m1).unwrap());
            prop_assert!(mid <= avg + 1e-15);
        }
    }
}
