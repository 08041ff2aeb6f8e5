//! Uniform node-centred mesh on `(0, 1)` with homogeneous Neumann closure.
//!
//! Nodes `x_i = i·h`, `i = 0..=M`; edge `e` joins nodes `e` and `e + 1`.
//! Quadrature is the trapezoid rule, i.e. node weights `h` with `h/2` at the
//! two ends. The divergence uses the same half-cells at the boundary, which
//! makes it exactly the negative adjoint of [`gradient`] under that
//! quadrature with no boundary terms.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    cells: usize,
    h: f64,
}

impl Grid {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < MIN_CELLS {
            return Err(Error::InvalidConfig(format!(
                "grid_cells must be at least {MIN_CELLS}, got {cells}"
            )));
        }
        Ok(Self {
            cells,
            h: 1.0 / cells as f64,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.cells + 1
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.cells as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.cells).map(|i| self.node(i))
    }

    /// Midpoint of edge `e`.
    pub fn edge_center(&self, e: usize) -> f64 {
        (e as f64 + 0.5) / self.cells as f64
    }

    /// Trapezoid weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.cells {
            0.5 * self.h
        } else {
            self.h
        }
    }

    pub fn field_from_fn(&self, f: impl Fn(f64) -> f64) -> NodalField {
        NodalField(self.nodes().map(f).collect())
    }

    fn check_nodal(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.node_count() {
            return Err(Error::SizeMismatch {
                expected: self.node_count(),
                found: f.len(),
            });
        }
        Ok(())
    }

    fn check_edges(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.cells {
            return Err(Error::SizeMismatch {
                expected: self.cells,
                found: q.len(),
            });
        }
        Ok(())
    }
}

/// One value per node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalField(pub Vec<f64>);

/// One value per cell interface.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeField(pub Vec<f64>);

macro_rules! vec_newtype {
    ($t:ty) => {
        impl Deref for $t {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $t {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $t {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl $t {
            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
                Self(self.0.iter().map(|&x| f(x)).collect())
            }

            pub fn max_abs(&self) -> f64 {
                self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
            }
        }
    };
}

vec_newtype!(NodalField);
vec_newtype!(EdgeField);

impl NodalField {
    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self(vec![value; grid.node_count()])
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn gradient(f: &[f64], g: &Grid) -> Result<EdgeField> {
    g.check_nodal(f)?;
    Ok(EdgeField(gradient_raw(f, g.h)))
}

#[inline]
pub(crate) fn gradient_raw(f: &[f64], h: f64) -> Vec<f64> {
    f.windows(2).map(|p| (p[1] - p[0]) / h).collect()
}

pub fn divergence(q: &[f64], g: &Grid) -> Result<NodalField> {
    g.check_edges(q)?;
    let m = g.cells;
    let h = g.h;
    let mut out = vec![0.0; m + 1];
    out[0] = q[0] / (0.5 * h);
    for i in 1..m {
        out[i] = (q[i] - q[i - 1]) / h;
    }
    out[m] = -q[m - 1] / (0.5 * h);
    Ok(NodalField(out))
}

/// Second difference with mirrored ghosts `f_{-1} = f_1`, `f_{M+1} = f_{M-1}`.
pub fn second_difference(f: &[f64], g: &Grid) -> Result<NodalField> {
    g.check_nodal(f)?;
    Ok(NodalField(second_difference_raw(f, g.h)))
}

pub(crate) fn second_difference_raw(f: &[f64], h: f64) -> Vec<f64> {
    let m = f.len() - 1;
    let h2 = h * h;
    let mut out = vec![0.0; m + 1];
    out[0] = 2.0 * (f[1] - f[0]) / h2;
    for i in 1..m {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    out[m] = 2.0 * (f[m - 1] - f[m]) / h2;
    out
}

pub fn integrate(f: &[f64], g: &Grid) -> Result<f64> {
    g.check_nodal(f)?;
    Ok(integrate_raw(f, g))
}

#[inline]
pub(crate) fn integrate_raw(f: &[f64], g: &Grid) -> f64 {
    f.iter().enumerate().map(|(i, &v)| g.weight(i) * v).sum()
}

/// `Σ_e h·p_e·q_e`, the quadrature for products of edge fields.
pub fn integrate_edges(p: &[f64], q: &[f64], g: &Grid) -> Result<f64> {
    g.check_edges(p)?;
    g.check_edges(q)?;
    Ok(p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() * g.h)
}

/// Regularization bilinear form `∫ D²f · D²φ` under the trapezoid rule.
pub fn regularization_form(f: &[f64], phi: &[f64], g: &Grid) -> Result<f64> {
    let a = second_difference(f, g)?;
    let b = second_difference(phi, g)?;
    Ok(a.iter()
        .zip(b.iter())
        .enumerate()
        .map(|(i, (x, y))| g.weight(i) * x * y)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid::new(7).is_err());
        let g = Grid::new(8).unwrap();
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.spacing() * g.cells() as f64, 1.0);
        assert_eq!(g.node(8), 1.0);
    }

    #[test]
    fn gradient_examples() {
        let g = Grid::new(8).unwrap();
        assert!(gradient(&g.field_from_fn(|_| 3.0), &g)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        for v in gradient(&g.field_from_fn(|x| x), &g).unwrap().iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-14);
        }
        let grad = gradient(&g.field_from_fn(|x| x * x), &g).unwrap();
        for (e, v) in grad.iter().enumerate() {
            assert_abs_diff_eq!(*v, g.node(e) + g.node(e + 1), epsilon = 1e-14);
        }
        assert!(matches!(gradient(&[1.0; 4], &g), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn divergence_examples() {
        let g = Grid::new(32).unwrap();
        assert!(divergence(&vec![0.0; 32], &g).unwrap().iter().all(|&v| v == 0.0));
        let mut seed = 7;
        let q: Vec<f64> = (0..32).map(|_| lcg(&mut seed)).collect();
        assert_abs_diff_eq!(
            integrate(&divergence(&q, &g).unwrap(), &g).unwrap(),
            0.0,
            epsilon = 1e-13
        );
        assert!(divergence(&vec![0.0; 33], &g).is_err());
    }

    #[test]
    fn summation_by_parts() {
        let g = Grid::new(32).unwrap();
        let mut seed = 11;
        for _ in 0..20 {
            let q: Vec<f64> = (0..32).map(|_| lcg(&mut seed)).collect();
            let phi: Vec<f64> = (0..33).map(|_| lcg(&mut seed)).collect();
            let div = divergence(&q, &g).unwrap();
            let lhs: f64 = div
                .iter()
                .zip(&phi)
                .enumerate()
                .map(|(i, (d, p))| g.weight(i) * d * p)
                .sum();
            let rhs = -integrate_edges(&q, &gradient(&phi, &g).unwrap(), &g).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13);
        }
    }

    #[test]
    fn second_difference_annihilates_affine() {
        let g = Grid::new(16).unwrap();
        for v in second_difference(&g.field_from_fn(|_| 2.5), &g).unwrap().iter() {
            assert_eq!(*v, 0.0);
        }
        // linear fields are annihilated in the interior; the mirrored ghost
        // imposes zero slope, so the boundary rows see the Neumann mismatch
        let lin = second_difference(&g.field_from_fn(|x| 3.0 * x - 1.0), &g).unwrap();
        for v in &lin[1..16] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn second_difference_of_cosine() {
        // Taylor oracle: the error is h²/12·f'''' = h²π⁴/12 in the interior,
        // and the mirrored boundary rows stay consistent since cos(πx) is
        // even about both ends.
        let g = Grid::new(64).unwrap();
        let d2 = second_difference(&g.field_from_fn(|x| (PI * x).cos()), &g).unwrap();
        let h = g.spacing();
        let bound = h * h * PI.powi(4) / 12.0 * 1.01;
        for (i, v) in d2.iter().enumerate() {
            let exact = -PI * PI * (PI * g.node(i)).cos();
            assert!((v - exact).abs() <= bound, "node {i}: {v} vs {exact}");
        }
    }

    #[test]
    fn regularization_form_is_symmetric() {
        let g = Grid::new(32).unwrap();
        let mut seed = 3;
        for _ in 0..10 {
            let f: Vec<f64> = (0..33).map(|_| lcg(&mut seed)).collect();
            let p: Vec<f64> = (0..33).map(|_| lcg(&mut seed)).collect();
            // ∫ (D²f) φ is symmetric under the trapezoid weights
            let d2f = second_difference(&f, &g).unwrap();
            let d2p = second_difference(&p, &g).unwrap();
            let a: f64 = (0..33).map(|i| g.weight(i) * d2f[i] * p[i]).sum();
            let b: f64 = (0..33).map(|i| g.weight(i) * d2p[i] * f[i]).sum();
            assert_abs_diff_eq!(a, b, epsilon = 1e-13 * a.abs().max(1.0));
            // and so is the fourth-order form ∫ D²(D²f) φ
            let d4f = second_difference(&d2f, &g).unwrap();
            let d4p = second_difference(&d2p, &g).unwrap();
            let a: f64 = (0..33).map(|i| g.weight(i) * d4f[i] * p[i]).sum();
            let b: f64 = (0..33).map(|i| g.weight(i) * d4p[i] * f[i]).sum();
            assert_abs_diff_eq!(a, b, epsilon = 1e-13 * a.abs().max(1.0));
            // which equals the regularization form ∫ D²f · D²φ
            let c = regularization_form(&f, &p, &g).unwrap();
            assert_abs_diff_eq!(a, c, epsilon = 1e-13 * a.abs().max(1.0));
        }
    }

    #[test]
    fn trapezoid_examples() {
        let g = Grid::new(8).unwrap();
        assert_abs_diff_eq!(integrate(&g.field_from_fn(|_| 1.0), &g).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(integrate(&g.field_from_fn(|x| x), &g).unwrap(), 0.5, epsilon = 1e-15);
        let g = Grid::new(100).unwrap();
        // trapezoid error for x² is h²/6
        assert_abs_diff_eq!(
            integrate(&g.field_from_fn(|x| x * x), &g).unwrap(),
            1.0 / 3.0,
            epsilon = 2e-5
        );
    }

    proptest! {
        #[test]
        fn operators_are_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = Grid::new(16).unwrap();
            let mut s = seed;
            let f: Vec<f64> = (0..17).map(|_| lcg(&mut s)).collect();
            let p: Vec<f64> = (0..17).map(|_| lcg(&mut s)).collect();
            let comb: Vec<f64> = f.iter().zip(&p).map(|(x, y)| a * x + b * y).collect();
            let check = |op: &dyn Fn(&[f64]) -> Vec<f64>| {
                let lhs = op(&comb);
                let (of, op_) = (op(&f), op(&p));
                lhs.iter().zip(of.iter().zip(&op_)).all(|(l, (x, y))| {
                    (l - (a * x + b * y)).abs() <= 1e-10 * (1.0 + l.abs())
                })
            };
            prop_assert!(check(&|v| gradient(v, &g).unwrap().into_inner()));
            prop_assert!(check(&|v| second_difference(v, &g).unwrap().into_inner()));
            prop_assert!(check(&|v| divergence(&v[..16], &g).unwrap().into_inner()));
            let i = integrate(&comb, &g).unwrap();
            prop_assert!((i - a * integrate(&f, &g).unwrap() - b * integrate(&p, &g).unwrap()).abs() < 1e-12);
        }
    }
}
