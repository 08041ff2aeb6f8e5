//! Named initial-data presets `(ρ₀, μ₀)`.
//!
//! Presets are evaluated at the nodes and then lifted into `[ε, 1/ε + ε]`
//! by `θ_{1/ε}(·) + ε` (see [`crate::scheme::initial_state`]).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// `ρ₀ ≡ c1`, `μ₀ ≡ c2`.
    Constant { c1: f64, c2: f64 },
    /// `ρ₀ = a1(1 + cos kπx)`, `μ₀ = a2(1 + cos kπx)`.
    Cosine { a1: f64, a2: f64, k: u32 },
    /// Gaussian bump of the given height for `ρ₀` centred at `center`, and
    /// its mirror image about `x = 1/2` for `μ₀`.
    Bump { height: f64, center: f64, width: f64 },
    /// `ρ₀ = 1 + cos πx`, `μ₀ = 1 + cos(πx/2)`; `max ρ₀μ₀ = 4` at `x = 0`.
    Supercritical,
}

impl InitialData {
    pub fn evaluate(&self, x: f64) -> (f64, f64) {
        match *self {
            InitialData::Constant { c1, c2 } => (c1, c2),
            InitialData::Cosine { a1, a2, k } => {
                let c = 1.0 + (k as f64 * PI * x).cos();
                (a1 * c, a2 * c)
            }
            InitialData::Bump { height, center, width } => {
                let g = |c: f64| height * (-((x - c) / width).powi(2)).exp();
                (g(center), g(1.0 - center))
            }
            InitialData::Supercritical => (1.0 + (PI * x).cos(), 1.0 + (0.5 * PI * x).cos()),
        }
    }

    /// The same preset with the two species exchanged, when that is again a preset.
    pub fn swapped(&self) -> Option<Self> {
        match *self {
            InitialData::Constant { c1, c2 } => Some(InitialData::Constant { c1: c2, c2: c1 }),
            InitialData::Cosine { a1, a2, k } => Some(InitialData::Cosine { a1: a2, a2: a1, k }),
            InitialData::Bump { height, center, width } => Some(InitialData::Bump {
                height,
                center: 1.0 - center,
                width,
            }),
            InitialData::Supercritical => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("initial_data {self}: {m}")));
        match *self {
            InitialData::Constant { c1, c2 } => {
                if !(c1.is_finite() && c2.is_finite()) || c1 < 0.0 || c2 < 0.0 {
                    return bad("constants must be finite and nonnegative");
                }
            }
            InitialData::Cosine { a1, a2, .. } => {
                if !(a1.is_finite() && a2.is_finite()) || a1 < 0.0 || a2 < 0.0 {
                    return bad("amplitudes must be finite and nonnegative");
                }
            }
            InitialData::Bump { height, center, width } => {
                if !(height.is_finite() && height >= 0.0) {
                    return bad("height must be finite and nonnegative");
                }
                if !(center.is_finite() && width.is_finite() && width > 0.0) {
                    return bad("center must be finite and width positive");
                }
            }
            InitialData::Supercritical => {}
        }
        Ok(())
    }
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Constant { c1, c2 } => write!(f, "constant({c1:?}, {c2:?})"),
            InitialData::Cosine { a1, a2, k } => write!(f, "cosine({a1:?}, {a2:?}, {k})"),
            InitialData::Bump { height, center, width } => write!(f, "bump({height:?}, {center:?}, {width:?})"),
            InitialData::Supercritical => write!(f, "supercritical"),
        }
    }
}

impl FromStr for InitialData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let close = s
                    .rfind(')')
                    .filter(|&c| c > open && s[c + 1..].trim().is_empty())
                    .ok_or_else(|| Error::InvalidConfig(format!("unbalanced parentheses in {s:?}")))?;
                let inner = s[open + 1..close].trim();
                let args: Vec<&str> = if inner.is_empty() {
                    Vec::new()
                } else {
                    inner.split(',').map(str::trim).collect()
                };
                (s[..open].trim(), args)
            }
            None => (s, Vec::new()),
        };
        let num = |i: usize| -> Result<f64> {
            args[i]
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("{name}: argument {:?} is not a number", args[i])))
        };
        let arity = |n: usize| -> Result<()> {
            if args.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "{name} takes {n} arguments, got {}",
                    args.len()
                )));
            }
            Ok(())
        };
        let data = match name {
            "constant" => {
                arity(2)?;
                InitialData::Constant {
                    c1: num(0)?,
                    c2: num(1)?,
                }
            }
            "cosine" => {
                arity(3)?;
                let k = args[2].parse::<u32>().map_err(|_| {
                    Error::InvalidConfig(format!(
                        "cosine: wave number {:?} must be a nonnegative integer",
                        args[2]
                    ))
                })?;
                InitialData::Cosine {
                    a1: num(0)?,
                    a2: num(1)?,
                    k,
                }
            }
            "bump" => {
                arity(3)?;
                InitialData::Bump {
                    height: num(0)?,
                    center: num(1)?,
                    width: num(2)?,
                }
            }
            "supercritical" => {
                arity(0)?;
                InitialData::Supercritical
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown initial_data preset {other:?} (expected constant, cosine, bump or supercritical)"
                )))
            }
        };
        data.validate()?;
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "constant(1.0, 0.5)",
            "cosine(0.5, 0.4, 1)",
            "bump(2.0, 0.3, 0.1)",
            "supercritical",
        ] {
            let d: InitialData = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
            assert_eq!(d.to_string().parse::<InitialData>().unwrap(), d);
        }
        assert_eq!(
            "supercritical()".parse::<InitialData>().unwrap(),
            InitialData::Supercritical
        );
    }

    #[test]
    fn parse_errors() {
        assert!("cosine(1, 2)".parse::<InitialData>().is_err());
        assert!("cosine(1, 2, x)".parse::<InitialData>().is_err());
        assert!("constant(-1, 2)".parse::<InitialData>().is_err());
        assert!("wave(1)".parse::<InitialData>().is_err());
        assert!("bump(1, 0.5, 0)".parse::<InitialData>().is_err());
        assert!("constant(1, 2".parse::<InitialData>().is_err());
    }

    #[test]
    fn supercritical_product_peaks_at_four() {
        let p = InitialData::Supercritical;
        let (r, m) = p.evaluate(0.0);
        assert_eq!(r * m, 4.0);
        for i in 1..=100 {
            let (r, m) = p.evaluate(i as f64 / 100.0);
            assert!(r * m < 4.0);
        }
    }

    #[test]
    fn swapping_exchanges_species() {
        for d in [
            InitialData::Constant { c1: 1.0, c2: 2.0 },
            InitialData::Cosine { a1: 0.5, a2: 0.2, k: 2 },
            InitialData::Bump {
                height: 1.5,
                center: 0.3,
                width: 0.1,
            },
        ] {
            let s = d.swapped().unwrap();
            for i in 0..=10 {
                let x = i as f64 / 10.0;
                let (r, m) = d.evaluate(x);
                let (r2, m2) = s.evaluate(x);
                assert!((r - m2).abs() < 1e-15 && (m - r2).abs() < 1e-15);
            }
        }
    }
}
