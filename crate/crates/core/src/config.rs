//! Declarative run and sweep files.
//!
//! ```text
//! # comment
//! [scheme]
//! eps = 0.1
//! sigma = 0.01
//! horizon = 0.1
//! grid_cells = 64
//! initial_data = cosine(0.5, 0.4, 1)
//!
//! [sweep]
//! sigmas = 0.01, 0.005, 0.0025
//! ```
//!
//! Keys before the first section header belong to `[scheme]`. A `[manifest]`
//! section is skipped, so run manifests parse back into the config they echo.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::continuation::{ContinuationPlan, DistanceNorm};
use crate::diagnostics::TestFunction;
use crate::error::{Error, Result};
use crate::initial::InitialData;
use crate::scheme::{SchemeConfig, DEFAULT_DAMPING_MIN, DEFAULT_NEWTON_MAX_ITER, DEFAULT_NEWTON_TOL};

pub const SCHEME_KEYS: [&str; 11] = [
    "eps",
    "sigma",
    "horizon",
    "steps",
    "reg_order",
    "grid_cells",
    "newton_tol",
    "newton_max_iter",
    "damping_min",
    "initial_data",
    "auto_halving",
];

const REQUIRED_KEYS: [&str; 5] = ["eps", "sigma", "horizon", "grid_cells", "initial_data"];

pub const SWEEP_KEYS: [&str; 7] = [
    "sigmas",
    "cells",
    "sigma_per_h",
    "test_function",
    "eps_sequence",
    "norms",
    "parallelism",
];

/// σ-refinement, mesh-refinement and ε-continuation studies around one base config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub base: SchemeConfig,
    pub sigmas: Vec<f64>,
    pub cells: Vec<usize>,
    /// `σ = sigma_per_h · h` in the mesh study; the base σ is used when absent.
    pub sigma_per_h: Option<f64>,
    pub test_function: TestFunction,
    pub continuation: Option<ContinuationPlan>,
    pub parallelism: usize,
}

impl SweepPlan {
    /// Sweep that runs the base config alone.
    pub fn single(base: SchemeConfig) -> Self {
        Self {
            sigmas: vec![base.sigma],
            base,
            cells: Vec::new(),
            sigma_per_h: None,
            test_function: TestFunction { k: 1, p: 1 },
            continuation: None,
            parallelism: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum ConfigFile {
    Run(SchemeConfig),
    Sweep(SweepPlan),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Scheme,
    Sweep,
    Manifest,
}

struct Entry {
    value: String,
    line: usize,
}

struct Parsed {
    path: String,
    scheme: HashMap<String, Entry>,
    sweep: HashMap<String, Entry>,
    has_sweep: bool,
    last_line: usize,
}

impl Parsed {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn scheme_value<T>(&self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.scheme.get(key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .map_err(|m| self.err(e.line, format!("{key}: {m}"))),
        }
    }

    fn sweep_value<T>(&self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.sweep.get(key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .map_err(|m| self.err(e.line, format!("{key}: {m}"))),
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.scheme
            .get(key)
            .or_else(|| self.sweep.get(key))
            .map_or(self.last_line, |e| e.line)
    }
}

fn real(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("{s:?} is not a number"))
}

fn count(s: &str) -> std::result::Result<usize, String> {
    s.parse::<usize>()
        .map_err(|_| format!("{s:?} is not a nonnegative integer"))
}

fn boolean(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("{s:?} is not true or false")),
    }
}

fn list<T>(s: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| item(x.trim())).collect()
}

fn lex(path: &str, text: &str) -> Result<Parsed> {
    let mut parsed = Parsed {
        path: path.to_string(),
        scheme: HashMap::new(),
        sweep: HashMap::new(),
        has_sweep: false,
        last_line: text.lines().count().max(1),
    };
    let mut section = Section::Scheme;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| parsed.err(line, format!("malformed section header {content:?}")))?
                .trim();
            section = match name {
                "scheme" => Section::Scheme,
                "sweep" => {
                    parsed.has_sweep = true;
                    Section::Sweep
                }
                "manifest" => Section::Manifest,
                other => return Err(parsed.err(line, format!("unknown section [{other}]"))),
            };
            continue;
        }
        if section == Section::Manifest {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parsed.err(line, format!("expected `key = value`, got {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let (known, map): (&[&str], _) = match section {
            Section::Scheme => (&SCHEME_KEYS, &mut parsed.scheme),
            Section::Sweep => (&SWEEP_KEYS, &mut parsed.sweep),
            Section::Manifest => unreachable!(),
        };
        if !known.contains(&key) {
            return Err(parsed.err(line, format!("unknown key {key:?}")));
        }
        if map.contains_key(key) {
            return Err(parsed.err(line, format!("duplicate key {key:?}")));
        }
        map.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    Ok(parsed)
}

fn build_scheme(p: &Parsed) -> Result<SchemeConfig> {
    for key in REQUIRED_KEYS {
        if !p.scheme.contains_key(key) {
            return Err(p.err(p.last_line, format!("missing required key {key:?}")));
        }
    }
    let eps = p.scheme_value("eps", real)?.unwrap();
    let sigma = p.scheme_value("sigma", real)?.unwrap();
    let horizon = p.scheme_value("horizon", real)?.unwrap();
    let grid_cells = p.scheme_value("grid_cells", count)?.unwrap();
    let initial_data = p
        .scheme_value("initial_data", |s| s.parse::<InitialData>().map_err(|e| e.to_string()))?
        .unwrap();
    let steps = match p.scheme_value("steps", count)? {
        Some(s) => s,
        None if sigma > 0.0 && horizon > 0.0 => (horizon / sigma).round() as usize,
        None => 0,
    };
    let config = SchemeConfig {
        eps,
        sigma,
        horizon,
        steps,
        reg_order: p
            .scheme_value("reg_order", |s| {
                s.parse::<u32>().map_err(|_| format!("{s:?} is not an integer"))
            })?
            .unwrap_or(2),
        grid_cells,
        newton_tol: p.scheme_value("newton_tol", real)?.unwrap_or(DEFAULT_NEWTON_TOL),
        newton_max_iter: p
            .scheme_value("newton_max_iter", count)?
            .unwrap_or(DEFAULT_NEWTON_MAX_ITER),
        damping_min: p.scheme_value("damping_min", real)?.unwrap_or(DEFAULT_DAMPING_MIN),
        initial_data,
        auto_halving: p.scheme_value("auto_halving", boolean)?.unwrap_or(false),
    };
    config.validate().map_err(|e| locate(p, e))?;
    Ok(config)
}

/// Attach the line of the key an invariant message names.
fn locate(p: &Parsed, e: Error) -> Error {
    match e {
        Error::InvalidConfig(msg) => {
            let key = SCHEME_KEYS
                .iter()
                .chain(SWEEP_KEYS.iter())
                .find(|k| msg.starts_with(*k))
                .map_or("", |k| *k);
            let line = if key == "sigma" && msg.contains("steps") {
                p.scheme.get("steps").map_or(p.line_of("sigma"), |e| e.line)
            } else {
                p.line_of(key)
            };
            p.err(line, msg)
        }
        other => other,
    }
}

fn build_sweep(p: &Parsed, base: SchemeConfig) -> Result<SweepPlan> {
    let sigmas = p.sweep_value("sigmas", |s| list(s, real))?.unwrap_or_default();
    for &s in &sigmas {
        base.with_sigma(s)
            .map_err(|e| p.err(p.line_of("sigmas"), e.to_string()))?;
    }
    let cells = p.sweep_value("cells", |s| list(s, count))?.unwrap_or_default();
    let sigma_per_h = p.sweep_value("sigma_per_h", real)?;
    if let Some(c) = sigma_per_h {
        if !(c > 0.0 && c.is_finite()) {
            return Err(p.err(
                p.line_of("sigma_per_h"),
                format!("sigma_per_h must be positive, got {c}"),
            ));
        }
    }
    for &m in &cells {
        let sigma = sigma_per_h.map_or(base.sigma, |c| c / m as f64);
        SchemeConfig {
            grid_cells: m,
            ..base.clone()
        }
        .with_sigma(sigma)
        .map_err(|e| p.err(p.line_of("cells"), format!("cells = {m}: {e}")))?;
    }
    let test_function = p
        .sweep_value("test_function", |s| {
            s.parse::<TestFunction>().map_err(|e| e.to_string())
        })?
        .unwrap_or(TestFunction { k: 1, p: 1 });
    let parallelism = p.sweep_value("parallelism", count)?.unwrap_or(0);
    let norms = p
        .sweep_value("norms", |s| {
            list(s, |n| match n {
                "l1" => Ok(DistanceNorm::L1),
                "sup" => Ok(DistanceNorm::Sup),
                other => Err(format!("unknown norm {other:?} (expected l1 or sup)")),
            })
        })?
        .unwrap_or_else(|| vec![DistanceNorm::L1]);
    let continuation = match p.sweep_value("eps_sequence", |s| list(s, real))? {
        None => None,
        Some(seq) => {
            let plan = ContinuationPlan {
                eps_sequence: seq,
                shared: base.clone(),
                norms,
                parallelism,
            };
            plan.validate()
                .map_err(|e| p.err(p.line_of("eps_sequence"), e.to_string()))?;
            Some(plan)
        }
    };
    Ok(SweepPlan {
        base,
        sigmas,
        cells,
        sigma_per_h,
        test_function,
        continuation,
        parallelism,
    })
}

pub fn parse_config_str(path: &str, text: &str) -> Result<ConfigFile> {
    let parsed = lex(path, text)?;
    let base = build_scheme(&parsed)?;
    if parsed.has_sweep {
        Ok(ConfigFile::Sweep(build_sweep(&parsed, base)?))
    } else {
        Ok(ConfigFile::Run(base))
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&path.display().to_string(), &text)
}

/// `[scheme]` section reproducing `config` exactly (floats in shortest round-trip form).
pub fn format_scheme_section(config: &SchemeConfig) -> String {
    let mut s = String::from("[scheme]\n");
    let _ = writeln!(s, "eps = {:?}", config.eps);
    let _ = writeln!(s, "sigma = {:?}", config.sigma);
    let _ = writeln!(s, "horizon = {:?}", config.horizon);
    let _ = writeln!(s, "steps = {}", config.steps);
    let _ = writeln!(s, "reg_order = {}", config.reg_order);
    let _ = writeln!(s, "grid_cells = {}", config.grid_cells);
    let _ = writeln!(s, "newton_tol = {:?}", config.newton_tol);
    let _ = writeln!(s, "newton_max_iter = {}", config.newton_max_iter);
    let _ = writeln!(s, "damping_min = {:?}", config.damping_min);
    let _ = writeln!(s, "initial_data = {}", config.initial_data);
    let _ = writeln!(s, "auto_halving = {}", config.auto_halving);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "eps = 0.1\nsigma = 0.01\nhorizon = 0.1\ngrid_cells = 32\ninitial_data = cosine(0.5, 0.4, 1)\n";

    fn parse(text: &str) -> Result<ConfigFile> {
        parse_config_str("test.cfg", text)
    }

    fn message(text: &str) -> (usize, String) {
        match parse(text).unwrap_err() {
            Error::Parse { line, message, .. } => (line, message),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let ConfigFile::Run(c) = parse(MINIMAL).unwrap() else {
            panic!()
        };
        assert_eq!(c.steps, 10);
        assert_eq!(c.reg_order, 2);
        assert_eq!(c.newton_tol, DEFAULT_NEWTON_TOL);
        assert_eq!(c.newton_max_iter, DEFAULT_NEWTON_MAX_ITER);
        assert_eq!(c.damping_min, DEFAULT_DAMPING_MIN);
        assert!(!c.auto_halving);
    }

    #[test]
    fn invariant_violations_name_the_line() {
        let (line, msg) = message(&MINIMAL.replace("eps = 0.1", "eps = 1.5"));
        assert_eq!(line, 1);
        assert!(msg.contains("eps must lie in (0,1)"), "{msg}");

        let (line, msg) = message(&format!("{MINIMAL}steps = 7\n"));
        assert_eq!(line, 6);
        assert!(
            msg.contains("0.01") && msg.contains("0.1") && msg.contains("steps = 7"),
            "{msg}"
        );

        let (line, msg) = message("# header\n[scheme]\nsigma = 0.01\nhorizon = 0.1\n");
        assert_eq!(line, 4);
        assert!(msg.contains("missing required key \"eps\""), "{msg}");

        let (line, msg) = message(&format!("{MINIMAL}colour = red\n"));
        assert_eq!(line, 6);
        assert!(msg.contains("unknown key"), "{msg}");

        let (line, _) = message(&MINIMAL.replace("grid_cells = 32", "grid_cells = 4"));
        assert_eq!(line, 4);
        let (line, _) = message(&MINIMAL.replace("cosine(0.5, 0.4, 1)", "cosine(0.5)"));
        assert_eq!(line, 5);
        let (line, _) = message(&format!("{MINIMAL}[extras]\n"));
        assert_eq!(line, 6);
    }

    #[test]
    fn scheme_section_round_trips() {
        let mut c = SchemeConfig::new(
            0.1,
            1.0 / 300.0,
            0.1,
            48,
            InitialData::Bump {
                height: 3.0,
                center: 0.3,
                width: 0.1,
            },
        )
        .unwrap();
        c.auto_halving = true;
        c.newton_tol = 3e-11;
        let text = format!(
            "{}\n[manifest]\nversion = 0.1.0\nstatus = ok\n",
            format_scheme_section(&c)
        );
        assert_eq!(parse(&text).unwrap(), ConfigFile::Run(c));
    }

    #[test]
    fn sweep_plans() {
        let text = format!(
            "{MINIMAL}[sweep]\nsigmas = 0.01, 0.005, 0.0025\ncells = 16, 32, 64\nsigma_per_h = 0.0125\neps_sequence = 0.5, 0.25\nnorms = l1, sup\nparallelism = 2\n"
        );
        let ConfigFile::Sweep(plan) = parse(&text).unwrap() else {
            panic!()
        };
        assert_eq!(plan.sigmas, vec![0.01, 0.005, 0.0025]);
        assert_eq!(plan.cells, vec![16, 32, 64]);
        let cont = plan.continuation.unwrap();
        assert_eq!(cont.eps_sequence, vec![0.5, 0.25]);
        assert_eq!(cont.norms, vec![DistanceNorm::L1, DistanceNorm::Sup]);

        let (line, _) = message(&format!("{MINIMAL}[sweep]\nsigmas = 0.03\n"));
        assert_eq!(line, 7);
        let (line, _) = message(&format!("{MINIMAL}[sweep]\neps_sequence = 0.25, 0.5\n"));
        assert_eq!(line, 7);
        let (line, _) = message(&format!("{MINIMAL}[sweep]\ncells = 16\nsigma_per_h = 0.03\n"));
        assert_eq!(line, 7);
    }
}
