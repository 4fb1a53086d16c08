//! Experiment configuration files.
//!
//! A config is a TOML document made of flat sections. Every key is optional
//! except `experiment.name`; unknown keys are rejected, and errors name the
//! offending key as `section.key`.

use std::fmt;
use std::path::PathBuf;

use pilotwave_core::{Constraint, DetectorWindow, EnsembleConfig, IntegratorSettings, PhysicalParams};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("missing required key {0}")]
    MissingKey(String),
    #[error("bad value for {key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("unknown key {0}")]
    UnknownKey(String),
}

impl ConfigError {
    fn bad(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::BadValue {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Dotted key the error refers to, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Syntax(_) => None,
            ConfigError::MissingKey(k) | ConfigError::UnknownKey(k) => Some(k),
            ConfigError::BadValue { key, .. } => Some(key),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Equivariance,
    Coincidence,
    Constrained,
    GhosePstar,
    Spread,
    ErgodicityToy,
    Eq44,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Equivariance,
        Experiment::Coincidence,
        Experiment::Constrained,
        Experiment::GhosePstar,
        Experiment::Spread,
        Experiment::ErgodicityToy,
        Experiment::Eq44,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Equivariance => "equivariance",
            Experiment::Coincidence => "coincidence",
            Experiment::Constrained => "constrained",
            Experiment::GhosePstar => "ghose_pstar",
            Experiment::Spread => "spread",
            Experiment::ErgodicityToy => "ergodicity_toy",
            Experiment::Eq44 => "eq44",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    pub fn description(&self) -> &'static str {
        match self {
            Experiment::Equivariance => "equilibrium ensemble stays distributed as |psi|^2",
            Experiment::Coincidence => "equilibrium coincidence rates match the quadrature values",
            Experiment::Constrained => "antidiagonal ensemble: zero same-side coincidences and a marginal mismatch",
            Experiment::GhosePstar => "time-ensemble coincidence value over the antidiagonal ensemble",
            Experiment::Spread => "initial centre-of-mass spread and the centre-of-mass law",
            Experiment::ErgodicityToy => "time average vs diagonal average for random discrete spectra",
            Experiment::Eq44 => "Bohmian space average of local values vs the quantum expectation",
        }
    }

    fn accepts_windows(&self) -> bool {
        matches!(self, Experiment::Coincidence | Experiment::Constrained)
    }

    fn accepts_toy(&self) -> bool {
        matches!(self, Experiment::ErgodicityToy)
    }

    fn default_constraint(&self) -> Constraint {
        match self {
            Experiment::Constrained | Experiment::GhosePstar => Constraint::Antidiagonal,
            _ => Constraint::Equilibrium,
        }
    }

    /// Sections this experiment reads, in addition to `[experiment]`.
    pub fn sections(&self) -> Vec<&'static str> {
        let mut s = vec!["params", "ensemble", "integrator", "analysis"];
        if self.accepts_windows() {
            s.push("windows");
        }
        if self.accepts_toy() {
            s.push("toy");
        }
        s
    }

    pub fn default_windows(&self) -> Vec<[f64; 4]> {
        match self {
            Experiment::Coincidence => vec![
                [0.0, 4.0, -8.0, -2.0],
                [2.0, 6.0, -3.0, 1.0],
                [5.0, 10.0, -12.0, -4.0],
                [-1.0, 3.0, 3.0, 9.0],
                [1.0, 5.0, 6.0, 14.0],
                [-15.0, -5.0, 8.0, 11.0],
            ],
            Experiment::Constrained => vec![[0.5, 3.0, 3.0, 8.0], [-9.0, -4.0, -4.0, -0.5]],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Statistical and numerical thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analysis {
    pub quad_tol: f64,
    pub z_max: f64,
    pub ks_alpha: f64,
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            quad_tol: pilotwave_core::detection::DEFAULT_QUAD_TOL,
            z_max: pilotwave_core::detection::DEFAULT_Z_MAX,
            ks_alpha: pilotwave_core::detection::DEFAULT_KS_ALPHA,
        }
    }
}

/// Random mode systems for the time-average experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySettings {
    pub systems: usize,
    pub modes: usize,
}

impl Default for ToySettings {
    fn default() -> Self {
        Self { systems: 10, modes: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub params: PhysicalParams,
    /// Accepted for completeness; the longitudinal motion is not modelled.
    pub kx: Option<f64>,
    pub ensemble: EnsembleConfig,
    pub windows: Vec<(DetectorWindow, DetectorWindow)>,
    pub integrator: IntegratorSettings,
    pub analysis: Analysis,
    pub toy: ToySettings,
    pub workers: usize,
    pub output_dir: PathBuf,
}

pub const DEFAULT_N_PAIRS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

/// Typed access to the keys of one section.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn float(&self, k: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::Float(x)) if x.is_finite() => Ok(*x),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(ConfigError::bad(
                self.key(k),
                format!("expected a finite number, got {v}"),
            )),
        }
    }

    fn opt_float(&self, k: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(_) => self.float(k, 0.0).map(Some),
        }
    }

    fn positive(&self, k: &str, default: f64) -> Result<f64, ConfigError> {
        let x = self.float(k, default)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(ConfigError::bad(self.key(k), format!("must be > 0, got {x}")))
        }
    }

    fn count(&self, k: &str, default: u64, min: u64) -> Result<u64, ConfigError> {
        let n = match self.get(k) {
            None => return Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(v) => {
                return Err(ConfigError::bad(
                    self.key(k),
                    format!("expected a non-negative integer, got {v}"),
                ))
            }
        };
        if n < min {
            return Err(ConfigError::bad(self.key(k), format!("must be >= {min}, got {n}")));
        }
        Ok(n)
    }

    fn string(&self, k: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(ConfigError::bad(self.key(k), format!("expected a string, got {v}"))),
        }
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<(), ConfigError> {
        if let Some(t) = self.table {
            // Sorted so the first reported key does not depend on map order.
            let mut keys: Vec<&String> = t.keys().collect();
            keys.sort();
            if let Some(k) = keys.into_iter().find(|k| !known.contains(&k.as_str())) {
                return Err(ConfigError::UnknownKey(self.key(k)));
            }
        }
        Ok(())
    }
}

fn section<'a>(root: &'a Table, name: &'static str) -> Result<Section<'a>, ConfigError> {
    match root.get(name) {
        None => Ok(Section { name, table: None }),
        Some(Value::Table(t)) => Ok(Section { name, table: Some(t) }),
        Some(_) => Err(ConfigError::bad(name, "expected a [section]")),
    }
}

fn parse_window_pair(key: &str, v: &Value) -> Result<(DetectorWindow, DetectorWindow), ConfigError> {
    let bad = || ConfigError::bad(key, "each window pair is [lo1, hi1, lo2, hi2] with lo < hi");
    let arr = v.as_array().ok_or_else(bad)?;
    if arr.len() != 4 {
        return Err(bad());
    }
    let mut x = [0.0; 4];
    for (slot, item) in x.iter_mut().zip(arr) {
        *slot = match item {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            _ => return Err(bad()),
        };
    }
    let w1 = DetectorWindow::between(x[0], x[1]).map_err(|_| bad())?;
    let w2 = DetectorWindow::between(x[2], x[3]).map_err(|_| bad())?;
    Ok((w1, w2))
}

fn window_pairs(raw: &[[f64; 4]]) -> Vec<(DetectorWindow, DetectorWindow)> {
    raw.iter()
        .map(|x| {
            (
                DetectorWindow::between(x[0], x[1]).expect("built-in window"),
                DetectorWindow::between(x[2], x[3]).expect("built-in window"),
            )
        })
        .collect()
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;

    const SECTIONS: [&str; 7] = [
        "experiment",
        "params",
        "ensemble",
        "integrator",
        "analysis",
        "windows",
        "toy",
    ];
    let mut top: Vec<&String> = root.keys().collect();
    top.sort();
    if let Some(k) = top.into_iter().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }

    let exp = section(&root, "experiment")?;
    exp.reject_unknown(&["name", "output_dir", "workers"])?;
    let name = exp
        .string("name")?
        .ok_or_else(|| ConfigError::MissingKey("experiment.name".into()))?;
    let experiment = Experiment::from_name(name).ok_or_else(|| {
        let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
        ConfigError::bad(
            "experiment.name",
            format!("unknown experiment {name:?}; expected one of {names:?}"),
        )
    })?;
    let output_dir = PathBuf::from(exp.string("output_dir")?.unwrap_or(DEFAULT_OUTPUT_DIR));
    let workers = exp.count("workers", 1, 1)? as usize;

    for (present, allowed, name) in [
        (root.contains_key("windows"), experiment.accepts_windows(), "windows"),
        (root.contains_key("toy"), experiment.accepts_toy(), "toy"),
    ] {
        if present && !allowed {
            return Err(ConfigError::UnknownKey(format!(
                "{name} (not accepted by experiment {experiment})"
            )));
        }
    }

    let p = section(&root, "params")?;
    p.reject_unknown(&["hbar", "mass", "sigma0", "half_separation", "ky", "kx", "t0"])?;
    let d = PhysicalParams::default();
    let params = PhysicalParams {
        hbar: p.float("hbar", d.hbar)?,
        mass: p.float("mass", d.mass)?,
        sigma0: p.float("sigma0", d.sigma0)?,
        half_separation: p.float("half_separation", d.half_separation)?,
        ky: p.float("ky", d.ky)?,
        t0: p.float("t0", d.t0)?,
    };
    params.validate().map_err(|e| {
        let name = match &e {
            pilotwave_core::ParamsError::NotPositive { name, .. }
            | pilotwave_core::ParamsError::Negative { name, .. }
            | pilotwave_core::ParamsError::NotFinite { name, .. } => *name,
        };
        ConfigError::bad(p.key(name), e.to_string())
    })?;
    if params.half_separation <= 0.0 {
        return Err(ConfigError::bad(p.key("half_separation"), "must be > 0"));
    }
    if params.t0 <= 0.0 {
        return Err(ConfigError::bad(p.key("t0"), "must be > 0"));
    }
    let kx = p.opt_float("kx")?;

    let e = section(&root, "ensemble")?;
    e.reject_unknown(&["n_pairs", "master_seed", "constraint"])?;
    let constraint = match e.string("constraint")? {
        None => experiment.default_constraint(),
        Some("equilibrium") => Constraint::Equilibrium,
        Some("antidiagonal") => Constraint::Antidiagonal,
        Some(other) => {
            return Err(ConfigError::bad(
                e.key("constraint"),
                format!("expected \"equilibrium\" or \"antidiagonal\", got {other:?}"),
            ))
        }
    };
    if constraint != experiment.default_constraint() {
        return Err(ConfigError::bad(
            e.key("constraint"),
            format!(
                "experiment {experiment} requires {}",
                experiment.default_constraint().as_str()
            ),
        ));
    }
    let ensemble = EnsembleConfig {
        n_pairs: e.count("n_pairs", DEFAULT_N_PAIRS as u64, 100)? as usize,
        master_seed: e.count("master_seed", DEFAULT_SEED, 0)?,
        constraint,
    };

    let i = section(&root, "integrator")?;
    i.reject_unknown(&["rel_tol", "abs_tol", "max_step", "node_eps"])?;
    let di = IntegratorSettings::default();
    let integrator = IntegratorSettings {
        rel_tol: i.positive("rel_tol", di.rel_tol)?,
        abs_tol: i.positive("abs_tol", di.abs_tol)?,
        max_step: i.positive("max_step", di.max_step)?,
        node_eps: i.positive("node_eps", di.node_eps)?,
    };

    let a = section(&root, "analysis")?;
    a.reject_unknown(&["quad_tol", "z_max", "ks_alpha"])?;
    let da = Analysis::default();
    let analysis = Analysis {
        quad_tol: a.positive("quad_tol", da.quad_tol)?,
        z_max: a.positive("z_max", da.z_max)?,
        ks_alpha: a.positive("ks_alpha", da.ks_alpha)?,
    };
    if analysis.ks_alpha >= 1.0 {
        return Err(ConfigError::bad(a.key("ks_alpha"), "must be < 1"));
    }

    let w = section(&root, "windows")?;
    w.reject_unknown(&["pairs"])?;
    let windows = match w.get("pairs") {
        None => window_pairs(&experiment.default_windows()),
        Some(Value::Array(items)) if !items.is_empty() => items
            .iter()
            .map(|v| parse_window_pair("windows.pairs", v))
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(ConfigError::bad(
                "windows.pairs",
                "expected a non-empty array of window pairs",
            ))
        }
    };

    let t = section(&root, "toy")?;
    t.reject_unknown(&["systems", "modes"])?;
    let dt = ToySettings::default();
    let toy = ToySettings {
        systems: t.count("systems", dt.systems as u64, 1)? as usize,
        modes: t.count("modes", dt.modes as u64, 2)? as usize,
    };

    Ok(ExperimentSpec {
        experiment,
        params,
        kx,
        ensemble,
        windows,
        integrator,
        analysis,
        toy,
        workers,
        output_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let spec = parse_config("[experiment]\nname = \"spread\"\n").unwrap();
        assert_eq!(spec.experiment, Experiment::Spread);
        assert_eq!(spec.params, PhysicalParams::default());
        assert_eq!(spec.ensemble.n_pairs, 100_000);
        assert_eq!(spec.ensemble.constraint, Constraint::Equilibrium);
        assert_eq!(spec.integrator, IntegratorSettings::default());
        assert!(spec.windows.is_empty());
        assert_eq!(spec.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn negative_sigma_names_the_key() {
        let err = parse_config("[experiment]\nname = \"spread\"\n[params]\nsigma0 = -1.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
        assert_eq!(err.key(), Some("params.sigma0"));
    }

    #[test]
    fn windows_rejected_where_not_used() {
        let err = parse_config("[experiment]\nname = \"spread\"\n[windows]\npairs = [[0, 1, 2, 3]]\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(_)));
    }

    #[test]
    fn missing_name() {
        assert_eq!(
            parse_config("[params]\nt0 = 3\n").unwrap_err(),
            ConfigError::MissingKey("experiment.name".into())
        );
    }

    #[test]
    fn unknown_keys() {
        let err = parse_config("[experiment]\nname = \"eq44\"\n[params]\nsigma = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("params.sigma".into()));
        let err = parse_config("[experiment]\nname = \"eq44\"\n[extra]\nx = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("extra".into()));
    }

    #[test]
    fn windows_parsed_and_validated() {
        let spec =
            parse_config("[experiment]\nname = \"coincidence\"\n[windows]\npairs = [[0, 1.5, -3, -1]]\n").unwrap();
        assert_eq!(spec.windows.len(), 1);
        assert_eq!(spec.windows[0].0.hi(), 1.5);
        let err =
            parse_config("[experiment]\nname = \"coincidence\"\n[windows]\npairs = [[1, 0, 2, 3]]\n").unwrap_err();
        assert_eq!(err.key(), Some("windows.pairs"));
    }

    #[test]
    fn constraint_defaults_follow_experiment() {
        let spec = parse_config("[experiment]\nname = \"constrained\"\n").unwrap();
        assert_eq!(spec.ensemble.constraint, Constraint::Antidiagonal);
        assert_eq!(spec.windows.len(), 2);
        let err = parse_config("[experiment]\nname = \"ghose_pstar\"\n[ensemble]\nconstraint = \"equilibrium\"\n")
            .unwrap_err();
        assert_eq!(err.key(), Some("ensemble.constraint"));
    }

    #[test]
    fn kx_is_accepted_and_ignored() {
        let spec = parse_config("[experiment]\nname = \"eq44\"\n[params]\nkx = 3.0\n").unwrap();
        assert_eq!(spec.kx, Some(3.0));
        assert_eq!(spec.params, PhysicalParams::default());
    }

    #[test]
    fn integer_values_accepted_for_floats() {
        let spec = parse_config("[experiment]\nname = \"eq44\"\n[params]\nsigma0 = 2\nt0 = 4\n").unwrap();
        assert_eq!(spec.params.sigma0, 2.0);
        assert_eq!(spec.params.t0, 4.0);
    }

    #[test]
    fn syntax_errors_reported() {
        assert!(matches!(parse_config("[experiment\n"), Err(ConfigError::Syntax(_))));
        let err = parse_config("[experiment]\nname = 3\n").unwrap_err();
        assert_eq!(err.key(), Some("experiment.name"));
    }
}
