//! Experiment reports and their re-evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: &str = "1";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Lt,
    Le,
    Gt,
    Eq,
}

impl Relation {
    pub fn holds(&self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::Lt => value < threshold,
            Relation::Le => value <= threshold,
            Relation::Gt => value > threshold,
            Relation::Eq => value == threshold,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Eq => "==",
        }
    }
}

/// One checked claim: `value relation threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    #[serde(with = "extended_float")]
    pub value: f64,
    pub relation: Relation,
    #[serde(with = "extended_float")]
    pub threshold: f64,
    pub pass: bool,
}

impl Assertion {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation,
            threshold,
            pass: relation.holds(value, threshold),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} {} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            short(self.value),
            self.relation.symbol(),
            short(self.threshold)
        )
    }
}

/// JSON has no infinities, so non-finite values are written as the strings
/// "inf", "-inf" and "nan".
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Number(x) => Ok(x),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

fn short(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-3..1e6).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub experiment: String,
    pub master_seed: u64,
    pub n_pairs: usize,
    pub assertions: Vec<Assertion>,
    /// Experiment-specific results.
    pub results: Value,
}

impl Report {
    pub fn new(experiment: &str, master_seed: u64, n_pairs: usize, assertions: Vec<Assertion>, results: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            experiment: experiment.to_string(),
            master_seed,
            n_pairs,
            assertions,
            results,
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecheckError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed report: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {0:?}")]
    Schema(String),
    #[error("assertion {0:?} records pass={1} but its values say otherwise")]
    Inconsistent(String, bool),
}

/// Re-derives every verdict of a written report from its recorded values and
/// returns the overall pass flag.
pub fn recheck(report: &Report) -> Result<bool, RecheckError> {
    if report.schema_version != SCHEMA_VERSION {
        return Err(RecheckError::Schema(report.schema_version.clone()));
    }
    for a in &report.assertions {
        if a.relation.holds(a.value, a.threshold) != a.pass {
            return Err(RecheckError::Inconsistent(a.name.clone(), a.pass));
        }
    }
    Ok(report.passed())
}

pub fn read_report(dir: &Path) -> Result<Report, RecheckError> {
    let path = dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| RecheckError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations() {
        assert!(Relation::Lt.holds(1.0, 2.0) && !Relation::Lt.holds(2.0, 2.0));
        assert!(Relation::Le.holds(2.0, 2.0));
        assert!(Relation::Gt.holds(3.0, 2.0) && !Relation::Gt.holds(f64::NAN, 2.0));
        assert!(Relation::Eq.holds(0.0, 0.0));
    }

    #[test]
    fn lines_use_exponents_for_small_values() {
        assert_eq!(
            Assertion::new("a", 2.5e-9, Relation::Lt, 1e-8).line(),
            "PASS a: 2.5e-9 < 1e-8"
        );
        assert_eq!(Assertion::new("b", 0.5, Relation::Gt, 2.0).line(), "FAIL b: 0.5 > 2");
    }

    #[test]
    fn recheck_detects_tampering() {
        let mut r = Report::new(
            "spread",
            1,
            10,
            vec![Assertion::new("a", 1.0, Relation::Lt, 2.0)],
            Value::Null,
        );
        assert!(recheck(&r).unwrap());
        r.assertions[0].value = 3.0;
        assert!(matches!(recheck(&r), Err(RecheckError::Inconsistent(..))));
        r.assertions[0].pass = false;
        assert!(!recheck(&r).unwrap());
    }

    #[test]
    fn round_trip() {
        let r = Report::new(
            "eq44",
            7,
            0,
            vec![Assertion::new("x", 0.5, Relation::Le, 0.5)],
            serde_json::json!({"k": 1}),
        );
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"schema_version\":\"1\""));
        assert_eq!(serde_json::from_str::<Report>(&text).unwrap(), r);
    }

    #[test]
    fn infinite_values_survive_round_trip() {
        let r = Report::new(
            "coincidence",
            1,
            100,
            vec![Assertion::new("z", f64::INFINITY, Relation::Le, 3.0)],
            Value::Null,
        );
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"inf\""));
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back.assertions[0].value, f64::INFINITY);
        assert!(!recheck(&back).unwrap());
    }
}
