//! Versioned JSON reports of named checks, with a canonical configuration hash.

use crate::error::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const REPORT_VERSION: u32 = 1;

/// Finite values as JSON numbers, non-finite ones as the strings `"NaN"`, `"inf"`, `"-inf"`.
mod real {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a real number: {other}"))),
            },
        }
    }
}

/// One measured quantity against its bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub name: String,
    #[serde(with = "real")]
    pub value: f64,
    #[serde(with = "real")]
    pub bound: f64,
    pub satisfied: bool,
    #[serde(with = "real")]
    pub tolerance: f64,
}

impl PartialEq for Check {
    fn eq(&self, o: &Check) -> bool {
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.name == o.name
            && same(self.value, o.value)
            && same(self.bound, o.bound)
            && self.satisfied == o.satisfied
            && same(self.tolerance, o.tolerance)
    }
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: f64, tolerance: f64, satisfied: bool) -> Check {
        Check {
            name: name.into(),
            value,
            bound,
            satisfied: satisfied && value.is_finite() && !bound.is_nan(),
            tolerance,
        }
    }

    /// `value ≤ bound + tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64, tolerance: f64) -> Check {
        Check::new(name, value, bound, tolerance, value <= bound + tolerance)
    }

    /// `value ≤ bound·(1 + tolerance)`.
    pub fn at_most_rel(name: impl Into<String>, value: f64, bound: f64, tolerance: f64) -> Check {
        Check::new(name, value, bound, tolerance, value <= bound * (1.0 + tolerance))
    }

    /// `value ≥ bound − tolerance`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64, tolerance: f64) -> Check {
        Check::new(name, value, bound, tolerance, value >= bound - tolerance)
    }
}

/// Command report: every check, the hash of the configuration that produced it and an optional payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub version: u32,
    pub command: String,
    pub config_hash: String,
    pub checks: Vec<Check>,
    pub satisfied: bool,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub payload: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

/// Canonical JSON text: object keys sorted, no whitespace.
pub fn canonical_json<T: Serialize + ?Sized>(config: &T) -> Result<String> {
    let v = serde_json::to_value(config)?;
    Ok(serde_json::to_string(&v)?)
}

/// Hex SHA-256 of the canonical JSON of `config`.
pub fn config_hash<T: Serialize + ?Sized>(config: &T) -> Result<String> {
    let digest = Sha256::digest(canonical_json(config)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl Report {
    pub fn new<T: Serialize + ?Sized>(command: &str, config: &T, checks: Vec<Check>) -> Result<Report> {
        Ok(Report {
            version: REPORT_VERSION,
            command: command.to_string(),
            config_hash: config_hash(config)?,
            satisfied: checks.iter().all(|c| c.satisfied),
            checks,
            payload: serde_json::Value::Null,
            wall_time: None,
        })
    }

    pub fn with_payload<T: Serialize>(mut self, payload: &T) -> Result<Report> {
        self.payload = serde_json::to_value(payload)?;
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Report> {
        let r: Report = serde_json::from_str(s)?;
        if r.version != REPORT_VERSION {
            return Err(Error::Format(format!("unsupported report version {}", r.version)));
        }
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Report> {
        Report::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.satisfied)
    }
}
