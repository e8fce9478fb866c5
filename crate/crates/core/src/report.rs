//! Run reports: per-stage blocks of checked quantities, each with the
//! tolerance it was judged against.

use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `value <= tolerance`
    AtMost,
    /// `value > tolerance`
    Above,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Above => ">",
        }
    }
}

// Non-finite numbers are written as JSON null and read back as NaN.
fn nan_or_f64<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(deserialize_with = "nan_or_f64")]
    pub value: f64,
    pub relation: Relation,
    #[serde(deserialize_with = "nan_or_f64")]
    pub tolerance: f64,
    pub passed: bool,
    /// Where the value was attained, when it is a sup over grid and times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<Location>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub t: f64,
    pub x: [f64; 3],
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::AtMost,
            tolerance,
            passed: value <= tolerance,
            at: None,
        }
    }

    pub fn above(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::Above,
            tolerance,
            passed: value > tolerance,
            at: None,
        }
    }

    pub fn located(mut self, t: f64, x: [f64; 3]) -> Self {
        self.at = Some(Location { t, x });
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Tables that are reported but not judged (constants, samples).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub data: serde_json::Value,
}

impl StageReport {
    pub fn new(name: &str, checks: Vec<Check>) -> Self {
        Self {
            name: name.into(),
            passed: checks.iter().all(|c| c.passed),
            checks,
            error: None,
            data: serde_json::Value::Null,
        }
    }

    pub fn failed(name: &str, error: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: false,
            checks: Vec::new(),
            error: Some(error.into()),
            data: serde_json::Value::Null,
        }
    }

    pub fn with_data<T: Serialize>(mut self, data: &T) -> Self {
        self.data = serde_json::to_value(data).unwrap_or(serde_json::Value::Null);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the resolved configuration.
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub tol_scale: f64,
}

impl Provenance {
    pub fn new(config_hash: Option<String>, seed: Option<u64>, tol_scale: f64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            seed,
            tol_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub provenance: Provenance,
    pub stages: Vec<StageReport>,
    pub passed: bool,
}

impl RunReport {
    pub fn new(command: &str, provenance: Provenance) -> Self {
        Self {
            command: command.into(),
            provenance,
            stages: Vec::new(),
            passed: true,
        }
    }

    pub fn push(&mut self, stage: StageReport) -> bool {
        let ok = stage.passed;
        self.passed &= ok;
        self.stages.push(stage);
        ok
    }

    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn first_failure(&self) -> Option<&StageReport> {
        self.stages.iter().find(|s| !s.passed)
    }

    /// Plain-text rendering, one line per check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let p = &self.provenance;
        let _ = writeln!(out, "{} {} {}", p.tool, p.version, self.command);
        if let Some(h) = &p.config_hash {
            let _ = writeln!(out, "config sha256 {h}");
        }
        if let Some(s) = p.seed {
            let _ = writeln!(out, "seed {s}");
        }
        let _ = writeln!(out, "tolerance scale {}", p.tol_scale);
        for s in &self.stages {
            let _ = writeln!(out, "[{}] {}", if s.passed { "pass" } else { "FAIL" }, s.name);
            for c in &s.checks {
                let _ = write!(
                    out,
                    "    {:<4} {:<28} {:>12.4e} {} {:.1e}",
                    if c.passed { "ok" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.relation.symbol(),
                    c.tolerance
                );
                if let Some(l) = c.at {
                    let _ = write!(out, "  at t={:.4} x=({:.4}, {:.4}, {:.4})", l.t, l.x[0], l.x[1], l.x[2]);
                }
                out.push('\n');
            }
            if let Some(e) = &s.error {
                let _ = writeln!(out, "    error: {e}");
            }
        }
        let _ = writeln!(out, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        out
    }
}
