//! Report assembly and file output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::quantization::Verdict;

/// Verdict of one experiment; plain computations end as `Complete`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunVerdict {
    Check(Verdict),
    Complete,
}

impl RunVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            RunVerdict::Check(v) => v.label(),
            RunVerdict::Complete => "COMPLETE",
        }
    }

    /// FAIL and NOT CERTIFIED both mean the claim was not established.
    pub fn is_failure(&self) -> bool {
        matches!(self, RunVerdict::Check(Verdict::Fail | Verdict::NotCertified))
    }
}

/// A file produced by an experiment, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub name: String,
    pub kind: &'static str,
    pub verdict: RunVerdict,
    pub certificates: Vec<(String, Value)>,
    pub table: Value,
    pub artifacts: Vec<Artifact>,
    pub seconds: f64,
}

/// Top-level JSON report. Wall-clock timings live in a sidecar file so the
/// report itself is byte-identical across runs.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config_echo: Value,
    pub certificates: BTreeMap<String, Value>,
    pub tables: BTreeMap<String, Value>,
    pub verdicts: BTreeMap<String, String>,
    pub timings: String,
}

pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: Report,
    pub outcomes: Vec<ExperimentOutcome>,
}

impl RunSummary {
    pub fn new(config_echo: Value, outcomes: Vec<ExperimentOutcome>) -> Self {
        let mut certificates = BTreeMap::new();
        let mut tables = BTreeMap::new();
        let mut verdicts = BTreeMap::new();
        for o in &outcomes {
            for (k, c) in &o.certificates {
                certificates.insert(k.clone(), c.clone());
            }
            tables.insert(o.name.clone(), o.table.clone());
            verdicts.insert(o.name.clone(), o.verdict.label().to_string());
        }
        Self {
            report: Report {
                config_echo,
                certificates,
                tables,
                verdicts,
                timings: TIMINGS_FILE.into(),
            },
            outcomes,
        }
    }

    pub fn any_failure(&self) -> bool {
        self.outcomes.iter().any(|o| o.verdict.is_failure())
    }

    /// 0 when everything passed or completed, 2 on a failed verdict.
    pub fn exit_code(&self) -> i32 {
        if self.any_failure() {
            2
        } else {
            0
        }
    }

    pub fn lines(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .map(|o| format!("{:<28} {:<13} {}", o.name, o.kind, o.verdict.label()))
            .collect()
    }

    pub fn report_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.report)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for o in &self.outcomes {
            for a in &o.artifacts {
                fs::write(dir.join(&a.file), &a.bytes)?;
            }
        }
        fs::write(dir.join(REPORT_FILE), self.report_json()?)?;
        let timings: BTreeMap<&str, f64> = self.outcomes.iter().map(|o| (o.name.as_str(), o.seconds)).collect();
        let mut t = serde_json::to_string_pretty(&timings)?;
        t.push('\n');
        fs::write(dir.join(TIMINGS_FILE), t)?;
        Ok(())
    }
}
