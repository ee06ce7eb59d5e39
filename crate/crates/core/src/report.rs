//! JSON experiment reports.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Bumped on any change to the report fields.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Input file, when the matrix came from disk.
    pub input_path: Option<String>,
    /// SHA-256 of the input file.
    pub input_digest: Option<String>,
    /// Name of the built-in generator, when the matrix was synthesized.
    pub generator: Option<String>,
    pub tool_version: String,
}

impl Provenance {
    pub fn generated(name: impl Into<String>) -> Self {
        Self { input_path: None, input_digest: None, generator: Some(name.into()), tool_version: tool_version() }
    }

    pub fn file(path: &Path) -> Result<Self> {
        Ok(Self {
            input_path: Some(path.display().to_string()),
            input_digest: Some(crate::io::file_digest(path)?),
            generator: None,
            tool_version: tool_version(),
        })
    }
}

fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// Statistics of one numeric per-trial field. `stddev` uses the `n − 1`
/// denominator and is 0 for a single trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub stddev: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            count: values.len(),
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            stddev: var.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub command: String,
    pub config: BTreeMap<String, Value>,
    pub started_at: String,
    pub finished_at: String,
    /// One JSON object per trial, in trial order.
    pub per_trial: Vec<Map<String, Value>>,
    /// Keyed by per-trial field; numbers and booleans (as 0/1) are summarized.
    pub summary: BTreeMap<String, Summary>,
    /// Command-specific aggregate result.
    pub result: Value,
    pub provenance: Provenance,
}

/// Summaries of every numeric or boolean field that appears in the records.
pub fn summarize(per_trial: &[Map<String, Value>]) -> BTreeMap<String, Summary> {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in per_trial {
        for (key, value) in record {
            let x = match value {
                Value::Number(num) => num.as_f64(),
                Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
                _ => None,
            };
            if let Some(x) = x {
                columns.entry(key.clone()).or_default().push(x);
            }
        }
    }
    columns.into_iter().filter_map(|(k, v)| Summary::of(&v).map(|s| (k, s))).collect()
}

/// Serializes each item to a JSON object.
pub fn records<T: Serialize>(items: &[T]) -> Result<Vec<Map<String, Value>>> {
    items
        .iter()
        .map(|item| match serde_json::to_value(item)? {
            Value::Object(map) => Ok(map),
            other => {
                let mut map = Map::new();
                map.insert("value".into(), other);
                Ok(map)
            }
        })
        .collect()
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Collects configuration while an experiment runs; the start time is taken
/// at construction.
pub struct ReportBuilder {
    command: String,
    config: BTreeMap<String, Value>,
    started_at: String,
    provenance: Provenance,
}

impl ReportBuilder {
    pub fn new(command: impl Into<String>, provenance: Provenance) -> Self {
        Self { command: command.into(), config: BTreeMap::new(), started_at: now(), provenance }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) -> Result<&mut Self> {
        self.config.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(self)
    }

    pub fn finish(self, per_trial: Vec<Map<String, Value>>, result: impl Serialize) -> Result<ExperimentReport> {
        Ok(ExperimentReport {
            schema_version: SCHEMA_VERSION,
            command: self.command,
            config: self.config,
            started_at: self.started_at,
            finished_at: now(),
            summary: summarize(&per_trial),
            per_trial,
            result: serde_json::to_value(result)?,
            provenance: self.provenance,
        })
    }
}

impl ExperimentReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let report: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::OutOfRange(format!(
                "report schema version {} is not {SCHEMA_VERSION}",
                report.schema_version
            )));
        }
        Ok(report)
    }

    /// Largest difference between the stored summary and one recomputed from
    /// `per_trial`; infinite when the field sets differ.
    pub fn summary_discrepancy(&self) -> f64 {
        let fresh = summarize(&self.per_trial);
        if fresh.keys().ne(self.summary.keys()) {
            return f64::INFINITY;
        }
        fresh
            .iter()
            .map(|(k, a)| {
                let b = &self.summary[k];
                if a.count != b.count {
                    return f64::INFINITY;
                }
                [a.mean - b.mean, a.min - b.min, a.max - b.max, a.stddev - b.stddev]
                    .iter()
                    .map(|d| d.abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// SHA-256 of the serialized `per_trial` section.
    pub fn per_trial_digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&self.per_trial)?)))
    }

    /// The report with timestamps blanked, for reproducibility comparisons.
    pub fn without_timestamps(&self) -> Self {
        Self { started_at: String::new(), finished_at: String::new(), ..self.clone() }
    }
}
