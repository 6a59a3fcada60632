use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use ndtomo::states::StateMetrics;

/// Outcome of one reconstructed quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EntryStatus {
    /// Reconstructed; `error` is the deviation from the ground truth.
    Known {
        error: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound: Option<f64>,
    },
    /// Not recoverable from this record.
    Unrecoverable { reason: String },
    /// Not recoverable, but confined to an interval that contains the truth
    /// when `contains_truth` is set.
    Bounded {
        lo: f64,
        hi: f64,
        contains_truth: bool,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub label: String,
    #[serde(flatten)]
    pub status: EntryStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub system: String,
    pub provenance: BTreeMap<String, String>,
    #[serde(default)]
    pub metrics: Option<StateMetrics>,
    pub entries: Vec<EntryReport>,
    pub diagnostics: BTreeMap<String, Value>,
    pub timings: Vec<Timing>,
}

impl RunReport {
    pub fn new(method: &str, system: &str) -> Self {
        Self {
            method: method.into(),
            system: system.into(),
            provenance: BTreeMap::new(),
            metrics: None,
            entries: Vec::new(),
            diagnostics: BTreeMap::new(),
            timings: Vec::new(),
        }
    }

    pub fn diag(&mut self, key: &str, value: impl Serialize) {
        self.diagnostics.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub fn known(&mut self, label: String, error: f64, bound: Option<f64>) {
        self.entries.push(EntryReport {
            label,
            status: EntryStatus::Known { error, bound },
        });
    }

    pub fn unrecoverable(&mut self, label: String, reason: impl Into<String>) {
        self.entries.push(EntryReport {
            label,
            status: EntryStatus::Unrecoverable {
                reason: reason.into(),
            },
        });
    }

    pub fn max_error(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|e| match e.status {
                EntryStatus::Known { error, .. } => Some(error),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    /// Runs `f` and records its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}
