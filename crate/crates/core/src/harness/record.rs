use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Category;
use crate::error::{Error, Result};
use crate::evaluation::{average_reports, weighted_f1, EvalReport};

pub const METRIC_NAMES: [&str; 7] = [
    "sn_precision",
    "sn_recall",
    "sn_f1",
    "sv_precision",
    "sv_recall",
    "sv_f1",
    "weighted_f1",
];

/// The seven headline numbers of a report; weighted F1 is NaN when undefined.
pub fn metric_values(r: &EvalReport) -> [f64; 7] {
    [
        r.sn.precision,
        r.sn.recall,
        r.sn.f1,
        r.sv.precision,
        r.sv.recall,
        r.sv.f1,
        weighted_f1(r).unwrap_or(f64::NAN),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    #[serde(with = "nullable")]
    pub mean: [f64; 7],
    /// Sample standard deviation (zero for a single value).
    #[serde(with = "nullable")]
    pub std: [f64; 7],
    pub n: usize,
}

pub fn summarize(reports: &[EvalReport]) -> Option<MetricSummary> {
    if reports.is_empty() {
        return None;
    }
    let vals: Vec<[f64; 7]> = reports.iter().map(metric_values).collect();
    let n = vals.len() as f64;
    let mut mean = [0.0; 7];
    let mut std = [0.0; 7];
    for k in 0..7 {
        mean[k] = vals.iter().map(|v| v[k]).sum::<f64>() / n;
        if vals.len() > 1 {
            let ss: f64 = vals.iter().map(|v| (v[k] - mean[k]).powi(2)).sum();
            std[k] = (ss / (n - 1.0)).sqrt();
        }
    }
    Some(MetricSummary {
        mean,
        std,
        n: vals.len(),
    })
}

/// NaN entries travel as JSON `null`.
mod nullable {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; 7], s: S) -> Result<S::Ok, S::Error> {
        v.map(|x| if x.is_nan() { None } else { Some(x) }).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 7], D::Error> {
        let v = <[Option<f64>; 7]>::deserialize(d)?;
        Ok(v.map(|x| x.unwrap_or(f64::NAN)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub restart: u64,
    pub seed: u64,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

impl RestartResult {
    pub fn from_result(restart: u64, seed: u64, r: Result<EvalReport>) -> Self {
        match r {
            Ok(report) => RestartResult {
                restart,
                seed,
                report: Some(report),
                error: None,
            },
            Err(e) => RestartResult {
                restart,
                seed,
                report: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReports {
    pub category: Category,
    pub restarts: Vec<Option<EvalReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub sampling_generator: String,
}

impl Fingerprint {
    pub fn current() -> Self {
        Fingerprint {
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            sampling_generator: crate::sampling::GENERATOR.to_string(),
        }
    }
}

/// One experiment cell: a report per restart plus their mean and spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub config: serde_json::Value,
    pub restarts: Vec<RestartResult>,
    pub summary: Option<MetricSummary>,
    /// Per-category reports for cells evaluated on several categories.
    pub per_category: Vec<CategoryReports>,
    pub seconds: f64,
    pub environment: Fingerprint,
}

impl RunRecord {
    pub fn new(label: impl Into<String>, config: serde_json::Value, restarts: Vec<RestartResult>, seconds: f64) -> Self {
        let reports: Vec<EvalReport> = restarts.iter().filter_map(|r| r.report).collect();
        RunRecord {
            label: label.into(),
            config,
            summary: summarize(&reports),
            restarts,
            per_category: Vec::new(),
            seconds,
            environment: Fingerprint::current(),
        }
    }

    pub fn reports(&self) -> Vec<EvalReport> {
        self.restarts.iter().filter_map(|r| r.report).collect()
    }

    /// Macro average of the successful restarts.
    pub fn mean_report(&self) -> Result<EvalReport> {
        average_reports(&self.reports())
    }

    pub fn failures(&self) -> usize {
        self.restarts.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))
    }
}
