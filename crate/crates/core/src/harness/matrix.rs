use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use super::config::{ExperimentConfig, Setting};
use super::record::{CategoryReports, RestartResult, RunRecord};
use crate::corpus::Category;
use crate::error::{Error, Result};
use crate::evaluation::{average_reports, render_comparison, Comparison, EvalReport};

/// The stages a setting is built from. `transfer` starts from the model
/// returned by `fine_tune`; `evaluate` scores a model on one category's
/// test split, optionally through the nearest-neighbour decoder.
pub trait Stages {
    type Model;
    fn fine_tune(&mut self, restart: u64) -> Result<Self::Model>;
    fn transfer(&mut self, base: &Self::Model, restart: u64) -> Result<Self::Model>;
    fn evaluate(&mut self, model: &Self::Model, category: Category, structshot: bool, restart: u64) -> Result<EvalReport>;
}

#[derive(Debug, Clone)]
pub struct MatrixResult {
    pub rows: Vec<(Setting, RunRecord)>,
    pub comparison: Comparison,
}

/// Runs every configured setting. Per restart the fine-tuned model is built
/// once and the transferred model once, and shared by the settings that
/// need them. Row order is always FT, FT+SS, FT+TL, FT+TL+SS.
pub fn run_setting_matrix<S: Stages>(config: &ExperimentConfig, stages: &mut S) -> Result<MatrixResult> {
    config.validate()?;
    let settings = config.ordered_settings();
    let categories: Vec<Category> = config
        .transfer
        .as_ref()
        .map(|t| t.categories.clone())
        .unwrap_or_else(|| Category::TRANSFER_TARGETS.to_vec());
    let needs_tl = settings.iter().any(|s| s.uses_transfer());
    let started = Instant::now();

    // results[setting][restart] = per-category reports or an error
    let mut results: BTreeMap<Setting, Vec<Result<Vec<EvalReport>, String>>> = BTreeMap::new();
    for r in 0..config.restarts as u64 {
        let ft = stages.fine_tune(r);
        let tl = match (&ft, needs_tl) {
            (Ok(m), true) => Some(stages.transfer(m, r)),
            _ => None,
        };
        for &s in &settings {
            let model = if s.uses_transfer() {
                tl.as_ref().expect("transfer ran").as_ref().map_err(|e| e.to_string())
            } else {
                ft.as_ref().map_err(|e| e.to_string())
            };
            let out = match model {
                Err(e) => Err(e),
                Ok(m) => categories
                    .iter()
                    .map(|&c| stages.evaluate(m, c, s.uses_structshot(), r).map_err(|e| format!("{c}: {e}")))
                    .collect(),
            };
            results.entry(s).or_default().push(out);
        }
    }
    let seconds = started.elapsed().as_secs_f64();

    let mut rows = Vec::with_capacity(settings.len());
    for s in settings {
        let runs = &results[&s];
        let restarts = runs
            .iter()
            .enumerate()
            .map(|(r, out)| {
                let rep = match out {
                    Ok(reps) => average_reports(reps),
                    Err(e) => Err(Error::domain(e.clone())),
                };
                RestartResult::from_result(r as u64, config.training.seed + r as u64, rep)
            })
            .collect();
        let mut cfg = serde_json::to_value(config)?;
        cfg["setting"] = serde_json::json!(s.name());
        let mut rec = RunRecord::new(s.name(), cfg, restarts, seconds);
        rec.per_category = categories
            .iter()
            .enumerate()
            .map(|(i, &c)| CategoryReports {
                category: c,
                restarts: runs.iter().map(|o| o.as_ref().ok().map(|v| v[i])).collect(),
            })
            .collect();
        rows.push((s, rec));
    }
    let table: Vec<(String, EvalReport)> = rows
        .iter()
        .map(|(s, rec)| Ok((s.name().to_string(), rec.mean_report()?)))
        .collect::<Result<_>>()
        .map_err(|e| Error::domain(format!("a setting has no successful restart: {e}")))?;
    Ok(MatrixResult {
        comparison: render_comparison(&table),
        rows,
    })
}

pub fn write_matrix(dir: &Path, result: &MatrixResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("matrix.csv"), &result.comparison.csv)?;
    std::fs::write(dir.join("matrix.txt"), &result.comparison.text)?;
    let records: Vec<&RunRecord> = result.rows.iter().map(|(_, r)| r).collect();
    std::fs::write(dir.join("records.json"), serde_json::to_string_pretty(&records)? + "\n")?;
    Ok(())
}

/// Re-renders the comparison table from a directory written by
/// [`write_matrix`].
pub fn rerender_matrix(dir: &Path) -> Result<Comparison> {
    let path = dir.join("records.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
    let records: Vec<RunRecord> = serde_json::from_str(&text)?;
    let table: Vec<(String, EvalReport)> = records
        .iter()
        .map(|r| Ok((r.label.clone(), r.mean_report()?)))
        .collect::<Result<_>>()?;
    Ok(render_comparison(&table))
}
