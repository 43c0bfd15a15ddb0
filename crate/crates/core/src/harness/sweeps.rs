use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::TransferMode;
use super::record::{metric_values, CategoryReports, RestartResult, RunRecord, METRIC_NAMES};
use super::rundir::cached_or_run;
use crate::corpus::Category;
use crate::error::{Error, Result};
use crate::evaluation::{average_reports, EvalReport};

pub const DEFAULT_PROPORTIONS: [f64; 10] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10];
pub const DEFAULT_COUNTS: [usize; 4] = [32, 64, 128, 256];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub restarts: usize,
    pub base_seed: u64,
    /// Cell results and markers go under this directory when set.
    pub out_dir: Option<PathBuf>,
    pub force: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            restarts: 10,
            base_seed: crate::sampling::DEFAULT_SEED,
            out_dir: None,
            force: false,
        }
    }
}

impl SweepOptions {
    fn cell(&self, parts: &[String]) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| parts.iter().fold(d.join("cells"), |p, s| p.join(s)))
    }
}

/// Config snapshot as a JSON object (non-objects are wrapped).
fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    match serde_json::to_value(v) {
        Ok(o @ serde_json::Value::Object(_)) => o,
        Ok(other) => serde_json::json!({ "config": other }),
        Err(_) => serde_json::json!({}),
    }
}

/// One record per proportion, in input order. `cell(p, restart)` trains and
/// evaluates one restart; its failure is recorded and the sweep goes on.
pub fn run_finetune_sweep<C, F>(proportions: &[f64], config: &C, opts: &SweepOptions, mut cell: F) -> Result<Vec<RunRecord>>
where
    C: Serialize,
    F: FnMut(f64, u64) -> Result<EvalReport>,
{
    if proportions.is_empty() || opts.restarts == 0 {
        return Err(Error::Config("sweep needs proportions and restarts".into()));
    }
    if let Some(p) = proportions.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::Config(format!("proportion {p} outside (0, 1]")));
    }
    let mut records = Vec::with_capacity(proportions.len());
    for &p in proportions {
        let started = Instant::now();
        let restarts = (0..opts.restarts as u64)
            .map(|r| {
                let dir = opts.cell(&[format!("p{p:.4}"), format!("restart-{r}")]);
                let out = cached_or_run(dir.as_deref(), opts.force, || cell(p, r));
                if let Err(e) = &out {
                    log::error!("proportion {p} restart {r} failed: {e}");
                }
                RestartResult::from_result(r, opts.base_seed + r, out)
            })
            .collect();
        let mut cfg = to_value(config);
        cfg["proportion"] = serde_json::json!(p);
        records.push(RunRecord::new(format!("{p:.4}"), cfg, restarts, started.elapsed().as_secs_f64()));
    }
    if let Some(dir) = &opts.out_dir {
        write_sweep(dir, "sweep_ft", "proportion", &records)?;
    }
    Ok(records)
}

/// One record per count. In aggregate mode `cell(count, categories, restart)`
/// is called once with every category; in individual mode once per
/// category. Either way the cell returns a test report per category it was
/// given.
pub fn run_transfer_sweep<C, F>(
    counts: &[usize],
    mode: TransferMode,
    categories: &[Category],
    config: &C,
    opts: &SweepOptions,
    mut cell: F,
) -> Result<Vec<RunRecord>>
where
    C: Serialize,
    F: FnMut(usize, &[Category], u64) -> Result<Vec<(Category, EvalReport)>>,
{
    if counts.is_empty() || categories.is_empty() || opts.restarts == 0 {
        return Err(Error::Config("sweep needs counts, categories and restarts".into()));
    }
    let mut records = Vec::with_capacity(counts.len());
    for &count in counts {
        let started = Instant::now();
        let mut per_cat: Vec<CategoryReports> = categories
            .iter()
            .map(|&c| CategoryReports {
                category: c,
                restarts: Vec::new(),
            })
            .collect();
        let mut restarts = Vec::with_capacity(opts.restarts);
        for r in 0..opts.restarts as u64 {
            let groups: Vec<Vec<Category>> = match mode {
                TransferMode::Aggregate => vec![categories.to_vec()],
                TransferMode::Individual => categories.iter().map(|&c| vec![c]).collect(),
            };
            let mut got: Vec<(Category, EvalReport)> = Vec::new();
            let mut errors = Vec::new();
            for group in &groups {
                let name = match mode {
                    TransferMode::Aggregate => "aggregate".to_string(),
                    TransferMode::Individual => group[0].name().to_string(),
                };
                let dir = opts.cell(&[format!("n{count}"), name.clone(), format!("restart-{r}")]);
                match cached_or_run(dir.as_deref(), opts.force, || cell(count, group, r)) {
                    Ok(reports) => got.extend(reports),
                    Err(e) => {
                        log::error!("count {count} {name} restart {r} failed: {e}");
                        errors.push(format!("{name}: {e}"));
                    }
                }
            }
            for pc in &mut per_cat {
                pc.restarts.push(got.iter().find(|(c, _)| *c == pc.category).map(|(_, r)| *r));
            }
            let outcome = if !errors.is_empty() {
                Err(Error::domain(errors.join("; ")))
            } else if got.len() != categories.len() {
                Err(Error::domain(format!(
                    "expected {} category reports, got {}",
                    categories.len(),
                    got.len()
                )))
            } else {
                let reps: Vec<EvalReport> = got.iter().map(|(_, r)| *r).collect();
                average_reports(&reps)
            };
            restarts.push(RestartResult::from_result(r, opts.base_seed + r, outcome));
        }
        let mut cfg = to_value(config);
        cfg["count"] = serde_json::json!(count);
        cfg["mode"] = serde_json::to_value(mode)?;
        let mut rec = RunRecord::new(count.to_string(), cfg, restarts, started.elapsed().as_secs_f64());
        rec.per_category = per_cat;
        records.push(rec);
    }
    if let Some(dir) = &opts.out_dir {
        write_sweep(dir, "sweep_tl", "count", &records)?;
        std::fs::write(dir.join("sweep_tl_categories.csv"), render_category_csv(&records))?;
    }
    Ok(records)
}

fn push_metrics(out: &mut String, v: Option<[f64; 7]>) {
    for k in 0..7 {
        match v {
            Some(v) if !v[k].is_nan() => {
                let _ = write!(out, ",{:.4}", v[k]);
            }
            _ => out.push(','),
        }
    }
    out.push('\n');
}

/// Rows `key,restart-i,...` for every restart followed by `key,mean,...`
/// and `key,std,...`.
pub fn render_sweep_csv(key: &str, records: &[RunRecord]) -> String {
    let mut out = format!("{key},row,{}\n", METRIC_NAMES.join(","));
    for rec in records {
        for r in &rec.restarts {
            let _ = write!(out, "{},restart-{}", rec.label, r.restart);
            push_metrics(&mut out, r.report.as_ref().map(metric_values));
        }
        for (name, v) in [("mean", rec.summary.map(|s| s.mean)), ("std", rec.summary.map(|s| s.std))] {
            let _ = write!(out, "{},{name}", rec.label);
            push_metrics(&mut out, v);
        }
    }
    out
}

/// Per-category mean over restarts, one row per (record, category).
pub fn render_category_csv(records: &[RunRecord]) -> String {
    let mut out = format!("count,category,{}\n", METRIC_NAMES.join(","));
    for rec in records {
        for pc in &rec.per_category {
            let reps: Vec<EvalReport> = pc.restarts.iter().flatten().copied().collect();
            let _ = write!(out, "{},{}", rec.label, pc.category);
            push_metrics(&mut out, super::record::summarize(&reps).map(|s| s.mean));
        }
    }
    out
}

fn write_sweep(dir: &Path, stem: &str, key: &str, records: &[RunRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), render_sweep_csv(key, records))?;
    std::fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(records)? + "\n",
    )?;
    Ok(())
}
