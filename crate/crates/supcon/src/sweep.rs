//! One-axis sweeps over temperature, augmentation policy or loss variant.
//!
//! Every point runs stage 1, feature extraction and stage 2 in memory on the
//! same split with the run seed, so points differ only in the swept value.
//! A failing point becomes an error row; the others still run.

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SweepAxis, SweepSpec};
use crate::error::{Error, Result};
use crate::io::{write_bytes, write_json};
use crate::manifest::Recorder;
use crate::pipeline::{load_split_images, run_supcon, Layout, SplitImages, WallClock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub val_f1: Option<f64>,
    pub best_epoch: Option<usize>,
    pub wall_clock_s: f64,
    pub best: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    /// Sorted by validation F1, highest first; failed points last.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.best)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let bad = |e: csv::Error| Error::format("results.csv", e);
        w.write_record(["axis", "value", "val_f1", "best_epoch", "wall_clock_s", "best", "error"]).map_err(bad)?;
        for r in &self.rows {
            w.write_record([
                self.axis.to_string(),
                r.value.clone(),
                r.val_f1.map(|v| v.to_string()).unwrap_or_default(),
                r.best_epoch.map(|v| v.to_string()).unwrap_or_default(),
                format!("{:.3}", r.wall_clock_s),
                r.best.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(bad)?;
        }
        w.into_inner().map_err(|e| Error::format("results.csv", e))
    }
}

/// Runs every point of `spec` against `base` on already loaded data.
pub fn run_sweep(base: &RunConfig, spec: &SweepSpec, data: &SplitImages) -> Result<SweepTable> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.values.len());
    for value in &spec.values {
        let clock = WallClock::start();
        let result = spec.apply(base, value).and_then(|cfg| {
            cfg.validate()?;
            run_supcon(&cfg, data, &clock)
        });
        let wall_clock_s = supcon_core::train::Clock::seconds(&clock);
        let row = match result {
            Ok(run) => {
                log::info!("sweep {}={value}: val F1 {:.4}", spec.axis, run.stage2.best_f1);
                SweepRow {
                    value: value.to_string(),
                    val_f1: Some(run.stage2.best_f1),
                    best_epoch: Some(run.stage2.best_epoch),
                    wall_clock_s,
                    best: false,
                    error: None,
                }
            }
            Err(e) => {
                log::error!("sweep {}={value} failed: {e}", spec.axis);
                SweepRow { value: value.to_string(), val_f1: None, best_epoch: None, wall_clock_s, best: false, error: Some(e.to_string()) }
            }
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| match (a.val_f1, b.val_f1) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    if let Some(first) = rows.first_mut().filter(|r| r.val_f1.is_some()) {
        first.best = true;
    }
    Ok(SweepTable { axis: spec.axis, rows })
}

/// Runs the configured sweep and writes `sweep/results.{csv,json}`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepTable> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| Error::config("sweep", "no [sweep] table in the config"))?;
    let layout = Layout::new(&cfg.outdir);
    let mut rec = Recorder::new(&cfg.outdir, "sweep", "sweep", cfg.hash(), cfg.seed);
    rec.input(&layout.split_csv(), "split manifest (run `split` first)")?;
    let data = load_split_images(cfg)?;
    let table = run_sweep(cfg, spec, &data)?;
    let dir = layout.dir("sweep");
    let (csv_path, json_path) = (dir.join("results.csv"), dir.join("results.json"));
    write_bytes(&csv_path, &table.to_csv()?)?;
    write_json(&json_path, &table)?;
    rec.output(&csv_path)?;
    rec.output(&json_path)?;
    rec.finish()?;
    Ok(table)
}
