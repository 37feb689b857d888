//! Split evaluation with tiled inference and report files.

use std::path::Path;

use dinocount_core::eval::{Aggregate, EvalReport, EvalRow, Exclusion};
use dinocount_core::inference::{infer_tiled, DensityModel, InferenceConfig};
use dinocount_core::sample::SampleSource;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Runs tiled inference on every sample; a failing image becomes a failed
/// row rather than aborting the split.
pub fn evaluate_source(
    model: &dyn DensityModel,
    data: &dyn SampleSource,
    split: &str,
    inference: &InferenceConfig,
    exclusion: &Exclusion,
) -> Result<EvalReport> {
    use rayon::prelude::*;
    let rows: Vec<EvalRow> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let id = data.id(i);
            match data.get(i) {
                Err(e) => EvalRow::failed(id, 0, e.to_string()),
                Ok(s) => {
                    let gt = s.count() as u64;
                    match infer_tiled(&s.pixels, model, inference) {
                        Ok(p) => EvalRow::new(id, gt, p.count),
                        Err(e) => EvalRow::failed(id, gt, e.to_string()),
                    }
                }
            }
        })
        .collect();
    for r in rows.iter().filter(|r| r.failure.is_some()) {
        warn!("{}: {}", r.id, r.failure.as_deref().unwrap_or_default());
    }
    let report = EvalReport::build(split, rows, exclusion)?;
    for id in &report.unknown_exclusions {
        warn!("excluded id `{id}` is not in the {split} split");
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub id: String,
    pub gt: u64,
    pub pred: Option<f64>,
    pub abs_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
}

impl From<Aggregate> for AggregateRecord {
    fn from(a: Aggregate) -> Self {
        Self {
            mae: a.mae,
            rmse: a.rmse,
            n: a.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
    /// Aggregate after removing `excluded_ids`.
    pub excluded: AggregateRecord,
    pub excluded_ids: Vec<String>,
    pub failures: usize,
    pub checkpoint_id: String,
    pub config_hash: String,
}

/// On-disk evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub split: String,
    pub rows: Vec<RowRecord>,
    pub aggregates: Aggregates,
    #[serde(default)]
    pub unknown_exclusions: Vec<String>,
}

impl ReportFile {
    pub fn new(report: &EvalReport, checkpoint_id: &str, config_hash: &str) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            split: report.split.clone(),
            rows: report
                .rows
                .iter()
                .map(|r| RowRecord {
                    id: r.id.clone(),
                    gt: r.gt,
                    pred: r.pred,
                    abs_err: r.abs_err(),
                    failure: r.failure.clone(),
                })
                .collect(),
            aggregates: Aggregates {
                mae: report.all.mae,
                rmse: report.all.rmse,
                n: report.all.n,
                excluded: report.reduced.into(),
                excluded_ids: report.excluded_ids.clone(),
                failures: report.failures(),
                checkpoint_id: checkpoint_id.to_string(),
                config_hash: config_hash.to_string(),
            },
            unknown_exclusions: report.unknown_exclusions.clone(),
        }
    }

    /// Rebuilds the in-memory report, recomputing both aggregates from
    /// the rows.
    pub fn to_report(&self) -> Result<EvalReport> {
        let rows = self
            .rows
            .iter()
            .map(|r| EvalRow {
                id: r.id.clone(),
                gt: r.gt,
                pred: r.pred,
                failure: r.failure.clone(),
            })
            .collect();
        let ex = Exclusion {
            ids: self.aggregates.excluded_ids.clone(),
            top_k: 0,
        };
        Ok(EvalReport::build(self.split.clone(), rows, &ex)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::image_io::ensure_parent(path)?;
        std::fs::write(path, self.to_json()).map_err(Error::io(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let r: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::format(path, format!("unsupported report schema {}", r.schema_version)));
        }
        Ok(r)
    }
}
