//! Training-size study: one full search per train+validation size against
//! a shared test set, with nested training pools.

use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::datastore::{make_split, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::{error_report, ErrorReport, REPORT_COLUMNS};
use crate::search::{Framework, SearchOptions};

pub const DEFAULT_SIZES: [usize; 5] = [100, 80, 60, 40, 20];
pub const DEFAULT_TEST_SIZE: usize = 150;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    /// Train + validation count.
    pub size: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub report: Option<ErrorReport>,
    pub val_objective: Option<f64>,
    pub winner: Option<serde_json::Value>,
    /// Set when this size failed; other rows are unaffected.
    pub error: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeStudy {
    pub framework: Framework,
    pub split_seed: u64,
    pub n_test: usize,
    pub rows: Vec<StudyRow>,
}

impl SizeStudy {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }

    pub fn row(&self, size: usize) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.size == size)
    }

    /// `size,average,maximum,p50,p90,p97,p99,status`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["size"];
        header.extend(REPORT_COLUMNS);
        header.push("status");
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.size.to_string()];
            match &r.report {
                Some(rep) => rec.extend(rep.mean_errors.iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), 6)),
            }
            rec.push(match &r.error {
                None => "ok".to_string(),
                Some(e) => format!("failed: {e}"),
            });
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<study>", e))?;
        Ok(())
    }
}

/// Runs `options` once per size. The test set (`n_test` samples) is shared
/// and every smaller pool is a subset of every larger one.
pub fn size_study(
    dataset: &Dataset,
    sizes: &[usize],
    n_test: usize,
    split_seed: u64,
    options: &SearchOptions,
) -> Result<SizeStudy> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("size study needs at least one size".into()));
    }
    let largest = *sizes.iter().max().unwrap();
    if largest + n_test > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "largest size {largest} plus {n_test} test samples exceeds {} samples",
            dataset.len()
        )));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let t0 = Instant::now();
        let split = make_split(dataset.len(), size, n_test, split_seed)?;
        let result = options.run(dataset, &split).and_then(|outcome| {
            let report = error_report(&outcome.best.pipeline, &dataset.select(&split.test), &split.test)?;
            Ok((outcome, report))
        });
        let row = match result {
            Ok((outcome, report)) => {
                info!("size {size}: average error {:.3} %", report.mean_errors[0]);
                StudyRow {
                    size,
                    n_train: split.train.len(),
                    n_val: split.val.len(),
                    val_objective: outcome.best_record.objective,
                    winner: Some(outcome.best.meta.hyperparameters.clone()),
                    report: Some(report),
                    error: None,
                    wall_time_s: t0.elapsed().as_secs_f64(),
                }
            }
            Err(e) => {
                warn!("size {size} failed: {e}");
                StudyRow {
                    size,
                    n_train: split.train.len(),
                    n_val: split.val.len(),
                    report: None,
                    val_objective: None,
                    winner: None,
                    error: Some(e.to_string()),
                    wall_time_s: t0.elapsed().as_secs_f64(),
                }
            }
        };
        rows.push(row);
    }
    Ok(SizeStudy { framework: options.framework(), split_seed, n_test, rows })
}
