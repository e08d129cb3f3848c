//! End-to-end surrogate: mask image -> input PCA -> latent regressor ->
//! output PCA -> masking, plus the percentile error metrics.
//!
//! Error metric: for every test sample and every scalar statistic `s`
//! (average, maximum and the 50/90/97/99th percentiles, computed over
//! solid pixels only), `e = 100 |s(pred) - s(true)| / s(true)`; reported
//! values are means of `e` over samples.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldgen::{FieldSample, GridSpec};
use crate::gp::GpModel;
use crate::nn::NnModel;
use crate::pca::{rows_to_matrix, Normalization, PcaCodec};

/// Learned map between the two latent spaces.
#[derive(Debug, Clone)]
pub enum LatentRegressor {
    Gp(GpModel),
    Nn(NnModel),
    /// Pass-through, for diagnostics with a shared codec.
    Identity {
        dim: usize,
    },
}

impl LatentRegressor {
    pub fn input_dim(&self) -> usize {
        match self {
            LatentRegressor::Gp(m) => m.input_dim(),
            LatentRegressor::Nn(m) => m.arch().input,
            LatentRegressor::Identity { dim } => *dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            LatentRegressor::Gp(m) => m.output_dim(),
            LatentRegressor::Nn(m) => m.arch().output,
            LatentRegressor::Identity { dim } => *dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LatentRegressor::Gp(_) => "gp",
            LatentRegressor::Nn(_) => "nn",
            LatentRegressor::Identity { .. } => "identity",
        }
    }

    /// Point prediction for every row of `z`.
    pub fn predict(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            LatentRegressor::Gp(m) => Ok(m.predict(z)?.0),
            LatentRegressor::Nn(m) => m.forward(z),
            LatentRegressor::Identity { dim } => {
                if z.ncols() != *dim {
                    return Err(Error::Dimension(format!("latent has {} columns, expected {dim}", z.ncols())));
                }
                Ok(z.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurrogatePipeline {
    pub(crate) input: PcaCodec,
    pub(crate) regressor: LatentRegressor,
    pub(crate) output: PcaCodec,
    pub(crate) grid: GridSpec,
    pub(crate) mask_output: bool,
}

fn check_widths(input: &PcaCodec, regressor: &LatentRegressor, output: &PcaCodec, grid: &GridSpec) -> Result<()> {
    if input.k() != regressor.input_dim() || output.k() != regressor.output_dim() {
        return Err(Error::Dimension(format!(
            "codec widths {} -> {} do not match regressor {} -> {}",
            input.k(),
            output.k(),
            regressor.input_dim(),
            regressor.output_dim()
        )));
    }
    if input.n_pixels() != grid.len() || output.n_pixels() != grid.len() {
        return Err(Error::Dimension(format!(
            "codec pixel counts {} / {} do not match grid {}",
            input.n_pixels(),
            output.n_pixels(),
            grid.len()
        )));
    }
    Ok(())
}

impl SurrogatePipeline {
    pub fn new(input: PcaCodec, regressor: LatentRegressor, output: PcaCodec, grid: GridSpec) -> Result<Self> {
        check_widths(&input, &regressor, &output, &grid)?;
        if input.normalization() != Normalization::None || output.normalization() != Normalization::CenterScale {
            return Err(Error::InvalidArgument(
                "input codec must be unnormalized and output codec center+scale".into(),
            ));
        }
        Ok(SurrogatePipeline { input, regressor, output, grid, mask_output: true })
    }

    /// Diagnostic pipeline that encodes and decodes through one codec.
    pub fn self_map(codec: PcaCodec, grid: GridSpec) -> Result<Self> {
        let regressor = LatentRegressor::Identity { dim: codec.k() };
        check_widths(&codec, &regressor, &codec, &grid)?;
        Ok(SurrogatePipeline { input: codec.clone(), regressor, output: codec, grid, mask_output: false })
    }

    /// Rebuilds a pipeline from stored parts, checking widths only.
    pub(crate) fn from_parts(
        input: PcaCodec,
        regressor: LatentRegressor,
        output: PcaCodec,
        grid: GridSpec,
        mask_output: bool,
    ) -> Result<Self> {
        check_widths(&input, &regressor, &output, &grid)?;
        Ok(SurrogatePipeline { input, regressor, output, grid, mask_output })
    }

    pub fn with_masking(mut self, on: bool) -> Self {
        self.mask_output = on;
        self
    }

    pub fn input_codec(&self) -> &PcaCodec {
        &self.input
    }

    pub fn output_codec(&self) -> &PcaCodec {
        &self.output
    }

    pub fn regressor(&self) -> &LatentRegressor {
        &self.regressor
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn masks_output(&self) -> bool {
        self.mask_output
    }

    fn check_mask(&self, mask: &[f64]) -> Result<()> {
        if mask.len() != self.grid.len() {
            return Err(Error::Dimension(format!("mask has {} pixels, grid has {}", mask.len(), self.grid.len())));
        }
        if mask.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("mask must contain only 0 and 1".into()));
        }
        Ok(())
    }

    /// Decoded fields before masking, one row per input row.
    pub fn predict_unmasked_rows(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z_in = self.input.encode_rows(inputs)?;
        let z_out = self.regressor.predict(&z_in)?;
        self.output.decode_rows(&z_out)
    }

    /// Unmasked prediction for one mask.
    pub fn predict_unmasked(&self, mask: &[f64]) -> Result<Vec<f64>> {
        self.check_mask(mask)?;
        let m = DMatrix::from_row_slice(1, mask.len(), mask);
        Ok(self.predict_unmasked_rows(&m)?.row(0).iter().copied().collect())
    }

    pub fn predict_field(&self, mask: &[f64]) -> Result<Vec<f64>> {
        let raw = self.predict_unmasked(mask)?;
        Ok(if self.mask_output { apply_mask(&raw, mask) } else { raw })
    }

    /// Predictions for many masks at once.
    pub fn predict_fields(&self, masks: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        for m in masks {
            self.check_mask(m)?;
        }
        if masks.is_empty() {
            return Ok(Vec::new());
        }
        let x = rows_to_matrix(masks.iter().copied(), self.grid.len());
        let raw = self.predict_unmasked_rows(&x)?;
        Ok(masks
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let row: Vec<f64> = raw.row(i).iter().copied().collect();
                if self.mask_output {
                    apply_mask(&row, m)
                } else {
                    row
                }
            })
            .collect())
    }

    /// Encodes an arbitrary field through the input codec and decodes the
    /// regressed latent; no mask checks. Used by diagnostics.
    pub fn map_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.predict_unmasked_rows(&m)?.row(0).iter().copied().collect())
    }
}

/// Elementwise product of a field with a 0/1 mask.
pub fn apply_mask(stress: &[f64], mask: &[f64]) -> Vec<f64> {
    stress.iter().zip(mask).map(|(&s, &m)| if m == 0.0 { 0.0 } else { s * m }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Statistic {
    Average,
    Maximum,
    /// Percentile in `[0, 100]`.
    Percentile(f64),
}

/// Column order of every report: Average, Maximum, 50th, 90th, 97th, 99th.
pub const REPORT_STATS: [Statistic; 6] = [
    Statistic::Average,
    Statistic::Maximum,
    Statistic::Percentile(50.0),
    Statistic::Percentile(90.0),
    Statistic::Percentile(97.0),
    Statistic::Percentile(99.0),
];

pub const REPORT_COLUMNS: [&str; 6] = ["average", "maximum", "p50", "p90", "p97", "p99"];

/// Linear interpolation between order statistics of sorted values.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn solid_values(field: &[f64], mask: &[f64]) -> Result<Vec<f64>> {
    if field.len() != mask.len() {
        return Err(Error::Dimension(format!("field has {} pixels, mask {}", field.len(), mask.len())));
    }
    let vals: Vec<f64> = field.iter().zip(mask).filter(|(_, &m)| m != 0.0).map(|(&v, _)| v).collect();
    if vals.is_empty() {
        return Err(Error::InvalidArgument("mask has no solid pixels".into()));
    }
    Ok(vals)
}

/// Statistic of `field` over the solid pixels of `mask`.
pub fn field_statistic(field: &[f64], mask: &[f64], stat: Statistic) -> Result<f64> {
    let vals = solid_values(field, mask)?;
    Ok(statistics_of(vals, &[stat])[0])
}

fn statistics_of(mut vals: Vec<f64>, stats: &[Statistic]) -> Vec<f64> {
    vals.sort_by(|a, b| a.total_cmp(b));
    stats
        .iter()
        .map(|s| match *s {
            Statistic::Average => vals.iter().sum::<f64>() / vals.len() as f64,
            Statistic::Maximum => *vals.last().unwrap(),
            Statistic::Percentile(q) => percentile_sorted(&vals, q.clamp(0.0, 100.0)),
        })
        .collect()
}

/// The six report statistics of one field.
pub fn report_statistics(field: &[f64], mask: &[f64]) -> Result<[f64; 6]> {
    let vals = solid_values(field, mask)?;
    let v = statistics_of(vals, &REPORT_STATS);
    Ok([v[0], v[1], v[2], v[3], v[4], v[5]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    /// Caller-supplied sample identifier (dataset index).
    pub id: usize,
    /// Percent errors in `REPORT_COLUMNS` order.
    pub errors: [f64; 6],
    /// `||pred - true||_2 / ||true||_2` over all pixels.
    pub rel_l2: f64,
    /// Mean squared field error over all pixels.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Mean over samples of the percent error of each statistic.
    pub mean_errors: [f64; 6],
    pub per_sample: Vec<SampleError>,
    pub best: usize,
    pub worst: usize,
    pub definition: String,
}

pub const METRIC_DEFINITION: &str = "mean over samples of 100*|s(pred)-s(true)|/s(true), statistics over solid pixels";

impl ErrorReport {
    pub fn from_fields(ids: &[usize], predictions: &[Vec<f64>], truths: &[&FieldSample]) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::InvalidArgument("error report needs at least one sample".into()));
        }
        if predictions.len() != truths.len() || ids.len() != truths.len() {
            return Err(Error::Dimension("prediction and sample counts differ".into()));
        }
        let per_sample: Vec<SampleError> = predictions
            .par_iter()
            .zip(truths.par_iter())
            .zip(ids.par_iter())
            .map(|((pred, truth), &id)| sample_error(id, pred, truth))
            .collect::<Result<_>>()?;
        let n = per_sample.len() as f64;
        let mut mean_errors = [0.0; 6];
        for s in &per_sample {
            for (m, e) in mean_errors.iter_mut().zip(s.errors) {
                *m += e;
            }
        }
        mean_errors.iter_mut().for_each(|m| *m /= n);
        let best = per_sample.iter().min_by(|a, b| a.rel_l2.total_cmp(&b.rel_l2)).map(|s| s.id).unwrap();
        let worst = per_sample.iter().max_by(|a, b| a.rel_l2.total_cmp(&b.rel_l2)).map(|s| s.id).unwrap();
        Ok(ErrorReport { mean_errors, per_sample, best, worst, definition: METRIC_DEFINITION.to_string() })
    }

    /// Mean squared field error averaged over samples.
    pub fn mse(&self) -> f64 {
        self.per_sample.iter().map(|s| s.mse).sum::<f64>() / self.per_sample.len() as f64
    }

    /// `sample_stat,average,maximum,p50,p90,p97,p99`: one `mean` row, then
    /// one row per sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_stat"];
        header.extend(REPORT_COLUMNS);
        w.write_record(&header)?;
        let row = |label: String, vals: &[f64; 6]| {
            let mut r = vec![label];
            r.extend(vals.iter().map(|v| v.to_string()));
            r
        };
        w.write_record(row("mean".into(), &self.mean_errors))?;
        for s in &self.per_sample {
            w.write_record(row(format!("sample_{}", s.id), &s.errors))?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }
}

fn sample_error(id: usize, pred: &[f64], truth: &FieldSample) -> Result<SampleError> {
    if pred.len() != truth.stress.len() {
        return Err(Error::Dimension(format!("prediction has {} pixels, sample {}", pred.len(), truth.stress.len())));
    }
    let s_true = report_statistics(&truth.stress, &truth.mask)?;
    let s_pred = report_statistics(pred, &truth.mask)?;
    let mut errors = [0.0; 6];
    for i in 0..6 {
        assert!(s_true[i] > 0.0, "statistic of a positive stress field must be positive");
        errors[i] = 100.0 * (s_pred[i] - s_true[i]).abs() / s_true[i];
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(&truth.stress) {
        num += (p - t) * (p - t);
        den += t * t;
    }
    Ok(SampleError { id, errors, rel_l2: (num / den).sqrt(), mse: num / pred.len() as f64 })
}

/// Predicts every sample and scores it.
pub fn error_report(pipeline: &SurrogatePipeline, samples: &[&FieldSample], ids: &[usize]) -> Result<ErrorReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("error report needs at least one sample".into()));
    }
    let masks: Vec<&[f64]> = samples.iter().map(|s| s.mask.as_slice()).collect();
    let preds = pipeline.predict_fields(&masks)?;
    ErrorReport::from_fields(ids, &preds, samples)
}

/// Mean squared error over all pixels and samples.
pub fn field_mse(predictions: &[Vec<f64>], truths: &[&FieldSample]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, t) in predictions.iter().zip(truths) {
        for (a, b) in p.iter().zip(&t.stress) {
            total += (a - b) * (a - b);
        }
        count += p.len();
    }
    total / count.max(1) as f64
}

/// Horizontal and vertical center-line cuts of the true and predicted
/// fields as `axis,index,coordinate,true,predicted` rows.
pub fn write_cross_sections<W: Write>(out: W, grid: &GridSpec, truth: &[f64], pred: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis", "index", "coordinate", "true", "predicted"])?;
    let row = grid.ny / 2;
    for col in 0..grid.nx {
        let (x, _) = grid.pixel_center(row, col);
        let i = row * grid.nx + col;
        w.write_record([
            "horizontal".to_string(),
            col.to_string(),
            x.to_string(),
            truth[i].to_string(),
            pred[i].to_string(),
        ])?;
    }
    let col = grid.nx / 2;
    for row in 0..grid.ny {
        let (_, z) = grid.pixel_center(row, col);
        let i = row * grid.nx + col;
        w.write_record([
            "vertical".to_string(),
            row.to_string(),
            z.to_string(),
            truth[i].to_string(),
            pred[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<cross-section>", e))?;
    Ok(())
}
