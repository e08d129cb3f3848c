//! Hyperparameter search for both frameworks.
//!
//! Framework 1 (PCA -> GP -> PCA) sweeps one variance fraction shared by
//! the input and output codecs. Framework 2 (PCA -> NN -> PCA) draws
//! `(k1, k2, learning rate, decay, batch, width, depth, activation)`
//! configurations from a seeded sampler and evaluates them on a bounded
//! worker pool. Both select on the masked-field MSE of the validation set.
//! Every trial is a pure function of its configuration and seed, so records
//! and winners never depend on the worker count or completion order.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{Dataset, ModelBundle, SplitPlan, TrainingMeta};
use crate::error::{Error, Result};
use crate::fieldgen::FieldSample;
use crate::gp::{GpConfig, GpModel};
use crate::nn::{Activation, NnArch, NnModel, TrainConfig};
use crate::pca::{rows_to_matrix, Normalization, PcaCodec, Truncation};
use crate::pipeline::{apply_mask, field_mse, LatentRegressor, SurrogatePipeline};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Framework {
    #[serde(rename = "f1-gp")]
    F1Gp,
    #[serde(rename = "f2-nn")]
    F2Nn,
}

impl Framework {
    pub fn tag(self) -> &'static str {
        match self {
            Framework::F1Gp => "f1-gp",
            Framework::F2Nn => "f2-nn",
        }
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1-gp" | "f1" => Ok(Framework::F1Gp),
            "f2-nn" | "f2" => Ok(Framework::F2Nn),
            other => Err(Error::InvalidArgument(format!("unknown framework `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub variance_grid: Vec<f64>,
    pub k_in: (usize, usize),
    pub k_out: (usize, usize),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub decay: (f64, f64),
    pub batch_sizes: Vec<usize>,
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            variance_grid: vec![0.90, 0.93, 0.95, 0.97, 0.99],
            k_in: (2, 40),
            k_out: (2, 40),
            learning_rate: (1e-4, 1e-2),
            decay: (0.95, 1.0),
            batch_sizes: vec![8, 16, 32],
            widths: vec![32, 64, 128],
            depths: vec![2, 3, 4],
            activations: Activation::ALL.to_vec(),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("search space: {what}")));
        if self.variance_grid.is_empty() || self.variance_grid.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("variance grid must be non-empty with values in (0, 1]");
        }
        if self.k_in.0 < 1 || self.k_in.0 > self.k_in.1 || self.k_out.0 < 1 || self.k_out.0 > self.k_out.1 {
            return bad("component ranges must be non-empty and start at 1 or more");
        }
        if !(self.learning_rate.0 > 0.0 && self.learning_rate.0 <= self.learning_rate.1) {
            return bad("learning-rate range must be positive and ordered");
        }
        if !(self.decay.0 > 0.0 && self.decay.0 <= self.decay.1 && self.decay.1 <= 1.0) {
            return bad("decay range must lie in (0, 1]");
        }
        if self.batch_sizes.is_empty()
            || self.widths.is_empty()
            || self.depths.is_empty()
            || self.activations.is_empty()
        {
            return bad("categorical choices must be non-empty");
        }
        if self.batch_sizes.contains(&0) || self.widths.iter().any(|&w| w < 2) || self.depths.contains(&0) {
            return bad("batch sizes, widths and depths must be positive (width >= 2)");
        }
        Ok(())
    }

    /// Draws `n` configurations from one seeded stream.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<NnTrialConfig> {
        let mut rng = rng_from_seed(seed);
        let (lo, hi) = (self.learning_rate.0.ln(), self.learning_rate.1.ln());
        (0..n)
            .map(|_| NnTrialConfig {
                k_in: rng.random_range(self.k_in.0..=self.k_in.1),
                k_out: rng.random_range(self.k_out.0..=self.k_out.1),
                learning_rate: if hi > lo { rng.random_range(lo..hi).exp() } else { self.learning_rate.0 },
                decay: if self.decay.1 > self.decay.0 {
                    rng.random_range(self.decay.0..=self.decay.1)
                } else {
                    self.decay.0
                },
                batch_size: *self.batch_sizes.choose(&mut rng).unwrap(),
                width: *self.widths.choose(&mut rng).unwrap(),
                depth: *self.depths.choose(&mut rng).unwrap(),
                activation: *self.activations.choose(&mut rng).unwrap(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnTrialConfig {
    pub k_in: usize,
    pub k_out: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "framework")]
pub enum TrialConfig {
    #[serde(rename = "f1-gp")]
    F1 { variance_fraction: f64 },
    #[serde(rename = "f2-nn")]
    F2(NnTrialConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: usize,
    pub seed: u64,
    pub config: TrialConfig,
    /// Masked-field validation MSE; `None` for failed trials.
    pub objective: Option<f64>,
    /// Components actually kept by the two codecs.
    pub k_in: usize,
    pub k_out: usize,
    pub wall_time_s: f64,
    pub status: TrialStatus,
    pub message: Option<String>,
}

impl TrialRecord {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &TrialRecord) -> bool {
        self.id == other.id
            && self.seed == other.seed
            && self.config == other.config
            && self.objective.map(f64::to_bits) == other.objective.map(f64::to_bits)
            && (self.k_in, self.k_out) == (other.k_in, other.k_out)
            && self.status == other.status
            && self.message == other.message
    }
}

/// Matrices and sample views shared read-only by every trial.
pub struct TrialData<'a> {
    pub train: Vec<&'a FieldSample>,
    pub val: Vec<&'a FieldSample>,
    train_masks: DMatrix<f64>,
    train_stress: DMatrix<f64>,
    val_masks: DMatrix<f64>,
    val_stress: DMatrix<f64>,
}

impl<'a> TrialData<'a> {
    pub fn new(dataset: &'a Dataset, split: &SplitPlan) -> Result<Self> {
        if split.train.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 training samples, split has {}",
                split.train.len()
            )));
        }
        if split.val.is_empty() {
            return Err(Error::InvalidArgument("model selection needs a validation set".into()));
        }
        if let Some(&bad) = split.trainval().iter().chain(&split.test).find(|&&i| i >= dataset.len()) {
            return Err(Error::InvalidArgument(format!("split index {bad} outside dataset")));
        }
        let px = dataset.grid.len();
        let train = dataset.select(&split.train);
        let val = dataset.select(&split.val);
        Ok(TrialData {
            train_masks: rows_to_matrix(train.iter().map(|s| s.mask.as_slice()), px),
            train_stress: rows_to_matrix(train.iter().map(|s| s.stress.as_slice()), px),
            val_masks: rows_to_matrix(val.iter().map(|s| s.mask.as_slice()), px),
            val_stress: rows_to_matrix(val.iter().map(|s| s.stress.as_slice()), px),
            train,
            val,
        })
    }

    fn masked_predictions(&self, pipeline: &SurrogatePipeline, masks: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
        let raw = pipeline.predict_unmasked_rows(masks)?;
        Ok(raw
            .row_iter()
            .zip(masks.row_iter())
            .map(|(r, m)| {
                let r: Vec<f64> = r.iter().copied().collect();
                let m: Vec<f64> = m.iter().copied().collect();
                apply_mask(&r, &m)
            })
            .collect())
    }

    /// Masked-field MSE on the validation samples.
    pub fn val_mse(&self, pipeline: &SurrogatePipeline) -> Result<f64> {
        Ok(field_mse(&self.masked_predictions(pipeline, &self.val_masks)?, &self.val))
    }

    pub fn train_mse(&self, pipeline: &SurrogatePipeline) -> Result<f64> {
        Ok(field_mse(&self.masked_predictions(pipeline, &self.train_masks)?, &self.train))
    }
}

/// Fits the Framework-1 pipeline for one shared variance fraction.
pub fn fit_f1(data: &TrialData, fraction: f64, gp: &GpConfig) -> Result<SurrogatePipeline> {
    let input = PcaCodec::fit(&data.train_masks, Normalization::None, Truncation::VarianceFraction(fraction))?;
    let output = PcaCodec::fit(&data.train_stress, Normalization::CenterScale, Truncation::VarianceFraction(fraction))?;
    let z_in = input.encode_rows(&data.train_masks)?;
    let z_out = output.encode_rows(&data.train_stress)?;
    let model = GpModel::fit(&z_in, &z_out, gp)?;
    SurrogatePipeline::new(input, LatentRegressor::Gp(model), output, data.train[0].grid)
}

/// Training limits shared by every Framework-2 trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnBudget {
    pub max_epochs: usize,
    pub patience: Option<usize>,
}

impl Default for NnBudget {
    fn default() -> Self {
        NnBudget { max_epochs: 2000, patience: Some(50) }
    }
}

/// Fits the Framework-2 pipeline for one configuration; the network is
/// early-stopped on the validation latent MSE.
pub fn fit_f2(data: &TrialData, cfg: &NnTrialConfig, budget: &NnBudget, seed: u64) -> Result<SurrogatePipeline> {
    let cap = data.train.len() - 1;
    let input = PcaCodec::fit(&data.train_masks, Normalization::None, Truncation::Components(cfg.k_in.min(cap)))?;
    let output =
        PcaCodec::fit(&data.train_stress, Normalization::CenterScale, Truncation::Components(cfg.k_out.min(cap)))?;
    let z_in = input.encode_rows(&data.train_masks)?;
    let z_out = output.encode_rows(&data.train_stress)?;
    let v_in = input.encode_rows(&data.val_masks)?;
    let v_out = output.encode_rows(&data.val_stress)?;
    let arch =
        NnArch { input: input.k(), output: output.k(), depth: cfg.depth, width: cfg.width, activation: cfg.activation };
    let mut model = NnModel::init(arch, derive_seed(seed, 0))?;
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        decay: cfg.decay,
        batch_size: cfg.batch_size,
        max_epochs: budget.max_epochs,
        patience: budget.patience,
        seed: derive_seed(seed, 1),
    };
    model.train(&z_in, &z_out, Some((&v_in, &v_out)), &train_cfg)?;
    SurrogatePipeline::new(input, LatentRegressor::Nn(model), output, data.train[0].grid)
}

#[derive(Debug, Clone)]
pub struct RankedModel {
    pub record: TrialRecord,
    pub bundle: ModelBundle,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub framework: Framework,
    pub best: ModelBundle,
    pub best_record: TrialRecord,
    /// Best `m` trials by objective (ties by trial id), best first.
    pub top: Vec<RankedModel>,
    /// Every trial, ordered by id.
    pub records: Vec<TrialRecord>,
    pub wall_time_s: f64,
}

impl SearchOutcome {
    /// Best objective over done trials.
    pub fn best_objective(&self) -> f64 {
        self.best_record.objective.unwrap_or(f64::NAN)
    }

    pub fn write_records_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records_csv(&self.records, out)
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "framework": self.framework.tag(),
            "n_trials": self.records.len(),
            "n_failed": self.records.iter().filter(|r| r.status == TrialStatus::Failed).count(),
            "winner": {
                "id": self.best_record.id,
                "config": self.best_record.config,
                "k_in": self.best_record.k_in,
                "k_out": self.best_record.k_out,
                "objective": self.best_record.objective,
            },
            "top_ids": self.top.iter().map(|t| t.record.id).collect::<Vec<_>>(),
            "wall_time_s": self.wall_time_s,
        })
    }
}

pub fn write_records_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "seed",
        "status",
        "objective",
        "k_in",
        "k_out",
        "variance_fraction",
        "learning_rate",
        "decay",
        "batch_size",
        "width",
        "depth",
        "activation",
        "wall_time_s",
        "message",
    ])?;
    for r in records {
        let mut row = vec![
            r.id.to_string(),
            r.seed.to_string(),
            format!("{:?}", r.status).to_lowercase(),
            r.objective.map(|v| v.to_string()).unwrap_or_default(),
            r.k_in.to_string(),
            r.k_out.to_string(),
        ];
        match &r.config {
            TrialConfig::F1 { variance_fraction } => {
                row.push(variance_fraction.to_string());
                row.extend(std::iter::repeat_n(String::new(), 6));
            }
            TrialConfig::F2(c) => {
                row.push(String::new());
                row.extend([
                    c.learning_rate.to_string(),
                    c.decay.to_string(),
                    c.batch_size.to_string(),
                    c.width.to_string(),
                    c.depth.to_string(),
                    c.activation.to_string(),
                ]);
            }
        }
        row.push(r.wall_time_s.to_string());
        row.push(r.message.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<records>", e))?;
    Ok(())
}

/// Keeps the best `m` entries by `(objective, id)`.
struct TopCollector {
    m: usize,
    entries: Mutex<Vec<(f64, usize, SurrogatePipeline)>>,
}

impl TopCollector {
    fn offer(&self, objective: f64, id: usize, pipeline: SurrogatePipeline) {
        let mut e = self.entries.lock().unwrap();
        e.push((objective, id, pipeline));
        e.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        e.truncate(self.m);
    }
}

fn run_trials<F>(
    framework: Framework,
    configs: Vec<(TrialConfig, u64)>,
    n_workers: usize,
    top_m: usize,
    data: &TrialData,
    split: &SplitPlan,
    dataset_seed: u64,
    fit: F,
) -> Result<SearchOutcome>
where
    F: Fn(&TrialConfig, u64) -> Result<SurrogatePipeline> + Sync,
{
    if configs.is_empty() {
        return Err(Error::InvalidArgument("search needs at least one trial".into()));
    }
    if n_workers == 0 {
        return Err(Error::InvalidArgument("worker count must be at least 1".into()));
    }
    let started = Instant::now();
    let collector = TopCollector { m: top_m.max(1), entries: Mutex::new(Vec::new()) };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n_workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;

    let records: Vec<TrialRecord> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(id, (config, seed))| {
                let t0 = Instant::now();
                let result = catch_unwind(AssertUnwindSafe(|| -> Result<(f64, SurrogatePipeline)> {
                    let pipeline = fit(config, *seed)?;
                    let obj = data.val_mse(&pipeline)?;
                    if !obj.is_finite() {
                        return Err(Error::Numerical("non-finite validation objective".into()));
                    }
                    Ok((obj, pipeline))
                }));
                let wall = t0.elapsed().as_secs_f64();
                let (objective, k_in, k_out, status, message) = match result {
                    Ok(Ok((obj, pipeline))) => {
                        let ks = (pipeline.input_codec().k(), pipeline.output_codec().k());
                        collector.offer(obj, id, pipeline);
                        (Some(obj), ks.0, ks.1, TrialStatus::Done, None)
                    }
                    Ok(Err(e)) => (None, 0, 0, TrialStatus::Failed, Some(e.to_string())),
                    Err(panic) => {
                        let msg = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "worker panicked".into());
                        (None, 0, 0, TrialStatus::Failed, Some(format!("panic: {msg}")))
                    }
                };
                if let Some(m) = &message {
                    warn!("trial {id} failed: {m}");
                } else {
                    info!("trial {id}: objective {:.6e} ({wall:.2}s)", objective.unwrap());
                }
                TrialRecord {
                    id,
                    seed: *seed,
                    config: *config,
                    objective,
                    k_in,
                    k_out,
                    wall_time_s: wall,
                    status,
                    message,
                }
            })
            .collect()
    });

    let top_entries = collector.entries.into_inner().unwrap();
    if top_entries.is_empty() {
        return Err(Error::AllTrialsFailed(records.len()));
    }
    let best_record = records[top_entries[0].1].clone();
    let best_obj = best_record.objective.unwrap();
    assert!(
        records.iter().filter_map(|r| r.objective).all(|o| best_obj <= o),
        "reported best objective must be the minimum over done trials"
    );
    let top: Vec<RankedModel> = top_entries
        .into_iter()
        .map(|(_, id, pipeline)| {
            let record = records[id].clone();
            let train_mse = data.train_mse(&pipeline).ok();
            RankedModel {
                bundle: ModelBundle {
                    meta: TrainingMeta {
                        framework: framework.tag().to_string(),
                        split: Some(split.clone()),
                        dataset_seed: Some(dataset_seed),
                        hyperparameters: serde_json::json!({
                            "trial": record.id,
                            "seed": record.seed,
                            "config": record.config,
                            "k_in": record.k_in,
                            "k_out": record.k_out,
                        }),
                        train_mse,
                        val_mse: record.objective,
                    },
                    pipeline,
                },
                record,
            }
        })
        .collect();
    Ok(SearchOutcome {
        framework,
        best: top[0].bundle.clone(),
        best_record,
        top,
        records,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Framework 1: one trial per variance fraction; ties go to the smaller
/// fraction.
pub fn grid_search_f1(
    dataset: &Dataset,
    split: &SplitPlan,
    fractions: &[f64],
    gp: &GpConfig,
    n_workers: usize,
) -> Result<SearchOutcome> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("variance grid must not be empty".into()));
    }
    let data = TrialData::new(dataset, split)?;
    // Order trials by fraction so that id order breaks ties towards smaller f.
    let mut sorted: Vec<f64> = fractions.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let configs: Vec<(TrialConfig, u64)> =
        sorted.iter().map(|&f| (TrialConfig::F1 { variance_fraction: f }, gp.seed)).collect();
    run_trials(Framework::F1Gp, configs, n_workers, 1, &data, split, dataset.seed, |cfg, seed| match cfg {
        TrialConfig::F1 { variance_fraction } => fit_f1(&data, *variance_fraction, &GpConfig { seed, ..gp.clone() }),
        TrialConfig::F2(_) => unreachable!("framework 1 only runs variance-fraction trials"),
    })
}

/// Framework 2: `n_trials` seeded random configurations on `n_workers`
/// threads; keeps the best `top_m` models.
#[allow(clippy::too_many_arguments)]
pub fn random_search_f2(
    dataset: &Dataset,
    split: &SplitPlan,
    space: &SearchSpace,
    budget: &NnBudget,
    n_trials: usize,
    n_workers: usize,
    top_m: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let data = TrialData::new(dataset, split)?;
    let configs: Vec<(TrialConfig, u64)> = space
        .sample(n_trials, seed)
        .into_iter()
        .enumerate()
        .map(|(i, c)| (TrialConfig::F2(c), derive_seed(seed ^ 0x5EA2C4, i as u64)))
        .collect();
    run_trials(Framework::F2Nn, configs, n_workers, top_m, &data, split, dataset.seed, |cfg, s| match cfg {
        TrialConfig::F2(c) => fit_f2(&data, c, budget, s),
        TrialConfig::F1 { .. } => unreachable!("framework 2 only runs network trials"),
    })
}

/// Everything a search needs besides the data, for either framework.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "framework")]
pub enum SearchOptions {
    #[serde(rename = "f1-gp")]
    F1 { variance_grid: Vec<f64>, gp: GpConfig, n_workers: usize },
    #[serde(rename = "f2-nn")]
    F2 { space: SearchSpace, budget: NnBudget, n_trials: usize, n_workers: usize, top_m: usize, seed: u64 },
}

impl SearchOptions {
    pub fn framework(&self) -> Framework {
        match self {
            SearchOptions::F1 { .. } => Framework::F1Gp,
            SearchOptions::F2 { .. } => Framework::F2Nn,
        }
    }

    /// Defaults of each framework with the given seed.
    pub fn defaults(framework: Framework, seed: u64) -> Self {
        match framework {
            Framework::F1Gp => SearchOptions::F1 {
                variance_grid: SearchSpace::default().variance_grid,
                gp: GpConfig { seed, ..GpConfig::default() },
                n_workers: 1,
            },
            Framework::F2Nn => SearchOptions::F2 {
                space: SearchSpace::default(),
                budget: NnBudget::default(),
                n_trials: 200,
                n_workers: 1,
                top_m: 5,
                seed,
            },
        }
    }

    pub fn run(&self, dataset: &Dataset, split: &SplitPlan) -> Result<SearchOutcome> {
        match self {
            SearchOptions::F1 { variance_grid, gp, n_workers } => {
                grid_search_f1(dataset, split, variance_grid, gp, *n_workers)
            }
            SearchOptions::F2 { space, budget, n_trials, n_workers, top_m, seed } => {
                random_search_f2(dataset, split, space, budget, *n_trials, *n_workers, *top_m, *seed)
            }
        }
    }
}

/// Pixelwise mean and standard deviation of the members' unmasked
/// predictions, masked after averaging.
pub fn ensemble_predict(members: &[&SurrogatePipeline], mask: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = members.first().ok_or_else(|| Error::InvalidArgument("ensemble needs at least one member".into()))?;
    if members.iter().any(|m| m.grid() != first.grid()) {
        return Err(Error::Dimension("ensemble members disagree on the grid".into()));
    }
    let preds: Vec<Vec<f64>> = members.iter().map(|m| m.predict_unmasked(mask)).collect::<Result<_>>()?;
    let n = preds.len() as f64;
    let px = mask.len();
    // Shifted by the first member: identical members give exactly zero spread.
    let base = &preds[0];
    let mut mean = vec![0.0; px];
    for p in &preds[1..] {
        for ((m, v), b) in mean.iter_mut().zip(p).zip(base) {
            *m += v - b;
        }
    }
    mean.iter_mut().zip(base).for_each(|(m, b)| *m = b + *m / n);
    let mut spread = vec![0.0; px];
    for p in &preds {
        for ((s, v), m) in spread.iter_mut().zip(p).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    spread.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    Ok((apply_mask(&mean, mask), apply_mask(&spread, mask)))
}
