//! Batch command surface: `generate`, `fit`, `evaluate` and `study`.
//!
//! Every command resolves its configuration as defaults < `--config` JSON
//! < flags, validates paths before computing anything, and writes the
//! resolved configuration to `run.json` in its output directory. Relative
//! output directories are placed under `$VOIDFIELD_OUTPUT_ROOT` when set.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datastore::{load_bundle, make_split, save_bundle, Dataset, MANIFEST_FILE};
use crate::error::Error;
use crate::fieldgen::{Case, GridSpec, MaterialLoad};
use crate::gp::{GpConfig, McmcConfig};
use crate::pipeline::{error_report, write_cross_sections, LatentRegressor, REPORT_COLUMNS};
use crate::search::{Framework, NnBudget, SearchOptions, SearchSpace};
use crate::study::{size_study, DEFAULT_SIZES, DEFAULT_TEST_SIZE};

pub const OUTPUT_ROOT_ENV: &str = "VOIDFIELD_OUTPUT_ROOT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "voidfield", version, about = "Stress-field surrogates for voided plates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset of void masks and von Mises fields.
    Generate(GenerateArgs),
    /// Run the hyperparameter search of one framework and save the winner.
    Fit(FitArgs),
    /// Score a saved bundle on a dataset split.
    Evaluate(EvaluateArgs),
    /// Repeat the search for several training sizes.
    Study(StudyArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    /// JSON file with defaults for any of the options below.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// `non-rotated` or `rotated`.
    #[arg(long)]
    case: Option<Case>,
    #[arg(long)]
    n: Option<usize>,
    /// Pixels per side.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// `f1-gp` or `f2-nn`.
    #[arg(long)]
    framework: Option<Framework>,
    /// Train + validation samples.
    #[arg(long)]
    trainval: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Framework-2 trial count.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Framework-2 ensemble size.
    #[arg(long)]
    top_m: Option<usize>,
    /// Framework-1 variance fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    variance_grid: Option<Vec<f64>>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Thinned GP hyperparameter draws per output; 0 keeps the MLE.
    #[arg(long)]
    mcmc_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the train/validation/test permutation (defaults to --seed).
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// `test`, `train`, `val` or `all`.
    #[arg(long)]
    on: Option<Selection>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct StudyArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// `f1-gp`, `f2-nn`, or `both`.
    #[arg(long)]
    framework: Option<StudyFramework>,
    /// Train + validation sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Selection {
    Test,
    Train,
    Val,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum StudyFramework {
    #[serde(rename = "f1-gp")]
    F1Gp,
    #[serde(rename = "f2-nn")]
    F2Nn,
    #[serde(rename = "both")]
    Both,
}

impl std::str::FromStr for StudyFramework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "both" => Ok(StudyFramework::Both),
            other => Ok(match other.parse::<Framework>()? {
                Framework::F1Gp => StudyFramework::F1Gp,
                Framework::F2Nn => StudyFramework::F2Nn,
            }),
        }
    }
}

impl StudyFramework {
    fn list(self) -> Vec<Framework> {
        match self {
            StudyFramework::F1Gp => vec![Framework::F1Gp],
            StudyFramework::F2Nn => vec![Framework::F2Nn],
            StudyFramework::Both => vec![Framework::F1Gp, Framework::F2Nn],
        }
    }
}

// Resolved configurations, as written to run.json.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateConfig {
    case: Case,
    n: usize,
    grid: usize,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig { case: Case::NonRotated, n: 250, grid: 64, seed: 0, out: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitConfig {
    data: Option<PathBuf>,
    framework: Framework,
    trainval: usize,
    test: usize,
    trials: usize,
    workers: usize,
    top_m: usize,
    variance_grid: Vec<f64>,
    max_epochs: usize,
    patience: usize,
    mcmc_samples: usize,
    gp_restarts: usize,
    gp_max_iters: usize,
    space: SearchSpace,
    seed: u64,
    split_seed: Option<u64>,
    out: Option<PathBuf>,
}

impl Default for FitConfig {
    fn default() -> Self {
        let gp = GpConfig::default();
        let budget = NnBudget::default();
        FitConfig {
            data: None,
            framework: Framework::F1Gp,
            trainval: 100,
            test: DEFAULT_TEST_SIZE,
            trials: 200,
            workers: 1,
            top_m: 5,
            variance_grid: SearchSpace::default().variance_grid,
            max_epochs: budget.max_epochs,
            patience: budget.patience.unwrap_or(0),
            mcmc_samples: 0,
            gp_restarts: gp.restarts,
            gp_max_iters: gp.max_iters,
            space: SearchSpace::default(),
            seed: 0,
            split_seed: None,
            out: None,
        }
    }
}

impl FitConfig {
    fn search_options(&self, framework: Framework) -> SearchOptions {
        match framework {
            Framework::F1Gp => SearchOptions::F1 {
                variance_grid: self.variance_grid.clone(),
                gp: GpConfig {
                    restarts: self.gp_restarts,
                    max_iters: self.gp_max_iters,
                    seed: self.seed,
                    mcmc: (self.mcmc_samples > 0).then(|| McmcConfig {
                        n_samples: self.mcmc_samples,
                        seed: self.seed,
                        ..McmcConfig::default()
                    }),
                },
                n_workers: self.workers,
            },
            Framework::F2Nn => SearchOptions::F2 {
                space: self.space.clone(),
                budget: NnBudget {
                    max_epochs: self.max_epochs,
                    patience: (self.patience > 0).then_some(self.patience),
                },
                n_trials: self.trials,
                n_workers: self.workers,
                top_m: self.top_m,
                seed: self.seed,
            },
        }
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.trials == 0 || self.workers == 0 || self.top_m == 0 {
            return Err(usage("--trials, --workers and --top-m must be at least 1"));
        }
        if self.trainval < 3 {
            return Err(usage("--trainval must be at least 3"));
        }
        if self.max_epochs == 0 {
            return Err(usage("--max-epochs must be at least 1"));
        }
        self.space.validate().map_err(Failure::from)?;
        if self.variance_grid.is_empty() || self.variance_grid.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(usage("--variance-grid needs values in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateConfig {
    bundle: Option<PathBuf>,
    data: Option<PathBuf>,
    on: Selection,
    out: Option<PathBuf>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { bundle: None, data: None, on: Selection::Test, out: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StudyConfig {
    data: Option<PathBuf>,
    framework: StudyFramework,
    sizes: Vec<usize>,
    test: usize,
    /// Search settings shared by every size.
    fit: FitConfig,
    trials: Option<usize>,
    workers: Option<usize>,
    max_epochs: Option<usize>,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            data: None,
            framework: StudyFramework::Both,
            sizes: DEFAULT_SIZES.to_vec(),
            test: DEFAULT_TEST_SIZE,
            fit: FitConfig::default(),
            trials: None,
            workers: None,
            max_epochs: None,
            seed: 0,
            out: None,
        }
    }
}

/// A failed command: message plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: msg.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            _ if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        };
        Failure { code, message: e.to_string() }
    }
}

/// Merges `--config` JSON with the flags that were given (flags win) and
/// fills the rest from defaults.
fn resolve<T: DeserializeOwned>(config: Option<&Path>, flags: &impl Serialize) -> Result<T, Failure> {
    let mut merged = match config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
            if !v.is_object() {
                return Err(usage("config file must hold a JSON object"));
            }
            v
        }
        None => serde_json::json!({}),
    };
    let flags = serde_json::to_value(flags).map_err(Error::from)?;
    if let (Some(m), Some(f)) = (merged.as_object_mut(), flags.as_object()) {
        for (k, v) in f {
            if !v.is_null() {
                m.insert(k.clone(), v.clone());
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| usage(format!("invalid configuration: {e}")))
}

fn output_dir(out: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let out = out.as_ref().ok_or_else(|| usage("--out is required"))?;
    Ok(match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if out.is_relative() => PathBuf::from(root).join(out),
        _ => out.clone(),
    })
}

fn require_dataset(path: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let p = path.as_ref().ok_or_else(|| usage("--data is required"))?;
    if !p.join(MANIFEST_FILE).is_file() {
        return Err(usage(format!("no dataset at {}", p.display())));
    }
    Ok(p.clone())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::from(Error::io(dir, e)))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::from(Error::io(path, e)))
}

fn create_file(path: &Path) -> Result<fs::File, Failure> {
    fs::File::create(path).map_err(|e| Failure::from(Error::io(path, e)))
}

fn write_run_json(dir: &Path, command: &str, config: &impl Serialize) -> Result<(), Failure> {
    let run = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    write_file(&dir.join("run.json"), serde_json::to_string_pretty(&run).map_err(Error::from)?)
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let cfg: GenerateConfig = resolve(args.config.as_deref(), &args)?;
    if cfg.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let grid = GridSpec::square(cfg.grid).map_err(Failure::from)?;
    let out = output_dir(&cfg.out)?;
    let data = Dataset::generate(cfg.case, cfg.n, grid, MaterialLoad::default(), cfg.seed)?;
    data.save(&out)?;
    write_run_json(&out, "generate", &cfg)?;
    println!("wrote {} {} samples ({}x{}) to {}", data.len(), cfg.case.tag(), grid.nx, grid.ny, out.display());
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let cfg: FitConfig = resolve(args.config.as_deref(), &args)?;
    cfg.validate()?;
    let data_dir = require_dataset(&cfg.data)?;
    let out = output_dir(&cfg.out)?;
    let data = Dataset::load(&data_dir)?;
    let split_seed = cfg.split_seed.unwrap_or(cfg.seed);
    let split = make_split(data.len(), cfg.trainval, cfg.test, split_seed)?;

    let options = cfg.search_options(cfg.framework);
    let outcome = options.run(&data, &split)?;

    create_dir(&out)?;
    write_run_json(&out, "fit", &cfg)?;
    save_bundle(&outcome.best, &out.join("bundle"))?;
    outcome.write_records_csv(create_file(&out.join("trials.csv"))?)?;
    write_file(&out.join("summary.json"), serde_json::to_string_pretty(&outcome.summary_json()).map_err(Error::from)?)?;
    if let LatentRegressor::Nn(model) = outcome.best.pipeline.regressor() {
        model.write_history_csv(create_file(&out.join("history.csv"))?)?;
    }
    if cfg.framework == Framework::F2Nn {
        for (rank, member) in outcome.top.iter().enumerate() {
            save_bundle(&member.bundle, &out.join("ensemble").join(format!("rank{rank}_trial{}", member.record.id)))?;
        }
    }
    let n_failed = outcome.records.iter().filter(|r| r.objective.is_none()).count();
    if n_failed > 0 {
        warn!("{n_failed} of {} trials failed", outcome.records.len());
    }
    println!(
        "{}: winner trial {} (k = {}, {}), validation MSE {:.6e}, {} trials, bundle in {}",
        cfg.framework.tag(),
        outcome.best_record.id,
        outcome.best_record.k_in,
        outcome.best_record.k_out,
        outcome.best_objective(),
        outcome.records.len(),
        out.join("bundle").display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let cfg: EvaluateConfig = resolve(args.config.as_deref(), &args)?;
    let bundle_dir = cfg.bundle.clone().ok_or_else(|| usage("--bundle is required"))?;
    if !bundle_dir.join("model.json").is_file() {
        return Err(usage(format!("no bundle at {}", bundle_dir.display())));
    }
    let data_dir = require_dataset(&cfg.data)?;
    let out = output_dir(&cfg.out)?;
    let bundle = load_bundle(&bundle_dir)?;
    let data = Dataset::load(&data_dir)?;
    if data.grid != *bundle.pipeline.grid() {
        return Err(Error::Dimension(format!(
            "bundle grid {}x{} differs from dataset grid {}x{}",
            bundle.pipeline.grid().nx,
            bundle.pipeline.grid().ny,
            data.grid.nx,
            data.grid.ny
        ))
        .into());
    }
    let ids: Vec<usize> = match (cfg.on, &bundle.meta.split) {
        (Selection::All, _) => (0..data.len()).collect(),
        (_, None) => return Err(usage("bundle records no split; use --on all")),
        (Selection::Test, Some(s)) => s.test.clone(),
        (Selection::Train, Some(s)) => s.train.clone(),
        (Selection::Val, Some(s)) => s.val.clone(),
    };
    if ids.is_empty() {
        return Err(usage("selected split is empty"));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= data.len()) {
        return Err(Error::Format(format!("split index {bad} outside dataset of {}", data.len())).into());
    }
    if bundle.meta.dataset_seed.is_some_and(|s| s != data.seed) {
        warn!("bundle was trained on a dataset with a different seed");
    }
    let samples = data.select(&ids);
    let report = error_report(&bundle.pipeline, &samples, &ids)?;

    create_dir(&out)?;
    write_run_json(&out, "evaluate", &cfg)?;
    report.write_csv(create_file(&out.join("metrics.csv"))?)?;
    write_file(&out.join("report.json"), serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
    for (label, id) in [("best", report.best), ("worst", report.worst)] {
        let s = &data.samples[id];
        let pred = bundle.pipeline.predict_field(&s.mask)?;
        write_cross_sections(
            create_file(&out.join(format!("cross_section_{label}_{id}.csv")))?,
            &data.grid,
            &s.stress,
            &pred,
        )?;
    }
    println!("{} samples ({:?})", ids.len(), cfg.on);
    for (name, e) in REPORT_COLUMNS.iter().zip(report.mean_errors) {
        println!("  {name:>8}: {e:8.4} %");
    }
    println!("best sample {}, worst sample {}", report.best, report.worst);
    Ok(())
}

fn cmd_study(args: StudyArgs) -> Result<(), Failure> {
    let mut cfg: StudyConfig = resolve(args.config.as_deref(), &args)?;
    if let Some(t) = cfg.trials {
        cfg.fit.trials = t;
    }
    if let Some(w) = cfg.workers {
        cfg.fit.workers = w;
    }
    if let Some(e) = cfg.max_epochs {
        cfg.fit.max_epochs = e;
    }
    cfg.fit.seed = cfg.seed;
    cfg.fit.validate()?;
    if cfg.sizes.is_empty() || cfg.sizes.iter().any(|&s| s < 3) {
        return Err(usage("--sizes needs values of at least 3"));
    }
    let data_dir = require_dataset(&cfg.data)?;
    let out = output_dir(&cfg.out)?;
    let data = Dataset::load(&data_dir)?;
    let largest = *cfg.sizes.iter().max().unwrap();
    if largest + cfg.test > data.len() {
        return Err(usage(format!("dataset has {} samples, study needs {}", data.len(), largest + cfg.test)));
    }
    create_dir(&out)?;
    write_run_json(&out, "study", &cfg)?;
    let mut any_failed = false;
    let mut tables = Vec::new();
    for fw in cfg.framework.list() {
        let study = size_study(&data, &cfg.sizes, cfg.test, cfg.seed, &cfg.fit.search_options(fw))?;
        any_failed |= study.any_failed();
        study.write_csv(create_file(&out.join(format!("study_{}.csv", fw.tag())))?)?;
        println!("{}", fw.tag());
        println!("  {:>5} {}", "size", REPORT_COLUMNS.map(|c| format!("{c:>8}")).join(" "));
        for r in &study.rows {
            match &r.report {
                Some(rep) => println!("  {:>5} {}", r.size, rep.mean_errors.map(|e| format!("{e:8.4}")).join(" ")),
                None => println!("  {:>5} failed: {}", r.size, r.error.as_deref().unwrap_or("")),
            }
        }
        tables.push(study);
    }
    write_file(&out.join("study.json"), serde_json::to_string_pretty(&tables).map_err(Error::from)?)?;
    if any_failed {
        return Err(Failure { code: EXIT_NUMERICAL, message: "at least one study size failed; see study.json".into() });
    }
    info!("study written to {}", out.display());
    Ok(())
}

/// Parses `args` (including the program name) and runs the command;
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Study(a) => cmd_study(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
