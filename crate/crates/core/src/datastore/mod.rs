//! Dataset containers, train/validation/test splits and on-disk formats.
//!
//! Dataset directory layout:
//!
//! ```text
//! manifest.json   grid, case, material, seed, generator version and the
//!                 per-sample geometry (decimal strings, shortest round trip)
//! masks.f64       little-endian f64, row-major, sample-major
//! stress.f64      same layout as masks.f64
//! ```

mod bundle;

pub use bundle::{load_bundle, save_bundle, ModelBundle, TrainingMeta, BUNDLE_FORMAT_VERSION};

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldgen::{generate_dataset, Case, EllipsoidParams, FieldSample, GridSpec, MaterialLoad};
use crate::rng::rng_from_seed;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const GENERATOR_VERSION: &str = concat!("voidfield-analytic/", env!("CARGO_PKG_VERSION"));

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MASKS_FILE: &str = "masks.f64";
pub const STRESS_FILE: &str = "stress.f64";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub case: Case,
    pub grid: GridSpec,
    pub material: MaterialLoad,
    pub seed: u64,
    pub generator_version: String,
    pub samples: Vec<FieldSample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    rx: String,
    ry: String,
    rz: String,
    theta_x: String,
    theta_y: String,
    theta_z: String,
}

impl SampleRecord {
    fn from_params(p: &EllipsoidParams) -> Self {
        SampleRecord {
            rx: p.rx.to_string(),
            ry: p.ry.to_string(),
            rz: p.rz.to_string(),
            theta_x: p.theta_x.to_string(),
            theta_y: p.theta_y.to_string(),
            theta_z: p.theta_z.to_string(),
        }
    }

    fn to_params(&self) -> Result<EllipsoidParams> {
        let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad decimal `{s}` in manifest")));
        Ok(EllipsoidParams {
            rx: parse(&self.rx)?,
            ry: parse(&self.ry)?,
            rz: parse(&self.rz)?,
            theta_x: parse(&self.theta_x)?,
            theta_y: parse(&self.theta_y)?,
            theta_z: parse(&self.theta_z)?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    format_version: u32,
    generator_version: String,
    case: Case,
    seed: u64,
    grid: GridSpec,
    material: MaterialLoad,
    n_samples: usize,
    samples: Vec<SampleRecord>,
}

pub(crate) fn write_f64s(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn f64s_from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!("binary section of {} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl Dataset {
    pub fn generate(case: Case, n: usize, grid: GridSpec, material: MaterialLoad, seed: u64) -> Result<Self> {
        let samples = generate_dataset(case, n, &grid, &material, seed)?;
        Ok(Dataset { case, grid, material, seed, generator_version: GENERATOR_VERSION.to_string(), samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Vec<&FieldSample> {
        idx.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            generator_version: self.generator_version.clone(),
            case: self.case,
            seed: self.seed,
            grid: self.grid,
            material: self.material,
            n_samples: self.samples.len(),
            samples: self.samples.iter().map(|s| SampleRecord::from_params(&s.params)).collect(),
        };
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        write_f64s(&dir.join(MASKS_FILE), self.samples.iter().flat_map(|s| s.mask.iter().copied()))?;
        write_f64s(&dir.join(STRESS_FILE), self.samples.iter().flat_map(|s| s.stress.iter().copied()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Version { found: manifest.format_version, expected: DATASET_FORMAT_VERSION });
        }
        let grid = GridSpec::new(manifest.grid.nx, manifest.grid.ny, manifest.grid.lx, manifest.grid.ly)?;
        if manifest.samples.len() != manifest.n_samples || manifest.n_samples == 0 {
            return Err(Error::Format("sample count disagrees with manifest".into()));
        }
        let read = |name: &str| -> Result<Vec<f64>> {
            let p = dir.join(name);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let vals = f64s_from_bytes(&bytes)?;
            if vals.len() != manifest.n_samples * grid.len() {
                return Err(Error::Format(format!(
                    "{name} holds {} values, expected {}",
                    vals.len(),
                    manifest.n_samples * grid.len()
                )));
            }
            Ok(vals)
        };
        let masks = read(MASKS_FILE)?;
        let stress = read(STRESS_FILE)?;
        let samples = manifest
            .samples
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let span = i * grid.len()..(i + 1) * grid.len();
                Ok(FieldSample {
                    params: rec.to_params()?,
                    grid,
                    mask: masks[span.clone()].to_vec(),
                    stress: stress[span].to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            case: manifest.case,
            grid,
            material: manifest.material,
            seed: manifest.seed,
            generator_version: manifest.generator_version,
            samples,
        })
    }
}

/// Disjoint index sets; `val` is `round(0.1 * (|train| + |val|))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn trainval(&self) -> Vec<usize> {
        self.train.iter().chain(&self.val).copied().collect()
    }
}

pub fn validation_count(n_trainval: usize) -> usize {
    (0.1 * n_trainval as f64).round() as usize
}

/// One seeded permutation of `0..n_total`: the first `n_test` entries are
/// the test set, the following `n_trainval` the train+validation pool, its
/// last `round(0.1 n_trainval)` entries the validation set. Pools for
/// smaller `n_trainval` under the same seed are prefixes of larger ones and
/// the test set does not depend on `n_trainval`.
pub fn make_split(n_total: usize, n_trainval: usize, n_test: usize, seed: u64) -> Result<SplitPlan> {
    if n_trainval + n_test > n_total {
        return Err(Error::InvalidArgument(format!("split {n_trainval} + {n_test} exceeds {n_total} samples")));
    }
    if n_trainval == 0 {
        return Err(Error::InvalidArgument("train+validation pool must be non-empty".into()));
    }
    let mut perm: Vec<usize> = (0..n_total).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let test = perm[..n_test].to_vec();
    let pool = &perm[n_test..n_test + n_trainval];
    let n_val = validation_count(n_trainval);
    Ok(SplitPlan { train: pool[..n_trainval - n_val].to_vec(), val: pool[n_trainval - n_val..].to_vec(), test, seed })
}
