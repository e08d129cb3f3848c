//! Model bundle: `model.json` (structure, metadata, SHA-256 of the
//! parameters) next to `params.f64` (every float parameter, raw
//! little-endian). The JSON refers to parameters by `(offset, len)`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{f64s_from_bytes, write_f64s, SplitPlan};
use crate::error::{Error, Result};
use crate::fieldgen::GridSpec;
use crate::gp::{GpHyper, GpModel, OutputGp};
use crate::nn::{EpochLoss, Layer, NnArch, NnModel};
use crate::pca::{Normalization, PcaCodec};
use crate::pipeline::{LatentRegressor, SurrogatePipeline};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "params.f64";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// `f1-gp` or `f2-nn`.
    pub framework: String,
    pub split: Option<SplitPlan>,
    pub dataset_seed: Option<u64>,
    /// Winning hyperparameters as recorded by the search.
    pub hyperparameters: serde_json::Value,
    pub train_mse: Option<f64>,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub pipeline: SurrogatePipeline,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Section {
    offset: usize,
    len: usize,
}

#[derive(Default)]
struct Blob {
    data: Vec<f64>,
}

impl Blob {
    fn push(&mut self, v: &[f64]) -> Section {
        let s = Section { offset: self.data.len(), len: v.len() };
        self.data.extend_from_slice(v);
        s
    }

    fn get(&self, s: Section, expected: usize) -> Result<&[f64]> {
        if s.len != expected {
            return Err(Error::Dimension(format!(
                "parameter section has {} values, structure implies {expected}",
                s.len
            )));
        }
        self.data.get(s.offset..s.offset + s.len).ok_or_else(|| Error::Format("parameter section out of range".into()))
    }

    fn matrix(&self, s: Section, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_column_slice(rows, cols, self.get(s, rows * cols)?))
    }

    fn vector(&self, s: Section, len: usize) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(self.get(s, len)?))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CodecDesc {
    normalization: Normalization,
    n_pixels: usize,
    k: usize,
    n_eigen: usize,
    n_fit: usize,
    mean: Section,
    components: Section,
    eigenvalues: Section,
    scale: Section,
}

impl CodecDesc {
    fn write(c: &PcaCodec, blob: &mut Blob) -> Self {
        CodecDesc {
            normalization: c.normalization(),
            n_pixels: c.n_pixels(),
            k: c.k(),
            n_eigen: c.eigenvalues().len(),
            n_fit: c.n_fit(),
            mean: blob.push(c.mean().as_slice()),
            components: blob.push(c.components().as_slice()),
            eigenvalues: blob.push(c.eigenvalues()),
            scale: blob.push(&[c.scale()]),
        }
    }

    fn read(&self, blob: &Blob) -> Result<PcaCodec> {
        PcaCodec::from_parts(
            blob.vector(self.mean, self.n_pixels)?,
            blob.matrix(self.components, self.n_pixels, self.k)?,
            blob.get(self.eigenvalues, self.n_eigen)?.to_vec(),
            self.normalization,
            blob.get(self.scale, 1)?[0],
            self.n_fit,
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct OutputGpDesc {
    hyper: Section,
    chol: Section,
    alpha: Section,
    /// `[jitter, log_marginal]`
    extra: Section,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDesc {
    weights: Section,
    bias: Section,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RegressorDesc {
    Gp {
        n: usize,
        d: usize,
        k: usize,
        x: Section,
        y: Section,
        x_mean: Section,
        x_std: Section,
        y_mean: Section,
        y_std: Section,
        outputs: Vec<OutputGpDesc>,
        posterior: Vec<Vec<Section>>,
    },
    Nn {
        arch: NnArch,
        layers: Vec<LayerDesc>,
        in_mean: Section,
        in_std: Section,
        out_mean: Section,
        out_std: Section,
        /// Rows of `[epoch, train, val (NaN if absent), learning_rate]`.
        history: Section,
        history_len: usize,
        best_epoch: Option<usize>,
    },
    Identity {
        dim: usize,
    },
}

impl RegressorDesc {
    fn write(r: &LatentRegressor, blob: &mut Blob) -> Self {
        match r {
            LatentRegressor::Gp(m) => RegressorDesc::Gp {
                n: m.x.nrows(),
                d: m.x.ncols(),
                k: m.y.ncols(),
                x: blob.push(m.x.as_slice()),
                y: blob.push(m.y.as_slice()),
                x_mean: blob.push(&m.x_mean),
                x_std: blob.push(&m.x_std),
                y_mean: blob.push(&m.y_mean),
                y_std: blob.push(&m.y_std),
                outputs: m
                    .outputs
                    .iter()
                    .map(|o| OutputGpDesc {
                        hyper: blob.push(&o.hyper.to_vec()),
                        chol: blob.push(o.chol.as_slice()),
                        alpha: blob.push(o.alpha.as_slice()),
                        extra: blob.push(&[o.jitter, o.log_marginal]),
                    })
                    .collect(),
                posterior: m
                    .posterior
                    .iter()
                    .map(|draws| draws.iter().map(|g| blob.push(&g.hyper.to_vec())).collect())
                    .collect(),
            },
            LatentRegressor::Nn(m) => {
                let hist: Vec<f64> = m
                    .history
                    .iter()
                    .flat_map(|h| [h.epoch as f64, h.train, h.val.unwrap_or(f64::NAN), h.learning_rate])
                    .collect();
                RegressorDesc::Nn {
                    arch: m.arch,
                    layers: m
                        .layers
                        .iter()
                        .map(|l| LayerDesc {
                            weights: blob.push(l.weights.as_slice()),
                            bias: blob.push(l.bias.as_slice()),
                        })
                        .collect(),
                    in_mean: blob.push(&m.in_mean),
                    in_std: blob.push(&m.in_std),
                    out_mean: blob.push(&m.out_mean),
                    out_std: blob.push(&m.out_std),
                    history: blob.push(&hist),
                    history_len: m.history.len(),
                    best_epoch: m.best_epoch,
                }
            }
            LatentRegressor::Identity { dim } => RegressorDesc::Identity { dim: *dim },
        }
    }

    fn read(&self, blob: &Blob) -> Result<LatentRegressor> {
        match self {
            RegressorDesc::Gp { n, d, k, x, y, x_mean, x_std, y_mean, y_std, outputs, posterior } => {
                let (n, d, k) = (*n, *d, *k);
                let outs = outputs
                    .iter()
                    .map(|o| {
                        let extra = blob.get(o.extra, 2)?;
                        Ok(OutputGp {
                            hyper: GpHyper::from_slice(blob.get(o.hyper, d + 2)?),
                            chol: blob.matrix(o.chol, n, n)?,
                            alpha: blob.vector(o.alpha, n)?,
                            jitter: extra[0],
                            log_marginal: extra[1],
                            init_log_marginals: Vec::new(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let post = posterior
                    .iter()
                    .map(|draws| {
                        draws.iter().map(|s| Ok(GpHyper::from_slice(blob.get(*s, d + 2)?))).collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let model = GpModel::from_parts(
                    blob.matrix(*x, n, d)?,
                    blob.matrix(*y, n, k)?,
                    blob.get(*x_mean, d)?.to_vec(),
                    blob.get(*x_std, d)?.to_vec(),
                    blob.get(*y_mean, k)?.to_vec(),
                    blob.get(*y_std, k)?.to_vec(),
                    outs,
                    post,
                )?;
                Ok(LatentRegressor::Gp(model))
            }
            RegressorDesc::Nn {
                arch,
                layers,
                in_mean,
                in_std,
                out_mean,
                out_std,
                history,
                history_len,
                best_epoch,
            } => {
                let widths = arch.layer_widths();
                if widths.len() != layers.len() + 1 {
                    return Err(Error::Dimension("layer count does not match architecture".into()));
                }
                let ls = layers
                    .iter()
                    .zip(widths.windows(2))
                    .map(|(l, w)| {
                        Ok(Layer { weights: blob.matrix(l.weights, w[1], w[0])?, bias: blob.vector(l.bias, w[1])? })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let hist = blob
                    .get(*history, history_len * 4)?
                    .chunks_exact(4)
                    .map(|c| EpochLoss {
                        epoch: c[0] as usize,
                        train: c[1],
                        val: if c[2].is_nan() { None } else { Some(c[2]) },
                        learning_rate: c[3],
                    })
                    .collect();
                let stats = [
                    blob.get(*in_mean, arch.input)?.to_vec(),
                    blob.get(*in_std, arch.input)?.to_vec(),
                    blob.get(*out_mean, arch.output)?.to_vec(),
                    blob.get(*out_std, arch.output)?.to_vec(),
                ];
                Ok(LatentRegressor::Nn(NnModel::from_parts(*arch, ls, stats, hist, *best_epoch)?))
            }
            RegressorDesc::Identity { dim } => Ok(LatentRegressor::Identity { dim: *dim }),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PipelineDesc {
    grid: GridSpec,
    mask_output: bool,
    input: CodecDesc,
    regressor: RegressorDesc,
    output: CodecDesc,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    format_version: u32,
    params_file: String,
    params_len: usize,
    params_sha256: String,
    pipeline: PipelineDesc,
    metadata: TrainingMeta,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_bundle(bundle: &ModelBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Blob::default();
    let p = &bundle.pipeline;
    let pipeline = PipelineDesc {
        grid: p.grid,
        mask_output: p.mask_output,
        input: CodecDesc::write(&p.input, &mut blob),
        regressor: RegressorDesc::write(&p.regressor, &mut blob),
        output: CodecDesc::write(&p.output, &mut blob),
    };
    let bytes: Vec<u8> = blob.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let manifest = BundleManifest {
        format_version: BUNDLE_FORMAT_VERSION,
        params_file: PARAMS_FILE.to_string(),
        params_len: blob.data.len(),
        params_sha256: sha256_hex(&bytes),
        pipeline,
        metadata: bundle.meta.clone(),
    };
    write_f64s(&dir.join(PARAMS_FILE), blob.data.iter().copied())?;
    let path = dir.join(MODEL_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let path = dir.join(MODEL_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: BundleManifest = serde_json::from_str(&text)?;
    if manifest.format_version != BUNDLE_FORMAT_VERSION {
        return Err(Error::Version { found: manifest.format_version, expected: BUNDLE_FORMAT_VERSION });
    }
    if manifest.params_file.contains(['/', '\\']) {
        return Err(Error::Format("parameter file must live next to model.json".into()));
    }
    let ppath = dir.join(&manifest.params_file);
    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let digest = sha256_hex(&bytes);
    if digest != manifest.params_sha256 {
        return Err(Error::Checksum {
            what: manifest.params_file.clone(),
            expected: manifest.params_sha256,
            found: digest,
        });
    }
    let data = f64s_from_bytes(&bytes)?;
    if data.len() != manifest.params_len {
        return Err(Error::Format("parameter count disagrees with manifest".into()));
    }
    let blob = Blob { data };
    let desc = &manifest.pipeline;
    let input = desc.input.read(&blob)?;
    let output = desc.output.read(&blob)?;
    let regressor = desc.regressor.read(&blob)?;
    let pipeline = SurrogatePipeline::from_parts(input, regressor, output, desc.grid, desc.mask_output)?;
    Ok(ModelBundle { pipeline, meta: manifest.metadata })
}
