//! Multi-output Gaussian process regression on latent vectors.
//!
//! Each output dimension gets its own GP with an anisotropic squared
//! exponential kernel plus a nugget,
//!
//! ```text
//! k(x, x') = s2 * exp(-0.5 * sum_d (x_d - x'_d)^2 / l_d^2) + noise * [x == x']
//! ```
//!
//! fitted by maximizing the log marginal likelihood over the log
//! hyperparameters `(log l_1 .. log l_D, log s2, log noise)`. Inputs and
//! outputs are standardized per dimension from the training data. An
//! optional random-walk Metropolis chain over the log hyperparameters turns
//! point predictions into hyperparameter-averaged ones.

use std::f64::consts::PI;

use log::{info, warn};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

pub const NUGGET_FLOOR: f64 = 1e-10;
/// Largest jitter added on Cholesky failure, relative to the signal variance.
const MAX_JITTER: f64 = 1e-4;

// Box bounds on the log hyperparameters (standardized units).
const LOG_LENGTH_BOUNDS: (f64, f64) = (-4.6, 9.2);
const LOG_SIGNAL_BOUNDS: (f64, f64) = (-9.2, 4.6);
const LOG_NOISE_MAX: f64 = 2.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub log_lengthscales: Vec<f64>,
    pub log_signal_var: f64,
    pub log_noise_var: f64,
}

impl GpHyper {
    pub fn n_params(&self) -> usize {
        self.log_lengthscales.len() + 2
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.push(self.log_signal_var);
        v.push(self.log_noise_var);
        v
    }

    pub fn from_slice(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        GpHyper { log_lengthscales: theta[..d].to_vec(), log_signal_var: theta[d], log_noise_var: theta[d + 1] }
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise_var.exp()
    }

    fn validate(&self, dims: usize) -> Result<()> {
        if self.log_lengthscales.len() != dims {
            return Err(Error::Dimension(format!(
                "{} length-scales for {dims} input dimensions",
                self.log_lengthscales.len()
            )));
        }
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite GP hyperparameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Thinned samples kept per output dimension; 0 disables sampling.
    pub n_samples: usize,
    pub thin: usize,
    pub burn_in: usize,
    pub initial_step: f64,
    /// Standard deviation of the log-normal prior around the MLE.
    pub prior_sd: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { n_samples: 0, thin: 5, burn_in: 500, initial_step: 0.1, prior_sd: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub mcmc: Option<McmcConfig>,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig { restarts: 5, max_iters: 150, seed: 0, mcmc: None }
    }
}

/// Squared coordinate differences of every input pair, one `n x n` block
/// per input dimension.
#[derive(Debug, Clone)]
pub struct PairDistances {
    n: usize,
    d: usize,
    sq: Vec<f64>,
}

impl PairDistances {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (n, d) = x.shape();
        let mut sq = vec![0.0; d * n * n];
        for k in 0..d {
            let block = &mut sq[k * n * n..(k + 1) * n * n];
            for i in 0..n {
                for j in 0..n {
                    let diff = x[(i, k)] - x[(j, k)];
                    block[i * n + j] = diff * diff;
                }
            }
        }
        PairDistances { n, d, sq }
    }

    fn block(&self, k: usize) -> &[f64] {
        &self.sq[k * self.n * self.n..(k + 1) * self.n * self.n]
    }
}

/// Noise-free part of the kernel matrix.
fn signal_kernel(dist: &PairDistances, hyper: &GpHyper) -> DMatrix<f64> {
    let n = dist.n;
    let mut expo = vec![0.0; n * n];
    for (k, ll) in hyper.log_lengthscales.iter().enumerate() {
        let inv = (-2.0 * ll).exp();
        for (e, s) in expo.iter_mut().zip(dist.block(k)) {
            *e += s * inv;
        }
    }
    let s2 = hyper.signal_var();
    DMatrix::from_fn(n, n, |i, j| s2 * (-0.5 * expo[i * n + j]).exp())
}

/// Cholesky of `K + noise I`, escalating jitter up to `MAX_JITTER * s2`.
/// Returns the factor and the jitter that was needed.
fn factorize(mut k: DMatrix<f64>, noise: f64, s2: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] += noise;
    }
    if let Some(ch) = Cholesky::new(k.clone()) {
        return Ok((ch, 0.0));
    }
    let mut jitter = 1e-10 * s2;
    while jitter <= MAX_JITTER * s2 * (1.0 + 1e-12) {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(kj) {
            return Ok((ch, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical("kernel matrix not positive definite after jitter escalation".into()))
}

/// Log marginal likelihood of standardized targets `y` and its gradient
/// with respect to the log hyperparameters.
pub fn log_marginal(dist: &PairDistances, y: &DVector<f64>, hyper: &GpHyper) -> Result<(f64, Vec<f64>)> {
    hyper.validate(dist.d)?;
    if y.len() != dist.n {
        return Err(Error::Dimension(format!("{} targets for {} inputs", y.len(), dist.n)));
    }
    let n = dist.n;
    let kse = signal_kernel(dist, hyper);
    let noise = hyper.noise_var();
    let (chol, _) = factorize(kse.clone(), noise, hyper.signal_var())?;
    let alpha = chol.solve(y);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum::<f64>();
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();

    // W = alpha alpha^T - K^{-1}; dL/dtheta = 0.5 tr(W dK/dtheta).
    let kinv = chol.inverse();
    let mut w = &alpha * alpha.transpose();
    w -= &kinv;

    let mut grad = Vec::with_capacity(hyper.n_params());
    let wk: Vec<f64> = (0..n * n).map(|idx| w[(idx / n, idx % n)] * kse[(idx / n, idx % n)]).collect();
    for (k, ll) in hyper.log_lengthscales.iter().enumerate() {
        let inv = (-2.0 * ll).exp();
        let s: f64 = wk.iter().zip(dist.block(k)).map(|(a, b)| a * b).sum();
        grad.push(0.5 * s * inv);
    }
    grad.push(0.5 * wk.iter().sum::<f64>());
    grad.push(0.5 * noise * w.trace());
    Ok((value, grad))
}

fn bounds(d: usize) -> Vec<(f64, f64)> {
    let mut b = vec![LOG_LENGTH_BOUNDS; d];
    b.push(LOG_SIGNAL_BOUNDS);
    b.push((NUGGET_FLOOR.ln(), LOG_NOISE_MAX));
    b
}

fn project(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, (lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(*lo, *hi);
    }
}

/// Projected L-BFGS ascent on the log marginal likelihood. Never returns a
/// point worse than the (projected) start.
fn maximize(dist: &PairDistances, y: &DVector<f64>, start: &[f64], max_iters: usize) -> Option<(Vec<f64>, f64)> {
    let bnds = bounds(dist.d);
    let eval = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        log_marginal(dist, y, &GpHyper::from_slice(theta))
            .ok()
            .filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
            // minimize the negative
            .map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect()))
    };
    let mut x = start.to_vec();
    project(&mut x, &bnds);
    let (mut f, mut g) = eval(&x)?;
    let memory = 8;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    for iter in 0..max_iters {
        // Two-loop recursion for d = -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, yv) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(yv, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let (Some(s), Some(yv)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let gn = dot(&g, &g).sqrt().max(1e-12);
            q.iter_mut().for_each(|v| *v /= gn);
        }
        for ((s, yv), a) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let rho = 1.0 / dot(yv, s);
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &g) >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            let gn = dot(&g, &g).sqrt().max(1e-12);
            dir = g.iter().map(|v| -v / gn).collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-10 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            project(&mut xn, &bnds);
            let moved: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if decrease < 0.0 {
                if let Some((fn_, gn)) = eval(&xn) {
                    if fn_ <= f + 1e-4 * decrease {
                        accepted = Some((xn, fn_, gn, moved));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            break;
        };
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let converged = (f - fn_).abs() <= 1e-10 * (1.0 + f.abs());
        if dot(&s, &yv) > 1e-12 {
            s_hist.push(s);
            y_hist.push(yv);
            if s_hist.len() > memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x = xn;
        f = fn_;
        g = gn;
        if converged && iter > 2 {
            break;
        }
    }
    Some((x, -f))
}

/// One fitted output dimension.
#[derive(Debug, Clone)]
pub struct OutputGp {
    pub hyper: GpHyper,
    /// Lower Cholesky factor of `K + (noise + jitter) I`.
    pub chol: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub jitter: f64,
    pub log_marginal: f64,
    /// Log marginal likelihood at each restart's initializer.
    pub init_log_marginals: Vec<f64>,
}

impl OutputGp {
    fn build(dist: &PairDistances, y: &DVector<f64>, hyper: GpHyper, lml: f64) -> Result<Self> {
        let kse = signal_kernel(dist, &hyper);
        let (chol, jitter) = factorize(kse, hyper.noise_var(), hyper.signal_var())?;
        let alpha = chol.solve(y);
        Ok(OutputGp { hyper, chol: chol.l(), alpha, jitter, log_marginal: lml, init_log_marginals: Vec::new() })
    }

    fn kernel_row(&self, x_train: &DMatrix<f64>, q: &[f64]) -> DVector<f64> {
        let s2 = self.hyper.signal_var();
        let inv: Vec<f64> = self.hyper.log_lengthscales.iter().map(|l| (-2.0 * l).exp()).collect();
        DVector::from_fn(x_train.nrows(), |i, _| {
            let mut e = 0.0;
            for (k, iv) in inv.iter().enumerate() {
                let d = x_train[(i, k)] - q[k];
                e += d * d * iv;
            }
            s2 * (-0.5 * e).exp()
        })
    }

    /// Standardized predictive mean and latent variance.
    fn predict_one(&self, x_train: &DMatrix<f64>, q: &[f64]) -> (f64, f64) {
        let ks = self.kernel_row(x_train, q);
        let mean = ks.dot(&self.alpha);
        let v = self.chol.solve_lower_triangular(&ks).unwrap_or_else(|| DVector::zeros(ks.len()));
        let var = (self.hyper.signal_var() - v.dot(&v)).max(0.0);
        (mean, var)
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    /// Standardized training inputs, `n x d`.
    pub(crate) x: DMatrix<f64>,
    /// Standardized training outputs, `n x k`.
    pub(crate) y: DMatrix<f64>,
    pub(crate) x_mean: Vec<f64>,
    pub(crate) x_std: Vec<f64>,
    pub(crate) y_mean: Vec<f64>,
    pub(crate) y_std: Vec<f64>,
    pub(crate) outputs: Vec<OutputGp>,
    /// Posterior hyperparameter draws per output dimension.
    pub(crate) posterior: Vec<Vec<OutputGp>>,
    pub(crate) acceptance: Vec<f64>,
}

/// Per-column mean and standard deviation; zero spread maps to 1.
pub(crate) fn column_stats(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows() as f64;
    let mut means = Vec::with_capacity(m.ncols());
    let mut sds = Vec::with_capacity(m.ncols());
    for c in m.column_iter() {
        let mu = c.sum() / n;
        let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let sd = var.sqrt();
        means.push(mu);
        sds.push(if sd > 1e-12 * (1.0 + mu.abs()) { sd } else { 1.0 });
    }
    (means, sds)
}

pub(crate) fn standardize(m: &DMatrix<f64>, mean: &[f64], sd: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - mean[j]) / sd[j])
}

fn initial_points(d: usize, restarts: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let base_ll = 0.5 * (d.max(1) as f64).ln();
    let mut pts = Vec::with_capacity(restarts.max(1));
    let mut first = vec![base_ll; d];
    first.push(0.0);
    first.push((1e-2f64).ln());
    pts.push(first);
    for _ in 1..restarts.max(1) {
        let mut p: Vec<f64> = (0..d).map(|_| base_ll + rng.random_range(-1.5..1.5)).collect();
        p.push(rng.random_range(-1.0..1.0));
        p.push(rng.random_range((1e-6f64).ln()..(1e-1f64).ln()));
        pts.push(p);
    }
    pts
}

fn fit_output(dist: &PairDistances, y: &DVector<f64>, config: &GpConfig, seed: u64) -> Result<OutputGp> {
    let mut rng = rng_from_seed(seed);
    let starts = initial_points(dist.d, config.restarts, &mut rng);
    let bnds = bounds(dist.d);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut init_values = Vec::with_capacity(starts.len());
    for start in &starts {
        let mut s = start.clone();
        project(&mut s, &bnds);
        if let Ok((v, _)) = log_marginal(dist, y, &GpHyper::from_slice(&s)) {
            init_values.push(v);
        }
        if let Some((theta, value)) = maximize(dist, y, start, config.max_iters) {
            if best.as_ref().is_none_or(|(_, b)| value > *b) {
                best = Some((theta, value));
            }
        }
    }
    let (theta, value) =
        best.ok_or_else(|| Error::Numerical("every restart failed to evaluate the marginal likelihood".into()))?;
    let mut out = OutputGp::build(dist, y, GpHyper::from_slice(&theta), value)?;
    out.init_log_marginals = init_values;
    Ok(out)
}

impl GpModel {
    /// Fits one GP per column of `z_out`.
    pub fn fit(z_in: &DMatrix<f64>, z_out: &DMatrix<f64>, config: &GpConfig) -> Result<Self> {
        let n = z_in.nrows();
        if n < 3 {
            return Err(Error::InvalidArgument(format!("GP needs at least 3 samples, got {n}")));
        }
        if z_out.nrows() != n {
            return Err(Error::Dimension(format!("{} input rows vs {} output rows", n, z_out.nrows())));
        }
        if z_in.ncols() == 0 || z_out.ncols() == 0 {
            return Err(Error::Dimension("GP needs at least one input and output column".into()));
        }
        if z_in.iter().chain(z_out.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite GP training data".into()));
        }
        let (x_mean, x_std) = column_stats(z_in);
        let (y_mean, y_std) = column_stats(z_out);
        let x = standardize(z_in, &x_mean, &x_std);
        let y = standardize(z_out, &y_mean, &y_std);
        let dist = PairDistances::new(&x);

        let outputs: Vec<OutputGp> = (0..y.ncols())
            .into_par_iter()
            .map(|j| fit_output(&dist, &y.column(j).into_owned(), config, derive_seed(config.seed, j as u64)))
            .collect::<Result<_>>()?;

        let mut model =
            GpModel { x, y, x_mean, x_std, y_mean, y_std, outputs, posterior: Vec::new(), acceptance: Vec::new() };
        if let Some(mcmc) = &config.mcmc {
            if mcmc.n_samples > 0 {
                model.sample_hypers(mcmc)?;
            }
        }
        Ok(model)
    }

    /// Conditions one GP per output column on fixed hyperparameters (given
    /// in standardized units) instead of maximizing the marginal likelihood.
    pub fn with_hypers(z_in: &DMatrix<f64>, z_out: &DMatrix<f64>, hypers: Vec<GpHyper>) -> Result<Self> {
        let n = z_in.nrows();
        if z_out.nrows() != n || hypers.len() != z_out.ncols() {
            return Err(Error::Dimension("GP data and hyperparameter counts disagree".into()));
        }
        let (x_mean, x_std) = column_stats(z_in);
        let (y_mean, y_std) = column_stats(z_out);
        let x = standardize(z_in, &x_mean, &x_std);
        let y = standardize(z_out, &y_mean, &y_std);
        let dist = PairDistances::new(&x);
        let outputs = hypers
            .into_iter()
            .enumerate()
            .map(|(j, h)| {
                h.validate(x.ncols())?;
                let yj = y.column(j).into_owned();
                let (lml, _) = log_marginal(&dist, &yj, &h)?;
                OutputGp::build(&dist, &yj, h, lml)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GpModel { x, y, x_mean, x_std, y_mean, y_std, outputs, posterior: Vec::new(), acceptance: Vec::new() })
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_train(&self) -> usize {
        self.x.nrows()
    }

    pub fn outputs(&self) -> &[OutputGp] {
        &self.outputs
    }

    pub fn posterior_len(&self) -> usize {
        self.posterior.first().map_or(0, Vec::len)
    }

    /// Metropolis acceptance rate per output dimension of the last chain.
    pub fn acceptance_rates(&self) -> &[f64] {
        &self.acceptance
    }

    /// Output-dimension `j` marginal likelihood and gradient at `hyper`,
    /// on the model's standardized training data.
    pub fn log_marginal(&self, j: usize, hyper: &GpHyper) -> Result<(f64, Vec<f64>)> {
        if j >= self.output_dim() {
            return Err(Error::Dimension(format!("output {j} out of range")));
        }
        log_marginal(&PairDistances::new(&self.x), &self.y.column(j).into_owned(), hyper)
    }

    /// Predictive mean and variance (`m x k` each), in output units.
    pub fn predict(&self, z: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if z.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "query has {} columns, model expects {}",
                z.ncols(),
                self.input_dim()
            )));
        }
        let q = standardize(z, &self.x_mean, &self.x_std);
        let m = q.nrows();
        let k = self.output_dim();
        let mut mean = DMatrix::zeros(m, k);
        let mut var = DMatrix::zeros(m, k);
        for i in 0..m {
            let row: Vec<f64> = q.row(i).iter().copied().collect();
            for j in 0..k {
                let (mu, v) = if self.posterior.is_empty() || self.posterior[j].is_empty() {
                    self.outputs[j].predict_one(&self.x, &row)
                } else {
                    let draws: Vec<(f64, f64)> =
                        self.posterior[j].iter().map(|g| g.predict_one(&self.x, &row)).collect();
                    let s = draws.len() as f64;
                    let mu = draws.iter().map(|d| d.0).sum::<f64>() / s;
                    let within = draws.iter().map(|d| d.1).sum::<f64>() / s;
                    let between = draws.iter().map(|d| (d.0 - mu).powi(2)).sum::<f64>() / s;
                    (mu, within + between)
                };
                mean[(i, j)] = mu * self.y_std[j] + self.y_mean[j];
                var[(i, j)] = v * self.y_std[j] * self.y_std[j];
            }
        }
        Ok((mean, var))
    }

    /// Draws posterior samples of the log hyperparameters per output with a
    /// random-walk Metropolis chain, log-normal priors centered at the MLE.
    pub fn sample_hypers(&mut self, config: &McmcConfig) -> Result<()> {
        self.posterior.clear();
        self.acceptance.clear();
        if config.n_samples == 0 {
            return Ok(());
        }
        let dist = PairDistances::new(&self.x);
        let results: Vec<(Vec<OutputGp>, f64)> = (0..self.output_dim())
            .into_par_iter()
            .map(|j| {
                let y = self.y.column(j).into_owned();
                run_chain(&dist, &y, &self.outputs[j].hyper, config, derive_seed(config.seed, j as u64))
            })
            .collect::<Result<_>>()?;
        for (j, (draws, rate)) in results.into_iter().enumerate() {
            info!("gp output {j}: metropolis acceptance {:.3}", rate);
            self.posterior.push(draws);
            self.acceptance.push(rate);
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        x_mean: Vec<f64>,
        x_std: Vec<f64>,
        y_mean: Vec<f64>,
        y_std: Vec<f64>,
        outputs: Vec<OutputGp>,
        posterior_hypers: Vec<Vec<GpHyper>>,
    ) -> Result<Self> {
        let (n, d) = x.shape();
        let k = y.ncols();
        if y.nrows() != n || x_mean.len() != d || x_std.len() != d || y_mean.len() != k || y_std.len() != k {
            return Err(Error::Dimension("GP statistics inconsistent with training data".into()));
        }
        if outputs.len() != k {
            return Err(Error::Dimension(format!("{} output GPs for {k} outputs", outputs.len())));
        }
        for o in &outputs {
            o.hyper.validate(d)?;
            if o.chol.shape() != (n, n) || o.alpha.len() != n {
                return Err(Error::Dimension("GP factor shape mismatch".into()));
            }
        }
        let dist = PairDistances::new(&x);
        let posterior = posterior_hypers
            .into_iter()
            .enumerate()
            .map(|(j, hs)| {
                let y = y.column(j).into_owned();
                hs.into_iter()
                    .map(|h| {
                        h.validate(d)?;
                        OutputGp::build(&dist, &y, h, f64::NAN)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GpModel { x, y, x_mean, x_std, y_mean, y_std, outputs, posterior, acceptance: Vec::new() })
    }
}

fn run_chain(
    dist: &PairDistances,
    y: &DVector<f64>,
    mle: &GpHyper,
    config: &McmcConfig,
    seed: u64,
) -> Result<(Vec<OutputGp>, f64)> {
    let mut rng = rng_from_seed(seed);
    let center = mle.to_vec();
    let bnds = bounds(dist.d);
    let prior_var = config.prior_sd * config.prior_sd;
    let log_target = |theta: &[f64]| -> Option<f64> {
        if theta.iter().zip(&bnds).any(|(t, (lo, hi))| t < lo || t > hi) {
            return None;
        }
        let (lml, _) = log_marginal(dist, y, &GpHyper::from_slice(theta)).ok()?;
        let prior: f64 = theta.iter().zip(&center).map(|(t, c)| -0.5 * (t - c) * (t - c) / prior_var).sum();
        Some(lml + prior)
    };
    let mut state = center.clone();
    let mut current = log_target(&state).ok_or_else(|| Error::Numerical("posterior undefined at the MLE".into()))?;
    let mut step = config.initial_step;
    let thin = config.thin.max(1);
    let total = config.burn_in + config.n_samples * thin;
    let mut draws = Vec::with_capacity(config.n_samples);
    let mut accepted_window = 0usize;
    let mut accepted_kept = 0usize;
    let mut proposals_kept = 0usize;
    let normal = |rng: &mut ChaCha8Rng| -> f64 {
        // Box-Muller
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    };
    for it in 0..total {
        let proposal: Vec<f64> = state.iter().map(|t| t + step * normal(&mut rng)).collect();
        let accepted = log_target(&proposal).filter(|lp| {
            let u: f64 = rng.random::<f64>();
            u.ln() < lp - current
        });
        let accept = accepted.is_some();
        if let Some(lp) = accepted {
            state = proposal;
            current = lp;
            accepted_window += 1;
        }
        if it < config.burn_in {
            // Adapt every 50 proposals towards ~30% acceptance.
            if (it + 1) % 50 == 0 {
                let rate = accepted_window as f64 / 50.0;
                step *= if rate < 0.2 {
                    0.6
                } else if rate > 0.45 {
                    1.5
                } else {
                    1.0
                };
                accepted_window = 0;
            }
        } else {
            proposals_kept += 1;
            if accept {
                accepted_kept += 1;
            }
            if (it - config.burn_in + 1).is_multiple_of(thin) {
                draws.push(state.clone());
            }
        }
    }
    let rate = if proposals_kept > 0 { accepted_kept as f64 / proposals_kept as f64 } else { 0.0 };
    if rate < 0.01 {
        warn!("metropolis acceptance {rate:.4} below 1% (final step {step:.3e})");
    }
    let fitted = draws
        .into_iter()
        .map(|t| OutputGp::build(dist, y, GpHyper::from_slice(&t), f64::NAN))
        .collect::<Result<Vec<_>>>()?;
    Ok((fitted, rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_inputs(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_kernel_closed_form() {
        // Far-apart inputs with tiny length-scales give K = (s2 + noise) I.
        let x = DMatrix::from_fn(4, 1, |i, _| 10.0 * i as f64);
        let dist = PairDistances::new(&x);
        let y = DVector::from_vec(vec![0.3, -1.2, 0.5, 2.0]);
        let h = GpHyper {
            log_lengthscales: vec![(0.1f64).ln()],
            log_signal_var: (0.5f64).ln(),
            log_noise_var: (0.5f64).ln(),
        };
        let (v, _) = log_marginal(&dist, &y, &h).unwrap();
        let expected = -0.5 * y.norm_squared() - 2.0 * (2.0 * PI).ln();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_collapse_noise() {
        let x = random_inputs(3, 2, 1);
        let y = DMatrix::from_element(3, 1, 4.2);
        let model = GpModel::fit(&x, &y, &GpConfig::default()).unwrap();
        let (mean, _) = model.predict(&random_inputs(5, 2, 2)).unwrap();
        assert!(mean.iter().all(|m| (m - 4.2).abs() < 1e-9));
        assert!(model.outputs()[0].hyper.noise_var() < 1e-8);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let x = random_inputs(6, 2, 3);
        let y = DMatrix::from_fn(6, 1, |i, _| x[(i, 0)]);
        let model = GpModel::fit(&x, &y, &GpConfig::default()).unwrap();
        assert!(matches!(model.predict(&random_inputs(2, 3, 4)), Err(Error::Dimension(_))));
        assert!(GpModel::fit(&x.rows(0, 2).into_owned(), &y.rows(0, 2).into_owned(), &GpConfig::default()).is_err());
    }

    #[test]
    fn zero_mcmc_samples_match_mle() {
        let x = random_inputs(10, 2, 5);
        let y = DMatrix::from_fn(10, 1, |i, _| (2.0 * x[(i, 0)]).sin() + x[(i, 1)]);
        let mut model = GpModel::fit(&x, &y, &GpConfig::default()).unwrap();
        let q = random_inputs(4, 2, 6);
        let before = model.predict(&q).unwrap();
        model.sample_hypers(&McmcConfig { n_samples: 0, ..McmcConfig::default() }).unwrap();
        assert_eq!(before, model.predict(&q).unwrap());
    }
}
