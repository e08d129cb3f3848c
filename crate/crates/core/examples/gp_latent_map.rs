//! Gaussian-process regression on a toy latent map: hyperparameters by
//! maximum likelihood, then by Metropolis sampling, with predictive bands.
//!
//! cargo run --release --example gp_latent_map

use nalgebra::DMatrix;
use voidfield::gp::{GpConfig, GpModel, McmcConfig};

fn main() -> voidfield::Result<()> {
    let n = 25;
    let x = DMatrix::from_fn(n, 1, |i, _| -3.0 + 6.0 * i as f64 / (n - 1) as f64);
    let y = DMatrix::from_fn(n, 2, |i, j| if j == 0 { x[(i, 0)].sin() } else { 0.3 * x[(i, 0)].powi(2) });

    let mle = GpModel::fit(&x, &y, &GpConfig::default())?;
    for (j, out) in mle.outputs().iter().enumerate() {
        let h = &out.hyper;
        println!(
            "output {j}: lengthscale {:.3}  signal var {:.3}  noise var {:.2e}",
            h.log_lengthscales[0].exp(),
            h.signal_var(),
            h.noise_var()
        );
    }
    let mcmc = GpModel::fit(
        &x,
        &y,
        &GpConfig { mcmc: Some(McmcConfig { n_samples: 40, ..McmcConfig::default() }), ..GpConfig::default() },
    )?;
    println!("posterior draws per output {}, acceptance {:?}", mcmc.posterior_len(), mcmc.acceptance_rates());

    let q = DMatrix::from_fn(7, 1, |i, _| -4.5 + 1.5 * i as f64);
    let (m1, v1) = mle.predict(&q)?;
    let (m2, v2) = mcmc.predict(&q)?;
    println!("{:>6} {:>8} {:>9} {:>9} {:>9} {:>9}", "x", "sin x", "mle", "+-2sd", "mcmc", "+-2sd");
    for i in 0..q.nrows() {
        println!(
            "{:6.2} {:8.4} {:9.4} {:9.4} {:9.4} {:9.4}",
            q[(i, 0)],
            q[(i, 0)].sin(),
            m1[(i, 0)],
            2.0 * v1[(i, 0)].sqrt(),
            m2[(i, 0)],
            2.0 * v2[(i, 0)].sqrt()
        );
    }
    Ok(())
}
