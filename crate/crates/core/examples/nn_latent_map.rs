//! Train one funnel network between PCA codes of masks and stress fields,
//! with validation-based early stopping, and print the loss curve.
//!
//! cargo run --release --example nn_latent_map -- [width] [depth] [activation]

use voidfield::datastore::{make_split, Dataset};
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::nn::Activation;
use voidfield::pipeline::{error_report, REPORT_COLUMNS};
use voidfield::search::{fit_f2, NnBudget, NnTrialConfig, TrialData};

fn main() -> voidfield::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let width = args.first().map_or(128, |s| s.parse().expect("width"));
    let depth = args.get(1).map_or(2, |s| s.parse().expect("depth"));
    let activation: Activation = args.get(2).map_or(Ok(Activation::Tanh), |s| s.parse())?;

    let data = Dataset::generate(Case::NonRotated, 250, GridSpec::square(64)?, MaterialLoad::default(), 0)?;
    let split = make_split(data.len(), 100, 150, 0)?;
    let td = TrialData::new(&data, &split)?;
    let cfg = NnTrialConfig {
        k_in: 15,
        k_out: 15,
        learning_rate: 1e-3,
        decay: 0.999,
        batch_size: 16,
        width,
        depth,
        activation,
    };
    let pipeline = fit_f2(&td, &cfg, &NnBudget::default(), 0)?;

    if let voidfield::pipeline::LatentRegressor::Nn(model) = pipeline.regressor() {
        let h = model.history();
        for e in h.iter().step_by((h.len() / 10).max(1)) {
            println!("epoch {:5}  train {:.4e}  val {:.4e}", e.epoch, e.train, e.val.unwrap_or(f64::NAN));
        }
        println!("stopped after {} epochs, best epoch {:?}", h.len(), model.best_epoch());
    }
    println!("val field MSE {:.4e}", td.val_mse(&pipeline)?);
    let report = error_report(&pipeline, &data.select(&split.test), &split.test)?;
    for (name, e) in REPORT_COLUMNS.iter().zip(report.mean_errors) {
        println!("  {name:>8}: {e:6.3} %");
    }
    Ok(())
}
