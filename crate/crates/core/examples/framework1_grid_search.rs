//! Framework 1 end to end: PCA -> GP -> PCA, grid search over the shared
//! variance fraction, then the percentile error report on the test set.
//!
//! cargo run --release --example framework1_grid_search -- [case] [seed]

use std::time::Instant;

use voidfield::datastore::{make_split, Dataset};
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::gp::GpConfig;
use voidfield::pipeline::{error_report, REPORT_COLUMNS};
use voidfield::search::{grid_search_f1, SearchSpace};

fn main() -> voidfield::Result<()> {
    let mut args = std::env::args().skip(1);
    let case: Case = args.next().as_deref().unwrap_or("non-rotated").parse()?;
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(0);

    let t0 = Instant::now();
    let data = Dataset::generate(case, 250, GridSpec::square(64)?, MaterialLoad::default(), seed)?;
    let split = make_split(data.len(), 100, 150, seed)?;
    println!("generated {} samples in {:.1}s", data.len(), t0.elapsed().as_secs_f64());

    let fractions = SearchSpace::default().variance_grid;
    let outcome = grid_search_f1(&data, &split, &fractions, &GpConfig { seed, ..GpConfig::default() }, 1)?;
    for r in &outcome.records {
        println!(
            "  f = {:?}  k = ({}, {})  val MSE = {:.4e}  ({:.1}s)",
            r.config,
            r.k_in,
            r.k_out,
            r.objective.unwrap_or(f64::NAN),
            r.wall_time_s
        );
    }
    println!("winner: trial {}", outcome.best_record.id);

    let test = data.select(&split.test);
    let report = error_report(&outcome.best.pipeline, &test, &split.test)?;
    for (name, e) in REPORT_COLUMNS.iter().zip(report.mean_errors) {
        println!("  {name:>8}: {e:6.3} %");
    }
    println!("best sample {}, worst sample {}", report.best, report.worst);
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
