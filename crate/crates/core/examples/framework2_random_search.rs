//! Framework 2: PCA -> NN -> PCA with seeded random search over
//! `(k1, k2, learning rate, decay, batch, width, depth, activation)`,
//! evaluated on a worker pool; the top five models form an ensemble.
//!
//! cargo run --release --example framework2_random_search -- [trials] [workers] [seed]

use std::time::Instant;

use voidfield::datastore::{make_split, Dataset};
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::pipeline::{error_report, REPORT_COLUMNS};
use voidfield::search::{random_search_f2, NnBudget, SearchSpace, TrialConfig};

fn main() -> voidfield::Result<()> {
    env_logger::init();
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let trials = args.first().copied().unwrap_or(12) as usize;
    let workers = args.get(1).copied().unwrap_or(1) as usize;
    let seed = args.get(2).copied().unwrap_or(0);

    let t0 = Instant::now();
    let data = Dataset::generate(Case::NonRotated, 250, GridSpec::square(64)?, MaterialLoad::default(), seed)?;
    let split = make_split(data.len(), 100, 150, seed)?;
    let outcome =
        random_search_f2(&data, &split, &SearchSpace::default(), &NnBudget::default(), trials, workers, 5, seed)?;

    println!("{:>3} {:>12} {:>4} {:>4} {:>9} {:>6} {:>4}  act", "id", "val MSE", "k1", "k2", "lr", "width", "dep");
    for r in &outcome.records {
        if let TrialConfig::F2(c) = &r.config {
            println!(
                "{:>3} {:>12.4e} {:>4} {:>4} {:>9.2e} {:>6} {:>4}  {} ({:.1}s)",
                r.id,
                r.objective.unwrap_or(f64::NAN),
                r.k_in,
                r.k_out,
                c.learning_rate,
                c.width,
                c.depth,
                c.activation,
                r.wall_time_s
            );
        }
    }
    let ids: Vec<usize> = outcome.top.iter().map(|t| t.record.id).collect();
    println!("winner {}, top-5 {:?}", outcome.best_record.id, ids);

    let report = error_report(&outcome.best.pipeline, &data.select(&split.test), &split.test)?;
    for (name, e) in REPORT_COLUMNS.iter().zip(report.mean_errors) {
        println!("  {name:>8}: {e:6.3} %");
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
