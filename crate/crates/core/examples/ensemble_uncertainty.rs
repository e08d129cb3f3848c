//! Top-m ensemble from a random search: pointwise mean and spread of the
//! members' predictions, and where the spread concentrates.
//!
//! cargo run --release --example ensemble_uncertainty -- [trials]

use voidfield::datastore::{make_split, Dataset};
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::search::{ensemble_predict, random_search_f2, NnBudget, SearchSpace};

fn main() -> voidfield::Result<()> {
    let trials = std::env::args().nth(1).map_or(10, |s| s.parse().expect("trials"));
    let data = Dataset::generate(Case::Rotated, 250, GridSpec::square(64)?, MaterialLoad::default(), 3)?;
    let split = make_split(data.len(), 100, 150, 3)?;
    let outcome = random_search_f2(&data, &split, &SearchSpace::default(), &NnBudget::default(), trials, 1, 5, 3)?;
    let members: Vec<_> = outcome.top.iter().map(|t| &t.bundle.pipeline).collect();
    println!(
        "ensemble of {} (trials {:?})",
        members.len(),
        outcome.top.iter().map(|t| t.record.id).collect::<Vec<_>>()
    );

    for &i in &split.test[..5] {
        let s = &data.samples[i];
        let (mean, spread) = ensemble_predict(&members, &s.mask)?;
        let solid: Vec<usize> = (0..s.mask.len()).filter(|&p| s.mask[p] == 1.0).collect();
        let mean_sd = solid.iter().map(|&p| spread[p]).sum::<f64>() / solid.len() as f64;
        let peak = solid.iter().copied().max_by(|&a, &b| spread[a].total_cmp(&spread[b])).unwrap();
        let err = solid.iter().map(|&p| (mean[p] - s.stress[p]).abs()).sum::<f64>() / solid.len() as f64;
        println!(
            "sample {i:3}: mean |error| {:.3e}  mean sd {:.3e}  max sd {:.3e} at pixel ({}, {}), true {:.3e}",
            err,
            mean_sd,
            spread[peak],
            peak / data.grid.nx,
            peak % data.grid.nx,
            s.stress[peak]
        );
    }
    Ok(())
}
