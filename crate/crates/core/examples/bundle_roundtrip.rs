//! Save a fitted surrogate, reload it, and confirm identical predictions.
//!
//! cargo run --release --example bundle_roundtrip

use voidfield::datastore::{load_bundle, make_split, save_bundle, Dataset};
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::search::{Framework, SearchOptions};

fn main() -> voidfield::Result<()> {
    let data = Dataset::generate(Case::NonRotated, 120, GridSpec::square(32)?, MaterialLoad::default(), 4)?;
    let split = make_split(data.len(), 60, 60, 4)?;
    let options = SearchOptions::F1 { variance_grid: vec![0.95], gp: Default::default(), n_workers: 1 };
    let outcome = options.run(&data, &split)?;
    assert_eq!(options.framework(), Framework::F1Gp);

    let dir = std::env::temp_dir().join("voidfield-bundle-example");
    save_bundle(&outcome.best, &dir)?;
    let loaded = load_bundle(&dir)?;
    println!("meta: {}", serde_json::to_string(&loaded.meta).expect("meta"));

    let masks: Vec<&[f64]> = split.test.iter().map(|&i| data.samples[i].mask.as_slice()).collect();
    let a = outcome.best.pipeline.predict_fields(&masks)?;
    let b = loaded.pipeline.predict_fields(&masks)?;
    let same = a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits());
    println!("{} predictions bit-identical after reload: {same}", masks.len());
    for entry in std::fs::read_dir(&dir).expect("bundle dir").flatten() {
        let len = entry.metadata().map_or(0, |m| m.len());
        println!("  {} ({len} bytes)", entry.file_name().to_string_lossy());
    }
    Ok(())
}
