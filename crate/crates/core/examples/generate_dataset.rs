//! Generate a seeded dataset, save it, and reload it bit-for-bit.
//!
//! cargo run --release --example generate_dataset -- [rotated|non-rotated] [n] [grid] [seed]

use voidfield::datastore::Dataset;
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};

fn main() -> voidfield::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let case: Case = args.first().map_or(Ok(Case::NonRotated), |s| s.parse())?;
    let n = args.get(1).map_or(20, |s| s.parse().expect("n"));
    let grid = args.get(2).map_or(64, |s| s.parse().expect("grid"));
    let seed = args.get(3).map_or(0, |s| s.parse().expect("seed"));

    let data = Dataset::generate(case, n, GridSpec::square(grid)?, MaterialLoad::default(), seed)?;
    let dir = std::env::temp_dir().join(format!("voidfield-{}-{seed}", case.tag()));
    data.save(&dir)?;
    assert_eq!(Dataset::load(&dir)?, data);

    for (i, s) in data.samples.iter().take(5).enumerate() {
        let void = s.mask.iter().filter(|&&m| m == 0.0).count();
        let peak = s.stress.iter().cloned().fold(0.0, f64::max);
        println!(
            "{i}: r = ({:.4}, {:.4}, {:.4}) theta_y = {:5.1} deg  void px {void:5}  peak {:.2} x nominal",
            s.params.rx,
            s.params.ry,
            s.params.rz,
            s.params.theta_y.to_degrees(),
            peak / data.material.nominal_stress
        );
    }
    println!("{} samples at {grid}x{grid} saved to {}", data.len(), dir.display());
    Ok(())
}
