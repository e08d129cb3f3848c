//! Compress stress fields with PCA: retained variance against k and the
//! reconstruction error on held-out fields.
//!
//! cargo run --release --example pca_compression

use voidfield::datastore::{make_split, Dataset};
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::pca::{rows_to_matrix, Normalization, PcaCodec, Truncation};

fn main() -> voidfield::Result<()> {
    let data = Dataset::generate(Case::Rotated, 200, GridSpec::square(64)?, MaterialLoad::default(), 1)?;
    let split = make_split(data.len(), 100, 100, 1)?;
    let width = data.grid.len();
    let train = rows_to_matrix(data.select(&split.trainval()).iter().map(|s| s.stress.as_slice()), width);
    let test = rows_to_matrix(data.select(&split.test).iter().map(|s| s.stress.as_slice()), width);

    println!("{:>6} {:>4} {:>10} {:>14} {:>14}", "target", "k", "explained", "train rel err", "test rel err");
    for fraction in [0.8, 0.9, 0.95, 0.99, 0.999] {
        let codec = PcaCodec::fit(&train, Normalization::CenterScale, Truncation::VarianceFraction(fraction))?;
        let rel = |x: &nalgebra::DMatrix<f64>| -> voidfield::Result<f64> {
            let back = codec.decode_rows(&codec.encode_rows(x)?)?;
            Ok((back - x).norm() / x.norm())
        };
        println!(
            "{fraction:6.3} {:4} {:10.5} {:14.3e} {:14.3e}",
            codec.k(),
            codec.explained_fraction(),
            rel(&train)?,
            rel(&test)?
        );
    }
    Ok(())
}
