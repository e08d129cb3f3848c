//! Error against training-set size for one framework on a fixed test set.
//!
//! cargo run --release --example size_study -- [f1-gp|f2-nn] [trials]

use voidfield::datastore::Dataset;
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::search::{Framework, SearchOptions};
use voidfield::study::{size_study, DEFAULT_SIZES, DEFAULT_TEST_SIZE};

fn main() -> voidfield::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let framework: Framework = args.first().map_or(Ok(Framework::F1Gp), |s| s.parse())?;
    let mut options = SearchOptions::defaults(framework, 0);
    if let (SearchOptions::F2 { n_trials, .. }, Some(t)) = (&mut options, args.get(1)) {
        *n_trials = t.parse().expect("trials");
    }
    let data = Dataset::generate(Case::NonRotated, 250, GridSpec::square(64)?, MaterialLoad::default(), 0)?;
    let study = size_study(&data, &DEFAULT_SIZES, DEFAULT_TEST_SIZE, 0, &options)?;
    study.write_csv(std::io::stdout())?;
    Ok(())
}
