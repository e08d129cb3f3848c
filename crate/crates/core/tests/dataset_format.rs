use std::collections::HashSet;
use std::fs;

use proptest::prelude::*;
use voidfield::datastore::{make_split, Dataset};
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::Error;

fn dataset(seed: u64) -> Dataset {
    Dataset::generate(Case::Rotated, 12, GridSpec::square(16).unwrap(), MaterialLoad::default(), seed).unwrap()
}

#[test]
fn save_load_round_trip_is_exact() {
    let d = dataset(1);
    let dir = tempfile::tempdir().unwrap();
    d.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back, d);
}

#[test]
fn regeneration_writes_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    dataset(3).save(a.path()).unwrap();
    dataset(3).save(b.path()).unwrap();
    for f in ["manifest.json", "masks.f64", "stress.f64"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn truncated_arrays_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    dataset(4).save(dir.path()).unwrap();
    let p = dir.path().join("stress.f64");
    let bytes = fs::read(&p).unwrap();
    fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(Dataset::load(dir.path()), Err(Error::Format(_))));
    fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(Dataset::load(dir.path()), Err(Error::Format(_))));
}

#[test]
fn unknown_format_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    dataset(5).save(dir.path()).unwrap();
    let p = dir.path().join("manifest.json");
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&p).unwrap()).unwrap();
    v["format_version"] = serde_json::json!(7);
    fs::write(&p, serde_json::to_vec(&v).unwrap()).unwrap();
    assert!(matches!(Dataset::load(dir.path()), Err(Error::Version { found: 7, .. })));
}

#[test]
fn missing_directory_is_an_io_error() {
    assert!(matches!(Dataset::load("/nonexistent/voidfield".as_ref()), Err(Error::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_partition_and_nest(seed in any::<u64>(), total in 20usize..300, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let n_test = ((total as f64) * 0.5 * a) as usize;
        let big = 1 + ((total - n_test - 1) as f64 * b) as usize;
        let small = 1 + (big - 1) / 2;
        let s = make_split(total, big, n_test, seed).unwrap();
        let t = make_split(total, small, n_test, seed).unwrap();
        let all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), big + n_test);
        prop_assert_eq!(all.iter().collect::<HashSet<_>>().len(), all.len());
        prop_assert!(all.iter().all(|&i| i < total));
        prop_assert_eq!(s.val.len(), (0.1 * big as f64).round() as usize);
        prop_assert_eq!(&s.test, &t.test);
        let pool: HashSet<usize> = s.trainval().into_iter().collect();
        prop_assert!(t.trainval().iter().all(|i| pool.contains(i)));
    }
}
