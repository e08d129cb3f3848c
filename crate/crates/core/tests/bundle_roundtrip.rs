use std::fs;
use std::path::Path;

use voidfield::datastore::{load_bundle, make_split, save_bundle, Dataset, ModelBundle, SplitPlan, TrainingMeta};
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::gp::{GpConfig, McmcConfig};
use voidfield::nn::Activation;
use voidfield::pca::{rows_to_matrix, Normalization, PcaCodec, Truncation};
use voidfield::pipeline::SurrogatePipeline;
use voidfield::search::{fit_f1, fit_f2, NnBudget, NnTrialConfig, TrialData};
use voidfield::Error;

fn small_dataset() -> (Dataset, SplitPlan) {
    let data = Dataset::generate(Case::Rotated, 50, GridSpec::square(24).unwrap(), MaterialLoad::default(), 5).unwrap();
    let split = make_split(50, 30, 20, 5).unwrap();
    (data, split)
}

fn bundle(pipeline: SurrogatePipeline, split: &SplitPlan) -> ModelBundle {
    ModelBundle {
        pipeline,
        meta: TrainingMeta {
            framework: "test".into(),
            split: Some(split.clone()),
            dataset_seed: Some(5),
            hyperparameters: serde_json::json!({"note": "round trip"}),
            train_mse: Some(1.5),
            val_mse: None,
        },
    }
}

fn pipelines(data: &Dataset, split: &SplitPlan) -> Vec<(&'static str, SurrogatePipeline)> {
    let td = TrialData::new(data, split).unwrap();
    let gp = GpConfig { restarts: 2, max_iters: 40, ..GpConfig::default() };
    let mcmc = GpConfig { mcmc: Some(McmcConfig { n_samples: 8, burn_in: 40, ..McmcConfig::default() }), ..gp.clone() };
    let nn = NnTrialConfig {
        k_in: 6,
        k_out: 5,
        learning_rate: 3e-3,
        decay: 0.99,
        batch_size: 8,
        width: 32,
        depth: 3,
        activation: Activation::Elu,
    };
    let budget = NnBudget { max_epochs: 40, patience: Some(10) };
    let stress = rows_to_matrix(td.train.iter().map(|s| s.stress.as_slice()), data.grid.len());
    let codec = PcaCodec::fit(&stress, Normalization::CenterScale, Truncation::Components(10)).unwrap();
    vec![
        ("gp", fit_f1(&td, 0.95, &gp).unwrap()),
        ("gp-mcmc", fit_f1(&td, 0.9, &mcmc).unwrap()),
        ("nn", fit_f2(&td, &nn, &budget, 11).unwrap()),
        ("identity", SurrogatePipeline::self_map(codec, data.grid).unwrap()),
    ]
}

fn probe(data: &Dataset, split: &SplitPlan) -> Vec<Vec<f64>> {
    split.test[..10].iter().map(|&i| data.samples[i].mask.clone()).collect()
}

#[test]
fn every_bundle_type_round_trips_bit_identically() {
    let (data, split) = small_dataset();
    let masks = probe(&data, &split);
    let refs: Vec<&[f64]> = masks.iter().map(Vec::as_slice).collect();
    for (name, p) in pipelines(&data, &split) {
        let dir = tempfile::tempdir().unwrap();
        let before = p.predict_fields(&refs).unwrap();
        let b = bundle(p, &split);
        save_bundle(&b, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded.meta, b.meta, "{name}");
        assert_eq!(loaded.pipeline.regressor().kind(), b.pipeline.regressor().kind());
        let after = loaded.pipeline.predict_fields(&refs).unwrap();
        for (x, y) in before.iter().flatten().zip(after.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits(), "{name}");
        }
        // Saving the loaded bundle again yields identical files.
        let dir2 = tempfile::tempdir().unwrap();
        save_bundle(&loaded, dir2.path()).unwrap();
        for f in ["model.json", "params.f64"] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(dir2.path().join(f)).unwrap(), "{name} {f}");
        }
    }
}

fn saved_nn_bundle() -> tempfile::TempDir {
    let (data, split) = small_dataset();
    let p = pipelines(&data, &split).into_iter().find(|(n, _)| *n == "nn").unwrap().1;
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&bundle(p, &split), dir.path()).unwrap();
    dir
}

fn edit_manifest(dir: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join("model.json");
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    f(&mut v);
    fs::write(&path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
}

#[test]
fn corrupted_bundles_are_rejected() {
    let dir = saved_nn_bundle();
    let params = dir.path().join("params.f64");
    let bytes = fs::read(&params).unwrap();

    fs::write(&params, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_bundle(dir.path()), Err(Error::Checksum { .. })));

    let mut flipped = bytes.clone();
    flipped[17] ^= 1;
    fs::write(&params, &flipped).unwrap();
    assert!(matches!(load_bundle(dir.path()), Err(Error::Checksum { .. })));

    fs::write(&params, &bytes).unwrap();
    assert!(load_bundle(dir.path()).is_ok());

    edit_manifest(dir.path(), |v| v["format_version"] = serde_json::json!(99));
    assert!(matches!(load_bundle(dir.path()), Err(Error::Version { found: 99, .. })));
}

#[test]
fn swapped_codecs_give_dimension_error() {
    let dir = saved_nn_bundle();
    edit_manifest(dir.path(), |v| {
        let p = &mut v["pipeline"];
        let input = p["input"].take();
        p["input"] = p["output"].take();
        p["output"] = input;
    });
    assert!(matches!(load_bundle(dir.path()), Err(Error::Dimension(_))));
}

#[test]
fn missing_bundle_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_bundle(&dir.path().join("nothing")), Err(Error::Io { .. })));
}
