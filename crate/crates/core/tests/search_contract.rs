use voidfield::datastore::{make_split, Dataset, SplitPlan};
use voidfield::fieldgen::{Case, GridSpec, MaterialLoad};
use voidfield::gp::GpConfig;
use voidfield::search::{
    ensemble_predict, fit_f1, grid_search_f1, random_search_f2, NnBudget, SearchSpace, TrialConfig, TrialData,
    TrialStatus,
};

fn setup() -> (Dataset, SplitPlan) {
    let data =
        Dataset::generate(Case::NonRotated, 60, GridSpec::square(24).unwrap(), MaterialLoad::default(), 2).unwrap();
    let split = make_split(60, 40, 20, 2).unwrap();
    (data, split)
}

fn quick_gp() -> GpConfig {
    GpConfig { restarts: 2, max_iters: 40, ..GpConfig::default() }
}

fn small_space() -> SearchSpace {
    SearchSpace { widths: vec![16, 32], k_in: (2, 10), k_out: (2, 10), ..SearchSpace::default() }
}

fn budget() -> NnBudget {
    NnBudget { max_epochs: 30, patience: Some(10) }
}

#[test]
fn f1_winner_is_the_standalone_minimum() {
    let (data, split) = setup();
    let grid = [0.95, 0.97, 0.99];
    let out = grid_search_f1(&data, &split, &grid, &quick_gp(), 1).unwrap();
    assert_eq!(out.records.len(), 3);
    let td = TrialData::new(&data, &split).unwrap();
    let mut standalone = Vec::new();
    for r in &out.records {
        let TrialConfig::F1 { variance_fraction } = r.config else { panic!("wrong config") };
        let p = fit_f1(&td, variance_fraction, &GpConfig { seed: r.seed, ..quick_gp() }).unwrap();
        let v = td.val_mse(&p).unwrap();
        assert_eq!(v.to_bits(), r.objective.unwrap().to_bits());
        standalone.push(v);
    }
    let min = standalone.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_objective(), min);
}

#[test]
fn f1_duplicate_grid_point_keeps_winner_and_superset_never_worsens() {
    let (data, split) = setup();
    let base = grid_search_f1(&data, &split, &[0.9, 0.95], &quick_gp(), 1).unwrap();
    let dup = grid_search_f1(&data, &split, &[0.95, 0.9, 0.95], &quick_gp(), 1).unwrap();
    assert_eq!(base.best_record.config, dup.best_record.config);
    let sup = grid_search_f1(&data, &split, &[0.9, 0.95, 0.99], &quick_gp(), 1).unwrap();
    assert!(sup.best_objective() <= base.best_objective());
    let single = grid_search_f1(&data, &split, &[0.93], &quick_gp(), 1).unwrap();
    assert_eq!(single.best_record.config, TrialConfig::F1 { variance_fraction: 0.93 });
}

#[test]
fn f2_records_do_not_depend_on_worker_count() {
    let (data, split) = setup();
    let a = random_search_f2(&data, &split, &small_space(), &budget(), 6, 1, 3, 17).unwrap();
    let b = random_search_f2(&data, &split, &small_space(), &budget(), 6, 4, 3, 17).unwrap();
    assert_eq!(a.records.len(), 6);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert!(x.same_outcome(y), "{x:?} vs {y:?}");
    }
    assert_eq!(a.best_record.id, b.best_record.id);
    let ids = |o: &voidfield::search::SearchOutcome| o.top.iter().map(|t| t.record.id).collect::<Vec<_>>();
    assert_eq!(ids(&a), ids(&b));
    let best = a.best_objective();
    assert!(a.records.iter().filter(|r| r.status == TrialStatus::Done).all(|r| best <= r.objective.unwrap()));
    assert!(a.top.windows(2).all(|w| w[0].record.objective <= w[1].record.objective));
}

#[test]
fn single_trial_search_returns_that_trial() {
    let (data, split) = setup();
    let out = random_search_f2(&data, &split, &small_space(), &budget(), 1, 1, 5, 3).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.best_record.id, 0);
    assert_eq!(out.top.len(), 1);
}

#[test]
fn ensemble_statistics() {
    let (data, split) = setup();
    let out = random_search_f2(&data, &split, &small_space(), &budget(), 4, 1, 3, 8).unwrap();
    let members: Vec<_> = out.top.iter().map(|t| &t.bundle.pipeline).collect();
    assert_eq!(members.len(), 3);
    let mask = &data.samples[split.test[0]].mask;

    let (mean, spread) = ensemble_predict(&members[..1], mask).unwrap();
    assert_eq!(mean, members[0].predict_field(mask).unwrap());
    assert!(spread.iter().all(|s| *s == 0.0));

    let same = [members[0], members[0], members[0]];
    let (_, spread) = ensemble_predict(&same, mask).unwrap();
    assert!(spread.iter().all(|s| *s == 0.0));

    let (mean, spread) = ensemble_predict(&members, mask).unwrap();
    let preds: Vec<Vec<f64>> = members.iter().map(|m| m.predict_field(mask).unwrap()).collect();
    for i in 0..mask.len() {
        let hand = (preds[0][i] + preds[1][i] + preds[2][i]) / 3.0;
        assert!((mean[i] - hand).abs() <= 1e-12 * hand.abs().max(1.0));
        if mask[i] == 0.0 {
            assert_eq!((mean[i], spread[i]), (0.0, 0.0));
        }
    }
}

#[test]
fn records_csv_and_summary() {
    let (data, split) = setup();
    let out = random_search_f2(&data, &split, &small_space(), &budget(), 2, 1, 2, 9).unwrap();
    let mut buf = Vec::new();
    out.write_records_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("id,seed,status,objective"));
    assert_eq!(lines.count(), 2);
    let summary = out.summary_json();
    assert_eq!(summary["framework"], "f2-nn");
    assert_eq!(summary["n_trials"], 2);
}

#[test]
fn invalid_search_arguments() {
    let (data, split) = setup();
    assert!(grid_search_f1(&data, &split, &[], &quick_gp(), 1).is_err());
    assert!(random_search_f2(&data, &split, &small_space(), &budget(), 0, 1, 5, 0).is_err());
    assert!(random_search_f2(&data, &split, &small_space(), &budget(), 1, 0, 5, 0).is_err());
}
