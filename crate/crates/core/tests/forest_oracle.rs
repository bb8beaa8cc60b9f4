mod common;

use common::*;
use rand::Rng;
use rand_distr::StandardNormal;
use softsense::forest::{
    fit_forest, fit_forest_with, oob_error, permutation_importance, permutation_importance_with, Execution,
    ForestParams,
};
use softsense::seeds;
use softsense::{Error, FeatureId, FeatureMatrix};

/// y = 2·A − B + noise, with C and D pure noise.
fn planted(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let mut rng = rng(seed);
    let cols: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let y = (0..n)
        .map(|i| 2.0 * cols[0][i] - cols[1][i] + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (FeatureMatrix::new(FeatureId::ALL[..4].to_vec(), cols).unwrap(), y)
}

fn params(n_trees: usize, seed: u64) -> ForestParams {
    ForestParams { n_trees, mtry: Some(2), bootstrap: true, seed }
}

#[test]
fn prediction_is_mean_of_trees() {
    let (x, y) = planted(300, 1);
    let forest = fit_forest(&x, &y, &params(25, 4)).unwrap();
    let per_tree: Vec<Vec<f64>> = forest.trees().iter().map(|t| t.predict(&x).unwrap()).collect();
    let got = forest.predict(&x).unwrap();
    for i in 0..y.len() {
        let want = per_tree.iter().map(|p| p[i]).sum::<f64>() / per_tree.len() as f64;
        assert!((got[i] - want).abs() <= 1e-12, "{} vs {want}", got[i]);
    }
}

#[test]
fn oob_error_matches_membership_oracle() {
    let (x, y) = planted(250, 2);
    let forest = fit_forest(&x, &y, &params(30, 5)).unwrap();
    let per_tree: Vec<Vec<f64>> = forest.trees().iter().map(|t| t.predict(&x).unwrap()).collect();
    let mut se = 0.0;
    let mut covered = 0;
    for i in 0..y.len() {
        let oob: Vec<f64> = (0..per_tree.len())
            .filter(|&t| forest.in_bag_counts(t)[i] == 0)
            .map(|t| per_tree[t][i])
            .collect();
        if !oob.is_empty() {
            covered += 1;
            se += (y[i] - oob.iter().sum::<f64>() / oob.len() as f64).powi(2);
        }
    }
    let got = oob_error(&forest, &x, &y).unwrap();
    assert_eq!(got.n_covered, covered);
    assert!(rel_close(got.mse, se / covered as f64, 1e-12));
}

#[test]
fn bootstrap_counts_are_consistent() {
    let (x, y) = planted(200, 3);
    let forest = fit_forest(&x, &y, &params(10, 6)).unwrap();
    for t in 0..10 {
        let counts = forest.in_bag_counts(t);
        assert_eq!(counts.iter().map(|&c| c as usize).sum::<usize>(), 200);
        let oob = forest.oob_rows(t);
        assert!(oob.iter().all(|&i| counts[i] == 0));
        assert_eq!(oob.len(), counts.iter().filter(|&&c| c == 0).count());
        // The root of each tree sees exactly the bootstrap sample.
        assert_eq!(forest.trees()[t].root().count, 200);
    }
}

#[test]
fn every_row_is_covered_with_a_hundred_trees() {
    let (x, y) = planted(500, 4);
    let forest = fit_forest(&x, &y, &params(100, 7)).unwrap();
    let oob = oob_error(&forest, &x, &y).unwrap();
    assert!(oob.uncovered.is_empty());
    assert_eq!(oob.n_covered, 500);
}

#[test]
fn featureless_forest_oob_error_is_target_variance() {
    // Constant features admit no split, so every tree predicts its
    // bootstrap mean and the OOB error approaches the population variance.
    let n = 400;
    let mut rng = rng(5);
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x = FeatureMatrix::new(vec![FeatureId::A], vec![vec![1.0; n]]).unwrap();
    let forest = fit_forest(&x, &y, &ForestParams { n_trees: 200, mtry: None, bootstrap: true, seed: 1 }).unwrap();
    assert!(forest.trees().iter().all(|t| t.n_leaves() == 1));
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let oob = oob_error(&forest, &x, &y).unwrap().mse;
    assert!((oob / var - 1.0).abs() < 0.02, "{oob} vs {var}");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let (x, y) = planted(300, 6);
    let a = serde_json::to_vec(&fit_forest(&x, &y, &params(20, 9)).unwrap()).unwrap();
    let b = serde_json::to_vec(&fit_forest_with(&x, &y, &params(20, 9), Execution::Serial).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_vec(&fit_forest(&x, &y, &params(20, 10)).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn serial_and_threaded_agree_under_many_threads() {
    let (x, y) = planted(300, 7);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let (par, par_imp) = pool.install(|| {
        let f = fit_forest_with(&x, &y, &params(24, 3), Execution::Parallel).unwrap();
        let imp = permutation_importance_with(&f, &x, &y, 8, Execution::Parallel).unwrap();
        (f, imp)
    });
    let ser = fit_forest_with(&x, &y, &params(24, 3), Execution::Serial).unwrap();
    let ser_imp = permutation_importance_with(&ser, &x, &y, 8, Execution::Serial).unwrap();
    assert_eq!(serde_json::to_vec(&par).unwrap(), serde_json::to_vec(&ser).unwrap());
    assert_eq!(par_imp, ser_imp);
}

/// Permutation importance recomputed from whole-matrix tree predictions.
#[test]
fn permutation_importance_matches_oracle() {
    let (x, y) = planted(200, 8);
    let forest = fit_forest(&x, &y, &params(15, 11)).unwrap();
    let perm_seed = 77;
    let report = permutation_importance(&forest, &x, &y, perm_seed).unwrap();
    let mut diffs = vec![Vec::new(); 4];
    for (t, tree) in forest.trees().iter().enumerate() {
        let oob = forest.oob_rows(t);
        if oob.is_empty() {
            continue;
        }
        let mse = |pred: &[f64]| oob.iter().map(|&i| (y[i] - pred[i]).powi(2)).sum::<f64>() / oob.len() as f64;
        let base = mse(&tree.predict(&x).unwrap());
        for (j, &f) in x.features().iter().enumerate() {
            let mut rng = seeds::stream(perm_seed, &[seeds::tag::PERMUTATION, t as u64, j as u64]);
            let mut order = oob.clone();
            for a in (1..order.len()).rev() {
                order.swap(a, rng.random_range(0..=a));
            }
            let mut cols: Vec<Vec<f64>> = x.features().iter().map(|&g| x.column(g).unwrap().to_vec()).collect();
            for (k, &i) in oob.iter().enumerate() {
                cols[j][i] = x.column(f).unwrap()[order[k]];
            }
            let shuffled = FeatureMatrix::new(x.features().to_vec(), cols).unwrap();
            diffs[j].push(mse(&tree.predict(&shuffled).unwrap()) - base);
        }
    }
    for (j, d) in diffs.iter().enumerate() {
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        let fi = &report.features[j];
        assert!(rel_close(fi.raw_increase, m, 1e-12));
        assert!(rel_close(fi.sd, sd, 1e-12));
        assert!(rel_close(fi.normalized, m / sd, 1e-10));
        assert!(rel_close(fi.percent_inc_mse, 100.0 * m / report.oob_mse, 1e-10));
    }
    assert_eq!(report.n_trees_used, diffs[0].len());
}

#[test]
fn planted_signal_outranks_noise() {
    let (x, y) = planted(600, 9);
    let forest = fit_forest(&x, &y, &params(100, 12)).unwrap();
    let report = permutation_importance(&forest, &x, &y, 13).unwrap();
    assert_eq!(&report.ranking[..2], &[FeatureId::A, FeatureId::B]);
    for noise in [FeatureId::C, FeatureId::D] {
        let fi = report.get(noise).unwrap();
        assert!(fi.percent_inc_mse.abs() < 5.0, "{fi:?}");
        assert!(fi.normalized.abs() < 1.0, "{fi:?}");
    }
}

#[test]
fn independent_target_gives_no_standout_feature() {
    let n = 600;
    let (x, _) = planted(n, 10);
    let mut rng = rng(99);
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let forest = fit_forest(&x, &y, &params(100, 14)).unwrap();
    let report = permutation_importance(&forest, &x, &y, 15).unwrap();
    for fi in &report.features {
        assert!(fi.normalized.abs() < 1.0, "{fi:?}");
    }
}

#[test]
fn rejects_bad_parameters() {
    let (x, y) = planted(50, 11);
    let bad = |p: ForestParams| matches!(fit_forest(&x, &y, &p), Err(Error::InvalidParams(_)));
    assert!(bad(ForestParams { n_trees: 0, ..params(1, 0) }));
    assert!(bad(ForestParams { mtry: Some(0), ..params(1, 0) }));
    assert!(bad(ForestParams { mtry: Some(5), ..params(1, 0) }));
    let no_bag = fit_forest(&x, &y, &ForestParams { bootstrap: false, ..params(3, 0) }).unwrap();
    assert!(matches!(oob_error(&no_bag, &x, &y), Err(Error::NoOutOfBag)));
}
