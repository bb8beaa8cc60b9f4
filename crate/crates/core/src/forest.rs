//! Random forest regression with out-of-bag error and permutation
//! importance.
//!
//! Tree `t` draws its bootstrap sample and its per-node feature subsets from
//! a stream keyed by `(seed, t)`; the permutation of feature `j` inside tree
//! `t`'s out-of-bag rows uses a stream keyed by `(perm_seed, t, j)`. Results
//! therefore do not depend on how the work is scheduled.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{grow_tree_with_rng, GrowParams, Tree};
use crate::{seeds, Error, FeatureId, FeatureMatrix, FeatureValues, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per node; `None` means `max(1, p / 3)`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 3).max(1))
    }
}

/// How to schedule tree-level work. Both give identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    /// Per tree, how often each training row was drawn.
    in_bag: Vec<Vec<u32>>,
    features: Vec<FeatureId>,
    n_train: usize,
    mtry: usize,
    params: ForestParams,
}

fn bootstrap_counts(n: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

/// Fits a forest using the rayon thread pool.
pub fn fit_forest(x: &FeatureMatrix, y: &[f64], params: &ForestParams) -> Result<Forest> {
    fit_forest_with(x, y, params, Execution::Parallel)
}

pub fn fit_forest_with(
    x: &FeatureMatrix,
    y: &[f64],
    params: &ForestParams,
    execution: Execution,
) -> Result<Forest> {
    let n = x.n_rows();
    let p = x.n_features();
    if n == 0 || p == 0 {
        return Err(Error::EmptyInput);
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if y.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParams("n_trees must be at least 1".into()));
    }
    let mtry = params.resolved_mtry(p);
    if mtry == 0 || mtry > p {
        return Err(Error::InvalidParams(format!("mtry must be in 1..={p}, got {mtry}")));
    }
    let grow = GrowParams::forest(mtry);

    let build = |t: usize| -> Result<(Tree, Vec<u32>)> {
        let mut rng = seeds::stream(params.seed, &[seeds::tag::FOREST, t as u64]);
        let counts = if params.bootstrap {
            bootstrap_counts(n, &mut rng)
        } else {
            vec![1; n]
        };
        let rows: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
            .collect();
        let tree = grow_tree_with_rng(&rows, x, y, &grow, &mut rng)?;
        Ok((tree, counts))
    };
    let built: Vec<(Tree, Vec<u32>)> = match execution {
        Execution::Serial => (0..params.n_trees).map(build).collect::<Result<_>>()?,
        Execution::Parallel => (0..params.n_trees)
            .into_par_iter()
            .map(build)
            .collect::<Result<_>>()?,
    };
    let (trees, in_bag) = built.into_iter().unzip();
    Ok(Forest {
        trees,
        in_bag,
        features: x.features().to_vec(),
        n_train: n,
        mtry,
        params: *params,
    })
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn features(&self) -> &[FeatureId] {
        &self.features
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// How often each training row entered tree `t`'s bootstrap sample.
    pub fn in_bag_counts(&self, t: usize) -> &[u32] {
        &self.in_bag[t]
    }

    /// Training rows absent from tree `t`'s bootstrap sample. Empty when the
    /// forest was fitted without bootstrap.
    pub fn oob_rows(&self, t: usize) -> Vec<usize> {
        if !self.params.bootstrap {
            return Vec::new();
        }
        self.in_bag[t]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        predict_forest(self, x)
    }

    pub fn predict_one(&self, x: &FeatureValues) -> Result<f64> {
        for &f in &self.features {
            x.require(f)?;
        }
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| t.predict_row(|f| x.get(f).unwrap_or_default()))
            .sum();
        Ok(sum / self.trees.len() as f64)
    }

    fn positions(&self, x: &FeatureMatrix) -> Result<[usize; FeatureId::COUNT]> {
        let mut pos = [usize::MAX; FeatureId::COUNT];
        for &f in &self.features {
            pos[f.index()] = x.position(f).ok_or(Error::MissingFeature(f))?;
        }
        Ok(pos)
    }

    fn check_training_shape(&self, x: &FeatureMatrix, y: &[f64]) -> Result<()> {
        if x.n_rows() != self.n_train || y.len() != self.n_train {
            return Err(Error::LengthMismatch {
                left: self.n_train,
                right: x.n_rows().min(y.len()),
            });
        }
        Ok(())
    }
}

/// Unweighted mean of the tree predictions for every row of `x`.
pub fn predict_forest(forest: &Forest, x: &FeatureMatrix) -> Result<Vec<f64>> {
    let pos = forest.positions(x)?;
    let mut out = vec![0.0; x.n_rows()];
    for tree in &forest.trees {
        for (i, o) in out.iter_mut().enumerate() {
            *o += tree.predict_row(|f| x.column_at(pos[f.index()])[i]);
        }
    }
    let k = forest.trees.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

/// Out-of-bag error of a forest on its own training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OobError {
    pub mse: f64,
    /// Rows that were out-of-bag for at least one tree.
    pub n_covered: usize,
    /// Rows that were in every bootstrap sample and so were left out.
    pub uncovered: Vec<usize>,
}

/// MSE of per-row OOB predictions (mean over the trees for which the row
/// was out-of-bag). `x` and `y` must be the training data.
pub fn oob_error(forest: &Forest, x: &FeatureMatrix, y: &[f64]) -> Result<OobError> {
    if !forest.params.bootstrap {
        return Err(Error::NoOutOfBag);
    }
    forest.check_training_shape(x, y)?;
    let pos = forest.positions(x)?;
    let n = forest.n_train;
    let mut sum = vec![0.0; n];
    let mut hits = vec![0u32; n];
    for (tree, counts) in forest.trees.iter().zip(&forest.in_bag) {
        for i in (0..n).filter(|&i| counts[i] == 0) {
            sum[i] += tree.predict_row(|f| x.column_at(pos[f.index()])[i]);
            hits[i] += 1;
        }
    }
    let mut se = 0.0;
    let mut uncovered = Vec::new();
    for i in 0..n {
        if hits[i] == 0 {
            uncovered.push(i);
            continue;
        }
        let e = y[i] - sum[i] / hits[i] as f64;
        se += e * e;
    }
    let n_covered = n - uncovered.len();
    if n_covered == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(OobError {
        mse: se / n_covered as f64,
        n_covered,
        uncovered,
    })
}

/// Permutation importance of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: FeatureId,
    /// Mean over trees of (permuted OOB MSE − OOB MSE).
    pub raw_increase: f64,
    /// Standard deviation of those differences across trees.
    pub sd: f64,
    /// `raw_increase / sd`, or 0 when `sd` is 0.
    pub normalized: f64,
    /// `100 · raw_increase / forest OOB MSE`.
    pub percent_inc_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// In the forest's feature order.
    pub features: Vec<FeatureImportance>,
    /// Features by descending normalized score, ties by FeatureId.
    pub ranking: Vec<FeatureId>,
    pub oob_mse: f64,
    /// Trees with a non-empty OOB set, i.e. those that contributed.
    pub n_trees_used: usize,
    pub perm_seed: u64,
}

impl ImportanceReport {
    pub fn get(&self, id: FeatureId) -> Option<&FeatureImportance> {
        self.features.iter().find(|f| f.feature == id)
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Per tree and feature: the increase in the tree's OOB MSE after permuting
/// that feature among the tree's OOB rows. Differences are averaged over
/// trees and divided by their standard deviation.
pub fn permutation_importance(
    forest: &Forest,
    x: &FeatureMatrix,
    y: &[f64],
    perm_seed: u64,
) -> Result<ImportanceReport> {
    permutation_importance_with(forest, x, y, perm_seed, Execution::Parallel)
}

pub fn permutation_importance_with(
    forest: &Forest,
    x: &FeatureMatrix,
    y: &[f64],
    perm_seed: u64,
    execution: Execution,
) -> Result<ImportanceReport> {
    if !forest.params.bootstrap {
        return Err(Error::NoOutOfBag);
    }
    forest.check_training_shape(x, y)?;
    let pos = forest.positions(x)?;
    let overall = oob_error(forest, x, y)?;

    // Per tree: Some(diff per feature) if the tree has OOB rows.
    let per_tree = |t: usize| -> Option<Vec<f64>> {
        let oob = forest.oob_rows(t);
        if oob.is_empty() {
            return None;
        }
        let tree = &forest.trees[t];
        let value = |f: FeatureId, i: usize| x.column_at(pos[f.index()])[i];
        let mse = |pred: &dyn Fn(usize, usize) -> f64| -> f64 {
            oob.iter()
                .enumerate()
                .map(|(k, &i)| {
                    let e = y[i] - pred(k, i);
                    e * e
                })
                .sum::<f64>()
                / oob.len() as f64
        };
        let base = mse(&|_, i| tree.predict_row(|f| value(f, i)));
        let diffs = forest
            .features
            .iter()
            .enumerate()
            .map(|(j, &feature)| {
                let mut rng = seeds::stream(
                    perm_seed,
                    &[seeds::tag::PERMUTATION, t as u64, j as u64],
                );
                let mut permuted: Vec<usize> = oob.clone();
                for a in (1..permuted.len()).rev() {
                    let b = rng.random_range(0..=a);
                    permuted.swap(a, b);
                }
                let shuffled = mse(&|k, i| {
                    tree.predict_row(|f| if f == feature { value(f, permuted[k]) } else { value(f, i) })
                });
                shuffled - base
            })
            .collect();
        Some(diffs)
    };
    let results: Vec<Option<Vec<f64>>> = match execution {
        Execution::Serial => (0..forest.trees.len()).map(per_tree).collect(),
        Execution::Parallel => (0..forest.trees.len()).into_par_iter().map(per_tree).collect(),
    };
    let used: Vec<Vec<f64>> = results.into_iter().flatten().collect();

    let features: Vec<FeatureImportance> = forest
        .features
        .iter()
        .enumerate()
        .map(|(j, &feature)| {
            let diffs: Vec<f64> = used.iter().map(|d| d[j]).collect();
            let (raw, sd) = mean_sd(&diffs);
            FeatureImportance {
                feature,
                raw_increase: raw,
                sd,
                normalized: if sd > 0.0 { raw / sd } else { 0.0 },
                percent_inc_mse: if overall.mse > 0.0 {
                    100.0 * raw / overall.mse
                } else {
                    0.0
                },
            }
        })
        .collect();
    let mut ranking: Vec<(FeatureId, f64)> =
        features.iter().map(|f| (f.feature, f.normalized)).collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ImportanceReport {
        features,
        ranking: ranking.into_iter().map(|(f, _)| f).collect(),
        oob_mse: overall.mse,
        n_trees_used: used.len(),
        perm_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::grow_tree;
    use crate::FeatureId::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noisy(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = a.iter().zip(&b).map(|(a, b)| 2.0 * a + (3.0 * b).sin()).collect();
        (FeatureMatrix::new(vec![A, B, C], vec![a, b, c]).unwrap(), y)
    }

    #[test]
    fn degenerate_forest_matches_single_tree() {
        let (x, y) = noisy(120, 1);
        let params = ForestParams {
            n_trees: 1,
            mtry: Some(3),
            bootstrap: false,
            seed: 4,
        };
        let forest = fit_forest(&x, &y, &params).unwrap();
        let rows: Vec<usize> = (0..120).collect();
        let tree = grow_tree(&rows, &x, &y, &GrowParams::forest(3)).unwrap();
        assert_eq!(forest.predict(&x).unwrap(), tree.predict(&x).unwrap());
        assert!(forest.oob_rows(0).is_empty());
        assert!(matches!(oob_error(&forest, &x, &y), Err(Error::NoOutOfBag)));
    }

    #[test]
    fn bootstrap_bookkeeping() {
        let (x, y) = noisy(200, 2);
        let forest = fit_forest(&x, &y, &ForestParams { n_trees: 10, ..Default::default() }).unwrap();
        for t in 0..10 {
            let counts = forest.in_bag_counts(t);
            assert_eq!(counts.iter().map(|&c| c as usize).sum::<usize>(), 200);
            let oob = forest.oob_rows(t);
            assert!(oob.iter().all(|&i| counts[i] == 0));
            assert_eq!(oob.len(), counts.iter().filter(|&&c| c == 0).count());
            assert_eq!(forest.trees()[t].n_train(), 200);
        }
        assert_eq!(forest.mtry(), 1);
    }

    #[test]
    fn validation_errors() {
        let (x, y) = noisy(20, 3);
        let bad = |p: ForestParams| fit_forest(&x, &y, &p).is_err();
        assert!(bad(ForestParams { n_trees: 0, ..Default::default() }));
        assert!(bad(ForestParams { mtry: Some(4), ..Default::default() }));
        assert!(bad(ForestParams { mtry: Some(0), ..Default::default() }));
        let one = FeatureMatrix::new(vec![A], vec![vec![1.0]]).unwrap();
        assert!(fit_forest(&one, &[1.0], &ForestParams::default()).is_err());
    }

    #[test]
    fn planted_signal_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = FeatureMatrix::new(vec![A, B], vec![a.clone(), b]).unwrap();
        for seed in 0..5 {
            let forest = fit_forest(&x, &a, &ForestParams { n_trees: 30, seed, ..Default::default() }).unwrap();
            let rep = permutation_importance(&forest, &x, &a, seed).unwrap();
            assert_eq!(rep.ranking, vec![A, B]);
            assert!(rep.get(A).unwrap().normalized > rep.get(B).unwrap().normalized);
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let (x, y) = noisy(150, 5);
        let p = ForestParams { n_trees: 12, seed: 9, ..Default::default() };
        let a = fit_forest_with(&x, &y, &p, Execution::Serial).unwrap();
        let b = fit_forest_with(&x, &y, &p, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let ia = permutation_importance_with(&a, &x, &y, 3, Execution::Serial).unwrap();
        let ib = permutation_importance_with(&b, &x, &y, 3, Execution::Parallel).unwrap();
        assert_eq!(ia, ib);
    }
}
