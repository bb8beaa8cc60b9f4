//! Independent reference implementations shared by the integration and
//! acceptance tests. They favour obviousness over speed.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softsense::cart::{GrowParams, Tree};
use softsense::{FeatureId, FeatureMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- OLS ----

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite")
}

/// Least-squares coefficients `[intercept, β…]` from the normal equations
/// solved in exact rational arithmetic.
pub fn ols_oracle(columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let k = columns.len() + 1;
    let design: Vec<Vec<BigRational>> = std::iter::once(vec![BigRational::from_integer(BigInt::from(1)); n])
        .chain(columns.iter().map(|c| c.iter().map(|&v| exact(v)).collect()))
        .collect();
    let ys: Vec<BigRational> = y.iter().map(|&v| exact(v)).collect();
    // Augmented Gram system [XᵀX | Xᵀy].
    let mut m: Vec<Vec<BigRational>> = (0..k)
        .map(|i| {
            let mut row: Vec<BigRational> = (0..k)
                .map(|j| {
                    design[i]
                        .iter()
                        .zip(&design[j])
                        .fold(BigRational::zero(), |acc, (a, b)| acc + a * b)
                })
                .collect();
            row.push(design[i].iter().zip(&ys).fold(BigRational::zero(), |acc, (a, b)| acc + a * b));
            row
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k).find(|&r| !m[r][col].is_zero()).expect("full rank");
        m.swap(col, pivot);
        for r in 0..k {
            if r != col && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[col][col];
                let pivot_row = m[col].clone();
                for (cell, p) in m[r].iter_mut().zip(&pivot_row).skip(col) {
                    *cell -= &f * p;
                }
            }
        }
    }
    (0..k).map(|i| (&m[i][k] / &m[i][i]).to_f64().unwrap()).collect()
}

/// A random regression problem on a dyadic grid, so the oracle's exact
/// arithmetic stays small.
pub fn random_problem(rng: &mut impl Rng, max_n: usize, max_p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = rng.random_range(1..=max_p);
    let n = rng.random_range(p + 2..=max_n);
    let grid = |rng: &mut dyn rand::RngCore| f64::from(rng.random_range(-4096i32..=4096)) / 1024.0;
    let columns: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| grid(rng)).collect()).collect();
    let y = (0..n).map(|_| grid(rng)).collect();
    (columns, y)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

// --------------------------------------------------------------- CART ----

/// A tree grown by brute force.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleNode {
    Leaf { value: f64, count: usize },
    Split {
        feature: FeatureId,
        threshold: f64,
        value: f64,
        count: usize,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
}

fn mean(rows: &[usize], y: &[f64]) -> f64 {
    rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64
}

fn sse(rows: &[usize], y: &[f64]) -> f64 {
    let m = mean(rows, y);
    rows.iter().map(|&r| (y[r] - m).powi(2)).sum()
}

/// Tries every feature and every midpoint between consecutive distinct
/// values, scoring each with directly computed child SSEs. Candidates are
/// visited in (feature, threshold) order and a later one only wins if it
/// beats the incumbent by more than the tie tolerance.
pub fn oracle_best_split(
    rows: &[usize],
    x: &FeatureMatrix,
    y: &[f64],
    params: &GrowParams,
) -> Option<(FeatureId, f64)> {
    let parent = sse(rows, y);
    let tol = 1e-10 * parent;
    let mut best: Option<(FeatureId, f64, f64)> = None;
    let mut ids = x.features().to_vec();
    ids.sort();
    for id in ids {
        let col = x.column(id).unwrap();
        let mut values: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let t = if mid >= w[1] { w[0] } else { mid };
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= t);
            if l.len() < params.min_leaf || r.len() < params.min_leaf {
                continue;
            }
            let gain = parent - sse(&l, y) - sse(&r, y);
            let beat = match best {
                None => gain > tol,
                Some((_, _, g)) => gain > g + tol,
            };
            if beat {
                best = Some((id, t, gain));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

pub fn oracle_grow(rows: &[usize], x: &FeatureMatrix, y: &[f64], params: &GrowParams, depth: usize) -> OracleNode {
    let value = mean(rows, y);
    let count = rows.len();
    let constant = rows.iter().all(|&r| y[r] == y[rows[0]]);
    let leaf = OracleNode::Leaf { value, count };
    if count < params.min_split || depth >= params.max_depth || constant || count < 2 * params.min_leaf {
        return leaf;
    }
    let Some((feature, threshold)) = oracle_best_split(rows, x, y, params) else {
        return leaf;
    };
    let col = x.column(feature).unwrap();
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= threshold);
    OracleNode::Split {
        feature,
        threshold,
        value,
        count,
        left: Box::new(oracle_grow(&l, x, y, params, depth + 1)),
        right: Box::new(oracle_grow(&r, x, y, params, depth + 1)),
    }
}

/// Exact structural equality between an arena tree and an oracle tree.
pub fn same_structure(tree: &Tree, node: usize, oracle: &OracleNode) -> bool {
    let n = &tree.nodes()[node];
    match (oracle, &n.split) {
        (OracleNode::Leaf { value, count }, None) => n.value.to_bits() == value.to_bits() && n.count == *count,
        (
            OracleNode::Split {
                feature,
                threshold,
                value,
                count,
                left,
                right,
            },
            Some(s),
        ) => {
            s.feature == *feature
                && s.threshold.to_bits() == threshold.to_bits()
                && n.value.to_bits() == value.to_bits()
                && n.count == *count
                && same_structure(tree, s.left, left)
                && same_structure(tree, s.right, right)
        }
        _ => false,
    }
}

pub fn oracle_predict(node: &OracleNode, x: &FeatureMatrix, row: usize) -> f64 {
    match node {
        OracleNode::Leaf { value, .. } => *value,
        OracleNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            if x.column(*feature).unwrap()[row] <= *threshold {
                oracle_predict(left, x, row)
            } else {
                oracle_predict(right, x, row)
            }
        }
    }
}

/// A small dataset with deliberately tied feature values and targets.
pub fn small_tree_problem(rng: &mut impl Rng) -> (FeatureMatrix, Vec<f64>) {
    let n = rng.random_range(1..=12);
    let p = rng.random_range(1..=3);
    let levels = rng.random_range(2..=6);
    let ids: Vec<FeatureId> = FeatureId::ALL[..p].to_vec();
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| f64::from(rng.random_range(0..levels)) * 0.5 - 1.0).collect())
        .collect();
    let y = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                f64::from(rng.random_range(0..4))
            } else {
                rng.random_range(-2.0..2.0)
            }
        })
        .collect();
    (FeatureMatrix::new(ids, columns).unwrap(), y)
}

// ------------------------------------------------------- contingency ----

/// Textbook Σ (O − E)² / E over a table of counts.
pub fn chi_squared_oracle(table: &[Vec<u64>]) -> f64 {
    let n: u64 = table.iter().flatten().sum();
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut chi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] as f64 * cols[j] as f64 / n as f64;
            if e > 0.0 {
                chi += (o as f64 - e).powi(2) / e;
            }
        }
    }
    chi
}

fn h(probs: impl Iterator<Item = f64>) -> f64 {
    -probs.filter(|&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

/// IG(T; X) / H(X) from a table of counts (rows = x bins).
pub fn gain_ratio_oracle(table: &[Vec<u64>]) -> f64 {
    let n = table.iter().flatten().sum::<u64>() as f64;
    let hx = h(table.iter().map(|r| r.iter().sum::<u64>() as f64 / n));
    if hx == 0.0 {
        return 0.0;
    }
    // H(T | X) = Σ_x p(x) H(T | X = x)
    let h_t_given_x: f64 = table
        .iter()
        .map(|r| {
            let nx = r.iter().sum::<u64>() as f64;
            if nx == 0.0 {
                0.0
            } else {
                nx / n * h(r.iter().map(|&c| c as f64 / nx))
            }
        })
        .sum();
    let k = table[0].len();
    let ht = h((0..k).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64 / n));
    (ht - h_t_given_x) / hx
}

pub fn table_from_labels(a: &[usize], b: &[usize], k: usize) -> Vec<Vec<u64>> {
    let mut t = vec![vec![0u64; k]; k];
    for (&i, &j) in a.iter().zip(b) {
        t[i][j] += 1;
    }
    t
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
