//! Ordinary least squares with an intercept, solved by Householder QR.

use serde::{Deserialize, Serialize};

use crate::{Error, FeatureId, FeatureMatrix, FeatureValues, Result};

/// A column whose norm after orthogonalization against the preceding
/// columns drops below this fraction of its original norm is collinear.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Fitted linear model `ŷ = intercept + Σ coef_j · x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    /// Aligned with `features`.
    pub coefficients: Vec<f64>,
    pub features: Vec<FeatureId>,
    pub training_n: usize,
}

impl LinearModel {
    pub fn coefficient(&self, id: FeatureId) -> Option<f64> {
        self.features
            .iter()
            .position(|&f| f == id)
            .map(|p| self.coefficients[p])
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        predict_linear(self, x)
    }

    pub fn predict_one(&self, x: &FeatureValues) -> Result<f64> {
        let mut acc = self.intercept;
        for (&id, &c) in self.features.iter().zip(&self.coefficients) {
            acc += c * x.require(id)?;
        }
        Ok(acc)
    }
}

/// Fits OLS with intercept on every column of `x`.
pub fn fit_ols(x: &FeatureMatrix, y: &[f64]) -> Result<LinearModel> {
    let n = x.n_rows();
    let p = x.n_features();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if n <= p {
        return Err(Error::TooFewRows { rows: n, params: p + 1 });
    }
    let k = p + 1;

    // Column-major design with the intercept first.
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(k);
    a.push(vec![1.0; n]);
    for j in 0..p {
        a.push(x.column_at(j).to_vec());
    }
    let original_norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();
    let mut rhs = y.to_vec();

    // `row` counts the reflections applied so far; it lags `j` once a
    // collinear column has been skipped.
    let mut collinear = Vec::new();
    let mut row = 0;
    for j in 0..k {
        let col_norm = norm(&a[j][row..]);
        if col_norm <= RANK_TOLERANCE * original_norms[j] {
            // j == 0 is the intercept, whose norm is sqrt(n) > 0.
            collinear.push(x.features()[j - 1]);
            continue;
        }
        householder_step(&mut a, &mut rhs, j, row, col_norm);
        row += 1;
    }
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }

    // Back substitution on the upper-triangular R stored in a[j][0..k].
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for j in i + 1..k {
            s -= a[j][i] * beta[j];
        }
        beta[i] = s / a[i][i];
    }
    Ok(LinearModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        features: x.features().to_vec(),
        training_n: n,
    })
}

fn norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

/// Reflects rows `row..` so that column `j` becomes `(r, 0, …, 0)` there,
/// applying the same reflection to the later columns and the right-hand side.
fn householder_step(a: &mut [Vec<f64>], rhs: &mut [f64], j: usize, row: usize, col_norm: f64) {
    let alpha = if a[j][row] >= 0.0 { -col_norm } else { col_norm };
    let mut v: Vec<f64> = a[j][row..].to_vec();
    v[0] -= alpha;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let reflect = |col: &mut [f64]| {
        let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
        let f = 2.0 * dot / vv;
        for (c, vi) in col.iter_mut().zip(&v) {
            *c -= f * vi;
        }
    };
    for col in a.iter_mut().skip(j + 1) {
        reflect(&mut col[row..]);
    }
    reflect(&mut rhs[row..]);
    a[j][row] = alpha;
    for c in &mut a[j][row + 1..] {
        *c = 0.0;
    }
}

/// Batch prediction; `x` must contain every model feature.
pub fn predict_linear(model: &LinearModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    let positions = x.positions_of(&model.features)?;
    let mut out = vec![model.intercept; x.n_rows()];
    for (&pos, &c) in positions.iter().zip(&model.coefficients) {
        for (o, v) in out.iter_mut().zip(x.column_at(pos)) {
            *o += c * v;
        }
    }
    Ok(out)
}
