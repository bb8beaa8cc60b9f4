//! Error and agreement metrics used in every result table.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < min_len {
        return Err(if a.is_empty() {
            Error::EmptyInput
        } else {
            Error::InsufficientData {
                needed: min_len,
                got: a.len(),
            }
        });
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred, 1)?;
    let ss: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok((ss / y_true.len() as f64).sqrt())
}

/// Mean absolute error.
pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred, 1)?;
    let s: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).abs()).sum();
    Ok(s / y_true.len() as f64)
}

/// Sample Pearson correlation. `Ok(None)` when either input has zero
/// variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// RMSE, MAE and correlation of one prediction run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when predictions or targets are constant.
    pub corr: Option<f64>,
    pub n: usize,
}

impl MetricsRow {
    pub fn compute(y_true: &[f64], y_pred: &[f64]) -> Result<Self> {
        let corr = if y_true.len() >= 2 {
            pearson(y_true, y_pred)?
        } else {
            None
        };
        Ok(Self {
            rmse: rmse(y_true, y_pred)?,
            mae: mae(y_true, y_pred)?,
            corr,
            n: y_true.len(),
        })
    }
}

/// Table formatting for a correlation: 5 decimals or `n/a`.
pub struct CorrDisplay(pub Option<f64>);

impl fmt::Display for CorrDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(r) => write!(f, "{r:.5}"),
            None => f.write_str("n/a"),
        }
    }
}
