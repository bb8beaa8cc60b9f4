//! Synthetic process data with a planted importance structure.
//!
//! Features come from a linear-Gaussian latent-factor model: each
//! `(a, b, loading)` pair adds `loading · z` of a shared factor `z` to both
//! columns, and every column is topped up with independent noise to unit
//! variance, so the pair correlates at about `loading²`. Columns are then
//! standardized and the target is
//!
//! ```text
//! NT = Σ coef_j · x_j + interaction · max(0, x_A) · x_B + N(0, noise_sd²)
//! ```
//!
//! Outlier rows have one feature replaced by a ±8 spike after NT is computed,
//! and are flagged.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::{seeds, Error, FeatureId, Result};

/// Magnitude of an outlier spike in standard deviations.
pub const SPIKE: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loading {
    pub a: FeatureId,
    pub b: FeatureId,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_rows: usize,
    /// Linear weights in the NT equation; absent features weigh 0.
    pub coefficients: BTreeMap<FeatureId, f64>,
    pub cross_correlations: Vec<Loading>,
    /// Weight of the `max(0, x_A) · x_B` term.
    pub interaction: f64,
    pub noise_sd: f64,
    pub outlier_count: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        use FeatureId::*;
        Self {
            n_rows: 14_252,
            coefficients: [
                (A, -1.0),
                (B, 2.5),
                (C, 0.0),
                (D, 0.3),
                (E, 0.3),
                (F, 0.24),
                (G, 0.42),
                (H, -0.8),
            ]
            .into_iter()
            .collect(),
            cross_correlations: vec![
                Loading { a: A, b: H, loading: 0.72 },
                Loading { a: B, b: D, loading: 0.4 },
            ],
            interaction: 1.7,
            noise_sd: 0.15,
            outlier_count: 23,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn coefficient(&self, id: FeatureId) -> f64 {
        self.coefficients.get(&id).copied().unwrap_or(0.0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidParams(format!("generator config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.n_rows < 2 {
            return bad(format!("n_rows must be at least 2, got {}", self.n_rows));
        }
        if self.outlier_count >= self.n_rows {
            return bad(format!(
                "outlier_count {} must be below n_rows {}",
                self.outlier_count, self.n_rows
            ));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return bad(format!("noise_sd must be finite and non-negative, got {}", self.noise_sd));
        }
        if !self.interaction.is_finite() || self.coefficients.values().any(|c| !c.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        let mut shared = [0.0; FeatureId::COUNT];
        for l in &self.cross_correlations {
            if l.a == l.b {
                return bad(format!("loading pairs {} with itself", l.a));
            }
            if !(l.loading.is_finite() && l.loading.abs() <= 1.0) {
                return bad(format!("loading {} is outside [-1, 1]", l.loading));
            }
            shared[l.a.index()] += l.loading * l.loading;
            shared[l.b.index()] += l.loading * l.loading;
        }
        if let Some(j) = shared.iter().position(|&s| s > 1.0) {
            return bad(format!(
                "squared loadings on {} sum to {:.3} > 1",
                FeatureId::ALL[j],
                shared[j]
            ));
        }
        Ok(())
    }
}

fn standardize(col: &mut [f64]) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    for v in col.iter_mut() {
        *v -= mean;
        if sd > 0.0 {
            *v /= sd;
        }
    }
}

/// Draws a dataset; identical configs give bit-identical output.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let n = config.n_rows;
    let mut rng = seeds::stream(config.seed, &[seeds::tag::GENERATOR]);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };

    let mut columns: [Vec<f64>; FeatureId::COUNT] = std::array::from_fn(|_| vec![0.0; n]);
    let mut shared = [0.0; FeatureId::COUNT];
    for l in &config.cross_correlations {
        let z = normal(&mut rng);
        for id in [l.a, l.b] {
            for (c, zi) in columns[id.index()].iter_mut().zip(&z) {
                *c += l.loading * zi;
            }
            shared[id.index()] += l.loading * l.loading;
        }
    }
    for (j, col) in columns.iter_mut().enumerate() {
        let scale = (1.0 - shared[j]).max(0.0).sqrt();
        let e = normal(&mut rng);
        for (c, ei) in col.iter_mut().zip(&e) {
            *c += scale * ei;
        }
        standardize(col);
    }

    let noise = normal(&mut rng);
    let (a, b) = (&columns[FeatureId::A.index()], &columns[FeatureId::B.index()]);
    let mut target: Vec<f64> = (0..n)
        .map(|i| config.interaction * a[i].max(0.0) * b[i] + config.noise_sd * noise[i])
        .collect();
    for id in FeatureId::ALL {
        let c = config.coefficient(id);
        if c != 0.0 {
            for (t, x) in target.iter_mut().zip(&columns[id.index()]) {
                *t += c * x;
            }
        }
    }

    let mut outlier = vec![false; n];
    for row in index::sample(&mut rng, n, config.outlier_count) {
        let feature = rng.random_range(0..FeatureId::COUNT);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        columns[feature][row] = sign * SPIKE;
        outlier[row] = true;
    }
    Dataset::new(columns, target, outlier)
}
