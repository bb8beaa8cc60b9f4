//! Forward selection over a ranking, test-set evaluation and fallback
//! prediction when some sensors are unavailable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cart::{grow_tree, prune_tree, GrowParams, Tree};
use crate::dataio::{Dataset, SplitIndices};
use crate::forest::{fit_forest, Forest, ForestParams};
use crate::importance::FeatureRanking;
use crate::linreg::{fit_ols, LinearModel};
use crate::metrics::{CorrDisplay, MetricsRow};
use crate::{format_features, Error, FeatureId, FeatureMatrix, FeatureValues, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Linear,
    Tree,
    Forest,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Linear, ModelFamily::Tree, ModelFamily::Forest];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Tree => "tree",
            ModelFamily::Forest => "forest",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "lm" => Ok(ModelFamily::Linear),
            "tree" | "cart" => Ok(ModelFamily::Tree),
            "forest" | "rf" => Ok(ModelFamily::Forest),
            _ => Err(Error::InvalidParams(format!(
                "unknown model family {s:?} (expected linear, tree or forest)"
            ))),
        }
    }
}

/// What to fit: a family plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear,
    /// Grown with `params`, then pruned at `params.cp`.
    Tree { params: GrowParams },
    Forest { params: ForestParams },
}

impl ModelSpec {
    pub fn default_for(family: ModelFamily, seed: u64) -> Self {
        match family {
            ModelFamily::Linear => ModelSpec::Linear,
            ModelFamily::Tree => ModelSpec::Tree {
                params: GrowParams::default(),
            },
            ModelFamily::Forest => ModelSpec::Forest {
                params: ForestParams {
                    seed,
                    ..Default::default()
                },
            },
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Linear => ModelFamily::Linear,
            ModelSpec::Tree { .. } => ModelFamily::Tree,
            ModelSpec::Forest { .. } => ModelFamily::Forest,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ModelSpec::Forest { params } => Some(params.seed),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Linear => Ok(()),
            ModelSpec::Tree { params } => {
                if params.feature_subsample.is_some() {
                    return Err(Error::InvalidParams(
                        "a single tree considers every feature".into(),
                    ));
                }
                params.validate()
            }
            ModelSpec::Forest { params } => {
                if params.n_trees == 0 {
                    return Err(Error::InvalidParams("n_trees must be at least 1".into()));
                }
                Ok(())
            }
        }
    }
}

/// A trained model of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "model", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Tree(Tree),
    Forest(Forest),
}

impl Model {
    pub fn family(&self) -> ModelFamily {
        match self {
            Model::Linear(_) => ModelFamily::Linear,
            Model::Tree(_) => ModelFamily::Tree,
            Model::Forest(_) => ModelFamily::Forest,
        }
    }

    /// Features the model was trained on.
    pub fn features(&self) -> &[FeatureId] {
        match self {
            Model::Linear(m) => &m.features,
            Model::Tree(t) => t.features(),
            Model::Forest(f) => f.features(),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::Tree(t) => t.predict(x),
            Model::Forest(f) => f.predict(x),
        }
    }

    pub fn predict_one(&self, x: &FeatureValues) -> Result<f64> {
        match self {
            Model::Linear(m) => m.predict_one(x),
            Model::Tree(t) => t.predict_one(x),
            Model::Forest(f) => f.predict_one(x),
        }
    }
}

/// Fits `spec` on every column of `x`.
pub fn fit_model(spec: &ModelSpec, x: &FeatureMatrix, y: &[f64]) -> Result<Model> {
    spec.validate()?;
    match spec {
        ModelSpec::Linear => fit_ols(x, y).map(Model::Linear),
        ModelSpec::Tree { params } => {
            let rows: Vec<usize> = (0..x.n_rows()).collect();
            let grown = grow_tree(&rows, x, y, params)?;
            Ok(Model::Tree(prune_tree(&grown, params.cp)))
        }
        ModelSpec::Forest { params } => fit_forest(x, y, params).map(Model::Forest),
    }
}

/// Fits `spec` on the training rows restricted to `features`.
pub fn fit_on_train(
    data: &Dataset,
    split: &SplitIndices,
    features: &[FeatureId],
    spec: &ModelSpec,
) -> Result<Model> {
    if features.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (x, y) = data.design(features, &split.train)?;
    fit_model(spec, &x, &y)
}

fn score(model: &Model, data: &Dataset, rows: &[usize]) -> Result<MetricsRow> {
    let (x, y) = data.design(model.features(), rows)?;
    MetricsRow::compute(&y, &model.predict(&x)?)
}

/// One nested subset of a forward-selection sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    /// Number of features, starting at 1.
    pub rank: usize,
    pub features: Vec<FeatureId>,
    /// Validation metrics, absent if the fit failed.
    pub metrics: Option<MetricsRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    pub ranking_used: FeatureRanking,
    pub model: ModelSpec,
    pub split_seed: u64,
}

impl SelectionReport {
    pub fn rmse(&self, rank: usize) -> Option<f64> {
        self.rows.get(rank.checked_sub(1)?)?.metrics.map(|m| m.rmse)
    }

    /// `rank,rmse,mae,corr,features`; failed fits print `n/a` metrics.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,rmse,mae,corr,features\n");
        for row in &self.rows {
            let features = format_features(&row.features);
            match &row.metrics {
                Some(m) => out.push_str(&format!(
                    "{},{:.5},{:.5},{},\"{}\"\n",
                    row.rank,
                    m.rmse,
                    m.mae,
                    CorrDisplay(m.corr),
                    features
                )),
                None => out.push_str(&format!("{},n/a,n/a,n/a,\"{features}\"\n", row.rank)),
            }
        }
        out
    }
}

/// Fits `spec` on the first 1, 2, …, p ranked features using the training
/// rows and scores each on the validation rows. A failed fit is recorded in
/// its row and the sweep continues.
pub fn forward_selection(
    data: &Dataset,
    split: &SplitIndices,
    ranking: &FeatureRanking,
    spec: &ModelSpec,
) -> Result<SelectionReport> {
    let order = ranking.features();
    if order.is_empty() {
        return Err(Error::EmptyInput);
    }
    spec.validate()?;
    check_split(data, split)?;
    let rows = (1..=order.len())
        .map(|rank| {
            let features = order[..rank].to_vec();
            let result = fit_on_train(data, split, &features, spec)
                .and_then(|m| score(&m, data, &split.validation));
            let (metrics, error) = match result {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SelectionRow {
                rank,
                features,
                metrics,
                error,
            }
        })
        .collect();
    Ok(SelectionReport {
        rows,
        ranking_used: ranking.clone(),
        model: *spec,
        split_seed: split.seed,
    })
}

fn check_split(data: &Dataset, split: &SplitIndices) -> Result<()> {
    if split.n_rows() != data.n_rows() {
        return Err(Error::LengthMismatch {
            left: data.n_rows(),
            right: split.n_rows(),
        });
    }
    Ok(())
}

/// Fits on the training rows and scores on the held-out test rows.
pub fn evaluate_on_test(
    data: &Dataset,
    split: &SplitIndices,
    features: &[FeatureId],
    spec: &ModelSpec,
) -> Result<MetricsRow> {
    check_split(data, split)?;
    let model = fit_on_train(data, split, features, spec)?;
    score(&model, data, &split.test)
}

/// Models for the nested prefixes of one ranking; `models[i]` uses the
/// first `i + 1` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixModels {
    pub ranking: Vec<FeatureId>,
    pub models: Vec<Model>,
}

impl PrefixModels {
    /// Fits prefixes of length 1..=`max_len` on `rows`.
    pub fn fit(
        data: &Dataset,
        rows: &[usize],
        ranking: &[FeatureId],
        max_len: usize,
        spec: &ModelSpec,
    ) -> Result<Self> {
        if ranking.is_empty() || max_len == 0 {
            return Err(Error::EmptyInput);
        }
        let len = max_len.min(ranking.len());
        let models = (1..=len)
            .map(|k| {
                let (x, y) = data.design(&ranking[..k], rows)?;
                fit_model(spec, &x, &y)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ranking: ranking[..len].to_vec(),
            models,
        })
    }

    pub fn full(&self) -> &Model {
        self.models.last().expect("at least one prefix model")
    }

    /// Longest prefix whose features are all in `available`.
    pub fn route(&self, available: &[FeatureId]) -> Option<usize> {
        let n = self
            .ranking
            .iter()
            .take_while(|f| available.contains(f))
            .count()
            .min(self.models.len());
        n.checked_sub(1)
    }
}

/// Predicts with the largest prefix model whose features are all
/// available, returning the prediction and the subset that served it.
pub fn fallback_predict(
    models: &PrefixModels,
    available: &[FeatureId],
    x: &FeatureValues,
) -> Result<(f64, Vec<FeatureId>)> {
    let Some(i) = models.route(available) else {
        let mut available = available.to_vec();
        available.sort();
        available.dedup();
        return Err(Error::NoModel { available });
    };
    let model = &models.models[i];
    Ok((model.predict_one(x)?, model.features().to_vec()))
}
