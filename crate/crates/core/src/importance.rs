//! Filter-based feature scores, rankings and the correlation matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{Column, Dataset};
use crate::forest::ImportanceReport;
use crate::metrics::pearson;
use crate::{format_features, Error, FeatureId, Result};

/// Default number of equal-frequency bins for the discrete filters.
pub const DEFAULT_BINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMethod {
    ChiSquared,
    GainRatio,
    Correlation,
    RfPermutation,
}

impl RankingMethod {
    pub const FILTERS: [RankingMethod; 3] = [
        RankingMethod::ChiSquared,
        RankingMethod::GainRatio,
        RankingMethod::Correlation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankingMethod::ChiSquared => "chi_squared",
            RankingMethod::GainRatio => "gain_ratio",
            RankingMethod::Correlation => "correlation",
            RankingMethod::RfPermutation => "rf_permutation",
        }
    }
}

impl fmt::Display for RankingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            RankingMethod::ChiSquared,
            RankingMethod::GainRatio,
            RankingMethod::Correlation,
            RankingMethod::RfPermutation,
        ]
        .into_iter()
        .find(|m| m.name() == s.trim().to_ascii_lowercase().replace('-', "_"))
        .ok_or_else(|| Error::InvalidParams(format!("unknown ranking method {s:?}")))
    }
}

/// Features in descending score order, ties by FeatureId.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub method: RankingMethod,
    pub entries: Vec<(FeatureId, f64)>,
    /// Features whose score fell back to 0 because an input was degenerate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<FeatureId>,
}

impl FeatureRanking {
    pub fn features(&self) -> Vec<FeatureId> {
        self.entries.iter().map(|&(f, _)| f).collect()
    }

    pub fn top(&self, k: usize) -> Vec<FeatureId> {
        self.entries.iter().take(k).map(|&(f, _)| f).collect()
    }

    pub fn last(&self) -> Option<FeatureId> {
        self.entries.last().map(|&(f, _)| f)
    }

    pub fn score(&self, id: FeatureId) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == id).map(|e| e.1)
    }

    /// A ranking with the given order and no scores, e.g. from user input.
    pub fn from_order(method: RankingMethod, order: &[FeatureId]) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = order.len();
        Ok(Self {
            method,
            entries: order.iter().enumerate().map(|(i, &f)| (f, (n - i) as f64)).collect(),
            degenerate: Vec::new(),
        })
    }
}

impl From<&ImportanceReport> for FeatureRanking {
    fn from(report: &ImportanceReport) -> Self {
        let score = |f: FeatureId| report.get(f).map_or(0.0, |i| i.normalized);
        Self {
            method: RankingMethod::RfPermutation,
            entries: report.ranking.iter().map(|&f| (f, score(f))).collect(),
            degenerate: Vec::new(),
        }
    }
}

pub fn rank_features(scores: &BTreeMap<FeatureId, f64>, method: RankingMethod) -> Result<FeatureRanking> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut entries: Vec<(FeatureId, f64)> = scores.iter().map(|(&f, &s)| (f, s)).collect();
    // Stable sort over FeatureId order keeps ties in canonical order.
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(FeatureRanking {
        method,
        entries,
        degenerate: Vec::new(),
    })
}

/// Equal-frequency bin labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binned {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Every value landed in one bin (e.g. a constant input).
    pub degenerate: bool,
}

/// Splits at the `i/k` quantiles of the sorted values; a value equal to a
/// boundary goes to the lower bin.
pub fn discretize_equal_frequency(values: &[f64], k: usize) -> Result<Binned> {
    if k < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 bins, got {k}")));
    }
    let n = values.len();
    if n < k {
        return Err(Error::InsufficientData { needed: k, got: n });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("cannot bin non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let boundaries: Vec<f64> = (1..k).map(|i| sorted[(i * n).div_ceil(k) - 1]).collect();
    let labels: Vec<usize> = values
        .iter()
        .map(|&v| boundaries.partition_point(|&b| b < v))
        .collect();
    let degenerate = labels.iter().all(|&l| l == labels[0]);
    Ok(Binned { labels, k, degenerate })
}

/// A filter score plus whether it fell back to 0 on degenerate input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterScore {
    pub score: f64,
    pub degenerate: bool,
}

impl FilterScore {
    const DEGENERATE: FilterScore = FilterScore {
        score: 0.0,
        degenerate: true,
    };
}

fn contingency(x: &[f64], target: &[f64], k: usize) -> Result<Option<Vec<Vec<f64>>>> {
    if x.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: target.len(),
        });
    }
    let bx = discretize_equal_frequency(x, k)?;
    let bt = discretize_equal_frequency(target, k)?;
    if bx.degenerate || bt.degenerate {
        return Ok(None);
    }
    let mut table = vec![vec![0.0; k]; k];
    for (&i, &j) in bx.labels.iter().zip(&bt.labels) {
        table[i][j] += 1.0;
    }
    Ok(Some(table))
}

fn margins(table: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, f64) {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let n = rows.iter().sum();
    (rows, cols, n)
}

/// Pearson χ² of the k×k table of binned `x` against binned `target`.
pub fn chi_squared_score(x: &[f64], target: &[f64], k: usize) -> Result<FilterScore> {
    let Some(table) = contingency(x, target, k)? else {
        return Ok(FilterScore::DEGENERATE);
    };
    let (rows, cols, n) = margins(&table);
    let mut chi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] * cols[j] / n;
            if e > 0.0 {
                chi += (o - e) * (o - e) / e;
            }
        }
    }
    Ok(FilterScore {
        score: chi,
        degenerate: false,
    })
}

fn entropy_bits(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / n;
            -p * p.log2()
        })
        .sum()
}

/// Information gain about binned `target` from binned `x`, divided by the
/// entropy of binned `x`.
pub fn gain_ratio_score(x: &[f64], target: &[f64], k: usize) -> Result<FilterScore> {
    let Some(table) = contingency(x, target, k)? else {
        return Ok(FilterScore::DEGENERATE);
    };
    let (rows, cols, n) = margins(&table);
    let hx = entropy_bits(rows.into_iter(), n);
    if hx == 0.0 {
        return Ok(FilterScore::DEGENERATE);
    }
    let ht = entropy_bits(cols.into_iter(), n);
    let hxt = entropy_bits(table.iter().flatten().copied(), n);
    Ok(FilterScore {
        score: ((hx + ht - hxt) / hx).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// `|pearson(x, target)|`, 0 when undefined.
pub fn correlation_filter_score(x: &[f64], target: &[f64]) -> Result<FilterScore> {
    Ok(match pearson(x, target)? {
        Some(r) => FilterScore {
            score: r.abs(),
            degenerate: false,
        },
        None => FilterScore::DEGENERATE,
    })
}

/// Scores every feature of `data` on `rows` with one filter method.
pub fn filter_ranking(
    data: &Dataset,
    rows: &[usize],
    method: RankingMethod,
    bins: usize,
) -> Result<FeatureRanking> {
    let target: Vec<f64> = rows.iter().map(|&i| data.target()[i]).collect();
    let mut scores = BTreeMap::new();
    let mut degenerate = Vec::new();
    for f in FeatureId::ALL {
        let col = data.column(f);
        let x: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
        let s = match method {
            RankingMethod::ChiSquared => chi_squared_score(&x, &target, bins)?,
            RankingMethod::GainRatio => gain_ratio_score(&x, &target, bins)?,
            RankingMethod::Correlation => correlation_filter_score(&x, &target)?,
            RankingMethod::RfPermutation => {
                return Err(Error::InvalidParams(
                    "permutation importance needs a fitted forest".into(),
                ))
            }
        };
        if s.degenerate {
            degenerate.push(f);
        }
        scores.insert(f, s.score);
    }
    let mut ranking = rank_features(&scores, method)?;
    ranking.degenerate = degenerate;
    Ok(ranking)
}

/// Rankings under all three filter methods.
pub fn filter_rankings(data: &Dataset, rows: &[usize], bins: usize) -> Result<Vec<FeatureRanking>> {
    RankingMethod::FILTERS
        .iter()
        .map(|&m| filter_ranking(data, rows, m, bins))
        .collect()
}

/// `method,ranking` rows with the ordered feature IDs, one per method.
pub fn rankings_csv(rankings: &[FeatureRanking]) -> String {
    let mut out = String::from("method,ranking\n");
    for r in rankings {
        out.push_str(&format!("{},\"{}\"\n", r.method, format_features(&r.features())));
    }
    out
}

/// Columns of the correlation matrix: A..H then NT.
pub const MATRIX_COLUMNS: [Column; 9] = [
    Column::Feature(FeatureId::A),
    Column::Feature(FeatureId::B),
    Column::Feature(FeatureId::C),
    Column::Feature(FeatureId::D),
    Column::Feature(FeatureId::E),
    Column::Feature(FeatureId::F),
    Column::Feature(FeatureId::G),
    Column::Feature(FeatureId::H),
    Column::Target,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    /// Row-major over [`MATRIX_COLUMNS`].
    pub values: [[f64; 9]; 9],
    /// Off-diagonal pairs whose correlation is undefined (rendered as 0).
    pub undefined: Vec<(Column, Column)>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: Column, b: Column) -> f64 {
        let idx = |c| MATRIX_COLUMNS.iter().position(|&m| m == c).expect("column in matrix");
        self.values[idx(a)][idx(b)]
    }

    pub fn to_csv(&self) -> String {
        let name = |c: &Column| match c {
            Column::Feature(f) => f.code().to_string(),
            Column::Target => "NT".to_string(),
        };
        let mut out = String::from("variable");
        for c in &MATRIX_COLUMNS {
            out.push(',');
            out.push_str(&name(c));
        }
        out.push('\n');
        for (c, row) in MATRIX_COLUMNS.iter().zip(&self.values) {
            out.push_str(&name(c));
            for v in row {
                out.push_str(&format!(",{v:.5}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn correlation_matrix(data: &Dataset) -> Result<CorrelationMatrix> {
    if data.n_rows() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: data.n_rows(),
        });
    }
    let col = |c: Column| match c {
        Column::Feature(f) => data.column(f),
        Column::Target => data.target(),
    };
    let mut values = [[0.0; 9]; 9];
    let mut undefined = Vec::new();
    for i in 0..9 {
        values[i][i] = 1.0;
        for j in i + 1..9 {
            let (a, b) = (MATRIX_COLUMNS[i], MATRIX_COLUMNS[j]);
            let r = match pearson(col(a), col(b))? {
                Some(r) => r,
                None => {
                    undefined.push((a, b));
                    0.0
                }
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { values, undefined })
}
