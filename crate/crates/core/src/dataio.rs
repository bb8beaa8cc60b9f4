//! Loading, validating, normalizing, filtering and splitting process data.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seeds, Error, FeatureId, FeatureMatrix, FeatureValues, Result};

/// Name of the target column in CSV files.
pub const TARGET_COLUMN: &str = "NT";
/// Name of the optional outlier-flag column in CSV files.
pub const OUTLIER_COLUMN: &str = "OUTLIER";

/// Process measurements: one column per feature plus the NT target and a
/// per-row outlier flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: [Vec<f64>; FeatureId::COUNT],
    target: Vec<f64>,
    outlier: Vec<bool>,
}

impl Dataset {
    /// Validates lengths and finiteness.
    pub fn new(
        columns: [Vec<f64>; FeatureId::COUNT],
        target: Vec<f64>,
        outlier: Vec<bool>,
    ) -> Result<Self> {
        let n = target.len();
        for (id, col) in FeatureId::ALL.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "non-finite value in column {id} at row {row}"
                )));
            }
        }
        if outlier.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: outlier.len(),
            });
        }
        if let Some(row) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite target at row {row}"
            )));
        }
        Ok(Self {
            columns,
            target,
            outlier,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn column(&self, id: FeatureId) -> &[f64] {
        &self.columns[id.index()]
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn outlier_flags(&self) -> &[bool] {
        &self.outlier
    }

    pub fn n_flagged(&self) -> usize {
        self.outlier.iter().filter(|&&f| f).count()
    }

    pub fn row(&self, i: usize) -> FeatureValues {
        FeatureValues::from_pairs(FeatureId::ALL.iter().map(|&id| (id, self.columns[id.index()][i])))
    }

    /// Copies the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |c: &Vec<f64>| rows.iter().map(|&r| c[r]).collect::<Vec<_>>();
        Dataset {
            columns: std::array::from_fn(|j| pick(&self.columns[j])),
            target: pick(&self.target),
            outlier: rows.iter().map(|&r| self.outlier[r]).collect(),
        }
    }

    /// Design matrix over `features` restricted to `rows`, plus the matching
    /// targets.
    pub fn design(&self, features: &[FeatureId], rows: &[usize]) -> Result<(FeatureMatrix, Vec<f64>)> {
        let columns = features
            .iter()
            .map(|&id| rows.iter().map(|&r| self.columns[id.index()][r]).collect())
            .collect();
        let x = FeatureMatrix::new(features.to_vec(), columns)?;
        let y = rows.iter().map(|&r| self.target[r]).collect();
        Ok((x, y))
    }
}

/// Loads a dataset with header `A,B,C,D,E,F,G,H,NT[,OUTLIER]`.
///
/// Columns may appear in any order; extra columns are ignored. Row numbers
/// in errors are 1-based data rows (the header is row 0).
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut raw = String::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_string(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    parse_csv(&raw)
}

/// Parses CSV text in the [`load_csv`] schema.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    if text.trim().is_empty() {
        return Err(Error::EmptyFile);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);

    let mut feature_pos = [0usize; FeatureId::COUNT];
    for id in FeatureId::ALL {
        feature_pos[id.index()] = find(id.code()).ok_or_else(|| Error::MissingColumn {
            column: id.code().to_string(),
        })?;
    }
    let target_pos = find(TARGET_COLUMN).ok_or_else(|| Error::MissingColumn {
        column: TARGET_COLUMN.to_string(),
    })?;
    let outlier_pos = find(OUTLIER_COLUMN);

    let mut columns: [Vec<f64>; FeatureId::COUNT] = Default::default();
    let mut target = Vec::new();
    let mut outlier = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let cell = |pos: usize, name: &str| -> Result<f64> {
            let s = record.get(pos).unwrap_or("");
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("`{s}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("`{s}` is not finite"),
                });
            }
            Ok(v)
        };
        for id in FeatureId::ALL {
            columns[id.index()].push(cell(feature_pos[id.index()], id.code())?);
        }
        target.push(cell(target_pos, TARGET_COLUMN)?);
        let flag = match outlier_pos {
            None => false,
            Some(pos) => match record.get(pos).unwrap_or("") {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        row,
                        column: OUTLIER_COLUMN.to_string(),
                        message: format!("`{other}` is not 0 or 1"),
                    })
                }
            },
        };
        outlier.push(flag);
    }
    if target.is_empty() {
        return Err(Error::EmptyFile);
    }
    Dataset::new(columns, target, outlier)
}

/// Feature rows for prediction: whichever of A..H the file provides.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    /// Feature columns found in the header, canonical order.
    pub present: Vec<FeatureId>,
    pub rows: Vec<FeatureValues>,
}

/// Reads feature values from a CSV whose header names any subset of A..H;
/// other columns (NT, OUTLIER, …) are ignored.
pub fn load_feature_table(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feature_table(&text)
}

pub fn parse_feature_table(text: &str) -> Result<FeatureTable> {
    if text.trim().is_empty() {
        return Err(Error::EmptyFile);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let present: Vec<(FeatureId, usize)> = FeatureId::ALL
        .iter()
        .filter_map(|&id| header.iter().position(|h| h == id.code()).map(|p| (id, p)))
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let mut values = FeatureValues::new();
        for &(id, pos) in &present {
            let s = record.get(pos).unwrap_or("");
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => values.set(id, v),
                _ => {
                    return Err(Error::Parse {
                        row: i + 1,
                        column: id.code().to_string(),
                        message: format!("`{s}` is not a finite number"),
                    })
                }
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(FeatureTable {
        present: present.into_iter().map(|(id, _)| id).collect(),
        rows,
    })
}

/// Writes the dataset in the [`load_csv`] schema, always including the
/// OUTLIER column. Values use the shortest representation that parses back
/// to the same `f64`.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(data.n_rows() * 160);
    write_csv_to(data, &mut out).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_csv_to(data: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    let header: Vec<&str> = FeatureId::ALL
        .iter()
        .map(|id| id.code())
        .chain([TARGET_COLUMN, OUTLIER_COLUMN])
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..data.n_rows() {
        for id in FeatureId::ALL {
            write!(w, "{},", data.column(id)[i])?;
        }
        writeln!(w, "{},{}", data.target[i], u8::from(data.outlier[i]))?;
    }
    Ok(())
}

/// Keeps only rows whose outlier flag is false, preserving order.
pub fn drop_flagged_outliers(data: &Dataset) -> Result<Dataset> {
    let keep: Vec<usize> = (0..data.n_rows()).filter(|&i| !data.outlier[i]).collect();
    if keep.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(data.select_rows(&keep))
}

/// A column of the dataset: one of the features or the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Column {
    Feature(FeatureId),
    Target,
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Feature(id) => write!(f, "{id}"),
            Column::Target => f.write_str(TARGET_COLUMN),
        }
    }
}

/// Mean and standard deviation of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub sd: f64,
}

impl ColumnStats {
    pub fn apply(&self, x: f64) -> f64 {
        if self.sd > 0.0 {
            (x - self.mean) / self.sd
        } else {
            x - self.mean
        }
    }

    pub fn invert(&self, z: f64) -> f64 {
        if self.sd > 0.0 {
            z * self.sd + self.mean
        } else {
            z + self.mean
        }
    }
}

/// Z-score parameters for every feature and the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub features: [ColumnStats; FeatureId::COUNT],
    pub target: ColumnStats,
    pub fitted_on: usize,
}

impl NormStats {
    pub fn feature(&self, id: FeatureId) -> ColumnStats {
        self.features[id.index()]
    }

    /// Normalizes whichever features are present in `x`.
    pub fn apply_values(&self, x: &FeatureValues) -> FeatureValues {
        FeatureValues::from_pairs(
            x.present()
                .into_iter()
                .map(|id| (id, self.feature(id).apply(x.get(id).unwrap_or_default()))),
        )
    }
}

/// Sample mean and standard deviation (divisor n−1).
fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> ColumnStats {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    ColumnStats {
        mean,
        sd: (ss / (n - 1) as f64).sqrt(),
    }
}

/// Fits z-score statistics on the given rows only.
pub fn zscore_fit(data: &Dataset, rows: &[usize]) -> Result<NormStats> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: rows.len(),
        });
    }
    let stats_of = |col: &[f64]| mean_sd(rows.iter().map(move |&r| col[r]));
    Ok(NormStats {
        features: std::array::from_fn(|j| stats_of(&data.columns[j])),
        target: stats_of(&data.target),
        fitted_on: rows.len(),
    })
}

/// Result of [`zscore_apply`].
#[derive(Debug, Clone)]
pub struct Normalized {
    pub data: Dataset,
    /// Columns whose fitted sd was zero; those were only mean-centered.
    pub degenerate: Vec<Column>,
}

/// Applies `(x − mean) / sd` to every cell. Zero-sd columns are centered and
/// reported.
pub fn zscore_apply(data: &Dataset, stats: &NormStats) -> Normalized {
    let mut degenerate = Vec::new();
    let columns = std::array::from_fn(|j| {
        let s = stats.features[j];
        if s.sd == 0.0 {
            degenerate.push(Column::Feature(FeatureId::ALL[j]));
        }
        data.columns[j].iter().map(|&x| s.apply(x)).collect()
    });
    if stats.target.sd == 0.0 {
        degenerate.push(Column::Target);
    }
    let target = data.target.iter().map(|&x| stats.target.apply(x)).collect();
    Normalized {
        data: Dataset {
            columns,
            target,
            outlier: data.outlier.clone(),
        },
        degenerate,
    }
}

/// Disjoint train / validation / test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitIndices {
    pub fn n_rows(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    /// Sizes for `n` rows: test = round(0.2n), validation = round(0.2(n − test)).
    pub fn sizes(n: usize) -> (usize, usize, usize) {
        let test = (0.2 * n as f64).round() as usize;
        let validation = (0.2 * (n - test) as f64).round() as usize;
        (n - test - validation, validation, test)
    }
}

/// Seeded Fisher–Yates shuffle of `0..n`, then test / validation / train
/// partition per [`SplitIndices::sizes`].
pub fn split_dataset(n: usize, seed: u64) -> Result<SplitIndices> {
    if n < 5 {
        return Err(Error::InsufficientData { needed: 5, got: n });
    }
    let mut rng = seeds::stream(seed, &[seeds::tag::SPLIT]);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let (_, n_val, n_test) = SplitIndices::sizes(n);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitIndices {
        test: sorted(&order[..n_test]),
        validation: sorted(&order[n_test..n_test + n_val]),
        train: sorted(&order[n_test + n_val..]),
        seed,
    })
}
