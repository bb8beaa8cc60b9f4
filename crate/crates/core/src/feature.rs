use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One of the eight process variables.
///
/// The declaration order is the canonical column order and the tie-break
/// order used by every ranking and split search.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum FeatureId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl FeatureId {
    pub const COUNT: usize = 8;

    pub const ALL: [FeatureId; 8] = [
        FeatureId::A,
        FeatureId::B,
        FeatureId::C,
        FeatureId::D,
        FeatureId::E,
        FeatureId::F,
        FeatureId::G,
        FeatureId::H,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Short column code, e.g. `"A"`.
    pub fn code(self) -> &'static str {
        ["A", "B", "C", "D", "E", "F", "G", "H"][self.index()]
    }

    /// Plant variable name.
    pub fn long_name(self) -> &'static str {
        match self {
            FeatureId::A => "Raw-material",
            FeatureId::B => "Sulfur",
            FeatureId::C => "Dew-point",
            FeatureId::D => "Air-sulfur-oven",
            FeatureId::E => "Air-converter",
            FeatureId::F => "Air-SO3-filter",
            FeatureId::G => "Molar",
            FeatureId::H => "Molar-stp",
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FeatureId {
    type Err = Error;

    /// Accepts the short code or the long name, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        FeatureId::ALL
            .into_iter()
            .find(|id| id.code().eq_ignore_ascii_case(s) || id.long_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParams(format!("unknown feature `{s}`")))
    }
}

/// Formats a feature list the way the result tables do: `A,B,H`.
pub fn format_features(features: &[FeatureId]) -> String {
    features
        .iter()
        .map(|f| f.code())
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses a comma-separated feature list. Duplicates are rejected; an empty
/// string yields an empty list.
pub fn parse_feature_list(s: &str) -> Result<Vec<FeatureId>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let id: FeatureId = part.parse()?;
        if out.contains(&id) {
            return Err(Error::InvalidParams(format!("feature `{id}` listed twice")));
        }
        out.push(id);
    }
    Ok(out)
}

/// A single observation: a value per feature, possibly missing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeatureValues([Option<f64>; FeatureId::COUNT]);

impl FeatureValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (FeatureId, f64)>) -> Self {
        let mut values = Self::default();
        for (id, v) in pairs {
            values.set(id, v);
        }
        values
    }

    pub fn get(&self, id: FeatureId) -> Option<f64> {
        self.0[id.index()]
    }

    pub fn set(&mut self, id: FeatureId, value: f64) {
        self.0[id.index()] = Some(value);
    }

    pub fn clear(&mut self, id: FeatureId) {
        self.0[id.index()] = None;
    }

    /// Features that carry a value.
    pub fn present(&self) -> Vec<FeatureId> {
        FeatureId::ALL
            .into_iter()
            .filter(|id| self.0[id.index()].is_some())
            .collect()
    }

    pub fn require(&self, id: FeatureId) -> Result<f64> {
        self.get(id).ok_or(Error::MissingFeature(id))
    }
}

/// Column-major design matrix over an ordered subset of features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<FeatureId>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<FeatureId>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != columns.len() {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: columns.len(),
            });
        }
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(Error::InvalidParams(format!("feature `{id}` given twice")));
            }
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != n_rows) {
            return Err(Error::LengthMismatch {
                left: n_rows,
                right: bad.len(),
            });
        }
        Ok(Self {
            ids,
            columns,
            n_rows,
        })
    }

    /// Builds a matrix from row-wise observations, requiring every listed
    /// feature on every row.
    pub fn from_rows(ids: &[FeatureId], rows: &[FeatureValues]) -> Result<Self> {
        let columns = ids
            .iter()
            .map(|&id| rows.iter().map(|r| r.require(id)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut m = Self::new(ids.to_vec(), columns)?;
        m.n_rows = rows.len();
        Ok(m)
    }

    pub fn features(&self) -> &[FeatureId] {
        &self.ids
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.ids.len()
    }

    pub fn position(&self, id: FeatureId) -> Option<usize> {
        self.ids.iter().position(|&f| f == id)
    }

    pub fn column(&self, id: FeatureId) -> Option<&[f64]> {
        self.position(id).map(|p| self.columns[p].as_slice())
    }

    pub fn column_at(&self, position: usize) -> &[f64] {
        &self.columns[position]
    }

    /// Resolves each requested feature to its column position.
    pub fn positions_of(&self, ids: &[FeatureId]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|&id| self.position(id).ok_or(Error::MissingFeature(id)))
            .collect()
    }

    pub fn row(&self, i: usize) -> FeatureValues {
        FeatureValues::from_pairs(self.ids.iter().zip(&self.columns).map(|(&id, c)| (id, c[i])))
    }

    /// Restricts to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            ids: self.ids.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }

    /// Restricts to the given features, in the given order.
    pub fn select_features(&self, ids: &[FeatureId]) -> Result<Self> {
        let positions = self.positions_of(ids)?;
        Ok(Self {
            ids: ids.to_vec(),
            columns: positions.iter().map(|&p| self.columns[p].clone()).collect(),
            n_rows: self.n_rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_names_are_bijective() {
        for id in FeatureId::ALL {
            assert_eq!(id.code().parse::<FeatureId>().unwrap(), id);
            assert_eq!(id.long_name().parse::<FeatureId>().unwrap(), id);
            assert_eq!(FeatureId::from_index(id.index()), Some(id));
        }
        assert_eq!(FeatureId::H.long_name(), "Molar-stp");
        assert!("Z".parse::<FeatureId>().is_err());
    }

    #[test]
    fn feature_list_round_trip() {
        let list = parse_feature_list("A, B,h").unwrap();
        assert_eq!(list, vec![FeatureId::A, FeatureId::B, FeatureId::H]);
        assert_eq!(format_features(&list), "A,B,H");
        assert!(parse_feature_list("A,A").is_err());
        assert!(parse_feature_list("").unwrap().is_empty());
    }

    #[test]
    fn matrix_rejects_ragged_columns() {
        let err = FeatureMatrix::new(vec![FeatureId::A, FeatureId::B], vec![vec![1.0], vec![]]);
        assert!(err.is_err());
    }
}
