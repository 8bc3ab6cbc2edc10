//! Concept datasets: the `(x, c, y)` triples every later stage consumes.

mod csv_io;
mod cub;
mod split;
mod synthetic;

pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to};
pub use cub::load_cub;
pub use split::{split, SplitFractions, SplitIndices};
pub use synthetic::{generate_synthetic, level_sizes, PlantedLabeler, SyntheticData, SyntheticSpec};

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk layouts understood by [`load_concept_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Csv,
    CubAttributes,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DatasetFormat::Csv),
            "cub" | "cub_attributes" | "cub-attributes" => Ok(DatasetFormat::CubAttributes),
            other => Err(Error::spec(format!("unknown dataset format '{other}'"))),
        }
    }
}

/// Rows of input features, binary concepts and class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    feature_names: Vec<String>,
    concepts: Vec<u8>,
    concept_names: Vec<String>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    /// Builds a dataset from row-major feature and concept matrices, checking
    /// every invariant.
    pub fn new(
        features: Vec<f64>,
        feature_names: Vec<String>,
        concepts: Vec<u8>,
        concept_names: Vec<String>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let n = labels.len();
        let k = concept_names.len();
        let f = feature_names.len();
        if concepts.len() != n * k {
            return Err(Error::shape(format!(
                "concept matrix has {} cells, expected {n}x{k}",
                concepts.len()
            )));
        }
        if features.len() != n * f {
            return Err(Error::shape(format!(
                "feature matrix has {} cells, expected {n}x{f}",
                features.len()
            )));
        }
        if let Some(pos) = concepts.iter().position(|&c| c > 1) {
            return Err(Error::Parse {
                row: pos / k.max(1) + 1,
                column: pos % k.max(1) + 2,
                message: format!("concept value {} is not binary", concepts[pos]),
            });
        }
        if let Some(row) = labels.iter().position(|&y| y >= class_count) {
            return Err(Error::Parse {
                row: row + 1,
                column: 1,
                message: format!("label {} outside [0, {class_count})", labels[row]),
            });
        }
        let mut seen = HashSet::new();
        for name in &concept_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::spec(format!("duplicate concept name '{name}'")));
            }
        }
        Ok(Self {
            features,
            feature_names,
            concepts,
            concept_names,
            labels,
            class_count,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.concept_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn concept_names(&self) -> &[String] {
        &self.concept_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Row-major `N x K` concept matrix.
    pub fn concepts(&self) -> &[u8] {
        &self.concepts
    }

    /// Row-major `N x F` feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        let f = self.n_features();
        &self.features[i * f..(i + 1) * f]
    }

    pub fn concept_row(&self, i: usize) -> &[u8] {
        let k = self.n_concepts();
        &self.concepts[i * k..(i + 1) * k]
    }

    pub fn concept_column(&self, j: usize) -> Vec<u8> {
        let k = self.n_concepts();
        self.concepts.iter().skip(j).step_by(k).copied().collect()
    }

    /// All concept columns, in concept-index order.
    pub fn concept_columns(&self) -> Vec<Vec<u8>> {
        (0..self.n_concepts()).map(|j| self.concept_column(j)).collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let f = self.n_features();
        let k = self.n_concepts();
        let mut features = Vec::with_capacity(rows.len() * f);
        let mut concepts = Vec::with_capacity(rows.len() * k);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.feature_row(r));
            concepts.extend_from_slice(self.concept_row(r));
            labels.push(self.labels[r]);
        }
        Dataset {
            features,
            feature_names: self.feature_names.clone(),
            concepts,
            concept_names: self.concept_names.clone(),
            labels,
            class_count: self.class_count,
        }
    }
}

/// Options for [`load_concept_dataset`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Number of classes; inferred as `max(label) + 1` when absent.
    pub class_count: Option<usize>,
}

pub fn load_concept_dataset(path: impl AsRef<Path>, format: DatasetFormat, options: &LoadOptions) -> Result<Dataset> {
    match format {
        DatasetFormat::Csv => load_csv(path, options),
        DatasetFormat::CubAttributes => load_cub(path),
    }
}
