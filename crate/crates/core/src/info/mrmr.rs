//! Greedy minimum-redundancy maximum-relevance ordering.
//!
//! Step `t` picks, among the remaining concepts, the one maximising
//! `I(c; y) - mean_{s in selected} I(c; s)`, with the mean taken as zero while
//! nothing is selected. Scores within [`TIE_TOLERANCE`] of the best count as
//! tied and the lowest concept index wins, so orderings do not depend on
//! floating-point summation order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mi::{binary_label_mi, binary_mi};
use crate::data::Dataset;
use crate::error::{Error, Result};

pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankStep {
    pub concept: usize,
    pub relevance: f64,
    pub redundancy: f64,
    pub score: f64,
}

/// A permutation of concept indices plus the per-step bookkeeping that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRanking {
    order: Vec<usize>,
    steps: Vec<RankStep>,
}

#[derive(Debug, Clone, Default)]
pub struct MrmrOptions {
    /// Concepts kept out of the greedy competition. They are appended after
    /// every other concept, in index order, so the ordering stays a full
    /// permutation.
    pub exclude: Vec<usize>,
}

/// Checks that `order` is a bijection on `0..k`.
pub fn validate_permutation(order: &[usize], k: usize) -> Result<()> {
    if order.len() != k {
        return Err(Error::shape(format!(
            "permutation has {} entries, expected {k}",
            order.len()
        )));
    }
    let mut seen = vec![false; k];
    for &i in order {
        if i >= k || std::mem::replace(&mut seen[i], true) {
            return Err(Error::spec(format!("order is not a permutation of 0..{k}")));
        }
    }
    Ok(())
}

impl ConceptRanking {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn steps(&self) -> &[RankStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn into_order(self) -> Vec<usize> {
        self.order
    }

    /// Bookkeeping for an externally chosen order (e.g. a random baseline),
    /// computed with the same relevance and redundancy definitions.
    pub fn from_order(order: Vec<usize>, columns: &[Vec<u8>], labels: &[usize]) -> Result<Self> {
        validate_permutation(&order, columns.len())?;
        let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
        let mut red_sum = vec![0.0; columns.len()];
        let mut steps = Vec::with_capacity(order.len());
        for (t, &c) in order.iter().enumerate() {
            let relevance = binary_label_mi(&columns[c], labels, classes);
            let redundancy = if t == 0 { 0.0 } else { red_sum[c] / t as f64 };
            steps.push(RankStep {
                concept: c,
                relevance,
                redundancy,
                score: relevance - redundancy,
            });
            for &o in &order[t + 1..] {
                red_sum[o] += binary_mi(&columns[o], &columns[c]);
            }
        }
        Ok(Self { order, steps })
    }
}

/// `I(column_j; labels)` for every concept column.
pub fn relevance_vector(dataset: &Dataset) -> Vec<f64> {
    let labels = dataset.labels();
    let classes = dataset.class_count().max(1);
    (0..dataset.n_concepts())
        .map(|j| binary_label_mi(&dataset.concept_column(j), labels, classes))
        .collect()
}

pub fn mrmr_rank(dataset: &Dataset, options: &MrmrOptions) -> Result<ConceptRanking> {
    if dataset.n_concepts() == 0 {
        return Err(Error::spec("mRMR needs at least one concept"));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    mrmr_rank_columns(&dataset.concept_columns(), dataset.labels(), options)
}

/// mRMR over explicit binary columns. Runs in `O(K^2 N)`: each selection
/// adds one pairwise MI per remaining candidate to a running redundancy sum.
pub fn mrmr_rank_columns(columns: &[Vec<u8>], labels: &[usize], options: &MrmrOptions) -> Result<ConceptRanking> {
    let k = columns.len();
    if k == 0 {
        return Err(Error::spec("mRMR needs at least one concept"));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != labels.len()) {
        return Err(Error::shape(format!(
            "concept column has {} rows, labels have {}",
            c.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = options.exclude.iter().find(|&&e| e >= k) {
        return Err(Error::spec(format!("excluded concept {bad} outside 0..{k}")));
    }
    let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    let relevance: Vec<f64> = columns.iter().map(|c| binary_label_mi(c, labels, classes)).collect();

    let mut excluded = vec![false; k];
    for &e in &options.exclude {
        excluded[e] = true;
    }
    let mut remaining: Vec<usize> = (0..k).filter(|&j| !excluded[j]).collect();
    let trailing: Vec<usize> = (0..k).filter(|&j| excluded[j]).collect();
    let mut red_sum = vec![0.0; k];
    let mut order = Vec::with_capacity(k);
    let mut steps = Vec::with_capacity(k);

    let mut record = |c: usize, t: usize, red_sum: &[f64], order: &mut Vec<usize>| {
        let redundancy = if t == 0 { 0.0 } else { red_sum[c] / t as f64 };
        order.push(c);
        steps.push(RankStep {
            concept: c,
            relevance: relevance[c],
            redundancy,
            score: relevance[c] - redundancy,
        });
    };

    while !remaining.is_empty() {
        let t = order.len();
        let score = |j: usize| {
            if t == 0 {
                relevance[j]
            } else {
                relevance[j] - red_sum[j] / t as f64
            }
        };
        let best = remaining.iter().map(|&j| score(j)).fold(f64::NEG_INFINITY, f64::max);
        let pos = remaining
            .iter()
            .position(|&j| score(j) >= best - TIE_TOLERANCE)
            .expect("remaining is non-empty");
        let chosen = remaining.remove(pos);
        record(chosen, t, &red_sum, &mut order);
        for &j in remaining.iter().chain(&trailing) {
            red_sum[j] += binary_mi(&columns[j], &columns[chosen]);
        }
    }
    for (i, &c) in trailing.iter().enumerate() {
        let t = order.len();
        record(c, t, &red_sum, &mut order);
        for &j in &trailing[i + 1..] {
            red_sum[j] += binary_mi(&columns[j], &columns[c]);
        }
    }
    Ok(ConceptRanking { order, steps })
}

fn fmt4(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

/// Writes `rank,concept_index,concept_name,score,relevance,redundancy`, one
/// row per rank, values to four decimals.
pub fn write_ranking_csv<W: Write>(ranking: &ConceptRanking, names: &[String], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record([
        "rank",
        "concept_index",
        "concept_name",
        "score",
        "relevance",
        "redundancy",
    ])?;
    for (r, s) in ranking.steps.iter().enumerate() {
        let name = names.get(s.concept).map(String::as_str).unwrap_or("");
        w.write_record([
            (r + 1).to_string(),
            s.concept.to_string(),
            name.to_string(),
            fmt4(s.score),
            fmt4(s.relevance),
            fmt4(s.redundancy),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ranking writer>", e))?;
    Ok(())
}

/// Reads a ranking file back; the bookkeeping carries the file's rounding.
pub fn read_ranking_csv(path: impl AsRef<Path>) -> Result<ConceptRanking> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut order = Vec::new();
    let mut steps = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> Result<&str> {
            rec.get(c).ok_or_else(|| Error::Parse {
                row: i + 1,
                column: c + 1,
                message: "missing column".into(),
            })
        };
        let num = |c: usize| -> Result<f64> {
            field(c)?.trim().parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: c + 1,
                message: "not a number".into(),
            })
        };
        let concept: usize = field(1)?.trim().parse().map_err(|_| Error::Parse {
            row: i + 1,
            column: 2,
            message: "concept_index is not an integer".into(),
        })?;
        order.push(concept);
        steps.push(RankStep {
            concept,
            score: num(3)?,
            relevance: num(4)?,
            redundancy: num(5)?,
        });
    }
    validate_permutation(&order, order.len())?;
    Ok(ConceptRanking { order, steps })
}
