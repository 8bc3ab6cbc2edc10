use rand::Rng as _;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        for (name, v) in [("train", train), ("val", val), ("test", test)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::spec(format!("{name} fraction {v} must lie in (0,1)")));
            }
        }
        if (train + val + test - 1.0).abs() > 1e-9 {
            return Err(Error::spec(format!("fractions ({train}, {val}, {test}) must sum to 1")));
        }
        Ok(Self { train, val, test })
    }
}

/// Row indices of each part, in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Deterministic partition of `0..labels.len()`.
    ///
    /// Rows are ordered by their fractional rank inside a shuffled copy of
    /// their class, so any contiguous cut is stratified to within one sample
    /// per class. Stratification is skipped when some class has fewer than
    /// three rows.
    pub fn compute(labels: &[usize], fractions: SplitFractions, seed: u64) -> Result<Self> {
        let n = labels.len();
        if n < 3 {
            return Err(Error::spec(format!("need at least 3 rows to split, got {n}")));
        }
        let mut rng = seeded(seed, stream::SPLIT);
        let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }
        let stratify = by_class.iter().all(|rows| rows.is_empty() || rows.len() >= 3);

        let order: Vec<usize> = if stratify {
            let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(n);
            for rows in &by_class {
                let perm = crate::rng::permutation(&mut rng, rows.len());
                let m = rows.len() as f64;
                for (rank, &p) in perm.iter().enumerate() {
                    let jitter: f64 = rng.random();
                    keyed.push(((rank as f64 + jitter) / m, rows[p]));
                }
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().map(|(_, i)| i).collect()
        } else {
            crate::rng::permutation(&mut rng, n)
        };

        let mut n_train = ((fractions.train * n as f64).round() as usize).max(1);
        let mut n_val = ((fractions.val * n as f64).round() as usize).max(1);
        while n_train + n_val > n - 1 {
            if n_train >= n_val {
                n_train -= 1;
            } else {
                n_val -= 1;
            }
        }
        let mut train = order[..n_train].to_vec();
        let mut val = order[n_train..n_train + n_val].to_vec();
        let mut test = order[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Ok(Self { train, val, test })
    }
}

/// Splits a dataset into train / validation / test parts.
pub fn split(
    dataset: &Dataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset, SplitIndices)> {
    let idx = SplitIndices::compute(dataset.labels(), fractions, seed)?;
    Ok((
        dataset.subset(&idx.train),
        dataset.subset(&idx.val),
        dataset.subset(&idx.test),
        idx,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_rows_split_six_two_two() {
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let f = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
        let a = SplitIndices::compute(&labels, f, 1).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (6, 2, 2));
        let b = SplitIndices::compute(&labels, f, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!(SplitFractions::new(0.5, 0.5, 0.5).is_err());
        assert!(SplitFractions::new(0.6, 0.2, 0.2 + 1e-12).is_ok());
    }

    #[test]
    fn stratifies_balanced_classes() {
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let f = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
        let s = SplitIndices::compute(&labels, f, 9).unwrap();
        for c in 0..3 {
            let n = s.train.iter().filter(|&&i| labels[i] == c).count();
            assert!((59..=61).contains(&n), "class {c}: {n}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn partition_is_disjoint_exhaustive_and_deterministic(
            n in 3usize..200,
            classes in 1usize..5,
            a in 0.05f64..0.9,
            b in 0.05f64..0.9,
            seed in any::<u64>(),
        ) {
            let total = a + b + 0.1;
            let f = SplitFractions::new(a / total, b / total, 1.0 - a / total - b / total).unwrap();
            let labels: Vec<usize> = (0..n).map(|i| (i * 7) % classes).collect();
            let s = SplitIndices::compute(&labels, f, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!(!s.train.is_empty() && !s.val.is_empty() && !s.test.is_empty());
            prop_assert_eq!(s, SplitIndices::compute(&labels, f, seed).unwrap());
        }
    }
}
