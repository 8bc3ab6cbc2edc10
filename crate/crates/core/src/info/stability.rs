use serde::{Deserialize, Serialize};

use super::mrmr::{mrmr_rank, validate_permutation, MrmrOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{permutation, seeded_sub, stream};

/// Intersection over union of two index sets.
pub fn iou(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::BTreeSet;
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Spearman's rho and Kendall's tau between two orderings of the same
/// concepts, comparing the rank each ordering assigns to every concept.
pub fn rank_correlation(order_a: &[usize], order_b: &[usize]) -> Result<(f64, f64)> {
    if order_a.len() != order_b.len() {
        return Err(Error::shape(format!(
            "orders have lengths {} and {}",
            order_a.len(),
            order_b.len()
        )));
    }
    let k = order_a.len();
    validate_permutation(order_a, k)?;
    validate_permutation(order_b, k)?;
    if k < 2 {
        return Ok((1.0, 1.0));
    }
    let ranks = |order: &[usize]| {
        let mut r = vec![0usize; k];
        for (pos, &c) in order.iter().enumerate() {
            r[c] = pos;
        }
        r
    };
    let ra = ranks(order_a);
    let rb = ranks(order_b);
    let d2: f64 = ra.iter().zip(&rb).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    let kf = k as f64;
    let spearman = 1.0 - 6.0 * d2 / (kf * (kf * kf - 1.0));
    let mut s: i64 = 0;
    for i in 0..k {
        for j in i + 1..k {
            let da = ra[i] as i64 - ra[j] as i64;
            let db = rb[i] as i64 - rb[j] as i64;
            s += (da * db).signum();
        }
    }
    let kendall = s as f64 / (kf * (kf - 1.0) / 2.0);
    Ok((spearman, kendall))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub seeds: Vec<u64>,
    pub prefix_sizes: Vec<usize>,
    pub resample_fraction: f64,
    /// `iou[s][p]`: top-`prefix_sizes[p]` overlap between the resample drawn
    /// with `seeds[s]` and the full-data ranking.
    pub iou: Vec<Vec<f64>>,
    pub reference_order: Vec<usize>,
}

impl StabilityReport {
    pub fn mean_iou(&self) -> Vec<f64> {
        let n = self.iou.len().max(1) as f64;
        (0..self.prefix_sizes.len())
            .map(|p| self.iou.iter().map(|row| row[p]).sum::<f64>() / n)
            .collect()
    }
}

/// Reruns mRMR on row subsamples (drawn without replacement, a fraction of
/// 1.0 keeps every row) and compares top-k sets with the full-data ranking.
pub fn ranking_stability(
    dataset: &Dataset,
    seeds: &[u64],
    resample_fraction: f64,
    prefix_sizes: &[usize],
    options: &MrmrOptions,
) -> Result<StabilityReport> {
    let k = dataset.n_concepts();
    if let Some(&p) = prefix_sizes.iter().find(|&&p| p > k) {
        return Err(Error::spec(format!("prefix size {p} exceeds concept count {k}")));
    }
    if !(resample_fraction > 0.0 && resample_fraction <= 1.0) {
        return Err(Error::spec(format!(
            "resample fraction {resample_fraction} must lie in (0,1]"
        )));
    }
    let reference = mrmr_rank(dataset, options)?;
    let n = dataset.n_samples();
    let m = ((n as f64 * resample_fraction).round() as usize).clamp(1, n);
    let mut rows_iou = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let sample = if m == n {
            dataset.clone()
        } else {
            let mut rng = seeded_sub(seed, stream::RESAMPLE, 0);
            let mut rows = permutation(&mut rng, n);
            rows.truncate(m);
            rows.sort_unstable();
            dataset.subset(&rows)
        };
        let ranking = mrmr_rank(&sample, options)?;
        rows_iou.push(
            prefix_sizes
                .iter()
                .map(|&p| iou(&ranking.order()[..p], &reference.order()[..p]))
                .collect(),
        );
    }
    Ok(StabilityReport {
        seeds: seeds.to_vec(),
        prefix_sizes: prefix_sizes.to_vec(),
        resample_fraction,
        iou: rows_iou,
        reference_order: reference.into_order(),
    })
}
