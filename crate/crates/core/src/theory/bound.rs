use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::info::{entropy, mutual_information};
use crate::intervene::{intervene_prefix, HeadPolicy};
use crate::math::argmax;
use crate::model::MatryoshkaModel;

/// Largest concept count handled by exact enumeration.
pub const EXACT_MAX_CONCEPTS: usize = 16;
/// Probability substituted for support points missing from the reference.
pub const KL_FLOOR: f64 = 1e-9;
pub const DEFAULT_BINS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEstimate {
    pub epsilon: f64,
    /// Support points of `p_int` absent from `p_train`.
    pub floored_points: usize,
}

/// `KL(p_int || p_train)` over a shared indexing of the support, with
/// [`KL_FLOOR`] standing in for zero reference mass.
pub fn estimate_epsilon(p_int: &[f64], p_train: &[f64]) -> Result<EpsilonEstimate> {
    if p_int.len() != p_train.len() {
        return Err(Error::shape(format!(
            "supports of size {} and {}",
            p_int.len(),
            p_train.len()
        )));
    }
    if p_int.is_empty() || p_int.iter().all(|&p| p <= 0.0) {
        return Err(Error::spec("empty support"));
    }
    let mut eps = 0.0;
    let mut floored = 0;
    for (&p, &q) in p_int.iter().zip(p_train) {
        if p <= 0.0 {
            continue;
        }
        let q = if q > 0.0 {
            q
        } else {
            floored += 1;
            KL_FLOOR
        };
        eps += p * (p / q).ln();
    }
    Ok(EpsilonEstimate {
        epsilon: eps.max(0.0),
        floored_points: floored,
    })
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// The error bound with the conditional entropy converted to bits, the unit
/// in which `P_e <= H(Y|Z)/2` holds for every joint law.
pub fn bayes_error_bits_bound(conditional_entropy_nats: f64) -> f64 {
    0.5 * conditional_entropy_nats / std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub label_entropy: f64,
    pub mutual_info: f64,
    pub epsilon: f64,
    pub floored_points: usize,
    pub bound_value: f64,
    pub empirical_error: f64,
    pub holds: bool,
    /// Exact enumeration (`true`) or plug-in over samples.
    pub exact: bool,
    /// Bin centres used to discretise soft concepts; empty for binary channels.
    pub bins: Vec<f64>,
}

impl BoundReport {
    fn new(k: usize, h: f64, i: f64, eps: EpsilonEstimate, err: f64, exact: bool, bins: Vec<f64>) -> Self {
        let bound_value = 0.5 * (h - i).max(0.0) + (eps.epsilon / 2.0).sqrt();
        Self {
            k,
            label_entropy: h,
            mutual_info: i,
            epsilon: eps.epsilon,
            floored_points: eps.floored_points,
            bound_value,
            empirical_error: err,
            holds: err <= bound_value,
            exact,
            bins,
        }
    }

    pub fn conditional_entropy(&self) -> f64 {
        (self.label_entropy - self.mutual_info).max(0.0)
    }
}

pub fn write_bound_reports<W: Write>(reports: &[BoundReport], mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, reports)?;
    writer.write_all(b"\n").map_err(|e| Error::io("<bound writer>", e))?;
    Ok(())
}

/// Enumerable joint law of a label and `K` binary ground-truth concepts, with
/// an independent binary channel from each true concept to its prediction.
///
/// Concept `j` is bit `j` of a support index. Coordinates are already in
/// ranked order, so the intervened vector at `k` is the true bits below `k`
/// followed by channel outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptChannelModel {
    concepts: usize,
    classes: usize,
    /// `joint[y * 2^K + v]`.
    joint: Vec<f64>,
    /// `P(predicted = 1 | true = 0)` per concept.
    false_on: Vec<f64>,
    /// `P(predicted = 0 | true = 1)` per concept.
    false_off: Vec<f64>,
}

impl ConceptChannelModel {
    pub fn new(
        concepts: usize,
        classes: usize,
        joint: Vec<f64>,
        false_on: Vec<f64>,
        false_off: Vec<f64>,
    ) -> Result<Self> {
        if concepts > EXACT_MAX_CONCEPTS {
            return Err(Error::Capacity(format!(
                "{concepts} concepts exceed the exact limit of {EXACT_MAX_CONCEPTS}; use the empirical estimator"
            )));
        }
        if classes == 0 || joint.len() != classes << concepts {
            return Err(Error::shape(format!(
                "joint table must have {} entries",
                classes << concepts
            )));
        }
        if false_on.len() != concepts || false_off.len() != concepts {
            return Err(Error::shape("one channel per concept"));
        }
        let total: f64 = joint.iter().sum();
        if joint.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::spec("joint table must be a probability distribution"));
        }
        if false_on.iter().chain(&false_off).any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::spec("channel error rates must lie in [0,1]"));
        }
        Ok(Self {
            concepts,
            classes,
            joint,
            false_on,
            false_off,
        })
    }

    /// Random instance: Dirichlet(1)-like joint table and error rates in
    /// `[0, max_error]`.
    pub fn random(concepts: usize, classes: usize, max_error: f64, rng: &mut crate::rng::Rng) -> Result<Self> {
        if concepts > EXACT_MAX_CONCEPTS {
            return Err(Error::Capacity(format!(
                "{concepts} concepts exceed {EXACT_MAX_CONCEPTS}"
            )));
        }
        let mut joint: Vec<f64> = (0..classes << concepts)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = joint.iter().sum();
        joint.iter_mut().for_each(|p| *p /= total);
        let false_on = (0..concepts).map(|_| rng.random::<f64>() * max_error).collect();
        let false_off = (0..concepts).map(|_| rng.random::<f64>() * max_error).collect();
        Self::new(concepts, classes, joint, false_on, false_off)
    }

    pub fn concepts(&self) -> usize {
        self.concepts
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// `P(y, c~)` for the intervened vector at `k`, same layout as the joint.
    pub fn intervened_joint(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.concepts {
            return Err(Error::spec(format!("k = {k} exceeds {}", self.concepts)));
        }
        let size = 1usize << self.concepts;
        let mut t = self.joint.clone();
        for j in k..self.concepts {
            let bit = 1usize << j;
            let (e_on, e_off) = (self.false_on[j], self.false_off[j]);
            for y in 0..self.classes {
                let block = &mut t[y * size..(y + 1) * size];
                for v in 0..size {
                    if v & bit != 0 {
                        continue;
                    }
                    let p0 = block[v];
                    let p1 = block[v | bit];
                    block[v] = p0 * (1.0 - e_on) + p1 * e_off;
                    block[v | bit] = p0 * e_on + p1 * (1.0 - e_off);
                }
            }
        }
        Ok(t)
    }

    fn concept_marginal(&self, table: &[f64]) -> Vec<f64> {
        let size = 1usize << self.concepts;
        (0..size)
            .map(|v| (0..self.classes).map(|y| table[y * size + v]).sum())
            .collect()
    }

    pub fn label_entropy(&self) -> f64 {
        let size = 1usize << self.concepts;
        (0..self.classes)
            .map(|y| self.joint[y * size..(y + 1) * size].iter().sum::<f64>())
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    /// `I(Y; C~(k))` in nats, summed over the full support.
    pub fn exact_mutual_info_intervened(&self, k: usize) -> Result<f64> {
        let t = self.intervened_joint(k)?;
        let size = 1usize << self.concepts;
        let pv = self.concept_marginal(&t);
        let mut mi = 0.0;
        for y in 0..self.classes {
            let py: f64 = t[y * size..(y + 1) * size].iter().sum();
            for v in 0..size {
                let p = t[y * size + v];
                if p > 0.0 {
                    mi += p * (p / (py * pv[v])).ln();
                }
            }
        }
        Ok(mi.max(0.0))
    }

    /// Error of the Bayes classifier that sees `C~(k)`.
    pub fn bayes_error(&self, k: usize) -> Result<f64> {
        let t = self.intervened_joint(k)?;
        let size = 1usize << self.concepts;
        let hit: f64 = (0..size)
            .map(|v| (0..self.classes).map(|y| t[y * size + v]).fold(0.0, f64::max))
            .sum();
        Ok((1.0 - hit).max(0.0))
    }

    /// Shift between the all-predicted and the intervened concept marginals.
    pub fn epsilon(&self, k: usize) -> Result<EpsilonEstimate> {
        let soft = self.concept_marginal(&self.intervened_joint(0)?);
        let hard = self.concept_marginal(&self.intervened_joint(k)?);
        estimate_epsilon(&hard, &soft)
    }
}

/// Bound reports for an enumerable channel model with the Bayes classifier
/// at each `k`.
pub fn channel_bound_reports(model: &ConceptChannelModel, k_grid: &[usize]) -> Result<Vec<BoundReport>> {
    let h = model.label_entropy();
    k_grid
        .iter()
        .map(|&k| {
            let i = model.exact_mutual_info_intervened(k)?;
            Ok(BoundReport::new(
                k,
                h,
                i,
                model.epsilon(k)?,
                model.bayes_error(k)?,
                true,
                Vec::new(),
            ))
        })
        .collect()
}

fn nearest_bin(v: f64, bins: &[f64]) -> usize {
    let mut best = 0;
    for (i, b) in bins.iter().enumerate() {
        if (v - b).abs() < (v - bins[best]).abs() {
            best = i;
        }
    }
    best
}

/// Bound reports for a trained model on a dataset, with plug-in estimates
/// over binned concept vectors. The measured error is that of `policy` after
/// intervening on the first `k` ranked concepts. Reports are flagged exact
/// when the vector space is small enough to enumerate (`K <= 16`, `C <= 8`).
pub fn hellman_raviv_report(
    model: &MatryoshkaModel,
    dataset: &Dataset,
    k_grid: &[usize],
    bins: &[f64],
    policy: HeadPolicy,
) -> Result<Vec<BoundReport>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if bins.is_empty() {
        return Err(Error::spec("bin grid is empty"));
    }
    let n = dataset.n_samples();
    let labels = dataset.labels();
    let h = entropy(labels);
    let exact = model.n_concepts() <= EXACT_MAX_CONCEPTS && model.n_classes() <= 8;
    let soft: Vec<Vec<f64>> = (0..n)
        .map(|i| model.concept_probs(dataset.feature_row(i)))
        .collect::<Result<_>>()?;
    let truth: Vec<Vec<u8>> = (0..n)
        .map(|i| model.permutation.iter().map(|&j| dataset.concept_row(i)[j]).collect())
        .collect();
    let key = |v: &[f64]| -> Vec<u8> { v.iter().map(|&x| nearest_bin(x, bins) as u8).collect() };
    let soft_keys: Vec<Vec<u8>> = soft.iter().map(|v| key(v)).collect();

    let mut reports = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let mut wrong = 0usize;
        let mut keys = Vec::with_capacity(n);
        for i in 0..n {
            let c = intervene_prefix(&soft[i], &truth[i], k)?;
            let d = match policy {
                HeadPolicy::Matched if k > 0 => k,
                _ => model.widest_level(),
            };
            if argmax(&model.scores_at(&c, d)?) != labels[i] {
                wrong += 1;
            }
            keys.push(key(&c));
        }
        let mut ids: BTreeMap<&[u8], usize> = BTreeMap::new();
        for kk in keys.iter().chain(&soft_keys) {
            let next = ids.len();
            ids.entry(kk.as_slice()).or_insert(next);
        }
        let codes: Vec<usize> = keys.iter().map(|kk| ids[kk.as_slice()]).collect();
        let i_val = mutual_information(labels, &codes)?.value;
        let mut p_int = vec![0.0; ids.len()];
        let mut p_train = vec![0.0; ids.len()];
        for (kk, sk) in keys.iter().zip(&soft_keys) {
            p_int[ids[kk.as_slice()]] += 1.0 / n as f64;
            p_train[ids[sk.as_slice()]] += 1.0 / n as f64;
        }
        let eps = estimate_epsilon(&p_int, &p_train)?;
        reports.push(BoundReport::new(
            k,
            h,
            i_val,
            eps,
            wrong as f64 / n as f64,
            exact,
            bins.to_vec(),
        ));
    }
    Ok(reports)
}
