//! Synthetic concept datasets with planted geometric structure.
//!
//! Informative concepts are grouped into `L` levels of sizes `k_1, k_1 r,
//! k_1 r^2, ...`. Each sample draws an active level `l` with probability
//! proportional to `gamma^(l-1)`, then switches on exactly one concept of that
//! level; its class is the class code of that concept (`index mod C`). Every
//! other informative concept is off, so the prefix up to level `l` determines
//! the label while shorter prefixes do not.
//!
//! The labelling rule is a decision list over levels: the first level holding
//! an active concept decides, by majority class within the level (lowest class
//! on ties). Because levels are compared lexicographically it is also a linear
//! argmax rule with geometrically dominant level weights.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

/// Flip probability applied to each near-duplicate clone.
pub const CLONE_FLIP: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub levels: usize,
    pub base_size: usize,
    pub growth_rate: f64,
    pub decay_rate: f64,
    pub classes: usize,
    pub samples: usize,
    #[serde(default)]
    pub redundancy_copies: usize,
    /// Flip probability on the observed (annotated) concepts.
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
    /// Feature dimension; `2K` when absent.
    #[serde(default)]
    pub feature_dim: Option<usize>,
    /// Standard deviation of the Gaussian noise added to features.
    #[serde(default = "default_feature_noise")]
    pub feature_noise: f64,
}

fn default_feature_noise() -> f64 {
    0.1
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            levels: 3,
            base_size: 2,
            growth_rate: 2.0,
            decay_rate: 0.5,
            classes: 4,
            samples: 1000,
            redundancy_copies: 0,
            noise: 0.0,
            seed: 0,
            feature_dim: None,
            feature_noise: default_feature_noise(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::spec("levels must be >= 1"));
        }
        if self.base_size == 0 {
            return Err(Error::spec("base_size must be >= 1"));
        }
        if !(self.growth_rate > 1.0) || !self.growth_rate.is_finite() {
            return Err(Error::spec(format!("growth rate r={} must be > 1", self.growth_rate)));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate < 1.0) {
            return Err(Error::spec(format!(
                "decay rate gamma={} must lie in (0,1)",
                self.decay_rate
            )));
        }
        if self.classes < 2 {
            return Err(Error::spec("need at least 2 classes"));
        }
        if self.samples == 0 {
            return Err(Error::spec("samples must be >= 1"));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::spec(format!("noise {} must lie in [0, 0.5)", self.noise)));
        }
        if !(self.feature_noise >= 0.0) {
            return Err(Error::spec("feature_noise must be >= 0"));
        }
        Ok(())
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        level_sizes(self.base_size, self.growth_rate, self.levels)
    }

    pub fn informative_count(&self) -> usize {
        self.level_sizes().iter().sum()
    }

    pub fn concept_count(&self) -> usize {
        self.informative_count() * (1 + self.redundancy_copies)
    }
}

/// `round(k_1 r^(i-1))` for `i = 1..=levels`, never below 1.
pub fn level_sizes(base: usize, growth: f64, levels: usize) -> Vec<usize> {
    (0..levels)
        .map(|i| ((base as f64) * growth.powi(i as i32)).round().max(1.0) as usize)
        .collect()
}

/// The noiseless labelling rule of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLabeler {
    level_sizes: Vec<usize>,
    classes: usize,
}

impl PlantedLabeler {
    pub fn new(level_sizes: Vec<usize>, classes: usize) -> Self {
        Self { level_sizes, classes }
    }

    pub fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    pub fn informative_count(&self) -> usize {
        self.level_sizes.iter().sum()
    }

    /// Cumulative prefix lengths at each level boundary.
    pub fn level_bounds(&self) -> Vec<usize> {
        self.level_sizes
            .iter()
            .scan(0, |acc, &k| {
                *acc += k;
                Some(*acc)
            })
            .collect()
    }

    pub fn class_of(&self, concept: usize) -> usize {
        concept % self.classes
    }

    /// Per-level class tallies of active concepts: `tally[level][class]`.
    fn tallies(&self, row: &[u8]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![0; self.classes]; self.level_sizes.len()];
        let mut start = 0;
        for (lvl, &size) in self.level_sizes.iter().enumerate() {
            for j in start..start + size {
                if row[j] == 1 {
                    out[lvl][self.class_of(j)] += 1;
                }
            }
            start += size;
        }
        out
    }

    /// Label of a noiseless informative concept row (length `informative_count`).
    pub fn label(&self, row: &[u8]) -> usize {
        let tallies = self.tallies(row);
        let mut candidates: Vec<usize> = (0..self.classes).collect();
        for level in &tallies {
            let best = candidates.iter().map(|&c| level[c]).max().unwrap_or(0);
            candidates.retain(|&c| level[c] == best);
            if candidates.len() == 1 {
                break;
            }
        }
        candidates[0]
    }

    /// Whether the first `prefix` concepts fix the label for every possible
    /// setting of the remaining informative concepts.
    ///
    /// Class `c` can be made to win exactly when it wins the completion that
    /// switches on every free concept of class `c` and nothing else, since the
    /// rule is monotone in each class's tallies. The prefix determines the
    /// label when only one class can win.
    pub fn prefix_determines(&self, row: &[u8], prefix: usize) -> bool {
        let k = self.informative_count();
        let prefix = prefix.min(k);
        let mut completion = row[..k].to_vec();
        let mut winners = 0;
        for c in 0..self.classes {
            for (j, v) in completion.iter_mut().enumerate().skip(prefix) {
                *v = u8::from(self.class_of(j) == c);
            }
            if self.label(&completion) == c {
                winners += 1;
                if winners > 1 {
                    return false;
                }
            }
        }
        winners == 1
    }
}

/// A generated dataset together with the structure that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Planted active level per sample, 1-based.
    pub planted_levels: Vec<usize>,
    /// Noiseless informative concepts, row-major `N x informative_count`.
    pub noiseless: Vec<u8>,
    pub labeler: PlantedLabeler,
}

impl SyntheticData {
    pub fn noiseless_row(&self, i: usize) -> &[u8] {
        let k = self.labeler.informative_count();
        &self.noiseless[i * k..(i + 1) * k]
    }
}

fn sample_level(u: f64, cdf: &[f64]) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let sizes = spec.level_sizes();
    let labeler = PlantedLabeler::new(sizes.clone(), spec.classes);
    let k_inf = labeler.informative_count();
    let k_total = spec.concept_count();
    let f = spec.feature_dim.unwrap_or(2 * k_total);
    let n = spec.samples;

    let weights: Vec<f64> = (0..spec.levels).map(|i| spec.decay_rate.powi(i as i32)).collect();
    let z: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w / z;
            acc
        })
        .collect();
    *cdf.last_mut().unwrap() = 1.0;
    let offsets: Vec<usize> = std::iter::once(0)
        .chain(labeler.level_bounds())
        .take(spec.levels)
        .collect();

    let mut embed_rng = seeded(spec.seed, stream::EMBEDDING);
    let embedding: Vec<f64> = (0..k_inf * f).map(|_| StandardNormal.sample(&mut embed_rng)).collect();

    let mut level_rng = seeded(spec.seed, stream::LEVELS);
    let mut concept_rng = seeded(spec.seed, stream::CONCEPTS);
    let mut noise_rng = seeded(spec.seed, stream::NOISE);
    let mut feature_rng = seeded(spec.seed, stream::FEATURES);

    let mut planted_levels = Vec::with_capacity(n);
    let mut noiseless = vec![0u8; n * k_inf];
    let mut concepts = vec![0u8; n * k_total];
    let mut labels = Vec::with_capacity(n);
    let mut features = vec![0.0; n * f];
    for i in 0..n {
        let lvl = sample_level(level_rng.random::<f64>(), &cdf);
        let j = offsets[lvl] + concept_rng.random_range(0..sizes[lvl]);
        let row = &mut noiseless[i * k_inf..(i + 1) * k_inf];
        row[j] = 1;
        labels.push(labeler.label(row));
        planted_levels.push(lvl + 1);

        let obs = &mut concepts[i * k_total..(i + 1) * k_total];
        for m in 0..=spec.redundancy_copies {
            for t in 0..k_inf {
                let mut v = row[t];
                if m > 0 && noise_rng.random::<f64>() < CLONE_FLIP {
                    v ^= 1;
                }
                obs[m * k_inf + t] = v;
            }
        }
        if spec.noise > 0.0 {
            for v in obs.iter_mut() {
                if noise_rng.random::<f64>() < spec.noise {
                    *v ^= 1;
                }
            }
        }

        let x = &mut features[i * f..(i + 1) * f];
        for (d, xd) in x.iter_mut().enumerate() {
            let eps: f64 = StandardNormal.sample(&mut feature_rng);
            *xd = embedding[j * f + d] + spec.feature_noise * eps;
        }
    }

    let mut concept_names = Vec::with_capacity(k_total);
    for m in 0..=spec.redundancy_copies {
        for (lvl, &size) in sizes.iter().enumerate() {
            for t in 0..size {
                concept_names.push(if m == 0 {
                    format!("lvl{}_c{}", lvl + 1, t)
                } else {
                    format!("lvl{}_c{}_dup{}", lvl + 1, t, m)
                });
            }
        }
    }
    let feature_names = (1..=f).map(|d| format!("f_{d}")).collect();
    let dataset = Dataset::new(features, feature_names, concepts, concept_names, labels, spec.classes)?;
    Ok(SyntheticData {
        dataset,
        planted_levels,
        noiseless,
        labeler,
    })
}
