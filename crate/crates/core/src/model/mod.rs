//! Linear concept encoder, fixed concept permutation and nested heads.
//!
//! Concept probabilities are re-ordered by the permutation before any head
//! sees them, so "prefix of length d" always means "the d top-ranked
//! concepts".

mod train;

use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::info::validate_permutation;
use crate::math::{argmax, sigmoid, softmax};
use crate::rng::{seeded, stream};

pub use train::{
    gradient_pressure, loss_and_gradients, train, EfficientTraining, HistoryRow, LossConfig, Phase, TrainingHistory,
    TrainingMode,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Strictly increasing prefix lengths at which heads exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct NestingSchedule {
    levels: Vec<usize>,
}

impl TryFrom<Vec<usize>> for NestingSchedule {
    type Error = Error;

    fn try_from(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::spec("nesting schedule is empty"));
        }
        if levels[0] == 0 {
            return Err(Error::spec("nesting levels start at 1"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::spec(format!(
                "nesting schedule {levels:?} is not strictly increasing"
            )));
        }
        Ok(Self { levels })
    }
}

impl From<NestingSchedule> for Vec<usize> {
    fn from(s: NestingSchedule) -> Self {
        s.levels
    }
}

impl FromStr for NestingSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let levels = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::spec(format!("bad schedule entry {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::try_from(levels)
    }
}

impl NestingSchedule {
    /// Validates the levels against a concept count `k`.
    pub fn new(levels: Vec<usize>, k: usize) -> Result<Self> {
        let s = Self::try_from(levels)?;
        s.check_width(k)?;
        Ok(s)
    }

    fn check_width(&self, k: usize) -> Result<()> {
        let widest = self.widest();
        if widest > k {
            return Err(Error::spec(format!(
                "largest nesting level {widest} exceeds concept count {k}"
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn widest(&self) -> usize {
        *self.levels.last().expect("schedule is non-empty")
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, d: usize) -> bool {
        self.levels.binary_search(&d).is_ok()
    }

    pub fn index_of(&self, d: usize) -> Option<usize> {
        self.levels.binary_search(&d).ok()
    }

    /// Cumulative level boundaries, e.g. sizes (2, 4, 8) give (2, 6, 14).
    pub fn from_level_sizes(sizes: &[usize]) -> Result<Self> {
        let mut acc = 0;
        Self::try_from(
            sizes
                .iter()
                .map(|s| {
                    acc += s;
                    acc
                })
                .collect::<Vec<_>>(),
        )
    }
}

/// `d` leading ones followed by `k - d` zeros.
pub fn mask_for_level(d: usize, k: usize) -> Result<Vec<f64>> {
    if d > k {
        return Err(Error::spec(format!("mask level {d} exceeds concept count {k}")));
    }
    let mut m = vec![0.0; k];
    m[..d].fill(1.0);
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    Standard,
    Efficient,
}

impl FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(ModelMode::Standard),
            "efficient" => Ok(ModelMode::Efficient),
            other => Err(Error::spec(format!("unknown model mode {other:?}"))),
        }
    }
}

/// `logits = x W + b` with `W` stored row-major as `features x concepts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub features: usize,
    pub concepts: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Encoder {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let k = self.concepts;
        let mut out = self.bias.clone();
        for (f, &xf) in x.iter().enumerate() {
            if xf == 0.0 {
                continue;
            }
            let row = &self.weights[f * k..(f + 1) * k];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xf * w;
            }
        }
        out
    }
}

/// `scores = W c + b` with `W` stored row-major as `classes x width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub width: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Head {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// Scores from the first `width` entries of `c`.
    pub fn scores(&self, c: &[f64]) -> Vec<f64> {
        self.truncated_scores(c, self.width)
    }

    /// Scores using only the first `d` weight columns.
    pub fn truncated_scores(&self, c: &[f64], d: usize) -> Vec<f64> {
        (0..self.classes())
            .map(|cls| {
                let row = &self.weights[cls * self.width..cls * self.width + d];
                let mut acc = 0.0;
                for (w, v) in row.iter().zip(&c[..d]) {
                    acc += w * v;
                }
                acc + self.bias[cls]
            })
            .collect()
    }

    /// `(W ⊙ M) c + b`, the mask broadcast over rows.
    pub fn masked_scores(&self, c: &[f64], mask: &[f64]) -> Vec<f64> {
        (0..self.classes())
            .map(|cls| {
                let row = &self.weights[cls * self.width..(cls + 1) * self.width];
                let mut acc = 0.0;
                for ((w, m), v) in row.iter().zip(mask).zip(c) {
                    acc += w * m * v;
                }
                acc + self.bias[cls]
            })
            .collect()
    }

    /// Column-wise absolute weight mass.
    pub fn column_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.width];
        for cls in 0..self.classes() {
            for (m, w) in mass
                .iter_mut()
                .zip(&self.weights[cls * self.width..(cls + 1) * self.width])
            {
                *m += w.abs();
            }
        }
        mass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heads {
    /// One head per schedule level, in schedule order.
    Standard(Vec<Head>),
    /// One `classes x K` matrix and one bias shared by every level.
    Efficient(Head),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatryoshkaModel {
    pub format_version: u32,
    pub mode: ModelMode,
    pub schedule: NestingSchedule,
    pub permutation: Vec<usize>,
    pub encoder: Encoder,
    pub heads: Heads,
    pub training: TrainingMode,
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// Encoder logits in original concept order.
    pub logits: Vec<f64>,
    /// Sigmoid probabilities in ranked order.
    pub concept_probs: Vec<f64>,
    /// Class scores per schedule level.
    pub level_scores: Vec<Vec<f64>>,
}

fn uniform_fill(rng: &mut crate::rng::Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

pub fn init_model(
    features: usize,
    concepts: usize,
    classes: usize,
    schedule: NestingSchedule,
    mode: ModelMode,
    permutation: Vec<usize>,
    seed: u64,
) -> Result<MatryoshkaModel> {
    if concepts == 0 || classes < 2 {
        return Err(Error::spec(format!(
            "need K >= 1 and C >= 2, got K={concepts}, C={classes}"
        )));
    }
    schedule.check_width(concepts)?;
    validate_permutation(&permutation, concepts)?;
    let mut rng = seeded(seed, stream::INIT);
    let encoder = Encoder {
        features,
        concepts,
        weights: uniform_fill(&mut rng, features * concepts, features),
        bias: vec![0.0; concepts],
    };
    let head = |rng: &mut crate::rng::Rng, width: usize| Head {
        width,
        weights: uniform_fill(rng, classes * width, width),
        bias: vec![0.0; classes],
    };
    let heads = match mode {
        ModelMode::Standard => Heads::Standard(schedule.levels().iter().map(|&d| head(&mut rng, d)).collect()),
        ModelMode::Efficient => Heads::Efficient(head(&mut rng, concepts)),
    };
    Ok(MatryoshkaModel {
        format_version: MODEL_FORMAT_VERSION,
        mode,
        schedule,
        permutation,
        encoder,
        heads,
        training: TrainingMode::Joint,
    })
}

impl MatryoshkaModel {
    pub fn n_features(&self) -> usize {
        self.encoder.features
    }

    pub fn n_concepts(&self) -> usize {
        self.encoder.concepts
    }

    pub fn n_classes(&self) -> usize {
        match &self.heads {
            Heads::Standard(h) => h[0].classes(),
            Heads::Efficient(h) => h.classes(),
        }
    }

    /// Number of weight matrices held by the heads.
    pub fn head_matrix_count(&self) -> usize {
        match &self.heads {
            Heads::Standard(h) => h.len(),
            Heads::Efficient(_) => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_concepts();
        self.schedule.check_width(k)?;
        validate_permutation(&self.permutation, k)?;
        let enc = &self.encoder;
        if enc.weights.len() != enc.features * k || enc.bias.len() != k {
            return Err(Error::shape("encoder dimensions are inconsistent"));
        }
        let check = |h: &Head, width: usize| {
            if h.width != width || h.weights.len() != h.classes() * width || h.classes() < 2 {
                Err(Error::shape(format!("head of width {} is malformed", h.width)))
            } else {
                Ok(())
            }
        };
        match &self.heads {
            Heads::Standard(hs) => {
                if hs.len() != self.schedule.len() {
                    return Err(Error::shape("one standard head per schedule level is required"));
                }
                let c = hs[0].classes();
                for (h, &d) in hs.iter().zip(self.schedule.levels()) {
                    check(h, d)?;
                    if h.classes() != c {
                        return Err(Error::shape("heads disagree on class count"));
                    }
                }
            }
            Heads::Efficient(h) => check(h, k)?,
        }
        Ok(())
    }

    /// Sigmoid concept probabilities, permuted into ranked order.
    pub fn concept_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encode(x)?.1)
    }

    fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.n_features() {
            return Err(Error::shape(format!(
                "feature row has {} values, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        let logits = self.encoder.logits(x);
        let ordered = self.permutation.iter().map(|&j| sigmoid(logits[j])).collect();
        Ok((logits, ordered))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        let (logits, concept_probs) = self.encode(x)?;
        let level_scores = self
            .schedule
            .levels()
            .iter()
            .map(|&d| self.scores_at(&concept_probs, d))
            .collect::<Result<_>>()?;
        Ok(Forward {
            logits,
            concept_probs,
            level_scores,
        })
    }

    fn check_level(&self, d: usize) -> Result<()> {
        match self.mode {
            ModelMode::Standard if !self.schedule.contains(d) => Err(Error::UnsupportedLevel {
                level: d,
                schedule: self.schedule.levels().to_vec(),
            }),
            ModelMode::Efficient if d == 0 || d > self.n_concepts() => {
                Err(Error::spec(format!("level {d} outside 1..={}", self.n_concepts())))
            }
            _ => Ok(()),
        }
    }

    /// Raw class scores of the level-`d` head on ranked concept values.
    pub fn scores_at(&self, concepts_ordered: &[f64], d: usize) -> Result<Vec<f64>> {
        if concepts_ordered.len() != self.n_concepts() {
            return Err(Error::shape(format!(
                "concept vector has {} values, model expects {}",
                concepts_ordered.len(),
                self.n_concepts()
            )));
        }
        self.check_level(d)?;
        Ok(match &self.heads {
            Heads::Standard(hs) => hs[self.schedule.index_of(d).expect("checked")].scores(concepts_ordered),
            Heads::Efficient(h) => h.masked_scores(concepts_ordered, &mask_for_level(d, self.n_concepts())?),
        })
    }

    /// Softmax over the level-`d` head.
    pub fn predict_at(&self, concepts_ordered: &[f64], d: usize) -> Result<Vec<f64>> {
        Ok(softmax(&self.scores_at(concepts_ordered, d)?))
    }

    /// Width of the largest head.
    pub fn widest_level(&self) -> usize {
        match self.mode {
            ModelMode::Standard => self.schedule.widest(),
            ModelMode::Efficient => self.n_concepts(),
        }
    }

    /// Accuracy and macro F1 of the level-`d` head.
    pub fn evaluate(&self, dataset: &Dataset, d: usize) -> Result<(f64, f64)> {
        if dataset.is_empty() {
            return Err(Error::spec("cannot evaluate on an empty dataset"));
        }
        self.check_level(d)?;
        let preds = (0..dataset.n_samples())
            .map(|i| {
                let c = self.concept_probs(dataset.feature_row(i))?;
                Ok(argmax(&self.scores_at(&c, d)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(classification_metrics(&preds, dataset.labels(), self.n_classes()))
    }

    /// Concepts sorted by descending absolute weight mass in the widest head.
    pub fn weight_based_order(&self) -> Result<Vec<usize>> {
        let k = self.n_concepts();
        let head = match &self.heads {
            Heads::Standard(hs) => hs.last().expect("non-empty"),
            Heads::Efficient(h) => h,
        };
        if head.width != k {
            return Err(Error::spec(format!("widest head has width {}, need {k}", head.width)));
        }
        let mass = head.column_mass();
        let mut by_concept = vec![0.0; k];
        for (pos, &j) in self.permutation.iter().enumerate() {
            by_concept[j] = mass[pos];
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| by_concept[b].total_cmp(&by_concept[a]).then(a.cmp(&b)));
        Ok(order)
    }

    /// All trainable parameters, flattened: encoder weights, encoder bias,
    /// then each head's weights and bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.weights.clone();
        p.extend_from_slice(&self.encoder.bias);
        for h in self.head_list() {
            p.extend_from_slice(&h.weights);
            p.extend_from_slice(&h.bias);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params().len() {
            return Err(Error::shape(format!("parameter vector has {} entries", p.len())));
        }
        let mut it = p.iter().copied();
        let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
        fill(&mut self.encoder.weights);
        fill(&mut self.encoder.bias);
        for h in self.head_list_mut() {
            fill(&mut h.weights);
            fill(&mut h.bias);
        }
        Ok(())
    }

    /// Number of leading entries of [`params`](Self::params) owned by the encoder.
    pub fn encoder_param_count(&self) -> usize {
        self.encoder.weights.len() + self.encoder.bias.len()
    }

    pub(crate) fn head_list(&self) -> Vec<&Head> {
        match &self.heads {
            Heads::Standard(hs) => hs.iter().collect(),
            Heads::Efficient(h) => vec![h],
        }
    }

    fn head_list_mut(&mut self) -> Vec<&mut Head> {
        match &mut self.heads {
            Heads::Standard(hs) => hs.iter_mut().collect(),
            Heads::Efficient(h) => vec![h],
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::spec(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::cli::write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Accuracy and macro F1. A class that is neither predicted nor present
/// scores F1 = 0.
pub fn classification_metrics(predictions: &[usize], labels: &[usize], classes: usize) -> (f64, f64) {
    let n = labels.len();
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    let mut correct = 0;
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == y {
            correct += 1;
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let f1: f64 = (0..classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum::<f64>()
        / classes as f64;
    (correct as f64 / n as f64, f1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(k: usize) -> Vec<usize> {
        (0..k).collect()
    }

    #[test]
    fn masks() {
        assert_eq!(mask_for_level(3, 5).unwrap(), vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(mask_for_level(0, 4).unwrap(), vec![0.0; 4]);
        assert_eq!(mask_for_level(4, 4).unwrap(), vec![1.0; 4]);
        assert!(mask_for_level(5, 4).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(NestingSchedule::new(vec![2, 2], 4).is_err());
        assert!(NestingSchedule::new(vec![], 4).is_err());
        assert!(NestingSchedule::new(vec![2, 5], 4).is_err());
        assert_eq!("8, 16".parse::<NestingSchedule>().unwrap().levels(), &[8, 16]);
        assert_eq!(
            NestingSchedule::from_level_sizes(&[2, 4, 8]).unwrap().levels(),
            &[2, 6, 14]
        );
    }

    #[test]
    fn init_structure_and_determinism() {
        let s = NestingSchedule::new(vec![8, 16], 16).unwrap();
        let a = init_model(5, 16, 3, s.clone(), ModelMode::Standard, identity(16), 9).unwrap();
        let b = init_model(5, 16, 3, s, ModelMode::Standard, identity(16), 9).unwrap();
        assert_eq!(a, b);
        match &a.heads {
            Heads::Standard(hs) => {
                assert_eq!(hs.len(), 2);
                assert_eq!(hs[0].weights.len(), 3 * 8);
                assert_eq!(hs[1].weights.len(), 3 * 16);
            }
            Heads::Efficient(_) => unreachable!(),
        }
        let s5 = NestingSchedule::new(vec![1, 2, 4, 8, 16], 16).unwrap();
        let e = init_model(5, 16, 3, s5, ModelMode::Efficient, identity(16), 9).unwrap();
        assert_eq!(e.head_matrix_count(), 1);
        assert!(matches!(&e.heads, Heads::Efficient(h) if h.weights.len() == 3 * 16));
        let bad = NestingSchedule::try_from(vec![4, 20]).unwrap();
        assert!(init_model(5, 16, 3, bad, ModelMode::Standard, identity(16), 9).is_err());
    }

    #[test]
    fn zero_encoder_gives_half_probabilities() {
        let s = NestingSchedule::new(vec![2, 4], 4).unwrap();
        let mut m = init_model(3, 4, 2, s, ModelMode::Standard, vec![3, 1, 0, 2], 1).unwrap();
        m.encoder.weights.fill(0.0);
        let f = m.forward(&[0.3, -2.0, 7.0]).unwrap();
        assert_eq!(f.concept_probs, vec![0.5; 4]);
        assert!(matches!(m.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn efficient_masking_is_inert_beyond_d() {
        let s = NestingSchedule::new(vec![2, 5], 5).unwrap();
        let m = init_model(2, 5, 3, s, ModelMode::Efficient, identity(5), 4).unwrap();
        let c = vec![0.1, 0.9, 0.4, 0.3, 0.8];
        let mut c2 = c.clone();
        c2[3] = 0.0;
        c2[4] = 1.0;
        for d in 1..=3 {
            let a = m.predict_at(&c, d).unwrap();
            let b = m.predict_at(&c2, d).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let Heads::Efficient(h) = &m.heads else { unreachable!() };
        let full = m.scores_at(&c, 5).unwrap();
        let plain: Vec<f64> = (0..3)
            .map(|r| (0..5).fold(0.0, |acc, j| acc + h.weights[r * 5 + j] * c[j]) + h.bias[r])
            .collect();
        assert_eq!(full, plain);
    }

    #[test]
    fn standard_rejects_unscheduled_level() {
        let s = NestingSchedule::new(vec![2, 4], 4).unwrap();
        let m = init_model(2, 4, 2, s, ModelMode::Standard, identity(4), 4).unwrap();
        let err = m.predict_at(&[0.5; 4], 3).unwrap_err();
        assert!(matches!(err, Error::UnsupportedLevel { level: 3, .. }));
        let p = m.predict_at(&[0.5; 4], 2).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9 && p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn untrained_head_is_near_uniform() {
        // |s_c| <= d * (1/sqrt(d)) * max|c| = sqrt(d), so max/min <= exp(2 sqrt(d))
        let d = 8;
        let s = NestingSchedule::new(vec![d], 8).unwrap();
        let m = init_model(3, 8, 4, s, ModelMode::Standard, identity(8), 11).unwrap();
        let p = m.predict_at(&[1.0; 8], d).unwrap();
        let ratio = p.iter().cloned().fold(0.0, f64::max) / p.iter().cloned().fold(1.0, f64::min);
        assert!(ratio <= (2.0 * (d as f64).sqrt()).exp());
    }

    #[test]
    fn metrics_closed_forms() {
        assert_eq!(classification_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3), (1.0, 1.0));
        let (acc, f1) = classification_metrics(&[0, 0, 0, 0], &[0, 1, 0, 1], 2);
        assert_eq!(acc, 0.5);
        assert!((f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weight_order_ranks_dead_column_last_and_breaks_ties_low() {
        let s = NestingSchedule::new(vec![4], 4).unwrap();
        let mut m = init_model(1, 4, 2, s, ModelMode::Standard, vec![2, 0, 3, 1], 3).unwrap();
        let Heads::Standard(hs) = &mut m.heads else {
            unreachable!()
        };
        hs[0].weights = vec![0.5, 0.0, 0.5, 0.9, -0.5, 0.0, 0.5, 0.1];
        // ranked positions carry mass (1.0, 0.0, 1.0, 1.0) for concepts (2, 0, 3, 1)
        assert_eq!(m.weight_based_order().unwrap(), vec![1, 2, 3, 0]);
    }

    #[test]
    fn json_round_trip_is_bit_identical() {
        let s = NestingSchedule::new(vec![1, 3], 3).unwrap();
        let m = init_model(2, 3, 2, s, ModelMode::Standard, vec![1, 2, 0], 5).unwrap();
        let text = m.to_json().unwrap();
        assert!(text.find("\"mode\"").unwrap() < text.find("\"schedule\"").unwrap());
        assert!(text.find("\"permutation\"").unwrap() < text.find("\"encoder\"").unwrap());
        let back = MatryoshkaModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        let x = [0.123456789, -3.5];
        assert_eq!(back.forward(&x).unwrap(), m.forward(&x).unwrap());
    }
}
