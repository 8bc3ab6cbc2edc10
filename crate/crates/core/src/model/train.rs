//! Joint objective, analytic gradients and the mini-batch trainer.

use std::io::Write;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{classification_metrics, mask_for_level, Heads, MatryoshkaModel, ModelMode};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{argmax, bce_with_logit, cross_entropy, sigmoid, softmax};
use crate::rng::{permutation, seeded, seeded_sub, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    Joint,
    /// Encoder trained on the concept loss, then frozen while heads train.
    Sequential,
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "sequential" => Ok(Self::Sequential),
            other => Err(Error::spec(format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficientTraining {
    AllLevels,
    /// One schedule level drawn uniformly per batch.
    RandomLevel,
}

impl FromStr for EfficientTraining {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_levels" | "all-levels" => Ok(Self::AllLevels),
            "random_level" | "random-level" => Ok(Self::RandomLevel),
            other => Err(Error::spec(format!("unknown efficient training strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    /// Per-level task weights; `None` means 1 for every level.
    pub lambdas: Option<Vec<f64>>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub efficient_training: EfficientTraining,
    pub training_mode: TrainingMode,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambdas: None,
            epochs: 30,
            learning_rate: 0.5,
            batch_size: 32,
            efficient_training: EfficientTraining::AllLevels,
            training_mode: TrainingMode::Joint,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, levels: usize) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::spec(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::spec(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::spec("batch size must be positive"));
        }
        if let Some(l) = &self.lambdas {
            if l.len() != levels {
                return Err(Error::spec(format!("{} lambdas for {levels} levels", l.len())));
            }
            if l.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::spec("lambdas must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn lambda(&self, level_index: usize) -> f64 {
        self.lambdas.as_ref().map_or(1.0, |l| l[level_index])
    }
}

/// Which terms of the objective contribute, and which parameters move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Full objective; every parameter receives gradient.
    Joint,
    /// `alpha * BCE` only; head gradients are zero.
    Concept,
    /// Task loss only; encoder gradients are zero.
    Task,
}

/// Objective on rows `batch` and its gradient, laid out like
/// [`MatryoshkaModel::params`].
///
/// The concept term is `alpha` times BCE averaged over rows and concepts; the
/// task term is the `lambda`-weighted sum over `levels` (schedule indices) of
/// cross-entropy averaged over rows.
pub fn loss_and_gradients(
    model: &MatryoshkaModel,
    dataset: &Dataset,
    batch: &[usize],
    config: &LossConfig,
    levels: &[usize],
    phase: Phase,
) -> Result<(f64, Vec<f64>)> {
    let f = model.n_features();
    let k = model.n_concepts();
    let c = model.n_classes();
    if dataset.n_features() != f || dataset.n_concepts() != k {
        return Err(Error::shape(format!(
            "dataset is {}x{} (features x concepts), model expects {f}x{k}",
            dataset.n_features(),
            dataset.n_concepts()
        )));
    }
    if dataset.class_count() > c {
        return Err(Error::shape(format!(
            "dataset has {} classes, model {c}",
            dataset.class_count()
        )));
    }
    let b = batch.len().max(1) as f64;
    let schedule = model.schedule.levels();
    let with_concept = phase != Phase::Task;
    let with_task = phase != Phase::Concept;

    let mut grad = vec![0.0; model.params().len()];
    let enc_w = 0..f * k;
    let enc_b = f * k..f * k + k;
    // offsets of each head block in the flat layout
    let mut head_offsets = Vec::new();
    let mut off = f * k + k;
    for h in model.head_list() {
        head_offsets.push(off);
        off += h.weights.len() + h.bias.len();
    }

    let mut loss = 0.0;
    let mut dz = vec![0.0; k];
    let mut dc = vec![0.0; k];
    for &i in batch {
        let x = dataset.feature_row(i);
        let target = dataset.concept_row(i);
        let y = dataset.labels()[i];
        let logits = model.encoder.logits(x);
        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let ordered: Vec<f64> = model.permutation.iter().map(|&j| probs[j]).collect();

        dz.fill(0.0);
        if with_concept && config.alpha > 0.0 {
            let scale = config.alpha / (b * k as f64);
            for j in 0..k {
                let t = f64::from(target[j]);
                loss += scale * bce_with_logit(logits[j], t);
                dz[j] += scale * (probs[j] - t);
            }
        }
        if with_task {
            dc.fill(0.0);
            for &li in levels {
                let lambda = config.lambda(li);
                if lambda == 0.0 {
                    continue;
                }
                let d = schedule[li];
                let (head, base) = match &model.heads {
                    Heads::Standard(hs) => (&hs[li], head_offsets[li]),
                    Heads::Efficient(h) => (h, head_offsets[0]),
                };
                let scores = match model.mode {
                    ModelMode::Standard => head.scores(&ordered),
                    ModelMode::Efficient => head.masked_scores(&ordered, &mask_for_level(d, k)?),
                };
                loss += lambda * cross_entropy(&scores, y) / b;
                let q = softmax(&scores);
                let w = head.width;
                let bias_off = base + head.weights.len();
                for cls in 0..c {
                    let g = lambda * (q[cls] - if cls == y { 1.0 } else { 0.0 }) / b;
                    if g == 0.0 {
                        continue;
                    }
                    grad[bias_off + cls] += g;
                    let row = &head.weights[cls * w..cls * w + d];
                    for t in 0..d {
                        grad[base + cls * w + t] += g * ordered[t];
                        dc[t] += g * row[t];
                    }
                }
            }
            if phase == Phase::Joint {
                for (t, &j) in model.permutation.iter().enumerate() {
                    dz[j] += dc[t] * probs[j] * (1.0 - probs[j]);
                }
            }
        }
        if phase != Phase::Task {
            for (fi, &xf) in x.iter().enumerate() {
                if xf == 0.0 {
                    continue;
                }
                let row = &mut grad[enc_w.start + fi * k..enc_w.start + (fi + 1) * k];
                for (g, d) in row.iter_mut().zip(&dz) {
                    *g += xf * d;
                }
            }
            for (g, d) in grad[enc_b.clone()].iter_mut().zip(&dz) {
                *g += d;
            }
        }
    }
    Ok((loss, grad))
}

/// Per ranked coordinate, the sum over rows of the squared task-loss
/// gradient with respect to that coordinate, all heads active.
pub fn gradient_pressure(model: &MatryoshkaModel, dataset: &Dataset, config: &LossConfig) -> Result<Vec<f64>> {
    let k = model.n_concepts();
    let all: Vec<usize> = (0..model.schedule.len()).collect();
    let mut pressure = vec![0.0; k];
    for i in 0..dataset.n_samples() {
        let ordered = model.concept_probs(dataset.feature_row(i))?;
        let y = dataset.labels()[i];
        let mut dc = vec![0.0; k];
        for &li in &all {
            let d = model.schedule.levels()[li];
            let lambda = config.lambda(li);
            let head = match &model.heads {
                Heads::Standard(hs) => &hs[li],
                Heads::Efficient(h) => h,
            };
            let q = softmax(&model.scores_at(&ordered, d)?);
            for (cls, &qc) in q.iter().enumerate() {
                let g = lambda * (qc - if cls == y { 1.0 } else { 0.0 });
                for (t, v) in dc[..d].iter_mut().enumerate() {
                    *v += g * head.weights[cls * head.width + t];
                }
            }
        }
        for (p, g) in pressure.iter_mut().zip(&dc) {
            *p += g * g;
        }
    }
    Ok(pressure)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub level: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainingHistory {
    /// `epoch,level,split,loss,accuracy`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["epoch", "level", "split", "loss", "accuracy"])?;
        for r in &self.rows {
            w.write_record([
                r.epoch.to_string(),
                r.level.to_string(),
                r.split.clone(),
                format!("{:.6}", r.loss),
                format!("{:.6}", r.accuracy),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<history writer>", e))?;
        Ok(())
    }

    /// Final recorded accuracy of `level` on `split`.
    pub fn final_accuracy(&self, level: usize, split: &str) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.level == level && r.split == split)
            .map(|r| r.accuracy)
    }
}

fn record_epoch(
    model: &MatryoshkaModel,
    data: &Dataset,
    split: &str,
    epoch: usize,
    out: &mut Vec<HistoryRow>,
) -> Result<()> {
    if data.is_empty() {
        return Ok(());
    }
    let levels = model.schedule.levels();
    let mut loss = vec![0.0; levels.len()];
    let mut preds = vec![Vec::with_capacity(data.n_samples()); levels.len()];
    for i in 0..data.n_samples() {
        let f = model.forward(data.feature_row(i))?;
        let y = data.labels()[i];
        for (li, s) in f.level_scores.iter().enumerate() {
            loss[li] += cross_entropy(s, y);
            preds[li].push(argmax(s));
        }
    }
    let n = data.n_samples() as f64;
    for (li, &d) in levels.iter().enumerate() {
        let (acc, _) = classification_metrics(&preds[li], data.labels(), model.n_classes());
        out.push(HistoryRow {
            epoch,
            level: d,
            split: split.into(),
            loss: loss[li] / n,
            accuracy: acc,
        });
    }
    Ok(())
}

/// Mini-batch gradient descent on a private copy of `model`.
///
/// Joint mode runs `epochs` passes of the full objective. Sequential mode runs
/// `epochs` passes of the concept loss on the encoder, then `epochs` passes of
/// the task loss with the encoder frozen. Batches come from a per-epoch
/// shuffle of the training rows. History rows are recorded after every epoch.
pub fn train(
    model: &MatryoshkaModel,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &LossConfig,
) -> Result<(MatryoshkaModel, TrainingHistory)> {
    model.validate()?;
    config.validate(model.schedule.len())?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for d in [train_set, val_set] {
        if !d.is_empty() && (d.n_features() != model.n_features() || d.n_concepts() != model.n_concepts()) {
            return Err(Error::shape("dataset dimensions do not match the model"));
        }
    }
    let mut model = model.clone();
    model.training = config.training_mode;
    let phases: Vec<Phase> = match config.training_mode {
        TrainingMode::Joint => vec![Phase::Joint],
        TrainingMode::Sequential => vec![Phase::Concept, Phase::Task],
    };
    let all_levels: Vec<usize> = (0..model.schedule.len()).collect();
    let mut level_rng = seeded(config.seed, stream::LEVEL_PICK);
    let mut history = TrainingHistory::default();
    let mut params = model.params();
    let n = train_set.n_samples();
    let mut epoch = 0;
    for phase in phases {
        for _ in 0..config.epochs {
            epoch += 1;
            let mut rng = seeded_sub(config.seed, stream::SHUFFLE, epoch as u64);
            let order = permutation(&mut rng, n);
            for batch in order.chunks(config.batch_size) {
                let picked;
                let levels: &[usize] = if model.mode == ModelMode::Efficient
                    && config.efficient_training == EfficientTraining::RandomLevel
                    && phase != Phase::Concept
                {
                    picked = [level_rng.random_range(0..all_levels.len())];
                    &picked
                } else {
                    &all_levels
                };
                let (loss, grad) = loss_and_gradients(&model, train_set, batch, config, levels, phase)?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::TrainingDiverged {
                        epoch,
                        loss,
                        state: Box::new(model),
                    });
                }
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= config.learning_rate * g;
                }
                model.set_params(&params)?;
            }
            record_epoch(&model, train_set, "train", epoch, &mut history.rows)?;
            record_epoch(&model, val_set, "val", epoch, &mut history.rows)?;
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, NestingSchedule};

    fn toy(n: usize, f: usize, k: usize, c: usize, seed: u64) -> Dataset {
        let mut rng = seeded(seed, 99);
        let features: Vec<f64> = (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect();
        let concepts: Vec<u8> = (0..n * k).map(|_| rng.random_range(0..2)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        Dataset::new(
            features,
            (0..f).map(|j| format!("f_{}", j + 1)).collect(),
            concepts,
            (0..k).map(|j| format!("c{j}")).collect(),
            labels,
            c,
        )
        .unwrap()
    }

    fn fd_check(mode: ModelMode, phase: Phase, seed: u64) {
        let (f, k, c) = (3 + seed as usize % 4, 2 + seed as usize % 5, 2 + seed as usize % 4);
        let data = toy(7, f, k, c, seed);
        let levels = if k > 2 { vec![1, k / 2 + 1, k] } else { vec![1, k] };
        let sched = NestingSchedule::new(levels, k).unwrap();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.reverse();
        let mut model = init_model(f, k, c, sched, mode, perm, seed).unwrap();
        // move off zero biases
        let p0: Vec<f64> = model
            .params()
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.01 * (i % 7) as f64)
            .collect();
        model.set_params(&p0).unwrap();
        let cfg = LossConfig {
            alpha: 0.7,
            lambdas: Some(vec![0.5; model.schedule.len()]),
            ..Default::default()
        };
        let batch: Vec<usize> = (0..7).collect();
        let all: Vec<usize> = (0..model.schedule.len()).collect();
        let (_, grad) = loss_and_gradients(&model, &data, &batch, &cfg, &all, phase).unwrap();
        let enc = model.encoder_param_count();
        let h = 1e-5;
        for idx in 0..p0.len() {
            let trainable = match phase {
                Phase::Joint => true,
                Phase::Concept => idx < enc,
                Phase::Task => idx >= enc,
            };
            if !trainable {
                assert_eq!(grad[idx], 0.0);
                continue;
            }
            let mut m = model.clone();
            let mut p = p0.clone();
            p[idx] += h;
            m.set_params(&p).unwrap();
            let up = loss_and_gradients(&m, &data, &batch, &cfg, &all, phase).unwrap().0;
            p[idx] -= 2.0 * h;
            m.set_params(&p).unwrap();
            let down = loss_and_gradients(&m, &data, &batch, &cfg, &all, phase).unwrap().0;
            let num = (up - down) / (2.0 * h);
            let err = (num - grad[idx]).abs() / num.abs().max(grad[idx].abs()).max(1e-6);
            assert!(err < 1e-4, "param {idx}: analytic {} numeric {num}", grad[idx]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            for mode in [ModelMode::Standard, ModelMode::Efficient] {
                for phase in [Phase::Joint, Phase::Concept, Phase::Task] {
                    fd_check(mode, phase, seed);
                }
            }
        }
    }

    #[test]
    fn sequential_freezes_encoder_during_head_phase() {
        let data = toy(40, 4, 3, 2, 1);
        let sched = NestingSchedule::new(vec![1, 3], 3).unwrap();
        let model = init_model(4, 3, 2, sched, ModelMode::Standard, vec![0, 1, 2], 2).unwrap();
        let cfg = LossConfig {
            training_mode: TrainingMode::Sequential,
            epochs: 3,
            ..Default::default()
        };
        let (phase1, _) = train(
            &model,
            &data,
            &data,
            &LossConfig {
                training_mode: TrainingMode::Joint,
                alpha: 1.0,
                lambdas: Some(vec![0.0, 0.0]),
                ..cfg.clone()
            },
        )
        .unwrap();
        let (trained, hist) = train(&model, &data, &data, &cfg).unwrap();
        // after the concept phase the encoder never moves again
        assert_eq!(trained.encoder, phase1.encoder);
        assert_eq!(trained.training, TrainingMode::Sequential);
        assert_eq!(hist.rows.iter().map(|r| r.epoch).max(), Some(6));
    }

    #[test]
    fn diverging_loss_returns_state() {
        let data = toy(20, 3, 2, 2, 3);
        let sched = NestingSchedule::new(vec![2], 2).unwrap();
        let mut model = init_model(3, 2, 2, sched, ModelMode::Standard, vec![0, 1], 2).unwrap();
        model.encoder.weights[0] = f64::INFINITY;
        let cfg = LossConfig {
            epochs: 5,
            ..Default::default()
        };
        match train(&model, &data, &data, &cfg) {
            Err(Error::TrainingDiverged { epoch, state, .. }) => {
                assert_eq!(epoch, 1);
                assert_eq!(state.n_concepts(), 2);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn history_csv_header() {
        let h = TrainingHistory {
            rows: vec![HistoryRow {
                epoch: 1,
                level: 4,
                split: "val".into(),
                loss: 0.5,
                accuracy: 0.75,
            }],
        };
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "epoch,level,split,loss,accuracy\n1,4,val,0.500000,0.750000\n"
        );
    }
}
