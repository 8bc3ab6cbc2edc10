//! Oracle-driven test-time intervention and its cost.
//!
//! An intervention at `k` overwrites the `k` first concepts of an ordering
//! with their hard ground-truth values and leaves the rest of the soft
//! predictions alone.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SyntheticData};
use crate::error::{Error, Result};
use crate::info::validate_permutation;
use crate::math::{argmax, linear_fit};
use crate::model::MatryoshkaModel;

/// Which head scores an intervened vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadPolicy {
    /// The head whose width equals `k`; `k = 0` uses the widest head.
    Matched,
    /// Always the widest head.
    FullHead,
}

impl HeadPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadPolicy::Matched => "matched",
            HeadPolicy::FullHead => "full_head",
        }
    }

    fn level(self, model: &MatryoshkaModel, k: usize) -> usize {
        match self {
            HeadPolicy::Matched if k > 0 => k,
            _ => model.widest_level(),
        }
    }
}

impl FromStr for HeadPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" => Ok(Self::Matched),
            "full_head" | "full-head" | "full" => Ok(Self::FullHead),
            other => Err(Error::spec(format!("unknown head policy {other:?}"))),
        }
    }
}

/// Replaces the first `k` entries with exact 0.0 / 1.0 ground truth.
pub fn intervene_prefix(probs: &[f64], truth: &[u8], k: usize) -> Result<Vec<f64>> {
    if probs.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} probabilities, {} truth values",
            probs.len(),
            truth.len()
        )));
    }
    if k > probs.len() {
        return Err(Error::spec(format!("intervention count {k} exceeds {}", probs.len())));
    }
    let mut out = probs.to_vec();
    for (o, &t) in out[..k].iter_mut().zip(truth) {
        *o = f64::from(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub accuracy: f64,
}

/// Accuracy@k curve together with the labels needed to write it out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub policy: HeadPolicy,
    pub ordering: String,
    pub points: Vec<CurvePoint>,
}

impl AccuracyCurve {
    pub fn accuracies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.accuracy).collect()
    }

    /// Trapezoidal area under accuracy against `k / K`.
    pub fn auc(&self, k_total: usize) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].k - w[0].k) as f64 / k_total as f64 * (w[0].accuracy + w[1].accuracy) / 2.0)
            .sum()
    }
}

/// `k,accuracy,policy,ordering` rows for every curve.
pub fn write_curves_csv<W: Write>(curves: &[AccuracyCurve], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["k", "accuracy", "policy", "ordering"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                p.k.to_string(),
                format!("{:.6}", p.accuracy),
                c.policy.as_str().into(),
                c.ordering.clone(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<curve writer>", e))?;
    Ok(())
}

/// Where each concept of `ordering` sits in the model's ranked coordinates.
fn positions(model: &MatryoshkaModel, ordering: &[usize]) -> Result<Vec<usize>> {
    let k = model.n_concepts();
    validate_permutation(ordering, k)?;
    let mut pos = vec![0; k];
    for (p, &j) in model.permutation.iter().enumerate() {
        pos[j] = p;
    }
    Ok(ordering.iter().map(|&j| pos[j]).collect())
}

/// Soft ranked probabilities with the first `k` concepts of `ordering` set to
/// ground truth. When `ordering` equals the model permutation this is
/// [`intervene_prefix`].
fn intervened(probs: &[f64], truth: &[u8], ordering: &[usize], pos: &[usize], k: usize) -> Vec<f64> {
    let mut out = probs.to_vec();
    for (&j, &p) in ordering[..k].iter().zip(pos) {
        out[p] = f64::from(truth[j]);
    }
    out
}

fn check_grid(model: &MatryoshkaModel, k_grid: &[usize], policy: HeadPolicy) -> Result<()> {
    let k = model.n_concepts();
    for &kk in k_grid {
        if kk > k {
            return Err(Error::spec(format!("intervention count {kk} exceeds {k}")));
        }
        if policy == HeadPolicy::Matched
            && kk > 0
            && model.mode == crate::model::ModelMode::Standard
            && !model.schedule.contains(kk)
        {
            return Err(Error::UnsupportedLevel {
                level: kk,
                schedule: model.schedule.levels().to_vec(),
            });
        }
    }
    Ok(())
}

/// Per-sample predictions across a grid of intervention counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionTrace {
    pub sample_id: usize,
    pub label: usize,
    pub policy: HeadPolicy,
    pub base_prediction: usize,
    /// `(k, predicted class)` in grid order.
    pub per_k_predictions: Vec<(usize, usize)>,
    /// 1-based index of the first schedule level whose intervention is
    /// correct, `None` when no level is.
    pub minimal_sufficient_level: Option<usize>,
}

fn predict_grid(
    model: &MatryoshkaModel,
    dataset: &Dataset,
    ordering: &[usize],
    k_grid: &[usize],
    policy: HeadPolicy,
) -> Result<Vec<Vec<usize>>> {
    check_grid(model, k_grid, policy)?;
    let pos = positions(model, ordering)?;
    (0..dataset.n_samples())
        .map(|i| {
            let probs = model.concept_probs(dataset.feature_row(i))?;
            let truth = dataset.concept_row(i);
            k_grid
                .iter()
                .map(|&k| {
                    let c = intervened(&probs, truth, ordering, &pos, k);
                    Ok(argmax(&model.scores_at(&c, policy.level(model, k))?))
                })
                .collect()
        })
        .collect()
}

/// Accuracy after correcting the first `k` concepts of `ordering`, for each
/// `k` in `k_grid`.
pub fn accuracy_at_k(
    model: &MatryoshkaModel,
    dataset: &Dataset,
    ordering: &[usize],
    k_grid: &[usize],
    policy: HeadPolicy,
) -> Result<Vec<CurvePoint>> {
    if dataset.is_empty() {
        return Err(Error::spec("cannot intervene on an empty dataset"));
    }
    let preds = predict_grid(model, dataset, ordering, k_grid, policy)?;
    let n = dataset.n_samples() as f64;
    Ok(k_grid
        .iter()
        .enumerate()
        .map(|(g, &k)| {
            let correct = preds.iter().zip(dataset.labels()).filter(|(p, &y)| p[g] == y).count();
            CurvePoint {
                k,
                accuracy: correct as f64 / n,
            }
        })
        .collect())
}

/// Traces over `levels` (intervention counts at each nesting level).
pub fn intervention_traces(
    model: &MatryoshkaModel,
    dataset: &Dataset,
    ordering: &[usize],
    levels: &[usize],
    policy: HeadPolicy,
) -> Result<Vec<InterventionTrace>> {
    let mut grid = vec![0];
    grid.extend_from_slice(levels);
    let preds = predict_grid(model, dataset, ordering, &grid, policy)?;
    Ok(preds
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let y = dataset.labels()[i];
            let minimal_sufficient_level = p[1..].iter().position(|&q| q == y).map(|l| l + 1);
            InterventionTrace {
                sample_id: i,
                label: y,
                policy,
                base_prediction: p[0],
                per_k_predictions: grid.iter().copied().zip(p.iter().copied()).collect(),
                minimal_sufficient_level,
            }
        })
        .collect())
}

/// `sample_id,policy,k,prediction,correct`, one row per (sample, k).
pub fn write_traces_csv<W: Write>(traces: &[InterventionTrace], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["sample_id", "policy", "k", "prediction", "correct"])?;
    for t in traces {
        for &(k, p) in &t.per_k_predictions {
            w.write_record([
                t.sample_id.to_string(),
                t.policy.as_str().to_string(),
                k.to_string(),
                p.to_string(),
                u8::from(p == t.label).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}

/// Histogram of minimal sufficient levels plus a bucket for samples no level
/// fixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelHistogram {
    pub levels: Vec<usize>,
    pub counts: Vec<usize>,
    pub never: usize,
    /// Set when the filtered sample set was empty.
    pub warning: bool,
}

impl LevelHistogram {
    pub fn from_levels(levels: &[usize], found: impl IntoIterator<Item = Option<usize>>) -> Self {
        let mut counts = vec![0; levels.len()];
        let mut never = 0;
        let mut any = false;
        for l in found {
            any = true;
            match l {
                Some(l) => counts[l - 1] += 1,
                None => never += 1,
            }
        }
        Self {
            levels: levels.to_vec(),
            counts,
            never,
            warning: !any,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.never
    }
}

/// Minimal sufficient level of each sample under prefix intervention at the
/// schedule levels. With `misclassified_only`, samples already correct
/// before intervention are skipped.
pub fn minimal_sufficient_levels(
    model: &MatryoshkaModel,
    dataset: &Dataset,
    ordering: &[usize],
    levels: &[usize],
    policy: HeadPolicy,
    misclassified_only: bool,
) -> Result<(LevelHistogram, Vec<InterventionTrace>)> {
    let traces = intervention_traces(model, dataset, ordering, levels, policy)?;
    let kept: Vec<InterventionTrace> = traces
        .into_iter()
        .filter(|t| !misclassified_only || t.base_prediction != t.label)
        .collect();
    let hist = LevelHistogram::from_levels(levels, kept.iter().map(|t| t.minimal_sufficient_level));
    Ok((hist, kept))
}

/// Minimal sufficient level of every synthetic sample under the generator's
/// own labelling rule (a Bayes-optimal predictor on noiseless concepts),
/// with levels at the labeler's block boundaries.
pub fn planted_minimal_levels(data: &SyntheticData) -> Vec<Option<usize>> {
    let bounds = data.labeler.level_bounds();
    (0..data.dataset.n_samples())
        .map(|i| {
            let row = data.noiseless_row(i);
            bounds
                .iter()
                .position(|&b| data.labeler.prefix_determines(row, b))
                .map(|l| l + 1)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma_hat: f64,
    pub r_squared: f64,
    /// `P(level = i) ≈ c_hat * gamma_hat^(i-1)`.
    pub c_hat: f64,
}

/// Log-linear least squares of counts against level index, skipping empty
/// levels.
pub fn fit_geometric_decay(counts: &[f64]) -> Result<DecayFit> {
    let total: f64 = counts.iter().sum();
    let (x, y): (Vec<f64>, Vec<f64>) = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0.0)
        .map(|(i, &c)| (i as f64, c.ln()))
        .unzip();
    if x.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 non-empty levels, got {}", x.len())));
    }
    let (slope, intercept, r2) = linear_fit(&x, &y).ok_or_else(|| Error::Fit("degenerate design".into()))?;
    Ok(DecayFit {
        gamma_hat: slope.exp(),
        r_squared: r2,
        c_hat: intercept.exp() / total,
    })
}

/// `sum_i k_i P(level = i)`, with the never bucket charged `sum_i k_i`.
pub fn expected_cost(counts: &[f64], never: f64, level_sizes: &[usize]) -> Result<f64> {
    if counts.len() != level_sizes.len() {
        return Err(Error::shape(format!(
            "{} counts for {} levels",
            counts.len(),
            level_sizes.len()
        )));
    }
    if level_sizes.contains(&0) {
        return Err(Error::spec("level sizes must be positive"));
    }
    if counts.iter().chain([&never]).any(|c| !(*c >= 0.0)) {
        return Err(Error::spec("counts must be non-negative"));
    }
    let total: f64 = counts.iter().sum::<f64>() + never;
    if total <= 0.0 {
        return Err(Error::Fit("histogram has no mass".into()));
    }
    let full: usize = level_sizes.iter().sum();
    let e: f64 = counts.iter().zip(level_sizes).map(|(c, &k)| c * k as f64).sum::<f64>() + never * full as f64;
    Ok(e / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_intervention_definition() {
        let p = [0.9, 0.2, 0.7];
        let t = [0, 1, 1];
        assert_eq!(intervene_prefix(&p, &t, 0).unwrap(), p.to_vec());
        assert_eq!(intervene_prefix(&p, &t, 2).unwrap(), vec![0.0, 1.0, 0.7]);
        assert_eq!(intervene_prefix(&p, &t, 3).unwrap(), vec![0.0, 1.0, 1.0]);
        assert!(intervene_prefix(&p, &t, 4).is_err());
    }

    #[test]
    fn decay_fit_exact_geometric() {
        let fit = fit_geometric_decay(&[64.0, 32.0, 16.0, 8.0]).unwrap();
        assert!((fit.gamma_hat - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.c_hat - 64.0 / 120.0).abs() < 1e-12);
        assert!(matches!(fit_geometric_decay(&[5.0, 0.0, 0.0]), Err(Error::Fit(_))));
    }

    #[test]
    fn expected_cost_closed_forms() {
        assert_eq!(expected_cost(&[10.0, 0.0, 0.0], 0.0, &[2, 4, 8]).unwrap(), 2.0);
        assert!((expected_cost(&[1.0, 1.0, 1.0], 0.0, &[2, 4, 8]).unwrap() - 14.0 / 3.0).abs() < 1e-12);
        assert!((expected_cost(&[4.0, 2.0, 1.0], 0.0, &[2, 4, 8]).unwrap() - 24.0 / 7.0).abs() < 1e-12);
        assert_eq!(expected_cost(&[0.0, 0.0], 1.0, &[2, 4]).unwrap(), 6.0);
        assert!(matches!(expected_cost(&[0.0, 0.0], 0.0, &[2, 4]), Err(Error::Fit(_))));
    }

    #[test]
    fn histogram_buckets() {
        let h = LevelHistogram::from_levels(&[2, 6], [Some(1), None, Some(2), Some(1)]);
        assert_eq!(h.counts, vec![2, 1]);
        assert_eq!(h.never, 1);
        assert!(!h.warning);
        assert!(LevelHistogram::from_levels(&[2, 6], []).warning);
    }

    #[test]
    fn curve_csv_layout() {
        let c = AccuracyCurve {
            policy: HeadPolicy::Matched,
            ordering: "mrmr".into(),
            points: vec![CurvePoint { k: 0, accuracy: 0.5 }, CurvePoint { k: 4, accuracy: 1.0 }],
        };
        let mut out = Vec::new();
        write_curves_csv(std::slice::from_ref(&c), &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "k,accuracy,policy,ordering\n0,0.500000,matched,mrmr\n4,1.000000,matched,mrmr\n"
        );
        assert!((c.auc(4) - 0.75).abs() < 1e-15);
    }
}
