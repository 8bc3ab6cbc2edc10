#![allow(dead_code)]

use std::collections::HashMap;
use std::hash::Hash;

use mcbm::data::Dataset;
use mcbm::rng::{seeded, Rng};
use rand::Rng as _;

pub const TIE: f64 = 1e-12;

/// Plug-in entropy in nats from symbol counts.
pub fn entropy_oracle<T: Hash + Eq + Copy>(xs: &[T]) -> f64 {
    let mut counts: HashMap<T, usize> = HashMap::new();
    for &x in xs {
        *counts.entry(x).or_default() += 1;
    }
    let n = xs.len() as f64;
    counts.values().map(|&c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

/// `H(X) + H(Y) - H(X,Y)`.
pub fn mi_oracle<A: Hash + Eq + Copy, B: Hash + Eq + Copy>(x: &[A], y: &[B]) -> f64 {
    let pairs: Vec<(A, B)> = x.iter().copied().zip(y.iter().copied()).collect();
    (entropy_oracle(x) + entropy_oracle(y) - entropy_oracle(&pairs)).max(0.0)
}

/// Greedy ordering by full re-enumeration of every candidate score at every
/// step, with nothing cached between steps.
pub fn mrmr_oracle(columns: &[Vec<u8>], labels: &[usize]) -> Vec<usize> {
    let k = columns.len();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < k {
        let scores: Vec<(usize, f64)> = (0..k)
            .filter(|j| !chosen.contains(j))
            .map(|j| {
                let rel = mi_oracle(&columns[j], labels);
                let red = if chosen.is_empty() {
                    0.0
                } else {
                    chosen.iter().map(|&s| mi_oracle(&columns[j], &columns[s])).sum::<f64>() / chosen.len() as f64
                };
                (j, rel - red)
            })
            .collect();
        let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let pick = scores.iter().find(|s| s.1 >= best - TIE).unwrap().0;
        chosen.push(pick);
    }
    chosen
}

/// Random binary concept table with labels, sometimes containing duplicated
/// or complemented columns.
pub fn random_concept_table(rng: &mut Rng, k: usize, n: usize, classes: usize) -> (Vec<Vec<u8>>, Vec<usize>) {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let mut columns: Vec<Vec<u8>> = Vec::with_capacity(k);
    for j in 0..k {
        let col = match rng.random_range(0..5) {
            0 if j > 0 => columns[rng.random_range(0..j)].clone(),
            1 if j > 0 => columns[rng.random_range(0..j)].iter().map(|v| 1 - v).collect(),
            2 => labels
                .iter()
                .map(|&y| u8::from((y + j) % 2 == 0) ^ u8::from(rng.random_bool(0.2)))
                .collect(),
            _ => {
                let p = rng.random_range(0.1..0.9);
                (0..n).map(|_| u8::from(rng.random_bool(p))).collect()
            }
        };
        columns.push(col);
    }
    (columns, labels)
}

pub fn dataset_from_columns(columns: &[Vec<u8>], labels: &[usize], classes: usize) -> Dataset {
    let n = labels.len();
    let k = columns.len();
    let mut concepts = Vec::with_capacity(n * k);
    for i in 0..n {
        for col in columns {
            concepts.push(col[i]);
        }
    }
    let features = concepts.iter().map(|&c| f64::from(c)).collect();
    Dataset::new(
        features,
        (0..k).map(|j| format!("f{j}")).collect(),
        concepts,
        (0..k).map(|j| format!("c{j}")).collect(),
        labels.to_vec(),
        classes,
    )
    .unwrap()
}

/// Small dataset with Gaussian features and random concepts and labels.
pub fn toy_dataset(seed: u64, n: usize, f: usize, k: usize, c: usize) -> Dataset {
    let mut rng = seeded(seed, 4242);
    let features = (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect();
    let concepts = (0..n * k).map(|_| u8::from(rng.random_bool(0.5))).collect();
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    for (i, l) in labels.iter_mut().enumerate().take(c) {
        *l = i;
    }
    Dataset::new(
        features,
        (0..f).map(|j| format!("x{j}")).collect(),
        concepts,
        (0..k).map(|j| format!("c{j}")).collect(),
        labels,
        c,
    )
    .unwrap()
}

/// Spearman correlation between two rank vectors without ties.
pub fn spearman(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut pos_a = vec![0usize; a.len()];
    let mut pos_b = vec![0usize; b.len()];
    for (i, &v) in a.iter().enumerate() {
        pos_a[v] = i;
    }
    for (i, &v) in b.iter().enumerate() {
        pos_b[v] = i;
    }
    let d2: f64 = pos_a
        .iter()
        .zip(&pos_b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
