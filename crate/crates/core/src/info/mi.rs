use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything usable as a discrete symbol.
pub trait Symbol: Copy + Ord {}
impl<T: Copy + Ord> Symbol for T {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Nats, never negative.
    pub value: f64,
    pub support_x: usize,
    pub support_y: usize,
}

/// Maps symbols to dense codes `0..alphabet` in sorted symbol order.
pub(crate) fn encode<T: Symbol>(values: &[T]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    for &v in values {
        map.entry(v).or_insert(0usize);
    }
    for (i, code) in map.values_mut().enumerate() {
        *code = i;
    }
    (values.iter().map(|v| map[v]).collect(), map.len())
}

/// Plug-in MI from a dense `nx x ny` contingency table of counts.
pub(crate) fn mi_from_counts(joint: &[u64], nx: usize, ny: usize, n: u64) -> f64 {
    let mut px = vec![0u64; nx];
    let mut py = vec![0u64; ny];
    for a in 0..nx {
        for b in 0..ny {
            let c = joint[a * ny + b];
            px[a] += c;
            py[b] += c;
        }
    }
    let nf = n as f64;
    let mut total = 0.0;
    for a in 0..nx {
        for b in 0..ny {
            let c = joint[a * ny + b];
            if c == 0 {
                continue;
            }
            let cf = c as f64;
            total += cf / nf * (cf * nf / (px[a] as f64 * py[b] as f64)).ln();
        }
    }
    total.max(0.0)
}

/// Plug-in estimate of `I(X;Y)` over the empirical joint distribution.
pub fn mutual_information<X: Symbol, Y: Symbol>(x: &[X], y: &[Y]) -> Result<MiEstimate> {
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::shape("mutual information needs at least one sample"));
    }
    let (xc, nx) = encode(x);
    let (yc, ny) = encode(y);
    let mut joint = vec![0u64; nx * ny];
    for (&a, &b) in xc.iter().zip(&yc) {
        joint[a * ny + b] += 1;
    }
    Ok(MiEstimate {
        value: mi_from_counts(&joint, nx, ny, x.len() as u64),
        support_x: nx,
        support_y: ny,
    })
}

/// Plug-in Shannon entropy in nats.
pub fn entropy<T: Symbol>(x: &[T]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let (codes, m) = encode(x);
    let mut counts = vec![0u64; m];
    for c in codes {
        counts[c] += 1;
    }
    let n = x.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// MI between two binary columns.
pub(crate) fn binary_mi(a: &[u8], b: &[u8]) -> f64 {
    let mut joint = [0u64; 4];
    for (&x, &y) in a.iter().zip(b) {
        joint[((x & 1) as usize) * 2 + (y & 1) as usize] += 1;
    }
    mi_from_counts(&joint, 2, 2, a.len() as u64)
}

/// MI between a binary column and dense class labels in `0..classes`.
pub(crate) fn binary_label_mi(a: &[u8], labels: &[usize], classes: usize) -> f64 {
    let mut joint = vec![0u64; 2 * classes];
    for (&x, &y) in a.iter().zip(labels) {
        joint[(x & 1) as usize * classes + y] += 1;
    }
    mi_from_counts(&joint, 2, classes, a.len() as u64)
}
