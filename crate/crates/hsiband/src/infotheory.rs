//! Histogram-based entropy, mutual information, and Fano error bounds.
//!
//! Everything operates on discrete symbol counts; probabilities are maximum
//! likelihood (`count / total`). Logarithms are base 2 throughout, so all
//! entropies and informations are in bits and the Fano bounds divide by
//! `log2(Nc)` directly.

use crate::error::{Error, Result};

/// Counts per symbol of a single discrete variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn from_counts(counts: Vec<u64>) -> Histogram {
        let total = counts.iter().sum();
        Histogram { counts, total }
    }

    /// Tally a masked sequence of symbols.
    pub fn from_sequence<X>(xs: &[X], mask: &[bool]) -> Result<Histogram>
    where
        X: Copy + Into<usize>,
    {
        if xs.len() != mask.len() {
            return Err(Error::Domain(format!(
                "sequence length {} != mask length {}",
                xs.len(),
                mask.len()
            )));
        }
        let mut counts = Vec::new();
        for (&x, &m) in xs.iter().zip(mask) {
            if !m {
                continue;
            }
            let x: usize = x.into();
            if x >= counts.len() {
                counts.resize(x + 1, 0);
            }
            counts[x] += 1;
        }
        if counts.is_empty() {
            return Err(Error::Domain("mask selects no positions".into()));
        }
        Ok(Histogram::from_counts(counts))
    }
}

/// Co-occurrence counts of two discrete variables, stored row-major
/// (`counts[x * ny + y]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointHistogram {
    pub nx: usize,
    pub ny: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl JointHistogram {
    pub fn count(&self, x: usize, y: usize) -> u64 {
        self.counts[x * self.ny + y]
    }

    /// Marginal histogram over the first variable.
    pub fn marginal_x(&self) -> Histogram {
        let counts = self
            .counts
            .chunks_exact(self.ny)
            .map(|row| row.iter().sum())
            .collect();
        Histogram::from_counts(counts)
    }

    /// Marginal histogram over the second variable.
    pub fn marginal_y(&self) -> Histogram {
        let mut counts = vec![0u64; self.ny];
        for row in self.counts.chunks_exact(self.ny) {
            for (acc, &c) in counts.iter_mut().zip(row) {
                *acc += c;
            }
        }
        Histogram::from_counts(counts)
    }

    pub fn transpose(&self) -> JointHistogram {
        let mut counts = vec![0u64; self.counts.len()];
        for (x, row) in self.counts.chunks_exact(self.ny).enumerate() {
            for (y, &c) in row.iter().enumerate() {
                counts[y * self.nx + x] = c;
            }
        }
        JointHistogram {
            nx: self.ny,
            ny: self.nx,
            counts,
            total: self.total,
        }
    }
}

/// Count co-occurring symbol pairs over the masked positions.
pub fn joint_histogram<X, Y>(xs: &[X], ys: &[Y], mask: &[bool]) -> Result<JointHistogram>
where
    X: Copy + Into<usize>,
    Y: Copy + Into<usize>,
{
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!(
            "sequence lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() != mask.len() {
        return Err(Error::Domain(format!(
            "sequence length {} != mask length {}",
            xs.len(),
            mask.len()
        )));
    }
    let mut nx = 0usize;
    let mut ny = 0usize;
    let mut any = false;
    for i in 0..xs.len() {
        if mask[i] {
            any = true;
            nx = nx.max(xs[i].into() + 1);
            ny = ny.max(ys[i].into() + 1);
        }
    }
    if !any {
        return Err(Error::Domain("mask selects no positions".into()));
    }
    let mut counts = vec![0u64; nx * ny];
    let mut total = 0u64;
    for i in 0..xs.len() {
        if mask[i] {
            counts[xs[i].into() * ny + ys[i].into()] += 1;
            total += 1;
        }
    }
    Ok(JointHistogram {
        nx,
        ny,
        counts,
        total,
    })
}

/// Shannon entropy in bits: `-sum p log2 p` with `0 log 0 = 0`.
pub fn entropy(h: &Histogram) -> Result<f64> {
    if h.total == 0 {
        return Err(Error::Domain("entropy of an empty histogram".into()));
    }
    let t = h.total as f64;
    let mut acc = 0.0;
    for &c in &h.counts {
        if c == 0 {
            continue;
        }
        let p = c as f64 / t;
        acc += -(p * p.log2());
    }
    Ok(acc)
}

/// Mutual information in bits from a joint histogram.
///
/// Cells are folded diagonal-first and in transpose-symmetric pairs, and each
/// term is `p * (log2 p - (log2 px + log2 py))`, so the result is bit-identical
/// under axis swap and degenerates exactly to `entropy` when X == Y.
pub fn mutual_information(j: &JointHistogram) -> Result<f64> {
    if j.total == 0 {
        return Err(Error::Domain("mutual information of an empty joint".into()));
    }
    let t = j.total as f64;
    let mx = j.marginal_x();
    let my = j.marginal_y();
    let lx: Vec<f64> = mx
        .counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { (c as f64 / t).log2() })
        .collect();
    let ly: Vec<f64> = my
        .counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { (c as f64 / t).log2() })
        .collect();
    let term = |x: usize, y: usize| -> f64 {
        let c = j.counts[x * j.ny + y];
        if c == 0 {
            return 0.0;
        }
        let p = c as f64 / t;
        p * (p.log2() - (lx[x] + ly[y]))
    };
    let d = j.nx.max(j.ny);
    let mut acc = 0.0;
    for m in 0..d {
        if m < j.nx && m < j.ny {
            let c = j.counts[m * j.ny + m];
            if c != 0 {
                acc += term(m, m);
            }
        }
        for n in 0..m {
            let mut group = 0.0;
            if m < j.nx && n < j.ny && j.counts[m * j.ny + n] != 0 {
                group += term(m, n);
            }
            if n < j.nx && m < j.ny && j.counts[n * j.ny + m] != 0 {
                group += term(n, m);
            }
            acc += group;
        }
    }
    Ok(acc.max(0.0))
}

/// `H(C|X) = max(0, H(C) - I(C;X))`; the clamp guards estimation noise.
pub fn conditional_entropy(hc: f64, mi: f64) -> f64 {
    (hc - mi).max(0.0)
}

/// Fano bracket on the error probability of predicting a variable with
/// `class_count` outcomes from an observation leaving `conditional_entropy`
/// bits of uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanoBounds {
    pub lower: f64,
    pub upper: f64,
    pub conditional_entropy: f64,
    pub class_count: usize,
}

/// Lower bound `max(0, (H(C|X) - 1) / log2 Nc)`, upper bound
/// `H(C|X) / log2 Nc`.
pub fn fano_bounds(hc_given_x: f64, class_count: usize) -> Result<FanoBounds> {
    if class_count < 2 {
        return Err(Error::Domain(format!(
            "Fano bounds need at least 2 classes, got {class_count}"
        )));
    }
    if hc_given_x < 0.0 {
        return Err(Error::Domain(format!(
            "conditional entropy must be nonnegative, got {hc_given_x}"
        )));
    }
    let log_nc = (class_count as f64).log2();
    Ok(FanoBounds {
        lower: ((hc_given_x - 1.0) / log_nc).max(0.0),
        upper: hc_given_x / log_nc,
        conditional_entropy: hc_given_x,
        class_count,
    })
}
