//! Numeric kernels: cosine similarity, clamped similarity matrices, set
//! precision/recall and the harmonic mean used to fuse scores.
//!
//! Every reduction runs in `f64` in index order so results are reproducible
//! bit-for-bit across runs.

use crate::error::ScoreError;
use crate::model::Embedding;

/// Cosine similarity of two embeddings, in [-1, 1].
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, ScoreError> {
    if a.dim() != b.dim() {
        return Err(ScoreError::Dimension {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0 && nb > 0.0) || !na.is_finite() || !nb.is_finite() {
        return Err(ScoreError::DegenerateVector);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn clamp01(s: f64) -> f64 {
    s.clamp(0.0, 1.0)
}

/// Clamped cosine similarities between two embedding sets, row-major.
///
/// Rows index the first set (regions or reference phrases), columns the
/// second (candidate phrases).
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
}

impl SimMatrix {
    /// Builds `cells[n][m] = clamp01(cosine(rows[n], cols[m]))`.
    pub fn between(rows: &[&Embedding], cols: &[&Embedding]) -> Result<Self, ScoreError> {
        if rows.is_empty() || cols.is_empty() {
            return Err(ScoreError::EmptySet);
        }
        let mut cells = Vec::with_capacity(rows.len() * cols.len());
        for r in rows {
            for c in cols {
                cells.push(clamp01(cosine(r, c)?));
            }
        }
        Ok(Self {
            rows: rows.len(),
            cols: cols.len(),
            cells,
        })
    }

    /// Wraps precomputed cells. Returns `None` unless the shape is non-empty,
    /// `cells.len() == rows * cols`, and every cell lies in [0, 1].
    pub fn from_cells(rows: usize, cols: usize, cells: Vec<f64>) -> Option<Self> {
        let ok = rows > 0
            && cols > 0
            && cells.len() == rows * cols
            && cells.iter().all(|c| (0.0..=1.0).contains(c));
        ok.then_some(Self { rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut cells = Vec::with_capacity(self.cells.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                cells.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            cells,
        }
    }

    /// Maximum of each column, in column order.
    pub fn column_maxima(&self) -> Vec<f64> {
        let mut maxima = self.row(0).to_vec();
        for r in 1..self.rows {
            for (m, v) in maxima.iter_mut().zip(self.row(r)) {
                if *v > *m {
                    *m = *v;
                }
            }
        }
        maxima
    }

    /// Maximum of each row, in row order.
    pub fn row_maxima(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Index of the largest cell in `row`; the lowest index wins ties.
    pub fn row_argmax(&self, row: usize) -> usize {
        let mut best = 0;
        for (m, v) in self.row(row).iter().enumerate() {
            if *v > self.get(row, best) {
                best = m;
            }
        }
        best
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean over columns of each column's best match ("correctness").
pub fn set_precision(s: &SimMatrix) -> f64 {
    mean(&s.column_maxima())
}

/// Mean over rows of each row's best match ("completeness").
pub fn set_recall(s: &SimMatrix) -> f64 {
    mean(&s.row_maxima())
}

/// Harmonic mean `k / Σ 1/x`, with any non-positive term forcing 0.
///
/// The result is kept inside `[min(xs), max(xs)]` so float rounding cannot
/// push it outside the mathematically guaranteed range, and equal terms
/// return that term exactly.
pub fn harmonic_mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "harmonic mean of an empty sequence");
    if xs.iter().any(|&x| x <= 0.0) {
        return 0.0;
    }
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return first;
    }
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let reciprocal_sum: f64 = xs.iter().map(|x| 1.0 / x).sum();
    (xs.len() as f64 / reciprocal_sum).clamp(lo, hi)
}
