//! Training-by-sampling conditional vectors.
//!
//! Each draw picks one categorical column uniformly, then a category from
//! that column's log-frequency distribution (softmax over log counts), and a
//! real row carrying that category, uniformly.

use crate::data::{ColumnData, Dataset, EncodedLayout};
use crate::error::{Error, Result};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-column conditional frequencies; enough to sample conditional vectors
/// at synthesis time (no row indices).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CondFrequencies {
    pub cols: Vec<CondFreqColumn>,
    pub cond_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CondFreqColumn {
    /// Index of the column in the dataset schema.
    pub col_idx: usize,
    /// Offset of this column's block within the conditional vector.
    pub cond_offset: usize,
    /// Category sampling distribution: softmax of log counts (categories
    /// with zero count get probability zero).
    pub probs: Vec<f64>,
}

/// One sampled condition: which sampler column and which category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChosenCond {
    /// Index into `CondFrequencies::cols`.
    pub col: usize,
    pub category: usize,
}

impl CondFrequencies {
    pub fn is_unconditional(&self) -> bool {
        self.cols.is_empty()
    }

    /// Samples `batch` conditional vectors. Returns an empty-width matrix
    /// when the dataset has no categorical columns.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> (Array2<f64>, Vec<ChosenCond>) {
        let mut cond = Array2::zeros((batch, self.cond_dim));
        if self.cols.is_empty() {
            return (cond, Vec::new());
        }
        let mut chosen = Vec::with_capacity(batch);
        for i in 0..batch {
            let col = rng.gen_range(0..self.cols.len());
            let c = &self.cols[col];
            let category = sample_index(&c.probs, rng);
            cond[(i, c.cond_offset + category)] = 1.0;
            chosen.push(ChosenCond { col, category });
        }
        (cond, chosen)
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_nonzero
}

/// Conditional sampler over a fitted dataset: frequencies plus, per
/// (column, category), the indices of real rows carrying that category.
#[derive(Debug, Clone)]
pub struct CondSampler {
    pub freqs: CondFrequencies,
    row_index: Vec<Vec<Vec<u32>>>,
    n_rows: usize,
}

/// A sampled training condition batch.
pub struct CondBatch {
    /// batch x cond_dim (cond_dim may be zero).
    pub cond: Array2<f64>,
    /// Chosen (sampler column, category) per batch item; empty when
    /// unconditional.
    pub chosen: Vec<ChosenCond>,
    /// Matched real rows, one per batch item.
    pub rows: Vec<u32>,
}

impl CondSampler {
    pub fn fit(dataset: &Dataset, layout: &EncodedLayout) -> Result<CondSampler> {
        let mut cols = Vec::new();
        let mut row_index = Vec::new();
        let mut cond_offset = 0;
        for (col_idx, _start, len) in layout.categorical_blocks() {
            let codes = match &dataset.columns[col_idx] {
                ColumnData::Categorical(codes) => codes,
                _ => return Err(Error::Schema("layout/categorical column mismatch".into())),
            };
            let mut counts = vec![0usize; len];
            let mut rows: Vec<Vec<u32>> = vec![Vec::new(); len];
            for (i, &code) in codes.iter().enumerate() {
                counts[code as usize] += 1;
                rows[code as usize].push(i as u32);
            }
            // softmax over log counts = counts / total; zero-count categories
            // stay at zero probability
            let total: f64 = counts.iter().map(|&c| c as f64).sum();
            let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
            cols.push(CondFreqColumn {
                col_idx,
                cond_offset,
                probs,
            });
            row_index.push(rows);
            cond_offset += len;
        }
        Ok(CondSampler {
            freqs: CondFrequencies {
                cols,
                cond_dim: cond_offset,
            },
            row_index,
            n_rows: dataset.n_rows,
        })
    }

    pub fn cond_dim(&self) -> usize {
        self.freqs.cond_dim
    }

    /// Samples a condition batch with matched real rows. With no categorical
    /// columns, conditions are empty and rows are drawn uniformly.
    pub fn sample_condition<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> CondBatch {
        let (cond, chosen) = self.freqs.sample(batch, rng);
        let rows = if chosen.is_empty() {
            (0..batch)
                .map(|_| rng.gen_range(0..self.n_rows) as u32)
                .collect()
        } else {
            chosen
                .iter()
                .map(|c| {
                    let pool = &self.row_index[c.col][c.category];
                    debug_assert!(!pool.is_empty(), "sampled category with no rows");
                    pool[rng.gen_range(0..pool.len())]
                })
                .collect()
        };
        CondBatch { cond, chosen, rows }
    }
}
