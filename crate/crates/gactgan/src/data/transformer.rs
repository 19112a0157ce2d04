//! Reversible mixed-type row transform: continuous cells become a normalized
//! scalar plus a mode one-hot (mode-specific normalization), categorical
//! cells become one-hots. Blocks are laid out per column so activation
//! functions and conditional vectors can address contiguous spans.

use super::gmm::{fit_gmm_1d, GmmFit};
use super::{ColumnData, ColumnKind, ColumnSchema, Dataset, RawTable};
use crate::error::{Error, Result};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fitted per-mode statistics for one continuous column. All vectors cover
/// every fitted component; `valid_mode_mask` marks the ones that survived
/// weight pruning and participate in the encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuousTransform {
    pub mode_means: Vec<f64>,
    pub mode_stds: Vec<f64>,
    pub mode_weights: Vec<f64>,
    pub valid_mode_mask: Vec<bool>,
}

impl ContinuousTransform {
    fn from_fit(fit: GmmFit, prune_threshold: f64) -> Self {
        let valid_mode_mask: Vec<bool> = fit.weights.iter().map(|&w| w > prune_threshold).collect();
        debug_assert!(valid_mode_mask.iter().any(|&v| v));
        ContinuousTransform {
            mode_means: fit.means,
            mode_stds: fit.stds,
            mode_weights: fit.weights,
            valid_mode_mask,
        }
    }

    pub fn valid_modes(&self) -> Vec<usize> {
        (0..self.mode_means.len())
            .filter(|&j| self.valid_mode_mask[j])
            .collect()
    }

    /// Posterior probability of each valid mode given a cell value,
    /// in valid-mode order.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        let valid = self.valid_modes();
        let mut logp: Vec<f64> = valid
            .iter()
            .map(|&j| {
                let mu = self.mode_means[j];
                let sd = self.mode_stds[j];
                let z = (x - mu) / sd;
                self.mode_weights[j].ln() - sd.ln() - 0.5 * z * z
            })
            .collect();
        let m = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            // Far tail underflow: assign everything to the nearest mode.
            let nearest = valid
                .iter()
                .enumerate()
                .min_by(|(_, &a), (_, &b)| {
                    let da = ((x - self.mode_means[a]) / self.mode_stds[a]).abs();
                    let db = ((x - self.mode_means[b]) / self.mode_stds[b]).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap();
            let mut out = vec![0.0; valid.len()];
            out[nearest] = 1.0;
            return out;
        }
        let mut total = 0.0;
        for p in &mut logp {
            *p = (*p - m).exp();
            total += *p;
        }
        logp.iter().map(|p| p / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpanKind {
    /// Single normalized scalar slot, tanh range.
    Scalar,
    /// One-hot block (mode indicator or category).
    OneHot,
}

/// Contiguous slice of the encoded vector with its activation kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub len: usize,
    pub kind: SpanKind,
}

/// Block descriptor for one source column inside the encoded vector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum ColumnBlock {
    Continuous {
        scalar: usize,
        mode_start: usize,
        mode_len: usize,
    },
    Categorical {
        start: usize,
        len: usize,
    },
}

/// Index map over the encoded vector: per-column blocks, activation spans,
/// and total width.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodedLayout {
    pub blocks: Vec<ColumnBlock>,
    pub width: usize,
}

impl EncodedLayout {
    /// Activation spans in encoded order.
    pub fn spans(&self) -> Vec<Span> {
        let mut spans = Vec::new();
        for block in &self.blocks {
            match *block {
                ColumnBlock::Continuous {
                    scalar,
                    mode_start,
                    mode_len,
                } => {
                    spans.push(Span {
                        start: scalar,
                        len: 1,
                        kind: SpanKind::Scalar,
                    });
                    spans.push(Span {
                        start: mode_start,
                        len: mode_len,
                        kind: SpanKind::OneHot,
                    });
                }
                ColumnBlock::Categorical { start, len } => spans.push(Span {
                    start,
                    len,
                    kind: SpanKind::OneHot,
                }),
            }
        }
        spans
    }

    /// (column index, encoded start, len) of each categorical block, in
    /// column order. The conditional vector is the concatenation of these
    /// blocks.
    pub fn categorical_blocks(&self) -> Vec<(usize, usize, usize)> {
        self.blocks
            .iter()
            .enumerate()
            .filter_map(|(col, b)| match *b {
                ColumnBlock::Categorical { start, len } => Some((col, start, len)),
                _ => None,
            })
            .collect()
    }

    pub fn cond_width(&self) -> usize {
        self.categorical_blocks().iter().map(|&(_, _, l)| l).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ColumnTransform {
    Continuous(ContinuousTransform),
    Categorical { categories: Vec<String> },
}

/// Fitted reversible transform for a dataset. Immutable after `fit`;
/// encoding draws mode assignments from a caller-supplied rng, decoding is
/// deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataTransformer {
    pub schema: Vec<ColumnSchema>,
    pub columns: Vec<ColumnTransform>,
    pub layout: EncodedLayout,
}

pub const DEFAULT_MAX_MODES: usize = 10;
pub const MODE_PRUNE_THRESHOLD: f64 = 0.005;
const EM_MAX_ITER: usize = 100;
const EM_REL_TOL: f64 = 1e-4;

impl DataTransformer {
    /// Fits per-column transforms. Continuous columns get a Gaussian mixture
    /// of at most `schema.modes` (defaulting to `max_modes`) components with
    /// low-weight modes pruned; categorical columns get a category index map.
    pub fn fit(dataset: &Dataset, max_modes: usize) -> Result<DataTransformer> {
        if dataset.n_rows == 0 {
            return Err(Error::Data("cannot fit transformer on empty dataset".into()));
        }
        let mut columns = Vec::with_capacity(dataset.schema.len());
        let mut schema = dataset.schema.clone();
        for (col, data) in schema.iter_mut().zip(&dataset.columns) {
            match (col.kind, data) {
                (ColumnKind::Continuous, ColumnData::Continuous(vals)) => {
                    if vals.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Data(format!(
                            "non-finite value in continuous column '{}'",
                            col.name
                        )));
                    }
                    let requested = col.modes.unwrap_or(max_modes).max(1);
                    let fit = fit_gmm_1d(vals, requested, EM_MAX_ITER, EM_REL_TOL);
                    let ct = ContinuousTransform::from_fit(fit, MODE_PRUNE_THRESHOLD);
                    col.modes = Some(ct.valid_modes().len());
                    columns.push(ColumnTransform::Continuous(ct));
                }
                (ColumnKind::Categorical, ColumnData::Categorical(_)) => {
                    columns.push(ColumnTransform::Categorical {
                        categories: col.categories.clone().unwrap(),
                    });
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "column '{}': data does not match schema kind",
                        col.name
                    )))
                }
            }
        }

        let mut blocks = Vec::with_capacity(columns.len());
        let mut cursor = 0;
        for ct in &columns {
            match ct {
                ColumnTransform::Continuous(c) => {
                    let mode_len = c.valid_modes().len();
                    blocks.push(ColumnBlock::Continuous {
                        scalar: cursor,
                        mode_start: cursor + 1,
                        mode_len,
                    });
                    cursor += 1 + mode_len;
                }
                ColumnTransform::Categorical { categories } => {
                    blocks.push(ColumnBlock::Categorical {
                        start: cursor,
                        len: categories.len(),
                    });
                    cursor += categories.len();
                }
            }
        }
        Ok(DataTransformer {
            schema,
            columns,
            layout: EncodedLayout {
                blocks,
                width: cursor,
            },
        })
    }

    pub fn width(&self) -> usize {
        self.layout.width
    }

    fn encode_continuous<R: Rng + ?Sized>(
        &self,
        ct: &ContinuousTransform,
        block: &ColumnBlock,
        x: f64,
        out: &mut [f64],
        rng: &mut R,
    ) {
        let (scalar, mode_start, _mode_len) = match *block {
            ColumnBlock::Continuous {
                scalar,
                mode_start,
                mode_len,
            } => (scalar, mode_start, mode_len),
            _ => unreachable!(),
        };
        let probs = ct.responsibilities(x);
        let u: f64 = rng.gen();
        let mut pick = probs.len() - 1;
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let mode = ct.valid_modes()[pick];
        let alpha = ((x - ct.mode_means[mode]) / (4.0 * ct.mode_stds[mode])).clamp(-1.0, 1.0);
        out[scalar] = alpha;
        out[mode_start + pick] = 1.0;
    }

    /// Encodes one raw row (string cells in schema order). Categorical cells
    /// must be known labels; continuous cells must parse as finite numbers.
    pub fn encode_raw_row<R: Rng + ?Sized>(&self, cells: &[&str], rng: &mut R) -> Result<Vec<f64>> {
        if cells.len() != self.columns.len() {
            return Err(Error::Data(format!(
                "row has {} cells, schema has {} columns",
                cells.len(),
                self.columns.len()
            )));
        }
        let mut out = vec![0.0; self.layout.width];
        for (j, ct) in self.columns.iter().enumerate() {
            match ct {
                ColumnTransform::Continuous(c) => {
                    let x: f64 = cells[j].trim().parse().map_err(|_| {
                        Error::Data(format!(
                            "non-numeric value '{}' in continuous column '{}'",
                            cells[j], self.schema[j].name
                        ))
                    })?;
                    if !x.is_finite() {
                        return Err(Error::Data(format!(
                            "non-finite value in continuous column '{}'",
                            self.schema[j].name
                        )));
                    }
                    self.encode_continuous(c, &self.layout.blocks[j], x, &mut out, rng);
                }
                ColumnTransform::Categorical { categories } => {
                    let (start, _len) = match self.layout.blocks[j] {
                        ColumnBlock::Categorical { start, len } => (start, len),
                        _ => unreachable!(),
                    };
                    let code = categories.iter().position(|c| c == cells[j]).ok_or_else(|| {
                        Error::Data(format!(
                            "unknown category '{}' in column '{}'",
                            cells[j], self.schema[j].name
                        ))
                    })?;
                    out[start + code] = 1.0;
                }
            }
        }
        Ok(out)
    }

    /// Encodes a whole dataset into an `n_rows x width` matrix. Mode
    /// assignments are sampled once per cell from `rng`.
    pub fn encode_dataset<R: Rng + ?Sized>(
        &self,
        dataset: &Dataset,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        if dataset.schema.len() != self.schema.len() {
            return Err(Error::Schema("dataset does not match transformer schema".into()));
        }
        let n = dataset.n_rows;
        let mut out = Array2::<f64>::zeros((n, self.layout.width));
        for i in 0..n {
            let mut row = out.row_mut(i);
            let row_slice = row.as_slice_mut().unwrap();
            for (j, ct) in self.columns.iter().enumerate() {
                match (ct, &dataset.columns[j]) {
                    (ColumnTransform::Continuous(c), ColumnData::Continuous(vals)) => {
                        self.encode_continuous(c, &self.layout.blocks[j], vals[i], row_slice, rng);
                    }
                    (ColumnTransform::Categorical { categories }, ColumnData::Categorical(codes)) => {
                        let (start, len) = match self.layout.blocks[j] {
                            ColumnBlock::Categorical { start, len } => (start, len),
                            _ => unreachable!(),
                        };
                        let code = codes[i] as usize;
                        if code >= len || code >= categories.len() {
                            return Err(Error::Data(format!(
                                "category code {} out of range in column '{}'",
                                code, self.schema[j].name
                            )));
                        }
                        row_slice[start + code] = 1.0;
                    }
                    _ => unreachable!("schema validated at fit time"),
                }
            }
        }
        Ok(out)
    }

    /// Decodes one encoded vector back to string cells in schema order.
    pub fn decode_row(&self, vec: &[f64]) -> Result<Vec<String>> {
        if vec.len() != self.layout.width {
            return Err(Error::Data(format!(
                "decode width mismatch: expected {}, got {}",
                self.layout.width,
                vec.len()
            )));
        }
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("decode of non-finite vector".into()));
        }
        let mut cells = Vec::with_capacity(self.columns.len());
        for (j, ct) in self.columns.iter().enumerate() {
            match (ct, &self.layout.blocks[j]) {
                (
                    ColumnTransform::Continuous(c),
                    &ColumnBlock::Continuous {
                        scalar,
                        mode_start,
                        mode_len,
                    },
                ) => {
                    let pick = argmax(&vec[mode_start..mode_start + mode_len]);
                    let mode = c.valid_modes()[pick];
                    let alpha = vec[scalar].clamp(-1.0, 1.0);
                    let x = alpha * 4.0 * c.mode_stds[mode] + c.mode_means[mode];
                    cells.push(format!("{x}"));
                }
                (ColumnTransform::Categorical { categories }, &ColumnBlock::Categorical { start, len }) => {
                    let pick = argmax(&vec[start..start + len]);
                    cells.push(categories[pick].clone());
                }
                _ => unreachable!(),
            }
        }
        Ok(cells)
    }

    /// Decodes a batch of encoded rows into a raw table with the schema's
    /// column headers.
    pub fn decode_matrix(&self, encoded: &Array2<f64>) -> Result<RawTable> {
        let headers = self.schema.iter().map(|c| c.name.clone()).collect();
        let mut rows = Vec::with_capacity(encoded.nrows());
        for (i, row) in encoded.rows().into_iter().enumerate() {
            let cells = self
                .decode_row(row.as_slice().expect("contiguous row"))
                .map_err(|e| Error::Data(format!("decode failure at row {i}: {e}")))?;
            rows.push(cells);
        }
        Ok(RawTable { headers, rows })
    }
}

fn argmax(slice: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in slice.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}
