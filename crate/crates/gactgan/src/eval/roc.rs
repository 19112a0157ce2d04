//! Ratio of counts over a tabulation: for every cell observed in either
//! table, min(count_a, count_b) / max(count_a, count_b), averaged. A cell
//! absent from one side contributes zero. Continuous columns are reduced to
//! ten equal-frequency bins whose cut points come from the first table.

use super::{EvalColumn, EvalTable};
use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap};

const BIN_COUNT: usize = 10;
const KEY_SEP: char = '\u{1f}';

/// Cut points at the 1/10 .. 9/10 quantiles of `values`.
fn bin_cuts(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (1..BIN_COUNT)
        .map(|i| sorted[(i * sorted.len() / BIN_COUNT).min(sorted.len() - 1)])
        .collect()
}

fn bin_of(cuts: &[f64], x: f64) -> usize {
    cuts.iter().filter(|&&c| x >= c).count()
}

fn cell_keys(
    table: &EvalTable,
    columns: &[String],
    cuts: &HashMap<String, Vec<f64>>,
) -> Result<Vec<String>> {
    let mut keys = vec![String::new(); table.n_rows];
    for name in columns {
        match table.column(name)? {
            EvalColumn::Cat(labels) => {
                for (k, l) in keys.iter_mut().zip(labels) {
                    k.push(KEY_SEP);
                    k.push_str(l);
                }
            }
            EvalColumn::Num(vals) => {
                let cut = &cuts[name];
                for (k, &v) in keys.iter_mut().zip(vals) {
                    k.push(KEY_SEP);
                    k.push_str(&bin_of(cut, v).to_string());
                }
            }
        }
    }
    Ok(keys)
}

/// Mean count ratio between the two tables over the union of observed cells
/// of the tabulation given by `columns`.
pub fn roc(original: &EvalTable, synthetic: &EvalTable, columns: &[String]) -> Result<f64> {
    if columns.is_empty() {
        return Err(Error::Usage("roc requires a non-empty column subset".into()));
    }
    // equal-frequency bin cuts computed on the original table
    let mut cuts = HashMap::new();
    for name in columns {
        if let EvalColumn::Num(vals) = original.column(name)? {
            if vals.is_empty() {
                return Err(Error::Data(format!("empty continuous column '{name}'")));
            }
            cuts.insert(name.clone(), bin_cuts(vals));
        }
        // validate the synthetic table has the column too
        synthetic.column(name)?;
    }

    // BTreeMap keeps the accumulation order deterministic across runs
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for key in cell_keys(original, columns, &cuts)? {
        counts.entry(key).or_default().0 += 1;
    }
    for key in cell_keys(synthetic, columns, &cuts)? {
        counts.entry(key).or_default().1 += 1;
    }
    if counts.is_empty() {
        return Err(Error::Data("no cells to compare".into()));
    }
    let mut total = 0.0;
    for &(a, b) in counts.values() {
        let lo = a.min(b) as f64;
        let hi = a.max(b) as f64;
        if hi > 0.0 {
            total += lo / hi;
        }
    }
    Ok(total / counts.len() as f64)
}
