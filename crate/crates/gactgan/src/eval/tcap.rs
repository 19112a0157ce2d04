//! Correct-attribution risk. Within the synthetic table, a record's
//! attribution probability is the share of synthetic records with its key
//! values that also share its target value; records attributing with
//! probability one form the attack set. The attack is then scored against
//! the original table and rescaled against the modal-target baseline,
//! truncated at zero.

use super::{EvalColumn, EvalTable};
use crate::error::{Error, Result};
use std::collections::HashMap;

const KEY_SEP: char = '\u{1f}';

fn labels_of<'t>(table: &'t EvalTable, name: &str) -> Result<&'t [String]> {
    match table.column(name)? {
        EvalColumn::Cat(labels) => Ok(labels),
        EvalColumn::Num(_) => Err(Error::Schema(format!(
            "column '{name}' must be categorical for attribution risk"
        ))),
    }
}

fn key_strings(table: &EvalTable, keys: &[String]) -> Result<Vec<String>> {
    let mut out = vec![String::new(); table.n_rows];
    for name in keys {
        let labels = labels_of(table, name)?;
        for (k, l) in out.iter_mut().zip(labels) {
            k.push(KEY_SEP);
            k.push_str(l);
        }
    }
    Ok(out)
}

/// `R = max(0, (TCAP - WEAP_baseline) / (1 - WEAP_baseline))`, clamped to
/// [0, 1]. The baseline is the relative frequency of the modal target value
/// in the synthetic table. An empty attack set scores zero.
pub fn tcap_risk(
    original: &EvalTable,
    synthetic: &EvalTable,
    keys: &[String],
    target: &str,
) -> Result<f64> {
    if keys.is_empty() {
        return Err(Error::Usage("attribution risk needs at least one key column".into()));
    }
    let syn_keys = key_strings(synthetic, keys)?;
    let syn_target = labels_of(synthetic, target)?;
    let orig_keys = key_strings(original, keys)?;
    let orig_target = labels_of(original, target)?;

    // within-synthetic counts per key and per (key, target)
    let mut syn_key_counts: HashMap<&str, u64> = HashMap::new();
    let mut syn_pair_counts: HashMap<(&str, &str), u64> = HashMap::new();
    for (k, t) in syn_keys.iter().zip(syn_target) {
        *syn_key_counts.entry(k).or_default() += 1;
        *syn_pair_counts.entry((k, t)).or_default() += 1;
    }

    // original counts per key and per (key, target)
    let mut orig_key_counts: HashMap<&str, u64> = HashMap::new();
    let mut orig_pair_counts: HashMap<(&str, &str), u64> = HashMap::new();
    for (k, t) in orig_keys.iter().zip(orig_target) {
        *orig_key_counts.entry(k).or_default() += 1;
        *orig_pair_counts.entry((k, t)).or_default() += 1;
    }

    // attack set: synthetic records with within-synthetic attribution 1
    let mut attack = 0u64;
    let mut tcap_sum = 0.0;
    for (k, t) in syn_keys.iter().zip(syn_target) {
        let key_n = syn_key_counts[k.as_str()];
        let pair_n = syn_pair_counts[&(k.as_str(), t.as_str())];
        if pair_n != key_n {
            continue;
        }
        attack += 1;
        if let Some(&orig_n) = orig_key_counts.get(k.as_str()) {
            let orig_match = orig_pair_counts
                .get(&(k.as_str(), t.as_str()))
                .copied()
                .unwrap_or(0);
            tcap_sum += orig_match as f64 / orig_n as f64;
        }
        // keys absent from the original contribute zero
    }
    let tcap = if attack == 0 { 0.0 } else { tcap_sum / attack as f64 };

    // dataset-level baseline: modal target share in the synthetic table
    let mut target_counts: HashMap<&str, u64> = HashMap::new();
    for t in syn_target {
        *target_counts.entry(t).or_default() += 1;
    }
    let modal = target_counts.values().max().copied().unwrap_or(0) as f64;
    let baseline = modal / synthetic.n_rows as f64;
    if baseline >= 1.0 {
        return Ok(0.0);
    }
    Ok(((tcap - baseline) / (1.0 - baseline)).clamp(0.0, 1.0))
}
