//! Utility and disclosure-risk evaluation: ratio of counts over
//! tabulations, confidence-interval overlap of logistic coefficients,
//! correct-attribution risk, the selection score, and Pareto dominance.

mod cio;
mod pareto;
mod roc;
mod tcap;

pub use cio::{cio, interval_overlap};
pub use pareto::pareto_front;
pub use roc::roc;
pub use tcap::tcap_risk;

use crate::data::{ColumnKind, ColumnSchema, RawTable};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Column-major evaluation view of a table. Continuous columns are numeric,
/// categorical columns keep their labels (which need not match any schema).
#[derive(Debug, Clone)]
pub struct EvalTable {
    pub headers: Vec<String>,
    pub columns: Vec<EvalColumn>,
    pub n_rows: usize,
}

#[derive(Debug, Clone)]
pub enum EvalColumn {
    Num(Vec<f64>),
    Cat(Vec<String>),
}

impl EvalTable {
    /// Types a raw table using the kinds from `schema` (categories in the
    /// schema are ignored here; any label is allowed).
    pub fn from_raw(raw: &RawTable, schema: &[ColumnSchema]) -> Result<EvalTable> {
        if raw.headers.len() != schema.len() {
            return Err(Error::Schema(format!(
                "table has {} columns, schema {}",
                raw.headers.len(),
                schema.len()
            )));
        }
        let mut columns = Vec::with_capacity(schema.len());
        for (j, col) in schema.iter().enumerate() {
            match col.kind {
                ColumnKind::Continuous => {
                    let mut vals = Vec::with_capacity(raw.rows.len());
                    for (i, row) in raw.rows.iter().enumerate() {
                        let v: f64 = row[j].trim().parse().map_err(|_| {
                            Error::Data(format!(
                                "non-numeric '{}' at row {} of continuous column '{}'",
                                row[j],
                                i + 2,
                                col.name
                            ))
                        })?;
                        vals.push(v);
                    }
                    columns.push(EvalColumn::Num(vals));
                }
                ColumnKind::Categorical => {
                    columns.push(EvalColumn::Cat(
                        raw.rows.iter().map(|r| r[j].clone()).collect(),
                    ));
                }
            }
        }
        Ok(EvalTable {
            headers: raw.headers.clone(),
            columns,
            n_rows: raw.rows.len(),
        })
    }

    pub fn column(&self, name: &str) -> Result<&EvalColumn> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|j| &self.columns[j])
            .ok_or_else(|| Error::Schema(format!("unknown column '{name}'")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CioTarget {
    pub outcome: String,
    pub predictors: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcapSpec {
    pub keys: Vec<String>,
    pub target: String,
}

/// What to measure: tabulation subsets for the count-ratio utility, an
/// optional logistic-regression target for interval overlap, and the
/// key/target split for attribution risk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub roc_targets: Vec<Vec<String>>,
    #[serde(default)]
    pub cio: Option<CioTarget>,
    pub tcap: TcapSpec,
    /// Kind overrides applied when typing evaluation tables.
    #[serde(default)]
    pub schema_overrides: BTreeMap<String, ColumnKind>,
}

impl UtilitySpec {
    pub fn validate_against(&self, table: &EvalTable) -> Result<()> {
        let known = |name: &String| -> Result<()> {
            if table.headers.iter().any(|h| h == name) {
                Ok(())
            } else {
                Err(Error::Schema(format!("spec references unknown column '{name}'")))
            }
        };
        if self.roc_targets.is_empty() {
            return Err(Error::Usage("spec has no roc targets".into()));
        }
        for subset in &self.roc_targets {
            if subset.is_empty() {
                return Err(Error::Usage("empty roc column subset".into()));
            }
            for c in subset {
                known(c)?;
            }
        }
        if let Some(cio) = &self.cio {
            known(&cio.outcome)?;
            for p in &cio.predictors {
                known(p)?;
            }
        }
        for k in &self.tcap.keys {
            known(k)?;
        }
        known(&self.tcap.target)
    }
}

/// Mean of the available utility components.
pub fn aggregate_utility(roc_mean: f64, cio_mean: Option<f64>) -> f64 {
    match cio_mean {
        Some(c) => 0.5 * (roc_mean + c),
        None => roc_mean,
    }
}

/// `phi * U + (1 - phi) * (1 - R)`; every argument must lie in [0, 1].
pub fn selection_score(utility: f64, risk: f64, phi: f64) -> Result<f64> {
    for (name, v) in [("utility", utility), ("risk", risk), ("phi", phi)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Usage(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok(phi * utility + (1.0 - phi) * (1.0 - risk))
}

/// Metrics of one synthetic replicate against the original.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub roc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cio: Option<f64>,
    pub utility: f64,
    pub risk: f64,
    pub selection_score: f64,
}

/// Replicate-averaged evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub roc_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cio_mean: Option<f64>,
    pub utility: f64,
    pub risk: f64,
    pub selection_score: f64,
    pub per_seed: Vec<SeedMetrics>,
}

/// Evaluates one synthetic table against the original.
pub fn evaluate_pair(
    original: &EvalTable,
    synthetic: &EvalTable,
    spec: &UtilitySpec,
    phi: f64,
) -> Result<SeedMetrics> {
    spec.validate_against(original)?;
    let mut roc_sum = 0.0;
    for subset in &spec.roc_targets {
        roc_sum += roc(original, synthetic, subset)?;
    }
    let roc_mean = roc_sum / spec.roc_targets.len() as f64;
    let cio_val = match &spec.cio {
        Some(target) => Some(cio(original, synthetic, &target.outcome, &target.predictors)?),
        None => None,
    };
    let risk = tcap_risk(original, synthetic, &spec.tcap.keys, &spec.tcap.target)?;
    let utility = aggregate_utility(roc_mean, cio_val);
    let ss = selection_score(utility, risk, phi)?;
    Ok(SeedMetrics {
        roc: roc_mean,
        cio: cio_val,
        utility,
        risk,
        selection_score: ss,
    })
}

/// Evaluates several replicates and averages the metrics.
pub fn evaluate_replicates(
    original: &EvalTable,
    replicates: &[EvalTable],
    spec: &UtilitySpec,
    phi: f64,
) -> Result<EvalReport> {
    if replicates.is_empty() {
        return Err(Error::Usage("no synthetic replicates to evaluate".into()));
    }
    let per_seed: Vec<SeedMetrics> = replicates
        .iter()
        .map(|syn| evaluate_pair(original, syn, spec, phi))
        .collect::<Result<_>>()?;
    let n = per_seed.len() as f64;
    let roc_mean = per_seed.iter().map(|m| m.roc).sum::<f64>() / n;
    let cio_mean = if per_seed.iter().all(|m| m.cio.is_some()) {
        Some(per_seed.iter().map(|m| m.cio.unwrap()).sum::<f64>() / n)
    } else {
        None
    };
    let risk = per_seed.iter().map(|m| m.risk).sum::<f64>() / n;
    let utility = per_seed.iter().map(|m| m.utility).sum::<f64>() / n;
    let ss = selection_score(utility, risk, phi)?;
    Ok(EvalReport {
        roc_mean,
        cio_mean,
        utility,
        risk,
        selection_score: ss,
        per_seed,
    })
}
