//! Dataset ingestion: CSV reading/writing, column schemas, and the typed
//! column-major table used by training and evaluation.

mod gmm;
mod transformer;

pub use gmm::{fit_gmm_1d, GmmFit};
pub use transformer::{
    ColumnBlock, ColumnTransform, ContinuousTransform, DataTransformer, EncodedLayout, Span,
    SpanKind, DEFAULT_MAX_MODES,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

/// Per-column schema. `categories` is populated for categorical columns
/// (ordered by first occurrence); `modes` is the maximum Gaussian mode count
/// requested for a continuous column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
}

impl ColumnSchema {
    pub fn continuous(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Continuous,
            categories: None,
            modes: None,
        }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: Some(categories),
            modes: None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            ColumnKind::Categorical => {
                let cats = self.categories.as_ref().ok_or_else(|| {
                    Error::Schema(format!("column '{}': categorical without categories", self.name))
                })?;
                if cats.is_empty() {
                    return Err(Error::Schema(format!(
                        "column '{}': empty category list",
                        self.name
                    )));
                }
                let mut seen = std::collections::HashSet::new();
                for c in cats {
                    if !seen.insert(c) {
                        return Err(Error::Schema(format!(
                            "column '{}': duplicate category '{}'",
                            self.name, c
                        )));
                    }
                }
            }
            ColumnKind::Continuous => {
                if let Some(m) = self.modes {
                    if m == 0 {
                        return Err(Error::Schema(format!(
                            "column '{}': modes must be >= 1",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let mut names = std::collections::HashSet::new();
    for col in schema {
        col.validate()?;
        if !names.insert(col.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column name '{}'", col.name)));
        }
    }
    Ok(())
}

/// A CSV table as read from disk: header row plus string cells.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn read_csv(path: &Path) -> Result<RawTable> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_path(path)
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .iter()
            .map(|s| s.to_string())
            .collect();
        if headers.is_empty() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: "empty file".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| {
                let msg = match e.kind() {
                    csv::ErrorKind::UnequalLengths { expected_len, len, .. } => format!(
                        "ragged row {}: expected {} fields, found {}",
                        i + 2,
                        expected_len,
                        len
                    ),
                    _ => e.to_string(),
                };
                Error::Csv {
                    path: path.to_path_buf(),
                    message: msg,
                }
            })?;
            rows.push(record.iter().map(|s| s.to_string()).collect());
        }
        if rows.is_empty() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: "no data rows".into(),
            });
        }
        Ok(RawTable { headers, rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        writer
            .write_record(&self.headers)
            .and_then(|_| {
                for row in &self.rows {
                    writer.write_record(row)?;
                }
                writer.flush().map_err(csv::Error::from)
            })
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }
}

/// Typed column storage. Categorical cells are codes into the schema's
/// category list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ColumnData {
    Continuous(Vec<f64>),
    Categorical(Vec<u32>),
}

/// Column-major typed dataset tied to a schema.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Vec<ColumnSchema>,
    pub columns: Vec<ColumnData>,
    pub n_rows: usize,
}

impl Dataset {
    /// Types a raw table against `schema`. Cells must conform: continuous
    /// cells parse to finite numbers, categorical cells are known labels,
    /// and no cell is empty (missing data is rejected).
    pub fn from_raw(raw: &RawTable, schema: &[ColumnSchema]) -> Result<Dataset> {
        validate_schema(schema)?;
        if raw.headers.len() != schema.len() {
            return Err(Error::Schema(format!(
                "schema has {} columns but table has {}",
                schema.len(),
                raw.headers.len()
            )));
        }
        for (h, col) in raw.headers.iter().zip(schema) {
            if h != &col.name {
                return Err(Error::Schema(format!(
                    "column name mismatch: table '{}' vs schema '{}'",
                    h, col.name
                )));
            }
        }
        if raw.rows.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }

        let mut columns = Vec::with_capacity(schema.len());
        for (j, col) in schema.iter().enumerate() {
            match col.kind {
                ColumnKind::Continuous => {
                    let mut vals = Vec::with_capacity(raw.rows.len());
                    for (i, row) in raw.rows.iter().enumerate() {
                        let cell = row[j].trim();
                        if cell.is_empty() {
                            return Err(Error::Data(format!(
                                "empty cell at row {}, column '{}'",
                                i + 2,
                                col.name
                            )));
                        }
                        let v: f64 = cell.parse().map_err(|_| {
                            Error::Data(format!(
                                "non-numeric value '{}' at row {}, continuous column '{}'",
                                cell,
                                i + 2,
                                col.name
                            ))
                        })?;
                        if !v.is_finite() {
                            return Err(Error::Data(format!(
                                "non-finite value at row {}, column '{}'",
                                i + 2,
                                col.name
                            )));
                        }
                        vals.push(v);
                    }
                    columns.push(ColumnData::Continuous(vals));
                }
                ColumnKind::Categorical => {
                    let cats = col.categories.as_ref().unwrap();
                    let index: HashMap<&str, u32> = cats
                        .iter()
                        .enumerate()
                        .map(|(k, c)| (c.as_str(), k as u32))
                        .collect();
                    let mut codes = Vec::with_capacity(raw.rows.len());
                    for (i, row) in raw.rows.iter().enumerate() {
                        let cell = row[j].as_str();
                        if cell.trim().is_empty() {
                            return Err(Error::Data(format!(
                                "empty cell at row {}, column '{}'",
                                i + 2,
                                col.name
                            )));
                        }
                        let code = index.get(cell).ok_or_else(|| {
                            Error::Data(format!(
                                "unknown category '{}' at row {}, column '{}'",
                                cell,
                                i + 2,
                                col.name
                            ))
                        })?;
                        codes.push(*code);
                    }
                    columns.push(ColumnData::Categorical(codes));
                }
            }
        }
        Ok(Dataset {
            schema: schema.to_vec(),
            columns,
            n_rows: raw.rows.len(),
        })
    }

    pub fn to_raw(&self) -> RawTable {
        let headers = self.schema.iter().map(|c| c.name.clone()).collect();
        let mut rows = vec![Vec::with_capacity(self.schema.len()); self.n_rows];
        for (col, data) in self.schema.iter().zip(&self.columns) {
            match data {
                ColumnData::Continuous(vals) => {
                    for (i, v) in vals.iter().enumerate() {
                        rows[i].push(format!("{v}"));
                    }
                }
                ColumnData::Categorical(codes) => {
                    let cats = col.categories.as_ref().unwrap();
                    for (i, c) in codes.iter().enumerate() {
                        rows[i].push(cats[*c as usize].clone());
                    }
                }
            }
        }
        RawTable { headers, rows }
    }

    pub fn column_by_name(&self, name: &str) -> Option<(&ColumnSchema, &ColumnData)> {
        self.schema
            .iter()
            .position(|c| c.name == name)
            .map(|j| (&self.schema[j], &self.columns[j]))
    }
}

fn is_numeric_cell(cell: &str) -> bool {
    let t = cell.trim();
    if t.is_empty() {
        return false;
    }
    match t.parse::<f64>() {
        Ok(v) => v.is_finite(),
        Err(_) => false,
    }
}

/// Infers column kinds from a CSV file: columns whose every cell parses to a
/// finite number default to continuous, everything else is categorical.
/// `overrides` forces specific kinds by column name.
pub fn infer_schema(
    csv_path: &Path,
    overrides: &BTreeMap<String, ColumnKind>,
) -> Result<Vec<ColumnSchema>> {
    let raw = RawTable::read_csv(csv_path)?;
    infer_schema_from_raw(&raw, overrides)
}

pub fn infer_schema_from_raw(
    raw: &RawTable,
    overrides: &BTreeMap<String, ColumnKind>,
) -> Result<Vec<ColumnSchema>> {
    {
        let mut seen = std::collections::HashSet::new();
        for h in &raw.headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::Schema(format!("duplicate header '{h}'")));
            }
        }
    }
    for name in overrides.keys() {
        if !raw.headers.iter().any(|h| h == name) {
            return Err(Error::Schema(format!("override for unknown column '{name}'")));
        }
    }

    let mut schema = Vec::with_capacity(raw.headers.len());
    for (j, name) in raw.headers.iter().enumerate() {
        let kind = match overrides.get(name) {
            Some(k) => *k,
            None => {
                if raw.rows.iter().all(|r| is_numeric_cell(&r[j])) {
                    ColumnKind::Continuous
                } else {
                    ColumnKind::Categorical
                }
            }
        };
        let categories = match kind {
            ColumnKind::Categorical => {
                let mut seen = std::collections::HashSet::new();
                let mut cats = Vec::new();
                for row in &raw.rows {
                    let cell = row[j].as_str();
                    if seen.insert(cell.to_string()) {
                        cats.push(cell.to_string());
                    }
                }
                Some(cats)
            }
            ColumnKind::Continuous => None,
        };
        schema.push(ColumnSchema {
            name: name.clone(),
            kind,
            categories,
            modes: None,
        });
    }
    validate_schema(&schema)?;
    Ok(schema)
}

pub fn read_schema_json(path: &Path) -> Result<Vec<ColumnSchema>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema: Vec<ColumnSchema> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    validate_schema(&schema)?;
    Ok(schema)
}

pub fn write_schema_json(path: &Path, schema: &[ColumnSchema]) -> Result<()> {
    let text = serde_json::to_string_pretty(schema).expect("schema serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
