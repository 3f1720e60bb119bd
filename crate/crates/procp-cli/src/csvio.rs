//! CSV schema: a header row; feature columns (numeric unless declared
//! categorical); a column `a` in {0,1} marking observed outcomes; a column
//! `y` that may be empty exactly where `a` is 0; an optional column `p`
//! with known observation probabilities in (0,1).

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use procp_core::MaskedDataset;

#[derive(Debug, Clone)]
pub struct ParsedCsv {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    pub outcomes: Vec<Option<f64>>,
    pub propensity: Option<Vec<f64>>,
    /// 1-based data row numbers from the input file.
    pub row_ids: Vec<usize>,
    /// Count of outcome cells present on rows marked missing (ignored).
    pub ignored_outcomes: usize,
    /// All named columns, for diagnostics that read extra columns.
    pub extra_columns: BTreeMap<String, Vec<Option<f64>>>,
}

impl ParsedCsv {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dataset(&self) -> Result<MaskedDataset<f64>> {
        MaskedDataset::from_rows(self.rows.clone(), self.mask.clone(), self.outcomes.clone())
            .context("assembling dataset from CSV")
    }

    /// Restriction to a row subset, in the given order.
    pub fn select(&self, idx: &[usize]) -> ParsedCsv {
        ParsedCsv {
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            mask: idx.iter().map(|&i| self.mask[i]).collect(),
            outcomes: idx.iter().map(|&i| self.outcomes[i]).collect(),
            propensity: self
                .propensity
                .as_ref()
                .map(|p| idx.iter().map(|&i| p[i]).collect()),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            ignored_outcomes: self.ignored_outcomes,
            extra_columns: self
                .extra_columns
                .iter()
                .map(|(k, v)| (k.clone(), idx.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
        }
    }
}

pub fn read_csv(path: &Path, categorical: &[String]) -> Result<ParsedCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .context("reading header row")?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let a_col = headers
        .iter()
        .position(|h| h == "a")
        .context("schema: missing required column 'a'")?;
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .context("schema: missing required column 'y'")?;
    let p_col = headers.iter().position(|h| h == "p");
    for c in categorical {
        if !headers.contains(c) {
            bail!("schema: categorical column '{c}' not present");
        }
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&j| j != a_col && j != y_col && Some(j) != p_col)
        .collect();
    if feature_cols.is_empty() {
        bail!("schema: no feature columns besides a/y/p");
    }

    // Label-encode categorical columns by first occurrence.
    let mut codebooks: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();

    let mut rows = Vec::new();
    let mut mask = Vec::new();
    let mut outcomes = Vec::new();
    let mut propensity = p_col.map(|_| Vec::new());
    let mut row_ids = Vec::new();
    let mut ignored = 0usize;
    let mut extra: BTreeMap<String, Vec<Option<f64>>> =
        headers.iter().map(|h| (h.clone(), Vec::new())).collect();

    for (line, record) in reader.records().enumerate() {
        let row_id = line + 1;
        let record = record.with_context(|| format!("row {row_id}: malformed CSV record"))?;
        if record.len() != headers.len() {
            bail!(
                "row {row_id}: expected {} fields, found {}",
                headers.len(),
                record.len()
            );
        }
        let a_raw = record[a_col].trim();
        let observed = match a_raw {
            "0" => false,
            "1" => true,
            other => bail!("row {row_id}, column 'a': expected 0 or 1, got '{other}'"),
        };
        let y_raw = record[y_col].trim();
        let outcome = if y_raw.is_empty() {
            if observed {
                bail!("row {row_id}, column 'y': empty cell on an observed row");
            }
            None
        } else {
            let v: f64 = y_raw
                .parse()
                .with_context(|| format!("row {row_id}, column 'y': bad number '{y_raw}'"))?;
            if observed {
                Some(v)
            } else {
                // Outcomes on missing rows are not usable for calibration.
                ignored += 1;
                None
            }
        };
        if let (Some(j), Some(store)) = (p_col, propensity.as_mut()) {
            let raw = record[j].trim();
            let v: f64 = raw
                .parse()
                .with_context(|| format!("row {row_id}, column 'p': bad number '{raw}'"))?;
            if !(v > 0.0 && v < 1.0) {
                bail!("row {row_id}, column 'p': {v} is outside (0,1)");
            }
            store.push(v);
        }
        let mut features = Vec::with_capacity(feature_cols.len());
        for &j in &feature_cols {
            let raw = record[j].trim();
            let value = if categorical.iter().any(|c| c == &headers[j]) {
                let book = codebooks.entry(j).or_default();
                let next = book.len() as f64;
                *book.entry(raw.to_string()).or_insert(next)
            } else {
                raw.parse().with_context(|| {
                    format!(
                        "row {row_id}, column '{}': bad number '{raw}' \
                         (declare the column categorical to use labels)",
                        headers[j]
                    )
                })?
            };
            features.push(value);
        }
        for (h, cell) in headers.iter().zip(record.iter()) {
            extra
                .get_mut(h)
                .expect("initialized")
                .push(cell.trim().parse::<f64>().ok());
        }
        rows.push(features);
        mask.push(observed);
        outcomes.push(outcome);
        row_ids.push(row_id);
    }
    if rows.is_empty() {
        bail!("input file has a header but no data rows");
    }
    Ok(ParsedCsv {
        feature_names: feature_cols
            .iter()
            .map(|&j| headers[j].clone())
            .collect(),
        rows,
        mask,
        outcomes,
        propensity,
        row_ids,
        ignored_outcomes: ignored,
        extra_columns: extra,
    })
}

/// Serializes a parsed file back into the same schema (used by the
/// round-trip test and by dataset exports).
pub fn to_csv_string(data: &ParsedCsv) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = data.feature_names.clone();
    header.push("a".to_string());
    header.push("y".to_string());
    if data.propensity.is_some() {
        header.push("p".to_string());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..data.n() {
        let mut fields: Vec<String> = data.rows[i].iter().map(|v| format!("{v}")).collect();
        fields.push(if data.mask[i] { "1" } else { "0" }.to_string());
        fields.push(data.outcomes[i].map(|v| format!("{v}")).unwrap_or_default());
        if let Some(p) = &data.propensity {
            fields.push(format!("{}", p[i]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
