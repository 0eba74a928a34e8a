//! Tabular ingestion: CSV parsing against a schema, one-hot plus z-score
//! encoding, feature roles, partitions and deterministic splits.
//!
//! Numeric columns are z-scored with the population (N-denominator) standard
//! deviation. Categorical columns become one-hot blocks with categories in
//! lexicographic order; the 0/1 entries are left unscaled so each block sums
//! to one per row. Rows with any empty cell are rejected.

mod partition;
mod schema;

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use partition::{cross, partition_by, Bin, Partition};
pub use schema::{german_credit_schema, ColumnKind, ColumnSpec, FeatureRole, SchemaConfig};

/// Raw cell values of one feature column.
#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl RawColumn {
    fn select(&self, rows: &[usize]) -> RawColumn {
        match self {
            RawColumn::Numeric(v) => RawColumn::Numeric(rows.iter().map(|&r| v[r]).collect()),
            RawColumn::Categorical(v) => {
                RawColumn::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
        }
    }

    fn append(&mut self, other: &RawColumn) {
        match (self, other) {
            (RawColumn::Numeric(a), RawColumn::Numeric(b)) => a.extend_from_slice(b),
            (RawColumn::Categorical(a), RawColumn::Categorical(b)) => a.extend(b.iter().cloned()),
            _ => unreachable!("columns come from the same schema"),
        }
    }
}

/// Parsed but unencoded table, feature columns in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: SchemaConfig,
    pub columns: Vec<(String, RawColumn)>,
    pub labels: Option<Vec<bool>>,
    pub n_rows: usize,
}

impl RawTable {
    pub fn from_reader<R: Read>(reader: R, schema: &SchemaConfig) -> Result<Self> {
        schema.validate()?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::input("ingest", format!("cannot read CSV header: {e}")))?
            .clone();
        let position = |name: &str| -> Result<usize> {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
                Error::input("ingest", format!("column '{name}' named in the schema is not in the CSV header"))
            })
        };
        let feature_pos: Vec<(usize, &ColumnSpec)> = schema
            .features()
            .map(|c| position(&c.name).map(|p| (p, c)))
            .collect::<Result<_>>()?;
        let label_pos = schema.label().map(|c| position(&c.name)).transpose()?;

        let mut columns: Vec<(String, RawColumn)> = feature_pos
            .iter()
            .map(|(_, c)| {
                let col = match c.kind {
                    ColumnKind::Numeric => RawColumn::Numeric(Vec::new()),
                    ColumnKind::Categorical => RawColumn::Categorical(Vec::new()),
                };
                (c.name.clone(), col)
            })
            .collect();
        let mut labels = label_pos.map(|_| Vec::new());
        let positive = schema.positive_value();
        let mut missing_rows = Vec::new();
        let mut n_rows = 0;

        for (row_idx, record) in rdr.records().enumerate() {
            // Data rows are numbered from 1; the header is row 0.
            let line = row_idx + 1;
            let record = record.map_err(|e| Error::input("ingest", format!("row {line}: {e}")))?;
            let used = feature_pos.iter().map(|(p, _)| *p).chain(label_pos);
            if used.clone().any(|p| record.get(p).is_none_or(|v| v.trim().is_empty())) {
                missing_rows.push(line);
                continue;
            }
            for ((p, spec), (_, col)) in feature_pos.iter().zip(columns.iter_mut()) {
                let cell = record[*p].trim();
                match col {
                    RawColumn::Numeric(v) => {
                        let x: f64 = cell.parse().map_err(|_| {
                            Error::input(
                                "ingest",
                                format!("row {line}, column '{}': cannot parse '{cell}' as a number", spec.name),
                            )
                        })?;
                        if !x.is_finite() {
                            return Err(Error::input(
                                "ingest",
                                format!("row {line}, column '{}': non-finite value", spec.name),
                            ));
                        }
                        v.push(x);
                    }
                    RawColumn::Categorical(v) => v.push(cell.to_string()),
                }
            }
            if let (Some(p), Some(l)) = (label_pos, labels.as_mut()) {
                l.push(label_matches(record[p].trim(), positive));
            }
            n_rows += 1;
        }
        if !missing_rows.is_empty() {
            let shown: Vec<String> = missing_rows.iter().take(20).map(|r| r.to_string()).collect();
            return Err(Error::input(
                "ingest",
                format!(
                    "{} row(s) have missing values: {}{}",
                    missing_rows.len(),
                    shown.join(", "),
                    if missing_rows.len() > 20 { ", ..." } else { "" }
                ),
            ));
        }
        if n_rows == 0 {
            return Err(Error::input("ingest", "CSV has no data rows"));
        }
        Ok(Self {
            schema: schema.clone(),
            columns,
            labels,
            n_rows,
        })
    }

    pub fn load(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_reader(std::io::BufReader::new(file), schema)
    }

    pub fn select(&self, rows: &[usize]) -> RawTable {
        RawTable {
            schema: self.schema.clone(),
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), c.select(rows)))
                .collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
            n_rows: rows.len(),
        }
    }

    /// Stack `other` below `self`. Both tables must share a schema.
    pub fn concat(&self, other: &RawTable) -> Result<RawTable> {
        if self.schema != other.schema {
            return Err(Error::input("ingest", "cannot stack tables with different schemas"));
        }
        let mut out = self.clone();
        for ((_, a), (_, b)) in out.columns.iter_mut().zip(&other.columns) {
            a.append(b);
        }
        if let (Some(a), Some(b)) = (out.labels.as_mut(), other.labels.as_ref()) {
            a.extend_from_slice(b);
        }
        out.n_rows += other.n_rows;
        Ok(out)
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }
}

fn label_matches(cell: &str, positive: &str) -> bool {
    if cell == positive {
        return true;
    }
    match (cell.parse::<f64>(), positive.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// How one raw feature maps onto encoded columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodedFeature {
    pub name: String,
    pub kind: ColumnKind,
    pub role: FeatureRole,
    pub start: usize,
    pub width: usize,
    /// Category order of a one-hot block (empty for numeric columns).
    pub categories: Vec<String>,
    pub mean: f64,
    pub std: f64,
    pub constant: bool,
    pub is_group: bool,
    pub exclude_from_policy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Encoder {
    pub features: Vec<EncodedFeature>,
    pub width: usize,
}

impl Encoder {
    /// Learn category sets and z-score statistics from `table`.
    pub fn fit(table: &RawTable) -> Encoder {
        let mut features = Vec::new();
        let mut start = 0;
        for (spec, (_, col)) in table.schema.features().zip(&table.columns) {
            let role = spec.role.expect("validated schema");
            let (width, categories, mean, std) = match col {
                RawColumn::Numeric(v) => {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    (1, Vec::new(), mean, var.sqrt())
                }
                RawColumn::Categorical(v) => {
                    let cats: BTreeSet<&str> = v.iter().map(String::as_str).collect();
                    let cats: Vec<String> = cats.into_iter().map(str::to_string).collect();
                    (cats.len(), cats, 0.0, 1.0)
                }
            };
            let constant = match col {
                RawColumn::Numeric(_) => std <= 1e-12 * mean.abs().max(1.0),
                RawColumn::Categorical(_) => width == 1,
            };
            features.push(EncodedFeature {
                name: spec.name.clone(),
                kind: spec.kind,
                role,
                start,
                width,
                categories,
                mean,
                std,
                constant,
                is_group: spec.is_group,
                exclude_from_policy: spec.exclude_from_policy,
            });
            start += width;
        }
        Encoder {
            features,
            width: start,
        }
    }

    pub fn transform(&self, table: &RawTable) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((table.n_rows, self.width));
        for (feat, (_, col)) in self.features.iter().zip(&table.columns) {
            match col {
                RawColumn::Numeric(v) => {
                    for (r, x) in v.iter().enumerate() {
                        out[[r, feat.start]] = if feat.constant {
                            0.0
                        } else {
                            (x - feat.mean) / feat.std
                        };
                    }
                }
                RawColumn::Categorical(v) => {
                    for (r, x) in v.iter().enumerate() {
                        let k = feat.categories.binary_search(x).map_err(|_| {
                            Error::input(
                                "ingest",
                                format!("column '{}': unseen category '{x}'", feat.name),
                            )
                        })?;
                        out[[r, feat.start + k]] = 1.0;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Short hash of the encoding layout; stored with trained policies.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.features {
            h.update(f.name.as_bytes());
            h.update([f.kind as u8, f.role as u8]);
            h.update((f.start as u64).to_le_bytes());
            h.update((f.width as u64).to_le_bytes());
            for c in &f.categories {
                h.update(c.as_bytes());
                h.update([0]);
            }
            h.update(f.mean.to_le_bytes());
            h.update(f.std.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Human-readable name of every encoded column (`name` or `name=category`).
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width);
        for f in &self.features {
            if f.categories.is_empty() {
                names.push(f.name.clone());
            } else {
                names.extend(f.categories.iter().map(|c| format!("{}={c}", f.name)));
            }
        }
        names
    }

    pub fn feature(&self, name: &str) -> Option<&EncodedFeature> {
        self.features.iter().find(|f| f.name == name)
    }
}

/// An encoded, immutable table ready for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub raw: RawTable,
    pub encoder: Encoder,
    pub encoded: Array2<f64>,
    pub warnings: Vec<String>,
}

impl Dataset {
    /// Fit the encoder on `raw` itself and encode it.
    pub fn from_raw(raw: RawTable) -> Result<Self> {
        let encoder = Encoder::fit(&raw);
        Self::with_encoder(raw, encoder)
    }

    pub fn with_encoder(raw: RawTable, encoder: Encoder) -> Result<Self> {
        let encoded = encoder.transform(&raw)?;
        let warnings = encoder
            .features
            .iter()
            .filter(|f| f.constant && f.kind == ColumnKind::Numeric)
            .map(|f| format!("constant column '{}' encoded as zeros", f.name))
            .collect();
        Ok(Self {
            raw,
            encoder,
            encoded,
            warnings,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.raw.n_rows
    }

    pub fn width(&self) -> usize {
        self.encoder.width
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.encoded.view()
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.raw.labels.as_deref()
    }

    pub fn fingerprint(&self) -> String {
        self.encoder.fingerprint()
    }

    /// Role of every encoded column (one-hot blocks share their feature's role).
    pub fn roles(&self) -> Vec<FeatureRole> {
        let mut roles = Vec::with_capacity(self.width());
        for f in &self.encoder.features {
            roles.extend(std::iter::repeat_n(f.role, f.width));
        }
        roles
    }

    /// Encoded column indices whose role is in `roles`.
    pub fn role_columns(&self, roles: &[FeatureRole]) -> Vec<usize> {
        self.roles()
            .iter()
            .enumerate()
            .filter(|(_, r)| roles.contains(r))
            .map(|(k, _)| k)
            .collect()
    }

    /// Per encoded column: true when the policy must not use it.
    pub fn policy_frozen_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.width());
        for f in &self.encoder.features {
            mask.extend(std::iter::repeat_n(f.exclude_from_policy, f.width));
        }
        mask
    }

    /// Rows `rows`, keeping this dataset's encoding.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_rows()) {
            return Err(Error::input("ingest", format!("row {bad} out of range")));
        }
        Dataset::with_encoder(self.raw.select(rows), self.encoder.clone())
    }
}

/// Load, type, encode and normalize a CSV file.
pub fn load_csv(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<Dataset> {
    Dataset::from_raw(RawTable::load(path, schema)?)
}

/// Load two files that share a schema and encode both with statistics fit on
/// their union, so feature distances between them are comparable.
pub fn load_csv_pair(
    path_a: impl AsRef<Path>,
    path_b: impl AsRef<Path>,
    schema: &SchemaConfig,
) -> Result<(Dataset, Dataset)> {
    let a = RawTable::load(path_a, schema)?;
    let b = RawTable::load(path_b, schema)?;
    let encoder = Encoder::fit(&a.concat(&b)?);
    Ok((
        Dataset::with_encoder(a, encoder.clone())?,
        Dataset::with_encoder(b, encoder)?,
    ))
}

/// Deterministic shuffled split into `(train, test)` index sets.
pub fn split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::input("ingest", format!("split fraction {fraction} not in (0, 1)")));
    }
    let n_train = (n as f64 * fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::input(
            "ingest",
            format!("split of {n} rows at {fraction} leaves an empty side"),
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(text: &str) -> SchemaConfig {
        SchemaConfig::from_json(text).unwrap()
    }

    fn numeric_schema() -> SchemaConfig {
        schema(r#"{"columns":[{"name":"x","kind":"numeric","role":"actionable"}]}"#)
    }

    #[test]
    fn z_score_uses_population_std() {
        let ds = Dataset::from_raw(RawTable::from_reader("x\n1\n2\n3\n".as_bytes(), &numeric_schema()).unwrap())
            .unwrap();
        let col: Vec<f64> = ds.encoded.column(0).to_vec();
        assert!((col[0] + 1.224_744_9).abs() < 1e-7);
        assert_eq!(col[1], 0.0);
        assert!((col[2] - 1.224_744_9).abs() < 1e-7);
    }

    #[test]
    fn categories_become_one_hot() {
        let s = schema(r#"{"columns":[{"name":"c","kind":"categorical","role":"immutable"}]}"#);
        let ds = Dataset::from_raw(RawTable::from_reader("c\nb\na\nb\n".as_bytes(), &s).unwrap()).unwrap();
        assert_eq!(ds.width(), 2);
        assert_eq!(ds.encoder.column_names(), ["c=a", "c=b"]);
        assert_eq!(ds.encoded.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(ds.encoded.row(1).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn constant_column_is_flagged() {
        let ds = Dataset::from_raw(RawTable::from_reader("x\n4\n4\n4\n".as_bytes(), &numeric_schema()).unwrap())
            .unwrap();
        assert!(ds.encoded.iter().all(|&v| v == 0.0));
        assert_eq!(ds.warnings.len(), 1);
    }

    #[test]
    fn errors_name_the_problem() {
        let s = schema(r#"{"columns":[{"name":"y","kind":"numeric","role":"actionable"}]}"#);
        let err = RawTable::from_reader("x\n1\n".as_bytes(), &s).unwrap_err();
        assert!(err.to_string().contains("'y'"));

        let err = RawTable::from_reader("x\n1\nabc\n".as_bytes(), &numeric_schema()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");

        let s = schema(
            r#"{"columns":[{"name":"x","kind":"numeric","role":"actionable"},
                           {"name":"z","kind":"numeric","role":"actionable"}]}"#,
        );
        let err = RawTable::from_reader("x,z\n1,2\n3,\n".as_bytes(), &s).unwrap_err();
        assert!(err.to_string().contains("missing values: 2"), "{err}");
    }

    #[test]
    fn labels_and_roles() {
        let s = schema(
            r#"{"columns":[{"name":"x","kind":"numeric","role":"actionable"},
                           {"name":"s","kind":"categorical","role":"immutable","is_group":true,"exclude_from_policy":true},
                           {"name":"y","kind":"categorical","is_label":true}],
                "label_positive_value":"good"}"#,
        );
        let ds = Dataset::from_raw(
            RawTable::from_reader("x,s,y\n1,f,good\n2,m,bad\n3,m,good\n".as_bytes(), &s).unwrap(),
        )
        .unwrap();
        assert_eq!(ds.labels().unwrap(), &[true, false, true]);
        assert_eq!(
            ds.roles(),
            vec![FeatureRole::Actionable, FeatureRole::Immutable, FeatureRole::Immutable]
        );
        assert_eq!(ds.policy_frozen_mask(), vec![false, true, true]);
        assert_eq!(ds.role_columns(&[FeatureRole::Immutable]), vec![1, 2]);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (train, test) = split(10, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(split(10, 0.8, 1).unwrap(), (train, test));
        assert_ne!(split(100, 0.5, 1).unwrap().0, split(100, 0.5, 2).unwrap().0);
        assert!(split(1, 0.5, 0).is_err());
        assert!(split(10, 1.0, 0).is_err());
    }
}
