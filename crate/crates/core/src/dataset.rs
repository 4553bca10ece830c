//! CSV dataset ingestion. Columns are declared as the label column plus a
//! list of categorical columns; everything else is numeric. Categorical
//! columns and the label get a vocabulary fixed at load time (sorted for
//! determinism) and are one-hot encoded; numeric columns are z-scored with
//! statistics computed on the training split only.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Datum, Label};
use crate::error::Error;
use crate::rng::SimRng;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub label_column: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
}

/// A loaded, encoded, split dataset plus the encoding metadata needed to
/// describe it.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Label vocabulary in class-id order.
    pub label_names: Vec<String>,
    /// Encoded feature column names, in feature order.
    pub feature_names: Vec<String>,
}

struct RawColumn {
    name: String,
    kind: ColumnKind,
}

enum ColumnKind {
    Label,
    Categorical,
    Numeric,
}

/// Loads a headered CSV, encodes it, shuffles, and splits off
/// `test_fraction` of the rows for held-out evaluation.
pub fn load_dataset(
    path: &Path,
    schema: &Schema,
    test_fraction: f64,
    rng: &mut SimRng,
) -> Result<LoadedData> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid("test fraction must lie in [0, 1)"));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if !headers.iter().any(|h| h == &schema.label_column) {
        return Err(Error::Config(format!(
            "label column {:?} not found in header",
            schema.label_column
        )));
    }
    for c in &schema.categorical_columns {
        if !headers.iter().any(|h| h == c) {
            return Err(Error::Config(format!("categorical column {c:?} not found in header")));
        }
    }
    let columns: Vec<RawColumn> = headers
        .iter()
        .map(|h| RawColumn {
            name: h.clone(),
            kind: if h == &schema.label_column {
                ColumnKind::Label
            } else if schema.categorical_columns.iter().any(|c| c == h) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Numeric
            },
        })
        .collect();

    // First pass: read all cells, collect vocabularies, parse numerics.
    // Lines are reported 1-based counting the header as line 1.
    let mut rows: Vec<(Vec<f64>, Vec<String>, String)> = Vec::new();
    let mut label_vocab = BTreeSet::new();
    let mut cat_vocabs: Vec<BTreeSet<String>> =
        schema.categorical_columns.iter().map(|_| BTreeSet::new()).collect();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != columns.len() {
            return Err(Error::Malformed {
                line,
                message: format!("expected {} fields, found {}", columns.len(), record.len()),
            });
        }
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        let mut label = String::new();
        for (col, value) in columns.iter().zip(record.iter()) {
            match col.kind {
                ColumnKind::Label => {
                    label = value.trim().to_owned();
                    label_vocab.insert(label.clone());
                }
                ColumnKind::Categorical => categorical.push(value.trim().to_owned()),
                ColumnKind::Numeric => {
                    let v: f64 = value.trim().parse().map_err(|_| Error::Malformed {
                        line,
                        message: format!(
                            "non-numeric value {value:?} in numeric column {:?}",
                            col.name
                        ),
                    })?;
                    numeric.push(v);
                }
            }
        }
        for (vocab, v) in cat_vocabs.iter_mut().zip(&categorical) {
            vocab.insert(v.clone());
        }
        rows.push((numeric, categorical, label));
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("dataset {} has no data rows", path.display())));
    }

    let label_names: Vec<String> = label_vocab.into_iter().collect();
    let cat_vocabs: Vec<Vec<String>> =
        cat_vocabs.into_iter().map(|v| v.into_iter().collect()).collect();
    let numeric_names: Vec<&String> = columns
        .iter()
        .filter(|c| matches!(c.kind, ColumnKind::Numeric))
        .map(|c| &c.name)
        .collect();

    rows.shuffle(rng);
    let test_len = (rows.len() as f64 * test_fraction).round() as usize;
    let (test_rows, train_rows) = rows.split_at(test_len);

    // Numeric statistics from the training split only.
    let n_numeric = numeric_names.len();
    let mut mean = vec![0.0; n_numeric];
    let mut std = vec![0.0; n_numeric];
    for (numeric, _, _) in train_rows {
        for (m, v) in mean.iter_mut().zip(numeric) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= train_rows.len() as f64;
    }
    for (numeric, _, _) in train_rows {
        for ((s, m), v) in std.iter_mut().zip(&mean).zip(numeric) {
            *s += (v - m) * (v - m);
        }
    }
    for s in std.iter_mut() {
        *s = (*s / train_rows.len() as f64).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }

    let mut feature_names = Vec::new();
    for (name, vocab) in schema.categorical_columns.iter().zip(&cat_vocabs) {
        for v in vocab {
            feature_names.push(format!("{name}={v}"));
        }
    }
    feature_names.extend(numeric_names.iter().map(|n| (*n).clone()));

    let encode = |rows: &[(Vec<f64>, Vec<String>, String)]| -> Result<Vec<Datum>> {
        rows.iter()
            .map(|(numeric, categorical, label)| {
                let mut features = Vec::with_capacity(feature_names.len());
                for (vocab, v) in cat_vocabs.iter().zip(categorical) {
                    for entry in vocab {
                        features.push(if entry == v { 1.0 } else { 0.0 });
                    }
                }
                for ((v, m), s) in numeric.iter().zip(&mean).zip(&std) {
                    features.push((v - m) / s);
                }
                let class = label_names
                    .binary_search(label)
                    .expect("label vocabulary fixed at load");
                Ok(Datum { features, label: Label::Class(class) })
            })
            .collect()
    };

    let num_classes = label_names.len();
    let train = Dataset::new(encode(train_rows)?, num_classes)?;
    let test = Dataset::new(encode(test_rows)?, num_classes)?;
    let feature_dim = train.feature_dim;
    Ok(LoadedData { train, test, num_classes, feature_dim, label_names, feature_names })
}
