//! Deterministic featurization of raw item records into an [`ItemCatalog`].
//!
//! Columns are laid out in spec order: every text field's vocabulary first
//! (tokens sorted lexicographically), then one-hot columns for each
//! categorical field (values sorted lexicographically), then one min-max
//! normalized column per numeric field.

use super::{FeatureInfo, FeatureKind, IdMap, RawItemRecord};
use crate::error::{Error, Result};
use crate::model::{ItemCatalog, SparseRow};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    Binary,
    TermFrequency,
    #[default]
    TfIdf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextFieldSpec {
    pub field: String,
    #[serde(default)]
    pub mode: TextMode,
    /// Tokens must appear in at least this many records.
    #[serde(default = "one")]
    pub min_df: usize,
    #[serde(default = "yes")]
    pub mutable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFieldSpec {
    pub field: String,
    #[serde(default = "yes")]
    pub mutable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericFieldSpec {
    pub field: String,
    #[serde(default = "yes")]
    pub mutable: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Which fields to featurize and how.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerSpec {
    pub text: Vec<TextFieldSpec>,
    pub categorical: Vec<CategoricalFieldSpec>,
    pub numeric: Vec<NumericFieldSpec>,
}

impl FeaturizerSpec {
    fn is_trivial(&self) -> bool {
        self.text.is_empty() && self.categorical.is_empty() && self.numeric.is_empty()
    }
}

/// Lowercases, strips punctuation to spaces, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

struct Column {
    info: FeatureInfo,
    mutable: bool,
    bounds: Option<(f64, f64)>,
    values: Vec<f64>,
}

/// Turns raw records into a catalog. Also returns per-feature provenance
/// and the item id dictionary (row order follows record order).
pub fn featurize(
    records: &[RawItemRecord],
    spec: &FeaturizerSpec,
) -> Result<(ItemCatalog, Vec<FeatureInfo>, IdMap)> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no item records to featurize".into()));
    }
    if spec.is_trivial() {
        return Err(Error::InvalidConfig(
            "featurizer spec selects no fields".into(),
        ));
    }
    let mut items = IdMap::new();
    for r in records {
        items.insert_unique(&r.id)?;
    }
    let n = records.len();
    let mut columns: Vec<Column> = Vec::new();

    for field_spec in &spec.text {
        let texts: Vec<&String> = records
            .iter()
            .map(|r| {
                r.text.get(&field_spec.field).ok_or_else(|| Error::MissingField {
                    record: r.id.clone(),
                    field: field_spec.field.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let token_lists: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for tokens in &token_lists {
            for token in tokens.iter().collect::<BTreeSet<_>>() {
                *df.entry(token).or_insert(0) += 1;
            }
        }
        for (token, &docs) in &df {
            if docs < field_spec.min_df {
                continue;
            }
            let idf = ((1.0 + n as f64) / (1.0 + docs as f64)).ln() + 1.0;
            let values = token_lists
                .iter()
                .map(|tokens| {
                    let tf = tokens.iter().filter(|t| t.as_str() == *token).count() as f64;
                    match field_spec.mode {
                        TextMode::Binary => f64::from(tf > 0.0),
                        TextMode::TermFrequency => tf,
                        TextMode::TfIdf => tf * idf,
                    }
                })
                .collect();
            columns.push(Column {
                info: FeatureInfo {
                    source: field_spec.field.clone(),
                    kind: FeatureKind::Text,
                    token: Some(token.to_string()),
                },
                mutable: field_spec.mutable,
                bounds: None,
                values,
            });
        }
    }

    for field_spec in &spec.categorical {
        let values: Vec<&String> = records
            .iter()
            .map(|r| {
                r.categorical
                    .get(&field_spec.field)
                    .ok_or_else(|| Error::MissingField {
                        record: r.id.clone(),
                        field: field_spec.field.clone(),
                    })
            })
            .collect::<Result<_>>()?;
        let observed: BTreeSet<&String> = values.iter().copied().collect();
        for value in observed {
            columns.push(Column {
                info: FeatureInfo {
                    source: field_spec.field.clone(),
                    kind: FeatureKind::Categorical,
                    token: Some(value.clone()),
                },
                mutable: field_spec.mutable,
                bounds: Some((0.0, 1.0)),
                values: values.iter().map(|v| f64::from(*v == value)).collect(),
            });
        }
    }

    for field_spec in &spec.numeric {
        let raw: Vec<f64> = records
            .iter()
            .map(|r| {
                r.numeric
                    .get(&field_spec.field)
                    .copied()
                    .ok_or_else(|| Error::MissingField {
                        record: r.id.clone(),
                        field: field_spec.field.clone(),
                    })
            })
            .collect::<Result<_>>()?;
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("numeric field `{}`", field_spec.field),
            });
        }
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let values = raw
            .iter()
            .map(|&v| if max > min { (v - min) / (max - min) } else { 0.0 })
            .collect();
        columns.push(Column {
            info: FeatureInfo {
                source: field_spec.field.clone(),
                kind: FeatureKind::Numeric,
                token: None,
            },
            mutable: field_spec.mutable,
            bounds: Some((0.0, 1.0)),
            values,
        });
    }

    let f = columns.len();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let pairs: Vec<(u32, f64)> = columns
            .iter()
            .enumerate()
            .filter_map(|(j, c)| (c.values[i] != 0.0).then_some((j as u32, c.values[i])))
            .collect();
        rows.push(SparseRow::from_pairs(pairs));
    }
    let mutable = columns.iter().map(|c| c.mutable).collect();
    let bounds = columns.iter().map(|c| c.bounds).collect();
    let features = columns.into_iter().map(|c| c.info).collect();
    let catalog = ItemCatalog::new(f, rows, mutable, bounds)?;
    Ok((catalog, features, items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn text_record(id: &str, field: &str, text: &str) -> RawItemRecord {
        RawItemRecord {
            id: id.into(),
            text: [(field.to_string(), text.to_string())].into(),
            ..RawItemRecord::default()
        }
    }

    fn text_spec(field: &str, mode: TextMode) -> FeaturizerSpec {
        FeaturizerSpec {
            text: vec![TextFieldSpec {
                field: field.into(),
                mode,
                min_df: 1,
                mutable: true,
            }],
            ..FeaturizerSpec::default()
        }
    }

    #[test]
    fn tokenizer_lowercases_and_strips_punctuation() {
        assert_eq!(tokenize("A-b. a!"), vec!["a", "b", "a"]);
        assert_eq!(tokenize("  "), Vec::<String>::new());
        assert_eq!(tokenize("x1 2y"), vec!["x1", "2y"]);
    }

    #[test]
    fn term_frequency_counts_tokens_over_sorted_vocab() {
        let records = vec![text_record("m1", "summary", "a b a")];
        let (catalog, features, items) =
            featurize(&records, &text_spec("summary", TextMode::TermFrequency)).unwrap();
        assert_eq!(catalog.n_features(), 2);
        assert_eq!(
            features.iter().map(|f| f.token.as_deref()).collect::<Vec<_>>(),
            vec![Some("a"), Some("b")]
        );
        assert_eq!(
            catalog.row_dense(crate::model::ItemId(0)).unwrap().as_slice(),
            &[2.0, 1.0]
        );
        assert_eq!(items.get("m1"), Some(0));
    }

    #[test]
    fn binary_mode_flattens_counts() {
        let records = vec![text_record("m1", "summary", "a b a")];
        let (catalog, _, _) =
            featurize(&records, &text_spec("summary", TextMode::Binary)).unwrap();
        assert_eq!(
            catalog.row_dense(crate::model::ItemId(0)).unwrap().as_slice(),
            &[1.0, 1.0]
        );
    }

    #[test]
    fn tfidf_weights_by_document_frequency() {
        let records = vec![
            text_record("m1", "summary", "a b"),
            text_record("m2", "summary", "a"),
        ];
        let (catalog, _, _) = featurize(&records, &text_spec("summary", TextMode::TfIdf)).unwrap();
        // vocab [a, b]; df(a) = 2, df(b) = 1; N = 2
        let idf_a = (3.0f64 / 3.0).ln() + 1.0;
        let idf_b = (3.0f64 / 2.0).ln() + 1.0;
        let row0 = catalog.row_dense(crate::model::ItemId(0)).unwrap();
        assert_abs_diff_eq!(row0[0], idf_a, epsilon = 1e-12);
        assert_abs_diff_eq!(row0[1], idf_b, epsilon = 1e-12);
        let row1 = catalog.row_dense(crate::model::ItemId(1)).unwrap();
        assert_abs_diff_eq!(row1[0], idf_a, epsilon = 1e-12);
        assert_eq!(row1[1], 0.0);
    }

    #[test]
    fn min_df_drops_rare_tokens() {
        let records = vec![
            text_record("m1", "summary", "common rare"),
            text_record("m2", "summary", "common"),
        ];
        let mut spec = text_spec("summary", TextMode::Binary);
        spec.text[0].min_df = 2;
        let (catalog, features, _) = featurize(&records, &spec).unwrap();
        assert_eq!(catalog.n_features(), 1);
        assert_eq!(features[0].token.as_deref(), Some("common"));
    }

    #[test]
    fn one_hot_rows_sum_to_one_over_the_field() {
        let records = vec![
            RawItemRecord {
                id: "m1".into(),
                categorical: [("genre".to_string(), "y".to_string())].into(),
                ..RawItemRecord::default()
            },
            RawItemRecord {
                id: "m2".into(),
                categorical: [("genre".to_string(), "x".to_string())].into(),
                ..RawItemRecord::default()
            },
        ];
        let spec = FeaturizerSpec {
            categorical: vec![CategoricalFieldSpec {
                field: "genre".into(),
                mutable: true,
            }],
            ..FeaturizerSpec::default()
        };
        let (catalog, features, _) = featurize(&records, &spec).unwrap();
        assert_eq!(catalog.n_features(), 2);
        // values sorted lexicographically: [x, y]
        assert_eq!(features[0].token.as_deref(), Some("x"));
        assert_eq!(features[1].token.as_deref(), Some("y"));
        for item in catalog.items() {
            let row = catalog.row_dense(item).unwrap();
            assert_eq!(row.as_slice().iter().sum::<f64>(), 1.0);
        }
        assert_eq!(catalog.bounds(), &[Some((0.0, 1.0)), Some((0.0, 1.0))]);
    }

    #[test]
    fn constant_numeric_field_normalizes_to_zero() {
        let records = vec![
            RawItemRecord {
                id: "m1".into(),
                numeric: [("price".to_string(), 7.0)].into(),
                ..RawItemRecord::default()
            },
            RawItemRecord {
                id: "m2".into(),
                numeric: [("price".to_string(), 7.0)].into(),
                ..RawItemRecord::default()
            },
        ];
        let spec = FeaturizerSpec {
            numeric: vec![NumericFieldSpec {
                field: "price".into(),
                mutable: true,
            }],
            ..FeaturizerSpec::default()
        };
        let (catalog, _, _) = featurize(&records, &spec).unwrap();
        for item in catalog.items() {
            assert_eq!(catalog.row_dense(item).unwrap().as_slice(), &[0.0]);
        }
    }

    #[test]
    fn numeric_field_min_max_normalizes() {
        let records = vec![
            RawItemRecord {
                id: "m1".into(),
                numeric: [("price".to_string(), 1.0)].into(),
                ..RawItemRecord::default()
            },
            RawItemRecord {
                id: "m2".into(),
                numeric: [("price".to_string(), 3.0)].into(),
                ..RawItemRecord::default()
            },
            RawItemRecord {
                id: "m3".into(),
                numeric: [("price".to_string(), 2.0)].into(),
                ..RawItemRecord::default()
            },
        ];
        let spec = FeaturizerSpec {
            numeric: vec![NumericFieldSpec {
                field: "price".into(),
                mutable: true,
            }],
            ..FeaturizerSpec::default()
        };
        let (catalog, _, _) = featurize(&records, &spec).unwrap();
        let got: Vec<f64> = catalog
            .items()
            .map(|i| catalog.row_dense(i).unwrap()[0])
            .collect();
        assert_eq!(got, vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn missing_field_names_the_record() {
        let records = vec![
            text_record("m1", "summary", "a"),
            RawItemRecord {
                id: "m2".into(),
                ..RawItemRecord::default()
            },
        ];
        match featurize(&records, &text_spec("summary", TextMode::Binary)) {
            Err(Error::MissingField { record, field }) => {
                assert_eq!(record, "m2");
                assert_eq!(field, "summary");
            }
            other => panic!("expected missing-field error, got {other:?}"),
        }
    }

    #[test]
    fn immutable_source_field_expands_to_all_its_columns() {
        let records = vec![RawItemRecord {
            id: "m1".into(),
            text: [("summary".to_string(), "a b".to_string())].into(),
            numeric: [("price".to_string(), 2.0)].into(),
            ..RawItemRecord::default()
        }];
        let spec = FeaturizerSpec {
            text: vec![TextFieldSpec {
                field: "summary".into(),
                mode: TextMode::Binary,
                min_df: 1,
                mutable: false,
            }],
            numeric: vec![NumericFieldSpec {
                field: "price".into(),
                mutable: true,
            }],
            ..FeaturizerSpec::default()
        };
        let (catalog, features, _) = featurize(&records, &spec).unwrap();
        assert_eq!(catalog.mutable_mask(), &[false, false, true]);
        assert_eq!(features[2].kind, FeatureKind::Numeric);
        assert!(features[2].token.is_none());
    }

    #[test]
    fn every_column_maps_to_exactly_one_source_field() {
        let records = vec![
            RawItemRecord {
                id: "m1".into(),
                text: [("summary".to_string(), "alpha beta".to_string())].into(),
                categorical: [("genre".to_string(), "x".to_string())].into(),
                numeric: [("price".to_string(), 1.0)].into(),
            },
            RawItemRecord {
                id: "m2".into(),
                text: [("summary".to_string(), "beta gamma".to_string())].into(),
                categorical: [("genre".to_string(), "y".to_string())].into(),
                numeric: [("price".to_string(), 4.0)].into(),
            },
        ];
        let spec = FeaturizerSpec {
            text: vec![TextFieldSpec {
                field: "summary".into(),
                mode: TextMode::TfIdf,
                min_df: 1,
                mutable: true,
            }],
            categorical: vec![CategoricalFieldSpec {
                field: "genre".into(),
                mutable: false,
            }],
            numeric: vec![NumericFieldSpec {
                field: "price".into(),
                mutable: true,
            }],
        };
        let (catalog, features, _) = featurize(&records, &spec).unwrap();
        assert_eq!(features.len(), catalog.n_features());
        // text block, then categorical, then numeric
        assert_eq!(
            features.iter().map(|f| f.kind).collect::<Vec<_>>(),
            vec![
                FeatureKind::Text,
                FeatureKind::Text,
                FeatureKind::Text,
                FeatureKind::Categorical,
                FeatureKind::Categorical,
                FeatureKind::Numeric,
            ]
        );
        assert_eq!(catalog.mutable_mask(), &[true, true, true, false, false, true]);
    }

    #[test]
    fn duplicate_record_ids_are_rejected() {
        let records = vec![
            text_record("m1", "summary", "a"),
            text_record("m1", "summary", "b"),
        ];
        assert!(matches!(
            featurize(&records, &text_spec("summary", TextMode::Binary)),
            Err(Error::DuplicateItem(id)) if id == "m1"
        ));
    }

    #[test]
    fn determinism_across_runs() {
        let records = vec![
            text_record("m1", "summary", "the quick brown fox"),
            text_record("m2", "summary", "the slow brown bear"),
        ];
        let spec = text_spec("summary", TextMode::TfIdf);
        let a = featurize(&records, &spec).unwrap();
        let b = featurize(&records, &spec).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
