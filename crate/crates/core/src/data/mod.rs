//! Dataset loading, saving, featurization, user grouping, and synthetic
//! data generation.
//!
//! On disk a dataset is a directory of four files:
//!
//! - `catalog.csv`: a `f=<n_features>` preamble line, then
//!   `item_index,feature_index,value` triples in row-major ascending order;
//! - `catalog.meta.json`: feature count, item and user id dictionaries,
//!   mutability mask, per-feature bounds, and feature provenance;
//! - `ratings.csv`: `user_id,item_id,rating` rows with external string ids;
//! - `user_metadata.json`: optional per-user numeric metadata fields.

mod featurize;
mod grouping;
mod synth;

pub use featurize::{
    featurize, CategoricalFieldSpec, FeaturizerSpec, NumericFieldSpec, TextFieldSpec, TextMode,
};
pub use grouping::{group_users, GroupingSpec, GroupingStrategy};
pub use synth::{generate_synthetic, SynthConfig};

use crate::error::{Error, Result};
use crate::model::{ItemCatalog, ItemId, RatingStore, SparseRow, UserId};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

/// One item as it arrives from upstream metadata, before featurization.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawItemRecord {
    pub id: String,
    #[serde(default)]
    pub text: BTreeMap<String, String>,
    #[serde(default)]
    pub categorical: BTreeMap<String, String>,
    #[serde(default)]
    pub numeric: BTreeMap<String, f64>,
}

/// Where one feature column came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub source: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Text,
    Categorical,
    Numeric,
}

/// Bidirectional map between external string ids and dense indices, in
/// first-insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    forward: Vec<String>,
    inverse: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        IdMap::default()
    }

    /// Returns the dense index for `ext`, inserting it if unseen.
    pub fn insert_or_get(&mut self, ext: &str) -> u32 {
        if let Some(&i) = self.inverse.get(ext) {
            return i;
        }
        let i = self.forward.len() as u32;
        self.forward.push(ext.to_string());
        self.inverse.insert(ext.to_string(), i);
        i
    }

    /// Inserts a new id, erroring if it already exists.
    pub fn insert_unique(&mut self, ext: &str) -> Result<u32> {
        if self.inverse.contains_key(ext) {
            return Err(Error::DuplicateItem(ext.to_string()));
        }
        Ok(self.insert_or_get(ext))
    }

    pub fn get(&self, ext: &str) -> Option<u32> {
        self.inverse.get(ext).copied()
    }

    pub fn name(&self, index: u32) -> Option<&str> {
        self.forward.get(index as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.forward.iter().map(String::as_str)
    }
}

impl Serialize for IdMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.forward.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IdMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let forward = Vec::<String>::deserialize(deserializer)?;
        let mut map = IdMap::new();
        for name in &forward {
            map.insert_unique(name)
                .map_err(|_| D::Error::custom(format!("duplicate id `{name}`")))?;
        }
        Ok(map)
    }
}

/// Per-user metadata: field name to numeric value, keyed by external user id.
pub type UserMetadata = BTreeMap<String, BTreeMap<String, f64>>;

/// A complete, loaded dataset: catalog, ratings, id dictionaries, feature
/// provenance, and user metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub catalog: ItemCatalog,
    pub ratings: RatingStore,
    pub items: IdMap,
    pub users: IdMap,
    pub features: Vec<FeatureInfo>,
    pub user_metadata: UserMetadata,
}

#[derive(Serialize, Deserialize)]
struct CatalogMeta {
    n_features: usize,
    items: IdMap,
    users: IdMap,
    mutable: Vec<bool>,
    bounds: Vec<Option<(f64, f64)>>,
    features: Vec<FeatureInfo>,
}

const CATALOG_FILE: &str = "catalog.csv";
const META_FILE: &str = "catalog.meta.json";
const RATINGS_FILE: &str = "ratings.csv";
const METADATA_FILE: &str = "user_metadata.json";

impl Dataset {
    /// Resolves an item given either its external id or a dense index.
    pub fn resolve_item(&self, id: &str) -> Result<ItemId> {
        if let Some(i) = self.items.get(id) {
            return Ok(ItemId(i));
        }
        if let Ok(i) = id.parse::<u32>() {
            if (i as usize) < self.catalog.n_items() {
                return Ok(ItemId(i));
            }
        }
        Err(Error::UnknownExternalId(id.to_string()))
    }

    /// Metadata re-keyed by dense user id; users absent from the ratings
    /// are dropped.
    pub fn metadata_by_user(&self) -> BTreeMap<UserId, BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for (ext, fields) in &self.user_metadata {
            if let Some(i) = self.users.get(ext) {
                out.insert(UserId(i), fields.clone());
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;

        let mut w = BufWriter::new(File::create(dir.join(CATALOG_FILE))?);
        writeln!(w, "f={}", self.catalog.n_features())?;
        for item in self.catalog.items() {
            for (j, v) in self.catalog.row(item)?.iter() {
                writeln!(w, "{},{},{}", item.0, j, v)?;
            }
        }
        w.flush()?;

        let meta = CatalogMeta {
            n_features: self.catalog.n_features(),
            items: self.items.clone(),
            users: self.users.clone(),
            mutable: self.catalog.mutable_mask().to_vec(),
            bounds: self.catalog.bounds().to_vec(),
            features: self.features.clone(),
        };
        let mut w = BufWriter::new(File::create(dir.join(META_FILE))?);
        serde_json::to_writer_pretty(&mut w, &meta)?;
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join(RATINGS_FILE))?;
        w.write_record(["user_id", "item_id", "rating"])?;
        for user in self.ratings.users() {
            let uname = self.users.name(user.0).ok_or(Error::UnknownUser(user))?;
            for &(item, rating) in self.ratings.ratings(user)? {
                let iname = self.items.name(item.0).ok_or(Error::UnknownItem(item))?;
                w.write_record([uname, iname, &rating.to_string()])?;
            }
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join(METADATA_FILE))?);
        serde_json::to_writer_pretty(&mut w, &self.user_metadata)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta: CatalogMeta = serde_json::from_reader(BufReader::new(File::open(&meta_path)?))?;
        if meta.features.len() != meta.n_features {
            return Err(Error::Malformed {
                path: meta_path.display().to_string(),
                line: 1,
                msg: format!(
                    "{} feature descriptors for {} features",
                    meta.features.len(),
                    meta.n_features
                ),
            });
        }

        let catalog_path = dir.join(CATALOG_FILE);
        let catalog = read_catalog_csv(
            &catalog_path,
            meta.n_features,
            meta.items.len(),
            meta.mutable,
            meta.bounds,
        )?;

        let ratings_path = dir.join(RATINGS_FILE);
        let mut triples = Vec::new();
        let mut seen = HashSet::new();
        for_each_rating_row(&ratings_path, |line, user, item, rating| {
            let u = meta.users.get(user).ok_or_else(|| Error::Malformed {
                path: ratings_path.display().to_string(),
                line,
                msg: format!("unknown user id `{user}`"),
            })?;
            let i = meta.items.get(item).ok_or_else(|| Error::Malformed {
                path: ratings_path.display().to_string(),
                line,
                msg: format!("unknown item id `{item}`"),
            })?;
            if !seen.insert((u, i)) {
                return Err(Error::DuplicateRating {
                    user: user.to_string(),
                    item: item.to_string(),
                });
            }
            triples.push((UserId(u), ItemId(i), rating));
            Ok(())
        })?;
        let ratings = RatingStore::from_triples(meta.users.len(), triples)?;

        let metadata_path = dir.join(METADATA_FILE);
        let user_metadata: UserMetadata = if metadata_path.exists() {
            serde_json::from_reader(BufReader::new(File::open(&metadata_path)?))?
        } else {
            UserMetadata::new()
        };

        Ok(Dataset {
            catalog,
            ratings,
            items: meta.items,
            users: meta.users,
            features: meta.features,
            user_metadata,
        })
    }
}

fn read_catalog_csv(
    path: &Path,
    n_features: usize,
    n_items: usize,
    mutable: Vec<bool>,
    bounds: Vec<Option<(f64, f64)>>,
) -> Result<ItemCatalog> {
    let malformed = |line: u64, msg: String| Error::Malformed {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;

    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_items];
    let mut prev: Option<(u32, u32)> = None;
    let mut saw_preamble = false;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if !saw_preamble {
            let field = record.get(0).unwrap_or("");
            let declared: usize = field
                .strip_prefix("f=")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| malformed(line, format!("expected `f=<int>` preamble, got `{field}`")))?;
            if declared != n_features {
                return Err(malformed(
                    line,
                    format!("preamble declares {declared} features, sidecar says {n_features}"),
                ));
            }
            saw_preamble = true;
            continue;
        }
        if record.len() != 3 {
            return Err(malformed(line, format!("expected 3 fields, got {}", record.len())));
        }
        let i: u32 = record[0]
            .parse()
            .map_err(|_| malformed(line, format!("invalid item index `{}`", &record[0])))?;
        let j: u32 = record[1]
            .parse()
            .map_err(|_| malformed(line, format!("invalid feature index `{}`", &record[1])))?;
        let v: f64 = record[2]
            .parse()
            .map_err(|_| malformed(line, format!("invalid value `{}`", &record[2])))?;
        if i as usize >= n_items {
            return Err(malformed(line, format!("item index {i} out of range (n_items = {n_items})")));
        }
        if j as usize >= n_features {
            return Err(malformed(
                line,
                format!("feature index {j} out of range (f = {n_features})"),
            ));
        }
        if prev.is_some_and(|p| (i, j) <= p) {
            return Err(malformed(line, "triples out of order or duplicated".into()));
        }
        prev = Some((i, j));
        rows[i as usize].push((j, v));
    }
    if !saw_preamble {
        return Err(malformed(1, "missing `f=<int>` preamble".into()));
    }
    let rows = rows.into_iter().map(SparseRow::from_pairs).collect();
    ItemCatalog::new(n_features, rows, mutable, bounds)
}

fn for_each_rating_row(
    path: &Path,
    mut f: impl FnMut(u64, &str, &str, f64) -> Result<()>,
) -> Result<()> {
    let malformed = |line: u64, msg: String| Error::Malformed {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let expected = ["user_id", "item_id", "rating"];
    let file_is_empty = headers.len() == 0 || (headers.len() == 1 && headers[0].is_empty());
    if !file_is_empty && headers.iter().ne(expected) {
        return Err(malformed(
            1,
            format!(
                "expected header `user_id,item_id,rating`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(malformed(line, format!("expected 3 fields, got {}", record.len())));
        }
        let rating: f64 = record[2]
            .parse()
            .map_err(|_| malformed(line, format!("invalid rating `{}`", &record[2])))?;
        if !rating.is_finite() {
            return Err(malformed(line, format!("non-finite rating `{}`", &record[2])));
        }
        f(line, &record[0], &record[1], rating)?;
    }
    Ok(())
}

/// Loads a ratings CSV against an existing item dictionary (for example
/// from a featurized catalog): users are assigned ids in first-seen order,
/// item ids must already be present. Returns the store plus the user
/// dictionary.
pub fn load_ratings_with_items(path: &Path, items: &IdMap) -> Result<(RatingStore, IdMap)> {
    let mut users = IdMap::new();
    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    for_each_rating_row(path, |line, user, item, rating| {
        let i = items.get(item).ok_or_else(|| Error::Malformed {
            path: path.display().to_string(),
            line,
            msg: format!("unknown item id `{item}`"),
        })?;
        let u = users.insert_or_get(user);
        if !seen.insert((u, i)) {
            return Err(Error::DuplicateRating {
                user: user.to_string(),
                item: item.to_string(),
            });
        }
        triples.push((UserId(u), ItemId(i), rating));
        Ok(())
    })?;
    let store = RatingStore::from_triples(users.len(), triples)?;
    Ok((store, users))
}

/// Loads a standalone ratings CSV, building user and item dictionaries in
/// first-seen order. Returns the store plus both dictionaries.
pub fn load_ratings(path: &Path) -> Result<(RatingStore, IdMap, IdMap)> {
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    for_each_rating_row(path, |_, user, item, rating| {
        let u = users.insert_or_get(user);
        let i = items.insert_or_get(item);
        if !seen.insert((u, i)) {
            return Err(Error::DuplicateRating {
                user: user.to_string(),
                item: item.to_string(),
            });
        }
        triples.push((UserId(u), ItemId(i), rating));
        Ok(())
    })?;
    let store = RatingStore::from_triples(users.len(), triples)?;
    Ok((store, users, items))
}

/// Reads item records from a JSON Lines file, one record per line.
pub fn load_item_records(path: &Path) -> Result<Vec<RawItemRecord>> {
    use std::io::BufRead;
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawItemRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.display().to_string(),
            line: idx as u64 + 1,
            msg: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_file(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn empty_ratings_file_gives_empty_store() {
        let dir = tempdir().unwrap();
        let path = write_file(dir.path(), "r.csv", "");
        let (store, users, items) = load_ratings(&path).unwrap();
        assert_eq!(store.n_users(), 0);
        assert_eq!(store.n_ratings(), 0);
        assert!(users.is_empty());
        assert!(items.is_empty());
    }

    #[test]
    fn three_rows_build_two_users_two_items() {
        let dir = tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "r.csv",
            "user_id,item_id,rating\nu1,i1,5\nu1,i2,3\nu2,i1,4\n",
        );
        let (store, users, items) = load_ratings(&path).unwrap();
        assert_eq!(users.len(), 2);
        assert_eq!(items.len(), 2);
        assert_eq!(users.get("u1"), Some(0));
        assert_eq!(users.get("u2"), Some(1));
        assert_eq!(
            store.ratings(UserId(0)).unwrap(),
            &[(ItemId(0), 5.0), (ItemId(1), 3.0)]
        );
        assert_eq!(store.ratings(UserId(1)).unwrap(), &[(ItemId(0), 4.0)]);
    }

    #[test]
    fn non_numeric_rating_reports_its_line() {
        let dir = tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "r.csv",
            "user_id,item_id,rating\nu1,i1,5\nu1,i2,bad\n",
        );
        match load_ratings(&path) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_pair_is_rejected() {
        let dir = tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "r.csv",
            "user_id,item_id,rating\nu1,i1,5\nu1,i1,4\n",
        );
        match load_ratings(&path) {
            Err(Error::DuplicateRating { user, item }) => {
                assert_eq!(user, "u1");
                assert_eq!(item, "i1");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempdir().unwrap();
        let path = write_file(dir.path(), "r.csv", "a,b,c\nu1,i1,5\n");
        assert!(matches!(
            load_ratings(&path),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn id_map_round_trips_through_json() {
        let mut map = IdMap::new();
        map.insert_or_get("b");
        map.insert_or_get("a");
        let json = serde_json::to_string(&map).unwrap();
        assert_eq!(json, r#"["b","a"]"#);
        let back: IdMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, map);
        assert!(serde_json::from_str::<IdMap>(r#"["x","x"]"#).is_err());
    }

    #[test]
    fn item_records_parse_from_json_lines() {
        let dir = tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "items.jsonl",
            concat!(
                r#"{"id":"m1","text":{"summary":"a b a"},"numeric":{"price":3.0}}"#,
                "\n\n",
                r#"{"id":"m2","categorical":{"genre":"drama"}}"#,
                "\n",
            ),
        );
        let records = load_item_records(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].id, "m1");
        assert_eq!(records[0].text["summary"], "a b a");
        assert_eq!(records[1].categorical["genre"], "drama");
    }

    #[test]
    fn dataset_round_trips_exactly() {
        let dataset = generate_synthetic(&SynthConfig {
            n_users: 12,
            n_items: 15,
            n_features: 6,
            n_niche_features: 2,
            density: 0.3,
            seed: 5,
            ..SynthConfig::default()
        })
        .unwrap();
        let dir = tempdir().unwrap();
        dataset.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, dataset);
    }

    #[test]
    fn catalog_csv_rejects_out_of_order_triples() {
        let dir = tempdir().unwrap();
        let dataset = generate_synthetic(&SynthConfig {
            n_users: 3,
            n_items: 3,
            n_features: 3,
            n_niche_features: 1,
            density: 0.5,
            seed: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        dataset.save(dir.path()).unwrap();
        write_file(dir.path(), CATALOG_FILE, "f=3\n1,0,0.5\n0,0,0.5\n");
        assert!(matches!(
            Dataset::load(dir.path()),
            Err(Error::Malformed { line: 3, .. })
        ));
    }

    #[test]
    fn catalog_csv_requires_matching_preamble() {
        let dir = tempdir().unwrap();
        let dataset = generate_synthetic(&SynthConfig {
            n_users: 3,
            n_items: 3,
            n_features: 3,
            n_niche_features: 1,
            density: 0.5,
            seed: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        dataset.save(dir.path()).unwrap();
        write_file(dir.path(), CATALOG_FILE, "f=4\n0,0,0.5\n");
        assert!(Dataset::load(dir.path()).is_err());
    }

    #[test]
    fn resolve_item_accepts_external_and_dense_ids() {
        let dataset = generate_synthetic(&SynthConfig {
            n_users: 3,
            n_items: 5,
            n_features: 3,
            n_niche_features: 1,
            density: 0.5,
            seed: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(dataset.resolve_item("i3").unwrap(), ItemId(3));
        assert_eq!(dataset.resolve_item("4").unwrap(), ItemId(4));
        assert!(dataset.resolve_item("i99").is_err());
        assert!(dataset.resolve_item("99").is_err());
    }
}
