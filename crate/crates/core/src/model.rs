//! Domain types for users, items and ratings, plus the content-filtering
//! scorer and ranker every other module builds on.
//!
//! An item's score for a user is the dot product between the item's feature
//! vector and the user's profile, where the profile is the rating-weighted
//! sum of the feature vectors of the items the user has rated. Summing the
//! user side once makes scoring O(f) per (user, item) pair instead of
//! O(|rated| * f).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

/// Dense item identifier, contiguous in `0..n_items`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

/// Dense user identifier, contiguous in `0..n_users`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A dense feature vector of length `f`. Entries are always finite.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    /// Builds a vector, rejecting NaN/Inf entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "feature vector".into(),
            });
        }
        Ok(FeatureVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        FeatureVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> Result<f64> {
        if self.0.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.0.len(),
                got: other.len(),
            });
        }
        Ok(self.0.iter().zip(other).map(|(a, b)| a * b).sum())
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Sparse row: parallel `(index, value)` arrays sorted by index.
/// Zero values are not stored; semantics are a dense row of length `f`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl SparseRow {
    pub fn from_dense(values: &[f64]) -> Self {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                idx.push(i as u32);
                val.push(v);
            }
        }
        SparseRow { idx, val }
    }

    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        pairs.retain(|&(_, v)| v != 0.0);
        SparseRow {
            idx: pairs.iter().map(|&(i, _)| i).collect(),
            val: pairs.iter().map(|&(_, v)| v).collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx
            .iter()
            .zip(&self.val)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn to_dense(&self, len: usize) -> FeatureVector {
        let mut out = vec![0.0; len];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        FeatureVector(out)
    }

    /// Dot product against a dense vector of length >= max stored index.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    /// Adds `scale * self` into a dense accumulator.
    pub fn add_scaled_into(&self, scale: f64, acc: &mut [f64]) {
        for (i, v) in self.iter() {
            acc[i] += scale * v;
        }
    }
}

/// The item feature matrix with the per-feature mutability mask and an
/// optional per-feature value box.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemCatalog {
    n_features: usize,
    rows: Vec<SparseRow>,
    mutable: Vec<bool>,
    /// Empty means unbounded everywhere; otherwise one entry per feature.
    bounds: Vec<Option<(f64, f64)>>,
}

impl ItemCatalog {
    pub fn new(
        n_features: usize,
        rows: Vec<SparseRow>,
        mutable: Vec<bool>,
        bounds: Vec<Option<(f64, f64)>>,
    ) -> Result<Self> {
        if mutable.len() != n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: mutable.len(),
            });
        }
        if !bounds.is_empty() && bounds.len() != n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: bounds.len(),
            });
        }
        for (lo, hi) in bounds.iter().flatten() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "invalid feature bounds ({lo}, {hi})"
                )));
            }
        }
        let catalog = ItemCatalog {
            n_features,
            rows,
            mutable,
            bounds,
        };
        for (item, row) in catalog.rows.iter().enumerate() {
            for (i, v) in row.iter() {
                if i >= n_features {
                    return Err(Error::DimensionMismatch {
                        expected: n_features,
                        got: i + 1,
                    });
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("catalog row {item}"),
                    });
                }
                if !catalog.within_bounds(i, v) {
                    return Err(Error::InvalidConfig(format!(
                        "catalog row {item}, feature {i}: value {v} outside bounds"
                    )));
                }
            }
        }
        Ok(catalog)
    }

    /// Convenience constructor from dense rows; all features mutable, no bounds.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let f = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != f) {
            return Err(Error::DimensionMismatch {
                expected: f,
                got: rows.iter().map(|r| r.len()).find(|&l| l != f).unwrap_or(f),
            });
        }
        let sparse = rows.iter().map(|r| SparseRow::from_dense(r)).collect();
        ItemCatalog::new(f, sparse, vec![true; f], Vec::new())
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> {
        (0..self.rows.len() as u32).map(ItemId)
    }

    pub fn contains(&self, item: ItemId) -> bool {
        item.index() < self.rows.len()
    }

    pub fn row(&self, item: ItemId) -> Result<&SparseRow> {
        self.rows.get(item.index()).ok_or(Error::UnknownItem(item))
    }

    pub fn row_dense(&self, item: ItemId) -> Result<FeatureVector> {
        Ok(self.row(item)?.to_dense(self.n_features))
    }

    pub fn mutable_mask(&self) -> &[bool] {
        &self.mutable
    }

    pub fn bounds(&self) -> &[Option<(f64, f64)>] {
        &self.bounds
    }

    fn within_bounds(&self, feature: usize, value: f64) -> bool {
        match self.bounds.get(feature).copied().flatten() {
            Some((lo, hi)) => value >= lo && value <= hi,
            None => true,
        }
    }

    /// Clamps a dense vector into the per-feature box (no-op where unbounded).
    pub fn clamp_to_bounds(&self, values: &mut [f64]) {
        if self.bounds.is_empty() {
            return;
        }
        for (i, v) in values.iter_mut().enumerate() {
            if let Some((lo, hi)) = self.bounds[i] {
                *v = v.clamp(lo, hi);
            }
        }
    }

    /// A copy of the catalog with item `a`'s row replaced.
    pub fn with_row_replaced(&self, item: ItemId, values: &FeatureVector) -> Result<Self> {
        if !self.contains(item) {
            return Err(Error::UnknownItem(item));
        }
        if values.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: values.len(),
            });
        }
        let mut next = self.clone();
        next.rows[item.index()] = SparseRow::from_dense(values.as_slice());
        Ok(next)
    }
}

/// Per-user rated-item lists. Lists are sorted by item id and free of
/// duplicate (user, item) pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingStore {
    per_user: Vec<Vec<(ItemId, f64)>>,
}

impl RatingStore {
    pub fn from_triples<I>(n_users: usize, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, ItemId, f64)>,
    {
        let mut per_user: Vec<Vec<(ItemId, f64)>> = vec![Vec::new(); n_users];
        for (user, item, rating) in triples {
            if !rating.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("rating for user {user}, item {item}"),
                });
            }
            let list = per_user
                .get_mut(user.index())
                .ok_or(Error::UnknownUser(user))?;
            list.push((item, rating));
        }
        for (u, list) in per_user.iter_mut().enumerate() {
            list.sort_by_key(|&(i, _)| i);
            if list.windows(2).any(|w| w[0].0 == w[1].0) {
                let dup = list.windows(2).find(|w| w[0].0 == w[1].0).unwrap()[0].0;
                return Err(Error::DuplicateRating {
                    user: u.to_string(),
                    item: dup.to_string(),
                });
            }
        }
        Ok(RatingStore { per_user })
    }

    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> {
        (0..self.per_user.len() as u32).map(UserId)
    }

    pub fn contains(&self, user: UserId) -> bool {
        user.index() < self.per_user.len()
    }

    pub fn ratings(&self, user: UserId) -> Result<&[(ItemId, f64)]> {
        self.per_user
            .get(user.index())
            .map(Vec::as_slice)
            .ok_or(Error::UnknownUser(user))
    }

    pub fn rating_count(&self, user: UserId) -> usize {
        self.per_user.get(user.index()).map_or(0, Vec::len)
    }

    pub fn has_rated(&self, user: UserId, item: ItemId) -> bool {
        self.per_user
            .get(user.index())
            .is_some_and(|list| list.binary_search_by_key(&item, |&(i, _)| i).is_ok())
    }

    pub fn n_ratings(&self) -> usize {
        self.per_user.iter().map(Vec::len).sum()
    }
}

/// Precomputed rating-weighted sum of a user's rated item rows. Scoring any
/// item for the user is then a single dot product against `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user: UserId,
    pub w: FeatureVector,
}

/// Builds `w_u = sum_r rating * features[item]` over the user's rated items.
/// A user with no ratings gets the zero vector.
pub fn build_profile(
    ratings: &RatingStore,
    catalog: &ItemCatalog,
    user: UserId,
) -> Result<UserProfile> {
    let rated = ratings.ratings(user)?;
    let mut w = vec![0.0; catalog.n_features()];
    for &(item, rating) in rated {
        catalog.row(item)?.add_scaled_into(rating, &mut w);
    }
    Ok(UserProfile {
        user,
        w: FeatureVector(w),
    })
}

/// Dot product of an item's features with a user profile.
pub fn score_item(item: &FeatureVector, profile: &UserProfile) -> Result<f64> {
    item.dot(profile.w.as_slice())
}

/// Deterministic ranking order: score descending, then item id ascending.
/// Signed zeros compare equal, so a score of `-0.0` from one dot-product
/// path and `+0.0` from another cannot flip the order.
pub fn rank_cmp(a: &(f64, ItemId), b: &(f64, ItemId)) -> Ordering {
    (b.0 + 0.0).total_cmp(&(a.0 + 0.0)).then(a.1.cmp(&b.1))
}

/// `true` when `(score, item)` sorts strictly ahead of `(threshold, threshold_item)`.
pub fn beats(score: f64, item: ItemId, threshold: f64, threshold_item: ItemId) -> bool {
    rank_cmp(&(score, item), &(threshold, threshold_item)) == Ordering::Less
}

fn scored_items(
    catalog: &ItemCatalog,
    profile: &UserProfile,
    exclude_rated: bool,
    ratings: &RatingStore,
    omit: Option<ItemId>,
) -> Result<Vec<(f64, ItemId)>> {
    if profile.w.len() != catalog.n_features() {
        return Err(Error::DimensionMismatch {
            expected: catalog.n_features(),
            got: profile.w.len(),
        });
    }
    let mut scored = Vec::with_capacity(catalog.n_items());
    for item in catalog.items() {
        if Some(item) == omit {
            continue;
        }
        if exclude_rated && ratings.has_rated(profile.user, item) {
            continue;
        }
        let score = catalog.row(item)?.dot_dense(profile.w.as_slice());
        scored.push((score, item));
    }
    Ok(scored)
}

/// Full recommendation list for one user: all catalog items (minus the
/// user's rated items when `exclude_rated`) sorted by score descending,
/// ties broken by ascending item id.
pub fn rank_items(
    catalog: &ItemCatalog,
    profile: &UserProfile,
    exclude_rated: bool,
    ratings: &RatingStore,
) -> Result<Vec<ItemId>> {
    let mut scored = scored_items(catalog, profile, exclude_rated, ratings, None)?;
    scored.sort_by(rank_cmp);
    Ok(scored.into_iter().map(|(_, id)| id).collect())
}

/// The k-th best competitor score (and the item attaining it) once `omit`
/// is taken out of the running. Item `omit` sits inside the user's top-k
/// exactly when its score beats this threshold under [`beats`].
///
/// Competitors never change while a single item's features are optimized,
/// so callers can compute this once per user and test membership with one
/// dot product per iteration.
pub fn topk_threshold(
    catalog: &ItemCatalog,
    profile: &UserProfile,
    k: usize,
    omit: ItemId,
    exclude_rated: bool,
    ratings: &RatingStore,
) -> Result<(f64, ItemId)> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let mut scored = scored_items(catalog, profile, exclude_rated, ratings, Some(omit))?;
    if scored.len() < k {
        return Err(Error::NotEnoughItems {
            needed: k,
            available: scored.len(),
        });
    }
    let (_, kth, _) = scored.select_nth_unstable_by(k - 1, rank_cmp);
    Ok((kth.0, kth.1))
}
