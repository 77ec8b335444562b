//! Evaluation metrics: success rate, feature-change counts, and the
//! rank-biased-overlap side-effect measure.

use crate::error::{Error, Result};
use crate::model::{self, ItemCatalog, ItemId, RatingStore, UserId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::HashSet;
use std::hash::Hash;

/// Absolute tolerance below which a feature difference does not count as a change.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Summary of one recourse evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Fraction of the target group seeing the item inside their top-k.
    pub success_rate: f64,
    /// Number of features changed (above tolerance).
    pub l0_changes: usize,
    /// `l0_changes / f`.
    pub l0_fraction: f64,
    /// Sum of absolute feature differences.
    pub l1_change: f64,
    pub rbo_mean: f64,
    pub rbo_min: f64,
}

/// Fraction of `group` whose top-k recommendations contain `item`, under the
/// same ranking rules as [`model::rank_items`].
pub fn success_rate(
    catalog: &ItemCatalog,
    ratings: &RatingStore,
    item: ItemId,
    group: &[UserId],
    k: usize,
    exclude_rated: bool,
) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let v = catalog.row_dense(item)?;
    let mut hits = 0usize;
    for &user in group {
        if exclude_rated && ratings.has_rated(user, item) {
            continue; // the item never appears in this user's list
        }
        let profile = model::build_profile(ratings, catalog, user)?;
        let (t, ti) = model::topk_threshold(catalog, &profile, k, item, exclude_rated, ratings)?;
        let score = model::score_item(&v, &profile)?;
        if model::beats(score, item, t, ti) {
            hits += 1;
        }
    }
    Ok(hits as f64 / group.len() as f64)
}

/// `(l0, l1)` difference between two feature vectors. `l0` counts entries
/// whose absolute difference exceeds `zero_tol`; `l1` sums all of them.
pub fn feature_delta(v_new: &[f64], v_old: &[f64], zero_tol: f64) -> Result<(usize, f64)> {
    if v_new.len() != v_old.len() {
        return Err(Error::DimensionMismatch {
            expected: v_old.len(),
            got: v_new.len(),
        });
    }
    let mut l0 = 0usize;
    let mut l1 = 0.0f64;
    for (a, b) in v_new.iter().zip(v_old) {
        let d = (a - b).abs();
        if d > zero_tol {
            l0 += 1;
        }
        l1 += d;
    }
    Ok((l0, l1))
}

/// Truncated rank-biased overlap between two ranked lists.
///
/// Evaluated to depth `d = min(|a|, |b|, depth)`:
/// `RBO = (1 - p) * sum_{k=1..d} p^(k-1) * |a[:k] n b[:k]| / k`.
/// Identical prefixes of length `d` give `1 - p^d`; disjoint lists give 0.
pub fn rbo<T: Eq + Hash>(a: &[T], b: &[T], p: f64, depth: Option<usize>) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "rbo persistence must be in (0, 1), got {p}"
        )));
    }
    let d = a.len().min(b.len()).min(depth.unwrap_or(usize::MAX));
    let mut seen_a: HashSet<&T> = HashSet::with_capacity(d);
    let mut seen_b: HashSet<&T> = HashSet::with_capacity(d);
    let mut overlap = 0usize;
    let mut sum = 0.0f64;
    let mut weight = 1.0f64; // p^(k-1)
    for k in 0..d {
        let (x, y) = (&a[k], &b[k]);
        if x == y {
            overlap += 1;
        } else {
            if seen_b.contains(x) {
                overlap += 1;
            }
            if seen_a.contains(y) {
                overlap += 1;
            }
        }
        if !seen_a.insert(x) || !seen_b.insert(y) {
            return Err(Error::DuplicateInList);
        }
        sum += weight * overlap as f64 / (k + 1) as f64;
        weight *= p;
    }
    Ok((1.0 - p) * sum)
}

/// Per-user RBO between pre- and post-recourse rankings, aggregated as
/// `(mean, min)`. The two snapshots must cover the same users.
pub fn side_effect_report(
    ranks_before: &BTreeMap<UserId, Vec<ItemId>>,
    ranks_after: &BTreeMap<UserId, Vec<ItemId>>,
    p: f64,
    depth: Option<usize>,
) -> Result<(f64, f64)> {
    if ranks_before.is_empty() {
        return Err(Error::EmptyGroup);
    }
    if ranks_before.len() != ranks_after.len()
        || ranks_before.keys().any(|u| !ranks_after.contains_key(u))
    {
        return Err(Error::UserSetMismatch);
    }
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    for (user, before) in ranks_before {
        let after = &ranks_after[user];
        let score = rbo(before, after, p, depth)?;
        sum += score;
        min = min.min(score);
    }
    Ok((sum / ranks_before.len() as f64, min))
}
