//! Reproducible synthetic datasets for tests and benchmarks.

use super::{Dataset, FeatureInfo, FeatureKind, IdMap, UserMetadata};
use crate::error::{Error, Result};
use crate::model::{ItemCatalog, ItemId, RatingStore, SparseRow, UserId};
use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_features: usize,
    /// Probability that a given (user, item) pair carries a rating.
    pub density: f64,
    /// Probability that a weak feature of an item is nonzero.
    pub feature_density: f64,
    /// The first `n_strong_features` dimensions are drawn at full scale;
    /// dimensions past the strong and niche blocks are scaled down by
    /// `weak_feature_scale`. Mimics the shape of bag-of-words catalogs,
    /// where a few common tokens dominate.
    pub n_strong_features: usize,
    /// Presence probability for the strong dimensions.
    pub strong_feature_density: f64,
    /// Lower bound of the uniform value draw for strong dimensions, as a
    /// fraction of the item's popularity scale. A high floor keeps every
    /// item's strong profile comparable, so users agree closely on the
    /// relative gaps between items.
    pub strong_value_floor: f64,
    /// Magnitude multiplier for the weak dimensions, in (0, 1].
    pub weak_feature_scale: f64,
    /// Dimensions after the strong block reserved for niche attributes.
    /// Each item in the low-popularity band carries exactly one of them,
    /// so these features are distinctive of obscure items rather than
    /// spread across the whole catalog.
    pub n_niche_features: usize,
    /// Value scale for niche attributes. Niche values are not popularity
    /// scaled, and the scale may exceed 1: like idf-weighted tokens, an
    /// obscure item's distinctive attribute can outweigh the common ones.
    pub niche_feature_scale: f64,
    /// Popularity quantile below which an item counts as niche. 0 disables
    /// the niche block entirely.
    pub niche_pop_quantile: f64,
    /// Guaranteed ratings per user on uniformly drawn niche items, rated at
    /// the top of `rating_range`. Observed catalogs show this long tail:
    /// almost every account has a few obscure favorites.
    pub discovery_ratings: usize,
    /// Per-item popularity skew: each item's features are scaled by
    /// `U(0,1)^skew`, concentrating high scores on a shared head of
    /// popular items. 0.0 means all items draw from the same scale.
    pub item_popularity_skew: f64,
    /// How strongly rating probability follows item popularity. 0.0 rates
    /// uniformly; higher exponents concentrate everyone's ratings on the
    /// popular head, as observed rating data does. The expected organic
    /// rating count per user stays `density * n_items` either way;
    /// discovery ratings come on top.
    pub rating_popularity_bias: f64,
    /// Ratings are drawn uniformly from this closed interval.
    pub rating_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 200,
            n_items: 300,
            n_features: 50,
            density: 0.05,
            feature_density: 0.3,
            n_strong_features: 1,
            strong_feature_density: 1.0,
            strong_value_floor: 0.9,
            weak_feature_scale: 0.03,
            n_niche_features: 45,
            niche_feature_scale: 1.2,
            niche_pop_quantile: 0.25,
            discovery_ratings: 1,
            item_popularity_skew: 2.0,
            rating_popularity_bias: 2.0,
            rating_range: (3.0, 5.0),
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.n_features == 0 {
            return Err(Error::InvalidConfig(
                "n_users, n_items, and n_features must be positive".into(),
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidConfig("density must be in (0, 1]".into()));
        }
        if !(self.feature_density > 0.0 && self.feature_density <= 1.0) {
            return Err(Error::InvalidConfig(
                "feature_density must be in (0, 1]".into(),
            ));
        }
        if self.n_strong_features + self.n_niche_features > self.n_features {
            return Err(Error::InvalidConfig(
                "n_strong_features + n_niche_features cannot exceed n_features".into(),
            ));
        }
        if !(self.strong_feature_density > 0.0 && self.strong_feature_density <= 1.0) {
            return Err(Error::InvalidConfig(
                "strong_feature_density must be in (0, 1]".into(),
            ));
        }
        if !(self.weak_feature_scale > 0.0 && self.weak_feature_scale <= 1.0) {
            return Err(Error::InvalidConfig(
                "weak_feature_scale must be in (0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.strong_value_floor) {
            return Err(Error::InvalidConfig(
                "strong_value_floor must be in [0, 1)".into(),
            ));
        }
        if !(self.niche_feature_scale > 0.0 && self.niche_feature_scale.is_finite()) {
            return Err(Error::InvalidConfig(
                "niche_feature_scale must be positive and finite".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.niche_pop_quantile) {
            return Err(Error::InvalidConfig(
                "niche_pop_quantile must be in [0, 1]".into(),
            ));
        }
        if self.discovery_ratings > self.n_items {
            return Err(Error::InvalidConfig(
                "discovery_ratings cannot exceed n_items".into(),
            ));
        }
        if !(self.item_popularity_skew >= 0.0 && self.item_popularity_skew.is_finite()) {
            return Err(Error::InvalidConfig(
                "item_popularity_skew must be non-negative".into(),
            ));
        }
        if !(self.rating_popularity_bias >= 0.0 && self.rating_popularity_bias.is_finite()) {
            return Err(Error::InvalidConfig(
                "rating_popularity_bias must be non-negative".into(),
            ));
        }
        let (lo, hi) = self.rating_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(
                "rating_range must be a finite (lo, hi) with lo <= hi".into(),
            ));
        }
        Ok(())
    }
}

/// Generates a dataset with sparse uniform item features in [0, 1), ratings
/// drawn per (user, item) pair at the configured density, and a synthetic
/// `age` metadata field per user. The same config always yields the same
/// dataset: features are drawn first, then ratings, then ages.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let popularity: Vec<f64> = (0..config.n_items)
        .map(|_| rng.gen_range(0.0f64..1.0).powf(config.item_popularity_skew))
        .collect();

    let niche_cutoff = if config.n_niche_features > 0 && config.niche_pop_quantile > 0.0 {
        let mut sorted = popularity.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let idx = ((config.n_items as f64 * config.niche_pop_quantile) as usize)
            .min(config.n_items - 1);
        sorted[idx]
    } else {
        0.0
    };
    let niche_lo = config.n_strong_features;
    let niche_hi = config.n_strong_features + config.n_niche_features;

    let mut rows = Vec::with_capacity(config.n_items);
    let mut niche_items = Vec::new();
    for (i, &pop) in popularity.iter().enumerate() {
        let niche_coord = if pop < niche_cutoff {
            niche_items.push(i);
            Some(niche_lo + rng.gen_range(0..config.n_niche_features))
        } else {
            None
        };
        let mut pairs = Vec::new();
        for j in 0..config.n_features {
            if (niche_lo..niche_hi).contains(&j) {
                if niche_coord == Some(j) {
                    let v = config.niche_feature_scale * rng.gen_range(0.7..1.0);
                    pairs.push((j as u32, v));
                }
                continue;
            }
            let (density, scale, floor) = if j < config.n_strong_features {
                (config.strong_feature_density, 1.0, config.strong_value_floor)
            } else {
                (config.feature_density, config.weak_feature_scale, 0.0)
            };
            if rng.gen_bool(density) {
                let u = floor + (1.0 - floor) * rng.gen_range(0.0..1.0);
                pairs.push((j as u32, pop * scale * u));
            }
        }
        rows.push(SparseRow::from_pairs(pairs));
    }
    let catalog = ItemCatalog::new(
        config.n_features,
        rows,
        vec![true; config.n_features],
        Vec::new(),
    )?;

    let weights: Vec<f64> = popularity
        .iter()
        .map(|p| p.powf(config.rating_popularity_bias))
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    let rate_prob: Vec<f64> = weights
        .iter()
        .map(|&w| {
            if weight_sum > 0.0 {
                (config.density * config.n_items as f64 * w / weight_sum).min(1.0)
            } else {
                config.density
            }
        })
        .collect();

    let (lo, hi) = config.rating_range;
    let mut triples = Vec::new();
    for u in 0..config.n_users {
        let mut rated = BTreeSet::new();
        for i in 0..config.n_items {
            if rng.gen_bool(rate_prob[i]) {
                let rating = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
                triples.push((UserId(u as u32), ItemId(i as u32), rating));
                rated.insert(i);
            }
        }
        if config.discovery_ratings > 0 && !niche_items.is_empty() {
            let want = config.discovery_ratings.min(niche_items.len());
            let candidates = index::sample(
                &mut rng,
                niche_items.len(),
                (want + 8).min(niche_items.len()),
            );
            let mut picked = 0;
            for c in candidates.iter() {
                if picked == want {
                    break;
                }
                let item = niche_items[c];
                if rated.insert(item) {
                    triples.push((UserId(u as u32), ItemId(item as u32), hi));
                    picked += 1;
                }
            }
        }
    }
    let ratings = RatingStore::from_triples(config.n_users, triples)?;

    let mut users = IdMap::new();
    let mut user_metadata = UserMetadata::new();
    for u in 0..config.n_users {
        let name = format!("u{u}");
        users.insert_unique(&name)?;
        let age = rng.gen_range(18..80) as f64;
        user_metadata.insert(name, BTreeMap::from([("age".to_string(), age)]));
    }
    let mut items = IdMap::new();
    for i in 0..config.n_items {
        items.insert_unique(&format!("i{i}"))?;
    }
    let features = (0..config.n_features)
        .map(|j| FeatureInfo {
            source: "synthetic".to_string(),
            kind: FeatureKind::Numeric,
            token: Some(format!("f{j}")),
        })
        .collect();

    Ok(Dataset {
        catalog,
        ratings,
        items,
        users,
        features,
        user_metadata,
    })
}
