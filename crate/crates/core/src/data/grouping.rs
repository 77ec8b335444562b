//! Partitioning users into equi-sized quantile groups.

use crate::error::{Error, Result};
use crate::model::{RatingStore, UserId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum GroupingStrategy {
    /// Order users by how many ratings they have.
    ActivityQuantile,
    /// Order users by a numeric metadata field such as age.
    MetadataQuantile { field: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingSpec {
    #[serde(flatten)]
    pub strategy: GroupingStrategy,
    #[serde(default = "default_n_groups")]
    pub n_groups: usize,
}

fn default_n_groups() -> usize {
    5
}

impl Default for GroupingSpec {
    fn default() -> Self {
        GroupingSpec {
            strategy: GroupingStrategy::ActivityQuantile,
            n_groups: default_n_groups(),
        }
    }
}

/// Splits all users into `n_groups` contiguous quantile groups, ordered by
/// activity or a metadata field (ties by user id). Sizes differ by at most
/// one; earlier groups absorb the remainder. Each returned group is sorted
/// by user id.
pub fn group_users(
    ratings: &RatingStore,
    metadata: Option<&BTreeMap<UserId, BTreeMap<String, f64>>>,
    spec: &GroupingSpec,
) -> Result<Vec<Vec<UserId>>> {
    if spec.n_groups == 0 {
        return Err(Error::InvalidConfig("n_groups must be positive".into()));
    }
    let n = ratings.n_users();
    if spec.n_groups > n {
        return Err(Error::InvalidConfig(format!(
            "n_groups ({}) exceeds user count ({n})",
            spec.n_groups
        )));
    }

    let mut keyed: Vec<(f64, UserId)> = match &spec.strategy {
        GroupingStrategy::ActivityQuantile => ratings
            .users()
            .map(|u| (ratings.rating_count(u) as f64, u))
            .collect(),
        GroupingStrategy::MetadataQuantile { field } => {
            let metadata = metadata.ok_or_else(|| Error::MissingMetadata(field.clone()))?;
            ratings
                .users()
                .map(|u| {
                    metadata
                        .get(&u)
                        .and_then(|fields| fields.get(field))
                        .map(|&v| (v, u))
                        .ok_or_else(|| Error::MissingMetadata(field.clone()))
                })
                .collect::<Result<_>>()?
        }
    };
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let base = n / spec.n_groups;
    let remainder = n % spec.n_groups;
    let mut groups = Vec::with_capacity(spec.n_groups);
    let mut start = 0;
    for g in 0..spec.n_groups {
        let size = base + usize::from(g < remainder);
        let mut group: Vec<UserId> = keyed[start..start + size].iter().map(|&(_, u)| u).collect();
        group.sort();
        groups.push(group);
        start += size;
    }
    Ok(groups)
}
