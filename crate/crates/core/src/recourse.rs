//! Recourse generation: subgradient descent on the L1-penalized exposure
//! loss with an active-set refresh each iteration, followed by an iterative
//! hard-thresholding pass that reverts the smallest feature changes while
//! the sample success rate stays above a configured floor.

use crate::error::{Error, Result};
use crate::model::{
    self, beats, FeatureVector, ItemCatalog, ItemId, RatingStore, UserId, UserProfile,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Relative loss change below which an iteration counts as stalled.
const PLATEAU_REL_TOL: f64 = 1e-9;
/// Consecutive stalled iterations after which descent stops.
const PLATEAU_PATIENCE: usize = 10;

/// Tunables for one recourse computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecourseConfig {
    /// Desired rank bound: the item should enter the top-k.
    pub k: usize,
    /// L1 penalty weight on the feature change.
    pub lambda: f64,
    /// Gradient step size.
    pub learning_rate: f64,
    /// Gradient-descent iteration cap.
    pub max_iterations: usize,
    /// Maximum fraction of the converged success rate that hard
    /// thresholding may give back.
    pub iht_success_loss: f64,
    /// Features reverted per hard-thresholding step.
    pub iht_chunk: usize,
    /// Fraction of the target group the optimizer sees.
    pub sample_fraction: f64,
    /// Seed for the sampling draw.
    pub rng_seed: u64,
    /// Optional hard cap on the number of changed features, enforced after
    /// the success-loss rule (the result is flagged when this forces extra
    /// reverts).
    pub max_changes: Option<usize>,
    /// Skip items a user has already rated when ranking for that user, and
    /// drop users who rated the recourse item from the target group.
    pub exclude_rated: bool,
    /// Scale each step by the inverse max-norm of the aggregate profile,
    /// making the step size robust to dataset scale.
    pub normalize_step: bool,
}

impl Default for RecourseConfig {
    fn default() -> Self {
        RecourseConfig {
            k: 10,
            lambda: 0.1,
            learning_rate: 0.01,
            max_iterations: 500,
            iht_success_loss: 0.20,
            iht_chunk: 1,
            sample_fraction: 1.0,
            rng_seed: 0,
            max_changes: None,
            exclude_rated: true,
            normalize_step: true,
        }
    }
}

impl RecourseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig("lambda must be non-negative".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.iht_success_loss) {
            return Err(Error::InvalidConfig(
                "iht_success_loss must be in [0, 1]".into(),
            ));
        }
        if self.iht_chunk == 0 {
            return Err(Error::InvalidConfig("iht_chunk must be positive".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "sample_fraction must be in (0, 1]".into(),
            ));
        }
        if self.max_changes == Some(0) {
            return Err(Error::InvalidConfig("max_changes must be positive".into()));
        }
        Ok(())
    }
}

/// What to compute recourse for: item `a`, the target user group, and the knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecourseRequest {
    pub item: ItemId,
    pub target_group: Vec<UserId>,
    pub config: RecourseConfig,
}

/// One gradient-descent iteration, for diagnostics only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Penalized loss at the start of the iteration.
    pub loss: f64,
    /// Unsatisfied sampled users after the step.
    pub active_set_size: usize,
    /// Satisfied sampled users after the step.
    pub satisfied_count: usize,
}

/// Outcome of [`compute_recourse`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecourseResult {
    /// Final features for the item, after hard thresholding.
    pub v_new: FeatureVector,
    /// Features at gradient-descent convergence, before hard thresholding.
    pub v_converged: FeatureVector,
    /// Success over the whole (preprocessed) target group at `v_new`.
    pub success_rate_full: f64,
    /// Success over the optimized sample at `v_new`.
    pub success_rate_sample: f64,
    /// Success over the optimized sample at `v_converged`.
    pub success_rate_sample_converged: f64,
    /// Success over the whole group before any change, for reference.
    pub baseline_success_full: f64,
    /// Feature indices where `v_new` differs from the original row.
    pub changed_indices: Vec<usize>,
    /// The users the optimizer saw: a sorted, deterministic subset of the
    /// preprocessed target group.
    pub sampled_users: Vec<UserId>,
    /// Users dropped from the group because they already rated the item.
    pub excluded_raters: usize,
    /// True when `max_changes` forced reverts past the success-loss rule.
    pub budget_forced: bool,
    pub trace: Vec<TraceEntry>,
}

impl RecourseResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Penalized loss and subgradient at `v`:
///
/// `loss = -sum_u <v, w_u> + lambda * |v - v_orig|_1`
/// `grad = -sum_u w_u + lambda * sign(v - v_orig)`, with `sign(0) = 0`,
/// then zeroed at immutable feature indices.
pub fn loss_and_gradient(
    v: &FeatureVector,
    v_orig: &FeatureVector,
    active: &[&UserProfile],
    lambda: f64,
    mutable: &[bool],
) -> Result<(f64, FeatureVector)> {
    let f = v.len();
    if v_orig.len() != f || mutable.len() != f {
        return Err(Error::DimensionMismatch {
            expected: f,
            got: if v_orig.len() != f {
                v_orig.len()
            } else {
                mutable.len()
            },
        });
    }
    let mut agg = vec![0.0; f];
    for profile in active {
        if profile.w.len() != f {
            return Err(Error::DimensionMismatch {
                expected: f,
                got: profile.w.len(),
            });
        }
        for (a, w) in agg.iter_mut().zip(profile.w.as_slice()) {
            *a += w;
        }
    }
    Ok(loss_grad_from_aggregate(
        v.as_slice(),
        v_orig.as_slice(),
        &agg,
        lambda,
        mutable,
    ))
}

fn loss_grad_from_aggregate(
    v: &[f64],
    v_orig: &[f64],
    agg: &[f64],
    lambda: f64,
    mutable: &[bool],
) -> (f64, FeatureVector) {
    let mut smooth = 0.0;
    let mut l1 = 0.0;
    let mut grad = vec![0.0; v.len()];
    for i in 0..v.len() {
        smooth -= v[i] * agg[i];
        let delta = v[i] - v_orig[i];
        l1 += delta.abs();
        if mutable[i] {
            let sign = if delta > 0.0 {
                1.0
            } else if delta < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad[i] = -agg[i] + lambda * sign;
        }
    }
    (smooth + lambda * l1, FeatureVector(grad))
}

/// Reverts the smallest feature changes one chunk at a time, stopping when
/// the sample success rate would fall below
/// `(1 - iht_success_loss) * success(v_conv)`. With `max_changes` set,
/// reverting then continues regardless until the budget holds; the second
/// return value reports whether that forced pass ran.
pub fn hard_threshold<F>(
    v_conv: FeatureVector,
    v_orig: &FeatureVector,
    mut evaluate_success: F,
    config: &RecourseConfig,
) -> (FeatureVector, bool)
where
    F: FnMut(&FeatureVector) -> f64,
{
    let mut changed: Vec<usize> = (0..v_conv.len())
        .filter(|&i| v_conv[i] != v_orig[i])
        .collect();
    if changed.is_empty() {
        return (v_conv, false);
    }
    // Deltas are fixed once descent ends, so one ascending sort gives the
    // revert order; ties broken by index.
    changed.sort_by(|&a, &b| {
        let da = (v_conv[a] - v_orig[a]).abs();
        let db = (v_conv[b] - v_orig[b]).abs();
        da.total_cmp(&db).then(a.cmp(&b))
    });

    let floor = (1.0 - config.iht_success_loss) * evaluate_success(&v_conv);
    let mut v = v_conv;
    let mut reverted = 0usize;
    while reverted < changed.len() {
        let chunk = &changed[reverted..(reverted + config.iht_chunk).min(changed.len())];
        let saved: Vec<f64> = chunk.iter().map(|&i| v[i]).collect();
        for &i in chunk {
            v.0[i] = v_orig[i];
        }
        if evaluate_success(&v) < floor {
            for (&i, &old) in chunk.iter().zip(&saved) {
                v.0[i] = old;
            }
            break;
        }
        reverted += chunk.len();
    }

    let mut budget_forced = false;
    if let Some(budget) = config.max_changes {
        while changed.len() - reverted > budget {
            let i = changed[reverted];
            v.0[i] = v_orig[i];
            reverted += 1;
            budget_forced = true;
        }
    }
    (v, budget_forced)
}

/// Runs the full pipeline for one request: sample the target group, descend
/// the penalized loss over the still-unsatisfied sampled users, hard
/// threshold the converged change, then evaluate success over the entire
/// group.
pub fn compute_recourse(
    catalog: &ItemCatalog,
    ratings: &RatingStore,
    request: &RecourseRequest,
) -> Result<RecourseResult> {
    let cfg = &request.config;
    cfg.validate()?;
    let item = request.item;
    if !catalog.contains(item) {
        return Err(Error::UnknownItem(item));
    }

    // Preprocess the group: dedup, validate, drop users who already rated
    // the item (their lists can never contain it when exclusion is on).
    let mut group: Vec<UserId> = request.target_group.clone();
    group.sort();
    group.dedup();
    for &u in &group {
        if !ratings.contains(u) {
            return Err(Error::UnknownUser(u));
        }
    }
    let before = group.len();
    if cfg.exclude_rated {
        group.retain(|&u| !ratings.has_rated(u, item));
    }
    let excluded_raters = before - group.len();
    if group.is_empty() {
        return Err(Error::EmptyGroup);
    }

    // Sample the users the optimizer will see. Taking a prefix of a seeded
    // shuffle means that for a fixed seed, a larger fraction optimizes a
    // superset of the users a smaller fraction does.
    let m = ((cfg.sample_fraction * group.len() as f64).ceil() as usize).clamp(1, group.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<UserId> = group.clone();
    order.shuffle(&mut rng);
    let mut sampled: Vec<UserId> = order[..m].to_vec();
    sampled.sort();

    let profiles: Vec<UserProfile> = sampled
        .iter()
        .map(|&u| model::build_profile(ratings, catalog, u))
        .collect::<Result<_>>()?;
    let thresholds: Vec<(f64, ItemId)> = profiles
        .iter()
        .map(|p| model::topk_threshold(catalog, p, cfg.k, item, cfg.exclude_rated, ratings))
        .collect::<Result<_>>()?;

    let v_orig = catalog.row_dense(item)?;
    let mutable = catalog.mutable_mask();
    let satisfied = |v: &FeatureVector, idx: usize| -> bool {
        let score = profiles[idx].w.dot(v.as_slice()).unwrap_or(f64::NAN);
        beats(score, item, thresholds[idx].0, thresholds[idx].1)
    };
    let active_of = |v: &FeatureVector| -> Vec<usize> {
        (0..sampled.len()).filter(|&i| !satisfied(v, i)).collect()
    };

    let mut v = v_orig.clone();
    let mut active = active_of(&v);
    let mut agg: Vec<f64> = Vec::new();
    let mut agg_dirty = true;
    let mut trace = Vec::new();
    let mut prev_loss: Option<f64> = None;
    let mut stalled = 0usize;

    for iteration in 1..=cfg.max_iterations {
        if active.is_empty() {
            break;
        }
        if agg_dirty {
            agg = vec![0.0; catalog.n_features()];
            for &idx in &active {
                for (a, w) in agg.iter_mut().zip(profiles[idx].w.as_slice()) {
                    *a += w;
                }
            }
            agg_dirty = false;
        }
        let (loss, grad) =
            loss_grad_from_aggregate(v.as_slice(), v_orig.as_slice(), &agg, cfg.lambda, mutable);
        if !loss.is_finite() {
            return Err(Error::NumericFailure { iteration });
        }
        let step = if cfg.normalize_step {
            let inf = agg.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            cfg.learning_rate / (inf + 1e-12)
        } else {
            cfg.learning_rate
        };
        for (vi, gi) in v.0.iter_mut().zip(grad.as_slice()) {
            *vi -= step * gi;
        }
        catalog.clamp_to_bounds(&mut v.0);

        let next_active = active_of(&v);
        if next_active != active {
            active = next_active;
            agg_dirty = true;
        }
        trace.push(TraceEntry {
            iteration,
            loss,
            active_set_size: active.len(),
            satisfied_count: sampled.len() - active.len(),
        });

        if let Some(prev) = prev_loss {
            if (loss - prev).abs() <= PLATEAU_REL_TOL * prev.abs().max(1.0) {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        prev_loss = Some(loss);
        if stalled >= PLATEAU_PATIENCE {
            break;
        }
    }

    let v_converged = v.clone();
    let sample_success = |cand: &FeatureVector| -> f64 {
        let hits = (0..sampled.len()).filter(|&i| satisfied(cand, i)).count();
        hits as f64 / sampled.len() as f64
    };
    let success_rate_sample_converged = sample_success(&v_converged);

    let (v_new, budget_forced) =
        hard_threshold(v_converged.clone(), &v_orig, &sample_success, cfg);
    let success_rate_sample = sample_success(&v_new);
    let changed_indices: Vec<usize> = (0..v_new.len())
        .filter(|&i| v_new[i] != v_orig[i])
        .collect();

    // Full-group evaluation: each user's competitors are fixed, so one
    // threshold per user decides membership.
    let full_success_at = |cand: &FeatureVector| -> Result<f64> {
        let mut hits = 0usize;
        for &u in &group {
            let profile = model::build_profile(ratings, catalog, u)?;
            let (t, ti) =
                model::topk_threshold(catalog, &profile, cfg.k, item, cfg.exclude_rated, ratings)?;
            let score = profile.w.dot(cand.as_slice())?;
            if beats(score, item, t, ti) {
                hits += 1;
            }
        }
        Ok(hits as f64 / group.len() as f64)
    };
    let success_rate_full = full_success_at(&v_new)?;
    let baseline_success_full = full_success_at(&v_orig)?;

    Ok(RecourseResult {
        v_new,
        v_converged,
        success_rate_full,
        success_rate_sample,
        success_rate_sample_converged,
        baseline_success_full,
        changed_indices,
        sampled_users: sampled,
        excluded_raters,
        budget_forced,
        trace,
    })
}
