use ranklift::data::{generate_synthetic, group_users, GroupingSpec, SynthConfig};
use ranklift::harness::select_item_at_rank;
use ranklift::metrics::{feature_delta, rbo, DEFAULT_ZERO_TOL};
use ranklift::model::{build_profile, rank_items};
use ranklift::recourse::{compute_recourse, RecourseConfig, RecourseRequest};

fn main() {
    let mut cfg = SynthConfig::default();
    let mut lane_seed = 1u64;
    let mut probe: Option<(usize, usize)> = None;
    for arg in std::env::args().skip(1) {
        let (key, val) = arg.split_once('=').expect("expected key=val");
        match key {
            "probe" => {
                let (g, r) = val.split_once(',').unwrap();
                probe = Some((g.parse().unwrap(), r.parse().unwrap()));
                continue;
            }
            "ns" => cfg.n_strong_features = val.parse().unwrap(),
            "sdens" => cfg.strong_feature_density = val.parse().unwrap(),
            "sfloor" => cfg.strong_value_floor = val.parse().unwrap(),
            "wscale" => cfg.weak_feature_scale = val.parse().unwrap(),
            "wdens" => cfg.feature_density = val.parse().unwrap(),
            "nn" => cfg.n_niche_features = val.parse().unwrap(),
            "nscale" => cfg.niche_feature_scale = val.parse().unwrap(),
            "q" => cfg.niche_pop_quantile = val.parse().unwrap(),
            "disco" => cfg.discovery_ratings = val.parse().unwrap(),
            "skew" => cfg.item_popularity_skew = val.parse().unwrap(),
            "rlo" => cfg.rating_range.0 = val.parse().unwrap(),
            "bias" => cfg.rating_popularity_bias = val.parse().unwrap(),
            "seed" => cfg.seed = val.parse().unwrap(),
            "lseed" => lane_seed = val.parse().unwrap(),
            other => panic!("unknown key {other}"),
        }
    }
    match probe {
        Some((g, r)) => probe_lane(cfg, lane_seed, g, r),
        None => sweep(cfg, lane_seed),
    }
}

fn probe_lane(cfg: SynthConfig, lane_seed: u64, g: usize, rank: usize) {
    let data = generate_synthetic(&cfg).unwrap();
    let groups = group_users(&data.ratings, None, &GroupingSpec::default()).unwrap();
    let group = &groups[g];
    let item = select_item_at_rank(&data.catalog, &data.ratings, group, rank, 10, 0.01, true)
        .unwrap();
    println!("probe g{g} r{rank}: item={}", item.0);
    let ns = cfg.n_strong_features;
    let mut results = Vec::new();
    for fraction in [0.2f64, 1.0] {
        let request = RecourseRequest {
            item,
            target_group: group.clone(),
            config: RecourseConfig {
                sample_fraction: fraction,
                rng_seed: cell_seed(lane_seed, g, rank),
                ..RecourseConfig::default()
            },
        };
        results.push(compute_recourse(&data.catalog, &data.ratings, &request).unwrap());
    }
    let r8 = &results[0];
    let post8 = data.catalog.with_row_replaced(item, &r8.v_new).unwrap();
    let postc = data
        .catalog
        .with_row_replaced(item, &r8.v_converged)
        .unwrap();

    let mut eligible: Vec<_> = group
        .iter()
        .copied()
        .filter(|&u| !data.ratings.has_rated(u, item))
        .collect();
    let m = ((0.2 * eligible.len() as f64).ceil() as usize).clamp(1, eligible.len());
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cell_seed(lane_seed, g, rank));
    eligible.shuffle(&mut rng);
    let sampled: std::collections::BTreeSet<_> = eligible[..m].iter().copied().collect();

    println!(
        "m8: iters={} l0(post)={} succ {:.3} | f1: iters={} succ {:.3}",
        r8.iterations(),
        r8.changed_indices.len(),
        r8.success_rate_full,
        results[1].iterations(),
        results[1].success_rate_full,
    );
    for &u in group {
        if data.ratings.has_rated(u, item) {
            continue;
        }
        let p = build_profile(&data.ratings, &data.catalog, u).unwrap();
        let dense: &[f64] = &p.w.0;
        let w_head: f64 = dense[..ns].iter().sum();
        let pre = rank_items(&data.catalog, &p, true, &data.ratings).unwrap();
        let bar_item = pre[9];
        let bar_row = data.catalog.row_dense(bar_item).unwrap().0;
        let bar: f64 = bar_row.iter().zip(dense).map(|(a, b)| a * b).sum();
        let bar_head: f64 = bar_row[..ns].iter().zip(dense).map(|(a, b)| a * b).sum();
        let t_row = data.catalog.row_dense(item).unwrap().0;
        let s_t: f64 = t_row.iter().zip(dense).map(|(a, b)| a * b).sum();
        let rank_in = |cat: &ranklift::model::ItemCatalog| {
            let post = rank_items(cat, &p, true, &data.ratings).unwrap();
            post.iter().position(|&i| i == item).unwrap() + 1
        };
        let m8_rank = rank_in(&post8);
        println!(
            "u{:3} n={:3} w_head={:8.2} bar={:8.2} bar_head_frac={:.2} bar_item={:3} req_rel_gap={:7.4} m8_rank={:3} conv_rank={:3}{}{}",
            u.0,
            data.ratings.ratings(u).unwrap().len(),
            w_head,
            bar,
            bar_head / bar,
            bar_item.0,
            (bar - s_t) / bar,
            m8_rank,
            rank_in(&postc),
            if sampled.contains(&u) { " S" } else { "" },
            if m8_rank <= 10 { "" } else { "  MISS" },
        );
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn cell_seed(base: u64, group: usize, rank: usize) -> u64 {
    let mut s = splitmix(base);
    s = splitmix(s ^ group as u64);
    splitmix(s ^ rank as u64)
}

fn mean_rank(
    data: &ranklift::data::Dataset,
    group: &[ranklift::model::UserId],
    item: ranklift::model::ItemId,
) -> f64 {
    let mut sum = 0usize;
    let mut n = 0usize;
    for &u in group {
        let p = build_profile(&data.ratings, &data.catalog, u).unwrap();
        let ranking = rank_items(&data.catalog, &p, true, &data.ratings).unwrap();
        if let Some(pos) = ranking.iter().position(|&i| i == item) {
            sum += pos + 1;
            n += 1;
        }
    }
    sum as f64 / n as f64
}

fn sweep(cfg: SynthConfig, lane_seed: u64) {
    println!(
        "=== ns={} nn={} nscale={} q={} disco={} wscale={} skew={} ratings={:?} bias={} seed={} lseed={} ===",
        cfg.n_strong_features,
        cfg.n_niche_features,
        cfg.niche_feature_scale,
        cfg.niche_pop_quantile,
        cfg.discovery_ratings,
        cfg.weak_feature_scale,
        cfg.item_popularity_skew,
        cfg.rating_range,
        cfg.rating_popularity_bias,
        cfg.seed,
        lane_seed
    );
    let data = generate_synthetic(&cfg).unwrap();
    let groups = group_users(&data.ratings, None, &GroupingSpec::default()).unwrap();
    for (g, group) in groups.iter().enumerate() {
        for rank in [11usize, 21, 51, 101] {
            let item = match select_item_at_rank(
                &data.catalog,
                &data.ratings,
                group,
                rank,
                10,
                0.01,
                true,
            ) {
                Ok(i) => i,
                Err(e) => {
                    println!("g{g} r{rank}: select failed: {e}");
                    continue;
                }
            };
            let n_eval = group
                .iter()
                .filter(|&&u| !data.ratings.has_rated(u, item))
                .count();
            println!(
                "g{g} r{rank}: selected item={} achieved_mean_rank={:.1} eval={n_eval}",
                item.0,
                mean_rank(&data, group, item)
            );
            for fraction in [0.025f64, 0.05, 0.1, 0.2, 1.0] {
                let request = RecourseRequest {
                    item,
                    target_group: group.clone(),
                    config: RecourseConfig {
                        sample_fraction: fraction,
                        rng_seed: cell_seed(lane_seed, g, rank),
                        ..RecourseConfig::default()
                    },
                };
                let r = match compute_recourse(&data.catalog, &data.ratings, &request) {
                    Ok(r) => r,
                    Err(e) => {
                        println!("g{g} r{rank} f{fraction}: failed: {e}");
                        continue;
                    }
                };
                let v_orig = data.catalog.row_dense(item).unwrap();
                let (l0_post, _) =
                    feature_delta(r.v_new.as_slice(), v_orig.as_slice(), DEFAULT_ZERO_TOL)
                        .unwrap();
                let (l0_pre, _) = feature_delta(
                    r.v_converged.as_slice(),
                    v_orig.as_slice(),
                    DEFAULT_ZERO_TOL,
                )
                .unwrap();

                let mut evaluated = group.clone();
                evaluated.retain(|&u| !data.ratings.has_rated(u, item));
                let post_catalog = data.catalog.with_row_replaced(item, &r.v_new).unwrap();
                let mut rbo_sum = 0.0;
                let mut rbo_min = f64::INFINITY;
                let mut min_rank = usize::MAX;
                let mut max_rank = 0usize;
                for &u in &evaluated {
                    let p = build_profile(&data.ratings, &data.catalog, u).unwrap();
                    let pre = rank_items(&data.catalog, &p, true, &data.ratings).unwrap();
                    let post = rank_items(&post_catalog, &p, true, &data.ratings).unwrap();
                    let v = rbo(&pre, &post, 0.5, None).unwrap();
                    rbo_sum += v;
                    rbo_min = rbo_min.min(v);
                    let pos = post.iter().position(|&i| i == item).unwrap() + 1;
                    min_rank = min_rank.min(pos);
                    max_rank = max_rank.max(pos);
                }
                let head_kept = r
                    .changed_indices
                    .iter()
                    .filter(|&&i| i < cfg.n_strong_features)
                    .count();
                println!(
                    "g{g} r{rank} f{fraction}: iters={} conv_s={:.2} succ={:.3} l0 {}->{} (head {}) rbo {:.4}/{:.4} land {}..{}",
                    r.iterations(),
                    r.success_rate_sample_converged,
                    r.success_rate_full,
                    l0_pre,
                    l0_post,
                    head_kept,
                    rbo_sum / evaluated.len() as f64,
                    rbo_min,
                    min_rank,
                    max_rank
                );
            }
        }
    }
}
