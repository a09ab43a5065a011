//! The four subcommands. Rating values are normalized inside the engine;
//! ranking columns are rescaled to the raw grade scale on the way out.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;

use rankforge_core::attack::{gen_love_hate, gen_random_spam, gen_reputation_attack};
use rankforge_core::attack::{AttackKind, AttackOutcome, AttackSpec};
use rankforge_core::bribery::{strategy_sweep, BribeMode, SweepOutcome, SweepStrategy};
use rankforge_core::cluster::{build_affinity, score_pair, AffinityPartition};
use rankforge_core::engine::{li_baseline_fixed_point, run_fixed_point, EngineState};
use rankforge_core::metrics::{robustness_tau, MetricsError};
use rankforge_core::multipartite::rank_multipartite;
use rankforge_core::synth::{gen_synthetic, SyntheticSpec};
use rankforge_core::{ItemId, RatingGraph};

use crate::config::{fmt6, fmt6_opt, header_block, write_output, CliError, RankMode, Settings};

fn ingest(input: &Path, settings: &Settings) -> Result<RatingGraph, CliError> {
    let (lo, hi) = settings.scale;
    RatingGraph::ingest(input, lo, hi)
        .map_err(|e| CliError::data(format!("{}: {e}", input.display())))
}

fn resolve_target(g: &RatingGraph, settings: &Settings) -> Result<(ItemId, String), CliError> {
    match &settings.target {
        Some(name) => {
            let id = g
                .item_id(name)
                .ok_or_else(|| CliError::data(format!("target item {name:?} not in input")))?;
            Ok((id, name.clone()))
        }
        None => {
            let id = g
                .popularity()
                .most_voted()
                .ok_or_else(|| CliError::data("input has no rated items"))?;
            Ok((id, g.item_name(id).to_owned()))
        }
    }
}

fn converged_or_exit3(state: &EngineState) -> Result<(), CliError> {
    if state.converged {
        Ok(())
    } else {
        Err(CliError::diverged(format!(
            "fixed point did not converge within {} iterations",
            state.iterations
        )))
    }
}

fn items_by_name(g: &RatingGraph) -> Vec<ItemId> {
    let mut ids: Vec<ItemId> = g.items().collect();
    ids.sort_by_key(|&i| g.item_name(i));
    ids
}

fn users_by_name(g: &RatingGraph) -> Vec<rankforge_core::UserId> {
    let mut ids: Vec<rankforge_core::UserId> = g.users().collect();
    ids.sort_by_key(|&u| g.user_name(u));
    ids
}

fn rankings_csv(g: &RatingGraph, rankings: &[Option<f64>], column: &str) -> String {
    let top = f64::from(g.scale().r_top);
    let mut body = format!("item_id,{column}\n");
    for i in items_by_name(g) {
        let scaled = rankings[i.0].map(|r| r * top);
        body.push_str(&format!("{},{}\n", g.item_name(i), fmt6_opt(scaled)));
    }
    body
}

fn reputations_csv(g: &RatingGraph, c: &[f64]) -> String {
    let mut body = String::from("user_id,reputation\n");
    for u in users_by_name(g) {
        body.push_str(&format!("{},{}\n", g.user_name(u), fmt6(c[u.0])));
    }
    body
}

fn similarity_csv(g: &RatingGraph, settings: &Settings) -> Result<String, CliError> {
    let params = settings.similarity_params();
    let mut pairs = BTreeSet::new();
    for i in g.items() {
        let raters = g.raters_of(i);
        for (k, &(u, _)) in raters.iter().enumerate() {
            for &(v, _) in &raters[k + 1..] {
                pairs.insert((u, v));
            }
        }
    }
    let mut rows: Vec<(String, String, f64)> = Vec::with_capacity(pairs.len());
    for (u, v) in pairs {
        let value = score_pair(g, settings.measure, &params, u, v)?;
        let (a, b) = (g.user_name(u), g.user_name(v));
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        rows.push((a.to_owned(), b.to_owned(), value));
    }
    rows.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
    let mut body = String::from("user_a,user_b,measure,value\n");
    for (a, b, value) in rows {
        body.push_str(&format!("{a},{b},{},{}\n", settings.measure, fmt6(value)));
    }
    Ok(body)
}

pub fn cmd_rank(input: &Path, settings: &Settings) -> Result<(), CliError> {
    let g = ingest(input, settings)?;
    let header = header_block("rank", &settings.pairs_rank(input));
    let out = &settings.out;
    if settings.baseline_li {
        if !(settings.lambda > 0.0 && settings.lambda < 1.0) {
            return Err(CliError::usage(format!(
                "baseline li needs lambda in ]0,1[, got {}",
                settings.lambda
            )));
        }
        let state = li_baseline_fixed_point(&g, settings.lambda, settings.epsilon, settings.max_iters);
        converged_or_exit3(&state)?;
        write_output(out, "rankings.csv", &header, &rankings_csv(&g, &state.rankings, "ranking"))?;
        write_output(out, "reputations.csv", &header, &reputations_csv(&g, &state.reputations))?;
    } else {
        let cfg = settings.engine_config();
        match settings.mode {
            RankMode::Bipartite => {
                let state = run_fixed_point(&g, &cfg, None)?;
                converged_or_exit3(&state)?;
                write_output(out, "rankings.csv", &header, &rankings_csv(&g, &state.rankings, "ranking"))?;
                write_output(out, "reputations.csv", &header, &reputations_csv(&g, &state.reputations))?;
            }
            RankMode::Multipartite => {
                let p = build_affinity(&g, settings.measure, &settings.similarity_params(), settings.alpha)?;
                let res = rank_multipartite(&g, &p, &cfg)?;
                if !res.all_converged() {
                    return Err(CliError::diverged(
                        "a component fixed point did not converge",
                    ));
                }
                let mut partition = String::from("user_id,component_id\n");
                for u in users_by_name(&g) {
                    let cid = p.component_of(u).expect("partition covers all users");
                    partition.push_str(&format!("{},{}\n", g.user_name(u), cid.0));
                }
                write_output(out, "partition.csv", &header, &partition)?;
                let top = f64::from(g.scale().r_top);
                let mut clusters = String::from("item_id,component_id,ranking\n");
                for i in items_by_name(&g) {
                    for cid in p.component_ids() {
                        if let Some(r) = res.cluster_ranking(cid, i) {
                            clusters.push_str(&format!(
                                "{},{},{}\n",
                                g.item_name(i),
                                cid.0,
                                fmt6(r * top)
                            ));
                        }
                    }
                }
                write_output(out, "cluster_rankings.csv", &header, &clusters)?;
                write_output(
                    out,
                    "display_rankings.csv",
                    &header,
                    &rankings_csv(&g, res.display(), "display_ranking"),
                )?;
                write_output(
                    out,
                    "reputations.csv",
                    &header,
                    &reputations_csv(&g, &res.merged_reputations(&p)),
                )?;
            }
        }
    }
    if settings.dump_similarity {
        write_output(out, "similarity.csv", &header, &similarity_csv(&g, settings)?)?;
    }
    Ok(())
}

/// Clean reference for one clustering threshold: the ranking vector the
/// attacked run is compared against.
struct CleanRef {
    display: Vec<Option<f64>>,
}

fn clean_reference(
    g: &RatingGraph,
    settings: &Settings,
    alpha: f64,
) -> Result<CleanRef, CliError> {
    let cfg = settings.engine_config();
    match settings.mode {
        RankMode::Bipartite => {
            let state = run_fixed_point(g, &cfg, None)?;
            converged_or_exit3(&state)?;
            Ok(CleanRef {
                display: state.rankings,
            })
        }
        RankMode::Multipartite => {
            let p = build_affinity(g, settings.measure, &settings.similarity_params(), alpha)?;
            let res = rank_multipartite(g, &p, &cfg)?;
            if !res.all_converged() {
                return Err(CliError::diverged(
                    "a component fixed point did not converge",
                ));
            }
            Ok(CleanRef {
                display: res.display().to_vec(),
            })
        }
    }
}

fn attacked_display(
    outcome: &AttackOutcome,
    settings: &Settings,
    alpha: f64,
) -> Result<Vec<Option<f64>>, CliError> {
    let cfg = settings.engine_config();
    match settings.mode {
        RankMode::Bipartite => {
            let state = run_fixed_point(&outcome.graph, &cfg, None)?;
            converged_or_exit3(&state)?;
            Ok(state.rankings)
        }
        RankMode::Multipartite => {
            // attackers are users too: recluster the poisoned graph
            let p = build_affinity(
                &outcome.graph,
                settings.measure,
                &settings.similarity_params(),
                alpha,
            )?;
            let res = rank_multipartite(&outcome.graph, &p, &cfg)?;
            if !res.all_converged() {
                return Err(CliError::diverged(
                    "a component fixed point did not converge",
                ));
            }
            Ok(res.display().to_vec())
        }
    }
}

pub fn cmd_attack_sweep(input: &Path, settings: &Settings) -> Result<(), CliError> {
    let g = ingest(input, settings)?;
    let (target, target_name) = resolve_target(&g, settings)?;
    let header = header_block("attack-sweep", &settings.pairs_attack(input, &target_name));
    let alphas = settings.effective_alpha_grid();
    let cleans: Vec<CleanRef> = alphas
        .iter()
        .map(|&a| clean_reference(&g, settings, a))
        .collect::<Result<_, _>>()?;
    let mut points: Vec<(usize, f64, usize)> = Vec::new();
    for (pi, &prop) in settings.proportions.iter().enumerate() {
        for ai in 0..alphas.len() {
            points.push((pi * alphas.len() + ai, prop, ai));
        }
    }
    let top = f64::from(g.scale().r_top);
    let mut rows: Vec<(f64, f64, f64, Option<f64>, usize)> = points
        .par_iter()
        .map(|&(idx, prop, ai)| {
            let alpha = alphas[ai];
            let seed = settings.seed.wrapping_add(idx as u64);
            let mut spec = match settings.attack {
                AttackKind::RandomSpam => AttackSpec::random_spam(prop, seed),
                AttackKind::LoveHate => {
                    AttackSpec::love_hate(target, settings.direction, prop, seed)
                }
                AttackKind::Reputation => {
                    AttackSpec::reputation(target, settings.direction, prop, seed)
                }
            };
            spec.filler_count = settings.filler_count;
            spec.poisson_lambda = settings.poisson_lambda;
            let outcome = match settings.attack {
                AttackKind::RandomSpam => gen_random_spam(&g, &spec)?,
                AttackKind::LoveHate => gen_love_hate(&g, &spec)?,
                AttackKind::Reputation => {
                    gen_reputation_attack(&g, &spec, &cleans[ai].display)?
                }
            };
            let attacked = attacked_display(&outcome, settings, alpha)?;
            let tau = match robustness_tau(&cleans[ai].display, &attacked) {
                Ok(t) => t,
                Err(MetricsError::Undefined | MetricsError::TooShort(_)) => f64::NAN,
                Err(e) => return Err(CliError::data(e.to_string())),
            };
            let target_ranking = attacked[target.0].map(|r| r * top);
            Ok((prop, alpha, tau, target_ranking, outcome.skipped_fillers))
        })
        .collect::<Result<_, CliError>>()?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let skipped: usize = rows.iter().map(|r| r.4).sum();
    if skipped > 0 {
        eprintln!("rankforge: skipped {skipped} unranked filler ratings across the sweep");
    }
    let mut body = String::from("proportion,alpha,tau,target_ranking\n");
    for (prop, alpha, tau, target_ranking, _) in rows {
        body.push_str(&format!(
            "{},{},{},{}\n",
            fmt6(prop),
            fmt6(alpha),
            fmt6(tau),
            fmt6_opt(target_ranking)
        ));
    }
    write_output(&settings.out, "sweep.csv", &header, &body)?;
    Ok(())
}

pub fn cmd_bribe(input: &Path, settings: &Settings) -> Result<(), CliError> {
    let g = ingest(input, settings)?;
    let (target, target_name) = resolve_target(&g, settings)?;
    let header = header_block("bribe", &settings.pairs_bribe(input, &target_name));
    let cfg = settings.engine_config();
    let bwa = run_fixed_point(&g, &cfg, None)?;
    converged_or_exit3(&bwa)?;
    let clustered: bool = settings
        .strategies
        .iter()
        .any(|s| matches!(s, SweepStrategy::RatersRandom | SweepStrategy::RatersByReputation));
    let mrs_base: Option<(AffinityPartition, Vec<f64>)> = if clustered {
        let p = build_affinity(&g, settings.measure, &settings.similarity_params(), settings.alpha)?;
        let res = rank_multipartite(&g, &p, &cfg)?;
        if !res.all_converged() {
            return Err(CliError::diverged(
                "a component fixed point did not converge",
            ));
        }
        let c = res.merged_reputations(&p);
        Some((p, c))
    } else {
        None
    };
    let mut initial_mrs: Option<f64> = None;
    let mut initial_bwa: Option<f64> = None;
    let mut rows: Vec<(String, &'static str, usize, String, f64, f64, f64, f64)> = Vec::new();
    let mut push = |out: &SweepOutcome, strategy: SweepStrategy, mode: &'static str| {
        for r in &out.rows {
            rows.push((
                strategy.to_string(),
                mode,
                r.step,
                g.user_name(r.user).to_owned(),
                r.rho,
                r.spent,
                r.wealth,
                r.profit,
            ));
        }
    };
    for &strategy in &settings.strategies {
        let k = SweepStrategy::ALL
            .iter()
            .position(|&s| s == strategy)
            .unwrap() as u64;
        let seed = settings.seed.wrapping_add(k);
        let out = strategy_sweep(
            &g,
            &bwa.reputations,
            target,
            strategy,
            BribeMode::Bipartite,
            settings.dynamic,
            &cfg,
            seed,
        )?;
        initial_bwa.get_or_insert(out.initial_wealth);
        push(&out, strategy, "bwa");
        if let (Some((p, c)), true) = (
            mrs_base.as_ref(),
            matches!(
                strategy,
                SweepStrategy::RatersRandom | SweepStrategy::RatersByReputation
            ),
        ) {
            let out = strategy_sweep(
                &g,
                c,
                target,
                strategy,
                BribeMode::Multipartite(p),
                settings.dynamic,
                &cfg,
                seed,
            )?;
            initial_mrs.get_or_insert(out.initial_wealth);
            push(&out, strategy, "mrs");
        }
    }
    rows.sort_by(|a, b| (&a.0, a.1, a.2).cmp(&(&b.0, b.1, b.2)));
    let mut header = header;
    if let Some(w) = initial_bwa {
        header.push_str(&format!("# initial_wealth_bwa={}\n", fmt6(w)));
    }
    if let Some(w) = initial_mrs {
        header.push_str(&format!("# initial_wealth_mrs={}\n", fmt6(w)));
    }
    let mut body = String::from("step,user_id,rho,spent_cumulative,wealth,profit,mode,strategy\n");
    for (strategy, mode, step, user, rho, spent, wealth, profit) in rows {
        body.push_str(&format!(
            "{step},{user},{},{},{},{},{mode},{strategy}\n",
            fmt6(rho),
            fmt6(spent),
            fmt6(wealth),
            fmt6(profit)
        ));
    }
    write_output(&settings.out, "bribe_sweep.csv", &header, &body)?;
    Ok(())
}

pub fn cmd_gen_synthetic(settings: &Settings) -> Result<(), CliError> {
    let mut spec = SyntheticSpec::new(
        settings.users,
        settings.items,
        settings.groups,
        settings.ratings_per_user,
    )
    .with_noise(settings.noise)
    .with_seed(settings.seed);
    if let Some(total) = settings.ratings_total {
        spec = spec.with_total(total);
    }
    let g = gen_synthetic(&spec)?;
    let header = header_block("gen-synthetic", &settings.pairs_synth());
    write_output(&settings.out, "synthetic.csv", &header, &g.to_csv_string())?;
    Ok(())
}
