//! Bribery calculus: seller wealth, bribing strategies, closed-form profits
//! and greedy optimal bribes, in both the flat (BWA) and clustered (MRS)
//! ranking modes.
//!
//! Reputations stay frozen while a strategy plays out; rankings are re-derived
//! from the bribed ratings under those fixed weights. Profit is always
//! wealth(after) - spend - wealth(before). The dynamic sweep variant reruns
//! the full fixed point after every elementary bribe instead.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::cluster::{AffinityPartition, ClusterError, ComponentId};
use crate::engine::{ranking_step, run_fixed_point, EngineConfig, EngineError};
use crate::graph::{GraphBuilder, GraphError, ItemId, RatingGraph, UserId};
use crate::multipartite::{rank_multipartite, rank_multipartite_frozen};

/// Slack for rating caps and budget bounds, absorbing float dust from
/// normalized grid values like 1 - 0.7.
const CAP_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BriberyError {
    #[error("item {0} does not exist")]
    UnknownItem(ItemId),
    #[error("user {0} does not exist")]
    UnknownUser(UserId),
    #[error("allocation {rho} for user {user} must be finite and non-negative")]
    BadAllocation { user: UserId, rho: f64 },
    #[error("user {user} rated {rating}; allocation {rho} overshoots the maximum rating")]
    RaterCap { user: UserId, rating: f64, rho: f64 },
    #[error("allocation {rho} for non-rater {user} exceeds the maximum rating")]
    NonRaterCap { user: UserId, rho: f64 },
    #[error("item {0} has no ranking")]
    Unranked(ItemId),
    #[error("expected {expected} reputations, got {got}")]
    ReputationLength { expected: usize, got: usize },
    #[error("partition covers {partition_users} users but the graph has {graph_users}")]
    PartitionMismatch {
        partition_users: usize,
        graph_users: usize,
    },
    #[error("item {0} has no raters, profit forms are undefined")]
    NoRaters(ItemId),
    #[error("user {0} rated the target; use the rater form")]
    IsRater(UserId),
    #[error("user {0} did not rate the target; use the non-rater form")]
    NotRater(UserId),
    #[error("clustered closed forms cover single-user strategies, got {0} bribed users")]
    UnsupportedCompound(usize),
    #[error("exhaustive cross-cluster search capped at 10 candidates, got {0}")]
    TooManyCandidates(usize),
    #[error("bribing budget must be positive")]
    ZeroBudget,
    #[error("budget {budget} exceeds available wealth {wealth}")]
    BudgetExceedsWealth { budget: f64, wealth: f64 },
    #[error("reputation comparison needs raters on both sides, got {inside} inside and {outside} outside")]
    DegenerateSplit { inside: usize, outside: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Which wealth a seller optimizes: the flat ranking or the per-cluster one.
#[derive(Debug, Clone, Copy)]
pub enum BribeMode<'a> {
    Bipartite,
    Multipartite(&'a AffinityPartition),
}

/// Sparse per-user wealth allocations toward one item. A bribed rater moves
/// to R_ui + rho; a bribed non-rater rates rho.
#[derive(Debug, Clone, PartialEq)]
pub struct BribingStrategy {
    target: ItemId,
    allocations: BTreeMap<UserId, f64>,
}

impl BribingStrategy {
    pub fn new(target: ItemId) -> Self {
        Self {
            target,
            allocations: BTreeMap::new(),
        }
    }

    pub fn elementary(target: ItemId, user: UserId, rho: f64) -> Self {
        Self::new(target).with(user, rho)
    }

    pub fn with(mut self, user: UserId, rho: f64) -> Self {
        self.set(user, rho);
        self
    }

    pub fn set(&mut self, user: UserId, rho: f64) {
        self.allocations.insert(user, rho);
    }

    pub fn target(&self) -> ItemId {
        self.target
    }

    pub fn rho(&self, user: UserId) -> f64 {
        self.allocations.get(&user).copied().unwrap_or(0.0)
    }

    pub fn allocations(&self) -> impl Iterator<Item = (UserId, f64)> + '_ {
        self.allocations.iter().map(|(&u, &r)| (u, r))
    }

    /// Users with a strictly positive allocation, in user order.
    pub fn bribed(&self) -> impl Iterator<Item = (UserId, f64)> + '_ {
        self.allocations().filter(|&(_, r)| r > 0.0)
    }

    /// Total spend, the l1 norm of the allocation vector.
    pub fn cost(&self) -> f64 {
        self.allocations.values().sum()
    }

    pub fn is_null(&self) -> bool {
        self.bribed().next().is_none()
    }

    pub fn validate_against(&self, g: &RatingGraph) -> Result<(), BriberyError> {
        if self.target.0 >= g.n_items() {
            return Err(BriberyError::UnknownItem(self.target));
        }
        for (user, rho) in self.allocations() {
            if user.0 >= g.n_users() {
                return Err(BriberyError::UnknownUser(user));
            }
            if !(rho >= 0.0 && rho.is_finite()) {
                return Err(BriberyError::BadAllocation { user, rho });
            }
            match g.rating(user, self.target) {
                Some(rating) if rho > 1.0 - rating + CAP_EPS => {
                    return Err(BriberyError::RaterCap { user, rating, rho });
                }
                None if rho > 1.0 + CAP_EPS => {
                    return Err(BriberyError::NonRaterCap { user, rho });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn check_reputations(g: &RatingGraph, c: &[f64]) -> Result<(), BriberyError> {
    if c.len() != g.n_users() {
        return Err(BriberyError::ReputationLength {
            expected: g.n_users(),
            got: c.len(),
        });
    }
    Ok(())
}

fn check_partition(g: &RatingGraph, p: &AffinityPartition) -> Result<(), BriberyError> {
    if p.n_users() != g.n_users() {
        return Err(BriberyError::PartitionMismatch {
            partition_users: p.n_users(),
            graph_users: g.n_users(),
        });
    }
    Ok(())
}

fn raters_in_component(
    g: &RatingGraph,
    p: &AffinityPartition,
    i: ItemId,
    comp: ComponentId,
) -> Vec<(UserId, f64)> {
    g.raters_of(i)
        .iter()
        .copied()
        .filter(|&(u, _)| p.component_of(u).ok() == Some(comp))
        .collect()
}

/// Seller wealth: rater count times ranking, summed per cluster holding at
/// least one rater in the clustered mode. Rankings come from one frozen
/// ranking pass under the supplied reputations.
pub fn wealth(
    g: &RatingGraph,
    c: &[f64],
    i: ItemId,
    mode: BribeMode,
) -> Result<f64, BriberyError> {
    check_reputations(g, c)?;
    if i.0 >= g.n_items() {
        return Err(BriberyError::UnknownItem(i));
    }
    match mode {
        BribeMode::Bipartite => {
            let rankings = ranking_step(g, c);
            let r = rankings[i.0].ok_or(BriberyError::Unranked(i))?;
            Ok(g.raters_of(i).len() as f64 * r)
        }
        BribeMode::Multipartite(p) => {
            check_partition(g, p)?;
            let res = rank_multipartite_frozen(g, p, c);
            if res.ranked_by(i).is_empty() {
                return Err(BriberyError::Unranked(i));
            }
            let mut total = 0.0;
            for &comp in res.ranked_by(i) {
                let r = res.cluster_ranking(comp, i).expect("component ranks item");
                total += raters_in_component(g, p, i, comp).len() as f64 * r;
            }
            Ok(total)
        }
    }
}

/// Ratings after a strategy: raters shifted by rho, non-raters joining at
/// rho. Zero allocations leave the graph untouched.
fn bribed_graph(g: &RatingGraph, sigma: &BribingStrategy) -> Result<RatingGraph, BriberyError> {
    let mut b = GraphBuilder::from_graph(g);
    for (user, rho) in sigma.bribed() {
        let value = match g.rating(user, sigma.target()) {
            Some(r) => (r + rho).min(1.0),
            None => rho,
        };
        b.rate_value(user, sigma.target(), value, i64::MAX)?;
    }
    Ok(b.finish())
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub graph: RatingGraph,
    pub reputations: Vec<f64>,
    pub rankings: Vec<Option<f64>>,
    pub converged: bool,
}

/// Plays a strategy on a copy of the graph. By default reputations stay
/// frozen at `c` and only a ranking pass reruns; with
/// `recompute_reputations` the whole fixed point reruns on the bribed graph.
pub fn apply_strategy(
    g: &RatingGraph,
    sigma: &BribingStrategy,
    c: &[f64],
    recompute_reputations: bool,
    cfg: &EngineConfig,
) -> Result<StrategyOutcome, BriberyError> {
    check_reputations(g, c)?;
    sigma.validate_against(g)?;
    let graph = bribed_graph(g, sigma)?;
    if recompute_reputations {
        let state = run_fixed_point(&graph, cfg, None)?;
        Ok(StrategyOutcome {
            graph,
            reputations: state.reputations,
            rankings: state.rankings,
            converged: state.converged,
        })
    } else {
        let rankings = ranking_step(&graph, c);
        Ok(StrategyOutcome {
            graph,
            reputations: c.to_vec(),
            rankings,
            converged: true,
        })
    }
}

/// Ground-truth profit by definition: apply the strategy under frozen
/// reputations and difference the wealths. Every closed form below must
/// agree with this.
pub fn profit_oracle(
    g: &RatingGraph,
    sigma: &BribingStrategy,
    c: &[f64],
    mode: BribeMode,
) -> Result<f64, BriberyError> {
    let before = wealth(g, c, sigma.target(), mode)?;
    sigma.validate_against(g)?;
    let graph = bribed_graph(g, sigma)?;
    let after = wealth(&graph, c, sigma.target(), mode)?;
    Ok(after - sigma.cost() - before)
}

struct RaterStats {
    n: usize,
    alpha: f64,
    mean: f64,
    ranking: f64,
}

fn rater_stats(g: &RatingGraph, c: &[f64], i: ItemId) -> Result<RaterStats, BriberyError> {
    let raters = g.raters_of(i);
    if raters.is_empty() {
        return Err(BriberyError::NoRaters(i));
    }
    let alpha: f64 = raters.iter().map(|&(u, _)| c[u.0]).sum();
    let weighted: f64 = raters.iter().map(|&(u, v)| c[u.0] * v).sum();
    Ok(RaterStats {
        n: raters.len(),
        alpha,
        mean: alpha / raters.len() as f64,
        ranking: weighted / alpha,
    })
}

/// Profit of bribing raters only: sum of (c_u / mean - 1) rho_u. Elementary
/// profits add up, so the compound equals the sum of its parts here.
pub fn profit_raters_closed_form(
    g: &RatingGraph,
    c: &[f64],
    sigma: &BribingStrategy,
) -> Result<f64, BriberyError> {
    check_reputations(g, c)?;
    sigma.validate_against(g)?;
    let stats = rater_stats(g, c, sigma.target())?;
    let mut total = 0.0;
    for (u, rho) in sigma.bribed() {
        if g.rating(u, sigma.target()).is_none() {
            return Err(BriberyError::NotRater(u));
        }
        total += (c[u.0] / stats.mean - 1.0) * rho;
    }
    Ok(total)
}

/// Profit of bribing only users who have not rated the item. The bribed set
/// both moves the ranking and enlarges the rater count, so cross terms
/// between the newcomers appear.
pub fn profit_nonraters_closed_form(
    g: &RatingGraph,
    c: &[f64],
    sigma: &BribingStrategy,
) -> Result<f64, BriberyError> {
    check_reputations(g, c)?;
    sigma.validate_against(g)?;
    let stats = rater_stats(g, c, sigma.target())?;
    let bribed: Vec<(UserId, f64)> = sigma.bribed().collect();
    for &(v, _) in &bribed {
        if g.rating(v, sigma.target()).is_some() {
            return Err(BriberyError::IsRater(v));
        }
    }
    Ok(nonrater_terms(&stats, c, &bribed) / atilde(&stats, c, &bribed))
}

fn atilde(stats: &RaterStats, c: &[f64], bribed: &[(UserId, f64)]) -> f64 {
    stats.alpha + bribed.iter().map(|&(v, _)| c[v.0]).sum::<f64>()
}

/// Numerator of the non-rater profit: per-newcomer single-user profits scaled
/// back up by their own denominators, plus the pairwise spend coupling.
fn nonrater_terms(stats: &RaterStats, c: &[f64], bribed: &[(UserId, f64)]) -> f64 {
    let m = bribed.len() as f64;
    let spend: f64 = bribed.iter().map(|&(_, rho)| rho).sum();
    let mut total = 0.0;
    for &(v, rho) in bribed {
        let cv = c[v.0];
        let single = (stats.alpha - stats.n as f64 * cv) * (stats.ranking - rho) / (stats.alpha + cv);
        total += (stats.alpha + cv) * single;
        total += cv * (m * rho - spend);
    }
    total
}

/// Profit of a mixed strategy over raters and non-raters: the two pure parts
/// plus a coupling term weighting the raters' spend by how far each newcomer
/// sits below the raters' average reputation.
pub fn profit_mixed_closed_form(
    g: &RatingGraph,
    c: &[f64],
    sigma: &BribingStrategy,
) -> Result<f64, BriberyError> {
    check_reputations(g, c)?;
    sigma.validate_against(g)?;
    let stats = rater_stats(g, c, sigma.target())?;
    let mut raters = Vec::new();
    let mut newcomers = Vec::new();
    for (u, rho) in sigma.bribed() {
        if g.rating(u, sigma.target()).is_some() {
            raters.push((u, rho));
        } else {
            newcomers.push((u, rho));
        }
    }
    let rater_part: f64 = raters
        .iter()
        .map(|&(u, rho)| (c[u.0] / stats.mean - 1.0) * rho)
        .sum();
    let at = atilde(&stats, c, &newcomers);
    let weighted_spend: f64 = raters.iter().map(|&(u, rho)| c[u.0] * rho).sum();
    let coupling: f64 = newcomers
        .iter()
        .map(|&(v, _)| 1.0 - c[v.0] / stats.mean)
        .sum();
    Ok(rater_part + nonrater_terms(&stats, c, &newcomers) / at + coupling * weighted_spend / at)
}

/// Single-user profit under the clustered wealth. Three cases: a rater moves
/// its own cluster's ranking; a user in a cluster nobody in which rated the
/// item nets exactly zero (the new cluster term repays the spend); a
/// non-rater joining a rating cluster follows the cluster-restricted
/// non-rater form.
pub fn profit_multipartite_closed_form(
    g: &RatingGraph,
    p: &AffinityPartition,
    c: &[f64],
    sigma: &BribingStrategy,
) -> Result<f64, BriberyError> {
    check_reputations(g, c)?;
    check_partition(g, p)?;
    sigma.validate_against(g)?;
    let bribed: Vec<(UserId, f64)> = sigma.bribed().collect();
    if bribed.len() != 1 {
        return Err(BriberyError::UnsupportedCompound(bribed.len()));
    }
    let (v, rho) = bribed[0];
    let comp = p.component_of(v)?;
    let cluster_raters = raters_in_component(g, p, sigma.target(), comp);
    if g.rating(v, sigma.target()).is_some() {
        let alpha: f64 = cluster_raters.iter().map(|&(u, _)| c[u.0]).sum();
        let mean = alpha / cluster_raters.len() as f64;
        Ok((c[v.0] / mean - 1.0) * rho)
    } else if cluster_raters.is_empty() {
        Ok(0.0)
    } else {
        let alpha: f64 = cluster_raters.iter().map(|&(u, _)| c[u.0]).sum();
        let weighted: f64 = cluster_raters.iter().map(|&(u, r)| c[u.0] * r).sum();
        let ranking = weighted / alpha;
        let cv = c[v.0];
        Ok((alpha - cluster_raters.len() as f64 * cv) * (ranking - rho) / (alpha + cv))
    }
}

/// True when a rater of the item in the given cluster profits more under the
/// flat wealth than under the clustered one: outside raters average a lower
/// reputation than the cluster's own raters.
pub fn brs_vs_mrs_condition(
    g: &RatingGraph,
    p: &AffinityPartition,
    c: &[f64],
    i: ItemId,
    cluster: ComponentId,
) -> Result<bool, BriberyError> {
    check_reputations(g, c)?;
    check_partition(g, p)?;
    if i.0 >= g.n_items() {
        return Err(BriberyError::UnknownItem(i));
    }
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for &(u, _) in g.raters_of(i) {
        if p.component_of(u)? == cluster {
            inside.push(c[u.0]);
        } else {
            outside.push(c[u.0]);
        }
    }
    if inside.is_empty() || outside.is_empty() {
        return Err(BriberyError::DegenerateSplit {
            inside: inside.len(),
            outside: outside.len(),
        });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(mean(&outside) < mean(&inside))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BribeScope {
    Raters,
    NonRaters,
    All,
}

impl FromStr for BribeScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raters" => Ok(Self::Raters),
            "nonraters" => Ok(Self::NonRaters),
            "all" => Ok(Self::All),
            other => Err(format!("unknown scope {other:?} (expected raters, nonraters or all)")),
        }
    }
}

impl fmt::Display for BribeScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Raters => "raters",
            Self::NonRaters => "nonraters",
            Self::All => "all",
        })
    }
}

struct Candidate {
    user: UserId,
    cap: f64,
    rater: bool,
    component: ComponentId,
}

/// Sorted by decreasing reputation with index ties broken upward, raters
/// ahead of non-raters when both are in scope.
fn sort_candidates(cands: &mut [Candidate], c: &[f64]) {
    cands.sort_by(|a, b| {
        b.rater
            .cmp(&a.rater)
            .then(c[b.user.0].total_cmp(&c[a.user.0]))
            .then(a.user.0.cmp(&b.user.0))
    });
}

/// Greedy allocation over one candidate pool whose profitability reference
/// (mean rater reputation, ranking) is fixed. Raters take any budget up to
/// their headroom; a newcomer's allocation must clear the reference ranking
/// or the walk stops.
fn allocate_pool(
    pool: &[Candidate],
    budget: f64,
    ranking: f64,
    target: ItemId,
) -> BribingStrategy {
    let mut sigma = BribingStrategy::new(target);
    let mut remaining = budget;
    for cand in pool {
        if remaining <= CAP_EPS {
            break;
        }
        let take = cand.cap.min(remaining);
        if cand.rater {
            sigma.set(cand.user, take);
            remaining -= take;
        } else {
            if take <= ranking + CAP_EPS {
                break;
            }
            sigma.set(cand.user, take);
            remaining -= take;
        }
    }
    sigma
}

/// Best bribing strategy under a budget, following the greedy rule: order
/// profitable users (reputation above the relevant rater average) by
/// decreasing reputation, raters before newcomers, and give each the maximum
/// admissible amount. Cross-cluster candidate sets in the clustered mode fall
/// back to an exhaustive search over funding orders, scored by the profit
/// oracle. Returns None when no profitable strategy exists.
pub fn optimal_greedy(
    g: &RatingGraph,
    c: &[f64],
    i: ItemId,
    budget: f64,
    scope: BribeScope,
    mode: BribeMode,
) -> Result<Option<BribingStrategy>, BriberyError> {
    check_reputations(g, c)?;
    if i.0 >= g.n_items() {
        return Err(BriberyError::UnknownItem(i));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(BriberyError::ZeroBudget);
    }
    let available = wealth(g, c, i, mode)?;
    if budget > available + CAP_EPS {
        return Err(BriberyError::BudgetExceedsWealth {
            budget,
            wealth: available,
        });
    }
    let everyone = ComponentId(0);
    let mut cands: Vec<Candidate> = Vec::new();
    match mode {
        BribeMode::Bipartite => {
            let stats = rater_stats(g, c, i)?;
            collect_candidates(g, c, i, scope, None, stats.mean, &mut cands, everyone);
        }
        BribeMode::Multipartite(p) => {
            check_partition(g, p)?;
            for comp in p.component_ids() {
                let raters = raters_in_component(g, p, i, comp);
                if raters.is_empty() {
                    // a cluster with no raters of i nets zero for any bribe
                    continue;
                }
                let mean =
                    raters.iter().map(|&(u, _)| c[u.0]).sum::<f64>() / raters.len() as f64;
                collect_candidates(g, c, i, scope, Some((p, comp)), mean, &mut cands, comp);
            }
        }
    }
    if cands.is_empty() {
        return Ok(None);
    }
    let multi_cluster = matches!(mode, BribeMode::Multipartite(_))
        && cands.iter().any(|x| x.component != cands[0].component);
    if multi_cluster {
        if cands.len() > 10 {
            return Err(BriberyError::TooManyCandidates(cands.len()));
        }
        let p = match mode {
            BribeMode::Multipartite(p) => p,
            BribeMode::Bipartite => unreachable!(),
        };
        return exhaustive_orders(g, p, c, i, budget, &mut cands);
    }
    // single reference pool: the rater mean and ranking of either the whole
    // graph or the one cluster every candidate shares
    let ranking = match mode {
        BribeMode::Bipartite => rater_stats(g, c, i)?.ranking,
        BribeMode::Multipartite(p) => {
            let raters = raters_in_component(g, p, i, cands[0].component);
            let alpha: f64 = raters.iter().map(|&(u, _)| c[u.0]).sum();
            raters.iter().map(|&(u, v)| c[u.0] * v).sum::<f64>() / alpha
        }
    };
    sort_candidates(&mut cands, c);
    let sigma = allocate_pool(&cands, budget, ranking, i);
    Ok(if sigma.is_null() { None } else { Some(sigma) })
}

#[allow(clippy::too_many_arguments)]
fn collect_candidates(
    g: &RatingGraph,
    c: &[f64],
    i: ItemId,
    scope: BribeScope,
    cluster: Option<(&AffinityPartition, ComponentId)>,
    mean: f64,
    out: &mut Vec<Candidate>,
    tag: ComponentId,
) {
    let in_cluster = |u: UserId| match cluster {
        None => true,
        Some((p, comp)) => p.component_of(u).ok() == Some(comp),
    };
    if scope != BribeScope::NonRaters {
        for &(u, value) in g.raters_of(i) {
            let cap = 1.0 - value;
            if in_cluster(u) && c[u.0] > mean && cap > CAP_EPS {
                out.push(Candidate {
                    user: u,
                    cap,
                    rater: true,
                    component: tag,
                });
            }
        }
    }
    if scope != BribeScope::Raters {
        for u in g.users() {
            if g.rating(u, i).is_none() && in_cluster(u) && c[u.0] > mean {
                out.push(Candidate {
                    user: u,
                    cap: 1.0,
                    rater: false,
                    component: tag,
                });
            }
        }
    }
}

/// Candidates spread over several clusters: enumerate every outcome a
/// funding order can reach. An order gives each user min(cap, remaining), so
/// outcomes are a fully funded subset plus at most one partial recipient.
fn exhaustive_orders(
    g: &RatingGraph,
    p: &AffinityPartition,
    c: &[f64],
    i: ItemId,
    budget: f64,
    cands: &mut [Candidate],
) -> Result<Option<BribingStrategy>, BriberyError> {
    sort_candidates(cands, c);
    let n = cands.len();
    let mut best: Option<(f64, BribingStrategy)> = None;
    for mask in 0u32..(1 << n) {
        let full_cost: f64 = (0..n)
            .filter(|k| mask & (1 << k) != 0)
            .map(|k| cands[k].cap)
            .sum();
        if full_cost > budget + CAP_EPS {
            continue;
        }
        let remaining = budget - full_cost;
        let base = |sigma: &mut BribingStrategy| {
            for (k, cand) in cands.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    sigma.set(cand.user, cand.cap);
                }
            }
        };
        let mut outcomes: Vec<BribingStrategy> = Vec::new();
        if mask == (1 << n) - 1 || remaining <= CAP_EPS {
            let mut sigma = BribingStrategy::new(i);
            base(&mut sigma);
            outcomes.push(sigma);
        } else {
            for (k, cand) in cands.iter().enumerate() {
                // leftover funds always land on some next user; a leftover
                // covering a full cap belongs to a larger mask instead
                if mask & (1 << k) == 0 && remaining < cand.cap - CAP_EPS {
                    let mut sigma = BribingStrategy::new(i);
                    base(&mut sigma);
                    sigma.set(cand.user, remaining);
                    outcomes.push(sigma);
                }
            }
        }
        for sigma in outcomes {
            if sigma.is_null() {
                continue;
            }
            let profit = profit_oracle(g, &sigma, c, BribeMode::Multipartite(p))?;
            if best.as_ref().map_or(true, |(b, _)| profit > *b) {
                best = Some((profit, sigma));
            }
        }
    }
    Ok(match best {
        Some((profit, sigma)) if profit > CAP_EPS => Some(sigma),
        _ => None,
    })
}

/// Bribing orders from the wealth-evolution experiments: raters of the item
/// or every user, visited randomly or by decreasing initial reputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStrategy {
    RatersRandom,
    RatersByReputation,
    AllRandom,
    AllByReputation,
}

impl SweepStrategy {
    pub const ALL: [SweepStrategy; 4] = [
        Self::RatersRandom,
        Self::RatersByReputation,
        Self::AllRandom,
        Self::AllByReputation,
    ];
}

impl FromStr for SweepStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sigma1" => Ok(Self::RatersRandom),
            "sigma2" => Ok(Self::RatersByReputation),
            "sigma3" => Ok(Self::AllRandom),
            "sigma4" => Ok(Self::AllByReputation),
            other => Err(format!("unknown strategy {other:?} (expected sigma1..sigma4)")),
        }
    }
}

impl fmt::Display for SweepStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RatersRandom => "sigma1",
            Self::RatersByReputation => "sigma2",
            Self::AllRandom => "sigma3",
            Self::AllByReputation => "sigma4",
        })
    }
}

/// The user order a sweep strategy fixes upfront from the initial state.
pub fn sweep_order(
    g: &RatingGraph,
    c: &[f64],
    i: ItemId,
    strategy: SweepStrategy,
    seed: u64,
) -> Vec<UserId> {
    let mut users: Vec<UserId> = match strategy {
        SweepStrategy::RatersRandom | SweepStrategy::RatersByReputation => {
            g.raters_of(i).iter().map(|&(u, _)| u).collect()
        }
        SweepStrategy::AllRandom | SweepStrategy::AllByReputation => g.users().collect(),
    };
    match strategy {
        SweepStrategy::RatersRandom | SweepStrategy::AllRandom => {
            users.shuffle(&mut ChaCha12Rng::seed_from_u64(seed));
        }
        SweepStrategy::RatersByReputation | SweepStrategy::AllByReputation => {
            users.sort_by(|a, b| c[b.0].total_cmp(&c[a.0]).then(a.0.cmp(&b.0)));
        }
    }
    users
}

/// One row per elementary bribe. `wealth` nets the cumulative spend; a user
/// with no rating headroom leaves every column unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub step: usize,
    pub user: UserId,
    pub rho: f64,
    pub spent: f64,
    pub wealth: f64,
    pub profit: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub initial_wealth: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepOutcome {
    pub fn final_wealth(&self) -> f64 {
        self.rows
            .last()
            .map_or(self.initial_wealth, |row| row.wealth)
    }

    pub fn final_profit(&self) -> f64 {
        self.rows.last().map_or(0.0, |row| row.profit)
    }
}

/// Applies elementary bribes one at a time to an evolving copy of the graph,
/// re-measuring wealth after each. Frozen mode keeps `c0`; dynamic mode
/// reruns the fixed point per step.
pub fn sequential_bribes(
    g: &RatingGraph,
    c0: &[f64],
    i: ItemId,
    steps: &[(UserId, f64)],
    mode: BribeMode,
    dynamic: bool,
    cfg: &EngineConfig,
) -> Result<SweepOutcome, BriberyError> {
    check_reputations(g, c0)?;
    let initial = wealth(g, c0, i, mode)?;
    let mut graph = g.clone();
    let mut c = c0.to_vec();
    let mut spent = 0.0;
    let mut gross = initial;
    let mut rows = Vec::with_capacity(steps.len());
    for (k, &(user, rho)) in steps.iter().enumerate() {
        let rho = if rho > CAP_EPS { rho } else { 0.0 };
        if rho > 0.0 {
            let sigma = BribingStrategy::elementary(i, user, rho);
            sigma.validate_against(&graph)?;
            graph = bribed_graph(&graph, &sigma)?;
            spent += rho;
            if dynamic {
                c = match mode {
                    BribeMode::Bipartite => run_fixed_point(&graph, cfg, None)?.reputations,
                    BribeMode::Multipartite(p) => {
                        rank_multipartite(&graph, p, cfg)?.merged_reputations(p)
                    }
                };
            }
            gross = wealth(&graph, &c, i, mode)?;
        }
        rows.push(SweepRow {
            step: k + 1,
            user,
            rho,
            spent,
            wealth: gross - spent,
            profit: gross - spent - initial,
        });
    }
    Ok(SweepOutcome {
        initial_wealth: initial,
        rows,
    })
}

/// Full wealth-evolution run for one strategy: fix the order upfront, then
/// bribe every user in it with the maximum admissible amount (rating headroom
/// for raters, the full unit for newcomers).
#[allow(clippy::too_many_arguments)]
pub fn strategy_sweep(
    g: &RatingGraph,
    c0: &[f64],
    i: ItemId,
    strategy: SweepStrategy,
    mode: BribeMode,
    dynamic: bool,
    cfg: &EngineConfig,
    seed: u64,
) -> Result<SweepOutcome, BriberyError> {
    check_reputations(g, c0)?;
    if i.0 >= g.n_items() {
        return Err(BriberyError::UnknownItem(i));
    }
    let steps: Vec<(UserId, f64)> = sweep_order(g, c0, i, strategy, seed)
        .into_iter()
        .map(|u| {
            let rho = match g.rating(u, i) {
                Some(r) => (1.0 - r).max(0.0),
                None => 1.0,
            };
            (u, rho)
        })
        .collect();
    sequential_bribes(g, c0, i, &steps, mode, dynamic, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RatingScale;
    use proptest::prelude::*;

    const GIVEN_C: [f64; 5] = [0.4, 0.5, 0.8, 0.5, 0.6];

    /// Five users, both items fully rated; used with two clusters
    /// {u1,u2,u3} and {u4,u5}.
    fn full_fixture() -> RatingGraph {
        let mut b = GraphBuilder::new(RatingScale::new(1, 10).unwrap());
        let i = b.item("i");
        let j = b.item("j");
        for (k, (&a, &d)) in [4u32, 6, 5, 7, 5].iter().zip(&[7u32, 3, 5, 5, 6]).enumerate() {
            let u = b.user(&format!("u{}", k + 1));
            b.rate_raw(u, i, a, 0);
            b.rate_raw(u, j, d, 0);
        }
        b.finish()
    }

    /// Same users and clusters, but only u1 and u2 rated the target item, so
    /// the second cluster holds no raters of it.
    fn sparse_fixture() -> RatingGraph {
        let mut b = GraphBuilder::new(RatingScale::new(1, 10).unwrap());
        let i = b.item("i");
        let j = b.item("j");
        let users: Vec<UserId> = (1..=5).map(|k| b.user(&format!("u{k}"))).collect();
        b.rate_raw(users[0], i, 4, 0);
        b.rate_raw(users[1], i, 6, 0);
        b.rate_raw(users[1], j, 3, 0);
        b.rate_raw(users[2], j, 5, 0);
        b.rate_raw(users[3], j, 8, 0);
        b.rate_raw(users[4], j, 6, 0);
        b.finish()
    }

    fn two_clusters() -> AffinityPartition {
        AffinityPartition::from_components(
            5,
            vec![
                vec![UserId(0), UserId(1), UserId(2)],
                vec![UserId(3), UserId(4)],
            ],
        )
        .unwrap()
    }

    /// One rater at 0.5 with full reputation plus an outside user at 0.8.
    fn two_user_fixture() -> RatingGraph {
        let mut b = GraphBuilder::new(RatingScale::new(1, 10).unwrap());
        let i = b.item("i");
        let v = b.user("v");
        b.user("w");
        b.rate_raw(v, i, 5, 0);
        b.finish()
    }

    #[test]
    fn elementary_profits_vanish_but_compound_pays() {
        let g = two_user_fixture();
        let c = [1.0, 0.8];
        let i = g.item_id("i").unwrap();
        let v = g.user_id("v").unwrap();
        let w = g.user_id("w").unwrap();
        let rater = BribingStrategy::elementary(i, v, 0.5);
        let newcomer = BribingStrategy::elementary(i, w, 0.5);
        let both = BribingStrategy::new(i).with(v, 0.5).with(w, 0.5);
        assert!(profit_raters_closed_form(&g, &c, &rater).unwrap().abs() < 1e-15);
        assert!(profit_nonraters_closed_form(&g, &c, &newcomer).unwrap().abs() < 1e-15);
        let compound = profit_mixed_closed_form(&g, &c, &both).unwrap();
        assert!((compound - 1.0 / 18.0).abs() < 1e-12);
        let oracle = profit_oracle(&g, &both, &c, BribeMode::Bipartite).unwrap();
        assert!((oracle - compound).abs() < 1e-12);
        // played one after the other, the second step realizes the full gain
        let run = sequential_bribes(
            &g,
            &c,
            i,
            &[(w, 0.5), (v, 0.5)],
            BribeMode::Bipartite,
            false,
            &EngineConfig::default(),
        )
        .unwrap();
        assert!(run.rows[0].profit.abs() < 1e-12);
        assert!((run.rows[1].profit - 1.0 / 18.0).abs() < 1e-12);
    }

    #[test]
    fn full_fixture_profit_and_ranking_cells() {
        let g = full_fixture();
        let p = two_clusters();
        let i = g.item_id("i").unwrap();
        let cfg = EngineConfig::default();
        let bribe_u1 = BribingStrategy::elementary(i, UserId(0), 0.6);
        let bribe_u3 = BribingStrategy::elementary(i, UserId(2), 0.5);
        let flat_u1 = profit_raters_closed_form(&g, &GIVEN_C, &bribe_u1).unwrap();
        let flat_u3 = profit_raters_closed_form(&g, &GIVEN_C, &bribe_u3).unwrap();
        assert!((flat_u1 + 0.171).abs() < 1e-3);
        assert!((flat_u3 - 0.214).abs() < 1e-3);
        let clustered_u1 = profit_multipartite_closed_form(&g, &p, &GIVEN_C, &bribe_u1).unwrap();
        let clustered_u3 = profit_multipartite_closed_form(&g, &p, &GIVEN_C, &bribe_u3).unwrap();
        assert!((clustered_u1 + 0.176).abs() < 1e-3);
        assert!((clustered_u3 - 0.206).abs() < 1e-3);
        for sigma in [&bribe_u1, &bribe_u3] {
            let flat = profit_raters_closed_form(&g, &GIVEN_C, sigma).unwrap();
            let oracle = profit_oracle(&g, sigma, &GIVEN_C, BribeMode::Bipartite).unwrap();
            assert!((flat - oracle).abs() < 1e-12);
            let clustered = profit_multipartite_closed_form(&g, &p, &GIVEN_C, sigma).unwrap();
            let oracle_m =
                profit_oracle(&g, sigma, &GIVEN_C, BribeMode::Multipartite(&p)).unwrap();
            assert!((clustered - oracle_m).abs() < 1e-12);
        }
        let after_u1 = apply_strategy(&g, &bribe_u1, &GIVEN_C, false, &cfg).unwrap();
        assert!((after_u1.rankings[i.0].unwrap() - 0.625).abs() < 1e-3);
        let after_u3 = apply_strategy(&g, &bribe_u3, &GIVEN_C, false, &cfg).unwrap();
        assert!((after_u3.rankings[i.0].unwrap() - 0.682).abs() < 1e-3);
        let m_u1 = rank_multipartite_frozen(&after_u1.graph, &p, &GIVEN_C);
        assert!((m_u1.cluster_ranking(ComponentId(0), i).unwrap() - 0.647).abs() < 1e-3);
        assert!((m_u1.display_ranking(i).unwrap() - 0.624).abs() < 1e-3);
        let m_u3 = rank_multipartite_frozen(&after_u3.graph, &p, &GIVEN_C);
        assert!((m_u3.cluster_ranking(ComponentId(0), i).unwrap() - 0.741).abs() < 1e-3);
        // size-weighted display: (3 * 0.74118 + 2 * 0.59091) / 5
        assert!((m_u3.display_ranking(i).unwrap() - 0.68107).abs() < 1e-3);
    }

    #[test]
    fn sparse_fixture_newcomer_cells() {
        let g = sparse_fixture();
        let p = two_clusters();
        let i = g.item_id("i").unwrap();
        let cfg = EngineConfig::default();
        let bribe_u4 = BribingStrategy::elementary(i, UserId(3), 1.0);
        let bribe_u5 = BribingStrategy::elementary(i, UserId(4), 1.0);
        let flat_u4 = profit_nonraters_closed_form(&g, &GIVEN_C, &bribe_u4).unwrap();
        let flat_u5 = profit_nonraters_closed_form(&g, &GIVEN_C, &bribe_u5).unwrap();
        assert!((flat_u4 - 0.035).abs() < 1e-3);
        assert!((flat_u5 - 0.098).abs() < 1e-3);
        // both newcomers sit in the cluster that never rated the item
        assert_eq!(
            profit_multipartite_closed_form(&g, &p, &GIVEN_C, &bribe_u4).unwrap(),
            0.0
        );
        assert_eq!(
            profit_multipartite_closed_form(&g, &p, &GIVEN_C, &bribe_u5).unwrap(),
            0.0
        );
        let oracle_u4 =
            profit_oracle(&g, &bribe_u4, &GIVEN_C, BribeMode::Multipartite(&p)).unwrap();
        assert!(oracle_u4.abs() < 1e-12);
        let after_u4 = apply_strategy(&g, &bribe_u4, &GIVEN_C, false, &cfg).unwrap();
        assert!((after_u4.rankings[i.0].unwrap() - 0.686).abs() < 1e-3);
        let after_u5 = apply_strategy(&g, &bribe_u5, &GIVEN_C, false, &cfg).unwrap();
        assert!((after_u5.rankings[i.0].unwrap() - 0.707).abs() < 1e-3);
        let m4 = rank_multipartite_frozen(&after_u4.graph, &p, &GIVEN_C);
        assert!((m4.cluster_ranking(ComponentId(1), i).unwrap() - 1.0).abs() < 1e-12);
        assert!((m4.display_ranking(i).unwrap() - 0.707).abs() < 1e-3);
    }

    #[test]
    fn wealth_by_mode() {
        let g = full_fixture();
        let i = g.item_id("i").unwrap();
        let flat = wealth(&g, &GIVEN_C, i, BribeMode::Bipartite).unwrap();
        assert!((flat - 5.0 * 0.539286).abs() < 1e-3);
        let p = two_clusters();
        let clustered = wealth(&g, &GIVEN_C, i, BribeMode::Multipartite(&p)).unwrap();
        assert!((clustered - (3.0 * 0.505882 + 2.0 * 0.590909)).abs() < 1e-3);
        let single = AffinityPartition::all_in_one(5);
        let merged = wealth(&g, &GIVEN_C, i, BribeMode::Multipartite(&single)).unwrap();
        assert!((merged - flat).abs() < 1e-12);
        // an item nobody rated has no wealth
        let mut b = GraphBuilder::from_graph(&g);
        let orphan = b.item("orphan");
        let g2 = b.finish();
        assert!(matches!(
            wealth(&g2, &GIVEN_C, orphan, BribeMode::Bipartite),
            Err(BriberyError::Unranked(_))
        ));
    }

    #[test]
    fn strategy_caps_rejected_before_mutation() {
        let g = full_fixture();
        let i = g.item_id("i").unwrap();
        let over = BribingStrategy::elementary(i, UserId(2), 0.6);
        assert!(matches!(
            over.validate_against(&g),
            Err(BriberyError::RaterCap { .. })
        ));
        let g3 = sparse_fixture();
        let over_new = BribingStrategy::elementary(g3.item_id("i").unwrap(), UserId(3), 1.2);
        assert!(matches!(
            over_new.validate_against(&g3),
            Err(BriberyError::NonRaterCap { .. })
        ));
        let negative = BribingStrategy::elementary(i, UserId(0), -0.1);
        assert!(matches!(
            negative.validate_against(&g),
            Err(BriberyError::BadAllocation { .. })
        ));
        assert!(apply_strategy(&g, &over, &GIVEN_C, false, &EngineConfig::default()).is_err());
    }

    #[test]
    fn null_strategy_changes_nothing() {
        let g = full_fixture();
        let i = g.item_id("i").unwrap();
        let null = BribingStrategy::new(i).with(UserId(0), 0.0);
        assert!(null.is_null());
        let out = apply_strategy(&g, &null, &GIVEN_C, false, &EngineConfig::default()).unwrap();
        assert_eq!(out.graph, g);
        assert_eq!(out.rankings, ranking_step(&g, &GIVEN_C));
    }

    #[test]
    fn mixed_form_reduces_to_pure_forms() {
        let g = sparse_fixture();
        let i = g.item_id("i").unwrap();
        let raters_only = BribingStrategy::elementary(i, UserId(1), 0.3);
        let a = profit_mixed_closed_form(&g, &GIVEN_C, &raters_only).unwrap();
        let b = profit_raters_closed_form(&g, &GIVEN_C, &raters_only).unwrap();
        assert!((a - b).abs() < 1e-15);
        let newcomers_only = BribingStrategy::new(i).with(UserId(3), 0.9).with(UserId(4), 0.7);
        let a = profit_mixed_closed_form(&g, &GIVEN_C, &newcomers_only).unwrap();
        let b = profit_nonraters_closed_form(&g, &GIVEN_C, &newcomers_only).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn greedy_funds_high_reputation_raters_first() {
        let g = full_fixture();
        let i = g.item_id("i").unwrap();
        // eligible raters above the 0.56 average: u3 (0.8) then u5 (0.6)
        let sigma = optimal_greedy(&g, &GIVEN_C, i, 2.695, BribeScope::Raters, BribeMode::Bipartite)
            .unwrap()
            .unwrap();
        assert!((sigma.rho(UserId(2)) - 0.5).abs() < 1e-12);
        assert!((sigma.rho(UserId(4)) - 0.5).abs() < 1e-12);
        assert_eq!(sigma.bribed().count(), 2);
        // a tighter budget truncates the later, lower-reputation user
        let tight = optimal_greedy(&g, &GIVEN_C, i, 0.7, BribeScope::Raters, BribeMode::Bipartite)
            .unwrap()
            .unwrap();
        assert!((tight.rho(UserId(2)) - 0.5).abs() < 1e-12);
        assert!((tight.rho(UserId(4)) - 0.2).abs() < 1e-12);
        // uniform reputations leave nobody strictly above the average
        let flat_c = [0.5; 5];
        assert!(optimal_greedy(&g, &flat_c, i, 1.0, BribeScope::Raters, BribeMode::Bipartite)
            .unwrap()
            .is_none());
        assert!(matches!(
            optimal_greedy(&g, &GIVEN_C, i, 0.0, BribeScope::Raters, BribeMode::Bipartite),
            Err(BriberyError::ZeroBudget)
        ));
        assert!(matches!(
            optimal_greedy(&g, &GIVEN_C, i, 10.0, BribeScope::Raters, BribeMode::Bipartite),
            Err(BriberyError::BudgetExceedsWealth { .. })
        ));
    }

    #[test]
    fn greedy_newcomers_must_clear_the_ranking() {
        let g = sparse_fixture();
        let i = g.item_id("i").unwrap();
        // ranking 0.511; u3 (0.8) gets the whole unit and exhausts the budget
        let sigma =
            optimal_greedy(&g, &GIVEN_C, i, 1.0, BribeScope::NonRaters, BribeMode::Bipartite)
                .unwrap()
                .unwrap();
        assert!((sigma.rho(UserId(2)) - 1.0).abs() < 1e-12);
        assert_eq!(sigma.bribed().count(), 1);
        // an allocation below the current ranking cannot profit
        assert!(
            optimal_greedy(&g, &GIVEN_C, i, 0.4, BribeScope::NonRaters, BribeMode::Bipartite)
                .unwrap()
                .is_none()
        );
    }

    #[test]
    fn greedy_clustered_stays_in_the_rating_cluster() {
        let g = sparse_fixture();
        let p = two_clusters();
        let i = g.item_id("i").unwrap();
        // cluster mean over {u1, u2} is 0.45: u2 (rater) and u3 (newcomer)
        // qualify; the raterless second cluster is excluded outright
        let sigma = optimal_greedy(
            &g,
            &GIVEN_C,
            i,
            1.0,
            BribeScope::All,
            BribeMode::Multipartite(&p),
        )
        .unwrap()
        .unwrap();
        assert!((sigma.rho(UserId(1)) - 0.4).abs() < 1e-12);
        assert!((sigma.rho(UserId(2)) - 0.6).abs() < 1e-12);
        assert_eq!(sigma.bribed().count(), 2);
    }

    #[test]
    fn greedy_cross_cluster_searches_orders() {
        let mut b = GraphBuilder::new(RatingScale::new(1, 10).unwrap());
        let i = b.item("i");
        let users: Vec<UserId> = (0..6).map(|k| b.user(&format!("u{k}"))).collect();
        b.rate_raw(users[0], i, 4, 0);
        b.rate_raw(users[1], i, 6, 0);
        b.rate_raw(users[3], i, 4, 0);
        b.rate_raw(users[4], i, 6, 0);
        let g = b.finish();
        let p = AffinityPartition::from_components(
            6,
            vec![
                vec![users[0], users[1], users[2]],
                vec![users[3], users[4], users[5]],
            ],
        )
        .unwrap();
        let c = [0.3, 0.62, 0.5, 0.3, 0.58, 0.5];
        // u1 and u4 are eligible in different clusters; u1 pays off more per
        // unit, so it is funded fully and u4 takes the leftover
        let sigma = optimal_greedy(&g, &c, i, 0.5, BribeScope::Raters, BribeMode::Multipartite(&p))
            .unwrap()
            .unwrap();
        assert!((sigma.rho(users[1]) - 0.4).abs() < 1e-12);
        assert!((sigma.rho(users[4]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn greedy_cross_cluster_candidate_cap() {
        let mut b = GraphBuilder::new(RatingScale::new(1, 10).unwrap());
        let i = b.item("i");
        let mut users = Vec::new();
        for k in 0..14 {
            let u = b.user(&format!("u{k:02}"));
            b.rate_raw(u, i, 5, 0);
            users.push(u);
        }
        let g = b.finish();
        let p = AffinityPartition::from_components(
            14,
            vec![users[..7].to_vec(), users[7..].to_vec()],
        )
        .unwrap();
        // six of seven in each cluster sit above their cluster mean
        let mut c = [0.9; 14];
        c[6] = 0.1;
        c[13] = 0.1;
        assert!(matches!(
            optimal_greedy(&g, &c, i, 1.0, BribeScope::Raters, BribeMode::Multipartite(&p)),
            Err(BriberyError::TooManyCandidates(12))
        ));
    }

    #[test]
    fn flat_vs_clustered_condition() {
        let g = full_fixture();
        let p = two_clusters();
        let i = g.item_id("i").unwrap();
        // outside mean 0.55 < inside mean 0.5667, so the flat bribe pays more
        assert!(brs_vs_mrs_condition(&g, &p, &GIVEN_C, i, ComponentId(0)).unwrap());
        let u3 = BribingStrategy::elementary(i, UserId(2), 0.5);
        let flat = profit_raters_closed_form(&g, &GIVEN_C, &u3).unwrap();
        let clustered = profit_multipartite_closed_form(&g, &p, &GIVEN_C, &u3).unwrap();
        assert!(flat > clustered);
        let single = AffinityPartition::all_in_one(5);
        assert!(matches!(
            brs_vs_mrs_condition(&g, &single, &GIVEN_C, i, ComponentId(0)),
            Err(BriberyError::DegenerateSplit { .. })
        ));
    }

    #[test]
    fn sweep_orders_are_deterministic() {
        let g = full_fixture();
        let i = g.item_id("i").unwrap();
        let by_rep = sweep_order(&g, &GIVEN_C, i, SweepStrategy::RatersByReputation, 0);
        assert_eq!(
            by_rep,
            vec![UserId(2), UserId(4), UserId(1), UserId(3), UserId(0)]
        );
        let a = sweep_order(&g, &GIVEN_C, i, SweepStrategy::RatersRandom, 7);
        let b = sweep_order(&g, &GIVEN_C, i, SweepStrategy::RatersRandom, 7);
        assert_eq!(a, b);
        assert_eq!(
            sweep_order(&g, &GIVEN_C, i, SweepStrategy::AllRandom, 7).len(),
            5
        );
    }

    #[test]
    fn sweeps_end_where_the_order_cannot_matter() {
        let g = full_fixture();
        let i = g.item_id("i").unwrap();
        let cfg = EngineConfig::default();
        let random = strategy_sweep(
            &g,
            &GIVEN_C,
            i,
            SweepStrategy::RatersRandom,
            BribeMode::Bipartite,
            false,
            &cfg,
            3,
        )
        .unwrap();
        let ranked = strategy_sweep(
            &g,
            &GIVEN_C,
            i,
            SweepStrategy::RatersByReputation,
            BribeMode::Bipartite,
            false,
            &cfg,
            3,
        )
        .unwrap();
        // every rater ends at the top grade either way: 5 * 1.0 - 2.3 spent
        assert!((random.final_wealth() - 2.7).abs() < 1e-9);
        assert!((ranked.final_wealth() - random.final_wealth()).abs() < 1e-9);
        let p = two_clusters();
        let clustered = strategy_sweep(
            &g,
            &GIVEN_C,
            i,
            SweepStrategy::RatersByReputation,
            BribeMode::Multipartite(&p),
            false,
            &cfg,
            3,
        )
        .unwrap();
        // same final position, but the clustered seller started wealthier,
        // so the clustered profit comes out strictly smaller
        assert!(clustered.final_wealth() <= ranked.final_wealth() + 1e-9);
        assert!(clustered.final_profit() < ranked.final_profit());
    }

    #[test]
    fn maxed_out_raters_yield_flat_rows() {
        let mut b = GraphBuilder::new(RatingScale::new(1, 10).unwrap());
        let i = b.item("i");
        for (k, raw) in [10u32, 6, 4].iter().enumerate() {
            let u = b.user(&format!("u{}", k + 1));
            b.rate_raw(u, i, *raw, 0);
        }
        let g = b.finish();
        let c = [0.9, 0.5, 0.4];
        let out = strategy_sweep(
            &g,
            &c,
            g.item_id("i").unwrap(),
            SweepStrategy::RatersByReputation,
            BribeMode::Bipartite,
            false,
            &EngineConfig::default(),
            0,
        )
        .unwrap();
        // u1 is already at the maximum: a zero-cost, zero-profit row
        assert_eq!(out.rows[0].user, UserId(0));
        assert_eq!(out.rows[0].rho, 0.0);
        assert_eq!(out.rows[0].spent, 0.0);
        assert!((out.rows[0].wealth - out.initial_wealth).abs() < 1e-15);
        assert_eq!(out.rows[0].profit, 0.0);
        assert!(out.rows[1].rho > 0.0);
    }

    #[test]
    fn dynamic_sweep_reruns_the_fixed_point() {
        let g = full_fixture();
        let i = g.item_id("i").unwrap();
        let cfg = EngineConfig::default();
        let st = run_fixed_point(&g, &cfg, None).unwrap();
        let frozen = strategy_sweep(
            &g,
            &st.reputations,
            i,
            SweepStrategy::RatersByReputation,
            BribeMode::Bipartite,
            false,
            &cfg,
            0,
        )
        .unwrap();
        let dynamic = strategy_sweep(
            &g,
            &st.reputations,
            i,
            SweepStrategy::RatersByReputation,
            BribeMode::Bipartite,
            true,
            &cfg,
            0,
        )
        .unwrap();
        assert_eq!(frozen.rows.len(), dynamic.rows.len());
        assert!(dynamic.rows.iter().all(|r| r.wealth.is_finite()));
        // unanimity at the end lifts the ranking to 1 in both runs
        assert!((dynamic.final_wealth() - frozen.final_wealth()).abs() < 1e-6);
    }

    fn arb_instance() -> impl Strategy<Value = (RatingGraph, Vec<f64>)> {
        (2usize..=8, 1usize..=4, 0u64..1_000_000).prop_map(|(n_users, n_items, seed)| {
            use rand::Rng as _;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut b = GraphBuilder::new(RatingScale::new(1, 5).unwrap());
            let users: Vec<UserId> = (0..n_users).map(|k| b.user(&format!("u{k}"))).collect();
            let items: Vec<ItemId> = (0..n_items).map(|k| b.item(&format!("i{k}"))).collect();
            for &u in &users {
                for &i in &items {
                    if rng.random::<f64>() < 0.7 {
                        b.rate_raw(u, i, rng.random_range(1..=5), 0);
                    }
                }
            }
            let g = b.finish();
            let c: Vec<f64> = (0..n_users).map(|_| rng.random_range(0.05..=1.0)).collect();
            (g, c)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn closed_forms_match_the_oracle((g, c) in arb_instance(), seed in 0u64..10_000) {
            use rand::Rng as _;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let i = ItemId(rng.random_range(0..g.n_items()));
            if g.raters_of(i).is_empty() {
                return Ok(());
            }
            let mut sigma = BribingStrategy::new(i);
            let mut any_rater = false;
            let mut any_newcomer = false;
            for u in g.users() {
                if rng.random::<f64>() < 0.5 {
                    continue;
                }
                match g.rating(u, i) {
                    Some(r) => {
                        let head = 1.0 - r;
                        if head > 1e-9 {
                            sigma.set(u, rng.random_range(0.0..head));
                            any_rater = true;
                        }
                    }
                    None => {
                        sigma.set(u, rng.random_range(0.0..1.0));
                        any_newcomer = true;
                    }
                }
            }
            let oracle = profit_oracle(&g, &sigma, &c, BribeMode::Bipartite).unwrap();
            let mixed = profit_mixed_closed_form(&g, &c, &sigma).unwrap();
            prop_assert!((mixed - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
            if any_rater && !any_newcomer {
                let pure = profit_raters_closed_form(&g, &c, &sigma).unwrap();
                prop_assert!((pure - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
            }
            if any_newcomer && !any_rater {
                let pure = profit_nonraters_closed_form(&g, &c, &sigma).unwrap();
                prop_assert!((pure - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
            }
        }

        #[test]
        fn clustered_single_user_form_matches_the_oracle(
            (g, c) in arb_instance(),
            seed in 0u64..10_000,
        ) {
            use rand::Rng as _;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let i = ItemId(rng.random_range(0..g.n_items()));
            if g.raters_of(i).is_empty() {
                return Ok(());
            }
            let split = rng.random_range(1..g.n_users());
            let p = AffinityPartition::from_components(
                g.n_users(),
                vec![
                    (0..split).map(UserId).collect(),
                    (split..g.n_users()).map(UserId).collect(),
                ],
            )
            .unwrap();
            let v = UserId(rng.random_range(0..g.n_users()));
            let rho = match g.rating(v, i) {
                Some(r) if 1.0 - r > 1e-9 => rng.random_range(0.0..(1.0 - r)),
                Some(_) => return Ok(()),
                None => rng.random_range(0.01..1.0),
            };
            let sigma = BribingStrategy::elementary(i, v, rho);
            let closed = profit_multipartite_closed_form(&g, &p, &c, &sigma).unwrap();
            let oracle = profit_oracle(&g, &sigma, &c, BribeMode::Multipartite(&p)).unwrap();
            prop_assert!((closed - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }
}
