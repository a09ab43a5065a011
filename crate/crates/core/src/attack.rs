//! Attack generators: augment a rating graph with fresh hostile raters.
//! Every generator is a pure function of (graph, spec), with all randomness
//! drawn from a seeded stream.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Poisson;
use thiserror::Error;

use crate::graph::{GraphBuilder, ItemId, RatingGraph, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    RandomSpam,
    LoveHate,
    Reputation,
}

impl FromStr for AttackKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, AttackError> {
        match s {
            "random_spam" => Ok(Self::RandomSpam),
            "love_hate" => Ok(Self::LoveHate),
            "reputation" => Ok(Self::Reputation),
            other => Err(AttackError::UnknownKind(other.to_owned())),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RandomSpam => "random_spam",
            Self::LoveHate => "love_hate",
            Self::Reputation => "reputation",
        })
    }
}

/// Whether the target is promoted or demolished; fillers get the opposite
/// extreme in the love/hate pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttackDirection {
    Push,
    #[default]
    Nuke,
}

impl FromStr for AttackDirection {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, AttackError> {
        match s {
            "push" => Ok(Self::Push),
            "nuke" => Ok(Self::Nuke),
            other => Err(AttackError::UnknownDirection(other.to_owned())),
        }
    }
}

impl fmt::Display for AttackDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Push => "push",
            Self::Nuke => "nuke",
        })
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("unknown attack kind {0:?}")]
    UnknownKind(String),
    #[error("unknown attack direction {0:?} (expected push or nuke)")]
    UnknownDirection(String),
    #[error("proportion {0} must be a finite non-negative fraction")]
    BadProportion(f64),
    #[error("poisson parameter {0} must be positive")]
    BadPoisson(f64),
    #[error("attack kind {0} requires a target item")]
    MissingTarget(AttackKind),
    #[error("spec kind {found} handed to the {expected} generator")]
    WrongKind {
        expected: AttackKind,
        found: AttackKind,
    },
    #[error("need {needed} filler items but only {available} non-target items exist")]
    NotEnoughFillers { needed: usize, available: usize },
}

/// Parameters shared by all generators. `proportion` scales against the total
/// rating count for spam and against the target's rater count for the
/// targeted attacks; the experiments sweep it over [0, 0.75].
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub proportion: f64,
    pub target: Option<ItemId>,
    pub direction: AttackDirection,
    pub filler_count: usize,
    pub poisson_lambda: f64,
    pub seed: u64,
}

impl AttackSpec {
    pub fn random_spam(proportion: f64, seed: u64) -> Self {
        Self {
            kind: AttackKind::RandomSpam,
            proportion,
            target: None,
            direction: AttackDirection::Nuke,
            filler_count: 9,
            poisson_lambda: 5.0,
            seed,
        }
    }

    pub fn love_hate(target: ItemId, direction: AttackDirection, proportion: f64, seed: u64) -> Self {
        Self {
            kind: AttackKind::LoveHate,
            proportion,
            target: Some(target),
            direction,
            filler_count: 9,
            poisson_lambda: 5.0,
            seed,
        }
    }

    pub fn reputation(target: ItemId, direction: AttackDirection, proportion: f64, seed: u64) -> Self {
        Self {
            kind: AttackKind::Reputation,
            ..Self::love_hate(target, direction, proportion, seed)
        }
    }

    fn validate(&self, expected: AttackKind) -> Result<(), AttackError> {
        if self.kind != expected {
            return Err(AttackError::WrongKind {
                expected,
                found: self.kind,
            });
        }
        if !(self.proportion >= 0.0 && self.proportion.is_finite()) {
            return Err(AttackError::BadProportion(self.proportion));
        }
        if !(self.poisson_lambda > 0.0 && self.poisson_lambda.is_finite()) {
            return Err(AttackError::BadPoisson(self.poisson_lambda));
        }
        if self.kind != AttackKind::RandomSpam && self.target.is_none() {
            return Err(AttackError::MissingTarget(self.kind));
        }
        Ok(())
    }
}

/// Augmented graph plus bookkeeping on the injected users.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub graph: RatingGraph,
    pub attackers: Vec<UserId>,
    /// Planned filler items dropped because they held no current ranking
    /// (reputation attack only).
    pub skipped_fillers: usize,
}

/// Ceiling of proportion * n, tolerant of float fuzz around exact integers.
fn ceil_count(proportion: f64, n: usize) -> usize {
    let x = proportion * n as f64;
    let r = x.round();
    let v = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    v as usize
}

fn fresh_user(b: &mut GraphBuilder, counter: &mut usize) -> UserId {
    loop {
        let name = format!("atk{:04}", *counter);
        *counter += 1;
        if !b.has_user(&name) {
            return b.user(&name);
        }
    }
}

/// Injects ceil(proportion * |ratings|) spam ratings. Each spammer rates
/// 1 + Poisson(lambda) items (truncated to what remains), items drawn by
/// popularity without replacement, values uniform over the raw grid.
pub fn gen_random_spam(g: &RatingGraph, spec: &AttackSpec) -> Result<AttackOutcome, AttackError> {
    spec.validate(AttackKind::RandomSpam)?;
    let total = ceil_count(spec.proportion, g.n_ratings());
    let scale = g.scale();
    let pop = g.popularity();
    let weights: Vec<f64> = pop.counts().iter().map(|&c| c as f64).collect();
    let rateable = pop.counts().iter().filter(|&&c| c > 0).count();
    let poisson = Poisson::new(spec.poisson_lambda)
        .map_err(|_| AttackError::BadPoisson(spec.poisson_lambda))?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut b = GraphBuilder::from_graph(g);
    let mut counter = 0;
    let mut attackers = Vec::new();
    let mut remaining = total;
    while remaining > 0 && rateable > 0 {
        let k = (1 + poisson.sample(&mut rng) as usize)
            .min(remaining)
            .min(rateable);
        let u = fresh_user(&mut b, &mut counter);
        attackers.push(u);
        let mut picker = WeightedIndex::new(weights.iter().copied())
            .expect("graph has rated items");
        for drawn in 0..k {
            let idx = picker.sample(&mut rng);
            let raw = rng.random_range(scale.r_bot..=scale.r_top);
            b.rate_raw(u, ItemId(idx), raw, 0);
            if drawn + 1 < k {
                picker
                    .update_weights(&[(idx, &0.0)])
                    .expect("nonzero weights remain");
            }
        }
        remaining -= k;
    }
    Ok(AttackOutcome {
        graph: b.finish(),
        attackers,
        skipped_fillers: 0,
    })
}

/// Injects ceil(proportion * |target raters|) attackers; each gives the target
/// the direction extreme and a fresh uniform set of filler items the opposite
/// extreme.
pub fn gen_love_hate(g: &RatingGraph, spec: &AttackSpec) -> Result<AttackOutcome, AttackError> {
    spec.validate(AttackKind::LoveHate)?;
    let target = spec.target.expect("validated");
    let scale = g.scale();
    let n_attackers = ceil_count(spec.proportion, g.raters_of(target).len());
    let fillers: Vec<ItemId> = g.items().filter(|&i| i != target).collect();
    if n_attackers > 0 && fillers.len() < spec.filler_count {
        return Err(AttackError::NotEnoughFillers {
            needed: spec.filler_count,
            available: fillers.len(),
        });
    }
    let (target_raw, filler_raw) = match spec.direction {
        AttackDirection::Nuke => (scale.r_bot, scale.r_top),
        AttackDirection::Push => (scale.r_top, scale.r_bot),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut b = GraphBuilder::from_graph(g);
    let mut counter = 0;
    let mut attackers = Vec::new();
    for _ in 0..n_attackers {
        let u = fresh_user(&mut b, &mut counter);
        attackers.push(u);
        b.rate_raw(u, target, target_raw, 0);
        for k in rand::seq::index::sample(&mut rng, fillers.len(), spec.filler_count) {
            b.rate_raw(u, fillers[k], filler_raw, 0);
        }
    }
    Ok(AttackOutcome {
        graph: b.finish(),
        attackers,
        skipped_fillers: 0,
    })
}

/// Attackers first mimic the current consensus by rating the most popular
/// non-target items at the grid value nearest each item's current ranking
/// (ties toward the lower grade), then hit the target with the direction
/// extreme. Fillers without a ranking are skipped and counted.
pub fn gen_reputation_attack(
    g: &RatingGraph,
    spec: &AttackSpec,
    current_rankings: &[Option<f64>],
) -> Result<AttackOutcome, AttackError> {
    spec.validate(AttackKind::Reputation)?;
    let target = spec.target.expect("validated");
    let scale = g.scale();
    let n_attackers = ceil_count(spec.proportion, g.raters_of(target).len());
    let pop = g.popularity();
    let mut plan: Vec<(ItemId, u32)> = Vec::new();
    let mut skipped = 0;
    for &i in pop
        .ranked()
        .iter()
        .filter(|&&i| i != target)
        .take(spec.filler_count)
    {
        match current_rankings.get(i.0).copied().flatten() {
            Some(r) => plan.push((i, scale.nearest_raw(r))),
            None => skipped += 1,
        }
    }
    let target_raw = match spec.direction {
        AttackDirection::Nuke => scale.r_bot,
        AttackDirection::Push => scale.r_top,
    };
    let mut b = GraphBuilder::from_graph(g);
    let mut counter = 0;
    let mut attackers = Vec::new();
    for _ in 0..n_attackers {
        let u = fresh_user(&mut b, &mut counter);
        attackers.push(u);
        for &(i, raw) in &plan {
            b.rate_raw(u, i, raw, 0);
        }
        b.rate_raw(u, target, target_raw, 0);
    }
    Ok(AttackOutcome {
        graph: b.finish(),
        attackers,
        skipped_fillers: skipped,
    })
}
