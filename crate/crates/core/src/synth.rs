//! Deterministic synthetic rating graphs with planted group structure.
//!
//! Users and items are split into `groups` contiguous blocks. A user rates
//! items of the own block at the top grade and everything else at the bottom
//! grade; `noise` flips a rating one grade up or down. Item coverage comes
//! first: item j is forced onto user j mod users, so the generated graph has
//! exactly the requested number of items, then each user's remaining quota is
//! sampled uniformly from the items it does not already rate.

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::graph::{GraphBuilder, RatingGraph, RatingScale};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("users, items and groups must all be positive")]
    EmptyShape,
    #[error("{groups} groups cannot partition {users} users and {items} items")]
    TooManyGroups {
        groups: usize,
        users: usize,
        items: usize,
    },
    #[error("noise {0} must lie in [0, 1]")]
    BadNoise(f64),
    #[error("user {user} owes {quota} ratings but must cover {forced} items of at most {items}")]
    BadQuota {
        user: usize,
        quota: usize,
        forced: usize,
        items: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub groups: usize,
    pub ratings_per_user: usize,
    pub noise: f64,
    pub seed: u64,
    /// When set, overrides `ratings_per_user` with quotas that sum to this
    /// exact total, spread as evenly as possible.
    pub ratings_total: Option<usize>,
}

impl SyntheticSpec {
    pub fn new(users: usize, items: usize, groups: usize, ratings_per_user: usize) -> Self {
        Self {
            users,
            items,
            groups,
            ratings_per_user,
            noise: 0.0,
            seed: 0,
            ratings_total: None,
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_total(mut self, total: usize) -> Self {
        self.ratings_total = Some(total);
        self
    }

    pub fn group_of_user(&self, u: usize) -> usize {
        u * self.groups / self.users
    }

    pub fn block_of_item(&self, i: usize) -> usize {
        i * self.groups / self.items
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.users == 0 || self.items == 0 || self.groups == 0 {
            return Err(SynthError::EmptyShape);
        }
        if self.groups > self.users || self.groups > self.items {
            return Err(SynthError::TooManyGroups {
                groups: self.groups,
                users: self.users,
                items: self.items,
            });
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(SynthError::BadNoise(self.noise));
        }
        Ok(())
    }

    /// Per-user rating quotas. With an explicit total the first
    /// `total mod users` users carry one extra rating.
    fn quotas(&self) -> Vec<usize> {
        match self.ratings_total {
            None => vec![self.ratings_per_user; self.users],
            Some(total) => {
                let base = total / self.users;
                let extra = total % self.users;
                (0..self.users)
                    .map(|u| base + usize::from(u < extra))
                    .collect()
            }
        }
    }
}

fn pad_width(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

/// Maps an index into the complement of `forced` (both over 0..items).
fn skip_forced(k: usize, forced: &[usize]) -> usize {
    let mut m = k;
    for &p in forced {
        if p <= m {
            m += 1;
        } else {
            break;
        }
    }
    m
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<RatingGraph, SynthError> {
    spec.validate()?;
    let scale = RatingScale::new(1, 5).expect("static bounds");
    let quotas = spec.quotas();
    let uw = pad_width(spec.users);
    let iw = pad_width(spec.items);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut b = GraphBuilder::new(scale);
    let users: Vec<_> = (0..spec.users)
        .map(|u| b.user(&format!("u{:0>1$}", u, uw)))
        .collect();
    let items: Vec<_> = (0..spec.items)
        .map(|i| b.item(&format!("i{:0>1$}", i, iw)))
        .collect();
    for (u, &quota) in quotas.iter().enumerate() {
        let forced: Vec<usize> = (u..spec.items).step_by(spec.users).collect();
        if quota < forced.len() || quota > spec.items {
            return Err(SynthError::BadQuota {
                user: u,
                quota,
                forced: forced.len(),
                items: spec.items,
            });
        }
        let extra = quota - forced.len();
        let mut picked: Vec<usize> = sample(&mut rng, spec.items - forced.len(), extra)
            .into_iter()
            .map(|k| skip_forced(k, &forced))
            .collect();
        picked.extend_from_slice(&forced);
        picked.sort_unstable();
        let group = spec.group_of_user(u);
        for i in picked {
            let mut raw: i64 = if spec.block_of_item(i) == group {
                scale.r_top as i64
            } else {
                scale.r_bot as i64
            };
            if spec.noise > 0.0 && rng.random::<f64>() < spec.noise {
                raw += if rng.random::<bool>() { 1 } else { -1 };
                raw = raw.clamp(scale.r_bot as i64, scale.r_top as i64);
            }
            b.rate_raw(users[u], items[i], raw as u32, 0);
        }
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::build_affinity;
    use crate::similarity::{SimilarityMeasure, SimilarityParams};
    use crate::UserId;

    #[test]
    fn exact_shape_and_coverage() {
        let g = gen_synthetic(&SyntheticSpec::new(12, 9, 3, 5)).unwrap();
        assert_eq!(g.n_users(), 12);
        assert_eq!(g.n_items(), 9);
        assert_eq!(g.n_ratings(), 60);
        for i in g.items() {
            assert!(!g.raters_of(i).is_empty(), "item {i} uncovered");
        }
        for u in g.users() {
            assert_eq!(g.ratings_of(u).len(), 5);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec::new(20, 15, 2, 8).with_noise(0.3).with_seed(5);
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let c = gen_synthetic(&spec.clone().with_seed(6)).unwrap();
        assert_ne!(a.to_csv_string(), c.to_csv_string());
    }

    #[test]
    fn noiseless_groups_recovered_by_clustering() {
        let spec = SyntheticSpec::new(40, 30, 2, 20).with_seed(1);
        let g = gen_synthetic(&spec).unwrap();
        let p =
            build_affinity(&g, SimilarityMeasure::Ls, &SimilarityParams::default(), 0.5).unwrap();
        assert_eq!(p.n_components(), 2);
        for u in 0..40 {
            let groups_component = p.component_of(UserId(u)).unwrap();
            let anchor = p.component_of(UserId(if u < 20 { 0 } else { 20 })).unwrap();
            assert_eq!(groups_component, anchor, "user {u} strayed from its group");
        }
    }

    #[test]
    fn block_profile_without_noise() {
        let spec = SyntheticSpec::new(10, 10, 2, 10);
        let g = gen_synthetic(&spec).unwrap();
        for u in 0..10usize {
            for r in g.ratings_of(UserId(u)) {
                let want = if spec.block_of_item(r.item.0) == spec.group_of_user(u) {
                    1.0
                } else {
                    0.2
                };
                assert_eq!(r.value, want);
            }
        }
    }

    #[test]
    fn explicit_total_is_exact() {
        let spec = SyntheticSpec::new(51, 17, 1, 0).with_total(371).with_seed(2);
        let g = gen_synthetic(&spec).unwrap();
        assert_eq!(g.n_users(), 51);
        assert_eq!(g.n_items(), 17);
        assert_eq!(g.n_ratings(), 371);
        for i in g.items() {
            assert!(!g.raters_of(i).is_empty());
        }
    }

    #[test]
    fn full_noise_stays_on_grid() {
        let g = gen_synthetic(&SyntheticSpec::new(8, 8, 2, 8).with_noise(1.0).with_seed(3)).unwrap();
        for u in g.users() {
            for r in g.ratings_of(u) {
                assert!((0.2..=1.0).contains(&r.value));
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            gen_synthetic(&SyntheticSpec::new(0, 5, 1, 3)),
            Err(SynthError::EmptyShape)
        ));
        assert!(matches!(
            gen_synthetic(&SyntheticSpec::new(4, 5, 6, 3)),
            Err(SynthError::TooManyGroups { .. })
        ));
        assert!(matches!(
            gen_synthetic(&SyntheticSpec::new(4, 5, 1, 3).with_noise(1.5)),
            Err(SynthError::BadNoise(_))
        ));
        // 2 users over 6 items force 3 items each; quota 2 cannot cover them
        assert!(matches!(
            gen_synthetic(&SyntheticSpec::new(2, 6, 1, 2)),
            Err(SynthError::BadQuota { forced: 3, .. })
        ));
        assert!(matches!(
            gen_synthetic(&SyntheticSpec::new(3, 4, 1, 5)),
            Err(SynthError::BadQuota { .. })
        ));
    }
}
