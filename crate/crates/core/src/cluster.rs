//! Affinity graph over users thresholded at alpha, partitioned into connected
//! components. Only pairs sharing at least one rated item are candidates; all
//! similarity measures vanish on the rest.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{RatingGraph, UserId};
use crate::similarity::{
    common_items, compression_similarity, encode_user, kolmogorov_similarity, linear_similarity,
    Compressor, Deflate, SimilarityError, SimilarityMeasure, SimilarityParams, UserEncoding,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentId(pub usize);

impl std::fmt::Display for ComponentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("alpha {0} must be in [0, 1]")]
    BadAlpha(f64),
    #[error("user index {0} outside the partitioned population")]
    UnknownUser(usize),
    #[error("components must partition the user set: {0}")]
    BadPartition(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// Users partitioned by the connected components of the affinity graph.
/// Components are numbered by their smallest member index.
#[derive(Debug, Clone)]
pub struct AffinityPartition {
    alpha: f64,
    edges: Vec<(UserId, UserId)>,
    components: Vec<Vec<UserId>>,
    component_of: Vec<ComponentId>,
}

impl AffinityPartition {
    /// Wraps an explicit partition (no edges), validating that the components
    /// are disjoint and cover users 0..n_users.
    pub fn from_components(
        n_users: usize,
        components: Vec<Vec<UserId>>,
    ) -> Result<Self, ClusterError> {
        let mut seen = vec![false; n_users];
        for comp in &components {
            for &u in comp {
                if u.0 >= n_users {
                    return Err(ClusterError::BadPartition(format!(
                        "user index {} out of range",
                        u.0
                    )));
                }
                if seen[u.0] {
                    return Err(ClusterError::BadPartition(format!(
                        "user index {} appears twice",
                        u.0
                    )));
                }
                seen[u.0] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(ClusterError::BadPartition(format!(
                "user index {missing} not covered"
            )));
        }
        Ok(Self::assemble(0.0, Vec::new(), components, n_users))
    }

    /// A single component holding every user.
    pub fn all_in_one(n_users: usize) -> Self {
        let all: Vec<UserId> = (0..n_users).map(UserId).collect();
        Self::assemble(0.0, Vec::new(), vec![all], n_users)
    }

    fn assemble(
        alpha: f64,
        edges: Vec<(UserId, UserId)>,
        mut components: Vec<Vec<UserId>>,
        n_users: usize,
    ) -> Self {
        for comp in &mut components {
            comp.sort_unstable();
        }
        components.sort_by_key(|comp| comp[0]);
        let mut component_of = vec![ComponentId(0); n_users];
        for (cid, comp) in components.iter().enumerate() {
            for &u in comp {
                component_of[u.0] = ComponentId(cid);
            }
        }
        Self {
            alpha,
            edges,
            components,
            component_of,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn n_users(&self) -> usize {
        self.component_of.len()
    }

    pub fn components(&self) -> &[Vec<UserId>] {
        &self.components
    }

    pub fn members(&self, c: ComponentId) -> &[UserId] {
        &self.components[c.0]
    }

    pub fn component_ids(&self) -> impl Iterator<Item = ComponentId> {
        (0..self.n_components()).map(ComponentId)
    }

    pub fn component_of(&self, u: UserId) -> Result<ComponentId, ClusterError> {
        self.component_of
            .get(u.0)
            .copied()
            .ok_or(ClusterError::UnknownUser(u.0))
    }

    /// Affinity edges (u, v) with u < v, sorted.
    pub fn edges(&self) -> &[(UserId, UserId)] {
        &self.edges
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(len: usize) -> Self {
        Self {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut x = x;
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Builds the affinity partition with the default deflate compressor.
pub fn build_affinity(
    g: &RatingGraph,
    measure: SimilarityMeasure,
    params: &SimilarityParams,
    alpha: f64,
) -> Result<AffinityPartition, ClusterError> {
    build_affinity_with(g, measure, params, alpha, &Deflate::default())
}

pub fn build_affinity_with(
    g: &RatingGraph,
    measure: SimilarityMeasure,
    params: &SimilarityParams,
    alpha: f64,
    compressor: &(dyn Compressor + Sync),
) -> Result<AffinityPartition, ClusterError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ClusterError::BadAlpha(alpha));
    }
    params.validate()?;
    let candidates = candidate_pairs(g);
    let scores: Vec<((UserId, UserId), f64)> = match measure {
        SimilarityMeasure::Ls => candidates
            .par_iter()
            .map(|&(u, v)| Ok(((u, v), linear_similarity(g, u, v, params))))
            .collect::<Result<_, SimilarityError>>()?,
        SimilarityMeasure::Cs | SimilarityMeasure::Ks => {
            // compress each profile once; pairs only pay for concatenations
            let encodings: Vec<UserEncoding> =
                g.users().map(|u| encode_user(g, u)).collect();
            let lens: Vec<usize> = encodings
                .par_iter()
                .map(|e| compressor.compressed_len(e.as_bytes()))
                .collect::<std::io::Result<_>>()
                .map_err(SimilarityError::from)?;
            candidates
                .par_iter()
                .map(|&(u, v)| {
                    let s = match measure {
                        SimilarityMeasure::Ks => {
                            crate::similarity::ks_value(lens[u.0], lens[v.0])
                        }
                        _ => {
                            let joint = |a: UserId, b: UserId| {
                                let mut buf = encodings[a.0].as_bytes().to_vec();
                                buf.extend_from_slice(encodings[b.0].as_bytes());
                                compressor.compressed_len(&buf)
                            };
                            crate::similarity::cs_value(
                                lens[u.0],
                                lens[v.0],
                                joint(u, v)?,
                                joint(v, u)?,
                            )
                        }
                    };
                    Ok(((u, v), s))
                })
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(SimilarityError::from)?
        }
    };
    partition_from_scores(g.n_users(), alpha, &scores)
}

/// Thresholds an explicit pairwise score list at alpha (strictly) and
/// partitions users by connected components, for similarity matrices built
/// outside the graph pipeline.
pub fn partition_from_scores(
    n_users: usize,
    alpha: f64,
    scores: &[((UserId, UserId), f64)],
) -> Result<AffinityPartition, ClusterError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ClusterError::BadAlpha(alpha));
    }
    let mut edges = Vec::new();
    for &((u, v), s) in scores {
        if u.0 >= n_users || v.0 >= n_users {
            return Err(ClusterError::UnknownUser(u.0.max(v.0)));
        }
        if s > alpha {
            edges.push((u, v));
        }
    }
    let mut uf = UnionFind::new(n_users);
    for &(u, v) in &edges {
        uf.union(u.0, v.0);
    }
    let mut by_root: Vec<Vec<UserId>> = vec![Vec::new(); n_users];
    for u in 0..n_users {
        by_root[uf.find(u)].push(UserId(u));
    }
    let components: Vec<Vec<UserId>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
    Ok(AffinityPartition::assemble(alpha, edges, components, n_users))
}

/// Unordered user pairs sharing at least one item, each listed once as (u, v)
/// with u < v.
fn candidate_pairs(g: &RatingGraph) -> Vec<(UserId, UserId)> {
    let mut pairs = BTreeSet::new();
    for i in g.items() {
        let raters = g.raters_of(i);
        for (k, &(u, _)) in raters.iter().enumerate() {
            for &(v, _) in &raters[k + 1..] {
                pairs.insert((u, v));
            }
        }
    }
    pairs.into_iter().collect()
}

/// Similarity score under one measure, for diagnostics and matrix dumps.
pub fn score_pair(
    g: &RatingGraph,
    measure: SimilarityMeasure,
    params: &SimilarityParams,
    u: UserId,
    v: UserId,
) -> Result<f64, SimilarityError> {
    match measure {
        SimilarityMeasure::Ls => Ok(linear_similarity(g, u, v, params)),
        SimilarityMeasure::Cs => {
            let nonempty = !common_items(g, u, v).is_empty();
            compression_similarity(
                &encode_user(g, u),
                &encode_user(g, v),
                nonempty,
                &Deflate::default(),
            )
        }
        SimilarityMeasure::Ks => {
            let nonempty = !common_items(g, u, v).is_empty();
            kolmogorov_similarity(
                &encode_user(g, u),
                &encode_user(g, v),
                nonempty,
                &Deflate::default(),
            )
        }
    }
}
