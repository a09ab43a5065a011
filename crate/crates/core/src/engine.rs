//! Alternating ranking / reputation fixed point.
//!
//! Rankings are reputation-weighted means of the ratings; reputations penalize
//! users in proportion to how far their ratings sit from the current rankings.
//! The two maps are iterated from unit reputations until the sup-norm change
//! of the ranking vector drops below epsilon.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{RatingGraph, UserId};

/// How a user's per-item errors combine into one belief divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregator {
    #[default]
    Avg,
    Max,
    Min,
}

impl FromStr for Aggregator {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, EngineError> {
        match s {
            "avg" => Ok(Self::Avg),
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            other => Err(EngineError::BadConfig(format!(
                "unknown aggregator {other:?} (expected avg, max, or min)"
            ))),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Avg => "avg",
            Self::Max => "max",
            Self::Min => "min",
        })
    }
}

/// Weight applied to the divergence as a function of how many ratings the
/// user holds. f1 is constant, f2 and f3 phase in with activity, f4 is the
/// discrete step used by the counterexamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecayFunction {
    #[default]
    F1,
    F2,
    F3,
    F4,
}

impl FromStr for DecayFunction {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, EngineError> {
        match s {
            "f1" => Ok(Self::F1),
            "f2" => Ok(Self::F2),
            "f3" => Ok(Self::F3),
            "f4" => Ok(Self::F4),
            other => Err(EngineError::BadConfig(format!(
                "unknown decay function {other:?} (expected f1, f2, f3, or f4)"
            ))),
        }
    }
}

impl fmt::Display for DecayFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::F1 => "f1",
            Self::F2 => "f2",
            Self::F3 => "f3",
            Self::F4 => "f4",
        })
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    BadConfig(String),
    #[error(
        "lambda {lambda} is not below the stability bound {bound:.6}; \
         enable the denominator safeguard to run anyway"
    )]
    UnsafeLambda { lambda: f64, bound: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub lambda: f64,
    pub p: u32,
    pub aggregator: Aggregator,
    pub decay: DecayFunction,
    /// Floor of the f3 sigmoid, as a fraction of lambda.
    pub upsilon: f64,
    /// Midpoint of the f3 sigmoid in number of ratings.
    pub s: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Replaces the ranking denominator by max(sum of reputations, 1),
    /// trading exactness for unconditional stability.
    pub safeguard_denominator: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            p: 1,
            aggregator: Aggregator::Avg,
            decay: DecayFunction::F1,
            upsilon: 0.5,
            s: 5.0,
            epsilon: 1e-9,
            max_iters: 1000,
            safeguard_denominator: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(EngineError::BadConfig(format!(
                "lambda {} must be in [0, 1]",
                self.lambda
            )));
        }
        if self.p < 1 {
            return Err(EngineError::BadConfig("p must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.upsilon) {
            return Err(EngineError::BadConfig(format!(
                "upsilon {} must be in [0, 1]",
                self.upsilon
            )));
        }
        if !self.s.is_finite() {
            return Err(EngineError::BadConfig("s must be finite".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(EngineError::BadConfig(format!(
                "epsilon {} must be positive and finite",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(EngineError::BadConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// Largest admissible lambda for a rating spread delta, exclusive.
    pub fn stability_bound(delta: f64) -> f64 {
        1.0 / (1.0 + delta)
    }
}

/// Converged (or truncated) output of the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct EngineState {
    /// Per-user reputation in [0, 1]; users without ratings hold 1.
    pub reputations: Vec<f64>,
    /// Per-item normalized ranking; None when the item has no in-scope rater.
    pub rankings: Vec<Option<f64>>,
    /// Refinement rounds executed after the initial ranking pass.
    pub iterations: usize,
    pub converged: bool,
}

/// Divergence weight for a user holding `x` ratings.
pub fn decay_eval(kind: DecayFunction, x: usize, lambda: f64, upsilon: f64, s: f64) -> f64 {
    let xf = x as f64;
    match kind {
        DecayFunction::F1 => lambda,
        DecayFunction::F2 => lambda * (1.0 - (-xf / 2.0).exp()),
        DecayFunction::F3 => lambda * (1.0 - (1.0 - upsilon) / (1.0 + (s - xf).exp())),
        DecayFunction::F4 => {
            if x >= 10 {
                1.0
            } else {
                0.5
            }
        }
    }
}

fn decay_weight(cfg: &EngineConfig, n_ratings: usize) -> f64 {
    decay_eval(cfg.decay, n_ratings, cfg.lambda, cfg.upsilon, cfg.s)
}

/// Reputation-weighted mean rating per item; None for items without raters.
pub fn ranking_step(g: &RatingGraph, c: &[f64]) -> Vec<Option<f64>> {
    ranking_step_impl(g, c, None, false)
}

pub(crate) fn ranking_step_masked(
    g: &RatingGraph,
    c: &[f64],
    mask: &[bool],
    safeguard: bool,
) -> Vec<Option<f64>> {
    ranking_step_impl(g, c, Some(mask), safeguard)
}

fn ranking_step_impl(
    g: &RatingGraph,
    c: &[f64],
    mask: Option<&[bool]>,
    safeguard: bool,
) -> Vec<Option<f64>> {
    g.items()
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut any = false;
            for &(u, value) in g.raters_of(i) {
                if mask.is_some_and(|m| !m[u.0]) {
                    continue;
                }
                num += c[u.0] * value;
                den += c[u.0];
                any = true;
            }
            if !any {
                return None;
            }
            if safeguard {
                den = den.max(1.0);
            }
            Some(num / den)
        })
        .collect()
}

/// One reputation update against fixed rankings. Users without ratings (or
/// outside the mask) keep their current value untouched only in the masked
/// variant; the public entry point assigns them reputation 1.
pub fn reputation_step(g: &RatingGraph, rankings: &[Option<f64>], cfg: &EngineConfig) -> Vec<f64> {
    let mut c = vec![1.0; g.n_users()];
    reputation_step_into(&mut c, g, rankings, cfg, None);
    c
}

fn reputation_step_into(
    c: &mut [f64],
    g: &RatingGraph,
    rankings: &[Option<f64>],
    cfg: &EngineConfig,
    mask: Option<&[bool]>,
) {
    for u in g.users() {
        if mask.is_some_and(|m| !m[u.0]) {
            continue;
        }
        let rated = g.ratings_of(u);
        if rated.is_empty() {
            c[u.0] = 1.0;
            continue;
        }
        let errs = rated.iter().filter_map(|r| {
            let rank = rankings[r.item.0]?;
            let e = (r.value - rank).abs();
            Some(if cfg.p == 1 { e } else { e.powi(cfg.p as i32) })
        });
        let divergence = match cfg.aggregator {
            Aggregator::Avg => {
                let (sum, n) = errs.fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
                if n == 0 {
                    c[u.0] = 1.0;
                    continue;
                }
                sum / n as f64
            }
            Aggregator::Max => match errs.fold(None, |m: Option<f64>, e| {
                Some(m.map_or(e, |m| m.max(e)))
            }) {
                Some(v) => v,
                None => {
                    c[u.0] = 1.0;
                    continue;
                }
            },
            Aggregator::Min => match errs.fold(None, |m: Option<f64>, e| {
                Some(m.map_or(e, |m| m.min(e)))
            }) {
                Some(v) => v,
                None => {
                    c[u.0] = 1.0;
                    continue;
                }
            },
        };
        c[u.0] = 1.0 - decay_weight(cfg, rated.len()) * divergence;
    }
}

/// Runs the full iteration on every user and item. `c0` seeds the initial
/// reputations (unit when absent); the converged point does not depend on it
/// for admissible lambda.
pub fn run_fixed_point(
    g: &RatingGraph,
    cfg: &EngineConfig,
    c0: Option<&[f64]>,
) -> Result<EngineState, EngineError> {
    cfg.validate()?;
    let bound = EngineConfig::stability_bound(g.scale().delta());
    if cfg.lambda >= bound && !cfg.safeguard_denominator {
        return Err(EngineError::UnsafeLambda {
            lambda: cfg.lambda,
            bound,
        });
    }
    if let Some(c0) = c0 {
        if c0.len() != g.n_users() {
            return Err(EngineError::BadConfig(format!(
                "initial reputations hold {} entries for {} users",
                c0.len(),
                g.n_users()
            )));
        }
        if c0.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(EngineError::BadConfig(
                "initial reputations must lie in [0, 1]".into(),
            ));
        }
    }
    Ok(fixed_point(g, cfg, c0, None))
}

/// Fixed point restricted to `members`: rankings only see in-scope raters and
/// only in-scope reputations move. Out-of-scope users keep reputation 1.
pub(crate) fn run_fixed_point_masked(
    g: &RatingGraph,
    cfg: &EngineConfig,
    members: &[UserId],
) -> EngineState {
    let mut mask = vec![false; g.n_users()];
    for u in members {
        mask[u.0] = true;
    }
    fixed_point(g, cfg, None, Some(&mask))
}

fn fixed_point(
    g: &RatingGraph,
    cfg: &EngineConfig,
    c0: Option<&[f64]>,
    mask: Option<&[bool]>,
) -> EngineState {
    let mut c = c0.map_or_else(|| vec![1.0; g.n_users()], <[f64]>::to_vec);
    let mut r = ranking_step_impl(g, &c, mask, cfg.safeguard_denominator);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        reputation_step_into(&mut c, g, &r, cfg, mask);
        let next = ranking_step_impl(g, &c, mask, cfg.safeguard_denominator);
        let delta = sup_change(&r, &next);
        r = next;
        iterations += 1;
        if delta <= cfg.epsilon {
            converged = true;
            break;
        }
    }
    EngineState {
        reputations: c,
        rankings: r,
        iterations,
        converged,
    }
}

fn sup_change(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).abs()))
        .fold(0.0, f64::max)
}

/// Fixed point of the precursor scheme this engine corrects: rankings divide
/// by the rater count instead of the reputation mass, so items unanimously
/// rated at the bottom grade sink below it.
pub fn li_baseline_fixed_point(
    g: &RatingGraph,
    lambda: f64,
    epsilon: f64,
    max_iters: usize,
) -> EngineState {
    let li_rank = |c: &[f64]| -> Vec<Option<f64>> {
        g.items()
            .map(|i| {
                let raters = g.raters_of(i);
                if raters.is_empty() {
                    return None;
                }
                let num: f64 = raters.iter().map(|&(u, v)| c[u.0] * v).sum();
                Some(num / raters.len() as f64)
            })
            .collect()
    };
    let li_rep = |r: &[Option<f64>]| -> Vec<f64> {
        g.users()
            .map(|u| {
                let rated = g.ratings_of(u);
                if rated.is_empty() {
                    return 1.0;
                }
                let err: f64 = rated
                    .iter()
                    .filter_map(|rt| Some((rt.value - r[rt.item.0]?).abs()))
                    .sum();
                1.0 - lambda / rated.len() as f64 * err
            })
            .collect()
    };
    let mut c = vec![1.0; g.n_users()];
    let mut r = li_rank(&c);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        c = li_rep(&r);
        let next = li_rank(&c);
        let delta = sup_change(&r, &next);
        r = next;
        iterations += 1;
        if delta <= epsilon {
            converged = true;
            break;
        }
    }
    EngineState {
        reputations: c,
        rankings: r,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, RatingScale};

    fn scale() -> RatingScale {
        RatingScale::new(1, 5).unwrap()
    }

    /// Dense 3x3 matrix whose first item is unanimously rated at the bottom
    /// grade; raw rows per user.
    fn skewed_graph() -> RatingGraph {
        let rows = [[1u32, 4, 1], [1, 2, 5], [1, 1, 5]];
        let mut b = GraphBuilder::new(scale());
        for (u, row) in rows.iter().enumerate() {
            let uid = b.user(&format!("u{u}"));
            for (i, &raw) in row.iter().enumerate() {
                let iid = b.item(&format!("i{i}"));
                b.rate_raw(uid, iid, raw, 0);
            }
        }
        b.finish()
    }

    #[test]
    fn unanimity_fixed_point() {
        let mut b = GraphBuilder::new(scale());
        let i = b.item("i");
        for u in 0..5 {
            let uid = b.user(&format!("u{u}"));
            b.rate_raw(uid, i, 3, 0);
        }
        let g = b.finish();
        let state = run_fixed_point(&g, &EngineConfig::default(), None).unwrap();
        assert!(state.converged);
        assert!((state.rankings[0].unwrap() - 0.6).abs() < 1e-15);
        assert!(state.reputations.iter().all(|&c| (c - 1.0).abs() < 1e-15));
    }

    #[test]
    fn ranking_step_weighted_mean() {
        let mut b = GraphBuilder::new(scale());
        let i = b.item("i");
        let u1 = b.user("u1");
        let u2 = b.user("u2");
        b.rate_raw(u1, i, 2, 0); // 0.4
        b.rate_raw(u2, i, 3, 0); // 0.6
        let g = b.finish();
        let r = ranking_step(&g, &[0.8, 0.9]);
        assert!((r[0].unwrap() - 0.5058823529411764).abs() < 1e-12);
    }

    #[test]
    fn ranking_step_skips_unrated_items() {
        let mut b = GraphBuilder::new(scale());
        let i = b.item("rated");
        b.item("orphan");
        let u = b.user("u");
        b.rate_raw(u, i, 4, 0);
        let g = b.finish();
        let r = ranking_step(&g, &[1.0]);
        assert_eq!(r, vec![Some(0.8), None]);
    }

    #[test]
    fn reputation_step_average_error() {
        let mut b = GraphBuilder::new(scale());
        let u = b.user("u");
        let i1 = b.item("i1");
        let i2 = b.item("i2");
        b.rate_raw(u, i1, 2, 0); // 0.4, error 0.4 vs 0.8
        b.rate_raw(u, i2, 3, 0); // 0.6, error 0.6 vs 0.0
        let g = b.finish();
        let c = reputation_step(&g, &[Some(0.8), Some(0.0)], &EngineConfig::default());
        assert!((c[0] - 0.85).abs() < 1e-12);
    }

    #[test]
    fn reputation_step_f4_low_activity() {
        let mut b = GraphBuilder::new(scale());
        let u = b.user("u");
        let i1 = b.item("i1");
        let i2 = b.item("i2");
        b.rate_raw(u, i1, 1, 0); // 0.2, error 0.8 vs 1.0
        b.rate_raw(u, i2, 5, 0); // 1.0, error 0.8 vs 0.2
        let g = b.finish();
        let cfg = EngineConfig {
            decay: DecayFunction::F4,
            ..EngineConfig::default()
        };
        let c = reputation_step(&g, &[Some(1.0), Some(0.2)], &cfg);
        assert!((c[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn reputation_of_inactive_user_is_one() {
        let mut b = GraphBuilder::new(scale());
        b.user("silent");
        let u = b.user("active");
        let i = b.item("i");
        b.rate_raw(u, i, 3, 0);
        let g = b.finish();
        let c = reputation_step(&g, &[Some(0.6)], &EngineConfig::default());
        assert_eq!(c[0], 1.0);
    }

    #[test]
    fn decay_shapes() {
        let eval = |kind, x| decay_eval(kind, x, 0.3, 0.5, 5.0);
        assert_eq!(eval(DecayFunction::F1, 1), 0.3);
        assert_eq!(eval(DecayFunction::F1, 100), 0.3);
        assert!((eval(DecayFunction::F2, 2) - 0.3 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(eval(DecayFunction::F2, 1) < eval(DecayFunction::F2, 5));
        // at the sigmoid midpoint the weight is lambda * (1 + upsilon) / 2
        assert!((eval(DecayFunction::F3, 5) - 0.225).abs() < 1e-15);
        assert_eq!(eval(DecayFunction::F4, 9), 0.5);
        assert_eq!(eval(DecayFunction::F4, 10), 1.0);
    }

    #[test]
    fn parse_enums() {
        assert_eq!("avg".parse::<Aggregator>().unwrap(), Aggregator::Avg);
        assert_eq!("f3".parse::<DecayFunction>().unwrap(), DecayFunction::F3);
        assert!("median".parse::<Aggregator>().is_err());
        assert!("f5".parse::<DecayFunction>().is_err());
    }

    #[test]
    fn skewed_matrix_fixed_point() {
        let g = skewed_graph();
        let cfg = EngineConfig {
            epsilon: 1e-12,
            ..EngineConfig::default()
        };
        let state = run_fixed_point(&g, &cfg, None).unwrap();
        assert!(state.converged);
        assert!((9..=11).contains(&state.iterations), "{}", state.iterations);
        let r: Vec<f64> = state.rankings.iter().map(|v| v.unwrap()).collect();
        assert!((r[0] - 0.2).abs() < 1e-12, "unanimous bottom grade holds");
        assert!((r[1] - 0.4619504994184737).abs() < 1e-9);
        assert!((r[2] - 0.7420107402456875).abs() < 1e-9);
        let want_c = [0.9119939759172929, 0.9680060240827071, 0.9480060240827071];
        for (got, want) in state.reputations.iter().zip(want_c) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_point_ignores_seed_reputations() {
        let g = skewed_graph();
        let cfg = EngineConfig::default();
        let a = run_fixed_point(&g, &cfg, None).unwrap();
        let b = run_fixed_point(&g, &cfg, Some(&[0.5, 0.7, 0.9])).unwrap();
        for (x, y) in a.rankings.iter().zip(&b.rankings) {
            assert!((x.unwrap() - y.unwrap()).abs() < 1e-7);
        }
    }

    #[test]
    fn li_baseline_drifts_below_bottom_grade() {
        let g = skewed_graph();
        let state = li_baseline_fixed_point(&g, 0.3, 1e-12, 1000);
        assert!(state.converged);
        let r0 = state.rankings[0].unwrap();
        assert!(r0 < 0.2, "unanimous bottom grade sinks: {r0}");
        let li_01 = li_baseline_fixed_point(&g, 0.1, 1e-12, 1000);
        assert!((li_01.rankings[0].unwrap() * 5.0 - 0.9805975309646324).abs() < 1e-6);
    }

    #[test]
    fn unsafe_lambda_rejected_without_safeguard() {
        let g = skewed_graph();
        let cfg = EngineConfig {
            lambda: 0.6,
            ..EngineConfig::default()
        };
        match run_fixed_point(&g, &cfg, None) {
            Err(EngineError::UnsafeLambda { lambda, bound }) => {
                assert_eq!(lambda, 0.6);
                assert!((bound - 5.0 / 9.0).abs() < 1e-12);
            }
            other => panic!("expected UnsafeLambda, got {other:?}"),
        }
        let safe = EngineConfig {
            safeguard_denominator: true,
            ..cfg
        };
        assert!(run_fixed_point(&g, &safe, None).is_ok());
    }

    #[test]
    fn config_validation() {
        let bad = EngineConfig {
            lambda: 1.5,
            ..EngineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EngineConfig {
            epsilon: 0.0,
            ..EngineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EngineConfig {
            p: 0,
            ..EngineConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(EngineConfig::default().validate().is_ok());
    }

    #[test]
    fn seed_reputation_length_checked() {
        let g = skewed_graph();
        let err = run_fixed_point(&g, &EngineConfig::default(), Some(&[1.0])).unwrap_err();
        assert!(matches!(err, EngineError::BadConfig(_)));
    }

    #[test]
    fn masked_run_restricts_raters() {
        // u0 and u1 rate item i0 apart; masking to u0 pins the ranking on u0.
        let mut b = GraphBuilder::new(scale());
        let i = b.item("i");
        let u0 = b.user("u0");
        let u1 = b.user("u1");
        b.rate_raw(u0, i, 5, 0);
        b.rate_raw(u1, i, 1, 0);
        let g = b.finish();
        let state = run_fixed_point_masked(&g, &EngineConfig::default(), &[u0]);
        assert!(state.converged);
        assert!((state.rankings[0].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(state.reputations[u1.0], 1.0, "out of scope keeps unit");
    }
}
