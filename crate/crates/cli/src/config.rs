//! Layered experiment configuration. Precedence, lowest to highest: built-in
//! defaults, a plain key=value config file, explicit command-line flags, and
//! the RANKFORGE_SEED environment variable (seed only). Every output file
//! embeds the resolved pairs plus a short hash of them, so a CSV always
//! names the exact configuration that produced it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rankforge_core::attack::{AttackDirection, AttackKind};
use rankforge_core::bribery::SweepStrategy;
use rankforge_core::engine::{Aggregator, DecayFunction, EngineConfig};
use rankforge_core::similarity::{SimilarityMeasure, SimilarityParams};
use sha2::{Digest, Sha256};

/// Message plus the process exit code it maps to: 1 usage, 2 data or IO,
/// 3 non-convergence.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            msg: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }

    pub fn diverged(msg: impl Into<String>) -> Self {
        Self {
            code: 3,
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<rankforge_core::graph::GraphError> for CliError {
    fn from(e: rankforge_core::graph::GraphError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<rankforge_core::engine::EngineError> for CliError {
    fn from(e: rankforge_core::engine::EngineError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<rankforge_core::cluster::ClusterError> for CliError {
    fn from(e: rankforge_core::cluster::ClusterError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<rankforge_core::similarity::SimilarityError> for CliError {
    fn from(e: rankforge_core::similarity::SimilarityError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<rankforge_core::synth::SynthError> for CliError {
    fn from(e: rankforge_core::synth::SynthError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<rankforge_core::attack::AttackError> for CliError {
    fn from(e: rankforge_core::attack::AttackError) -> Self {
        use rankforge_core::attack::AttackError::*;
        match e {
            NotEnoughFillers { .. } => Self::data(e.to_string()),
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<rankforge_core::bribery::BriberyError> for CliError {
    fn from(e: rankforge_core::bribery::BriberyError) -> Self {
        match e {
            rankforge_core::bribery::BriberyError::Engine(inner) => inner.into(),
            other => Self::data(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Bipartite,
    Multipartite,
}

impl FromStr for RankMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bipartite" => Ok(Self::Bipartite),
            "multipartite" => Ok(Self::Multipartite),
            other => Err(format!(
                "unknown mode {other:?} (expected bipartite or multipartite)"
            )),
        }
    }
}

impl fmt::Display for RankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bipartite => "bipartite",
            Self::Multipartite => "multipartite",
        })
    }
}

/// Every tunable in one flat namespace shared by the config file and the
/// flags; each command reads the subset it needs.
#[derive(Debug, Clone)]
pub struct Settings {
    pub scale: (u32, u32),
    pub mode: RankMode,
    pub baseline_li: bool,
    pub lambda: f64,
    pub p: u32,
    pub aggregator: Aggregator,
    pub decay: DecayFunction,
    pub upsilon: f64,
    pub s: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub safeguard: bool,
    pub measure: SimilarityMeasure,
    pub theta: usize,
    pub alpha: f64,
    pub seed: u64,
    pub dump_similarity: bool,
    pub attack: AttackKind,
    pub proportions: Vec<f64>,
    pub alpha_grid: Option<Vec<f64>>,
    pub target: Option<String>,
    pub direction: AttackDirection,
    pub filler_count: usize,
    pub poisson_lambda: f64,
    pub strategies: Vec<SweepStrategy>,
    pub dynamic: bool,
    pub users: usize,
    pub items: usize,
    pub groups: usize,
    pub ratings_per_user: usize,
    pub noise: f64,
    pub ratings_total: Option<usize>,
    pub out: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            scale: (1, 5),
            mode: RankMode::Bipartite,
            baseline_li: false,
            lambda: 0.3,
            p: 1,
            aggregator: Aggregator::Avg,
            decay: DecayFunction::F1,
            upsilon: 0.5,
            s: 5.0,
            epsilon: 1e-9,
            max_iters: 1000,
            safeguard: false,
            measure: SimilarityMeasure::Ls,
            theta: 3,
            alpha: 0.8,
            seed: 0,
            dump_similarity: false,
            attack: AttackKind::LoveHate,
            proportions: vec![0.0, 0.1, 0.25, 0.5, 0.75],
            alpha_grid: None,
            target: None,
            direction: AttackDirection::Nuke,
            filler_count: 9,
            poisson_lambda: 5.0,
            strategies: SweepStrategy::ALL.to_vec(),
            dynamic: false,
            users: 200,
            items: 50,
            groups: 2,
            ratings_per_user: 10,
            noise: 0.0,
            ratings_total: None,
            out: PathBuf::from("."),
        }
    }
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> CliError {
    CliError::usage(format!("config key {key}: bad value {value:?}: {why}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn parse_scale(key: &str, value: &str) -> Result<(u32, u32), CliError> {
    let (lo, hi) = value
        .trim()
        .split_once("..")
        .ok_or_else(|| bad(key, value, "expected the form LO..HI, e.g. 1..5"))?;
    let lo: u32 = num(key, lo)?;
    let hi: u32 = num(key, hi)?;
    if hi <= lo {
        return Err(bad(key, value, "upper bound must exceed lower bound"));
    }
    Ok((lo, hi))
}

/// Comma-separated floats, sorted ascending with exact duplicates removed.
fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let mut vals = Vec::new();
    for piece in value.split(',') {
        let v: f64 = num(key, piece)?;
        if !v.is_finite() {
            return Err(bad(key, value, "entries must be finite"));
        }
        vals.push(v);
    }
    if vals.is_empty() {
        return Err(bad(key, value, "list is empty"));
    }
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    Ok(vals)
}

fn parse_strategies(key: &str, value: &str) -> Result<Vec<SweepStrategy>, CliError> {
    let mut picked = [false; 4];
    for piece in value.split(',') {
        let s: SweepStrategy = piece.trim().parse().map_err(|e| bad(key, value, e))?;
        let idx = SweepStrategy::ALL.iter().position(|&x| x == s).unwrap();
        picked[idx] = true;
    }
    let list: Vec<SweepStrategy> = SweepStrategy::ALL
        .into_iter()
        .zip(picked)
        .filter_map(|(s, keep)| keep.then_some(s))
        .collect();
    if list.is_empty() {
        return Err(bad(key, value, "list is empty"));
    }
    Ok(list)
}

impl Settings {
    /// Applies one key=value pair; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "scale" => self.scale = parse_scale(key, v)?,
            "mode" => self.mode = v.parse().map_err(|e| bad(key, v, e))?,
            "baseline" => {
                self.baseline_li = match v {
                    "li" => true,
                    "none" => false,
                    _ => return Err(bad(key, v, "expected li or none")),
                }
            }
            "lambda" => self.lambda = num(key, v)?,
            "p" => self.p = num(key, v)?,
            "aggregator" => self.aggregator = v.parse().map_err(|e| bad(key, v, e))?,
            "decay" => self.decay = v.parse().map_err(|e| bad(key, v, e))?,
            "upsilon" => self.upsilon = num(key, v)?,
            "s" => self.s = num(key, v)?,
            "epsilon" => self.epsilon = num(key, v)?,
            "max-iters" => self.max_iters = num(key, v)?,
            "safeguard" => self.safeguard = parse_bool(key, v)?,
            "measure" => self.measure = v.parse().map_err(|e| bad(key, v, e))?,
            "theta" => self.theta = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "dump-similarity" => self.dump_similarity = parse_bool(key, v)?,
            "attack" => self.attack = v.parse().map_err(|e| bad(key, v, e))?,
            "proportions" => self.proportions = parse_grid(key, v)?,
            "alpha-grid" => self.alpha_grid = Some(parse_grid(key, v)?),
            "target" => self.target = Some(v.to_owned()),
            "direction" => self.direction = v.parse().map_err(|e| bad(key, v, e))?,
            "filler-count" => self.filler_count = num(key, v)?,
            "poisson-lambda" => self.poisson_lambda = num(key, v)?,
            "strategies" => self.strategies = parse_strategies(key, v)?,
            "dynamic" => self.dynamic = parse_bool(key, v)?,
            "users" => self.users = num(key, v)?,
            "items" => self.items = num(key, v)?,
            "groups" => self.groups = num(key, v)?,
            "ratings-per-user" => self.ratings_per_user = num(key, v)?,
            "noise" => self.noise = num(key, v)?,
            "ratings-total" => self.ratings_total = Some(num(key, v)?),
            "out" => self.out = PathBuf::from(v),
            other => {
                return Err(CliError::usage(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("config file {}: {e}", path.display())))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!(
                    "config file {} line {}: expected key=value",
                    path.display(),
                    idx + 1
                ))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_pairs(&mut self, pairs: &[(&str, String)]) -> Result<(), CliError> {
        for (key, value) in pairs {
            self.set(key, value)?;
        }
        Ok(())
    }

    /// RANKFORGE_SEED wins over both the file and the --seed flag.
    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(v) = std::env::var("RANKFORGE_SEED") {
            if !v.is_empty() {
                self.seed = v
                    .parse()
                    .map_err(|e| CliError::usage(format!("RANKFORGE_SEED {v:?}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            lambda: self.lambda,
            p: self.p,
            aggregator: self.aggregator,
            decay: self.decay,
            upsilon: self.upsilon,
            s: self.s,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            safeguard_denominator: self.safeguard,
        }
    }

    pub fn similarity_params(&self) -> SimilarityParams {
        SimilarityParams { theta: self.theta }
    }

    fn push_engine(&self, out: &mut Vec<(String, String)>) {
        out.push(("lambda".into(), self.lambda.to_string()));
        out.push(("p".into(), self.p.to_string()));
        out.push(("aggregator".into(), self.aggregator.to_string()));
        out.push(("decay".into(), self.decay.to_string()));
        out.push(("upsilon".into(), self.upsilon.to_string()));
        out.push(("s".into(), self.s.to_string()));
        out.push(("epsilon".into(), self.epsilon.to_string()));
        out.push(("max-iters".into(), self.max_iters.to_string()));
        out.push(("safeguard".into(), self.safeguard.to_string()));
    }

    fn push_similarity(&self, out: &mut Vec<(String, String)>) {
        out.push(("measure".into(), self.measure.to_string()));
        out.push(("theta".into(), self.theta.to_string()));
        out.push(("alpha".into(), self.alpha.to_string()));
    }

    fn push_common(&self, out: &mut Vec<(String, String)>, input: &Path) {
        out.push(("scale".into(), format!("{}..{}", self.scale.0, self.scale.1)));
        out.push(("seed".into(), self.seed.to_string()));
        out.push(("input".into(), input.display().to_string()));
    }

    pub fn pairs_rank(&self, input: &Path) -> Vec<(String, String)> {
        let mut out = Vec::new();
        self.push_common(&mut out, input);
        out.push(("mode".into(), self.mode.to_string()));
        out.push((
            "baseline".into(),
            if self.baseline_li { "li" } else { "none" }.into(),
        ));
        out.push((
            "dump-similarity".into(),
            self.dump_similarity.to_string(),
        ));
        self.push_engine(&mut out);
        self.push_similarity(&mut out);
        out
    }

    pub fn pairs_attack(&self, input: &Path, target: &str) -> Vec<(String, String)> {
        let mut out = Vec::new();
        self.push_common(&mut out, input);
        out.push(("mode".into(), self.mode.to_string()));
        out.push(("attack".into(), self.attack.to_string()));
        out.push(("proportions".into(), join_grid(&self.proportions)));
        out.push(("alpha-grid".into(), join_grid(&self.effective_alpha_grid())));
        out.push(("target".into(), target.into()));
        out.push(("direction".into(), self.direction.to_string()));
        out.push(("filler-count".into(), self.filler_count.to_string()));
        out.push(("poisson-lambda".into(), self.poisson_lambda.to_string()));
        self.push_engine(&mut out);
        self.push_similarity(&mut out);
        out
    }

    pub fn pairs_bribe(&self, input: &Path, target: &str) -> Vec<(String, String)> {
        let mut out = Vec::new();
        self.push_common(&mut out, input);
        out.push(("target".into(), target.into()));
        let names: Vec<String> = self.strategies.iter().map(|s| s.to_string()).collect();
        out.push(("strategies".into(), names.join(",")));
        out.push(("dynamic".into(), self.dynamic.to_string()));
        self.push_engine(&mut out);
        self.push_similarity(&mut out);
        out
    }

    pub fn pairs_synth(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("users".into(), self.users.to_string()),
            ("items".into(), self.items.to_string()),
            ("groups".into(), self.groups.to_string()),
            (
                "ratings-per-user".into(),
                self.ratings_per_user.to_string(),
            ),
            ("noise".into(), self.noise.to_string()),
            ("seed".into(), self.seed.to_string()),
        ];
        if let Some(total) = self.ratings_total {
            out.push(("ratings-total".into(), total.to_string()));
        }
        out
    }

    pub fn effective_alpha_grid(&self) -> Vec<f64> {
        self.alpha_grid.clone().unwrap_or_else(|| vec![self.alpha])
    }
}

fn join_grid(grid: &[f64]) -> String {
    let parts: Vec<String> = grid.iter().map(|v| v.to_string()).collect();
    parts.join(",")
}

/// Comment block naming the command, a 16-hex-digit hash of the sorted
/// resolved pairs, and the pairs themselves. The output directory is
/// deliberately absent so runs into different directories stay comparable.
pub fn header_block(command: &str, pairs: &[(String, String)]) -> String {
    let mut sorted: Vec<&(String, String)> = pairs.iter().collect();
    sorted.sort();
    let joined: String = sorted
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    let digest = Sha256::digest(joined.as_bytes());
    let hash: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    let mut block = format!("# rankforge {command}\n# config_hash={hash}\n");
    for (k, v) in sorted {
        block.push_str(&format!("# {k}={v}\n"));
    }
    block
}

/// Data cell formatting: fixed six decimals, absent or non-finite as "nan".
pub fn fmt6(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        "nan".into()
    }
}

pub fn fmt6_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), fmt6)
}

pub fn write_output(
    dir: &Path,
    name: &str,
    header: &str,
    body: &str,
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, format!("{header}{body}"))?;
    Ok(path)
}
