//! rankforge: reputation-based ranking experiments over user-item rating
//! CSVs. Subcommands rank a dataset, sweep attack scenarios, sweep bribing
//! strategies, and generate synthetic datasets; all outputs are seeded,
//! deterministic CSV files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};

use config::{CliError, Settings};

#[derive(Parser)]
#[command(name = "rankforge", version, about = "Reputation-based ranking experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank items and score user reputations from a rating CSV.
    Rank(RankArgs),
    /// Inject seeded attacks over a proportion grid and measure robustness.
    AttackSweep(AttackSweepArgs),
    /// Run bribing-strategy wealth sweeps against one target item.
    Bribe(BribeArgs),
    /// Generate a synthetic rating dataset with planted preference groups.
    GenSynthetic(SynthArgs),
}

/// Flags shared by every subcommand. Values are plain strings parsed by the
/// same code that reads the config file, so both layers accept the same
/// spellings. Precedence: defaults, then --config, then flags, then
/// RANKFORGE_SEED.
#[derive(Args, Default)]
struct CommonArgs {
    /// Plain key=value config file (# comments allowed).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory for the CSV files (default ".").
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// RNG seed for everything stochastic.
    #[arg(long, value_name = "N")]
    seed: Option<String>,
    /// Raw rating grid, e.g. 1..5.
    #[arg(long, value_name = "LO..HI")]
    scale: Option<String>,
    /// Penalty weight lambda in [0,1[.
    #[arg(long, value_name = "X")]
    lambda: Option<String>,
    /// Error exponent (positive integer).
    #[arg(long, value_name = "N")]
    p: Option<String>,
    /// Error aggregator: avg, max, or min.
    #[arg(long, value_name = "KIND")]
    aggregator: Option<String>,
    /// Decay function: f1, f2, f3, or f4.
    #[arg(long, value_name = "KIND")]
    decay: Option<String>,
    /// Lowest penalization for the f3 sigmoid, in ]0,1[.
    #[arg(long, value_name = "X")]
    upsilon: Option<String>,
    /// Item-count midpoint of the f3 sigmoid.
    #[arg(long, value_name = "X")]
    s: Option<String>,
    /// Convergence tolerance on the ranking vector.
    #[arg(long, value_name = "X")]
    epsilon: Option<String>,
    /// Iteration cap for the fixed point.
    #[arg(long = "max-iters", value_name = "N")]
    max_iters: Option<String>,
    /// Clamp the ranking denominator to guarantee convergence for any lambda.
    #[arg(long)]
    safeguard: bool,
    /// User similarity measure: ls, cs, or ks.
    #[arg(long, value_name = "KIND")]
    measure: Option<String>,
    /// Overlap confidence threshold for ls.
    #[arg(long, value_name = "N")]
    theta: Option<String>,
    /// Affinity threshold for clustering, in [0,1].
    #[arg(long, value_name = "X")]
    alpha: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        push_opt(&mut v, "out", &self.out);
        push_opt(&mut v, "seed", &self.seed);
        push_opt(&mut v, "scale", &self.scale);
        push_opt(&mut v, "lambda", &self.lambda);
        push_opt(&mut v, "p", &self.p);
        push_opt(&mut v, "aggregator", &self.aggregator);
        push_opt(&mut v, "decay", &self.decay);
        push_opt(&mut v, "upsilon", &self.upsilon);
        push_opt(&mut v, "s", &self.s);
        push_opt(&mut v, "epsilon", &self.epsilon);
        push_opt(&mut v, "max-iters", &self.max_iters);
        if self.safeguard {
            v.push(("safeguard", "true".into()));
        }
        push_opt(&mut v, "measure", &self.measure);
        push_opt(&mut v, "theta", &self.theta);
        push_opt(&mut v, "alpha", &self.alpha);
        v
    }
}

fn push_opt(v: &mut Vec<(&'static str, String)>, key: &'static str, value: &Option<String>) {
    if let Some(value) = value {
        v.push((key, value.clone()));
    }
}

#[derive(Args)]
struct RankArgs {
    /// Rating CSV: user_id,item_id,rating,timestamp (header optional).
    input: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Ranking mode: bipartite or multipartite.
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
    /// Use a comparison baseline instead of the engine: li or none.
    #[arg(long, value_name = "KIND")]
    baseline: Option<String>,
    /// Also write the pairwise similarity matrix (sparse).
    #[arg(long = "dump-similarity")]
    dump_similarity: bool,
}

#[derive(Args)]
struct AttackSweepArgs {
    input: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Ranking mode under attack: bipartite or multipartite.
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
    /// Attack generator: random_spam, love_hate, or reputation.
    #[arg(long, value_name = "KIND")]
    attack: Option<String>,
    /// Comma-separated attacker proportions.
    #[arg(long, value_name = "LIST")]
    proportions: Option<String>,
    /// Comma-separated affinity thresholds to sweep (multipartite).
    #[arg(long = "alpha-grid", value_name = "LIST")]
    alpha_grid: Option<String>,
    /// Target item id (default: the most voted item).
    #[arg(long, value_name = "ITEM")]
    target: Option<String>,
    /// Attack direction on the target: nuke or push.
    #[arg(long, value_name = "DIR")]
    direction: Option<String>,
    /// Filler items rated by each attacker.
    #[arg(long = "filler-count", value_name = "N")]
    filler_count: Option<String>,
    /// Mean of the per-spammer rating-count distribution.
    #[arg(long = "poisson-lambda", value_name = "X")]
    poisson_lambda: Option<String>,
}

#[derive(Args)]
struct BribeArgs {
    input: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Target item id (default: the most voted item).
    #[arg(long, value_name = "ITEM")]
    target: Option<String>,
    /// Comma-separated subset of sigma1..sigma4.
    #[arg(long, value_name = "LIST")]
    strategies: Option<String>,
    /// Recompute reputations after every elementary bribe.
    #[arg(long)]
    dynamic: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of users.
    #[arg(long, value_name = "N")]
    users: Option<String>,
    /// Number of items.
    #[arg(long, value_name = "N")]
    items: Option<String>,
    /// Number of planted preference groups.
    #[arg(long, value_name = "N")]
    groups: Option<String>,
    /// Ratings per user before any total override.
    #[arg(long = "ratings-per-user", value_name = "N")]
    ratings_per_user: Option<String>,
    /// Probability of a one-step rating perturbation.
    #[arg(long, value_name = "X")]
    noise: Option<String>,
    /// Exact total rating count, spread over users.
    #[arg(long = "ratings-total", value_name = "N")]
    ratings_total: Option<String>,
}

/// Defaults, then file, then flags, then the seed env var.
fn resolve(
    common: &CommonArgs,
    extra: Vec<(&'static str, String)>,
) -> Result<Settings, CliError> {
    let mut settings = Settings::default();
    if let Some(path) = &common.config {
        settings.apply_file(path)?;
    }
    settings.apply_pairs(&common.overrides())?;
    settings.apply_pairs(&extra)?;
    settings.apply_env()?;
    Ok(settings)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rank(args) => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "mode", &args.mode);
            push_opt(&mut extra, "baseline", &args.baseline);
            if args.dump_similarity {
                extra.push(("dump-similarity", "true".into()));
            }
            let settings = resolve(&args.common, extra)?;
            commands::cmd_rank(&args.input, &settings)
        }
        Command::AttackSweep(args) => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "mode", &args.mode);
            push_opt(&mut extra, "attack", &args.attack);
            push_opt(&mut extra, "proportions", &args.proportions);
            push_opt(&mut extra, "alpha-grid", &args.alpha_grid);
            push_opt(&mut extra, "target", &args.target);
            push_opt(&mut extra, "direction", &args.direction);
            push_opt(&mut extra, "filler-count", &args.filler_count);
            push_opt(&mut extra, "poisson-lambda", &args.poisson_lambda);
            let settings = resolve(&args.common, extra)?;
            commands::cmd_attack_sweep(&args.input, &settings)
        }
        Command::Bribe(args) => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "target", &args.target);
            push_opt(&mut extra, "strategies", &args.strategies);
            if args.dynamic {
                extra.push(("dynamic", "true".into()));
            }
            let settings = resolve(&args.common, extra)?;
            commands::cmd_bribe(&args.input, &settings)
        }
        Command::GenSynthetic(args) => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "users", &args.users);
            push_opt(&mut extra, "items", &args.items);
            push_opt(&mut extra, "groups", &args.groups);
            push_opt(&mut extra, "ratings-per-user", &args.ratings_per_user);
            push_opt(&mut extra, "noise", &args.noise);
            push_opt(&mut extra, "ratings-total", &args.ratings_total);
            let settings = resolve(&args.common, extra)?;
            commands::cmd_gen_synthetic(&settings)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("rankforge: {}", e.msg);
        process::exit(e.code);
    }
}
