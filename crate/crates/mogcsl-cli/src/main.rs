//! Command-line driver for reproducible MOGCSL experiment runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mogcsl::data::FileFormat;
use mogcsl::goalsel::StatMode;
use mogcsl_cli::config::{
    self, DenoiseExpConfig, EvaluateConfig, GenerateConfig, GenerateEnv, GoalStrategy,
    RelabelConfig, SweepConfig, TrainConfig, VerifyConfig,
};
use mogcsl_cli::error::CliError;

#[derive(Parser)]
#[command(
    name = "mogcsl",
    version,
    about = "Multi-objective goal-conditioned supervised learning: data generation, training, goal selection, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (noisy-recsys trajectories or the
    /// denoising benchmark).
    Generate(GenerateArgs),
    /// Relabel trajectories with cumulative-reward goals.
    Relabel(RelabelArgs),
    /// Train the goal-conditioned policy (or the scalarized baseline).
    Train(TrainArgs),
    /// Evaluate checkpoints with a goal strategy (HR@k / NDCG@k per
    /// objective).
    Evaluate(EvaluateArgs),
    /// Evaluate the statistical strategy across a grid of scaling
    /// factors.
    SweepLambda(SweepArgs),
    /// Run the three-variant denoising comparison.
    DenoiseExp(DenoiseExpArgs),
    /// Verify the achieved-goal distribution claims on tiny tabular
    /// specs.
    VerifyTheorem1(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for all outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse a non-empty output directory.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn base<C: Default + for<'de> serde::Deserialize<'de>>(
    common: &CommonArgs,
) -> Result<C, CliError> {
    match &common.config {
        Some(path) => config::load_config_file(path),
        None => Ok(C::default()),
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which environment to draw from: noisy-recsys or denoise.
    #[arg(long)]
    env: Option<String>,
    /// Number of trajectories (noisy-recsys) or samples (denoise).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    phases: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    reward_scale: Option<f64>,
    #[arg(long)]
    behavior_epsilon: Option<f64>,
    /// Denoise-only: goal threshold below which labels are corrupted.
    #[arg(long, allow_hyphen_values = true)]
    noise_threshold: Option<f64>,
}

impl GenerateArgs {
    fn into_config(self) -> Result<GenerateConfig, CliError> {
        let mut cfg: GenerateConfig = base(&self.common)?;
        if let Some(env) = self.env {
            cfg.env = match env.as_str() {
                "noisy-recsys" => GenerateEnv::NoisyRecsys,
                "denoise" => GenerateEnv::Denoise,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown env {other:?} (expected noisy-recsys or denoise)"
                    )));
                }
            };
        }
        merge(&mut cfg.n, self.n);
        merge(&mut cfg.seed, self.common.seed);
        merge(&mut cfg.out, self.common.out);
        cfg.force |= self.common.force;
        merge(&mut cfg.recsys.noise_level, self.noise_level);
        merge(&mut cfg.recsys.n_phases, self.phases);
        merge(&mut cfg.recsys.n_actions, self.items);
        merge(&mut cfg.recsys.horizon, self.horizon);
        merge(&mut cfg.recsys.reward_scale, self.reward_scale);
        merge(&mut cfg.behavior_epsilon, self.behavior_epsilon);
        merge(&mut cfg.denoise.noise_threshold, self.noise_threshold);
        require_out(&cfg.out)?;
        Ok(cfg)
    }
}

fn merge<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn require_out(out: &std::path::Path) -> Result<(), CliError> {
    if out.as_os_str().is_empty() {
        return Err(CliError::Usage("--out is required".into()));
    }
    Ok(())
}

fn parse_format(s: &str) -> Result<FileFormat, CliError> {
    match s {
        "jsonl" => Ok(FileFormat::Jsonl),
        "csv" => Ok(FileFormat::Csv),
        other => Err(CliError::Usage(format!(
            "unknown format {other:?} (expected jsonl or csv)"
        ))),
    }
}

#[derive(Args)]
struct RelabelArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

impl RelabelArgs {
    fn into_config(self) -> Result<RelabelConfig, CliError> {
        let mut cfg: RelabelConfig = base(&self.common)?;
        merge(&mut cfg.input, self.input);
        if let Some(f) = self.format {
            cfg.format = parse_format(&f)?;
        }
        merge(&mut cfg.out, self.common.out);
        cfg.force |= self.common.force;
        merge(&mut cfg.min_len, self.min_len);
        merge(&mut cfg.max_len, self.max_len);
        require_out(&cfg.out)?;
        if cfg.input.as_os_str().is_empty() {
            return Err(CliError::Usage("--input is required".into()));
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// vector (full goal) or scalar (MOPRL with --weights).
    #[arg(long)]
    goal_mode: Option<String>,
    /// Scalarization weights, e.g. "0.5,0.5".
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<String>,
    /// transformer or gru.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    patience: Option<usize>,
    /// Train/valid/test ratios, e.g. "0.8,0.1,0.1".
    #[arg(long)]
    split: Option<String>,
    /// Feed raw (unstandardized) goals to the goal embedding.
    #[arg(long)]
    raw_goals: bool,
    #[arg(long)]
    items: Option<usize>,
}

impl TrainArgs {
    fn into_config(self) -> Result<TrainConfig, CliError> {
        let mut cfg: TrainConfig = base(&self.common)?;
        merge(&mut cfg.data, self.data);
        if let Some(f) = self.format {
            cfg.format = parse_format(&f)?;
        }
        merge(&mut cfg.out, self.common.out);
        cfg.force |= self.common.force;
        merge(&mut cfg.seed, self.common.seed);
        if let Some(split) = self.split {
            cfg.split = config::parse_split(&split)?;
        }
        if let Some(mode) = self.goal_mode {
            config::apply_goal_mode(&mut cfg.policy, &mode, self.weights.as_deref())?;
        } else if self.weights.is_some() {
            return Err(CliError::Usage(
                "--weights requires --goal-mode scalar".into(),
            ));
        }
        merge(&mut cfg.policy.max_epochs, self.epochs);
        merge(&mut cfg.policy.learning_rate, self.lr);
        merge(&mut cfg.policy.batch_size, self.batch_size);
        merge(&mut cfg.policy.window, self.window);
        if let Some(d) = self.embed_dim {
            cfg.policy.item_embed_dim = d;
            cfg.policy.goal_embed_dim = d;
            cfg.policy.timestep_embed_dim = d;
            if let mogcsl::policy::EncoderKind::Transformer { ffn_hidden, .. } =
                &mut cfg.policy.encoder
            {
                *ffn_hidden = 2 * d;
            }
        }
        if let Some(mlp) = self.mlp_hidden {
            cfg.policy.mlp_hidden_sizes = config::parse_usize_list(&mlp)?;
        }
        if let Some(encoder) = self.encoder {
            config::apply_encoder(&mut cfg.policy, &encoder)?;
        }
        merge(&mut cfg.policy.patience, self.patience);
        if self.raw_goals {
            cfg.policy.standardize_goals = false;
        }
        merge(&mut cfg.items_override, self.items);
        require_out(&cfg.out)?;
        if cfg.data.as_os_str().is_empty() {
            return Err(CliError::Usage("--data is required".into()));
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Repeatable: one checkpoint per training seed.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// stat or cvae.
    #[arg(long)]
    goal_strategy: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// per-timestep, global, or max.
    #[arg(long)]
    stat_mode: Option<String>,
    /// Train split for fitting the CVAEs (cvae strategy).
    #[arg(long)]
    train_data: Option<PathBuf>,
    /// Candidate input goals sampled from the prior.
    #[arg(long, short = 'K')]
    k_candidates: Option<usize>,
    /// Decoder samples per candidate.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    cvae_epochs: Option<usize>,
    /// Decoder observation variance of both CVAEs.
    #[arg(long)]
    cvae_variance: Option<f64>,
    #[arg(long)]
    reselect_each_step: bool,
    /// Pareto tie-break: balanced or lexicographic.
    #[arg(long)]
    utility: Option<String>,
    /// Ranking cutoffs, e.g. "5,10,20".
    #[arg(long)]
    k_set: Option<String>,
}

fn parse_stat_mode(s: &str) -> Result<StatMode, CliError> {
    match s {
        "per-timestep" => Ok(StatMode::PerTimestepMean),
        "global" => Ok(StatMode::GlobalMean),
        "max" => Ok(StatMode::Max),
        other => Err(CliError::Usage(format!(
            "unknown stat mode {other:?} (expected per-timestep, global, or max)"
        ))),
    }
}

impl EvaluateArgs {
    fn into_config(self) -> Result<EvaluateConfig, CliError> {
        let mut cfg: EvaluateConfig = base(&self.common)?;
        merge(&mut cfg.data, self.data);
        if let Some(f) = self.format {
            cfg.format = parse_format(&f)?;
        }
        merge(&mut cfg.stats, self.stats);
        if !self.checkpoints.is_empty() {
            cfg.checkpoints = self.checkpoints;
        }
        merge(&mut cfg.out, self.common.out);
        cfg.force |= self.common.force;
        merge(&mut cfg.seed, self.common.seed);
        if let Some(s) = self.goal_strategy {
            cfg.strategy = match s.as_str() {
                "stat" => GoalStrategy::Stat,
                "cvae" => GoalStrategy::Cvae,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown goal strategy {other:?} (expected stat or cvae)"
                    )));
                }
            };
        }
        merge(&mut cfg.lambda, self.lambda);
        if let Some(m) = self.stat_mode {
            cfg.stat_mode = parse_stat_mode(&m)?;
        }
        if self.train_data.is_some() {
            cfg.train_data = self.train_data;
        }
        merge(&mut cfg.k_candidates, self.k_candidates);
        merge(&mut cfg.achievable_samples, self.samples);
        merge(&mut cfg.cvae.max_epochs, self.cvae_epochs);
        merge(&mut cfg.cvae.decoder_variance, self.cvae_variance);
        cfg.reselect_each_step |= self.reselect_each_step;
        if let Some(u) = self.utility {
            cfg.utility = match u.as_str() {
                "balanced" => mogcsl_cli::pipeline::UtilityKind::Balanced,
                "lexicographic" => mogcsl_cli::pipeline::UtilityKind::Lexicographic,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown utility {other:?} (expected balanced or lexicographic)"
                    )));
                }
            };
        }
        if let Some(ks) = self.k_set {
            cfg.k_set = config::parse_usize_list(&ks)?;
        }
        require_out(&cfg.out)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    evaluate: EvaluateArgs,
    /// Scaling factors, e.g. "1,1.5,2,8".
    #[arg(long)]
    lambdas: Option<String>,
}

impl SweepArgs {
    fn into_config(self) -> Result<SweepConfig, CliError> {
        let lambdas = match &self.lambdas {
            Some(s) => s
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Usage(format!("bad lambda {p:?}")))
                })
                .collect::<Result<Vec<f64>, CliError>>()?,
            None => SweepConfig::default().lambdas,
        };
        Ok(SweepConfig {
            evaluate: self.evaluate.into_config()?,
            lambdas,
        })
    }
}

#[derive(Args)]
struct DenoiseExpArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Denoise CSV produced by `generate --env denoise`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of training seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

impl DenoiseExpArgs {
    fn into_config(self) -> Result<DenoiseExpConfig, CliError> {
        let mut cfg: DenoiseExpConfig = base(&self.common)?;
        merge(&mut cfg.data, self.data);
        merge(&mut cfg.out, self.common.out);
        cfg.force |= self.common.force;
        merge(&mut cfg.base_seed, self.common.seed);
        merge(&mut cfg.n_seeds, self.seeds);
        merge(&mut cfg.budget.n_rounds, self.rounds);
        merge(&mut cfg.budget.max_depth, self.depth);
        merge(&mut cfg.budget.learning_rate, self.lr);
        merge(&mut cfg.budget.subsample, self.subsample);
        merge(&mut cfg.train_fraction, self.train_fraction);
        require_out(&cfg.out)?;
        if cfg.data.as_os_str().is_empty() {
            return Err(CliError::Usage("--data is required".into()));
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Explicit MOMDP spec JSON (defaults to the built-in verification
    /// specs).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Monte-Carlo sample size.
    #[arg(long)]
    n: Option<usize>,
}

impl VerifyArgs {
    fn into_config(self) -> Result<VerifyConfig, CliError> {
        let mut cfg: VerifyConfig = base(&self.common)?;
        if self.spec.is_some() {
            cfg.spec = self.spec;
        }
        merge(&mut cfg.out, self.common.out);
        cfg.force |= self.common.force;
        merge(&mut cfg.seed, self.common.seed);
        merge(&mut cfg.n, self.n);
        require_out(&cfg.out)?;
        Ok(cfg)
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.into_config()?;
            mogcsl_cli::cmd_generate(&cfg)?;
            println!("generated {} under {}", cfg.n, cfg.out.display());
        }
        Command::Relabel(args) => {
            let cfg = args.into_config()?;
            mogcsl_cli::cmd_relabel(&cfg)?;
            println!("relabeled into {}", cfg.out.display());
        }
        Command::Train(args) => {
            let cfg = args.into_config()?;
            let out = mogcsl_cli::cmd_train(&cfg)?;
            let last = out.report.train_losses.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} epochs (final train loss {last:.4}) -> {}",
                out.report.epochs_run,
                cfg.out.display()
            );
        }
        Command::Evaluate(args) => {
            let cfg = args.into_config()?;
            let report = mogcsl_cli::cmd_evaluate(&cfg)?;
            println!(
                "evaluated {} checkpoint(s) -> {}",
                report.n_seeds,
                cfg.out.display()
            );
        }
        Command::SweepLambda(args) => {
            let cfg = args.into_config()?;
            mogcsl_cli::cmd_sweep_lambda(&cfg)?;
            println!(
                "swept {} factor(s) -> {}",
                cfg.lambdas.len(),
                cfg.evaluate.out.display()
            );
        }
        Command::DenoiseExp(args) => {
            let cfg = args.into_config()?;
            let table = mogcsl_cli::cmd_denoise_exp(&cfg)?;
            print!("{}", table.to_markdown());
            println!("-> {}", cfg.out.display());
        }
        Command::VerifyTheorem1(args) => {
            let cfg = args.into_config()?;
            let reports = mogcsl_cli::cmd_verify_theorem1(&cfg)?;
            for (name, report) in &reports {
                println!(
                    "{name}: pass={} (max TV between runs {:.4})",
                    report.pass,
                    report
                        .cases
                        .iter()
                        .map(|c| c.tv_between_runs)
                        .fold(0.0, f64::max)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
