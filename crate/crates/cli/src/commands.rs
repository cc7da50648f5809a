use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cardarena::agents::{BotConfig, Controller, Difficulty, PolicyAgent, ScriptedBot};
use cardarena::compositor::{generate_dataset, validate_dataset, GeneratorConfig, SpritePack};
use cardarena::engine::{outcome, Outcome, Roster};
use cardarena::evaluator::{evaluate, run_match};
use cardarena::model::{train, Arch, Checkpoint, DecisionModel, LossWeighting, ModelConfig, OptimizerConfig, TrainConfig};
use cardarena::trajectory::{dataset_stats, load_dataset, load_episode, replay_episode, save_episode, Dataset, Episode, EpisodeOutcome, Source, ValidationReport, DEFAULT_T_DELAY};

use crate::server::{serve, ServerConfig};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "cardarena", version, about = "Card arena simulator, offline-RL trainer and scene compositor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labeled synthetic scenes.
    Compose(ComposeArgs),
    /// Record bot-vs-bot episodes.
    Collect(CollectArgs),
    /// Train a decision model on a directory of episodes.
    Train(TrainArgs),
    /// Play a checkpoint against a scripted opponent.
    Eval(EvalArgs),
    /// Run the live session server.
    Serve(ServeArgs),
    /// Re-simulate a recorded episode and check it against its record.
    Replay(ReplayArgs),
    /// Check an episode directory, a single episode or a scene directory.
    Validate(DataArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Generator config JSON; missing fields take defaults.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub count: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sprite manifest JSON; the bundled pack when absent.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[arg(long)]
    pub opponent: Difficulty,
    #[arg(long)]
    pub episodes: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// The recorded side's bot.
    #[arg(long, default_value = "builtin")]
    pub bot: Difficulty,
    /// Episode `i` uses match seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub arch: Arch,
    #[arg(long = "L")]
    pub l: usize,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub steps: u64,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub ff_mult: usize,
    #[arg(long, default_value_t = 2)]
    pub patch: usize,
    #[arg(long, default_value_t = DEFAULT_T_DELAY)]
    pub t_delay: u32,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Only used by `--optimizer sgd`.
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1.0)]
    pub grad_clip: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p_shuffle: f64,
    /// `uniform` or `sample_weight`.
    #[arg(long, default_value = "uniform")]
    pub weighting: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub log_every: u64,
    /// Metrics JSONL; defaults to the checkpoint path with `.metrics.jsonl`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Quantile of episode returns stored as the rollout target.
    #[arg(long, default_value_t = 0.9)]
    pub target_quantile: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub opponent: Difficulty,
    #[arg(long)]
    pub episodes: usize,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial return-to-go; the checkpoint's stored target when absent.
    #[arg(long)]
    pub target_return: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub delay_threshold: u32,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: u16,
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 100)]
    pub tick_ms: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub episode: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_T_DELAY)]
    pub t_delay: u32,
}

fn need(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::File { path: path.display().to_string(), source: std::io::Error::from(std::io::ErrorKind::NotFound) })
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::File { path: path.display().to_string(), source })
}

fn emit(v: serde_json::Value) {
    println!("{v}");
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Compose(a) => compose(a),
        Command::Collect(a) => collect(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Replay(a) => replay(a),
        Command::Validate(a) => validate(a),
        Command::Stats(a) => stats(a),
    }
}

fn compose(a: ComposeArgs) -> Result<(), CliError> {
    let mut cfg: GeneratorConfig = serde_json::from_str(&read(&a.config)?)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let pack = match &a.manifest {
        Some(m) => SpritePack::from_manifest_json(&read(m)?)?,
        None => SpritePack::builtin(),
    };
    let t0 = Instant::now();
    let report = generate_dataset(&pack, &cfg, a.count, &a.out)?;
    let secs = t0.elapsed().as_secs_f64();
    emit(json!({
        "scenes": report.scenes,
        "labels": report.labels,
        "removed_units": report.removed_units,
        "violations": report.violations,
        "scenes_per_s": report.scenes as f64 / secs.max(1e-9),
        "out": a.out,
    }));
    if report.violations > 0 {
        return Err(CliError::Invalid(report.violations as usize));
    }
    Ok(())
}

fn collect(a: CollectArgs) -> Result<(), CliError> {
    let roster = Roster::builtin();
    let deck = roster.default_deck();
    fs::create_dir_all(&a.out)?;
    let mut frames = 0;
    let mut actions = 0;
    for i in 0..a.episodes {
        let seed = a.seed + i;
        let mut own = ScriptedBot::new(BotConfig::new(a.bot), 2 * seed);
        let mut opp = ScriptedBot::new(BotConfig::new(a.opponent), 2 * seed + 1);
        let (_, ep) = run_match(&mut own, &mut opp, &roster, (&deck, &deck), seed, Source::Bot)?;
        frames += ep.frames.len();
        actions += ep.action_count();
        save_episode(&ep, a.out.join(format!("ep_{i:05}.jsonl")))?;
    }
    emit(json!({ "episodes": a.episodes, "frames": frames, "action_frames": actions, "out": a.out }));
    Ok(())
}

fn episodes_in(dir: &Path) -> Result<Vec<Episode>, CliError> {
    need(dir)?;
    Ok(load_dataset(dir)?.into_iter().map(|(_, e)| e).collect())
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let roster = Roster::builtin();
    let data = Dataset::new(episodes_in(&a.data)?, roster, a.t_delay)?;
    let optimizer = match a.optimizer.as_str() {
        "adam" => match OptimizerConfig::default() {
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => OptimizerConfig::Adam { lr: a.lr, beta1, beta2, eps },
            other => other,
        },
        "sgd" => OptimizerConfig::Sgd { lr: a.lr, momentum: a.momentum },
        other => return Err(CliError::Usage(format!("unknown optimizer '{other}' (expected adam or sgd)"))),
    };
    let loss_weighting = match a.weighting.as_str() {
        "uniform" => LossWeighting::Uniform,
        "sample_weight" => LossWeighting::SampleWeight,
        other => return Err(CliError::Usage(format!("unknown weighting '{other}' (expected uniform or sample_weight)"))),
    };
    let cfg = ModelConfig {
        arch: a.arch,
        l: a.l,
        d_model: a.d_model,
        n_heads: a.heads,
        n_layers: a.layers,
        patch_size: a.patch,
        t_delay: a.t_delay,
        ff_mult: a.ff_mult,
        seed: a.seed,
        ..ModelConfig::default()
    };
    let mut model = DecisionModel::new(cfg)?;
    let tc = TrainConfig {
        steps: a.steps,
        batch_size: a.batch,
        optimizer,
        grad_clip: a.grad_clip,
        p_shuffle: a.p_shuffle,
        loss_weighting,
        seed: a.seed,
        log_every: a.log_every,
    };
    let metrics_path = a.metrics.clone().unwrap_or_else(|| a.ckpt.with_extension("metrics.jsonl"));
    let mut metrics = std::io::BufWriter::new(fs::File::create(&metrics_path)?);
    let report = train(&mut model, &data, tc, Some(&mut metrics))?;
    drop(metrics);
    let target_return = data.return_quantile(a.target_quantile);
    Checkpoint { model, step: report.steps, target_return }.save(&a.ckpt)?;
    emit(json!({
        "steps": report.steps,
        "final_loss": report.final_loss,
        "target_return": target_return,
        "ckpt": a.ckpt,
        "metrics": metrics_path,
    }));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    need(&a.ckpt)?;
    let ck = Checkpoint::load(&a.ckpt, None)?;
    let target = a.target_return.unwrap_or(ck.target_return);
    let model = Arc::new(ck.model);
    let roster = Roster::builtin();
    let deck = roster.default_deck();
    let r = roster.clone();
    let report = evaluate(
        |_| Box::new(PolicyAgent::new(model.clone(), r.clone(), target).with_delay_threshold(a.delay_threshold)) as Box<dyn Controller>,
        |s| Box::new(ScriptedBot::new(BotConfig::new(a.opponent), s + 1000)) as Box<dyn Controller>,
        &roster,
        (&deck, &deck),
        a.episodes,
        a.seed,
    )?;
    fs::write(&a.report, serde_json::to_string_pretty(&report)?)?;
    emit(json!({
        "episodes": report.episodes,
        "mean_reward": report.total_reward.mean,
        "win_rate": report.win_rate,
        "report": a.report,
    }));
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<(), CliError> {
    fs::create_dir_all(&a.record)?;
    let cfg = ServerConfig { record_dir: a.record, tick: Duration::from_millis(a.tick_ms.max(1)), roster: Roster::builtin() };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        emit(json!({ "listening": listener.local_addr()?.to_string() }));
        serve(listener, cfg).await
    })?;
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    need(&a.episode)?;
    let ep = load_episode(&a.episode)?;
    let roster = Roster::builtin();
    let state = replay_episode(&ep, &roster)?;
    let side = ep.header.side;
    let replayed = match outcome(&state) {
        Outcome::Win(f) if f == side => EpisodeOutcome::Win,
        Outcome::Win(_) => EpisodeOutcome::Loss,
        Outcome::Draw => EpisodeOutcome::Draw,
        Outcome::Ongoing => EpisodeOutcome::Abandoned,
    };
    let last_tick = ep.frames.last().map(|f| f.tick + 1).unwrap_or(0);
    let consistent = replayed == ep.outcome && state.tick == last_tick;
    emit(json!({
        "episode": a.episode,
        "frames": ep.frames.len(),
        "outcome": ep.outcome,
        "replayed_outcome": replayed,
        "final_tick": state.tick,
        "tower_hp": state.towers.iter().map(|t| t.hp).collect::<Vec<_>>(),
        "total_reward": ep.total_reward(),
        "consistent": consistent,
    }));
    if !consistent {
        return Err(CliError::Invalid(1));
    }
    Ok(())
}

fn validate(a: DataArgs) -> Result<(), CliError> {
    need(&a.data)?;
    if a.data.join("manifest.json").exists() {
        let r = validate_dataset(&a.data)?;
        emit(serde_json::to_value(&r)?);
        return if r.problems.is_empty() { Ok(()) } else { Err(CliError::Invalid(r.problems.len())) };
    }
    let roster = Roster::builtin();
    let files: Vec<PathBuf> = if a.data.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(&a.data)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        v.sort();
        v
    } else {
        vec![a.data.clone()]
    };
    let mut report = ValidationReport::default();
    for f in files {
        let name = f.display().to_string();
        match load_episode(&f) {
            Ok(ep) => report.add(&name, &ep, &roster),
            Err(e) => {
                report.episodes += 1;
                report.violations.push((name, e.to_string()));
            }
        }
    }
    emit(serde_json::to_value(&report)?);
    if report.episodes == 0 {
        return Err(CliError::Usage(format!("no episodes found in {}", a.data.display())));
    }
    if !report.ok() {
        return Err(CliError::Invalid(report.violations.len()));
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let eps = episodes_in(&a.data)?;
    emit(serde_json::to_value(dataset_stats(&eps, a.t_delay)?)?);
    Ok(())
}
