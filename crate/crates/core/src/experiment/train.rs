use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::checkpoint::{self, TrainingState};
use super::config::ExperimentConfig;
use crate::agent::{sample_relabeled, ActMode, Batch, ReplayBuffer, SacAgent, TransitionRecord};
use crate::curriculum::{
    candidate_pool, profile_correlation, uncertainty_profile, CurriculumSampler, SamplerVariant,
};
use crate::density::{DensityModel, StateBox};
use crate::envs::{MazeSpec, Point, RewardShape};
use crate::error::{Error, Result};
use crate::metrics::{success_rate, target_goals, CoverageRow, EvalReport, VisitCounter};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const COVERAGE_FILE: &str = "coverage.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CURRICULUM_DIR: &str = "curriculum";

const METRICS_HEADER: [&str; 6] = [
    "epoch",
    "env_steps",
    "success_rate",
    "coverage_entropy",
    "normalized_coverage",
    "pearson_r",
];
const COVERAGE_HEADER: [&str; 4] = ["epoch", "env_steps", "coverage_entropy", "normalized_coverage"];

const TRAIN_STREAM: u64 = 1 << 20;
const EVAL_STREAM: u64 = 1 << 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

/// Output locations of one seed, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub metrics: PathBuf,
    pub coverage: PathBuf,
    pub checkpoint: PathBuf,
    pub curriculum_dir: PathBuf,
    pub epochs_completed: usize,
    pub env_steps: u64,
    pub wall_seconds: f64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub method: String,
    pub layout: String,
    pub coverage_bins_per_cell: usize,
    pub free_bins: usize,
    pub rollout_workers: usize,
    pub deterministic: bool,
    pub seeds: Vec<SeedRun>,
    pub status: RunStatus,
    /// Directory the relative paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut m: RunManifest = serde_json::from_str(&text)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    /// Accepts either a manifest file or the run directory containing it.
    pub fn load_from(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Self::load(&path.join(MANIFEST_FILE))
        } else {
            Self::load(path)
        }
    }

    pub fn save(&self) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        let text = serde_json::to_string_pretty(self)?;
        fs::write(self.root.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.root.join(relative)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Continue from existing checkpoints instead of starting over.
    pub resume: bool,
    /// Stop each seed after this many completed epochs (total, not additional).
    pub stop_after: Option<usize>,
}

/// Runs every seed in the config sequentially and writes the manifest.
pub fn train(config: &ExperimentConfig, options: TrainOptions) -> Result<RunManifest> {
    config.validate()?;
    let maze = config.env.maze()?;
    let root = config.out_dir.clone();
    fs::create_dir_all(&root)?;
    fs::write(root.join(CONFIG_FILE), config.to_toml()?)?;

    let hash = config.config_hash();
    let mut manifest = match RunManifest::load(&root.join(MANIFEST_FILE)) {
        Ok(m) if m.config_hash == hash => m,
        _ => RunManifest {
            config_hash: hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            method: config.sampler.variant.name().to_string(),
            layout: config.env.layout.clone(),
            coverage_bins_per_cell: config.train.coverage_bins_per_cell,
            free_bins: VisitCounter::new(&maze, config.train.coverage_bins_per_cell)?.free_bins(),
            rollout_workers: 1,
            deterministic: true,
            seeds: Vec::new(),
            status: RunStatus::Incomplete,
            root: root.clone(),
        },
    };
    manifest.root = root.clone();

    for &seed in &config.seeds {
        let run = train_seed(config, &maze, seed, &root, options)?;
        manifest.seeds.retain(|s| s.seed != seed);
        manifest.seeds.push(run);
        manifest.seeds.sort_by_key(|s| s.seed);
        manifest.status = overall_status(&manifest.seeds);
        manifest.save()?;
    }
    manifest.save()?;
    Ok(manifest)
}

fn overall_status(seeds: &[SeedRun]) -> RunStatus {
    if seeds.iter().all(|s| s.status == RunStatus::Complete) {
        RunStatus::Complete
    } else {
        RunStatus::Incomplete
    }
}

pub fn seed_dir_name(seed: u64) -> PathBuf {
    PathBuf::from(format!("seed_{seed}"))
}

/// Fresh state for a seed: untrained agent, empty buffer and counters.
pub fn initial_state(config: &ExperimentConfig, maze: &MazeSpec, seed: u64) -> Result<TrainingState> {
    let mut agent = SacAgent::new(config.agent.clone(), seed)?;
    if config.env.reward.shape == RewardShape::Sparse {
        agent = agent.with_value_bounds(-1.0 / (1.0 - config.agent.gamma), 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAIN_STREAM);
    Ok(TrainingState {
        config_hash: config.config_hash(),
        seed,
        epoch: 0,
        env_steps: 0,
        episodes: 0,
        agent,
        buffer: ReplayBuffer::new(config.agent.buffer_capacity)?,
        visits: VisitCounter::new(maze, config.train.coverage_bins_per_cell)?,
        density: None,
        rng,
    })
}

fn train_seed(
    config: &ExperimentConfig,
    maze: &MazeSpec,
    seed: u64,
    root: &Path,
    options: TrainOptions,
) -> Result<SeedRun> {
    let started = Instant::now();
    let rel = seed_dir_name(seed);
    let dir = root.join(&rel);
    fs::create_dir_all(dir.join(CURRICULUM_DIR))?;
    let metrics_path = dir.join(METRICS_FILE);
    let coverage_path = dir.join(COVERAGE_FILE);
    let ckpt_path = dir.join(CHECKPOINT_FILE);

    let mut state = if options.resume && ckpt_path.exists() {
        let s = checkpoint::load(&ckpt_path)?;
        if s.config_hash != config.config_hash() || s.seed != seed {
            return Err(Error::Config(format!(
                "checkpoint {} belongs to a different config or seed",
                ckpt_path.display()
            )));
        }
        s
    } else {
        initial_state(config, maze, seed)?
    };
    let start_epoch = state.epoch;
    truncate_csv::<EvalReport>(&metrics_path, &METRICS_HEADER, start_epoch, |r| r.epoch)?;
    truncate_csv::<CoverageRow>(&coverage_path, &COVERAGE_HEADER, start_epoch, |r| r.epoch)?;

    let last = options
        .stop_after
        .map_or(config.train.epochs, |s| s.min(config.train.epochs));
    while state.epoch < last {
        let (coverage, report) = run_epoch(config, maze, &mut state, &dir)?;
        append_row(&coverage_path, &coverage)?;
        if let Some(report) = report {
            append_row(&metrics_path, &report)?;
            checkpoint::save(&ckpt_path, &state)?;
        }
    }

    let status = if state.epoch >= config.train.epochs {
        RunStatus::Complete
    } else {
        RunStatus::Incomplete
    };
    Ok(SeedRun {
        seed,
        metrics: rel.join(METRICS_FILE),
        coverage: rel.join(COVERAGE_FILE),
        checkpoint: rel.join(CHECKPOINT_FILE),
        curriculum_dir: rel.join(CURRICULUM_DIR),
        dir: rel,
        epochs_completed: state.epoch,
        env_steps: state.env_steps,
        wall_seconds: started.elapsed().as_secs_f64(),
        status,
    })
}

fn start_position(maze: &MazeSpec, seed: u64) -> Point {
    maze.reset(seed).position
}

fn state_box(maze: &MazeSpec) -> Result<StateBox> {
    let (lo, hi) = maze.bounds();
    StateBox::new(lo, hi)
}

/// Goal distribution for the coming epoch. Before any data exists the
/// point-set samplers fall back to the start state.
pub fn build_sampler(
    config: &ExperimentConfig,
    maze: &MazeSpec,
    state: &mut TrainingState,
) -> Result<CurriculumSampler> {
    let s0 = start_position(maze, state.seed);
    let mut visited = state.buffer.next_states();
    if visited.is_empty() {
        visited.push(s0);
    }
    let variant = config.sampler.variant;
    if variant.needs_density()
        && (state.density.is_none() || state.epoch % config.density.refit_period == 0)
    {
        state.density = Some(DensityModel::fit(&visited, &config.density, state_box(maze)?)?);
    }
    match variant {
        SamplerVariant::TargetGoal => CurriculumSampler::target(maze),
        SamplerVariant::Visited => CurriculumSampler::visited(visited),
        SamplerVariant::SkewFit | SamplerVariant::Vuvc => {
            let pool = candidate_pool(&visited, config.sampler.candidates, &mut state.rng);
            let density = state.density.as_ref().expect("density fitted above");
            if variant == SamplerVariant::SkewFit {
                CurriculumSampler::skew_fit(pool, density, config.sampler.alpha)
            } else {
                CurriculumSampler::vuvc_from_agent(pool, density, &state.agent, s0, config.sampler.alpha)
            }
        }
    }
}

fn collect_episode(
    config: &ExperimentConfig,
    maze: &MazeSpec,
    state: &mut TrainingState,
    goal: Point,
) -> Vec<TransitionRecord> {
    let reward = &config.env.reward;
    let warm = state.env_steps >= config.agent.warmup_steps as u64;
    let mut s = maze.reset(state.seed);
    let mut reached = reward.reached(s.position, goal);
    let mut episode = Vec::with_capacity(config.env.horizon);
    for k in 0..config.env.horizon {
        let a = if warm {
            state
                .agent
                .act(s.position, goal, ActMode::Explore, reached, &mut state.rng)
        } else {
            [
                state.rng.random_range(-1.0..=1.0),
                state.rng.random_range(-1.0..=1.0),
            ]
        };
        let next = maze.step(s, a);
        episode.push(TransitionRecord {
            state: s.position,
            action: a,
            reward: reward.reward(next.position, goal),
            next_state: next.position,
            goal,
            terminal: false,
            episode_id: state.episodes,
            step_index: k,
        });
        reached |= reward.reached(next.position, goal);
        state.visits.add(next.position);
        s = next;
    }
    state.episodes += 1;
    state.env_steps += config.env.horizon as u64;
    episode
}

/// One epoch: rebuild the curriculum, collect episodes, take gradient
/// steps, then record coverage and, on evaluation epochs, metrics and a
/// curriculum dump.
fn run_epoch(
    config: &ExperimentConfig,
    maze: &MazeSpec,
    state: &mut TrainingState,
    dir: &Path,
) -> Result<(CoverageRow, Option<EvalReport>)> {
    let epoch = state.epoch;
    let sampler = build_sampler(config, maze, state)?;

    for _ in 0..config.train.episodes_per_epoch {
        let goal = sampler.sample(&mut state.rng);
        let episode = collect_episode(config, maze, state, goal);
        state
            .agent
            .observe(episode.iter().flat_map(|r| [r.state, r.goal]));
        state.buffer.push_episode(&episode);
    }

    if state.env_steps >= config.agent.warmup_steps as u64 {
        for _ in 0..config.train.updates_per_epoch {
            let records = sample_relabeled(
                &state.buffer,
                config.agent.batch_size,
                &config.agent.her,
                &config.env.reward,
                |r| sampler.sample(r),
                &mut state.rng,
            )?;
            state.agent.train_step(&Batch::from_records(&records), &mut state.rng);
        }
    }

    state.epoch += 1;
    let coverage = CoverageRow {
        epoch,
        env_steps: state.env_steps,
        coverage_entropy: state.visits.entropy(),
        normalized_coverage: state.visits.normalized(),
    };
    if state.epoch % config.train.eval_period != 0 && state.epoch != config.train.epochs {
        return Ok((coverage, None));
    }

    let report = evaluate(config, maze, state, epoch)?;
    let dump = dir.join(CURRICULUM_DIR).join(format!("epoch_{epoch:05}.csv"));
    sampler.write_csv(epoch, fs::File::create(dump)?)?;
    Ok((coverage, Some(report)))
}

fn eval_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (epoch as u64)
}

/// Success on target goals, coverage, and the correlation between value
/// uncertainty and visited log density over a probe drawn from the buffer.
/// Uses its own random stream so evaluation never perturbs training.
pub fn evaluate(
    config: &ExperimentConfig,
    maze: &MazeSpec,
    state: &TrainingState,
    epoch: usize,
) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed(state.seed, epoch));
    rng.set_stream(EVAL_STREAM);
    let goals = target_goals(maze, config.train.eval_goals, &mut rng);
    let success = success_rate(
        &state.agent,
        maze,
        &config.env.reward,
        &goals,
        config.train.eval_episodes_per_goal,
        config.env.horizon,
        rng.random(),
    )?;
    Ok(EvalReport {
        epoch,
        env_steps: state.env_steps,
        success_rate: success,
        coverage_entropy: state.visits.entropy(),
        normalized_coverage: state.visits.normalized(),
        pearson_r: probe_correlation(config, maze, state, &mut rng)?,
    })
}

fn probe_correlation(
    config: &ExperimentConfig,
    maze: &MazeSpec,
    state: &TrainingState,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>> {
    if state.buffer.is_empty() || state.agent.ensemble_size() < 2 {
        return Ok(None);
    }
    let visited = state.buffer.next_states();
    let fitted;
    let density = match &state.density {
        Some(d) => d,
        None => {
            fitted = DensityModel::fit(&visited, &config.density, state_box(maze)?)?;
            &fitted
        }
    };
    let probe = candidate_pool(&visited, config.train.probe_size, rng);
    let profile = uncertainty_profile(&state.agent, density, start_position(maze, state.seed), &probe)?;
    Ok(profile_correlation(&profile).ok())
}

fn append_row<T: Serialize>(path: &Path, row: &T) -> Result<()> {
    let file = fs::OpenOptions::new().append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}

/// Rewrites `path` with its header and only the rows from epochs before
/// `keep_before`; creates it when missing.
fn truncate_csv<T: Serialize + DeserializeOwned>(
    path: &Path,
    header: &[&str],
    keep_before: usize,
    epoch_of: impl Fn(&T) -> usize,
) -> Result<()> {
    let kept: Vec<T> = if path.exists() && keep_before > 0 {
        read_rows::<T>(path)?
            .into_iter()
            .filter(|r| epoch_of(r) < keep_before)
            .collect()
    } else {
        Vec::new()
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for r in &kept {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

/// Loads a seed's latest checkpoint and evaluates it.
pub fn evaluate_checkpoint(config: &ExperimentConfig, seed: u64) -> Result<EvalReport> {
    let maze = config.env.maze()?;
    let path = config.out_dir.join(seed_dir_name(seed)).join(CHECKPOINT_FILE);
    let state = checkpoint::load(&path)?;
    if state.config_hash != config.config_hash() {
        return Err(Error::Config(format!(
            "checkpoint {} was written by a different config",
            path.display()
        )));
    }
    evaluate(config, &maze, &state, state.epoch.saturating_sub(1))
}
