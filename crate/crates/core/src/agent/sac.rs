//! Goal-conditioned soft actor-critic with an ensemble of Q critics.

use ndarray::{concatenate, s, Array2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::TransitionRecord;
use super::her::HerConfig;
use super::normalizer::Normalizer;
use crate::envs::Point;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Mlp, MlpGrads};

const ACTION_DIM: usize = 2;
const OBS_DIM: usize = 4;
const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const TANH_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const OUTPUT_GAIN: f64 = 0.1;
const NORMALIZER_CLIP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub temperature_lr: f64,
    /// Target-network averaging coefficient.
    pub tau: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub ensemble_size: usize,
    /// Buffer size before gradient steps start; actions are uniform until then.
    pub warmup_steps: usize,
    /// Std of Gaussian noise added to explore actions once the goal was reached.
    pub post_goal_noise: f64,
    pub normalize_observations: bool,
    pub initial_temperature: f64,
    pub tune_temperature: bool,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub buffer_capacity: usize,
    pub her: HerConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            batch_size: 2048,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            temperature_lr: 1e-3,
            tau: 0.005,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            ensemble_size: 3,
            warmup_steps: 5000,
            post_goal_noise: 0.5,
            normalize_observations: true,
            initial_temperature: 0.1,
            tune_temperature: true,
            target_entropy: None,
            buffer_capacity: 1_000_000,
            her: HerConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return err(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return err(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.ensemble_size == 0 {
            return err("batch_size, buffer_capacity and ensemble_size must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return err(format!("hidden sizes must be positive, got {:?}", self.hidden));
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("temperature_lr", self.temperature_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.post_goal_noise >= 0.0 && self.initial_temperature >= 0.0) {
            return err("post_goal_noise and initial_temperature must be non-negative".into());
        }
        self.her.validate()
    }

    pub fn resolved_target_entropy(&self) -> f64 {
        self.target_entropy.unwrap_or(-(ACTION_DIM as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActMode {
    Explore,
    Exploit,
}

/// Training batch in structure-of-arrays form.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Vec<Point>,
    pub actions: Vec<Point>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<Point>,
    pub goals: Vec<Point>,
    pub terminals: Vec<bool>,
}

impl Batch {
    pub fn from_records(records: &[TransitionRecord]) -> Self {
        Self {
            states: records.iter().map(|r| r.state).collect(),
            actions: records.iter().map(|r| r.action).collect(),
            rewards: records.iter().map(|r| r.reward).collect(),
            next_states: records.iter().map(|r| r.next_state).collect(),
            goals: records.iter().map(|r| r.goal).collect(),
            terminals: records.iter().map(|r| r.terminal).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub temperature: f64,
    pub entropy: f64,
}

/// Squashed-Gaussian samples for a batch of policy-head outputs.
struct Squashed {
    action: Array2<f64>,
    log_prob: Vec<f64>,
    log_std: Array2<f64>,
    raw_tanh: Array2<f64>,
}

fn squash(head: &Array2<f64>, xi: &Array2<f64>) -> Squashed {
    let n = head.nrows();
    let raw_tanh = head.slice(s![.., ACTION_DIM..]).mapv(f64::tanh);
    let log_std = raw_tanh.mapv(|t| LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (t + 1.0));
    let mut action = Array2::zeros((n, ACTION_DIM));
    let mut log_prob = vec![0.0; n];
    for i in 0..n {
        for j in 0..ACTION_DIM {
            let u = head[[i, j]] + log_std[[i, j]].exp() * xi[[i, j]];
            let a = u.tanh();
            action[[i, j]] = a;
            log_prob[i] += -0.5 * xi[[i, j]] * xi[[i, j]]
                - log_std[[i, j]]
                - HALF_LN_2PI
                - (1.0 - a * a + TANH_EPS).ln();
        }
    }
    Squashed {
        action,
        log_prob,
        log_std,
        raw_tanh,
    }
}

fn gaussian<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, ACTION_DIM), || rng.sample(StandardNormal))
}

fn points(xs: &[Point]) -> Array2<f64> {
    Array2::from_shape_fn((xs.len(), 2), |(i, j)| xs[i][j])
}

/// Actor, K online critics with their targets, optimizers, temperature and
/// observation normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacAgent {
    config: AgentConfig,
    actor: Mlp,
    actor_opt: Adam,
    critics: Vec<Mlp>,
    targets: Vec<Mlp>,
    critic_opts: Vec<Adam>,
    log_temperature: f64,
    temperature_opt: Adam,
    normalizer: Normalizer,
    value_bounds: Option<(f64, f64)>,
    updates: u64,
}

impl SacAgent {
    /// Each network is initialized from its own random stream derived from `seed`.
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        let mut actor_sizes = vec![OBS_DIM];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(2 * ACTION_DIM);
        let mut critic_sizes = vec![OBS_DIM + ACTION_DIM];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);

        let actor = Mlp::new(&actor_sizes, config.activation, OUTPUT_GAIN, &mut stream(0))?;
        let critics = (0..config.ensemble_size)
            .map(|k| Mlp::new(&critic_sizes, config.activation, OUTPUT_GAIN, &mut stream(k as u64 + 1)))
            .collect::<Result<Vec<_>>>()?;
        let critic_opts = critics.iter().map(|c| Adam::for_mlp(c, config.critic_lr)).collect();
        Ok(Self {
            actor_opt: Adam::for_mlp(&actor, config.actor_lr),
            actor,
            targets: critics.clone(),
            critics,
            critic_opts,
            log_temperature: config.initial_temperature.ln(),
            temperature_opt: Adam::new(&[1], config.temperature_lr),
            normalizer: Normalizer::new(NORMALIZER_CLIP, config.normalize_observations),
            value_bounds: None,
            updates: 0,
            config,
        })
    }

    /// Clamp Bellman targets to `[lo, hi]`.
    pub fn with_value_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.value_bounds = Some((lo, hi));
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn ensemble_size(&self) -> usize {
        self.critics.len()
    }

    pub fn critics(&self) -> &[Mlp] {
        &self.critics
    }

    pub fn targets(&self) -> &[Mlp] {
        &self.targets
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn observe(&mut self, positions: impl IntoIterator<Item = Point>) {
        self.normalizer.update_all(positions);
    }

    /// Copies critic 0 into every other member (online and target).
    pub fn synchronize_critics(&mut self) {
        let first = self.critics[0].clone();
        for c in self.critics.iter_mut().chain(self.targets.iter_mut()) {
            *c = first.clone();
        }
    }

    fn policy_input(&self, states: &[Point], goals: &[Point]) -> Array2<f64> {
        let mut out = Array2::zeros((states.len(), OBS_DIM));
        for (i, (s, g)) in states.iter().zip(goals).enumerate() {
            let ns = self.normalizer.normalize(*s);
            let ng = self.normalizer.normalize(*g);
            out[[i, 0]] = ns[0];
            out[[i, 1]] = ns[1];
            out[[i, 2]] = ng[0];
            out[[i, 3]] = ng[1];
        }
        out
    }

    /// Action for one state-goal pair. Exploit mode returns the squashed
    /// mean; explore mode samples, and adds Gaussian noise once
    /// `goal_reached` is set.
    pub fn act<R: Rng + ?Sized>(&self, s: Point, g: Point, mode: ActMode, goal_reached: bool, rng: &mut R) -> Point {
        let head = self.actor.forward(&self.policy_input(&[s], &[g]));
        match mode {
            ActMode::Exploit => [head[[0, 0]].tanh(), head[[0, 1]].tanh()],
            ActMode::Explore => {
                let xi = gaussian(1, rng);
                let sq = squash(&head, &xi);
                let mut a = [sq.action[[0, 0]], sq.action[[0, 1]]];
                if goal_reached && self.config.post_goal_noise > 0.0 {
                    for v in &mut a {
                        let n: f64 = rng.sample(StandardNormal);
                        *v = (*v + self.config.post_goal_noise * n).clamp(-1.0, 1.0);
                    }
                }
                a
            }
        }
    }

    /// Exploit actions for a batch of state-goal pairs.
    pub fn exploit_actions(&self, states: &[Point], goals: &[Point]) -> Array2<f64> {
        let head = self.actor.forward(&self.policy_input(states, goals));
        head.slice(s![.., ..ACTION_DIM]).mapv(f64::tanh)
    }

    /// Per-member estimates `Q_k(s0, a*, g)` with `a*` the exploit action,
    /// shape `(goals, K)`.
    pub fn value_estimates(&self, s0: Point, goals: &[Point]) -> Array2<f64> {
        let states = vec![s0; goals.len()];
        let obs = self.policy_input(&states, goals);
        let head = self.actor.forward(&obs);
        let actions = head.slice(s![.., ..ACTION_DIM]).mapv(f64::tanh);
        let input = concatenate![Axis(1), obs, actions];
        let mut out = Array2::zeros((goals.len(), self.critics.len()));
        for (k, c) in self.critics.iter().enumerate() {
            out.column_mut(k).assign(&c.forward(&input).column(0));
        }
        out
    }

    /// Population variance over the ensemble of value estimates per goal.
    pub fn value_uncertainty(&self, s0: Point, goals: &[Point]) -> Result<Vec<f64>> {
        if self.critics.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "value uncertainty needs at least 2 critics, have {}",
                self.critics.len()
            )));
        }
        let q = self.value_estimates(s0, goals);
        Ok(q.rows().into_iter().map(|r| population_variance(r.as_slice().expect("row"))).collect())
    }

    fn target_members<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        if self.targets.len() < 2 {
            vec![0]
        } else {
            sample_indices(rng, self.targets.len(), 2).into_vec()
        }
    }

    /// Actor loss `mean(alpha log pi - mean_k Q_k)` and its parameter
    /// gradients for fixed noise `xi`.
    fn actor_loss_grad(&self, obs: &Array2<f64>, xi: &Array2<f64>) -> (f64, MlpGrads, Vec<f64>) {
        let b = obs.nrows();
        let bf = b as f64;
        let k = self.critics.len() as f64;
        let alpha = self.temperature();
        let (head, cache) = self.actor.forward_cached(obs);
        let pol = squash(&head, xi);
        let input = concatenate![Axis(1), obs.view(), pol.action.view()];
        let ones = Array2::from_elem((b, 1), 1.0 / k);
        let mut g_a = Array2::<f64>::zeros((b, ACTION_DIM));
        let mut q_mean = vec![0.0; b];
        for c in &self.critics {
            let (q, cc) = c.forward_cached(&input);
            for i in 0..b {
                q_mean[i] += q[[i, 0]] / k;
            }
            let gin = c.backward_input(&cc, &ones);
            g_a += &gin.slice(s![.., OBS_DIM..]);
        }
        let mut grad_head = Array2::zeros((b, 2 * ACTION_DIM));
        for i in 0..b {
            for j in 0..ACTION_DIM {
                let a = pol.action[[i, j]];
                let one_m = 1.0 - a * a;
                let d_u = (-g_a[[i, j]] * one_m + alpha * 2.0 * a * one_m / (one_m + TANH_EPS)) / bf;
                grad_head[[i, j]] = d_u;
                let sigma = pol.log_std[[i, j]].exp();
                let d_ls = d_u * sigma * xi[[i, j]] - alpha / bf;
                let t = pol.raw_tanh[[i, j]];
                grad_head[[i, ACTION_DIM + j]] = d_ls * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t);
            }
        }
        let (grads, _) = self.actor.backward(&cache, &grad_head);
        let loss = (0..b).map(|i| alpha * pol.log_prob[i] - q_mean[i]).sum::<f64>() / bf;
        (loss, grads, pol.log_prob)
    }

    /// One update of every critic, the actor and the temperature, followed
    /// by target averaging.
    pub fn train_step<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> TrainStats {
        let b = batch.len();
        let bf = b as f64;
        let alpha = self.temperature();
        let obs = self.policy_input(&batch.states, &batch.goals);
        let next_obs = self.policy_input(&batch.next_states, &batch.goals);

        let next_head = self.actor.forward(&next_obs);
        let next = squash(&next_head, &gaussian(b, rng));
        let next_in = concatenate![Axis(1), next_obs, next.action];
        let mut q_next = vec![f64::INFINITY; b];
        for k in self.target_members(rng) {
            let q = self.targets[k].forward(&next_in);
            for (slot, v) in q_next.iter_mut().zip(q.column(0)) {
                *slot = slot.min(*v);
            }
        }
        let gamma = self.config.gamma;
        let y: Vec<f64> = (0..b)
            .map(|i| {
                let cont = if batch.terminals[i] { 0.0 } else { 1.0 };
                let v = batch.rewards[i] + gamma * cont * (q_next[i] - alpha * next.log_prob[i]);
                match self.value_bounds {
                    Some((lo, hi)) => v.clamp(lo, hi),
                    None => v,
                }
            })
            .collect();

        let critic_in = concatenate![Axis(1), obs, points(&batch.actions)];
        let mut critic_loss = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            let (q, cache) = critic.forward_cached(&critic_in);
            let mut g = Array2::zeros((b, 1));
            for i in 0..b {
                let d = q[[i, 0]] - y[i];
                critic_loss += d * d / bf;
                g[[i, 0]] = 2.0 * d / bf;
            }
            let (grads, _) = critic.backward(&cache, &g);
            opt.step_mlp(critic, &grads);
        }
        critic_loss /= self.critics.len() as f64;

        let xi = gaussian(b, rng);
        let (actor_loss, grads, log_prob) = self.actor_loss_grad(&obs, &xi);
        self.actor_opt.step_mlp(&mut self.actor, &grads);
        let mean_log_prob = log_prob.iter().sum::<f64>() / bf;

        if self.config.tune_temperature {
            let g = -(mean_log_prob + self.config.resolved_target_entropy());
            let mut p = [self.log_temperature];
            self.temperature_opt.step(vec![&mut p[..]], &[&[g]]);
            self.log_temperature = p[0];
        }

        for (t, c) in self.targets.iter_mut().zip(&self.critics) {
            t.soft_update_from(c, self.config.tau);
        }
        self.updates += 1;
        TrainStats {
            critic_loss,
            actor_loss,
            temperature: self.temperature(),
            entropy: -mean_log_prob,
        }
    }
}

/// Divides by `n`; exactly zero when all entries are equal.
pub fn population_variance(xs: &[f64]) -> f64 {
    if xs.iter().all(|x| *x == xs[0]) {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}
