//! Shared-parameter independent learning: every uncaptured pursuer queries
//! one dueling Q-network, exploration is epsilon-greedy, and updates use
//! double-Q targets drawn from prioritized replay.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apf::{apf_heading, ApfParams};
use crate::checkpoint::Checkpoint;
use crate::env::{EnvState, Observation, Outcome, PursuitEnv};
use crate::error::{Error, Result};
use crate::neural::{
    forward, q_backward, q_forward, AdamState, Architecture, EncodedObservation, NetworkParams,
    ObservationEncoder,
};
use crate::replay::{PrioritizedReplay, ReplayTransition};
use crate::trajectory::Trajectory;

pub const ETA_VALUES: [f64; 3] = [0.0, 1.5e8, 3e8];
pub const LAMBDA_VALUES: [f64; 8] = [30.0, 100.0, 250.0, 500.0, 750.0, 1000.0, 2000.0, 3000.0];

const STREAM_INIT: u64 = 1;
const STREAM_AGENT: u64 = 2;
const STREAM_TRAIN_EPISODE: u64 = 3;
const STREAM_EVAL_EPISODE: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for item `index` of a named random stream.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream)).wrapping_add(index))
}

/// Seed of the `k`-th evaluation episode; disjoint from training seeds.
pub fn eval_episode_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, STREAM_EVAL_EPISODE, k as u64)
}

pub fn train_episode_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, STREAM_TRAIN_EPISODE, k as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dacoop,
    VanillaD3qn,
    ModifiedApf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dacoop, Method::VanillaD3qn, Method::ModifiedApf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dacoop => "dacoop",
            Method::VanillaD3qn => "vanilla_d3qn",
            Method::ModifiedApf => "modified_apf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// Candidate (eta, lambda) pairs, eta-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub pairs: Vec<(f64, f64)>,
}

impl Default for ActionGrid {
    fn default() -> Self {
        let pairs = ETA_VALUES
            .iter()
            .flat_map(|&eta| LAMBDA_VALUES.iter().map(move |&lambda| (eta, lambda)))
            .collect();
        Self { pairs }
    }
}

impl ActionGrid {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidParameter("action grid is empty".into()));
        }
        for (k, a) in pairs.iter().enumerate() {
            if pairs[..k].contains(a) {
                return Err(Error::InvalidParameter(format!("duplicate action pair {a:?}")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn params(&self, action: usize, base: &ApfParams) -> ApfParams {
        let (eta, lambda) = self.pairs[action];
        ApfParams { eta, lambda, ..*base }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub lr: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_episodes: usize,
    /// Gradient updates after each episode.
    pub updates_per_episode: usize,
    /// Target network sync period, in updates.
    pub target_sync: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_end: f64,
    pub per_epsilon: f64,
    /// Checkpoint period in episodes; 0 keeps only the first and last.
    pub checkpoint_every: usize,
    /// Episodes per candidate pair when tuning the modified APF baseline.
    pub apf_search_episodes: usize,
    pub network: Architecture,
    /// Record episode wall time in metrics; off makes metrics files
    /// byte-reproducible.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            episodes: 7000,
            gamma: 0.99,
            lr: 3e-4,
            eps_start: 1.0,
            eps_end: 0.01,
            eps_decay_episodes: 4000,
            updates_per_episode: 1000,
            target_sync: 1000,
            batch_size: 64,
            replay_capacity: 1 << 17,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_beta_end: 1.0,
            per_epsilon: 1e-3,
            checkpoint_every: 500,
            apf_search_episodes: 100,
            network: Architecture::default(),
            log_wall_time: false,
        }
    }

    /// Laptop-sized schedule: fewer episodes and updates, exploration
    /// decaying over the same fraction of training as the full run.
    pub fn desk() -> Self {
        Self {
            episodes: 1500,
            eps_decay_episodes: 850,
            updates_per_episode: 100,
            target_sync: 500,
            checkpoint_every: 250,
            apf_search_episodes: 50,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("train.gamma must lie in (0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("train.lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return fail("train.eps_start and train.eps_end must lie in [0, 1]");
        }
        if self.eps_end > self.eps_start {
            return fail("train.eps_end must not exceed train.eps_start");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return fail("train.batch_size must be positive and at most train.replay_capacity");
        }
        if self.target_sync == 0 {
            return fail("train.target_sync must be positive");
        }
        if !(0.0..=1.0).contains(&self.per_alpha) {
            return fail("train.per_alpha must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.per_beta_start) || !(0.0..=1.0).contains(&self.per_beta_end) {
            return fail("train.per_beta_start/per_beta_end must lie in [0, 1]");
        }
        if self.per_epsilon.is_nan() || self.per_epsilon <= 0.0 {
            return fail("train.per_epsilon must be positive");
        }
        self.network.validate()
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        if episode >= self.eps_decay_episodes {
            return self.eps_end;
        }
        let frac = episode as f64 / self.eps_decay_episodes as f64;
        (self.eps_start - (self.eps_start - self.eps_end) * frac).max(self.eps_end)
    }

    /// Importance-sampling exponent, linear over the training run.
    pub fn beta(&self, episode: usize) -> f64 {
        let frac = if self.episodes <= 1 {
            1.0
        } else {
            (episode as f64 / (self.episodes - 1) as f64).min(1.0)
        };
        self.per_beta_start + (self.per_beta_end - self.per_beta_start) * frac
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], eps: f64, rng: &mut R) -> usize {
    select_action_with(q_values.len(), eps, rng, || Ok(q_values.to_vec())).expect("infallible")
}

/// Epsilon-greedy where the Q-values are only computed on greedy draws.
/// Consumes the same random numbers as [`select_action`].
pub fn select_action_with<R, F>(num_actions: usize, eps: f64, rng: &mut R, q: F) -> Result<usize>
where
    R: Rng + ?Sized,
    F: FnOnce() -> Result<Vec<f64>>,
{
    let u: f64 = rng.gen();
    if u < eps {
        Ok(rng.gen_range(0..num_actions))
    } else {
        Ok(argmax(&q()?))
    }
}

/// Double-Q target: the online network picks the next action, the target
/// network values it.
pub fn compute_target(
    t: &ReplayTransition,
    online: &NetworkParams,
    target: &NetworkParams,
    gamma: f64,
) -> Result<f64> {
    if t.done {
        return Ok(t.reward);
    }
    let next_action = argmax(&q_forward(online, &t.next_obs)?);
    Ok(t.reward + gamma * q_forward(target, &t.next_obs)?[next_action])
}

/// How a discrete action index turns into a commanded heading.
pub trait ActionAdapter: Send + Sync {
    fn method(&self) -> Method;
    fn num_actions(&self) -> usize;
    fn heading(&self, env: &PursuitEnv, state: &EnvState, i: usize, action: usize) -> Result<f64>;
    /// Added to the environment reward of pursuer `i`.
    fn reward_bonus(&self, _prev: &EnvState, _next: &EnvState, _i: usize) -> f64 {
        0.0
    }
}

/// Potential-field heading for pursuer `i` with the given parameters.
pub fn apf_command(env: &PursuitEnv, state: &EnvState, i: usize, params: &ApfParams) -> Result<f64> {
    let me = state.pursuers[i];
    let neighbors: Vec<_> = env
        .visible_teammates(state, i)
        .into_iter()
        .map(|(j, _)| state.pursuers[j].position)
        .collect();
    apf_heading(
        &env.obstacle_query(state, i),
        me.position,
        state.evader.position,
        &neighbors,
        me.heading,
        params,
    )
}

/// Actions pick (eta, lambda); the potential field turns them into headings.
#[derive(Clone, Debug, PartialEq)]
pub struct DacoopAdapter {
    pub grid: ActionGrid,
    pub apf: ApfParams,
}

impl DacoopAdapter {
    pub fn new(apf: ApfParams) -> Self {
        Self {
            grid: ActionGrid::default(),
            apf,
        }
    }
}

impl ActionAdapter for DacoopAdapter {
    fn method(&self) -> Method {
        Method::Dacoop
    }

    fn num_actions(&self) -> usize {
        self.grid.len()
    }

    fn heading(&self, env: &PursuitEnv, state: &EnvState, i: usize, action: usize) -> Result<f64> {
        apf_command(env, state, i, &self.grid.params(action, &self.apf))
    }
}

/// Maps a joint state to one commanded heading per pursuer. Entries for
/// halted pursuers are ignored by the environment.
pub trait Controller: Send + Sync {
    fn headings(&self, env: &PursuitEnv, state: &EnvState, observations: &[Observation]) -> Result<Vec<f64>>;
}

pub fn encoder_for(env: &PursuitEnv) -> ObservationEncoder {
    ObservationEncoder {
        d_sense: env.params.d_sense,
        evader_scale: env.arena.diagonal(),
    }
}

/// Greedy policy over a trained network.
pub struct QPolicy<A> {
    pub params: NetworkParams,
    pub adapter: A,
}

impl<A: ActionAdapter> QPolicy<A> {
    pub fn new(params: NetworkParams, adapter: A) -> Result<Self> {
        if params.arch.actions != adapter.num_actions() {
            return Err(Error::Incompatible(format!(
                "network has {} actions, {} expects {}",
                params.arch.actions,
                adapter.method(),
                adapter.num_actions()
            )));
        }
        Ok(Self { params, adapter })
    }
}

impl<A: ActionAdapter> Controller for QPolicy<A> {
    fn headings(&self, env: &PursuitEnv, state: &EnvState, observations: &[Observation]) -> Result<Vec<f64>> {
        let encoder = encoder_for(env);
        state
            .pursuers
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.captured && env.halts_captured() {
                    return Ok(p.heading);
                }
                let q = q_forward(&self.params, &encoder.encode(&observations[i]))?;
                self.adapter.heading(env, state, i, argmax(&q))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    /// Environment return per pursuer.
    pub returns: Vec<f64>,
}

pub fn run_episode(
    env: &PursuitEnv,
    controller: &dyn Controller,
    seed: u64,
    mut trace: Option<&mut Trajectory>,
) -> Result<EpisodeStats> {
    let (mut state, mut obs) = env.reset(seed)?;
    if let Some(t) = trace.as_deref_mut() {
        t.record(&state, None);
    }
    let mut returns = vec![0.0; state.pursuers.len()];
    loop {
        let headings = controller.headings(env, &state, &obs)?;
        let res = env.step(&state, &headings)?;
        for (acc, r) in returns.iter_mut().zip(&res.rewards) {
            *acc += r.total;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.record(&res.state, Some(&res.rewards));
        }
        state = res.state;
        obs = res.observations;
        if res.done {
            return Ok(EpisodeStats {
                seed,
                success: res.outcome == Some(Outcome::Success),
                steps: state.step,
                returns,
            });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub mean_return: f64,
    pub per_episode: Vec<EpisodeStats>,
}

/// Greedy rollouts on evaluation seeds. Episodes run in parallel; results
/// are reduced in episode order so the statistics never depend on
/// scheduling.
pub fn evaluate(env: &PursuitEnv, controller: &dyn Controller, n_episodes: usize, seed: u64) -> Result<EvalStats> {
    if n_episodes == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let per_episode = (0..n_episodes)
        .into_par_iter()
        .map(|k| run_episode(env, controller, eval_episode_seed(seed, k), None))
        .collect::<Result<Vec<_>>>()?;
    let successes = per_episode.iter().filter(|e| e.success).count();
    let n = n_episodes as f64;
    let mean_steps = per_episode.iter().map(|e| e.steps as f64).sum::<f64>() / n;
    let mean_return = per_episode
        .iter()
        .map(|e| e.returns.iter().sum::<f64>() / e.returns.len().max(1) as f64)
        .sum::<f64>()
        / n;
    Ok(EvalStats {
        episodes: n_episodes,
        successes,
        success_rate: successes as f64 / n,
        mean_steps,
        mean_return,
        per_episode,
    })
}

/// One metrics line per training episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub success: bool,
    pub steps: usize,
    pub mean_return: f64,
    /// `None` before the buffer holds one batch.
    pub loss_mean: Option<f64>,
    pub epsilon: f64,
    pub wall_ms: u64,
}

pub enum TrainEvent<'a> {
    Episode(&'a EpisodeMetrics),
    Checkpoint { episode: usize, checkpoint: &'a Checkpoint },
}

pub struct TrainOutput {
    pub params: NetworkParams,
    pub metrics: Vec<EpisodeMetrics>,
    pub updates: u64,
}

/// Online/target networks plus optimizer and replay state.
pub struct Learner {
    pub online: NetworkParams,
    pub target: NetworkParams,
    pub adam: AdamState,
    pub replay: PrioritizedReplay<ReplayTransition>,
    pub updates: u64,
    grads: Vec<f64>,
}

impl Learner {
    pub fn new(online: NetworkParams, config: &TrainConfig) -> Result<Self> {
        let n = online.data.len();
        Ok(Self {
            target: online.clone_into_target(),
            online,
            adam: AdamState::new(n),
            replay: PrioritizedReplay::new(config.replay_capacity, config.per_alpha)?,
            updates: 0,
            grads: vec![0.0; n],
        })
    }

    /// One prioritized minibatch step. Returns the mean weighted loss.
    pub fn update<R: Rng + ?Sized>(&mut self, config: &TrainConfig, beta: f64, rng: &mut R, episode: usize) -> Result<f64> {
        let batch = self.replay.sample(config.batch_size, beta, rng)?;
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / config.batch_size as f64;
        let mut loss = 0.0;
        let mut tds = Vec::with_capacity(batch.indices.len());
        for (&idx, &w) in batch.indices.iter().zip(&batch.weights) {
            let t = self.replay.get(idx);
            let y = compute_target(t, &self.online, &self.target, config.gamma)?;
            let cache = forward(&self.online, &t.obs)?;
            let td = y - cache.q[t.action];
            loss += w * 0.5 * td * td;
            q_backward(&self.online, &cache, t.action, td, w * scale, &mut self.grads);
            tds.push(td);
        }
        let loss = loss * scale;
        if !loss.is_finite() || self.grads.iter().any(|g| !g.is_finite()) {
            let max_param = self.online.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Err(Error::NonFiniteLoss {
                episode,
                update: self.updates as usize,
                diagnostics: format!(
                    "loss={loss} max|param|={max_param:e} td={tds:?} is_weights={:?}",
                    batch.weights
                ),
            });
        }
        self.adam.step(&mut self.online.data, &self.grads, config.lr)?;
        for (&idx, td) in batch.indices.iter().zip(&tds) {
            self.replay.update_priority(idx, td.abs() + config.per_epsilon)?;
        }
        self.updates += 1;
        if self.updates.is_multiple_of(config.target_sync as u64) {
            self.target = self.online.clone_into_target();
        }
        Ok(loss)
    }
}

/// Runs the full training loop for an adapter-defined action space.
///
/// Emits a checkpoint before the first episode, every
/// `checkpoint_every` episodes, and after the last one.
pub fn train(
    env: &PursuitEnv,
    adapter: &dyn ActionAdapter,
    config: &TrainConfig,
    seed: u64,
    sink: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainOutput> {
    config.validate()?;
    let arch = Architecture {
        actions: adapter.num_actions(),
        ..config.network
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_INIT, 0));
    let mut learner = Learner::new(NetworkParams::random(arch, &mut init_rng), config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_AGENT, 0));
    let encoder = encoder_for(env);
    let method = adapter.method().as_str();
    let halts = env.halts_captured();

    sink(TrainEvent::Checkpoint {
        episode: 0,
        checkpoint: &Checkpoint::from_network(method, &learner.online),
    })?;
    let mut metrics = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let started = Instant::now();
        let eps = config.epsilon(episode);
        let (mut state, obs) = env.reset(train_episode_seed(seed, episode))?;
        let mut encoded: Vec<EncodedObservation> = obs.iter().map(|o| encoder.encode(o)).collect();
        let n = state.pursuers.len();
        let mut returns = vec![0.0; n];
        let outcome = loop {
            let mut actions = vec![None; n];
            let mut headings = Vec::with_capacity(n);
            for i in 0..n {
                if state.pursuers[i].captured && halts {
                    headings.push(state.pursuers[i].heading);
                    continue;
                }
                let a = select_action_with(adapter.num_actions(), eps, &mut rng, || {
                    q_forward(&learner.online, &encoded[i])
                })?;
                actions[i] = Some(a);
                headings.push(adapter.heading(env, &state, i, a)?);
            }
            let res = env.step(&state, &headings)?;
            let next_encoded: Vec<EncodedObservation> = res.observations.iter().map(|o| encoder.encode(o)).collect();
            let success = res.outcome == Some(Outcome::Success);
            for (i, a) in actions.iter().enumerate() {
                let Some(action) = *a else { continue };
                let reward = res.rewards[i].total + adapter.reward_bonus(&state, &res.state, i);
                returns[i] += reward;
                learner.replay.push(ReplayTransition {
                    obs: encoded[i].clone(),
                    action,
                    reward,
                    next_obs: next_encoded[i].clone(),
                    done: success || (halts && res.state.pursuers[i].captured),
                });
            }
            state = res.state;
            encoded = next_encoded;
            if res.done {
                break res.outcome;
            }
        };

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        if learner.replay.len() >= config.batch_size {
            let beta = config.beta(episode);
            for _ in 0..config.updates_per_episode {
                loss_sum += learner.update(config, beta, &mut rng, episode)?;
                loss_count += 1;
            }
        }
        let m = EpisodeMetrics {
            episode,
            success: outcome == Some(Outcome::Success),
            steps: state.step,
            mean_return: returns.iter().sum::<f64>() / n as f64,
            loss_mean: (loss_count > 0).then(|| loss_sum / loss_count as f64),
            epsilon: eps,
            wall_ms: if config.log_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        log::debug!(
            "episode {episode}: success={} steps={} return={:.2} eps={eps:.3}",
            m.success,
            m.steps,
            m.mean_return
        );
        sink(TrainEvent::Episode(&m))?;
        metrics.push(m);
        let done_episodes = episode + 1;
        let periodic = config.checkpoint_every > 0 && done_episodes % config.checkpoint_every == 0;
        if periodic || done_episodes == config.episodes {
            sink(TrainEvent::Checkpoint {
                episode: done_episodes,
                checkpoint: &Checkpoint::from_network(method, &learner.online),
            })?;
        }
    }
    Ok(TrainOutput {
        params: learner.online,
        metrics,
        updates: learner.updates,
    })
}
