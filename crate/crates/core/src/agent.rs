//! Distributed PPO with disjoint actor and critic networks: W workers collect
//! one episode each from a frozen snapshot, then a single coordinator runs M
//! epochs of clipped-surrogate updates.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ControlEnv, EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::lindblad::PropagatorPair;
use crate::nn::{adam_update, Adam, AdamConfig, Mlp};
use crate::parallel;
use crate::protocol::{Action, Protocol};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub workers: usize,
    pub clip_eps: f64,
    pub learning_rate: f64,
    pub discount: f64,
    pub update_epochs: usize,
    pub iterations: usize,
    pub hidden_width: usize,
    pub hidden_depth: usize,
    pub seed: u64,
    pub normalize_advantages: bool,
    /// Stop early once the best fidelity reaches this value.
    pub stop_at_fidelity: Option<f64>,
    /// Stop before an iteration would exceed this many episodes.
    pub max_episodes: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            workers: 12,
            clip_eps: 0.2,
            learning_rate: 1e-4,
            discount: 0.85,
            update_epochs: 15,
            iterations: 100,
            hidden_width: 128,
            hidden_depth: 4,
            seed: 0,
            normalize_advantages: false,
            stop_at_fidelity: None,
            max_episodes: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::Config { key: key.into(), reason: reason.into() });
        if self.workers == 0 {
            return bad("workers", "must be positive");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps", "must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount", "must lie in (0, 1]");
        }
        if self.update_epochs == 0 {
            return bad("update_epochs", "must be positive");
        }
        if self.hidden_width == 0 {
            return bad("hidden_width", "must be positive");
        }
        Ok(())
    }
}

/// Policy and value networks plus their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic<T> {
    pub actor: Mlp<T>,
    pub critic: Mlp<T>,
    pub actor_opt: Adam<T>,
    pub critic_opt: Adam<T>,
}

impl<T: Real> ActorCritic<T> {
    /// Both heads start at zero: uniform policy, zero value.
    pub fn new(obs_dim: usize, width: usize, depth: usize, learning_rate: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let trunk: Vec<usize> = std::iter::once(obs_dim).chain(std::iter::repeat_n(width, depth)).collect();
        let actor = Mlp::new(&[trunk.as_slice(), &[2]].concat(), true, &mut rng)?;
        let critic = Mlp::new(&[trunk.as_slice(), &[1]].concat(), true, &mut rng)?;
        let adam = AdamConfig::with_lr(learning_rate);
        Ok(Self {
            actor_opt: Adam::new(adam, actor.num_params()),
            critic_opt: Adam::new(adam, critic.num_params()),
            actor,
            critic,
        })
    }

    pub fn from_parts(actor: Mlp<T>, critic: Mlp<T>, actor_opt: Adam<T>, critic_opt: Adam<T>) -> Result<Self> {
        if actor.output_dim() != 2 || critic.output_dim() != 1 || actor.input_dim() != critic.input_dim() {
            return Err(Error::InvalidDimension(format!(
                "actor {:?} / critic {:?} do not form an actor-critic pair",
                actor.sizes(),
                critic.sizes()
            )));
        }
        if actor_opt.m.len() != actor.num_params() || critic_opt.m.len() != critic.num_params() {
            return Err(Error::InvalidDimension("optimizer state does not match the networks".into()));
        }
        Ok(Self { actor, critic, actor_opt, critic_opt })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    fn row(&self, obs: &Observation<T>) -> Result<Array2<T>> {
        Array2::from_shape_vec((1, obs.len()), obs.0.clone())
            .map_err(|e| Error::InvalidDimension(e.to_string()))
    }

    /// Log-probabilities `(log π(off|s), log π(on|s))`.
    pub fn log_probs(&self, obs: &Observation<T>) -> Result<(T, T)> {
        let logits = self.actor.forward(self.row(obs)?.view())?;
        Ok(log_softmax2(logits[[0, 0]], logits[[0, 1]]))
    }

    /// `(π(on|s), π(off|s))`.
    pub fn policy_forward(&self, obs: &Observation<T>) -> Result<(T, T)> {
        let (off, on) = self.log_probs(obs)?;
        Ok((on.exp(), off.exp()))
    }

    pub fn log_prob(&self, obs: &Observation<T>, action: Action) -> Result<T> {
        let (off, on) = self.log_probs(obs)?;
        Ok(if action.is_on() { on } else { off })
    }

    pub fn value_forward(&self, obs: &Observation<T>) -> Result<T> {
        Ok(self.critic.forward(self.row(obs)?.view())?[[0, 0]])
    }

    /// Most probable action; exact ties go to off.
    pub fn greedy_action(&self, obs: &Observation<T>) -> Result<Action> {
        let (off, on) = self.log_probs(obs)?;
        Ok(if on > off { Action::On } else { Action::Off })
    }
}

fn log_softmax2<T: Real>(a: T, b: T) -> (T, T) {
    let m = a.max(b);
    let lse = m + ((a - m).exp() + (b - m).exp()).ln();
    (a - lse, b - lse)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub observation: Observation<T>,
    pub action: Action,
    pub reward: T,
    pub log_prob_old: T,
    pub value_estimate: T,
}

/// `W` complete episodes, stored episode after episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch<T> {
    pub transitions: Vec<Transition<T>>,
    pub episode_len: usize,
    pub final_fidelities: Vec<T>,
    /// Filled by [`compute_returns_advantages`].
    pub returns: Vec<T>,
    pub advantages: Vec<T>,
}

impl<T: Real> RolloutBatch<T> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn episodes(&self) -> usize {
        self.final_fidelities.len()
    }

    pub fn episode_actions(&self, e: usize) -> Vec<Action> {
        self.transitions[e * self.episode_len..(e + 1) * self.episode_len]
            .iter()
            .map(|t| t.action)
            .collect()
    }

    pub fn observation_matrix(&self) -> Result<Array2<T>> {
        let d = self.transitions.first().map_or(0, |t| t.observation.len());
        let mut flat = Vec::with_capacity(self.len() * d);
        for t in &self.transitions {
            if t.observation.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: t.observation.len() });
            }
            flat.extend_from_slice(t.observation.as_slice());
        }
        Array2::from_shape_vec((self.len(), d), flat).map_err(|e| Error::InvalidDimension(e.to_string()))
    }

    /// Builds a batch from hand-made transitions (single episode).
    pub fn from_transitions(transitions: Vec<Transition<T>>, final_fidelity: T) -> Self {
        Self {
            episode_len: transitions.len(),
            transitions,
            final_fidelities: vec![final_fidelity],
            returns: Vec::new(),
            advantages: Vec::new(),
        }
    }
}

/// Samples one episode with the categorical policy.
fn run_episode<T: Real>(
    agent: &ActorCritic<T>,
    env_config: &EnvConfig<T>,
    pair: &Arc<PropagatorPair<T>>,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> Result<(Vec<Transition<T>>, T)> {
    let mut env = ControlEnv::with_propagators(env_config.clone(), Arc::clone(pair))?;
    let mut obs = env.reset(seed);
    let mut out = Vec::with_capacity(env_config.steps);
    while !env.is_done() {
        let (lp_off, lp_on) = agent.log_probs(&obs)?;
        let value = agent.value_forward(&obs)?;
        let u: f64 = rng.gen();
        let action = if T::lit(u) < lp_on.exp() { Action::On } else { Action::Off };
        let step = env.step(action)?;
        out.push(Transition {
            observation: obs,
            action,
            reward: step.reward,
            log_prob_old: if action.is_on() { lp_on } else { lp_off },
            value_estimate: value,
        });
        obs = step.observation;
    }
    Ok((out, env.fidelity()))
}

/// Random stream of worker `w` in iteration `iteration`.
pub fn worker_rng(seed: u64, iteration: usize, workers: usize, w: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((iteration * workers + w) as u64);
    rng
}

/// One episode per worker from a read-only snapshot. Any worker failure fails
/// the whole batch.
pub fn collect_rollouts<T: Real>(
    agent: &ActorCritic<T>,
    env_config: &EnvConfig<T>,
    pair: &Arc<PropagatorPair<T>>,
    workers: usize,
    seed: u64,
    iteration: usize,
) -> Result<RolloutBatch<T>> {
    if workers == 0 {
        return Err(Error::Config { key: "workers".into(), reason: "must be positive".into() });
    }
    let episodes = parallel::map_indexed(workers, |w| {
        let mut rng = worker_rng(seed, iteration, workers, w);
        run_episode(agent, env_config, pair, &mut rng, seed ^ w as u64)
            .map_err(|e| Error::Worker { worker: w, reason: e.to_string() })
    });
    let mut batch = RolloutBatch {
        transitions: Vec::with_capacity(workers * env_config.steps),
        episode_len: env_config.steps,
        final_fidelities: Vec::with_capacity(workers),
        returns: Vec::new(),
        advantages: Vec::new(),
    };
    for ep in episodes {
        let (tr, f) = ep?;
        batch.transitions.extend(tr);
        batch.final_fidelities.push(f);
    }
    Ok(batch)
}

/// Discounted return `G_t = R_{t+1} + Γ G_{t+1}` per episode and advantage
/// `A_t = G_t − V(s_t)` against the values recorded at collection.
pub fn compute_returns_advantages<T: Real>(batch: &mut RolloutBatch<T>, discount: T, normalize: bool) -> Result<()> {
    if !(discount >= T::zero() && discount <= T::one()) {
        return Err(Error::Domain(format!("discount {discount} outside [0, 1]")));
    }
    let len = batch.episode_len;
    if len == 0 || !batch.len().is_multiple_of(len) {
        return Err(Error::InvalidState("batch does not hold whole episodes".into()));
    }
    let mut returns = vec![T::zero(); batch.len()];
    for start in (0..batch.len()).step_by(len) {
        let mut g = T::zero();
        for t in (start..start + len).rev() {
            g = batch.transitions[t].reward + discount * g;
            returns[t] = g;
        }
    }
    let mut adv: Vec<T> = returns
        .iter()
        .zip(&batch.transitions)
        .map(|(&g, tr)| g - tr.value_estimate)
        .collect();
    if normalize && adv.len() > 1 {
        let n = T::lit(adv.len() as f64);
        let mean = adv.iter().copied().sum::<T>() / n;
        let var = adv.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / n;
        let std = var.sqrt() + T::lit(1e-8);
        adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }
    batch.returns = returns;
    batch.advantages = adv;
    Ok(())
}

pub fn clip<T: Real>(x: T, lo: T, hi: T) -> Result<T> {
    if lo > hi {
        return Err(Error::Domain(format!("clip bounds reversed: {lo} > {hi}")));
    }
    Ok(x.max(lo).min(hi))
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)` for one sample.
pub fn clipped_objective<T: Real>(ratio: T, advantage: T, eps: T) -> T {
    let clipped = ratio.max(T::one() - eps).min(T::one() + eps);
    (ratio * advantage).min(clipped * advantage)
}

fn check_ready<T: Real>(batch: &RolloutBatch<T>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidState("empty batch".into()));
    }
    if batch.advantages.len() != batch.len() || batch.returns.len() != batch.len() {
        return Err(Error::InvalidState("returns and advantages not computed".into()));
    }
    Ok(())
}

/// Negated mean clipped surrogate and its gradient over the actor parameters.
pub fn ppo_surrogate_loss<T: Real>(actor: &Mlp<T>, batch: &RolloutBatch<T>, clip_eps: T) -> Result<(T, Vec<T>)> {
    check_ready(batch)?;
    let x = batch.observation_matrix()?;
    let (logits, cache) = actor.forward_cached(x.view())?;
    let b = T::lit(batch.len() as f64);
    let mut dlogits = Array2::zeros(logits.raw_dim());
    let mut total = T::zero();
    for (i, tr) in batch.transitions.iter().enumerate() {
        let (lp_off, lp_on) = log_softmax2(logits[[i, 0]], logits[[i, 1]]);
        let lp = if tr.action.is_on() { lp_on } else { lp_off };
        let ratio = (lp - tr.log_prob_old).exp();
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let obj = clipped_objective(ratio, adv, clip_eps);
        total += obj;
        // The min picks the unclipped branch, or the clipped one inside the
        // band where both coincide; outside the band the gradient is zero.
        let inside = ratio >= T::one() - clip_eps && ratio <= T::one() + clip_eps;
        let dobj_dlp = if unclipped <= obj || inside { ratio * adv } else { T::zero() };
        // d log π(a) / d logits = onehot(a) − π.
        let (p_off, p_on) = (lp_off.exp(), lp_on.exp());
        let a = tr.action.index();
        let scale = -dobj_dlp / b;
        dlogits[[i, 0]] = scale * (if a == 0 { T::one() } else { T::zero() } - p_off);
        dlogits[[i, 1]] = scale * (if a == 1 { T::one() } else { T::zero() } - p_on);
    }
    Ok((-total / b, actor.backward(&cache, dlogits.view())))
}

/// Mean squared error against the stored returns `V̂_t`.
pub fn critic_loss<T: Real>(critic: &Mlp<T>, batch: &RolloutBatch<T>) -> Result<(T, Vec<T>)> {
    check_ready(batch)?;
    let x = batch.observation_matrix()?;
    let (v, cache) = critic.forward_cached(x.view())?;
    let b = T::lit(batch.len() as f64);
    let mut dv = Array2::zeros(v.raw_dim());
    let mut loss = T::zero();
    for i in 0..batch.len() {
        let r = v[[i, 0]] - batch.returns[i];
        loss += r * r;
        dv[[i, 0]] = T::lit(2.0) * r / b;
    }
    Ok((loss / b, critic.backward(&cache, dv.view())))
}

/// Deterministic rollout of the most probable action at every slice.
pub fn argmax_rollout<T: Real>(
    agent: &ActorCritic<T>,
    env_config: &EnvConfig<T>,
    pair: &Arc<PropagatorPair<T>>,
) -> Result<(Vec<Action>, T)> {
    let mut env = ControlEnv::with_propagators(env_config.clone(), Arc::clone(pair))?;
    let mut obs = env.reset(0);
    let mut actions = Vec::with_capacity(env_config.steps);
    while !env.is_done() {
        let a = agent.greedy_action(&obs)?;
        obs = env.step(a)?.observation;
        actions.push(a);
    }
    Ok((actions, env.fidelity()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub episodes_so_far: usize,
    pub mean_fidelity: f64,
    pub best_fidelity: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult<T> {
    pub best_actions: Vec<Action>,
    pub best_protocol: Protocol<T>,
    pub best_fidelity: T,
    /// Argmax rollout of the policy left after the last update.
    pub final_policy_actions: Vec<Action>,
    pub final_policy_fidelity: T,
    pub episodes: usize,
    pub iterations: usize,
    pub curve: Vec<CurvePoint>,
    pub agent: ActorCritic<T>,
}

fn finite_or_diverge<T: Real>(iteration: usize, what: &str, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, detail: format!("{what} = {v}") })
    }
}

fn consider<T: Real>(best: &mut Option<(T, Vec<Action>)>, f: T, acts: Vec<Action>) {
    if best.as_ref().is_none_or(|(b, _)| f > *b) {
        *best = Some((f, acts));
    }
}

/// Collect, estimate advantages, run `M` clipped epochs; repeat. Tracks the
/// best protocol among all sampled episodes and argmax rollouts.
pub fn train<T: Real>(config: &TrainConfig, env_config: &EnvConfig<T>) -> Result<TrainResult<T>> {
    config.validate()?;
    env_config.validate()?;
    let n = env_config.model.n();
    let agent = ActorCritic::new(2 * n * n, config.hidden_width, config.hidden_depth, config.learning_rate, config.seed)?;
    train_from(agent, config, env_config)
}

pub fn train_from<T: Real>(
    mut agent: ActorCritic<T>,
    config: &TrainConfig,
    env_config: &EnvConfig<T>,
) -> Result<TrainResult<T>> {
    config.validate()?;
    let pair = Arc::new(env_config.propagators()?);
    let started = Instant::now();
    let eps = T::lit(config.clip_eps);
    let discount = T::lit(config.discount);
    let mut best: Option<(T, Vec<Action>)> = None;
    let mut curve = Vec::new();
    let mut episodes = 0;
    let mut iterations = 0;
    for it in 0..config.iterations {
        if config.max_episodes.is_some_and(|m| episodes + config.workers > m) {
            break;
        }
        let mut batch = collect_rollouts(&agent, env_config, &pair, config.workers, config.seed, it)?;
        episodes += batch.episodes();
        for e in 0..batch.episodes() {
            consider(&mut best, batch.final_fidelities[e], batch.episode_actions(e));
        }
        compute_returns_advantages(&mut batch, discount, config.normalize_advantages)?;
        for _ in 0..config.update_epochs {
            let (la, ga) = ppo_surrogate_loss(&agent.actor, &batch, eps)?;
            finite_or_diverge(it, "actor loss", la)?;
            adam_update(&mut agent.actor, &mut agent.actor_opt, &ga)?;
            let (lc, gc) = critic_loss(&agent.critic, &batch)?;
            finite_or_diverge(it, "critic loss", lc)?;
            adam_update(&mut agent.critic, &mut agent.critic_opt, &gc)?;
        }
        if !agent.actor.all_finite() || !agent.critic.all_finite() {
            return Err(Error::Divergence { iteration: it, detail: "non-finite network parameters".into() });
        }
        let (acts, f) = argmax_rollout(&agent, env_config, &pair)?;
        consider(&mut best, f, acts);
        iterations = it + 1;
        let mean = batch.final_fidelities.iter().map(|f| f.as_f64()).sum::<f64>() / batch.episodes() as f64;
        let best_f = best.as_ref().expect("at least one episode").0;
        curve.push(CurvePoint {
            iteration: it,
            episodes_so_far: episodes,
            mean_fidelity: mean,
            best_fidelity: best_f.as_f64(),
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        if config.stop_at_fidelity.is_some_and(|s| best_f.as_f64() >= s) {
            break;
        }
    }
    let (final_policy_actions, final_policy_fidelity) = argmax_rollout(&agent, env_config, &pair)?;
    let (best_fidelity, best_actions) = match best {
        Some(b) if b.0 >= final_policy_fidelity => b,
        _ => (final_policy_fidelity, final_policy_actions.clone()),
    };
    Ok(TrainResult {
        best_protocol: Protocol::bang_bang(&best_actions, env_config.model.gamma_max()),
        best_actions,
        best_fidelity,
        final_policy_actions,
        final_policy_fidelity,
        episodes,
        iterations,
        curve,
        agent,
    })
}

/// Writes `iteration,episodes_so_far,mean_fidelity,best_fidelity,wall_seconds`.
pub fn write_learning_curve<W: Write>(out: W, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    if curve.is_empty() {
        w.write_record(["iteration", "episodes_so_far", "mean_fidelity", "best_fidelity", "wall_seconds"])?;
    }
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub const CHECKPOINT_FORMAT: &str = "qctrl-ppo-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub seed: u64,
    pub iteration: usize,
    pub adam: AdamConfig,
    pub actor_step: u64,
    pub critic_step: u64,
    /// Order of the flat blocks that follow the header line.
    pub layout: Vec<String>,
    pub value_count: usize,
}

/// One JSON header line, then little-endian f64 values: actor, critic, and
/// the Adam moments of each.
pub fn save_checkpoint<T: Real, W: Write>(mut out: W, agent: &ActorCritic<T>, seed: u64, iteration: usize) -> Result<()> {
    let blocks = [
        agent.actor.to_flat(),
        agent.critic.to_flat(),
        agent.actor_opt.m.clone(),
        agent.actor_opt.v.clone(),
        agent.critic_opt.m.clone(),
        agent.critic_opt.v.clone(),
    ];
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        actor_sizes: agent.actor.sizes(),
        critic_sizes: agent.critic.sizes(),
        seed,
        iteration,
        adam: agent.actor_opt.config,
        actor_step: agent.actor_opt.step,
        critic_step: agent.critic_opt.step,
        layout: ["actor", "critic", "actor_m", "actor_v", "critic_m", "critic_v"].map(String::from).to_vec(),
        value_count: blocks.iter().map(Vec::len).sum(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for v in blocks.iter().flatten() {
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Real, R: Read>(input: R) -> Result<(ActorCritic<T>, CheckpointHeader)> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
    if header.format != CHECKPOINT_FORMAT || header.version != 1 {
        return Err(Error::Config { key: "format".into(), reason: format!("unsupported checkpoint {} v{}", header.format, header.version) });
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * header.value_count {
        return Err(Error::DimensionMismatch { expected: 8 * header.value_count, actual: bytes.len() });
    }
    let values: Vec<T> = bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut actor = Mlp::new(&header.actor_sizes, true, &mut rng)?;
    let mut critic = Mlp::new(&header.critic_sizes, true, &mut rng)?;
    let (na, nc) = (actor.num_params(), critic.num_params());
    if header.value_count != 3 * (na + nc) {
        return Err(Error::DimensionMismatch { expected: 3 * (na + nc), actual: header.value_count });
    }
    let mut rest = values.as_slice();
    let mut take = |k: usize| {
        let (head, tail) = rest.split_at(k);
        rest = tail;
        head.to_vec()
    };
    actor.set_flat(&take(na))?;
    critic.set_flat(&take(nc))?;
    let actor_opt = Adam { config: header.adam, m: take(na), v: take(na), step: header.actor_step };
    let critic_opt = Adam { config: header.adam, m: take(nc), v: take(nc), step: header.critic_step };
    Ok((ActorCritic::from_parts(actor, critic, actor_opt, critic_opt)?, header))
}

pub fn save_checkpoint_file<T: Real>(path: &Path, agent: &ActorCritic<T>, seed: u64, iteration: usize) -> Result<()> {
    save_checkpoint(std::io::BufWriter::new(std::fs::File::create(path)?), agent, seed, iteration)
}

pub fn load_checkpoint_file<T: Real>(path: &Path) -> Result<(ActorCritic<T>, CheckpointHeader)> {
    load_checkpoint(std::fs::File::open(path)?)
}
