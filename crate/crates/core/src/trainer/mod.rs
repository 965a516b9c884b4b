//! PPO over parallel environments, with baselines and evaluation.

mod eval;
mod optim;

pub use eval::{
    cross_scenario_eval, evaluate, run_episode, summarize, Baseline, BeliefCheckpoint, Controller, CrossCell,
    CrossMatrix, EpisodeResult, EvalReport, EvalRow, MeanStd, StepRecord, SummaryRow,
};
pub use optim::Adam;

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{AdaptationEnv, EnvState, World, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::forcing::ScenarioId;
use crate::policy::{
    FeatureNormalizer, GraphBatch, LossCoefficients, LossStats, PolicyCheckpoint, PolicyConfig, PolicyParams, PpoBatch,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Steps collected from each environment per update.
    pub rollout_steps_per_update: usize,
    pub epochs_per_update: usize,
    pub entropy_coefficient: f64,
    pub value_coefficient: f64,
    /// Stop the epoch loop once a minibatch's approximate KL exceeds this.
    pub kl_limit: Option<f64>,
    pub clip_range: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub parallel_envs: usize,
    pub max_env_steps: u64,
    /// Updates without improvement of the moving-average return before stopping.
    pub early_stop_patience: Option<usize>,
    pub plateau_window: usize,
    pub plateau_min_improvement: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Rewards are divided by this before training.
    pub reward_scale: f64,
    pub normalize_advantage: bool,
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            rollout_steps_per_update: 1024,
            epochs_per_update: 10,
            entropy_coefficient: 0.01,
            value_coefficient: 0.5,
            kl_limit: Some(0.2),
            clip_range: 0.2,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            parallel_envs: 10,
            max_env_steps: 4_500_000,
            early_stop_patience: Some(50),
            plateau_window: 10,
            plateau_min_improvement: 0.005,
            gamma: 1.0,
            gae_lambda: 0.95,
            reward_scale: 1e6,
            normalize_advantage: true,
            checkpoint_interval: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: usize, f: &str| {
            if v == 0 {
                Err(Error::config(format!("train.{f}"), "must be positive"))
            } else {
                Ok(())
            }
        };
        positive(self.batch_size, "batch_size")?;
        positive(self.rollout_steps_per_update, "rollout_steps_per_update")?;
        positive(self.epochs_per_update, "epochs_per_update")?;
        positive(self.parallel_envs, "parallel_envs")?;
        positive(self.plateau_window, "plateau_window")?;
        positive(self.checkpoint_interval, "checkpoint_interval")?;
        if !self.rollout_steps_per_update.is_multiple_of(self.batch_size) {
            return Err(Error::config(
                "train.rollout_steps_per_update",
                format!("must be divisible by batch_size {}", self.batch_size),
            ));
        }
        let fields = [
            (self.entropy_coefficient, "entropy_coefficient", true),
            (self.value_coefficient, "value_coefficient", true),
            (self.clip_range, "clip_range", false),
            (self.learning_rate, "learning_rate", false),
            (self.max_grad_norm, "max_grad_norm", false),
            (self.reward_scale, "reward_scale", false),
            (self.plateau_min_improvement, "plateau_min_improvement", true),
        ];
        for (v, f, zero_ok) in fields {
            if !(v.is_finite() && (v > 0.0 || (zero_ok && v == 0.0))) {
                return Err(Error::config(format!("train.{f}"), "must be positive"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("train.gamma", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("train.gae_lambda", "must lie in [0, 1]"));
        }
        if let Some(k) = self.kl_limit {
            if !(k > 0.0) {
                return Err(Error::config("train.kl_limit", "must be positive"));
            }
        }
        Ok(())
    }

    fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            clip_range: self.clip_range,
            value_coef: self.value_coefficient,
            entropy_coef: self.entropy_coefficient,
        }
    }
}

/// One environment step as stored for the update.
#[derive(Debug, Clone)]
pub struct Transition {
    pub graph: GraphBatch,
    pub actions: Vec<usize>,
    pub log_prob: f64,
    pub value: f64,
    /// Scaled reward.
    pub reward: f64,
    /// The episode ended with this step.
    pub done: bool,
}

/// Transitions from every worker plus bootstrap values.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub per_env: Vec<Vec<Transition>>,
    pub last_values: Vec<f64>,
    /// Raw DKK returns of episodes completed during collection.
    pub episode_returns: Vec<f64>,
    pub seen: FeatureNormalizer,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.per_env.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generalised advantage estimation over one environment's sequence.
/// `dones[t]` marks that the episode ended after step `t`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

struct Worker {
    env: AdaptationEnv,
    state: EnvState,
    rng: ChaCha8Rng,
    episode_return: f64,
}

impl Worker {
    fn new(world: Arc<World>, scenario: ScenarioId, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut env = AdaptationEnv::new(world);
        let state = env.reset(scenario, rng.gen())?;
        Ok(Worker {
            env,
            state,
            rng,
            episode_return: 0.0,
        })
    }

    fn collect(
        &mut self,
        params: &PolicyParams,
        n_steps: usize,
        reward_scale: f64,
    ) -> Result<(Vec<Transition>, f64, Vec<f64>, FeatureNormalizer)> {
        let mut out = Vec::with_capacity(n_steps);
        let mut finished = Vec::new();
        let mut seen = FeatureNormalizer::new();
        for _ in 0..n_steps {
            seen.update(&self.state.features);
            let act = params.act(&self.state, &mut self.rng, false)?;
            let mut graph = GraphBatch::empty();
            graph.push(&params.inputs(&self.state), &self.state.adjacency, &self.state.masks)?;
            let step = self.env.step(&act.actions).map_err(|e| match e {
                Error::Contract(m) => Error::Contract(format!("rollout step {}: {m}", self.state.step)),
                other => other,
            })?;
            self.episode_return += step.reward;
            out.push(Transition {
                graph,
                actions: act.actions.iter().map(|k| k.index()).collect(),
                log_prob: act.joint_log_prob(),
                value: act.value,
                reward: step.reward / reward_scale,
                done: step.done,
            });
            if step.done {
                finished.push(self.episode_return);
                self.episode_return = 0.0;
                let scenario = self.env.scenario();
                self.state = self.env.reset(scenario, self.rng.gen())?;
            } else {
                self.state = step.state;
            }
        }
        let (_, last_value) = params.forward(&self.state)?;
        Ok((out, last_value, finished, seen))
    }
}

/// Steps every worker `n_steps` times in parallel with a frozen policy.
fn collect_rollouts(
    params: &PolicyParams,
    workers: &mut [Worker],
    n_steps: usize,
    reward_scale: f64,
) -> Result<Rollout> {
    let parts: Vec<_> = workers
        .par_iter_mut()
        .map(|w| w.collect(params, n_steps, reward_scale))
        .collect::<Result<_>>()?;
    let mut rollout = Rollout {
        per_env: Vec::with_capacity(parts.len()),
        last_values: Vec::with_capacity(parts.len()),
        episode_returns: Vec::new(),
        seen: FeatureNormalizer::new(),
    };
    for (t, v, finished, seen) in parts {
        rollout.per_env.push(t);
        rollout.last_values.push(v);
        rollout.episode_returns.extend(finished);
        rollout.seen.merge(&seen);
    }
    Ok(rollout)
}

/// Averages over the minibatch steps of one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub stats: LossStats,
    pub minibatch_steps: usize,
    pub epochs_started: usize,
    /// Approximate KL of every minibatch evaluated, in order.
    pub kl_trace: Vec<f64>,
    pub stopped_on_kl: bool,
    pub explained_variance: f64,
}

/// Runs the epoch and minibatch loop on a flattened batch.
pub fn ppo_update(
    params: &mut PolicyParams,
    adam: &mut Adam,
    transitions: &[&Transition],
    advantages: &[f64],
    returns: &[f64],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateDiagnostics> {
    if transitions.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut adv = advantages.to_vec();
    if cfg.normalize_advantage && adv.len() > 1 {
        let ms = summarize(&adv);
        for a in &mut adv {
            *a = (*a - ms.mean) / (ms.std + 1e-8);
        }
    }
    let coef = cfg.coefficients();
    let mut diag = UpdateDiagnostics {
        stats: LossStats::default(),
        minibatch_steps: 0,
        epochs_started: 0,
        kl_trace: Vec::new(),
        stopped_on_kl: false,
        explained_variance: explained_variance(&transitions.iter().map(|t| t.value).collect::<Vec<_>>(), returns),
    };
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    'epochs: for _ in 0..cfg.epochs_per_update {
        diag.epochs_started += 1;
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = PpoBatch {
                graphs: GraphBatch::concat(chunk.iter().map(|&i| &transitions[i].graph)),
                actions: chunk
                    .iter()
                    .flat_map(|&i| transitions[i].actions.iter().copied())
                    .collect(),
                old_log_prob: chunk.iter().map(|&i| transitions[i].log_prob).collect(),
                advantages: chunk.iter().map(|&i| adv[i]).collect(),
                returns: chunk.iter().map(|&i| returns[i]).collect(),
            };
            let (stats, mut grad) = params.ppo_loss_and_grad(&batch, &coef);
            if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "PPO loss after {} minibatch steps",
                    diag.minibatch_steps
                )));
            }
            diag.kl_trace.push(stats.approx_kl);
            if cfg.kl_limit.is_some_and(|k| stats.approx_kl > k) {
                diag.stopped_on_kl = true;
                break 'epochs;
            }
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut params.values, &grad);
            diag.minibatch_steps += 1;
            let w = 1.0 / (diag.minibatch_steps as f64);
            let s = &mut diag.stats;
            s.loss += (stats.loss - s.loss) * w;
            s.policy_loss += (stats.policy_loss - s.policy_loss) * w;
            s.value_loss += (stats.value_loss - s.value_loss) * w;
            s.entropy += (stats.entropy - s.entropy) * w;
            s.approx_kl += (stats.approx_kl - s.approx_kl) * w;
            s.clip_fraction += (stats.clip_fraction - s.clip_fraction) * w;
        }
    }
    Ok(diag)
}

pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

fn explained_variance(pred: &[f64], target: &[f64]) -> f64 {
    let var_t = summarize(target).std.powi(2);
    if var_t == 0.0 {
        return f64::NAN;
    }
    let resid: Vec<f64> = target.iter().zip(pred).map(|(t, p)| t - p).collect();
    1.0 - summarize(&resid).std.powi(2) / var_t
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub update: usize,
    pub env_steps: u64,
    pub episodes: u64,
    /// Moving average of raw DKK episode returns, empty until one finishes.
    pub mean_return: Option<f64>,
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub explained_variance: f64,
    pub minibatch_steps: usize,
    pub stopped_on_kl: bool,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub policy: PolicyCheckpoint,
    pub adam: Adam,
    pub scenario: ScenarioId,
    pub env_steps: u64,
    pub updates: usize,
    pub episodes: u64,
    pub recent_returns: VecDeque<f64>,
    pub best_mean_return: Option<f64>,
    pub updates_since_best: usize,
}

impl TrainerState {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
    }
}

/// Reads either a bare policy checkpoint or a trainer checkpoint.
pub fn load_policy(path: &Path, expected: Option<&PolicyConfig>) -> Result<PolicyParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))?;
    let policy = if value.get("policy").is_some() {
        value["policy"].clone()
    } else {
        value
    };
    let ck: PolicyCheckpoint =
        serde_json::from_value(policy).map_err(|e| Error::parse(path.display().to_string(), 0, e.to_string()))?;
    ck.into_params(expected)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub state: TrainerState,
    pub log: Vec<LogRow>,
    pub checkpoints: Vec<PathBuf>,
    pub stopped_early: bool,
}

/// Called after every update with the new log row.
pub type Progress<'a> = &'a mut dyn FnMut(&LogRow);

/// Trains on `scenario` until `max_env_steps` or a return plateau.
/// Checkpoints are written to `out` when given.
pub fn train(
    world: Arc<World>,
    scenario: ScenarioId,
    cfg: &TrainConfig,
    policy_cfg: &PolicyConfig,
    out: Option<&Path>,
    resume: Option<TrainerState>,
    progress: Option<Progress<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    policy_cfg.validate()?;
    world.scenarios.get(scenario)?;
    let mut state = match resume {
        Some(s) => {
            s.policy.clone().into_params(Some(policy_cfg))?;
            s
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let params = PolicyParams::init(*policy_cfg, &mut rng);
            TrainerState {
                adam: Adam::new(params.len(), cfg.learning_rate),
                policy: PolicyCheckpoint::from_params(&params),
                scenario,
                env_steps: 0,
                updates: 0,
                episodes: 0,
                recent_returns: VecDeque::new(),
                best_mean_return: None,
                updates_since_best: 0,
            }
        }
    };
    let mut params = state.policy.clone().into_params(Some(policy_cfg))?;
    let mut adam = state.adam.clone();
    adam.lr = cfg.learning_rate;

    // Workers are reseeded from the update counter, so a resumed run draws
    // fresh episodes rather than replaying the interrupted ones.
    let round = state.updates as u64;
    let mut workers: Vec<Worker> = (0..cfg.parallel_envs)
        .map(|i| {
            Worker::new(
                world.clone(),
                scenario,
                cfg.seed ^ round.wrapping_mul(0x9E37_79B9_7F4A_7C15),
                i as u64 + 1,
            )
        })
        .collect::<Result<_>>()?;
    let mut update_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ round);
    update_rng.set_stream(0);

    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    let mut stopped_early = false;
    let mut progress = progress;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let snapshot = |params: &PolicyParams, dir: Option<&Path>| {
        if let Some(d) = dir {
            let _ = PolicyCheckpoint::from_params(params).save(&d.join("nonfinite_snapshot.json"));
        }
    };

    while state.env_steps < cfg.max_env_steps {
        let rollout = collect_rollouts(&params, &mut workers, cfg.rollout_steps_per_update, cfg.reward_scale)?;
        let mut flat = Vec::with_capacity(rollout.len());
        let mut advantages = Vec::with_capacity(rollout.len());
        let mut returns = Vec::with_capacity(rollout.len());
        for (seq, &last) in rollout.per_env.iter().zip(&rollout.last_values) {
            let rewards: Vec<f64> = seq.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seq.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = seq.iter().map(|t| t.done).collect();
            let (a, r) = gae(&rewards, &values, &dones, last, cfg.gamma, cfg.gae_lambda);
            advantages.extend(a);
            returns.extend(r);
            flat.extend(seq.iter());
        }
        let diag = match ppo_update(
            &mut params,
            &mut adam,
            &flat,
            &advantages,
            &returns,
            cfg,
            &mut update_rng,
        ) {
            Ok(d) => d,
            Err(e) => {
                snapshot(&params, out);
                return Err(e);
            }
        };
        params.normalizer.merge(&rollout.seen);

        state.env_steps += rollout.len() as u64;
        state.updates += 1;
        state.episodes += rollout.episode_returns.len() as u64;
        for r in &rollout.episode_returns {
            state.recent_returns.push_back(*r);
            while state.recent_returns.len() > cfg.plateau_window {
                state.recent_returns.pop_front();
            }
        }
        let mean_return = (!state.recent_returns.is_empty())
            .then(|| state.recent_returns.iter().sum::<f64>() / state.recent_returns.len() as f64);
        if let Some(m) = mean_return.filter(|_| state.recent_returns.len() == cfg.plateau_window) {
            match state.best_mean_return {
                Some(best) if m <= best + cfg.plateau_min_improvement * best.abs() => state.updates_since_best += 1,
                _ => {
                    state.best_mean_return = Some(m);
                    state.updates_since_best = 0;
                }
            }
        }
        let row = LogRow {
            update: state.updates,
            env_steps: state.env_steps,
            episodes: state.episodes,
            mean_return,
            loss: diag.stats.loss,
            policy_loss: diag.stats.policy_loss,
            value_loss: diag.stats.value_loss,
            entropy: diag.stats.entropy,
            approx_kl: diag.stats.approx_kl,
            clip_fraction: diag.stats.clip_fraction,
            explained_variance: diag.explained_variance,
            minibatch_steps: diag.minibatch_steps,
            stopped_on_kl: diag.stopped_on_kl,
        };
        if let Some(p) = progress.as_mut() {
            p(&row);
        }
        log.push(row);

        state.policy = PolicyCheckpoint::from_params(&params);
        state.adam = adam.clone();
        if let Some(dir) = out {
            if state.updates % cfg.checkpoint_interval == 0 {
                let path = dir.join(format!("checkpoint_{:06}.json", state.updates));
                state.save(&path)?;
                checkpoints.push(path);
            }
        }
        if cfg.early_stop_patience.is_some_and(|p| state.updates_since_best >= p) {
            stopped_early = true;
            break;
        }
    }

    if let Some(dir) = out {
        let path = dir.join("checkpoint_final.json");
        state.save(&path)?;
        checkpoints.push(path);
        let policy = dir.join("policy.json");
        state.policy.save(&policy)?;
        checkpoints.push(policy);
    }
    Ok(TrainOutcome {
        params,
        state,
        log,
        checkpoints,
        stopped_early,
    })
}

/// Features observed by a set of states, for warming a normaliser in tests.
pub fn observed_features(states: &[EnvState]) -> Vec<[f64; FEATURE_DIM]> {
    states.iter().flat_map(|s| s.features.iter().copied()).collect()
}
