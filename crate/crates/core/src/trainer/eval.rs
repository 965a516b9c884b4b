use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{AdaptationEnv, World};
use crate::error::{Error, Result};
use crate::forcing::ScenarioId;
use crate::policy::PolicyParams;
use crate::valuation::{CostBreakdown, InterventionKind, ZoneCosts};

const CONTROL_STREAM: u64 = 3;

/// Who picks the actions during an evaluation episode.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Most likely kind per zone under the trained policy.
    Policy(&'a PolicyParams),
    NoControl,
    /// Uniform over each zone's unmasked kinds.
    RandomControl,
}

impl Controller<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Policy(_) => "RL",
            Controller::NoControl => "NoControl",
            Controller::RandomControl => "RandomControl",
        }
    }
}

/// Baselines selectable by name on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    NoControl,
    RandomControl,
}

impl Baseline {
    pub fn controller(self) -> Controller<'static> {
        match self {
            Baseline::NoControl => Controller::NoControl,
            Baseline::RandomControl => Controller::RandomControl,
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "nocontrol" | "nc" => Ok(Baseline::NoControl),
            "randomcontrol" | "random" | "rnd" => Ok(Baseline::RandomControl),
            _ => Err(Error::config(
                "baseline",
                format!("unknown baseline `{s}`; valid: no-control, random-control"),
            )),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.controller().name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub year: i32,
    pub rainfall_mm: f64,
    pub actions: Vec<InterventionKind>,
    pub costs: CostBreakdown,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub policy: String,
    pub belief: Option<ScenarioId>,
    pub reality: ScenarioId,
    pub seed: u64,
    pub total_reward: f64,
    /// City-wide cumulative components.
    pub totals: ZoneCosts,
    pub steps: Vec<StepRecord>,
}

impl EpisodeResult {
    pub fn row(&self) -> EvalRow {
        EvalRow {
            policy: self.policy.clone(),
            belief: self.belief.map(|b| b.to_string()).unwrap_or_default(),
            reality: self.reality.to_string(),
            seed: self.seed,
            total_reward: self.total_reward,
            infrastructure: self.totals.infrastructure,
            delay: self.totals.delay,
            cancellation: self.totals.cancellation,
            investment: self.totals.investment,
            maintenance: self.totals.maintenance,
        }
    }

    pub fn action_spend(&self) -> f64 {
        self.totals.investment + self.totals.maintenance
    }
}

/// Plays one full episode.
pub fn run_episode(
    world: &Arc<World>,
    controller: Controller<'_>,
    belief: Option<ScenarioId>,
    reality: ScenarioId,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut env = AdaptationEnv::new(world.clone());
    let mut state = env.reset(reality, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CONTROL_STREAM);
    let mut steps = Vec::with_capacity(state.horizon);
    let mut totals = ZoneCosts::default();
    let mut total_reward = 0.0;
    loop {
        let actions = match controller {
            Controller::Policy(p) => p.act(&state, &mut rng, true)?.actions,
            Controller::NoControl => vec![InterventionKind::DoNothing; state.zone_count()],
            Controller::RandomControl => (0..state.zone_count())
                .map(|z| {
                    *state
                        .allowed_kinds(z)
                        .choose(&mut rng)
                        .expect("DoNothing is always allowed")
                })
                .collect(),
        };
        let out = env.step(&actions)?;
        let city = out.costs.city();
        totals = ZoneCosts {
            infrastructure: totals.infrastructure + city.infrastructure,
            delay: totals.delay + city.delay,
            cancellation: totals.cancellation + city.cancellation,
            investment: totals.investment + city.investment,
            maintenance: totals.maintenance + city.maintenance,
        };
        total_reward += out.reward;
        steps.push(StepRecord {
            step: out.event.step_index,
            year: out.event.year,
            rainfall_mm: out.event.depth_mm,
            actions,
            costs: out.costs,
            reward: out.reward,
        });
        if out.done {
            break;
        }
        state = out.state;
    }
    Ok(EpisodeResult {
        policy: controller.name().to_string(),
        belief,
        reality,
        seed,
        total_reward,
        totals,
        steps,
    })
}

/// One episode per seed, in seed order.
pub fn evaluate(
    world: &Arc<World>,
    controller: Controller<'_>,
    belief: Option<ScenarioId>,
    reality: ScenarioId,
    seeds: &[u64],
) -> Result<Vec<EpisodeResult>> {
    seeds
        .par_iter()
        .map(|&s| run_episode(world, controller, belief, reality, s))
        .collect()
}

/// Sample mean and standard deviation (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.n.max(1) as f64).sqrt()
    }
}

pub fn summarize(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std, n }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub policy: String,
    pub belief: String,
    pub reality: String,
    pub seed: u64,
    pub total_reward: f64,
    pub infrastructure: f64,
    pub delay: f64,
    pub cancellation: f64,
    pub investment: f64,
    pub maintenance: f64,
}

impl EvalRow {
    pub fn components(&self) -> [f64; 5] {
        [
            self.infrastructure,
            self.delay,
            self.cancellation,
            self.investment,
            self.maintenance,
        ]
    }
}

/// Group statistics for one (policy, belief, reality) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub belief: String,
    pub reality: String,
    pub reward: MeanStd,
    /// Infrastructure, delay, cancellation, investment, maintenance.
    pub components: [MeanStd; 5],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn from_episodes<'a>(episodes: impl IntoIterator<Item = &'a EpisodeResult>) -> Self {
        EvalReport {
            rows: episodes.into_iter().map(EpisodeResult::row).collect(),
        }
    }

    /// Groups in order of first appearance.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(String, String, String)> = Vec::new();
        for r in &self.rows {
            let k = (r.policy.clone(), r.belief.clone(), r.reality.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(policy, belief, reality)| {
                let group: Vec<&EvalRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.policy == policy && r.belief == belief && r.reality == reality)
                    .collect();
                let reward = summarize(&group.iter().map(|r| r.total_reward).collect::<Vec<_>>());
                let components =
                    std::array::from_fn(|j| summarize(&group.iter().map(|r| r.components()[j]).collect::<Vec<_>>()));
                SummaryRow {
                    policy,
                    belief,
                    reality,
                    reward,
                    components,
                }
            })
            .collect()
    }
}

/// A trained policy for one belief scenario, or `None` when its checkpoint
/// is missing.
#[derive(Debug, Clone)]
pub struct BeliefCheckpoint {
    pub belief: ScenarioId,
    pub params: Option<PolicyParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCell {
    pub belief: ScenarioId,
    pub reality: ScenarioId,
    /// `None` when the belief's checkpoint was absent.
    pub reward: Option<MeanStd>,
    pub episode_rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub cells: Vec<CrossCell>,
    pub episodes: Vec<EpisodeResult>,
}

/// Evaluates each belief's policy in every reality scenario.
pub fn cross_scenario_eval(
    world: &Arc<World>,
    checkpoints: &[BeliefCheckpoint],
    realities: &[ScenarioId],
    seeds: &[u64],
) -> Result<CrossMatrix> {
    let mut cells = Vec::new();
    let mut episodes = Vec::new();
    for ck in checkpoints {
        for &reality in realities {
            let Some(params) = &ck.params else {
                cells.push(CrossCell {
                    belief: ck.belief,
                    reality,
                    reward: None,
                    episode_rewards: Vec::new(),
                });
                continue;
            };
            let eps = evaluate(world, Controller::Policy(params), Some(ck.belief), reality, seeds)?;
            let rewards: Vec<f64> = eps.iter().map(|e| e.total_reward).collect();
            cells.push(CrossCell {
                belief: ck.belief,
                reality,
                reward: Some(summarize(&rewards)),
                episode_rewards: rewards,
            });
            episodes.extend(eps);
        }
    }
    Ok(CrossMatrix { cells, episodes })
}
