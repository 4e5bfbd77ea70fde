//! Best-response training against a response target.
//!
//! A DDQN learner occupies seat 0; the remaining seats replay pure
//! strategies sampled from the response target at each episode start. The
//! per-step reward is shaped by the objective: plain model reward, reward
//! minus the scaled disagreement penalty, or (in coverage episodes, entered
//! with probability alpha) the pure penalty term against a uniform-random
//! opponent.

use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::Array2;
use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CogsError, Result};
use crate::game::{legal_indices, ActionId, Game, MixedStrategy, PurePolicy, UniformRandomPolicy};
use crate::nn::{argmax_legal, Mlp};

/// DDQN hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdqnConfig {
    pub width: usize,
    pub depth: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub target_update_every: usize,
    pub learn_every: usize,
    pub discount: f64,
    pub min_buffer: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: usize,
    /// Total learner decisions of training. All step-based schedules
    /// (epsilon decay, learn cadence, target syncs) count the learner's own
    /// steps, not opponent moves.
    pub training_steps: usize,
}

impl Default for DdqnConfig {
    fn default() -> Self {
        Self {
            width: 200,
            depth: 2,
            replay_capacity: 50_000,
            batch_size: 64,
            learning_rate: 1e-4,
            target_update_every: 1000,
            learn_every: 2,
            discount: 0.99,
            min_buffer: 50_000,
            eps_start: 1.0,
            eps_end: 0.02,
            eps_decay_steps: 200_000,
            training_steps: 200_000,
        }
    }
}

impl DdqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0
            || self.depth == 0
            || self.replay_capacity == 0
            || self.batch_size == 0
            || self.target_update_every == 0
            || self.learn_every == 0
            || self.training_steps == 0
        {
            return Err(CogsError::InvalidConfig("ddqn counts must be positive".into()));
        }
        if self.learning_rate <= 0.0 || self.discount <= 0.0 || self.discount > 1.0 {
            return Err(CogsError::InvalidConfig("ddqn rates out of range".into()));
        }
        if self.eps_start < self.eps_end {
            return Err(CogsError::InvalidConfig("eps_start must be >= eps_end".into()));
        }
        Ok(())
    }

    fn epsilon(&self, step: usize) -> f64 {
        let frac = (step as f64 / self.eps_decay_steps.max(1) as f64).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    /// Raw model rewards.
    Plain,
    /// Reward minus the scaled disagreement penalty.
    Conservative,
    /// Conservative, plus coverage episodes entered with probability alpha.
    CoverageAugmented,
}

/// Response-objective settings for one best-response training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Penalty weight (lambda).
    pub penalty_weight: f64,
    /// Probability of a deviation-coverage episode (current annealed alpha).
    pub coverage_weight: f64,
    /// Iterations over which alpha anneals to zero.
    pub anneal_steps: usize,
    pub mode: ObjectiveMode,
}

impl ObjectiveConfig {
    pub fn plain() -> Self {
        Self { penalty_weight: 0.0, coverage_weight: 0.0, anneal_steps: 1, mode: ObjectiveMode::Plain }
    }

    pub fn validate(&self) -> Result<()> {
        if self.penalty_weight < 0.0 {
            return Err(CogsError::InvalidConfig("penalty_weight must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.coverage_weight) {
            return Err(CogsError::InvalidConfig("coverage_weight must lie in [0, 1]".into()));
        }
        if self.anneal_steps == 0 {
            return Err(CogsError::InvalidConfig("anneal_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Linear anneal: `max(0, alpha_init * (anneal_steps - iteration) / anneal_steps)`.
pub fn anneal_alpha(alpha_init: f64, anneal_steps: usize, iteration: usize) -> f64 {
    let s = anneal_steps as f64;
    (alpha_init * (s - iteration as f64) / s).max(0.0)
}

/// Per-step shaped reward. Coverage episodes drop the reward term and keep
/// only the penalty.
pub fn episode_reward(raw_reward: f64, rho_value: f64, lambda: f64, coverage_episode: bool) -> f64 {
    if coverage_episode {
        -lambda * rho_value
    } else {
        raw_reward - lambda * rho_value
    }
}

/// Greedy policy over a trained Q-network. Deterministic: ties break toward
/// the lowest action index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QPolicy {
    pub net: Mlp,
}

impl PurePolicy for QPolicy {
    fn act(&self, infostate: &[f64], legal_mask: &[bool], _rng: &mut StdRng) -> ActionId {
        argmax_legal(&self.net.forward_one(infostate), legal_mask)
    }

    fn action_distribution(&self, infostate: &[f64], legal_mask: &[bool]) -> Vec<f64> {
        let chosen = argmax_legal(&self.net.forward_one(infostate), legal_mask);
        let mut dist = vec![0.0; legal_mask.len()];
        dist[chosen] = 1.0;
        dist
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn checkpoint(&self) -> Option<crate::driver::PolicySpec> {
        Some(crate::driver::PolicySpec::QNet { net: self.net.clone() })
    }
}

/// One replay transition between consecutive learner decisions.
#[derive(Debug, Clone)]
pub struct ReplayTransition {
    pub state: Vec<f64>,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub next_mask: Vec<bool>,
    pub done: bool,
}

/// Double-Q targets: the online net picks the argmax legal next action, the
/// target net evaluates it. Terminal transitions bootstrap nothing.
pub fn ddqn_targets(
    batch: &[&ReplayTransition],
    online: &Mlp,
    target: &Mlp,
    discount: f64,
) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if t.done {
                t.reward
            } else {
                let pick = argmax_legal(&online.forward_one(&t.next_state), &t.next_mask);
                t.reward + discount * target.forward_one(&t.next_state)[pick]
            }
        })
        .collect()
}

/// One squared-TD-error SGD step on the online network; returns the loss.
pub fn ddqn_update(
    batch: &[&ReplayTransition],
    online: &mut Mlp,
    target: &Mlp,
    discount: f64,
    learning_rate: f64,
) -> f64 {
    let targets = ddqn_targets(batch, online, target, discount);
    let b = batch.len();
    let in_dim = online.input_dim();
    let mut x = Array2::zeros((b, in_dim));
    for (row, t) in batch.iter().enumerate() {
        for (c, v) in t.state.iter().enumerate() {
            x[[row, c]] = *v;
        }
    }
    let q = online.forward(&x);
    let mut grad = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for (row, (t, y)) in batch.iter().zip(&targets).enumerate() {
        let td = q[[row, t.action]] - y;
        loss += td * td;
        grad[[row, t.action]] = 2.0 * td / b as f64;
    }
    online.sgd_step(&x, &grad, learning_rate);
    loss / b as f64
}

/// What happened during training, for inspection and tests.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub coverage: bool,
    /// Per opponent seat: the sampled strategy index, or None if the seat
    /// played the uniform-random coverage policy.
    pub opponent_strategy: Vec<Option<usize>>,
    /// Per environment step: (learner's raw reward component, shaped reward).
    pub reward_pairs: Vec<(f64, f64)>,
}

const LEARNER_SEAT: usize = 0;

/// Train a best response to the opponent mixture inside `env`.
///
/// `rho_fn(state_vector, action)` supplies the disagreement penalty; it is
/// required whenever the objective actually uses it.
pub fn train_best_response<G: Game>(
    env: &G,
    opponent_strategies: &[Arc<dyn PurePolicy>],
    opponent_mix: &MixedStrategy,
    obj: &ObjectiveConfig,
    ddqn: &DdqnConfig,
    rho_fn: Option<&(dyn Fn(&[f64], ActionId) -> f64 + Sync)>,
    rng: &mut StdRng,
) -> Result<(QPolicy, TrainLog)> {
    obj.validate()?;
    ddqn.validate()?;
    let n = env.num_players();
    if n > 1 && opponent_strategies.is_empty() {
        return Err(CogsError::InvalidConfig("opponent strategy set is empty".into()));
    }
    if n > 1 && opponent_mix.len() != opponent_strategies.len() {
        return Err(CogsError::DimensionMismatch(format!(
            "mix over {} strategies, {} provided",
            opponent_mix.len(),
            opponent_strategies.len()
        )));
    }
    let needs_rho = match obj.mode {
        ObjectiveMode::Plain => false,
        ObjectiveMode::Conservative => obj.penalty_weight > 0.0,
        ObjectiveMode::CoverageAugmented => obj.penalty_weight > 0.0 || obj.coverage_weight > 0.0,
    };
    if needs_rho && rho_fn.is_none() {
        return Err(CogsError::InvalidConfig(
            "objective uses the disagreement penalty but no rho source was given".into(),
        ));
    }

    let dims = {
        let mut d = vec![env.infostate_dim()];
        d.extend(std::iter::repeat(ddqn.width).take(ddqn.depth));
        d.push(env.num_actions());
        d
    };
    let mut online = Mlp::new(&dims, rng);
    let mut target = online.clone();
    let mut buffer: VecDeque<ReplayTransition> = VecDeque::with_capacity(ddqn.replay_capacity);
    let uniform = UniformRandomPolicy;
    let mut log = TrainLog::default();

    let lambda = match obj.mode {
        ObjectiveMode::Plain => 0.0,
        _ => obj.penalty_weight,
    };
    let alpha = match obj.mode {
        ObjectiveMode::CoverageAugmented => obj.coverage_weight,
        _ => 0.0,
    };
    let rho_at = |state: &[f64], action: ActionId| -> f64 {
        if lambda == 0.0 {
            0.0
        } else {
            rho_fn.map_or(0.0, |f| f(state, action))
        }
    };

    let mut learner_steps = 0usize;
    // hard stop covering pathological games where the learner rarely acts
    let mut env_steps_left = ddqn
        .training_steps
        .saturating_mul(2 * env.max_episode_steps().max(2))
        .max(ddqn.training_steps);
    let episode_cap = env.max_episode_steps() + 1;

    while learner_steps < ddqn.training_steps && env_steps_left > 0 {
        let coverage = alpha > 0.0 && rng.random::<f64>() < alpha;
        // Opponent seats: in a coverage episode exactly one opponent plays
        // uniform-random; everyone else samples a pure strategy from the mix.
        let uniform_seat = if coverage {
            let opponents: Vec<usize> = (0..n).filter(|&s| s != LEARNER_SEAT).collect();
            Some(opponents[rng.random_range(0..opponents.len())])
        } else {
            None
        };
        let mut seat_policies: Vec<Option<usize>> = Vec::with_capacity(n);
        for seat in 0..n {
            if seat == LEARNER_SEAT || Some(seat) == uniform_seat {
                seat_policies.push(None);
            } else {
                seat_policies.push(Some(opponent_mix.sample(rng)));
            }
        }
        let mut record = EpisodeRecord {
            coverage,
            opponent_strategy: (0..n)
                .filter(|&s| s != LEARNER_SEAT)
                .map(|s| seat_policies[s])
                .collect(),
            reward_pairs: Vec::new(),
        };

        let mut state = env.initial_state(rng);
        let mut actions: Vec<ActionId> = Vec::new();
        let mut pending: Option<(Vec<f64>, ActionId)> = None;
        let mut accumulated = 0.0;

        for _ in 0..episode_cap {
            if env.is_terminal(&state)
                || learner_steps >= ddqn.training_steps
                || env_steps_left == 0
            {
                break;
            }
            let seat = env.acting_player(&state);
            let obs = env.observe(&state, seat);
            let mask = env.legal_actions(&state)?;
            let infostate = env.encode_infostate(seat, &obs, &actions);

            let mut learner_acted = false;
            let action = if seat == LEARNER_SEAT {
                // close out the previous learner transition
                if let Some((s, a)) = pending.take() {
                    push_transition(
                        &mut buffer,
                        ddqn,
                        ReplayTransition {
                            state: s,
                            action: a,
                            reward: accumulated,
                            next_state: infostate.clone(),
                            next_mask: mask.clone(),
                            done: false,
                        },
                    );
                    accumulated = 0.0;
                }
                let eps = ddqn.epsilon(learner_steps);
                let chosen = if rng.random::<f64>() < eps {
                    let legal = legal_indices(&mask);
                    legal[rng.random_range(0..legal.len())]
                } else {
                    argmax_legal(&online.forward_one(&infostate), &mask)
                };
                pending = Some((infostate, chosen));
                learner_acted = true;
                chosen
            } else if Some(seat) == uniform_seat {
                uniform.act(&infostate, &mask, rng)
            } else {
                let idx = seat_policies[seat].expect("opponent seat has a sampled strategy");
                opponent_strategies[idx].act(&infostate, &mask, rng)
            };

            let state_vec = env.state_vector(&state);
            let outcome = env.step(&state, action)?;
            let raw = outcome.rewards[LEARNER_SEAT];
            let shaped = episode_reward(raw, rho_at(&state_vec, action), lambda, coverage);
            accumulated += shaped;
            record.reward_pairs.push((raw, shaped));

            actions.push(action);
            env_steps_left -= 1;
            state = outcome.next;

            if outcome.done {
                if let Some((s, a)) = pending.take() {
                    push_transition(
                        &mut buffer,
                        ddqn,
                        ReplayTransition {
                            state: s,
                            action: a,
                            reward: accumulated,
                            next_state: vec![0.0; env.infostate_dim()],
                            next_mask: vec![true; env.num_actions()],
                            done: true,
                        },
                    );
                    accumulated = 0.0;
                }
            }

            if learner_acted {
                learner_steps += 1;
                if buffer.len() >= ddqn.min_buffer.min(ddqn.replay_capacity)
                    && learner_steps % ddqn.learn_every == 0
                {
                    let batch: Vec<&ReplayTransition> = (0..ddqn.batch_size.min(buffer.len()))
                        .map(|_| &buffer[rng.random_range(0..buffer.len())])
                        .collect();
                    ddqn_update(&batch, &mut online, &target, ddqn.discount, ddqn.learning_rate);
                }
                if learner_steps % ddqn.target_update_every == 0 {
                    target = online.clone();
                }
            }

            if outcome.done {
                break;
            }
        }
        // an episode cut off mid-flight (step budget or cap) drops its
        // pending transition: there is no bootstrap state for it
        pending = None;
        let _ = pending;
        log.episodes.push(record);
    }

    Ok((QPolicy { net: online }, log))
}

fn push_transition(buffer: &mut VecDeque<ReplayTransition>, cfg: &DdqnConfig, t: ReplayTransition) {
    if buffer.len() == cfg.replay_capacity {
        buffer.pop_front();
    }
    buffer.push_back(t);
}
