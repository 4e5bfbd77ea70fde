//! Ensemble world model: per-member transition and reward networks, a
//! shared observation/legality network, and the reward-disagreement
//! penalty `rho` used as the uncertainty signal.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{CogsError, Result};
use crate::game::{ActionId, Game, StepOutcome, Trajectory, TrajectoryStep};
use crate::nn::{argmax_legal, Mlp};
use crate::rng::derive_seed_tagged;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Number of member models; disagreement needs at least 2.
    pub ensemble_size: usize,
    pub hidden_width: usize,
    pub depth: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub training_steps: usize,
    /// Mean-absolute-difference threshold for terminal detection in model
    /// rollouts.
    pub terminal_match_tol: f64,
    /// Model-rollout length cap; 0 means the base game's episode cap.
    pub max_rollout_len: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 4,
            hidden_width: 250,
            depth: 2,
            batch_size: 64,
            learning_rate: 3e-4,
            training_steps: 10_000,
            terminal_match_tol: 0.5,
            max_rollout_len: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(CogsError::InvalidConfig(
                "ensemble_size must be >= 2 for a meaningful disagreement signal".into(),
            ));
        }
        if self.hidden_width == 0 || self.depth == 0 || self.batch_size == 0 || self.training_steps == 0
        {
            return Err(CogsError::InvalidConfig("ensemble counts must be positive".into()));
        }
        if self.learning_rate <= 0.0 || self.terminal_match_tol < 0.0 {
            return Err(CogsError::InvalidConfig("ensemble rates must be positive".into()));
        }
        Ok(())
    }

    fn dims(&self, in_dim: usize, out_dim: usize) -> Vec<usize> {
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat(self.hidden_width).take(self.depth));
        dims.push(out_dim);
        dims
    }
}

/// Per-dimension normalization statistics fitted on the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormStats {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: f64,
    pub action_std: f64,
    pub delta_mean: Vec<f64>,
    pub delta_std: Vec<f64>,
    pub reward_mean: Vec<f64>,
    pub reward_std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-6;

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for row in rows {
        for (s, (v, m)) in var.iter_mut().zip(row.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    (mean, std)
}

impl NormStats {
    fn fit(states: &[Vec<f64>], actions: &[f64], deltas: &[Vec<f64>], rewards: &[Vec<f64>]) -> Self {
        let (state_mean, state_std) = column_stats(states);
        let (delta_mean, delta_std) = column_stats(deltas);
        let (reward_mean, reward_std) = column_stats(rewards);
        let a_rows: Vec<Vec<f64>> = actions.iter().map(|&a| vec![a]).collect();
        let (a_mean, a_std) = column_stats(&a_rows);
        Self {
            state_mean,
            state_std,
            action_mean: a_mean[0],
            action_std: a_std[0],
            delta_mean,
            delta_std,
            reward_mean,
            reward_std,
        }
    }

    /// Unit stats (mean 0, std 1); predictions pass through unchanged.
    pub fn identity(state_dim: usize, num_players: usize) -> Self {
        Self {
            state_mean: vec![0.0; state_dim],
            state_std: vec![1.0; state_dim],
            action_mean: 0.0,
            action_std: 1.0,
            delta_mean: vec![0.0; state_dim],
            delta_std: vec![1.0; state_dim],
            reward_mean: vec![0.0; num_players],
            reward_std: vec![1.0; num_players],
        }
    }

    pub fn normalize_state(&self, s: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(self.state_mean.iter().zip(&self.state_std))
            .map(|(v, (m, sd))| (v - m) / sd)
            .collect()
    }

    pub fn normalize_action(&self, a: ActionId) -> f64 {
        (a as f64 - self.action_mean) / self.action_std
    }

    pub fn denormalize_delta(&self, d: &[f64]) -> Vec<f64> {
        d.iter()
            .zip(self.delta_mean.iter().zip(&self.delta_std))
            .map(|(v, (m, sd))| v * sd + m)
            .collect()
    }

    pub fn normalize_delta(&self, d: &[f64]) -> Vec<f64> {
        d.iter()
            .zip(self.delta_mean.iter().zip(&self.delta_std))
            .map(|(v, (m, sd))| (v - m) / sd)
            .collect()
    }

    pub fn denormalize_reward(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(self.reward_mean.iter().zip(&self.reward_std))
            .map(|(v, (m, sd))| v * sd + m)
            .collect()
    }

    pub fn normalize_reward(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(self.reward_mean.iter().zip(&self.reward_std))
            .map(|(v, (m, sd))| (v - m) / sd)
            .collect()
    }
}

/// One ensemble member: a state-delta network and a reward network, both
/// consuming normalized (state, action) inputs and producing denormalized
/// outputs through the shared [`NormStats`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub transition_net: Mlp,
    pub reward_net: Mlp,
}

impl EnsembleMember {
    fn input(&self, norm: &NormStats, state: &[f64], action: ActionId) -> Vec<f64> {
        let mut x = norm.normalize_state(state);
        x.push(norm.normalize_action(action));
        x
    }

    pub fn predict_delta(&self, norm: &NormStats, state: &[f64], action: ActionId) -> Vec<f64> {
        let y = self.transition_net.forward_one(&self.input(norm, state, action));
        norm.denormalize_delta(&y)
    }

    pub fn predict_rewards(&self, norm: &NormStats, state: &[f64], action: ActionId) -> Vec<f64> {
        let y = self.reward_net.forward_one(&self.input(norm, state, action));
        norm.denormalize_reward(&y)
    }
}

/// Observation and legal-action predictor, shared across the ensemble.
/// Mask targets are trained to +-1 so a positive logit marks a legal action.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharedObsNet {
    net: Mlp,
    num_players: usize,
    obs_dim: usize,
    num_actions: usize,
    obs_mean: Vec<f64>,
    obs_std: Vec<f64>,
}

impl SharedObsNet {
    fn input(&self, norm: &NormStats, state: &[f64], player: usize) -> Vec<f64> {
        let mut x = norm.normalize_state(state);
        for p in 0..self.num_players {
            x.push(if p == player { 1.0 } else { 0.0 });
        }
        x
    }

    pub fn predict_observation(&self, norm: &NormStats, state: &[f64], player: usize) -> Vec<f64> {
        let y = self.net.forward_one(&self.input(norm, state, player));
        y[..self.obs_dim]
            .iter()
            .zip(self.obs_mean.iter().zip(&self.obs_std))
            .map(|(v, (m, sd))| v * sd + m)
            .collect()
    }

    /// Thresholded legality mask; guaranteed nonempty by falling back to the
    /// argmax logit.
    pub fn predict_legal_mask(&self, norm: &NormStats, state: &[f64], player: usize) -> Vec<bool> {
        let y = self.net.forward_one(&self.input(norm, state, player));
        let logits = &y[self.obs_dim..];
        let mut mask: Vec<bool> = logits.iter().map(|&l| l > 0.0).collect();
        if !mask.iter().any(|&m| m) {
            let all = vec![true; self.num_actions];
            mask[argmax_legal(logits, &all)] = true;
        }
        mask
    }
}

/// The trained ensemble. Immutable after training; safe to query from
/// many threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    pub cfg: EnsembleConfig,
    pub norm: NormStats,
    pub members: Vec<EnsembleMember>,
    pub obs_net: SharedObsNet,
    pub state_dim: usize,
    pub num_players: usize,
    pub num_actions: usize,
    /// Hash of the game configuration the training data came from.
    pub game_config_hash: String,
}

impl Ensemble {
    pub fn ensemble_size(&self) -> usize {
        self.members.len()
    }

    /// Each member's reward prediction at (state, action): `[K][n]`.
    pub fn member_rewards(&self, state: &[f64], action: ActionId) -> Vec<Vec<f64>> {
        self.members
            .iter()
            .map(|m| m.predict_rewards(&self.norm, state, action))
            .collect()
    }

    /// Arithmetic mean of member reward predictions.
    pub fn mean_reward(&self, state: &[f64], action: ActionId) -> Vec<f64> {
        average_rows(&self.member_rewards(state, action))
    }

    /// Mean predicted state change.
    pub fn mean_delta(&self, state: &[f64], action: ActionId) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|m| m.predict_delta(&self.norm, state, action))
            .collect();
        average_rows(&rows)
    }

    /// Reward-disagreement penalty: the widest pairwise gap in summed
    /// per-player reward predictions.
    pub fn rho(&self, state: &[f64], action: ActionId) -> f64 {
        rho_from_predictions(&self.member_rewards(state, action))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

fn average_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.len() as f64;
    let mut out = vec![0.0; rows[0].len()];
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v / k;
        }
    }
    out
}

/// `max_{j,k} sum_i |r_i^j - r_i^k|` over member reward predictions.
pub fn rho_from_predictions(member_rewards: &[Vec<f64>]) -> f64 {
    let k = member_rewards.len();
    let mut worst: f64 = 0.0;
    for j in 0..k {
        for l in (j + 1)..k {
            let gap: f64 = member_rewards[j]
                .iter()
                .zip(&member_rewards[l])
                .map(|(a, b)| (a - b).abs())
                .sum();
            worst = worst.max(gap);
        }
    }
    worst
}

struct TrainingArrays {
    inputs: Vec<Vec<f64>>,         // normalized [state, action]
    delta_targets: Vec<Vec<f64>>,  // normalized
    reward_targets: Vec<Vec<f64>>, // normalized
    obs_inputs: Vec<Vec<f64>>,     // normalized state + player one-hot
    obs_targets: Vec<Vec<f64>>,    // normalized obs + mask logits (+-1)
    obs_dim: usize,
    obs_mean: Vec<f64>,
    obs_std: Vec<f64>,
    num_actions: usize,
    num_players: usize,
    state_dim: usize,
    norm: NormStats,
}

fn prepare_training_data(dataset: &Dataset) -> Result<TrainingArrays> {
    let transitions = dataset.transitions();
    if transitions.is_empty() {
        return Err(CogsError::EmptyDataset("no transitions to train on".into()));
    }
    let state_dim = transitions[0].state.len();
    let num_players = transitions[0].rewards.len();
    let num_actions = transitions[0].legal_mask.len();
    let obs_dim = transitions[0].observation.len();

    let states: Vec<Vec<f64>> = transitions.iter().map(|t| t.state.to_vec()).collect();
    let actions: Vec<f64> = transitions.iter().map(|t| t.action as f64).collect();
    let deltas: Vec<Vec<f64>> = transitions
        .iter()
        .map(|t| t.next_state.iter().zip(t.state).map(|(n, s)| n - s).collect())
        .collect();
    let rewards: Vec<Vec<f64>> = transitions.iter().map(|t| t.rewards.to_vec()).collect();
    let norm = NormStats::fit(&states, &actions, &deltas, &rewards);

    let inputs: Vec<Vec<f64>> = transitions
        .iter()
        .map(|t| {
            let mut x = norm.normalize_state(t.state);
            x.push(norm.normalize_action(t.action));
            x
        })
        .collect();
    let delta_targets: Vec<Vec<f64>> = deltas.iter().map(|d| norm.normalize_delta(d)).collect();
    let reward_targets: Vec<Vec<f64>> = rewards.iter().map(|r| norm.normalize_reward(r)).collect();

    let obs_rows: Vec<Vec<f64>> = transitions.iter().map(|t| t.observation.to_vec()).collect();
    let (obs_mean, obs_std) = column_stats(&obs_rows);
    let obs_inputs: Vec<Vec<f64>> = transitions
        .iter()
        .map(|t| {
            let mut x = norm.normalize_state(t.state);
            for p in 0..num_players {
                x.push(if p == t.acting_player { 1.0 } else { 0.0 });
            }
            x
        })
        .collect();
    let obs_targets: Vec<Vec<f64>> = transitions
        .iter()
        .map(|t| {
            let mut y: Vec<f64> = t
                .observation
                .iter()
                .zip(obs_mean.iter().zip(&obs_std))
                .map(|(v, (m, sd))| (v - m) / sd)
                .collect();
            y.extend(t.legal_mask.iter().map(|&m| if m { 1.0 } else { -1.0 }));
            y
        })
        .collect();

    Ok(TrainingArrays {
        inputs,
        delta_targets,
        reward_targets,
        obs_inputs,
        obs_targets,
        obs_dim,
        obs_mean,
        obs_std,
        num_actions,
        num_players,
        state_dim,
        norm,
    })
}

fn sgd_regression(
    dims: &[usize],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    cfg: &EnsembleConfig,
    seed: u64,
) -> Mlp {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut net = Mlp::new(dims, &mut rng);
    let n = xs.len();
    let batch = cfg.batch_size.min(n);
    let in_dim = dims[0];
    let out_dim = *dims.last().unwrap();
    for _ in 0..cfg.training_steps {
        let mut x = Array2::zeros((batch, in_dim));
        let mut y = Array2::zeros((batch, out_dim));
        for row in 0..batch {
            let pick = if n > cfg.batch_size { rng.random_range(0..n) } else { row };
            for (c, v) in xs[pick].iter().enumerate() {
                x[[row, c]] = *v;
            }
            for (c, v) in ys[pick].iter().enumerate() {
                y[[row, c]] = *v;
            }
        }
        net.train_mse(&x, &y, cfg.learning_rate);
    }
    net
}

/// Train an ensemble with explicit per-member seeds. Members with the same
/// seed see the same initialization and batch schedule and therefore end up
/// identical.
pub fn train_ensemble_with_seeds(
    dataset: &Dataset,
    cfg: &EnsembleConfig,
    member_seeds: &[u64],
    obs_seed: u64,
) -> Result<Ensemble> {
    cfg.validate()?;
    if member_seeds.len() != cfg.ensemble_size {
        return Err(CogsError::InvalidConfig(format!(
            "{} member seeds for ensemble size {}",
            member_seeds.len(),
            cfg.ensemble_size
        )));
    }
    let data = prepare_training_data(dataset)?;
    if data.inputs.len() < cfg.batch_size {
        log::warn!(
            "dataset has {} transitions, fewer than batch size {}; training full-batch",
            data.inputs.len(),
            cfg.batch_size
        );
    }

    let in_dim = data.state_dim + 1;
    let members: Vec<EnsembleMember> = member_seeds
        .par_iter()
        .map(|&seed| {
            let t_dims = cfg.dims(in_dim, data.state_dim);
            let r_dims = cfg.dims(in_dim, data.num_players);
            EnsembleMember {
                transition_net: sgd_regression(
                    &t_dims,
                    &data.inputs,
                    &data.delta_targets,
                    cfg,
                    derive_seed_tagged(seed, "transition", 0),
                ),
                reward_net: sgd_regression(
                    &r_dims,
                    &data.inputs,
                    &data.reward_targets,
                    cfg,
                    derive_seed_tagged(seed, "reward", 0),
                ),
            }
        })
        .collect();

    let obs_dims = cfg.dims(data.state_dim + data.num_players, data.obs_dim + data.num_actions);
    let obs_net = SharedObsNet {
        net: sgd_regression(&obs_dims, &data.obs_inputs, &data.obs_targets, cfg, obs_seed),
        num_players: data.num_players,
        obs_dim: data.obs_dim,
        num_actions: data.num_actions,
        obs_mean: data.obs_mean,
        obs_std: data.obs_std,
    };

    Ok(Ensemble {
        cfg: cfg.clone(),
        norm: data.norm,
        members,
        obs_net,
        state_dim: data.state_dim,
        num_players: data.num_players,
        num_actions: data.num_actions,
        game_config_hash: dataset.metadata.game_config_hash.clone(),
    })
}

/// Train K members with distinct initializations and independent minibatch
/// draws, plus the shared observation network.
pub fn train_ensemble(dataset: &Dataset, cfg: &EnsembleConfig, rng: &mut StdRng) -> Result<Ensemble> {
    cfg.validate()?;
    let member_seeds: Vec<u64> = (0..cfg.ensemble_size).map(|_| rng.random()).collect();
    let obs_seed: u64 = rng.random();
    train_ensemble_with_seeds(dataset, cfg, &member_seeds, obs_seed)
}

/// The ensemble exposed as a game: mean predictions drive transitions and
/// rewards, the shared network answers observation and legality queries,
/// and episodes end on a terminal-vector match or the rollout cap.
pub struct ModelMdp<G: Game> {
    base: Arc<G>,
    ensemble: Arc<Ensemble>,
    initial_states: Vec<Vec<f64>>,
    max_rollout_len: usize,
}

#[derive(Debug, Clone)]
pub struct ModelState {
    pub vec: Vec<f64>,
    pub steps: usize,
    pub done: bool,
}

impl<G: Game> ModelMdp<G> {
    /// `initial_states` are real state vectors (typically the dataset's
    /// episode starts) that seed model rollouts.
    pub fn new(base: Arc<G>, ensemble: Arc<Ensemble>, initial_states: Vec<Vec<f64>>) -> Result<Self> {
        if initial_states.is_empty() {
            return Err(CogsError::EmptyDataset("model MDP needs initial states".into()));
        }
        let max_rollout_len = if ensemble.cfg.max_rollout_len > 0 {
            ensemble.cfg.max_rollout_len
        } else {
            base.max_episode_steps()
        };
        Ok(Self { base, ensemble, initial_states, max_rollout_len })
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn base(&self) -> &G {
        &self.base
    }

    fn terminal_match(&self, vec: &[f64]) -> bool {
        let terminal = self.base.terminal_state_vector();
        let mad: f64 = vec
            .iter()
            .zip(&terminal)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / vec.len() as f64;
        mad < self.ensemble.cfg.terminal_match_tol
    }
}

impl<G: Game> Game for ModelMdp<G> {
    type State = ModelState;

    fn num_players(&self) -> usize {
        self.base.num_players()
    }
    fn discount(&self) -> f64 {
        self.base.discount()
    }
    fn num_actions(&self) -> usize {
        self.base.num_actions()
    }
    fn max_episode_steps(&self) -> usize {
        self.max_rollout_len
    }
    fn initial_state(&self, rng: &mut StdRng) -> ModelState {
        let pick = rng.random_range(0..self.initial_states.len());
        ModelState { vec: self.initial_states[pick].clone(), steps: 0, done: false }
    }
    fn is_terminal(&self, state: &ModelState) -> bool {
        state.done
    }
    fn step(&self, state: &ModelState, action: ActionId) -> Result<StepOutcome<ModelState>> {
        if state.done {
            return Err(CogsError::TerminalStep);
        }
        let delta = self.ensemble.mean_delta(&state.vec, action);
        let next_vec: Vec<f64> = state.vec.iter().zip(&delta).map(|(s, d)| s + d).collect();
        let rewards = self.ensemble.mean_reward(&state.vec, action);
        let steps = state.steps + 1;
        let done = self.terminal_match(&next_vec) || steps >= self.max_rollout_len;
        Ok(StepOutcome { next: ModelState { vec: next_vec, steps, done }, rewards, done })
    }
    fn legal_actions(&self, state: &ModelState) -> Result<Vec<bool>> {
        if state.done {
            return Err(CogsError::TerminalStep);
        }
        let player = self.acting_player(state);
        Ok(self.ensemble.obs_net.predict_legal_mask(&self.ensemble.norm, &state.vec, player))
    }
    fn observe(&self, state: &ModelState, player: usize) -> Vec<f64> {
        self.ensemble.obs_net.predict_observation(&self.ensemble.norm, &state.vec, player)
    }
    fn acting_player(&self, state: &ModelState) -> usize {
        self.base.acting_player_of_vector(&state.vec)
    }
    fn state_vector(&self, state: &ModelState) -> Vec<f64> {
        state.vec.clone()
    }
    fn terminal_state_vector(&self) -> Vec<f64> {
        self.base.terminal_state_vector()
    }
    fn acting_player_of_vector(&self, v: &[f64]) -> usize {
        self.base.acting_player_of_vector(v)
    }
    fn infostate_dim(&self) -> usize {
        self.base.infostate_dim()
    }
    fn encode_infostate(&self, player: usize, current_obs: &[f64], actions: &[ActionId]) -> Vec<f64> {
        self.base.encode_infostate(player, current_obs, actions)
    }
}

/// A model rollout plus the per-member bookkeeping the empirical game needs.
pub struct ModelRolloutRecord {
    pub trajectory: Trajectory,
    /// `[K][n]`: member j's summed reward prediction for player i along the
    /// mean-dynamics trajectory.
    pub per_member_returns: Vec<Vec<f64>>,
    /// rho at every visited (state, action).
    pub rho_values: Vec<f64>,
}

/// Roll out a joint policy under ensemble-mean dynamics, recording each
/// member's reward predictions along the shared trajectory.
pub fn model_rollout<G: Game>(
    mdp: &ModelMdp<G>,
    joint: &[&dyn crate::game::PurePolicy],
    rng: &mut StdRng,
) -> Result<ModelRolloutRecord> {
    if joint.len() != Game::num_players(mdp) {
        return Err(CogsError::DimensionMismatch(format!(
            "joint policy has {} entries for {} players",
            joint.len(),
            Game::num_players(mdp)
        )));
    }
    let k = mdp.ensemble.ensemble_size();
    let n = Game::num_players(mdp);
    let mut per_member_returns = vec![vec![0.0; n]; k];
    let mut rho_values = Vec::new();

    let mut state = mdp.initial_state(rng);
    let mut steps = Vec::new();
    let mut actions: Vec<ActionId> = Vec::new();
    let mut returns = vec![0.0; n];

    while !mdp.is_terminal(&state) {
        let player = mdp.acting_player(&state);
        let obs = mdp.observe(&state, player);
        let mask = mdp.legal_actions(&state)?;
        let infostate = mdp.encode_infostate(player, &obs, &actions);
        let action = joint[player].act(&infostate, &mask, rng);

        let member_rewards = mdp.ensemble.member_rewards(&state.vec, action);
        for (acc, row) in per_member_returns.iter_mut().zip(&member_rewards) {
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r;
            }
        }
        rho_values.push(rho_from_predictions(&member_rewards));

        let outcome = mdp.step(&state, action)?;
        for (acc, r) in returns.iter_mut().zip(&outcome.rewards) {
            *acc += r;
        }
        steps.push(TrajectoryStep {
            state: state.vec.clone(),
            observation: obs,
            action,
            rewards: outcome.rewards.clone(),
            acting_player: player,
            legal_mask: mask,
        });
        actions.push(action);
        state = outcome.next;
    }

    Ok(ModelRolloutRecord {
        trajectory: Trajectory {
            steps,
            episode_return: returns,
            final_state: state.vec.clone(),
            terminated: true,
        },
        per_member_returns,
        rho_values,
    })
}

/// Build an ensemble with fixed constant predictions per member; rollout
/// and solver tests use this to pin expected values exactly.
pub fn constant_ensemble(
    state_dim: usize,
    num_players: usize,
    num_actions: usize,
    member_deltas: &[Vec<f64>],
    member_rewards: &[Vec<f64>],
    obs: &[f64],
    cfg: EnsembleConfig,
) -> Ensemble {
    assert_eq!(member_deltas.len(), member_rewards.len());
    let members = member_deltas
        .iter()
        .zip(member_rewards)
        .map(|(d, r)| EnsembleMember {
            transition_net: Mlp::constant(state_dim + 1, d),
            reward_net: Mlp::constant(state_dim + 1, r),
        })
        .collect();
    let mut obs_target: Vec<f64> = obs.to_vec();
    obs_target.extend(std::iter::repeat(1.0).take(num_actions)); // everything legal
    let obs_net = SharedObsNet {
        net: Mlp::constant(state_dim + num_players, &obs_target),
        num_players,
        obs_dim: obs.len(),
        num_actions,
        obs_mean: vec![0.0; obs.len()],
        obs_std: vec![1.0; obs.len()],
    };
    Ensemble {
        cfg,
        norm: NormStats::identity(state_dim, num_players),
        members,
        obs_net,
        state_dim,
        num_players,
        num_actions,
        game_config_hash: "constant".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetMetadata;
    use crate::game::{rollout, FixedActionPolicy, UniformRandomPolicy};
    use crate::toy::ChainMdp;

    fn chain_dataset(episodes: usize, seed: u64, advance_only: bool) -> Dataset {
        let chain = ChainMdp::five_state();
        let mut rng = StdRng::seed_from_u64(seed);
        let uniform = UniformRandomPolicy;
        let advance = FixedActionPolicy { action: 0 };
        let trajectories = (0..episodes)
            .map(|_| {
                if advance_only {
                    rollout(&chain, &[&advance], &mut rng, 10).unwrap()
                } else {
                    rollout(&chain, &[&uniform], &mut rng, 10).unwrap()
                }
            })
            .collect();
        Dataset::new(
            DatasetMetadata {
                behavior_policy_tag: "test".into(),
                seed,
                game_config_hash: "chain".into(),
            },
            trajectories,
        )
    }

    fn fast_cfg() -> EnsembleConfig {
        EnsembleConfig {
            ensemble_size: 2,
            hidden_width: 32,
            depth: 2,
            batch_size: 32,
            learning_rate: 1e-2,
            training_steps: 3000,
            terminal_match_tol: 0.5,
            max_rollout_len: 0,
        }
    }

    #[test]
    fn rho_matches_hand_computed_pairs() {
        // K=2: |1-1.5| + |2-1.5| = 1.0
        assert_eq!(rho_from_predictions(&[vec![1.0, 2.0], vec![1.5, 1.5]]), 1.0);
        // identical members: zero range
        assert_eq!(rho_from_predictions(&[vec![0.7, 0.1], vec![0.7, 0.1]]), 0.0);
        // K=3 with pairwise summed distances 0.4, 0.5, 0.9: max is 0.9
        let preds = vec![vec![0.0, 0.0], vec![0.4, 0.0], vec![-0.2, -0.3]];
        assert!((rho_from_predictions(&preds) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn rho_brute_force_oracle_on_random_ensembles() {
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..1000 {
            let k = rng.random_range(2..6);
            let n = rng.random_range(1..4);
            let preds: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            // oracle: enumerate ordered pairs independently
            let mut expect: f64 = 0.0;
            for j in 0..k {
                for l in 0..k {
                    let gap: f64 = preds[j]
                        .iter()
                        .zip(&preds[l])
                        .map(|(a, b): (&f64, &f64)| (a - b).abs())
                        .sum();
                    expect = expect.max(gap);
                }
            }
            assert!((rho_from_predictions(&preds) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_invariant_under_reorder_and_duplication() {
        let preds = vec![vec![1.0, -1.0], vec![0.5, 0.0], vec![2.0, 1.0]];
        let base = rho_from_predictions(&preds);
        let reordered = vec![preds[2].clone(), preds[0].clone(), preds[1].clone()];
        assert_eq!(base, rho_from_predictions(&reordered));
        let mut duplicated = preds.clone();
        duplicated.push(preds[1].clone());
        assert_eq!(base, rho_from_predictions(&duplicated));
    }

    #[test]
    fn mean_reward_matches_resummation() {
        let ens = constant_ensemble(
            3,
            2,
            2,
            &[vec![0.0; 3], vec![0.0; 3]],
            &[vec![1.0, 2.0], vec![1.5, 1.5]],
            &[0.0; 3],
            fast_cfg(),
        );
        let mean = ens.mean_reward(&[0.0; 3], 0);
        assert_eq!(mean, vec![1.25, 1.75]);
        // independent re-summation
        let rows = ens.member_rewards(&[0.0; 3], 0);
        for (i, m) in mean.iter().enumerate() {
            let s: f64 = rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64;
            assert!((m - s).abs() < 1e-15);
        }
        assert!((ens.rho(&[0.0; 3], 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_round_trips() {
        let states: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.01, -3.0])
            .collect();
        let actions: Vec<f64> = (0..50).map(|i| (i % 5) as f64).collect();
        let rewards: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1]).collect();
        let norm = NormStats::fit(&states, &actions, &states, &rewards);
        for s in states.iter().take(5) {
            let round = norm.denormalize_delta(&norm.normalize_delta(s));
            for (a, b) in round.iter().zip(s) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn trained_ensemble_tracks_a_deterministic_chain() {
        let ds = chain_dataset(120, 5, false);
        let mut rng = StdRng::seed_from_u64(0);
        let ens = train_ensemble(&ds, &fast_cfg(), &mut rng).unwrap();

        // transition MAE over all covered (s, a) pairs
        let mut err = 0.0;
        let mut count = 0;
        for t in ds.transitions() {
            let pred = ens.mean_delta(t.state, t.action);
            let truth: Vec<f64> = t.next_state.iter().zip(t.state).map(|(n, s)| n - s).collect();
            err += pred
                .iter()
                .zip(&truth)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / truth.len() as f64;
            count += 1;
        }
        let mae = err / count as f64;
        assert!(mae < 0.05, "transition MAE {mae}");

        // reward MAE against the recorded rewards
        let mut rerr = 0.0;
        for t in ds.transitions() {
            let pred = ens.mean_reward(t.state, t.action)[0];
            rerr += (pred - t.rewards[0]).abs();
        }
        let rmae = rerr / count as f64;
        assert!(rmae < 0.05, "reward MAE {rmae}");
    }

    #[test]
    fn constant_reward_dataset_regresses_to_constant() {
        let mut ds = chain_dataset(60, 6, false);
        for traj in &mut ds.trajectories {
            for step in &mut traj.steps {
                step.rewards = vec![1.0];
            }
            traj.episode_return = vec![traj.steps.len() as f64];
        }
        let mut rng = StdRng::seed_from_u64(1);
        let ens = train_ensemble(&ds, &fast_cfg(), &mut rng).unwrap();
        for t in ds.transitions().iter().take(40) {
            for member in &ens.members {
                let r = member.predict_rewards(&ens.norm, t.state, t.action)[0];
                assert!((0.95..=1.05).contains(&r), "member predicted {r}");
            }
        }
    }

    #[test]
    fn identical_member_seeds_collapse_rho_to_zero() {
        let ds = chain_dataset(40, 7, false);
        let cfg = EnsembleConfig { training_steps: 200, ..fast_cfg() };
        let ens = train_ensemble_with_seeds(&ds, &cfg, &[42, 42], 7).unwrap();
        for t in ds.transitions().iter().take(20) {
            assert_eq!(ens.rho(t.state, t.action), 0.0);
        }
    }

    #[test]
    fn disagreement_is_higher_off_the_dataset() {
        // dataset only covers action 0; action 1 is information-deprived
        let ds = chain_dataset(60, 8, true);
        let mut wins = 0;
        for seed in 0..3u64 {
            let mut rng = StdRng::seed_from_u64(seed);
            let cfg = EnsembleConfig { ensemble_size: 4, ..fast_cfg() };
            let ens = train_ensemble(&ds, &cfg, &mut rng).unwrap();
            let mut covered = 0.0;
            let mut held_out = 0.0;
            let mut count = 0.0;
            for t in ds.transitions() {
                covered += ens.rho(t.state, 0);
                held_out += ens.rho(t.state, 1);
                count += 1.0;
            }
            if held_out / count > covered / count {
                wins += 1;
            }
        }
        assert!(wins >= 2, "held-out rho larger in only {wins}/3 seeds");
    }

    #[test]
    fn model_step_terminal_threshold_is_strict() {
        let chain = ChainMdp::five_state();
        // terminal vector is [-1; 5]; a constant delta lands the next state
        // at an exact mean-abs distance from it
        let start = vec![0.0; 5];
        for (dist, expect_done) in [(0.49, true), (0.51, false)] {
            let delta = vec![-1.0 + dist; 5];
            let ens = constant_ensemble(
                5,
                1,
                2,
                &[delta.clone(), delta.clone()],
                &[vec![0.0], vec![0.0]],
                &[0.0; 5],
                EnsembleConfig { max_rollout_len: 10, ..fast_cfg() },
            );
            let mdp = ModelMdp::new(
                Arc::new(chain.clone_game()),
                Arc::new(ens),
                vec![start.clone()],
            )
            .unwrap();
            let s0 = ModelState { vec: start.clone(), steps: 0, done: false };
            let out = mdp.step(&s0, 0).unwrap();
            assert_eq!(out.done, expect_done, "distance {dist}");
        }
    }

    #[test]
    fn model_rollout_tracks_members_along_mean_dynamics() {
        let chain = ChainMdp::five_state();
        // one-step episodes: predicted delta jumps straight onto the terminal vector
        let start = vec![0.0; 5];
        let to_terminal = vec![-1.0; 5];
        let ens = constant_ensemble(
            5,
            1,
            2,
            &[to_terminal.clone(), to_terminal.clone()],
            &[vec![1.0], vec![3.0]],
            &[0.0; 5],
            EnsembleConfig { max_rollout_len: 10, ..fast_cfg() },
        );
        let mdp =
            ModelMdp::new(Arc::new(chain.clone_game()), Arc::new(ens), vec![start]).unwrap();
        let policy = FixedActionPolicy { action: 0 };
        let mut rng = StdRng::seed_from_u64(0);
        let rec = model_rollout(&mdp, &[&policy], &mut rng).unwrap();
        assert_eq!(rec.trajectory.len(), 1);
        assert_eq!(rec.per_member_returns, vec![vec![1.0], vec![3.0]]);
        assert_eq!(rec.trajectory.episode_return, vec![2.0]);
        assert_eq!(rec.rho_values, vec![2.0]);
    }

    #[test]
    fn model_rollout_respects_length_cap() {
        let chain = ChainMdp::five_state();
        let start = vec![0.0; 5];
        let ens = constant_ensemble(
            5,
            1,
            2,
            &[vec![0.01; 5], vec![0.01; 5]], // never reaches terminal
            &[vec![0.5], vec![0.5]],
            &[0.0; 5],
            EnsembleConfig { max_rollout_len: 1, ..fast_cfg() },
        );
        let mdp =
            ModelMdp::new(Arc::new(chain.clone_game()), Arc::new(ens), vec![start]).unwrap();
        let policy = FixedActionPolicy { action: 0 };
        let mut rng = StdRng::seed_from_u64(0);
        let rec = model_rollout(&mdp, &[&policy], &mut rng).unwrap();
        assert_eq!(rec.trajectory.len(), 1);
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let ds = chain_dataset(30, 9, false);
        let cfg = EnsembleConfig { training_steps: 100, ..fast_cfg() };
        let mut rng = StdRng::seed_from_u64(2);
        let ens = train_ensemble(&ds, &cfg, &mut rng).unwrap();
        let dir = std::env::temp_dir().join("cogs_dynamics_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ensemble.json");
        ens.save(&path).unwrap();
        let back = Ensemble::load(&path).unwrap();
        let t = ds.transitions();
        let probe = &t[0];
        assert_eq!(
            ens.mean_delta(probe.state, probe.action),
            back.mean_delta(probe.state, probe.action)
        );
        assert_eq!(
            ens.mean_reward(probe.state, probe.action),
            back.mean_reward(probe.state, probe.action)
        );
        let path2 = dir.join("ensemble2.json");
        back.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    impl ChainMdp {
        fn clone_game(&self) -> Self {
            ChainMdp::new(self.advance_reward.clone(), self.stop_reward.clone())
        }
    }
}
